//! The verification suite behind `mbdp verify`.
//!
//! Each check builds its own fixed test model, runs it, and reports a
//! [`Check`]. Errors inside a check turn into a failing check rather than
//! aborting the suite. Detail strings carry no timings, so a report depends
//! only on the options it was run with.

use std::fmt::Write as _;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounds::{
    infimum_margin_null, infimum_margin_weak, integrate_homogeneous, lambda_norm_series, null_certificate,
    tail_probability_bound, verify_decay, weak_certificate, ReducedFamily,
};
use crate::config::{uniform_grid, Config};
use crate::error::Result;
use crate::kolmogorov::{assemble_generator, integrate, IntegrateOptions, ProbabilityVector, Trajectory};
use crate::mc_oracle::{simulate_paths, SimConfig};
use crate::model::{build_space, ModelSpec, Modulation, MultiIndex, RateBounds, RateRule, TruncatedSpace, TypeRates};
use crate::projection::{coordinate_bounds, effective_rates, marginal, projection_consistency_residual, Coordinate};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }

    /// Runs `f`, turning an error into a failing check.
    fn guard(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> Self {
        match f() {
            Ok((pass, detail)) => Check::new(name, pass, detail),
            Err(e) => Check::new(name, false, format!("error: {e}")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn pass(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn extend(&mut self, checks: impl IntoIterator<Item = Check>) {
        self.checks.extend(checks);
    }

    /// One `CHECK <name> PASS|FAIL <detail>` line per check.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(
                s,
                "CHECK {} {} {}",
                c.name,
                if c.pass { "PASS" } else { "FAIL" },
                c.detail
            );
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuiteOptions {
    pub seed: u64,
    pub paths: usize,
    pub slack: f64,
    pub tail_threshold: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            seed: 0,
            paths: crate::config::DEFAULT_PATHS,
            slack: crate::config::DEFAULT_SLACK,
            tail_threshold: crate::config::DEFAULT_TAIL_THRESHOLD,
        }
    }
}

/// A model, its truncation and a deterministic start.
#[derive(Clone, Debug)]
pub struct TestModel {
    pub model: ModelSpec,
    pub space: TruncatedSpace,
    pub initial: MultiIndex,
}

impl TestModel {
    fn new(types: Vec<TypeRates>, caps: &[usize], initial: Vec<usize>) -> Result<Self> {
        Ok(TestModel {
            model: ModelSpec::new(types, None, None)?,
            space: build_space(caps)?,
            initial: MultiIndex::new(initial)?,
        })
    }

    pub fn p0(&self) -> Result<ProbabilityVector> {
        ProbabilityVector::point_mass(&self.space, &self.initial, 0.0)
    }

    pub fn solve(&self, grid: &[f64]) -> Result<Trajectory> {
        integrate(
            &self.model,
            &self.space,
            &self.p0()?,
            grid,
            &IntegrateOptions::default(),
        )
    }
}

fn bounds(birth_lo: f64, birth_hi: f64, death_lo: f64, death_hi: f64) -> RateBounds {
    RateBounds {
        birth_lo,
        birth_hi,
        death_lo,
        death_hi,
    }
}

fn modulation(amplitude: f64, period: f64) -> Option<Modulation> {
    Some(Modulation {
        amplitude,
        period,
        phase: 0.0,
    })
}

/// A rule of a random kind with non-negative values. With `time_dependent`
/// false only kinds without a time argument are drawn.
pub fn random_rule<R: Rng>(rng: &mut R, dimension: usize, time_dependent: bool) -> RateRule {
    let n_kinds = if time_dependent { 5 } else { 3 };
    let coeffs = |rng: &mut R| (0..dimension).map(|_| rng.random_range(0.0..0.5)).collect::<Vec<_>>();
    let modulate = |rng: &mut R| {
        (time_dependent && rng.random_bool(0.5)).then(|| Modulation {
            amplitude: rng.random_range(0.0..1.0),
            period: rng.random_range(0.5..3.0),
            phase: 0.0,
        })
    };
    match rng.random_range(0..n_kinds) {
        0 => RateRule::constant(rng.random_range(0.0..3.0)),
        1 => RateRule::StateAffine {
            intercept: rng.random_range(0.0..2.0),
            coeffs: coeffs(rng),
            modulation: modulate(rng),
        },
        2 => RateRule::StateAffineCapped {
            intercept: rng.random_range(0.0..2.0),
            coeffs: coeffs(rng),
            cap: rng.random_range(0.5..3.0),
            modulation: modulate(rng),
        },
        3 => {
            let base = rng.random_range(0.5..3.0);
            RateRule::Periodic {
                base,
                amplitude: rng.random_range(0.0..base),
                period: rng.random_range(0.5..3.0),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            }
        }
        _ => {
            let n = rng.random_range(2..5);
            let mut t = 0.0;
            let times = (0..n)
                .map(|_| {
                    let out = t;
                    t += rng.random_range(0.2..1.5);
                    out
                })
                .collect::<Vec<_>>();
            let period = rng.random_bool(0.5).then(|| t);
            RateRule::Table {
                times,
                values: (0..n).map(|_| rng.random_range(0.0..3.0)).collect(),
                period,
            }
        }
    }
}

/// A random model with `d ≤ 3`, caps `≤ 6` and envelope bounds; caps are
/// redrawn until the space has at most `max_states` states.
pub fn random_model<R: Rng>(rng: &mut R, time_dependent: bool, max_states: usize) -> Result<TestModel> {
    let d = rng.random_range(1..=3);
    let caps = loop {
        let caps: Vec<usize> = (0..d).map(|_| rng.random_range(1..=6)).collect();
        if caps.iter().map(|c| c + 1).product::<usize>() <= max_states {
            break caps;
        }
    };
    let types = (0..d)
        .map(|j| {
            let birth = random_rule(rng, d, time_dependent);
            let death = random_rule(rng, d, time_dependent);
            TypeRates::with_envelope_bounds(birth, death, &caps, j)
        })
        .collect();
    let initial = caps.iter().map(|&c| rng.random_range(0..=c)).collect();
    TestModel::new(types, &caps, initial)
}

/// `d = 3`, caps `(6,6,6)`, smooth state- and time-dependent rates.
pub fn consistency_model() -> Result<TestModel> {
    let types = vec![
        TypeRates::new(
            RateRule::StateAffine {
                intercept: 0.5,
                coeffs: vec![0.0, 0.05, 0.05],
                modulation: modulation(0.3, 2.0),
            },
            RateRule::StateAffineCapped {
                intercept: 0.3,
                coeffs: vec![0.1, 0.0, 0.05],
                cap: 0.8,
                modulation: None,
            },
            bounds(0.35, 1.43, 0.3, 0.8),
        ),
        TypeRates::new(
            RateRule::Periodic {
                base: 0.6,
                amplitude: 0.2,
                period: 1.5,
                phase: 0.0,
            },
            RateRule::StateAffine {
                intercept: 0.3,
                coeffs: vec![0.05, 0.05, 0.0],
                modulation: None,
            },
            bounds(0.4, 0.8, 0.3, 0.96),
        ),
        TypeRates::new(
            RateRule::StateAffine {
                intercept: 0.4,
                coeffs: vec![0.05, 0.0, 0.0],
                modulation: modulation(0.5, 3.0),
            },
            RateRule::Periodic {
                base: 0.6,
                amplitude: 0.1,
                period: 2.5,
                phase: 1.0,
            },
            bounds(0.2, 1.05, 0.5, 0.7),
        ),
    ];
    TestModel::new(types, &[6, 6, 6], vec![1, 2, 0])
}

/// Type 1 has birth in `[4, 5]` and death in `[0.5, 1]`: `σ = 0.5`, `α* = 1`.
pub fn null_model() -> Result<TestModel> {
    let types = vec![
        TypeRates::new(
            RateRule::Periodic {
                base: 4.5,
                amplitude: 0.5,
                period: 1.0,
                phase: 0.0,
            },
            RateRule::StateAffineCapped {
                intercept: 0.5,
                coeffs: vec![0.0, 0.25],
                cap: 1.0,
                modulation: None,
            },
            bounds(4.0, 5.0, 0.5, 1.0),
        ),
        TypeRates::new(
            RateRule::constant(1.0),
            RateRule::constant(2.0),
            bounds(1.0, 1.0, 2.0, 2.0),
        ),
    ];
    TestModel::new(types, &[70, 12], vec![5, 0])
}

/// Type 1 has `λ = 1`, `μ = 4`: `β = 2`, `α_* = 1`. Type 2 is time-varying.
pub fn weak_model() -> Result<TestModel> {
    let types = vec![
        TypeRates::new(
            RateRule::constant(1.0),
            RateRule::constant(4.0),
            bounds(1.0, 1.0, 4.0, 4.0),
        ),
        TypeRates::new(
            RateRule::Periodic {
                base: 1.0,
                amplitude: 0.5,
                period: 2.0,
                phase: 0.0,
            },
            RateRule::StateAffine {
                intercept: 0.5,
                coeffs: vec![0.1, 0.1],
                modulation: None,
            },
            bounds(0.5, 1.5, 0.6, 2.9),
        ),
    ];
    TestModel::new(types, &[20, 4], vec![3, 1])
}

pub fn homogeneous_mc_model() -> Result<TestModel> {
    let types = vec![
        TypeRates::new(
            RateRule::constant(1.0),
            RateRule::StateAffine {
                intercept: 0.3,
                coeffs: vec![0.2, 0.1],
                modulation: None,
            },
            bounds(1.0, 1.0, 0.5, 1.4),
        ),
        TypeRates::new(
            RateRule::constant(0.8),
            RateRule::constant(1.0),
            bounds(0.8, 0.8, 1.0, 1.0),
        ),
    ];
    TestModel::new(types, &[4, 3], vec![1, 0])
}

pub fn periodic_mc_model() -> Result<TestModel> {
    let types = vec![
        TypeRates::new(
            RateRule::Periodic {
                base: 1.2,
                amplitude: 0.6,
                period: 1.0,
                phase: 0.0,
            },
            RateRule::constant(0.9),
            bounds(0.6, 1.8, 0.9, 0.9),
        ),
        TypeRates::new(
            RateRule::StateAffine {
                intercept: 0.4,
                coeffs: vec![0.1, 0.0],
                modulation: modulation(0.8, 1.5),
            },
            RateRule::constant(1.1),
            bounds(0.08, 1.44, 1.1, 1.1),
        ),
    ];
    TestModel::new(types, &[4, 3], vec![1, 0])
}

fn coordinates(d: usize) -> impl Iterator<Item = Coordinate> {
    (0..d).map(Coordinate::Type).chain(std::iter::once(Coordinate::Total))
}

/// Column sums, logarithmic norm and the `2d(L+M)` norm bound on 100 random
/// models at several times each.
pub fn generator_conservation(seed: u64) -> Check {
    Check::guard("generator_conservation", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut worst_sum, mut worst_lognorm, mut worst_ratio) = (0.0f64, 0.0f64, 0.0f64);
        let mut assembled = 0;
        for _ in 0..100 {
            let tm = random_model(&mut rng, true, usize::MAX)?;
            for _ in 0..5 {
                let t = rng.random_range(0.0..10.0);
                let a = assemble_generator(&tm.model, &tm.space, t)?;
                worst_sum = a.column_sums().iter().fold(worst_sum, |w, s| w.max(s.abs()));
                worst_lognorm = worst_lognorm.max(a.log_norm().abs());
                let bound = tm.model.norm_bound();
                if bound > 0.0 {
                    worst_ratio = worst_ratio.max(a.norm_l1() / bound);
                } else if a.norm_l1() > 0.0 {
                    worst_ratio = f64::INFINITY;
                }
                assembled += 1;
            }
        }
        let pass = worst_sum <= 1e-12 && worst_lognorm <= 1e-12 && worst_ratio <= 1.0;
        Ok((
            pass,
            format!(
                "matrices={assembled} max_col_sum={worst_sum:.3e} max_abs_log_norm={worst_lognorm:.3e} max_norm_ratio={worst_ratio:.6}"
            ),
        ))
    })
}

/// Two-state chain against `p_0(t) = (1 + e^{-2t})/2`.
pub fn ode_two_state() -> Check {
    Check::guard("ode_two_state", || {
        let tm = TestModel::new(
            vec![TypeRates::new(
                RateRule::constant(1.0),
                RateRule::constant(1.0),
                bounds(1.0, 1.0, 1.0, 1.0),
            )],
            &[1],
            vec![0],
        )?;
        let traj = tm.solve(&uniform_grid(5.0, 0.25))?;
        let err = traj
            .snapshots
            .iter()
            .map(|p| (p.values()[0] - 0.5 * (1.0 + (-2.0 * p.time()).exp())).abs())
            .fold(0.0, f64::max);
        Ok((err <= 1e-6, format!("max_abs_err={err:.3e} tol=1e-6")))
    })
}

/// Frozen-rate random models of at most 64 states against `e^{At} p_0`.
pub fn ode_expm_oracle(seed: u64) -> Check {
    Check::guard("ode_expm_oracle", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ede4);
        let times = [0.5, 1.0, 2.0];
        let grid = [0.0, 0.5, 1.0, 2.0];
        let mut worst = 0.0f64;
        let n_models = 20;
        for _ in 0..n_models {
            let tm = random_model(&mut rng, false, 64)?;
            let traj = tm.solve(&grid)?;
            let a = assemble_generator(&tm.model, &tm.space, 0.0)?.to_dense();
            let p0 = DVector::from_column_slice(tm.p0()?.values());
            for (i, &t) in times.iter().enumerate() {
                let exact = (&a * t).exp() * &p0;
                let err: f64 = traj.snapshots[i + 1]
                    .values()
                    .iter()
                    .zip(exact.iter())
                    .map(|(x, y)| (x - y).abs())
                    .sum();
                worst = worst.max(err);
            }
        }
        Ok((
            worst <= 1e-6,
            format!("models={n_models} max_l1_err={worst:.3e} tol=1e-6"),
        ))
    })
}

/// Finite-difference residual of the projected system for every coordinate.
pub fn projection_consistency(tm: &TestModel, traj: &Trajectory) -> Check {
    Check::guard("projection_consistency", || {
        let mut parts = Vec::new();
        let mut pass = true;
        for c in coordinates(tm.space.dimension()) {
            let r = projection_consistency_residual(traj, &tm.model, &tm.space, c)?;
            let (t, worst) = r
                .iter()
                .copied()
                .fold((0.0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            pass &= worst <= 1e-4;
            parts.push(format!("{c}={worst:.3e}@t={t:.2}"));
        }
        Ok((pass, format!("max_residual {} tol=1e-4", parts.join(" "))))
    })
}

/// Every defined effective rate of every type coordinate lies within that
/// type's declared bounds at every snapshot.
pub fn rate_bounds(name: &str, runs: &[(&str, &TestModel, &Trajectory)]) -> Check {
    Check::guard(name, || {
        let mut violations = 0usize;
        let mut evaluated = 0usize;
        let mut first = None;
        for (label, tm, traj) in runs {
            for j in 0..tm.model.dimension() {
                let c = Coordinate::Type(j);
                let b = coordinate_bounds(&tm.model, c)?;
                for p in &traj.snapshots {
                    let r = effective_rates(p, &tm.model, &tm.space, c, p.time())?;
                    let v = r.bound_violations(&b);
                    evaluated += r.defined.iter().filter(|&&d| d).count();
                    if let (None, Some(&k)) = (&first, v.first()) {
                        first = Some(format!(" first={label}:{c}:k={k}@t={:.2}", p.time()));
                    }
                    violations += v.len();
                }
            }
        }
        Ok((
            violations == 0,
            format!(
                "runs={} levels={evaluated} violations={violations}{}",
                runs.len(),
                first.unwrap_or_default()
            ),
        ))
    })
}

/// Λ-weighted decay, the tail bound and the margin on [`null_model`], inside
/// the window where the tail mass stays below `opts.tail_threshold`.
pub fn null_ergodic(tm: &TestModel, traj: &Trajectory, opts: &SuiteOptions) -> Vec<Check> {
    let c = Coordinate::Type(0);
    let cert = match null_certificate(&tm.model.types()[0].bounds, c) {
        Ok(cert) => cert,
        Err(e) => return vec![Check::new("null_ergodic_certificate", false, format!("error: {e}"))],
    };
    let end = traj.window_end(opts.tail_threshold);
    let window = &traj.snapshots[..end];
    let window_t = traj.grid[end.saturating_sub(1)];

    let decay = Check::guard("null_ergodic_decay", || {
        let series = lambda_norm_series(traj, &tm.space, &cert)?;
        let report = verify_decay(&series[..end], cert.alpha_star, opts.slack)?;
        Ok((
            report.pass,
            format!(
                "sigma={} alpha_star={} window_end_t={window_t:.2} points={end} worst_ratio={:.9} slack={:e}",
                cert.sigma, cert.alpha_star, report.worst_ratio, opts.slack
            ),
        ))
    });

    let tail = Check::guard("null_ergodic_tail", || {
        let k = tm.initial.coords()[0];
        let (mut worst, mut pairs) = (f64::NEG_INFINITY, 0usize);
        for p in window {
            let x = marginal(p, &tm.space, c)?;
            let mut cdf = 0.0;
            for n in 0..=k.min(x.values.len() - 1) {
                cdf += x.values[n];
                let bound = tail_probability_bound(&cert, k, n, p.time())?;
                // Pairs where the bound is capped at 1 hold trivially.
                if bound < 1.0 {
                    worst = worst.max(cdf - bound);
                    pairs += 1;
                }
            }
        }
        Ok((
            worst <= 1e-8,
            format!("start={k} pairs={pairs} max_excess={worst:.3e} tol=1e-8 window_end_t={window_t:.2}"),
        ))
    });

    let margin = Check::guard("null_ergodic_margin", || {
        let mut worst = f64::INFINITY;
        for p in &traj.snapshots {
            let r = effective_rates(p, &tm.model, &tm.space, c, p.time())?;
            worst = worst.min(infimum_margin_null(&r, &cert));
        }
        Ok((
            worst >= cert.alpha_star - 1e-12,
            format!("min_margin={worst:.12} alpha_star={}", cert.alpha_star),
        ))
    });

    vec![decay, tail, margin]
}

/// Margin and D-weighted decay of the trajectory-driven reduced system on
/// [`weak_model`], from five random starting vectors.
pub fn weak_ergodic(tm: &TestModel, traj: &Trajectory, opts: &SuiteOptions) -> Vec<Check> {
    let c = Coordinate::Type(0);
    let cert = match weak_certificate(&tm.model.types()[0].bounds, c) {
        Ok(cert) => cert,
        Err(e) => return vec![Check::new("weak_ergodic_certificate", false, format!("error: {e}"))],
    };

    let margin = Check::guard("weak_ergodic_margin", || {
        let mut worst = f64::INFINITY;
        for p in &traj.snapshots {
            let r = effective_rates(p, &tm.model, &tm.space, c, p.time())?;
            worst = worst.min(infimum_margin_weak(&r, &cert));
        }
        Ok((
            worst >= cert.alpha_lower - 1e-12,
            format!("min_margin={worst:.12} alpha_lower={}", cert.alpha_lower),
        ))
    });

    let decay = Check::guard("weak_ergodic_decay", || {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x3ea4);
        let p0 = tm.p0()?;
        let levels = c.max_level(&tm.space);
        let mut pass = true;
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..5 {
            let w0: Vec<f64> = (0..levels).map(|_| rng.random_range(-1.0..1.0)).collect();
            let family = ReducedFamily::Driven {
                model: &tm.model,
                space: &tm.space,
                p0: &p0,
                coordinate: c,
            };
            let series = integrate_homogeneous(family, &cert, &w0, &traj.grid)?;
            let report = verify_decay(&series, cert.alpha_lower, opts.slack)?;
            pass &= report.pass;
            worst = worst.max(report.worst_ratio);
        }
        Ok((
            pass,
            format!(
                "beta={} alpha_lower={} starts=5 worst_ratio={worst:.9} slack={:e}",
                cert.beta, cert.alpha_lower, opts.slack
            ),
        ))
    });

    vec![margin, decay]
}

pub const ORACLE_TIMES: [f64; 3] = [0.5, 1.0, 2.0];

/// Total-variation distance between simulated and integrated marginals at
/// [`ORACLE_TIMES`], against three standard errors.
pub fn oracle_agreement(name: &str, tm: &TestModel, opts: &SuiteOptions) -> Check {
    Check::guard(name, || {
        let grid: Vec<f64> = std::iter::once(0.0).chain(ORACLE_TIMES).collect();
        let traj = tm.solve(&grid)?;
        let cfg = SimConfig {
            initial: tm.initial.clone(),
            horizon: *ORACLE_TIMES.last().unwrap(),
            n_paths: opts.paths,
            seed: opts.seed,
            sample_times: ORACLE_TIMES.to_vec(),
        };
        let sim = simulate_paths(&tm.model, &tm.space, &cfg)?;
        let mut pass = true;
        let mut worst_ratio = 0.0f64;
        let mut worst_at = String::new();
        for (i, &t) in ORACLE_TIMES.iter().enumerate() {
            for c in coordinates(tm.space.dimension()) {
                let x = marginal(&traj.snapshots[i + 1], &tm.space, c)?;
                let emp = sim.get(t, c).expect("sampled coordinate");
                let tv = 0.5
                    * x.values
                        .iter()
                        .zip(&emp.estimate)
                        .map(|(a, b)| (a - b).abs())
                        .sum::<f64>();
                let tol = 3.0 * emp.max_stderr();
                pass &= tv <= tol;
                let ratio = tv / tol;
                if ratio > worst_ratio {
                    worst_ratio = ratio;
                    worst_at = format!("{c}@t={t}");
                }
            }
        }
        Ok((
            pass,
            format!(
                "paths={} seed={} worst_tv_over_3se={worst_ratio:.4} at {worst_at}",
                opts.paths, opts.seed
            ),
        ))
    })
}

/// Two seeded simulation runs agree exactly.
pub fn mc_determinism(opts: &SuiteOptions) -> Check {
    Check::guard("mc_determinism", || {
        let tm = periodic_mc_model()?;
        let cfg = SimConfig {
            initial: tm.initial.clone(),
            horizon: 2.0,
            n_paths: 2000,
            seed: opts.seed,
            sample_times: ORACLE_TIMES.to_vec(),
        };
        let a = simulate_paths(&tm.model, &tm.space, &cfg)?;
        let b = simulate_paths(&tm.model, &tm.space, &cfg)?;
        Ok((a == b, format!("paths={} seed={}", cfg.n_paths, cfg.seed)))
    })
}

/// Solves a fixture, mapping a failure into a check so the suite continues.
fn solve_or_fail(
    name: &str,
    tm: Result<TestModel>,
    grid: &[f64],
) -> std::result::Result<(TestModel, Trajectory), Check> {
    let run = tm.and_then(|tm| tm.solve(grid).map(|traj| (tm, traj)));
    run.map_err(|e| Check::new(name, false, format!("error: {e}")))
}

/// Every built-in check.
pub fn run_all(opts: &SuiteOptions) -> Report {
    let mut report = Report::default();
    report.extend([
        generator_conservation(opts.seed),
        ode_two_state(),
        ode_expm_oracle(opts.seed),
    ]);

    let consistency = solve_or_fail("projection_consistency", consistency_model(), &uniform_grid(5.0, 0.01));
    let null = solve_or_fail("null_ergodic", null_model(), &uniform_grid(10.0, 0.01));
    let weak = solve_or_fail("weak_ergodic", weak_model(), &uniform_grid(5.0, 0.01));

    let mut runs = Vec::new();
    match &consistency {
        Ok((tm, traj)) => {
            report.checks.push(projection_consistency(tm, traj));
            runs.push(("consistency", tm, traj));
        }
        Err(c) => report.checks.push(c.clone()),
    }
    match &null {
        Ok((tm, traj)) => {
            report.extend(null_ergodic(tm, traj, opts));
            runs.push(("null", tm, traj));
        }
        Err(c) => report.checks.push(c.clone()),
    }
    match &weak {
        Ok((tm, traj)) => {
            report.extend(weak_ergodic(tm, traj, opts));
            runs.push(("weak", tm, traj));
        }
        Err(c) => report.checks.push(c.clone()),
    }
    report.checks.push(rate_bounds("rate_bounds", &runs));

    for (name, tm) in [
        ("oracle_agreement_homogeneous", homogeneous_mc_model()),
        ("oracle_agreement_periodic", periodic_mc_model()),
    ] {
        report.checks.push(match tm {
            Ok(tm) => oracle_agreement(name, &tm, opts),
            Err(e) => Check::new(name, false, format!("error: {e}")),
        });
    }
    report.checks.push(mc_determinism(opts));
    report
}

/// Checks on a user model: rate bounds along its trajectory, plus decay for
/// every type whose bounds admit a certificate. Decay series are returned
/// for export, keyed by a file-friendly label.
pub fn config_checks(cfg: &Config, traj: &Trajectory) -> (Vec<Check>, Vec<(String, crate::bounds::DecayReport)>) {
    let tm = TestModel {
        model: cfg.model.clone(),
        space: cfg.space.clone(),
        initial: cfg.initial.clone(),
    };
    let s = &cfg.settings;
    let mut checks = vec![rate_bounds("config_rate_bounds", &[("config", &tm, traj)])];
    let mut series = Vec::new();
    let end = traj.window_end(s.tail_threshold);

    for j in 0..tm.model.dimension() {
        let c = Coordinate::Type(j);
        let b = tm.model.types()[j].bounds;
        if let Ok(cert) = null_certificate(&b, c) {
            let name = format!("config_null_decay_{c}");
            checks.push(Check::guard(&name, || {
                let report = verify_decay(
                    &lambda_norm_series(traj, &tm.space, &cert)?[..end],
                    cert.alpha_star,
                    s.slack,
                )?;
                let out = (
                    report.pass,
                    format!(
                        "alpha_star={} window_end_t={:.2} worst_ratio={:.9}",
                        cert.alpha_star,
                        traj.grid[end - 1],
                        report.worst_ratio
                    ),
                );
                series.push((format!("null_{c}"), report));
                Ok(out)
            }));
        }
        if let Ok(cert) = weak_certificate(&b, c) {
            let name = format!("config_weak_decay_{c}");
            checks.push(Check::guard(&name, || {
                let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ j as u64);
                let w0: Vec<f64> = (0..c.max_level(&tm.space))
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect();
                let p0 = tm.p0()?;
                let family = ReducedFamily::Driven {
                    model: &tm.model,
                    space: &tm.space,
                    p0: &p0,
                    coordinate: c,
                };
                let report = verify_decay(
                    &integrate_homogeneous(family, &cert, &w0, &traj.grid)?,
                    cert.alpha_lower,
                    s.slack,
                )?;
                let out = (
                    report.pass,
                    format!("alpha_lower={} worst_ratio={:.9}", cert.alpha_lower, report.worst_ratio),
                );
                series.push((format!("weak_{c}"), report));
                Ok(out)
            }));
        }
    }
    (checks, series)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_rendering() {
        let mut r = Report::default();
        assert!(!r.pass());
        r.checks.push(Check::new("a", true, "x=1"));
        assert!(r.pass());
        r.checks.push(Check::new("b", false, "x=2"));
        assert!(!r.pass());
        assert_eq!(r.render(), "CHECK a PASS x=1\nCHECK b FAIL x=2\n");
    }

    #[test]
    fn guard_turns_errors_into_failures() {
        let c = Check::guard("g", || Err(crate::Error::InvalidInput("boom".into())));
        assert!(!c.pass);
        assert!(c.detail.contains("boom"));
    }

    #[test]
    fn fixtures_are_valid() {
        for tm in [
            consistency_model(),
            null_model(),
            weak_model(),
            homogeneous_mc_model(),
            periodic_mc_model(),
        ] {
            let tm = tm.unwrap();
            tm.model
                .check_admissible(&tm.space, &[0.0, 0.3, 0.77, 1.2, 2.9])
                .unwrap();
        }
    }

    #[test]
    fn random_models_respect_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let tm = random_model(&mut rng, false, 64).unwrap();
            assert!(tm.space.size() <= 64);
            assert!(tm.model.is_time_independent());
            tm.model.check_admissible(&tm.space, &[0.0, 1.0]).unwrap();
        }
    }
}
