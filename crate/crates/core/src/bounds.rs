//! Convergence-rate certificates for one-dimensional projections.
//!
//! For a differential equation `dy/dt = H y` in l1 the norm obeys
//! `d‖y‖/dt ≤ β*‖y‖` with `β* = sup_i (h_ii + Σ_{j≠i} |h_ji|)`, the l1
//! logarithmic norm of `H`. Applied to a projection with rates bounded by
//! `l_j ≤ λ̃_k ≤ L_j`, `death_lo ≤ μ̃_k ≤ M_j` this gives two certificates:
//!
//! * null-ergodic, when `M_j < l_j`: with `σ = √(M_j/l_j)` and weights `σⁿ`,
//!   the weighted marginal norm decays at rate `α* = (√l_j − √M_j)²`;
//! * weakly ergodic, when `L_j < death_lo` and
//!   `α_* = l_j + death_lo − 2√(L_j M_j) > 0`: with `β = √(M_j/L_j)` the
//!   suffix-sum weighting `D` makes the reduced homogeneous solution decay at
//!   rate `α_*`.
//!
//! Certificates are built from the declared bounds in closed form. The
//! infimum scans over the truncated range of computed rates are consistency
//! checks on top of them.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kolmogorov::{
    self, check_grid, max_step, renormalize, substeps, IntegrateOptions, ProbabilityVector, Rk4, STEP_FRACTION,
};
use crate::model::{ModelSpec, RateBounds, TruncatedSpace};
use crate::projection::{assemble_projected, effective_rates_raw, reduce, Coordinate, EffectiveRates, ReducedSystem};

pub const DEFAULT_SLACK: f64 = 1e-6;

/// l1 logarithmic norm `max_i (h_ii + Σ_{j≠i} |h_ji|)` of a square matrix.
pub fn log_norm(h: &DMatrix<f64>) -> Result<f64> {
    if !h.is_square() {
        return Err(Error::InvalidInput(format!(
            "log norm of a {}x{} matrix",
            h.nrows(),
            h.ncols()
        )));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("log norm of a non-finite matrix".into()));
    }
    Ok((0..h.ncols())
        .map(|i| {
            let col = h.column(i);
            col[i]
                + col
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, v)| v.abs())
                    .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NullErgodicCertificate {
    pub coordinate: Coordinate,
    /// `σ = √(M_j / l_j)`.
    pub sigma: f64,
    /// `α* = (√l_j − √M_j)²`.
    pub alpha_star: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakErgodicCertificate {
    pub coordinate: Coordinate,
    /// `β = √(M_j / L_j)`.
    pub beta: f64,
    /// `α_* = l_j + death_lo − 2√(L_j M_j)`.
    pub alpha_lower: f64,
}

pub fn null_certificate(b: &RateBounds, coordinate: Coordinate) -> Result<NullErgodicCertificate> {
    b.validate()?;
    if b.death_hi >= b.birth_lo {
        return Err(Error::NotApplicable(format!(
            "null-ergodic: M_j ≥ l_j (M_j = {}, l_j = {})",
            b.death_hi, b.birth_lo
        )));
    }
    if b.death_hi == 0.0 {
        return Err(Error::NotApplicable(
            "null-ergodic: M_j = 0 makes the weights σⁿ degenerate".into(),
        ));
    }
    let sigma = (b.death_hi / b.birth_lo).sqrt();
    let alpha_star = (b.birth_lo.sqrt() - b.death_hi.sqrt()).powi(2);
    Ok(NullErgodicCertificate {
        coordinate,
        sigma,
        alpha_star,
    })
}

pub fn weak_certificate(b: &RateBounds, coordinate: Coordinate) -> Result<WeakErgodicCertificate> {
    b.validate()?;
    if b.birth_hi >= b.death_lo {
        return Err(Error::NotApplicable(format!(
            "weakly ergodic: L_j ≥ m_j (L_j = {}, death_lo = {})",
            b.birth_hi, b.death_lo
        )));
    }
    let alpha_lower = b.birth_lo + b.death_lo - 2.0 * (b.birth_hi * b.death_hi).sqrt();
    if !(alpha_lower > 0.0) {
        return Err(Error::NotApplicable(format!("weakly ergodic: α_* = {alpha_lower} ≤ 0")));
    }
    if b.birth_hi == 0.0 {
        return Err(Error::NotApplicable(
            "weakly ergodic: L_j = 0 leaves β undefined".into(),
        ));
    }
    let beta = (b.death_hi / b.birth_hi).sqrt();
    Ok(WeakErgodicCertificate {
        coordinate,
        beta,
        alpha_lower,
    })
}

/// `x̃_n = σⁿ x_n`.
pub fn lambda_transform(x: &[f64], cert: &NullErgodicCertificate) -> Vec<f64> {
    let mut weight = 1.0;
    x.iter()
        .map(|v| {
            let out = weight * v;
            weight *= cert.sigma;
            out
        })
        .collect()
}

/// `(D w)_i = d_i Σ_{j≥i} w_j` with `d_i = β^{i-1}`, `i = 1..=K`.
pub fn d_transform(w: &[f64], cert: &WeakErgodicCertificate) -> Vec<f64> {
    let mut out = vec![0.0; w.len()];
    let mut suffix = 0.0;
    for i in (0..w.len()).rev() {
        suffix += w[i];
        out[i] = suffix;
    }
    let mut d = 1.0;
    for v in out.iter_mut() {
        *v *= d;
        d *= cert.beta;
    }
    out
}

/// `min(1, σ^{k-n} e^{-α* t})`, a bound on `Pr(X_j(t) ≤ n | X_j(0) = k)`.
pub fn tail_probability_bound(cert: &NullErgodicCertificate, k: usize, n: usize, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!("time {t} must be non-negative")));
    }
    if k < n {
        return Ok(1.0);
    }
    let exp = i32::try_from(k - n).unwrap_or(i32::MAX);
    Ok((cert.sigma.powi(exp) * (-cert.alpha_star * t).exp()).min(1.0))
}

/// `inf_k (λ̃_k + μ̃_k − σλ̃_k − μ̃_k/σ)` over defined levels.
pub fn infimum_margin_null(rates: &EffectiveRates, cert: &NullErgodicCertificate) -> f64 {
    let s = cert.sigma;
    (0..rates.birth.len())
        .filter(|&k| rates.defined[k])
        .map(|k| rates.birth[k] * (1.0 - s) - rates.death[k] * (1.0 / s - 1.0))
        .fold(f64::INFINITY, f64::min)
}

/// `inf_i (λ̃_i + μ̃_{i+1} − βλ̃_{i+1} − μ̃_i/β)` for `i = 0..K-1`.
pub fn infimum_margin_weak(rates: &EffectiveRates, cert: &WeakErgodicCertificate) -> f64 {
    let b = cert.beta;
    let (lam, mu) = (&rates.birth, &rates.death);
    (0..lam.len().saturating_sub(1))
        .map(|i| lam[i] + mu[i + 1] - b * lam[i + 1] - mu[i] / b)
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayRow {
    pub t: f64,
    pub norm: f64,
    pub bound: f64,
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayReport {
    pub rate: f64,
    pub slack: f64,
    pub pass: bool,
    /// Largest `v_i / (e^{-α t_i} v_0)` after the first point (1 when the
    /// series has a single point).
    pub worst_ratio: f64,
    pub worst_time: f64,
    pub rows: Vec<DecayRow>,
}

/// Checks `v_i ≤ e^{-α t_i} v_0 (1 + slack)` along a norm series.
pub fn verify_decay(series: &[(f64, f64)], rate: f64, slack: f64) -> Result<DecayReport> {
    let (t0, v0) = *series
        .first()
        .ok_or_else(|| Error::InvalidInput("empty norm series".into()))?;
    if !(v0 > 0.0) {
        return Err(Error::InvalidInput(format!("initial norm {v0} must be positive")));
    }
    if series.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidInput("norm series times must increase".into()));
    }
    let mut rows = Vec::with_capacity(series.len());
    let (mut worst_ratio, mut worst_time) = (if series.len() == 1 { 1.0 } else { f64::NEG_INFINITY }, t0);
    for &(t, v) in series {
        let bound = (-rate * (t - t0)).exp() * v0;
        let ratio = v / bound;
        let pass = v <= bound * (1.0 + slack);
        if t > t0 && ratio > worst_ratio {
            worst_ratio = ratio;
            worst_time = t;
        }
        rows.push(DecayRow {
            t,
            norm: v,
            bound,
            ratio,
            pass,
        });
    }
    Ok(DecayReport {
        rate,
        slack,
        pass: rows.iter().all(|r| r.pass),
        worst_ratio,
        worst_time,
        rows,
    })
}

/// `‖x̃(t)‖` of the σⁿ-weighted marginal along a trajectory.
pub fn lambda_norm_series(
    traj: &kolmogorov::Trajectory,
    space: &TruncatedSpace,
    cert: &NullErgodicCertificate,
) -> Result<Vec<(f64, f64)>> {
    traj.snapshots
        .iter()
        .map(|p| {
            let x = crate::projection::marginal(p, space, cert.coordinate)?;
            Ok((p.time(), kolmogorov::l1_norm(&lambda_transform(&x.values, cert))?))
        })
        .collect()
}

/// Source of `B̃(t)` for [`integrate_homogeneous`].
#[derive(Clone, Copy, Debug)]
pub enum ReducedFamily<'a> {
    /// A fixed reduced matrix.
    Frozen(&'a ReducedSystem),
    /// `B̃(t)` from the effective rates of the full system started at `p0`,
    /// integrated alongside `w`.
    Driven {
        model: &'a ModelSpec,
        space: &'a TruncatedSpace,
        p0: &'a ProbabilityVector,
        coordinate: Coordinate,
    },
}

/// Integrates `dw/dt = B̃(t) w` from `w0` with the fourth-order stepper and
/// returns `(t, ‖D w(t)‖)` on `grid` (which starts at the family's start time).
pub fn integrate_homogeneous(
    family: ReducedFamily<'_>,
    cert: &WeakErgodicCertificate,
    w0: &[f64],
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let norm = |w: &[f64]| kolmogorov::l1_norm(&d_transform(w, cert));
    match family {
        ReducedFamily::Frozen(sys) => {
            if w0.len() != sys.size() {
                return Err(Error::InvalidInput(format!(
                    "w0 has {} entries, reduced system has {}",
                    w0.len(),
                    sys.size()
                )));
            }
            check_grid(grid, grid.first().copied().unwrap_or(0.0))?;
            let op_norm = (0..sys.size())
                .map(|j| sys.matrix.column(j).iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max);
            let h_max = (op_norm > 0.0).then(|| STEP_FRACTION / op_norm);
            let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
                sys.apply(y, dy);
                Ok(())
            };
            let mut w = w0.to_vec();
            let mut rk = Rk4::new(w.len());
            let mut out = vec![(grid[0], norm(&w)?)];
            for win in grid.windows(2) {
                let n = substeps(win[1] - win[0], h_max);
                let h = (win[1] - win[0]) / n as f64;
                for s in 0..n {
                    rk.step(&mut rhs, win[0] + s as f64 * h, &mut w, h)?;
                }
                out.push((win[1], norm(&w)?));
            }
            Ok(out)
        }
        ReducedFamily::Driven {
            model,
            space,
            p0,
            coordinate,
        } => {
            let levels = coordinate.max_level(space);
            if w0.len() != levels {
                return Err(Error::InvalidInput(format!(
                    "w0 has {} entries, expected {levels}",
                    w0.len()
                )));
            }
            if p0.len() != space.size() {
                return Err(Error::InvalidInput("initial vector does not match the space".into()));
            }
            check_grid(grid, p0.time())?;
            let h_max = max_step(model, &IntegrateOptions::default())?;
            let n_p = space.size();
            let mut a = kolmogorov::assemble_generator(model, space, p0.time())?;
            let mut rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
                let (p, w) = y.split_at(n_p);
                let (dp, dw) = dy.split_at_mut(n_p);
                a.reassemble(model, space, t)?;
                a.apply(p, dp);
                let rates = effective_rates_raw(p, model, space, coordinate, t)?;
                reduce(&assemble_projected(&rates)).apply(w, dw);
                Ok(())
            };
            let mut y: Vec<f64> = p0.values().iter().chain(w0).copied().collect();
            let mut rk = Rk4::new(y.len());
            let mut out = vec![(grid[0], norm(w0)?)];
            for win in grid.windows(2) {
                let n = substeps(win[1] - win[0], h_max);
                let h = (win[1] - win[0]) / n as f64;
                for s in 0..n {
                    rk.step(&mut rhs, win[0] + s as f64 * h, &mut y, h)?;
                    renormalize(&mut y[..n_p], win[0] + (s + 1) as f64 * h)?;
                }
                out.push((win[1], norm(&y[n_p..])?));
            }
            Ok(out)
        }
    }
}
