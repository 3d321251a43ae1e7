//! Browser bindings for three small demos. Each exported function returns a
//! JSON string; failures come back as `{"error": "..."}`.
//!
//! The `*_data` functions hold the logic and are plain Rust, so they are
//! tested natively.

use mbdp::bounds::{integrate_homogeneous, lambda_norm_series, null_certificate, weak_certificate, ReducedFamily};
use mbdp::config::uniform_grid;
use mbdp::kolmogorov::{integrate, IntegrateOptions, ProbabilityVector};
use mbdp::model::{build_space, ModelSpec, MultiIndex, RateBounds, RateRule, TypeRates};
use mbdp::projection::{assemble_projected, marginal, reduce, Coordinate, EffectiveRates};
use serde::Serialize;
use wasm_bindgen::prelude::wasm_bindgen;

/// Grid points per curve; keeps payloads small.
const CURVE_POINTS: usize = 200;

#[derive(Debug, Serialize)]
pub struct DecayCurve {
    pub rate: f64,
    /// σ for the null-ergodic demo, β for the weak one.
    pub weight: f64,
    pub t: Vec<f64>,
    pub norm: Vec<f64>,
    pub bound: Vec<f64>,
    /// Last time at which the truncation still held the mass (tail below 1e-3).
    pub window_end: f64,
}

#[derive(Debug, Serialize)]
pub struct MarginalFrames {
    pub t: Vec<f64>,
    /// `frames[i][c]` is the marginal of coordinate `c` (type 1, type 2,
    /// total) at `t[i]`.
    pub frames: Vec<[Vec<f64>; 3]>,
    pub tail_mass: Vec<f64>,
}

fn to_json<T: Serialize>(r: mbdp::Result<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e.to_string()),
    }
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

fn bounds(birth_lo: f64, birth_hi: f64, death_lo: f64, death_hi: f64) -> mbdp::Result<RateBounds> {
    RateBounds::new(birth_lo, birth_hi, death_lo, death_hi)
}

/// One type with birth `l + (L-l)(1 + sin 2πt)/2` and constant death `M`,
/// started at level 5; the σⁿ-weighted marginal norm against `e^{-α* t}`.
pub fn null_decay_data(birth_lo: f64, birth_hi: f64, death: f64, horizon: f64) -> mbdp::Result<DecayCurve> {
    let b = bounds(birth_lo, birth_hi, death, death)?;
    let cert = null_certificate(&b, Coordinate::Type(0))?;
    let half = 0.5 * (birth_hi - birth_lo);
    let model = ModelSpec::new(
        vec![TypeRates::new(
            RateRule::Periodic {
                base: birth_lo + half,
                amplitude: half,
                period: 1.0,
                phase: 0.0,
            },
            RateRule::constant(death),
            b,
        )],
        None,
        None,
    )?;
    let cap = ((birth_hi * horizon) * 1.5 + 40.0).ceil() as usize;
    let space = build_space(&[cap])?;
    let p0 = ProbabilityVector::point_mass(&space, &MultiIndex::new(vec![5])?, 0.0)?;
    let grid = uniform_grid(horizon, horizon / CURVE_POINTS as f64);
    let traj = integrate(&model, &space, &p0, &grid, &IntegrateOptions::default())?;
    let series = lambda_norm_series(&traj, &space, &cert)?;
    let end = traj.window_end(1e-3);
    let v0 = series[0].1;
    Ok(DecayCurve {
        rate: cert.alpha_star,
        weight: cert.sigma,
        t: series.iter().map(|s| s.0).collect(),
        norm: series.iter().map(|s| s.1).collect(),
        bound: series.iter().map(|s| v0 * (-cert.alpha_star * s.0).exp()).collect(),
        window_end: traj.grid[end.saturating_sub(1)],
    })
}

/// Constant rates `λ`, `μ` on `levels` levels: the D-weighted norm of the
/// reduced homogeneous solution from an alternating start.
pub fn weak_decay_data(lambda: f64, mu: f64, levels: usize, horizon: f64) -> mbdp::Result<DecayCurve> {
    if levels < 2 {
        return Err(mbdp::Error::InvalidInput("need at least 2 levels".into()));
    }
    let cert = weak_certificate(&bounds(lambda, lambda, mu, mu)?, Coordinate::Type(0))?;
    let mut death = vec![mu; levels + 1];
    death[0] = 0.0;
    let rates = EffectiveRates {
        coordinate: Coordinate::Type(0),
        birth: vec![lambda; levels + 1],
        death,
        defined: vec![true; levels + 1],
        time: 0.0,
    };
    let red = reduce(&assemble_projected(&rates));
    let w0: Vec<f64> = (0..levels).map(|i| if i % 2 == 0 { 1.0 } else { -0.5 }).collect();
    let grid = uniform_grid(horizon, horizon / CURVE_POINTS as f64);
    let series = integrate_homogeneous(ReducedFamily::Frozen(&red), &cert, &w0, &grid)?;
    let v0 = series[0].1;
    Ok(DecayCurve {
        rate: cert.alpha_lower,
        weight: cert.beta,
        t: series.iter().map(|s| s.0).collect(),
        norm: series.iter().map(|s| s.1).collect(),
        bound: series.iter().map(|s| v0 * (-cert.alpha_lower * s.0).exp()).collect(),
        window_end: horizon,
    })
}

/// Two types with constant rates and a periodic boost `1 + a·sin(2πt)` on
/// type 1 births, started empty; marginals at `frames + 1` times.
pub fn marginal_data(
    rates: [f64; 4],
    modulation: f64,
    cap: usize,
    horizon: f64,
    frames: usize,
) -> mbdp::Result<MarginalFrames> {
    let [l1, m1, l2, m2] = rates;
    if !(0.0..=1.0).contains(&modulation) {
        return Err(mbdp::Error::InvalidInput("modulation must lie in [0, 1]".into()));
    }
    if frames == 0 || cap > 40 {
        return Err(mbdp::Error::InvalidInput(
            "need 1..=40 cap and at least one frame".into(),
        ));
    }
    let model = ModelSpec::new(
        vec![
            TypeRates::new(
                RateRule::Periodic {
                    base: l1,
                    amplitude: modulation * l1,
                    period: 1.0,
                    phase: 0.0,
                },
                RateRule::constant(m1),
                bounds(l1 * (1.0 - modulation), l1 * (1.0 + modulation), m1, m1)?,
            ),
            TypeRates::new(RateRule::constant(l2), RateRule::constant(m2), bounds(l2, l2, m2, m2)?),
        ],
        None,
        None,
    )?;
    let space = build_space(&[cap, cap])?;
    let p0 = ProbabilityVector::point_mass(&space, &MultiIndex::zeros(2), 0.0)?;
    let grid = uniform_grid(horizon, horizon / frames as f64);
    let traj = integrate(&model, &space, &p0, &grid, &IntegrateOptions::default())?;
    let coords = [Coordinate::Type(0), Coordinate::Type(1), Coordinate::Total];
    let frames = traj
        .snapshots
        .iter()
        .map(|p| {
            let mut out: [Vec<f64>; 3] = Default::default();
            for (slot, c) in out.iter_mut().zip(coords) {
                *slot = marginal(p, &space, c)?.values;
            }
            Ok(out)
        })
        .collect::<mbdp::Result<Vec<_>>>()?;
    Ok(MarginalFrames {
        t: traj.grid.clone(),
        frames,
        tail_mass: traj.tail_mass.clone(),
    })
}

#[wasm_bindgen]
pub fn null_decay(birth_lo: f64, birth_hi: f64, death: f64, horizon: f64) -> String {
    to_json(null_decay_data(birth_lo, birth_hi, death, horizon))
}

#[wasm_bindgen]
pub fn weak_decay(lambda: f64, mu: f64, levels: usize, horizon: f64) -> String {
    to_json(weak_decay_data(lambda, mu, levels, horizon))
}

#[wasm_bindgen]
pub fn marginal_evolution(l1: f64, m1: f64, l2: f64, m2: f64, modulation: f64, cap: usize, horizon: f64) -> String {
    to_json(marginal_data([l1, m1, l2, m2], modulation, cap, horizon, 60))
}
