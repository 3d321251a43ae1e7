//! One-dimensional projections of the multidimensional process.
//!
//! For a coordinate `j` the marginal is `x_k = Σ_{m: m_j = k} p_m` and the
//! effective rates are the `p`-weighted conditional averages of the type-`j`
//! birth and death rates over the level set `{m_j = k}`. With those rates the
//! marginal obeys a closed three-diagonal forward system. The `Total`
//! coordinate does the same for the particle count `|m|`, with per-level rates
//! summed over types.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kolmogorov::{ProbabilityVector, Trajectory};
use crate::model::{ModelSpec, RateBounds, TruncatedSpace};

/// Marginal mass at or below this is treated as zero.
pub const ZERO_MASS: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Coordinate {
    /// Zero-based particle type.
    Type(usize),
    /// Total particle count `|m|`.
    Total,
}

impl Coordinate {
    /// Largest level `K` on the truncated space.
    pub fn max_level(&self, space: &TruncatedSpace) -> usize {
        match *self {
            Coordinate::Type(j) => space.caps()[j],
            Coordinate::Total => space.max_total(),
        }
    }

    pub fn level(&self, m: &[usize]) -> usize {
        match *self {
            Coordinate::Type(j) => m[j],
            Coordinate::Total => m.iter().sum(),
        }
    }

    fn check(&self, dimension: usize) -> Result<()> {
        match *self {
            Coordinate::Type(j) if j >= dimension => Err(Error::TypeOutOfRange { index: j, dimension }),
            _ => Ok(()),
        }
    }
}

/// One-based type number or `total`.
impl fmt::Display for Coordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coordinate::Type(j) => write!(f, "{}", j + 1),
            Coordinate::Total => write!(f, "total"),
        }
    }
}

impl FromStr for Coordinate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("total") {
            return Ok(Coordinate::Total);
        }
        match s.parse::<usize>() {
            Ok(j) if j >= 1 => Ok(Coordinate::Type(j - 1)),
            _ => Err(Error::InvalidInput(format!(
                "coordinate must be a type number ≥ 1 or 'total', got '{s}'"
            ))),
        }
    }
}

/// Distribution `x_k`, `k = 0..=K`, of one coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginal {
    pub coordinate: Coordinate,
    pub values: Vec<f64>,
    pub time: f64,
}

pub fn marginal(p: &ProbabilityVector, space: &TruncatedSpace, coordinate: Coordinate) -> Result<Marginal> {
    check_inputs(p.values(), space, coordinate)?;
    Ok(Marginal {
        coordinate,
        values: marginal_values(p.values(), space, coordinate),
        time: p.time(),
    })
}

pub(crate) fn marginal_values(p: &[f64], space: &TruncatedSpace, coordinate: Coordinate) -> Vec<f64> {
    let mut x = vec![0.0; coordinate.max_level(space) + 1];
    for (m, v) in space.states().zip(p) {
        x[coordinate.level(m)] += v;
    }
    x
}

fn check_inputs(p: &[f64], space: &TruncatedSpace, coordinate: Coordinate) -> Result<()> {
    if p.len() != space.size() {
        return Err(Error::InvalidInput(format!(
            "probability vector has {} entries, space has {}",
            p.len(),
            space.size()
        )));
    }
    coordinate.check(space.dimension())
}

/// Effective birth and death intensities `λ̃_k`, `μ̃_k` of a projection.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveRates {
    pub coordinate: Coordinate,
    pub birth: Vec<f64>,
    pub death: Vec<f64>,
    /// `false` where the marginal mass was at most [`ZERO_MASS`]; those levels
    /// carry the lower bounds by convention.
    pub defined: Vec<bool>,
    pub time: f64,
}

impl EffectiveRates {
    pub fn max_level(&self) -> usize {
        self.birth.len() - 1
    }

    /// Levels whose rates fall outside `bounds`; the death bounds are checked
    /// for `k ≥ 1` only, and `μ̃_0` must be zero.
    pub fn bound_violations(&self, bounds: &RateBounds) -> Vec<usize> {
        (0..self.birth.len())
            .filter(|&k| self.defined[k])
            .filter(|&k| {
                let death_ok = if k == 0 {
                    self.death[0] == 0.0
                } else {
                    bounds.contains_death(self.death[k])
                };
                !bounds.contains_birth(self.birth[k]) || !death_ok
            })
            .collect()
    }
}

/// Rate bounds that apply to the projection onto `coordinate`.
///
/// For `Total` the per-level birth rate sums over types that are not at their
/// caps, so its bounds `[Σ l_j, Σ L_j]` describe the untruncated process only.
pub fn coordinate_bounds(model: &ModelSpec, coordinate: Coordinate) -> Result<RateBounds> {
    coordinate.check(model.dimension())?;
    Ok(match coordinate {
        Coordinate::Type(j) => *model.bounds(j)?,
        Coordinate::Total => {
            let b: Vec<&RateBounds> = model.types().iter().map(|t| &t.bounds).collect();
            RateBounds {
                birth_lo: b.iter().map(|b| b.birth_lo).sum(),
                birth_hi: b.iter().map(|b| b.birth_hi).sum(),
                death_lo: b.iter().map(|b| b.death_lo).fold(f64::INFINITY, f64::min),
                death_hi: b.iter().map(|b| b.death_hi).sum(),
            }
        }
    })
}

pub fn effective_rates(
    p: &ProbabilityVector,
    model: &ModelSpec,
    space: &TruncatedSpace,
    coordinate: Coordinate,
    t: f64,
) -> Result<EffectiveRates> {
    check_inputs(p.values(), space, coordinate)?;
    effective_rates_raw(p.values(), model, space, coordinate, t)
}

/// Same as [`effective_rates`] on an unvalidated slice (integrator stages).
pub(crate) fn effective_rates_raw(
    p: &[f64],
    model: &ModelSpec,
    space: &TruncatedSpace,
    coordinate: Coordinate,
    t: f64,
) -> Result<EffectiveRates> {
    let levels = coordinate.max_level(space) + 1;
    let mut mass = vec![0.0; levels];
    let mut birth = vec![0.0; levels];
    let mut death = vec![0.0; levels];

    for (i, m) in space.states().enumerate() {
        let w = p[i];
        let k = coordinate.level(m);
        mass[k] += w;
        match coordinate {
            Coordinate::Type(j) => {
                let (b, d) = model.eval_rates(j, m, t)?;
                birth[k] += b * w;
                death[k] += d * w;
            }
            Coordinate::Total => {
                for l in 0..model.dimension() {
                    let (b, d) = model.eval_rates(l, m, t)?;
                    // Births of a type at its cap are suppressed by the truncation.
                    if space.up(i, l).is_some() {
                        birth[k] += b * w;
                    }
                    death[k] += d * w;
                }
            }
        }
    }

    let fallback = coordinate_bounds(model, coordinate)?;
    let mut defined = vec![false; levels];
    for k in 0..levels {
        if mass[k] > ZERO_MASS {
            defined[k] = true;
            birth[k] /= mass[k];
            death[k] /= mass[k];
        } else {
            birth[k] = fallback.birth_lo;
            death[k] = if k == 0 { 0.0 } else { fallback.death_lo };
        }
    }
    death[0] = 0.0;

    Ok(EffectiveRates {
        coordinate,
        birth,
        death,
        defined,
        time: t,
    })
}

/// Three-diagonal transposed intensity matrix of a projection.
///
/// `sub[k]` is the entry `(k+1, k)`, `sup[k]` the entry `(k, k+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TridiagonalSystem {
    pub sub: Vec<f64>,
    pub main: Vec<f64>,
    pub sup: Vec<f64>,
    pub time: f64,
}

/// Births `λ̃_k` below the diagonal, deaths `μ̃_{k+1}` above; no birth out
/// of the top level `K`.
pub fn assemble_projected(rates: &EffectiveRates) -> TridiagonalSystem {
    let top = rates.max_level();
    let sub: Vec<f64> = rates.birth[..top].to_vec();
    let sup: Vec<f64> = rates.death[1..].to_vec();
    let main = (0..=top)
        .map(|k| {
            let b = if k < top { rates.birth[k] } else { 0.0 };
            -(b + rates.death[k])
        })
        .collect();
    TridiagonalSystem {
        sub,
        main,
        sup,
        time: rates.time,
    }
}

impl TridiagonalSystem {
    pub fn size(&self) -> usize {
        self.main.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.size();
        (0..n)
            .map(|k| {
                let mut y = self.main[k] * x[k];
                if k > 0 {
                    y += self.sub[k - 1] * x[k - 1];
                }
                if k + 1 < n {
                    y += self.sup[k] * x[k + 1];
                }
                y
            })
            .collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let n = self.size();
        (0..n)
            .map(|k| {
                let mut s = self.main[k];
                if k + 1 < n {
                    s += self.sub[k];
                }
                if k > 0 {
                    s += self.sup[k - 1];
                }
                s
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        DMatrix::from_fn(n, n, |r, c| {
            if r == c {
                self.main[r]
            } else if r == c + 1 {
                self.sub[c]
            } else if c == r + 1 {
                self.sup[r]
            } else {
                0.0
            }
        })
    }
}

/// `dz/dt = B̃ z + f̃` for `z = (x_1, ..., x_K)` after eliminating
/// `x_0 = 1 - Σ_{i≥1} x_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedSystem {
    pub matrix: DMatrix<f64>,
    pub forcing: DVector<f64>,
    pub time: f64,
}

impl ReducedSystem {
    pub fn size(&self) -> usize {
        self.forcing.len()
    }

    /// `B̃ w`.
    pub fn apply(&self, w: &[f64], out: &mut [f64]) {
        let k = self.size();
        for (i, o) in out.iter_mut().enumerate().take(k) {
            *o = (0..k).map(|j| self.matrix[(i, j)] * w[j]).sum();
        }
    }
}

/// `b_ij = ã_ij - ã_i0` for `i, j ≥ 1` and `f̃ = (λ̃_0, 0, ..., 0)`.
pub fn reduce(sys: &TridiagonalSystem) -> ReducedSystem {
    let a = sys.to_dense();
    let k = sys.size() - 1;
    let matrix = DMatrix::from_fn(k, k, |i, j| a[(i + 1, j + 1)] - a[(i + 1, 0)]);
    let forcing = DVector::from_fn(k, |i, _| a[(i + 1, 0)]);
    ReducedSystem {
        matrix,
        forcing,
        time: sys.time,
    }
}

/// Residual `‖dx/dt - Ã x‖₁` of the projected system along a trajectory.
///
/// On a uniform grid of at least 5 points `dx/dt` is the five-point centered
/// difference and the residual is reported at `t_2 .. t_{n-3}`; otherwise the
/// three-point difference is used at every interior point.
pub fn projection_consistency_residual(
    traj: &Trajectory,
    model: &ModelSpec,
    space: &TruncatedSpace,
    coordinate: Coordinate,
) -> Result<Vec<(f64, f64)>> {
    let g = &traj.grid;
    if g.len() < 3 {
        return Err(Error::InvalidInput(
            "consistency residual needs at least 3 grid points".into(),
        ));
    }
    let marginals: Vec<Vec<f64>> = traj
        .snapshots
        .iter()
        .map(|p| marginal(p, space, coordinate).map(|m| m.values))
        .collect::<Result<_>>()?;

    let h = (g[g.len() - 1] - g[0]) / (g.len() - 1) as f64;
    let uniform = g.len() >= 5 && g.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h);
    let (lo, hi) = if uniform { (2, g.len() - 2) } else { (1, g.len() - 1) };

    let mut out = Vec::with_capacity(hi - lo);
    for i in lo..hi {
        let t = g[i];
        let rates = effective_rates(&traj.snapshots[i], model, space, coordinate, t)?;
        let rhs = assemble_projected(&rates).apply(&marginals[i]);
        let r: f64 = (0..rhs.len())
            .map(|k| {
                let dx = if uniform {
                    let x = |o: usize| marginals[o][k];
                    (x(i - 2) - 8.0 * x(i - 1) + 8.0 * x(i + 1) - x(i + 2)) / (12.0 * h)
                } else {
                    (marginals[i + 1][k] - marginals[i - 1][k]) / (g[i + 1] - g[i - 1])
                };
                (dx - rhs[k]).abs()
            })
            .sum();
        out.push((t, r));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kolmogorov::{integrate, IntegrateOptions};
    use crate::model::{build_space, MultiIndex, RateRule, TypeRates};

    fn rates(birth: Vec<f64>, death: Vec<f64>) -> EffectiveRates {
        let n = birth.len();
        EffectiveRates {
            coordinate: Coordinate::Type(0),
            birth,
            death,
            defined: vec![true; n],
            time: 0.0,
        }
    }

    fn uniform_model_2d(birth1: RateRule) -> ModelSpec {
        let b = RateBounds::new(1.0, 2.0, 1.0, 1.0).unwrap();
        ModelSpec::new(
            vec![
                TypeRates::new(birth1, RateRule::constant(1.0), b),
                TypeRates::new(RateRule::constant(1.0), RateRule::constant(1.0), b),
            ],
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn coordinate_parsing() {
        assert_eq!("2".parse::<Coordinate>().unwrap(), Coordinate::Type(1));
        assert_eq!("TOTAL".parse::<Coordinate>().unwrap(), Coordinate::Total);
        assert!("0".parse::<Coordinate>().is_err());
        assert!("x".parse::<Coordinate>().is_err());
        assert_eq!(Coordinate::Type(0).to_string(), "1");
    }

    #[test]
    fn marginal_examples() {
        let space = build_space(&[1, 1]).unwrap();
        let p = ProbabilityVector::uniform(&space, 0.0);
        assert_eq!(
            marginal(&p, &space, Coordinate::Type(0)).unwrap().values,
            vec![0.5, 0.5]
        );
        assert_eq!(
            marginal(&p, &space, Coordinate::Total).unwrap().values,
            vec![0.25, 0.5, 0.25]
        );

        let big = build_space(&[3, 4]).unwrap();
        let pm = ProbabilityVector::point_mass(&big, &MultiIndex::new(vec![2, 3]).unwrap(), 0.0).unwrap();
        assert_eq!(
            marginal(&pm, &big, Coordinate::Type(1)).unwrap().values,
            vec![0.0, 0.0, 0.0, 1.0, 0.0]
        );
        assert!(marginal(&pm, &big, Coordinate::Type(2)).is_err());
    }

    #[test]
    fn constant_rate_average() {
        let model = uniform_model_2d(RateRule::constant(2.0));
        let space = build_space(&[1, 1]).unwrap();
        let p = ProbabilityVector::uniform(&space, 0.0);
        let r = effective_rates(&p, &model, &space, Coordinate::Type(0), 0.0).unwrap();
        assert_eq!(r.birth, vec![2.0, 2.0]);
        assert_eq!(r.death, vec![0.0, 1.0]);
        assert!(r.defined.iter().all(|&d| d));
    }

    #[test]
    fn state_dependent_average() {
        // λ_{1,m} = m_2 + 1.
        let rule = RateRule::StateAffine {
            intercept: 1.0,
            coeffs: vec![0.0, 1.0],
            modulation: None,
        };
        let model = uniform_model_2d(rule);
        let space = build_space(&[1, 1]).unwrap();
        let p = ProbabilityVector::uniform(&space, 0.0);
        let r = effective_rates(&p, &model, &space, Coordinate::Type(0), 0.0).unwrap();
        assert_eq!(r.birth, vec![1.5, 1.5]);
    }

    #[test]
    fn zero_marginal_convention() {
        let model = uniform_model_2d(RateRule::constant(2.0));
        let space = build_space(&[2, 1]).unwrap();
        let p = ProbabilityVector::point_mass(&space, &MultiIndex::zeros(2), 0.0).unwrap();
        let r = effective_rates(&p, &model, &space, Coordinate::Type(0), 0.0).unwrap();
        assert_eq!(r.defined, vec![true, false, false]);
        assert_eq!(r.birth, vec![2.0, 1.0, 1.0]);
        assert_eq!(r.death, vec![0.0, 1.0, 1.0]);
        assert!(r.bound_violations(model.bounds(0).unwrap()).is_empty());
    }

    #[test]
    fn projected_transcription() {
        let sys = assemble_projected(&rates(vec![1.0, 1.0, 7.0], vec![0.0, 2.0, 2.0]));
        assert_eq!(sys.main, vec![-1.0, -3.0, -2.0]);
        assert_eq!(sys.sub, vec![1.0, 1.0]);
        assert_eq!(sys.sup, vec![2.0, 2.0]);
        assert!(sys.column_sums().iter().all(|s| s.abs() <= 1e-12));

        let zero = assemble_projected(&rates(vec![0.0; 4], vec![0.0; 4]));
        assert!(zero.to_dense().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reduced_hand_example() {
        let sys = assemble_projected(&rates(vec![1.0, 1.0, 7.0], vec![0.0, 2.0, 2.0]));
        let red = reduce(&sys);
        assert_eq!(red.matrix, DMatrix::from_row_slice(2, 2, &[-4.0, 1.0, 1.0, -2.0]));
        assert_eq!(red.forcing, DVector::from_vec(vec![1.0, 0.0]));

        let zero = reduce(&assemble_projected(&rates(vec![0.0; 3], vec![0.0; 3])));
        assert!(zero.matrix.iter().all(|&v| v == 0.0));
        assert!(zero.forcing.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn residual_needs_three_points() {
        let model = uniform_model_2d(RateRule::constant(2.0));
        let space = build_space(&[2, 2]).unwrap();
        let p0 = ProbabilityVector::uniform(&space, 0.0);
        let traj = integrate(&model, &space, &p0, &[0.0, 0.1], &IntegrateOptions::default()).unwrap();
        assert!(projection_consistency_residual(&traj, &model, &space, Coordinate::Total).is_err());
    }

    #[test]
    fn residual_zero_for_frozen_model() {
        let b = RateBounds::new(0.0, 0.0, 0.0, 0.0).unwrap();
        let model = ModelSpec::new(
            vec![TypeRates::new(RateRule::constant(0.0), RateRule::constant(0.0), b); 2],
            None,
            None,
        )
        .unwrap();
        let space = build_space(&[2, 2]).unwrap();
        let p0 = ProbabilityVector::uniform(&space, 0.0);
        let grid: Vec<f64> = (0..5).map(|i| i as f64 * 0.01).collect();
        let traj = integrate(&model, &space, &p0, &grid, &IntegrateOptions::default()).unwrap();
        for c in [Coordinate::Type(0), Coordinate::Type(1), Coordinate::Total] {
            let r = projection_consistency_residual(&traj, &model, &space, c).unwrap();
            assert!(r.iter().all(|&(_, v)| v <= 1e-12));
        }
    }

    #[test]
    fn total_bounds_aggregate() {
        let model = uniform_model_2d(RateRule::constant(2.0));
        let b = coordinate_bounds(&model, Coordinate::Total).unwrap();
        assert_eq!((b.birth_lo, b.birth_hi, b.death_lo, b.death_hi), (2.0, 4.0, 1.0, 2.0));
    }
}
