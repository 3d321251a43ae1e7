//! Multidimensional birth-death models and their truncated state spaces.
//!
//! A model of dimension `d` carries, for every particle type `j`, a birth rule
//! `λ_{j,m}(t)`, a death rule `μ_{j,m}(t)` and declared two-sided bounds on
//! both. The state space is truncated to the box `∏[0, N_j]` and enumerated in
//! graded-lexicographic order: states sorted by total count, ties broken
//! lexicographically on the coordinates.
//!
//! Type indices are zero-based throughout the library; the CLI and the config
//! format present them one-based.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest state space `build_space` accepts unless told otherwise.
pub const DEFAULT_MAX_STATES: usize = 1 << 22;

/// Relative slack for declared-bound checks; absorbs last-bit rounding in
/// rule arithmetic.
const BOUND_REL_TOL: f64 = 1e-12;

/// A state `m = (m_1, ..., m_d)` of particle counts per type.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(coords: Vec<usize>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput("multi-index needs at least one coordinate".into()));
        }
        Ok(MultiIndex(coords))
    }

    pub fn zeros(dimension: usize) -> Self {
        MultiIndex(vec![0; dimension.max(1)])
    }

    pub fn coords(&self) -> &[usize] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    /// Total particle count `|m|`.
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// `m + e_j`.
    pub fn incremented(&self, j: usize) -> MultiIndex {
        let mut c = self.0.clone();
        c[j] += 1;
        MultiIndex(c)
    }

    /// `m - e_j`, or `None` when `m_j = 0`.
    pub fn decremented(&self, j: usize) -> Option<MultiIndex> {
        let mut c = self.0.clone();
        c[j] = c[j].checked_sub(1)?;
        Some(MultiIndex(c))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// The box `∏[0, N_j]` with a fixed graded-lexicographic enumeration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruncatedSpace {
    caps: Vec<usize>,
    strides: Vec<usize>,
    /// Coordinates of state `i` at `states[i*d .. (i+1)*d]`.
    states: Vec<usize>,
    /// Row-major mixed-radix code -> linear index.
    position: Vec<usize>,
    at_cap: Vec<bool>,
}

/// Builds the truncated space for the given caps with the default size limit.
pub fn build_space(caps: &[usize]) -> Result<TruncatedSpace> {
    build_space_with_limit(caps, DEFAULT_MAX_STATES)
}

pub fn build_space_with_limit(caps: &[usize], max_states: usize) -> Result<TruncatedSpace> {
    if caps.is_empty() {
        return Err(Error::InvalidCaps("caps list is empty".into()));
    }
    if let Some(j) = caps.iter().position(|&c| c == 0) {
        return Err(Error::InvalidCaps(format!("cap of type {} must be at least 1", j + 1)));
    }
    let size = caps
        .iter()
        .try_fold(1usize, |acc, &c| c.checked_add(1).and_then(|n| acc.checked_mul(n)))
        .filter(|&s| s <= max_states)
        .ok_or_else(|| Error::InvalidCaps(format!("state space for caps {caps:?} exceeds {max_states} states")))?;

    let d = caps.len();
    let mut strides = vec![1usize; d];
    for j in (0..d.saturating_sub(1)).rev() {
        strides[j] = strides[j + 1] * (caps[j + 1] + 1);
    }

    let decode = |code: usize, out: &mut [usize]| {
        let mut rest = code;
        for j in 0..d {
            out[j] = rest / strides[j];
            rest %= strides[j];
        }
    };

    // Row-major code order is lexicographic order on coordinates, so the
    // graded order is a stable sort of the codes by total count.
    let mut scratch = vec![0usize; d];
    let mut keyed: Vec<(usize, usize)> = (0..size)
        .map(|code| {
            decode(code, &mut scratch);
            (scratch.iter().sum::<usize>(), code)
        })
        .collect();
    keyed.sort_unstable();

    let mut states = vec![0usize; size * d];
    let mut position = vec![0usize; size];
    let mut at_cap = vec![false; size];
    for (index, &(_, code)) in keyed.iter().enumerate() {
        let slot = &mut states[index * d..(index + 1) * d];
        decode(code, slot);
        at_cap[index] = slot.iter().zip(caps).any(|(m, n)| m == n);
        position[code] = index;
    }

    Ok(TruncatedSpace {
        caps: caps.to_vec(),
        strides,
        states,
        position,
        at_cap,
    })
}

impl TruncatedSpace {
    pub fn caps(&self) -> &[usize] {
        &self.caps
    }

    pub fn dimension(&self) -> usize {
        self.caps.len()
    }

    pub fn size(&self) -> usize {
        self.position.len()
    }

    /// Coordinates of state `i`. Panics when `i >= size`.
    pub fn state(&self, i: usize) -> &[usize] {
        let d = self.dimension();
        &self.states[i * d..(i + 1) * d]
    }

    pub fn states(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.states.chunks_exact(self.dimension())
    }

    pub fn state_of(&self, i: usize) -> Result<MultiIndex> {
        if i >= self.size() {
            return Err(Error::IndexOutOfRange {
                index: i,
                size: self.size(),
            });
        }
        Ok(MultiIndex(self.state(i).to_vec()))
    }

    pub fn index_of(&self, m: &[usize]) -> Result<usize> {
        if m.len() != self.dimension() || m.iter().zip(&self.caps).any(|(x, n)| x > n) {
            return Err(Error::OutOfBox {
                state: m.to_vec(),
                caps: self.caps.clone(),
            });
        }
        Ok(self.position[self.code(m)])
    }

    fn code(&self, m: &[usize]) -> usize {
        m.iter().zip(&self.strides).map(|(x, s)| x * s).sum()
    }

    /// Linear index of `state(i) + e_j`, or `None` at the cap.
    pub fn up(&self, i: usize, j: usize) -> Option<usize> {
        let m = self.state(i);
        (m[j] < self.caps[j]).then(|| self.position[self.code(m) + self.strides[j]])
    }

    /// Linear index of `state(i) - e_j`, or `None` when `m_j = 0`.
    pub fn down(&self, i: usize, j: usize) -> Option<usize> {
        let m = self.state(i);
        (m[j] > 0).then(|| self.position[self.code(m) - self.strides[j]])
    }

    /// Whether any coordinate of state `i` sits at its cap.
    pub fn is_boundary(&self, i: usize) -> bool {
        self.at_cap[i]
    }

    pub fn max_total(&self) -> usize {
        self.caps.iter().sum()
    }
}

/// Declared per-type rate bounds `l_j ≤ λ ≤ L_j` and `death_lo ≤ μ ≤ M_j`.
///
/// The death bounds apply to states with `m_j ≥ 1`; an empty class never dies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateBounds {
    pub birth_lo: f64,
    pub birth_hi: f64,
    pub death_lo: f64,
    pub death_hi: f64,
}

impl RateBounds {
    pub fn new(birth_lo: f64, birth_hi: f64, death_lo: f64, death_hi: f64) -> Result<Self> {
        let b = RateBounds {
            birth_lo,
            birth_hi,
            death_lo,
            death_hi,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.birth_lo, self.birth_hi, self.death_lo, self.death_hi];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidModel(format!(
                "rate bounds must be finite and non-negative, got {self:?}"
            )));
        }
        if self.birth_lo > self.birth_hi {
            return Err(Error::InvalidModel(format!(
                "birth_lo ({}) exceeds birth_hi ({})",
                self.birth_lo, self.birth_hi
            )));
        }
        if self.death_lo > self.death_hi {
            return Err(Error::InvalidModel(format!(
                "death_lo ({}) exceeds death_hi ({})",
                self.death_lo, self.death_hi
            )));
        }
        Ok(())
    }

    pub(crate) fn contains_birth(&self, v: f64) -> bool {
        within(v, self.birth_lo, self.birth_hi)
    }

    pub(crate) fn contains_death(&self, v: f64) -> bool {
        within(v, self.death_lo, self.death_hi)
    }
}

pub(crate) fn within(v: f64, lo: f64, hi: f64) -> bool {
    v >= lo - BOUND_REL_TOL * lo.abs().max(1.0) && v <= hi + BOUND_REL_TOL * hi.abs().max(1.0)
}

/// Multiplicative time modulation `1 + amplitude·sin(2πt/period + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Modulation {
    pub amplitude: f64,
    pub period: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Modulation {
    fn factor(&self, t: f64) -> f64 {
        1.0 + self.amplitude * (2.0 * PI * t / self.period + self.phase).sin()
    }
}

/// A rate `λ_{j,m}(t)` or `μ_{j,m}(t)` drawn from a closed rule algebra.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RateRule {
    Constant {
        value: f64,
    },
    /// `base + amplitude·sin(2πt/period + phase)`.
    Periodic {
        base: f64,
        amplitude: f64,
        period: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `(intercept + Σ coeffs_i·m_i)·modulation(t)`.
    StateAffine {
        intercept: f64,
        coeffs: Vec<f64>,
        #[serde(default)]
        modulation: Option<Modulation>,
    },
    /// `min(cap, intercept + Σ coeffs_i·m_i)·modulation(t)`.
    StateAffineCapped {
        intercept: f64,
        coeffs: Vec<f64>,
        cap: f64,
        #[serde(default)]
        modulation: Option<Modulation>,
    },
    /// Piecewise-linear in time through `(times[i], values[i])`, held constant
    /// outside the knots; wrapped modulo `period` when one is given.
    Table {
        times: Vec<f64>,
        values: Vec<f64>,
        #[serde(default)]
        period: Option<f64>,
    },
}

impl RateRule {
    pub fn constant(value: f64) -> Self {
        RateRule::Constant { value }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RateRule::Constant { .. } => "constant",
            RateRule::Periodic { .. } => "periodic",
            RateRule::StateAffine { .. } => "state-affine",
            RateRule::StateAffineCapped { .. } => "state-affine-capped",
            RateRule::Table { .. } => "table",
        }
    }

    /// Structural checks against the model dimension.
    pub fn validate(&self, dimension: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(format!("{} rule: {msg}", self.kind())));
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        let check_mod = |m: &Option<Modulation>| -> Result<()> {
            if let Some(m) = m {
                if !finite(&[m.amplitude, m.period, m.phase]) || m.period <= 0.0 {
                    return Err(Error::InvalidModel(
                        "modulation needs finite parameters and a positive period".into(),
                    ));
                }
                if m.amplitude.abs() > 1.0 {
                    return Err(Error::InvalidModel("modulation amplitude must lie in [-1, 1]".into()));
                }
            }
            Ok(())
        };
        match self {
            RateRule::Constant { value } => {
                if !value.is_finite() || *value < 0.0 {
                    return bad(format!("value {value} must be finite and non-negative"));
                }
            }
            RateRule::Periodic {
                base,
                amplitude,
                period,
                phase,
            } => {
                if !finite(&[*base, *amplitude, *period, *phase]) || *period <= 0.0 {
                    return bad("needs finite parameters and a positive period".into());
                }
            }
            RateRule::StateAffine {
                intercept,
                coeffs,
                modulation,
            } => {
                if coeffs.len() != dimension {
                    return bad(format!("expected {dimension} coeffs, got {}", coeffs.len()));
                }
                if !intercept.is_finite() || !finite(coeffs) {
                    return bad("parameters must be finite".into());
                }
                check_mod(modulation)?;
            }
            RateRule::StateAffineCapped {
                intercept,
                coeffs,
                cap,
                modulation,
            } => {
                if coeffs.len() != dimension {
                    return bad(format!("expected {dimension} coeffs, got {}", coeffs.len()));
                }
                if !intercept.is_finite() || !cap.is_finite() || !finite(coeffs) {
                    return bad("parameters must be finite".into());
                }
                check_mod(modulation)?;
            }
            RateRule::Table { times, values, period } => {
                if times.is_empty() || times.len() != values.len() {
                    return bad("times and values must be non-empty and of equal length".into());
                }
                if !finite(times) || !finite(values) {
                    return bad("knots must be finite".into());
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("times must be strictly increasing".into());
                }
                if let Some(p) = period {
                    if !p.is_finite() || *p <= 0.0 {
                        return bad("period must be positive".into());
                    }
                }
            }
        }
        Ok(())
    }

    /// Raw rule value at `(m, t)`; no sign or bound checks.
    pub fn evaluate(&self, m: &[usize], t: f64) -> f64 {
        let affine =
            |intercept: f64, coeffs: &[f64]| intercept + coeffs.iter().zip(m).map(|(c, &x)| c * x as f64).sum::<f64>();
        let modulate = |v: f64, m: &Option<Modulation>| match m {
            Some(m) => v * m.factor(t),
            None => v,
        };
        match self {
            RateRule::Constant { value } => *value,
            RateRule::Periodic {
                base,
                amplitude,
                period,
                phase,
            } => base + amplitude * (2.0 * PI * t / period + phase).sin(),
            RateRule::StateAffine {
                intercept,
                coeffs,
                modulation,
            } => modulate(affine(*intercept, coeffs), modulation),
            RateRule::StateAffineCapped {
                intercept,
                coeffs,
                cap,
                modulation,
            } => modulate(affine(*intercept, coeffs).min(*cap), modulation),
            RateRule::Table { times, values, period } => {
                let t = match period {
                    Some(p) => t.rem_euclid(*p),
                    None => t,
                };
                interpolate(times, values, t)
            }
        }
    }

    /// Conservative `[lo, hi]` range of the rule over the box given by `caps`
    /// and all `t ≥ 0`. When `occupied` names a type, only states with that
    /// coordinate ≥ 1 are considered (death rules).
    pub fn envelope(&self, caps: &[usize], occupied: Option<usize>) -> (f64, f64) {
        let affine_range = |intercept: f64, coeffs: &[f64]| {
            let (mut lo, mut hi) = (intercept, intercept);
            for (i, (&c, &n)) in coeffs.iter().zip(caps).enumerate() {
                let min_m = if occupied == Some(i) { 1.0 } else { 0.0 };
                let (a, b) = (c * min_m, c * n as f64);
                lo += a.min(b);
                hi += a.max(b);
            }
            (lo, hi)
        };
        let modulate = |(lo, hi): (f64, f64), m: &Option<Modulation>| match m {
            Some(m) => {
                let (f_lo, f_hi) = (1.0 - m.amplitude.abs(), 1.0 + m.amplitude.abs());
                let p = [lo * f_lo, lo * f_hi, hi * f_lo, hi * f_hi];
                (
                    p.iter().copied().fold(f64::INFINITY, f64::min),
                    p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                )
            }
            None => (lo, hi),
        };
        match self {
            RateRule::Constant { value } => (*value, *value),
            RateRule::Periodic { base, amplitude, .. } => (base - amplitude.abs(), base + amplitude.abs()),
            RateRule::StateAffine {
                intercept,
                coeffs,
                modulation,
            } => modulate(affine_range(*intercept, coeffs), modulation),
            RateRule::StateAffineCapped {
                intercept,
                coeffs,
                cap,
                modulation,
            } => {
                let (lo, hi) = affine_range(*intercept, coeffs);
                modulate((lo.min(*cap), hi.min(*cap)), modulation)
            }
            RateRule::Table { values, .. } => (
                values.iter().copied().fold(f64::INFINITY, f64::min),
                values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ),
        }
    }

    /// Whether the rule ignores the state.
    pub fn is_state_independent(&self) -> bool {
        match self {
            RateRule::Constant { .. } | RateRule::Periodic { .. } | RateRule::Table { .. } => true,
            RateRule::StateAffine { coeffs, .. } | RateRule::StateAffineCapped { coeffs, .. } => {
                coeffs.iter().all(|&c| c == 0.0)
            }
        }
    }

    /// Whether the rule ignores time.
    pub fn is_time_independent(&self) -> bool {
        match self {
            RateRule::Constant { .. } => true,
            RateRule::Periodic { amplitude, .. } => *amplitude == 0.0,
            RateRule::StateAffine { modulation, .. } | RateRule::StateAffineCapped { modulation, .. } => {
                modulation.as_ref().is_none_or(|m| m.amplitude == 0.0)
            }
            RateRule::Table { values, .. } => values.windows(2).all(|w| w[0] == w[1]),
        }
    }
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    let last = times.len() - 1;
    if t <= times[0] {
        return values[0];
    }
    if t >= times[last] {
        return values[last];
    }
    let k = times.partition_point(|&x| x <= t);
    let (t0, t1) = (times[k - 1], times[k]);
    let (v0, v1) = (values[k - 1], values[k]);
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

/// Birth rule, death rule and declared bounds of one particle type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeRates {
    pub birth: RateRule,
    pub death: RateRule,
    pub bounds: RateBounds,
}

impl TypeRates {
    pub fn new(birth: RateRule, death: RateRule, bounds: RateBounds) -> Self {
        TypeRates { birth, death, bounds }
    }

    /// Uses the rules' envelopes over the box as the declared bounds.
    pub fn with_envelope_bounds(birth: RateRule, death: RateRule, caps: &[usize], j: usize) -> Self {
        let (blo, bhi) = birth.envelope(caps, None);
        let (dlo, dhi) = death.envelope(caps, Some(j));
        let bounds = RateBounds {
            birth_lo: blo.max(0.0),
            birth_hi: bhi.max(0.0),
            death_lo: dlo.max(0.0),
            death_hi: dhi.max(0.0),
        };
        TypeRates { birth, death, bounds }
    }
}

/// A `d`-type birth-death model: per-type rules, bounds and the global caps
/// `L ≥ max_j L_j`, `M ≥ max_j M_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    types: Vec<TypeRates>,
    birth_cap: f64,
    death_cap: f64,
}

impl ModelSpec {
    /// Global caps default to the largest declared per-type upper bounds.
    pub fn new(types: Vec<TypeRates>, birth_cap: Option<f64>, death_cap: Option<f64>) -> Result<Self> {
        if types.is_empty() {
            return Err(Error::InvalidModel("dimension must be at least 1".into()));
        }
        let d = types.len();
        for (j, ty) in types.iter().enumerate() {
            let ctx = |e: Error| Error::InvalidModel(format!("type {}: {e}", j + 1));
            ty.bounds.validate().map_err(ctx)?;
            ty.birth.validate(d).map_err(ctx)?;
            ty.death.validate(d).map_err(ctx)?;
        }
        let max_birth = types.iter().map(|t| t.bounds.birth_hi).fold(0.0, f64::max);
        let max_death = types.iter().map(|t| t.bounds.death_hi).fold(0.0, f64::max);
        let birth_cap = birth_cap.unwrap_or(max_birth);
        let death_cap = death_cap.unwrap_or(max_death);
        if !birth_cap.is_finite() || birth_cap < max_birth {
            return Err(Error::InvalidModel(format!(
                "global birth cap L = {birth_cap} is below max birth_hi = {max_birth}"
            )));
        }
        if !death_cap.is_finite() || death_cap < max_death {
            return Err(Error::InvalidModel(format!(
                "global death cap M = {death_cap} is below max death_hi = {max_death}"
            )));
        }
        Ok(ModelSpec {
            types,
            birth_cap,
            death_cap,
        })
    }

    pub fn dimension(&self) -> usize {
        self.types.len()
    }

    pub fn types(&self) -> &[TypeRates] {
        &self.types
    }

    pub fn bounds(&self, j: usize) -> Result<&RateBounds> {
        self.types.get(j).map(|t| &t.bounds).ok_or(Error::TypeOutOfRange {
            index: j,
            dimension: self.dimension(),
        })
    }

    /// Global birth cap `L`.
    pub fn birth_cap(&self) -> f64 {
        self.birth_cap
    }

    /// Global death cap `M`.
    pub fn death_cap(&self) -> f64 {
        self.death_cap
    }

    /// `2d(L + M)`, the l1 operator-norm bound on the generator.
    pub fn norm_bound(&self) -> f64 {
        2.0 * self.dimension() as f64 * (self.birth_cap + self.death_cap)
    }

    /// `d(L + M)`, the total jump intensity bound used by thinning.
    pub fn dominating_rate(&self) -> f64 {
        self.dimension() as f64 * (self.birth_cap + self.death_cap)
    }

    pub fn is_time_independent(&self) -> bool {
        self.types
            .iter()
            .all(|t| t.birth.is_time_independent() && t.death.is_time_independent())
    }

    /// `(λ_{j,m}(t), μ_{j,m}(t))`, checked against the declared bounds.
    pub fn eval_rates(&self, j: usize, m: &[usize], t: f64) -> Result<(f64, f64)> {
        let ty = self.types.get(j).ok_or(Error::TypeOutOfRange {
            index: j,
            dimension: self.dimension(),
        })?;
        if m.len() != self.dimension() {
            return Err(Error::InvalidInput(format!(
                "state {m:?} has {} coordinates, model has {}",
                m.len(),
                self.dimension()
            )));
        }
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidInput(format!("time {t} must be finite and non-negative")));
        }

        let birth = ty.birth.evaluate(m, t);
        if !birth.is_finite() || birth < 0.0 {
            return Err(Error::InvalidRate {
                kind: "birth",
                type_index: j + 1,
                state: m.to_vec(),
                time: t,
                value: birth,
            });
        }
        if !ty.bounds.contains_birth(birth) {
            return Err(Error::BoundViolation {
                kind: "birth",
                type_index: j + 1,
                state: m.to_vec(),
                time: t,
                value: birth,
                lo: ty.bounds.birth_lo,
                hi: ty.bounds.birth_hi,
            });
        }

        if m[j] == 0 {
            return Ok((birth, 0.0));
        }
        let death = ty.death.evaluate(m, t);
        if !death.is_finite() || death < 0.0 {
            return Err(Error::InvalidRate {
                kind: "death",
                type_index: j + 1,
                state: m.to_vec(),
                time: t,
                value: death,
            });
        }
        if !ty.bounds.contains_death(death) {
            return Err(Error::BoundViolation {
                kind: "death",
                type_index: j + 1,
                state: m.to_vec(),
                time: t,
                value: death,
                lo: ty.bounds.death_lo,
                hi: ty.bounds.death_hi,
            });
        }
        Ok((birth, death))
    }

    /// Evaluates every rule on every state of `space` at each of `times`.
    pub fn check_admissible(&self, space: &TruncatedSpace, times: &[f64]) -> Result<()> {
        if space.dimension() != self.dimension() {
            return Err(Error::InvalidInput(format!(
                "space has dimension {}, model has {}",
                space.dimension(),
                self.dimension()
            )));
        }
        for &t in times {
            for m in space.states() {
                for j in 0..self.dimension() {
                    self.eval_rates(j, m, t)?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn const_model(d: usize, lambda: f64, mu: f64) -> ModelSpec {
        let b = RateBounds::new(lambda, lambda, mu, mu).unwrap();
        let types = (0..d)
            .map(|_| TypeRates::new(RateRule::constant(lambda), RateRule::constant(mu), b))
            .collect();
        ModelSpec::new(types, None, None).unwrap()
    }

    #[test]
    fn graded_order_two_by_two() {
        let s = build_space(&[1, 1]).unwrap();
        assert_eq!(s.size(), 4);
        let order: Vec<Vec<usize>> = s.states().map(|m| m.to_vec()).collect();
        assert_eq!(order, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert_eq!(s.index_of(&[1, 0]).unwrap(), 2);
    }

    #[test]
    fn one_dimensional_identity() {
        let s = build_space(&[2]).unwrap();
        assert_eq!(s.size(), 3);
        for i in 0..3 {
            assert_eq!(s.state(i), &[i]);
        }
        assert_eq!(s.state_of(2).unwrap().coords(), &[2]);
    }

    #[test]
    fn invalid_caps() {
        assert!(matches!(build_space(&[0]), Err(Error::InvalidCaps(_))));
        assert!(matches!(build_space(&[]), Err(Error::InvalidCaps(_))));
        assert!(matches!(
            build_space_with_limit(&[10, 10], 100),
            Err(Error::InvalidCaps(_))
        ));
        assert!(matches!(build_space(&[usize::MAX, 2]), Err(Error::InvalidCaps(_))));
    }

    #[test]
    fn out_of_box_and_range() {
        let s = build_space(&[1, 1]).unwrap();
        assert!(matches!(s.index_of(&[3, 0]), Err(Error::OutOfBox { .. })));
        assert!(matches!(s.index_of(&[0]), Err(Error::OutOfBox { .. })));
        assert!(matches!(s.state_of(4), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn graded_order_three_dims() {
        let s = build_space(&[2, 1, 3]).unwrap();
        let all: Vec<Vec<usize>> = s.states().map(|m| m.to_vec()).collect();
        let mut sorted = all.clone();
        sorted.sort_by_key(|m| (m.iter().sum::<usize>(), m.clone()));
        assert_eq!(all, sorted);
    }

    #[test]
    fn neighbours() {
        let s = build_space(&[2, 3]).unwrap();
        let i = s.index_of(&[1, 3]).unwrap();
        assert_eq!(s.up(i, 0), Some(s.index_of(&[2, 3]).unwrap()));
        assert_eq!(s.up(i, 1), None);
        assert_eq!(s.down(i, 1), Some(s.index_of(&[1, 2]).unwrap()));
        assert!(s.is_boundary(i));
        assert!(!s.is_boundary(s.index_of(&[1, 1]).unwrap()));
        let z = s.index_of(&[0, 0]).unwrap();
        assert_eq!(s.down(z, 0), None);
    }

    #[test]
    fn multi_index_helpers() {
        let m = MultiIndex::new(vec![2, 0]).unwrap();
        assert_eq!(m.total(), 2);
        assert_eq!(m.incremented(1).coords(), &[2, 1]);
        assert_eq!(m.decremented(1), None);
        assert_eq!(m.decremented(0).unwrap().coords(), &[1, 0]);
        assert_eq!(m.to_string(), "(2,0)");
        assert!(MultiIndex::new(vec![]).is_err());
    }

    #[test]
    fn constant_rule_and_empty_class() {
        let model = const_model(2, 2.0, 1.5);
        assert_eq!(model.eval_rates(0, &[3, 1], 7.0).unwrap(), (2.0, 1.5));
        assert_eq!(model.eval_rates(1, &[3, 0], 7.0).unwrap(), (2.0, 0.0));
        assert!(matches!(
            model.eval_rates(2, &[0, 0], 0.0),
            Err(Error::TypeOutOfRange { .. })
        ));
        assert!(model.eval_rates(0, &[0, 0], -1.0).is_err());
    }

    #[test]
    fn periodic_bound_violation_reported() {
        let birth = RateRule::Periodic {
            base: 3.0,
            amplitude: 1.0,
            period: 1.0,
            phase: 0.0,
        };
        let bounds = RateBounds::new(2.0, 3.5, 0.0, 1.0).unwrap();
        let model = ModelSpec::new(vec![TypeRates::new(birth, RateRule::constant(1.0), bounds)], None, None).unwrap();
        match model.eval_rates(0, &[0], 0.25) {
            Err(Error::BoundViolation { kind, value, time, .. }) => {
                assert_eq!(kind, "birth");
                assert!((value - 4.0).abs() < 1e-12);
                assert_eq!(time, 0.25);
            }
            other => panic!("expected bound violation, got {other:?}"),
        }
        assert!(model.eval_rates(0, &[0], 0.0).is_ok());
    }

    #[test]
    fn negative_rule_value_is_an_error() {
        let death = RateRule::StateAffine {
            intercept: 1.0,
            coeffs: vec![-1.0],
            modulation: None,
        };
        let bounds = RateBounds::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let model = ModelSpec::new(vec![TypeRates::new(RateRule::constant(0.5), death, bounds)], None, None).unwrap();
        assert!(matches!(model.eval_rates(0, &[3], 0.0), Err(Error::InvalidRate { .. })));
    }

    #[test]
    fn rule_kinds_evaluate() {
        let capped = RateRule::StateAffineCapped {
            intercept: 0.5,
            coeffs: vec![1.0, 0.25],
            cap: 2.0,
            modulation: None,
        };
        assert_eq!(capped.evaluate(&[1, 2], 0.0), 2.0);
        assert_eq!(capped.evaluate(&[0, 2], 0.0), 1.0);
        let table = RateRule::Table {
            times: vec![0.0, 1.0],
            values: vec![1.0, 3.0],
            period: None,
        };
        assert_eq!(table.evaluate(&[0], 0.5), 2.0);
        assert_eq!(table.evaluate(&[0], 5.0), 3.0);
        let wrapped = RateRule::Table {
            times: vec![0.0, 1.0],
            values: vec![1.0, 3.0],
            period: Some(2.0),
        };
        assert_eq!(wrapped.evaluate(&[0], 2.5), 2.0);
        let modulated = RateRule::StateAffine {
            intercept: 2.0,
            coeffs: vec![0.0],
            modulation: Some(Modulation {
                amplitude: 0.5,
                period: 1.0,
                phase: 0.0,
            }),
        };
        assert!((modulated.evaluate(&[4], 0.25) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn envelope_contains_samples() {
        let caps = [3, 4];
        let rules = [
            RateRule::Periodic {
                base: 2.0,
                amplitude: -0.5,
                period: 0.7,
                phase: 0.3,
            },
            RateRule::StateAffine {
                intercept: 1.0,
                coeffs: vec![0.5, -0.1],
                modulation: Some(Modulation {
                    amplitude: 0.2,
                    period: 2.0,
                    phase: 0.0,
                }),
            },
            RateRule::StateAffineCapped {
                intercept: 0.2,
                coeffs: vec![0.3, 0.4],
                cap: 1.5,
                modulation: None,
            },
            RateRule::Table {
                times: vec![0.0, 1.0, 2.0],
                values: vec![0.5, 2.0, 1.0],
                period: Some(3.0),
            },
        ];
        let space = build_space(&caps).unwrap();
        for rule in &rules {
            let (lo, hi) = rule.envelope(&caps, Some(0));
            for m in space.states().filter(|m| m[0] >= 1) {
                for k in 0..50 {
                    let v = rule.evaluate(m, k as f64 * 0.173);
                    assert!(v >= lo - 1e-12 && v <= hi + 1e-12, "{rule:?} {m:?} {v} [{lo},{hi}]");
                }
            }
        }
    }

    #[test]
    fn model_validation() {
        let b = RateBounds::new(1.0, 2.0, 0.0, 1.0).unwrap();
        let t = TypeRates::new(RateRule::constant(1.0), RateRule::constant(1.0), b);
        assert!(ModelSpec::new(vec![t.clone()], Some(1.0), None).is_err());
        assert!(ModelSpec::new(vec![], None, None).is_err());
        let bad = TypeRates::new(
            RateRule::StateAffine {
                intercept: 1.0,
                coeffs: vec![1.0, 1.0],
                modulation: None,
            },
            RateRule::constant(1.0),
            b,
        );
        assert!(ModelSpec::new(vec![bad], None, None).is_err());
        assert!(RateBounds::new(2.0, 1.0, 0.0, 0.0).is_err());
        assert!(RateBounds::new(0.0, 1.0, -1.0, 0.0).is_err());
        let m = ModelSpec::new(vec![t], Some(3.0), Some(2.0)).unwrap();
        assert_eq!(m.norm_bound(), 10.0);
        assert_eq!(m.dominating_rate(), 5.0);
    }

    #[test]
    fn rule_config_round_trip() {
        let src = r#"kind = "state-affine-capped"
intercept = 0.5
coeffs = [1.0, 0.25]
cap = 2.0
"#;
        let rule: RateRule = toml::from_str(src).unwrap();
        assert_eq!(rule.kind(), "state-affine-capped");
        let back: RateRule = toml::from_str(&toml::to_string(&rule).unwrap()).unwrap();
        assert_eq!(rule, back);
    }
}
