//! Forward Kolmogorov system `dp/dt = A(t) p` on a truncated space.
//!
//! `A(t)` is the transposed intensity matrix: column `i` holds the outflow of
//! state `i`. Births out of a state whose coordinate sits at its cap are
//! suppressed, so every column sums to zero.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, MultiIndex, TruncatedSpace};

/// Internal steps never exceed `STEP_FRACTION / (2d(L+M))`.
pub const STEP_FRACTION: f64 = 0.1;
pub const MIN_STEP: f64 = 1e-10;
/// Largest pre-renormalization deviation of `Σ p_i` from 1.
pub const DRIFT_LIMIT: f64 = 1e-6;

const NEGATIVE_TOL: f64 = 1e-12;
const SUM_TOL: f64 = 1e-8;

/// Sparse transposed intensity matrix assembled at one time.
///
/// Off-diagonal entries are stored by column; the diagonal separately.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorMatrix {
    diag: Vec<f64>,
    col_start: Vec<usize>,
    rows: Vec<usize>,
    vals: Vec<f64>,
    time: f64,
}

pub fn assemble_generator(model: &ModelSpec, space: &TruncatedSpace, t: f64) -> Result<GeneratorMatrix> {
    let mut a = GeneratorMatrix::empty();
    a.reassemble(model, space, t)?;
    Ok(a)
}

impl GeneratorMatrix {
    fn empty() -> Self {
        GeneratorMatrix {
            diag: Vec::new(),
            col_start: vec![0],
            rows: Vec::new(),
            vals: Vec::new(),
            time: 0.0,
        }
    }

    /// Rebuilds in place at time `t`, reusing the buffers.
    pub fn reassemble(&mut self, model: &ModelSpec, space: &TruncatedSpace, t: f64) -> Result<()> {
        if !(t >= 0.0) {
            return Err(Error::InvalidInput(format!("assembly time {t} must be non-negative")));
        }
        if space.dimension() != model.dimension() {
            return Err(Error::InvalidInput(format!(
                "space has dimension {}, model has {}",
                space.dimension(),
                model.dimension()
            )));
        }
        let n = space.size();
        self.diag.clear();
        self.col_start.clear();
        self.rows.clear();
        self.vals.clear();
        self.col_start.push(0);
        self.time = t;

        for i in 0..n {
            let m = space.state(i);
            let mut out = 0.0;
            for l in 0..model.dimension() {
                let (birth, death) = model.eval_rates(l, m, t)?;
                if let Some(target) = space.up(i, l) {
                    if birth > 0.0 {
                        self.rows.push(target);
                        self.vals.push(birth);
                        out += birth;
                    }
                }
                if let Some(target) = space.down(i, l) {
                    if death > 0.0 {
                        self.rows.push(target);
                        self.vals.push(death);
                        out += death;
                    }
                }
            }
            self.diag.push(-out);
            self.col_start.push(self.rows.len());
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Off-diagonal `(row, value)` pairs of column `col`.
    pub fn column(&self, col: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_start[col]..self.col_start[col + 1];
        self.rows[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        if row == col {
            return self.diag[row];
        }
        self.column(col).filter(|&(r, _)| r == row).map(|(_, v)| v).sum()
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (yi, (d, xi)) in y.iter_mut().zip(self.diag.iter().zip(x)) {
            *yi = d * xi;
        }
        for (col, &xc) in x.iter().enumerate() {
            if xc == 0.0 {
                continue;
            }
            for (row, v) in self.column(col) {
                y[row] += v * xc;
            }
        }
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.size())
            .map(|c| self.diag[c] + self.column(c).map(|(_, v)| v).sum::<f64>())
            .collect()
    }

    /// `max_i (a_ii + Σ_{j≠i} |a_ji|)`, the l1 logarithmic norm.
    pub fn log_norm(&self) -> f64 {
        (0..self.size())
            .map(|c| self.diag[c] + self.column(c).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Induced l1 norm (max absolute column sum).
    pub fn norm_l1(&self) -> f64 {
        (0..self.size())
            .map(|c| self.diag[c].abs() + self.column(c).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn off_diagonal_count(&self, col: usize) -> usize {
        self.col_start[col + 1] - self.col_start[col]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        let mut m = DMatrix::zeros(n, n);
        for c in 0..n {
            m[(c, c)] = self.diag[c];
            for (r, v) in self.column(c) {
                m[(r, c)] += v;
            }
        }
        m
    }
}

/// State probabilities `p(t)` over an enumerated truncated space.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVector {
    values: Vec<f64>,
    time: f64,
}

impl ProbabilityVector {
    pub fn new(values: Vec<f64>, time: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("probability vector is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < -NEGATIVE_TOL) {
            return Err(Error::InvalidInput(format!(
                "probability entry {v} is negative or not finite"
            )));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidInput(format!("probabilities sum to {sum}, not 1")));
        }
        if !time.is_finite() {
            return Err(Error::InvalidInput(format!("time {time} is not finite")));
        }
        Ok(ProbabilityVector { values, time })
    }

    pub fn point_mass(space: &TruncatedSpace, m: &MultiIndex, time: f64) -> Result<Self> {
        let mut values = vec![0.0; space.size()];
        values[space.index_of(m.coords())?] = 1.0;
        Self::new(values, time)
    }

    pub fn uniform(space: &TruncatedSpace, time: f64) -> Self {
        let n = space.size();
        ProbabilityVector {
            values: vec![1.0 / n as f64; n],
            time,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Snapshots of `p(t)` on a time grid plus the boundary-mass diagnostic.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub grid: Vec<f64>,
    pub snapshots: Vec<ProbabilityVector>,
    pub tail_mass: Vec<f64>,
    /// Smallest entry seen before clipping over all internal steps.
    pub min_preclip: f64,
    /// Total number of internal steps taken.
    pub steps: usize,
}

impl Trajectory {
    /// Index of the first grid point whose tail mass reaches `threshold`, or
    /// the grid length when none does.
    pub fn window_end(&self, threshold: f64) -> usize {
        self.tail_mass
            .iter()
            .position(|&m| m >= threshold)
            .unwrap_or(self.grid.len())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IntegrateOptions {
    /// Caps the internal step below the default `0.1 / (2d(L+M))`.
    pub max_step: Option<f64>,
    /// Abort with [`Error::TailMassExceeded`] when the tail mass at a grid
    /// point exceeds this value.
    pub tail_abort: Option<f64>,
}

/// Scratch buffers for one classical fourth-order Runge-Kutta step.
#[derive(Debug, Default)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
}

impl Rk4 {
    pub fn new(n: usize) -> Self {
        Rk4 {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            stage: vec![0.0; n],
        }
    }

    /// Advances `y` from `t` to `t + h` in place.
    pub fn step<F>(&mut self, rhs: &mut F, t: f64, y: &mut [f64], h: f64) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        let n = y.len();
        if self.k1.len() != n {
            *self = Rk4::new(n);
        }
        rhs(t, y, &mut self.k1)?;
        for i in 0..n {
            self.stage[i] = y[i] + 0.5 * h * self.k1[i];
        }
        rhs(t + 0.5 * h, &self.stage, &mut self.k2)?;
        for i in 0..n {
            self.stage[i] = y[i] + 0.5 * h * self.k2[i];
        }
        rhs(t + 0.5 * h, &self.stage, &mut self.k3)?;
        for i in 0..n {
            self.stage[i] = y[i] + h * self.k3[i];
        }
        rhs(t + h, &self.stage, &mut self.k4)?;
        for i in 0..n {
            y[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

/// Largest internal step for a model; `None` when the model has no rates.
pub fn max_step(model: &ModelSpec, opts: &IntegrateOptions) -> Result<Option<f64>> {
    let bound = model.norm_bound();
    let mut h = (bound > 0.0).then(|| STEP_FRACTION / bound);
    if let Some(cap) = opts.max_step {
        if !(cap > 0.0) {
            return Err(Error::InvalidInput(format!("max step {cap} must be positive")));
        }
        h = Some(h.map_or(cap, |h| h.min(cap)));
    }
    if let Some(h) = h {
        if h < MIN_STEP {
            return Err(Error::StepUnderflow { step: h });
        }
    }
    Ok(h)
}

/// Number of equal sub-steps covering `dt` with steps no larger than `h`.
pub(crate) fn substeps(dt: f64, h: Option<f64>) -> usize {
    match h {
        Some(h) => ((dt / h).ceil() as usize).max(1),
        None => 1,
    }
}

pub(crate) fn check_grid(grid: &[f64], start: f64) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("time grid is empty".into()));
    }
    if grid[0] != start {
        return Err(Error::InvalidInput(format!(
            "grid starts at {} but the initial condition is at t = {start}",
            grid[0]
        )));
    }
    if grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "time grid must be finite and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Clips negatives and rescales to unit sum; returns the pre-clip minimum.
pub(crate) fn renormalize(p: &mut [f64], time: f64) -> Result<f64> {
    let sum: f64 = p.iter().sum();
    let drift = (sum - 1.0).abs();
    if !(drift <= DRIFT_LIMIT) {
        return Err(Error::NormalizationDrift {
            drift,
            time,
            limit: DRIFT_LIMIT,
        });
    }
    let min = p.iter().copied().fold(f64::INFINITY, f64::min);
    for v in p.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let s: f64 = p.iter().sum();
    for v in p.iter_mut() {
        *v /= s;
    }
    Ok(min)
}

/// Integrates the forward system from `p0` and records `p` on `grid`.
pub fn integrate(
    model: &ModelSpec,
    space: &TruncatedSpace,
    p0: &ProbabilityVector,
    grid: &[f64],
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    if p0.len() != space.size() {
        return Err(Error::InvalidInput(format!(
            "initial vector has {} entries, space has {}",
            p0.len(),
            space.size()
        )));
    }
    check_grid(grid, p0.time())?;
    let h_max = max_step(model, opts)?;

    let mut a = GeneratorMatrix::empty();
    let mut rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        a.reassemble(model, space, t)?;
        a.apply(y, dy);
        Ok(())
    };

    let mut p = p0.values().to_vec();
    let mut rk = Rk4::new(p.len());
    let mut snapshots = vec![p0.clone()];
    let mut tail = vec![tail_mass(p0, space)];
    let mut min_preclip = p.iter().copied().fold(f64::INFINITY, f64::min);
    let mut total_steps = 0;
    check_tail(tail[0], grid[0], opts)?;

    for w in grid.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let n = substeps(t1 - t0, h_max);
        let h = (t1 - t0) / n as f64;
        for s in 0..n {
            let t = t0 + s as f64 * h;
            rk.step(&mut rhs, t, &mut p, h)?;
            min_preclip = min_preclip.min(renormalize(&mut p, t + h)?);
        }
        total_steps += n;
        let snap = ProbabilityVector {
            values: p.clone(),
            time: t1,
        };
        let m = tail_mass(&snap, space);
        check_tail(m, t1, opts)?;
        tail.push(m);
        snapshots.push(snap);
    }

    Ok(Trajectory {
        grid: grid.to_vec(),
        snapshots,
        tail_mass: tail,
        min_preclip,
        steps: total_steps,
    })
}

fn check_tail(mass: f64, time: f64, opts: &IntegrateOptions) -> Result<()> {
    match opts.tail_abort {
        Some(threshold) if mass > threshold => Err(Error::TailMassExceeded { mass, time, threshold }),
        _ => Ok(()),
    }
}

/// `Σ |v_i|`.
pub fn l1_norm(v: &[f64]) -> Result<f64> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("l1 norm of a non-finite vector".into()));
    }
    Ok(v.iter().map(|x| x.abs()).sum())
}

/// `Σ w_i |v_i|` with strictly positive weights.
pub fn weighted_l1_norm(v: &[f64], weights: &[f64]) -> Result<f64> {
    if v.len() != weights.len() {
        return Err(Error::InvalidInput(format!(
            "vector has {} entries but {} weights",
            v.len(),
            weights.len()
        )));
    }
    if v.iter().chain(weights).any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("weighted l1 norm of non-finite input".into()));
    }
    if weights.iter().any(|&w| w <= 0.0) {
        return Err(Error::InvalidInput("weights must be positive".into()));
    }
    Ok(v.iter().zip(weights).map(|(x, w)| w * x.abs()).sum())
}

/// Probability of the states with some coordinate at its cap.
pub fn tail_mass(p: &ProbabilityVector, space: &TruncatedSpace) -> f64 {
    p.values()
        .iter()
        .enumerate()
        .filter(|&(i, _)| space.is_boundary(i))
        .map(|(_, v)| v)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_space, RateBounds, RateRule, TypeRates};

    fn const_model(rates: &[(f64, f64)]) -> ModelSpec {
        let types = rates
            .iter()
            .map(|&(l, m)| {
                TypeRates::new(
                    RateRule::constant(l),
                    RateRule::constant(m),
                    RateBounds::new(l, l, m, m).unwrap(),
                )
            })
            .collect();
        ModelSpec::new(types, None, None).unwrap()
    }

    #[test]
    fn one_dimensional_generator_transcription() {
        let model = const_model(&[(1.0, 2.0)]);
        let space = build_space(&[2]).unwrap();
        let a = assemble_generator(&model, &space, 0.0).unwrap().to_dense();
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(3, 3, &[
            -1.0,  2.0,  0.0,
             1.0, -3.0,  2.0,
             0.0,  1.0, -2.0,
        ]);
        assert_eq!(a, expected);
    }

    #[test]
    fn two_by_two_generator_by_hand() {
        // States (0,0),(0,1),(1,0),(1,1); every rate 1.
        let model = const_model(&[(1.0, 1.0), (1.0, 1.0)]);
        let space = build_space(&[1, 1]).unwrap();
        let a = assemble_generator(&model, &space, 0.0).unwrap();
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(4, 4, &[
            -2.0,  1.0,  1.0,  0.0,
             1.0, -2.0,  0.0,  1.0,
             1.0,  0.0, -2.0,  1.0,
             0.0,  1.0,  1.0, -2.0,
        ]);
        assert_eq!(a.to_dense(), expected);
        assert_eq!(a.off_diagonal_count(0), 2);
        assert_eq!(a.off_diagonal_count(3), 2);
        assert!(a.column_sums().iter().all(|s| s.abs() <= 1e-12));
        assert!(a.log_norm().abs() <= 1e-12);
        assert_eq!(a.norm_l1(), 4.0);
    }

    #[test]
    fn two_state_closed_form() {
        let model = const_model(&[(1.0, 1.0)]);
        let space = build_space(&[1]).unwrap();
        let p0 = ProbabilityVector::new(vec![1.0, 0.0], 0.0).unwrap();
        let traj = integrate(&model, &space, &p0, &[0.0, 1.0], &IntegrateOptions::default()).unwrap();
        let exact = (1.0 + (-2.0f64).exp()) / 2.0;
        assert!((traj.snapshots[1].values()[0] - exact).abs() < 1e-6);
        assert!((exact - 0.56767).abs() < 1e-5);
    }

    #[test]
    fn zero_rates_keep_p0() {
        let model = const_model(&[(0.0, 0.0), (0.0, 0.0)]);
        let space = build_space(&[2, 2]).unwrap();
        let p0 = ProbabilityVector::uniform(&space, 0.0);
        let traj = integrate(&model, &space, &p0, &[0.0, 0.5, 3.0], &IntegrateOptions::default()).unwrap();
        for s in &traj.snapshots {
            for (a, b) in s.values().iter().zip(p0.values()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_point_grid() {
        let model = const_model(&[(1.0, 1.0)]);
        let space = build_space(&[3]).unwrap();
        let p0 = ProbabilityVector::point_mass(&space, &MultiIndex::zeros(1), 0.0).unwrap();
        let traj = integrate(&model, &space, &p0, &[0.0], &IntegrateOptions::default()).unwrap();
        assert_eq!(traj.snapshots, vec![p0]);
    }

    #[test]
    fn grid_validation() {
        let model = const_model(&[(1.0, 1.0)]);
        let space = build_space(&[3]).unwrap();
        let p0 = ProbabilityVector::uniform(&space, 0.0);
        let o = IntegrateOptions::default();
        assert!(integrate(&model, &space, &p0, &[], &o).is_err());
        assert!(integrate(&model, &space, &p0, &[0.5, 1.0], &o).is_err());
        assert!(integrate(&model, &space, &p0, &[0.0, 1.0, 1.0], &o).is_err());
    }

    #[test]
    fn tail_abort_and_underflow() {
        let model = const_model(&[(5.0, 0.1)]);
        let space = build_space(&[3]).unwrap();
        let p0 = ProbabilityVector::point_mass(&space, &MultiIndex::zeros(1), 0.0).unwrap();
        let opts = IntegrateOptions {
            tail_abort: Some(1e-3),
            ..Default::default()
        };
        assert!(matches!(
            integrate(&model, &space, &p0, &[0.0, 1.0, 2.0], &opts),
            Err(Error::TailMassExceeded { .. })
        ));
        let opts = IntegrateOptions {
            max_step: Some(1e-13),
            ..Default::default()
        };
        assert!(matches!(
            integrate(&model, &space, &p0, &[0.0, 1.0], &opts),
            Err(Error::StepUnderflow { .. })
        ));
    }

    #[test]
    fn renormalize_rejects_large_drift() {
        let mut p = vec![0.5, 0.5 + 2e-6];
        assert!(matches!(
            renormalize(&mut p, 0.0),
            Err(Error::NormalizationDrift { .. })
        ));
        let mut p = vec![-1e-10, 1.0 + 1e-10];
        let min = renormalize(&mut p, 0.0).unwrap();
        assert_eq!(min, -1e-10);
        assert_eq!(p[0], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn norms() {
        assert!((l1_norm(&[0.2, -0.3, 0.5]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(weighted_l1_norm(&[1.0, 1.0, 1.0], &[1.0, 0.5, 0.25]).unwrap(), 1.75);
        assert!(l1_norm(&[f64::NAN]).is_err());
        assert!(weighted_l1_norm(&[1.0], &[0.0]).is_err());
        assert!(weighted_l1_norm(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn tail_mass_examples() {
        let space = build_space(&[2, 3]).unwrap();
        let origin = ProbabilityVector::point_mass(&space, &MultiIndex::zeros(2), 0.0).unwrap();
        assert_eq!(tail_mass(&origin, &space), 0.0);
        let corner = MultiIndex::new(vec![2, 3]).unwrap();
        let far = ProbabilityVector::point_mass(&space, &corner, 0.0).unwrap();
        assert_eq!(tail_mass(&far, &space), 1.0);
        let one = build_space(&[1]).unwrap();
        assert_eq!(tail_mass(&ProbabilityVector::uniform(&one, 0.0), &one), 0.5);
    }

    #[test]
    fn probability_vector_validation() {
        assert!(ProbabilityVector::new(vec![0.5, 0.6], 0.0).is_err());
        assert!(ProbabilityVector::new(vec![-0.1, 1.1], 0.0).is_err());
        assert!(ProbabilityVector::new(vec![], 0.0).is_err());
        assert!(ProbabilityVector::new(vec![1.0], f64::NAN).is_err());
    }
}
