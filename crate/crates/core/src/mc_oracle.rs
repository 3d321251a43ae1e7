//! Monte Carlo cross-check of the forward system by thinning.
//!
//! Candidate event times come from a homogeneous Poisson clock of rate
//! `d(L+M)`. At each candidate the interval `[0, d(L+M))` is split into the
//! `2d` channels (birth and death of each type, widths equal to the current
//! rates) followed by a rejection gap; a uniform draw picks the channel.
//! Births of a type at its cap are rejected, matching the reflecting
//! truncation of the generator.
//!
//! Randomness: path `p` of a run with seed `s` draws from `ChaCha8Rng` seeded
//! with `s` (via `seed_from_u64`) on stream `p`. ChaCha is a counter-based
//! generator, so the paths are independent streams and the output does not
//! depend on how paths are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, MultiIndex, TruncatedSpace};
use crate::projection::Coordinate;

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub initial: MultiIndex,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub sample_times: Vec<f64>,
}

impl SimConfig {
    fn validate(&self, space: &TruncatedSpace) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidInput("n_paths must be at least 1".into()));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidInput(format!(
                "horizon {} must be positive",
                self.horizon
            )));
        }
        if self.sample_times.iter().any(|&t| !(0.0..=self.horizon).contains(&t)) {
            return Err(Error::InvalidInput("sample times must lie in [0, horizon]".into()));
        }
        if self.sample_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("sample times must be strictly increasing".into()));
        }
        space.index_of(self.initial.coords())?;
        Ok(())
    }
}

/// Path-averaged distribution of one coordinate at one sample time.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMarginal {
    pub time: f64,
    pub coordinate: Coordinate,
    pub estimate: Vec<f64>,
    /// Binomial standard error `√(p(1-p)/n)` per level.
    pub stderr: Vec<f64>,
}

impl EmpiricalMarginal {
    pub fn max_stderr(&self) -> f64 {
        self.stderr.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput {
    pub n_paths: usize,
    pub seed: u64,
    /// Ordered by sample time, then types `1..=d`, then `Total`.
    pub marginals: Vec<EmpiricalMarginal>,
}

impl SimOutput {
    pub fn get(&self, time: f64, coordinate: Coordinate) -> Option<&EmpiricalMarginal> {
        self.marginals
            .iter()
            .find(|m| m.time == time && m.coordinate == coordinate)
    }
}

/// Random stream of path `path` in a run seeded with `seed`.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

fn coordinates(d: usize) -> Vec<Coordinate> {
    (0..d)
        .map(Coordinate::Type)
        .chain(std::iter::once(Coordinate::Total))
        .collect()
}

/// Per-(time, coordinate, level) hit counts, laid out flat.
struct Layout {
    offsets: Vec<usize>,
    per_time: usize,
}

impl Layout {
    fn new(space: &TruncatedSpace) -> Self {
        let mut offsets = Vec::new();
        let mut acc = 0;
        for c in coordinates(space.dimension()) {
            offsets.push(acc);
            acc += c.max_level(space) + 1;
        }
        Layout { offsets, per_time: acc }
    }

    fn record(&self, counts: &mut [u64], time_index: usize, m: &[usize]) {
        let base = time_index * self.per_time;
        for (j, &x) in m.iter().enumerate() {
            counts[base + self.offsets[j] + x] += 1;
        }
        counts[base + self.offsets[m.len()] + m.iter().sum::<usize>()] += 1;
    }
}

pub fn simulate_paths(model: &ModelSpec, space: &TruncatedSpace, cfg: &SimConfig) -> Result<SimOutput> {
    if space.dimension() != model.dimension() {
        return Err(Error::InvalidInput("space and model dimensions differ".into()));
    }
    cfg.validate(space)?;
    let rate = model.dominating_rate();
    if rate == 0.0 {
        for j in 0..model.dimension() {
            let (b, d) = model.eval_rates(j, cfg.initial.coords(), 0.0)?;
            if b != 0.0 || d != 0.0 {
                return Err(Error::InvalidModel("dominating rate is zero but rules are not".into()));
            }
        }
    }

    let layout = Layout::new(space);
    let size = layout.per_time * cfg.sample_times.len();
    let counts = (0..cfg.n_paths as u64)
        .into_par_iter()
        .try_fold(
            || vec![0u64; size],
            |mut acc, path| {
                run_path(model, space, cfg, rate, path, &layout, &mut acc)?;
                Ok::<_, Error>(acc)
            },
        )
        .try_reduce(
            || vec![0u64; size],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;

    let n = cfg.n_paths as f64;
    let coords = coordinates(space.dimension());
    let mut marginals = Vec::with_capacity(cfg.sample_times.len() * coords.len());
    for (ti, &time) in cfg.sample_times.iter().enumerate() {
        for (ci, &coordinate) in coords.iter().enumerate() {
            let start = ti * layout.per_time + layout.offsets[ci];
            let len = coordinate.max_level(space) + 1;
            let estimate: Vec<f64> = counts[start..start + len].iter().map(|&c| c as f64 / n).collect();
            let stderr = estimate.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect();
            marginals.push(EmpiricalMarginal {
                time,
                coordinate,
                estimate,
                stderr,
            });
        }
    }
    Ok(SimOutput {
        n_paths: cfg.n_paths,
        seed: cfg.seed,
        marginals,
    })
}

fn run_path(
    model: &ModelSpec,
    space: &TruncatedSpace,
    cfg: &SimConfig,
    rate: f64,
    path: u64,
    layout: &Layout,
    counts: &mut [u64],
) -> Result<()> {
    let mut rng = path_rng(cfg.seed, path);
    let caps = space.caps();
    let mut m = cfg.initial.coords().to_vec();
    let mut t = 0.0;
    let mut next_sample = 0;
    let samples = &cfg.sample_times;

    loop {
        let dt = if rate > 0.0 {
            // 1 - u lies in (0, 1], so the logarithm is finite.
            let u: f64 = rng.random();
            -(1.0 - u).ln() / rate
        } else {
            f64::INFINITY
        };
        let t_next = t + dt;
        while next_sample < samples.len() && samples[next_sample] < t_next {
            layout.record(counts, next_sample, &m);
            next_sample += 1;
        }
        // Sample times never exceed the horizon, so this also stops at it.
        if next_sample == samples.len() {
            return Ok(());
        }
        t = t_next;

        let mut u = rng.random::<f64>() * rate;
        for j in 0..m.len() {
            let (birth, death) = model.eval_rates(j, &m, t)?;
            if u < birth {
                if m[j] < caps[j] {
                    m[j] += 1;
                }
                break;
            }
            u -= birth;
            if u < death {
                m[j] -= 1;
                break;
            }
            u -= death;
        }
    }
}
