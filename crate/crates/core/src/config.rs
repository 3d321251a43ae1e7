//! TOML model files.
//!
//! ```toml
//! dimension = 2
//! caps = [40, 3]
//! initial = [0, 0]        # optional, defaults to the empty state
//! horizon = 10.0          # optional run settings, defaults shown
//! grid_step = 0.01
//! tail_threshold = 1e-3
//! slack = 1e-6
//! seed = 0
//! paths = 100000
//! sample_times = [0.5, 1.0, 2.0]
//! birth_cap = 5.0         # optional global L, defaults to max birth_hi
//! death_cap = 1.0         # optional global M, defaults to max death_hi
//!
//! [[types]]
//! birth = { kind = "periodic", base = 4.5, amplitude = 0.5, period = 1.0 }
//! death = { kind = "constant", value = 1.0 }
//! bounds = { birth_lo = 4.0, birth_hi = 5.0, death_lo = 0.0, death_hi = 1.0 }
//! ```
//!
//! One `[[types]]` table per particle type, in type order. Rule kinds are
//! `constant`, `periodic`, `state-affine`, `state-affine-capped` and `table`;
//! see [`RateRule`] for their parameters.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{build_space, ModelSpec, MultiIndex, RateRule, TruncatedSpace, TypeRates};

pub const DEFAULT_HORIZON: f64 = 10.0;
pub const DEFAULT_GRID_STEP: f64 = 0.01;
pub const DEFAULT_TAIL_THRESHOLD: f64 = 1e-3;
pub const DEFAULT_SLACK: f64 = 1e-6;
pub const DEFAULT_PATHS: usize = 100_000;
pub const DEFAULT_SAMPLE_TIMES: [f64; 3] = [0.5, 1.0, 2.0];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    dimension: usize,
    caps: Vec<usize>,
    initial: Option<Vec<usize>>,
    horizon: Option<f64>,
    grid_step: Option<f64>,
    tail_threshold: Option<f64>,
    slack: Option<f64>,
    seed: Option<u64>,
    paths: Option<usize>,
    sample_times: Option<Vec<f64>>,
    birth_cap: Option<f64>,
    death_cap: Option<f64>,
    types: Vec<RawType>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawType {
    birth: RateRule,
    death: RateRule,
    bounds: crate::model::RateBounds,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub horizon: f64,
    pub grid_step: f64,
    pub tail_threshold: f64,
    pub slack: f64,
    pub seed: u64,
    pub paths: usize,
    /// `None` means the defaults that fall inside the horizon.
    pub sample_times: Option<Vec<f64>>,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            horizon: DEFAULT_HORIZON,
            grid_step: DEFAULT_GRID_STEP,
            tail_threshold: DEFAULT_TAIL_THRESHOLD,
            slack: DEFAULT_SLACK,
            seed: 0,
            paths: DEFAULT_PATHS,
            sample_times: None,
        }
    }
}

impl RunSettings {
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, msg: String| Err(Error::Config(format!("{name}: {msg}")));
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return field("horizon", format!("must be positive, got {}", self.horizon));
        }
        if !(self.grid_step > 0.0) || self.grid_step > self.horizon {
            return field("grid_step", format!("must lie in (0, horizon], got {}", self.grid_step));
        }
        if !(self.tail_threshold > 0.0 && self.tail_threshold < 1.0) {
            return field(
                "tail_threshold",
                format!("must lie in (0, 1), got {}", self.tail_threshold),
            );
        }
        if !(self.slack >= 0.0) || !self.slack.is_finite() {
            return field("slack", format!("must be non-negative, got {}", self.slack));
        }
        if self.paths == 0 {
            return field("paths", "must be at least 1".into());
        }
        if let Some(times) = &self.sample_times {
            if times.is_empty()
                || times.iter().any(|&t| !(0.0..=self.horizon).contains(&t))
                || times.windows(2).any(|w| w[1] <= w[0])
            {
                return field(
                    "sample_times",
                    "must be non-empty, increasing and inside [0, horizon]".into(),
                );
            }
        }
        Ok(())
    }

    /// The configured sample times, or the defaults up to the horizon (the
    /// horizon alone when none fit).
    pub fn sample_times(&self) -> Vec<f64> {
        if let Some(times) = &self.sample_times {
            return times.clone();
        }
        let v: Vec<f64> = DEFAULT_SAMPLE_TIMES
            .iter()
            .copied()
            .filter(|&t| t <= self.horizon)
            .collect();
        if v.is_empty() {
            vec![self.horizon]
        } else {
            v
        }
    }

    /// `0, h, 2h, ...` up to the horizon; the last point is the horizon itself.
    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.horizon, self.grid_step)
    }
}

pub fn uniform_grid(horizon: f64, step: f64) -> Vec<f64> {
    let n = (horizon / step - 1e-9).ceil() as usize;
    let mut g: Vec<f64> = (0..n).map(|i| i as f64 * step).collect();
    g.push(horizon);
    g
}

#[derive(Clone, Debug)]
pub struct Config {
    pub model: ModelSpec,
    pub space: TruncatedSpace,
    pub initial: MultiIndex,
    pub settings: RunSettings,
}

pub fn load(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config '{}': {e}", path.display())))?;
    parse(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse(text: &str) -> Result<Config> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;

    if raw.dimension == 0 {
        return Err(Error::Config("dimension: must be at least 1".into()));
    }
    if raw.caps.len() != raw.dimension {
        return Err(Error::Config(format!(
            "caps: expected {} entries, got {}",
            raw.dimension,
            raw.caps.len()
        )));
    }
    if raw.types.len() != raw.dimension {
        return Err(Error::Config(format!(
            "types: expected {} [[types]] tables, got {}",
            raw.dimension,
            raw.types.len()
        )));
    }
    let space = build_space(&raw.caps).map_err(|e| Error::Config(format!("caps: {e}")))?;

    let mut types = Vec::with_capacity(raw.dimension);
    for (j, t) in raw.types.into_iter().enumerate() {
        let ctx = |part: &str, e: Error| Error::Config(format!("types[{j}].{part}: {e}"));
        t.bounds.validate().map_err(|e| ctx("bounds", e))?;
        t.birth.validate(raw.dimension).map_err(|e| ctx("birth", e))?;
        t.death.validate(raw.dimension).map_err(|e| ctx("death", e))?;
        types.push(TypeRates::new(t.birth, t.death, t.bounds));
    }
    let model = ModelSpec::new(types, raw.birth_cap, raw.death_cap)
        .map_err(|e| Error::Config(format!("birth_cap/death_cap: {e}")))?;

    let initial = match raw.initial {
        Some(v) => {
            let m = MultiIndex::new(v).map_err(|e| Error::Config(format!("initial: {e}")))?;
            space
                .index_of(m.coords())
                .map_err(|e| Error::Config(format!("initial: {e}")))?;
            m
        }
        None => MultiIndex::zeros(raw.dimension),
    };

    let d = RunSettings::default();
    let settings = RunSettings {
        horizon: raw.horizon.unwrap_or(d.horizon),
        grid_step: raw.grid_step.unwrap_or(d.grid_step),
        tail_threshold: raw.tail_threshold.unwrap_or(d.tail_threshold),
        slack: raw.slack.unwrap_or(d.slack),
        seed: raw.seed.unwrap_or(d.seed),
        paths: raw.paths.unwrap_or(d.paths),
        sample_times: raw.sample_times,
    };
    settings.validate()?;

    Ok(Config {
        model,
        space,
        initial,
        settings,
    })
}
