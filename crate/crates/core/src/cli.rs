//! `mbdp` command line.
//!
//! Exit codes: 0 on success, 1 when a verification check fails or a run
//! aborts numerically, 2 on usage or configuration errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::bounds::{null_certificate, weak_certificate};
use crate::config::{self, Config};
use crate::error::{Error, Result};
use crate::kolmogorov::{integrate, IntegrateOptions, ProbabilityVector, Trajectory};
use crate::mc_oracle::{simulate_paths, SimConfig};
use crate::output;
use crate::projection::{coordinate_bounds, effective_rates, marginal, Coordinate};
use crate::suite::{self, SuiteOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "mbdp",
    version,
    about = "Transient analysis of multidimensional birth-death processes"
)]
struct Cli {
    /// Model file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    grid_step: Option<f64>,
    #[arg(long, global = true)]
    horizon: Option<f64>,
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Do not echo reports to stdout.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the forward system and write trajectory.csv.
    Solve,
    /// Marginals and effective rates of one coordinate (1..d or `total`).
    Project { coordinate: Coordinate },
    /// Print convergence certificates or why they do not apply.
    Bounds,
    /// Monte Carlo marginals at the sample times.
    Simulate,
    /// Run the verification suite and the checks on the configured model.
    Verify,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Project { .. } => "project",
            Command::Bounds => "bounds",
            Command::Simulate => "simulate",
            Command::Verify => "verify",
        }
    }
}

/// Output files written by one run, in write order.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.push((name.to_string(), hex(&Sha256::digest(bytes))));
        Ok(())
    }

    fn write_manifest(&self, cli: &Cli, config: &Path, started: SystemTime, clock: Instant) -> Result<()> {
        let since_epoch = started.duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        let mut s = String::new();
        let _ = writeln!(s, "version = \"{}\"", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "subcommand = \"{}\"", cli.command.name());
        let _ = writeln!(s, "config = \"{}\"", config.display());
        let _ = writeln!(s, "out = \"{}\"", self.dir.display());
        let _ = writeln!(s, "started_unix_ms = {since_epoch}");
        let _ = writeln!(s, "elapsed_ms = {}", clock.elapsed().as_millis());
        let _ = writeln!(s, "\n[files]");
        for (name, sum) in &self.files {
            let _ = writeln!(s, "\"{name}\" = \"sha256:{sum}\"");
        }
        fs::write(self.dir.join("manifest.txt"), s)?;
        Ok(())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::InvalidCaps(_)
            | Error::InvalidModel(_)
            | Error::InvalidRate { .. }
            | Error::BoundViolation { .. }
            | Error::OutOfBox { .. }
    )
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if is_config_error(&e) {
                EXIT_CONFIG
            } else {
                EXIT_FAIL
            }
        }
    }
}

fn load(cli: &Cli) -> Result<(PathBuf, Config)> {
    let path = cli
        .config
        .clone()
        .ok_or_else(|| Error::Config("--config <PATH> is required".into()))?;
    if !path.is_file() {
        return Err(Error::Config(format!("config file '{}' not found", path.display())));
    }
    let mut cfg = config::load(&path)?;
    let s = &mut cfg.settings;
    if let Some(v) = cli.seed {
        s.seed = v;
    }
    if let Some(v) = cli.grid_step {
        s.grid_step = v;
    }
    if let Some(v) = cli.horizon {
        s.horizon = v;
    }
    if let Some(v) = cli.paths {
        s.paths = v;
    }
    s.validate()?;
    Ok((path, cfg))
}

fn solve(cfg: &Config) -> Result<Trajectory> {
    let p0 = ProbabilityVector::point_mass(&cfg.space, &cfg.initial, 0.0)?;
    integrate(
        &cfg.model,
        &cfg.space,
        &p0,
        &cfg.settings.grid(),
        &IntegrateOptions::default(),
    )
}

fn warn_tail(traj: &Trajectory, threshold: f64) {
    let end = traj.window_end(threshold);
    if end < traj.grid.len() {
        eprintln!(
            "warning: tail mass reached {threshold:e} at t = {}; later results reflect the truncation",
            traj.grid[end]
        );
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let (path, cfg) = load(cli)?;
    let mut out = Outputs::new(&cli.out)?;
    let mut code = EXIT_OK;

    match &cli.command {
        Command::Solve => {
            let traj = solve(&cfg)?;
            warn_tail(&traj, cfg.settings.tail_threshold);
            let mut buf = Vec::new();
            output::write_trajectory_csv(&mut buf, &traj)?;
            out.write("trajectory.csv", &buf)?;
            if !cli.quiet {
                println!(
                    "states={} grid_points={} steps={} final_tail_mass={:e}",
                    cfg.space.size(),
                    traj.grid.len(),
                    traj.steps,
                    traj.tail_mass.last().copied().unwrap_or(0.0)
                );
            }
        }
        Command::Project { coordinate } => {
            let c = *coordinate;
            if let Coordinate::Type(j) = c {
                if j >= cfg.model.dimension() {
                    return Err(Error::Config(format!(
                        "coordinate {c} out of range for a {}-type model",
                        cfg.model.dimension()
                    )));
                }
            }
            let traj = solve(&cfg)?;
            warn_tail(&traj, cfg.settings.tail_threshold);
            let rows = traj
                .snapshots
                .iter()
                .map(|p| {
                    Ok((
                        marginal(p, &cfg.space, c)?,
                        effective_rates(p, &cfg.model, &cfg.space, c, p.time())?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut buf = Vec::new();
            output::write_projection_csv(&mut buf, &rows)?;
            out.write(&format!("projection_{c}.csv"), &buf)?;
        }
        Command::Bounds => {
            let text = bounds_text(&cfg)?;
            if !cli.quiet {
                print!("{}", text.0);
            }
            out.write("certificates.txt", text.1.as_bytes())?;
        }
        Command::Simulate => {
            let s = &cfg.settings;
            let sim = simulate_paths(
                &cfg.model,
                &cfg.space,
                &SimConfig {
                    initial: cfg.initial.clone(),
                    horizon: s.horizon,
                    n_paths: s.paths,
                    seed: s.seed,
                    sample_times: s.sample_times(),
                },
            )?;
            let mut buf = Vec::new();
            output::write_empirical_csv(&mut buf, &sim)?;
            out.write("empirical.csv", &buf)?;
        }
        Command::Verify => {
            let s = &cfg.settings;
            let opts = SuiteOptions {
                seed: s.seed,
                paths: s.paths,
                slack: s.slack,
                tail_threshold: s.tail_threshold,
            };
            let mut report = suite::run_all(&opts);
            match solve(&cfg) {
                Ok(traj) => {
                    let (checks, series) = suite::config_checks(&cfg, &traj);
                    report.extend(checks);
                    for (label, decay) in series {
                        let mut buf = Vec::new();
                        output::write_decay_csv(&mut buf, &decay)?;
                        out.write(&format!("decay_{label}.csv"), &buf)?;
                    }
                }
                Err(e) => report.checks.push(suite::Check {
                    name: "config_solve".into(),
                    pass: false,
                    detail: format!("error: {e}"),
                }),
            }
            let text = report.render();
            if !cli.quiet {
                print!("{text}");
            }
            out.write("verify_report.txt", text.as_bytes())?;
            if !report.pass() {
                code = EXIT_FAIL;
            }
        }
    }
    out.write_manifest(cli, &path, started, clock)?;
    Ok(code)
}

/// Human-readable lines for stdout and the key/value certificate file.
fn bounds_text(cfg: &Config) -> Result<(String, String)> {
    let mut screen = String::new();
    let mut file = String::new();
    let d = cfg.model.dimension();
    for c in (0..d).map(Coordinate::Type).chain(std::iter::once(Coordinate::Total)) {
        let b = coordinate_bounds(&cfg.model, c)?;
        match null_certificate(&b, c) {
            Ok(cert) => {
                let _ = writeln!(
                    screen,
                    "coordinate {c}: null-ergodic applicable, σ={}, α*={}",
                    cert.sigma, cert.alpha_star
                );
                file.push_str(&output::null_certificate_text(&cert));
            }
            Err(e) => {
                let reason = not_applicable_reason(e)?;
                let _ = writeln!(screen, "coordinate {c}: null-ergodic not applicable: {reason}");
                file.push_str(&output::not_applicable_text("null_ergodic", c, &reason));
            }
        }
        match weak_certificate(&b, c) {
            Ok(cert) => {
                let _ = writeln!(
                    screen,
                    "coordinate {c}: weakly ergodic applicable, β={}, α_*={}",
                    cert.beta, cert.alpha_lower
                );
                file.push_str(&output::weak_certificate_text(&cert));
            }
            Err(e) => {
                let reason = not_applicable_reason(e)?;
                let _ = writeln!(screen, "coordinate {c}: weakly ergodic not applicable: {reason}");
                file.push_str(&output::not_applicable_text("weak_ergodic", c, &reason));
            }
        }
    }
    if d > 1 {
        screen.push_str("note: total-count bounds assume no type is at its cap\n");
    }
    Ok((screen, file))
}

fn not_applicable_reason(e: Error) -> Result<String> {
    match e {
        Error::NotApplicable(msg) => Ok(msg.split_once(": ").map_or(msg.clone(), |(_, r)| r.to_string())),
        other => Err(other),
    }
}
