//! CSV and key/value writers. Floats are written with 17 significant digits
//! so files round-trip bit-exactly and repeat byte-for-byte.

use std::io::{self, Write};

use crate::bounds::{DecayReport, NullErgodicCertificate, WeakErgodicCertificate};
use crate::kolmogorov::Trajectory;
use crate::mc_oracle::SimOutput;
use crate::projection::{EffectiveRates, Marginal};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `t,state_0,...,state_{n-1},tail_mass`
pub fn write_trajectory_csv<W: Write>(mut w: W, traj: &Trajectory) -> io::Result<()> {
    let n = traj.snapshots.first().map_or(0, |s| s.len());
    write!(w, "t")?;
    for i in 0..n {
        write!(w, ",state_{i}")?;
    }
    writeln!(w, ",tail_mass")?;
    for ((t, snap), tail) in traj.grid.iter().zip(&traj.snapshots).zip(&traj.tail_mass) {
        write!(w, "{}", fmt_f64(*t))?;
        for v in snap.values() {
            write!(w, ",{}", fmt_f64(*v))?;
        }
        writeln!(w, ",{}", fmt_f64(*tail))?;
    }
    Ok(())
}

/// `t,k,x_k,lambda_tilde_k,mu_tilde_k,defined`
pub fn write_projection_csv<W: Write>(mut w: W, rows: &[(Marginal, EffectiveRates)]) -> io::Result<()> {
    writeln!(w, "t,k,x_k,lambda_tilde_k,mu_tilde_k,defined")?;
    for (x, r) in rows {
        for k in 0..x.values.len() {
            writeln!(
                w,
                "{},{k},{},{},{},{}",
                fmt_f64(x.time),
                fmt_f64(x.values[k]),
                fmt_f64(r.birth[k]),
                fmt_f64(r.death[k]),
                r.defined[k]
            )?;
        }
    }
    Ok(())
}

/// `t,coordinate,k,estimate,stderr,n_paths,seed`
pub fn write_empirical_csv<W: Write>(mut w: W, out: &SimOutput) -> io::Result<()> {
    writeln!(w, "t,coordinate,k,estimate,stderr,n_paths,seed")?;
    for m in &out.marginals {
        for k in 0..m.estimate.len() {
            writeln!(
                w,
                "{},{},{k},{},{},{},{}",
                fmt_f64(m.time),
                m.coordinate,
                fmt_f64(m.estimate[k]),
                fmt_f64(m.stderr[k]),
                out.n_paths,
                out.seed
            )?;
        }
    }
    Ok(())
}

/// `t,norm,bound,ratio,pass`
pub fn write_decay_csv<W: Write>(mut w: W, report: &DecayReport) -> io::Result<()> {
    writeln!(w, "t,norm,bound,ratio,pass")?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_f64(r.t),
            fmt_f64(r.norm),
            fmt_f64(r.bound),
            fmt_f64(r.ratio),
            r.pass
        )?;
    }
    Ok(())
}

pub fn null_certificate_text(c: &NullErgodicCertificate) -> String {
    format!(
        "[null_ergodic.{}]\napplicable = true\nsigma = {}\nalpha_star = {}\n",
        c.coordinate, c.sigma, c.alpha_star
    )
}

pub fn weak_certificate_text(c: &WeakErgodicCertificate) -> String {
    format!(
        "[weak_ergodic.{}]\napplicable = true\nbeta = {}\nalpha_lower = {}\n",
        c.coordinate, c.beta, c.alpha_lower
    )
}

pub fn not_applicable_text(section: &str, coordinate: impl std::fmt::Display, reason: &str) -> String {
    format!("[{section}.{coordinate}]\napplicable = false\nreason = \"{reason}\"\n")
}
