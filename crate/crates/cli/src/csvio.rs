//! CSV emission. Floats carry 17 significant digits so every file
//! round-trips to the exact in-memory value.

use anyhow::Result;
use smh_core::{ChainSummary, ChainTrace, PosteriorMoments, RhoStudyResult, ScalingStudyResult};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Shortest-exact would also round-trip, but a fixed 17-digit form keeps the
/// column layout stable across runs.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

pub fn write_trace(path: &Path, trace: &ChainTrace) -> Result<()> {
    let d = trace.dim();
    let mut out = String::new();
    out.push_str("iter");
    for j in 1..=d {
        write!(out, ",theta_{j}")?;
    }
    out.push_str(",accepted,evals,poisson_n\n");
    for row in 0..trace.len() {
        let iter = trace.burn_in() + row * trace.thin();
        write!(out, "{iter}")?;
        for v in trace.state(row) {
            write!(out, ",{}", fmt_f64(*v))?;
        }
        let accepted = u8::from(trace.accept_flags()[iter]);
        let evals = trace.eval_counts()[iter];
        match trace.poisson_draws()[iter] {
            Some(n) => writeln!(out, ",{accepted},{evals},{n}")?,
            None => writeln!(out, ",{accepted},{evals},")?,
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_summary(path: &Path, summary: &ChainSummary) -> Result<()> {
    let d = summary.ess.len();
    let mut header = Vec::new();
    for j in 1..=d {
        header.push(format!("ess_{j}"));
    }
    for j in 1..=d {
        header.push(format!("ess_per_sec_{j}"));
    }
    header.extend(
        ["accept_rate", "mean_evals", "wall_seconds"]
            .iter()
            .map(|s| s.to_string()),
    );
    let mut row = Vec::new();
    row.extend(summary.ess.iter().map(|v| fmt_f64(*v)));
    row.extend(summary.ess_per_sec.iter().map(|v| fmt_f64(*v)));
    row.push(fmt_f64(summary.accept_rate));
    row.push(fmt_f64(summary.mean_evaluations));
    row.push(fmt_f64(summary.wall.as_secs_f64()));
    fs::write(path, format!("{}\n{}\n", header.join(","), row.join(",")))?;
    Ok(())
}

/// Data rows per (kernel, n) with an empty slope column; one trailing row
/// per kernel carrying the fitted slope.
pub fn write_scaling(path: &Path, result: &ScalingStudyResult) -> Result<()> {
    let mut out = String::from("n,kernel,mean_evals,accept_rate,slope\n");
    for series in &result.series {
        for (i, n) in result.n_grid.iter().enumerate() {
            writeln!(
                out,
                "{n},{},{},{},",
                series.label,
                fmt_f64(series.mean_evaluations[i]),
                fmt_f64(series.accept_rate[i])
            )?;
        }
    }
    for series in &result.series {
        writeln!(out, ",{},,,{}", series.label, fmt_f64(series.slope))?;
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_rho(path: &Path, result: &RhoStudyResult) -> Result<()> {
    let mut out = String::from("n,rho,ess_per_sec_1,accept_rate\n");
    for cell in &result.cells {
        writeln!(
            out,
            "{},{},{},{}",
            cell.n,
            fmt_f64(cell.rho),
            fmt_f64(cell.ess_per_sec),
            fmt_f64(cell.accept_rate)
        )?;
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_mode(path: &Path, theta_hat: &[f64], grad_norm: f64, positive_definite: bool) -> Result<()> {
    let d = theta_hat.len();
    let mut header = Vec::new();
    for j in 1..=d {
        header.push(format!("theta_{j}"));
    }
    header.push("grad_norm".to_string());
    header.push("hessian_pd".to_string());
    let mut row: Vec<String> = theta_hat.iter().map(|v| fmt_f64(*v)).collect();
    row.push(fmt_f64(grad_norm));
    row.push(u8::from(positive_definite).to_string());
    fs::write(path, format!("{}\n{}\n", header.join(","), row.join(",")))?;
    Ok(())
}

pub fn write_oracle(path: &Path, moments: &PosteriorMoments) -> Result<()> {
    let d = moments.mean.len();
    let mut header = Vec::new();
    for j in 1..=d {
        header.push(format!("mean_{j}"));
    }
    for j in 1..=d {
        for k in 1..=d {
            header.push(format!("cov_{j}{k}"));
        }
    }
    let mut row: Vec<String> = moments.mean.iter().map(|v| fmt_f64(*v)).collect();
    row.extend(moments.covariance.iter().map(|v| fmt_f64(*v)));
    fs::write(path, format!("{}\n{}\n", header.join(","), row.join(",")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for v in [
            1.0 / 3.0,
            -2.718281828459045e-14,
            6.02214076e23,
            f64::MIN_POSITIVE,
            0.1 + 0.2,
        ] {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} -> {s}");
        }
    }
}
