use std::io::Write;

use crate::protocol::{BenchRow, RowStatus, TpRow};
use crate::BenchError;

pub const ATTENTION_HEADER: [&str; 12] = [
    "variant",
    "N",
    "K",
    "H",
    "C",
    "lmax",
    "precision",
    "mean_time_s",
    "qps",
    "peak_elems",
    "madds",
    "seed",
];

pub const TP_HEADER: [&str; 13] = [
    "li",
    "lf",
    "lo",
    "count",
    "C",
    "lmax",
    "dense_time_s",
    "eaas_time_s",
    "time_ratio",
    "dense_madds",
    "eaas_madds",
    "madd_ratio",
    "seed",
];

fn opt(v: Option<f64>, status: RowStatus) -> String {
    match (status, v) {
        (RowStatus::Oom, _) => "OOM".into(),
        (RowStatus::Ok, Some(x)) => format!("{x:.6e}"),
        (RowStatus::Ok, None) => String::new(),
    }
}

/// Writes one line per row; out-of-memory rows carry `OOM` in the timing
/// columns and the predicted working set in `peak_elems`.
pub fn write_attention_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ATTENTION_HEADER)?;
    for r in rows {
        w.write_record([
            r.variant.name().to_string(),
            r.n.to_string(),
            r.k.to_string(),
            r.heads.to_string(),
            r.channels.to_string(),
            r.lmax.to_string(),
            r.precision.name().to_string(),
            opt(r.mean_time_s, r.status),
            opt(r.qps, r.status),
            r.peak_elems.to_string(),
            match r.status {
                RowStatus::Oom => "OOM".into(),
                RowStatus::Ok => r.madds.to_string(),
            },
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_tp_csv<W: Write>(rows: &[TpRow], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TP_HEADER)?;
    for r in rows {
        let (li, lf, lo) = r.path;
        w.write_record([
            li.to_string(),
            lf.to_string(),
            lo.to_string(),
            r.count.to_string(),
            r.channels.to_string(),
            r.lmax.to_string(),
            format!("{:.6e}", r.dense_time_s),
            format!("{:.6e}", r.eaas_time_s),
            format!("{:.4}", r.time_ratio()),
            r.dense_madds.to_string(),
            r.eaas_madds.to_string(),
            format!("{:.4}", r.madd_ratio()),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Least-squares line `y = intercept + slope x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// `None` with fewer than two points or constant `x`. A perfect fit of a
/// constant `y` reports `r_squared = 1`.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<LinearFit> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { if sse == 0.0 { 1.0 } else { 0.0 } } else { 1.0 - sse / syy };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}
