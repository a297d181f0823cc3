//! CSV output, slope summaries and ceiling verdicts.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use mentorcore::metrics::{fit_loglog_slope, RegretKind, SlopeFit};
use serde::{Deserialize, Serialize};

use crate::experiment::ResultRow;

pub const CSV_HEADER: [&str; 8] = ["T", "metric", "estimate", "ci95", "trials", "query_mean", "diam_mean", "wall_ms"];

/// 17 significant digits, so values round-trip exactly.
fn real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.horizon.to_string(),
            r.metric.to_string(),
            real(r.estimate),
            real(r.ci95),
            r.trials.to_string(),
            real(r.query_mean),
            real(r.diam_mean),
            r.wall_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii")
}

pub fn read_csv<R: Read>(input: R) -> csv::Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: RegretKind,
    pub fit: Option<SlopeFit>,
    pub ceiling: Option<f64>,
    /// `None` when no ceiling is configured.
    pub pass: Option<bool>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    /// `(2n+1)/(2n+2)`, reported next to the fitted slopes but never gated on.
    pub reference_exponent: f64,
    pub metrics: Vec<MetricSummary>,
    pub warnings: Vec<String>,
    pub all_pass: bool,
}

/// Fit a log-log slope per metric and compare it against the ceilings. A
/// ceiling whose metric cannot be fitted counts as failed.
pub fn fit_and_report(rows: &[ResultRow], ceilings: &BTreeMap<RegretKind, f64>, dim: usize) -> Summary {
    let mut by_metric: BTreeMap<RegretKind, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        by_metric.entry(r.metric).or_default().push((r.horizon as f64, r.estimate));
    }
    for kind in ceilings.keys() {
        by_metric.entry(*kind).or_default();
    }
    let mut metrics = Vec::new();
    let mut warnings = Vec::new();
    for (metric, points) in by_metric {
        let ceiling = ceilings.get(&metric).copied();
        let (fit, warning) = match fit_loglog_slope(&points) {
            Ok(fit) => {
                let w = (!fit.dropped.is_empty())
                    .then(|| format!("{metric}: dropped non-positive values at T = {:?}", fit.dropped));
                (Some(fit), w)
            }
            Err(e) => (None, Some(format!("{metric}: {e}"))),
        };
        if let Some(w) = &warning {
            warnings.push(w.clone());
        }
        let pass = ceiling.map(|c| fit.as_ref().is_some_and(|f| f.slope < c));
        metrics.push(MetricSummary { metric, fit, ceiling, pass, warning });
    }
    let all_pass = metrics.iter().all(|m| m.pass != Some(false));
    let n = dim as f64;
    Summary {
        schema_version: crate::config::SCHEMA_VERSION,
        reference_exponent: (2.0 * n + 1.0) / (2.0 * n + 2.0),
        metrics,
        warnings,
        all_pass,
    }
}
