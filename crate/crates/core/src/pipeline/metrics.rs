use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `‖pred − target‖₂ / ‖target‖₂`.
pub fn rel_l2(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::shape("rel_l2", &[target.len()], &[pred.len()]));
    }
    let num: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    let den: f64 = target.iter().map(|t| t * t).sum();
    if den == 0.0 {
        return Err(Error::invalid(
            "relative L2 undefined for a zero-norm target",
        ));
    }
    Ok((num / den).sqrt())
}

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r_squared(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || target.is_empty() {
        return Err(Error::shape("r_squared", &[target.len()], &[pred.len()]));
    }
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let ss_tot: f64 = target.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::invalid("R² undefined for a zero-variance target"));
    }
    let ss_res: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub const METRIC_COLUMNS: [&str; 7] = [
    "err_ux", "err_uy", "err_uz", "err_fr", "r2_ux", "r2_uy", "r2_uz",
];

/// Metrics of one test sample; `None` marks an undefined value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub id: String,
    /// `[err_ux, err_uy, err_uz, err_fr, r2_ux, r2_uy, r2_uz]`
    pub values: [Option<f64>; 7],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub count: usize,
}

/// Per-sample metrics and their mean/min/max/median per column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: Vec<SampleMetrics>,
    pub summary: [Option<ColumnSummary>; 7],
}

pub fn summarize(values: &[f64]) -> Option<ColumnSummary> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    Some(ColumnSummary {
        mean: values.iter().sum::<f64>() / n as f64,
        min: sorted[0],
        max: sorted[n - 1],
        median,
        count: n,
    })
}

impl MetricsReport {
    pub fn from_samples(samples: Vec<SampleMetrics>) -> Self {
        let summary = std::array::from_fn(|c| {
            let col: Vec<f64> = samples.iter().filter_map(|s| s.values[c]).collect();
            summarize(&col)
        });
        Self { samples, summary }
    }

    pub fn column(&self, name: &str) -> Option<ColumnSummary> {
        let c = METRIC_COLUMNS.iter().position(|&n| n == name)?;
        self.summary[c]
    }

    /// One row per sample, a blank line, then mean/min/max/median rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let fmt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:.9e}"));
        writeln!(w, "id,{}", METRIC_COLUMNS.join(","))?;
        for s in &self.samples {
            let vals: Vec<String> = s.values.iter().map(|&v| fmt(v)).collect();
            writeln!(w, "{},{}", s.id, vals.join(","))?;
        }
        writeln!(w)?;
        writeln!(w, "stat,{}", METRIC_COLUMNS.join(","))?;
        type Pick = fn(&ColumnSummary) -> f64;
        let stats: [(&str, Pick); 4] = [
            ("mean", |s| s.mean),
            ("min", |s| s.min),
            ("max", |s| s.max),
            ("median", |s| s.median),
        ];
        for (name, pick) in stats {
            let vals: Vec<String> = self
                .summary
                .iter()
                .map(|s| fmt(s.as_ref().map(pick)))
                .collect();
            writeln!(w, "{name},{}", vals.join(","))?;
        }
        Ok(())
    }

    /// Table with one row per error column and mean/min/max/median columns.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<8} {:>11} {:>11} {:>11} {:>11}\n",
            "", "mean", "min", "max", "median"
        );
        for (name, s) in METRIC_COLUMNS.iter().zip(&self.summary) {
            match s {
                Some(s) => out.push_str(&format!(
                    "{name:<8} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e}\n",
                    s.mean, s.min, s.max, s.median
                )),
                None => out.push_str(&format!("{name:<8} {:>11}\n", "undefined")),
            }
        }
        out
    }
}
