//! Tail flagging: a sentence is "especially lengthy" when it exceeds the
//! upper bound of its one-sided `(1 - alpha)` conditional predictive
//! interval, `f_bar(x) + z_{1-alpha} * s_bar(x)`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Split;
use crate::error::{invalid, Error, Result};
use crate::hbart::PosteriorSummary;
use crate::stats::normal_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlagConfig {
    alpha: f64,
    quantile_z: f64,
}

impl FlagConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid(format!("alpha {alpha} not in (0, 1)")));
        }
        Ok(Self {
            alpha,
            quantile_z: normal_quantile(1.0 - alpha),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Upper standard-normal quantile `Phi^{-1}(1 - alpha)`.
    pub fn quantile_z(&self) -> f64 {
        self.quantile_z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagSet {
    pub labels: Vec<bool>,
    pub thresholds: Vec<f64>,
    pub alpha: f64,
}

impl FlagSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn flagged_fraction(&self) -> f64 {
        self.labels.iter().filter(|&&l| l).count() as f64 / self.labels.len().max(1) as f64
    }
}

/// Flags rows whose outcome strictly exceeds `f_bar + z * s_bar`.
pub fn flag(summary: &PosteriorSummary, y: &[f64], cfg: &FlagConfig) -> Result<FlagSet> {
    flag_values(&summary.f_bar, &summary.s_bar, y, cfg)
}

pub fn flag_values(f_bar: &[f64], s_bar: &[f64], y: &[f64], cfg: &FlagConfig) -> Result<FlagSet> {
    if f_bar.len() != y.len() || s_bar.len() != y.len() {
        return Err(invalid(format!(
            "summary has {} / {} rows, outcome has {}",
            f_bar.len(),
            s_bar.len(),
            y.len()
        )));
    }
    let z = cfg.quantile_z;
    let mut labels = Vec::with_capacity(y.len());
    let mut thresholds = Vec::with_capacity(y.len());
    for i in 0..y.len() {
        let (f, s) = (f_bar[i], s_bar[i]);
        if !f.is_finite() || !s.is_finite() || !y[i].is_finite() {
            return Err(Error::Numerical(format!("non-finite value in row {i}")));
        }
        if s <= 0.0 {
            return Err(Error::Numerical(format!("non-positive scale {s} in row {i}")));
        }
        let t = f + z * s;
        thresholds.push(t);
        labels.push(y[i] > t);
    }
    Ok(FlagSet {
        labels,
        thresholds,
        alpha: cfg.alpha,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRate {
    pub bin: String,
    pub count: usize,
    pub flagged: usize,
    pub flagged_fraction: f64,
}

/// Orders keys by leading number when both have one ("6-12" before
/// "12-18"), falling back to plain string order.
fn bin_order(a: &str, b: &str) -> std::cmp::Ordering {
    let lead = |s: &str| -> Option<f64> {
        let end = s
            .char_indices()
            .find(|&(i, c)| !(c.is_ascii_digit() || c == '.' || (i == 0 && c == '-')))
            .map_or(s.len(), |(i, _)| i);
        s[..end].parse().ok()
    };
    match (lead(a), lead(b)) {
        (Some(x), Some(y)) if x != y => x.total_cmp(&y),
        _ => a.cmp(b),
    }
}

/// Flagged fraction within each bin of `bin_key`.
pub fn flag_rate_by_bin(flags: &FlagSet, bin_key: &[String]) -> Result<Vec<BinRate>> {
    if flags.is_empty() {
        return Err(invalid("no flags to tabulate"));
    }
    if bin_key.len() != flags.len() {
        return Err(invalid(format!("{} bin keys for {} flags", bin_key.len(), flags.len())));
    }
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (key, &label) in bin_key.iter().zip(&flags.labels) {
        let e = counts.entry(key.as_str()).or_default();
        e.0 += 1;
        e.1 += usize::from(label);
    }
    let mut rows: Vec<BinRate> = counts
        .into_iter()
        .map(|(bin, (count, flagged))| BinRate {
            bin: bin.to_string(),
            count,
            flagged,
            flagged_fraction: flagged as f64 / count as f64,
        })
        .collect();
    rows.sort_by(|a, b| bin_order(&a.bin, &b.bin));
    Ok(rows)
}

/// Writes `row_id,split,y,f_bar,s_bar,threshold,label`.
pub fn write_flags_csv<W: Write>(
    w: W,
    row_ids: &[u64],
    splits: &[Split],
    y: &[f64],
    summary: &PosteriorSummary,
    flags: &FlagSet,
) -> Result<()> {
    let n = flags.len();
    if [row_ids.len(), splits.len(), y.len(), summary.f_bar.len(), summary.s_bar.len()]
        .iter()
        .any(|&l| l != n)
    {
        return Err(invalid("flag columns differ in length"));
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["row_id", "split", "y", "f_bar", "s_bar", "threshold", "label"])?;
    for i in 0..n {
        out.write_record([
            row_ids[i].to_string(),
            splits[i].to_string(),
            y[i].to_string(),
            summary.f_bar[i].to_string(),
            summary.s_bar[i].to_string(),
            flags.thresholds[i].to_string(),
            u8::from(flags.labels[i]).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_bin_rates_csv<W: Write>(w: W, rows: &[BinRate]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bin", "count", "flagged", "flagged_fraction"])?;
    for r in rows {
        out.write_record([
            r.bin.clone(),
            r.count.to_string(),
            r.flagged.to_string(),
            r.flagged_fraction.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
