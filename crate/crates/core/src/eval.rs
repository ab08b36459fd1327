//! Evaluation artifacts: ROC/AUC, equal-frequency risk bins, Geweke
//! convergence diagnostics, and their CSV/SVG renderings.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hbart::RSquared;
use crate::stats::two_sided_p;

/// Alphas of the flag-rate sensitivity table.
pub const SWEEP_ALPHAS: [f64; 4] = [0.10, 0.15, 0.20, 0.25];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)`, from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    /// Score threshold reached at each point after the first; a row is
    /// called positive when its score is `>=` the threshold.
    pub thresholds: Vec<f64>,
    pub auc: f64,
}

fn check_scored(scores: &[f64], labels: &[bool]) -> Result<(u64, u64)> {
    if scores.len() != labels.len() {
        return Err(invalid(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(invalid(format!("score {i} is not finite")));
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(invalid("AUC needs both classes"));
    }
    Ok((pos, neg))
}

/// ROC curve and Mann-Whitney AUC, tied scores counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    let (pos, neg) = check_scored(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    // twice the Mann-Whitney count, kept integral
    let mut twice_u = 0u64;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut gp, mut gn) = (0u64, 0u64);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                gp += 1;
            } else {
                gn += 1;
            }
            i += 1;
        }
        let below = neg - fp - gn;
        twice_u += 2 * gp * below + gp * gn;
        tp += gp;
        fp += gn;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        thresholds.push(s);
    }
    Ok(RocCurve {
        points,
        thresholds,
        auc: twice_u as f64 / (2 * pos * neg) as f64,
    })
}

pub fn auc_value(scores: &[f64], labels: &[bool]) -> Result<f64> {
    auc(scores, labels).map(|r| r.auc)
}

/// Area under a piecewise-linear curve.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AucBand {
    Poor,
    Fair,
    Good,
    Excellent,
}

impl AucBand {
    pub fn label(self) -> &'static str {
        match self {
            Self::Poor => "poor",
            Self::Fair => "fair",
            Self::Good => "good",
            Self::Excellent => "excellent",
        }
    }
}

/// Verbal label for an AUC: below 0.55 poor, then fair up to 0.64, good up
/// to 0.71, excellent from 0.71.
pub fn auc_band(auc: f64) -> AucBand {
    if auc >= 0.71 {
        AucBand::Excellent
    } else if auc >= 0.64 {
        AucBand::Good
    } else if auc >= 0.55 {
        AucBand::Fair
    } else {
        AucBand::Poor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskBin {
    pub index: usize,
    pub count: usize,
    pub positives: usize,
    pub fraction: f64,
    /// Binomial standard error `sqrt(f (1 - f) / count)`.
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskBinTable {
    pub bins: Vec<RiskBin>,
}

/// Splits rows into `k` equal-frequency bins by ascending score. Equal
/// scores keep input order, so boundary membership is reproducible.
pub fn risk_bins(scores: &[f64], labels: &[bool], k: usize) -> Result<RiskBinTable> {
    if k < 2 {
        return Err(invalid(format!("need at least 2 bins, got {k}")));
    }
    if scores.len() != labels.len() {
        return Err(invalid(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n = scores.len();
    if n < k {
        return Err(invalid(format!("{n} rows cannot fill {k} bins")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(invalid("scores must be finite"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let bins = (0..k)
        .map(|b| {
            let members = &order[b * n / k..(b + 1) * n / k];
            let count = members.len();
            let positives = members.iter().filter(|&&i| labels[i]).count();
            let fraction = positives as f64 / count as f64;
            RiskBin {
                index: b,
                count,
                positives,
                fraction,
                std_error: (fraction * (1.0 - fraction) / count as f64).sqrt(),
                lower: scores[members[0]],
                upper: scores[members[count - 1]],
            }
        })
        .collect();
    Ok(RiskBinTable { bins })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeResult {
    pub z_score: f64,
    pub p_value: f64,
    pub first: f64,
    pub last: f64,
    pub mean_first: f64,
    pub mean_last: f64,
    pub var_first: f64,
    pub var_last: f64,
}

/// Variance of a segment mean from the Bartlett lag-window estimate of the
/// spectral density at zero, window `floor(sqrt(len))`.
fn mean_variance(seg: &[f64]) -> (f64, f64) {
    let m = seg.len();
    let mean = seg.iter().sum::<f64>() / m as f64;
    let dev: Vec<f64> = seg.iter().map(|v| v - mean).collect();
    let acov = |k: usize| dev[..m - k].iter().zip(&dev[k..]).map(|(a, b)| a * b).sum::<f64>() / m as f64;
    let window = (m as f64).sqrt().floor() as usize;
    let mut s0 = acov(0);
    for k in 1..=window.min(m - 1) {
        s0 += 2.0 * (1.0 - k as f64 / (window + 1) as f64) * acov(k);
    }
    (mean, s0 / m as f64)
}

/// Geweke's comparison of the first `first` and last `last` fractions of a
/// chain.
pub fn geweke(trace: &[f64], first: f64, last: f64) -> Result<GewekeResult> {
    if trace.len() < 100 {
        return Err(invalid(format!("trace of length {} is shorter than 100", trace.len())));
    }
    if !(first > 0.0 && last > 0.0 && first + last <= 1.0) {
        return Err(invalid(format!("window fractions {first}, {last} are invalid")));
    }
    if trace.iter().any(|v| !v.is_finite()) {
        return Err(invalid("trace has non-finite values"));
    }
    let n = trace.len();
    let na = ((first * n as f64).floor() as usize).max(2);
    let nb = ((last * n as f64).floor() as usize).max(2);
    let (mean_first, var_first) = mean_variance(&trace[..na]);
    let (mean_last, var_last) = mean_variance(&trace[n - nb..]);
    let var = var_first + var_last;
    if !(var > 0.0) {
        return Err(Error::Numerical("trace has zero variance".into()));
    }
    let z_score = (mean_first - mean_last) / var.sqrt();
    Ok(GewekeResult {
        z_score,
        p_value: two_sided_p(z_score),
        first,
        last,
        mean_first,
        mean_last,
        var_first,
        var_last,
    })
}

/// Scores and labels of one alpha run, split by partition.
#[derive(Debug, Clone, Copy)]
pub struct AlphaRun<'a> {
    pub alpha: f64,
    pub train_scores: &'a [f64],
    pub train_labels: &'a [bool],
    pub test_scores: &'a [f64],
    pub test_labels: &'a [bool],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaAucRow {
    pub alpha: f64,
    pub train_auc: f64,
    pub test_auc: f64,
}

/// In-sample and out-of-sample AUC per alpha, in ascending alpha order.
pub fn table_model2_aucs(runs: &[AlphaRun<'_>]) -> Result<Vec<AlphaAucRow>> {
    let mut rows = runs
        .iter()
        .map(|r| {
            Ok(AlphaAucRow {
                alpha: r.alpha,
                train_auc: auc_value(r.train_scores, r.train_labels)?,
                test_auc: auc_value(r.test_scores, r.test_labels)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    Ok(rows)
}

pub fn write_roc_csv<W: Write>(w: W, roc: &RocCurve) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["fpr", "tpr", "threshold"])?;
    out.write_record(["0", "0", ""])?;
    for (p, t) in roc.points[1..].iter().zip(&roc.thresholds) {
        out.write_record([p.0.to_string(), p.1.to_string(), t.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_risk_bins_csv<W: Write>(w: W, table: &RiskBinTable) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bin", "count", "flagged", "fraction", "std_error", "score_lower", "score_upper"])?;
    for b in &table.bins {
        out.write_record([
            (b.index + 1).to_string(),
            b.count.to_string(),
            b.positives.to_string(),
            b.fraction.to_string(),
            b.std_error.to_string(),
            b.lower.to_string(),
            b.upper.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `split,auc,band` rows.
pub fn write_auc_summary_csv<W: Write>(w: W, rows: &[(&str, f64)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["split", "auc", "band"])?;
    for (split, a) in rows {
        out.write_record([split.to_string(), a.to_string(), auc_band(*a).label().to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_geweke_csv<W: Write>(w: W, rows: &[(&str, GewekeResult)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["quantity", "z_score", "p_value", "first", "last", "mean_first", "mean_last"])?;
    for (name, g) in rows {
        out.write_record([
            name.to_string(),
            g.z_score.to_string(),
            g.p_value.to_string(),
            g.first.to_string(),
            g.last.to_string(),
            g.mean_first.to_string(),
            g.mean_last.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_r2_csv<W: Write>(w: W, rows: &[(&str, RSquared)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["split", "r2", "adjusted_r2"])?;
    for (split, r) in rows {
        out.write_record([split.to_string(), r.r2.to_string(), r.adjusted_r2.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_model2_aucs_csv<W: Write>(w: W, rows: &[AlphaAucRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["alpha", "train_auc", "test_auc"])?;
    for r in rows {
        out.write_record([r.alpha.to_string(), r.train_auc.to_string(), r.test_auc.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

const SVG_SIZE: f64 = 400.0;
const SVG_PAD: f64 = 40.0;

fn svg_open(title: &str) -> String {
    let full = SVG_SIZE + 2.0 * SVG_PAD;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{full}" height="{full}" viewBox="0 0 {full} {full}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{title}</text>"#,
        full / 2.0
    );
    let _ = writeln!(
        s,
        r#"<rect x="{SVG_PAD}" y="{SVG_PAD}" width="{SVG_SIZE}" height="{SVG_SIZE}" fill="none" stroke="black"/>"#
    );
    s
}

fn to_px(x: f64, y: f64) -> (f64, f64) {
    (SVG_PAD + x * SVG_SIZE, SVG_PAD + (1.0 - y) * SVG_SIZE)
}

pub fn roc_svg(roc: &RocCurve) -> String {
    let mut s = svg_open(&format!("ROC (AUC {:.3})", roc.auc));
    let (x0, y0) = to_px(0.0, 0.0);
    let (x1, y1) = to_px(1.0, 1.0);
    let _ = writeln!(
        s,
        r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="gray" stroke-dasharray="4"/>"#
    );
    let pts: Vec<String> = roc
        .points
        .iter()
        .map(|&(x, y)| {
            let (px, py) = to_px(x, y);
            format!("{px:.2},{py:.2}")
        })
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        pts.join(" ")
    );
    s.push_str("</svg>\n");
    s
}

pub fn risk_bins_svg(table: &RiskBinTable) -> String {
    let mut s = svg_open("Flagged fraction by predicted risk bin");
    let top = table
        .bins
        .iter()
        .map(|b| b.fraction)
        .fold(0.0, f64::max)
        .max(1e-9);
    let k = table.bins.len() as f64;
    let width = SVG_SIZE / k;
    for b in &table.bins {
        let h = b.fraction / top * SVG_SIZE * 0.9;
        let x = SVG_PAD + b.index as f64 * width;
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="steelblue"/>"#,
            x + 0.1 * width,
            SVG_PAD + SVG_SIZE - h,
            0.8 * width
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{:.3}</text>"#,
            x + 0.5 * width,
            SVG_PAD + SVG_SIZE - h - 4.0,
            b.fraction
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use super::*;

    fn pairwise(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn worked_auc_examples() {
        let s = [0.9, 0.8, 0.3, 0.2];
        assert_eq!(auc_value(&s, &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(auc_value(&s, &[true, false, true, false]).unwrap(), 0.75);
        assert_eq!(auc_value(&[0.5; 4], &[true, false, true, false]).unwrap(), 0.5);
        assert!(auc(&s, &[true; 4]).is_err());
        assert!(auc(&s, &[true, false]).is_err());
        assert!(auc(&[f64::NAN, 0.0], &[true, false]).is_err());
    }

    #[test]
    fn roc_endpoints_and_thresholds() {
        let roc = auc(&[0.9, 0.8, 0.8, 0.2], &[true, false, true, false]).unwrap();
        assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
        assert_eq!(roc.thresholds, vec![0.9, 0.8, 0.2]);
        assert_eq!(roc.auc, 0.875);
    }

    #[test]
    fn bands() {
        assert_eq!(auc_band(0.64), AucBand::Good);
        assert_eq!(auc_band(0.55), AucBand::Fair);
        assert_eq!(auc_band(0.63), AucBand::Fair);
        assert_eq!(auc_band(0.705), AucBand::Good);
        assert_eq!(auc_band(0.71), AucBand::Excellent);
        assert_eq!(auc_band(0.5), AucBand::Poor);
        assert_eq!(AucBand::Good.label(), "good");
    }

    #[test]
    fn constant_scores_bin_by_input_order() {
        let labels = [true, true, false, false, false, true];
        let t = risk_bins(&[0.3; 6], &labels, 2).unwrap();
        assert_eq!(t.bins[0].count, 3);
        assert_eq!(t.bins[0].fraction, 2.0 / 3.0);
        assert_eq!(t.bins[1].fraction, 1.0 / 3.0);
        assert!(risk_bins(&[0.1], &[true], 1).is_err());
        assert!(risk_bins(&[0.1], &[true], 2).is_err());
    }

    #[test]
    fn monotone_signal_has_rising_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let scores: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let labels: Vec<bool> = scores.iter().map(|&s| rng.random::<f64>() < s).collect();
        let t = risk_bins(&scores, &labels, 5).unwrap();
        assert_eq!(t.bins.len(), 5);
        for w in t.bins.windows(2) {
            assert!(w[0].fraction <= w[1].fraction);
            assert!(w[0].upper <= w[1].lower);
        }
        let b = &t.bins[2];
        assert!((b.std_error - (b.fraction * (1.0 - b.fraction) / 2000.0).sqrt()).abs() < 1e-15);
    }

    fn normal_trace(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn geweke_on_stationary_and_shifted_traces() {
        let g = geweke(&normal_trace(3, 10_000), 0.1, 0.5).unwrap();
        assert!(g.z_score.abs() < 3.0);
        assert!((g.p_value - two_sided_p(g.z_score)).abs() < 1e-15);

        let mut shifted = normal_trace(4, 10_000);
        shifted[5000..].iter_mut().for_each(|v| *v += 5.0);
        let g = geweke(&shifted, 0.1, 0.5).unwrap();
        assert!(g.z_score < -10.0);

        let rev: Vec<f64> = shifted.iter().rev().copied().collect();
        let a = geweke(&shifted, 0.3, 0.3).unwrap();
        let b = geweke(&rev, 0.3, 0.3).unwrap();
        assert!(a.z_score < -10.0 && b.z_score > 10.0);
    }

    #[test]
    fn geweke_errors() {
        assert!(matches!(geweke(&[1.0; 500], 0.1, 0.5), Err(Error::Numerical(_))));
        assert!(geweke(&normal_trace(1, 50), 0.1, 0.5).is_err());
        assert!(geweke(&normal_trace(1, 500), 0.6, 0.5).is_err());
        assert!(geweke(&normal_trace(1, 500), 0.0, 0.5).is_err());
    }

    #[test]
    fn bartlett_variance_by_hand() {
        // m = 4, window 2, deviations (-1.5, -0.5, 0.5, 1.5)
        let (mean, var) = mean_variance(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(mean, 2.5);
        let g0 = 5.0 / 4.0;
        let g1 = (0.75 - 0.25 + 0.75) / 4.0;
        let g2 = (-0.75 - 0.75) / 4.0;
        let s0 = g0 + 2.0 * (2.0 / 3.0) * g1 + 2.0 * (1.0 / 3.0) * g2;
        assert!((var - s0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn alpha_table_is_sorted() {
        let s = [0.9, 0.1, 0.8, 0.3];
        let l = [true, false, false, true];
        let runs: Vec<AlphaRun> = [0.25, 0.1]
            .iter()
            .map(|&alpha| AlphaRun {
                alpha,
                train_scores: &s,
                train_labels: &l,
                test_scores: &s,
                test_labels: &l,
            })
            .collect();
        let t = table_model2_aucs(&runs).unwrap();
        assert_eq!(t.iter().map(|r| r.alpha).collect::<Vec<_>>(), vec![0.1, 0.25]);
        assert_eq!(t[0].test_auc, 0.75);
    }

    #[test]
    fn csv_and_svg_outputs() {
        let roc = auc(&[0.9, 0.2], &[true, false]).unwrap();
        let mut buf = Vec::new();
        write_roc_csv(&mut buf, &roc).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "fpr,tpr,threshold\n0,0,\n0,1,0.9\n1,1,0.2\n");
        let svg = roc_svg(&roc);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));

        let mut buf = Vec::new();
        write_auc_summary_csv(&mut buf, &[("test", 0.64)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "split,auc,band\ntest,0.64,good\n");

        let t = risk_bins(&[0.1, 0.2, 0.3, 0.4], &[false, true, false, true], 2).unwrap();
        assert_eq!(risk_bins_svg(&t).matches("<rect").count(), 2 + 2);
    }

    fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..120).prop_flat_map(|n| {
            (
                prop::collection::vec((0u8..12).prop_map(|v| f64::from(v) / 11.0), n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
        .prop_filter("both classes", |(_, l)| l.iter().any(|&v| v) && l.iter().any(|&v| !v))
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_and_trapezoid((s, l) in scored()) {
            let roc = auc(&s, &l).unwrap();
            prop_assert!((roc.auc - pairwise(&s, &l)).abs() < 1e-12);
            prop_assert!((roc.auc - trapezoid_area(&roc.points)).abs() < 1e-12);
            for w in roc.points.windows(2) {
                prop_assert!(w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
            }
            prop_assert!(roc.points.len() <= s.len() + 1);
        }

        #[test]
        fn auc_is_rank_invariant((s, l) in scored(), a in 0.1f64..5.0, b in -3.0f64..3.0) {
            let t: Vec<f64> = s.iter().map(|&v| (a * v + b).exp()).collect();
            prop_assert_eq!(auc_value(&s, &l).unwrap(), auc_value(&t, &l).unwrap());
        }

        #[test]
        fn flipped_labels_complement((s, l) in scored()) {
            let f: Vec<bool> = l.iter().map(|v| !v).collect();
            prop_assert!((auc_value(&s, &l).unwrap() + auc_value(&s, &f).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn bins_are_equal_frequency(
            s in prop::collection::vec(0.0f64..1.0, 10..300),
            k in 2usize..10,
        ) {
            let l: Vec<bool> = s.iter().map(|&v| v > 0.5).collect();
            let t = risk_bins(&s, &l, k).unwrap();
            let max = t.bins.iter().map(|b| b.count).max().unwrap();
            let min = t.bins.iter().map(|b| b.count).min().unwrap();
            prop_assert!(max - min <= 1);
            prop_assert_eq!(t.bins.iter().map(|b| b.count).sum::<usize>(), s.len());
            prop_assert!(t.bins.iter().all(|b| (0.0..=1.0).contains(&b.fraction)));
        }
    }
}
