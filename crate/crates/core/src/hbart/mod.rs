//! Heteroscedastic Bayesian additive regression trees.
//!
//! The outcome is modelled as `y = f(x) + s(x) * xi` with `xi ~ N(0, 1)`,
//! `f` a sum of `m` regression trees and `s` a product of `m'` positive
//! trees. Fitting is Metropolis-within-Gibbs: each tree in turn gets one
//! birth/death/change proposal against the current partial residual, then
//! conjugate leaf draws.
//!
//! Internally `y` is centered and scaled to unit sd. Mean leaves have prior
//! `N(0, tau^2)` with `tau = range(y) / (2 k sqrt(m))`. Each scale tree leaf
//! holds a variance multiplier with prior scaled-inverse-chi-square(nu, 1),
//! and the variance at `x` is `sigma0^2 * prod_j v_j(x)` where `sigma0` is
//! the residual sd of a least-squares fit. The per-tree `nu` is chosen so
//! the log of the product has the same prior spread as a single
//! scaled-inverse-chi-square with `scale_nu` degrees of freedom.

mod sampler;
mod tree;

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use sampler::MoveStats;
pub use tree::{DecisionTree, TreeNode};

use crate::data::DesignMatrix;
use crate::error::{invalid, Error, Result};
use sampler::{BinnedData, McTree, MeanLeaf, ScaleLeaf, TreeMoves};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Prior and run settings for [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HbartConfig {
    pub mean_trees: usize,
    pub scale_trees: usize,
    pub iterations: usize,
    pub burn_in: usize,
    /// Keep every `thin`-th post burn-in iteration for the posterior means.
    pub thin: usize,
    /// Store every `keep_every`-th kept draw in full for predicting new rows.
    pub keep_every: usize,
    /// Depth prior: P(split at depth d) = split_alpha / (1 + d)^split_beta.
    pub split_alpha: f64,
    pub split_beta: f64,
    /// Mean leaf prior puts the ensemble range within `k` prior sds.
    pub k: f64,
    /// Degrees of freedom of the overall variance prior.
    pub scale_nu: f64,
    pub max_cuts: usize,
    pub min_leaf_size: usize,
    pub prob_birth: f64,
    pub prob_death: f64,
}

impl Default for HbartConfig {
    fn default() -> Self {
        Self {
            mean_trees: 200,
            scale_trees: 40,
            iterations: 10_100,
            burn_in: 100,
            thin: 1,
            keep_every: 10,
            split_alpha: 0.95,
            split_beta: 2.0,
            k: 2.0,
            scale_nu: 10.0,
            max_cuts: 100,
            min_leaf_size: 5,
            prob_birth: 0.4,
            prob_death: 0.4,
        }
    }
}

impl HbartConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mean_trees == 0 || self.scale_trees == 0 {
            return Err(invalid("ensembles need at least one tree each"));
        }
        if self.iterations <= self.burn_in {
            return Err(invalid(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 || self.keep_every == 0 {
            return Err(invalid("thin and keep_every must be positive"));
        }
        if self.retained_draws() == 0 {
            return Err(invalid("no draws retained after burn-in and thinning"));
        }
        if !(self.split_alpha > 0.0 && self.split_alpha < 1.0) || self.split_beta < 0.0 {
            return Err(invalid("depth prior needs 0 < alpha < 1 and beta >= 0"));
        }
        if !(self.k > 0.0 && self.scale_nu > 0.0) {
            return Err(invalid("k and scale_nu must be positive"));
        }
        if !(self.prob_birth > 0.0 && self.prob_death > 0.0 && self.prob_birth + self.prob_death <= 1.0) {
            return Err(invalid("move probabilities must be positive and sum to at most 1"));
        }
        if self.max_cuts == 0 || self.max_cuts > u16::MAX as usize {
            return Err(invalid("max_cuts out of range"));
        }
        Ok(())
    }

    /// `(iterations - burn_in) / thin`, rounded down.
    pub fn retained_draws(&self) -> usize {
        (self.iterations.saturating_sub(self.burn_in)) / self.thin.max(1)
    }
}

/// One stored posterior draw of both ensembles, in outcome units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDraw {
    pub mean_trees: Vec<DecisionTree>,
    pub scale_trees: Vec<DecisionTree>,
}

impl EnsembleDraw {
    fn mean_at(&self, offset: f64, row: &[f64]) -> f64 {
        offset + self.mean_trees.iter().map(|t| t.evaluate(row)).sum::<f64>()
    }

    fn scale_at(&self, base: f64, row: &[f64]) -> f64 {
        base * self.scale_trees.iter().map(|t| t.evaluate(row)).product::<f64>()
    }
}

/// Posterior means of `f(x)` and `s(x)` per row, in months, plus per-draw
/// averages over rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub f_bar: Vec<f64>,
    pub s_bar: Vec<f64>,
    pub trace_f: Vec<f64>,
    pub trace_s: Vec<f64>,
}

/// Fitted ensemble.
///
/// A draw evaluates to `f(x) = mean_offset + sum of mean-tree leaves` and
/// `s(x) = scale_base * product of scale-tree leaves`; scale leaves are
/// positive sd multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsembleModel {
    pub format_version: u32,
    pub config: HbartConfig,
    pub seed: u64,
    pub column_names: Vec<String>,
    pub mean_offset: f64,
    pub scale_base: f64,
    pub retained_draws: usize,
    pub draws: Vec<EnsembleDraw>,
    /// Posterior summary of the training rows, averaged over every retained
    /// draw.
    pub train_summary: PosteriorSummary,
    pub mean_moves: MoveStats,
    pub scale_moves: MoveStats,
}

impl TreeEnsembleModel {
    /// Model with explicit draws and no training summary.
    pub fn from_draws(
        column_names: Vec<String>,
        mean_offset: f64,
        scale_base: f64,
        draws: Vec<EnsembleDraw>,
    ) -> Result<Self> {
        if draws.is_empty() {
            return Err(invalid("model needs at least one draw"));
        }
        let p = column_names.len();
        for d in &draws {
            for t in d.mean_trees.iter().chain(&d.scale_trees) {
                if t.max_column().is_some_and(|c| c >= p) {
                    return Err(Error::Format("tree splits on a column outside the design".into()));
                }
            }
            for t in &d.scale_trees {
                let all_positive = t
                    .nodes()
                    .iter()
                    .all(|n| !matches!(n, TreeNode::Leaf { value } if *value <= 0.0));
                if !all_positive {
                    return Err(Error::Format("scale tree with a non-positive leaf".into()));
                }
            }
        }
        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            config: HbartConfig::default(),
            seed: 0,
            column_names,
            mean_offset,
            scale_base,
            retained_draws: draws.len(),
            draws,
            train_summary: PosteriorSummary {
                f_bar: Vec::new(),
                s_bar: Vec::new(),
                trace_f: Vec::new(),
                trace_s: Vec::new(),
            },
            mean_moves: MoveStats::default(),
            scale_moves: MoveStats::default(),
        })
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let model: Self = serde_json::from_reader(r).map_err(|e| Error::Format(e.to_string()))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        Self::from_draws(model.column_names.clone(), model.mean_offset, model.scale_base, model.draws.clone())?;
        Ok(model)
    }
}

fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x + x2 / 2.0 + x2 / x * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0)))
}

/// Per-tree degrees of freedom so that `m'` independent log-leaf variances
/// add up to the spread of one leaf with `nu0` degrees of freedom.
pub(crate) fn per_tree_nu(nu0: f64, trees: usize) -> f64 {
    if trees == 1 {
        return nu0;
    }
    let target = trigamma(nu0 / 2.0) / trees as f64;
    let (mut lo, mut hi) = (nu0 / 2.0, 1e9);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if trigamma(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    2.0 * (lo * hi).sqrt()
}

/// Residual sd of a least-squares fit of `y` on the design with intercept,
/// solved through the pseudo-inverse of the normal equations.
fn linear_fit_sd(x: &DesignMatrix, y: &[f64]) -> f64 {
    let n = x.n_rows();
    let p = x.n_cols() + 1;
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for i in 0..n {
        row[0] = 1.0;
        row[1..].copy_from_slice(x.row(i));
        for a in 0..p {
            xty[a] += row[a] * y[i];
            for b in a..p {
                xtx[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[(a, b)] = xtx[(b, a)];
        }
    }
    let svd = xtx.svd(true, true);
    let tol = 1e-10 * svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let Ok(beta) = svd.solve(&xty, tol) else {
        return 1.0;
    };
    if n <= rank {
        return 1.0;
    }
    let sse: f64 = (0..n)
        .map(|i| {
            let pred = beta[0] + x.row(i).iter().zip(beta.iter().skip(1)).map(|(a, b)| a * b).sum::<f64>();
            (y[i] - pred).powi(2)
        })
        .sum();
    let sd = (sse / (n - rank) as f64).sqrt();
    if sd.is_finite() && sd > 1e-3 {
        sd
    } else {
        1e-3
    }
}

/// Runs the sampler and returns the fitted ensemble. Deterministic given
/// `seed`.
pub fn fit(x: &DesignMatrix, y: &[f64], cfg: &HbartConfig, seed: u64) -> Result<TreeEnsembleModel> {
    cfg.validate()?;
    let n = y.len();
    if x.n_rows() != n {
        return Err(invalid(format!("design has {} rows, outcome has {n}", x.n_rows())));
    }
    if n < 50 {
        return Err(invalid(format!("need at least 50 rows, got {n}")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("outcome contains non-finite values".into()));
    }
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let y_sd = (y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    if !(y_sd > 0.0) {
        return Err(Error::Numerical("outcome is constant; nothing to model".into()));
    }
    let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_sd).collect();
    let (ymin, ymax) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let tau = (ymax - ymin) / (2.0 * cfg.k * (cfg.mean_trees as f64).sqrt());
    let tau2 = tau * tau;
    let sigma0 = linear_fit_sd(x, &ys);
    let sigma0_sq = sigma0 * sigma0;
    let nu = per_tree_nu(cfg.scale_nu, cfg.scale_trees);

    let data = BinnedData::new(x, cfg.max_cuts);
    let moves = TreeMoves {
        split_alpha: cfg.split_alpha,
        split_beta: cfg.split_beta,
        prob_birth: cfg.prob_birth,
        prob_death: cfg.prob_death,
        min_leaf_size: cfg.min_leaf_size,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean_trees: Vec<McTree> = (0..cfg.mean_trees).map(|_| McTree::new(n, 0.0)).collect();
    let mut scale_trees: Vec<McTree> = (0..cfg.scale_trees).map(|_| McTree::new(n, 1.0)).collect();

    let mut resid = ys.clone();
    let mut var = vec![1.0; n];
    let mut weight = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut others = vec![0.0; n];

    let retained_target = cfg.retained_draws();
    let mut f_acc = vec![0.0; n];
    let mut s_acc = vec![0.0; n];
    let mut trace_f = Vec::with_capacity(retained_target);
    let mut trace_s = Vec::with_capacity(retained_target);
    let mut draws = Vec::new();
    let mut mean_moves = MoveStats::default();
    let mut scale_moves = MoveStats::default();
    let export = |mean_trees: &[McTree], scale_trees: &[McTree]| EnsembleDraw {
        mean_trees: mean_trees.iter().map(|t| t.export(&data, |v| v * y_sd)).collect(),
        scale_trees: scale_trees.iter().map(|t| t.export(&data, f64::sqrt)).collect(),
    };

    for it in 0..cfg.iterations {
        // Rebuild running products and residuals from the trees so rounding
        // error does not accumulate across iterations.
        for i in 0..n {
            let f: f64 = mean_trees.iter().map(|t| t.value_of_row(i)).sum();
            resid[i] = ys[i] - f;
            var[i] = scale_trees.iter().map(|t| t.value_of_row(i)).product();
            weight[i] = 1.0 / (sigma0_sq * var[i]);
        }

        for tree in mean_trees.iter_mut() {
            for i in 0..n {
                scratch[i] = resid[i] + tree.value_of_row(i);
            }
            let model = MeanLeaf {
                resid: &scratch,
                weight: &weight,
                tau2,
            };
            moves.update(tree, &data, &model, &mut rng, &mut mean_moves);
            for i in 0..n {
                resid[i] = scratch[i] - tree.value_of_row(i);
            }
        }

        for tree in scale_trees.iter_mut() {
            for i in 0..n {
                others[i] = var[i] / tree.value_of_row(i);
                scratch[i] = resid[i] * resid[i] / (sigma0_sq * others[i]);
            }
            let model = ScaleLeaf::new(&scratch, nu);
            moves.update(tree, &data, &model, &mut rng, &mut scale_moves);
            for i in 0..n {
                var[i] = others[i] * tree.value_of_row(i);
            }
        }

        if it >= cfg.burn_in && (it - cfg.burn_in + 1).is_multiple_of(cfg.thin) {
            let (mut fsum, mut ssum) = (0.0, 0.0);
            for i in 0..n {
                let f = y_mean + y_sd * (ys[i] - resid[i]);
                let s = y_sd * sigma0 * var[i].sqrt();
                f_acc[i] += f;
                s_acc[i] += s;
                fsum += f;
                ssum += s;
            }
            trace_f.push(fsum / n as f64);
            trace_s.push(ssum / n as f64);
            if trace_f.len() % cfg.keep_every == 0 {
                draws.push(export(&mean_trees, &scale_trees));
            }
        }
    }
    if draws.is_empty() {
        draws.push(export(&mean_trees, &scale_trees));
    }
    let kept = trace_f.len() as f64;
    debug_assert_eq!(trace_f.len(), retained_target);
    let train_summary = PosteriorSummary {
        f_bar: f_acc.into_iter().map(|v| v / kept).collect(),
        s_bar: s_acc.into_iter().map(|v| v / kept).collect(),
        trace_f,
        trace_s,
    };
    Ok(TreeEnsembleModel {
        format_version: MODEL_FORMAT_VERSION,
        config: cfg.clone(),
        seed,
        column_names: x.column_names().to_vec(),
        mean_offset: y_mean,
        scale_base: y_sd * sigma0,
        retained_draws: retained_target,
        draws,
        train_summary,
        mean_moves,
        scale_moves,
    })
}

const PREDICT_CHUNK: usize = 256;

/// Posterior means over the stored draws for each row of `x`.
pub fn predict(model: &TreeEnsembleModel, x: &DesignMatrix) -> Result<PosteriorSummary> {
    if x.n_cols() != model.column_names.len() {
        let missing = model
            .column_names
            .iter()
            .find(|c| !x.column_names().contains(c))
            .or_else(|| x.column_names().iter().find(|c| !model.column_names.contains(c)));
        return Err(Error::ColumnMismatch(format!(
            "design has {} columns, model expects {}; offending column `{}`",
            x.n_cols(),
            model.column_names.len(),
            missing.map_or("?", String::as_str)
        )));
    }
    if let Some((got, want)) = x
        .column_names()
        .iter()
        .zip(&model.column_names)
        .find(|(a, b)| a != b)
    {
        return Err(Error::ColumnMismatch(format!(
            "column `{got}` where the model expects `{want}`"
        )));
    }
    let n = x.n_rows();
    let d = model.draws.len();
    let starts: Vec<usize> = (0..n).step_by(PREDICT_CHUNK).collect();
    let chunks: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + PREDICT_CHUNK).min(n);
            let mut f_bar = Vec::with_capacity(end - start);
            let mut s_bar = Vec::with_capacity(end - start);
            let mut fd = vec![0.0; d];
            let mut sd = vec![0.0; d];
            for i in start..end {
                let row = x.row(i);
                let (mut fs, mut ss) = (0.0, 0.0);
                for (k, draw) in model.draws.iter().enumerate() {
                    let f = draw.mean_at(model.mean_offset, row);
                    let s = draw.scale_at(model.scale_base, row);
                    fs += f;
                    ss += s;
                    fd[k] += f;
                    sd[k] += s;
                }
                f_bar.push(fs / d as f64);
                s_bar.push(ss / d as f64);
            }
            (f_bar, s_bar, fd, sd)
        })
        .collect();
    let mut out = PosteriorSummary {
        f_bar: Vec::with_capacity(n),
        s_bar: Vec::with_capacity(n),
        trace_f: vec![0.0; d],
        trace_s: vec![0.0; d],
    };
    for (f, s, fd, sd) in chunks {
        out.f_bar.extend(f);
        out.s_bar.extend(s);
        for k in 0..d {
            out.trace_f[k] += fd[k];
            out.trace_s[k] += sd[k];
        }
    }
    if n > 0 {
        for k in 0..d {
            out.trace_f[k] /= n as f64;
            out.trace_s[k] /= n as f64;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RSquared {
    pub r2: f64,
    pub adjusted_r2: f64,
}

/// `r2 = 1 - SSE/SST` of `fitted` against `y`, and the adjusted value for
/// `p` predictors.
pub fn r_squared(fitted: &[f64], y: &[f64], p: usize) -> Result<RSquared> {
    let n = y.len();
    if fitted.len() != n {
        return Err(invalid(format!("{} fitted values for {n} outcomes", fitted.len())));
    }
    if n <= p + 1 {
        return Err(invalid(format!("need n > p + 1, got n = {n}, p = {p}")));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::Numerical("outcome has zero total sum of squares".into()));
    }
    let sse: f64 = y.iter().zip(fitted).map(|(a, b)| (a - b).powi(2)).sum();
    let r2 = 1.0 - sse / sst;
    let adjusted_r2 = 1.0 - (1.0 - r2) * (n - 1) as f64 / (n - p - 1) as f64;
    Ok(RSquared { r2, adjusted_r2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_draw(mean: f64, scale: f64) -> EnsembleDraw {
        EnsembleDraw {
            mean_trees: vec![DecisionTree::constant(mean)],
            scale_trees: vec![DecisionTree::constant(scale)],
        }
    }

    fn design(n: usize) -> DesignMatrix {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        DesignMatrix::from_rows(vec!["x".into()], &rows).unwrap()
    }

    #[test]
    fn constant_trees_predict_their_leaves() {
        let m = TreeEnsembleModel::from_draws(vec!["x".into()], 0.0, 1.0, vec![constant_draw(7.0, 2.0)]).unwrap();
        let s = predict(&m, &design(5)).unwrap();
        assert!(s.f_bar.iter().all(|&v| v == 7.0));
        assert!(s.s_bar.iter().all(|&v| v == 2.0));
        assert_eq!(s.trace_f, vec![7.0]);
    }

    #[test]
    fn predictions_average_over_draws() {
        let m = TreeEnsembleModel::from_draws(
            vec!["x".into()],
            0.0,
            1.0,
            vec![constant_draw(4.0, 1.0), constant_draw(6.0, 3.0)],
        )
        .unwrap();
        let s = predict(&m, &design(3)).unwrap();
        assert_eq!(s.f_bar, vec![5.0; 3]);
        assert_eq!(s.s_bar, vec![2.0; 3]);
        assert_eq!(s.trace_f.len(), 2);
    }

    #[test]
    fn predict_names_offending_column() {
        let m = TreeEnsembleModel::from_draws(vec!["x".into()], 0.0, 1.0, vec![constant_draw(1.0, 1.0)]).unwrap();
        let other = DesignMatrix::from_rows(vec!["z".into()], &[vec![1.0]]).unwrap();
        match predict(&m, &other) {
            Err(Error::ColumnMismatch(msg)) => assert!(msg.contains('z') && msg.contains('x')),
            r => panic!("unexpected {r:?}"),
        }
        let wide = DesignMatrix::from_rows(vec!["x".into(), "w".into()], &[vec![1.0, 2.0]]).unwrap();
        match predict(&m, &wide) {
            Err(Error::ColumnMismatch(msg)) => assert!(msg.contains("`w`")),
            r => panic!("unexpected {r:?}"),
        }
    }

    #[test]
    fn from_draws_rejects_nonpositive_scale() {
        assert!(TreeEnsembleModel::from_draws(vec!["x".into()], 0.0, 1.0, vec![constant_draw(1.0, 0.0)]).is_err());
    }

    #[test]
    fn r_squared_cases() {
        let y = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(r_squared(&y, &y, 1).unwrap().r2, 1.0);
        assert_eq!(r_squared(&[2.5; 4], &y, 1).unwrap().r2, 0.0);
        // SSE = 0.01 + 0.01 + 0.04 + 0.04 = 0.1, SST = 5
        let r = r_squared(&[1.1, 1.9, 3.2, 3.8], &y, 1).unwrap();
        assert!((r.r2 - 0.98).abs() < 1e-12);
        assert!((r.adjusted_r2 - 0.97).abs() < 1e-12);
        assert!(r_squared(&[1.0; 4], &[3.0; 4], 1).is_err());
        assert!(r_squared(&y, &y, 3).is_err());
    }

    #[test]
    fn trigamma_reference_values() {
        // psi'(1) = pi^2 / 6, psi'(0.5) = pi^2 / 2, psi'(5) = pi^2/6 - (1 + 1/4 + 1/9 + 1/16)
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((trigamma(1.0) - pi2 / 6.0).abs() < 1e-12);
        assert!((trigamma(0.5) - pi2 / 2.0).abs() < 1e-12);
        let t5 = pi2 / 6.0 - (1.0 + 0.25 + 1.0 / 9.0 + 1.0 / 16.0);
        assert!((trigamma(5.0) - t5).abs() < 1e-12);
    }

    #[test]
    fn per_tree_nu_splits_log_variance() {
        let nu = per_tree_nu(10.0, 40);
        assert!((40.0 * trigamma(nu / 2.0) - trigamma(5.0)).abs() < 1e-10);
        assert_eq!(per_tree_nu(10.0, 1), 10.0);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let cfg = HbartConfig {
            iterations: 20,
            burn_in: 10,
            mean_trees: 5,
            scale_trees: 2,
            ..HbartConfig::default()
        };
        let x = design(60);
        assert!(matches!(fit(&x, &[3.0; 60], &cfg, 1), Err(Error::Numerical(_))));
        let mut y: Vec<f64> = (0..60).map(f64::from).collect();
        y[3] = f64::NAN;
        assert!(matches!(fit(&x, &y, &cfg, 1), Err(Error::Numerical(_))));
        let y: Vec<f64> = (0..40).map(f64::from).collect();
        assert!(fit(&design(40), &y, &cfg, 1).is_err());
        let bad = HbartConfig {
            iterations: 10,
            burn_in: 10,
            ..cfg
        };
        let y: Vec<f64> = (0..60).map(f64::from).collect();
        assert!(fit(&x, &y, &bad, 1).is_err());
    }

    #[test]
    fn draw_bookkeeping_and_positivity() {
        let cfg = HbartConfig {
            iterations: 130,
            burn_in: 30,
            thin: 2,
            keep_every: 5,
            mean_trees: 10,
            scale_trees: 3,
            ..HbartConfig::default()
        };
        let n = 200;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![(i % 10) as f64, (i % 7) as f64]).collect();
        let x = DesignMatrix::from_rows(vec!["a".into(), "b".into()], &rows).unwrap();
        let y: Vec<f64> = rows.iter().enumerate().map(|(i, r)| 3.0 * r[0] + ((i * 37) % 11) as f64).collect();
        let m = fit(&x, &y, &cfg, 5).unwrap();
        assert_eq!(m.retained_draws, 50);
        assert_eq!(m.train_summary.trace_f.len(), 50);
        assert_eq!(m.train_summary.trace_s.len(), 50);
        assert_eq!(m.draws.len(), 10);
        for draw in &m.draws {
            for i in 0..n {
                assert!(draw.scale_at(m.scale_base, x.row(i)) > 0.0);
            }
        }
        assert!(m.train_summary.s_bar.iter().all(|&s| s > 0.0));

        let again = fit(&x, &y, &cfg, 5).unwrap();
        assert_eq!(m, again);

        let mut buf = Vec::new();
        m.write_json(&mut buf).unwrap();
        let back = TreeEnsembleModel::read_json(buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }
}
