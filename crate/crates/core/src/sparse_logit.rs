//! L1-penalized logistic regression over a regularization path, with
//! k-fold cross-validated choice of the penalty by held-out AUC.
//!
//! The objective at penalty `lambda` is
//! `(1/n) sum [log(1 + exp(eta_i)) - y_i eta_i] + lambda * sum |beta_j|`
//! on internally standardized columns, intercept unpenalized. Each outer
//! step solves the penalized quadratic model at exact IRLS weights by
//! cyclic coordinate descent and is accepted through a backtracking line
//! search on the true objective, so the objective never increases.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DesignMatrix;
use crate::error::{invalid, Error, Result};
use crate::eval::auc_value;
use crate::stats::sigmoid;

const MIN_WEIGHT: f64 = 1e-10;
const FOLD_RESEED: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoConfig {
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    pub folds: usize,
    /// Stop a fit when no coefficient moves by more than this in a step.
    pub tol: f64,
    pub max_sweeps: usize,
    pub standardize: bool,
    /// The full-data path ends early once the fraction of null deviance
    /// explained grows by less than this relative amount between penalties,
    /// or exceeds `max_dev_ratio`. Zero disables the rule.
    pub min_dev_gain: f64,
    pub max_dev_ratio: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            n_lambda: 100,
            lambda_min_ratio: 1e-4,
            folds: 10,
            tol: 1e-7,
            max_sweeps: 10_000,
            standardize: true,
            min_dev_gain: 1e-5,
            max_dev_ratio: 0.999,
        }
    }
}

impl LassoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_lambda == 0 {
            return Err(invalid("n_lambda must be positive"));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(invalid("lambda_min_ratio must lie in (0, 1)"));
        }
        if self.folds < 2 {
            return Err(invalid("need at least 2 folds"));
        }
        if !(self.tol > 0.0) || self.max_sweeps == 0 {
            return Err(invalid("tol and max_sweeps must be positive"));
        }
        if !(self.min_dev_gain >= 0.0) || !(self.max_dev_ratio > 0.0 && self.max_dev_ratio <= 1.0) {
            return Err(invalid("min_dev_gain must be >= 0 and max_dev_ratio in (0, 1]"));
        }
        Ok(())
    }
}

/// Sparse column-major design holding the raw nonzeros; centering and
/// scaling are applied implicitly, so a standardized entry is
/// `(x - center) / scale`.
#[derive(Debug, Clone)]
pub struct Standardized {
    n: usize,
    cols: Vec<SparseCol>,
    centers: Vec<f64>,
    scales: Vec<f64>,
}

#[derive(Debug, Clone)]
struct SparseCol {
    idx: Vec<u32>,
    val: Vec<f64>,
}

impl SparseCol {
    fn dot(&self, v: &[f64]) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&i, x)| x * v[i as usize]).sum()
    }

    fn weighted_square(&self, w: &[f64]) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&i, x)| w[i as usize] * x * x).sum()
    }

    fn dot_w(&self, w: &[f64], v: &[f64]) -> f64 {
        self.idx
            .iter()
            .zip(&self.val)
            .map(|(&i, x)| x * w[i as usize] * v[i as usize])
            .sum()
    }
}

impl Standardized {
    /// Centers columns and divides by their population sd; with
    /// `standardize` off the columns are used unchanged.
    pub fn new(x: &DesignMatrix, standardize: bool) -> Result<Self> {
        let n = x.n_rows();
        let nf = n as f64;
        let mut cols = Vec::with_capacity(x.n_cols());
        let mut centers = Vec::with_capacity(x.n_cols());
        let mut scales = Vec::with_capacity(x.n_cols());
        for j in 0..x.n_cols() {
            let col = x.column(j);
            if standardize {
                let mean = col.iter().sum::<f64>() / nf;
                let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf).sqrt();
                if !(sd > 0.0) {
                    return Err(invalid(format!(
                        "column '{}' has zero variance",
                        x.column_names()[j]
                    )));
                }
                centers.push(mean);
                scales.push(sd);
            } else {
                centers.push(0.0);
                scales.push(1.0);
            }
            let (idx, val) = col
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i as u32, v))
                .unzip();
            cols.push(SparseCol { idx, val });
        }
        Ok(Self { n, cols, centers, scales })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    fn select_rows(&self, rows: &[usize]) -> Self {
        let mut pos = vec![u32::MAX; self.n];
        for (k, &i) in rows.iter().enumerate() {
            pos[i] = k as u32;
        }
        let cols = self
            .cols
            .iter()
            .map(|c| {
                let (idx, val) = c
                    .idx
                    .iter()
                    .zip(&c.val)
                    .filter(|(&i, _)| pos[i as usize] != u32::MAX)
                    .map(|(&i, &v)| (pos[i as usize], v))
                    .unzip();
                SparseCol { idx, val }
            })
            .collect();
        Self {
            n: rows.len(),
            cols,
            centers: self.centers.clone(),
            scales: self.scales.clone(),
        }
    }

    /// `sum_i xs_ij v_i` for the standardized column `j`.
    fn col_dot(&self, j: usize, v: &[f64], v_sum: f64) -> f64 {
        (self.cols[j].dot(v) - self.centers[j] * v_sum) / self.scales[j]
    }

    fn linear(&self, c: &Coefs) -> Vec<f64> {
        let shift = c
            .beta
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0.0)
            .fold(c.intercept, |acc, (j, b)| acc - b * self.centers[j] / self.scales[j]);
        let mut eta = vec![shift; self.n];
        for (j, &b) in c.beta.iter().enumerate() {
            if b != 0.0 {
                let f = b / self.scales[j];
                let col = &self.cols[j];
                for (&i, x) in col.idx.iter().zip(&col.val) {
                    eta[i as usize] += f * x;
                }
            }
        }
        eta
    }
}

/// Coefficients on the standardized scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefs {
    pub intercept: f64,
    pub beta: Vec<f64>,
}

fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn nll(eta: &[f64], y: &[f64]) -> f64 {
    eta.iter().zip(y).map(|(&e, &t)| softplus(e) - t * e).sum::<f64>() / y.len() as f64
}

fn l1(beta: &[f64]) -> f64 {
    beta.iter().map(|b| b.abs()).sum()
}

/// Penalized objective at `c`.
pub fn objective(z: &Standardized, y: &[f64], c: &Coefs, lambda: f64) -> f64 {
    nll(&z.linear(c), y) + lambda * l1(&c.beta)
}

fn as_targets(labels: &[bool]) -> Vec<f64> {
    labels.iter().map(|&l| f64::from(u8::from(l))).collect()
}

/// Smallest penalty at which the null model is optimal.
pub fn lambda_max(z: &Standardized, y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    let centered: Vec<f64> = y.iter().map(|t| t - ybar).collect();
    let total: f64 = centered.iter().sum();
    (0..z.n_cols())
        .map(|j| (z.col_dot(j, &centered, total) / n).abs())
        .fold(0.0, f64::max)
}

fn null_coefs(y: &[f64], p: usize) -> Coefs {
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    Coefs {
        intercept: (ybar / (1.0 - ybar)).ln(),
        beta: vec![0.0; p],
    }
}

/// Largest KKT violation of `c` at `lambda`, intercept included.
pub fn kkt_violation(z: &Standardized, y: &[f64], c: &Coefs, lambda: f64) -> f64 {
    let n = y.len() as f64;
    let resid: Vec<f64> = z.linear(c).iter().zip(y).map(|(&e, &t)| t - sigmoid(e)).collect();
    let total: f64 = resid.iter().sum();
    let mut worst = (total / n).abs();
    for (j, &b) in c.beta.iter().enumerate() {
        let g = z.col_dot(j, &resid, total) / n;
        let v = if b == 0.0 {
            (g.abs() - lambda).max(0.0)
        } else {
            (g - lambda * b.signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub coefs: Coefs,
    pub sweeps: usize,
    /// False when the sweep budget ran out before the change fell below tol.
    pub converged: bool,
    /// Objective after each accepted outer step, starting value first.
    pub objectives: Vec<f64>,
}

/// Minimizes the penalized objective at one `lambda` from `init`.
pub fn fit_lambda(
    z: &Standardized,
    y: &[f64],
    lambda: f64,
    init: &Coefs,
    cfg: &LassoConfig,
) -> Result<FitOutcome> {
    let n = y.len();
    let p = z.n_cols();
    if lambda >= lambda_max(z, y) {
        let coefs = null_coefs(y, p);
        let obj = objective(z, y, &coefs, lambda);
        return Ok(FitOutcome {
            coefs,
            sweeps: 0,
            converged: true,
            objectives: vec![obj],
        });
    }
    let nf = n as f64;
    let inner_tol = 0.1 * cfg.tol;
    let mut cur = init.clone();
    let mut eta = z.linear(&cur);
    let mut obj = nll(&eta, y) + lambda * l1(&cur.beta);
    let mut objectives = vec![obj];
    let mut sweeps = 0;
    let mut converged = true;
    let mut active: Vec<bool> = cur.beta.iter().map(|&b| b != 0.0).collect();

    loop {
        // working residual r = rho + theta, with rho sparse-updated
        let mut w = Vec::with_capacity(n);
        let mut rho = Vec::with_capacity(n);
        for (&e, &t) in eta.iter().zip(y) {
            let pr = sigmoid(e);
            let wi = (pr * (1.0 - pr)).max(MIN_WEIGHT);
            w.push(wi);
            rho.push((t - pr) / wi);
        }
        let mut theta = 0.0;
        let sum_w: f64 = w.iter().sum();
        let wx: Vec<f64> = z.cols.iter().map(|c| c.dot(&w)).collect();
        let xw2: Vec<f64> = (0..p)
            .map(|j| {
                let (c, s) = (z.centers[j], z.scales[j]);
                (z.cols[j].weighted_square(&w) - 2.0 * c * wx[j] + c * c * sum_w) / (s * s * nf)
            })
            .collect();
        let mut next = cur.clone();

        // coordinate descent on the weighted quadratic model
        let mut full = true;
        loop {
            let mut swrho: f64 = w.iter().zip(&rho).map(|(a, b)| a * b).sum();
            let mut max_change: f64 = 0.0;
            let d0 = (swrho + theta * sum_w) / sum_w;
            if d0 != 0.0 {
                next.intercept += d0;
                theta -= d0;
                max_change = d0.abs();
            }
            for j in 0..p {
                if !(full || active[j]) || xw2[j] <= 0.0 {
                    continue;
                }
                let col = &z.cols[j];
                let (c, s) = (z.centers[j], z.scales[j]);
                let old = next.beta[j];
                let swr = swrho + theta * sum_w;
                let g = (col.dot_w(&w, &rho) + theta * wx[j] - c * swr) / (s * nf);
                let new = soft_threshold(g + xw2[j] * old, lambda) / xw2[j];
                if new != old {
                    let d = new - old;
                    let f = d / s;
                    for (&i, x) in col.idx.iter().zip(&col.val) {
                        rho[i as usize] -= f * x;
                    }
                    swrho -= f * wx[j];
                    theta += f * c;
                    next.beta[j] = new;
                    max_change = max_change.max(d.abs());
                    active[j] = true;
                }
            }
            sweeps += 1;
            if sweeps >= cfg.max_sweeps {
                break;
            }
            if max_change < inner_tol {
                if full {
                    break;
                }
                full = true;
            } else {
                full = false;
            }
        }

        // backtracking on the true objective along next - cur
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = Coefs {
                intercept: cur.intercept + step * (next.intercept - cur.intercept),
                beta: cur
                    .beta
                    .iter()
                    .zip(&next.beta)
                    .map(|(&a, &b)| if step == 1.0 { b } else { a + step * (b - a) })
                    .collect(),
            };
            let trial_eta = z.linear(&trial);
            let trial_obj = nll(&trial_eta, y) + lambda * l1(&trial.beta);
            if trial_obj <= obj {
                accepted = Some((trial, trial_eta, trial_obj));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, trial_eta, trial_obj)) = accepted else {
            // no decrease is representable: cur is optimal to rounding
            break;
        };
        let change = trial
            .beta
            .iter()
            .zip(&cur.beta)
            .map(|(a, b)| (a - b).abs())
            .fold((trial.intercept - cur.intercept).abs(), f64::max);
        cur = trial;
        eta = trial_eta;
        obj = trial_obj;
        objectives.push(obj);
        if !obj.is_finite() || cur.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Numerical(format!("fit diverged at lambda {lambda}")));
        }
        if change < cfg.tol {
            break;
        }
        if sweeps >= cfg.max_sweeps {
            log::debug!("lambda {lambda}: stopped after {} sweeps without converging", cfg.max_sweeps);
            converged = false;
            break;
        }
    }
    Ok(FitOutcome {
        coefs: cur,
        sweeps,
        converged,
        objectives,
    })
}

/// Log-spaced, strictly decreasing grid from `lmax` to `lmax * ratio`.
pub fn lambda_grid(lmax: f64, n_lambda: usize, ratio: f64) -> Vec<f64> {
    if n_lambda == 1 {
        return vec![lmax];
    }
    (0..n_lambda)
        .map(|k| lmax * ratio.powf(k as f64 / (n_lambda - 1) as f64))
        .collect()
}

#[derive(Debug, Clone)]
pub struct LambdaPath {
    pub lambdas: Vec<f64>,
    pub fits: Vec<Coefs>,
    pub sweeps: Vec<usize>,
    design: Standardized,
    targets: Vec<f64>,
}

impl LambdaPath {
    pub fn design(&self) -> &Standardized {
        &self.design
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

fn check_labels(labels: &[bool], rows: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(invalid(format!("{} labels for {rows} rows", labels.len())));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(invalid("labels contain a single class"));
    }
    Ok(())
}

fn solve_grid(z: &Standardized, y: &[f64], lambdas: &[f64], cfg: &LassoConfig) -> Result<(Vec<Coefs>, Vec<usize>)> {
    let mut warm = null_coefs(y, z.n_cols());
    let mut fits = Vec::with_capacity(lambdas.len());
    let mut sweeps = Vec::with_capacity(lambdas.len());
    let mut unconverged = 0;
    for &lambda in lambdas {
        let out = fit_lambda(z, y, lambda, &warm, cfg)?;
        unconverged += usize::from(!out.converged);
        warm = out.coefs.clone();
        fits.push(out.coefs);
        sweeps.push(out.sweeps);
    }
    warn_unconverged(unconverged, lambdas.len(), cfg);
    Ok((fits, sweeps))
}

fn warn_unconverged(count: usize, total: usize, cfg: &LassoConfig) {
    if count > 0 {
        log::warn!("{count} of {total} penalties stopped at the {}-sweep budget", cfg.max_sweeps);
    }
}

/// Fraction of the null deviance explained by `c`.
fn dev_ratio(z: &Standardized, y: &[f64], c: &Coefs, null_nll: f64) -> f64 {
    1.0 - nll(&z.linear(c), y) / null_nll
}

/// Warm-started path that ends at the first penalty whose deviance ratio
/// gains less than `min_dev_gain` (relative) on the previous one, or exceeds
/// `max_dev_ratio`.
fn solve_path(z: &Standardized, y: &[f64], lambdas: &[f64], cfg: &LassoConfig) -> Result<(Vec<Coefs>, Vec<usize>)> {
    let null_nll = nll(&z.linear(&null_coefs(y, z.n_cols())), y);
    let mut warm = null_coefs(y, z.n_cols());
    let mut fits = Vec::with_capacity(lambdas.len());
    let mut sweeps = Vec::with_capacity(lambdas.len());
    let mut prev = 0.0;
    let mut unconverged = 0;
    for &lambda in lambdas {
        let out = fit_lambda(z, y, lambda, &warm, cfg)?;
        unconverged += usize::from(!out.converged);
        warm = out.coefs.clone();
        let r = dev_ratio(z, y, &out.coefs, null_nll);
        let active = out.coefs.beta.iter().any(|&b| b != 0.0);
        fits.push(out.coefs);
        sweeps.push(out.sweeps);
        if active && (r - prev < cfg.min_dev_gain * r || r > cfg.max_dev_ratio) {
            log::info!("path stopped at {} of {} penalties (deviance ratio {r:.6})", fits.len(), lambdas.len());
            break;
        }
        prev = r;
    }
    warn_unconverged(unconverged, fits.len(), cfg);
    Ok((fits, sweeps))
}

/// Warm-started fits over the full penalty grid.
pub fn fit_path(x: &DesignMatrix, labels: &[bool], cfg: &LassoConfig) -> Result<LambdaPath> {
    cfg.validate()?;
    check_labels(labels, x.n_rows())?;
    if x.n_cols() == 0 {
        return Err(invalid("design has no columns"));
    }
    let design = Standardized::new(x, cfg.standardize)?;
    let targets = as_targets(labels);
    let lmax = lambda_max(&design, &targets);
    if !(lmax > 0.0) {
        return Err(Error::Numerical("no column is associated with the labels".into()));
    }
    let mut lambdas = lambda_grid(lmax, cfg.n_lambda, cfg.lambda_min_ratio);
    let (fits, sweeps) = solve_path(&design, &targets, &lambdas, cfg)?;
    lambdas.truncate(fits.len());
    Ok(LambdaPath {
        lambdas,
        fits,
        sweeps,
        design,
        targets,
    })
}

fn fold_ids(labels: &[bool], k: usize, seed: u64) -> Option<Vec<usize>> {
    let mut perm: Vec<usize> = (0..labels.len()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; labels.len()];
    let mut classes = vec![(false, false); k];
    for (pos, &row) in perm.iter().enumerate() {
        let f = pos % k;
        fold[row] = f;
        if labels[row] {
            classes[f].0 = true;
        } else {
            classes[f].1 = true;
        }
    }
    classes.iter().all(|&(a, b)| a && b).then_some(fold)
}

/// Deterministic fold labels in which every fold holds both classes,
/// reshuffling once with a derived seed.
pub fn fold_assignment(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || k > labels.len() {
        return Err(invalid(format!("cannot form {k} folds from {} rows", labels.len())));
    }
    fold_ids(labels, k, seed)
        .or_else(|| fold_ids(labels, k, seed ^ FOLD_RESEED))
        .ok_or_else(|| invalid(format!("some of {k} folds lack a class after reshuffling")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCurve {
    pub lambdas: Vec<f64>,
    pub mean_auc: Vec<f64>,
    pub se_auc: Vec<f64>,
    pub nonzero: Vec<usize>,
    pub best_index: usize,
    pub chosen_index: usize,
    pub fold_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseLogitModel {
    pub column_names: Vec<String>,
    pub groups: Vec<String>,
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
    /// Coefficients on the original column scale.
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub fold_seed: u64,
}

impl SparseLogitModel {
    fn from_coefs(x: &DesignMatrix, z: &Standardized, c: &Coefs, lambda: f64, fold_seed: u64) -> Self {
        let coefficients: Vec<f64> = c.beta.iter().zip(&z.scales).map(|(b, s)| b / s).collect();
        let shift: f64 = coefficients.iter().zip(&z.centers).map(|(b, m)| b * m).sum();
        Self {
            column_names: x.column_names().to_vec(),
            groups: x.groups().to_vec(),
            centers: z.centers.clone(),
            scales: z.scales.clone(),
            intercept: c.intercept - shift,
            coefficients,
            lambda,
            fold_seed,
        }
    }

    pub fn n_nonzero(&self) -> usize {
        self.coefficients.iter().filter(|&&b| b != 0.0).count()
    }
}

/// Chooses the penalty by `folds`-fold cross-validated AUC and refits the
/// full-data model there. The folds reuse the full-data standardization.
pub fn select_lambda(
    path: &LambdaPath,
    x: &DesignMatrix,
    labels: &[bool],
    cfg: &LassoConfig,
    seed: u64,
) -> Result<(SparseLogitModel, CvCurve)> {
    cfg.validate()?;
    check_labels(labels, x.n_rows())?;
    if x.n_rows() != path.design.n_rows() || x.column_names().len() != path.design.n_cols() {
        return Err(invalid("path was fitted on a different design"));
    }
    let fold = fold_assignment(labels, cfg.folds, seed)?;
    let per_fold: Vec<Vec<f64>> = (0..cfg.folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..fold.len()).filter(|&i| fold[i] != f).collect();
            let test: Vec<usize> = (0..fold.len()).filter(|&i| fold[i] == f).collect();
            let zt = path.design.select_rows(&train);
            let yt: Vec<f64> = train.iter().map(|&i| path.targets[i]).collect();
            let zh = path.design.select_rows(&test);
            let lh: Vec<bool> = test.iter().map(|&i| labels[i]).collect();
            let (fits, _) = solve_grid(&zt, &yt, &path.lambdas, cfg)?;
            fits.iter().map(|c| auc_value(&zh.linear(c), &lh)).collect()
        })
        .collect::<Result<_>>()?;

    let k = cfg.folds as f64;
    let mut mean_auc = Vec::with_capacity(path.lambdas.len());
    let mut se_auc = Vec::with_capacity(path.lambdas.len());
    for l in 0..path.lambdas.len() {
        let mean = per_fold.iter().map(|a| a[l]).sum::<f64>() / k;
        let var = per_fold.iter().map(|a| (a[l] - mean).powi(2)).sum::<f64>() / (k - 1.0);
        mean_auc.push(mean);
        se_auc.push((var / k).sqrt());
    }
    let best_index = (0..mean_auc.len())
        .fold(0, |b, l| if mean_auc[l] > mean_auc[b] { l } else { b });
    let bar = mean_auc[best_index] - se_auc[best_index];
    let chosen_index = (0..=best_index).find(|&l| mean_auc[l] >= bar).unwrap_or(best_index);
    let nonzero = path
        .fits
        .iter()
        .map(|c| c.beta.iter().filter(|&&b| b != 0.0).count())
        .collect();
    let model = SparseLogitModel::from_coefs(
        x,
        &path.design,
        &path.fits[chosen_index],
        path.lambdas[chosen_index],
        seed,
    );
    let curve = CvCurve {
        lambdas: path.lambdas.clone(),
        mean_auc,
        se_auc,
        nonzero,
        best_index,
        chosen_index,
        fold_seed: seed,
    };
    Ok((model, curve))
}

/// Path fit followed by cross-validated selection.
pub fn train(x: &DesignMatrix, labels: &[bool], cfg: &LassoConfig, seed: u64) -> Result<(SparseLogitModel, CvCurve)> {
    let path = fit_path(x, labels, cfg)?;
    select_lambda(&path, x, labels, cfg, seed)
}

/// Unpenalized fit at `lambda = 0` on the original design.
pub fn fit_unpenalized(x: &DesignMatrix, labels: &[bool], cfg: &LassoConfig) -> Result<SparseLogitModel> {
    cfg.validate()?;
    check_labels(labels, x.n_rows())?;
    let z = Standardized::new(x, cfg.standardize)?;
    let y = as_targets(labels);
    let out = fit_lambda(&z, &y, 0.0, &null_coefs(&y, z.n_cols()), cfg)?;
    Ok(SparseLogitModel::from_coefs(x, &z, &out.coefs, 0.0, 0))
}

/// `sigma(intercept + row . beta)` per row.
pub fn predict_risk(model: &SparseLogitModel, x: &DesignMatrix) -> Result<Vec<f64>> {
    if x.column_names() != model.column_names.as_slice() {
        let first = model
            .column_names
            .iter()
            .zip(x.column_names())
            .find(|(a, b)| a != b)
            .map(|(a, _)| a.clone())
            .unwrap_or_else(|| format!("{} vs {} columns", model.column_names.len(), x.n_cols()));
        return Err(Error::ColumnMismatch(first));
    }
    Ok((0..x.n_rows())
        .map(|i| {
            let eta = x
                .row(i)
                .iter()
                .zip(&model.coefficients)
                .fold(model.intercept, |acc, (v, b)| acc + v * b);
            sigmoid(eta)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorCoefficients {
    pub factor: String,
    pub nonzero: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

/// Nonzero count and range per factor, in first-appearance order of
/// `grouping` (one entry per model column).
pub fn coefficient_report(model: &SparseLogitModel, grouping: &[String]) -> Result<Vec<FactorCoefficients>> {
    if grouping.len() != model.coefficients.len() {
        return Err(invalid(format!(
            "grouping has {} entries for {} coefficients",
            grouping.len(),
            model.coefficients.len()
        )));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut acc: BTreeMap<&str, FactorCoefficients> = BTreeMap::new();
    for (g, &b) in grouping.iter().zip(&model.coefficients) {
        let e = acc.entry(g).or_insert_with(|| {
            order.push(g);
            FactorCoefficients {
                factor: g.clone(),
                nonzero: 0,
                min: None,
                max: None,
            }
        });
        if b != 0.0 {
            e.nonzero += 1;
            e.min = Some(e.min.map_or(b, |m| m.min(b)));
            e.max = Some(e.max.map_or(b, |m| m.max(b)));
        }
    }
    Ok(order.into_iter().map(|g| acc.remove(g).expect("seen group")).collect())
}

/// `variable,nonzero_coefficients,min_coefficient,max_coefficient`, the
/// maximum left blank when it equals the minimum.
pub fn write_coefficients_csv<W: Write>(w: W, rows: &[FactorCoefficients]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["variable", "nonzero_coefficients", "min_coefficient", "max_coefficient"])?;
    for r in rows {
        let min = r.min.map(|v| v.to_string()).unwrap_or_default();
        let max = match (r.min, r.max) {
            (Some(a), Some(b)) if a != b => b.to_string(),
            _ => String::new(),
        };
        out.write_record([r.factor.clone(), r.nonzero.to_string(), min, max])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_cv_curve_csv<W: Write>(w: W, cv: &CvCurve) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["lambda", "mean_auc", "se_auc", "nonzero", "chosen"])?;
    for l in 0..cv.lambdas.len() {
        out.write_record([
            cv.lambdas[l].to_string(),
            cv.mean_auc[l].to_string(),
            cv.se_auc[l].to_string(),
            cv.nonzero[l].to_string(),
            u8::from(l == cv.chosen_index).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

const MODEL_MAGIC: &str = "sentrisk-sparse-logit 1";

/// Writes the model as tab-separated text.
pub fn write_model<W: Write>(mut w: W, m: &SparseLogitModel) -> Result<()> {
    writeln!(w, "{MODEL_MAGIC}")?;
    writeln!(w, "lambda\t{}", m.lambda)?;
    writeln!(w, "fold_seed\t{}", m.fold_seed)?;
    writeln!(w, "intercept\t{}", m.intercept)?;
    writeln!(w, "columns\t{}", m.column_names.len())?;
    writeln!(w, "name\tgroup\tcenter\tscale\tcoefficient")?;
    for j in 0..m.column_names.len() {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            m.column_names[j], m.groups[j], m.centers[j], m.scales[j], m.coefficients[j]
        )?;
    }
    Ok(())
}

pub fn read_model<R: BufRead>(r: R) -> Result<SparseLogitModel> {
    let bad = |msg: &str| Error::Format(format!("model file: {msg}"));
    let mut lines = r.lines();
    let mut next = || -> Result<String> { lines.next().ok_or_else(|| bad("truncated"))?.map_err(Error::from) };
    if next()? != MODEL_MAGIC {
        return Err(bad("unrecognized header"));
    }
    let mut field = |key: &str| -> Result<String> {
        let line = next()?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix('\t'))
            .map(str::to_string)
            .ok_or_else(|| bad(&format!("expected '{key}'")))
    };
    let num = |s: String| s.parse::<f64>().map_err(|_| bad(&format!("bad number '{s}'")));
    let lambda = num(field("lambda")?)?;
    let fold_seed = field("fold_seed")?.parse().map_err(|_| bad("bad fold seed"))?;
    let intercept = num(field("intercept")?)?;
    let p: usize = field("columns")?.parse().map_err(|_| bad("bad column count"))?;
    if next()? != "name\tgroup\tcenter\tscale\tcoefficient" {
        return Err(bad("missing column header"));
    }
    let mut m = SparseLogitModel {
        column_names: Vec::with_capacity(p),
        groups: Vec::with_capacity(p),
        centers: Vec::with_capacity(p),
        scales: Vec::with_capacity(p),
        intercept,
        coefficients: Vec::with_capacity(p),
        lambda,
        fold_seed,
    };
    for _ in 0..p {
        let line = next()?;
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 5 {
            return Err(bad("column row needs 5 fields"));
        }
        m.column_names.push(parts[0].to_string());
        m.groups.push(parts[1].to_string());
        m.centers.push(num(parts[2].to_string())?);
        m.scales.push(num(parts[3].to_string())?);
        m.coefficients.push(num(parts[4].to_string())?);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;

    fn design(rows: &[Vec<f64>]) -> DesignMatrix {
        let names = (0..rows[0].len()).map(|j| format!("x{j}")).collect();
        DesignMatrix::from_rows(names, rows).unwrap()
    }

    fn logistic_data(n: usize, beta: &[f64], seed: u64) -> (DesignMatrix, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = beta.iter().map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let eta: f64 = -0.3 + row.iter().zip(beta).map(|(x, b)| x * b).sum::<f64>();
            labels.push(rng.random::<f64>() < sigmoid(eta));
            rows.push(row);
        }
        (design(&rows), labels)
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
    }

    fn orthogonal_fixture() -> (Standardized, Vec<f64>) {
        // x = +-1 balanced; label rate 3/4 at x = 1 and 1/4 at x = -1
        let rows: Vec<Vec<f64>> = [-1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0]
            .iter()
            .map(|&v| vec![v])
            .collect();
        let labels = [false, true, false, true, true, true, false, false];
        (Standardized::new(&design(&rows), true).unwrap(), as_targets(&labels))
    }

    #[test]
    fn single_column_matches_closed_form() {
        // stationarity reduces to sigma(b) = 3/4 - lambda with a zero intercept
        let (z, y) = orthogonal_fixture();
        for lambda in [0.0, 0.1, 0.2] {
            let out = fit_lambda(&z, &y, lambda, &null_coefs(&y, 1), &LassoConfig::default()).unwrap();
            let expected = ((0.75 - lambda) / (0.25 + lambda)).ln();
            assert!((out.coefs.beta[0] - expected).abs() < 1e-8);
            assert!(out.coefs.intercept.abs() < 1e-8);
        }
        // and is zero once lambda reaches the null gradient 1/4
        let out = fit_lambda(&z, &y, 0.25, &null_coefs(&y, 1), &LassoConfig::default()).unwrap();
        assert_eq!(out.coefs.beta[0], 0.0);
    }

    #[test]
    fn exhausted_sweep_budget_stops_unconverged() {
        let (z, y) = orthogonal_fixture();
        let cfg = LassoConfig {
            max_sweeps: 1,
            ..LassoConfig::default()
        };
        let out = fit_lambda(&z, &y, 0.1, &null_coefs(&y, 1), &cfg).unwrap();
        assert!(!out.converged);
        assert_eq!(out.sweeps, 1);
        let full = fit_lambda(&z, &y, 0.1, &null_coefs(&y, 1), &LassoConfig::default()).unwrap();
        assert!(full.converged);
    }

    #[test]
    fn lambda_max_zeroes_everything() {
        let (x, l) = logistic_data(300, &[1.5, -1.0, 0.0, 0.5], 3);
        let cfg = LassoConfig {
            n_lambda: 10,
            min_dev_gain: 0.0,
            max_dev_ratio: 1.0,
            ..LassoConfig::default()
        };
        let path = fit_path(&x, &l, &cfg).unwrap();
        let lmax = lambda_max(path.design(), path.targets());
        for lam in [lmax, lmax * 1.5, lmax * 100.0] {
            let c = fit_lambda(path.design(), path.targets(), lam, &null_coefs(path.targets(), 4), &cfg).unwrap();
            assert!(c.coefs.beta.iter().all(|&b| b == 0.0));
            let rate = l.iter().filter(|&&v| v).count() as f64 / l.len() as f64;
            assert!((c.coefs.intercept - (rate / (1.0 - rate)).ln()).abs() < 1e-15);
        }
        assert!(path.fits[0].beta.iter().all(|&b| b == 0.0));
        assert!(path.fits[1].beta.iter().any(|&b| b != 0.0));
        for w in path.lambdas.windows(2) {
            assert!(w[0] > w[1]);
        }
        assert!((path.lambdas[9] / path.lambdas[0] - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn path_stops_when_deviance_saturates() {
        let (x, l) = logistic_data(400, &[1.0, -0.5, 0.0], 8);
        let full = fit_path(&x, &l, &LassoConfig { min_dev_gain: 0.0, max_dev_ratio: 1.0, ..LassoConfig::default() }).unwrap();
        let short = fit_path(&x, &l, &LassoConfig::default()).unwrap();
        assert_eq!(full.lambdas.len(), 100);
        assert!(short.lambdas.len() < 100 && short.lambdas.len() > 2);
        assert_eq!(short.lambdas[..], full.lambdas[..short.lambdas.len()]);
        assert_eq!(short.fits[..], full.fits[..short.fits.len()]);
        let (_, cv) = select_lambda(&short, &x, &l, &LassoConfig::default(), 1).unwrap();
        assert_eq!(cv.mean_auc.len(), short.lambdas.len());
        assert!(LassoConfig { min_dev_gain: -1.0, ..LassoConfig::default() }.validate().is_err());
        assert!(LassoConfig { max_dev_ratio: 0.0, ..LassoConfig::default() }.validate().is_err());
    }

    #[test]
    fn kkt_holds_along_path() {
        let (x, l) = logistic_data(400, &[2.0, -1.0, 0.0, 0.0, 0.7, 0.0], 5);
        let cfg = LassoConfig {
            n_lambda: 30,
            ..LassoConfig::default()
        };
        let path = fit_path(&x, &l, &cfg).unwrap();
        for (lam, c) in path.lambdas.iter().zip(&path.fits) {
            assert!(kkt_violation(path.design(), path.targets(), c, *lam) < 1e-6);
        }
    }

    #[test]
    fn objective_never_increases() {
        let (x, l) = logistic_data(300, &[3.0, -2.0, 1.0], 8);
        let z = Standardized::new(&x, true).unwrap();
        let y = as_targets(&l);
        for lam in [0.0, 0.001, 0.02] {
            let out = fit_lambda(&z, &y, lam, &null_coefs(&y, 3), &LassoConfig::default()).unwrap();
            assert!(out.objectives.len() > 1);
            for w in out.objectives.windows(2) {
                assert!(w[1] <= w[0]);
            }
        }
    }

    #[test]
    fn standardization_does_not_change_mle_predictions() {
        let (x, l) = logistic_data(300, &[1.0, -0.5, 0.25], 13);
        let a = fit_unpenalized(&x, &l, &LassoConfig::default()).unwrap();
        let b = fit_unpenalized(
            &x,
            &l,
            &LassoConfig {
                standardize: false,
                ..LassoConfig::default()
            },
        )
        .unwrap();
        let pa = predict_risk(&a, &x).unwrap();
        let pb = predict_risk(&b, &x).unwrap();
        for (u, v) in pa.iter().zip(&pb) {
            assert!((u - v).abs() < 1e-6);
        }
    }

    #[test]
    fn labels_and_columns_are_validated() {
        let (x, _) = logistic_data(50, &[1.0], 1);
        assert!(fit_path(&x, &[true; 50], &LassoConfig::default()).is_err());
        assert!(fit_path(&x, &[true, false], &LassoConfig::default()).is_err());
        let flat = design(&vec![vec![1.0, 0.0]; 10]);
        let l: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        assert!(fit_path(&flat, &l, &LassoConfig::default()).is_err());
    }

    #[test]
    fn folds_are_deterministic_and_stratified() {
        let labels: Vec<bool> = (0..200).map(|i| i % 7 == 0).collect();
        let a = fold_assignment(&labels, 10, 42).unwrap();
        assert_eq!(a, fold_assignment(&labels, 10, 42).unwrap());
        assert_ne!(a, fold_assignment(&labels, 10, 43).unwrap());
        for f in 0..10 {
            assert_eq!(a.iter().filter(|&&v| v == f).count(), 20);
        }
        let rare: Vec<bool> = (0..30).map(|i| i == 0).collect();
        assert!(fold_assignment(&rare, 10, 1).is_err());
    }

    #[test]
    fn selection_recovers_sparse_support() {
        let mut beta = vec![1.5, -1.5, 1.0];
        beta.extend(std::iter::repeat_n(0.0, 50));
        let (x, l) = logistic_data(1500, &beta, 21);
        let (m, cv) = train(&x, &l, &LassoConfig::default(), 9).unwrap();
        assert!(m.coefficients[..3].iter().all(|&b| b != 0.0));
        let noise_zero = m.coefficients[3..].iter().filter(|&&b| b == 0.0).count();
        assert!(noise_zero >= 40, "{noise_zero} of 50 noise columns zeroed");
        assert!(cv.chosen_index <= cv.best_index);
        assert!(cv.mean_auc[cv.chosen_index] >= cv.mean_auc[cv.best_index] - cv.se_auc[cv.best_index]);

        let (m2, cv2) = train(&x, &l, &LassoConfig::default(), 9).unwrap();
        assert_eq!(m, m2);
        assert_eq!(cv, cv2);
    }

    #[test]
    fn single_lambda_is_selected() {
        let (x, l) = logistic_data(200, &[1.0, 0.0], 2);
        let cfg = LassoConfig {
            n_lambda: 1,
            ..LassoConfig::default()
        };
        let (m, cv) = train(&x, &l, &cfg, 1).unwrap();
        assert_eq!(cv.chosen_index, 0);
        assert_eq!(m.n_nonzero(), 0);
    }

    fn fixed_model(coefficients: Vec<f64>, intercept: f64) -> SparseLogitModel {
        let p = coefficients.len();
        SparseLogitModel {
            column_names: (0..p).map(|j| format!("x{j}")).collect(),
            groups: (0..p).map(|j| format!("g{}", j / 3)).collect(),
            centers: vec![0.0; p],
            scales: vec![1.0; p],
            intercept,
            coefficients,
            lambda: 0.01,
            fold_seed: 3,
        }
    }

    #[test]
    fn predictions() {
        let x = design(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        let m = fixed_model(vec![0.0, 0.0], 0.0);
        assert_eq!(predict_risk(&m, &x).unwrap(), vec![0.5, 0.5]);
        let m = fixed_model(vec![0.808, 0.0], 0.0);
        let p = predict_risk(&m, &x).unwrap();
        assert!((p[0] - 0.691_683_152_754_822_8).abs() < 1e-12);
        let other = DesignMatrix::from_rows(vec!["x0".into(), "y".into()], &[vec![0.0, 0.0]]).unwrap();
        assert!(matches!(predict_risk(&m, &other), Err(Error::ColumnMismatch(c)) if c == "x1"));
    }

    #[test]
    fn report_counts_and_ranges() {
        let m = fixed_model(vec![0.0, -0.3, 0.5, 0.0, 0.0, 0.0], 0.0);
        let r = coefficient_report(&m, &m.groups).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!((r[0].nonzero, r[0].min, r[0].max), (2, Some(-0.3), Some(0.5)));
        assert_eq!((r[1].nonzero, r[1].min), (0, None));
        let mut buf = Vec::new();
        write_coefficients_csv(&mut buf, &r).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "variable,nonzero_coefficients,min_coefficient,max_coefficient\ng0,2,-0.3,0.5\ng1,0,,\n"
        );
        assert!(coefficient_report(&m, &m.groups[..2]).is_err());
    }

    #[test]
    fn model_text_round_trip() {
        let m = fixed_model(vec![0.1 + 0.2, -1e-300, 0.0], -0.345_678_901_234_567_8);
        let mut buf = Vec::new();
        write_model(&mut buf, &m).unwrap();
        assert_eq!(read_model(buf.as_slice()).unwrap(), m);
        assert!(read_model(&b"nonsense\n"[..]).is_err());
        let text = String::from_utf8(buf).unwrap();
        let cut = text.lines().take(7).collect::<Vec<_>>().join("\n");
        assert!(read_model(cut.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn logistic_symmetry(x in -40.0f64..40.0) {
            prop_assert!((sigmoid(-x) - (1.0 - sigmoid(x))).abs() < 1e-15);
        }

        #[test]
        fn predictions_are_probabilities(
            b in prop::collection::vec(-30.0f64..30.0, 2),
            row in prop::collection::vec(-5.0f64..5.0, 2),
        ) {
            let m = fixed_model(b, 0.0);
            let p = predict_risk(&m, &design(&[row])).unwrap()[0];
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
