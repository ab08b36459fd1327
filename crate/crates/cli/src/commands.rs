//! The pipeline stages. Each reads its inputs from disk, writes its outputs
//! plus a manifest into `<out>/<stage>/`, and returns that directory.

use std::collections::HashMap;
use std::io::{BufReader, Write};
use std::path::PathBuf;

use serde::Serialize;
use sentrisk::data::{build_design, load_csv, preprocess, split, write_csv, Column};
use sentrisk::eval::{self, AlphaRun, SWEEP_ALPHAS};
use sentrisk::flagger::{self, flag_values, FlagConfig};
use sentrisk::hbart::{self, r_squared};
use sentrisk::sparse_logit::{self, coefficient_report, predict_risk};
use sentrisk::synth::{self, SynthSpec};
use sentrisk::{ColumnRole, Dataset, DesignMatrix, PosteriorSummary, Schema, SparseLogitModel, Split};

use crate::artifacts::{
    create, open, read_flags_csv, read_summary_csv, read_trace_csv, require_file, write_summary_csv,
    write_trace_csv, FlagRow, SummaryRow,
};
use crate::config::PipelineConfig;
use crate::error::{bad_artifact, CliError, CliResult};
use crate::manifest::{self, ManifestBuilder};

pub const STAGE1_DIR: &str = "stage1";
pub const FLAG_DIR: &str = "flag";
pub const STAGE2_DIR: &str = "stage2";
pub const EVAL_DIR: &str = "eval";
pub const SWEEP_DIR: &str = "sweep";

fn stage_dir(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.paths.out.join(name)
}

fn fresh_dir(cfg: &PipelineConfig, name: &str) -> CliResult<PathBuf> {
    let dir = stage_dir(cfg, name);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Loads, cleans and partitions the configured dataset.
fn load_data(cfg: &PipelineConfig, m: &mut ManifestBuilder) -> CliResult<Dataset> {
    let (data, schema_path) = cfg.require_inputs()?;
    let schema = Schema::from_file(schema_path)?.excluding(&cfg.design.exclude)?;
    let raw = load_csv(data, &schema)?;
    m.input(data).input(schema_path);
    let ds = preprocess(&raw);
    m.detail("rows_loaded", raw.n_rows())
        .detail("rows_missing_outcome", raw.n_rows() - ds.n_rows());
    Ok(split(&ds, cfg.design.train_fraction, cfg.seeds.split)?)
}

fn positions_by_split(x: &DesignMatrix, ds: &Dataset) -> (Vec<usize>, Vec<usize>) {
    (0..x.n_rows()).partition(|&i| ds.split_assignment()[x.row_index()[i]] == Split::Train)
}

fn take<T: Copy>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i]).collect()
}

pub fn train_stage1(cfg: &PipelineConfig) -> CliResult<PathBuf> {
    let mut m = ManifestBuilder::new("train-stage1", cfg);
    let ds = load_data(cfg, &mut m)?;
    let x = build_design(&ds, ColumnRole::Relevant, &[], false)?;
    let dropped = ds.n_rows() - x.n_rows();
    if dropped > 0 {
        log::info!("left out {dropped} rows with missing relevant factors");
    }
    let y_all = ds.outcome_values()?;
    let y: Vec<f64> = x.row_index().iter().map(|&r| y_all[r]).collect();
    let (tr, te) = positions_by_split(&x, &ds);
    if tr.is_empty() || te.is_empty() {
        return Err(sentrisk::Error::InvalidInput("train or test split has no complete rows".into()).into());
    }
    let (xtr, xte) = (x.select_rows(&tr), x.select_rows(&te));
    let (ytr, yte) = (take(&y, &tr), take(&y, &te));

    log::info!(
        "fitting {} + {} trees on {} rows x {} columns for {} iterations",
        cfg.stage1.mean_trees,
        cfg.stage1.scale_trees,
        xtr.n_rows(),
        xtr.n_cols(),
        cfg.stage1.iterations
    );
    let model = hbart::fit(&xtr, &ytr, &cfg.stage1, cfg.seeds.mcmc)?;
    let test = hbart::predict(&model, &xte)?;
    let train = &model.train_summary;

    let mut rows = Vec::with_capacity(x.n_rows());
    let (mut a, mut b) = (0, 0);
    for i in 0..x.n_rows() {
        let row_id = ds.row_ids()[x.row_index()[i]];
        let (split, f, s) = if a < tr.len() && tr[a] == i {
            a += 1;
            (Split::Train, train.f_bar[a - 1], train.s_bar[a - 1])
        } else {
            b += 1;
            (Split::Test, test.f_bar[b - 1], test.s_bar[b - 1])
        };
        rows.push(SummaryRow { row_id, split, y: y[i], f_bar: f, s_bar: s });
    }

    let p = x.n_cols();
    let r2 = [
        ("train", r_squared(&train.f_bar, &ytr, p)?),
        ("test", r_squared(&test.f_bar, &yte, p)?),
    ];
    log::info!("adjusted R2 train {:.4}, test {:.4}", r2[0].1.adjusted_r2, r2[1].1.adjusted_r2);

    let dir = fresh_dir(cfg, STAGE1_DIR)?;
    let model_path = dir.join("model.json");
    let mut w = create(&model_path)?;
    model.write_json(&mut w)?;
    w.flush()?;
    let summary_path = dir.join("summary.csv");
    write_summary_csv(&summary_path, &rows)?;
    let tf = dir.join("trace_f.csv");
    write_trace_csv(&tf, &train.trace_f)?;
    let ts = dir.join("trace_s.csv");
    write_trace_csv(&ts, &train.trace_s)?;
    let r2_path = dir.join("r2.csv");
    eval::write_r2_csv(create(&r2_path)?, &r2)?;

    m.output(&model_path)
        .output(&summary_path)
        .output(&tf)
        .output(&ts)
        .output(&r2_path)
        .detail("design_columns", p)
        .detail("column_names", x.column_names())
        .detail("rows_missing_relevant", dropped)
        .detail("rows_train", tr.len())
        .detail("rows_test", te.len())
        .detail("retained_draws", model.retained_draws)
        .detail("mean_moves", model.mean_moves)
        .detail("scale_moves", model.scale_moves);
    m.write(&dir)?;
    Ok(dir)
}

fn flag_config(alpha: f64) -> CliResult<FlagConfig> {
    FlagConfig::new(alpha).map_err(|e| CliError::Config(e.to_string()))
}

/// String key of `column` for every dataset row, `None` if absent.
fn column_keys(ds: &Dataset, column: &str) -> Option<HashMap<u64, String>> {
    let col = ds.column(column)?;
    let ids = ds.row_ids();
    Some(match col {
        Column::Categorical(v) => ids
            .iter()
            .zip(v)
            .map(|(&id, c)| (id, c.clone().unwrap_or_else(|| sentrisk::data::UNKNOWN_LEVEL.into())))
            .collect(),
        Column::Numeric(v) => ids
            .iter()
            .zip(v)
            .map(|(&id, c)| (id, c.map_or_else(|| sentrisk::data::UNKNOWN_LEVEL.into(), |x| x.to_string())))
            .collect(),
    })
}

fn summary_parts(rows: &[SummaryRow]) -> (PosteriorSummary, Vec<f64>) {
    let summary = PosteriorSummary {
        f_bar: rows.iter().map(|r| r.f_bar).collect(),
        s_bar: rows.iter().map(|r| r.s_bar).collect(),
        trace_f: Vec::new(),
        trace_s: Vec::new(),
    };
    (summary, rows.iter().map(|r| r.y).collect())
}

fn rate(labels: impl Iterator<Item = bool>) -> f64 {
    let (mut n, mut k) = (0usize, 0usize);
    for l in labels {
        n += 1;
        k += usize::from(l);
    }
    k as f64 / n.max(1) as f64
}

pub fn flag(cfg: &PipelineConfig) -> CliResult<PathBuf> {
    cfg.validate()?;
    let fc = flag_config(cfg.flag.alpha)?;
    let mut m = ManifestBuilder::new("flag", cfg);
    let summary_path = stage_dir(cfg, STAGE1_DIR).join("summary.csv");
    let rows = read_summary_csv(&summary_path)?;
    m.input(&summary_path);
    let (summary, y) = summary_parts(&rows);
    let flags = flagger::flag(&summary, &y, &fc)?;

    let ds = load_data(cfg, &mut m)?;
    let keys: Vec<String> = match column_keys(&ds, &cfg.design.bin_column) {
        Some(map) => rows
            .iter()
            .map(|r| map.get(&r.row_id).cloned().unwrap_or_else(|| sentrisk::data::UNKNOWN_LEVEL.into()))
            .collect(),
        None => {
            log::warn!("bin column `{}` not in the data; tabulating one bin", cfg.design.bin_column);
            vec!["all".to_string(); rows.len()]
        }
    };
    let bins = flagger::flag_rate_by_bin(&flags, &keys)?;

    let dir = fresh_dir(cfg, FLAG_DIR)?;
    let flags_path = dir.join("flags.csv");
    let ids: Vec<u64> = rows.iter().map(|r| r.row_id).collect();
    let splits: Vec<Split> = rows.iter().map(|r| r.split).collect();
    flagger::write_flags_csv(create(&flags_path)?, &ids, &splits, &y, &summary, &flags)?;
    let bins_path = dir.join("flag_rate_by_bin.csv");
    flagger::write_bin_rates_csv(create(&bins_path)?, &bins)?;

    let by = |s: Split| rate(rows.iter().zip(&flags.labels).filter(|(r, _)| r.split == s).map(|(_, &l)| l));
    log::info!("alpha {}: flagged {:.4} of rows", fc.alpha(), flags.flagged_fraction());
    m.output(&flags_path)
        .output(&bins_path)
        .detail("alpha", fc.alpha())
        .detail("quantile_z", fc.quantile_z())
        .detail("flag_rate", flags.flagged_fraction())
        .detail("flag_rate_train", by(Split::Train))
        .detail("flag_rate_test", by(Split::Test));
    m.write(&dir)?;
    Ok(dir)
}

/// Stage-two design rows matched to labelled rows.
struct Aligned {
    train: Vec<usize>,
    train_labels: Vec<bool>,
    test: Vec<usize>,
    test_labels: Vec<bool>,
    unmatched: usize,
}

fn align(z: &DesignMatrix, ds: &Dataset, flags: &[FlagRow]) -> Aligned {
    let pos: HashMap<u64, usize> = z
        .row_index()
        .iter()
        .enumerate()
        .map(|(i, &r)| (ds.row_ids()[r], i))
        .collect();
    let mut out = Aligned {
        train: Vec::new(),
        train_labels: Vec::new(),
        test: Vec::new(),
        test_labels: Vec::new(),
        unmatched: 0,
    };
    for f in flags {
        match (pos.get(&f.row_id), f.split) {
            (Some(&i), Split::Train) => {
                out.train.push(i);
                out.train_labels.push(f.label);
            }
            (Some(&i), Split::Test) => {
                out.test.push(i);
                out.test_labels.push(f.label);
            }
            (None, _) => out.unmatched += 1,
        }
    }
    if out.unmatched > 0 {
        log::warn!("{} labelled rows have no complete irrelevant factors", out.unmatched);
    }
    out
}

fn irrelevant_design(cfg: &PipelineConfig, ds: &Dataset) -> CliResult<DesignMatrix> {
    Ok(build_design(ds, ColumnRole::Irrelevant, &cfg.design.interaction_pairs(), true)?)
}

fn training_design(z: &DesignMatrix, rows: &[usize]) -> (DesignMatrix, Vec<String>) {
    let (ztr, dropped) = z.select_rows(rows).drop_constant_columns();
    if !dropped.is_empty() {
        log::info!("dropped {} constant columns: {}", dropped.len(), dropped.join(", "));
    }
    (ztr, dropped)
}

fn flags_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.paths
        .flags
        .clone()
        .unwrap_or_else(|| stage_dir(cfg, FLAG_DIR).join("flags.csv"))
}

pub fn train_stage2(cfg: &PipelineConfig) -> CliResult<PathBuf> {
    cfg.validate()?;
    let mut m = ManifestBuilder::new("train-stage2", cfg);
    let fpath = flags_path(cfg);
    let flags = read_flags_csv(&fpath)?;
    m.input(&fpath);
    let ds = load_data(cfg, &mut m)?;
    let z = irrelevant_design(cfg, &ds)?;
    let a = align(&z, &ds, &flags);
    let (ztr, dropped) = training_design(&z, &a.train);
    log::info!("stage two: {} rows x {} columns", ztr.n_rows(), ztr.n_cols());
    let (model, cv) = sparse_logit::train(&ztr, &a.train_labels, &cfg.stage2, cfg.seeds.cv)?;
    let report = coefficient_report(&model, &model.groups)?;
    log::info!("chose lambda {} with {} nonzero coefficients", model.lambda, model.n_nonzero());

    let dir = fresh_dir(cfg, STAGE2_DIR)?;
    let model_path = dir.join("model.txt");
    let mut w = create(&model_path)?;
    sparse_logit::write_model(&mut w, &model)?;
    w.flush()?;
    let coef_path = dir.join("coefficients.csv");
    sparse_logit::write_coefficients_csv(create(&coef_path)?, &report)?;
    let cv_path = dir.join("cv_curve.csv");
    sparse_logit::write_cv_curve_csv(create(&cv_path)?, &cv)?;

    m.output(&model_path)
        .output(&coef_path)
        .output(&cv_path)
        .detail("lambda", model.lambda)
        .detail("nonzero", model.n_nonzero())
        .detail("design_columns", ztr.n_cols())
        .detail("dropped_constant_columns", &dropped)
        .detail("rows_train", a.train.len())
        .detail("rows_test", a.test.len())
        .detail("rows_unmatched", a.unmatched);
    m.write(&dir)?;
    Ok(dir)
}

/// Design restricted to the model's columns, in the model's order.
fn model_design(z: &DesignMatrix, model: &SparseLogitModel) -> DesignMatrix {
    let extra: Vec<String> = z
        .column_names()
        .iter()
        .filter(|c| !model.column_names.contains(c))
        .cloned()
        .collect();
    z.without_columns(&extra)
}

fn read_stage2_model(cfg: &PipelineConfig) -> CliResult<(PathBuf, SparseLogitModel)> {
    let path = stage_dir(cfg, STAGE2_DIR).join("model.txt");
    let model = sparse_logit::read_model(BufReader::new(open(&path)?))?;
    Ok((path, model))
}

pub fn evaluate(cfg: &PipelineConfig) -> CliResult<PathBuf> {
    cfg.validate()?;
    let mut m = ManifestBuilder::new("evaluate", cfg);
    let (model_path, model) = read_stage2_model(cfg)?;
    let fpath = flags_path(cfg);
    let flags = read_flags_csv(&fpath)?;
    let s1 = stage_dir(cfg, STAGE1_DIR);
    let summary_path = s1.join("summary.csv");
    let (tf, ts) = (s1.join("trace_f.csv"), s1.join("trace_s.csv"));
    for p in [&summary_path, &tf, &ts] {
        require_file(p)?;
    }
    m.input(&model_path).input(&fpath).input(&summary_path).input(&tf).input(&ts);

    let ds = load_data(cfg, &mut m)?;
    let z = model_design(&irrelevant_design(cfg, &ds)?, &model);
    let a = align(&z, &ds, &flags);
    let train_scores = predict_risk(&model, &z.select_rows(&a.train))?;
    let test_scores = predict_risk(&model, &z.select_rows(&a.test))?;
    let train_auc = eval::auc_value(&train_scores, &a.train_labels)?;
    let roc = eval::auc(&test_scores, &a.test_labels)?;
    let bins = eval::risk_bins(&test_scores, &a.test_labels, cfg.design.risk_bins)?;
    log::info!(
        "AUC train {train_auc:.4}, test {:.4} ({})",
        roc.auc,
        eval::auc_band(roc.auc).label()
    );

    let (g0, g1) = (cfg.design.geweke_first, cfg.design.geweke_last);
    let geweke = [
        ("f_bar", eval::geweke(&read_trace_csv(&tf)?, g0, g1)?),
        ("s_bar", eval::geweke(&read_trace_csv(&ts)?, g0, g1)?),
    ];

    let rows = read_summary_csv(&summary_path)?;
    let p = manifest::read(&s1)?
        .details
        .get("design_columns")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| bad_artifact(&s1.join(manifest::MANIFEST_FILE), "missing design_columns"))?
        as usize;
    let r2_of = |s: Split| -> CliResult<sentrisk::hbart::RSquared> {
        let (f, y): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| r.split == s).map(|r| (r.f_bar, r.y)).unzip();
        Ok(r_squared(&f, &y, p)?)
    };
    let r2 = [("train", r2_of(Split::Train)?), ("test", r2_of(Split::Test)?)];

    let dir = fresh_dir(cfg, EVAL_DIR)?;
    let mut written = Vec::new();
    let mut out = |name: &str| -> CliResult<(PathBuf, std::io::BufWriter<std::fs::File>)> {
        let path = dir.join(name);
        written.push(path.clone());
        let w = create(&path)?;
        Ok((path, w))
    };
    eval::write_roc_csv(out("roc.csv")?.1, &roc)?;
    out("roc.svg")?.1.write_all(eval::roc_svg(&roc).as_bytes())?;
    eval::write_risk_bins_csv(out("risk_bins.csv")?.1, &bins)?;
    out("risk_bins.svg")?.1.write_all(eval::risk_bins_svg(&bins).as_bytes())?;
    eval::write_auc_summary_csv(out("auc_summary.csv")?.1, &[("train", train_auc), ("test", roc.auc)])?;
    eval::write_geweke_csv(out("geweke.csv")?.1, &geweke)?;
    eval::write_r2_csv(out("r2.csv")?.1, &r2)?;

    for p in &written {
        m.output(p);
    }
    m.detail("auc_train", train_auc)
        .detail("auc_test", roc.auc)
        .detail("auc_band", eval::auc_band(roc.auc).label())
        .detail("rows_train", a.train.len())
        .detail("rows_test", a.test.len());
    m.write(&dir)?;
    Ok(dir)
}

#[derive(Debug, Serialize)]
struct SweepDetail {
    alpha: f64,
    flag_rate: f64,
    lambda: f64,
    nonzero: usize,
}

struct SweepFit {
    detail: SweepDetail,
    train_scores: Vec<f64>,
    train_labels: Vec<bool>,
    test_scores: Vec<f64>,
    test_labels: Vec<bool>,
}

fn sweep_one(
    cfg: &PipelineConfig,
    alpha: f64,
    rows: &[SummaryRow],
    z: &DesignMatrix,
    ds: &Dataset,
) -> CliResult<SweepFit> {
    let (summary, y) = summary_parts(rows);
    let flags = flag_values(&summary.f_bar, &summary.s_bar, &y, &flag_config(alpha)?)?;
    let labelled: Vec<FlagRow> = rows
        .iter()
        .zip(&flags.labels)
        .map(|(r, &label)| FlagRow { row_id: r.row_id, split: r.split, label })
        .collect();
    let a = align(z, ds, &labelled);
    let (ztr, _) = training_design(z, &a.train);
    let (model, _) = sparse_logit::train(&ztr, &a.train_labels, &cfg.stage2, cfg.seeds.cv)?;
    let zte = model_design(z, &model).select_rows(&a.test);
    Ok(SweepFit {
        detail: SweepDetail {
            alpha,
            flag_rate: flags.flagged_fraction(),
            lambda: model.lambda,
            nonzero: model.n_nonzero(),
        },
        train_scores: predict_risk(&model, &ztr)?,
        train_labels: a.train_labels,
        test_scores: predict_risk(&model, &zte)?,
        test_labels: a.test_labels,
    })
}

/// Refits stage two at every sweep alpha, concurrently, from the stage-1
/// summary.
pub fn sweep_alpha(cfg: &PipelineConfig) -> CliResult<PathBuf> {
    cfg.validate()?;
    let mut m = ManifestBuilder::new("sweep-alpha", cfg);
    let summary_path = stage_dir(cfg, STAGE1_DIR).join("summary.csv");
    let rows = read_summary_csv(&summary_path)?;
    m.input(&summary_path);
    let ds = load_data(cfg, &mut m)?;
    let z = irrelevant_design(cfg, &ds)?;

    let fits: Vec<CliResult<SweepFit>> = std::thread::scope(|s| {
        let handles: Vec<_> = SWEEP_ALPHAS
            .iter()
            .map(|&alpha| {
                let (rows, z, ds) = (&rows, &z, &ds);
                s.spawn(move || sweep_one(cfg, alpha, rows, z, ds))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    let fits = fits.into_iter().collect::<CliResult<Vec<_>>>()?;
    let runs: Vec<AlphaRun<'_>> = fits
        .iter()
        .map(|f| AlphaRun {
            alpha: f.detail.alpha,
            train_scores: &f.train_scores,
            train_labels: &f.train_labels,
            test_scores: &f.test_scores,
            test_labels: &f.test_labels,
        })
        .collect();
    let table = eval::table_model2_aucs(&runs)?;
    for r in &table {
        log::info!("alpha {:.2}: AUC train {:.4}, test {:.4}", r.alpha, r.train_auc, r.test_auc);
    }

    let dir = fresh_dir(cfg, SWEEP_DIR)?;
    let path = dir.join("model2_aucs.csv");
    eval::write_model2_aucs_csv(create(&path)?, &table)?;
    let details: Vec<&SweepDetail> = fits.iter().map(|f| &f.detail).collect();
    m.output(&path).detail("fits", details);
    m.write(&dir)?;
    Ok(dir)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    /// Guideline-style factors with leak columns among the irrelevant ones.
    Sentencing,
    /// Ten uniform features with a two-plateau mean and two-region scale.
    TwoRegion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthRequest {
    pub kind: SynthKind,
    pub n: usize,
    pub seed: u64,
    pub leak: bool,
    pub out: PathBuf,
}

/// Writes `data.csv`, `schema.txt`, the `truth.csv` sidecar and a ready
/// `config.toml` into `out`.
pub fn synth(req: &SynthRequest) -> CliResult<PathBuf> {
    let mut spec = match req.kind {
        SynthKind::Sentencing => SynthSpec::sentencing(req.n, req.seed, true),
        SynthKind::TwoRegion => SynthSpec::two_region(req.n, req.seed),
    };
    if !req.leak {
        spec = spec.without_leak();
    }
    let s = synth::generate(&spec)?;
    let dir = req.out.clone();
    std::fs::create_dir_all(&dir)?;

    let data = dir.join("data.csv");
    let mut w = create(&data)?;
    write_csv(&s.dataset, &mut w)?;
    w.flush()?;
    let schema = dir.join("schema.txt");
    std::fs::write(&schema, s.dataset.schema().to_text())?;
    let truth = dir.join("truth.csv");
    let mut w = create(&truth)?;
    s.truth.write_csv(&mut w)?;
    w.flush()?;

    let mut cfg = PipelineConfig::default();
    cfg.paths.data = Some("data.csv".into());
    cfg.paths.schema = Some("schema.txt".into());
    if req.kind == SynthKind::Sentencing {
        cfg.design.interactions = synth::default_interactions().into_iter().map(|(a, b)| [a, b]).collect();
    }
    let config = dir.join("config.toml");
    std::fs::write(&config, cfg.to_toml())?;

    let mut m = ManifestBuilder::new("synth", &cfg);
    m.output(&data)
        .output(&schema)
        .output(&truth)
        .output(&config)
        .detail("kind", req.kind)
        .detail("n", req.n)
        .detail("seed", req.seed)
        .detail("leak", !spec.leak.is_empty());
    m.write(&dir)?;
    Ok(dir)
}
