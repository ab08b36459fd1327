//! Synthetic case data with known heteroscedastic ground truth, and
//! brute-force oracles for the fitted components.
//!
//! Outcomes follow `y = clamp(f0(x) + leak(z) + s0(x) * xi, 0, 540)` with
//! `xi ~ N(0, 1)`. `f0` is a sum and `s0` a product of piecewise terms in
//! the relevant factors; `leak` adds fixed shifts for chosen levels of
//! irrelevant factors, so a second-stage model has something to find.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Column, ColumnKind, ColumnRole, ColumnSpec, Dataset, Schema, OUTCOME_CAP_MONTHS};
use crate::error::{invalid, Error, Result};
use crate::stats::sigmoid;

pub const OUTCOME_COLUMN: &str = "SENTTOT0";
pub const GUIDELINE_COLUMN: &str = "GUIDELINE_RANGE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FactorGen {
    Categorical { levels: Vec<(String, f64)> },
    Uniform { low: f64, high: f64 },
    /// Integers in `low..=high`, uniformly.
    Integer { low: i64, high: i64 },
    /// Numeric values with probabilities.
    Choice { values: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub gen: FactorGen,
}

impl FactorSpec {
    pub fn categorical(name: &str, levels: &[(&str, f64)]) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical,
            gen: FactorGen::Categorical {
                levels: levels.iter().map(|&(l, p)| (l.to_string(), p)).collect(),
            },
        }
    }

    /// Categorical factor with equally likely levels.
    pub fn uniform_levels<S: AsRef<str>>(name: &str, levels: &[S]) -> Self {
        let p = 1.0 / levels.len() as f64;
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical,
            gen: FactorGen::Categorical {
                levels: levels.iter().map(|l| (l.as_ref().to_string(), p)).collect(),
            },
        }
    }

    pub fn numeric(name: &str, gen: FactorGen) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Numeric,
            gen,
        }
    }
}

/// One piece of a piecewise function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Term {
    /// `values[k]` where `k` counts the ascending `breaks` at or below the
    /// factor's value.
    Steps {
        factor: String,
        breaks: Vec<f64>,
        values: Vec<f64>,
    },
    Levels {
        factor: String,
        values: Vec<(String, f64)>,
        otherwise: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseFn {
    pub base: f64,
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakTerm {
    pub factor: String,
    pub level: String,
    /// Additive shift in months.
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub relevant: Vec<FactorSpec>,
    pub irrelevant: Vec<FactorSpec>,
    /// `f0`, additive over terms, in months.
    pub true_mean: PiecewiseFn,
    /// `s0`, multiplicative over terms, in months.
    pub true_scale: PiecewiseFn,
    pub leak: Vec<LeakTerm>,
    /// Probability that an irrelevant categorical cell is recorded missing.
    pub missing_rate: f64,
    /// Month edges of the guideline-range label derived from `f0`; empty
    /// for no label column.
    pub guideline_edges: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Level(usize),
    Num(f64),
}

fn check_probs(name: &str, probs: impl Iterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    let mut count = 0;
    for p in probs {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(invalid(format!("factor `{name}` has an invalid probability {p}")));
        }
        total += p;
        count += 1;
    }
    if count == 0 || (total - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("probabilities of `{name}` sum to {total}, not 1")));
    }
    Ok(())
}

impl SynthSpec {
    fn factors(&self) -> impl Iterator<Item = (&FactorSpec, ColumnRole)> {
        self.relevant
            .iter()
            .map(|f| (f, ColumnRole::Relevant))
            .chain(self.irrelevant.iter().map(|f| (f, ColumnRole::Irrelevant)))
    }

    fn find(&self, name: &str) -> Option<(usize, &FactorSpec, ColumnRole)> {
        self.factors()
            .enumerate()
            .find(|(_, (f, _))| f.name == name)
            .map(|(i, (f, r))| (i, f, r))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("synthetic row count must be positive"));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(invalid(format!("missing rate {} not in [0, 1)", self.missing_rate)));
        }
        let mut names = std::collections::BTreeSet::new();
        for (f, _) in self.factors() {
            if !names.insert(f.name.as_str()) || f.name == OUTCOME_COLUMN || f.name == GUIDELINE_COLUMN {
                return Err(invalid(format!("factor name `{}` is duplicated or reserved", f.name)));
            }
            match (&f.gen, f.kind) {
                (FactorGen::Categorical { levels }, ColumnKind::Categorical) => {
                    check_probs(&f.name, levels.iter().map(|l| l.1))?;
                }
                (FactorGen::Uniform { low, high }, k) if k.is_numeric() => {
                    if !(low < high) {
                        return Err(invalid(format!("factor `{}` has an empty range", f.name)));
                    }
                }
                (FactorGen::Integer { low, high }, k) if k.is_numeric() => {
                    if low > high {
                        return Err(invalid(format!("factor `{}` has an empty range", f.name)));
                    }
                }
                (FactorGen::Choice { values }, k) if k.is_numeric() => {
                    check_probs(&f.name, values.iter().map(|v| v.1))?;
                }
                _ => {
                    return Err(invalid(format!("factor `{}` generator does not match its kind", f.name)));
                }
            }
        }
        for (func, scale) in [(&self.true_mean, false), (&self.true_scale, true)] {
            if scale && !(func.base > 0.0) {
                return Err(invalid("scale base must be positive"));
            }
            for t in &func.terms {
                let (factor, values): (&str, Vec<f64>) = match t {
                    Term::Steps { factor, breaks, values } => {
                        if values.len() != breaks.len() + 1 || breaks.windows(2).any(|w| w[0] >= w[1]) {
                            return Err(invalid(format!("step term on `{factor}` is malformed")));
                        }
                        (factor, values.clone())
                    }
                    Term::Levels { factor, values, otherwise } => {
                        let mut v: Vec<f64> = values.iter().map(|x| x.1).collect();
                        v.push(*otherwise);
                        (factor, v)
                    }
                };
                let Some((_, spec, role)) = self.find(factor) else {
                    return Err(invalid(format!("term refers to unknown factor `{factor}`")));
                };
                if role != ColumnRole::Relevant {
                    return Err(invalid(format!("term factor `{factor}` is not relevant")));
                }
                let numeric_term = matches!(t, Term::Steps { .. });
                if numeric_term != spec.kind.is_numeric() {
                    return Err(invalid(format!("term type does not match factor `{factor}`")));
                }
                if values.iter().any(|v| !v.is_finite()) || (scale && values.iter().any(|&v| v <= 0.0)) {
                    return Err(invalid(format!("term on `{factor}` has invalid values")));
                }
            }
        }
        for l in &self.leak {
            match self.find(&l.factor) {
                Some((_, spec, ColumnRole::Irrelevant)) if spec.kind == ColumnKind::Categorical => {}
                _ => return Err(invalid(format!("leak factor `{}` is not an irrelevant categorical", l.factor))),
            }
            if !l.shift.is_finite() {
                return Err(invalid("leak shift must be finite"));
            }
        }
        if self.guideline_edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("guideline edges must increase"));
        }
        Ok(())
    }

    /// The column layout emitted by [`generate`].
    pub fn schema(&self) -> Result<Schema> {
        let mut cols = vec![ColumnSpec::new(OUTCOME_COLUMN, ColumnKind::Numeric, ColumnRole::Outcome)];
        for (f, role) in self.factors() {
            cols.push(ColumnSpec::new(f.name.clone(), f.kind, role));
        }
        if !self.guideline_edges.is_empty() {
            cols.push(ColumnSpec::new(GUIDELINE_COLUMN, ColumnKind::Categorical, ColumnRole::Ignored));
        }
        Schema::new(cols)
    }

    pub fn without_leak(&self) -> Self {
        Self {
            leak: Vec::new(),
            ..self.clone()
        }
    }
}

fn level_name(spec: &FactorSpec, v: &Value) -> Option<String> {
    match (&spec.gen, v) {
        (FactorGen::Categorical { levels }, Value::Level(i)) => Some(levels[*i].0.clone()),
        _ => None,
    }
}

fn eval_term(t: &Term, spec: &SynthSpec, row: &[Value]) -> f64 {
    match t {
        Term::Steps { factor, breaks, values } => {
            let (i, _, _) = spec.find(factor).expect("validated");
            let Value::Num(x) = row[i] else { unreachable!() };
            values[breaks.partition_point(|&b| b <= x)]
        }
        Term::Levels { factor, values, otherwise } => {
            let (i, f, _) = spec.find(factor).expect("validated");
            let level = level_name(f, &row[i]).expect("validated");
            values
                .iter()
                .find(|(l, _)| *l == level)
                .map_or(*otherwise, |x| x.1)
        }
    }
}

/// Guideline-range label such as `"24-60"` for the band holding `months`.
pub fn guideline_label(edges: &[f64], months: f64) -> String {
    let k = edges.partition_point(|&e| e <= months);
    match k {
        0 => format!("<{}", edges[0]),
        k if k == edges.len() => format!("{}+", edges[k - 1]),
        k => format!("{}-{}", edges[k - 1], edges[k]),
    }
}

/// Per-row ground truth, kept apart from the observed data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub row_ids: Vec<u64>,
    pub f0: Vec<f64>,
    pub s0: Vec<f64>,
    pub leak: Vec<f64>,
}

impl Truth {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["row_id", "f0", "s0", "leak"])?;
        for i in 0..self.f0.len() {
            out.write_record([
                self.row_ids[i].to_string(),
                self.f0[i].to_string(),
                self.s0[i].to_string(),
                self.leak[i].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Ground truth for the given row ids.
    pub fn select(&self, ids: &[u64]) -> Result<Truth> {
        let pos: BTreeMap<u64, usize> = self.row_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut out = Truth {
            row_ids: Vec::with_capacity(ids.len()),
            f0: Vec::with_capacity(ids.len()),
            s0: Vec::with_capacity(ids.len()),
            leak: Vec::with_capacity(ids.len()),
        };
        for id in ids {
            let &i = pos.get(id).ok_or_else(|| invalid(format!("row id {id} has no ground truth")))?;
            out.row_ids.push(*id);
            out.f0.push(self.f0[i]);
            out.s0.push(self.s0[i]);
            out.leak.push(self.leak[i]);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub truth: Truth,
}

fn draw(gen: &FactorGen, rng: &mut ChaCha8Rng, idx: Option<&WeightedIndex<f64>>) -> Value {
    match gen {
        FactorGen::Categorical { .. } => Value::Level(idx.expect("categorical sampler").sample(rng)),
        FactorGen::Uniform { low, high } => Value::Num(rng.random_range(*low..*high)),
        FactorGen::Integer { low, high } => Value::Num(rng.random_range(*low..=*high) as f64),
        FactorGen::Choice { values } => Value::Num(values[idx.expect("choice sampler").sample(rng)].0),
    }
}

/// Draws `spec.n` rows; reproducible given `spec.seed`.
pub fn generate(spec: &SynthSpec) -> Result<Synthetic> {
    spec.validate()?;
    let schema = spec.schema()?;
    let factors: Vec<(&FactorSpec, ColumnRole)> = spec.factors().collect();
    let samplers: Vec<Option<WeightedIndex<f64>>> = factors
        .iter()
        .map(|(f, _)| match &f.gen {
            FactorGen::Categorical { levels } => Some(WeightedIndex::new(levels.iter().map(|l| l.1))),
            FactorGen::Choice { values } => Some(WeightedIndex::new(values.iter().map(|v| v.1))),
            _ => None,
        })
        .map(|w| w.transpose().map_err(|e| invalid(format!("bad weights: {e}"))))
        .collect::<Result<_>>()?;
    let leak_at: Vec<(usize, &LeakTerm)> = spec
        .leak
        .iter()
        .map(|l| (spec.find(&l.factor).expect("validated").0, l))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let mut raw: Vec<Vec<Value>> = vec![Vec::with_capacity(n); factors.len()];
    let mut missing: Vec<Vec<bool>> = vec![vec![false; n]; factors.len()];
    let mut y = Vec::with_capacity(n);
    let mut truth = Truth {
        row_ids: (1..=n as u64).collect(),
        f0: Vec::with_capacity(n),
        s0: Vec::with_capacity(n),
        leak: Vec::with_capacity(n),
    };
    let mut row = Vec::with_capacity(factors.len());
    for r in 0..n {
        row.clear();
        for (j, (f, role)) in factors.iter().enumerate() {
            row.push(draw(&f.gen, &mut rng, samplers[j].as_ref()));
            if *role == ColumnRole::Irrelevant && f.kind == ColumnKind::Categorical && spec.missing_rate > 0.0 {
                missing[j][r] = rng.random::<f64>() < spec.missing_rate;
            }
        }
        let f0 = spec
            .true_mean
            .terms
            .iter()
            .fold(spec.true_mean.base, |acc, t| acc + eval_term(t, spec, &row));
        let s0 = spec
            .true_scale
            .terms
            .iter()
            .fold(spec.true_scale.base, |acc, t| acc * eval_term(t, spec, &row));
        let leak: f64 = leak_at
            .iter()
            .filter(|(j, l)| level_name(factors[*j].0, &row[*j]).as_deref() == Some(l.level.as_str()))
            .fold(0.0, |acc, (_, l)| acc + l.shift);
        let xi: f64 = rng.sample(StandardNormal);
        y.push((f0 + leak + s0 * xi).clamp(0.0, OUTCOME_CAP_MONTHS));
        truth.f0.push(f0);
        truth.s0.push(s0);
        truth.leak.push(leak);
        for (j, v) in row.drain(..).enumerate() {
            raw[j].push(v);
        }
    }

    let mut columns = vec![Column::Numeric(y.into_iter().map(Some).collect())];
    for (j, (f, _)) in factors.iter().enumerate() {
        columns.push(match &f.gen {
            FactorGen::Categorical { .. } => Column::Categorical(
                raw[j]
                    .iter()
                    .zip(&missing[j])
                    .map(|(v, &m)| if m { None } else { level_name(f, v) })
                    .collect(),
            ),
            _ => Column::Numeric(
                raw[j]
                    .iter()
                    .map(|v| match v {
                        Value::Num(x) => Some(*x),
                        Value::Level(_) => unreachable!(),
                    })
                    .collect(),
            ),
        });
    }
    if !spec.guideline_edges.is_empty() {
        columns.push(Column::Categorical(
            truth.f0.iter().map(|&m| Some(guideline_label(&spec.guideline_edges, m))).collect(),
        ));
    }
    let dataset = Dataset::new(schema, columns, truth.row_ids.clone())?;
    Ok(Synthetic { dataset, truth })
}

fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// The 19 legally irrelevant factors of the federal sentencing schema,
/// with plausible but invented level sets and frequencies.
pub fn default_irrelevant_factors() -> Vec<FactorSpec> {
    vec![
        FactorSpec::categorical(
            "MONRACE",
            &[("1", 0.52), ("2", 0.24), ("3", 0.02), ("4", 0.03), ("5", 0.19)],
        ),
        FactorSpec::categorical("DSPLEA", &[("0", 0.1), ("1", 0.85), ("3", 0.05)]),
        FactorSpec::uniform_levels("SENTMON", &numbered("", 12)),
        FactorSpec::categorical("DISPOSIT", &[("1", 0.9), ("2", 0.03), ("3", 0.05), ("4", 0.02)]),
        FactorSpec::categorical("PRESENT", &[("0", 0.2), ("1", 0.2), ("2", 0.5), ("3", 0.1)]),
        FactorSpec::categorical("DSIND", &[("0", 0.05), ("1", 0.9), ("3", 0.05)]),
        FactorSpec::categorical("HISPORIG", &[("1", 0.6), ("2", 0.4)]),
        FactorSpec::uniform_levels("MONCIRC", &numbered("", 11)),
        FactorSpec::categorical("DSPSR", &[("0", 0.05), ("1", 0.95)]),
        FactorSpec::uniform_levels("DISTRICT", &numbered("D", 20)),
        FactorSpec::numeric("AGE", FactorGen::Integer { low: 18, high: 80 }),
        FactorSpec::categorical("MONSEX", &[("0", 0.86), ("1", 0.14)]),
        FactorSpec::categorical("NEWCIT", &[("0", 0.6), ("1", 0.4)]),
        FactorSpec::categorical("NEWEDUC", &[("1", 0.45), ("3", 0.3), ("5", 0.15), ("6", 0.1)]),
        FactorSpec::categorical("PartyofAppointingPresident1", &[("Democratic", 0.5), ("Republican", 0.5)]),
        FactorSpec::categorical("PreBooker", &[("0", 0.6), ("1", 0.4)]),
        FactorSpec::categorical(
            "RaceorEthnicity",
            &[("White", 0.7), ("African American", 0.15), ("Hispanic", 0.1), ("Asian American", 0.05)],
        ),
        FactorSpec::categorical("Gender", &[("Male", 0.7), ("Female", 0.3)]),
        FactorSpec::categorical("SENTYR", &[("2016", 0.5), ("2017", 0.5)]),
    ]
}

/// Interaction pairs of the default stage-2 design.
pub fn default_interactions() -> Vec<(String, String)> {
    [
        ("MONRACE", "RaceorEthnicity"),
        ("MONSEX", "Gender"),
        ("MONCIRC", "PartyofAppointingPresident1"),
    ]
    .iter()
    .map(|&(a, b)| (a.to_string(), b.to_string()))
    .collect()
}

impl SynthSpec {
    /// Sentencing-shaped data: offense level, criminal history and a
    /// statutory minimum drive `f0`, and the spread grows with offense
    /// level. With `leak`, defendants with MONRACE 2 and cases in district
    /// D7 get longer sentences than their relevant factors warrant.
    pub fn sentencing(n: usize, seed: u64, leak: bool) -> Self {
        let history: Vec<String> = numbered("", 6);
        let relevant = vec![
            FactorSpec::numeric("XFOLSOR", FactorGen::Integer { low: 1, high: 43 }),
            FactorSpec::categorical(
                "XCRHISSR",
                &[("1", 0.45), ("2", 0.12), ("3", 0.16), ("4", 0.1), ("5", 0.06), ("6", 0.11)],
            ),
            FactorSpec::numeric(
                "STATMIN",
                FactorGen::Choice {
                    values: vec![(0.0, 0.7), (60.0, 0.2), (120.0, 0.1)],
                },
            ),
            FactorSpec {
                name: "ACCTRESP".into(),
                kind: ColumnKind::EnhancementPoints,
                gen: FactorGen::Choice {
                    values: vec![(0.0, 0.1), (2.0, 0.2), (3.0, 0.7)],
                },
            },
        ];
        let true_mean = PiecewiseFn {
            base: 0.0,
            terms: vec![
                Term::Steps {
                    factor: "XFOLSOR".into(),
                    breaks: vec![10.0, 16.0, 22.0, 28.0, 34.0, 40.0],
                    values: vec![2.0, 10.0, 24.0, 45.0, 80.0, 150.0, 280.0],
                },
                Term::Levels {
                    factor: "XCRHISSR".into(),
                    values: history.iter().zip([0.0, 3.0, 6.0, 12.0, 18.0, 28.0]).map(|(l, v)| (l.clone(), v)).collect(),
                    otherwise: 0.0,
                },
                Term::Steps {
                    factor: "STATMIN".into(),
                    breaks: vec![30.0, 90.0],
                    values: vec![0.0, 20.0, 50.0],
                },
            ],
        };
        let true_scale = PiecewiseFn {
            base: 2.0,
            terms: vec![
                Term::Steps {
                    factor: "XFOLSOR".into(),
                    breaks: vec![16.0, 28.0, 38.0],
                    values: vec![1.0, 3.0, 7.0, 14.0],
                },
                Term::Levels {
                    factor: "XCRHISSR".into(),
                    values: vec![("5".into(), 1.3), ("6".into(), 1.5)],
                    otherwise: 1.0,
                },
            ],
        };
        let leak = if leak {
            vec![
                LeakTerm {
                    factor: "MONRACE".into(),
                    level: "2".into(),
                    shift: 3.0,
                },
                LeakTerm {
                    factor: "DISTRICT".into(),
                    level: "D7".into(),
                    shift: 5.0,
                },
            ]
        } else {
            Vec::new()
        };
        Self {
            n,
            relevant,
            irrelevant: default_irrelevant_factors(),
            true_mean,
            true_scale,
            leak,
            missing_rate: 0.01,
            guideline_edges: vec![6.0, 12.0, 24.0, 60.0, 120.0, 240.0],
            seed,
        }
    }

    /// Ten uniform features; `f0` is 20 or 60 months by the first, `s0` is 2
    /// or 8 months by the second.
    pub fn two_region(n: usize, seed: u64) -> Self {
        let relevant = (1..=10)
            .map(|j| FactorSpec::numeric(&format!("X{j}"), FactorGen::Uniform { low: 0.0, high: 1.0 }))
            .collect();
        Self {
            n,
            relevant,
            irrelevant: vec![FactorSpec::uniform_levels("Z1", &["a", "b"])],
            true_mean: PiecewiseFn {
                base: 0.0,
                terms: vec![Term::Steps {
                    factor: "X1".into(),
                    breaks: vec![0.5],
                    values: vec![20.0, 60.0],
                }],
            },
            true_scale: PiecewiseFn {
                base: 1.0,
                terms: vec![Term::Steps {
                    factor: "X2".into(),
                    breaks: vec![0.5],
                    values: vec![2.0, 8.0],
                }],
            },
            leak: Vec::new(),
            missing_rate: 0.0,
            guideline_edges: Vec::new(),
            seed,
        }
    }
}

/// Pairwise Mann-Whitney AUC with explicit half credit for ties.
pub fn oracle_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() || scores.len() > 10_000 {
        return Err(invalid("oracle needs matching inputs of at most 10000 rows"));
    }
    let mut credit = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                credit += 1.0;
            } else if scores[i] == scores[j] {
                credit += 0.5;
            }
        }
    }
    if pairs == 0.0 {
        return Err(invalid("oracle AUC needs both classes"));
    }
    Ok(credit / pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub iterations: usize,
}

/// Unpenalized logistic maximum likelihood by damped Newton-Raphson, to a
/// mean gradient norm below 1e-10.
pub fn oracle_logit_mle(rows: &[Vec<f64>], labels: &[bool]) -> Result<MleFit> {
    let n = rows.len();
    if n != labels.len() || n == 0 {
        return Err(invalid("oracle needs one label per row"));
    }
    let p = rows[0].len();
    if p > 10 || n > 1000 || rows.iter().any(|r| r.len() != p) {
        return Err(invalid("oracle handles at most 10 columns and 1000 rows"));
    }
    let x = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] });
    let y = DVector::from_iterator(n, labels.iter().map(|&l| f64::from(u8::from(l))));
    let loglik = |b: &DVector<f64>| -> f64 {
        let eta = &x * b;
        eta.iter()
            .zip(y.iter())
            .map(|(&e, &t)| t * e - if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() })
            .sum()
    };
    let mut beta = DVector::zeros(p + 1);
    let mut ll = loglik(&beta);
    for iter in 1..=200 {
        let eta = &x * &beta;
        let prob = eta.map(sigmoid);
        let grad = x.transpose() * (&y - &prob);
        if grad.norm() < 1e-10 * n as f64 {
            return Ok(MleFit {
                intercept: beta[0],
                coefficients: beta.iter().skip(1).copied().collect(),
                iterations: iter - 1,
            });
        }
        if beta.amax() > 30.0 {
            return Err(Error::Numerical("coefficients diverge: data look separable".into()));
        }
        let w = prob.map(|q| q * (1.0 - q));
        let xw = DMatrix::from_fn(n, p + 1, |i, j| x[(i, j)] * w[i]);
        let hess = x.transpose() * xw;
        let step = hess
            .cholesky()
            .ok_or_else(|| Error::Numerical("information matrix is singular".into()))?
            .solve(&grad);
        let mut t = 1.0;
        loop {
            let cand = &beta + &step * t;
            let cll = loglik(&cand);
            if cll >= ll - 1e-12 * ll.abs() || t < 1e-12 {
                beta = cand;
                ll = cll;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::Numerical("Newton iterations did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_design, preprocess};
    use crate::flagger::{flag_values, FlagConfig};

    fn constant_spec(n: usize, mean: f64, scale: f64) -> SynthSpec {
        SynthSpec {
            n,
            relevant: vec![FactorSpec::numeric("X", FactorGen::Uniform { low: 0.0, high: 1.0 })],
            irrelevant: vec![FactorSpec::uniform_levels("Z", &["a", "b"])],
            true_mean: PiecewiseFn { base: mean, terms: vec![] },
            true_scale: PiecewiseFn { base: scale, terms: vec![] },
            leak: vec![],
            missing_rate: 0.0,
            guideline_edges: vec![],
            seed: 17,
        }
    }

    fn outcome(s: &Synthetic) -> Vec<f64> {
        s.dataset.outcome_values().unwrap()
    }

    #[test]
    fn constant_mean_is_recovered() {
        let y = outcome(&generate(&constant_spec(10_000, 100.0, 1.0)).unwrap());
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((mean - 100.0).abs() < 0.1);
    }

    #[test]
    fn cap_forces_outcome() {
        let y = outcome(&generate(&constant_spec(500, 550.0, 0.5)).unwrap());
        assert!(y.iter().all(|&v| v == 540.0));
    }

    #[test]
    fn scale_regions_differ() {
        let mut spec = constant_spec(20_000, 200.0, 1.0);
        spec.true_scale.terms.push(Term::Steps {
            factor: "X".into(),
            breaks: vec![0.5],
            values: vec![5.0, 20.0],
        });
        let s = generate(&spec).unwrap();
        let y = outcome(&s);
        let Column::Numeric(x) = &s.dataset.columns()[1] else { panic!() };
        let sd = |keep: &dyn Fn(f64) -> bool| {
            let v: Vec<f64> = y.iter().zip(x).filter(|(_, xi)| keep(xi.unwrap())).map(|(y, _)| *y).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        };
        let ratio = sd(&|v| v >= 0.5) / sd(&|v| v < 0.5);
        assert!((3.0..=5.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn generation_is_reproducible_and_capped() {
        let spec = SynthSpec::sentencing(3000, 5, true);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.truth, b.truth);
        assert!(outcome(&a).iter().all(|&v| (0.0..=540.0).contains(&v)));
        assert!(a.truth.s0.iter().all(|&s| s > 0.0));
        let c = generate(&SynthSpec { seed: 6, ..spec }).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn sentencing_schema_shape() {
        let spec = SynthSpec::sentencing(2000, 1, false);
        let schema = spec.schema().unwrap();
        assert_eq!(schema.with_role(ColumnRole::Irrelevant).count(), 19);
        assert_eq!(schema.get(GUIDELINE_COLUMN).map(|c| c.role), Some(ColumnRole::Ignored));
        let ds = preprocess(&generate(&spec).unwrap().dataset);
        let z = build_design(&ds, ColumnRole::Irrelevant, &default_interactions(), true).unwrap();
        let mut groups: Vec<&String> = z.groups().iter().collect();
        groups.dedup();
        assert_eq!(groups.len(), 22);
        assert!(z.groups().iter().any(|g| g == "MONRACE*RaceorEthnicity"));
    }

    #[test]
    fn leak_raises_flag_rate_in_its_group() {
        let s = generate(&SynthSpec::sentencing(20_000, 3, true)).unwrap();
        let y = outcome(&s);
        let mean: Vec<f64> = s.truth.f0.clone();
        let flags = flag_values(&mean, &s.truth.s0, &y, &FlagConfig::new(0.1).unwrap()).unwrap();
        let Some(Column::Categorical(race)) = s.dataset.column("MONRACE") else { panic!() };
        let rate = |inside: bool| {
            let sel: Vec<bool> = race
                .iter()
                .zip(&flags.labels)
                .filter(|(r, _)| (r.as_deref() == Some("2")) == inside)
                .map(|(_, &l)| l)
                .collect();
            sel.iter().filter(|&&l| l).count() as f64 / sel.len() as f64
        };
        assert!(rate(true) > rate(false) + 0.05);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = constant_spec(10, 1.0, 1.0);
        s.true_scale.base = 0.0;
        assert!(generate(&s).is_err());
        let mut s = constant_spec(10, 1.0, 1.0);
        s.irrelevant = vec![FactorSpec::categorical("Z", &[("a", 0.5), ("b", 0.4)])];
        assert!(generate(&s).is_err());
        let mut s = constant_spec(10, 1.0, 1.0);
        s.leak.push(LeakTerm {
            factor: "X".into(),
            level: "a".into(),
            shift: 1.0,
        });
        assert!(generate(&s).is_err());
        let mut s = constant_spec(10, 1.0, 1.0);
        s.true_mean.terms.push(Term::Levels {
            factor: "Z".into(),
            values: vec![],
            otherwise: 1.0,
        });
        assert!(generate(&s).is_err());
    }

    #[test]
    fn missing_cells_only_in_irrelevant_categoricals() {
        let mut spec = SynthSpec::sentencing(5000, 9, false);
        spec.missing_rate = 0.2;
        let s = generate(&spec).unwrap();
        for (c, col) in s.dataset.schema().columns().iter().zip(s.dataset.columns()) {
            let missing = (0..col.len()).filter(|&r| col.is_missing(r)).count();
            if c.role == ColumnRole::Irrelevant && c.kind == ColumnKind::Categorical {
                assert!(missing > 700 && missing < 1300, "{}: {missing}", c.name);
            } else {
                assert_eq!(missing, 0, "{}", c.name);
            }
        }
    }

    #[test]
    fn guideline_labels() {
        let e = [6.0, 12.0, 24.0];
        assert_eq!(guideline_label(&e, 3.0), "<6");
        assert_eq!(guideline_label(&e, 6.0), "6-12");
        assert_eq!(guideline_label(&e, 30.0), "24+");
    }

    #[test]
    fn truth_sidecar() {
        let s = generate(&constant_spec(3, 10.0, 1.0)).unwrap();
        let mut buf = Vec::new();
        s.truth.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "row_id,f0,s0,leak\n1,10,1,0\n2,10,1,0\n3,10,1,0\n"
        );
        assert_eq!(s.truth.select(&[3, 1]).unwrap().row_ids, vec![3, 1]);
        assert!(s.truth.select(&[4]).is_err());
    }

    #[test]
    fn oracle_auc_basics() {
        assert_eq!(oracle_auc(&[0.2; 4], &[true, false, true, false]).unwrap(), 0.5);
        assert_eq!(oracle_auc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert!(oracle_auc(&[0.9, 0.1], &[true, true]).is_err());
    }

    #[test]
    fn oracle_mle_closed_forms() {
        let rows = vec![vec![]; 8];
        let labels = [true, false, false, false, true, false, false, false];
        let fit = oracle_logit_mle(&rows, &labels).unwrap();
        assert!((fit.intercept - (1.0f64 / 3.0).ln()).abs() < 1e-12);

        let rows: Vec<Vec<f64>> = [-2.0, -1.0, 0.0, 1.0, 2.0, -2.0, -1.0, 0.0, 1.0, 2.0]
            .iter()
            .map(|&v| vec![v])
            .collect();
        let labels = [false, false, true, true, true, false, true, false, false, true];
        let a = oracle_logit_mle(&rows, &labels).unwrap();
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        let b = oracle_logit_mle(&rows, &flipped).unwrap();
        assert!((a.coefficients[0] + b.coefficients[0]).abs() < 1e-10);
        assert!((a.intercept + b.intercept).abs() < 1e-10);

        let sep: Vec<bool> = rows.iter().map(|r| r[0] > 0.0).collect();
        assert!(matches!(oracle_logit_mle(&rows, &sep), Err(Error::Numerical(_))));
    }
}
