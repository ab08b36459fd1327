//! Case data: column schema, CSV ingestion, cleaning rules, train/test
//! partition and design-matrix encoding.
//!
//! Column roles come from a sidecar schema file rather than hard-coded names,
//! so real exports and synthetic data go through the same path.
//!
//! Schema grammar, one column per line:
//!
//! ```text
//! # comment
//! <name> <kind> <role>
//! ```
//!
//! where `kind` is `categorical`, `numeric` or `enhancement-points` and
//! `role` is `outcome`, `relevant`, `irrelevant` or `ignored`. Blank lines
//! and everything after `#` are ignored.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Sentences above this many months are recorded as this many months.
pub const OUTCOME_CAP_MONTHS: f64 = 540.0;

/// Level assigned to missing categorical cells.
pub const UNKNOWN_LEVEL: &str = "unknown";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Categorical,
    Numeric,
    /// Offense-level enhancement points; missing means zero points.
    EnhancementPoints,
}

impl ColumnKind {
    pub fn is_numeric(self) -> bool {
        !matches!(self, ColumnKind::Categorical)
    }
}

impl FromStr for ColumnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "categorical" => Ok(ColumnKind::Categorical),
            "numeric" => Ok(ColumnKind::Numeric),
            "enhancement-points" => Ok(ColumnKind::EnhancementPoints),
            other => Err(Error::Schema(format!("unknown column kind `{other}`"))),
        }
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnKind::Categorical => "categorical",
            ColumnKind::Numeric => "numeric",
            ColumnKind::EnhancementPoints => "enhancement-points",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnRole {
    Outcome,
    /// Legally relevant factor (stage-1 covariate).
    Relevant,
    /// Legally irrelevant factor (stage-2 covariate).
    Irrelevant,
    Ignored,
}

impl FromStr for ColumnRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "outcome" => Ok(ColumnRole::Outcome),
            "relevant" => Ok(ColumnRole::Relevant),
            "irrelevant" => Ok(ColumnRole::Irrelevant),
            "ignored" => Ok(ColumnRole::Ignored),
            other => Err(Error::Schema(format!("unknown column role `{other}`"))),
        }
    }
}

impl fmt::Display for ColumnRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnRole::Outcome => "outcome",
            ColumnRole::Relevant => "relevant",
            ColumnRole::Irrelevant => "irrelevant",
            ColumnRole::Ignored => "ignored",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub role: ColumnRole,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind, role: ColumnRole) -> Self {
        Self {
            name: name.into(),
            kind,
            role,
        }
    }
}

/// Validated list of column specs: unique names, exactly one numeric outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &columns {
            if c.name.is_empty() || c.name.chars().any(char::is_whitespace) {
                return Err(Error::Schema(format!("invalid column name `{}`", c.name)));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
        }
        let outcomes: Vec<_> = columns
            .iter()
            .filter(|c| c.role == ColumnRole::Outcome)
            .collect();
        match outcomes.as_slice() {
            [o] if o.kind.is_numeric() => {}
            [o] => {
                return Err(Error::Schema(format!(
                    "outcome column `{}` must be numeric",
                    o.name
                )))
            }
            [] => return Err(Error::Schema("no outcome column".into())),
            _ => return Err(Error::Schema("more than one outcome column".into())),
        }
        Ok(Self { columns })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut columns = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [name, kind, role] = fields.as_slice() else {
                return Err(Error::Schema(format!(
                    "line {}: expected `<name> <kind> <role>`, got `{line}`",
                    lineno + 1
                )));
            };
            columns.push(ColumnSpec::new(*name, kind.parse()?, role.parse()?));
        }
        Self::new(columns)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# name kind role\n");
        for c in &self.columns {
            out.push_str(&format!("{} {} {}\n", c.name, c.kind, c.role));
        }
        out
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn outcome_index(&self) -> usize {
        self.columns
            .iter()
            .position(|c| c.role == ColumnRole::Outcome)
            .expect("validated schema has an outcome")
    }

    pub fn with_role(&self, role: ColumnRole) -> impl Iterator<Item = (usize, &ColumnSpec)> {
        self.columns
            .iter()
            .enumerate()
            .filter(move |(_, c)| c.role == role)
    }

    /// Copy of the schema with the named columns demoted to `ignored`.
    pub fn excluding(&self, names: &[String]) -> Result<Self> {
        let mut columns = self.columns.clone();
        for name in names {
            let col = columns
                .iter_mut()
                .find(|c| &c.name == name)
                .ok_or_else(|| Error::Schema(format!("excluded column `{name}` not in schema")))?;
            if col.role == ColumnRole::Outcome {
                return Err(Error::Schema(format!("cannot exclude outcome `{name}`")));
            }
            col.role = ColumnRole::Ignored;
        }
        Self::new(columns)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Raw cell storage for one column; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Categorical(Vec<Option<String>>),
    Numeric(Vec<Option<f64>>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Categorical(v) => v.len(),
            Column::Numeric(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            Column::Categorical(v) => v[row].is_none(),
            Column::Numeric(v) => v[row].is_none(),
        }
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&i| v[i].clone()).collect()),
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// Tabular case records keyed by schema column, plus a train/test assignment.
///
/// Every row starts in the training split until [`split`] is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    columns: Vec<Column>,
    row_ids: Vec<u64>,
    split: Vec<Split>,
}

impl Dataset {
    pub fn new(schema: Schema, columns: Vec<Column>, row_ids: Vec<u64>) -> Result<Self> {
        if columns.len() != schema.columns().len() {
            return Err(invalid(format!(
                "{} columns for a schema of {}",
                columns.len(),
                schema.columns().len()
            )));
        }
        let n = row_ids.len();
        for (spec, col) in schema.columns().iter().zip(&columns) {
            if col.len() != n {
                return Err(invalid(format!(
                    "column `{}` has {} rows, expected {n}",
                    spec.name,
                    col.len()
                )));
            }
            let storage_ok = match col {
                Column::Categorical(_) => spec.kind == ColumnKind::Categorical,
                Column::Numeric(_) => spec.kind.is_numeric(),
            };
            if !storage_ok {
                return Err(invalid(format!(
                    "column `{}` storage does not match kind {}",
                    spec.name, spec.kind
                )));
            }
        }
        Ok(Self {
            schema,
            columns,
            split: vec![Split::Train; n],
            row_ids,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn split_assignment(&self) -> &[Split] {
        &self.split
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.schema.index_of(name).map(|i| &self.columns[i])
    }

    pub fn outcome(&self) -> &[Option<f64>] {
        match &self.columns[self.schema.outcome_index()] {
            Column::Numeric(v) => v,
            Column::Categorical(_) => unreachable!("schema enforces a numeric outcome"),
        }
    }

    /// Outcome values, failing if any are still missing.
    pub fn outcome_values(&self) -> Result<Vec<f64>> {
        self.outcome()
            .iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| invalid(format!("row {} has no outcome", self.row_ids[i]))))
            .collect()
    }

    /// Rows with every column of `role` present.
    pub fn complete_rows(&self, role: ColumnRole) -> Vec<usize> {
        let cols: Vec<&Column> = self
            .schema
            .with_role(role)
            .map(|(i, _)| &self.columns[i])
            .collect();
        (0..self.n_rows())
            .filter(|&r| cols.iter().all(|c| !c.is_missing(r)))
            .collect()
    }

    pub fn rows_in(&self, which: Split) -> Vec<usize> {
        (0..self.n_rows()).filter(|&r| self.split[r] == which).collect()
    }

    /// Replaces the schema (same column names in the same order, possibly
    /// changed roles).
    pub fn with_schema(mut self, schema: Schema) -> Result<Self> {
        let same = schema.columns().len() == self.schema.columns().len()
            && schema
                .columns()
                .iter()
                .zip(self.schema.columns())
                .all(|(a, b)| a.name == b.name && a.kind == b.kind);
        if !same {
            return Err(Error::Schema("replacement schema changes column layout".into()));
        }
        self.schema = schema;
        Ok(self)
    }

    fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            row_ids: rows.iter().map(|&i| self.row_ids[i]).collect(),
            split: rows.iter().map(|&i| self.split[i]).collect(),
        }
    }
}

fn parse_numeric(cell: &str) -> Option<f64> {
    let t = cell.trim();
    if is_na(t) {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn is_na(t: &str) -> bool {
    matches!(t, "" | "NA" | "na" | "N/A" | "NaN" | "nan" | "." | "NULL")
}

/// Reads a CSV file (RFC 4180 quoting) whose header contains every schema
/// column. Extra columns are ignored; row ids are 1-based data-line numbers.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    let meta = std::fs::metadata(path)?;
    if meta.len() == 0 {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    if header.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let positions: Vec<usize> = schema
        .columns()
        .iter()
        .map(|c| {
            header
                .iter()
                .position(|h| h.trim() == c.name)
                .ok_or_else(|| Error::MissingColumn(c.name.clone()))
        })
        .collect::<Result<_>>()?;

    let mut columns: Vec<Column> = schema
        .columns()
        .iter()
        .map(|c| match c.kind {
            ColumnKind::Categorical => Column::Categorical(Vec::new()),
            _ => Column::Numeric(Vec::new()),
        })
        .collect();
    let mut row_ids = Vec::new();
    let mut unparseable = 0usize;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        for (col, &pos) in columns.iter_mut().zip(&positions) {
            let cell = record.get(pos).unwrap_or("");
            match col {
                Column::Categorical(v) => {
                    let t = cell.trim();
                    v.push((!is_na(t)).then(|| t.to_string()));
                }
                Column::Numeric(v) => {
                    let parsed = parse_numeric(cell);
                    if parsed.is_none() && !is_na(cell.trim()) {
                        unparseable += 1;
                    }
                    v.push(parsed);
                }
            }
        }
        row_ids.push(line as u64 + 1);
    }
    if row_ids.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    if unparseable > 0 {
        log::warn!("{unparseable} unparseable numeric cells treated as missing");
    }
    Dataset::new(schema.clone(), columns, row_ids)
}

/// Writes the schema columns as CSV in schema order, missing cells as `NA`.
/// Row order is preserved, so [`load_csv`] reassigns the same row ids when
/// they are `1..=n`.
pub fn write_csv<W: std::io::Write>(ds: &Dataset, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(ds.schema.columns().iter().map(|c| c.name.as_str()))?;
    let mut record = Vec::with_capacity(ds.columns.len());
    for r in 0..ds.n_rows() {
        record.clear();
        for col in &ds.columns {
            record.push(match col {
                Column::Categorical(v) => v[r].clone().unwrap_or_else(|| "NA".into()),
                Column::Numeric(v) => v[r].map_or_else(|| "NA".into(), |x| x.to_string()),
            });
        }
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

/// Applies the cleaning rules: categorical NA becomes `unknown`,
/// enhancement-point NA becomes 0, outcomes are clamped to `[0, 540]`, and
/// rows without an outcome are dropped. Numeric factors stay missing; such
/// rows are left out of the corresponding design by [`build_design`].
pub fn preprocess(ds: &Dataset) -> Dataset {
    let keep: Vec<usize> = (0..ds.n_rows()).filter(|&r| ds.outcome()[r].is_some()).collect();
    let dropped = ds.n_rows() - keep.len();
    if dropped > 0 {
        log::info!("dropped {dropped} rows with missing outcome");
    }
    let mut out = if dropped > 0 { ds.select_rows(&keep) } else { ds.clone() };
    let outcome_index = out.schema.outcome_index();
    for (spec, col) in out.schema.columns.iter().zip(out.columns.iter_mut()) {
        match (spec.kind, col) {
            (ColumnKind::Categorical, Column::Categorical(v)) => {
                for cell in v.iter_mut().filter(|c| c.is_none()) {
                    *cell = Some(UNKNOWN_LEVEL.to_string());
                }
            }
            (ColumnKind::EnhancementPoints, Column::Numeric(v)) => {
                for cell in v.iter_mut().filter(|c| c.is_none()) {
                    *cell = Some(0.0);
                }
            }
            _ => {}
        }
    }
    if let Column::Numeric(v) = &mut out.columns[outcome_index] {
        for y in v.iter_mut().flatten() {
            *y = y.clamp(0.0, OUTCOME_CAP_MONTHS);
        }
    }
    out
}

/// Deterministic train/test partition with `floor(n * train_fraction)`
/// training rows (clamped so both sides are non-empty).
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<Dataset> {
    let n = ds.n_rows();
    if n < 2 {
        return Err(invalid(format!("cannot split {n} rows")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(invalid(format!("train fraction {train_fraction} not in (0, 1)")));
    }
    let n_train = train_count(n, train_fraction);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = ds.clone();
    out.split = vec![Split::Test; n];
    for &i in &order[..n_train] {
        out.split[i] = Split::Train;
    }
    Ok(out)
}

pub(crate) fn train_count(n: usize, fraction: f64) -> usize {
    // The epsilon keeps exact products such as 10 * 0.8 from flooring down.
    let raw = (n as f64 * fraction + 1e-9).floor() as usize;
    raw.clamp(1, n - 1)
}

/// Numeric factor matrix with named, grouped columns.
///
/// Rows refer back to dataset positions through [`DesignMatrix::row_index`].
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    column_names: Vec<String>,
    groups: Vec<String>,
    values: Vec<f64>,
    n_rows: usize,
    source: ColumnRole,
    interaction_terms: Vec<(String, String)>,
    row_index: Vec<usize>,
    standardized_numeric: bool,
}

impl DesignMatrix {
    /// Builds a matrix directly from row-major values. Each column is its own
    /// group.
    pub fn from_rows(column_names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = column_names.len();
        let mut values = Vec::with_capacity(rows.len() * p);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(invalid(format!("row {i} has {} values, expected {p}", r.len())));
            }
            values.extend_from_slice(r);
        }
        Ok(Self {
            groups: column_names.clone(),
            column_names,
            values,
            n_rows: rows.len(),
            source: ColumnRole::Ignored,
            interaction_terms: Vec::new(),
            row_index: (0..rows.len()).collect(),
            standardized_numeric: false,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Originating factor (or `A*B` interaction) of each column.
    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn source(&self) -> ColumnRole {
        self.source
    }

    pub fn interaction_terms(&self) -> &[(String, String)] {
        &self.interaction_terms
    }

    pub fn standardized_numeric(&self) -> bool {
        self.standardized_numeric
    }

    /// Dataset row position of each matrix row.
    pub fn row_index(&self) -> &[usize] {
        &self.row_index
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    /// Sub-matrix of the given matrix-row positions, in that order.
    pub fn select_rows(&self, positions: &[usize]) -> DesignMatrix {
        let mut values = Vec::with_capacity(positions.len() * self.n_cols());
        for &i in positions {
            values.extend_from_slice(self.row(i));
        }
        DesignMatrix {
            values,
            n_rows: positions.len(),
            row_index: positions.iter().map(|&i| self.row_index[i]).collect(),
            ..self.clone_meta()
        }
    }

    /// Drops columns whose values are all identical; returns the names removed.
    pub fn drop_constant_columns(&self) -> (DesignMatrix, Vec<String>) {
        let keep: Vec<usize> = (0..self.n_cols())
            .filter(|&j| {
                let first = self.get(0, j);
                (0..self.n_rows).any(|i| self.get(i, j) != first)
            })
            .collect();
        let dropped = (0..self.n_cols())
            .filter(|j| !keep.contains(j))
            .map(|j| self.column_names[j].clone())
            .collect();
        (self.select_columns(&keep), dropped)
    }

    /// Copy without the named columns; unknown names are ignored.
    pub fn without_columns(&self, names: &[String]) -> DesignMatrix {
        let keep: Vec<usize> = (0..self.n_cols())
            .filter(|&j| !names.contains(&self.column_names[j]))
            .collect();
        self.select_columns(&keep)
    }

    fn select_columns(&self, keep: &[usize]) -> DesignMatrix {
        let mut values = Vec::with_capacity(self.n_rows * keep.len());
        for i in 0..self.n_rows {
            let row = self.row(i);
            values.extend(keep.iter().map(|&j| row[j]));
        }
        DesignMatrix {
            column_names: keep.iter().map(|&j| self.column_names[j].clone()).collect(),
            groups: keep.iter().map(|&j| self.groups[j].clone()).collect(),
            values,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> DesignMatrix {
        DesignMatrix {
            column_names: self.column_names.clone(),
            groups: self.groups.clone(),
            values: Vec::new(),
            n_rows: self.n_rows,
            source: self.source,
            interaction_terms: self.interaction_terms.clone(),
            row_index: self.row_index.clone(),
            standardized_numeric: self.standardized_numeric,
        }
    }
}

/// Encoded block of one factor: column names and per-row values (row-major
/// within the block).
struct Block {
    names: Vec<String>,
    values: Vec<Vec<f64>>,
}

fn encode_factor(ds: &Dataset, col: usize, rows: &[usize], standardize: bool) -> Result<Block> {
    let spec = &ds.schema.columns()[col];
    match &ds.columns[col] {
        Column::Categorical(v) => {
            let levels: BTreeSet<&str> = rows.iter().filter_map(|&r| v[r].as_deref()).collect();
            let levels: Vec<&str> = levels.into_iter().collect();
            let names = levels.iter().map(|l| format!("{}={l}", spec.name)).collect();
            let values = rows
                .iter()
                .map(|&r| {
                    let cell = v[r].as_deref();
                    levels.iter().map(|l| f64::from(Some(*l) == cell)).collect()
                })
                .collect();
            Ok(Block { names, values })
        }
        Column::Numeric(v) => {
            let mut xs: Vec<f64> = rows.iter().map(|&r| v[r].unwrap_or(f64::NAN)).collect();
            if standardize {
                let n = xs.len() as f64;
                let mean = xs.iter().sum::<f64>() / n;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                let sd = var.sqrt();
                if !(sd > 0.0) {
                    return Err(Error::Numerical(format!(
                        "numeric column `{}` is constant; cannot standardize",
                        spec.name
                    )));
                }
                for x in &mut xs {
                    *x = (*x - mean) / sd;
                }
            }
            Ok(Block {
                names: vec![spec.name.clone()],
                values: xs.into_iter().map(|x| vec![x]).collect(),
            })
        }
    }
}

/// Encodes the factors of `role` as a design matrix over the rows complete
/// for that role.
///
/// Categorical factors get a full indicator set (no reference level; the
/// penalized stage-2 fit does not need one), levels in sorted order. Each
/// interaction pair expands to the products of the two factors' columns,
/// appended after the main effects. Numeric columns are standardized to mean
/// 0 and sample sd 1 when requested.
pub fn build_design(
    ds: &Dataset,
    role: ColumnRole,
    interactions: &[(String, String)],
    standardize_numeric: bool,
) -> Result<DesignMatrix> {
    if !matches!(role, ColumnRole::Relevant | ColumnRole::Irrelevant) {
        return Err(invalid(format!("design role must be relevant or irrelevant, got {role}")));
    }
    let rows = ds.complete_rows(role);
    if rows.is_empty() {
        return Err(invalid(format!("no rows with all {role} factors present")));
    }
    let factor_cols: Vec<usize> = ds.schema.with_role(role).map(|(i, _)| i).collect();
    let mut blocks = Vec::with_capacity(factor_cols.len());
    for &c in &factor_cols {
        blocks.push((ds.schema.columns()[c].name.clone(), encode_factor(ds, c, &rows, standardize_numeric)?));
    }
    let find = |name: &str| -> Result<usize> {
        blocks
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| invalid(format!("interaction factor `{name}` is not a {role} factor")))
    };
    let mut inter_blocks = Vec::with_capacity(interactions.len());
    for (a, b) in interactions {
        let (ia, ib) = (find(a)?, find(b)?);
        let (ba, bb) = (&blocks[ia].1, &blocks[ib].1);
        let mut names = Vec::with_capacity(ba.names.len() * bb.names.len());
        for na in &ba.names {
            for nb in &bb.names {
                names.push(format!("{na}*{nb}"));
            }
        }
        let values = (0..rows.len())
            .map(|r| {
                let mut row = Vec::with_capacity(names.len());
                for va in &ba.values[r] {
                    for vb in &bb.values[r] {
                        row.push(va * vb);
                    }
                }
                row
            })
            .collect();
        inter_blocks.push((format!("{a}*{b}"), Block { names, values }));
    }

    let all: Vec<&(String, Block)> = blocks.iter().chain(inter_blocks.iter()).collect();
    let mut column_names = Vec::new();
    let mut groups = Vec::new();
    for (group, block) in &all {
        for name in &block.names {
            column_names.push(name.clone());
            groups.push(group.clone());
        }
    }
    let mut values = Vec::with_capacity(rows.len() * column_names.len());
    for r in 0..rows.len() {
        for (_, block) in &all {
            values.extend_from_slice(&block.values[r]);
        }
    }
    Ok(DesignMatrix {
        column_names,
        groups,
        values,
        n_rows: rows.len(),
        source: role,
        interaction_terms: interactions.to_vec(),
        row_index: rows,
        standardized_numeric: standardize_numeric,
    })
}
