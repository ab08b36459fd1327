//! Pipeline configuration: one TOML file with `[paths]`, `[seeds]`,
//! `[stage1]`, `[flag]`, `[stage2]` and `[design]` sections. Relative paths
//! resolve against the directory holding the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sentrisk::{HbartConfig, LassoConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    /// Precomputed flags to enter the pipeline at stage two.
    pub flags: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data: None,
            schema: None,
            flags: None,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub split: u64,
    pub mcmc: u64,
    pub cv: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { split: 1, mcmc: 2, cv: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlagSection {
    pub alpha: f64,
}

impl Default for FlagSection {
    fn default() -> Self {
        Self { alpha: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSection {
    pub train_fraction: f64,
    /// Pairs of irrelevant factors whose products enter stage two.
    pub interactions: Vec<[String; 2]>,
    /// Columns treated as ignored regardless of their schema role.
    pub exclude: Vec<String>,
    /// Column whose levels key the flag-rate table.
    pub bin_column: String,
    pub risk_bins: usize,
    pub geweke_first: f64,
    pub geweke_last: f64,
}

impl Default for DesignSection {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            interactions: Vec::new(),
            exclude: Vec::new(),
            bin_column: sentrisk::synth::GUIDELINE_COLUMN.to_string(),
            risk_bins: 5,
            geweke_first: 0.1,
            geweke_last: 0.5,
        }
    }
}

impl DesignSection {
    pub fn interaction_pairs(&self) -> Vec<(String, String)> {
        self.interactions.iter().map(|[a, b]| (a.clone(), b.clone())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub seeds: Seeds,
    pub stage1: HbartConfig,
    pub flag: FlagSection,
    pub stage2: LassoConfig,
    pub design: DesignSection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed_split: Option<u64>,
    pub seed_mcmc: Option<u64>,
    pub seed_cv: Option<u64>,
    pub alpha: Option<f64>,
    pub out: Option<PathBuf>,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    /// Reads `path` and rebases its relative paths onto the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in [&mut cfg.paths.data, &mut cfg.paths.schema, &mut cfg.paths.flags]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
        resolve(base, &mut cfg.paths.out);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed_split {
            self.seeds.split = s;
        }
        if let Some(s) = o.seed_mcmc {
            self.seeds.mcmc = s;
        }
        if let Some(s) = o.seed_cv {
            self.seeds.cv = s;
        }
        if let Some(a) = o.alpha {
            self.flag.alpha = a;
        }
        if let Some(out) = &o.out {
            self.paths.out = out.clone();
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let a = self.flag.alpha;
        if !(a > 0.0 && a < 1.0) {
            return Err(CliError::Config(format!("alpha {a} not in (0, 1)")));
        }
        let f = self.design.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(CliError::Config(format!("train_fraction {f} not in (0, 1)")));
        }
        if self.design.risk_bins == 0 {
            return Err(CliError::Config("risk_bins must be positive".into()));
        }
        let (g0, g1) = (self.design.geweke_first, self.design.geweke_last);
        if !(g0 > 0.0 && g1 > 0.0 && g0 + g1 <= 1.0) {
            return Err(CliError::Config("geweke fractions must be positive and sum to at most 1".into()));
        }
        self.stage1.validate().map_err(|e| CliError::Config(format!("[stage1] {e}")))?;
        self.stage2.validate().map_err(|e| CliError::Config(format!("[stage2] {e}")))?;
        Ok(())
    }

    /// Validates and checks that the data and schema files exist.
    pub fn require_inputs(&self) -> CliResult<(&Path, &Path)> {
        self.validate()?;
        let data = self
            .paths
            .data
            .as_deref()
            .ok_or_else(|| CliError::Config("[paths] data is not set".into()))?;
        let schema = self
            .paths
            .schema
            .as_deref()
            .ok_or_else(|| CliError::Config("[paths] schema is not set".into()))?;
        for (what, p) in [("data", data), ("schema", schema)] {
            if !p.is_file() {
                return Err(CliError::Config(format!("{what} file {} does not exist", p.display())));
            }
        }
        Ok((data, schema))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
