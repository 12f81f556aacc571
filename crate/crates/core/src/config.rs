//! Run configuration: a sectioned TOML file, flag overrides, and the resolved
//! manifest written next to every run's outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{ColumnSchema, ScalerMethod, DEFAULT_SCALER_FLOOR};
use crate::error::{Error, Result};
use crate::theory::LogVariant;
use crate::trainer::TrainConfig;

/// `seed = 7` or `seed = "random"`; the latter is resolved once and recorded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSetting {
    Fixed(u64),
    Named(String),
}

impl Default for SeedSetting {
    fn default() -> Self {
        SeedSetting::Fixed(0)
    }
}

impl SeedSetting {
    pub fn resolve(&self) -> Result<u64> {
        match self {
            SeedSetting::Fixed(v) => Ok(*v),
            SeedSetting::Named(s) if s == "random" => {
                let nanos = std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_nanos())
                    .unwrap_or_default();
                // toml integers are signed
                let seed = (nanos as u64) & (i64::MAX as u64);
                log::info!("random seed resolved to {seed}");
                Ok(seed)
            }
            SeedSetting::Named(other) => Err(Error::Config(format!("seed must be an integer or \"random\", got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub columns: ColumnSchema,
    pub scaler: ScalerMethod,
    pub scaler_floor: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            path: None,
            columns: ColumnSchema::default(),
            scaler: ScalerMethod::default(),
            scaler_floor: DEFAULT_SCALER_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSection {
    pub valid_weeks: usize,
    pub test_weeks: usize,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            valid_weeks: 26,
            test_weeks: 52,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub lag_count: usize,
    /// Hidden widths per candidate; empty means the default ten-architecture grid.
    pub grid: Vec<Vec<usize>>,
    pub train: TrainConfig,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            lag_count: 1,
            grid: Vec::new(),
            train: TrainConfig::default(),
        }
    }
}

/// Generative model for `simulate`: `φ(x, θ) = softplus(coeffs·[x, θ] + bias)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateSection {
    pub d: usize,
    pub n: usize,
    pub scale: f64,
    pub covariates: usize,
    pub coeffs: Vec<f64>,
    pub bias: f64,
    /// Poisson rate of the first week; 0 starts from zeros.
    pub init_rate: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            d: 20,
            n: 260,
            scale: 1000.0,
            covariates: 1,
            coeffs: vec![2.0, 1.0],
            bias: -0.5,
            init_rate: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TheorySection {
    pub delta: f64,
    pub log_variant: LogVariant,
    pub lipschitz_grid: usize,
    pub theta_samples: usize,
    pub state_pairs: usize,
    pub replicas: usize,
    pub moment_lambdas: Vec<f64>,
    pub moment_k_max: usize,
    pub moment_samples: usize,
    pub dispersion_outer: usize,
    pub dispersion_inner: usize,
    pub decay: bool,
    pub decay_n_grid: Vec<usize>,
    pub decay_replicas: usize,
    pub decay_test_len: usize,
    pub decay_epochs: usize,
}

impl Default for TheorySection {
    fn default() -> Self {
        Self {
            delta: 0.05,
            log_variant: LogVariant::default(),
            lipschitz_grid: 101,
            theta_samples: 50,
            state_pairs: 8,
            replicas: 10_000,
            moment_lambdas: vec![0.5, 1.0, 5.0],
            moment_k_max: 6,
            moment_samples: 200_000,
            dispersion_outer: 2000,
            dispersion_inner: 200,
            decay: false,
            decay_n_grid: vec![100, 400, 1600],
            decay_replicas: 20,
            decay_test_len: 4000,
            decay_epochs: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: SeedSetting,
    pub horizon: usize,
    pub out: PathBuf,
    pub data: DataSection,
    pub split: SplitSection,
    pub model: ModelSection,
    pub simulate: SimulateSection,
    pub theory: TheorySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: SeedSetting::default(),
            horizon: 4,
            out: PathBuf::from("out"),
            data: DataSection::default(),
            split: SplitSection::default(),
            model: ModelSection::default(),
            simulate: SimulateSection::default(),
            theory: TheorySection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().replace('\n', " ")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Fixes the seed and copies shared settings into the sections that use them.
    pub fn resolve(mut self) -> Result<Self> {
        let seed = self.seed.resolve()?;
        self.seed = SeedSetting::Fixed(seed);
        self.model.train.seed = seed;
        self.validate()?;
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        match self.seed {
            SeedSetting::Fixed(v) => v,
            SeedSetting::Named(_) => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be a positive integer".into()));
        }
        if self.model.lag_count == 0 {
            return Err(Error::Config("lag_count must be at least 1".into()));
        }
        if self.simulate.coeffs.len() != self.simulate.covariates + 1 {
            return Err(Error::Config(format!(
                "simulate.coeffs needs {} entries (x then each covariate), got {}",
                self.simulate.covariates + 1,
                self.simulate.coeffs.len()
            )));
        }
        self.model.train.validate()
    }

    /// The panel path, which must name an existing file.
    pub fn data_path(&self) -> Result<&Path> {
        let path = self
            .data
            .path
            .as_deref()
            .ok_or_else(|| Error::Config("no panel given (set data.path or pass --data)".into()))?;
        if !path.exists() {
            return Err(Error::Config(format!("data file {} does not exist", path.display())));
        }
        Ok(path)
    }

    /// Manifest text: a comment naming the command, then the resolved config.
    pub fn manifest(&self, command: &str) -> Result<String> {
        let body = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        Ok(format!("# concnet {command}\n{body}"))
    }

    pub fn write_manifest(&self, command: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out)?;
        let path = self.out.join("manifest.toml");
        std::fs::write(&path, self.manifest(command)?)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concurrent::LossKind;

    #[test]
    fn defaults_fill_missing_sections() {
        let cfg = RunConfig::from_toml("horizon = 8\n[model.train]\nloss = \"l1\"\n").unwrap();
        assert_eq!(cfg.horizon, 8);
        assert_eq!(cfg.model.train.loss, LossKind::L1);
        assert_eq!(cfg.split, SplitSection::default());
        assert_eq!(cfg.data.scaler, ScalerMethod::TrailingMovingAverage { window: 8 });
    }

    #[test]
    fn manifest_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.seed = SeedSetting::Fixed(99);
        cfg.model.grid = vec![vec![], vec![8, 8]];
        cfg.data.scaler = ScalerMethod::Oracle;
        let cfg = cfg.resolve().unwrap();
        let text = cfg.manifest("train").unwrap();
        assert!(text.starts_with("# concnet train\n"));
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.model.train.seed, 99);
    }

    #[test]
    fn random_seed_is_resolved_and_bad_seed_rejected() {
        let cfg = RunConfig::from_toml("seed = \"random\"").unwrap().resolve().unwrap();
        assert!(matches!(cfg.seed, SeedSetting::Fixed(_)));
        assert!(RunConfig::from_toml("seed = \"lucky\"").unwrap().resolve().is_err());
    }

    #[test]
    fn validation_errors() {
        assert!(RunConfig::from_toml("horizon = 0").unwrap().resolve().is_err());
        let missing = RunConfig::from_toml("[data]\npath = \"/no/such/file.csv\"").unwrap().resolve().unwrap();
        assert!(matches!(missing.data_path(), Err(Error::Config(_))));
        assert!(RunConfig::default().data_path().is_err());
        assert!(RunConfig::from_toml("horizon = ").is_err());
    }
}
