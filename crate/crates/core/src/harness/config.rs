use crate::datagen::ToyProcess;
use crate::error::{Error, Result};
use crate::metrics::{CecConfig, WscConfig};
use crate::models::{Capabilities, DEFAULT_NEIGHBORS};
use crate::scores::{CopulaConfig, MethodId, MonteCarloParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// A toy process, generated per seed in standardized coordinates.
    Toy { process: ToyProcess, n: usize },
    /// A CSV file with `x*` and `y*` columns, standardized on the train split.
    Csv { path: PathBuf },
}

impl DatasetSource {
    pub fn name(&self) -> String {
        match self {
            DatasetSource::Toy { process, .. } => format!("toy_{}", process.name()),
            DatasetSource::Csv { path } => {
                path.file_stem().map_or_else(|| "csv".to_string(), |s| s.to_string_lossy().into_owned())
            }
        }
    }
}

pub fn default_sigma_grid() -> Vec<f64> {
    vec![0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 0.75, 1.0]
}

fn default_neighbors() -> usize {
    DEFAULT_NEIGHBORS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    ConditionalGaussian,
    KnnKde {
        #[serde(default = "default_neighbors")]
        k: usize,
        #[serde(default = "default_sigma_grid")]
        sigma_grid: Vec<f64>,
    },
    /// The true conditional law; toy datasets only.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(flatten)]
    pub spec: ModelSpec,
    /// Restricts the fitted model to these capabilities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capabilities: Option<Capabilities>,
}

impl ModelConfig {
    pub fn name(&self) -> &'static str {
        match self.spec {
            ModelSpec::ConditionalGaussian => "conditional_gaussian",
            ModelSpec::KnnKde { .. } => "knn_kde",
            ModelSpec::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub cal_size: usize,
    pub train_frac: f64,
    pub val_frac: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { cal_size: 2048, train_frac: 0.55, val_frac: 0.15 }
    }
}

/// One experiment: a dataset, a base model, a list of methods and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub model: ModelConfig,
    pub methods: Vec<MethodId>,
    pub alpha: f64,
    pub monte_carlo: MonteCarloParams,
    pub volume_samples: usize,
    pub seeds: Vec<u64>,
    pub split: SplitConfig,
    pub wsc: WscConfig,
    pub cec: CecConfig,
    pub copula: CopulaConfig,
    /// Not part of the configuration hash.
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::Toy { process: ToyProcess::Unimodal, n: 10_000 },
            model: ModelConfig { spec: ModelSpec::ConditionalGaussian, capabilities: None },
            methods: MethodId::ALL.to_vec(),
            alpha: 0.2,
            monte_carlo: MonteCarloParams::default(),
            volume_samples: 100,
            seeds: vec![0],
            split: SplitConfig::default(),
            wsc: WscConfig::default(),
            cec: CecConfig::default(),
            copula: CopulaConfig::default(),
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("invalid run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            Error::InvalidConfig(format!("cannot read config {}: {e}", path.as_ref().display()))
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        if self.seeds.is_empty() {
            return bad("no seeds given".into());
        }
        self.monte_carlo.validate()?;
        if self.volume_samples == 0 {
            return bad("volume_samples must be at least 1".into());
        }
        let s = self.split;
        if s.cal_size == 0 || !(s.train_frac > 0.0 && s.val_frac >= 0.0 && s.train_frac + s.val_frac < 1.0) {
            return bad("split needs cal_size ≥ 1, train_frac > 0 and train_frac + val_frac < 1".into());
        }
        if let DatasetSource::Toy { n, .. } = self.dataset {
            if n <= s.cal_size {
                return bad(format!("toy dataset of {n} points cannot hold {} calibration points", s.cal_size));
            }
        }
        if matches!(self.model.spec, ModelSpec::Oracle) && !matches!(self.dataset, DatasetSource::Toy { .. }) {
            return bad("the oracle model is only available for toy datasets".into());
        }
        if let ModelSpec::KnnKde { k, sigma_grid } = &self.model.spec {
            if *k == 0 || sigma_grid.is_empty() || sigma_grid.iter().any(|s| !(*s > 0.0)) {
                return bad("knn_kde needs k ≥ 1 and a nonempty positive sigma grid".into());
            }
        }
        if self.cec.clusters == 0 || self.cec.density_samples == 0 {
            return bad("CEC needs at least one cluster and one density sample".into());
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON, without
    /// the output directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
