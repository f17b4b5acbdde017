use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use flowvae::detect::{PdfFamily, DEFAULT_BINS};
use flowvae::eval::ScenarioSplit;
use flowvae::features::{FeatureSchema, WindowConfig};
use flowvae::ingest::{CsvSchema, DEFAULT_INDICATORS};
use flowvae::rvae::{MlpVaeConfig, ModelSpec, RvaeConfig, TrainConfig};
use serde::{Deserialize, Serialize};

/// Everything one pipeline run needs. Relative paths resolve against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    /// Threads for scoring shards and per-family fits.
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub captures: Vec<Capture>,
    #[serde(default)]
    pub split: ScenarioSplit,
    #[serde(default)]
    pub labels: LabelSection,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default)]
    pub features: FeatureSchema,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub detect: DetectSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<TransferSection>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_workers() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    #[default]
    Zeek,
    Csv,
}

/// One capture: a connection log plus the source of its host labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Capture {
    pub scenario: u32,
    pub conn_log: PathBuf,
    #[serde(default)]
    pub format: InputFormat,
    /// Preset name for CSV input; defaults to the Zeek-style column names.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv_schema: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weird_log: Option<PathBuf>,
    /// Tab-separated `ip<TAB>label` file, used instead of a weird log.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub host_labels: Option<PathBuf>,
}

impl Capture {
    pub fn csv_schema(&self) -> Result<CsvSchema> {
        match &self.csv_schema {
            None => Ok(CsvSchema::default()),
            Some(name) => CsvSchema::preset(name)
                .with_context(|| format!("unknown CSV schema preset {name:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSection {
    pub indicators: BTreeSet<String>,
}

impl Default for LabelSection {
    fn default() -> Self {
        Self {
            indicators: DEFAULT_INDICATORS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Rvae,
    MlpVae,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    /// GRU width for the recurrent model.
    pub hidden: usize,
    /// Layer widths for the feed-forward model.
    pub hidden_layers: Vec<usize>,
    pub latent: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: ModelKind::Rvae,
            hidden: 512,
            hidden_layers: vec![512, 512, 1024],
            latent: 100,
        }
    }
}

impl ModelSection {
    pub fn spec(&self, features: usize) -> ModelSpec {
        match self.kind {
            ModelKind::Rvae => ModelSpec::Rvae(RvaeConfig::new(features, self.hidden, self.latent)),
            ModelKind::MlpVae => ModelSpec::MlpVae(MlpVaeConfig {
                features,
                hidden: self.hidden_layers.clone(),
                latent: self.latent,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectSection {
    pub families: Vec<PdfFamily>,
    pub bins: usize,
    /// Sequences per scoring batch.
    pub batch_size: usize,
}

impl Default for DetectSection {
    fn default() -> Self {
        Self {
            families: PdfFamily::ALL.to_vec(),
            bins: DEFAULT_BINS,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMode {
    WithLabel,
    WithoutLabel,
}

/// Source captures are the training split; the target is listed here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferSection {
    pub mode: TransferMode,
    pub target: BTreeSet<u32>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg =
            Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Replaces the run seed; training always uses the run seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.captures.is_empty() {
            bail!("config lists no captures");
        }
        let mut seen = BTreeSet::new();
        for c in &self.captures {
            if !seen.insert(c.scenario) {
                bail!("scenario {} is listed twice", c.scenario);
            }
            if c.weird_log.is_some() && c.host_labels.is_some() {
                bail!(
                    "scenario {}: give weird_log or host_labels, not both",
                    c.scenario
                );
            }
            if c.format == InputFormat::Csv {
                c.csv_schema()?;
            }
        }
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        if self.detect.batch_size == 0 {
            bail!("detect.batch_size must be at least 1");
        }
        self.split.validate()?;
        self.window.validate()?;
        self.features.validate()?;
        self.train.validate()?;
        if let Some(t) = &self.transfer {
            if t.target.is_empty() {
                bail!("transfer.target lists no scenarios");
            }
            if let Some(s) = t.target.iter().find(|s| !seen.contains(s)) {
                bail!("transfer target scenario {s} has no capture");
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn capture(&self, scenario: u32) -> Option<&Capture> {
        self.captures.iter().find(|c| c.scenario == scenario)
    }

    /// Scenarios of the training split that have captures, ascending.
    pub fn train_scenarios(&self) -> Vec<u32> {
        self.scenarios_in(&self.split.train)
    }

    pub fn test_scenarios(&self) -> Vec<u32> {
        self.scenarios_in(&self.split.test)
    }

    fn scenarios_in(&self, set: &BTreeSet<u32>) -> Vec<u32> {
        let mut v: Vec<u32> = self
            .captures
            .iter()
            .map(|c| c.scenario)
            .filter(|s| set.contains(s))
            .collect();
        v.sort_unstable();
        v
    }

    /// Fails on captures outside both sides of a strict split.
    pub fn check_split(&self) -> Result<()> {
        if !self.split.strict {
            return Ok(());
        }
        let ids: Vec<u32> = self.captures.iter().map(|c| c.scenario).collect();
        self.split.split(ids, |s| Some(*s))?;
        Ok(())
    }
}
