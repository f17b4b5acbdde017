use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use flowvae::codec::ConfigHash;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;

/// Pipeline stages in run order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Label,
    Featurize,
    Train,
    TransferTrain,
    Score,
    FitPdf,
    Detect,
    Evaluate,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Label => "label",
            Stage::Featurize => "featurize",
            Stage::Train => "train",
            Stage::TransferTrain => "transfer-train",
            Stage::Score => "score",
            Stage::FitPdf => "fit-pdf",
            Stage::Detect => "detect",
            Stage::Evaluate => "evaluate",
        }
    }
}

/// Which trained model the scoring stages use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Semi,
    Transfer,
}

impl Variant {
    /// Prefix of every artifact produced from this variant's model.
    pub fn prefix(self) -> &'static str {
        match self {
            Variant::Semi => "",
            Variant::Transfer => "transfer-",
        }
    }

    pub fn model_stage(self) -> Stage {
        match self {
            Variant::Semi => Stage::Train,
            Variant::Transfer => Stage::TransferTrain,
        }
    }
}

fn digest(parts: serde_json::Value) -> ConfigHash {
    Sha256::digest(serde_json::to_vec(&parts).expect("config sections serialize")).into()
}

/// Hash of the config sections each stage depends on, chained through
/// the stages it reads from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageHashes {
    pub ingest: ConfigHash,
    pub label: ConfigHash,
    pub featurize: ConfigHash,
    pub train: ConfigHash,
    pub transfer_train: ConfigHash,
}

impl StageHashes {
    pub fn new(cfg: &PipelineConfig) -> Self {
        let inputs: Vec<_> = cfg
            .captures
            .iter()
            .map(|c| (c.scenario, &c.conn_log, c.format, &c.csv_schema))
            .collect();
        let ingest = digest(json!(["ingest", inputs]));
        let sources: Vec<_> = cfg
            .captures
            .iter()
            .map(|c| (c.scenario, &c.weird_log, &c.host_labels))
            .collect();
        let label = digest(json!(["label", sources, cfg.labels]));
        let featurize = digest(json!([
            "featurize",
            ingest,
            label,
            cfg.window,
            cfg.features,
            cfg.split
        ]));
        let train = digest(json!(["train", featurize, cfg.model, cfg.train_config()]));
        let transfer_train = digest(json!([
            "transfer-train",
            featurize,
            cfg.model,
            cfg.train_config(),
            cfg.transfer
        ]));
        Self {
            ingest,
            label,
            featurize,
            train,
            transfer_train,
        }
    }

    pub fn model(&self, v: Variant) -> ConfigHash {
        match v {
            Variant::Semi => self.train,
            Variant::Transfer => self.transfer_train,
        }
    }

    pub fn score(&self, cfg: &PipelineConfig, v: Variant) -> ConfigHash {
        digest(json!(["score", self.model(v), cfg.detect.batch_size]))
    }

    pub fn fit_pdf(&self, cfg: &PipelineConfig, v: Variant) -> ConfigHash {
        digest(json!([
            "fit-pdf",
            self.score(cfg, v),
            cfg.detect.families,
            cfg.detect.bins
        ]))
    }

    pub fn detect(&self, cfg: &PipelineConfig, v: Variant) -> ConfigHash {
        digest(json!(["detect", self.fit_pdf(cfg, v)]))
    }

    pub fn evaluate(&self, cfg: &PipelineConfig, v: Variant) -> ConfigHash {
        digest(json!(["evaluate", self.detect(cfg, v)]))
    }

    pub fn of(&self, cfg: &PipelineConfig, stage: Stage, v: Variant) -> ConfigHash {
        match stage {
            Stage::Ingest => self.ingest,
            Stage::Label => self.label,
            Stage::Featurize => self.featurize,
            Stage::Train => self.train,
            Stage::TransferTrain => self.transfer_train,
            Stage::Score => self.score(cfg, v),
            Stage::FitPdf => self.fit_pdf(cfg, v),
            Stage::Detect => self.detect(cfg, v),
            Stage::Evaluate => self.evaluate(cfg, v),
        }
    }
}

pub fn hex_hash(h: &ConfigHash) -> String {
    hex::encode(h)
}

/// Refuses artifacts produced under a different config.
pub fn check_hash(
    path: &Path,
    found: &ConfigHash,
    expected: &ConfigHash,
    producer: Stage,
) -> Result<()> {
    if found != expected {
        bail!(
            "stage-version mismatch: {} was produced by config {}, the current config expects {}; rerun `flowvae {}`",
            path.display(),
            &hex_hash(found)[..12],
            &hex_hash(expected)[..12],
            producer.name()
        );
    }
    Ok(())
}

/// File names inside the output directory.
pub struct Layout {
    pub dir: PathBuf,
}

impl Layout {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn file(&self, name: String) -> PathBuf {
        self.dir.join(name)
    }

    pub fn flows(&self, scenario: u32) -> PathBuf {
        self.file(format!("flows-s{scenario}.bin"))
    }

    pub fn labels(&self, scenario: u32) -> PathBuf {
        self.file(format!("labels-s{scenario}.tsv"))
    }

    pub fn agg(&self, scenario: u32) -> PathBuf {
        self.file(format!("agg-s{scenario}.bin"))
    }

    pub fn normalizer(&self) -> PathBuf {
        self.file("normalizer.json".into())
    }

    pub fn model(&self, v: Variant) -> PathBuf {
        self.file(format!("{}model.ckpt", v.prefix()))
    }

    pub fn train_log(&self, v: Variant) -> PathBuf {
        self.file(format!("{}train_log.jsonl", v.prefix()))
    }

    pub fn scores(&self, v: Variant, scenario: u32) -> PathBuf {
        self.file(format!("{}scores-s{scenario}.json", v.prefix()))
    }

    pub fn profile(&self, v: Variant) -> PathBuf {
        self.file(format!("{}profile.json", v.prefix()))
    }

    pub fn verdicts(&self, v: Variant, scenario: u32) -> PathBuf {
        self.file(format!("{}verdicts-s{scenario}.json", v.prefix()))
    }

    pub fn report_table(&self, v: Variant) -> PathBuf {
        self.file(format!("{}report.txt", v.prefix()))
    }

    pub fn report_jsonl(&self, v: Variant) -> PathBuf {
        self.file(format!("{}report.jsonl", v.prefix()))
    }

    pub fn roc(&self, v: Variant) -> PathBuf {
        self.file(format!("{}roc.csv", v.prefix()))
    }

    pub fn pr(&self, v: Variant) -> PathBuf {
        self.file(format!("{}pr.csv", v.prefix()))
    }

    pub fn manifest(&self) -> PathBuf {
        self.file("manifest.json".into())
    }

    /// Name relative to the output directory, for the manifest.
    pub fn rel(&self, p: &Path) -> String {
        p.strip_prefix(&self.dir).unwrap_or(p).display().to_string()
    }
}

/// A JSON artifact tagged with the config hash that produced it.
#[derive(Debug, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub config_hash: String,
    pub data: T,
}

pub fn write_stamped<T: Serialize>(path: &Path, hash: &ConfigHash, data: &T) -> Result<()> {
    let doc = Stamped {
        config_hash: hex_hash(hash),
        data,
    };
    let mut w = BufWriter::new(create(path)?);
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_stamped<T: DeserializeOwned>(
    path: &Path,
    expected: &ConfigHash,
    producer: Stage,
) -> Result<T> {
    let doc: Stamped<T> = serde_json::from_reader(BufReader::new(open(path, producer)?))
        .with_context(|| format!("parsing {}", path.display()))?;
    let found = parse_hash(&doc.config_hash)
        .with_context(|| format!("config hash in {}", path.display()))?;
    check_hash(path, &found, expected, producer)?;
    Ok(doc.data)
}

pub fn parse_hash(s: &str) -> Result<ConfigHash> {
    let bytes = hex::decode(s)?;
    bytes
        .try_into()
        .map_err(|_| anyhow::anyhow!("config hash must be 32 bytes"))
}

pub fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

/// Opens a stage input, pointing at the stage that writes it when missing.
pub fn open(path: &Path, producer: Stage) -> Result<File> {
    if !path.exists() {
        bail!(
            "missing input {}; run `flowvae {}` first",
            path.display(),
            producer.name()
        );
    }
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

/// What one stage run read, wrote and noticed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub counts: BTreeMap<String, u64>,
    pub warnings: Vec<String>,
}

/// Per-stage records of the latest run, keyed by stage and variant.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Replaces the entry for `key` and rewrites the file.
    pub fn record(path: &Path, key: &str, rec: StageRecord) -> Result<()> {
        let mut m = Self::load(path)?;
        m.tool_version = env!("CARGO_PKG_VERSION").to_string();
        m.stages.insert(key.to_string(), rec);
        let mut w = BufWriter::new(create(path)?);
        serde_json::to_writer_pretty(&mut w, &m)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}
