use std::collections::BTreeSet;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Result;
use flowvae::eval::ScenarioSplit;
use flowvae::features::{FeatureSchema, WindowConfig};
use flowvae::ingest::{write_conn_log, write_weird_log};
use flowvae::rvae::TrainConfig;
use flowvae::synth::{generate_traffic, TrafficConfig};

use crate::artifacts::create;
use crate::config::{
    Capture, DetectSection, InputFormat, LabelSection, ModelKind, ModelSection, PipelineConfig,
};

/// Shape of a synthetic fixture: one training and one test capture.
#[derive(Debug, Clone)]
pub struct FixtureSpec {
    pub seed: u64,
    pub train_hours: f64,
    pub test_hours: f64,
    pub window_s: f64,
    pub epochs: usize,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            train_hours: 2.0,
            test_hours: 1.0,
            window_s: 60.0,
            epochs: 20,
        }
    }
}

pub const TRAIN_SCENARIO: u32 = 3;
pub const TEST_SCENARIO: u32 = 1;

fn write_capture(dir: &Path, name: &str, traffic: &TrafficConfig) -> Result<(PathBuf, PathBuf)> {
    let t = generate_traffic(traffic);
    let conn = PathBuf::from(name).join("conn.log");
    let weird = PathBuf::from(name).join("weird.log");
    let mut w = BufWriter::new(create(&dir.join(&conn))?);
    write_conn_log(&mut w, &t.flows)?;
    w.flush()?;
    let mut w = BufWriter::new(create(&dir.join(&weird))?);
    write_weird_log(&mut w, &t.weird)?;
    w.flush()?;
    Ok((conn, weird))
}

/// Writes Zeek logs for both captures plus a `config.toml` that runs the
/// pipeline on them with a small model. Returns the config path.
pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> Result<PathBuf> {
    let mut captures = Vec::new();
    for (scenario, hours, subnet, seed) in [
        (TRAIN_SCENARIO, spec.train_hours, 0, spec.seed),
        (TEST_SCENARIO, spec.test_hours, 1, spec.seed + 1),
    ] {
        let traffic = TrafficConfig {
            seed,
            duration_s: hours * 3600.0,
            subnet,
            ..TrafficConfig::default()
        };
        let (conn, weird) = write_capture(dir, &format!("s{scenario}"), &traffic)?;
        captures.push(Capture {
            scenario,
            conn_log: conn,
            format: InputFormat::Zeek,
            csv_schema: None,
            weird_log: Some(weird),
            host_labels: None,
        });
    }
    let cfg = PipelineConfig {
        seed: spec.seed,
        workers: 4,
        captures,
        split: ScenarioSplit {
            train: BTreeSet::from([TRAIN_SCENARIO]),
            test: BTreeSet::from([TEST_SCENARIO]),
            strict: true,
        },
        labels: LabelSection::default(),
        window: WindowConfig {
            duration_s: spec.window_s,
            ..WindowConfig::default()
        },
        features: FeatureSchema::default(),
        model: ModelSection {
            kind: ModelKind::Rvae,
            hidden: 32,
            hidden_layers: vec![64, 64],
            latent: 8,
        },
        train: TrainConfig {
            epochs: spec.epochs,
            batch_size: 8,
            beta_anneal_steps: 100,
            ..TrainConfig::default()
        },
        detect: DetectSection::default(),
        transfer: None,
        base_dir: PathBuf::new(),
    };
    cfg.validate()?;
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml()?)?;
    Ok(path)
}
