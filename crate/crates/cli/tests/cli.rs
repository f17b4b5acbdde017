use std::path::{Path, PathBuf};
use std::process::Command;

use flowvae::eval::Report;
use flowvae::ingest::write_conn_log;
use flowvae_cli::artifacts::{Manifest, StageHashes, Variant};
use flowvae_cli::config::{Capture, InputFormat, PipelineConfig, TransferMode, TransferSection};
use flowvae_cli::stages::{self, Ctx};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic")
}

fn fixture_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::load(&fixture_dir().join("config.toml")).unwrap();
    cfg.train.epochs = 3;
    cfg
}

fn err_text(r: anyhow::Result<impl std::fmt::Debug>) -> String {
    format!("{:#}", r.unwrap_err())
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = PipelineConfig::load(&fixture_dir().join("config.toml")).unwrap();
    let back = PipelineConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(back.to_toml().unwrap(), cfg.to_toml().unwrap());
    assert_eq!(back.captures, cfg.captures);
}

#[test]
fn config_rejects_bad_input() {
    let base = fixture_config().to_toml().unwrap();
    assert!(PipelineConfig::from_toml(&format!("bogus = 1\n{base}")).is_err());
    let dup = base.replacen("scenario = 1", "scenario = 3", 1);
    assert!(err_text(PipelineConfig::from_toml(&dup)).contains("twice"));
    let transfer = format!("{base}\n[transfer]\nmode = \"with_label\"\ntarget = [9]\n");
    assert!(err_text(PipelineConfig::from_toml(&transfer)).contains("no capture"));
    let zero = base.replace("epochs = 3", "epochs = 0");
    assert!(PipelineConfig::from_toml(&zero).is_err());
}

#[test]
fn seed_override_changes_only_training_hashes() {
    let cfg = fixture_config();
    let a = StageHashes::new(&cfg);
    let b = StageHashes::new(&cfg.clone().with_seed(99));
    assert_eq!(a.featurize, b.featurize);
    assert_ne!(a.train, b.train);
}

#[test]
fn staged_run_matches_pipeline_and_refuses_stale_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let ctx = Ctx::new(fixture_config(), &tmp.path().join("staged"));

    let missing = err_text(stages::cmd_train(&ctx));
    assert!(
        missing.contains("missing input") && missing.contains("flowvae featurize"),
        "{missing}"
    );

    stages::cmd_ingest(&ctx).unwrap();
    stages::cmd_label(&ctx).unwrap();
    stages::cmd_featurize(&ctx).unwrap();
    stages::cmd_train(&ctx).unwrap();
    stages::cmd_score(&ctx, Variant::Semi).unwrap();
    stages::cmd_fit_pdf(&ctx, Variant::Semi).unwrap();
    stages::cmd_detect(&ctx, Variant::Semi).unwrap();
    stages::cmd_evaluate(&ctx, Variant::Semi).unwrap();
    let staged = std::fs::read_to_string(ctx.layout.report_table(Variant::Semi)).unwrap();

    let whole = Ctx::new(fixture_config(), &tmp.path().join("whole"));
    stages::run_pipeline(&whole).unwrap();
    let piped = std::fs::read_to_string(whole.layout.report_table(Variant::Semi)).unwrap();
    assert_eq!(staged, piped);

    let m = Manifest::load(&ctx.layout.manifest()).unwrap();
    for key in [
        "ingest",
        "label",
        "featurize",
        "train",
        "score",
        "fit-pdf",
        "detect",
        "evaluate",
    ] {
        assert!(m.stages.contains_key(key), "{key}");
    }
    assert_eq!(m.stages["train"].seed, 7);

    // A different window changes the featurize hash, so training refuses the old caches.
    let mut changed = fixture_config();
    changed.window.duration_s = 30.0;
    let stale = Ctx::new(changed, &tmp.path().join("staged"));
    let msg = err_text(stages::cmd_train(&stale));
    assert!(
        msg.contains("stage-version mismatch") && msg.contains("flowvae featurize"),
        "{msg}"
    );

    // A different seed invalidates the model for scoring.
    let reseeded = Ctx::new(fixture_config().with_seed(8), &tmp.path().join("staged"));
    let msg = err_text(stages::cmd_score(&reseeded, Variant::Semi));
    assert!(
        msg.contains("stage-version mismatch") && msg.contains("flowvae train"),
        "{msg}"
    );
}

fn with_capture(
    cfg: &mut PipelineConfig,
    dir: &Path,
    scenario: u32,
    flows: &[flowvae::ingest::FlowRecord],
) {
    let path = dir.join(format!("s{scenario}.log"));
    let mut f = std::fs::File::create(&path).unwrap();
    write_conn_log(&mut f, flows).unwrap();
    cfg.captures.retain(|c| c.scenario != scenario);
    cfg.captures.push(Capture {
        scenario,
        conn_log: path,
        format: InputFormat::Zeek,
        csv_schema: None,
        weird_log: None,
        host_labels: None,
    });
}

#[test]
fn empty_capture_warns_and_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = fixture_config();
    cfg.base_dir = fixture_dir();
    cfg.split.train.insert(4);
    with_capture(&mut cfg, tmp.path(), 4, &[]);
    let ctx = Ctx::new(cfg, &tmp.path().join("out"));
    let ingest = stages::cmd_ingest(&ctx).unwrap();
    assert!(ingest
        .warnings
        .iter()
        .any(|w| w.contains("scenario 4: no flows")));
    stages::cmd_label(&ctx).unwrap();
    let rec = stages::cmd_featurize(&ctx).unwrap();
    assert_eq!(rec.counts["agg_flows_s4"], 0);
    assert!(rec.warnings.iter().any(|w| w.contains("scenario 4")));
    let m = Manifest::load(&ctx.layout.manifest()).unwrap();
    assert!(!m.stages["featurize"].warnings.is_empty());
}

#[test]
fn test_split_without_positives_reports_undefined() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = fixture_config();
    // Scenario 1 keeps its flows but loses its weird log, so every host is normal.
    for c in &mut cfg.captures {
        if c.scenario == 1 {
            c.weird_log = None;
        }
    }
    let ctx = Ctx::new(cfg, &tmp.path().join("out"));
    let recs = stages::run_pipeline(&ctx).unwrap();
    let eval = &recs.iter().find(|(n, _)| n == "evaluate").unwrap().1;
    assert!(eval.warnings.iter().any(|w| w.contains("undefined")));
    let table = std::fs::read_to_string(ctx.layout.report_table(Variant::Semi)).unwrap();
    assert!(table.contains("undefined"), "{table}");
    let rows = Report::read_jsonl(std::io::BufReader::new(
        std::fs::File::open(ctx.layout.report_jsonl(Variant::Semi)).unwrap(),
    ))
    .unwrap();
    let all = rows.rows.iter().find(|r| r.name == "all").unwrap();
    assert_eq!(all.positives, 0);
    assert!(all.metrics.auroc.is_none() && all.metrics.recall.is_none());
    assert!(!ctx.layout.roc(Variant::Semi).exists());
}

#[test]
fn transfer_variant_writes_prefixed_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    for mode in [TransferMode::WithLabel, TransferMode::WithoutLabel] {
        let mut cfg = fixture_config();
        cfg.transfer = Some(TransferSection {
            mode,
            target: [1].into(),
        });
        cfg.train.warmup_epochs = 1;
        let out = tmp.path().join(format!("{mode:?}"));
        let ctx = Ctx::new(cfg, &out);
        let recs = stages::run_pipeline(&ctx).unwrap();
        assert!(recs.iter().any(|(n, _)| n == "transfer-evaluate"));
        assert!(ctx.layout.model(Variant::Transfer).exists());
        assert!(ctx.layout.report_table(Variant::Transfer).exists());
        let m = Manifest::load(&ctx.layout.manifest()).unwrap();
        assert!(m.stages["transfer-train"].counts["target_sequences"] > 0);
    }
}

#[test]
fn binary_reports_errors_and_runs_synth() {
    let exe = env!("CARGO_BIN_EXE_flowvae");
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(exe)
        .args(["train", "--config"])
        .arg(tmp.path().join("absent.toml"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("reading config"));

    let dir = tmp.path().join("fx");
    let out = Command::new(exe)
        .args([
            "synth",
            "--train-hours",
            "0.5",
            "--test-hours",
            "0.25",
            "--epochs",
            "2",
            "--out",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = Command::new(exe)
        .args(["pipeline", "--seed", "3", "--config"])
        .arg(dir.join("config.toml"))
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("name"));
    let m = Manifest::load(&dir.join("out/manifest.json")).unwrap();
    assert_eq!(m.stages["train"].seed, 3);
}
