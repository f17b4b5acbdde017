use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use flowvae::codec::ConfigHash;
use flowvae::detect::{detect_stream, Detector, DetectorProfile, Verdict};
use flowvae::eval::{evaluate, pr_curve, roc_curve, write_curve_csv, LabeledScores, Report};
use flowvae::features::{
    aggregate_flows, apply_normalizer, build_sequences, fit_normalizer, read_agg_cache,
    write_agg_cache, AggFlow, NormalizerState,
};
use flowvae::ingest::{
    derive_labels, parse_conn_log, parse_flow_csv, parse_weird_log, read_flow_cache,
    write_flow_cache, FlowRecord, HostLabelSet, Label,
};
use flowvae::rvae::{
    anomaly_scores, instance_of, load_checkpoint, save_checkpoint, train_semisupervised,
    train_transfer_with_label, train_transfer_without_label, AnyModel, Instance, ScoreRecord,
    TrainOutcome,
};
use serde_json::json;

use crate::artifacts::{
    check_hash, create, hex_hash, open, parse_hash, read_stamped, write_stamped, Layout, Manifest,
    Stage, StageHashes, StageRecord, Variant,
};
use crate::config::{InputFormat, PipelineConfig, TransferMode};

/// Config, output layout and stage hashes for one invocation.
pub struct Ctx {
    pub cfg: PipelineConfig,
    pub layout: Layout,
    pub hashes: StageHashes,
}

impl Ctx {
    pub fn new(cfg: PipelineConfig, out: &Path) -> Self {
        let hashes = StageHashes::new(&cfg);
        Self {
            cfg,
            layout: Layout::new(out),
            hashes,
        }
    }

    fn hash(&self, stage: Stage, v: Variant) -> ConfigHash {
        self.hashes.of(&self.cfg, stage, v)
    }

    fn record(&self, stage: Stage, v: Variant) -> StageRecord {
        StageRecord {
            config_hash: hex_hash(&self.hash(stage, v)),
            seed: self.cfg.seed,
            ..StageRecord::default()
        }
    }

    fn finish(&self, stage: Stage, v: Variant, rec: StageRecord) -> Result<StageRecord> {
        let key = match stage {
            Stage::Score | Stage::FitPdf | Stage::Detect | Stage::Evaluate => {
                format!("{}{}", v.prefix(), stage.name())
            }
            _ => stage.name().to_string(),
        };
        Manifest::record(&self.layout.manifest(), &key, rec.clone())?;
        Ok(rec)
    }

    fn scenarios(&self) -> Vec<u32> {
        self.cfg.captures.iter().map(|c| c.scenario).collect()
    }
}

fn output(rec: &mut StageRecord, layout: &Layout, p: &Path) {
    rec.outputs.push(layout.rel(p));
}

pub fn cmd_ingest(ctx: &Ctx) -> Result<StageRecord> {
    let mut rec = ctx.record(Stage::Ingest, Variant::Semi);
    for c in &ctx.cfg.captures {
        let path = ctx.cfg.resolve(&c.conn_log);
        let file =
            File::open(&path).with_context(|| format!("missing input {}", path.display()))?;
        let parsed = match c.format {
            InputFormat::Zeek => parse_conn_log(BufReader::new(file), None),
            InputFormat::Csv => parse_flow_csv(BufReader::new(file), &c.csv_schema()?),
        }
        .with_context(|| format!("parsing {}", path.display()))?;
        if !parsed.skipped.is_empty() {
            let first = &parsed.skipped[0];
            rec.warnings.push(format!(
                "scenario {}: skipped {} malformed lines (first at line {}: {})",
                c.scenario,
                parsed.skipped.len(),
                first.line,
                first.reason
            ));
        }
        if parsed.records.is_empty() {
            rec.warnings.push(format!(
                "scenario {}: no flows in {}",
                c.scenario,
                c.conn_log.display()
            ));
        }
        let out = ctx.layout.flows(c.scenario);
        let mut w = BufWriter::new(create(&out)?);
        write_flow_cache(&mut w, &ctx.hashes.ingest, &parsed.records)?;
        w.flush()?;
        rec.counts.insert(
            format!("flows_s{}", c.scenario),
            parsed.records.len() as u64,
        );
        output(&mut rec, &ctx.layout, &out);
    }
    ctx.finish(Stage::Ingest, Variant::Semi, rec)
}

fn read_flows(ctx: &Ctx, scenario: u32) -> Result<Vec<FlowRecord>> {
    let path = ctx.layout.flows(scenario);
    let mut r = BufReader::new(open(&path, Stage::Ingest)?);
    let (hash, flows) =
        read_flow_cache(&mut r).with_context(|| format!("reading {}", path.display()))?;
    check_hash(&path, &hash, &ctx.hashes.ingest, Stage::Ingest)?;
    Ok(flows)
}

const HASH_COMMENT: &str = "# config_hash ";

pub fn cmd_label(ctx: &Ctx) -> Result<StageRecord> {
    let mut rec = ctx.record(Stage::Label, Variant::Semi);
    for c in &ctx.cfg.captures {
        let labels = if let Some(weird) = &c.weird_log {
            let path = ctx.cfg.resolve(weird);
            let file =
                File::open(&path).with_context(|| format!("missing input {}", path.display()))?;
            let parsed = parse_weird_log(BufReader::new(file), None)
                .with_context(|| format!("parsing {}", path.display()))?;
            derive_labels(&parsed.records, &ctx.cfg.labels.indicators)?
        } else if let Some(tsv) = &c.host_labels {
            let path = ctx.cfg.resolve(tsv);
            let file =
                File::open(&path).with_context(|| format!("missing input {}", path.display()))?;
            HostLabelSet::read_tsv(BufReader::new(file))
                .with_context(|| format!("reading {}", path.display()))?
        } else {
            rec.warnings.push(format!(
                "scenario {}: no label source, every host is normal",
                c.scenario
            ));
            HostLabelSet::new()
        };
        let out = ctx.layout.labels(c.scenario);
        let mut w = BufWriter::new(create(&out)?);
        writeln!(w, "{HASH_COMMENT}{}", hex_hash(&ctx.hashes.label))?;
        labels.write_tsv(&mut w)?;
        w.flush()?;
        rec.counts.insert(
            format!("malicious_hosts_s{}", c.scenario),
            labels.malicious().count() as u64,
        );
        output(&mut rec, &ctx.layout, &out);
    }
    ctx.finish(Stage::Label, Variant::Semi, rec)
}

fn read_labels(ctx: &Ctx, scenario: u32) -> Result<HostLabelSet> {
    let path = ctx.layout.labels(scenario);
    let mut r = BufReader::new(open(&path, Stage::Label)?);
    let mut first = String::new();
    r.read_line(&mut first)?;
    let found = first
        .trim()
        .strip_prefix(HASH_COMMENT)
        .with_context(|| format!("{} has no config hash line", path.display()))?;
    check_hash(&path, &parse_hash(found)?, &ctx.hashes.label, Stage::Label)?;
    Ok(HostLabelSet::read_tsv(r)?)
}

pub fn cmd_featurize(ctx: &Ctx) -> Result<StageRecord> {
    let mut rec = ctx.record(Stage::Featurize, Variant::Semi);
    ctx.cfg.check_split()?;
    let train: Vec<u32> = ctx.cfg.train_scenarios();
    let mut fit_rows: Vec<AggFlow> = Vec::new();
    for s in ctx.scenarios() {
        let flows = read_flows(ctx, s)?;
        let labels = read_labels(ctx, s)?;
        let agg = aggregate_flows(&flows, &ctx.cfg.window, &ctx.cfg.features, &labels, Some(s))?;
        if agg.is_empty() {
            rec.warnings
                .push(format!("scenario {s}: no aggregated flows"));
        }
        let out = ctx.layout.agg(s);
        let mut w = BufWriter::new(create(&out)?);
        write_agg_cache(&mut w, &ctx.hashes.featurize, &agg)?;
        w.flush()?;
        rec.counts
            .insert(format!("agg_flows_s{s}"), agg.len() as u64);
        output(&mut rec, &ctx.layout, &out);
        if train.contains(&s) {
            fit_rows.extend(agg);
        }
    }
    let normalizer = if fit_rows.is_empty() {
        rec.warnings
            .push("training split has no aggregated flows; normalizer left unfitted".into());
        NormalizerState::default()
    } else {
        fit_normalizer(&fit_rows)?
    };
    let out = ctx.layout.normalizer();
    write_stamped(&out, &ctx.hashes.featurize, &normalizer)?;
    output(&mut rec, &ctx.layout, &out);
    ctx.finish(Stage::Featurize, Variant::Semi, rec)
}

fn read_agg(ctx: &Ctx, scenario: u32) -> Result<Vec<AggFlow>> {
    let path = ctx.layout.agg(scenario);
    let mut r = BufReader::new(open(&path, Stage::Featurize)?);
    let (hash, flows) =
        read_agg_cache(&mut r).with_context(|| format!("reading {}", path.display()))?;
    check_hash(&path, &hash, &ctx.hashes.featurize, Stage::Featurize)?;
    Ok(flows)
}

fn read_normalizer(ctx: &Ctx) -> Result<NormalizerState> {
    read_stamped(
        &ctx.layout.normalizer(),
        &ctx.hashes.featurize,
        Stage::Featurize,
    )
}

/// Normalized sequences of the given scenarios, keeping AggFlows that pass `keep`.
fn sequences_of(
    ctx: &Ctx,
    normalizer: &NormalizerState,
    scenarios: &[u32],
    keep: impl Fn(&AggFlow) -> bool,
) -> Result<Vec<Instance>> {
    let mut rows = Vec::new();
    for &s in scenarios {
        rows.extend(read_agg(ctx, s)?.into_iter().filter(|a| keep(a)));
    }
    let rows = apply_normalizer(normalizer, &rows)?;
    Ok(build_sequences(&rows, &ctx.cfg.window)
        .iter()
        .map(instance_of)
        .collect())
}

fn save_model(
    ctx: &Ctx,
    v: Variant,
    model: &AnyModel,
    outcome: &TrainOutcome,
    rec: &mut StageRecord,
) -> Result<()> {
    let path = ctx.layout.model(v);
    let mut w = BufWriter::new(create(&path)?);
    let extra = json!({ "config_hash": hex_hash(&ctx.hashes.model(v)) });
    save_checkpoint(&mut w, model, Some(&outcome.adam), extra)?;
    w.flush()?;
    output(rec, &ctx.layout, &path);
    let log_path = ctx.layout.train_log(v);
    let mut w = BufWriter::new(create(&log_path)?);
    outcome.log.write_jsonl(&mut w)?;
    w.flush()?;
    output(rec, &ctx.layout, &log_path);
    rec.counts
        .insert("updates".into(), outcome.adam.steps_taken());
    Ok(())
}

pub fn cmd_train(ctx: &Ctx) -> Result<StageRecord> {
    let mut rec = ctx.record(Stage::Train, Variant::Semi);
    let normalizer = read_normalizer(ctx)?;
    let train = sequences_of(ctx, &normalizer, &ctx.cfg.train_scenarios(), |a| {
        a.label == Label::Normal
    })?;
    if train.is_empty() {
        bail!("training split has no normal sequences");
    }
    let spec = ctx.cfg.model.spec(ctx.cfg.features.width());
    let mut model = AnyModel::new(spec, ctx.cfg.seed)?;
    let outcome = train_semisupervised(&mut model, &train, &[], &ctx.cfg.train_config())?;
    rec.counts
        .insert("train_sequences".into(), train.len() as u64);
    save_model(ctx, Variant::Semi, &model, &outcome, &mut rec)?;
    ctx.finish(Stage::Train, Variant::Semi, rec)
}

pub fn cmd_transfer_train(ctx: &Ctx) -> Result<StageRecord> {
    let mut rec = ctx.record(Stage::TransferTrain, Variant::Transfer);
    let transfer = ctx
        .cfg
        .transfer
        .as_ref()
        .context("config has no [transfer] section")?;
    let normalizer = read_normalizer(ctx)?;
    let source = ctx.cfg.train_scenarios();
    let target: Vec<u32> = transfer.target.iter().copied().collect();
    let s_neg = sequences_of(ctx, &normalizer, &source, |a| a.label == Label::Normal)?;
    let s_pos = sequences_of(ctx, &normalizer, &source, |a| a.label == Label::Malicious)?;
    let spec = ctx.cfg.model.spec(ctx.cfg.features.width());
    let mut model = AnyModel::new(spec, ctx.cfg.seed)?;
    let cfg = ctx.cfg.train_config();
    let (t, outcome) = match transfer.mode {
        TransferMode::WithLabel => {
            let t = sequences_of(ctx, &normalizer, &target, |a| a.label == Label::Normal)?;
            let o = train_transfer_with_label(&mut model, &s_neg, &s_pos, &t, &cfg)?;
            (t, o)
        }
        TransferMode::WithoutLabel => {
            let t = sequences_of(ctx, &normalizer, &target, |_| true)?;
            let o = train_transfer_without_label(&mut model, &s_neg, &s_pos, &t, &cfg)?;
            (t, o)
        }
    };
    rec.counts
        .insert("source_normal_sequences".into(), s_neg.len() as u64);
    rec.counts
        .insert("source_anomalous_sequences".into(), s_pos.len() as u64);
    rec.counts.insert("target_sequences".into(), t.len() as u64);
    save_model(ctx, Variant::Transfer, &model, &outcome, &mut rec)?;
    ctx.finish(Stage::TransferTrain, Variant::Transfer, rec)
}

fn load_model(ctx: &Ctx, v: Variant) -> Result<AnyModel> {
    let path = ctx.layout.model(v);
    let mut r = BufReader::new(open(&path, v.model_stage())?);
    let loaded = load_checkpoint(&mut r).with_context(|| format!("reading {}", path.display()))?;
    let found = loaded
        .extra
        .get("config_hash")
        .and_then(|h| h.as_str())
        .with_context(|| format!("{} has no config hash", path.display()))?;
    check_hash(
        &path,
        &parse_hash(found)?,
        &ctx.hashes.model(v),
        v.model_stage(),
    )?;
    Ok(loaded.model)
}

pub fn cmd_score(ctx: &Ctx, v: Variant) -> Result<StageRecord> {
    let mut rec = ctx.record(Stage::Score, v);
    let model = load_model(ctx, v)?;
    let normalizer = read_normalizer(ctx)?;
    let hash = ctx.hash(Stage::Score, v);
    for s in ctx.scenarios() {
        let rows = apply_normalizer(&normalizer, &read_agg(ctx, s)?)?;
        let seqs = build_sequences(&rows, &ctx.cfg.window);
        let scores = anomaly_scores(&model, &seqs, ctx.cfg.detect.batch_size, ctx.cfg.workers)?;
        let out = ctx.layout.scores(v, s);
        write_stamped(&out, &hash, &scores)?;
        rec.counts
            .insert(format!("scores_s{s}"), scores.len() as u64);
        output(&mut rec, &ctx.layout, &out);
    }
    ctx.finish(Stage::Score, v, rec)
}

pub fn cmd_fit_pdf(ctx: &Ctx, v: Variant) -> Result<StageRecord> {
    let mut rec = ctx.record(Stage::FitPdf, v);
    let (mut normal, mut botnet) = (Vec::new(), Vec::new());
    for s in ctx.cfg.train_scenarios() {
        let scores: Vec<ScoreRecord> = read_stamped(
            &ctx.layout.scores(v, s),
            &ctx.hash(Stage::Score, v),
            Stage::Score,
        )?;
        for r in scores {
            match r.label {
                Some(Label::Malicious) => botnet.push(r.score),
                _ => normal.push(r.score),
            }
        }
    }
    let d = &ctx.cfg.detect;
    let profile = DetectorProfile::fit(&normal, &botnet, &d.families, d.bins, ctx.cfg.workers)
        .context("fitting score distributions on the training split")?;
    rec.counts
        .insert("normal_scores".into(), normal.len() as u64);
    rec.counts
        .insert("botnet_scores".into(), botnet.len() as u64);
    let out = ctx.layout.profile(v);
    write_stamped(&out, &ctx.hash(Stage::FitPdf, v), &profile)?;
    output(&mut rec, &ctx.layout, &out);
    ctx.finish(Stage::FitPdf, v, rec)
}

pub fn cmd_detect(ctx: &Ctx, v: Variant) -> Result<StageRecord> {
    let mut rec = ctx.record(Stage::Detect, v);
    let model = load_model(ctx, v)?;
    let normalizer = read_normalizer(ctx)?;
    let profile: DetectorProfile = read_stamped(
        &ctx.layout.profile(v),
        &ctx.hash(Stage::FitPdf, v),
        Stage::FitPdf,
    )?;
    let test = ctx.cfg.test_scenarios();
    if test.is_empty() {
        rec.warnings.push("test split has no captures".into());
    }
    for s in test {
        let mut flows = read_flows(ctx, s)?;
        // The stream detector needs flows in time order.
        flows.sort_by(|a, b| a.ts.total_cmp(&b.ts));
        let labels = read_labels(ctx, s)?;
        let detector = Detector {
            model: &model,
            profile: &profile,
            normalizer: &normalizer,
            window: &ctx.cfg.window,
            schema: &ctx.cfg.features,
            labels: &labels,
            batch_size: ctx.cfg.detect.batch_size,
            workers: ctx.cfg.workers,
        };
        let verdicts = detect_stream(&detector, flows)?;
        let flagged = verdicts
            .iter()
            .filter(|v| v.verdict == Label::Malicious)
            .count();
        rec.counts
            .insert(format!("verdicts_s{s}"), verdicts.len() as u64);
        rec.counts.insert(format!("flagged_s{s}"), flagged as u64);
        let out = ctx.layout.verdicts(v, s);
        write_stamped(&out, &ctx.hash(Stage::Detect, v), &verdicts)?;
        output(&mut rec, &ctx.layout, &out);
    }
    ctx.finish(Stage::Detect, v, rec)
}

fn columns(verdicts: &[Verdict]) -> (Vec<f64>, Vec<bool>, Vec<bool>) {
    let scores = verdicts.iter().map(|v| v.score).collect();
    let predicted = verdicts.iter().map(|v| v.verdict.is_malicious()).collect();
    let truth = verdicts.iter().map(|v| v.label.is_malicious()).collect();
    (scores, predicted, truth)
}

pub fn cmd_evaluate(ctx: &Ctx, v: Variant) -> Result<StageRecord> {
    let mut rec = ctx.record(Stage::Evaluate, v);
    let mut report = Report::default();
    let mut pooled: Vec<Verdict> = Vec::new();
    let mut per_scenario: BTreeMap<u32, Vec<Verdict>> = BTreeMap::new();
    for s in ctx.cfg.test_scenarios() {
        let verdicts: Vec<Verdict> = read_stamped(
            &ctx.layout.verdicts(v, s),
            &ctx.hash(Stage::Detect, v),
            Stage::Detect,
        )?;
        pooled.extend(verdicts.iter().cloned());
        per_scenario.insert(s, verdicts);
    }
    for (s, verdicts) in &per_scenario {
        let (scores, predicted, truth) = columns(verdicts);
        report.push(evaluate(
            &format!("scenario {s}"),
            &scores,
            &predicted,
            &truth,
        )?);
    }
    let (scores, predicted, truth) = columns(&pooled);
    let all = evaluate("all", &scores, &predicted, &truth)?;
    if all.metrics.auroc.is_none() {
        rec.warnings.push(format!(
            "test split has {} positives among {} instances; rank metrics are undefined",
            all.positives, all.samples
        ));
    }
    report.push(all);

    let table = ctx.layout.report_table(v);
    let mut w = BufWriter::new(create(&table)?);
    report.write_table(&mut w)?;
    w.flush()?;
    output(&mut rec, &ctx.layout, &table);
    let jsonl = ctx.layout.report_jsonl(v);
    let mut w = BufWriter::new(create(&jsonl)?);
    report.write_jsonl(&mut w)?;
    w.flush()?;
    output(&mut rec, &ctx.layout, &jsonl);

    let ls = LabeledScores::new(scores, truth)?;
    if ls.positives() > 0 && ls.negatives() > 0 {
        for (path, header, points) in [
            (ctx.layout.roc(v), ("fpr", "tpr"), roc_curve(&ls)?),
            (ctx.layout.pr(v), ("recall", "precision"), pr_curve(&ls)?),
        ] {
            let mut w = BufWriter::new(create(&path)?);
            write_curve_csv(&mut w, header, &points)?;
            w.flush()?;
            output(&mut rec, &ctx.layout, &path);
        }
    }
    ctx.finish(Stage::Evaluate, v, rec)
}

/// Every stage in order; the transfer variant runs too when configured.
pub fn run_pipeline(ctx: &Ctx) -> Result<Vec<(String, StageRecord)>> {
    let mut out = vec![
        ("ingest".to_string(), cmd_ingest(ctx)?),
        ("label".to_string(), cmd_label(ctx)?),
        ("featurize".to_string(), cmd_featurize(ctx)?),
        ("train".to_string(), cmd_train(ctx)?),
    ];
    let mut variants = vec![Variant::Semi];
    if ctx.cfg.transfer.is_some() {
        out.push(("transfer-train".to_string(), cmd_transfer_train(ctx)?));
        variants.push(Variant::Transfer);
    }
    for v in variants {
        let p = v.prefix();
        out.push((format!("{p}score"), cmd_score(ctx, v)?));
        out.push((format!("{p}fit-pdf"), cmd_fit_pdf(ctx, v)?));
        out.push((format!("{p}detect"), cmd_detect(ctx, v)?));
        out.push((format!("{p}evaluate"), cmd_evaluate(ctx, v)?));
    }
    Ok(out)
}
