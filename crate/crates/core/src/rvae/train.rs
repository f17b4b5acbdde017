use std::io::Write;

use flowvae_nn::{Adam, AdamConfig, Graph, ParamStore};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::{Instance, SeqBatch};
use super::loss::{source_loss, vae_loss};
use super::model::{Latent, SequenceVae};
use super::score::instance_scores;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta_final: f64,
    /// Updates over which the KL weight ramps linearly from 0 to `beta_final`.
    pub beta_anneal_steps: u64,
    /// Weight of the pairwise margin in the source objective.
    pub lambda: f64,
    /// Fraction of each target batch carried forward without labels.
    pub r_s: f64,
    /// Epochs before carrying starts.
    pub warmup_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 128,
            lr: 0.01,
            beta_final: 1.0,
            beta_anneal_steps: 500,
            lambda: 1.0,
            r_s: 0.1,
            warmup_epochs: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.beta_final >= 0.0 && self.beta_final.is_finite()) {
            return bad("beta_final must be non-negative");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if !(self.r_s > 0.0 && self.r_s < 1.0) {
            return bad("r_s must lie in (0, 1)");
        }
        Ok(())
    }

    /// KL weight for the `update`-th optimizer step (0-based).
    pub fn beta(&self, update: u64) -> f64 {
        if self.beta_anneal_steps == 0 {
            return self.beta_final;
        }
        self.beta_final * (update as f64 / self.beta_anneal_steps as f64).min(1.0)
    }

    fn adam(&self, params: &ParamStore) -> Adam {
        Adam::new(
            AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            params,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Source,
    Target,
}

/// Per-epoch, per-phase averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub epoch: usize,
    pub phase: Phase,
    /// Optimizer steps taken so far, all phases included.
    pub step: u64,
    /// Updates made in this phase during the epoch.
    pub updates: usize,
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
    pub beta: f64,
    /// Instances consumed by this phase during the epoch, carried ones included.
    pub instances: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut *w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn phase(&self, phase: Phase) -> impl Iterator<Item = &LogRecord> {
        self.records.iter().filter(move |r| r.phase == phase)
    }

    pub fn total_updates(&self, phase: Phase) -> usize {
        self.phase(phase).map(|r| r.updates).sum()
    }
}

pub struct TrainOutcome {
    pub log: TrainLog,
    pub adam: Adam,
    /// Epoch (1-based) whose parameters were kept, when validating.
    pub best_epoch: Option<usize>,
}

#[derive(Default)]
struct Acc {
    updates: usize,
    instances: usize,
    loss: f64,
    recon: f64,
    kl: f64,
    beta: f64,
}

impl Acc {
    fn add(&mut self, (loss, recon, kl): (f64, f64, f64), beta: f64, instances: usize) {
        self.updates += 1;
        self.instances += instances;
        self.loss += loss;
        self.recon += recon;
        self.kl += kl;
        self.beta = beta;
    }

    fn record(&self, epoch: usize, phase: Phase, step: u64, val_loss: Option<f64>) -> LogRecord {
        let n = self.updates.max(1) as f64;
        LogRecord {
            epoch,
            phase,
            step,
            updates: self.updates,
            loss: self.loss / n,
            recon: self.recon / n,
            kl: self.kl / n,
            beta: self.beta,
            instances: self.instances,
            val_loss,
        }
    }
}

fn apply<M: SequenceVae + ?Sized>(
    model: &mut M,
    adam: &mut Adam,
    g: &Graph,
    bound: &flowvae_nn::Bound,
    total: flowvae_nn::Var,
) -> Result<()> {
    let mut grads = g.backward(total)?;
    let grads = model.params().collect_grads(bound, &mut grads);
    adam.step(model.params_mut(), &grads)?;
    Ok(())
}

/// One plain VAE update on `instances`; returns (total, recon, kl).
fn vae_step<M: SequenceVae + ?Sized>(
    model: &mut M,
    adam: &mut Adam,
    instances: &[&Instance],
    beta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64, f64)> {
    let batch = SeqBatch::new(instances)?;
    let mut g = Graph::new();
    let p = model.params().bind(&mut g);
    let out = model.forward(&mut g, &p, &batch, Latent::Sample(rng))?;
    let terms = vae_loss(&mut g, &out, &batch, beta)?;
    let values = terms.values(&g);
    apply(model, adam, &g, &p, terms.total)?;
    Ok(values)
}

/// Loss in evaluation mode over `instances`, batch by batch, weighted by batch size.
pub fn evaluate_loss<M: SequenceVae + ?Sized>(
    model: &M,
    instances: &[Instance],
    batch_size: usize,
    beta: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for chunk in instances.chunks(batch_size.max(1)) {
        let batch = SeqBatch::new(chunk)?;
        let mut g = Graph::new();
        let p = model.params().bind(&mut g);
        let out = model.forward(&mut g, &p, &batch, Latent::Mean)?;
        let terms = vae_loss(&mut g, &out, &batch, beta)?;
        total += g.value(terms.total).item() * chunk.len() as f64;
    }
    Ok(total / instances.len() as f64)
}

fn require(name: &str, set: &[Instance]) -> Result<()> {
    if set.is_empty() {
        return Err(Error::EmptyInput(format!("{name} set is empty")));
    }
    Ok(())
}

/// Trains on normal-only instances. With a validation set, the parameters
/// of the epoch with the lowest validation loss are restored at the end.
pub fn train_semisupervised<M: SequenceVae + ?Sized>(
    model: &mut M,
    train: &[Instance],
    validation: &[Instance],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    require("training", train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = cfg.adam(model.params());
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, usize, ParamStore)> = None;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut acc = Acc::default();
        for idx in order.chunks(cfg.batch_size) {
            let beta = cfg.beta(adam.steps_taken());
            let batch: Vec<&Instance> = idx.iter().map(|&i| &train[i]).collect();
            let v = vae_step(model, &mut adam, &batch, beta, &mut rng)?;
            acc.add(v, beta, batch.len());
        }
        let val_loss = if validation.is_empty() {
            None
        } else {
            let v = evaluate_loss(model, validation, cfg.batch_size, cfg.beta_final)?;
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, epoch, model.params().clone()));
            }
            Some(v)
        };
        log.records
            .push(acc.record(epoch, Phase::Train, adam.steps_taken(), val_loss));
    }
    let best_epoch = best.map(|(_, epoch, params)| {
        *model.params_mut() = params;
        epoch
    });
    Ok(TrainOutcome {
        log,
        adam,
        best_epoch,
    })
}

/// Endless minibatches of indices, reshuffled on every pass.
pub struct BatchStream {
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
}

impl BatchStream {
    pub fn new(len: usize, batch_size: usize) -> Self {
        Self {
            order: (0..len).collect(),
            pos: len,
            batch_size: batch_size.max(1),
        }
    }

    pub fn batches_per_pass(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    /// The next batch; a pass ends with a short batch rather than mixing passes.
    pub fn next_batch(&mut self, rng: &mut ChaCha8Rng) -> &[usize] {
        if self.pos >= self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let out = &self.order[self.pos..end];
        self.pos = end;
        out
    }
}

/// Indices of the `round(r * n)` lowest scores, ascending by score; ties
/// keep input order.
pub fn select_bottom_fraction(scores: &[f64], r: f64) -> Vec<usize> {
    let count = ((r * scores.len() as f64).round() as usize).min(scores.len());
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    idx.truncate(count);
    idx
}

/// Source update on a normal and an anomalous minibatch.
fn source_step<M: SequenceVae + ?Sized>(
    model: &mut M,
    adam: &mut Adam,
    normal: &[&Instance],
    anomalous: &[&Instance],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64, f64)> {
    let beta = cfg.beta(adam.steps_taken());
    let nb = SeqBatch::new(normal)?;
    let ab = SeqBatch::new(anomalous)?;
    let mut g = Graph::new();
    let p = model.params().bind(&mut g);
    let n_out = model.forward(&mut g, &p, &nb, Latent::Sample(rng))?;
    let a_out = model.forward(&mut g, &p, &ab, Latent::Sample(rng))?;
    let (terms, _) = source_loss(&mut g, &n_out, &nb, &a_out, &ab, beta, cfg.lambda)?;
    let values = terms.values(&g);
    apply(model, adam, &g, &p, terms.total)?;
    Ok(values)
}

enum TargetMode<'a> {
    Labeled(&'a [Instance]),
    Unlabeled(&'a [Instance]),
}

fn train_transfer<M: SequenceVae + Sync + ?Sized>(
    model: &mut M,
    source_normal: &[Instance],
    source_anomalous: &[Instance],
    target: TargetMode<'_>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    require("source normal", source_normal)?;
    require("source anomalous", source_anomalous)?;
    let target_set = match target {
        TargetMode::Labeled(t) | TargetMode::Unlabeled(t) => t,
    };
    require("target", target_set)?;
    let carrying = matches!(target, TargetMode::Unlabeled(_));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = cfg.adam(model.params());
    let mut log = TrainLog::default();
    let mut s_neg = BatchStream::new(source_normal.len(), cfg.batch_size);
    let mut s_pos = BatchStream::new(source_anomalous.len(), cfg.batch_size);
    let mut t_stream = BatchStream::new(target_set.len(), cfg.batch_size);
    let iterations = s_neg
        .batches_per_pass()
        .max(s_pos.batches_per_pass())
        .max(t_stream.batches_per_pass());

    for epoch in 1..=cfg.epochs {
        let mut src = Acc::default();
        let mut tgt = Acc::default();
        let mut carried: Vec<usize> = Vec::new();
        for _ in 0..iterations {
            let neg: Vec<&Instance> = s_neg
                .next_batch(&mut rng)
                .iter()
                .map(|&i| &source_normal[i])
                .collect();
            let pos: Vec<&Instance> = s_pos
                .next_batch(&mut rng)
                .iter()
                .map(|&i| &source_anomalous[i])
                .collect();
            let beta = cfg.beta(adam.steps_taken());
            let v = source_step(model, &mut adam, &neg, &pos, cfg, &mut rng)?;
            src.add(v, beta, neg.len() + pos.len());

            let fresh: Vec<usize> = t_stream.next_batch(&mut rng).to_vec();
            let mut combined: Vec<&Instance> = fresh.iter().map(|&i| &target_set[i]).collect();
            combined.extend(carried.iter().map(|&i| &target_set[i]));
            let beta = cfg.beta(adam.steps_taken());
            let v = vae_step(model, &mut adam, &combined, beta, &mut rng)?;
            tgt.add(v, beta, combined.len());

            if carrying && epoch > cfg.warmup_epochs {
                let fresh_set: Vec<Instance> =
                    fresh.iter().map(|&i| target_set[i].clone()).collect();
                let scores = instance_scores(&*model, &fresh_set, cfg.batch_size, 1)?;
                carried = select_bottom_fraction(&scores, cfg.r_s)
                    .into_iter()
                    .map(|k| fresh[k])
                    .collect();
            }
        }
        log.records
            .push(src.record(epoch, Phase::Source, adam.steps_taken(), None));
        log.records
            .push(tgt.record(epoch, Phase::Target, adam.steps_taken(), None));
    }
    Ok(TrainOutcome {
        log,
        adam,
        best_epoch: None,
    })
}

/// Alternates a source update (margin objective) with a target update on
/// labeled target normals.
pub fn train_transfer_with_label<M: SequenceVae + Sync + ?Sized>(
    model: &mut M,
    source_normal: &[Instance],
    source_anomalous: &[Instance],
    target_normal: &[Instance],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_transfer(
        model,
        source_normal,
        source_anomalous,
        TargetMode::Labeled(target_normal),
        cfg,
    )
}

/// As [`train_transfer_with_label`], but the target set is unlabeled. After
/// the warm-up epochs, each target batch is joined by the lowest-error
/// `r_s` fraction of the previous fresh batch, rescored after its update.
/// The carried set is emptied at every epoch start.
pub fn train_transfer_without_label<M: SequenceVae + Sync + ?Sized>(
    model: &mut M,
    source_normal: &[Instance],
    source_anomalous: &[Instance],
    target: &[Instance],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_transfer(
        model,
        source_normal,
        source_anomalous,
        TargetMode::Unlabeled(target),
        cfg,
    )
}
