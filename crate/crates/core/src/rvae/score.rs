use flowvae_nn::Graph;
use serde::{Deserialize, Serialize};

use super::batch::{Instance, SeqBatch};
use super::loss::bce_rows;
use super::model::{Latent, SequenceVae};
use crate::features::FlowSequence;
use crate::ingest::Label;
use crate::{Error, Result};

/// Reconstruction error of one AggFlow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub src_ip: String,
    pub window_index: i64,
    pub score: f64,
    pub label: Option<Label>,
}

fn score_batch<M: SequenceVae + ?Sized>(
    model: &M,
    instances: &[&Instance],
) -> Result<Vec<Vec<f64>>> {
    let batch = SeqBatch::new(instances)?;
    let mut g = Graph::new();
    let p = model.params().bind(&mut g);
    let out = model.forward(&mut g, &p, &batch, Latent::Mean)?;
    let rows = bce_rows(&mut g, out.recon, &batch.targets)?;
    let v = g.value(rows);
    Ok(batch
        .lens
        .iter()
        .enumerate()
        .map(|(b, &len)| (0..len).map(|t| v.get(batch.row(t, b), 0)).collect())
        .collect())
}

/// Per-timestep scores in evaluation mode (z = mu), one list per instance.
///
/// Instances are cut into batches of `batch_size` first and the batches are
/// then spread over `workers` threads, so the result does not depend on the
/// worker count.
pub fn timestep_scores<M: SequenceVae + Sync + ?Sized>(
    model: &M,
    instances: &[Instance],
    batch_size: usize,
    workers: usize,
) -> Result<Vec<Vec<f64>>> {
    if instances.is_empty() {
        return Ok(Vec::new());
    }
    let refs: Vec<&Instance> = instances.iter().collect();
    let batches: Vec<&[&Instance]> = refs.chunks(batch_size.max(1)).collect();
    let workers = workers.clamp(1, batches.len());
    let per_worker = batches.len().div_ceil(workers);
    let results: Vec<Result<Vec<Vec<f64>>>> = std::thread::scope(|s| {
        let handles: Vec<_> = batches
            .chunks(per_worker)
            .map(|shard| {
                s.spawn(move || -> Result<Vec<Vec<f64>>> {
                    let mut out = Vec::new();
                    for b in shard {
                        out.extend(score_batch(model, b)?);
                    }
                    Ok(out)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scoring worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(instances.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Mean per-timestep score of each instance.
pub fn instance_scores<M: SequenceVae + Sync + ?Sized>(
    model: &M,
    instances: &[Instance],
    batch_size: usize,
    workers: usize,
) -> Result<Vec<f64>> {
    Ok(timestep_scores(model, instances, batch_size, workers)?
        .into_iter()
        .map(|s| s.iter().sum::<f64>() / s.len() as f64)
        .collect())
}

pub fn instance_of(seq: &FlowSequence) -> Instance {
    seq.agg_flows.iter().map(|a| a.features.clone()).collect()
}

/// One ScoreRecord per valid position of every sequence, in sequence order.
pub fn anomaly_scores<M: SequenceVae + Sync + ?Sized>(
    model: &M,
    seqs: &[FlowSequence],
    batch_size: usize,
    workers: usize,
) -> Result<Vec<ScoreRecord>> {
    if let Some(i) = seqs.iter().position(FlowSequence::is_empty) {
        return Err(Error::EmptyInput(format!("sequence {i} is empty")));
    }
    let instances: Vec<Instance> = seqs.iter().map(instance_of).collect();
    let scores = timestep_scores(model, &instances, batch_size, workers)?;
    Ok(seqs
        .iter()
        .zip(scores)
        .flat_map(|(seq, s)| {
            seq.agg_flows.iter().zip(s).map(|(a, score)| ScoreRecord {
                src_ip: a.src_ip.clone(),
                window_index: a.window_index,
                score,
                label: Some(a.label),
            })
        })
        .collect())
}
