use flowvae_nn::{Graph, Tensor, Var};

use super::batch::SeqBatch;
use super::model::VaeOutput;
use crate::Result;

/// Reconstructions are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const EPS: f64 = 1e-7;

/// Per-row binary cross-entropy `-Σ y ln ŷ + (1 - y) ln(1 - ŷ)`: `[rows, 1]`.
pub fn bce_rows(g: &mut Graph, recon: Var, targets: &Tensor) -> Result<Var> {
    let y = g.clamp(recon, EPS, 1.0 - EPS)?;
    let log_y = g.log(y)?;
    let not_y = g.one_minus(y)?;
    let log_not_y = g.log(not_y)?;
    let t = g.constant(targets.clone());
    let not_t = g.constant(targets.map(|v| 1.0 - v));
    let a = g.mul(log_y, t)?;
    let b = g.mul(log_not_y, not_t)?;
    let ll = g.add(a, b)?;
    let s = g.sum_cols(ll)?;
    Ok(g.scale(s, -1.0)?)
}

/// Mean per-timestep BCE over each instance's valid steps: `[batch, 1]`.
pub fn instance_errors(g: &mut Graph, out: &VaeOutput, batch: &SeqBatch) -> Result<Var> {
    let rows = bce_rows(g, out.recon, &batch.targets)?;
    let select = g.constant(batch.select.clone());
    Ok(g.matmul(select, rows)?)
}

#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub recon: Var,
    pub kl: Var,
}

impl LossTerms {
    pub fn values(&self, g: &Graph) -> (f64, f64, f64) {
        (
            g.value(self.total).item(),
            g.value(self.recon).item(),
            g.value(self.kl).item(),
        )
    }
}

/// Batch mean of instance errors plus `beta` times the batch-mean KL.
pub fn vae_loss(g: &mut Graph, out: &VaeOutput, batch: &SeqBatch, beta: f64) -> Result<LossTerms> {
    let errors = instance_errors(g, out, batch)?;
    let recon = g.mean(errors)?;
    let kl = g.mean(out.kl)?;
    let weighted = g.scale(kl, beta)?;
    let total = g.add(recon, weighted)?;
    Ok(LossTerms { total, recon, kl })
}

/// Pairwise margin `mean_{i,j} sigmoid(s⁺_j - s⁻_i)` over the cross product
/// of normal errors `[n, 1]` and anomalous errors `[m, 1]`.
pub fn pairwise_margin(g: &mut Graph, normal: Var, anomalous: Var) -> Result<Var> {
    let n = g.value(normal).rows();
    let ones = g.constant(Tensor::filled(n, 1, 1.0));
    let pos_t = g.transpose(anomalous)?;
    let grid = g.matmul(ones, pos_t)?;
    let diff = g.sub(grid, normal)?;
    let f = g.sigmoid(diff)?;
    Ok(g.mean(f)?)
}

/// Source-domain objective: normal reconstruction error, minus `lambda`
/// times the pairwise margin, plus `beta` times the normal-batch KL.
#[allow(clippy::too_many_arguments)]
pub fn source_loss(
    g: &mut Graph,
    normal_out: &VaeOutput,
    normal: &SeqBatch,
    anomalous_out: &VaeOutput,
    anomalous: &SeqBatch,
    beta: f64,
    lambda: f64,
) -> Result<(LossTerms, Var)> {
    let s_neg = instance_errors(g, normal_out, normal)?;
    let s_pos = instance_errors(g, anomalous_out, anomalous)?;
    let recon = g.mean(s_neg)?;
    let margin = pairwise_margin(g, s_neg, s_pos)?;
    let kl = g.mean(normal_out.kl)?;
    let penalty = g.scale(margin, -lambda)?;
    let weighted = g.scale(kl, beta)?;
    let total = g.add(recon, penalty)?;
    let total = g.add(total, weighted)?;
    Ok((LossTerms { total, recon, kl }, margin))
}
