use flowvae_nn::{Bound, Graph, GruCell, Linear, ParamStore, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::batch::SeqBatch;
use crate::{Error, Result};

/// How the latent code is produced from (mu, log_var).
pub enum Latent<'a> {
    /// Evaluation: z = mu.
    Mean,
    /// Training: z = mu + exp(0.5 log_var) * eps with fresh standard normal noise.
    Sample(&'a mut ChaCha8Rng),
    /// Caller-provided eps of shape `[batch, latent]`.
    Fixed(&'a Tensor),
}

/// Graph handles produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct VaeOutput {
    /// `[steps * batch, features]` reconstruction in (0, 1).
    pub recon: Var,
    /// `[batch, 1]` KL divergence per instance.
    pub kl: Var,
    pub mu: Var,
    pub log_var: Var,
}

/// A VAE over padded sequence batches.
pub trait SequenceVae {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn feature_dim(&self) -> usize;
    fn forward(
        &self,
        g: &mut Graph,
        p: &Bound,
        batch: &SeqBatch,
        latent: Latent<'_>,
    ) -> Result<VaeOutput>;
}

/// `z = mu + exp(0.5 log_var) * eps`, or `mu` in [`Latent::Mean`].
pub fn reparameterize(g: &mut Graph, mu: Var, log_var: Var, latent: Latent<'_>) -> Result<Var> {
    let (rows, cols) = (g.value(mu).rows(), g.value(mu).cols());
    let eps = match latent {
        Latent::Mean => return Ok(mu),
        Latent::Sample(rng) => {
            let data = (0..rows * cols)
                .map(|_| StandardNormal.sample(rng))
                .collect();
            Tensor::from_rows(rows, cols, data)?
        }
        Latent::Fixed(t) => {
            if t.shape() != [rows, cols] {
                return Err(Error::InvalidInput(format!(
                    "noise shape {:?}, expected [{rows}, {cols}]",
                    t.shape()
                )));
            }
            t.clone()
        }
    };
    let half = g.scale(log_var, 0.5)?;
    let sigma = g.exp(half)?;
    let eps = g.constant(eps);
    let noise = g.mul(sigma, eps)?;
    Ok(g.add(mu, noise)?)
}

/// Closed-form KL to the standard normal, per row: `[rows, 1]`.
pub fn gaussian_kl(g: &mut Graph, mu: Var, log_var: Var) -> Result<Var> {
    let mu2 = g.mul(mu, mu)?;
    let var = g.exp(log_var)?;
    let a = g.add_scalar(log_var, 1.0)?;
    let a = g.sub(a, mu2)?;
    let a = g.sub(a, var)?;
    let s = g.sum_cols(a)?;
    Ok(g.scale(s, -0.5)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RvaeConfig {
    pub features: usize,
    /// Encoder hidden size per direction.
    pub hidden: usize,
    /// Latent size; also the decoder hidden size.
    pub latent: usize,
}

impl RvaeConfig {
    pub fn new(features: usize, hidden: usize, latent: usize) -> Self {
        Self {
            features,
            hidden,
            latent,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.features == 0 || self.hidden == 0 || self.latent == 0 {
            return Err(Error::InvalidConfig(format!(
                "model sizes must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Two-layer bidirectional GRU encoder, GRU decoder seeded with z.
#[derive(Debug, Clone)]
pub struct RvaeModel {
    pub config: RvaeConfig,
    params: ParamStore,
    enc: [[GruCell; 2]; 2],
    mu: Linear,
    log_var: Linear,
    dec: GruCell,
    out: Linear,
}

impl RvaeModel {
    pub fn new(config: RvaeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let (f, h, z) = (config.features, config.hidden, config.latent);
        let enc = [
            [
                GruCell::new(&mut p, "enc.l0.fwd", f, h, &mut rng),
                GruCell::new(&mut p, "enc.l0.bwd", f, h, &mut rng),
            ],
            [
                GruCell::new(&mut p, "enc.l1.fwd", 2 * h, h, &mut rng),
                GruCell::new(&mut p, "enc.l1.bwd", 2 * h, h, &mut rng),
            ],
        ];
        let mu = Linear::new(&mut p, "mu", 2 * h, z, &mut rng);
        let log_var = Linear::new(&mut p, "log_var", 2 * h, z, &mut rng);
        let dec = GruCell::new(&mut p, "dec", f, z, &mut rng);
        let out = Linear::new(&mut p, "out", z, f, &mut rng);
        Ok(Self {
            config,
            params: p,
            enc,
            mu,
            log_var,
            dec,
            out,
        })
    }

    /// `h' = m * cell(x, h) + (1 - m) * h`; skipped when the step is fully valid.
    fn masked_step(
        cell: &GruCell,
        g: &mut Graph,
        p: &Bound,
        x: Var,
        h: Var,
        mask: Option<(Var, Var)>,
    ) -> Result<Var> {
        let next = cell.step(g, p, x, h)?;
        match mask {
            None => Ok(next),
            Some((m, keep)) => {
                let a = g.mul(next, m)?;
                let b = g.mul(h, keep)?;
                Ok(g.add(a, b)?)
            }
        }
    }

    /// Runs both encoder layers; returns the concatenated final states `[batch, 2H]`.
    pub fn encode_state(&self, g: &mut Graph, p: &Bound, batch: &SeqBatch) -> Result<Var> {
        let (b, h) = (batch.batch, self.config.hidden);
        let masks: Vec<Option<(Var, Var)>> = (0..batch.steps)
            .map(|t| {
                if batch.full_at(t) {
                    None
                } else {
                    let m = &batch.masks[t];
                    let keep = m.map(|v| 1.0 - v);
                    Some((g.constant(m.clone()), g.constant(keep)))
                }
            })
            .collect();
        let mut layer_in: Vec<Var> = batch.inputs.iter().map(|x| g.constant(x.clone())).collect();
        let mut finals = (layer_in[0], layer_in[0]);
        for cells in &self.enc {
            let zero = Tensor::zeros(b, h);
            let mut fwd = Vec::with_capacity(batch.steps);
            let mut state = g.constant(zero.clone());
            for (t, &x) in layer_in.iter().enumerate() {
                state = Self::masked_step(&cells[0], g, p, x, state, masks[t])?;
                fwd.push(state);
            }
            let mut bwd = vec![state; batch.steps];
            let mut state = g.constant(zero);
            for t in (0..batch.steps).rev() {
                state = Self::masked_step(&cells[1], g, p, layer_in[t], state, masks[t])?;
                bwd[t] = state;
            }
            finals = (*fwd.last().expect("steps >= 1"), bwd[0]);
            layer_in = fwd
                .iter()
                .zip(&bwd)
                .map(|(&f, &r)| g.concat(&[f, r]))
                .collect::<flowvae_nn::Result<_>>()?;
        }
        Ok(g.concat(&[finals.0, finals.1])?)
    }

    /// `(mu, log_var)`, each `[batch, latent]`.
    pub fn encode(&self, g: &mut Graph, p: &Bound, batch: &SeqBatch) -> Result<(Var, Var)> {
        let state = self.encode_state(g, p, batch)?;
        Ok((
            self.mu.forward(g, p, state)?,
            self.log_var.forward(g, p, state)?,
        ))
    }

    /// Auto-regressive decoding from `z: [batch, latent]`; one `[batch, F]` output per step.
    pub fn decode(&self, g: &mut Graph, p: &Bound, z: Var, steps: usize) -> Result<Vec<Var>> {
        if steps == 0 {
            return Err(Error::InvalidInput("decode needs at least one step".into()));
        }
        let rows = g.value(z).rows();
        let mut x = g.constant(Tensor::zeros(rows, self.config.features));
        let mut h = z;
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            h = self.dec.step(g, p, x, h)?;
            let logits = self.out.forward(g, p, h)?;
            let y = g.sigmoid(logits)?;
            out.push(y);
            x = y;
        }
        Ok(out)
    }
}

impl SequenceVae for RvaeModel {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn feature_dim(&self) -> usize {
        self.config.features
    }

    fn forward(
        &self,
        g: &mut Graph,
        p: &Bound,
        batch: &SeqBatch,
        latent: Latent<'_>,
    ) -> Result<VaeOutput> {
        if batch.features != self.config.features {
            return Err(Error::InvalidInput(format!(
                "batch has {} features, model expects {}",
                batch.features, self.config.features
            )));
        }
        let (mu, log_var) = self.encode(g, p, batch)?;
        let z = reparameterize(g, mu, log_var, latent)?;
        let ys = self.decode(g, p, z, batch.steps)?;
        let recon = g.concat_rows(&ys)?;
        let kl = gaussian_kl(g, mu, log_var)?;
        Ok(VaeOutput {
            recon,
            kl,
            mu,
            log_var,
        })
    }
}
