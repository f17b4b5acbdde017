use flowvae_nn::{Bound, Graph, Linear, ParamStore, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::SeqBatch;
use super::model::{gaussian_kl, reparameterize, Latent, SequenceVae, VaeOutput};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpVaeConfig {
    pub features: usize,
    /// Encoder widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub latent: usize,
}

impl MlpVaeConfig {
    /// The reference layout: 512, 512, 1024 hidden units and 100 latents.
    pub fn reference(features: usize) -> Self {
        Self {
            features,
            hidden: vec![512, 512, 1024],
            latent: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.features == 0 || self.latent == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "model sizes must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Feed-forward VAE that scores each timestep on its own, ignoring order.
#[derive(Debug, Clone)]
pub struct MlpVaeModel {
    pub config: MlpVaeConfig,
    params: ParamStore,
    encoder: Vec<Linear>,
    mu: Linear,
    log_var: Linear,
    decoder: Vec<Linear>,
    out: Linear,
}

impl MlpVaeModel {
    pub fn new(config: MlpVaeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let mut encoder = Vec::new();
        let mut width = config.features;
        for (i, &h) in config.hidden.iter().enumerate() {
            encoder.push(Linear::new(&mut p, &format!("enc.{i}"), width, h, &mut rng));
            width = h;
        }
        let mu = Linear::new(&mut p, "mu", width, config.latent, &mut rng);
        let log_var = Linear::new(&mut p, "log_var", width, config.latent, &mut rng);
        let mut decoder = Vec::new();
        let mut width = config.latent;
        for (i, &h) in config.hidden.iter().rev().enumerate() {
            decoder.push(Linear::new(&mut p, &format!("dec.{i}"), width, h, &mut rng));
            width = h;
        }
        let out = Linear::new(&mut p, "out", width, config.features, &mut rng);
        Ok(Self {
            config,
            params: p,
            encoder,
            mu,
            log_var,
            decoder,
            out,
        })
    }

    fn stack(layers: &[Linear], g: &mut Graph, p: &Bound, mut x: Var) -> Result<Var> {
        for l in layers {
            let a = l.forward(g, p, x)?;
            x = g.relu(a)?;
        }
        Ok(x)
    }
}

impl SequenceVae for MlpVaeModel {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn feature_dim(&self) -> usize {
        self.config.features
    }

    /// Every stacked row is its own VAE sample; the per-instance KL is the
    /// mean over the instance's valid rows.
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
        let x = g.constant(batch.targets.clone());
        let h = Self::stack(&self.encoder, g, p, x)?;
        let mu = self.mu.forward(g, p, h)?;
        let log_var = self.log_var.forward(g, p, h)?;
        let z = reparameterize(g, mu, log_var, latent)?;
        let d = Self::stack(&self.decoder, g, p, z)?;
        let logits = self.out.forward(g, p, d)?;
        let recon = g.sigmoid(logits)?;
        let kl_rows = gaussian_kl(g, mu, log_var)?;
        let select = g.constant(batch.select.clone());
        let kl = g.matmul(select, kl_rows)?;
        Ok(VaeOutput {
            recon,
            kl,
            mu,
            log_var,
        })
    }
}
