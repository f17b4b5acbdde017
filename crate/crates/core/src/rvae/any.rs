use std::io::{Read, Write};

use flowvae_nn::{Adam, Bound, Checkpoint, Graph, ParamStore, Tensor};
use serde::{Deserialize, Serialize};

use super::batch::SeqBatch;
use super::mlp::{MlpVaeConfig, MlpVaeModel};
use super::model::{Latent, RvaeConfig, RvaeModel, SequenceVae, VaeOutput};
use crate::{Error, Result};

/// Architecture description stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Rvae(RvaeConfig),
    MlpVae(MlpVaeConfig),
}

impl ModelSpec {
    pub fn features(&self) -> usize {
        match self {
            ModelSpec::Rvae(c) => c.features,
            ModelSpec::MlpVae(c) => c.features,
        }
    }
}

#[derive(Debug, Clone)]
pub enum AnyModel {
    Rvae(RvaeModel),
    MlpVae(MlpVaeModel),
}

impl AnyModel {
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        Ok(match spec {
            ModelSpec::Rvae(c) => AnyModel::Rvae(RvaeModel::new(c, seed)?),
            ModelSpec::MlpVae(c) => AnyModel::MlpVae(MlpVaeModel::new(c, seed)?),
        })
    }

    pub fn spec(&self) -> ModelSpec {
        match self {
            AnyModel::Rvae(m) => ModelSpec::Rvae(m.config.clone()),
            AnyModel::MlpVae(m) => ModelSpec::MlpVae(m.config.clone()),
        }
    }

    fn inner(&self) -> &dyn SequenceVae {
        match self {
            AnyModel::Rvae(m) => m,
            AnyModel::MlpVae(m) => m,
        }
    }
}

impl SequenceVae for AnyModel {
    fn params(&self) -> &ParamStore {
        self.inner().params()
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        match self {
            AnyModel::Rvae(m) => m.params_mut(),
            AnyModel::MlpVae(m) => m.params_mut(),
        }
    }

    fn feature_dim(&self) -> usize {
        self.inner().feature_dim()
    }

    fn forward(
        &self,
        g: &mut Graph,
        p: &Bound,
        batch: &SeqBatch,
        latent: Latent<'_>,
    ) -> Result<VaeOutput> {
        self.inner().forward(g, p, batch, latent)
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    model: ModelSpec,
    adam_step: Option<u64>,
    #[serde(default)]
    extra: serde_json::Value,
}

const M_PREFIX: &str = "adam.m/";
const V_PREFIX: &str = "adam.v/";

/// Parameters, optional optimizer moments, and caller metadata.
pub fn save_checkpoint(
    w: &mut impl Write,
    model: &AnyModel,
    adam: Option<&Adam>,
    extra: serde_json::Value,
) -> Result<()> {
    let mut tensors = model.params().to_named();
    if let Some(adam) = adam {
        let (m, v) = adam.moments();
        for ((name, _), (m, v)) in model.params().iter().zip(m.iter().zip(v)) {
            tensors.push((format!("{M_PREFIX}{name}"), m.clone()));
            tensors.push((format!("{V_PREFIX}{name}"), v.clone()));
        }
    }
    let meta = Meta {
        model: model.spec(),
        adam_step: adam.map(Adam::steps_taken),
        extra,
    };
    let ckpt = Checkpoint {
        meta: serde_json::to_string(&meta)?,
        tensors,
    };
    Ok(ckpt.write_to(w)?)
}

/// Optimizer state recovered from a checkpoint.
#[derive(Debug, Clone)]
pub struct AdamSnapshot {
    pub step: u64,
    pub first: Vec<Tensor>,
    pub second: Vec<Tensor>,
}

pub struct Loaded {
    pub model: AnyModel,
    pub adam: Option<AdamSnapshot>,
    pub extra: serde_json::Value,
}

pub fn load_checkpoint(r: &mut impl Read) -> Result<Loaded> {
    let ckpt = Checkpoint::read_from(r)?;
    let meta: Meta = serde_json::from_str(&ckpt.meta)?;
    let mut model = AnyModel::new(meta.model, 0)?;
    let params: Vec<(String, Tensor)> = ckpt
        .tensors
        .iter()
        .filter(|(n, _)| !n.starts_with(M_PREFIX) && !n.starts_with(V_PREFIX))
        .cloned()
        .collect();
    if params.len() != model.params().len() {
        return Err(Error::Format(format!(
            "checkpoint has {} parameters, model needs {}",
            params.len(),
            model.params().len()
        )));
    }
    model.params_mut().load_from(&params)?;
    let adam = match meta.adam_step {
        None => None,
        Some(step) => {
            let mut first = Vec::new();
            let mut second = Vec::new();
            for (name, _) in model.params().iter() {
                let get = |prefix: &str| {
                    ckpt.get(&format!("{prefix}{name}"))
                        .cloned()
                        .ok_or_else(|| {
                            Error::Format(format!("missing optimizer moment for {name}"))
                        })
                };
                first.push(get(M_PREFIX)?);
                second.push(get(V_PREFIX)?);
            }
            Some(AdamSnapshot {
                step,
                first,
                second,
            })
        }
    };
    Ok(Loaded {
        model,
        adam,
        extra: meta.extra,
    })
}
