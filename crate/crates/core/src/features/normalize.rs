use serde::{Deserialize, Serialize};

use super::aggregate::AggFlow;
use crate::{Error, Result};

/// Per-feature min and max from the fitting split. The default value is
/// unfitted and refuses to apply.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizerState {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizerState {
    pub fn is_fitted(&self) -> bool {
        !self.min.is_empty()
    }

    pub fn width(&self) -> usize {
        self.min.len()
    }

    /// Min-max scaling of one vector, clamped to [0, 1]. Constant features map to 0.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !self.is_fitted() {
            return Err(Error::NotFitted);
        }
        if x.len() != self.width() {
            return Err(Error::InvalidInput(format!(
                "feature width {}, normalizer fitted on {}",
                x.len(),
                self.width()
            )));
        }
        Ok(x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| {
                let span = hi - lo;
                if span > 0.0 {
                    ((v - lo) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect())
    }
}

pub fn fit_normalizer(flows: &[AggFlow]) -> Result<NormalizerState> {
    let first = flows
        .first()
        .ok_or_else(|| Error::EmptyInput("cannot fit a normalizer on zero rows".into()))?;
    let width = first.features.len();
    let mut min = vec![f64::INFINITY; width];
    let mut max = vec![f64::NEG_INFINITY; width];
    for f in flows {
        if f.features.len() != width {
            return Err(Error::InvalidInput("inconsistent feature width".into()));
        }
        for (j, &v) in f.features.iter().enumerate() {
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
    }
    Ok(NormalizerState { min, max })
}

pub fn apply_normalizer(state: &NormalizerState, flows: &[AggFlow]) -> Result<Vec<AggFlow>> {
    flows
        .iter()
        .map(|f| {
            Ok(AggFlow {
                features: state.transform(&f.features)?,
                ..f.clone()
            })
        })
        .collect()
}
