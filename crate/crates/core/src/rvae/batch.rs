use flowvae_nn::Tensor;

use crate::{Error, Result};

/// One training or scoring instance: a time-ordered list of feature vectors.
pub type Instance = Vec<Vec<f64>>;

/// A padded, time-major minibatch of variable-length sequences.
///
/// Row `t * batch + b` of the stacked tensors belongs to timestep `t` of
/// sequence `b`. `select` has weight `1 / len_b` at the valid positions of
/// sequence `b` and zero elsewhere, so `select · column` gives per-sequence
/// means and padded rows contribute nothing.
#[derive(Debug, Clone)]
pub struct SeqBatch {
    pub steps: usize,
    pub batch: usize,
    pub features: usize,
    pub lens: Vec<usize>,
    /// Per timestep, `[batch, features]`, zero at padded positions.
    pub inputs: Vec<Tensor>,
    /// Per timestep, `[batch, 1]` validity.
    pub masks: Vec<Tensor>,
    /// `[steps * batch, features]`.
    pub targets: Tensor,
    /// `[batch, steps * batch]`.
    pub select: Tensor,
}

impl SeqBatch {
    pub fn new<S: AsRef<[Vec<f64>]>>(seqs: &[S]) -> Result<Self> {
        let batch = seqs.len();
        if batch == 0 {
            return Err(Error::EmptyInput("empty minibatch".into()));
        }
        let lens: Vec<usize> = seqs.iter().map(|s| s.as_ref().len()).collect();
        if let Some(i) = lens.iter().position(|&l| l == 0) {
            return Err(Error::EmptyInput(format!("sequence {i} has no timesteps")));
        }
        let features = seqs[0].as_ref()[0].len();
        if features == 0 {
            return Err(Error::InvalidInput("zero-width feature vectors".into()));
        }
        let steps = *lens.iter().max().expect("non-empty");
        let mut inputs = Vec::with_capacity(steps);
        let mut masks = Vec::with_capacity(steps);
        let mut targets = Vec::with_capacity(steps * batch * features);
        for t in 0..steps {
            let mut x = Vec::with_capacity(batch * features);
            let mut m = Vec::with_capacity(batch);
            for s in seqs {
                match s.as_ref().get(t) {
                    Some(row) => {
                        if row.len() != features {
                            return Err(Error::InvalidInput(format!(
                                "feature width {} differs from {features}",
                                row.len()
                            )));
                        }
                        if row.iter().any(|v| !v.is_finite()) {
                            return Err(Error::InvalidInput("non-finite feature value".into()));
                        }
                        x.extend_from_slice(row);
                        m.push(1.0);
                    }
                    None => {
                        x.extend(std::iter::repeat_n(0.0, features));
                        m.push(0.0);
                    }
                }
            }
            targets.extend_from_slice(&x);
            inputs.push(Tensor::from_rows(batch, features, x)?);
            masks.push(Tensor::from_rows(batch, 1, m)?);
        }
        let mut select = vec![0.0; batch * steps * batch];
        for (b, &len) in lens.iter().enumerate() {
            for t in 0..len {
                select[b * steps * batch + t * batch + b] = 1.0 / len as f64;
            }
        }
        Ok(Self {
            steps,
            batch,
            features,
            inputs,
            masks,
            targets: Tensor::from_rows(steps * batch, features, targets)?,
            select: Tensor::from_rows(batch, steps * batch, select)?,
            lens,
        })
    }

    /// Whether every sequence is valid at step `t`.
    pub fn full_at(&self, t: usize) -> bool {
        self.lens.iter().all(|&l| l > t)
    }

    /// Stacked row index of (timestep, sequence).
    pub fn row(&self, t: usize, b: usize) -> usize {
        t * self.batch + b
    }
}
