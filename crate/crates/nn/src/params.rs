use std::ops::Index;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{Gradients, Graph, Var};
use crate::{NnError, Result, Tensor};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of named trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    /// Parameter with entries drawn uniformly from `[-bound, bound]`.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        bound: f64,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        self.add(
            name,
            Tensor::from_rows(rows, cols, data).expect("uniform init"),
        )
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Copies every parameter into `graph` as a trainable leaf.
    pub fn bind(&self, graph: &mut Graph) -> Bound {
        Bound {
            vars: self
                .tensors
                .iter()
                .map(|t| graph.param(t.clone()))
                .collect(),
        }
    }

    /// Per-parameter gradients in store order; parameters the loss does not
    /// touch get zeros.
    pub fn collect_grads(&self, bound: &Bound, grads: &mut Gradients) -> Vec<Tensor> {
        self.tensors
            .iter()
            .zip(&bound.vars)
            .map(|(t, &v)| {
                grads
                    .take(v)
                    .unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols()))
            })
            .collect()
    }

    /// Replaces values by name, checking that names and shapes line up.
    pub fn load_from(&mut self, named: &[(String, Tensor)]) -> Result<()> {
        for (name, tensor) in named {
            let id = self
                .find(name)
                .ok_or_else(|| NnError::UnknownParam(name.clone()))?;
            let slot = &mut self.tensors[id.0];
            if slot.shape() != tensor.shape() {
                return Err(NnError::Shape(format!(
                    "parameter {name}: stored {:?}, loaded {:?}",
                    slot.shape(),
                    tensor.shape()
                )));
            }
            *slot = tensor.clone();
        }
        Ok(())
    }

    pub fn to_named(&self) -> Vec<(String, Tensor)> {
        self.names
            .iter()
            .cloned()
            .zip(self.tensors.iter().cloned())
            .collect()
    }
}

/// Graph handles of a [`ParamStore`] bound into one [`Graph`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Index<ParamId> for Bound {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.vars[id.0]
    }
}

impl Bound {
    /// Wraps leaves that are already in a graph, in store order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}
