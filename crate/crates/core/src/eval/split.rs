use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Indices of one fold: `validation` is the held-out part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Seeded shuffle of `0..n` cut into `k` folds whose sizes differ by at most one.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "k must be at least 2, got {k}"
        )));
    }
    if n < k {
        return Err(Error::InvalidInput(format!(
            "{n} items cannot form {k} folds"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let end = start + base + usize::from(f < extra);
        let mut validation = idx[start..end].to_vec();
        let mut train: Vec<usize> = idx[..start].iter().chain(&idx[end..]).copied().collect();
        validation.sort_unstable();
        train.sort_unstable();
        folds.push(Fold { train, validation });
        start = end;
    }
    Ok(folds)
}

/// Scenario ids assigned to the training and test sides.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSplit {
    pub train: BTreeSet<u32>,
    pub test: BTreeSet<u32>,
    /// Reject records whose scenario is missing or in neither set; otherwise drop them.
    pub strict: bool,
}

impl Default for ScenarioSplit {
    fn default() -> Self {
        Self {
            train: [3, 4, 5, 7, 10, 11, 12, 13].into(),
            test: [1, 2, 6, 8, 9].into(),
            strict: true,
        }
    }
}

impl ScenarioSplit {
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.train.intersection(&self.test).next() {
            return Err(Error::InvalidConfig(format!(
                "scenario {s} is in both train and test"
            )));
        }
        Ok(())
    }

    /// Partitions `items` into (train, test) by the scenario `tag` reports.
    pub fn split<T>(
        &self,
        items: Vec<T>,
        tag: impl Fn(&T) -> Option<u32>,
    ) -> Result<(Vec<T>, Vec<T>)> {
        self.validate()?;
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for item in items {
            match tag(&item) {
                Some(s) if self.train.contains(&s) => train.push(item),
                Some(s) if self.test.contains(&s) => test.push(item),
                other if self.strict => return Err(Error::UnknownScenario(other)),
                _ => {}
            }
        }
        Ok((train, test))
    }
}
