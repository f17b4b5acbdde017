use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rvae::Instance;

/// Prototype vectors visited in a fixed cyclic order by normal sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct Cycle {
    pub prototypes: Vec<Vec<f64>>,
    pub noise: f64,
}

impl Cycle {
    /// Prototypes whose features sit at 0.1 or 0.9 with equal odds.
    pub fn random(rng: &mut ChaCha8Rng, count: usize, features: usize, noise: f64) -> Self {
        let prototypes = (0..count)
            .map(|_| {
                (0..features)
                    .map(|_| if rng.random_bool(0.5) { 0.9 } else { 0.1 })
                    .collect()
            })
            .collect();
        Self { prototypes, noise }
    }

    /// Same cycle with every feature moved by its own offset.
    pub fn shifted(&self, offsets: &[f64]) -> Self {
        Self {
            prototypes: self
                .prototypes
                .iter()
                .map(|p| {
                    p.iter()
                        .zip(offsets)
                        .map(|(v, o)| (v + o).clamp(0.0, 1.0))
                        .collect()
                })
                .collect(),
            noise: self.noise,
        }
    }

    fn emit(&self, rng: &mut ChaCha8Rng, state: usize) -> Vec<f64> {
        let noise = Normal::new(0.0, self.noise).expect("valid noise");
        self.prototypes[state]
            .iter()
            .map(|v| (v + noise.sample(rng)).clamp(0.0, 1.0))
            .collect()
    }

    /// Cyclic walk from a uniformly drawn start.
    pub fn normal(&self, rng: &mut ChaCha8Rng, steps: usize) -> Instance {
        let k = self.prototypes.len();
        let start = rng.random_range(0..k);
        (0..steps)
            .map(|t| self.emit(rng, (start + t) % k))
            .collect()
    }

    /// Walk that never takes the cyclic successor. Each step draws uniformly
    /// from the other states, so the per-step marginal stays uniform over
    /// prototypes and only the order differs from normal.
    pub fn shuffled(&self, rng: &mut ChaCha8Rng, steps: usize) -> Instance {
        let k = self.prototypes.len();
        let mut state = rng.random_range(0..k);
        let mut out = Vec::with_capacity(steps);
        for t in 0..steps {
            if t > 0 {
                let successor = (state + 1) % k;
                let mut next = rng.random_range(0..k - 1);
                if next >= successor {
                    next += 1;
                }
                state = next;
            }
            out.push(self.emit(rng, state));
        }
        out
    }

    /// Walk that advances two states per step, toggling between a pair of
    /// prototypes. Every step is a normal prototype; only the order is off.
    pub fn toggling(&self, rng: &mut ChaCha8Rng, steps: usize) -> Instance {
        let k = self.prototypes.len();
        let start = rng.random_range(0..k);
        (0..steps)
            .map(|t| self.emit(rng, (start + 2 * t) % k))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrderTaskConfig {
    pub seed: u64,
    pub train: usize,
    pub test_normal: usize,
    pub test_anomalous: usize,
    pub steps: usize,
    pub features: usize,
    pub prototypes: usize,
    pub noise: f64,
}

impl Default for OrderTaskConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            train: 400,
            test_normal: 200,
            test_anomalous: 200,
            steps: 8,
            features: 40,
            prototypes: 4,
            noise: 0.05,
        }
    }
}

/// Normal sequences follow the cycle; anomalies visit the same prototypes
/// out of order.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderTask {
    pub train: Vec<Instance>,
    pub test_normal: Vec<Instance>,
    pub test_anomalous: Vec<Instance>,
}

pub fn order_task(cfg: &OrderTaskConfig) -> OrderTask {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cycle = Cycle::random(&mut rng, cfg.prototypes, cfg.features, cfg.noise);
    OrderTask {
        train: (0..cfg.train)
            .map(|_| cycle.normal(&mut rng, cfg.steps))
            .collect(),
        test_normal: (0..cfg.test_normal)
            .map(|_| cycle.normal(&mut rng, cfg.steps))
            .collect(),
        test_anomalous: (0..cfg.test_anomalous)
            .map(|_| cycle.shuffled(&mut rng, cfg.steps))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferTaskConfig {
    pub seed: u64,
    pub steps: usize,
    pub features: usize,
    pub prototypes: usize,
    pub noise: f64,
    /// Largest per-feature offset between the source and target cycles.
    pub max_shift: f64,
    pub source_normal: usize,
    pub source_anomalous: usize,
    pub target_normal: usize,
    /// Anomalies mixed into the unlabeled target set, as a fraction of it.
    pub target_contamination: f64,
    pub calibration_normal: usize,
    pub test_normal: usize,
    pub test_anomalous: usize,
}

impl Default for TransferTaskConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 8,
            features: 40,
            prototypes: 4,
            noise: 0.05,
            max_shift: 0.2,
            source_normal: 400,
            source_anomalous: 40,
            target_normal: 40,
            target_contamination: 0.05,
            calibration_normal: 200,
            test_normal: 200,
            test_anomalous: 100,
        }
    }
}

/// Two domains that share the cycle order and the anomaly mechanism
/// (toggling) but differ in feature marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferTask {
    pub source_normal: Vec<Instance>,
    pub source_anomalous: Vec<Instance>,
    pub target_normal: Vec<Instance>,
    /// `target_normal` plus anomalies, shuffled, without labels.
    pub target_unlabeled: Vec<Instance>,
    pub calibration_normal: Vec<Instance>,
    pub test_normal: Vec<Instance>,
    pub test_anomalous: Vec<Instance>,
}

pub fn transfer_task(cfg: &TransferTaskConfig) -> TransferTask {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let source = Cycle::random(&mut rng, cfg.prototypes, cfg.features, cfg.noise);
    let offsets: Vec<f64> = (0..cfg.features)
        .map(|_| rng.random_range(-cfg.max_shift..cfg.max_shift))
        .collect();
    let target = source.shifted(&offsets);
    let steps = cfg.steps;

    let source_normal = (0..cfg.source_normal)
        .map(|_| source.normal(&mut rng, steps))
        .collect();
    let source_anomalous = (0..cfg.source_anomalous)
        .map(|_| source.toggling(&mut rng, steps))
        .collect();
    let target_normal: Vec<Instance> = (0..cfg.target_normal)
        .map(|_| target.normal(&mut rng, steps))
        .collect();
    let contamination = cfg.target_contamination.clamp(0.0, 0.99);
    let extra = (cfg.target_normal as f64 * contamination / (1.0 - contamination)).round() as usize;
    let mut target_unlabeled = target_normal.clone();
    target_unlabeled.extend((0..extra).map(|_| target.toggling(&mut rng, steps)));
    target_unlabeled.shuffle(&mut rng);
    TransferTask {
        source_normal,
        source_anomalous,
        target_normal,
        target_unlabeled,
        calibration_normal: (0..cfg.calibration_normal)
            .map(|_| target.normal(&mut rng, steps))
            .collect(),
        test_normal: (0..cfg.test_normal)
            .map(|_| target.normal(&mut rng, steps))
            .collect(),
        test_anomalous: (0..cfg.test_anomalous)
            .map(|_| target.toggling(&mut rng, steps))
            .collect(),
    }
}
