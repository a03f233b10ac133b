//! Offline parameter learning: per-instance stochastic gradient ascent on the
//! negative-sampling objective.

use std::collections::HashSet;

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gradient::instance_gradients;
use super::network::IndexedInstance;
use super::params::ModelParameters;
use crate::error::{Error, Result};
use crate::goalvec::GoalEmbedderConfig;
use crate::pathgen::{Dedup, Strategy, TrainingInstance};
use crate::vocab::ServiceVocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativeSampling {
    /// Uniform over eligible services.
    #[default]
    Uniform,
    /// Proportional to (1 + corpus frequency)^0.75.
    Frequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub dim: usize,
    pub max_epochs: usize,
    pub negatives: usize,
    /// Training stops once the relative change of the mean epoch objective
    /// drops below this value.
    pub tolerance: f64,
    pub seed: u64,
    pub negative_sampling: NegativeSampling,
    pub strategy: Strategy,
    pub dedup: Dedup,
    pub goal: GoalEmbedderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            dim: 128,
            max_epochs: 20,
            negatives: 5,
            tolerance: 1e-4,
            seed: 42,
            negative_sampling: NegativeSampling::Uniform,
            strategy: Strategy::Intra,
            dedup: Dedup::Keep,
            goal: GoalEmbedderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dimension must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.negatives == 0 {
            return Err(Error::InvalidConfig("negatives must be at least 1".into()));
        }
        if self.tolerance < 0.0 || self.tolerance.is_nan() {
            return Err(Error::InvalidConfig("tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean instance objective of every completed epoch.
    pub epoch_objectives: Vec<f64>,
    pub converged: bool,
    pub instances: usize,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.epoch_objectives.len()
    }
}

struct NegativeSampler {
    n: usize,
    k: usize,
    weights: Option<Vec<f64>>,
}

impl NegativeSampler {
    fn new(n: usize, config: &TrainConfig, instances: &[IndexedInstance]) -> Self {
        let weights = match config.negative_sampling {
            NegativeSampling::Uniform => None,
            NegativeSampling::Frequency => {
                let mut counts = vec![0u64; n];
                for inst in instances {
                    for &s in inst.context.iter().chain([&inst.target]) {
                        counts[s] += 1;
                    }
                }
                Some(counts.iter().map(|&c| (1.0 + c as f64).powf(0.75)).collect())
            }
        };
        Self {
            n,
            k: config.negatives,
            weights,
        }
    }

    /// Up to `k` distinct services outside the target and the barred set.
    fn sample(&self, inst: &IndexedInstance, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let forbidden: HashSet<usize> = inst
            .barred
            .iter()
            .chain(&inst.excluded)
            .chain([&inst.target])
            .copied()
            .collect();
        let eligible = self.n - forbidden.len();
        if eligible <= self.k {
            return (0..self.n).filter(|s| !forbidden.contains(s)).collect();
        }
        match &self.weights {
            None => {
                let dist = Uniform::new(0, self.n);
                let mut picked = Vec::with_capacity(self.k);
                while picked.len() < self.k {
                    let s = dist.sample(rng);
                    if !forbidden.contains(&s) && !picked.contains(&s) {
                        picked.push(s);
                    }
                }
                picked
            }
            Some(weights) => {
                let pool: Vec<usize> = (0..self.n).filter(|s| !forbidden.contains(s)).collect();
                rand::seq::index::sample_weighted(rng, pool.len(), |i| weights[pool[i]], self.k)
                    .expect("weights are positive and finite")
                    .into_iter()
                    .map(|i| pool[i])
                    .collect()
            }
        }
    }
}

/// Learns parameters from scratch. Deterministic for a fixed config.
pub fn train(
    instances: &[TrainingInstance],
    vocabulary: ServiceVocabulary,
    config: &TrainConfig,
) -> Result<(ModelParameters, TrainReport)> {
    config.validate()?;
    if instances.is_empty() {
        return Err(Error::EmptyCorpus("no training instances".into()));
    }
    let params = ModelParameters::random(vocabulary, config.dim, config.seed);
    let indexed = instances
        .iter()
        .map(|i| IndexedInstance::resolve(&params, i))
        .collect::<Result<Vec<_>>>()?;
    train_indexed(params, &indexed, config)
}

/// Continues training `params` on already resolved instances.
pub fn train_indexed(
    params: ModelParameters,
    instances: &[IndexedInstance],
    config: &TrainConfig,
) -> Result<(ModelParameters, TrainReport)> {
    train_observed(params, instances, config, |_, _| {})
}

/// [`train_indexed`] calling `observe(epoch, params)` after every completed epoch.
pub fn train_observed(
    mut params: ModelParameters,
    instances: &[IndexedInstance],
    config: &TrainConfig,
    mut observe: impl FnMut(usize, &ModelParameters),
) -> Result<(ModelParameters, TrainReport)> {
    config.validate()?;
    if instances.is_empty() {
        return Err(Error::EmptyCorpus("no training instances".into()));
    }
    let sampler = NegativeSampler::new(params.num_services(), config, instances);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut report = TrainReport {
        epoch_objectives: Vec::new(),
        converged: false,
        instances: instances.len(),
    };

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let negatives = sampler.sample(&instances[i], &mut rng);
            let (loss, grads) = instance_gradients(&params, &instances[i], &negatives)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFinite { epoch, instance: i });
            }
            grads.apply(&mut params, config.learning_rate);
            total += loss;
        }
        if !params.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                instance: *order.last().unwrap(),
            });
        }
        let mean = total / instances.len() as f64;
        log::info!("epoch {}: mean objective {mean:.6}", epoch + 1);
        let previous = report.epoch_objectives.last().copied();
        report.epoch_objectives.push(mean);
        observe(epoch, &params);
        if let Some(prev) = previous {
            let change = (mean - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
            if change < config.tolerance {
                report.converged = true;
                break;
            }
        }
    }
    Ok((params, report))
}
