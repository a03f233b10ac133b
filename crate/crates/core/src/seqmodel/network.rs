//! Attention pooling, context vectors, scoring and the negative-sampling objective.

use std::collections::BTreeSet;

use ndarray::{Array1, ArrayView1};

use super::cell::{check_dim, encode_indices, GoalTerm, StepTrace};
use super::params::ModelParameters;
use crate::error::{Error, Result};
use crate::math::{log_sigmoid, softmax, softplus};
use crate::pathgen::TrainingInstance;

/// A training instance resolved against a model vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexedInstance {
    pub context: Vec<usize>,
    pub target: usize,
    pub excluded: Vec<usize>,
    /// Never drawn as negatives. Always contains `excluded`.
    pub barred: Vec<usize>,
    pub goal: Array1<f64>,
}

impl IndexedInstance {
    pub fn resolve(params: &ModelParameters, instance: &TrainingInstance) -> Result<Self> {
        let vocab = &params.vocabulary;
        check_dim(params.dim, instance.goal.len())?;
        Ok(Self {
            context: instance
                .context
                .iter()
                .map(|s| vocab.require(s))
                .collect::<Result<_>>()?,
            target: vocab.require(&instance.target)?,
            excluded: instance
                .excluded
                .iter()
                .map(|s| vocab.require(s))
                .collect::<Result<_>>()?,
            barred: instance
                .excluded
                .iter()
                .chain(&instance.barred)
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .map(|s| vocab.require(s))
                .collect::<Result<_>>()?,
            goal: Array1::from(instance.goal.clone()),
        })
    }
}

/// μ(s_i) = softmax_i(A · h(s_i)).
pub fn attention_weights(params: &ModelParameters, hidden: &[Array1<f64>]) -> Vec<f64> {
    let scores: Vec<f64> = hidden.iter().map(|h| params.attention.dot(h)).collect();
    softmax(&scores)
}

/// Attention-pooled hidden outputs plus the mean embedding of the excluded services.
pub fn context_vector(
    params: &ModelParameters,
    hidden: &[Array1<f64>],
    excluded: &BTreeSet<String>,
) -> Result<Array1<f64>> {
    let excluded = excluded
        .iter()
        .map(|s| params.vocabulary.require(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(pool(params, hidden, &attention_weights(params, hidden), &excluded))
}

fn pool(
    params: &ModelParameters,
    hidden: &[Array1<f64>],
    weights: &[f64],
    excluded: &[usize],
) -> Array1<f64> {
    let mut v = Array1::zeros(params.dim);
    for (h, &mu) in hidden.iter().zip(weights) {
        v.scaled_add(mu, h);
    }
    v + excluded_mean(params, excluded)
}

fn excluded_mean(params: &ModelParameters, excluded: &[usize]) -> Array1<f64> {
    let mut mean = Array1::zeros(params.dim);
    if excluded.is_empty() {
        return mean;
    }
    for &k in excluded {
        mean += &params.service_embeddings.column(k);
    }
    mean / excluded.len() as f64
}

/// r(s_n) = W_F[n, :] · v for every service.
pub fn scores(params: &ModelParameters, context: ArrayView1<f64>) -> Array1<f64> {
    params.output_weights.dot(&context)
}

/// Softmax over all service scores.
pub fn predict_probabilities(params: &ModelParameters, context: ArrayView1<f64>) -> Vec<f64> {
    softmax(scores(params, context).as_slice().unwrap())
}

/// Everything the forward pass of one context computes.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub goal: GoalTerm,
    pub goal_contribution: Array1<f64>,
    pub steps: Vec<StepTrace>,
    pub attention: Vec<f64>,
    pub context: Array1<f64>,
}

impl ForwardPass {
    pub fn hidden(&self) -> Vec<Array1<f64>> {
        self.steps.iter().map(|s| s.hidden.clone()).collect()
    }
}

/// Forward pass over resolved service indices.
pub fn forward(
    params: &ModelParameters,
    context: &[usize],
    excluded: &[usize],
    goal: ArrayView1<f64>,
) -> Result<ForwardPass> {
    if context.is_empty() {
        return Err(Error::InvalidConfig("context path is empty".into()));
    }
    let goal = GoalTerm::compute(params, goal)?;
    let goal_contribution = goal.contribution();
    let steps = encode_indices(params, context, &goal_contribution);
    let hidden: Vec<Array1<f64>> = steps.iter().map(|s| s.hidden.clone()).collect();
    let attention = attention_weights(params, &hidden);
    let context = pool(params, &hidden, &attention, excluded);
    Ok(ForwardPass {
        goal,
        goal_contribution,
        steps,
        attention,
        context,
    })
}

/// Full next-service distribution for a context path.
pub(crate) fn path_distribution(
    params: &ModelParameters,
    context: &[usize],
    excluded: &[usize],
    goal: ArrayView1<f64>,
) -> Result<Vec<f64>> {
    let fp = forward(params, context, excluded, goal)?;
    Ok(predict_probabilities(params, fp.context.view()))
}

pub(crate) fn check_negatives(instance: &IndexedInstance, negatives: &[usize], n: usize) -> Result<()> {
    let mut seen = BTreeSet::new();
    for &k in negatives {
        if k >= n {
            return Err(Error::NegativeConstraint(format!("index {k} out of range")));
        }
        if k == instance.target {
            return Err(Error::NegativeConstraint("target used as a negative".into()));
        }
        if instance.excluded.contains(&k) || instance.barred.contains(&k) {
            return Err(Error::NegativeConstraint("excluded service used as a negative".into()));
        }
        if !seen.insert(k) {
            return Err(Error::NegativeConstraint("repeated negative".into()));
        }
    }
    Ok(())
}

/// `log σ(r_target) + Σ_k log(1 − σ(r_k))`, always ≤ 0.
pub(crate) fn objective(scores_target: f64, scores_negative: impl IntoIterator<Item = f64>) -> f64 {
    log_sigmoid(scores_target) - scores_negative.into_iter().map(softplus).sum::<f64>()
}

/// Negative-sampling log-likelihood of one instance.
pub fn instance_loss(params: &ModelParameters, instance: &IndexedInstance, negatives: &[usize]) -> Result<f64> {
    check_negatives(instance, negatives, params.num_services())?;
    let fp = forward(params, &instance.context, &instance.excluded, instance.goal.view())?;
    let r = |k: usize| params.output_weights.row(k).dot(&fp.context);
    Ok(objective(r(instance.target), negatives.iter().map(|&k| r(k))))
}

/// Next-service distribution under an instance's own context, excluded set and goal.
pub fn instance_distribution(params: &ModelParameters, instance: &IndexedInstance) -> Result<Vec<f64>> {
    path_distribution(params, &instance.context, &instance.excluded, instance.goal.view())
}

/// The instance objective averaged over every admissible draw of `k` uniform
/// negatives: `log σ(r_target) − k · mean softplus(r_n)` over eligible `n`.
/// Unlike a sampled loss this is a deterministic function of the parameters.
pub fn expected_instance_objective(params: &ModelParameters, instance: &IndexedInstance, k: usize) -> Result<f64> {
    let fp = forward(params, &instance.context, &instance.excluded, instance.goal.view())?;
    let r = scores(params, fp.context.view());
    let eligible: Vec<f64> = (0..params.num_services())
        .filter(|&n| n != instance.target && !instance.barred.contains(&n))
        .map(|n| softplus(r[n]))
        .collect();
    let penalty = if eligible.len() <= k {
        eligible.iter().sum()
    } else {
        k as f64 * eligible.iter().sum::<f64>() / eligible.len() as f64
    };
    Ok(log_sigmoid(r[instance.target]) - penalty)
}
