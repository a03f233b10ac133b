//! Analytic gradients of the negative-sampling objective, with backpropagation
//! through time for the recurrent parameters.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};

use super::network::{check_negatives, forward, IndexedInstance};
use super::params::{Gates, ModelParameters, ParamGroup};
use crate::error::Result;
use crate::math::{add_outer, sigmoid};

/// ∂L_i/∂θ. Service embeddings and output rows are sparse: only the columns
/// and rows the instance touches are present, every other entry is zero.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub service_embeddings: BTreeMap<usize, Array1<f64>>,
    pub input_weights: Gates<Array2<f64>>,
    pub recurrent_weights: Gates<Array2<f64>>,
    pub gate_biases: Gates<Array1<f64>>,
    pub goal_weights: Array2<f64>,
    pub goal_bias: Array1<f64>,
    pub transform_weights: Array2<f64>,
    pub transform_bias: Array1<f64>,
    pub attention: Array1<f64>,
    pub output_rows: BTreeMap<usize, Array1<f64>>,
}

impl Gradients {
    pub fn zeros(dim: usize) -> Self {
        let square = || Array2::zeros((dim, dim));
        let vector = || Array1::zeros(dim);
        Self {
            service_embeddings: BTreeMap::new(),
            input_weights: Gates::from_fn(square),
            recurrent_weights: Gates::from_fn(square),
            gate_biases: Gates::from_fn(vector),
            goal_weights: square(),
            goal_bias: vector(),
            transform_weights: square(),
            transform_bias: vector(),
            attention: vector(),
            output_rows: BTreeMap::new(),
        }
    }

    fn embedding_mut(&mut self, service: usize, dim: usize) -> &mut Array1<f64> {
        self.service_embeddings
            .entry(service)
            .or_insert_with(|| Array1::zeros(dim))
    }

    /// Dense copy of one group, laid out like [`ModelParameters::group`].
    pub fn dense(&self, group: ParamGroup, params: &ModelParameters) -> Vec<f64> {
        let (d, n) = (params.dim, params.num_services());
        match group {
            ParamGroup::ServiceEmbeddings => {
                let mut m = Array2::zeros((d, n));
                for (&k, col) in &self.service_embeddings {
                    m.column_mut(k).assign(col);
                }
                m.into_raw_vec_and_offset().0
            }
            ParamGroup::OutputWeights => {
                let mut m = Array2::zeros((n, d));
                for (&k, row) in &self.output_rows {
                    m.row_mut(k).assign(row);
                }
                m.into_raw_vec_and_offset().0
            }
            ParamGroup::InputWeights(g) => self.input_weights.as_array()[g as usize].iter().copied().collect(),
            ParamGroup::RecurrentWeights(g) => {
                self.recurrent_weights.as_array()[g as usize].iter().copied().collect()
            }
            ParamGroup::GateBias(g) => self.gate_biases.as_array()[g as usize].to_vec(),
            ParamGroup::GoalWeights => self.goal_weights.iter().copied().collect(),
            ParamGroup::GoalBias => self.goal_bias.to_vec(),
            ParamGroup::TransformWeights => self.transform_weights.iter().copied().collect(),
            ParamGroup::TransformBias => self.transform_bias.to_vec(),
            ParamGroup::Attention => self.attention.to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        let dense = self
            .input_weights
            .as_array()
            .into_iter()
            .chain(self.recurrent_weights.as_array())
            .chain([&self.goal_weights, &self.transform_weights])
            .all(|m| m.iter().all(|v| v.is_finite()));
        let vectors = self
            .gate_biases
            .as_array()
            .into_iter()
            .chain([&self.goal_bias, &self.transform_bias, &self.attention])
            .chain(self.service_embeddings.values())
            .chain(self.output_rows.values())
            .all(|v| v.iter().all(|x| x.is_finite()));
        dense && vectors
    }

    /// θ ← θ + η·∇ (gradient ascent).
    pub fn apply(&self, params: &mut ModelParameters, learning_rate: f64) {
        for (&k, col) in &self.service_embeddings {
            params.service_embeddings.column_mut(k).scaled_add(learning_rate, col);
        }
        for (&k, row) in &self.output_rows {
            params.output_weights.row_mut(k).scaled_add(learning_rate, row);
        }
        for (p, g) in params.input_weights.as_array_mut().into_iter().zip(self.input_weights.as_array()) {
            p.scaled_add(learning_rate, g);
        }
        for (p, g) in params
            .recurrent_weights
            .as_array_mut()
            .into_iter()
            .zip(self.recurrent_weights.as_array())
        {
            p.scaled_add(learning_rate, g);
        }
        for (p, g) in params.gate_biases.as_array_mut().into_iter().zip(self.gate_biases.as_array()) {
            p.scaled_add(learning_rate, g);
        }
        params.goal_weights.scaled_add(learning_rate, &self.goal_weights);
        params.goal_bias.scaled_add(learning_rate, &self.goal_bias);
        params.transform_weights.scaled_add(learning_rate, &self.transform_weights);
        params.transform_bias.scaled_add(learning_rate, &self.transform_bias);
        params.attention.scaled_add(learning_rate, &self.attention);
    }
}

/// Objective value and its gradient for one instance.
pub fn instance_gradients(
    params: &ModelParameters,
    instance: &IndexedInstance,
    negatives: &[usize],
) -> Result<(f64, Gradients)> {
    check_negatives(instance, negatives, params.num_services())?;
    let d = params.dim;
    let fp = forward(params, &instance.context, &instance.excluded, instance.goal.view())?;
    let v = &fp.context;
    let mut grads = Gradients::zeros(d);

    // Output layer: dL/dr = 1 − σ(r) for the target, −σ(r) for negatives.
    let mut loss = 0.0;
    let mut d_context = Array1::zeros(d);
    let labelled = std::iter::once((instance.target, true)).chain(negatives.iter().map(|&k| (k, false)));
    for (k, positive) in labelled {
        let r = params.output_weights.row(k).dot(v);
        let (value, d_score) = if positive {
            (crate::math::log_sigmoid(r), sigmoid(-r))
        } else {
            (-crate::math::softplus(r), -sigmoid(r))
        };
        loss += value;
        d_context.scaled_add(d_score, &params.output_weights.row(k));
        grads
            .output_rows
            .entry(k)
            .or_insert_with(|| Array1::zeros(d))
            .scaled_add(d_score, v);
    }

    // Excluded-service mean.
    if !instance.excluded.is_empty() {
        let share = 1.0 / instance.excluded.len() as f64;
        for &k in &instance.excluded {
            grads.embedding_mut(k, d).scaled_add(share, &d_context);
        }
    }

    // Attention pooling: v = Σ μ_t h_t with μ = softmax(A·h).
    let steps = &fp.steps;
    let mu = &fp.attention;
    let d_mu: Vec<f64> = steps.iter().map(|s| d_context.dot(&s.hidden)).collect();
    let mean_d_mu: f64 = mu.iter().zip(&d_mu).map(|(m, g)| m * g).sum();
    let mut d_hidden: Vec<Array1<f64>> = Vec::with_capacity(steps.len());
    for (t, s) in steps.iter().enumerate() {
        let d_score = mu[t] * (d_mu[t] - mean_d_mu);
        grads.attention.scaled_add(d_score, &s.hidden);
        let mut dh = &d_context * mu[t];
        dh.scaled_add(d_score, &params.attention);
        d_hidden.push(dh);
    }

    // Backpropagation through time.
    let mut d_goal_contribution = Array1::<f64>::zeros(d);
    let mut dh_next = Array1::<f64>::zeros(d);
    let mut dc_next = Array1::<f64>::zeros(d);
    let zeros = Array1::<f64>::zeros(d);
    for t in (0..steps.len()).rev() {
        let s = &steps[t];
        let (h_prev, c_prev) = if t == 0 {
            (&zeros, &zeros)
        } else {
            (&steps[t - 1].hidden, &steps[t - 1].cell)
        };
        let x = params.service_embeddings.column(instance.context[t]).to_owned();

        let dh = &d_hidden[t] + &dh_next;
        d_goal_contribution += &dh;

        let d_output = &dh * &s.cell_tanh;
        let dc = &dc_next + &(&dh * &s.output * &s.cell_tanh.mapv(|v| 1.0 - v * v));
        let d_forget = &dc * c_prev;
        let d_input = &dc * &s.candidate;
        let d_candidate = &dc * &s.input;
        dc_next = &dc * &s.forget;

        let pre = [
            &d_forget * &s.forget.mapv(|g| g * (1.0 - g)),
            &d_input * &s.input.mapv(|g| g * (1.0 - g)),
            &d_candidate * &s.candidate.mapv(|g| 1.0 - g * g),
            &d_output * &s.output.mapv(|g| g * (1.0 - g)),
        ];

        let mut dx = Array1::<f64>::zeros(d);
        dh_next = Array1::zeros(d);
        for (k, dpre) in pre.iter().enumerate() {
            add_outer(grads.input_weights.as_array_mut()[k], dpre, &x);
            add_outer(grads.recurrent_weights.as_array_mut()[k], dpre, h_prev);
            *grads.gate_biases.as_array_mut()[k] += dpre;
            dx += &params.input_weights.as_array()[k].t().dot(dpre);
            dh_next += &params.recurrent_weights.as_array()[k].t().dot(dpre);
        }
        *grads.embedding_mut(instance.context[t], d) += &dx;
    }

    // Goal gate and transform are shared by every step.
    let goal = &fp.goal;
    let d_gate_pre = &d_goal_contribution * &goal.transform * &goal.gate.mapv(|g| g * (1.0 - g));
    let d_transform_pre = &d_goal_contribution * &goal.gate * &goal.transform.mapv(|z| 1.0 - z * z);
    add_outer(&mut grads.goal_weights, &d_gate_pre, &instance.goal);
    grads.goal_bias += &d_gate_pre;
    add_outer(&mut grads.transform_weights, &d_transform_pre, &instance.goal);
    grads.transform_bias += &d_transform_pre;

    Ok((loss, grads))
}
