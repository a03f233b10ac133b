//! The goal-conditioned LSTM block.
//!
//! ```text
//! f = σ(W_xf x + W_hf h' + b_f)      i = σ(W_xi x + W_hi h' + b_i)
//! l = tanh(W_xl x + W_hl h' + b_l)   o = σ(W_xo x + W_ho h' + b_o)
//! c = f ⊙ c' + i ⊙ l
//! g = σ(W_g r + b_g)                 z = tanh(W_z r + b_z)
//! h = o ⊙ tanh(c) + g ⊙ z
//! ```
//!
//! `g` and `z` depend only on the goal vector `r`, so they are computed once
//! per sequence.

use ndarray::{Array1, ArrayView1};

use super::params::ModelParameters;
use crate::error::{Error, Result};
use crate::math::sigmoid;

#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

impl CellState {
    pub fn zeros(dim: usize) -> Self {
        Self {
            h: Array1::zeros(dim),
            c: Array1::zeros(dim),
        }
    }
}

/// Goal gate output `g` and goal transform `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalTerm {
    pub gate: Array1<f64>,
    pub transform: Array1<f64>,
}

impl GoalTerm {
    pub fn compute(params: &ModelParameters, goal: ArrayView1<f64>) -> Result<Self> {
        check_dim(params.dim, goal.len())?;
        let gate = (params.goal_weights.dot(&goal) + &params.goal_bias).mapv(sigmoid);
        let transform = (params.transform_weights.dot(&goal) + &params.transform_bias).mapv(f64::tanh);
        Ok(Self { gate, transform })
    }

    /// `g ⊙ z`, the additive goal contribution to every hidden output.
    pub fn contribution(&self) -> Array1<f64> {
        &self.gate * &self.transform
    }
}

/// Every intermediate of one step, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub forget: Array1<f64>,
    pub input: Array1<f64>,
    pub candidate: Array1<f64>,
    pub output: Array1<f64>,
    pub cell: Array1<f64>,
    pub cell_tanh: Array1<f64>,
    pub hidden: Array1<f64>,
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// One step with a precomputed goal contribution `g ⊙ z`.
pub(crate) fn step_traced(
    params: &ModelParameters,
    x: ArrayView1<f64>,
    prev: &CellState,
    goal_contribution: &Array1<f64>,
) -> StepTrace {
    let pre = |k: usize| {
        params.input_weights.as_array()[k].dot(&x)
            + params.recurrent_weights.as_array()[k].dot(&prev.h)
            + params.gate_biases.as_array()[k]
    };
    let forget = pre(0).mapv(sigmoid);
    let input = pre(1).mapv(sigmoid);
    let candidate = pre(2).mapv(f64::tanh);
    let output = pre(3).mapv(sigmoid);
    let cell = &forget * &prev.c + &input * &candidate;
    let cell_tanh = cell.mapv(f64::tanh);
    let hidden = &output * &cell_tanh + goal_contribution;
    StepTrace {
        forget,
        input,
        candidate,
        output,
        cell,
        cell_tanh,
        hidden,
    }
}

/// Applies one gLSTM step to input embedding `x`.
pub fn glstm_step(
    params: &ModelParameters,
    x: ArrayView1<f64>,
    prev: &CellState,
    goal: ArrayView1<f64>,
) -> Result<CellState> {
    check_dim(params.dim, x.len())?;
    check_dim(params.dim, prev.h.len())?;
    check_dim(params.dim, prev.c.len())?;
    let goal = GoalTerm::compute(params, goal)?;
    let t = step_traced(params, x, prev, &goal.contribution());
    Ok(CellState {
        h: t.hidden,
        c: t.cell,
    })
}

/// Runs the cell left to right from the zero state over service indices.
pub(crate) fn encode_indices(
    params: &ModelParameters,
    services: &[usize],
    goal_contribution: &Array1<f64>,
) -> Vec<StepTrace> {
    let mut state = CellState::zeros(params.dim);
    let mut traces = Vec::with_capacity(services.len());
    for &s in services {
        let t = step_traced(params, params.service_embeddings.column(s), &state, goal_contribution);
        state = CellState {
            h: t.hidden.clone(),
            c: t.cell.clone(),
        };
        traces.push(t);
    }
    traces
}

/// Hidden outputs `h(s_t)` for every service of `path`.
pub fn encode_path(
    params: &ModelParameters,
    path: &[String],
    goal: ArrayView1<f64>,
) -> Result<Vec<Array1<f64>>> {
    if path.is_empty() {
        return Err(Error::InvalidConfig("cannot encode an empty path".into()));
    }
    let idx = path
        .iter()
        .map(|s| params.vocabulary.require(s))
        .collect::<Result<Vec<_>>>()?;
    let goal = GoalTerm::compute(params, goal)?;
    Ok(encode_indices(params, &idx, &goal.contribution())
        .into_iter()
        .map(|t| t.hidden)
        .collect())
}
