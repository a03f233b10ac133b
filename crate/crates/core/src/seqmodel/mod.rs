//! The goal-conditioned LSTM next-service model.

mod cell;
mod gradient;
mod model;
mod network;
mod params;
mod train;

pub use cell::{encode_path, glstm_step, CellState, GoalTerm, StepTrace};
pub use gradient::{instance_gradients, Gradients};
pub use model::{Model, FORMAT_VERSION};
pub use network::{
    attention_weights, context_vector, expected_instance_objective, forward, instance_distribution,
    instance_loss, predict_probabilities, scores, ForwardPass, IndexedInstance,
};
pub(crate) use network::path_distribution;
pub use params::{Gate, Gates, ModelParameters, ParamGroup};
pub use train::{train, train_indexed, train_observed, NegativeSampling, TrainConfig, TrainReport};
