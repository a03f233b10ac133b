use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math::nested;
use crate::vocab::ServiceVocabulary;

/// One value per LSTM gate: forget, input, candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct Gates<T> {
    pub forget: T,
    pub input: T,
    pub candidate: T,
    pub output: T,
}

impl<T> Gates<T> {
    pub fn from_fn(mut f: impl FnMut() -> T) -> Self {
        Self {
            forget: f(),
            input: f(),
            candidate: f(),
            output: f(),
        }
    }

    pub fn as_array(&self) -> [&T; 4] {
        [&self.forget, &self.input, &self.candidate, &self.output]
    }

    pub fn as_array_mut(&mut self) -> [&mut T; 4] {
        [
            &mut self.forget,
            &mut self.input,
            &mut self.candidate,
            &mut self.output,
        ]
    }
}

/// The full trainable parameter set of the goal-conditioned LSTM recommender.
///
/// Column `i` of `service_embeddings` and row `i` of `output_weights` belong to
/// `vocabulary.service(i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub dim: usize,
    pub vocabulary: ServiceVocabulary,
    /// d × |S|
    #[serde(with = "nested")]
    pub service_embeddings: Array2<f64>,
    #[serde(with = "gates_matrix")]
    pub input_weights: Gates<Array2<f64>>,
    #[serde(with = "gates_matrix")]
    pub recurrent_weights: Gates<Array2<f64>>,
    #[serde(with = "gates_vector")]
    pub gate_biases: Gates<Array1<f64>>,
    /// W_g, applied to the goal vector inside the goal gate.
    #[serde(with = "nested")]
    pub goal_weights: Array2<f64>,
    #[serde(with = "nested::vector")]
    pub goal_bias: Array1<f64>,
    /// W_z, the goal transform.
    #[serde(with = "nested")]
    pub transform_weights: Array2<f64>,
    #[serde(with = "nested::vector")]
    pub transform_bias: Array1<f64>,
    #[serde(with = "nested::vector")]
    pub attention: Array1<f64>,
    /// |S| × d
    #[serde(with = "nested")]
    pub output_weights: Array2<f64>,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit);
    Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
}

impl ModelParameters {
    pub fn zeros(vocabulary: ServiceVocabulary, dim: usize) -> Self {
        let n = vocabulary.len();
        let square = || Array2::zeros((dim, dim));
        let vector = || Array1::zeros(dim);
        Self {
            dim,
            vocabulary,
            service_embeddings: Array2::zeros((dim, n)),
            input_weights: Gates::from_fn(square),
            recurrent_weights: Gates::from_fn(square),
            gate_biases: Gates::from_fn(vector),
            goal_weights: square(),
            goal_bias: vector(),
            transform_weights: square(),
            transform_bias: vector(),
            attention: vector(),
            output_weights: Array2::zeros((n, dim)),
        }
    }

    /// Scaled-uniform weights, zero biases, embeddings uniform in ±0.5/d.
    pub fn random(vocabulary: ServiceVocabulary, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = vocabulary.len();
        let mut p = Self::zeros(vocabulary, dim);
        for m in p.input_weights.as_array_mut() {
            *m = glorot(&mut rng, dim, dim, dim, dim);
        }
        for m in p.recurrent_weights.as_array_mut() {
            *m = glorot(&mut rng, dim, dim, dim, dim);
        }
        p.goal_weights = glorot(&mut rng, dim, dim, dim, dim);
        p.transform_weights = glorot(&mut rng, dim, dim, dim, dim);
        p.attention = glorot(&mut rng, 1, dim, dim, 1).into_shape_with_order(dim).unwrap();
        p.output_weights = glorot(&mut rng, n, dim, dim, n);
        let e = 0.5 / dim as f64;
        let dist = Uniform::new_inclusive(-e, e);
        p.service_embeddings = Array2::from_shape_fn((dim, n), |_| dist.sample(&mut rng));
        p
    }

    pub fn num_services(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn groups(&self) -> impl Iterator<Item = (ParamGroup, &[f64])> {
        ParamGroup::ALL.iter().map(move |&g| (g, self.group(g)))
    }

    pub fn group(&self, g: ParamGroup) -> &[f64] {
        let slice = match g {
            ParamGroup::ServiceEmbeddings => self.service_embeddings.as_slice(),
            ParamGroup::InputWeights(k) => self.input_weights.as_array()[k as usize].as_slice(),
            ParamGroup::RecurrentWeights(k) => self.recurrent_weights.as_array()[k as usize].as_slice(),
            ParamGroup::GateBias(k) => self.gate_biases.as_array()[k as usize].as_slice(),
            ParamGroup::GoalWeights => self.goal_weights.as_slice(),
            ParamGroup::GoalBias => self.goal_bias.as_slice(),
            ParamGroup::TransformWeights => self.transform_weights.as_slice(),
            ParamGroup::TransformBias => self.transform_bias.as_slice(),
            ParamGroup::Attention => self.attention.as_slice(),
            ParamGroup::OutputWeights => self.output_weights.as_slice(),
        };
        slice.expect("parameters are stored in standard layout")
    }

    pub fn group_mut(&mut self, g: ParamGroup) -> &mut [f64] {
        let slice = match g {
            ParamGroup::ServiceEmbeddings => self.service_embeddings.as_slice_mut(),
            ParamGroup::InputWeights(k) => self.input_weights.as_array_mut()[k as usize].as_slice_mut(),
            ParamGroup::RecurrentWeights(k) => {
                self.recurrent_weights.as_array_mut()[k as usize].as_slice_mut()
            }
            ParamGroup::GateBias(k) => self.gate_biases.as_array_mut()[k as usize].as_slice_mut(),
            ParamGroup::GoalWeights => self.goal_weights.as_slice_mut(),
            ParamGroup::GoalBias => self.goal_bias.as_slice_mut(),
            ParamGroup::TransformWeights => self.transform_weights.as_slice_mut(),
            ParamGroup::TransformBias => self.transform_bias.as_slice_mut(),
            ParamGroup::Attention => self.attention.as_slice_mut(),
            ParamGroup::OutputWeights => self.output_weights.as_slice_mut(),
        };
        slice.expect("parameters are stored in standard layout")
    }

    pub fn is_finite(&self) -> bool {
        self.groups().all(|(_, v)| v.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Forget = 0,
    Input = 1,
    Candidate = 2,
    Output = 3,
}

/// Addressable parameter groups, used for gradient checking and updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    ServiceEmbeddings,
    InputWeights(Gate),
    RecurrentWeights(Gate),
    GateBias(Gate),
    GoalWeights,
    GoalBias,
    TransformWeights,
    TransformBias,
    Attention,
    OutputWeights,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 19] = {
        use Gate::*;
        use ParamGroup::*;
        [
            ServiceEmbeddings,
            InputWeights(Forget),
            InputWeights(Input),
            InputWeights(Candidate),
            InputWeights(Output),
            RecurrentWeights(Forget),
            RecurrentWeights(Input),
            RecurrentWeights(Candidate),
            RecurrentWeights(Output),
            GateBias(Forget),
            GateBias(Input),
            GateBias(Candidate),
            GateBias(Output),
            GoalWeights,
            GoalBias,
            TransformWeights,
            TransformBias,
            Attention,
            OutputWeights,
        ]
    };
}

mod gates_matrix {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        #[serde(with = "nested")]
        forget: Array2<f64>,
        #[serde(with = "nested")]
        input: Array2<f64>,
        #[serde(with = "nested")]
        candidate: Array2<f64>,
        #[serde(with = "nested")]
        output: Array2<f64>,
    }

    pub fn serialize<S: Serializer>(g: &Gates<Array2<f64>>, s: S) -> Result<S::Ok, S::Error> {
        Repr {
            forget: g.forget.clone(),
            input: g.input.clone(),
            candidate: g.candidate.clone(),
            output: g.output.clone(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Gates<Array2<f64>>, D::Error> {
        let r = Repr::deserialize(d)?;
        Ok(Gates {
            forget: r.forget,
            input: r.input,
            candidate: r.candidate,
            output: r.output,
        })
    }
}

mod gates_vector {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        #[serde(with = "nested::vector")]
        forget: Array1<f64>,
        #[serde(with = "nested::vector")]
        input: Array1<f64>,
        #[serde(with = "nested::vector")]
        candidate: Array1<f64>,
        #[serde(with = "nested::vector")]
        output: Array1<f64>,
    }

    pub fn serialize<S: Serializer>(g: &Gates<Array1<f64>>, s: S) -> Result<S::Ok, S::Error> {
        Repr {
            forget: g.forget.clone(),
            input: g.input.clone(),
            candidate: g.candidate.clone(),
            output: g.output.clone(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Gates<Array1<f64>>, D::Error> {
        let r = Repr::deserialize(d)?;
        Ok(Gates {
            forget: r.forget,
            input: r.input,
            candidate: r.candidate,
            output: r.output,
        })
    }
}
