//! Goal-requirement embeddings with a distributed-memory paragraph-vector model.
//!
//! Each token is predicted from the mean of its document vector and the word
//! vectors in a symmetric window around it, trained with negative sampling.
//! Unseen goal texts get a fresh document vector fitted against the frozen word
//! and output matrices.

mod text;

pub use text::{stem, TextPipelineConfig, STOPWORDS_VERSION};

use std::collections::{BTreeMap, HashMap};

use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{nested, sigmoid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalEmbedderConfig {
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub inference_steps: usize,
    pub seed: u64,
}

impl Default for GoalEmbedderConfig {
    fn default() -> Self {
        Self {
            window: 5,
            negatives: 5,
            epochs: 40,
            learning_rate: 0.025,
            min_learning_rate: 0.0001,
            inference_steps: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalEmbedder {
    pub dim: usize,
    pub config: GoalEmbedderConfig,
    pub text: TextPipelineConfig,
    vocabulary: Vec<String>,
    word_counts: Vec<u64>,
    doc_ids: Vec<String>,
    /// d × |V|, one column per word.
    #[serde(with = "nested")]
    word_matrix: Array2<f64>,
    /// d × |docs|, one column per training document.
    #[serde(with = "nested")]
    doc_matrix: Array2<f64>,
    /// |V| × d negative-sampling output weights.
    #[serde(with = "nested")]
    output_matrix: Array2<f64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

/// Trains the paragraph-vector model on `(doc id, text)` pairs.
pub fn train_goal_embedder(
    corpus: &[(String, String)],
    dim: usize,
    config: &GoalEmbedderConfig,
    text: &TextPipelineConfig,
) -> Result<GoalEmbedder> {
    if dim == 0 {
        return Err(Error::InvalidConfig("goal dimension must be at least 1".into()));
    }
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus("no goal documents".into()));
    }
    let tokenized: Vec<Vec<String>> = corpus.iter().map(|(_, t)| text.preprocess(t)).collect();

    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for tok in tokenized.iter().flatten() {
        *counts.entry(tok).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(Error::EmptyCorpus("goal corpus is empty after preprocessing".into()));
    }
    let vocabulary: Vec<String> = counts.keys().map(|s| s.to_string()).collect();
    let word_counts: Vec<u64> = counts.values().copied().collect();
    let index: HashMap<String, usize> = vocabulary
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i))
        .collect();
    let docs: Vec<Vec<usize>> = tokenized
        .iter()
        .map(|toks| toks.iter().map(|t| index[t]).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scale = 0.5 / dim as f64;
    let mut init = |rows, cols| Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-scale..scale));
    let word_matrix = init(dim, vocabulary.len());
    let mut doc_matrix = init(dim, docs.len());
    for (j, doc) in docs.iter().enumerate() {
        if doc.is_empty() {
            doc_matrix.column_mut(j).fill(0.0);
        }
    }

    let mut embedder = GoalEmbedder {
        dim,
        config: config.clone(),
        text: text.clone(),
        vocabulary,
        word_counts,
        doc_ids: corpus.iter().map(|(id, _)| id.clone()).collect(),
        word_matrix,
        doc_matrix,
        output_matrix: Array2::zeros((counts.len(), dim)),
        index,
    };
    embedder.fit(&docs, &mut rng);
    Ok(embedder)
}

impl GoalEmbedder {
    /// An embedder with an empty vocabulary, used when no goal text survives
    /// preprocessing. Every inference yields the zero vector.
    pub fn empty(dim: usize, config: &GoalEmbedderConfig, text: &TextPipelineConfig) -> Self {
        Self {
            dim,
            config: config.clone(),
            text: text.clone(),
            vocabulary: Vec::new(),
            word_counts: Vec::new(),
            doc_ids: Vec::new(),
            word_matrix: Array2::zeros((dim, 0)),
            doc_matrix: Array2::zeros((dim, 0)),
            output_matrix: Array2::zeros((0, dim)),
            index: HashMap::new(),
        }
    }

    fn noise_distribution(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(self.word_counts.iter().map(|&c| (c as f64).powf(0.75)))
            .expect("vocabulary is nonempty")
    }

    fn fit(&mut self, docs: &[Vec<usize>], rng: &mut ChaCha8Rng) {
        let noise = self.noise_distribution();
        let total_words: usize = docs.iter().map(Vec::len).sum();
        let total_steps = (total_words * self.config.epochs).max(1) as f64;
        let mut done = 0usize;
        let mut order: Vec<usize> = (0..docs.len()).collect();
        let mut hidden = Array1::zeros(self.dim);
        let mut grad = Array1::zeros(self.dim);

        for _ in 0..self.config.epochs {
            order.shuffle(rng);
            for &d in &order {
                let doc = &docs[d];
                for pos in 0..doc.len() {
                    let alpha = self.alpha(done as f64 / total_steps, self.config.learning_rate);
                    done += 1;
                    let ctx = context_positions(doc.len(), pos, self.config.window);
                    let count = (1 + ctx.len()) as f64;

                    hidden.assign(&self.doc_matrix.column(d));
                    for &p in &ctx {
                        hidden += &self.word_matrix.column(doc[p]);
                    }
                    hidden /= count;

                    grad.fill(0.0);
                    for (word, label) in self.labelled_words(doc[pos], &noise, rng) {
                        let score = self.output_matrix.row(word).dot(&hidden);
                        let g = (label - sigmoid(score)) * alpha;
                        grad.scaled_add(g, &self.output_matrix.row(word));
                        self.output_matrix.row_mut(word).scaled_add(g, &hidden);
                    }
                    grad /= count;

                    self.doc_matrix.column_mut(d).scaled_add(1.0, &grad);
                    for &p in &ctx {
                        self.word_matrix.column_mut(doc[p]).scaled_add(1.0, &grad);
                    }
                }
            }
        }
    }

    fn alpha(&self, progress: f64, start: f64) -> f64 {
        let min = self.config.min_learning_rate.min(start);
        start - (start - min) * progress
    }

    fn labelled_words(
        &self,
        target: usize,
        noise: &WeightedIndex<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Vec<(usize, f64)> {
        let mut words = vec![(target, 1.0)];
        for _ in 0..self.config.negatives {
            let w = noise.sample(rng);
            if w != target {
                words.push((w, 0.0));
            }
        }
        words
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .vocabulary
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn word_matrix(&self) -> &Array2<f64> {
        &self.word_matrix
    }

    pub fn doc_matrix(&self) -> &Array2<f64> {
        &self.doc_matrix
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    /// Trained vector of a training document.
    pub fn doc_vector(&self, doc_id: &str) -> Option<Vec<f64>> {
        self.doc_ids
            .iter()
            .position(|d| d == doc_id)
            .map(|j| self.doc_matrix.column(j).to_vec())
    }

    /// Fits a document vector for `text` with every other weight frozen.
    /// Empty or fully out-of-vocabulary text maps to the zero vector.
    pub fn infer(&self, text: &str) -> Vec<f64> {
        let doc: Vec<usize> = self
            .text
            .preprocess(text)
            .iter()
            .filter_map(|t| self.index.get(t).copied())
            .collect();
        if doc.is_empty() {
            return vec![0.0; self.dim];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x9e37_79b9_7f4a_7c15);
        let scale = 0.5 / self.dim as f64;
        let mut vector = Array1::from_shape_fn(self.dim, |_| rng.gen_range(-scale..scale));
        let noise = self.noise_distribution();
        let steps = self.config.inference_steps.max(1);
        let total = (steps * doc.len()) as f64;
        let mut hidden = Array1::zeros(self.dim);
        let mut grad = Array1::zeros(self.dim);
        let mut done = 0usize;

        for _ in 0..steps {
            for pos in 0..doc.len() {
                let alpha = self.alpha(done as f64 / total, self.config.learning_rate);
                done += 1;
                let ctx = context_positions(doc.len(), pos, self.config.window);
                let count = (1 + ctx.len()) as f64;
                hidden.assign(&vector);
                for &p in &ctx {
                    hidden += &self.word_matrix.column(doc[p]);
                }
                hidden /= count;
                grad.fill(0.0);
                for (word, label) in self.labelled_words(doc[pos], &noise, &mut rng) {
                    let g = (label - sigmoid(self.output_matrix.row(word).dot(&hidden))) * alpha;
                    grad.scaled_add(g, &self.output_matrix.row(word));
                }
                vector.scaled_add(1.0 / count, &grad);
            }
        }
        vector.to_vec()
    }

    /// Restores lookup tables after deserialization.
    pub(crate) fn finish_load(&mut self) {
        self.rebuild_index();
    }
}

fn context_positions(len: usize, pos: usize, window: usize) -> Vec<usize> {
    let lo = pos.saturating_sub(window);
    let hi = (pos + window + 1).min(len);
    (lo..hi).filter(|&p| p != pos).collect()
}
