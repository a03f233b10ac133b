//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use flowrec_core::provenance::{Edge, Repository, Service, Workflow};
use flowrec_core::seqmodel::{ModelParameters, ParamGroup};
use flowrec_core::vocab::ServiceVocabulary;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random DAG over `services`: edges only go forward in a shuffled order.
pub fn random_dag(
    id: &str,
    services: &[String],
    edge_prob: f64,
    rng: &mut impl Rng,
) -> Workflow {
    let mut order = services.to_vec();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for i in 0..order.len() {
        for j in i + 1..order.len() {
            if rng.gen_bool(edge_prob) {
                edges.push(Edge::new(order[i].clone(), order[j].clone()));
            }
        }
    }
    Workflow {
        id: id.to_string(),
        goal: format!("goal of {id}"),
        services: services.iter().map(|s| Service::new(s.clone(), format!("svc {s}"))).collect(),
        edges,
    }
}

pub fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:03}")).collect()
}

/// Parameters over services `s000..`, every entry uniform in ±scale.
pub fn random_params(n: usize, dim: usize, seed: u64, scale: f64) -> ModelParameters {
    let vocab = ServiceVocabulary::from_services(ids("s", n).into_iter().map(|s| Service::new(s, "svc")));
    let mut p = ModelParameters::zeros(vocab, dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for g in ParamGroup::ALL {
        for v in p.group_mut(g) {
            *v = rng.gen_range(-scale..scale);
        }
    }
    p
}

/// Every path from every node to a node without successors, length ≥ 2, sorted.
pub fn brute_force_paths(w: &Workflow) -> Vec<Vec<String>> {
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in &w.edges {
        succ.entry(&e.source).or_default().push(&e.sink);
    }
    fn go<'a>(node: &'a str, succ: &BTreeMap<&'a str, Vec<&'a str>>, path: &mut Vec<&'a str>, out: &mut Vec<Vec<String>>) {
        path.push(node);
        match succ.get(node) {
            Some(next) if !next.is_empty() => {
                for n in next {
                    go(n, succ, path, out);
                }
            }
            _ => {
                if path.len() >= 2 {
                    out.push(path.iter().map(|s| s.to_string()).collect());
                }
            }
        }
        path.pop();
    }
    let mut out = Vec::new();
    for s in &w.services {
        go(&s.id, &succ, &mut Vec::new(), &mut out);
    }
    out.sort();
    out
}

/// (workflow, source, sink) triples of a repository.
pub fn labelled_edges(repo: &Repository) -> BTreeSet<(String, String, String)> {
    repo.workflows()
        .iter()
        .flat_map(|w| {
            w.edges
                .iter()
                .map(|e| (w.id.clone(), e.source.clone(), e.sink.clone()))
        })
        .collect()
}

/// Number of workflows containing each edge.
pub fn occurrence_counts(repo: &Repository) -> BTreeMap<(String, String), u32> {
    let mut counts = BTreeMap::new();
    for (_, u, v) in labelled_edges(repo) {
        *counts.entry((u, v)).or_insert(0) += 1;
    }
    counts
}

/// Transition probabilities computed straight from workflow counts.
pub fn direct_transition(repo: &Repository, source: &str) -> BTreeMap<String, f64> {
    let counts = occurrence_counts(repo);
    let out: Vec<(&String, u32)> = counts
        .iter()
        .filter(|((u, _), _)| u == source)
        .map(|((_, v), &c)| (v, c))
        .collect();
    let total: u32 = out.iter().map(|(_, c)| c).sum();
    let z: f64 = out.iter().map(|(_, c)| (*c as f64 / total as f64).exp()).sum();
    out.into_iter()
        .map(|(v, c)| (v.clone(), (c as f64 / total as f64).exp() / z))
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn matvec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// Weights of a textbook LSTM, row-major, gates in the order forget, input,
/// candidate, output.
pub struct PlainLstm {
    pub wx: [Vec<Vec<f64>>; 4],
    pub wh: [Vec<Vec<f64>>; 4],
    pub b: [Vec<f64>; 4],
}

impl PlainLstm {
    /// Hidden outputs for a sequence of inputs from the zero state.
    pub fn run(&self, inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let d = self.b[0].len();
        let mut h = vec![0.0; d];
        let mut c = vec![0.0; d];
        let mut out = Vec::new();
        for x in inputs {
            let pre: Vec<Vec<f64>> = (0..4)
                .map(|k| {
                    let a = matvec(&self.wx[k], x);
                    let r = matvec(&self.wh[k], &h);
                    (0..d).map(|j| a[j] + r[j] + self.b[k][j]).collect()
                })
                .collect();
            for j in 0..d {
                let f = sigmoid(pre[0][j]);
                let i = sigmoid(pre[1][j]);
                let l = pre[2][j].tanh();
                let o = sigmoid(pre[3][j]);
                c[j] = f * c[j] + i * l;
                h[j] = o * c[j].tanh();
            }
            out.push(h.clone());
        }
        out
    }
}
