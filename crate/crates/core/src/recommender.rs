//! Online next-service recommendation for a workflow under construction.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provenance::{find_cycle, Edge, Service, Workflow};
use crate::seqmodel::{path_distribution, Model, ModelParameters};

/// A workflow being composed. Same document shape as a repository workflow,
/// except that every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialWorkflow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default)]
    pub goal: String,
    #[serde(default)]
    pub services: Vec<Service>,
    #[serde(default)]
    pub edges: Vec<Edge>,
}

impl PartialWorkflow {
    pub fn new(goal: impl Into<String>) -> Self {
        Self {
            goal: goal.into(),
            ..Self::default()
        }
    }

    fn label(&self) -> String {
        self.id.clone().unwrap_or_else(|| "partial".into())
    }

    pub fn from_workflow(w: &Workflow) -> Self {
        Self {
            id: Some(w.id.clone()),
            goal: w.goal.clone(),
            services: w.services.clone(),
            edges: w.edges.clone(),
        }
    }

    /// The sub-workflow formed by `anchor` and everything upstream of it.
    pub fn upstream_of(w: &Workflow, anchor: &str) -> Result<Self> {
        if !w.service_ids().any(|s| s == anchor) {
            return Err(Error::UnknownAnchor(anchor.to_string()));
        }
        let mut keep = BTreeSet::from([anchor.to_string()]);
        let mut frontier = vec![anchor.to_string()];
        while let Some(node) = frontier.pop() {
            for e in w.edges.iter().filter(|e| e.sink == node) {
                if keep.insert(e.source.clone()) {
                    frontier.push(e.source.clone());
                }
            }
        }
        Ok(Self {
            id: Some(w.id.clone()),
            goal: w.goal.clone(),
            services: w.services.iter().filter(|s| keep.contains(&s.id)).cloned().collect(),
            edges: w
                .edges
                .iter()
                .filter(|e| keep.contains(&e.source) && keep.contains(&e.sink))
                .cloned()
                .collect(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        Workflow {
            id: self.label(),
            goal: self.goal.clone(),
            services: self.services.clone(),
            edges: self.edges.clone(),
        }
        .validate()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.services.iter().any(|s| s.id == id)
    }

    pub fn service_ids(&self) -> impl Iterator<Item = &str> {
        self.services.iter().map(|s| s.id.as_str())
    }

    pub fn add_service(&mut self, service: Service) -> Result<()> {
        if self.contains(&service.id) {
            return Err(Error::DuplicateService {
                workflow: self.label(),
                service: service.id,
            });
        }
        self.services.push(service);
        Ok(())
    }

    /// Adds `source -> sink`, refusing duplicates and edges that close a cycle.
    /// The workflow is unchanged on error.
    pub fn add_edge(&mut self, source: &str, sink: &str) -> Result<()> {
        for id in [source, sink] {
            if !self.contains(id) {
                return Err(Error::UnknownService(id.to_string()));
            }
        }
        if self.edges.iter().any(|e| e.source == source && e.sink == sink) {
            return Err(Error::DuplicateEdge {
                workflow: self.label(),
                source_id: source.to_string(),
                sink: sink.to_string(),
            });
        }
        let cycle = find_cycle(
            [source],
            self.edges
                .iter()
                .map(|e| (e.source.as_str(), e.sink.as_str()))
                .chain([(source, sink)]),
        );
        if let Some(nodes) = cycle {
            return Err(Error::Cycle { nodes });
        }
        self.edges.push(Edge::new(source, sink));
        Ok(())
    }
}

/// Every maximal path inside `pw` that ends at `anchor`, in lexicographic
/// order. A service without predecessors yields the single path `[anchor]`.
pub fn extract_anchor_paths(pw: &PartialWorkflow, anchor: &str) -> Result<Vec<Vec<String>>> {
    if !pw.contains(anchor) {
        return Err(Error::UnknownAnchor(anchor.to_string()));
    }
    let mut preds: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in &pw.edges {
        preds.entry(e.sink.as_str()).or_default().push(e.source.as_str());
    }
    let mut paths = Vec::new();
    let mut stack = vec![anchor];
    collect_upstream(&preds, &mut stack, &mut paths);
    paths.sort();
    Ok(paths)
}

fn collect_upstream<'a>(
    preds: &BTreeMap<&'a str, Vec<&'a str>>,
    stack: &mut Vec<&'a str>,
    out: &mut Vec<Vec<String>>,
) {
    let node = *stack.last().unwrap();
    match preds.get(node) {
        Some(sources) if !sources.is_empty() => {
            for &s in sources {
                stack.push(s);
                collect_upstream(preds, stack, out);
                stack.pop();
            }
        }
        _ => out.push(stack.iter().rev().map(|s| s.to_string()).collect()),
    }
}

/// Mean of the per-path next-service distributions. Each path's excluded set
/// is `composed` minus the path; composed services unknown to the model are
/// ignored there, but every path service must be known.
pub fn aggregate_distribution(
    params: &ModelParameters,
    paths: &[Vec<String>],
    composed: &BTreeSet<String>,
    goal: ArrayView1<f64>,
) -> Result<Vec<f64>> {
    if paths.is_empty() {
        return Err(Error::InvalidConfig("no anchor paths".into()));
    }
    let vocab = &params.vocabulary;
    let mut total = vec![0.0; params.num_services()];
    for path in paths {
        let context = path.iter().map(|s| vocab.require(s)).collect::<Result<Vec<_>>>()?;
        let excluded: Vec<usize> = composed
            .iter()
            .filter(|s| !path.contains(s))
            .filter_map(|s| vocab.get(s))
            .collect();
        let p = path_distribution(params, &context, &excluded, goal)?;
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    let n = paths.len() as f64;
    Ok(total.into_iter().map(|t| t / n).collect())
}

/// Full distribution over the model vocabulary for the next service after `anchor`.
pub fn anchor_distribution(
    params: &ModelParameters,
    pw: &PartialWorkflow,
    anchor: &str,
    goal: &[f64],
) -> Result<Vec<f64>> {
    for id in pw.service_ids() {
        params.vocabulary.require(id)?;
    }
    let paths = extract_anchor_paths(pw, anchor)?;
    let composed = pw.service_ids().map(str::to_string).collect();
    aggregate_distribution(params, &paths, &composed, ArrayView1::from(goal))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub service_id: String,
    pub name: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub anchor: String,
    pub k: usize,
    pub candidates: Vec<Candidate>,
}

/// Every service not in `composed`, by descending probability then ascending id.
pub fn rank(params: &ModelParameters, distribution: &[f64], composed: &HashSet<&str>) -> Vec<Candidate> {
    let vocab = &params.vocabulary;
    let mut ranked: Vec<Candidate> = distribution
        .iter()
        .enumerate()
        .filter(|(i, _)| !composed.contains(vocab.id(*i)))
        .map(|(i, &p)| {
            let s = vocab.service(i);
            Candidate {
                service_id: s.id.clone(),
                name: s.name.clone(),
                probability: p,
            }
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then_with(|| a.service_id.cmp(&b.service_id))
    });
    ranked
}

/// Top-`k` next services for `anchor` under an already computed goal vector.
pub fn recommend_with_goal(
    params: &ModelParameters,
    pw: &PartialWorkflow,
    anchor: &str,
    k: usize,
    goal: &[f64],
) -> Result<Recommendation> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let dist = anchor_distribution(params, pw, anchor, goal)?;
    let composed: HashSet<&str> = pw.service_ids().collect();
    let mut candidates = rank(params, &dist, &composed);
    candidates.truncate(k);
    Ok(Recommendation {
        anchor: anchor.to_string(),
        k,
        candidates,
    })
}

/// Top-`k` next services for `anchor`, with the goal vector inferred from `pw.goal`.
pub fn recommend_next(model: &Model, pw: &PartialWorkflow, anchor: &str, k: usize) -> Result<Recommendation> {
    let goal = model.goal_embedder.infer(&pw.goal);
    recommend_with_goal(&model.params, pw, anchor, k, &goal)
}
