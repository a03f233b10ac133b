//! The service knowledge graph: a labeled multi-digraph whose relationships are
//! the edges of every workflow, labeled with the workflow id.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provenance::{Repository, Service};
use crate::vocab::ServiceVocabulary;

/// How the next service is drawn from a node's directed neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransitionMode {
    /// Softmax over normalized occurrence counts.
    #[default]
    Probabilistic,
    /// Every directed neighbor equally likely (plain random walk).
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Relationship {
    pub source: usize,
    pub sink: usize,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct ServiceKnowledgeGraph {
    vocabulary: ServiceVocabulary,
    labels: Vec<String>,
    label_index: HashMap<String, usize>,
    relationships: Vec<Relationship>,
    occurrence: BTreeMap<(usize, usize), u32>,
    /// Per source: (sink, count) sorted by sink index.
    neighbors: Vec<Vec<(usize, u32)>>,
    /// Per source: (sink, labels of the u->v relationships).
    edge_labels: HashMap<(usize, usize), Vec<usize>>,
    /// Per workflow label: its services (declaration order) and label-restricted successors.
    workflow_services: Vec<Vec<usize>>,
    workflow_successors: Vec<HashMap<usize, Vec<usize>>>,
}

pub fn build_skg(repo: &Repository) -> ServiceKnowledgeGraph {
    let vocabulary = ServiceVocabulary::from_services(repo.services().iter().cloned());
    let mut labels = Vec::with_capacity(repo.len());
    let mut label_index = HashMap::new();
    let mut relationships = Vec::new();
    let mut occurrence: BTreeMap<(usize, usize), u32> = BTreeMap::new();
    let mut edge_labels: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    let mut workflow_services = Vec::with_capacity(repo.len());
    let mut workflow_successors = Vec::with_capacity(repo.len());

    for (label, w) in repo.workflows().iter().enumerate() {
        labels.push(w.id.clone());
        label_index.insert(w.id.clone(), label);
        // ids were validated by the repository
        let idx = |id: &str| vocabulary.get(id).expect("validated service id");
        workflow_services.push(w.service_ids().map(idx).collect());
        let mut successors: HashMap<usize, Vec<usize>> = HashMap::new();
        for e in &w.edges {
            let (u, v) = (idx(&e.source), idx(&e.sink));
            relationships.push(Relationship {
                source: u,
                sink: v,
                label,
            });
            *occurrence.entry((u, v)).or_default() += 1;
            edge_labels.entry((u, v)).or_default().push(label);
            successors.entry(u).or_default().push(v);
        }
        for list in successors.values_mut() {
            list.sort_by(|a, b| vocabulary.id(*a).cmp(vocabulary.id(*b)));
        }
        workflow_successors.push(successors);
    }

    let mut neighbors = vec![Vec::new(); vocabulary.len()];
    for (&(u, v), &count) in &occurrence {
        neighbors[u].push((v, count));
    }

    ServiceKnowledgeGraph {
        vocabulary,
        labels,
        label_index,
        relationships,
        occurrence,
        neighbors,
        edge_labels,
        workflow_services,
        workflow_successors,
    }
}

impl ServiceKnowledgeGraph {
    pub fn vocabulary(&self) -> &ServiceVocabulary {
        &self.vocabulary
    }

    pub fn services(&self) -> &[Service] {
        self.vocabulary.services()
    }

    pub fn relationships(&self) -> &[Relationship] {
        &self.relationships
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn label_index(&self, workflow_id: &str) -> Option<usize> {
        self.label_index.get(workflow_id).copied()
    }

    /// o_{u,v}: number of workflows containing the edge u -> v.
    pub fn occurrence(&self, source: &str, sink: &str) -> u32 {
        match (self.vocabulary.get(source), self.vocabulary.get(sink)) {
            (Some(u), Some(v)) => self.occurrence.get(&(u, v)).copied().unwrap_or(0),
            _ => 0,
        }
    }

    /// o_u: total outgoing occurrence count of `source`.
    pub fn out_total(&self, source: &str) -> u32 {
        self.vocabulary
            .get(source)
            .map_or(0, |u| self.out_total_index(u))
    }

    pub(crate) fn out_total_index(&self, u: usize) -> u32 {
        self.neighbors[u].iter().map(|&(_, c)| c).sum()
    }

    /// Directed neighbors of service index `u` with their occurrence counts.
    pub fn neighbors_index(&self, u: usize) -> &[(usize, u32)] {
        &self.neighbors[u]
    }

    /// Directed neighbor ids of `source`, sorted.
    pub fn sinks(&self, source: &str) -> Vec<&str> {
        self.vocabulary.get(source).map_or_else(Vec::new, |u| {
            let mut ids: Vec<&str> = self.neighbors[u]
                .iter()
                .map(|&(v, _)| self.vocabulary.id(v))
                .collect();
            ids.sort_unstable();
            ids
        })
    }

    pub fn has_edge_index(&self, u: usize, v: usize) -> bool {
        self.occurrence.contains_key(&(u, v))
    }

    pub fn edge_labels_index(&self, u: usize, v: usize) -> &[usize] {
        self.edge_labels.get(&(u, v)).map_or(&[], Vec::as_slice)
    }

    pub(crate) fn workflow_services_index(&self, label: usize) -> &[usize] {
        &self.workflow_services[label]
    }

    pub(crate) fn workflow_successors_index(&self, label: usize, u: usize) -> &[usize] {
        self.workflow_successors[label]
            .get(&u)
            .map_or(&[], Vec::as_slice)
    }

    /// Service ids of the workflow labelled `workflow_id`.
    pub fn workflow_services(&self, workflow_id: &str) -> Result<Vec<&str>> {
        let label = self
            .label_index(workflow_id)
            .ok_or_else(|| Error::UnknownWorkflow(workflow_id.to_string()))?;
        Ok(self.workflow_services[label]
            .iter()
            .map(|&i| self.vocabulary.id(i))
            .collect())
    }

    /// Unnormalized transition weights of `u`'s neighbors, aligned with
    /// [`neighbors_index`](Self::neighbors_index).
    pub(crate) fn transition_weights(&self, u: usize, mode: TransitionMode) -> Vec<f64> {
        let nbrs = &self.neighbors[u];
        match mode {
            TransitionMode::Uniform => vec![1.0; nbrs.len()],
            TransitionMode::Probabilistic => {
                let total = f64::from(self.out_total_index(u));
                // exponents lie in (0, 1], so no shift is needed
                nbrs.iter()
                    .map(|&(_, c)| (f64::from(c) / total).exp())
                    .collect()
            }
        }
    }

    /// p(v | u) over the directed neighbors of `source`; empty for sink-less services.
    pub fn transition_distribution(
        &self,
        source: &str,
        mode: TransitionMode,
    ) -> Result<BTreeMap<String, f64>> {
        let u = self.vocabulary.require(source)?;
        let weights = self.transition_weights(u, mode);
        let total: f64 = weights.iter().sum();
        Ok(self.neighbors[u]
            .iter()
            .zip(weights)
            .map(|(&(v, _), w)| (self.vocabulary.id(v).to_string(), w / total))
            .collect())
    }

    /// Line-oriented dump: `source<TAB>sink<TAB>workflow_label`, one relationship per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for r in &self.relationships {
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                self.vocabulary.id(r.source),
                self.vocabulary.id(r.sink),
                self.labels[r.label]
            );
        }
        out
    }
}
