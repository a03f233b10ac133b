//! Composition-path corpora generated from the knowledge graph.
//!
//! Two strategies exist. Intra-workflow paths follow the edges of one workflow
//! label from every service to every terminal service. Inter-workflow paths are
//! acyclic walks over the whole graph where each step draws an unvisited
//! neighbor from the transition distribution, renormalized over the neighbors
//! that are still unvisited.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::io::BufRead;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skg::{ServiceKnowledgeGraph, TransitionMode};

/// Paths shorter than this many services are never emitted.
pub const MIN_PATH_LEN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Intra,
    Inter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dedup {
    #[default]
    Keep,
    Remove,
}

impl Dedup {
    pub fn name(&self) -> &'static str {
        match self {
            Dedup::Keep => "keep",
            Dedup::Remove => "remove",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositionPath {
    pub services: Vec<String>,
    /// Workflow label of each step; `labels[i]` belongs to the edge
    /// `services[i] -> services[i + 1]`.
    pub labels: Vec<String>,
    pub origin: Origin,
    pub source_workflow: Option<String>,
}

impl CompositionPath {
    pub fn len(&self) -> usize {
        self.services.len()
    }

    pub fn is_empty(&self) -> bool {
        self.services.is_empty()
    }

    pub fn last(&self) -> Option<&str> {
        self.services.last().map(String::as_str)
    }

    /// Checks acyclicity and that every step is an SKG relationship carrying its label.
    pub fn replays_on(&self, skg: &ServiceKnowledgeGraph) -> bool {
        let vocab = skg.vocabulary();
        let mut seen = HashSet::new();
        if !self.services.iter().all(|s| seen.insert(s.as_str())) {
            return false;
        }
        if self.labels.len() + 1 != self.services.len() {
            return false;
        }
        self.services.windows(2).zip(&self.labels).all(|(pair, label)| {
            match (vocab.get(&pair[0]), vocab.get(&pair[1]), skg.label_index(label)) {
                (Some(u), Some(v), Some(l)) => skg.edge_labels_index(u, v).contains(&l),
                _ => false,
            }
        })
    }
}

/// Every maximal path of `workflow_id` that starts at any of its services and
/// ends at a service with no successor under the same label. Output is sorted
/// by service-id sequence.
pub fn generate_intra_paths(
    skg: &ServiceKnowledgeGraph,
    workflow_id: &str,
) -> Result<Vec<CompositionPath>> {
    let label = skg
        .label_index(workflow_id)
        .ok_or_else(|| Error::UnknownWorkflow(workflow_id.to_string()))?;
    let vocab = skg.vocabulary();

    let mut found: Vec<Vec<usize>> = Vec::new();
    for &start in skg.workflow_services_index(label) {
        let mut path = vec![start];
        extend_within_label(skg, label, &mut path, &mut found);
    }

    let mut paths: Vec<CompositionPath> = found
        .into_iter()
        .filter(|p| p.len() >= MIN_PATH_LEN)
        .map(|p| CompositionPath {
            labels: vec![workflow_id.to_string(); p.len() - 1],
            services: p.into_iter().map(|i| vocab.id(i).to_string()).collect(),
            origin: Origin::Intra,
            source_workflow: Some(workflow_id.to_string()),
        })
        .collect();
    paths.sort_by(|a, b| a.services.cmp(&b.services));
    Ok(paths)
}

fn extend_within_label(
    skg: &ServiceKnowledgeGraph,
    label: usize,
    path: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    let tail = *path.last().expect("path is never empty");
    let next: Vec<usize> = skg
        .workflow_successors_index(label, tail)
        .iter()
        .copied()
        .filter(|v| !path.contains(v))
        .collect();
    if next.is_empty() {
        out.push(path.clone());
        return;
    }
    for v in next {
        path.push(v);
        extend_within_label(skg, label, path, out);
        path.pop();
    }
}

/// Intra paths of every workflow, in repository order.
pub fn generate_all_intra_paths(skg: &ServiceKnowledgeGraph) -> Vec<CompositionPath> {
    skg.labels()
        .iter()
        .flat_map(|w| generate_intra_paths(skg, w).expect("label comes from the graph"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    /// Maximum path length in services (l).
    pub walk_length: usize,
    /// Walks started from every service (τ).
    pub walks_per_service: usize,
    pub mode: TransitionMode,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            walk_length: 15,
            walks_per_service: 10,
            mode: TransitionMode::Probabilistic,
            seed: 0,
        }
    }
}

/// Which corpus to train on. The walk seed is supplied separately so that a
/// single run seed governs everything.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Intra,
    Inter {
        walk_length: usize,
        walks_per_service: usize,
        mode: TransitionMode,
    },
}

impl Strategy {
    pub fn inter_default() -> Self {
        let w = WalkConfig::default();
        Strategy::Inter {
            walk_length: w.walk_length,
            walks_per_service: w.walks_per_service,
            mode: w.mode,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Intra => "intra",
            Strategy::Inter { .. } => "inter",
        }
    }
}

pub fn generate_paths(
    skg: &ServiceKnowledgeGraph,
    strategy: Strategy,
    seed: u64,
) -> Result<Vec<CompositionPath>> {
    match strategy {
        Strategy::Intra => Ok(generate_all_intra_paths(skg)),
        Strategy::Inter {
            walk_length,
            walks_per_service,
            mode,
        } => generate_inter_paths(
            skg,
            &WalkConfig {
                walk_length,
                walks_per_service,
                mode,
                seed,
            },
        ),
    }
}

/// Acyclic walks from every service. Each start service owns a random stream
/// seeded with `seed ^ start_index`, so the corpus does not depend on scheduling.
pub fn generate_inter_paths(
    skg: &ServiceKnowledgeGraph,
    config: &WalkConfig,
) -> Result<Vec<CompositionPath>> {
    if config.walk_length < MIN_PATH_LEN {
        return Err(Error::InvalidConfig(format!(
            "walk length must be at least {MIN_PATH_LEN}, got {}",
            config.walk_length
        )));
    }
    if config.walks_per_service == 0 {
        return Err(Error::InvalidConfig("walks per service must be at least 1".into()));
    }
    let per_start: Vec<Vec<CompositionPath>> = (0..skg.services().len())
        .into_par_iter()
        .map(|start| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ start as u64);
            (0..config.walks_per_service)
                .filter_map(|_| walk(skg, start, config, &mut rng))
                .collect()
        })
        .collect();
    Ok(per_start.into_iter().flatten().collect())
}

fn walk<R: Rng>(
    skg: &ServiceKnowledgeGraph,
    start: usize,
    config: &WalkConfig,
    rng: &mut R,
) -> Option<CompositionPath> {
    let mut services = vec![start];
    let mut labels = Vec::new();
    while services.len() < config.walk_length {
        let u = *services.last().unwrap();
        let weights = skg.transition_weights(u, config.mode);
        let candidates: Vec<(usize, f64)> = skg
            .neighbors_index(u)
            .iter()
            .zip(weights)
            .filter(|((v, _), _)| !services.contains(v))
            .map(|(&(v, _), w)| (v, w))
            .collect();
        if candidates.is_empty() {
            break;
        }
        let dist = WeightedIndex::new(candidates.iter().map(|&(_, w)| w))
            .expect("transition weights are positive");
        let v = candidates[dist.sample(rng)].0;
        let edge_labels = skg.edge_labels_index(u, v);
        labels.push(edge_labels[rng.gen_range(0..edge_labels.len())]);
        services.push(v);
    }
    if services.len() < MIN_PATH_LEN {
        return None;
    }
    let vocab = skg.vocabulary();
    Some(CompositionPath {
        services: services.into_iter().map(|i| vocab.id(i).to_string()).collect(),
        labels: labels.into_iter().map(|l| skg.label(l).to_string()).collect(),
        origin: Origin::Inter,
        source_workflow: None,
    })
}

/// Services barred from being recommended after `path`.
///
/// Intra paths: the services of the source workflow that are not on the path.
/// Inter paths: the services of the path itself.
pub fn compute_excluded_set(
    skg: &ServiceKnowledgeGraph,
    path: &CompositionPath,
) -> Result<BTreeSet<String>> {
    match (path.origin, &path.source_workflow) {
        (Origin::Intra, Some(workflow)) => {
            let on_path: HashSet<&str> = path.services.iter().map(String::as_str).collect();
            Ok(skg
                .workflow_services(workflow)?
                .into_iter()
                .filter(|s| !on_path.contains(s))
                .map(str::to_string)
                .collect())
        }
        _ => Ok(path.services.iter().cloned().collect()),
    }
}

/// Drops repeated service sequences, keeping the first occurrence. Labels are ignored.
pub fn deduplicate(paths: Vec<CompositionPath>) -> Vec<CompositionPath> {
    let mut seen: HashSet<Vec<String>> = HashSet::with_capacity(paths.len());
    paths
        .into_iter()
        .filter(|p| seen.insert(p.services.clone()))
        .collect()
}

pub fn apply_dedup(paths: Vec<CompositionPath>, dedup: Dedup) -> Vec<CompositionPath> {
    match dedup {
        Dedup::Keep => paths,
        Dedup::Remove => deduplicate(paths),
    }
}

/// One supervised example: predict `target` after `context`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingInstance {
    pub context: Vec<String>,
    pub target: String,
    /// Workflow-level context averaged into the context vector. Disjoint from
    /// `context` and `target`.
    pub excluded: BTreeSet<String>,
    /// Services that may not be drawn as negatives: the path's excluded set
    /// minus the target. Covers the context for inter paths.
    pub barred: BTreeSet<String>,
    /// Goal vector of the originating workflow; zero for inter paths.
    pub goal: Vec<f64>,
}

impl TrainingInstance {
    /// Splits `path` into context and target. `excluded` is the path's excluded
    /// set; services on the path itself are removed from it.
    pub fn from_path(
        path: &CompositionPath,
        excluded: &BTreeSet<String>,
        goal: Vec<f64>,
    ) -> Option<Self> {
        let (target, context) = path.services.split_last()?;
        if context.is_empty() {
            return None;
        }
        let barred = excluded.iter().filter(|s| *s != target).cloned().collect();
        let excluded = excluded
            .iter()
            .filter(|s| !path.services.contains(s))
            .cloned()
            .collect();
        Some(Self {
            context: context.to_vec(),
            target: target.clone(),
            excluded,
            barred,
            goal,
        })
    }
}

/// Corpus text: one path per line, service ids separated by single spaces.
pub fn write_corpus(paths: &[CompositionPath]) -> String {
    let mut out = String::new();
    for p in paths {
        let _ = writeln!(out, "{}", p.services.join(" "));
    }
    out
}

/// Sidecar file aligned with [`write_corpus`]: the excluded set of each path.
pub fn write_excluded_sidecar(
    skg: &ServiceKnowledgeGraph,
    paths: &[CompositionPath],
) -> Result<String> {
    let mut out = String::new();
    for p in paths {
        let ex: Vec<String> = compute_excluded_set(skg, p)?.into_iter().collect();
        let _ = writeln!(out, "{}", ex.join(" "));
    }
    Ok(out)
}

/// Reads service-id sequences from a corpus file. Blank lines are skipped.
pub fn read_corpus(reader: impl BufRead) -> Result<Vec<Vec<String>>> {
    let mut paths = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let ids: Vec<String> = line.split(' ').filter(|s| !s.is_empty()).map(str::to_string).collect();
        if !ids.is_empty() {
            paths.push(ids);
        }
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provenance::{Edge, Repository, Service, Workflow};
    use crate::skg::build_skg;

    fn workflow(id: &str, services: &[&str], edges: &[(&str, &str)]) -> Workflow {
        Workflow {
            id: id.into(),
            goal: String::new(),
            services: services.iter().map(|s| Service::new(*s, *s)).collect(),
            edges: edges.iter().map(|&(a, b)| Edge::new(a, b)).collect(),
        }
    }

    fn ids(path: &CompositionPath) -> Vec<&str> {
        path.services.iter().map(String::as_str).collect()
    }

    fn wf941() -> Workflow {
        workflow(
            "941",
            &["s1", "s2", "s3", "s4", "s5", "s6", "s7"],
            &[
                ("s1", "s2"),
                ("s2", "s4"),
                ("s4", "s6"),
                ("s4", "s7"),
                ("s3", "s6"),
                ("s5", "s7"),
            ],
        )
    }

    #[test]
    fn intra_paths_of_941() {
        let g = build_skg(&Repository::new(vec![wf941()]).unwrap());
        let paths = generate_intra_paths(&g, "941").unwrap();
        let got: Vec<Vec<&str>> = paths.iter().map(ids).collect();
        assert_eq!(
            got,
            vec![
                vec!["s1", "s2", "s4", "s6"],
                vec!["s1", "s2", "s4", "s7"],
                vec!["s2", "s4", "s6"],
                vec!["s2", "s4", "s7"],
                vec!["s3", "s6"],
                vec!["s4", "s6"],
                vec!["s4", "s7"],
                vec!["s5", "s7"],
            ]
        );
        assert!(paths.iter().all(|p| p.labels.iter().all(|l| l == "941")));
    }

    #[test]
    fn intra_small_cases() {
        let g = build_skg(
            &Repository::new(vec![
                workflow("single", &["A", "B"], &[("A", "B")]),
                workflow("chain", &["X", "Y", "Z"], &[("X", "Y"), ("Y", "Z")]),
            ])
            .unwrap(),
        );
        let single: Vec<_> = generate_intra_paths(&g, "single").unwrap().iter().map(|p| p.services.clone()).collect();
        assert_eq!(single, vec![vec!["A".to_string(), "B".to_string()]]);
        let chain = generate_intra_paths(&g, "chain").unwrap();
        assert_eq!(chain.iter().map(ids).collect::<Vec<_>>(), vec![vec!["X", "Y", "Z"], vec!["Y", "Z"]]);
        assert!(matches!(generate_intra_paths(&g, "nope"), Err(Error::UnknownWorkflow(_))));
    }

    #[test]
    fn inter_walks_cross_workflow_boundaries() {
        let g = build_skg(
            &Repository::new(vec![
                workflow("941", &["s5", "s7"], &[("s5", "s7")]),
                workflow("232", &["s7", "s11"], &[("s7", "s11")]),
            ])
            .unwrap(),
        );
        let cfg = WalkConfig {
            walk_length: 5,
            walks_per_service: 3,
            mode: TransitionMode::Probabilistic,
            seed: 3,
        };
        let paths = generate_inter_paths(&g, &cfg).unwrap();
        let crossing = paths.iter().find(|p| ids(p) == ["s5", "s7", "s11"]).unwrap();
        assert_eq!(crossing.labels, ["941", "232"]);
        assert!(crossing.replays_on(&g));
        // s11 has no neighbors: its walks are dropped
        assert!(paths.iter().all(|p| p.services[0] != "s11"));
    }

    #[test]
    fn isolated_service_yields_nothing() {
        let g = build_skg(&Repository::new(vec![workflow("w", &["Z"], &[])]).unwrap());
        let paths = generate_inter_paths(&g, &WalkConfig::default()).unwrap();
        assert!(paths.is_empty());
        assert!(generate_intra_paths(&g, "w").unwrap().is_empty());
    }

    #[test]
    fn invalid_walk_parameters() {
        let g = build_skg(&Repository::empty());
        let bad_len = WalkConfig { walk_length: 1, ..WalkConfig::default() };
        let bad_tau = WalkConfig { walks_per_service: 0, ..WalkConfig::default() };
        assert!(matches!(generate_inter_paths(&g, &bad_len), Err(Error::InvalidConfig(_))));
        assert!(matches!(generate_inter_paths(&g, &bad_tau), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn excluded_sets() {
        let g = build_skg(&Repository::new(vec![wf941()]).unwrap());
        let paths = generate_intra_paths(&g, "941").unwrap();
        let p = paths.iter().find(|p| ids(p) == ["s1", "s2", "s4", "s6"]).unwrap();
        let ex: Vec<String> = compute_excluded_set(&g, p).unwrap().into_iter().collect();
        assert_eq!(ex, ["s3", "s5", "s7"]);

        let inter = CompositionPath {
            services: vec!["A".into(), "B".into(), "C".into()],
            labels: vec!["x".into(), "y".into()],
            origin: Origin::Inter,
            source_workflow: None,
        };
        let ex: Vec<String> = compute_excluded_set(&g, &inter).unwrap().into_iter().collect();
        assert_eq!(ex, ["A", "B", "C"]);

        let g = build_skg(&Repository::new(vec![workflow("c", &["A", "B"], &[("A", "B")])]).unwrap());
        let full = &generate_intra_paths(&g, "c").unwrap()[0];
        assert!(compute_excluded_set(&g, full).unwrap().is_empty());
    }

    #[test]
    fn dedup_keeps_first_occurrence() {
        let mk = |s: &[&str], label: &str| CompositionPath {
            services: s.iter().map(|x| x.to_string()).collect(),
            labels: vec![label.to_string(); s.len() - 1],
            origin: Origin::Intra,
            source_workflow: Some(label.to_string()),
        };
        let corpus = vec![
            mk(&["s26", "s19", "s25"], "1360"),
            mk(&["a", "b"], "1"),
            mk(&["s26", "s19", "s25"], "2067"),
        ];
        let out = deduplicate(corpus.clone());
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].labels[0], "1360");
        assert_eq!(deduplicate(out.clone()), out);

        let copies = vec![mk(&["a", "b"], "1"); 5];
        assert_eq!(deduplicate(copies).len(), 1);
        let distinct = vec![mk(&["a", "b"], "1"), mk(&["b", "a"], "1")];
        assert_eq!(deduplicate(distinct.clone()), distinct);
    }

    #[test]
    fn training_instance_split() {
        let path = CompositionPath {
            services: vec!["s1".into(), "s2".into(), "s4".into(), "s6".into()],
            labels: vec!["941".into(); 3],
            origin: Origin::Intra,
            source_workflow: Some("941".into()),
        };
        let excluded: BTreeSet<String> = ["s3", "s5", "s7"].iter().map(|s| s.to_string()).collect();
        let inst = TrainingInstance::from_path(&path, &excluded, vec![0.0; 4]).unwrap();
        assert_eq!(inst.context, ["s1", "s2", "s4"]);
        assert_eq!(inst.target, "s6");
        assert_eq!(inst.excluded, excluded);
        assert_eq!(inst.barred, excluded);

        let inter_ex: BTreeSet<String> = path.services.iter().cloned().collect();
        let inst = TrainingInstance::from_path(&path, &inter_ex, vec![]).unwrap();
        assert!(inst.excluded.is_empty());
        assert_eq!(inst.barred.iter().collect::<Vec<_>>(), ["s1", "s2", "s4"]);
    }

    #[test]
    fn corpus_text_round_trip() {
        let g = build_skg(&Repository::new(vec![wf941()]).unwrap());
        let paths = generate_intra_paths(&g, "941").unwrap();
        let text = write_corpus(&paths);
        assert_eq!(text.lines().next(), Some("s1 s2 s4 s6"));
        let back = read_corpus(text.as_bytes()).unwrap();
        assert_eq!(back, paths.iter().map(|p| p.services.clone()).collect::<Vec<_>>());
        let side = write_excluded_sidecar(&g, &paths).unwrap();
        assert_eq!(side.lines().next(), Some("s3 s5 s7"));
        assert_eq!(side.lines().count(), paths.len());
    }
}
