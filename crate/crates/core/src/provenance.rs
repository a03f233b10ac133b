//! Workflow repositories: the canonical JSON document, validation and train/test splitting.
//!
//! A repository document looks like
//!
//! ```json
//! {"workflows": [{"id": "w1", "goal": "align sequences",
//!                 "services": [{"id": "A", "name": "fetch"}, {"id": "B", "name": "align"}],
//!                 "edges": [{"source": "A", "sink": "B"}]}]}
//! ```
//!
//! Validation is strict: anything that would need repairing is rejected.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Service {
    pub id: String,
    pub name: String,
}

impl Service {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub source: String,
    pub sink: String,
}

impl Edge {
    pub fn new(source: impl Into<String>, sink: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            sink: sink.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workflow {
    pub id: String,
    pub goal: String,
    pub services: Vec<Service>,
    pub edges: Vec<Edge>,
}

impl Workflow {
    /// Checks the per-workflow invariants: declared endpoints, no duplicate
    /// services or edges, and acyclicity.
    pub fn validate(&self) -> Result<()> {
        let mut declared = HashSet::new();
        for s in &self.services {
            if s.name.trim().is_empty() {
                return Err(Error::EmptyServiceName(s.id.clone()));
            }
            if !declared.insert(s.id.as_str()) {
                return Err(Error::DuplicateService {
                    workflow: self.id.clone(),
                    service: s.id.clone(),
                });
            }
        }
        let mut seen = HashSet::new();
        for e in &self.edges {
            for endpoint in [&e.source, &e.sink] {
                if !declared.contains(endpoint.as_str()) {
                    return Err(Error::UnknownServiceReference {
                        workflow: self.id.clone(),
                        service: endpoint.clone(),
                    });
                }
            }
            if !seen.insert((e.source.as_str(), e.sink.as_str())) {
                return Err(Error::DuplicateEdge {
                    workflow: self.id.clone(),
                    source_id: e.source.clone(),
                    sink: e.sink.clone(),
                });
            }
        }
        if let Some(nodes) = find_cycle(
            self.services.iter().map(|s| s.id.as_str()),
            self.edges.iter().map(|e| (e.source.as_str(), e.sink.as_str())),
        ) {
            return Err(Error::Cycle { nodes });
        }
        Ok(())
    }

    pub fn service_ids(&self) -> impl Iterator<Item = &str> {
        self.services.iter().map(|s| s.id.as_str())
    }

    /// Direct successors of `id` inside this workflow, in edge order.
    pub fn sinks_of<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges
            .iter()
            .filter(move |e| e.source == id)
            .map(|e| e.sink.as_str())
    }
}

/// Depth-first search for a directed cycle. Returns the nodes on the first cycle
/// found, starting at the node the back edge re-enters.
pub fn find_cycle<'a>(
    nodes: impl IntoIterator<Item = &'a str>,
    edges: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Option<Vec<String>> {
    let nodes: Vec<&str> = nodes.into_iter().collect();
    let mut adjacency: HashMap<&str, Vec<&str>> = HashMap::new();
    for (u, v) in edges {
        adjacency.entry(u).or_default().push(v);
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    let mut marks: HashMap<&str, Mark> = HashMap::new();

    for &root in &nodes {
        if marks.contains_key(root) {
            continue;
        }
        // stack of (node, next child position)
        let mut stack: Vec<(&str, usize)> = vec![(root, 0)];
        marks.insert(root, Mark::Active);
        while let Some(&mut (node, ref mut pos)) = stack.last_mut() {
            let children = adjacency.get(node).map(Vec::as_slice).unwrap_or(&[]);
            if *pos < children.len() {
                let child = children[*pos];
                *pos += 1;
                match marks.get(child) {
                    Some(Mark::Active) => {
                        let start = stack.iter().position(|(n, _)| *n == child).unwrap();
                        return Some(stack[start..].iter().map(|(n, _)| n.to_string()).collect());
                    }
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(child, Mark::Active);
                        stack.push((child, 0));
                    }
                }
            } else {
                marks.insert(node, Mark::Done);
                stack.pop();
            }
        }
    }
    None
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RepositoryDocument {
    workflows: Vec<Workflow>,
}

/// A validated collection of workflows together with the union of their services.
#[derive(Debug, Clone, PartialEq)]
pub struct Repository {
    workflows: Vec<Workflow>,
    services: Vec<Service>,
}

impl Repository {
    pub fn new(workflows: Vec<Workflow>) -> Result<Self> {
        let mut ids = HashSet::new();
        let mut names: BTreeMap<&str, &str> = BTreeMap::new();
        for w in &workflows {
            if !ids.insert(w.id.as_str()) {
                return Err(Error::DuplicateWorkflow(w.id.clone()));
            }
            w.validate()?;
            for s in &w.services {
                match names.get(s.id.as_str()) {
                    Some(&existing) if existing != s.name => {
                        return Err(Error::InconsistentServiceName {
                            id: s.id.clone(),
                            first: existing.to_string(),
                            second: s.name.clone(),
                        })
                    }
                    _ => {
                        names.insert(&s.id, &s.name);
                    }
                }
            }
        }
        let services = names
            .into_iter()
            .map(|(id, name)| Service::new(id, name))
            .collect();
        Ok(Self {
            workflows,
            services,
        })
    }

    pub fn empty() -> Self {
        Self {
            workflows: Vec::new(),
            services: Vec::new(),
        }
    }

    pub fn workflows(&self) -> &[Workflow] {
        &self.workflows
    }

    /// All services, sorted by id.
    pub fn services(&self) -> &[Service] {
        &self.services
    }

    pub fn workflow(&self, id: &str) -> Option<&Workflow> {
        self.workflows.iter().find(|w| w.id == id)
    }

    pub fn len(&self) -> usize {
        self.workflows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workflows.is_empty()
    }

    pub fn into_workflows(self) -> Vec<Workflow> {
        self.workflows
    }
}

pub fn parse_repository(bytes: &[u8]) -> Result<Repository> {
    let doc: RepositoryDocument =
        serde_json::from_slice(bytes).map_err(|e| Error::Malformed(e.to_string()))?;
    Repository::new(doc.workflows)
}

/// Canonical pretty-printed JSON form of a repository.
pub fn serialize_repository(repo: &Repository) -> String {
    #[derive(Serialize)]
    struct Doc<'a> {
        workflows: &'a [Workflow],
    }
    let mut out = serde_json::to_string_pretty(&Doc {
        workflows: &repo.workflows,
    })
    .expect("repository serialization cannot fail");
    out.push('\n');
    out
}

pub fn read_repository(path: impl AsRef<std::path::Path>) -> Result<Repository> {
    parse_repository(&std::fs::read(path)?)
}

/// Result of a train/test split.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Repository,
    pub test: Repository,
    /// Test workflows that use services absent from the training partition,
    /// mapped to those services. Their affected paths are held out downstream.
    pub unseen: BTreeMap<String, BTreeSet<String>>,
}

pub fn split_repository(repo: &Repository, train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidFraction(train_fraction));
    }
    let n = repo.len();
    if n < 2 {
        return Err(Error::TooFewWorkflows(n));
    }
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train_idx = order[..n_train].to_vec();
    let mut test_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let pick = |idx: &[usize]| -> Vec<Workflow> {
        idx.iter().map(|&i| repo.workflows[i].clone()).collect()
    };
    let train = Repository::new(pick(&train_idx))?;
    let test = Repository::new(pick(&test_idx))?;

    let known: HashSet<&str> = train.services.iter().map(|s| s.id.as_str()).collect();
    let unseen = test
        .workflows
        .iter()
        .filter_map(|w| {
            let missing: BTreeSet<String> = w
                .service_ids()
                .filter(|id| !known.contains(id))
                .map(str::to_string)
                .collect();
            (!missing.is_empty()).then(|| (w.id.clone(), missing))
        })
        .collect();

    Ok(Split {
        train,
        test,
        unseen,
    })
}
