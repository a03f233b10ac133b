//! Small generated repositories with known structure.

use crate::provenance::{Edge, Repository, Service, Workflow};

pub const TOY_CHAINS: usize = 5;
pub const TOY_CHAIN_LEN: usize = 6;

const TOPICS: [(&str, &str); TOY_CHAINS] = [
    ("protein", "align protein sequences and fold structures"),
    ("genome", "assemble genome reads into annotated contigs"),
    ("climate", "regrid climate model output and plot anomalies"),
    ("image", "segment microscopy images and count cells"),
    ("network", "infer gene regulatory network from expression"),
];

/// Id of service `pos` on chain `chain`, e.g. `c2s3`.
pub fn toy_service(chain: usize, pos: usize) -> String {
    format!("c{chain}s{pos}")
}

fn chain_workflow(id: String, goal: String, chain: usize, fragments: &[std::ops::Range<usize>]) -> Workflow {
    let mut services = Vec::new();
    let mut edges = Vec::new();
    for range in fragments {
        services.extend(
            range
                .clone()
                .map(|p| Service::new(toy_service(chain, p), format!("{} step {p}", TOPICS[chain].0))),
        );
        edges.extend(
            range
                .clone()
                .zip(range.clone().skip(1))
                .map(|(a, b)| Edge::new(toy_service(chain, a), toy_service(chain, b))),
        );
    }
    Workflow {
        id,
        goal,
        services,
        edges,
    }
}

/// Five disjoint chains of six services each (30 services), four workflows
/// per chain (20 workflows): the full chain twice with different goal
/// phrasing, and two workflows made of chain fragments (`0-1-2, 3-4` and
/// `0-1, 2-3`). Every service except a chain's last has exactly one
/// successor in the whole repository, and every chain edge ends some
/// workflow fragment, so each successor is the target of a training path.
pub fn toy_repository() -> Repository {
    let mut workflows = Vec::new();
    for (c, (topic, goal)) in TOPICS.iter().enumerate() {
        let full = std::slice::from_ref(&(0..TOY_CHAIN_LEN));
        workflows.push(chain_workflow(format!("w{c}a"), goal.to_string(), c, full));
        workflows.push(chain_workflow(
            format!("w{c}b"),
            format!("{topic} analysis pipeline: {goal}"),
            c,
            full,
        ));
        workflows.push(chain_workflow(format!("w{c}c"), format!("{topic} preprocessing"), c, &[0..3, 3..5]));
        workflows.push(chain_workflow(format!("w{c}d"), format!("{topic} reporting"), c, &[0..2, 2..4]));
    }
    Repository::new(workflows).expect("toy repository is valid")
}
