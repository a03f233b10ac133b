//! Ranking metrics and the held-out evaluation harness.
//!
//! Every service of a test workflow is used as an anchor. The partial workflow
//! is the anchor plus everything upstream of it, the accuracy ground truth is
//! the anchor's direct successors in that workflow, and the diversity ground
//! truth is the anchor's successors anywhere in the training graph.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathgen::{Dedup, Strategy};
use crate::pipeline::fit;
use crate::provenance::{split_repository, Repository, Workflow};
use crate::recommender::{aggregate_distribution, extract_anchor_paths, rank, PartialWorkflow};
use crate::seqmodel::{Model, TrainConfig, TrainReport};
use crate::skg::{build_skg, ServiceKnowledgeGraph};

pub const DEFAULT_KS: [usize; 4] = [3, 5, 10, 20];

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::InvalidConfig("K must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// Distinct ground-truth items among the first `k`; a repeated item counts once.
fn hits<S: AsRef<str>>(ranked: &[S], truth: &HashSet<&str>, k: usize) -> usize {
    ranked
        .iter()
        .take(k)
        .map(AsRef::as_ref)
        .filter(|s| truth.contains(s))
        .collect::<HashSet<&str>>()
        .len()
}

/// |top-K ∩ G| / |G|.
pub fn recall_at_k<S: AsRef<str>>(ranked: &[S], truth: &HashSet<&str>, k: usize) -> Result<f64> {
    check_k(k)?;
    if truth.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    Ok(hits(ranked, truth, k) as f64 / truth.len() as f64)
}

/// Reciprocal rank of the first hit; 0 when nothing in the list hits.
pub fn mrr<S: AsRef<str>>(ranked: &[S], truth: &HashSet<&str>) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    Ok(ranked
        .iter()
        .position(|s| truth.contains(s.as_ref()))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64))
}

/// |top-K ∩ SS| / |SS| where SS holds every known successor of the anchor.
pub fn diversity_at_k<S: AsRef<str>>(ranked: &[S], sinks: &HashSet<&str>, k: usize) -> Result<f64> {
    recall_at_k(ranked, sinks, k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub train_fraction: f64,
    pub seed: u64,
    pub ks: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 42,
            ks: DEFAULT_KS.to_vec(),
        }
    }
}

/// Repository-level counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub workflows: usize,
    pub services: usize,
    pub edges: usize,
    pub distinct_relationships: usize,
    pub avg_services_per_workflow: f64,
    pub avg_edges_per_workflow: f64,
    pub mean_out_degree: f64,
}

impl CorpusStats {
    pub fn of(repo: &Repository) -> Self {
        let skg = build_skg(repo);
        let workflows = repo.len();
        let services = repo.services().len();
        let edges: usize = repo.workflows().iter().map(|w| w.edges.len()).sum();
        let member: usize = repo.workflows().iter().map(|w| w.services.len()).sum();
        let distinct = (0..services).map(|u| skg.neighbors_index(u).len()).sum::<usize>();
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Self {
            workflows,
            services,
            edges,
            distinct_relationships: distinct,
            avg_services_per_workflow: ratio(member, workflows),
            avg_edges_per_workflow: ratio(edges, workflows),
            mean_out_degree: ratio(distinct, services),
        }
    }
}

/// Metric means over some population (workflows or anchors).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub recall: BTreeMap<usize, f64>,
    pub mrr: f64,
    /// Averaged only over anchors that have successors in the training graph.
    pub diversity: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowResult {
    pub workflow: String,
    pub anchors: usize,
    pub metrics: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorCounts {
    pub evaluated: usize,
    /// Anchors with no successor in their workflow.
    pub without_successors: usize,
    /// Anchors whose ground truth or every anchor path involves services unseen in training.
    pub unseen: usize,
    /// Evaluated anchors excluded from diversity because the training graph has no successor for them.
    pub without_training_sinks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub strategy: Strategy,
    pub dedup: Dedup,
    pub dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub negatives: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub ks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ConfigEcho,
    pub corpus: CorpusStats,
    pub train_workflows: usize,
    pub test_workflows: usize,
    pub training_paths: Option<usize>,
    pub mean_training_path_length: Option<f64>,
    pub training_epochs: Option<usize>,
    pub anchors: AnchorCounts,
    /// Mean of per-workflow means.
    pub per_workflow_mean: MetricSummary,
    /// Mean over every evaluated anchor.
    pub per_anchor_mean: MetricSummary,
    pub workflows: Vec<WorkflowResult>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let c = &self.corpus;
        let _ = writeln!(out, "corpus");
        let _ = writeln!(out, "  workflows                 {}", c.workflows);
        let _ = writeln!(out, "  services                  {}", c.services);
        let _ = writeln!(out, "  edges                     {}", c.edges);
        let _ = writeln!(out, "  distinct relationships    {}", c.distinct_relationships);
        let _ = writeln!(out, "  avg services / workflow   {:.2}", c.avg_services_per_workflow);
        let _ = writeln!(out, "  avg edges / workflow      {:.2}", c.avg_edges_per_workflow);
        let _ = writeln!(out, "  mean out-degree           {:.2}", c.mean_out_degree);
        let _ = writeln!(
            out,
            "split {} train / {} test, strategy {}, dedup {}",
            self.train_workflows,
            self.test_workflows,
            self.config.strategy.name(),
            self.config.dedup.name()
        );
        let a = &self.anchors;
        let _ = writeln!(
            out,
            "anchors evaluated {}, no successor {}, unseen {}, no training sinks {}",
            a.evaluated, a.without_successors, a.unseen, a.without_training_sinks
        );
        let _ = writeln!(out);
        let _ = write!(out, "{:<14}", "metric");
        let _ = writeln!(out, "{:>14}{:>14}", "per-workflow", "per-anchor");
        let (w, p) = (&self.per_workflow_mean, &self.per_anchor_mean);
        for k in &self.config.ks {
            let _ = writeln!(out, "{:<14}{:>14.4}{:>14.4}", format!("Recall@{k}"), w.recall[k], p.recall[k]);
        }
        let _ = writeln!(out, "{:<14}{:>14.4}{:>14.4}", "MRR", w.mrr, p.mrr);
        for k in &self.config.ks {
            let _ = writeln!(
                out,
                "{:<14}{:>14.4}{:>14.4}",
                format!("Diversity@{k}"),
                w.diversity.get(k).copied().unwrap_or(0.0),
                p.diversity.get(k).copied().unwrap_or(0.0)
            );
        }
        out
    }
}

#[derive(Default)]
struct Accumulator {
    n: usize,
    recall: BTreeMap<usize, f64>,
    mrr: f64,
    diversity_n: usize,
    diversity: BTreeMap<usize, f64>,
}

impl Accumulator {
    fn add(&mut self, m: &MetricSummary, with_diversity: bool) {
        self.n += 1;
        for (k, v) in &m.recall {
            *self.recall.entry(*k).or_default() += v;
        }
        self.mrr += m.mrr;
        if with_diversity {
            self.diversity_n += 1;
            for (k, v) in &m.diversity {
                *self.diversity.entry(*k).or_default() += v;
            }
        }
    }

    fn mean(&self) -> MetricSummary {
        let n = self.n.max(1) as f64;
        let dn = self.diversity_n.max(1) as f64;
        MetricSummary {
            recall: self.recall.iter().map(|(k, v)| (*k, v / n)).collect(),
            mrr: self.mrr / n,
            diversity: self.diversity.iter().map(|(k, v)| (*k, v / dn)).collect(),
        }
    }
}

/// Evaluates `model` on `test` workflows, with diversity measured against
/// successors in `train_skg`.
pub fn evaluate_model(
    model: &Model,
    train_skg: &ServiceKnowledgeGraph,
    test: &[&Workflow],
    ks: &[usize],
) -> Result<(Vec<WorkflowResult>, MetricSummary, MetricSummary, AnchorCounts)> {
    for &k in ks {
        check_k(k)?;
    }
    let params = &model.params;
    let vocab = &params.vocabulary;
    let mut counts = AnchorCounts {
        evaluated: 0,
        without_successors: 0,
        unseen: 0,
        without_training_sinks: 0,
    };
    let mut per_workflow = Vec::new();
    let mut workflow_acc = Accumulator::default();
    let mut anchor_acc = Accumulator::default();

    for w in test {
        let goal = model.goal_embedder.infer(&w.goal);
        let mut acc = Accumulator::default();
        for anchor in w.service_ids() {
            let truth: HashSet<&str> = w.sinks_of(anchor).collect();
            if truth.is_empty() {
                counts.without_successors += 1;
                continue;
            }
            if !vocab.contains(anchor) || truth.iter().any(|s| !vocab.contains(s)) {
                counts.unseen += 1;
                continue;
            }
            let pw = PartialWorkflow::upstream_of(w, anchor)?;
            let paths: Vec<Vec<String>> = extract_anchor_paths(&pw, anchor)?
                .into_iter()
                .filter(|p| p.iter().all(|s| vocab.contains(s)))
                .collect();
            if paths.is_empty() {
                counts.unseen += 1;
                continue;
            }
            let composed: BTreeSet<String> = pw.service_ids().map(str::to_string).collect();
            let dist = aggregate_distribution(params, &paths, &composed, ArrayView1::from(&goal))?;
            let composed_refs: HashSet<&str> = composed.iter().map(String::as_str).collect();
            let ranked: Vec<String> = rank(params, &dist, &composed_refs)
                .into_iter()
                .map(|c| c.service_id)
                .collect();

            let sinks: HashSet<&str> = train_skg.sinks(anchor).into_iter().collect();
            let mut m = MetricSummary {
                recall: BTreeMap::new(),
                mrr: mrr(&ranked, &truth)?,
                diversity: BTreeMap::new(),
            };
            for &k in ks {
                m.recall.insert(k, recall_at_k(&ranked, &truth, k)?);
                if !sinks.is_empty() {
                    m.diversity.insert(k, diversity_at_k(&ranked, &sinks, k)?);
                }
            }
            if sinks.is_empty() {
                counts.without_training_sinks += 1;
            }
            counts.evaluated += 1;
            acc.add(&m, !sinks.is_empty());
            anchor_acc.add(&m, !sinks.is_empty());
        }
        if acc.n > 0 {
            let mean = acc.mean();
            workflow_acc.add(&mean, acc.diversity_n > 0);
            per_workflow.push(WorkflowResult {
                workflow: w.id.clone(),
                anchors: acc.n,
                metrics: mean,
            });
        }
    }
    if counts.evaluated == 0 {
        return Err(Error::EmptyTestSet);
    }
    Ok((per_workflow, workflow_acc.mean(), anchor_acc.mean(), counts))
}

/// Splits `repo`, trains on the training part (or uses `model`), and evaluates
/// on the held-out workflows.
pub fn run_experiment(
    repo: &Repository,
    train_config: &TrainConfig,
    eval_config: &EvalConfig,
    model: Option<&Model>,
) -> Result<(EvalReport, Option<Model>)> {
    let split = split_repository(repo, eval_config.train_fraction, eval_config.seed)?;
    let train_repo = split.train;
    let test = split.test.workflows();

    let (fitted_model, report): (Option<Model>, Option<(TrainReport, usize, f64)>) = match model {
        Some(_) => (None, None),
        None => {
            let f = fit(&train_repo, train_config)?;
            (Some(f.model), Some((f.report, f.paths, f.mean_path_length)))
        }
    };
    let used = model.or(fitted_model.as_ref()).expect("a model is available");
    let skg = build_skg(&train_repo);
    let refs: Vec<&Workflow> = test.iter().collect();
    let (workflows, per_workflow_mean, per_anchor_mean, anchors) =
        evaluate_model(used, &skg, &refs, &eval_config.ks)?;

    let tc = &used.train_config;
    let eval = EvalReport {
        config: ConfigEcho {
            strategy: tc.strategy,
            dedup: tc.dedup,
            dim: tc.dim,
            learning_rate: tc.learning_rate,
            epochs: tc.max_epochs,
            negatives: tc.negatives,
            seed: eval_config.seed,
            train_fraction: eval_config.train_fraction,
            ks: eval_config.ks.clone(),
        },
        corpus: CorpusStats::of(repo),
        train_workflows: train_repo.len(),
        test_workflows: test.len(),
        training_paths: report.as_ref().map(|r| r.1),
        mean_training_path_length: report.as_ref().map(|r| r.2),
        training_epochs: report.as_ref().map(|r| r.0.epochs()),
        anchors,
        per_workflow_mean,
        per_anchor_mean,
        workflows,
    };
    Ok((eval, fitted_model))
}
