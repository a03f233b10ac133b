//! End-to-end training: repository → graph → paths → goal vectors → model.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::goalvec::{train_goal_embedder, GoalEmbedder, GoalEmbedderConfig, TextPipelineConfig};
use crate::pathgen::{
    apply_dedup, compute_excluded_set, generate_paths, CompositionPath, Origin, TrainingInstance,
};
use crate::provenance::{serialize_repository, Repository};
use crate::seqmodel::{train_observed, IndexedInstance, Model, ModelParameters, TrainConfig, TrainReport};
use crate::skg::{build_skg, ServiceKnowledgeGraph};

/// SHA-256 of the canonical serialization of `repo`.
pub fn corpus_fingerprint(repo: &Repository) -> String {
    hex::encode(Sha256::digest(serialize_repository(repo).as_bytes()))
}

/// Paragraph-vector model over every workflow goal. Falls back to an empty
/// embedder when no goal text survives preprocessing.
pub fn fit_goal_embedder(repo: &Repository, dim: usize, config: &GoalEmbedderConfig) -> Result<GoalEmbedder> {
    let text = TextPipelineConfig::default();
    let corpus: Vec<(String, String)> = repo
        .workflows()
        .iter()
        .map(|w| (w.id.clone(), w.goal.clone()))
        .collect();
    match train_goal_embedder(&corpus, dim, config, &text) {
        Err(Error::EmptyCorpus(reason)) => {
            log::warn!("goal embedder not trained: {reason}");
            Ok(GoalEmbedder::empty(dim, config, &text))
        }
        other => other,
    }
}

/// Turns paths into training instances. Intra paths carry their workflow's
/// trained goal vector, inter paths the zero vector.
pub fn build_instances(
    skg: &ServiceKnowledgeGraph,
    paths: &[CompositionPath],
    embedder: &GoalEmbedder,
) -> Result<Vec<TrainingInstance>> {
    let zero = vec![0.0; embedder.dim];
    let mut instances = Vec::with_capacity(paths.len());
    for path in paths {
        let excluded = compute_excluded_set(skg, path)?;
        let goal = match (path.origin, &path.source_workflow) {
            (Origin::Intra, Some(w)) => embedder.doc_vector(w).unwrap_or_else(|| zero.clone()),
            _ => zero.clone(),
        };
        instances.extend(TrainingInstance::from_path(path, &excluded, goal));
    }
    Ok(instances)
}

#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: Model,
    pub report: TrainReport,
    pub paths: usize,
    pub mean_path_length: f64,
}

pub fn fit(repo: &Repository, config: &TrainConfig) -> Result<Fitted> {
    fit_observed(repo, config, |_, _, _| {})
}

/// [`fit`] calling `observe(epoch, params, instances)` after every epoch.
pub fn fit_observed(
    repo: &Repository,
    config: &TrainConfig,
    mut observe: impl FnMut(usize, &ModelParameters, &[IndexedInstance]),
) -> Result<Fitted> {
    config.validate()?;
    let skg = build_skg(repo);
    let paths = apply_dedup(generate_paths(&skg, config.strategy, config.seed)?, config.dedup);
    if paths.is_empty() {
        return Err(Error::EmptyCorpus("no composition paths of length 2 or more".into()));
    }
    let mean_path_length = paths.iter().map(|p| p.len()).sum::<usize>() as f64 / paths.len() as f64;
    log::info!(
        "{} {} paths, mean length {mean_path_length:.2}",
        paths.len(),
        config.strategy.name()
    );

    let goal_config = GoalEmbedderConfig {
        seed: config.seed,
        ..config.goal.clone()
    };
    let embedder = fit_goal_embedder(repo, config.dim, &goal_config)?;
    let instances = build_instances(&skg, &paths, &embedder)?;
    let params = ModelParameters::random(skg.vocabulary().clone(), config.dim, config.seed);
    let indexed = instances
        .iter()
        .map(|i| IndexedInstance::resolve(&params, i))
        .collect::<Result<Vec<_>>>()?;
    if indexed.is_empty() {
        return Err(Error::EmptyCorpus("no training instances".into()));
    }
    let (params, report) = train_observed(params, &indexed, config, |e, p| observe(e, p, &indexed))?;
    let train_config = TrainConfig {
        goal: goal_config,
        ..config.clone()
    };
    let model = Model::new(params, embedder, train_config, corpus_fingerprint(repo))?;
    Ok(Fitted {
        model,
        report,
        paths: paths.len(),
        mean_path_length,
    })
}
