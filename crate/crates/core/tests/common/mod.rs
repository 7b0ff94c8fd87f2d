#![allow(dead_code)]

use decaymap_core::code_metrics::LanguageSet;
use decaymap_core::code_metrics::Snapshot;
use decaymap_core::graph::dependency_from_paths;
use decaymap_core::impact::{default_strata, run_impact, ImpactContext, ImpactRun};
use decaymap_core::ingest::{
    build_rename_chains, sessionize_author_activity, CommitRecord, DEFAULT_FLOOR_MINUTES, DEFAULT_GAP_MINUTES,
};
use decaymap_core::prioritizer::NetworkParams;
use decaymap_core::synthgen::{snapshot_of, GeneratedRepo};

/// In-memory impact pipeline over explicit inputs.
pub fn impact_on(
    commits: &[CommitRecord],
    deps: &[(String, String)],
    pre: &Snapshot,
    post: &Snapshot,
    spec: &decaymap_core::impact::InterventionSpec,
) -> ImpactRun {
    let identities = build_rename_chains(commits).unwrap();
    let activity = sessionize_author_activity(commits, DEFAULT_GAP_MINUTES, DEFAULT_FLOOR_MINUTES).unwrap();
    let dependency = dependency_from_paths(deps.iter().map(|(a, b)| (a.as_str(), b.as_str())), &identities);
    run_impact(
        spec,
        &ImpactContext {
            commits,
            identities: &identities,
            activity: &activity,
            dependency: &dependency,
            snapshot_pre: Some(pre),
            snapshot_post: Some(post),
            network: NetworkParams::default(),
            strata: default_strata(),
        },
    )
    .unwrap()
}

pub fn impact_of(repo: &GeneratedRepo) -> ImpactRun {
    let langs = LanguageSet::default();
    impact_on(
        &repo.commits,
        &repo.dependencies,
        &snapshot_of(&repo.source_pre, &langs),
        &snapshot_of(&repo.source_post, &langs),
        repo.intervention.as_ref().unwrap(),
    )
}
