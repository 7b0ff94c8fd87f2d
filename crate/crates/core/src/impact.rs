//! Before/after evaluation of reengineering interventions against matched
//! control files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::code_metrics::{CodeMetrics, Snapshot};
use crate::error::{Error, Result};
use crate::graph::DependencyLayer;
use crate::ingest::{ActivityProxy, CommitRecord, FileIdentityMap, IdentityId, TimeWindow};
use crate::prioritizer::{GraphScores, NetworkParams};
use crate::stats::{fisher_exact, mann_whitney_u, mean, median, wilcoxon_signed_rank, TestMethod};
use crate::DAY_SECS;

pub const DEFAULT_WINDOW_DAYS: i64 = 90;
pub const SIGNIFICANCE: f64 = 0.05;

/// Size strata edges: powers of 4 from 4 to 4^10 lines.
pub fn default_strata() -> Vec<u64> {
    (1..=10).map(|k| 4u64.pow(k)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionType {
    DeadCodeRemoval,
    CcnDecomposition,
    LargeClassDecomposition,
    Platformization,
    Custom,
}

/// On-disk intervention description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: InterventionType,
    pub commit_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_days: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_days: Option<i64>,
    /// Source tree as it was before the intervention.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_source: Option<String>,
    /// Source tree after the intervention.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionSet {
    pub name: String,
    pub kind: InterventionType,
    pub reengineering_commit_ids: BTreeSet<String>,
    pub touched_identities: BTreeSet<IdentityId>,
    pub t_start: i64,
    pub t_end: i64,
    /// `[t_start - pre, t_start)`.
    pub pre_window: TimeWindow,
    /// `(t_end, t_end + post]`.
    pub post_window: TimeWindow,
}

pub fn resolve_intervention(
    spec: &InterventionSpec,
    commits: &[CommitRecord],
    identities: &FileIdentityMap,
) -> Result<InterventionSet> {
    if spec.commit_ids.is_empty() {
        return Err(Error::InvalidParameter("intervention lists no commit ids".into()));
    }
    let pre_days = spec.pre_days.unwrap_or(DEFAULT_WINDOW_DAYS);
    let post_days = spec.post_days.unwrap_or(DEFAULT_WINDOW_DAYS);
    if pre_days <= 0 || post_days <= 0 {
        return Err(Error::InvalidParameter("window lengths must be positive".into()));
    }
    let wanted: BTreeSet<&str> = spec.commit_ids.iter().map(String::as_str).collect();
    let found: BTreeMap<&str, &CommitRecord> = commits
        .iter()
        .filter(|c| wanted.contains(c.commit_id.as_str()))
        .map(|c| (c.commit_id.as_str(), c))
        .collect();
    let missing: Vec<String> = wanted
        .iter()
        .filter(|id| !found.contains_key(*id))
        .map(|s| s.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::UnknownCommits(missing));
    }
    let t_start = found.values().map(|c| c.timestamp).min().expect("non-empty");
    let t_end = found.values().map(|c| c.timestamp).max().expect("non-empty");
    let touched = found.keys().flat_map(|id| identities.touched(id)).collect();
    Ok(InterventionSet {
        name: spec.name.clone(),
        kind: spec.kind,
        reengineering_commit_ids: found.keys().map(|s| s.to_string()).collect(),
        touched_identities: touched,
        t_start,
        t_end,
        pre_window: TimeWindow::new(t_start - pre_days * DAY_SECS, t_start),
        post_window: TimeWindow::new(t_end + 1, t_end + post_days * DAY_SECS + 1),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub reengineered: IdentityId,
    pub control: IdentityId,
    pub language: String,
    pub stratum: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<MatchedPair>,
    /// Treated files without a usable control, or without pre-period data.
    pub unmatched: Vec<IdentityId>,
}

/// Index of the size bucket: the number of edges at or below `sloc`.
pub fn stratum(sloc: u64, edges: &[u64]) -> usize {
    edges.partition_point(|&e| e <= sloc)
}

/// Greedy nearest-centrality matching without replacement.
///
/// Treated files are served in descending pre-period centrality (ties by
/// identity). Each takes the unused candidate with the same language and
/// size stratum and the smallest centrality distance, ties by identity.
pub fn match_controls(
    treated: &BTreeSet<IdentityId>,
    pool: &BTreeSet<IdentityId>,
    pre_scores: &BTreeMap<IdentityId, f64>,
    metrics: &BTreeMap<IdentityId, CodeMetrics>,
    strata: &[u64],
) -> Result<Matching> {
    if strata.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "strata edges must be strictly increasing".into(),
        ));
    }
    let mut out = Matching::default();
    let mut order: Vec<(IdentityId, f64)> = Vec::new();
    for &t in treated {
        match (pre_scores.get(&t), metrics.get(&t)) {
            (Some(&c), Some(_)) => order.push((t, c)),
            _ => out.unmatched.push(t),
        }
    }
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut available: BTreeSet<IdentityId> = pool
        .iter()
        .copied()
        .filter(|id| !treated.contains(id) && pre_scores.contains_key(id) && metrics.contains_key(id))
        .collect();
    for (t, c) in order {
        let m = &metrics[&t];
        let s = stratum(m.sloc, strata);
        let best = available
            .iter()
            .filter(|id| {
                let cm = &metrics[*id];
                cm.language == m.language && stratum(cm.sloc, strata) == s
            })
            .map(|&id| (id, (pre_scores[&id] - c).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        match best {
            Some((control, distance)) => {
                available.remove(&control);
                out.pairs.push(MatchedPair {
                    reengineered: t,
                    control,
                    language: m.language.clone(),
                    stratum: s,
                    distance,
                });
            }
            None => out.unmatched.push(t),
        }
    }
    out.unmatched.sort();
    Ok(out)
}

/// `(c(treated) / c(control))` before and after. `None` when a score is
/// missing or the control score is zero at either time.
pub fn adjusted_centrality(
    pair: &MatchedPair,
    scores_pre: &BTreeMap<IdentityId, f64>,
    scores_post: &BTreeMap<IdentityId, f64>,
) -> Option<(f64, f64)> {
    let ratio = |s: &BTreeMap<IdentityId, f64>| {
        let t = *s.get(&pair.reengineered)?;
        let c = *s.get(&pair.control)?;
        (c != 0.0).then(|| t / c)
    };
    Some((ratio(scores_pre)?, ratio(scores_post)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OddsRatio {
    pub value: f64,
    /// Haldane correction (0.5 added to every cell) was applied.
    pub corrected: bool,
}

/// `(pre_trigger * post_clean) / (pre_clean * post_trigger)`; above 1 means
/// the odds of a trigger fell after the intervention.
pub fn odds_ratio(pre_trigger: u64, pre_clean: u64, post_trigger: u64, post_clean: u64) -> Result<OddsRatio> {
    if pre_trigger + pre_clean + post_trigger + post_clean == 0 {
        return Err(Error::Empty("odds-ratio table"));
    }
    let corrected = pre_clean == 0 || post_trigger == 0;
    let k = if corrected { 0.5 } else { 0.0 };
    let [a, b, c, d] = [pre_trigger, pre_clean, post_trigger, post_clean].map(|x| x as f64 + k);
    Ok(OddsRatio {
        value: (a * d) / (b * c),
        corrected,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    OddsRatio,
    MedianRatio,
    MeanRelativeDelta,
}

/// Change of the metric from pre to post.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Decrease,
    Increase,
    NoChange,
    Undetermined,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub median: Option<f64>,
    pub mean: Option<f64>,
}

impl Summary {
    pub fn of(sample: &[f64]) -> Self {
        Summary {
            n: sample.len(),
            median: median(sample),
            mean: mean(sample),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisResult {
    pub hypothesis: String,
    pub metric: String,
    pub pre: Summary,
    pub post: Summary,
    pub effect_kind: EffectKind,
    pub effect: Option<f64>,
    pub test: Option<TestMethod>,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub exact: bool,
    pub direction: Direction,
    pub significant: bool,
    pub evaluable: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl HypothesisResult {
    fn new(hypothesis: &str, metric: &str, effect_kind: EffectKind) -> Self {
        HypothesisResult {
            hypothesis: hypothesis.into(),
            metric: metric.into(),
            pre: Summary::default(),
            post: Summary::default(),
            effect_kind,
            effect: None,
            test: None,
            statistic: None,
            p_value: None,
            exact: false,
            direction: Direction::Undetermined,
            significant: false,
            evaluable: false,
            notes: vec![],
        }
    }

    fn not_evaluable(mut self, why: impl Into<String>) -> Self {
        self.evaluable = false;
        self.notes.push(why.into());
        self
    }

    fn with_test(mut self, t: crate::stats::TestResult<f64>) -> Self {
        self.test = Some(t.method);
        self.statistic = Some(t.statistic);
        self.p_value = Some(t.p_value);
        self.exact = t.exact;
        self.significant = t.significant(SIGNIFICANCE);
        self.evaluable = true;
        if t.degenerate {
            self.notes.push("degenerate test input; p set to 1".into());
        }
        self
    }
}

fn ratio_direction(r: f64) -> Direction {
    if r < 1.0 {
        Direction::Decrease
    } else if r > 1.0 {
        Direction::Increase
    } else {
        Direction::NoChange
    }
}

fn delta_direction(d: f64) -> Direction {
    ratio_direction(1.0 + d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    pub intervention: String,
    pub kind: InterventionType,
    pub touched_files: Vec<String>,
    pub t_start: i64,
    pub t_end: i64,
    pub pre_window: TimeWindow,
    pub post_window: TimeWindow,
    pub pre_diffs: usize,
    pub post_diffs: usize,
    pub matched_pairs: usize,
    pub unmatched_files: Vec<String>,
    pub excluded_pairs: usize,
    pub alpha: f64,
    pub hypotheses: Vec<HypothesisResult>,
}

impl ImpactReport {
    /// True when some hypothesis could not be evaluated.
    pub fn has_warnings(&self) -> bool {
        self.hypotheses.iter().any(|h| !h.evaluable)
    }

    pub fn hypothesis(&self, name: &str) -> Option<&HypothesisResult> {
        self.hypotheses.iter().find(|h| h.hypothesis == name)
    }

    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        let mut s = format!(
            "intervention {} ({} files, {} pre diffs, {} post diffs, {} matched pairs)\n",
            self.intervention,
            self.touched_files.len(),
            self.pre_diffs,
            self.post_diffs,
            self.matched_pairs
        );
        let _ = writeln!(
            s,
            "{:<3} {:<22} {:>10} {:>10} {:>10} {:>10} {:<13} sig",
            "hyp", "metric", "pre_med", "post_med", "effect", "p", "direction"
        );
        for h in &self.hypotheses {
            let _ = writeln!(
                s,
                "{:<3} {:<22} {:>10} {:>10} {:>10} {:>10} {:<13} {}",
                h.hypothesis,
                h.metric,
                opt(h.pre.median),
                opt(h.post.median),
                opt(h.effect),
                opt(h.p_value),
                format!("{:?}", h.direction).to_lowercase(),
                if !h.evaluable {
                    "n/a"
                } else if h.significant {
                    "yes"
                } else {
                    "no"
                }
            );
        }
        s
    }
}

/// Everything `evaluate_impact` reads, already resolved to identities.
pub struct ImpactInputs<'a> {
    pub commits: &'a [CommitRecord],
    pub identities: &'a FileIdentityMap,
    pub activity: &'a BTreeMap<String, ActivityProxy>,
    pub metrics_pre: Option<&'a BTreeMap<IdentityId, CodeMetrics>>,
    pub metrics_post: Option<&'a BTreeMap<IdentityId, CodeMetrics>>,
    pub matching: &'a Matching,
    pub scores_pre: &'a BTreeMap<IdentityId, f64>,
    pub scores_post: &'a BTreeMap<IdentityId, f64>,
}

fn window_diffs<'a>(
    set: &InterventionSet,
    inputs: &ImpactInputs<'a>,
    window: TimeWindow,
) -> Vec<&'a CommitRecord> {
    inputs
        .commits
        .iter()
        .filter(|c| window.contains(c.timestamp))
        .filter(|c| !set.reengineering_commit_ids.contains(&c.commit_id))
        .filter(|c| {
            inputs
                .identities
                .commit_identities(&c.commit_id)
                .iter()
                .any(|id| set.touched_identities.contains(id))
        })
        .collect()
}

fn dat_sample(diffs: &[&CommitRecord], activity: &BTreeMap<String, ActivityProxy>) -> Result<Vec<f64>> {
    diffs
        .iter()
        .map(|c| {
            activity
                .get(&c.commit_id)
                .map(|a| a.dat_minutes)
                .ok_or_else(|| Error::Parse(format!("no activity proxy for commit {}", c.commit_id)))
        })
        .collect()
}

/// Per treated file with window activity, the number of distinct author
/// sessions that modified it.
fn session_sample(set: &InterventionSet, diffs: &[&CommitRecord], inputs: &ImpactInputs<'_>) -> Vec<f64> {
    let mut sessions: BTreeMap<IdentityId, BTreeSet<(&str, u32)>> = BTreeMap::new();
    for c in diffs {
        let Some(a) = inputs.activity.get(&c.commit_id) else {
            continue;
        };
        for id in inputs.identities.touched(&c.commit_id) {
            if set.touched_identities.contains(&id) {
                sessions
                    .entry(id)
                    .or_default()
                    .insert((&c.author_id, a.session_index));
            }
        }
    }
    sessions.values().map(|s| s.len() as f64).collect()
}

fn median_ratio_hypothesis(name: &str, metric: &str, pre: &[f64], post: &[f64]) -> Result<HypothesisResult> {
    let mut h = HypothesisResult::new(name, metric, EffectKind::MedianRatio);
    h.pre = Summary::of(pre);
    h.post = Summary::of(post);
    if pre.is_empty() || post.is_empty() {
        return Ok(h.not_evaluable("a window has no observations"));
    }
    let (mp, mq) = (
        h.pre.median.expect("non-empty"),
        h.post.median.expect("non-empty"),
    );
    if mp > 0.0 {
        h.effect = Some(mq / mp);
        h.direction = ratio_direction(mq / mp);
    }
    Ok(h.with_test(mann_whitney_u(pre, post)?))
}

fn paired_hypothesis(name: &str, metric: &str, pairs: &[(f64, f64)]) -> Result<HypothesisResult> {
    let mut h = HypothesisResult::new(name, metric, EffectKind::MeanRelativeDelta);
    if pairs.is_empty() {
        return Ok(h.not_evaluable("no paired observations"));
    }
    let pre: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let post: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    h.pre = Summary::of(&pre);
    h.post = Summary::of(&post);
    let rel: Vec<f64> = pairs
        .iter()
        .filter(|p| p.0 != 0.0)
        .map(|p| (p.1 - p.0) / p.0)
        .collect();
    if let Some(d) = mean(&rel) {
        h.effect = Some(d);
        h.direction = delta_direction(d);
    }
    Ok(h.with_test(wilcoxon_signed_rank(pairs)?))
}

/// Runs H1 to H5 over the intervention's pre and post windows.
///
/// Diff-level metrics use non-reengineering commits inside each window that
/// touch a treated file.
pub fn evaluate_impact(set: &InterventionSet, inputs: &ImpactInputs<'_>) -> Result<ImpactReport> {
    let pre = window_diffs(set, inputs, set.pre_window);
    let post = window_diffs(set, inputs, set.post_window);
    let mut hypotheses = Vec::with_capacity(5);

    // H1: outage odds.
    let mut h1 = HypothesisResult::new("H1", "outage_trigger", EffectKind::OddsRatio);
    let trig = |d: &[&CommitRecord]| d.iter().filter(|c| c.is_outage_trigger()).count() as u64;
    let (pt, qt) = (trig(&pre), trig(&post));
    let (pc, qc) = (pre.len() as u64 - pt, post.len() as u64 - qt);
    let rate = |t: u64, n: usize| vec![t as f64 / n.max(1) as f64];
    h1.pre = Summary {
        n: pre.len(),
        ..Summary::of(&rate(pt, pre.len()))
    };
    h1.post = Summary {
        n: post.len(),
        ..Summary::of(&rate(qt, post.len()))
    };
    let h1 = if pre.is_empty() || post.is_empty() {
        h1.not_evaluable("a window has no diffs")
    } else if pt == 0 && qt == 0 {
        h1.not_evaluable("no outage triggers in either window")
    } else {
        let or = odds_ratio(pt, pc, qt, qc)?;
        h1.effect = Some(or.value);
        // Above 1 the trigger odds fell.
        h1.direction = ratio_direction(1.0 / or.value);
        if or.corrected {
            h1.notes.push("Haldane correction applied".into());
        }
        h1.with_test(fisher_exact::<f64>(pt, pc, qt, qc)?)
    };
    hypotheses.push(h1);

    // H2: authoring time per diff.
    let dat_pre = dat_sample(&pre, inputs.activity)?;
    let dat_post = dat_sample(&post, inputs.activity)?;
    hypotheses.push(median_ratio_hypothesis("H2", "dat_minutes", &dat_pre, &dat_post)?);

    // H3: sessions per treated file.
    let s_pre = session_sample(set, &pre, inputs);
    let s_post = session_sample(set, &post, inputs);
    hypotheses.push(median_ratio_hypothesis(
        "H3",
        "sessions_per_file",
        &s_pre,
        &s_post,
    )?);

    // H4: adjusted centrality over matched pairs.
    let adjusted: Vec<(f64, f64)> = inputs
        .matching
        .pairs
        .iter()
        .filter_map(|p| adjusted_centrality(p, inputs.scores_pre, inputs.scores_post))
        .collect();
    let excluded_pairs = inputs.matching.pairs.len() - adjusted.len();
    let mut h4 = paired_hypothesis("H4", "adjusted_centrality", &adjusted)?;
    if excluded_pairs > 0 {
        h4.notes.push(format!(
            "{excluded_pairs} pairs excluded for missing or zero scores"
        ));
    }
    hypotheses.push(h4);

    // H5: complexity of treated files present in both snapshots.
    let h5 = match (inputs.metrics_pre, inputs.metrics_post) {
        (Some(mp), Some(mq)) => {
            let pairs: Vec<(f64, f64)> = set
                .touched_identities
                .iter()
                .filter_map(|id| Some((mp.get(id)?.ccn as f64, mq.get(id)?.ccn as f64)))
                .collect();
            let mut h = paired_hypothesis("H5", "ccn", &pairs)?;
            let dist = |m: &BTreeMap<IdentityId, CodeMetrics>| {
                let v: Vec<f64> = set
                    .touched_identities
                    .iter()
                    .filter_map(|id| m.get(id).map(|x| x.ccn as f64))
                    .collect();
                Summary::of(&v)
            };
            // Summaries cover deleted and created files as well.
            h.pre = dist(mp);
            h.post = dist(mq);
            h
        }
        _ => HypothesisResult::new("H5", "ccn", EffectKind::MeanRelativeDelta)
            .not_evaluable("pre and post source snapshots are both required"),
    };
    hypotheses.push(h5);

    let path = |id: &IdentityId| inputs.identities.current_path(*id).to_string();
    Ok(ImpactReport {
        intervention: set.name.clone(),
        kind: set.kind,
        touched_files: set.touched_identities.iter().map(path).collect(),
        t_start: set.t_start,
        t_end: set.t_end,
        pre_window: set.pre_window,
        post_window: set.post_window,
        pre_diffs: pre.len(),
        post_diffs: post.len(),
        matched_pairs: inputs.matching.pairs.len(),
        unmatched_files: inputs.matching.unmatched.iter().map(path).collect(),
        excluded_pairs,
        alpha: SIGNIFICANCE,
        hypotheses,
    })
}

/// Keys a path-keyed snapshot by identity. With `at`, paths are resolved as
/// they were named at that time; otherwise by current name.
pub fn metrics_by_identity(
    snapshot: &Snapshot,
    identities: &FileIdentityMap,
    at: Option<i64>,
) -> BTreeMap<IdentityId, CodeMetrics> {
    snapshot
        .files
        .iter()
        .filter_map(|(path, m)| {
            let id = match at {
                Some(ts) => identities.resolve_at(path, ts),
                None => identities.resolve_current(path),
            }?;
            Some((id, m.clone()))
        })
        .collect()
}

/// Shared inputs for the end-to-end impact pipeline.
pub struct ImpactContext<'a> {
    pub commits: &'a [CommitRecord],
    pub identities: &'a FileIdentityMap,
    pub activity: &'a BTreeMap<String, ActivityProxy>,
    pub dependency: &'a DependencyLayer,
    pub snapshot_pre: Option<&'a Snapshot>,
    pub snapshot_post: Option<&'a Snapshot>,
    pub network: NetworkParams,
    pub strata: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactRun {
    pub intervention: InterventionSet,
    pub matching: Matching,
    pub report: ImpactReport,
}

/// Resolves the intervention, scores the pre and post windows, matches
/// controls on pre-period size, language and Katz centrality, and evaluates.
pub fn run_impact(spec: &InterventionSpec, ctx: &ImpactContext<'_>) -> Result<ImpactRun> {
    let set = resolve_intervention(spec, ctx.commits, ctx.identities)?;
    let score = |w| GraphScores::compute(ctx.commits, ctx.identities, ctx.dependency, w, &ctx.network);
    let pre_scores = score(set.pre_window)?.file_katz;
    let post_scores = score(set.post_window)?.file_katz;
    let metrics_pre = ctx
        .snapshot_pre
        .map(|s| metrics_by_identity(s, ctx.identities, Some(set.t_start - 1)));
    let metrics_post = ctx
        .snapshot_post
        .map(|s| metrics_by_identity(s, ctx.identities, None));

    let matching = match &metrics_pre {
        Some(m) => {
            let pool: BTreeSet<IdentityId> = m.keys().copied().collect();
            match_controls(&set.touched_identities, &pool, &pre_scores, m, &ctx.strata)?
        }
        None => Matching {
            pairs: vec![],
            unmatched: set.touched_identities.iter().copied().collect(),
        },
    };
    let inputs = ImpactInputs {
        commits: ctx.commits,
        identities: ctx.identities,
        activity: ctx.activity,
        metrics_pre: metrics_pre.as_ref(),
        metrics_post: metrics_post.as_ref(),
        matching: &matching,
        scores_pre: &pre_scores,
        scores_post: &post_scores,
    };
    let report = evaluate_impact(&set, &inputs)?;
    Ok(ImpactRun {
        intervention: set,
        matching,
        report,
    })
}
