//! Deterministic synthetic repositories with planted effects.
//!
//! A scenario has a background team editing untreated files in short bursts,
//! plus an intervention team whose diffs on the treated files have planted
//! authoring times, outage rates and session counts on either side of a
//! reengineering change. Everything is driven by one seeded ChaCha stream.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::classifier::Category;
use crate::code_metrics::{file_metrics, LanguageSet, Snapshot};
use crate::error::{Error, Result};
use crate::impact::{InterventionSpec, InterventionType};
use crate::ingest::{
    build_rename_chains, write_commit_log, ChangeKind, CommitRecord, FileChange, FileIdentityMap,
    OutageAnnotation, DEFAULT_FLOOR_MINUTES, DEFAULT_GAP_MINUTES,
};
use crate::DAY_SECS;

const NEUTRAL_WORDS: &[&str] = &[
    "update", "fix", "tweak", "adjust", "handler", "parser", "config", "logging", "metrics", "timeout",
    "retry", "cache", "improve", "support", "for", "in", "the", "module", "widget", "service", "query",
    "flag", "limit", "path", "error", "message", "test", "docs", "bump", "version", "schema", "client",
    "server", "layout", "render",
];

/// Verbatim text planted for each category.
pub fn planted_pattern(category: Category) -> &'static str {
    match category {
        Category::Removal => "remove",
        Category::BetterEngineering => "better engineering",
        Category::Cleanup => "clean",
        Category::Refactor => "refactor",
        Category::DeadCode => "dead",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedIntervention {
    pub kind: InterventionType,
    pub treated_files: usize,
    pub team_authors: usize,
    pub diffs_per_side: usize,
    pub burst_len: usize,
    /// Median planted authoring time of a pre-period diff, in minutes.
    pub dat_median_minutes: f64,
    /// Log-scale spread of planted authoring times.
    pub dat_sigma: f64,
    pub dat_multiplier: f64,
    /// Scales the number of work sessions after the intervention.
    pub session_multiplier: f64,
    pub outage_rate: f64,
    pub outage_multiplier: f64,
    pub ccn_multiplier: f64,
    /// Treated files renamed by ordinary diffs in the post window.
    pub renamed_treated: usize,
    /// Treated files renamed by the reengineering commits themselves.
    pub renamed_in_intervention: usize,
    /// Treated files deleted by the reengineering commits.
    pub deleted_treated: usize,
    /// Day offset of the first reengineering commit.
    pub start_day: i64,
    pub commits: usize,
    pub window_days: i64,
}

impl Default for PlantedIntervention {
    fn default() -> Self {
        PlantedIntervention {
            kind: InterventionType::CcnDecomposition,
            treated_files: 8,
            team_authors: 3,
            diffs_per_side: 150,
            burst_len: 5,
            dat_median_minutes: 40.0,
            dat_sigma: 0.25,
            dat_multiplier: 0.5,
            session_multiplier: 1.0,
            outage_rate: 0.1,
            outage_multiplier: 0.5,
            ccn_multiplier: 0.6,
            renamed_treated: 2,
            renamed_in_intervention: 1,
            deleted_treated: 0,
            start_day: 300,
            commits: 3,
            window_days: 90,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub files: usize,
    pub authors: usize,
    /// Epoch seconds of the first commit.
    pub start_ts: i64,
    pub days: i64,
    pub background_commits: usize,
    pub max_files_per_commit: usize,
    /// Median gap between commits inside a background burst, in minutes.
    pub gap_median_minutes: f64,
    pub gap_sigma: f64,
    pub rename_probability: f64,
    pub outage_rate: f64,
    pub departed_fraction: f64,
    /// Fraction of all commit titles carrying each category's pattern.
    pub label_rates: BTreeMap<Category, f64>,
    /// Fraction of files written in Python; the rest are C.
    pub python_fraction: f64,
    /// Must match the sessionization settings used downstream.
    pub floor_minutes: f64,
    pub gap_minutes: f64,
    pub intervention: Option<PlantedIntervention>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            seed: 0,
            files: 60,
            authors: 10,
            start_ts: 1_600_000_000,
            days: 540,
            background_commits: 600,
            max_files_per_commit: 3,
            gap_median_minutes: 25.0,
            gap_sigma: 0.7,
            rename_probability: 0.03,
            outage_rate: 0.03,
            departed_fraction: 0.2,
            label_rates: [
                (Category::Removal, 0.10),
                (Category::BetterEngineering, 0.02),
                (Category::Cleanup, 0.03),
                (Category::Refactor, 0.02),
                (Category::DeadCode, 0.01),
            ]
            .into(),
            python_fraction: 0.3,
            floor_minutes: DEFAULT_FLOOR_MINUTES,
            gap_minutes: DEFAULT_GAP_MINUTES,
            intervention: Some(PlantedIntervention::default()),
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if ![
            self.rename_probability,
            self.outage_rate,
            self.departed_fraction,
            self.python_fraction,
        ]
        .into_iter()
        .all(prob)
            || !self.label_rates.values().copied().all(prob)
        {
            return bad("probabilities and rates must lie in [0, 1]");
        }
        if self.authors == 0 || self.max_files_per_commit == 0 {
            return bad("need at least one author and one file per commit");
        }
        if !(self.floor_minutes > 0.0 && self.gap_minutes > self.floor_minutes) {
            return bad("need gap_minutes > floor_minutes > 0");
        }
        if !(self.gap_median_minutes > 0.0 && self.gap_sigma >= 0.0) {
            return bad("gap distribution parameters must be positive");
        }
        let untreated = match &self.intervention {
            None => self.files,
            Some(iv) => {
                if ![
                    iv.dat_multiplier,
                    iv.session_multiplier,
                    iv.outage_multiplier,
                    iv.ccn_multiplier,
                ]
                .iter()
                .all(|m| *m > 0.0 && m.is_finite())
                {
                    return bad("effect multipliers must be positive");
                }
                if !prob(iv.outage_rate) {
                    return bad("outage_rate must lie in [0, 1]");
                }
                if iv.treated_files == 0 || iv.team_authors == 0 || iv.burst_len == 0 || iv.commits == 0 {
                    return bad("intervention needs treated files, authors, bursts and commits");
                }
                if iv.diffs_per_side == 0
                    || iv.dat_median_minutes.is_nan()
                    || iv.dat_median_minutes <= 0.0
                    || iv.dat_sigma.is_nan()
                    || iv.dat_sigma < 0.0
                {
                    return bad("intervention needs diffs and a positive authoring time");
                }
                if iv.renamed_treated + iv.renamed_in_intervention + iv.deleted_treated > iv.treated_files {
                    return bad("more treated renames and deletions than treated files");
                }
                let days_needed = iv.start_day + iv.commits as i64 + iv.window_days + 2;
                if iv.window_days < 10 || iv.start_day - iv.window_days < 2 || days_needed > self.days {
                    return bad("intervention windows do not fit inside the scenario");
                }
                let bursts_per_author = (iv.diffs_per_side as f64 * iv.session_multiplier.max(1.0)
                    / iv.burst_len as f64
                    / iv.team_authors as f64)
                    .ceil() as i64;
                if bursts_per_author > iv.window_days - 4 {
                    return bad("too many bursts per team author for the window");
                }
                self.files.saturating_sub(iv.treated_files)
            }
        };
        if untreated < 2 {
            return bad("need at least two untreated files");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Lang {
    C,
    Python,
}

struct FileModel {
    dir: String,
    stem: String,
    lang: Lang,
    branches: Vec<usize>,
    treated: bool,
}

impl FileModel {
    fn ext(&self) -> &'static str {
        match self.lang {
            Lang::C => "c",
            Lang::Python => "py",
        }
    }

    fn name(&self, version: usize) -> String {
        match version {
            0 => format!("{}/{}.{}", self.dir, self.stem, self.ext()),
            v => format!("{}/{}_v{}.{}", self.dir, self.stem, v, self.ext()),
        }
    }

    fn render(&self, ccn_multiplier: f64) -> String {
        let mut s = String::new();
        let branches = |b: usize| ((b as f64) * ccn_multiplier).round() as usize;
        match self.lang {
            Lang::C => {
                s.push_str(&format!("/* {} */\n#include <stdio.h>\n\n", self.stem));
                for (k, &b) in self.branches.iter().enumerate() {
                    s.push_str(&format!("int {}_f{}(int x) {{\n", self.stem, k));
                    for j in 0..branches(b) {
                        s.push_str(&format!("    if (x > {j}) {{\n        x = x + {k};\n    }}\n"));
                    }
                    s.push_str("    return x;\n}\n\n");
                }
            }
            Lang::Python => {
                s.push_str(&format!("# {}\n\n", self.stem));
                for (k, &b) in self.branches.iter().enumerate() {
                    s.push_str(&format!("def {}_f{}(x):\n", self.stem, k));
                    for j in 0..branches(b) {
                        s.push_str(&format!("    if x > {j}:\n        x = x + {k}\n"));
                    }
                    s.push_str("    return x\n\n");
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Add,
    Modify,
    Delete,
    Rename,
}

struct Draft {
    ts: i64,
    author: String,
    ops: Vec<(usize, Op)>,
    outage: Option<u32>,
    reengineering: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub commits: usize,
    pub identities: usize,
    pub renames: usize,
    /// Commit ids whose titles carry each category's planted pattern.
    pub labels: BTreeMap<Category, Vec<String>>,
    pub reengineering_commits: Vec<String>,
    pub treated_paths: Vec<String>,
    pub t_start: Option<i64>,
    pub t_end: Option<i64>,
    pub dat_multiplier: Option<f64>,
    pub session_multiplier: Option<f64>,
    pub outage_multiplier: Option<f64>,
    pub ccn_multiplier: Option<f64>,
    /// Planted authoring times of treated diffs, in minutes.
    pub planted_dat_pre: Vec<f64>,
    pub planted_dat_post: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedRepo {
    pub commits: Vec<CommitRecord>,
    pub roster: Vec<(String, Option<i64>)>,
    pub dependencies: Vec<(String, String)>,
    /// File contents keyed by path, as of just before the intervention.
    pub source_pre: BTreeMap<String, String>,
    /// File contents keyed by path at the end of history.
    pub source_post: BTreeMap<String, String>,
    pub intervention: Option<InterventionSpec>,
    pub truth: GroundTruth,
}

fn day_time(spec: &ScenarioSpec, day: i64, rng: &mut ChaCha8Rng) -> i64 {
    spec.start_ts + day * DAY_SECS + rng.random_range(8 * 3600..12 * 3600)
}

/// Distinct `k` values from `lo..hi`, sorted.
fn distinct_days(rng: &mut ChaCha8Rng, lo: i64, hi: i64, k: usize) -> Vec<i64> {
    let span = (hi - lo).max(0) as usize;
    let mut days: Vec<i64> = index::sample(rng, span, k.min(span))
        .into_iter()
        .map(|d| lo + d as i64)
        .collect();
    days.sort();
    days
}

pub fn generate(spec: &ScenarioSpec) -> Result<GeneratedRepo> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let iv = spec.intervention.clone();

    // File population.
    let mut files: Vec<FileModel> = (0..spec.files)
        .map(|i| {
            let lang = if rng.random_bool(spec.python_fraction) {
                Lang::Python
            } else {
                Lang::C
            };
            let nfn = rng.random_range(2..=8);
            FileModel {
                dir: format!("src/mod{}", i % 6),
                stem: format!("file{i:03}"),
                lang,
                branches: (0..nfn).map(|_| rng.random_range(0..=5)).collect(),
                treated: false,
            }
        })
        .collect();
    let treated: Vec<usize> = match &iv {
        Some(p) => {
            let mut t: Vec<usize> = index::sample(&mut rng, spec.files, p.treated_files).into_vec();
            t.sort();
            t
        }
        None => vec![],
    };
    for &t in &treated {
        files[t].treated = true;
    }
    let untreated: Vec<usize> = (0..spec.files).filter(|i| !files[*i].treated).collect();

    let authors: Vec<String> = (0..spec.authors).map(|i| format!("dev{i:02}")).collect();
    let mut drafts: Vec<Draft> = Vec::new();

    // Initial import, a handful of files per commit.
    for (k, chunk) in (0..spec.files).collect::<Vec<_>>().chunks(5).enumerate() {
        drafts.push(Draft {
            ts: spec.start_ts + k as i64 * 600,
            author: authors[k % authors.len()].clone(),
            ops: chunk.iter().map(|&f| (f, Op::Add)).collect(),
            outage: None,
            reengineering: false,
        });
    }

    // Background bursts on untreated files.
    let gap = LogNormal::new(spec.gap_median_minutes.ln(), spec.gap_sigma)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let per_author = spec.background_commits.div_ceil(authors.len());
    for author in &authors {
        let bursts = per_author.div_ceil(2).max(1);
        let days = distinct_days(&mut rng, 1, spec.days, bursts);
        let mut left = per_author;
        for day in days {
            if left == 0 {
                break;
            }
            let n = rng.random_range(1..=3usize).min(left);
            left -= n;
            let mut ts = day_time(spec, day, &mut rng);
            for _ in 0..n {
                let k = rng.random_range(1..=spec.max_files_per_commit.min(untreated.len()));
                let picked: Vec<usize> = untreated.choose_multiple(&mut rng, k).copied().collect();
                let rename_at = rng
                    .random_bool(spec.rename_probability)
                    .then(|| rng.random_range(0..k));
                let ops = picked
                    .iter()
                    .enumerate()
                    .map(|(j, &f)| {
                        (
                            f,
                            if rename_at == Some(j) {
                                Op::Rename
                            } else {
                                Op::Modify
                            },
                        )
                    })
                    .collect();
                let outage = rng.random_bool(spec.outage_rate).then(|| rng.random_range(1..=4));
                drafts.push(Draft {
                    ts,
                    author: author.clone(),
                    ops,
                    outage,
                    reengineering: false,
                });
                ts += (gap.sample(&mut rng).max(1.0) * 60.0) as i64;
            }
        }
    }

    let mut truth = GroundTruth {
        seed: spec.seed,
        ..GroundTruth::default()
    };
    let mut t_window = None;
    if let Some(p) = &iv {
        let team: Vec<String> = (0..p.team_authors).map(|i| format!("team{i:02}")).collect();
        let t_start_day = p.start_day;
        let t_end_day = p.start_day + p.commits as i64 - 1;
        let dat = LogNormal::new(p.dat_median_minutes.ln(), p.dat_sigma)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let max_dat = spec.gap_minutes + spec.floor_minutes - 1.0;
        let min_dat = spec.floor_minutes + 1.0;

        // Treated files renamed or deleted by the intervention, and renamed
        // afterwards, are disjoint.
        let mut order = treated.clone();
        order.shuffle(&mut rng);
        let deleted: BTreeSet<usize> = order.drain(..p.deleted_treated).collect();
        let renamed_reeng: Vec<usize> = order.drain(..p.renamed_in_intervention).collect();
        let renamed_post: Vec<usize> = order.drain(..p.renamed_treated).collect();

        for (side, lo, hi) in [
            (0, t_start_day - p.window_days + 1, t_start_day - 1),
            (1, t_end_day + 2, t_end_day + p.window_days),
        ] {
            let session_scale = if side == 0 { 1.0 } else { p.session_multiplier };
            let bursts = ((p.diffs_per_side as f64 / p.burst_len as f64) * session_scale)
                .round()
                .max(1.0) as usize;
            let alive: Vec<usize> = treated
                .iter()
                .copied()
                .filter(|f| side == 0 || !deleted.contains(f))
                .collect();
            let mut burst_sizes = vec![p.diffs_per_side / bursts; bursts];
            for b in burst_sizes.iter_mut().take(p.diffs_per_side % bursts) {
                *b += 1;
            }
            let mut author_days: Vec<Vec<i64>> = team
                .iter()
                .enumerate()
                .map(|(a, _)| {
                    let mine = bursts / team.len() + usize::from(a < bursts % team.len());
                    distinct_days(&mut rng, lo, hi, mine)
                })
                .collect();
            let mut renames_left: Vec<usize> = if side == 1 { renamed_post.clone() } else { vec![] };
            for (b, &size) in burst_sizes.iter().enumerate() {
                let a = b % team.len();
                let Some(day) = author_days[a].pop() else { continue };
                let mut ts = day_time(spec, day, &mut rng);
                drafts.push(Draft {
                    ts,
                    author: team[a].clone(),
                    ops: vec![(untreated[rng.random_range(0..untreated.len())], Op::Modify)],
                    outage: None,
                    reengineering: false,
                });
                for _ in 0..size {
                    let mut minutes = dat.sample(&mut rng);
                    if side == 1 {
                        minutes *= p.dat_multiplier;
                    }
                    let minutes = minutes.clamp(min_dat, max_dat);
                    let gap_secs = ((minutes - spec.floor_minutes) * 60.0).round() as i64;
                    ts += gap_secs;
                    let f = alive[rng.random_range(0..alive.len())];
                    let op = match renames_left.iter().position(|&r| r == f) {
                        Some(i) if b >= burst_sizes.len() / 2 => {
                            renames_left.remove(i);
                            Op::Rename
                        }
                        _ => Op::Modify,
                    };
                    let rate = if side == 0 {
                        p.outage_rate
                    } else {
                        (p.outage_rate * p.outage_multiplier).min(1.0)
                    };
                    let outage = rng.random_bool(rate).then(|| rng.random_range(1..=4));
                    drafts.push(Draft {
                        ts,
                        author: team[a].clone(),
                        ops: vec![(f, op)],
                        outage,
                        reengineering: false,
                    });
                    let planted = gap_secs as f64 / 60.0 + spec.floor_minutes;
                    if side == 0 {
                        truth.planted_dat_pre.push(planted);
                    } else {
                        truth.planted_dat_post.push(planted);
                    }
                }
            }
        }

        // Reengineering commits split the treated files among themselves.
        for k in 0..p.commits {
            let ops: Vec<(usize, Op)> = treated
                .iter()
                .enumerate()
                .filter(|(i, _)| i % p.commits == k)
                .map(|(_, &f)| {
                    let op = if deleted.contains(&f) {
                        Op::Delete
                    } else if renamed_reeng.contains(&f) {
                        Op::Rename
                    } else {
                        Op::Modify
                    };
                    (f, op)
                })
                .collect();
            if ops.is_empty() {
                continue;
            }
            drafts.push(Draft {
                ts: spec.start_ts + (t_start_day + k as i64) * DAY_SECS + 10 * 3600,
                author: team[0].clone(),
                ops,
                outage: None,
                reengineering: true,
            });
        }
        t_window = Some((
            spec.start_ts + t_start_day * DAY_SECS,
            spec.start_ts + (t_end_day + 1) * DAY_SECS,
        ));
        truth.dat_multiplier = Some(p.dat_multiplier);
        truth.session_multiplier = Some(p.session_multiplier);
        truth.outage_multiplier = Some(p.outage_multiplier);
        truth.ccn_multiplier = Some(p.ccn_multiplier);
    }

    // Materialize paths in time order.
    drafts.sort_by(|a, b| a.ts.cmp(&b.ts).then_with(|| a.author.cmp(&b.author)));
    let mut version = vec![0usize; files.len()];
    let mut alive = vec![false; files.len()];
    let mut names_pre: Option<Vec<String>> = None;
    let mut commits = Vec::with_capacity(drafts.len());
    let mut reeng_ids = Vec::new();
    for (i, d) in drafts.iter().enumerate() {
        if let (None, Some((t_start, _))) = (&names_pre, t_window) {
            if d.ts >= t_start {
                names_pre = Some((0..files.len()).map(|f| files[f].name(version[f])).collect());
            }
        }
        let id = format!("c{i:05}");
        let mut changes = Vec::with_capacity(d.ops.len());
        for &(f, op) in &d.ops {
            let before = files[f].name(version[f]);
            let churn = || 1 + (f as u64 * 7 + i as u64) % 20;
            changes.push(match op {
                Op::Add => {
                    alive[f] = true;
                    FileChange::add(before, churn())
                }
                Op::Modify => FileChange::modify(before, churn(), churn() / 2),
                Op::Delete => {
                    alive[f] = false;
                    FileChange::delete(before, churn())
                }
                Op::Rename => {
                    version[f] += 1;
                    truth.renames += 1;
                    FileChange::rename(before, files[f].name(version[f]))
                }
            });
        }
        if d.reengineering {
            reeng_ids.push(id.clone());
        }
        commits.push(CommitRecord {
            commit_id: id,
            author_id: d.author.clone(),
            timestamp: d.ts,
            message_title: String::new(),
            message_tags: vec![],
            file_changes: changes,
            outage: d.outage.map(|severity_level| OutageAnnotation { severity_level }),
        });
    }

    // Titles with exact planted label counts.
    let (titles, planted) = plant_titles(&mut rng, commits.len(), &spec.label_rates);
    for (c, t) in commits.iter_mut().zip(titles) {
        c.message_title = t;
    }
    truth.labels = planted
        .into_iter()
        .map(|(cat, idx)| {
            (
                cat,
                idx.into_iter().map(|i| commits[i].commit_id.clone()).collect(),
            )
        })
        .collect();

    // Roster: some background authors leave a day after their last commit.
    let end_ts = spec.start_ts + spec.days * DAY_SECS;
    let mut last_seen: BTreeMap<&str, i64> = BTreeMap::new();
    for c in &commits {
        last_seen.insert(&c.author_id, c.timestamp);
    }
    let departing: BTreeSet<usize> = index::sample(
        &mut rng,
        authors.len(),
        (authors.len() as f64 * spec.departed_fraction).round() as usize,
    )
    .into_iter()
    .collect();
    let mut roster: Vec<(String, Option<i64>)> = last_seen
        .iter()
        .map(|(a, &ts)| {
            let gone = authors
                .iter()
                .position(|x| x == a)
                .is_some_and(|i| departing.contains(&i));
            (
                a.to_string(),
                (gone && ts + DAY_SECS < end_ts).then_some(ts + DAY_SECS),
            )
        })
        .collect();
    roster.sort();

    // Static dependencies between live files, by final path.
    let mut dependencies = Vec::new();
    for f in 0..files.len() {
        if !alive[f] {
            continue;
        }
        for _ in 0..rng.random_range(0..=2) {
            let g = rng.random_range(0..files.len());
            if g != f && alive[g] {
                dependencies.push((files[f].name(version[f]), files[g].name(version[g])));
            }
        }
    }
    dependencies.sort();
    dependencies.dedup();

    let ccn_mult = iv.as_ref().map_or(1.0, |p| p.ccn_multiplier);
    let source_post: BTreeMap<String, String> = (0..files.len())
        .filter(|&f| alive[f])
        .map(|f| {
            let m = if files[f].treated { ccn_mult } else { 1.0 };
            (files[f].name(version[f]), files[f].render(m))
        })
        .collect();
    let source_pre: BTreeMap<String, String> = match names_pre {
        Some(names) => (0..files.len())
            .map(|f| (names[f].clone(), files[f].render(1.0)))
            .collect(),
        None => BTreeMap::new(),
    };

    let intervention = iv.as_ref().map(|p| InterventionSpec {
        name: "planted".into(),
        kind: p.kind,
        commit_ids: reeng_ids.clone(),
        pre_days: Some(p.window_days),
        post_days: Some(p.window_days),
        pre_source: Some("repo_pre".into()),
        post_source: Some("repo".into()),
    });
    let map = build_rename_chains(&commits)?;
    truth.commits = commits.len();
    truth.identities = map.len();
    truth.treated_paths = treated.iter().map(|&f| files[f].name(version[f])).collect();
    truth.treated_paths.sort();
    truth.reengineering_commits = reeng_ids;
    if let Some((s, _)) = t_window {
        truth.t_start = commits.iter().find(|c| c.timestamp >= s).map(|c| c.timestamp);
        truth.t_end = truth
            .reengineering_commits
            .last()
            .and_then(|id| commits.iter().find(|c| &c.commit_id == id))
            .map(|c| c.timestamp);
    }

    Ok(GeneratedRepo {
        commits,
        roster,
        dependencies,
        source_pre,
        source_post,
        intervention,
        truth,
    })
}

/// `n` titles from a pattern-free vocabulary, with each category's pattern
/// planted verbatim into exactly `round(rate * n)` of them.
pub fn plant_titles(
    rng: &mut impl Rng,
    n: usize,
    rates: &BTreeMap<Category, f64>,
) -> (Vec<String>, BTreeMap<Category, BTreeSet<usize>>) {
    let mut words: Vec<Vec<String>> = (0..n)
        .map(|_| {
            (0..rng.random_range(2..=4))
                .map(|_| NEUTRAL_WORDS[rng.random_range(0..NEUTRAL_WORDS.len())].to_string())
                .collect()
        })
        .collect();
    let mut planted = BTreeMap::new();
    for (&cat, &rate) in rates {
        let k = ((rate * n as f64).round() as usize).min(n);
        let chosen: BTreeSet<usize> = index::sample(rng, n, k).into_iter().collect();
        for &i in &chosen {
            let at = rng.random_range(0..=words[i].len());
            words[i].insert(at, planted_pattern(cat).to_string());
        }
        planted.insert(cat, chosen);
    }
    (words.into_iter().map(|w| w.join(" ")).collect(), planted)
}

/// Rewrites every path to its identity's final name and turns renames into
/// modifications, so the history has no renames left.
pub fn flatten_renames(commits: &[CommitRecord]) -> Result<Vec<CommitRecord>> {
    let map = build_rename_chains(commits)?;
    Ok(commits
        .iter()
        .map(|c| {
            let ids = map.commit_identities(&c.commit_id);
            let file_changes = c
                .file_changes
                .iter()
                .zip(ids)
                .map(|(fc, &id)| {
                    let path = map.current_path(id).to_string();
                    match fc.kind {
                        ChangeKind::Rename => FileChange::modify(path, fc.lines_added, fc.lines_deleted),
                        _ => FileChange {
                            path_before: fc.path_before.as_ref().map(|_| path.clone()),
                            path_after: fc.path_after.as_ref().map(|_| path.clone()),
                            ..fc.clone()
                        },
                    }
                })
                .collect();
            CommitRecord {
                file_changes,
                ..c.clone()
            }
        })
        .collect())
}

/// Renames snapshot paths as they were named at `at` to their final names.
pub fn flatten_snapshot(snapshot: &Snapshot, identities: &FileIdentityMap, at: i64) -> Snapshot {
    Snapshot {
        files: snapshot
            .files
            .iter()
            .map(|(p, m)| {
                let path = identities
                    .resolve_at(p, at)
                    .map_or_else(|| p.clone(), |id| identities.current_path(id).to_string());
                (path, m.clone())
            })
            .collect(),
        unreadable: snapshot.unreadable,
    }
}

/// Code metrics of in-memory sources.
pub fn snapshot_of(sources: &BTreeMap<String, String>, languages: &LanguageSet) -> Snapshot {
    Snapshot {
        files: sources
            .iter()
            .filter_map(|(p, text)| Some((p.clone(), file_metrics(text.as_bytes(), languages.for_path(p)?))))
            .collect(),
        unreadable: 0,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

impl GeneratedRepo {
    /// Writes `commits.jsonl`, `roster.csv`, `deps.csv`, `repo/`, `repo_pre/`,
    /// `intervention.json` and `ground_truth.json` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let mut log = Vec::new();
        write_commit_log(&mut log, &self.commits)?;
        write_file(&dir.join("commits.jsonl"), &log)?;

        let mut roster = String::from("author,departed_ts\n");
        for (a, ts) in &self.roster {
            roster.push_str(&format!(
                "{a},{}\n",
                ts.map(|t| t.to_string()).unwrap_or_default()
            ));
        }
        write_file(&dir.join("roster.csv"), roster.as_bytes())?;

        let mut deps = String::from("src,dst\n");
        for (s, d) in &self.dependencies {
            deps.push_str(&format!("{s},{d}\n"));
        }
        write_file(&dir.join("deps.csv"), deps.as_bytes())?;

        for (sub, tree) in [("repo", &self.source_post), ("repo_pre", &self.source_pre)] {
            for (p, text) in tree {
                write_file(&dir.join(sub).join(p), text.as_bytes())?;
            }
        }
        if let Some(iv) = &self.intervention {
            let mut text = serde_json::to_vec_pretty(iv)?;
            text.push(b'\n');
            write_file(&dir.join("intervention.json"), &text)?;
        }
        let mut text = serde_json::to_vec_pretty(&self.truth)?;
        text.push(b'\n');
        write_file(&dir.join("ground_truth.json"), &text)
    }
}
