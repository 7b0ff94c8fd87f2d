//! Acceptance criteria. Each test prints one PASS/FAIL line, then asserts.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use decaymap_core::centrality::{default_katz_alpha, katz_centrality, SparseGraph};
use decaymap_core::classifier::{corpus_report, PatternSet};
use decaymap_core::code_metrics::{CodeMetrics, LanguageSet};
use decaymap_core::impact::{default_strata, match_controls, odds_ratio};
use decaymap_core::ingest::{build_rename_chains, CommitRecord, FileChange, IdentityId, TimeWindow};
use decaymap_core::prioritizer::{compute_file_metrics, NetworkScores, PrioritizerConfig, PrioritizerInputs};
use decaymap_core::stats::{fisher_exact, mann_whitney_u, wilcoxon_signed_rank};
use decaymap_core::synthgen::{
    flatten_renames, flatten_snapshot, generate, plant_titles, snapshot_of, PlantedIntervention, ScenarioSpec,
};
use decaymap_core::workspace::{self, Workspace};

fn verdict(n: u32, what: &str, ok: bool, detail: String) {
    println!(
        "{} criterion {n}: {what} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {n} failed: {detail}");
}

#[test]
fn criterion_1_odds_ratio_anchor() {
    let t = Instant::now();
    let or = odds_ratio(80, 72, 20, 28).unwrap();
    let ok = (or.value - 1.55).abs() <= 0.01 && (or.value - 1.556).abs() < 5e-4 && !or.corrected;
    verdict(
        1,
        "odds ratio of 80:72 against 20:28",
        ok,
        format!("OR = {:.4}, {:?}", or.value, t.elapsed()),
    );
}

fn dense_katz(n: usize, edges: &[(usize, usize, f64)], alpha: f64) -> Vec<f64> {
    // x = alpha * A^T x + 1  <=>  (I - alpha A^T) x = 1
    let mut m = DMatrix::<f64>::identity(n, n);
    for &(u, v, w) in edges {
        m[(v, u)] -= alpha * w;
    }
    let x = m.lu().solve(&DVector::from_element(n, 1.0)).expect("nonsingular");
    let max = x.iter().copied().fold(f64::MIN, f64::max);
    x.iter().map(|v| v / max).collect()
}

#[test]
fn criterion_2_katz_matches_dense_solve() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=50usize);
        let p = rng.random_range(0.02..0.3);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in 0..n {
                if u != v && rng.random_bool(p) {
                    edges.push((u, v, rng.random_range(0.1..2.0)));
                }
            }
        }
        let g = SparseGraph::from_edges(n, edges.clone());
        let alpha = default_katz_alpha(&g, 0.5);
        let iter = katz_centrality(&g, alpha, 1.0, 1e-13, 100_000).unwrap();
        let oracle = dense_katz(n, &edges, alpha);
        for (a, b) in iter.scores.iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
    }
    verdict(
        2,
        "Katz vs dense linear solve on 200 digraphs",
        worst <= 1e-8,
        format!("max error {worst:.2e}, {:?}", t.elapsed()),
    );
}

fn binom(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn fisher_oracle(a: u64, b: u64, c: u64, d: u64) -> f64 {
    let (r1, r2, c1) = (a + b, c + d, a + c);
    let n = r1 + r2;
    let denom = binom(n, c1) as f64;
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let probs: Vec<(u64, f64)> = (lo..=hi)
        .map(|x| (x, (binom(r1, x) * binom(r2, c1 - x)) as f64 / denom))
        .collect();
    let obs = probs.iter().find(|(x, _)| *x == a).unwrap().1;
    probs
        .iter()
        .filter(|(_, p)| *p <= obs * (1.0 + 1e-7))
        .map(|(_, p)| p)
        .sum::<f64>()
        .min(1.0)
}

/// Midranks by direct counting.
fn midranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let less = v.iter().filter(|y| *y < x).count() as f64;
            let eq = v.iter().filter(|y| *y == x).count() as f64;
            less + (eq + 1.0) / 2.0
        })
        .collect()
}

fn mwu_oracle(x: &[f64], y: &[f64]) -> f64 {
    let all: Vec<f64> = x.iter().chain(y).copied().collect();
    let r = midranks(&all);
    let n = all.len();
    let k = x.len();
    let center = k as f64 * (n as f64 + 1.0) / 2.0;
    let obs = (r[..k].iter().sum::<f64>() - center).abs();
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        total += 1;
        let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| r[i]).sum();
        if (s - center).abs() >= obs - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

fn wilcoxon_oracle(pairs: &[(f64, f64)]) -> f64 {
    let d: Vec<f64> = pairs.iter().map(|(a, b)| b - a).filter(|d| *d != 0.0).collect();
    let r = midranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let n = d.len();
    let total: f64 = r.iter().sum();
    let w: f64 = r.iter().zip(&d).filter(|(_, v)| **v > 0.0).map(|(r, _)| r).sum();
    let obs = (2.0 * w - total).abs();
    let hits = (0u32..(1 << n))
        .filter(|mask| {
            let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| r[i]).sum();
            (2.0 * s - total).abs() >= obs - 1e-9
        })
        .count();
    hits as f64 / (1u64 << n) as f64
}

#[test]
fn criterion_3_exact_tests_match_enumeration() {
    let t = Instant::now();
    let mut fisher_worst = 0.0f64;
    let mut tables = 0usize;
    for a in 0..=40u64 {
        for b in 0..=40 - a {
            for c in 0..=40 - a - b {
                for d in 0..=40 - a - b - c {
                    if a + b + c + d == 0 {
                        continue;
                    }
                    let p = fisher_exact::<f64>(a, b, c, d).unwrap().p_value;
                    fisher_worst = fisher_worst.max((p - fisher_oracle(a, b, c, d)).abs());
                    tables += 1;
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mwu_worst = 0.0f64;
    for case in 0..60 {
        let n = if case < 4 {
            20
        } else {
            rng.random_range(2..=16usize)
        };
        let k = rng.random_range(1..n);
        let vals: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
        if vals.iter().all(|v| *v == vals[0]) {
            continue;
        }
        let (x, y) = vals.split_at(k);
        let p = mann_whitney_u(x, y).unwrap();
        assert!(p.exact);
        mwu_worst = mwu_worst.max((p.p_value - mwu_oracle(x, y)).abs());
    }

    let mut wil_worst = 0.0f64;
    for _ in 0..60 {
        let n = rng.random_range(1..=15usize);
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random_range(0..5) as f64, rng.random_range(0..5) as f64))
            .collect();
        if pairs.iter().all(|(a, b)| a == b) {
            continue;
        }
        let p = wilcoxon_signed_rank(&pairs).unwrap();
        assert!(p.exact);
        wil_worst = wil_worst.max((p.p_value - wilcoxon_oracle(&pairs)).abs());
    }
    let ok = fisher_worst <= 1e-10 && mwu_worst <= 1e-10 && wil_worst <= 1e-10;
    verdict(
        3,
        "Fisher, Mann-Whitney and Wilcoxon vs exhaustive enumeration",
        ok,
        format!(
            "{tables} tables, errors {fisher_worst:.1e} / {mwu_worst:.1e} / {wil_worst:.1e}, {:?}",
            t.elapsed()
        ),
    );
}

fn commit_with_title(i: usize, title: String) -> CommitRecord {
    CommitRecord {
        commit_id: format!("m{i}"),
        author_id: "a".into(),
        timestamp: i as i64,
        message_title: title,
        message_tags: vec![],
        file_changes: vec![FileChange::modify("x.c", 1, 0)],
        outage: None,
    }
}

#[test]
fn criterion_4_planted_labels_recovered() {
    let t = Instant::now();
    let patterns = PatternSet::default();
    let rates = ScenarioSpec::default().label_rates;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (titles, planted) = plant_titles(&mut rng, 1000, &rates);
    let corpus: Vec<CommitRecord> = titles
        .into_iter()
        .enumerate()
        .map(|(i, t)| commit_with_title(i, t))
        .collect();
    let mut exact = true;
    for c in &corpus {
        let got: BTreeSet<_> = patterns
            .classify(&c.message_title, &c.message_tags)
            .into_iter()
            .map(|l| l.category)
            .collect();
        let i: usize = c.commit_id[1..].parse().unwrap();
        let want: BTreeSet<_> = planted
            .iter()
            .filter(|(_, s)| s.contains(&i))
            .map(|(k, _)| *k)
            .collect();
        exact &= got == want;
    }

    let mut overlap_ok = true;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let rates: BTreeMap<_, _> = rates.keys().map(|k| (*k, rng.random_range(0.0..0.6))).collect();
        let n = rng.random_range(1..300);
        let (titles, _) = plant_titles(&mut rng, n, &rates);
        let corpus: Vec<_> = titles
            .into_iter()
            .enumerate()
            .map(|(i, t)| commit_with_title(i, t))
            .collect();
        let r = corpus_report(&corpus, &patterns).unwrap();
        overlap_ok &= r.union_count <= r.categories.iter().map(|c| c.count).sum::<usize>();
        overlap_ok &= r.union_percent <= r.sum_percent + 1e-9;
    }
    verdict(
        4,
        "planted label recovery and union <= sum",
        exact && overlap_ok,
        format!("exact {exact}, overlap {overlap_ok}, {:?}", t.elapsed()),
    );
}

#[test]
fn criterion_5_rename_invariance() {
    let t = Instant::now();
    let langs = LanguageSet::default();
    let mut identical = true;
    let mut renames = 0;
    for seed in 0..5 {
        let spec = ScenarioSpec {
            seed,
            rename_probability: 0.1,
            ..ScenarioSpec::default()
        };
        let repo = generate(&spec).unwrap();
        renames += repo.truth.renames;
        let spec_iv = repo.intervention.as_ref().unwrap();
        let pre = snapshot_of(&repo.source_pre, &langs);
        let post = snapshot_of(&repo.source_post, &langs);
        let original = common::impact_on(&repo.commits, &repo.dependencies, &pre, &post, spec_iv);

        let map = build_rename_chains(&repo.commits).unwrap();
        let flat = flatten_renames(&repo.commits).unwrap();
        let t_start = original.intervention.t_start;
        let flat_pre = flatten_snapshot(&pre, &map, t_start - 1);
        let flattened = common::impact_on(&flat, &repo.dependencies, &flat_pre, &post, spec_iv);
        let a = serde_json::to_vec_pretty(&original.report).unwrap();
        let b = serde_json::to_vec_pretty(&flattened.report).unwrap();
        identical &= a == b;
    }
    verdict(
        5,
        "impact report identical with renames and pre-flattened names",
        identical && renames > 0,
        format!("{renames} renames over 5 corpora, {:?}", t.elapsed()),
    );
}

#[test]
fn criterion_6_planted_effect_sensitivity() {
    let t = Instant::now();
    let run = |mult: f64| {
        let mut in_band = 0;
        let mut significant = 0;
        let mut min_n = usize::MAX;
        for seed in 0..100 {
            let spec = ScenarioSpec {
                seed,
                intervention: Some(PlantedIntervention {
                    dat_multiplier: mult,
                    ..PlantedIntervention::default()
                }),
                ..ScenarioSpec::default()
            };
            let repo = generate(&spec).unwrap();
            let report = common::impact_of(&repo).report;
            let h2 = report.hypothesis("H2").unwrap();
            min_n = min_n.min(h2.pre.n.min(h2.post.n));
            let ratio = h2.effect.unwrap();
            if (0.45..=0.55).contains(&ratio) {
                in_band += 1;
            }
            if h2.p_value.unwrap() < 0.05 {
                significant += 1;
            }
        }
        (in_band, significant, min_n)
    };
    let (band, sig, n_half) = run(0.5);
    let (_, null_sig, n_null) = run(1.0);
    let ok = band >= 95 && sig >= 95 && null_sig <= 7 && n_half >= 30 && n_null >= 30;
    verdict(
        6,
        "planted DAT multiplier detected, null controlled",
        ok,
        format!(
            "x0.5: ratio in band {band}/100, p<0.05 {sig}/100; x1.0: p<0.05 {null_sig}/100; min n {}; {:?}",
            n_half.min(n_null),
            t.elapsed()
        ),
    );
}

#[test]
fn criterion_7_geometric_mean_columns() {
    let t = Instant::now();
    let e = std::f64::consts::E;
    let commits: Vec<CommitRecord> = vec![
        ("1", 100, vec!["f.c"]),
        ("2", 200, vec!["f.c"]),
        ("3", 300, vec!["a.c", "b.c", "c.c", "d.c", "e.c"]),
    ]
    .into_iter()
    .map(|(id, ts, paths)| CommitRecord {
        commit_id: id.into(),
        author_id: if id == "3" { "y".into() } else { "x".into() },
        timestamp: ts,
        message_title: String::new(),
        message_tags: vec![],
        file_changes: paths.into_iter().map(|p| FileChange::modify(p, 1, 0)).collect(),
        outage: None,
    })
    .collect();
    let act: BTreeMap<String, _> = [("1", e), ("2", e.powi(3)), ("3", 10.0)]
        .into_iter()
        .map(|(id, d)| {
            (
                id.to_string(),
                decaymap_core::ingest::ActivityProxy {
                    dat_minutes: d,
                    session_count: 1,
                    session_index: 0,
                },
            )
        })
        .collect();
    let map = build_rename_chains(&commits).unwrap();
    let window = TimeWindow::new(0, 1000);
    let scores = NetworkScores::compute(
        &commits,
        &map,
        &Default::default(),
        window,
        8,
        &Default::default(),
    )
    .unwrap();
    let table = compute_file_metrics(
        &PrioritizerInputs {
            commits: &commits,
            identities: &map,
            activity: &act,
            scores: &scores,
            code_metrics: None,
            roster: None,
        },
        &PrioritizerConfig {
            window,
            cochange_threshold: 0.2,
        },
    )
    .unwrap();
    let f = table.rows.iter().find(|r| r.current_path == "f.c").unwrap();
    let geo = (f.avg_dat - e * e).abs();
    let norm_ok = table
        .rows
        .iter()
        .filter(|r| r.current_path != "f.c")
        .all(|r| r.tot_norm_dat == 2.0);
    verdict(
        7,
        "geometric-mean and normalized DAT columns",
        geo <= 1e-12 && norm_ok,
        format!(
            "|avgDAT - e^2| = {geo:.1e}, totNormDAT exact {norm_ok}, {:?}",
            t.elapsed()
        ),
    );
}

#[test]
fn criterion_8_matching_is_constrained_argmin() {
    let t = Instant::now();
    let strata = default_strata();
    let bucket = |sloc: u64| strata.iter().filter(|e| **e <= sloc).count();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ok = true;
    let mut pairs_checked = 0;
    for _ in 0..500 {
        let n = rng.random_range(2..=20u32);
        let metrics: BTreeMap<IdentityId, CodeMetrics> = (0..n)
            .map(|i| {
                let lang = ["c", "python", "java"][rng.random_range(0..3)];
                (
                    IdentityId(i),
                    CodeMetrics {
                        sloc: rng.random_range(1..300),
                        ccn: 1,
                        language: lang.into(),
                        flagged: false,
                    },
                )
            })
            .collect();
        // Coarse scores so ties happen.
        let scores: BTreeMap<IdentityId, f64> = (0..n)
            .map(|i| (IdentityId(i), rng.random_range(0..10) as f64 / 10.0))
            .collect();
        let k = rng.random_range(1..=n.div_ceil(2));
        let treated: BTreeSet<IdentityId> = rand::seq::index::sample(&mut rng, n as usize, k as usize)
            .into_iter()
            .map(|i| IdentityId(i as u32))
            .collect();
        let pool: BTreeSet<IdentityId> = metrics.keys().copied().collect();
        let m = match_controls(&treated, &pool, &scores, &metrics, &strata).unwrap();

        // Exhaustive replay: serve treated files by descending score.
        let mut order: Vec<IdentityId> = treated.iter().copied().collect();
        order.sort_by(|a, b| scores[b].total_cmp(&scores[a]).then(a.cmp(b)));
        let mut used = BTreeSet::new();
        let mut expected = Vec::new();
        for tr in order {
            let mut best: Option<(f64, IdentityId)> = None;
            for (&cand, cm) in &metrics {
                if treated.contains(&cand) || used.contains(&cand) {
                    continue;
                }
                if cm.language != metrics[&tr].language || bucket(cm.sloc) != bucket(metrics[&tr].sloc) {
                    continue;
                }
                let dist = (scores[&cand] - scores[&tr]).abs();
                if best.is_none_or(|(bd, bid)| dist < bd || (dist == bd && cand < bid)) {
                    best = Some((dist, cand));
                }
            }
            if let Some((_, c)) = best {
                used.insert(c);
                expected.push((tr, c));
            }
        }
        let got: Vec<_> = m.pairs.iter().map(|p| (p.reengineered, p.control)).collect();
        ok &= got == expected;
        for p in &m.pairs {
            let (a, b) = (&metrics[&p.reengineered], &metrics[&p.control]);
            ok &=
                a.language == b.language && bucket(a.sloc) == bucket(b.sloc) && !treated.contains(&p.control);
        }
        ok &= m.pairs.len() + m.unmatched.len() == treated.len();
        pairs_checked += m.pairs.len();
    }
    verdict(
        8,
        "greedy matching equals constrained exhaustive argmin",
        ok,
        format!("{pairs_checked} pairs over 500 pools, {:?}", t.elapsed()),
    );
}

fn run_demo(root: &Path) {
    let data = root.join("data");
    generate(&ScenarioSpec::default())
        .unwrap()
        .write_to(&data)
        .unwrap();
    let mut ws = Workspace::open(&root.join("ws"), false).unwrap();
    workspace::ingest(
        &mut ws,
        &data.join("commits.jsonl"),
        Some(&data.join("roster.csv")),
        None,
        &Default::default(),
    )
    .unwrap();
    workspace::graph(
        &mut ws,
        &workspace::GraphOptions {
            dependencies: Some(data.join("deps.csv")),
            ..Default::default()
        },
    )
    .unwrap();
    workspace::centrality(&mut ws, &Default::default()).unwrap();
    workspace::metrics(&mut ws, &data.join("repo"), None).unwrap();
    workspace::rank(&mut ws, &Default::default()).unwrap();
    workspace::classify(&mut ws, None).unwrap();
    workspace::impact(&mut ws, &data.join("intervention.json"), &Default::default()).unwrap();
}

fn tree_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    walkdir::WalkDir::new(root)
        .into_iter()
        .flatten()
        .filter(|e| e.file_type().is_file())
        .map(|e| {
            let rel = e
                .path()
                .strip_prefix(root)
                .unwrap()
                .to_string_lossy()
                .into_owned();
            (rel, std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn criterion_9_deterministic_workspaces() {
    let t = Instant::now();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_demo(a.path());
    run_demo(b.path());
    let ta = tree_bytes(a.path());
    let tb = tree_bytes(b.path());
    let artifacts = ta.keys().filter(|k| k.starts_with("ws")).count();
    verdict(
        9,
        "two demo pipeline runs give byte-identical workspaces",
        ta == tb && artifacts >= 15,
        format!(
            "{} files compared, {artifacts} workspace artifacts, {:?}",
            ta.len(),
            t.elapsed()
        ),
    );
}
