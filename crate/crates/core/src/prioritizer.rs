//! Per-file prioritization table: authoring time, activity, outages,
//! centrality, knowledge loss, size and complexity, ranked and exported.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Datelike};
use serde::{Deserialize, Serialize};

use crate::centrality::{default_katz_alpha, katz_centrality, pagerank};
use crate::code_metrics::CodeMetrics;
use crate::error::{Error, Result};
use crate::graph::{
    build_authorship_graph, build_cochange_graph, combine_networks, DependencyLayer, LayerWeights,
    SupplyChainGraph, DEFAULT_MAX_FILES_PER_DIFF,
};
use crate::ingest::{ActivityProxy, CommitRecord, FileIdentityMap, IdentityId, Roster, TimeWindow};
use crate::stats::geometric_mean;
use crate::DAY_SECS;

pub const DEFAULT_WINDOW_DAYS: i64 = 730;
pub const DEFAULT_COCHANGE_THRESHOLD: f64 = 0.20;
pub const DEFAULT_SNAPSHOTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoChanged {
    pub path: String,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileMetricsRow {
    pub identity_id: IdentityId,
    pub current_path: String,
    #[serde(rename = "totDAT")]
    pub tot_dat: f64,
    #[serde(rename = "avgDAT")]
    pub avg_dat: f64,
    #[serde(rename = "totNormDAT")]
    pub tot_norm_dat: f64,
    #[serde(rename = "avgNormDAT")]
    pub avg_norm_dat: f64,
    #[serde(rename = "nDiff2Y")]
    pub n_diff_2y: u64,
    #[serde(rename = "nOutages")]
    pub n_outages: u64,
    pub outage_level: Option<u32>,
    #[serde(rename = "nAuthor")]
    pub n_author: u64,
    #[serde(rename = "nDiffs")]
    pub n_diffs: u64,
    #[serde(rename = "nMnth")]
    pub n_mnth: u64,
    #[serde(rename = "diffsPerMonth")]
    pub diffs_per_month: f64,
    pub fr: i64,
    pub to: i64,
    pub min_cent: f64,
    pub max_cent: f64,
    pub avgdc: f64,
    pub pagerank: f64,
    pub katz: f64,
    #[serde(rename = "knowLost")]
    pub know_lost: f64,
    #[serde(rename = "authLeft")]
    pub auth_left: f64,
    pub sloc: Option<u64>,
    pub complexity: Option<u64>,
    #[serde(rename = "nFilePerDiff")]
    pub n_file_per_diff: f64,
    #[serde(rename = "nTotAuth")]
    pub n_tot_auth: u64,
    #[serde(rename = "topCochanged")]
    pub top_cochanged: Vec<CoChanged>,
}

/// Column names in table order.
pub const COLUMNS: [&str; 27] = [
    "identity_id",
    "current_path",
    "totDAT",
    "avgDAT",
    "totNormDAT",
    "avgNormDAT",
    "nDiff2Y",
    "nOutages",
    "outage_level",
    "nAuthor",
    "nDiffs",
    "nMnth",
    "diffsPerMonth",
    "fr",
    "to",
    "min_cent",
    "max_cent",
    "avgdc",
    "pagerank",
    "katz",
    "knowLost",
    "authLeft",
    "sloc",
    "complexity",
    "nFilePerDiff",
    "nTotAuth",
    "topCochanged",
];

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
    Missing,
}

impl FileMetricsRow {
    pub fn cell(&self, column: &str) -> Option<Cell> {
        use Cell::*;
        let opt = |v: Option<u64>| v.map_or(Missing, |x| Num(x as f64));
        Some(match column {
            "identity_id" => Num(self.identity_id.0 as f64),
            "current_path" => Text(self.current_path.clone()),
            "totDAT" => Num(self.tot_dat),
            "avgDAT" => Num(self.avg_dat),
            "totNormDAT" => Num(self.tot_norm_dat),
            "avgNormDAT" => Num(self.avg_norm_dat),
            "nDiff2Y" => Num(self.n_diff_2y as f64),
            "nOutages" => Num(self.n_outages as f64),
            "outage_level" => opt(self.outage_level.map(u64::from)),
            "nAuthor" => Num(self.n_author as f64),
            "nDiffs" => Num(self.n_diffs as f64),
            "nMnth" => Num(self.n_mnth as f64),
            "diffsPerMonth" => Num(self.diffs_per_month),
            "fr" => Num(self.fr as f64),
            "to" => Num(self.to as f64),
            "min_cent" => Num(self.min_cent),
            "max_cent" => Num(self.max_cent),
            "avgdc" => Num(self.avgdc),
            "pagerank" => Num(self.pagerank),
            "katz" => Num(self.katz),
            "knowLost" => Num(self.know_lost),
            "authLeft" => Num(self.auth_left),
            "sloc" => opt(self.sloc),
            "complexity" => opt(self.complexity),
            "nFilePerDiff" => Num(self.n_file_per_diff),
            "nTotAuth" => Num(self.n_tot_auth as f64),
            "topCochanged" => Num(self.top_cochanged.len() as f64),
            _ => return None,
        })
    }

    fn csv_fields(&self) -> Vec<String> {
        let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.identity_id.to_string(),
            self.current_path.clone(),
            self.tot_dat.to_string(),
            self.avg_dat.to_string(),
            self.tot_norm_dat.to_string(),
            self.avg_norm_dat.to_string(),
            self.n_diff_2y.to_string(),
            self.n_outages.to_string(),
            opt(self.outage_level.map(u64::from)),
            self.n_author.to_string(),
            self.n_diffs.to_string(),
            self.n_mnth.to_string(),
            self.diffs_per_month.to_string(),
            self.fr.to_string(),
            self.to.to_string(),
            self.min_cent.to_string(),
            self.max_cent.to_string(),
            self.avgdc.to_string(),
            self.pagerank.to_string(),
            self.katz.to_string(),
            self.know_lost.to_string(),
            self.auth_left.to_string(),
            opt(self.sloc),
            opt(self.complexity),
            self.n_file_per_diff.to_string(),
            self.n_tot_auth.to_string(),
            self.top_cochanged
                .iter()
                .map(|c| format!("{}:{}", c.path, c.fraction))
                .collect::<Vec<_>>()
                .join(";"),
        ]
    }

    fn from_csv_fields(rec: &csv::StringRecord) -> Result<Self> {
        let get = |i: usize| rec.get(i).unwrap_or_default();
        fn num<T: std::str::FromStr>(s: &str, col: &str) -> Result<T> {
            s.parse()
                .map_err(|_| Error::Parse(format!("bad value `{s}` in column {col}")))
        }
        let f = |i: usize| num::<f64>(get(i), COLUMNS[i]);
        let u = |i: usize| num::<u64>(get(i), COLUMNS[i]);
        let i64_ = |i: usize| num::<i64>(get(i), COLUMNS[i]);
        let opt = |i: usize| -> Result<Option<u64>> {
            if get(i).is_empty() {
                Ok(None)
            } else {
                u(i).map(Some)
            }
        };
        let top_cochanged = get(26)
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|pair| {
                let (path, frac) = pair
                    .rsplit_once(':')
                    .ok_or_else(|| Error::Parse(format!("bad topCochanged entry `{pair}`")))?;
                Ok(CoChanged {
                    path: path.to_string(),
                    fraction: num(frac, "topCochanged")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FileMetricsRow {
            identity_id: IdentityId(num(get(0), "identity_id")?),
            current_path: get(1).to_string(),
            tot_dat: f(2)?,
            avg_dat: f(3)?,
            tot_norm_dat: f(4)?,
            avg_norm_dat: f(5)?,
            n_diff_2y: u(6)?,
            n_outages: u(7)?,
            outage_level: opt(8)?.map(|v| v as u32),
            n_author: u(9)?,
            n_diffs: u(10)?,
            n_mnth: u(11)?,
            diffs_per_month: f(12)?,
            fr: i64_(13)?,
            to: i64_(14)?,
            min_cent: f(15)?,
            max_cent: f(16)?,
            avgdc: f(17)?,
            pagerank: f(18)?,
            katz: f(19)?,
            know_lost: f(20)?,
            auth_left: f(21)?,
            sloc: opt(22)?,
            complexity: opt(23)?,
            n_file_per_diff: f(24)?,
            n_tot_auth: u(25)?,
            top_cochanged,
        })
    }
}

/// Parameters for the network scores behind the centrality columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    /// Katz alpha as a fraction of `1 / rho`.
    pub alpha_frac: f64,
    pub beta: f64,
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub max_files: usize,
    pub multipliers: LayerWeights<f64>,
    pub normalize_layers: bool,
}

impl Default for NetworkParams {
    fn default() -> Self {
        NetworkParams {
            alpha_frac: 0.5,
            beta: 1.0,
            damping: 0.85,
            tol: 1e-10,
            max_iter: 10_000,
            max_files: DEFAULT_MAX_FILES_PER_DIFF,
            multipliers: LayerWeights::default(),
            normalize_layers: true,
        }
    }
}

/// Normalized Katz and PageRank of one combined-graph build.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphScores {
    pub alpha: f64,
    #[serde(with = "crate::as_pairs")]
    pub file_katz: BTreeMap<IdentityId, f64>,
    pub author_katz: BTreeMap<String, f64>,
    #[serde(with = "crate::as_pairs")]
    pub file_pagerank: BTreeMap<IdentityId, f64>,
    pub author_pagerank: BTreeMap<String, f64>,
}

impl GraphScores {
    /// Builds the combined graph over commits in `window` and scores it.
    pub fn compute(
        commits: &[CommitRecord],
        identities: &FileIdentityMap,
        dependency: &DependencyLayer,
        window: TimeWindow,
        params: &NetworkParams,
    ) -> Result<Self> {
        let cochange = build_cochange_graph(commits, identities, window, params.max_files)?;
        let authorship = build_authorship_graph(commits, identities, window);
        let graph = combine_networks(
            dependency,
            &cochange,
            &authorship,
            params.multipliers,
            params.normalize_layers,
        )?;
        Self::score(&graph, params)
    }

    pub fn score(graph: &SupplyChainGraph<f64>, params: &NetworkParams) -> Result<Self> {
        let mut out = GraphScores::default();
        if graph.nodes.is_empty() {
            return Ok(out);
        }
        let alpha = default_katz_alpha(&graph.combined, params.alpha_frac);
        let katz = katz_centrality(&graph.combined, alpha, params.beta, params.tol, params.max_iter)?;
        let pr = pagerank(&graph.combined, params.damping, params.tol, params.max_iter, true)?;
        out.alpha = alpha;
        for (i, node) in graph.nodes.iter().enumerate() {
            match node {
                crate::graph::NodeRef::File(id) => {
                    out.file_katz.insert(*id, katz.scores[i]);
                    out.file_pagerank.insert(*id, pr.scores[i]);
                }
                crate::graph::NodeRef::Author(a) => {
                    out.author_katz.insert(a.clone(), katz.scores[i]);
                    out.author_pagerank.insert(a.clone(), pr.scores[i]);
                }
            }
        }
        Ok(out)
    }
}

/// Scores over the whole window plus cumulative snapshots for the
/// min/max centrality columns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkScores {
    pub window: Option<TimeWindow>,
    pub full: GraphScores,
    pub snapshots: Vec<GraphScores>,
}

impl NetworkScores {
    /// Snapshot `k` of `n` covers `[window.start, window.start + k * len / n)`.
    pub fn compute(
        commits: &[CommitRecord],
        identities: &FileIdentityMap,
        dependency: &DependencyLayer,
        window: TimeWindow,
        snapshots: usize,
        params: &NetworkParams,
    ) -> Result<Self> {
        let full = GraphScores::compute(commits, identities, dependency, window, params)?;
        let len = window.end - window.start;
        let snapshots = (1..=snapshots as i64)
            .map(|k| {
                let end = window.start + len * k / snapshots as i64;
                GraphScores::compute(
                    commits,
                    identities,
                    dependency,
                    TimeWindow::new(window.start, end),
                    params,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NetworkScores {
            window: Some(window),
            full,
            snapshots,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrioritizerConfig {
    pub window: TimeWindow,
    pub cochange_threshold: f64,
}

impl PrioritizerConfig {
    /// Two-year window ending at `as_of` (inclusive).
    pub fn ending_at(as_of: i64) -> Self {
        PrioritizerConfig {
            window: TimeWindow::trailing(as_of, DEFAULT_WINDOW_DAYS * DAY_SECS),
            cochange_threshold: DEFAULT_COCHANGE_THRESHOLD,
        }
    }
}

pub struct PrioritizerInputs<'a> {
    pub commits: &'a [CommitRecord],
    pub identities: &'a FileIdentityMap,
    pub activity: &'a BTreeMap<String, ActivityProxy>,
    pub scores: &'a NetworkScores,
    pub code_metrics: Option<&'a BTreeMap<IdentityId, CodeMetrics>>,
    pub roster: Option<&'a Roster>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub window: TimeWindow,
    pub rows: Vec<FileMetricsRow>,
    pub caveats: Vec<String>,
}

#[derive(Default)]
struct Acc {
    dats: Vec<f64>,
    norm_dats: Vec<f64>,
    outages: u64,
    level: Option<u32>,
    authors: BTreeSet<String>,
    diffs_by_departed: u64,
    first: i64,
    last: i64,
    months: BTreeSet<(i32, u32)>,
    cooccur: BTreeMap<IdentityId, u64>,
    files_sum: u64,
    dc: Vec<f64>,
}

fn month_of(ts: i64) -> (i32, u32) {
    DateTime::from_timestamp(ts, 0).map_or((0, 0), |d| (d.year(), d.month()))
}

/// One row per file with at least one in-window diff, ordered by identity.
pub fn compute_file_metrics(
    inputs: &PrioritizerInputs<'_>,
    config: &PrioritizerConfig,
) -> Result<MetricsTable> {
    let window = config.window;
    if window.is_empty() {
        return Err(Error::Empty("metrics window"));
    }
    let as_of = window.end - 1;
    let mut caveats = Vec::new();
    if inputs.roster.is_none() {
        caveats.push("no roster: knowLost and authLeft are unavailable and reported as 0".to_string());
    }
    if inputs.code_metrics.is_none() {
        caveats.push("no source snapshot: sloc and complexity are empty".to_string());
    }
    let departed = |author: &str| inputs.roster.is_some_and(|r| r.has_departed(author, as_of));

    let mut all_authors: BTreeMap<IdentityId, BTreeSet<&str>> = BTreeMap::new();
    let mut all_diffs: BTreeMap<IdentityId, u64> = BTreeMap::new();
    let mut acc: BTreeMap<IdentityId, Acc> = BTreeMap::new();
    let mut any_in_window = false;

    for c in inputs.commits {
        let files = inputs.identities.touched(&c.commit_id);
        for &id in &files {
            all_authors.entry(id).or_default().insert(&c.author_id);
            *all_diffs.entry(id).or_default() += 1;
        }
        if !window.contains(c.timestamp) {
            continue;
        }
        any_in_window = true;
        let nfiles = files.len() as u64;
        let dat = inputs
            .activity
            .get(&c.commit_id)
            .map(|a| a.dat_minutes)
            .ok_or_else(|| Error::Parse(format!("no activity proxy for commit {}", c.commit_id)))?;
        let author_cent = inputs.scores.full.author_katz.get(&c.author_id).copied();
        for &id in &files {
            let a = acc.entry(id).or_insert_with(|| Acc {
                first: c.timestamp,
                last: c.timestamp,
                ..Acc::default()
            });
            a.dats.push(dat);
            a.norm_dats.push(dat / nfiles as f64);
            if let Some(o) = c.outage {
                a.outages += 1;
                a.level = Some(a.level.map_or(o.severity_level, |l| l.min(o.severity_level)));
            }
            a.authors.insert(c.author_id.clone());
            if departed(&c.author_id) {
                a.diffs_by_departed += 1;
            }
            a.first = a.first.min(c.timestamp);
            a.last = a.last.max(c.timestamp);
            a.months.insert(month_of(c.timestamp));
            for &other in &files {
                if other != id {
                    *a.cooccur.entry(other).or_default() += 1;
                }
            }
            a.files_sum += nfiles;
            if let (Some(fc), Some(ac)) = (inputs.scores.full.file_katz.get(&id), author_cent) {
                a.dc.push(fc - ac);
            }
        }
    }
    if !any_in_window {
        return Err(Error::Empty("no diffs inside the metrics window"));
    }

    let mut rows = Vec::with_capacity(acc.len());
    for (id, a) in acc {
        let n = a.dats.len() as u64;
        let katz = inputs.scores.full.file_katz.get(&id).copied().unwrap_or(0.0);
        let snaps: Vec<f64> = inputs
            .scores
            .snapshots
            .iter()
            .filter_map(|s| s.file_katz.get(&id).copied())
            .collect();
        let (min_cent, max_cent) = if snaps.is_empty() {
            (katz, katz)
        } else {
            (
                snaps.iter().copied().fold(f64::INFINITY, f64::min),
                snaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            )
        };
        let mut top: Vec<CoChanged> = a
            .cooccur
            .iter()
            .map(|(&other, &k)| (other, k as f64 / n as f64))
            .filter(|&(_, frac)| frac >= config.cochange_threshold)
            .map(|(other, fraction)| CoChanged {
                path: inputs.identities.current_path(other).to_string(),
                fraction,
            })
            .collect();
        top.sort_by(|x, y| {
            y.fraction
                .total_cmp(&x.fraction)
                .then_with(|| x.path.cmp(&y.path))
        });
        let departed_authors = a.authors.iter().filter(|au| departed(au)).count();
        let metrics = inputs.code_metrics.and_then(|m| m.get(&id));
        rows.push(FileMetricsRow {
            identity_id: id,
            current_path: inputs.identities.current_path(id).to_string(),
            tot_dat: a.dats.iter().sum(),
            avg_dat: geometric_mean(&a.dats)?,
            tot_norm_dat: a.norm_dats.iter().sum(),
            avg_norm_dat: geometric_mean(&a.norm_dats)?,
            n_diff_2y: n,
            n_outages: a.outages,
            outage_level: a.level,
            n_author: all_authors.get(&id).map_or(0, |s| s.len() as u64),
            n_diffs: all_diffs.get(&id).copied().unwrap_or(0),
            n_mnth: a.months.len() as u64,
            diffs_per_month: n as f64 / a.months.len() as f64,
            fr: a.first,
            to: a.last,
            min_cent,
            max_cent,
            avgdc: if a.dc.is_empty() {
                0.0
            } else {
                a.dc.iter().sum::<f64>() / a.dc.len() as f64
            },
            pagerank: inputs.scores.full.file_pagerank.get(&id).copied().unwrap_or(0.0),
            katz,
            know_lost: 100.0 * a.diffs_by_departed as f64 / n as f64,
            auth_left: 100.0 * departed_authors as f64 / a.authors.len() as f64,
            sloc: metrics.map(|m| m.sloc),
            complexity: metrics.map(|m| m.ccn),
            n_file_per_diff: a.files_sum as f64 / n as f64,
            n_tot_auth: a.authors.len() as u64,
            top_cochanged: top,
        });
    }
    Ok(MetricsTable {
        window,
        rows,
        caveats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Ge,
    Gt,
    Le,
    Lt,
    Eq,
    Ne,
}

/// Threshold predicate on a numeric column, e.g. `nDiff2Y>=5`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub column: String,
    pub op: CmpOp,
    pub value: f64,
}

impl std::str::FromStr for Filter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        const OPS: [(&str, CmpOp); 6] = [
            (">=", CmpOp::Ge),
            ("<=", CmpOp::Le),
            ("!=", CmpOp::Ne),
            ("==", CmpOp::Eq),
            (">", CmpOp::Gt),
            ("<", CmpOp::Lt),
        ];
        for (tok, op) in OPS {
            if let Some((col, val)) = s.split_once(tok) {
                let value = val
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad filter value in `{s}`")))?;
                return Ok(Filter {
                    column: col.trim().to_string(),
                    op,
                    value,
                });
            }
        }
        Err(Error::Parse(format!(
            "filter `{s}` needs one of >=, <=, >, <, ==, !="
        )))
    }
}

impl Filter {
    fn accepts(&self, row: &FileMetricsRow) -> bool {
        let Some(Cell::Num(v)) = row.cell(&self.column) else {
            return false;
        };
        match self.op {
            CmpOp::Ge => v >= self.value,
            CmpOp::Gt => v > self.value,
            CmpOp::Le => v <= self.value,
            CmpOp::Lt => v < self.value,
            CmpOp::Eq => v == self.value,
            CmpOp::Ne => v != self.value,
        }
    }
}

fn unknown_column(column: &str) -> Error {
    Error::UnknownColumn {
        column: column.to_string(),
        valid: COLUMNS.iter().map(|c| c.to_string()).collect(),
    }
}

/// Filters, then sorts stably: numbers descending (timestamps `fr`/`to`
/// ascending), text ascending, missing values last, ties by identity.
pub fn rank_files(
    rows: &[FileMetricsRow],
    sort_key: &str,
    filters: &[Filter],
) -> Result<Vec<FileMetricsRow>> {
    if !COLUMNS.contains(&sort_key) {
        return Err(unknown_column(sort_key));
    }
    for f in filters {
        match COLUMNS.contains(&f.column.as_str()) {
            false => return Err(unknown_column(&f.column)),
            true if f.column == "current_path" => {
                return Err(Error::InvalidParameter(
                    "cannot apply a numeric filter to current_path".into(),
                ))
            }
            true => {}
        }
    }
    let ascending = matches!(sort_key, "fr" | "to");
    let mut out: Vec<FileMetricsRow> = rows
        .iter()
        .filter(|r| filters.iter().all(|f| f.accepts(r)))
        .cloned()
        .collect();
    out.sort_by(|a, b| {
        let ord = match (a.cell(sort_key), b.cell(sort_key)) {
            (Some(Cell::Num(x)), Some(Cell::Num(y))) => {
                if ascending {
                    x.total_cmp(&y)
                } else {
                    y.total_cmp(&x)
                }
            }
            (Some(Cell::Text(x)), Some(Cell::Text(y))) => x.cmp(&y),
            (Some(Cell::Missing), Some(Cell::Missing)) => std::cmp::Ordering::Equal,
            (Some(Cell::Missing), _) => std::cmp::Ordering::Greater,
            (_, Some(Cell::Missing)) => std::cmp::Ordering::Less,
            _ => std::cmp::Ordering::Equal,
        };
        ord.then(a.identity_id.cmp(&b.identity_id))
    });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Json,
}

impl std::str::FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            other => Err(Error::Parse(format!(
                "unknown table format `{other}` (csv or json)"
            ))),
        }
    }
}

pub fn write_csv<W: Write>(writer: W, rows: &[FileMetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.write_record(r.csv_fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(reader: R) -> Result<Vec<FileMetricsRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != COLUMNS {
        return Err(Error::Parse(
            "metrics CSV header does not match the table columns".into(),
        ));
    }
    rdr.records()
        .map(|rec| FileMetricsRow::from_csv_fields(&rec?))
        .collect()
}

pub fn write_json<W: Write>(writer: W, rows: &[FileMetricsRow]) -> Result<()> {
    serde_json::to_writer_pretty(writer, rows)?;
    Ok(())
}

pub fn export_table(rows: &[FileMetricsRow], format: TableFormat, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    match format {
        TableFormat::Csv => write_csv(&mut w, rows)?,
        TableFormat::Json => {
            write_json(&mut w, rows)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_rename_chains, FileChange, OutageAnnotation};

    fn commit(id: &str, author: &str, ts: i64, paths: &[&str]) -> CommitRecord {
        CommitRecord {
            commit_id: id.into(),
            author_id: author.into(),
            timestamp: ts,
            message_title: String::new(),
            message_tags: vec![],
            file_changes: paths.iter().map(|p| FileChange::modify(*p, 1, 0)).collect(),
            outage: None,
        }
    }

    fn activity(dats: &[(&str, f64)]) -> BTreeMap<String, ActivityProxy> {
        dats.iter()
            .map(|&(id, d)| {
                (
                    id.to_string(),
                    ActivityProxy {
                        dat_minutes: d,
                        session_count: 1,
                        session_index: 0,
                    },
                )
            })
            .collect()
    }

    fn table(
        commits: &[CommitRecord],
        act: &BTreeMap<String, ActivityProxy>,
        roster: Option<&Roster>,
    ) -> MetricsTable {
        let map = build_rename_chains(commits).unwrap();
        let window = TimeWindow::new(0, 10_000_000);
        let scores = NetworkScores::compute(
            commits,
            &map,
            &DependencyLayer::default(),
            window,
            DEFAULT_SNAPSHOTS,
            &NetworkParams::default(),
        )
        .unwrap();
        let inputs = PrioritizerInputs {
            commits,
            identities: &map,
            activity: act,
            scores: &scores,
            code_metrics: None,
            roster,
        };
        compute_file_metrics(
            &inputs,
            &PrioritizerConfig {
                window,
                cochange_threshold: 0.2,
            },
        )
        .unwrap()
    }

    #[test]
    fn geometric_dat_and_normalized_attribution() {
        let e = std::f64::consts::E;
        let commits = vec![
            commit("1", "x", 100, &["f"]),
            commit("2", "x", 200, &["f"]),
            commit("3", "y", 300, &["a", "b", "c", "d", "e"]),
        ];
        let act = activity(&[("1", e), ("2", e.powi(3)), ("3", 10.0)]);
        let t = table(&commits, &act, None);
        let f = t.rows.iter().find(|r| r.current_path == "f").unwrap();
        assert!((f.avg_dat - e * e).abs() < 1e-12);
        assert_eq!(f.tot_dat, e + e.powi(3));
        for p in ["a", "b", "c", "d", "e"] {
            let r = t.rows.iter().find(|r| r.current_path == p).unwrap();
            assert_eq!(r.tot_norm_dat, 2.0);
            assert_eq!(r.avg_norm_dat, 2.0);
            assert_eq!(r.n_file_per_diff, 5.0);
            assert_eq!(r.top_cochanged.len(), 4);
        }
        assert_eq!(t.caveats.len(), 2);
    }

    #[test]
    fn top_cochanged_threshold() {
        let mut commits = vec![];
        for i in 0..10 {
            let paths: &[&str] = match i {
                0..=2 => &["A", "B"],
                3 => &["A", "C"],
                _ => &["A"],
            };
            commits.push(commit(&format!("c{i}"), "x", 100 + i as i64 * 10_000, paths));
        }
        let act: BTreeMap<_, _> = (0..10)
            .map(|i| {
                (
                    format!("c{i}"),
                    ActivityProxy {
                        dat_minutes: 5.0,
                        session_count: 1,
                        session_index: 0,
                    },
                )
            })
            .collect();
        let t = table(&commits, &act, None);
        let a = t.rows.iter().find(|r| r.current_path == "A").unwrap();
        assert_eq!(
            a.top_cochanged,
            vec![CoChanged {
                path: "B".into(),
                fraction: 0.3
            }]
        );
    }

    #[test]
    fn outages_authors_and_knowledge_loss() {
        let mut commits = vec![
            commit("1", "gone", 100, &["f"]),
            commit("2", "stay", 200, &["f"]),
            commit("3", "stay", 300, &["f"]),
            commit("4", "stay", 400, &["f"]),
        ];
        commits[1].outage = Some(OutageAnnotation { severity_level: 3 });
        commits[2].outage = Some(OutageAnnotation { severity_level: 2 });
        let act = activity(&[("1", 5.0), ("2", 5.0), ("3", 5.0), ("4", 5.0)]);
        let roster = Roster::parse("author,departed_ts\ngone,150\nstay,\n".as_bytes()).unwrap();
        let t = table(&commits, &act, Some(&roster));
        let f = &t.rows[0];
        assert_eq!(f.n_outages, 2);
        assert_eq!(f.outage_level, Some(2));
        assert_eq!(f.know_lost, 25.0);
        assert_eq!(f.auth_left, 50.0);
        assert_eq!((f.fr, f.to), (100, 400));
        assert_eq!(f.n_mnth, 1);
        assert_eq!(f.diffs_per_month, 4.0);
        assert_eq!(f.n_tot_auth, 2);
        assert!(f.min_cent <= f.max_cent);
        assert_eq!(t.caveats.len(), 1);
    }

    fn row(id: u32, katz: f64, n: u64) -> FileMetricsRow {
        FileMetricsRow {
            identity_id: IdentityId(id),
            current_path: format!("f{id}.c"),
            tot_dat: 1.0,
            avg_dat: 1.0,
            tot_norm_dat: 1.0,
            avg_norm_dat: 1.0,
            n_diff_2y: n,
            n_outages: 0,
            outage_level: None,
            n_author: 1,
            n_diffs: n,
            n_mnth: 1,
            diffs_per_month: n as f64,
            fr: 10 - id as i64,
            to: 20,
            min_cent: katz,
            max_cent: katz,
            avgdc: 0.0,
            pagerank: 0.1,
            katz,
            know_lost: 0.0,
            auth_left: 0.0,
            sloc: Some(10),
            complexity: None,
            n_file_per_diff: 1.5,
            n_tot_auth: 1,
            top_cochanged: vec![],
        }
    }

    #[test]
    fn ranking() {
        let rows = vec![row(0, 0.2, 3), row(1, 0.9, 5), row(2, 0.5, 9)];
        let ids = |rs: Vec<FileMetricsRow>| rs.iter().map(|r| r.identity_id.0).collect::<Vec<_>>();
        assert_eq!(ids(rank_files(&rows, "katz", &[]).unwrap()), [1, 2, 0]);
        let tied = vec![row(2, 0.5, 1), row(0, 0.5, 1), row(1, 0.5, 1)];
        assert_eq!(ids(rank_files(&tied, "katz", &[]).unwrap()), [0, 1, 2]);
        let f: Filter = "nDiff2Y>=5".parse().unwrap();
        assert_eq!(rank_files(&rows, "katz", &[f]).unwrap().len(), 2);
        assert_eq!(ids(rank_files(&rows, "fr", &[]).unwrap()), [2, 1, 0]);
        match rank_files(&rows, "bogus", &[]) {
            Err(Error::UnknownColumn { valid, .. }) => assert!(valid.contains(&"katz".to_string())),
            other => panic!("unexpected {other:?}"),
        }
        assert!("nDiff2Y~5".parse::<Filter>().is_err());
    }

    #[test]
    fn csv_export_shapes() {
        let mut out = Vec::new();
        write_csv(&mut out, &[]).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            format!("{}\n", COLUMNS.join(","))
        );

        let mut r = row(3, 0.25, 4);
        r.top_cochanged = vec![
            CoChanged {
                path: "x/b.c".into(),
                fraction: 0.5,
            },
            CoChanged {
                path: "c.h".into(),
                fraction: 0.25,
            },
        ];
        r.outage_level = Some(1);
        let mut out = Vec::new();
        write_csv(&mut out, std::slice::from_ref(&r)).unwrap();
        let text = String::from_utf8(out.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("x/b.c:0.5;c.h:0.25"));
        assert_eq!(read_csv(out.as_slice()).unwrap(), vec![r.clone()]);

        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["topCochanged"][0]["path"], "x/b.c");
        assert_eq!(json["nDiff2Y"], 4);
    }

    #[test]
    fn export_to_unwritable_path_fails() {
        let err = export_table(&[], TableFormat::Csv, Path::new("/nonexistent/dir/t.csv"));
        assert!(matches!(err, Err(Error::Io { .. })));
    }
}
