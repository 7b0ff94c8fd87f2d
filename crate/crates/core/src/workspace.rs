//! On-disk workspace: pipeline commands, their artifacts, and a manifest
//! recording each artifact's digest and the digests of its inputs.
//!
//! Reading an artifact checks the whole chain it was derived from. An
//! artifact whose file was edited, or whose inputs were regenerated since it
//! was written, is stale and refused unless the workspace was opened with
//! `force`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::classifier::{corpus_report, CorpusReport, PatternSet};
use crate::code_metrics::{scan_tree, CodeMetrics, LanguageSet, Snapshot};
use crate::error::{Error, Result};
use crate::graph::{
    build_authorship_graph, build_cochange_graph, combine_networks, dependency_from_paths,
    load_dependency_edges, scan_imports, write_edge_list, AuthorshipLayer, CoChangeLayer, DependencyLayer,
    ImportConfig, LayerWeights, DEFAULT_MAX_FILES_PER_DIFF,
};
use crate::impact::{
    default_strata, metrics_by_identity, run_impact, ImpactContext, ImpactRun, InterventionSpec,
};
use crate::ingest::{
    apply_outages, build_rename_chains, parse_commit_log, sessionize_author_activity, write_commit_log,
    ActivityProxy, CommitRecord, FileIdentityMap, IdentityId, ParseOptions, ParseStats, Roster, TimeWindow,
    DEFAULT_FLOOR_MINUTES, DEFAULT_GAP_MINUTES,
};
use crate::prioritizer::{
    compute_file_metrics, export_table, rank_files, write_csv, write_json, FileMetricsRow, Filter,
    GraphScores, MetricsTable, NetworkParams, NetworkScores, PrioritizerConfig, PrioritizerInputs,
    TableFormat, DEFAULT_COCHANGE_THRESHOLD, DEFAULT_SNAPSHOTS, DEFAULT_WINDOW_DAYS,
};
use crate::DAY_SECS;

pub const MANIFEST: &str = "manifest.json";
const LOCK: &str = ".lock";

pub const CORPUS: &str = "corpus.jsonl";
pub const IDENTITIES: &str = "identities.json";
pub const ACTIVITY: &str = "activity.json";
pub const ROSTER: &str = "roster.json";
pub const INGEST_REPORT: &str = "ingest_report.json";
pub const GRAPH: &str = "graph.json";
pub const EDGES: &str = "graph_edges.csv";
pub const SCORES: &str = "scores.json";
pub const KATZ: &str = "katz.csv";
pub const PAGERANK: &str = "pagerank.csv";
pub const CODE_METRICS: &str = "code_metrics.json";
pub const METRICS_TABLE: &str = "metrics_table.json";
pub const RANKED_CSV: &str = "ranked.csv";
pub const RANKED_JSON: &str = "ranked.json";
pub const CLASSIFY_REPORT: &str = "classify_report.json";
pub const IMPACT_REPORT: &str = "impact_report.json";
pub const IMPACT_SUMMARY: &str = "impact_summary.txt";

/// Subcommand that writes an artifact.
pub fn producer(artifact: &str) -> &'static str {
    match artifact {
        CORPUS | IDENTITIES | ACTIVITY | ROSTER | INGEST_REPORT => "ingest",
        GRAPH | EDGES => "graph",
        SCORES | KATZ | PAGERANK => "centrality",
        CODE_METRICS => "metrics",
        METRICS_TABLE | RANKED_CSV | RANKED_JSON => "rank",
        CLASSIFY_REPORT => "classify",
        IMPACT_REPORT | IMPACT_SUMMARY => "impact",
        _ => "ingest",
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub digest: String,
    pub producer: String,
    /// Artifact names, `file:<name>`, `tree:<name>` and `param:<name>` keys.
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub artifacts: BTreeMap<String, ArtifactRecord>,
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<String> {
    Ok(digest_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Digest over the sorted relative paths and contents of a directory's
/// non-hidden files.
pub fn digest_tree(root: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let walker = WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.'));
    for entry in walker {
        let entry = entry.map_err(|e| Error::Parse(format!("walking {}: {e}", root.display())))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0]);
        hasher.update(fs::read(entry.path()).map_err(|e| Error::io(entry.path(), e))?);
        hasher.update([0]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn file_label(path: &Path) -> String {
    path.file_name().map_or_else(
        || path.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    )
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[derive(Debug)]
pub struct Workspace {
    root: PathBuf,
    manifest: Manifest,
    force: bool,
    lock: PathBuf,
}

impl Drop for Workspace {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

impl Workspace {
    /// Opens (creating if needed) and locks a workspace directory.
    pub fn open(root: &Path, force: bool) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let lock = root.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(Error::Locked(root.to_path_buf()))
            }
            Err(e) => return Err(Error::io(&lock, e)),
        }
        // Built before the manifest is read so the lock is released on error.
        let mut ws = Workspace {
            root: root.to_path_buf(),
            manifest: Manifest::default(),
            force,
            lock,
        };
        let path = root.join(MANIFEST);
        ws.manifest = if path.is_file() {
            let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            serde_json::from_slice(&text)?
        } else {
            Manifest {
                version: env!("CARGO_PKG_VERSION").to_string(),
                artifacts: BTreeMap::new(),
            }
        };
        Ok(ws)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn path(&self, artifact: &str) -> PathBuf {
        self.root.join(artifact)
    }

    pub fn has(&self, artifact: &str) -> bool {
        self.manifest.artifacts.contains_key(artifact)
    }

    fn save_manifest(&mut self) -> Result<()> {
        self.manifest.version = env!("CARGO_PKG_VERSION").to_string();
        let path = self.root.join(MANIFEST);
        fs::write(&path, to_json(&self.manifest)?).map_err(|e| Error::io(&path, e))
    }

    fn write(&mut self, artifact: &str, bytes: &[u8], inputs: BTreeMap<String, String>) -> Result<()> {
        let path = self.path(artifact);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.manifest.artifacts.insert(
            artifact.to_string(),
            ArtifactRecord {
                digest: digest_bytes(bytes),
                producer: producer(artifact).to_string(),
                inputs,
            },
        );
        self.save_manifest()
    }

    fn remove(&mut self, artifact: &str) -> Result<()> {
        let path = self.path(artifact);
        if path.exists() {
            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
        if self.manifest.artifacts.remove(artifact).is_some() {
            self.save_manifest()?;
        }
        Ok(())
    }

    /// Current digests of the named artifacts, as input records.
    fn inputs(&self, artifacts: &[&str]) -> BTreeMap<String, String> {
        artifacts
            .iter()
            .filter_map(|a| Some((a.to_string(), self.manifest.artifacts.get(*a)?.digest.clone())))
            .collect()
    }

    /// Errors unless the artifact exists and it and everything it was
    /// derived from are unchanged.
    pub fn require(&self, artifact: &str) -> Result<()> {
        self.check(artifact, &mut BTreeSet::new())
    }

    fn check(&self, artifact: &str, seen: &mut BTreeSet<String>) -> Result<()> {
        if !seen.insert(artifact.to_string()) {
            return Ok(());
        }
        let command = producer(artifact).to_string();
        let Some(rec) = self.manifest.artifacts.get(artifact) else {
            return Err(Error::MissingArtifact {
                artifact: artifact.to_string(),
                command,
            });
        };
        let path = self.path(artifact);
        if !path.is_file() {
            return Err(Error::MissingArtifact {
                artifact: artifact.to_string(),
                command,
            });
        }
        if self.force {
            return Ok(());
        }
        if digest_file(&path)? != rec.digest {
            return Err(Error::Stale {
                artifact: artifact.to_string(),
                reason: "the file changed after it was written".into(),
                command,
            });
        }
        for (input, digest) in &rec.inputs {
            if input.contains(':') {
                continue;
            }
            match self.manifest.artifacts.get(input) {
                Some(r) if &r.digest == digest => self.check(input, seen)?,
                _ => {
                    return Err(Error::Stale {
                        artifact: artifact.to_string(),
                        reason: format!("its input {input} was regenerated or removed"),
                        command,
                    })
                }
            }
        }
        Ok(())
    }

    pub fn read_json<T: DeserializeOwned>(&self, artifact: &str) -> Result<T> {
        self.require(artifact)?;
        let path = self.path(artifact);
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }

    fn optional_json<T: DeserializeOwned>(&self, artifact: &str) -> Result<Option<T>> {
        if self.has(artifact) {
            self.read_json(artifact).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn read_corpus(&self) -> Result<Vec<CommitRecord>> {
        self.require(CORPUS)?;
        let path = self.path(CORPUS);
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let parsed = parse_commit_log(
            BufReader::new(file),
            &ParseOptions {
                max_malformed_pct: Some(0.0),
            },
        )?;
        Ok(parsed.records)
    }
}

fn param(name: &str, value: impl ToString) -> (String, String) {
    (format!("param:{name}"), value.to_string())
}

fn external(path: &Path) -> Result<(String, String)> {
    Ok((format!("file:{}", file_label(path)), digest_file(path)?))
}

fn open_reader(path: &Path) -> Result<BufReader<fs::File>> {
    Ok(BufReader::new(
        fs::File::open(path).map_err(|e| Error::io(path, e))?,
    ))
}

pub fn language_set(config: Option<&Path>) -> Result<LanguageSet> {
    match config {
        Some(p) => LanguageSet::default().with_config(open_reader(p)?),
        None => Ok(LanguageSet::default()),
    }
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub max_malformed_pct: f64,
    pub gap_minutes: f64,
    pub floor_minutes: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            max_malformed_pct: 10.0,
            gap_minutes: DEFAULT_GAP_MINUTES,
            floor_minutes: DEFAULT_FLOOR_MINUTES,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestSummary {
    pub records: usize,
    pub identities: usize,
    pub parse: ParseStats,
    pub outages: usize,
    pub unknown_outage_commits: usize,
    pub roster_authors: Option<usize>,
    pub caveats: Vec<String>,
}

pub fn ingest(
    ws: &mut Workspace,
    log: &Path,
    roster: Option<&Path>,
    outages: Option<&Path>,
    options: &IngestOptions,
) -> Result<IngestSummary> {
    let parsed = parse_commit_log(
        open_reader(log)?,
        &ParseOptions {
            max_malformed_pct: Some(options.max_malformed_pct),
        },
    )?;
    let mut records = parsed.records;
    let mut inputs: BTreeMap<String, String> = [external(log)?].into();
    let unknown_outage_commits = match outages {
        Some(p) => {
            inputs.extend([external(p)?]);
            apply_outages(&mut records, open_reader(p)?)?
        }
        None => 0,
    };
    let identities = build_rename_chains(&records)?;
    let activity = sessionize_author_activity(&records, options.gap_minutes, options.floor_minutes)?;

    let mut corpus = Vec::new();
    write_commit_log(&mut corpus, &records)?;
    ws.write(CORPUS, &corpus, inputs.clone())?;
    ws.write(IDENTITIES, &to_json(&identities)?, ws.inputs(&[CORPUS]))?;
    let mut act_inputs = ws.inputs(&[CORPUS]);
    act_inputs.extend([
        param("gap_minutes", options.gap_minutes),
        param("floor_minutes", options.floor_minutes),
    ]);
    ws.write(ACTIVITY, &to_json(&activity)?, act_inputs)?;

    let mut caveats = Vec::new();
    let roster_authors = match roster {
        Some(p) => {
            let r = Roster::parse(open_reader(p)?)?;
            ws.write(ROSTER, &to_json(&r)?, [external(p)?].into())?;
            Some(r.departed.len())
        }
        None => {
            ws.remove(ROSTER)?;
            caveats.push("no roster given: knowLost and authLeft will be reported as 0".to_string());
            None
        }
    };
    if parsed.stats.malformed > 0 {
        caveats.push(format!("{} malformed lines skipped", parsed.stats.malformed));
    }
    if unknown_outage_commits > 0 {
        caveats.push(format!(
            "{unknown_outage_commits} outage rows name unknown commits"
        ));
    }
    let summary = IngestSummary {
        records: records.len(),
        identities: identities.len(),
        outages: records.iter().filter(|c| c.is_outage_trigger()).count(),
        parse: parsed.stats,
        unknown_outage_commits,
        roster_authors,
        caveats,
    };
    let mut rep_inputs = ws.inputs(&[CORPUS]);
    rep_inputs.extend(inputs);
    ws.write(INGEST_REPORT, &to_json(&summary)?, rep_inputs)?;
    Ok(summary)
}

// ----------------------------------------------------------------- graph

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphOptions {
    pub window_days: i64,
    pub max_files_per_diff: usize,
    pub dependencies: Option<PathBuf>,
    /// Source tree scanned for imports when no dependency CSV is given.
    pub import_root: Option<PathBuf>,
    pub multipliers: LayerWeights<f64>,
    pub normalize_layers: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        GraphOptions {
            window_days: DEFAULT_WINDOW_DAYS,
            max_files_per_diff: DEFAULT_MAX_FILES_PER_DIFF,
            dependencies: None,
            import_root: None,
            multipliers: LayerWeights::default(),
            normalize_layers: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphArtifact {
    pub window: TimeWindow,
    pub max_files_per_diff: usize,
    pub multipliers: LayerWeights<f64>,
    pub normalize_layers: bool,
    pub dependency: DependencyLayer,
    pub cochange: CoChangeLayer,
    pub authorship: AuthorshipLayer,
}

fn last_timestamp(commits: &[CommitRecord]) -> Result<i64> {
    commits
        .iter()
        .map(|c| c.timestamp)
        .max()
        .ok_or(Error::Empty("corpus has no commits"))
}

pub fn graph(ws: &mut Workspace, options: &GraphOptions) -> Result<GraphArtifact> {
    if options.window_days <= 0 {
        return Err(Error::InvalidParameter(
            "--window must be a positive number of days".into(),
        ));
    }
    let commits = ws.read_corpus()?;
    let identities: FileIdentityMap = ws.read_json(IDENTITIES)?;
    let window = TimeWindow::trailing(last_timestamp(&commits)?, options.window_days * DAY_SECS);
    let mut inputs = ws.inputs(&[CORPUS, IDENTITIES]);
    let dependency = match (&options.dependencies, &options.import_root) {
        (Some(p), _) => {
            inputs.extend([external(p)?]);
            load_dependency_edges(open_reader(p)?, &identities)?
        }
        (None, Some(root)) => {
            inputs.insert(format!("tree:{}", file_label(root)), digest_tree(root)?);
            let scan = scan_imports(root, &ImportConfig::default())?;
            let mut layer = dependency_from_paths(scan.edges, &identities);
            layer.unresolved += scan.unresolved;
            layer
        }
        (None, None) => DependencyLayer::default(),
    };
    let cochange = build_cochange_graph(&commits, &identities, window, options.max_files_per_diff)?;
    let authorship = build_authorship_graph(&commits, &identities, window);
    let combined = combine_networks(
        &dependency,
        &cochange,
        &authorship,
        options.multipliers,
        options.normalize_layers,
    )?;
    inputs.extend([
        param("window_days", options.window_days),
        param("max_files_per_diff", options.max_files_per_diff),
    ]);
    let artifact = GraphArtifact {
        window,
        max_files_per_diff: options.max_files_per_diff,
        multipliers: options.multipliers,
        normalize_layers: options.normalize_layers,
        dependency,
        cochange,
        authorship,
    };
    ws.write(GRAPH, &to_json(&artifact)?, inputs)?;
    let mut edges = Vec::new();
    write_edge_list(
        &mut edges,
        &identities,
        &artifact.dependency,
        &artifact.cochange,
        &artifact.authorship,
        Some(&combined),
    )?;
    ws.write(EDGES, &edges, ws.inputs(&[GRAPH]))?;
    Ok(artifact)
}

// ------------------------------------------------------------ centrality

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentralityOptions {
    pub alpha_frac: f64,
    pub damping: f64,
    pub snapshots: usize,
}

impl Default for CentralityOptions {
    fn default() -> Self {
        let p = NetworkParams::default();
        CentralityOptions {
            alpha_frac: p.alpha_frac,
            damping: p.damping,
            snapshots: DEFAULT_SNAPSHOTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoresArtifact {
    pub params: NetworkParams,
    pub scores: NetworkScores,
}

fn write_scores_csv(
    identities: &FileIdentityMap,
    files: &BTreeMap<IdentityId, f64>,
    authors: &BTreeMap<String, f64>,
) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["node", "score"])?;
    for (id, s) in files {
        w.write_record([identities.current_path(*id), &s.to_string()])?;
    }
    for (a, s) in authors {
        w.write_record([format!("author:{a}"), s.to_string()])?;
    }
    w.into_inner().map_err(|e| Error::Stream(e.into_error()))
}

pub fn centrality(ws: &mut Workspace, options: &CentralityOptions) -> Result<ScoresArtifact> {
    if !(options.alpha_frac > 0.0 && options.alpha_frac < 1.0) {
        return Err(Error::InvalidParameter("--alpha-frac must lie in (0, 1)".into()));
    }
    if !(options.damping > 0.0 && options.damping < 1.0) {
        return Err(Error::InvalidParameter("--damping must lie in (0, 1)".into()));
    }
    let commits = ws.read_corpus()?;
    let identities: FileIdentityMap = ws.read_json(IDENTITIES)?;
    let g: GraphArtifact = ws.read_json(GRAPH)?;
    let params = NetworkParams {
        alpha_frac: options.alpha_frac,
        damping: options.damping,
        max_files: g.max_files_per_diff,
        multipliers: g.multipliers,
        normalize_layers: g.normalize_layers,
        ..NetworkParams::default()
    };
    let scores = NetworkScores::compute(
        &commits,
        &identities,
        &g.dependency,
        g.window,
        options.snapshots,
        &params,
    )?;
    let artifact = ScoresArtifact { params, scores };
    let mut inputs = ws.inputs(&[CORPUS, IDENTITIES, GRAPH]);
    inputs.extend([
        param("alpha_frac", options.alpha_frac),
        param("damping", options.damping),
        param("snapshots", options.snapshots),
    ]);
    ws.write(SCORES, &to_json(&artifact)?, inputs)?;
    let full = &artifact.scores.full;
    ws.write(
        KATZ,
        &write_scores_csv(&identities, &full.file_katz, &full.author_katz)?,
        ws.inputs(&[SCORES]),
    )?;
    ws.write(
        PAGERANK,
        &write_scores_csv(&identities, &full.file_pagerank, &full.author_pagerank)?,
        ws.inputs(&[SCORES]),
    )?;
    Ok(artifact)
}

// --------------------------------------------------------------- metrics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeMetricsArtifact {
    pub snapshot: Snapshot,
    /// Snapshot files keyed by the identity currently holding the path.
    #[serde(with = "crate::as_pairs")]
    pub by_identity: BTreeMap<IdentityId, CodeMetrics>,
    /// Snapshot paths not present in the history.
    pub unmatched: Vec<String>,
}

pub fn metrics(
    ws: &mut Workspace,
    source_root: &Path,
    language_config: Option<&Path>,
) -> Result<CodeMetricsArtifact> {
    let identities: FileIdentityMap = ws.read_json(IDENTITIES)?;
    let langs = language_set(language_config)?;
    let snapshot = scan_tree(source_root, &langs)?;
    let by_identity = metrics_by_identity(&snapshot, &identities, None);
    let unmatched = snapshot
        .files
        .keys()
        .filter(|p| identities.resolve_current(p).is_none())
        .cloned()
        .collect();
    let mut inputs = ws.inputs(&[IDENTITIES]);
    inputs.insert(
        format!("tree:{}", file_label(source_root)),
        digest_tree(source_root)?,
    );
    if let Some(p) = language_config {
        inputs.extend([external(p)?]);
    }
    let artifact = CodeMetricsArtifact {
        snapshot,
        by_identity,
        unmatched,
    };
    ws.write(CODE_METRICS, &to_json(&artifact)?, inputs)?;
    Ok(artifact)
}

// ------------------------------------------------------------------ rank

#[derive(Debug, Clone, PartialEq)]
pub struct RankOptions {
    pub sort_key: String,
    pub filters: Vec<Filter>,
    pub cochange_threshold: f64,
    pub format: TableFormat,
    /// Extra copy of the ranked table outside the workspace.
    pub out: Option<PathBuf>,
}

impl Default for RankOptions {
    fn default() -> Self {
        RankOptions {
            sort_key: "katz".into(),
            filters: vec![],
            cochange_threshold: DEFAULT_COCHANGE_THRESHOLD,
            format: TableFormat::Csv,
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankOutcome {
    pub rows: Vec<FileMetricsRow>,
    pub caveats: Vec<String>,
}

pub fn rank(ws: &mut Workspace, options: &RankOptions) -> Result<RankOutcome> {
    if !(0.0..=1.0).contains(&options.cochange_threshold) {
        return Err(Error::InvalidParameter(
            "--cochange-threshold must lie in [0, 1]".into(),
        ));
    }
    let commits = ws.read_corpus()?;
    let identities: FileIdentityMap = ws.read_json(IDENTITIES)?;
    let activity: BTreeMap<String, ActivityProxy> = ws.read_json(ACTIVITY)?;
    let scores: ScoresArtifact = ws.read_json(SCORES)?;
    let code: Option<CodeMetricsArtifact> = ws.optional_json(CODE_METRICS)?;
    let roster: Option<Roster> = ws.optional_json(ROSTER)?;
    let window = scores
        .scores
        .window
        .ok_or(Error::Empty("centrality scores carry no window"))?;
    let table = compute_file_metrics(
        &PrioritizerInputs {
            commits: &commits,
            identities: &identities,
            activity: &activity,
            scores: &scores.scores,
            code_metrics: code.as_ref().map(|c| &c.by_identity),
            roster: roster.as_ref(),
        },
        &PrioritizerConfig {
            window,
            cochange_threshold: options.cochange_threshold,
        },
    )?;
    let ranked = rank_files(&table.rows, &options.sort_key, &options.filters)?;

    let mut inputs = ws.inputs(&[CORPUS, IDENTITIES, ACTIVITY, SCORES, CODE_METRICS, ROSTER]);
    inputs.extend([param("cochange_threshold", options.cochange_threshold)]);
    ws.write(METRICS_TABLE, &to_json(&table)?, inputs)?;
    let mut rank_inputs = ws.inputs(&[METRICS_TABLE]);
    rank_inputs.extend([
        param("sort", &options.sort_key),
        param(
            "filters",
            options
                .filters
                .iter()
                .map(|f| format!("{}{:?}{}", f.column, f.op, f.value))
                .collect::<Vec<_>>()
                .join(";"),
        ),
    ]);
    let mut bytes = Vec::new();
    let name = match options.format {
        TableFormat::Csv => {
            write_csv(&mut bytes, &ranked)?;
            RANKED_CSV
        }
        TableFormat::Json => {
            write_json(&mut bytes, &ranked)?;
            bytes.push(b'\n');
            RANKED_JSON
        }
    };
    ws.write(name, &bytes, rank_inputs)?;
    if let Some(out) = &options.out {
        export_table(&ranked, options.format, out)?;
    }
    let MetricsTable { caveats, .. } = table;
    Ok(RankOutcome {
        rows: ranked,
        caveats,
    })
}

// -------------------------------------------------------------- classify

pub fn classify(ws: &mut Workspace, patterns: Option<&Path>) -> Result<CorpusReport> {
    let commits = ws.read_corpus()?;
    let set = match patterns {
        Some(p) => PatternSet::from_csv(open_reader(p)?)?,
        None => PatternSet::default(),
    };
    let report = corpus_report(&commits, &set)?;
    let mut inputs = ws.inputs(&[CORPUS]);
    if let Some(p) = patterns {
        inputs.extend([external(p)?]);
    }
    ws.write(CLASSIFY_REPORT, &to_json(&report)?, inputs)?;
    Ok(report)
}

// ---------------------------------------------------------------- impact

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImpactOptions {
    /// Size strata edges; empty means the default powers of 4.
    pub strata: Vec<u64>,
    pub pre_source: Option<PathBuf>,
    pub post_source: Option<PathBuf>,
    pub language_config: Option<PathBuf>,
}

pub fn impact(ws: &mut Workspace, spec_path: &Path, options: &ImpactOptions) -> Result<ImpactRun> {
    let spec: InterventionSpec = serde_json::from_reader(open_reader(spec_path)?)?;
    let commits = ws.read_corpus()?;
    let identities: FileIdentityMap = ws.read_json(IDENTITIES)?;
    let activity: BTreeMap<String, ActivityProxy> = ws.read_json(ACTIVITY)?;
    let g: GraphArtifact = ws.read_json(GRAPH)?;
    let scores: ScoresArtifact = ws.read_json(SCORES)?;
    let langs = language_set(options.language_config.as_deref())?;

    let base = spec_path.parent().unwrap_or(Path::new("."));
    let resolve = |flag: &Option<PathBuf>, field: &Option<String>| {
        flag.clone().or_else(|| field.as_ref().map(|f| base.join(f)))
    };
    let mut inputs = ws.inputs(&[CORPUS, IDENTITIES, ACTIVITY, GRAPH, SCORES]);
    inputs.extend([external(spec_path)?]);
    let mut snapshot = |root: Option<PathBuf>, key: &str| -> Result<Option<Snapshot>> {
        match root {
            Some(r) => {
                inputs.insert(format!("tree:{key}"), digest_tree(&r)?);
                scan_tree(&r, &langs).map(Some)
            }
            None => Ok(None),
        }
    };
    let pre = snapshot(resolve(&options.pre_source, &spec.pre_source), "pre")?;
    let mut post = snapshot(resolve(&options.post_source, &spec.post_source), "post")?;
    if post.is_none() && ws.has(CODE_METRICS) {
        let code: CodeMetricsArtifact = ws.read_json(CODE_METRICS)?;
        inputs.extend(ws.inputs(&[CODE_METRICS]));
        post = Some(code.snapshot);
    }
    let strata = if options.strata.is_empty() {
        default_strata()
    } else {
        options.strata.clone()
    };
    inputs.extend([param("strata", format!("{strata:?}"))]);

    let run = run_impact(
        &spec,
        &ImpactContext {
            commits: &commits,
            identities: &identities,
            activity: &activity,
            dependency: &g.dependency,
            snapshot_pre: pre.as_ref(),
            snapshot_post: post.as_ref(),
            network: scores.params,
            strata,
        },
    )?;
    ws.write(IMPACT_REPORT, &to_json(&run)?, inputs)?;
    ws.write(
        IMPACT_SUMMARY,
        run.report.to_table().as_bytes(),
        ws.inputs(&[IMPACT_REPORT]),
    )?;
    Ok(run)
}

/// Scores of a single window; exposed for callers that evaluate ad hoc windows.
pub fn window_scores(ws: &Workspace, window: TimeWindow) -> Result<GraphScores> {
    let commits = ws.read_corpus()?;
    let identities: FileIdentityMap = ws.read_json(IDENTITIES)?;
    let g: GraphArtifact = ws.read_json(GRAPH)?;
    let scores: ScoresArtifact = ws.read_json(SCORES)?;
    GraphScores::compute(&commits, &identities, &g.dependency, window, &scores.params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate, ScenarioSpec};

    fn demo(dir: &Path) -> PathBuf {
        let data = dir.join("data");
        let spec = ScenarioSpec {
            background_commits: 150,
            ..ScenarioSpec::default()
        };
        generate(&spec).unwrap().write_to(&data).unwrap();
        data
    }

    #[test]
    fn missing_prerequisite_names_command() {
        let dir = tempfile::tempdir().unwrap();
        let mut ws = Workspace::open(&dir.path().join("ws"), false).unwrap();
        match rank(&mut ws, &RankOptions::default()) {
            Err(Error::MissingArtifact { command, .. }) => assert_eq!(command, "ingest"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path(), false).unwrap();
        assert!(matches!(
            Workspace::open(dir.path(), false),
            Err(Error::Locked(_))
        ));
        drop(ws);
        Workspace::open(dir.path(), false).unwrap();
    }

    #[test]
    fn stale_artifacts_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let data = demo(dir.path());
        let root = dir.path().join("ws");
        let mut ws = Workspace::open(&root, false).unwrap();
        ingest(
            &mut ws,
            &data.join("commits.jsonl"),
            None,
            None,
            &IngestOptions::default(),
        )
        .unwrap();
        graph(&mut ws, &GraphOptions::default()).unwrap();
        centrality(&mut ws, &CentralityOptions::default()).unwrap();

        // Re-ingesting with different sessionization leaves the corpus alone.
        let opts = IngestOptions {
            gap_minutes: 60.0,
            ..IngestOptions::default()
        };
        ingest(&mut ws, &data.join("commits.jsonl"), None, None, &opts).unwrap();
        rank(&mut ws, &RankOptions::default()).unwrap();

        // Editing the graph by hand makes everything downstream stale.
        let g = ws.path(GRAPH);
        let mut text = fs::read_to_string(&g).unwrap();
        text.push(' ');
        fs::write(&g, text).unwrap();
        match rank(&mut ws, &RankOptions::default()) {
            Err(Error::Stale {
                artifact, command, ..
            }) => {
                assert_eq!(artifact, GRAPH);
                assert_eq!(command, "graph");
            }
            other => panic!("unexpected {other:?}"),
        }
        drop(ws);
        let mut forced = Workspace::open(&root, true).unwrap();
        rank(&mut forced, &RankOptions::default()).unwrap();
    }
}
