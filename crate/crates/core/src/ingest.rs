//! Commit-log ingestion, rename-chain resolution and author sessionization.
//!
//! The commit log is JSON-lines, one record per logical change:
//!
//! ```text
//! {"id":"c1","author":"ana","ts":1600000000,"title":"Remove flag","tags":[],
//!  "files":[{"before":"a.c","after":"a.c","add":3,"del":1,"kind":"modify"}],
//!  "outage_level":2}
//! ```
//!
//! Records are re-emitted in non-decreasing timestamp order. Malformed lines
//! are skipped and counted; a threshold turns a corrupt export into a hard
//! error.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    Modify,
    Add,
    Delete,
    Rename,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileChange {
    pub path_before: Option<String>,
    pub path_after: Option<String>,
    pub lines_added: u64,
    pub lines_deleted: u64,
    pub kind: ChangeKind,
}

impl FileChange {
    pub fn modify(path: impl Into<String>, added: u64, deleted: u64) -> Self {
        let path = path.into();
        FileChange {
            path_before: Some(path.clone()),
            path_after: Some(path),
            lines_added: added,
            lines_deleted: deleted,
            kind: ChangeKind::Modify,
        }
    }

    pub fn add(path: impl Into<String>, added: u64) -> Self {
        FileChange {
            path_before: None,
            path_after: Some(path.into()),
            lines_added: added,
            lines_deleted: 0,
            kind: ChangeKind::Add,
        }
    }

    pub fn delete(path: impl Into<String>, deleted: u64) -> Self {
        FileChange {
            path_before: Some(path.into()),
            path_after: None,
            lines_added: 0,
            lines_deleted: deleted,
            kind: ChangeKind::Delete,
        }
    }

    pub fn rename(from: impl Into<String>, to: impl Into<String>) -> Self {
        FileChange {
            path_before: Some(from.into()),
            path_after: Some(to.into()),
            lines_added: 0,
            lines_deleted: 0,
            kind: ChangeKind::Rename,
        }
    }

    /// The path this change leaves behind, or the deleted path.
    pub fn path(&self) -> &str {
        self.path_after
            .as_deref()
            .or(self.path_before.as_deref())
            .unwrap_or_default()
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let nonempty = |p: &Option<String>| p.as_deref().is_some_and(|s| !s.is_empty());
        match self.kind {
            ChangeKind::Add if self.path_before.is_some() || !nonempty(&self.path_after) => {
                Err("add requires only `after`".into())
            }
            ChangeKind::Delete if self.path_after.is_some() || !nonempty(&self.path_before) => {
                Err("delete requires only `before`".into())
            }
            ChangeKind::Rename
                if !nonempty(&self.path_before)
                    || !nonempty(&self.path_after)
                    || self.path_before == self.path_after =>
            {
                Err("rename requires two different paths".into())
            }
            ChangeKind::Modify => {
                if !nonempty(&self.path_before) && !nonempty(&self.path_after) {
                    return Err("modify requires a path".into());
                }
                match (&self.path_before, &self.path_after) {
                    (Some(b), Some(a)) if a != b => Err("modify with two different paths".into()),
                    _ => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutageAnnotation {
    /// 1 is the most severe level.
    pub severity_level: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub commit_id: String,
    pub author_id: String,
    pub timestamp: i64,
    pub message_title: String,
    pub message_tags: Vec<String>,
    pub file_changes: Vec<FileChange>,
    pub outage: Option<OutageAnnotation>,
}

impl CommitRecord {
    pub fn is_outage_trigger(&self) -> bool {
        self.outage.is_some()
    }
}

/// Half-open time interval `[start, end)` in epoch seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: i64,
    pub end: i64,
}

impl TimeWindow {
    pub fn new(start: i64, end: i64) -> Self {
        TimeWindow { start, end }
    }

    pub fn all() -> Self {
        TimeWindow {
            start: i64::MIN,
            end: i64::MAX,
        }
    }

    /// The `length` seconds ending at `end` (inclusive of `end`).
    pub fn trailing(end: i64, length: i64) -> Self {
        TimeWindow {
            start: end.saturating_sub(length).saturating_add(1),
            end: end.saturating_add(1),
        }
    }

    pub fn contains(&self, ts: i64) -> bool {
        self.start <= ts && ts < self.end
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

// Wire format of one JSON line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireCommit {
    id: String,
    author: String,
    ts: i64,
    title: String,
    #[serde(default)]
    tags: Vec<String>,
    files: Vec<WireFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    outage_level: Option<u32>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    merge: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireFile {
    #[serde(default)]
    before: Option<String>,
    #[serde(default)]
    after: Option<String>,
    add: u64,
    del: u64,
    kind: ChangeKind,
}

impl From<&CommitRecord> for WireCommit {
    fn from(c: &CommitRecord) -> Self {
        WireCommit {
            id: c.commit_id.clone(),
            author: c.author_id.clone(),
            ts: c.timestamp,
            title: c.message_title.clone(),
            tags: c.message_tags.clone(),
            files: c
                .file_changes
                .iter()
                .map(|f| WireFile {
                    before: f.path_before.clone(),
                    after: f.path_after.clone(),
                    add: f.lines_added,
                    del: f.lines_deleted,
                    kind: f.kind,
                })
                .collect(),
            outage_level: c.outage.map(|o| o.severity_level),
            merge: false,
        }
    }
}

#[derive(Debug)]
enum LineOutcome {
    Record(CommitRecord),
    Merge,
    NoFiles,
}

fn parse_line(line: &str) -> std::result::Result<LineOutcome, String> {
    let wire: WireCommit = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if wire.merge {
        return Ok(LineOutcome::Merge);
    }
    if wire.ts <= 0 {
        return Err(format!("non-positive timestamp {}", wire.ts));
    }
    if wire.id.is_empty() {
        return Err("empty id".into());
    }
    if wire.outage_level == Some(0) {
        return Err("outage_level must be >= 1".into());
    }
    let file_changes = wire
        .files
        .into_iter()
        .map(|f| {
            let change = FileChange {
                path_before: f.before,
                path_after: f.after,
                lines_added: f.add,
                lines_deleted: f.del,
                kind: f.kind,
            };
            change.validate().map(|_| change)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if file_changes.is_empty() {
        return Ok(LineOutcome::NoFiles);
    }
    Ok(LineOutcome::Record(CommitRecord {
        commit_id: wire.id,
        author_id: wire.author,
        timestamp: wire.ts,
        message_title: wire.title,
        message_tags: wire.tags,
        file_changes,
        outage: wire
            .outage_level
            .map(|severity_level| OutageAnnotation { severity_level }),
    }))
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Abort when more than this percentage of non-blank lines is malformed.
    pub max_malformed_pct: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParseStats {
    pub lines: usize,
    pub malformed: usize,
    pub duplicate_ids: usize,
    pub merges_dropped: usize,
    pub empty_dropped: usize,
    /// First few malformed line numbers with the reason, for diagnostics.
    pub malformed_samples: Vec<(usize, String)>,
}

#[derive(Debug, Clone)]
pub struct ParsedLog {
    pub records: Vec<CommitRecord>,
    pub stats: ParseStats,
}

/// Parses a JSON-lines commit log. Duplicate ids count as malformed.
pub fn parse_commit_log<R: BufRead>(reader: R, options: &ParseOptions) -> Result<ParsedLog> {
    let mut stats = ParseStats::default();
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        stats.lines += 1;
        let reject = |stats: &mut ParseStats, why: String| {
            stats.malformed += 1;
            if stats.malformed_samples.len() < 10 {
                stats.malformed_samples.push((lineno + 1, why));
            }
        };
        match parse_line(&line) {
            Ok(LineOutcome::Record(rec)) => {
                if seen.insert(rec.commit_id.clone()) {
                    records.push(rec);
                } else {
                    stats.duplicate_ids += 1;
                    let why = format!("duplicate id {}", rec.commit_id);
                    reject(&mut stats, why);
                }
            }
            Ok(LineOutcome::Merge) => stats.merges_dropped += 1,
            Ok(LineOutcome::NoFiles) => stats.empty_dropped += 1,
            Err(why) => reject(&mut stats, why),
        }
    }
    if let Some(threshold) = options.max_malformed_pct {
        if stats.lines > 0 {
            let pct = 100.0 * stats.malformed as f64 / stats.lines as f64;
            if pct > threshold {
                return Err(Error::TooManyMalformed {
                    malformed: stats.malformed,
                    total: stats.lines,
                    pct,
                    threshold,
                });
            }
        }
    }
    records.sort_by_key(|r| r.timestamp);
    Ok(ParsedLog { records, stats })
}

/// Writes records in the commit-log wire format.
pub fn write_commit_log<W: Write>(mut writer: W, records: &[CommitRecord]) -> Result<()> {
    for rec in records {
        serde_json::to_writer(&mut writer, &WireCommit::from(rec))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Applies `commit_id,level` outage rows; returns how many ids were unknown.
pub fn apply_outages<R: std::io::Read>(records: &mut [CommitRecord], reader: R) -> Result<usize> {
    let mut levels = HashMap::new();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    for row in rdr.records() {
        let row = row?;
        let id = row.get(0).unwrap_or_default().to_string();
        let level: u32 = row
            .get(1)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::Parse(format!("bad outage level for {id}")))?;
        if level == 0 {
            return Err(Error::Parse(format!("outage level for {id} must be >= 1")));
        }
        levels.insert(id, level);
    }
    let mut found = 0;
    for rec in records.iter_mut() {
        if let Some(&severity_level) = levels.get(&rec.commit_id) {
            rec.outage = Some(OutageAnnotation { severity_level });
            found += 1;
        }
    }
    Ok(levels.len() - found)
}

/// Stable identifier of a file across renames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IdentityId(pub u32);

impl fmt::Display for IdentityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FileIdentityMap {
    current: Vec<String>,
    alive: Vec<bool>,
    /// Per commit, the identity of each file change in record order.
    by_commit: BTreeMap<String, Vec<IdentityId>>,
    /// Per path, the times at which the path became bound to an identity.
    history: BTreeMap<String, Vec<(i64, IdentityId)>>,
}

impl FileIdentityMap {
    pub fn len(&self) -> usize {
        self.current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = IdentityId> + '_ {
        (0..self.current.len() as u32).map(IdentityId)
    }

    pub fn current_path(&self, id: IdentityId) -> &str {
        &self.current[id.0 as usize]
    }

    /// False once the file has been deleted (and not re-added under the
    /// same identity).
    pub fn is_alive(&self, id: IdentityId) -> bool {
        self.alive[id.0 as usize]
    }

    /// Identities of a commit's file changes, aligned with `file_changes`.
    pub fn commit_identities(&self, commit_id: &str) -> &[IdentityId] {
        self.by_commit.get(commit_id).map_or(&[], |v| v.as_slice())
    }

    /// Distinct identities a commit touches.
    pub fn touched(&self, commit_id: &str) -> BTreeSet<IdentityId> {
        self.commit_identities(commit_id).iter().copied().collect()
    }

    /// Identity the path referred to at time `ts`.
    pub fn resolve_at(&self, path: &str, ts: i64) -> Option<IdentityId> {
        let bindings = self.history.get(path)?;
        let idx = bindings.partition_point(|(t, _)| *t <= ts);
        if idx == 0 {
            None
        } else {
            Some(bindings[idx - 1].1)
        }
    }

    /// Identity whose current name is `path`, preferring a live file.
    pub fn resolve_current(&self, path: &str) -> Option<IdentityId> {
        let mut best: Option<IdentityId> = None;
        for (_, id) in self.history.get(path)?.iter().rev() {
            if self.current_path(*id) != path {
                continue;
            }
            if self.is_alive(*id) {
                return Some(*id);
            }
            best.get_or_insert(*id);
        }
        best
    }

    /// Resolves a path by current name first, then by its latest binding.
    pub fn resolve(&self, path: &str) -> Option<IdentityId> {
        self.resolve_current(path)
            .or_else(|| self.history.get(path).and_then(|b| b.last().map(|x| x.1)))
    }

    fn fresh(&mut self, path: &str) -> IdentityId {
        let id = IdentityId(self.current.len() as u32);
        self.current.push(path.to_string());
        self.alive.push(true);
        id
    }

    fn bind(&mut self, path: &str, ts: i64, id: IdentityId) {
        let bindings = self.history.entry(path.to_string()).or_default();
        if bindings.last().map(|b| b.1) != Some(id) {
            bindings.push((ts, id));
        }
    }
}

/// Replays renames in timestamp order and assigns every path occurrence a
/// stable identity named after the file's final path.
///
/// Renames inside one commit apply simultaneously, so swaps work. A rename
/// whose source is also kept in the same commit (modified, or the target of
/// another change) is a copy and starts a new identity. Two renames of the
/// same source, or two changes producing the same path, are an error.
pub fn build_rename_chains(commits: &[CommitRecord]) -> Result<FileIdentityMap> {
    let mut map = FileIdentityMap::default();
    let mut live: HashMap<String, IdentityId> = HashMap::new();

    for commit in commits {
        let conflict = |path: &str| Error::ConflictingRename {
            commit_id: commit.commit_id.clone(),
            path: path.to_string(),
        };

        let mut rename_sources: BTreeSet<&str> = BTreeSet::new();
        let mut produced: BTreeSet<&str> = BTreeSet::new();
        let mut kept: BTreeSet<&str> = BTreeSet::new();
        for ch in &commit.file_changes {
            if ch.kind == ChangeKind::Rename {
                let src = ch.path_before.as_deref().unwrap_or_default();
                if !rename_sources.insert(src) {
                    return Err(conflict(src));
                }
            }
            if let Some(after) = ch.path_after.as_deref() {
                if !produced.insert(after) {
                    return Err(conflict(after));
                }
                if ch.kind != ChangeKind::Rename {
                    kept.insert(after);
                }
            }
        }

        // Resolve every change against the state before this commit.
        let mut ids = Vec::with_capacity(commit.file_changes.len());
        let mut unbind: Vec<&str> = Vec::new();
        let mut rebind: Vec<(&str, IdentityId)> = Vec::new();
        for ch in &commit.file_changes {
            let id = match ch.kind {
                ChangeKind::Modify | ChangeKind::Add => {
                    let path = ch.path();
                    match live.get(path) {
                        Some(&id) => id,
                        None => {
                            let id = map.fresh(path);
                            rebind.push((path, id));
                            id
                        }
                    }
                }
                ChangeKind::Delete => {
                    let path = ch.path();
                    let id = match live.get(path) {
                        Some(&id) => id,
                        None => {
                            let id = map.fresh(path);
                            map.bind(path, commit.timestamp, id);
                            id
                        }
                    };
                    unbind.push(path);
                    id
                }
                ChangeKind::Rename => {
                    let src = ch.path_before.as_deref().unwrap_or_default();
                    let dst = ch.path_after.as_deref().unwrap_or_default();
                    if kept.contains(src) {
                        let id = map.fresh(dst);
                        rebind.push((dst, id));
                        id
                    } else {
                        let id = match live.get(src) {
                            Some(&id) => id,
                            None => {
                                let id = map.fresh(src);
                                map.bind(src, commit.timestamp, id);
                                id
                            }
                        };
                        unbind.push(src);
                        rebind.push((dst, id));
                        id
                    }
                }
            };
            ids.push(id);
        }

        for path in unbind {
            if let Some(id) = live.remove(path) {
                map.alive[id.0 as usize] = false;
            }
        }
        for (path, id) in rebind {
            live.insert(path.to_string(), id);
            map.alive[id.0 as usize] = true;
            map.current[id.0 as usize] = path.to_string();
            map.bind(path, commit.timestamp, id);
        }
        // A deleted identity stays dead even if listed twice.
        for (ch, id) in commit.file_changes.iter().zip(&ids) {
            if ch.kind == ChangeKind::Delete && live.get(ch.path()) != Some(id) {
                map.alive[id.0 as usize] = false;
            }
        }
        map.by_commit.insert(commit.commit_id.clone(), ids);
    }
    Ok(map)
}

pub const DEFAULT_GAP_MINUTES: f64 = 120.0;
pub const DEFAULT_FLOOR_MINUTES: f64 = 5.0;

/// Per-commit authoring-time proxy derived from commit gaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivityProxy {
    pub dat_minutes: f64,
    pub session_count: u32,
    /// Index of the author's session containing this commit, from 0.
    pub session_index: u32,
}

/// Commit-gap sessionization.
///
/// Per author, `dat = min(gap to previous commit, gap_minutes) + floor_minutes`,
/// and the first commit gets `floor_minutes`. A session is a maximal run of
/// commits whose consecutive gaps are at most `gap_minutes`.
pub fn sessionize_author_activity(
    commits: &[CommitRecord],
    gap_minutes: f64,
    floor_minutes: f64,
) -> Result<BTreeMap<String, ActivityProxy>> {
    if !(floor_minutes > 0.0 && gap_minutes > floor_minutes) {
        return Err(Error::InvalidParameter(format!(
            "need gap_minutes > floor_minutes > 0, got gap {gap_minutes}, floor {floor_minutes}"
        )));
    }
    let mut by_author: BTreeMap<&str, Vec<(i64, usize)>> = BTreeMap::new();
    for (i, c) in commits.iter().enumerate() {
        by_author.entry(&c.author_id).or_default().push((c.timestamp, i));
    }
    let mut out = BTreeMap::new();
    for (_, mut seq) in by_author {
        seq.sort();
        let mut prev: Option<i64> = None;
        let mut session = 0u32;
        for (ts, i) in seq {
            let dat_minutes = match prev {
                None => floor_minutes,
                Some(p) => {
                    let gap = (ts - p) as f64 / 60.0;
                    if gap > gap_minutes {
                        session += 1;
                    }
                    gap.min(gap_minutes) + floor_minutes
                }
            };
            prev = Some(ts);
            out.insert(
                commits[i].commit_id.clone(),
                ActivityProxy {
                    dat_minutes,
                    session_count: 1,
                    session_index: session,
                },
            );
        }
    }
    Ok(out)
}

/// Author departure dates from a `author,departed_ts` CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Roster {
    pub departed: BTreeMap<String, Option<i64>>,
}

impl Roster {
    pub fn parse<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut departed = BTreeMap::new();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        for row in rdr.records() {
            let row = row?;
            let author = row.get(0).unwrap_or_default();
            if author.is_empty() {
                continue;
            }
            let ts = match row.get(1).unwrap_or_default() {
                "" => None,
                s => Some(
                    s.parse::<i64>()
                        .map_err(|_| Error::Parse(format!("bad departed_ts `{s}` for {author}")))?,
                ),
            };
            departed.insert(author.to_string(), ts);
        }
        Ok(Roster { departed })
    }

    /// True if the author left at or before `as_of`.
    pub fn has_departed(&self, author: &str, as_of: i64) -> bool {
        matches!(self.departed.get(author), Some(Some(t)) if *t <= as_of)
    }
}
