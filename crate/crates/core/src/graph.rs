//! The software supply chain network: dependency, co-change and
//! authorship layers, and their weighted combination.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::centrality::SparseGraph;
use crate::error::{Error, Result};
use crate::ingest::{CommitRecord, FileIdentityMap, IdentityId, TimeWindow};
use crate::scalar::Scalar;

/// Commits touching more files than this are left out of co-change edges.
pub const DEFAULT_MAX_FILES_PER_DIFF: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "lowercase")]
pub enum NodeRef {
    File(IdentityId),
    Author(String),
}

/// Directed file-to-file edges (call graph or imports).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DependencyLayer {
    pub edges: BTreeSet<(IdentityId, IdentityId)>,
    pub self_edges_dropped: usize,
    pub unresolved: usize,
}

/// Undirected co-change counts keyed by `(low, high)` identity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoChangeLayer {
    #[serde(with = "crate::as_pairs")]
    pub weights: BTreeMap<(IdentityId, IdentityId), u64>,
}

impl CoChangeLayer {
    pub fn weight(&self, a: IdentityId, b: IdentityId) -> u64 {
        let key = if a < b { (a, b) } else { (b, a) };
        self.weights.get(&key).copied().unwrap_or(0)
    }
}

/// Number of commits per `(author, file)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuthorshipLayer {
    #[serde(with = "crate::as_pairs")]
    pub weights: BTreeMap<(String, IdentityId), u64>,
}

fn in_window(commits: &[CommitRecord], window: TimeWindow) -> impl Iterator<Item = &CommitRecord> {
    commits.iter().filter(move |c| window.contains(c.timestamp))
}

/// Pairwise co-change counts over commits in `window` that touch between
/// 2 and `max_files` distinct files.
pub fn build_cochange_graph(
    commits: &[CommitRecord],
    identities: &FileIdentityMap,
    window: TimeWindow,
    max_files: usize,
) -> Result<CoChangeLayer> {
    if max_files < 2 {
        return Err(Error::InvalidParameter(format!(
            "max_files must be at least 2, got {max_files}"
        )));
    }
    let mut layer = CoChangeLayer::default();
    for c in in_window(commits, window) {
        let files: Vec<IdentityId> = identities.touched(&c.commit_id).into_iter().collect();
        if files.len() < 2 || files.len() > max_files {
            continue;
        }
        for (i, &a) in files.iter().enumerate() {
            for &b in &files[i + 1..] {
                *layer.weights.entry((a, b)).or_default() += 1;
            }
        }
    }
    Ok(layer)
}

pub fn build_authorship_graph(
    commits: &[CommitRecord],
    identities: &FileIdentityMap,
    window: TimeWindow,
) -> AuthorshipLayer {
    let mut layer = AuthorshipLayer::default();
    for c in in_window(commits, window) {
        for id in identities.touched(&c.commit_id) {
            *layer.weights.entry((c.author_id.clone(), id)).or_default() += 1;
        }
    }
    layer
}

/// Resolves path pairs to identities; drops self-edges and duplicates.
pub fn dependency_from_paths<I, S>(pairs: I, identities: &FileIdentityMap) -> DependencyLayer
where
    I: IntoIterator<Item = (S, S)>,
    S: AsRef<str>,
{
    let mut layer = DependencyLayer::default();
    for (src, dst) in pairs {
        match (identities.resolve(src.as_ref()), identities.resolve(dst.as_ref())) {
            (Some(a), Some(b)) if a == b => layer.self_edges_dropped += 1,
            (Some(a), Some(b)) => {
                layer.edges.insert((a, b));
            }
            _ => layer.unresolved += 1,
        }
    }
    layer
}

/// Reads a `src,dst` CSV of file-level dependencies.
pub fn load_dependency_edges<R: Read>(reader: R, identities: &FileIdentityMap) -> Result<DependencyLayer> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("src") || headers.get(1) != Some("dst") {
        return Err(Error::Parse(format!(
            "dependency CSV must start with `src,dst`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut pairs = Vec::new();
    for row in rdr.records() {
        let row = row?;
        pairs.push((
            row.get(0).unwrap_or_default().to_string(),
            row.get(1).unwrap_or_default().to_string(),
        ));
    }
    Ok(dependency_from_paths(pairs, identities))
}

/// Import-statement patterns by file extension. Each regex's first capture
/// group is the imported name.
#[derive(Debug, Clone)]
pub struct ImportConfig {
    pub rules: BTreeMap<String, Vec<Regex>>,
}

impl Default for ImportConfig {
    fn default() -> Self {
        let include = Regex::new(r#"^\s*#\s*include\s*["<]([^">]+)[">]"#).expect("regex");
        let generic = vec![
            Regex::new(r#"^\s*(?:import|export)\s.*\bfrom\s+["']([^"']+)["']"#).expect("regex"),
            Regex::new(r#"^\s*from\s+([A-Za-z0-9_.]+)\s+import\b"#).expect("regex"),
            Regex::new(r#"^\s*(?:import|use)\s+(?:static\s+)?["']?([A-Za-z0-9_./:\\-]+?)["']?\s*(?:;|$|\s)"#)
                .expect("regex"),
        ];
        let mut rules = BTreeMap::new();
        for ext in ["c", "h", "cc", "cpp", "cxx", "hh", "hpp", "hxx"] {
            rules.insert(ext.to_string(), vec![include.clone()]);
        }
        for ext in [
            "py", "rs", "go", "java", "js", "jsx", "mjs", "ts", "tsx", "php", "hack",
        ] {
            rules.insert(ext.to_string(), generic.clone());
        }
        ImportConfig { rules }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImportScan {
    /// `importer -> imported`, both relative to the source root.
    pub edges: BTreeSet<(String, String)>,
    pub unresolved: usize,
    pub unreadable: usize,
}

fn normalize(path: &str) -> Option<String> {
    let mut parts: Vec<&str> = Vec::new();
    for seg in path.split('/') {
        match seg {
            "" | "." => {}
            ".." => {
                parts.pop()?;
            }
            s => parts.push(s),
        }
    }
    Some(parts.join("/"))
}

fn import_candidates(importer: &str, target: &str) -> Vec<String> {
    let dir = importer.rsplit_once('/').map_or("", |(d, _)| d);
    let ext = importer
        .rsplit_once('.')
        .map(|(_, e)| e)
        .filter(|e| !e.contains('/'));
    let mut bases = vec![target.to_string()];
    if !target.contains('/') && !target.starts_with('.') {
        let dotted = target.replace("::", "/").replace('.', "/");
        if dotted != target {
            bases.push(dotted);
        }
    }
    let mut out = Vec::new();
    for base in bases {
        for root in [dir, ""] {
            let joined = if root.is_empty() {
                base.clone()
            } else {
                format!("{root}/{base}")
            };
            if let Some(p) = normalize(&joined) {
                if let Some(ext) = ext {
                    out.push(format!("{p}.{ext}"));
                }
                out.push(p);
            }
        }
    }
    out
}

/// Coarse import scan: an edge for every import that names a file inside
/// `root`. Unmatched imports are counted, not turned into edges.
pub fn scan_imports(root: &Path, config: &ImportConfig) -> Result<ImportScan> {
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "source root is not a directory"),
        ));
    }
    let mut files = BTreeSet::new();
    let walker = WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.'));
    for entry in walker.flatten() {
        if entry.file_type().is_file() {
            if let Ok(rel) = entry.path().strip_prefix(root) {
                let rel: Vec<_> = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect();
                files.insert(rel.join("/"));
            }
        }
    }
    let mut scan = ImportScan::default();
    for file in &files {
        let Some(ext) = file.rsplit_once('.').map(|(_, e)| e.to_ascii_lowercase()) else {
            continue;
        };
        let Some(rules) = config.rules.get(&ext) else {
            continue;
        };
        let text = match std::fs::read(root.join(file)) {
            Ok(bytes) => String::from_utf8_lossy(&bytes).into_owned(),
            Err(_) => {
                scan.unreadable += 1;
                continue;
            }
        };
        for line in text.lines() {
            let Some(target) = rules
                .iter()
                .find_map(|re| re.captures(line))
                .and_then(|c| c.get(1))
            else {
                continue;
            };
            match import_candidates(file, target.as_str())
                .into_iter()
                .find(|c| files.contains(c))
            {
                Some(dst) if dst != *file => {
                    scan.edges.insert((file.clone(), dst));
                }
                Some(_) => {}
                None => scan.unresolved += 1,
            }
        }
    }
    Ok(scan)
}

/// Per-layer multipliers for the combined view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights<T> {
    pub dependency: T,
    pub cochange: T,
    pub authorship: T,
}

impl<T: Scalar> Default for LayerWeights<T> {
    fn default() -> Self {
        LayerWeights {
            dependency: T::one(),
            cochange: T::one(),
            authorship: T::one(),
        }
    }
}

/// Combined network over file and author nodes.
///
/// Files come first, ordered by identity, then authors by name. The
/// combined adjacency is symmetric: directed dependency edges are added
/// together with their transpose.
#[derive(Debug, Clone)]
pub struct SupplyChainGraph<T> {
    pub nodes: Vec<NodeRef>,
    index: BTreeMap<NodeRef, usize>,
    pub combined: SparseGraph<T>,
}

impl<T: Scalar> SupplyChainGraph<T> {
    pub fn node_index(&self, node: &NodeRef) -> Option<usize> {
        self.index.get(node).copied()
    }

    pub fn file_index(&self, id: IdentityId) -> Option<usize> {
        self.node_index(&NodeRef::File(id))
    }

    pub fn author_index(&self, author: &str) -> Option<usize> {
        self.node_index(&NodeRef::Author(author.to_string()))
    }

    /// Display labels: current path for files, `author:<id>` for authors.
    pub fn labels(&self, identities: &FileIdentityMap) -> Vec<String> {
        self.nodes
            .iter()
            .map(|n| match n {
                NodeRef::File(id) => identities.current_path(*id).to_string(),
                NodeRef::Author(a) => format!("author:{a}"),
            })
            .collect()
    }
}

/// `combined = sum_i multiplier_i * layer_i`. With `normalize_layers`, each
/// layer is first divided by its largest weight.
pub fn combine_networks<T: Scalar>(
    dependency: &DependencyLayer,
    cochange: &CoChangeLayer,
    authorship: &AuthorshipLayer,
    multipliers: LayerWeights<T>,
    normalize_layers: bool,
) -> Result<SupplyChainGraph<T>> {
    let m = [
        multipliers.dependency,
        multipliers.cochange,
        multipliers.authorship,
    ];
    if m.iter().any(|w| !w.is_finite() || *w < T::zero()) {
        return Err(Error::InvalidParameter(
            "layer multipliers must be non-negative".into(),
        ));
    }
    if m.iter().all(|w| *w == T::zero()) {
        return Err(Error::InvalidParameter("all layer multipliers are zero".into()));
    }

    let mut nodes: BTreeSet<NodeRef> = BTreeSet::new();
    for &(a, b) in &dependency.edges {
        nodes.insert(NodeRef::File(a));
        nodes.insert(NodeRef::File(b));
    }
    for &(a, b) in cochange.weights.keys() {
        nodes.insert(NodeRef::File(a));
        nodes.insert(NodeRef::File(b));
    }
    for (author, file) in authorship.weights.keys() {
        nodes.insert(NodeRef::File(*file));
        nodes.insert(NodeRef::Author(author.clone()));
    }
    let nodes: Vec<NodeRef> = nodes.into_iter().collect();
    let index: BTreeMap<NodeRef, usize> = nodes.iter().cloned().enumerate().map(|(i, n)| (n, i)).collect();
    let file = |id: IdentityId| index[&NodeRef::File(id)];

    let scale = |max: u64, mult: T| {
        if normalize_layers && max > 0 {
            mult / T::of(max as f64)
        } else {
            mult
        }
    };
    let dep_scale = scale(u64::from(!dependency.edges.is_empty()), m[0]);
    let co_scale = scale(cochange.weights.values().copied().max().unwrap_or(0), m[1]);
    let au_scale = scale(authorship.weights.values().copied().max().unwrap_or(0), m[2]);

    let mut edges: Vec<(usize, usize, T)> = Vec::new();
    if m[0] > T::zero() {
        edges.extend(
            dependency
                .edges
                .iter()
                .map(|&(a, b)| (file(a), file(b), dep_scale)),
        );
    }
    if m[1] > T::zero() {
        edges.extend(
            cochange
                .weights
                .iter()
                .map(|(&(a, b), &w)| (file(a), file(b), co_scale * T::of(w as f64))),
        );
    }
    if m[2] > T::zero() {
        edges.extend(authorship.weights.iter().map(|((author, f), &w)| {
            (
                index[&NodeRef::Author(author.clone())],
                file(*f),
                au_scale * T::of(w as f64),
            )
        }));
    }
    let combined = SparseGraph::symmetrized(nodes.len(), edges);
    Ok(SupplyChainGraph {
        nodes,
        index,
        combined,
    })
}

/// Writes the `layer,src,dst,weight` edge list. Undirected layers list each
/// pair once; the combined layer lists both directions.
pub fn write_edge_list<W: Write, T: Scalar>(
    writer: W,
    identities: &FileIdentityMap,
    dependency: &DependencyLayer,
    cochange: &CoChangeLayer,
    authorship: &AuthorshipLayer,
    combined: Option<&SupplyChainGraph<T>>,
) -> Result<()> {
    let path = |id: IdentityId| identities.current_path(id).to_string();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["layer", "src", "dst", "weight"])?;
    for &(a, b) in &dependency.edges {
        w.write_record(["dependency", &path(a), &path(b), "1"])?;
    }
    for (&(a, b), weight) in &cochange.weights {
        w.write_record(["cochange", &path(a), &path(b), &weight.to_string()])?;
    }
    for ((author, f), weight) in &authorship.weights {
        w.write_record([
            "authorship",
            &format!("author:{author}"),
            &path(*f),
            &weight.to_string(),
        ])?;
    }
    if let Some(g) = combined {
        let labels = g.labels(identities);
        for (u, v, weight) in g.combined.edges() {
            w.write_record(["combined", &labels[u], &labels[v], &weight.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_rename_chains, FileChange};

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

    fn ids(map: &FileIdentityMap, p: &str) -> IdentityId {
        map.resolve_current(p).unwrap()
    }

    #[test]
    fn cochange_examples() {
        let commits = vec![
            commit("1", "x", 1, &["a", "b", "c"]),
            commit("2", "x", 2, &["a", "b"]),
            commit("3", "x", 3, &["d"]),
        ];
        let map = build_rename_chains(&commits).unwrap();
        let layer = build_cochange_graph(&commits, &map, TimeWindow::all(), 100).unwrap();
        let (a, b, c) = (ids(&map, "a"), ids(&map, "b"), ids(&map, "c"));
        assert_eq!(layer.weight(a, b), 2);
        assert_eq!(layer.weight(b, a), 2);
        assert_eq!(layer.weight(a, c), 1);
        assert_eq!(layer.weight(b, c), 1);
        assert_eq!(layer.weights.len(), 3);

        let only_first = build_cochange_graph(&commits, &map, TimeWindow::new(1, 2), 100).unwrap();
        assert_eq!(only_first.weight(a, b), 1);
        let capped = build_cochange_graph(&commits, &map, TimeWindow::all(), 2).unwrap();
        assert_eq!(capped.weights.len(), 1);
        assert!(build_cochange_graph(&commits, &map, TimeWindow::all(), 1).is_err());
    }

    #[test]
    fn authorship_examples() {
        let commits = vec![
            commit("1", "x", 1, &["f"]),
            commit("2", "x", 2, &["f"]),
            commit("3", "x", 3, &["f"]),
            commit("4", "y", 4, &["g"]),
        ];
        let map = build_rename_chains(&commits).unwrap();
        let layer = build_authorship_graph(&commits, &map, TimeWindow::all());
        assert_eq!(layer.weights[&("x".to_string(), ids(&map, "f"))], 3);
        assert!(build_authorship_graph(&commits, &map, TimeWindow::new(100, 200))
            .weights
            .is_empty());

        // Two authors on disjoint files: two components.
        let g = combine_networks::<f64>(
            &DependencyLayer::default(),
            &CoChangeLayer::default(),
            &layer,
            LayerWeights::default(),
            false,
        )
        .unwrap();
        let x = g.author_index("x").unwrap();
        let gf = g.file_index(ids(&map, "g")).unwrap();
        assert_eq!(g.combined.weight(x, gf), 0.0);
        assert_eq!(g.combined.edge_count(), 4);
    }

    #[test]
    fn dependency_csv() {
        let commits = vec![commit("1", "x", 1, &["a", "b"])];
        let map = build_rename_chains(&commits).unwrap();
        let csv = "src,dst\na,b\na,b\na,a\nb,a\nz,a\n";
        let dep = load_dependency_edges(csv.as_bytes(), &map).unwrap();
        let (a, b) = (ids(&map, "a"), ids(&map, "b"));
        assert_eq!(dep.edges, BTreeSet::from([(a, b), (b, a)]));
        assert_eq!(dep.self_edges_dropped, 1);
        assert_eq!(dep.unresolved, 1);
        assert!(load_dependency_edges("from,to\n".as_bytes(), &map).is_err());
    }

    #[test]
    fn combine_projections_and_linearity() {
        let commits = vec![commit("1", "x", 1, &["a", "b"])];
        let map = build_rename_chains(&commits).unwrap();
        let (a, b) = (ids(&map, "a"), ids(&map, "b"));
        let dep = DependencyLayer {
            edges: BTreeSet::from([(a, b)]),
            ..Default::default()
        };
        let co = build_cochange_graph(&commits, &map, TimeWindow::all(), 100).unwrap();
        let au = build_authorship_graph(&commits, &map, TimeWindow::all());
        let w = |d: f64, c: f64, r: f64| LayerWeights {
            dependency: d,
            cochange: c,
            authorship: r,
        };

        let g = combine_networks(&dep, &co, &au, w(1.0, 0.0, 0.0), false).unwrap();
        let (ia, ib) = (g.file_index(a).unwrap(), g.file_index(b).unwrap());
        assert_eq!(g.combined.weight(ia, ib), 1.0);
        assert_eq!(g.combined.weight(ib, ia), 1.0);
        assert_eq!(g.combined.edge_count(), 2);

        let g = combine_networks(&dep, &co, &au, w(0.0, 1.0, 0.0), false).unwrap();
        assert_eq!(g.combined.weight(ia, ib), 1.0);
        assert_eq!(g.combined.edge_count(), 2);

        let g = combine_networks(&dep, &co, &au, w(1.0, 1.0, 0.0), false).unwrap();
        assert_eq!(g.combined.weight(ia, ib), 2.0);

        assert!(combine_networks(&dep, &co, &au, w(0.0, 0.0, 0.0), false).is_err());
        assert!(combine_networks(&dep, &co, &au, w(-1.0, 1.0, 0.0), false).is_err());
    }

    #[test]
    fn normalization_divides_by_layer_max() {
        let commits = vec![
            commit("1", "x", 1, &["a", "b"]),
            commit("2", "x", 2, &["a", "b"]),
            commit("3", "x", 3, &["a", "b", "c"]),
        ];
        let map = build_rename_chains(&commits).unwrap();
        let co = build_cochange_graph(&commits, &map, TimeWindow::all(), 100).unwrap();
        let g = combine_networks::<f64>(
            &DependencyLayer::default(),
            &co,
            &AuthorshipLayer::default(),
            LayerWeights::default(),
            true,
        )
        .unwrap();
        let (a, b, c) = (ids(&map, "a"), ids(&map, "b"), ids(&map, "c"));
        let idx = |id| g.file_index(id).unwrap();
        assert_eq!(g.combined.weight(idx(a), idx(b)), 1.0);
        assert!((g.combined.weight(idx(a), idx(c)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn import_scan_tree() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        std::fs::create_dir_all(root.join("inc")).unwrap();
        std::fs::write(root.join("a.c"), "#include \"b.h\"\n#include <stdio.h>\n").unwrap();
        std::fs::write(root.join("b.h"), "#include \"inc/c.h\"\n").unwrap();
        std::fs::write(root.join("inc/c.h"), "int c;\n").unwrap();
        std::fs::write(root.join("m.py"), "from pkg.util import x\nimport os\n").unwrap();
        std::fs::create_dir_all(root.join("pkg")).unwrap();
        std::fs::write(root.join("pkg/util.py"), "x = 1\n").unwrap();
        let scan = scan_imports(root, &ImportConfig::default()).unwrap();
        let edges: Vec<(String, String)> = scan.edges.into_iter().collect();
        assert_eq!(
            edges,
            vec![
                ("a.c".into(), "b.h".into()),
                ("b.h".into(), "inc/c.h".into()),
                ("m.py".into(), "pkg/util.py".into()),
            ]
        );
        assert_eq!(scan.unresolved, 2);
    }

    #[test]
    fn edge_list_export() {
        let commits = vec![commit("1", "x", 1, &["a", "b"])];
        let map = build_rename_chains(&commits).unwrap();
        let co = build_cochange_graph(&commits, &map, TimeWindow::all(), 100).unwrap();
        let au = build_authorship_graph(&commits, &map, TimeWindow::all());
        let mut out = Vec::new();
        write_edge_list::<_, f64>(&mut out, &map, &DependencyLayer::default(), &co, &au, None).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "layer,src,dst,weight\ncochange,a,b,1\nauthorship,author:x,a,1\nauthorship,author:x,b,1\n"
        );
    }
}
