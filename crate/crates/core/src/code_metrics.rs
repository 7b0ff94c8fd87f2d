//! Size and cyclomatic complexity from a lightweight token scan.
//!
//! No parsing happens here. A per-language lexer strips comments and string
//! literals, then:
//!
//! * `sloc` counts lines with any code left on them;
//! * `ccn` is the number of detected functions plus the number of branch
//!   tokens (`if`, `for`, `while`, `case`, `catch`, `&&`, `||`, `?` by
//!   default). Each `case` counts separately. A file with code but no
//!   detected function scores 1.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageConfig {
    pub name: String,
    pub comment_line: Option<String>,
    pub comment_open: Option<String>,
    pub comment_close: Option<String>,
    pub branch_tokens: Vec<String>,
    /// Keywords that start a function (`fn`, `def`, `func`, ...).
    pub function_keywords: Vec<String>,
    /// Detect `name(...) {` bodies as functions.
    pub c_style_functions: bool,
    pub string_delims: Vec<char>,
}

const C_BRANCHES: &[&str] = &["if", "for", "while", "case", "catch", "&&", "||", "?"];

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl LanguageConfig {
    fn c_family(name: &str) -> Self {
        LanguageConfig {
            name: name.into(),
            comment_line: Some("//".into()),
            comment_open: Some("/*".into()),
            comment_close: Some("*/".into()),
            branch_tokens: strings(C_BRANCHES),
            function_keywords: vec![],
            c_style_functions: true,
            string_delims: vec!['"', '\''],
        }
    }

    fn keyword_family(name: &str, keywords: &[&str], branches: &[&str]) -> Self {
        LanguageConfig {
            function_keywords: strings(keywords),
            branch_tokens: strings(branches),
            c_style_functions: false,
            ..Self::c_family(name)
        }
    }
}

/// Language configurations keyed by file extension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageSet {
    pub by_ext: BTreeMap<String, LanguageConfig>,
}

impl Default for LanguageSet {
    fn default() -> Self {
        let mut by_ext = BTreeMap::new();
        let mut put = |exts: &[&str], cfg: LanguageConfig| {
            for e in exts {
                by_ext.insert(e.to_string(), cfg.clone());
            }
        };
        put(&["c", "h"], LanguageConfig::c_family("c"));
        put(
            &["cc", "cpp", "cxx", "hh", "hpp", "hxx"],
            LanguageConfig::c_family("cpp"),
        );
        put(&["java"], LanguageConfig::c_family("java"));
        put(&["cs"], LanguageConfig::c_family("csharp"));
        put(&["php"], LanguageConfig::c_family("php"));
        put(
            &["js", "jsx", "mjs"],
            LanguageConfig::keyword_family("javascript", &["function"], C_BRANCHES),
        );
        put(
            &["ts", "tsx"],
            LanguageConfig::keyword_family("typescript", &["function"], C_BRANCHES),
        );
        put(
            &["go"],
            LanguageConfig::keyword_family("go", &["func"], &["if", "for", "case", "&&", "||"]),
        );
        let mut rust = LanguageConfig::keyword_family(
            "rust",
            &["fn"],
            &["if", "for", "while", "loop", "=>", "&&", "||"],
        );
        rust.string_delims = vec!['"'];
        put(&["rs"], rust);
        put(
            &["py"],
            LanguageConfig {
                comment_line: Some("#".into()),
                comment_open: None,
                comment_close: None,
                ..LanguageConfig::keyword_family(
                    "python",
                    &["def"],
                    &["if", "elif", "for", "while", "except", "case", "and", "or"],
                )
            },
        );
        LanguageSet { by_ext }
    }
}

impl LanguageSet {
    /// Overlays entries from a config file with lines
    /// `ext,comment_line,comment_open,comment_close,tok|tok|...[,fnkw|fnkw]`.
    /// An optional header line starting with `ext` is skipped.
    pub fn with_config<R: std::io::Read>(mut self, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        for row in rdr.records() {
            let row = row?;
            let ext = row.get(0).unwrap_or_default().trim_start_matches('.').to_string();
            if ext.is_empty() || ext == "ext" {
                continue;
            }
            if row.len() < 5 {
                return Err(Error::Parse(format!(
                    "language config for `{ext}` needs 5 columns, found {}",
                    row.len()
                )));
            }
            let opt = |i: usize| row.get(i).filter(|s| !s.is_empty()).map(str::to_string);
            let list = |i: usize| -> Vec<String> {
                row.get(i)
                    .unwrap_or_default()
                    .split('|')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            };
            let base = self.by_ext.get(&ext).cloned().unwrap_or_else(|| LanguageConfig {
                function_keywords: vec![],
                c_style_functions: false,
                ..LanguageConfig::c_family(&ext)
            });
            let cfg = LanguageConfig {
                comment_line: opt(1),
                comment_open: opt(2),
                comment_close: opt(3),
                branch_tokens: list(4),
                function_keywords: if row.len() > 5 {
                    list(5)
                } else {
                    base.function_keywords.clone()
                },
                ..base
            };
            if cfg.comment_open.is_some() != cfg.comment_close.is_some() {
                return Err(Error::Parse(format!(
                    "language config for `{ext}`: block comment needs both delimiters"
                )));
            }
            self.by_ext.insert(ext, cfg);
        }
        Ok(self)
    }

    pub fn for_path(&self, path: &str) -> Option<&LanguageConfig> {
        let ext = Path::new(path).extension()?.to_str()?;
        self.by_ext.get(&ext.to_ascii_lowercase())
    }
}

#[derive(Debug, Clone, Default)]
pub struct LexedFile {
    /// Per line, the code text with comments removed and string literals
    /// collapsed to `""`.
    pub code_lines: Vec<Option<String>>,
    /// Comment bodies; a block comment is one entry, each line comment one.
    pub comments: Vec<String>,
    pub total_lines: usize,
    pub undecodable_lines: usize,
}

impl LexedFile {
    pub fn code(&self) -> String {
        let mut out = String::new();
        for line in self.code_lines.iter().flatten() {
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

/// Splits a file into code and comments according to `lang`.
pub fn lex(bytes: &[u8], lang: &LanguageConfig) -> LexedFile {
    let mut out = LexedFile::default();
    let mut block: Option<String> = None;
    let mut lines: Vec<&[u8]> = bytes.split(|&b| b == b'\n').collect();
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        lines.pop();
    }
    out.total_lines = lines.len();
    for raw in lines {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let Ok(line) = std::str::from_utf8(raw) else {
            // Opaque bytes count as code.
            out.undecodable_lines += 1;
            out.code_lines.push(Some(String::new()));
            continue;
        };
        let mut code = String::new();
        let mut has_code = false;
        let mut rest = line;
        loop {
            if let Some(buf) = block.as_mut() {
                let close = lang.comment_close.as_deref().unwrap_or_default();
                match rest.find(close) {
                    Some(pos) => {
                        buf.push_str(&rest[..pos]);
                        out.comments.push(block.take().unwrap_or_default());
                        rest = &rest[pos + close.len()..];
                        code.push(' ');
                        continue;
                    }
                    None => {
                        buf.push_str(rest);
                        buf.push('\n');
                        break;
                    }
                }
            }
            let Some(c) = rest.chars().next() else { break };
            if let Some(lc) = lang.comment_line.as_deref().filter(|lc| rest.starts_with(*lc)) {
                out.comments.push(rest[lc.len()..].to_string());
                break;
            }
            if let Some(open) = lang.comment_open.as_deref().filter(|o| rest.starts_with(*o)) {
                block = Some(String::new());
                rest = &rest[open.len()..];
                continue;
            }
            if lang.string_delims.contains(&c) {
                let body = &rest[c.len_utf8()..];
                let mut escaped = false;
                let mut end = body.len();
                for (i, ch) in body.char_indices() {
                    if escaped {
                        escaped = false;
                    } else if ch == '\\' {
                        escaped = true;
                    } else if ch == c {
                        end = i + ch.len_utf8();
                        break;
                    }
                }
                code.push_str("\"\"");
                has_code = true;
                rest = &body[end.min(body.len())..];
                continue;
            }
            if !c.is_whitespace() {
                has_code = true;
            }
            code.push(c);
            rest = &rest[c.len_utf8()..];
        }
        out.code_lines.push(has_code.then_some(code));
    }
    if let Some(buf) = block {
        out.comments.push(buf);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlocCount {
    pub sloc: u64,
    pub total_lines: u64,
    /// Lines that were not valid UTF-8; they are counted as code.
    pub undecodable_lines: u64,
}

pub fn count_sloc(bytes: &[u8], lang: &LanguageConfig) -> SlocCount {
    let lexed = lex(bytes, lang);
    SlocCount {
        sloc: lexed.code_lines.iter().filter(|l| l.is_some()).count() as u64,
        total_lines: lexed.total_lines as u64,
        undecodable_lines: lexed.undecodable_lines as u64,
    }
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn identifiers(code: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut start: Option<usize> = None;
    let mut out = Vec::new();
    for (i, c) in code.char_indices().chain(std::iter::once((code.len(), ' '))) {
        match (start, is_ident_char(c)) {
            (None, true) => start = Some(i),
            (Some(s), false) => {
                out.push((s, &code[s..i]));
                start = None;
            }
            _ => {}
        }
    }
    out.into_iter()
        .filter(|(_, w)| !w.starts_with(|c: char| c.is_ascii_digit()))
}

const CONTROL_WORDS: &[&str] = &[
    "if",
    "for",
    "while",
    "switch",
    "catch",
    "return",
    "sizeof",
    "else",
    "do",
    "foreach",
    "using",
    "lock",
    "synchronized",
    "elseif",
    "defined",
];

fn c_style_function_count(code: &str) -> u64 {
    let bytes = code.as_bytes();
    let mut count = 0;
    for (pos, _) in code.match_indices('{') {
        // Walk back over trailing qualifiers (`const`, `override`,
        // `throws X`, `-> T`) to the closing parenthesis.
        let mut i = pos;
        let mut budget = 80;
        while i > 0 && budget > 0 {
            let c = bytes[i - 1] as char;
            if c == ')' {
                break;
            }
            if !(c.is_ascii_alphanumeric() || " \t\n_:,&*<>-".contains(c)) {
                i = 0;
                break;
            }
            i -= 1;
            budget -= 1;
        }
        if i == 0 || bytes[i - 1] != b')' {
            continue;
        }
        // Matching open parenthesis.
        let mut depth = 0i32;
        let mut j = i;
        let mut open = None;
        while j > 0 {
            j -= 1;
            match bytes[j] {
                b')' => depth += 1,
                b'(' => {
                    depth -= 1;
                    if depth == 0 {
                        open = Some(j);
                        break;
                    }
                }
                b'{' | b'}' | b';' => break,
                _ => {}
            }
        }
        let Some(open) = open else { continue };
        let head = code[..open].trim_end();
        let name_start = head
            .char_indices()
            .rev()
            .take_while(|&(_, c)| is_ident_char(c))
            .last()
            .map(|(k, _)| k);
        let Some(ns) = name_start else { continue };
        let name = &head[ns..];
        if CONTROL_WORDS.contains(&name) || name.starts_with(|c: char| c.is_ascii_digit()) {
            continue;
        }
        if head[..ns].trim_end().ends_with("new") {
            continue;
        }
        count += 1;
    }
    count
}

/// Detected functions and branch tokens in comment- and string-free code.
pub fn count_tokens(code: &str, lang: &LanguageConfig) -> (u64, u64) {
    let mut functions = 0u64;
    let mut branches = 0u64;
    let (words, symbols): (Vec<&String>, Vec<&String>) = lang
        .branch_tokens
        .iter()
        .partition(|t| t.chars().all(is_ident_char));
    for (_, w) in identifiers(code) {
        if words.iter().any(|t| t.as_str() == w) {
            branches += 1;
        }
        if lang.function_keywords.iter().any(|k| k == w) {
            functions += 1;
        }
    }
    for sym in symbols {
        branches += code.matches(sym.as_str()).count() as u64;
    }
    if lang.c_style_functions {
        functions += c_style_function_count(code);
    }
    (functions, branches)
}

/// Token-counting cyclomatic complexity for a whole file.
pub fn cyclomatic(bytes: &[u8], lang: &LanguageConfig) -> u64 {
    let lexed = lex(bytes, lang);
    cyclomatic_lexed(&lexed, lang)
}

fn cyclomatic_lexed(lexed: &LexedFile, lang: &LanguageConfig) -> u64 {
    let code = lexed.code();
    let (functions, branches) = count_tokens(&code, lang);
    if functions == 0 {
        u64::from(lexed.code_lines.iter().any(|l| l.is_some())) + branches
    } else {
        functions + branches
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeMetrics {
    pub sloc: u64,
    pub ccn: u64,
    pub language: String,
    /// Set when some lines were not valid UTF-8.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub flagged: bool,
}

pub fn file_metrics(bytes: &[u8], lang: &LanguageConfig) -> CodeMetrics {
    let lexed = lex(bytes, lang);
    CodeMetrics {
        sloc: lexed.code_lines.iter().filter(|l| l.is_some()).count() as u64,
        ccn: cyclomatic_lexed(&lexed, lang),
        language: lang.name.clone(),
        flagged: lexed.undecodable_lines > 0,
    }
}

/// Metrics for every recognised source file under a root.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Keyed by `/`-separated path relative to the root.
    pub files: BTreeMap<String, CodeMetrics>,
    pub unreadable: usize,
}

/// Relative `/`-separated paths of files under `root` with a configured
/// language, sorted. Hidden directories are skipped.
pub fn source_files(root: &Path, languages: &LanguageSet) -> Result<Vec<String>> {
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "source root is not a directory"),
        ));
    }
    let mut out = Vec::new();
    let walker = WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.'));
    for entry in walker.flatten() {
        if !entry.file_type().is_file() {
            continue;
        }
        let Ok(rel) = entry.path().strip_prefix(root) else {
            continue;
        };
        let rel = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        if languages.for_path(&rel).is_some() {
            out.push(rel);
        }
    }
    Ok(out)
}

pub fn scan_tree(root: &Path, languages: &LanguageSet) -> Result<Snapshot> {
    let mut snap = Snapshot::default();
    for rel in source_files(root, languages)? {
        let lang = languages.for_path(&rel).expect("filtered by language");
        match std::fs::read(root.join(&rel)) {
            Ok(bytes) => {
                snap.files.insert(rel, file_metrics(&bytes, lang));
            }
            Err(_) => snap.unreadable += 1,
        }
    }
    Ok(snap)
}
