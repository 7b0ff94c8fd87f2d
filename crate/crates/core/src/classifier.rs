//! Keyword classification of improvement commits and self-admitted
//! technical debt (SATD) scanning of source comments.
//!
//! Patterns are whole-word and case-insensitive. The last word of a
//! pattern of four or more letters also matches common inflections, so
//! `refactor` matches `refactoring` and `delete` matches `deleted`. Short
//! all-caps acronyms such as `BE` match only in capitals, otherwise the
//! verb "be" would label half the corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::code_metrics::{lex, source_files, LanguageSet};
use crate::error::{Error, Result};
use crate::ingest::CommitRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Removal,
    BetterEngineering,
    Cleanup,
    Refactor,
    DeadCode,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Removal,
        Category::BetterEngineering,
        Category::Cleanup,
        Category::Refactor,
        Category::DeadCode,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Removal => "removal",
            Category::BetterEngineering => "better_engineering",
            Category::Cleanup => "cleanup",
            Category::Refactor => "refactor",
            Category::DeadCode => "dead_code",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown category `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Title,
    Tag,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ImprovementLabel {
    pub category: Category,
    pub matched_pattern: String,
    pub source: LabelSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub category: Category,
    pub text: String,
    pub polarity: Polarity,
    words: Vec<String>,
    acronym: bool,
}

const SUFFIXES: &[&str] = &["s", "es", "d", "ed", "ing", "ings", "er", "ers", "up", "ups"];

impl Pattern {
    pub fn new(category: Category, text: &str, polarity: Polarity) -> Result<Self> {
        let words = words(text);
        if words.is_empty() {
            return Err(Error::Parse(format!("empty pattern for {category}")));
        }
        let acronym =
            words.len() == 1 && words[0].len() <= 3 && words[0].chars().all(|c| c.is_ascii_uppercase());
        let words = if acronym {
            words
        } else {
            words.into_iter().map(|w| w.to_lowercase()).collect()
        };
        Ok(Pattern {
            category,
            text: text.to_string(),
            polarity,
            words,
            acronym,
        })
    }

    fn word_matches(&self, pattern: &str, token: &str, last: bool) -> bool {
        if self.acronym {
            return token == pattern;
        }
        let token = token.to_lowercase();
        if token == pattern {
            return true;
        }
        if !last || pattern.chars().count() < 4 {
            return false;
        }
        if let Some(rest) = token.strip_prefix(pattern) {
            return SUFFIXES.contains(&rest);
        }
        // remove -> removing, removed
        pattern.strip_suffix('e').is_some_and(|stem| {
            token
                .strip_prefix(stem)
                .is_some_and(|rest| ["ing", "ings", "ed", "er", "ers"].contains(&rest))
        })
    }

    /// Whether the pattern occurs in an already tokenized text.
    pub fn matches_tokens(&self, tokens: &[&str]) -> bool {
        let n = self.words.len();
        if tokens.len() < n {
            return false;
        }
        (0..=tokens.len() - n).any(|i| {
            self.words
                .iter()
                .enumerate()
                .all(|(k, w)| self.word_matches(w, tokens[i + k], k + 1 == n))
        })
    }

    pub fn matches(&self, text: &str) -> bool {
        self.matches_tokens(&words_ref(text))
    }
}

fn words_ref(text: &str) -> Vec<&str> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect()
}

fn words(text: &str) -> Vec<String> {
    words_ref(text).into_iter().map(str::to_string).collect()
}

/// Positive and negative patterns per category.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSet {
    pub patterns: Vec<Pattern>,
}

impl Default for PatternSet {
    fn default() -> Self {
        use Category::*;
        use Polarity::*;
        let seeds = [
            (Removal, "remove", Positive),
            (Removal, "delete", Positive),
            (Removal, "unneeded", Positive),
            (Removal, "add deleted code", Negative),
            (BetterEngineering, "better engineering", Positive),
            (BetterEngineering, "BE", Positive),
            (Cleanup, "clean", Positive),
            (Refactor, "refactor", Positive),
            (Refactor, "rework", Positive),
            (DeadCode, "dead", Positive),
        ];
        PatternSet {
            patterns: seeds
                .iter()
                .map(|&(c, t, p)| Pattern::new(c, t, p).expect("seed pattern"))
                .collect(),
        }
    }
}

impl PatternSet {
    /// Reads a `category,pattern,polarity` CSV.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut patterns = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let category: Category = row.get(0).unwrap_or_default().parse()?;
            let polarity = match row.get(2).unwrap_or("positive") {
                "positive" | "" => Polarity::Positive,
                "negative" => Polarity::Negative,
                other => return Err(Error::Parse(format!("unknown polarity `{other}`"))),
            };
            patterns.push(Pattern::new(category, row.get(1).unwrap_or_default(), polarity)?);
        }
        Ok(PatternSet { patterns })
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["category", "pattern", "polarity"])?;
        for p in &self.patterns {
            let pol = match p.polarity {
                Polarity::Positive => "positive",
                Polarity::Negative => "negative",
            };
            w.write_record([p.category.as_str(), &p.text, pol])?;
        }
        w.flush()?;
        Ok(())
    }

    fn labels_in(&self, text: &str, source: LabelSource, out: &mut BTreeMap<Category, ImprovementLabel>) {
        let tokens = words_ref(text);
        let suppressed: BTreeSet<Category> = self
            .patterns
            .iter()
            .filter(|p| p.polarity == Polarity::Negative && p.matches_tokens(&tokens))
            .map(|p| p.category)
            .collect();
        for p in &self.patterns {
            if p.polarity == Polarity::Positive
                && !suppressed.contains(&p.category)
                && !out.contains_key(&p.category)
                && p.matches_tokens(&tokens)
            {
                out.insert(
                    p.category,
                    ImprovementLabel {
                        category: p.category,
                        matched_pattern: p.text.clone(),
                        source,
                    },
                );
            }
        }
    }

    /// All categories the title or tags match, one label per category,
    /// ordered by category. A negative hit in a text suppresses that
    /// category's positive hits in the same text.
    pub fn classify(&self, title: &str, tags: &[String]) -> Vec<ImprovementLabel> {
        let mut out = BTreeMap::new();
        self.labels_in(title, LabelSource::Title, &mut out);
        for tag in tags {
            self.labels_in(tag, LabelSource::Tag, &mut out);
        }
        out.into_values().collect()
    }
}

/// Classifies with the default pattern set.
pub fn classify_message(title: &str, tags: &[String]) -> Vec<ImprovementLabel> {
    PatternSet::default().classify(title, tags)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryShare {
    pub category: Category,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub total_commits: usize,
    pub categories: Vec<CategoryShare>,
    /// Commits with at least one label, counted once.
    pub union_count: usize,
    pub union_percent: f64,
    pub sum_percent: f64,
    pub multi_labeled: usize,
    pub overlap_note: String,
}

pub fn corpus_report(commits: &[CommitRecord], patterns: &PatternSet) -> Result<CorpusReport> {
    if commits.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let total = commits.len();
    let pct = |k: usize| 100.0 * k as f64 / total as f64;
    let mut counts: BTreeMap<Category, usize> = Category::ALL.iter().map(|&c| (c, 0)).collect();
    let mut union_count = 0;
    let mut multi_labeled = 0;
    for c in commits {
        let labels = patterns.classify(&c.message_title, &c.message_tags);
        if !labels.is_empty() {
            union_count += 1;
        }
        if labels.len() > 1 {
            multi_labeled += 1;
        }
        for l in labels {
            *counts.entry(l.category).or_default() += 1;
        }
    }
    let categories: Vec<CategoryShare> = counts
        .into_iter()
        .map(|(category, count)| CategoryShare {
            category,
            count,
            percent: pct(count),
        })
        .collect();
    let label_total: usize = categories.iter().map(|c| c.count).sum();
    let sum_percent = pct(label_total);
    let overlap_note = if multi_labeled > 0 {
        format!(
            "{multi_labeled} commits carry more than one label: categories sum to {sum_percent:.2}% while {:.2}% of commits match any keyword",
            pct(union_count)
        )
    } else {
        "no commit carries more than one label".to_string()
    };
    Ok(CorpusReport {
        total_commits: total,
        categories,
        union_count,
        union_percent: pct(union_count),
        sum_percent,
        multi_labeled,
        overlap_note,
    })
}

impl CorpusReport {
    /// Fixed-width text table.
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<20} {:>8} {:>9}\n", "category", "diffs", "% diffs");
        for c in &self.categories {
            s.push_str(&format!(
                "{:<20} {:>8} {:>8.2}%\n",
                c.category.as_str(),
                c.count,
                c.percent
            ));
        }
        s.push_str(&format!(
            "{:<20} {:>8} {:>8.2}%\n",
            "any", self.union_count, self.union_percent
        ));
        s.push_str(&format!("{:<20} {:>8} {:>8.2}%\n", "sum", "", self.sum_percent));
        s.push_str(&format!(
            "total diffs: {}\n{}\n",
            self.total_commits, self.overlap_note
        ));
        s
    }
}

/// Default SATD keywords.
pub const SATD_KEYWORDS: &[&str] = &["hack", "fixme", "todo", "workaround", "kludge", "temporary fix"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SatdScan {
    /// Matching comments per file, including files with none.
    pub per_file: BTreeMap<String, usize>,
    pub unreadable: usize,
}

fn satd_matches(comment: &str, keywords: &[Vec<String>]) -> bool {
    let tokens: Vec<String> = words_ref(comment).iter().map(|w| w.to_lowercase()).collect();
    keywords
        .iter()
        .any(|kw| tokens.len() >= kw.len() && tokens.windows(kw.len()).any(|win| win == kw.as_slice()))
}

/// Number of comments matching `keywords` (case-insensitive, whole word).
pub fn count_satd(bytes: &[u8], lang: &crate::code_metrics::LanguageConfig, keywords: &[&str]) -> usize {
    let kws: Vec<Vec<String>> = keywords
        .iter()
        .map(|k| words_ref(k).iter().map(|w| w.to_lowercase()).collect())
        .collect();
    lex(bytes, lang)
        .comments
        .iter()
        .filter(|c| satd_matches(c, &kws))
        .count()
}

pub fn satd_scan(root: &Path, languages: &LanguageSet) -> Result<SatdScan> {
    let mut scan = SatdScan::default();
    for rel in source_files(root, languages)? {
        let lang = languages.for_path(&rel).expect("filtered by language");
        match std::fs::read(root.join(&rel)) {
            Ok(bytes) => {
                scan.per_file.insert(rel, count_satd(&bytes, lang, SATD_KEYWORDS));
            }
            Err(_) => scan.unreadable += 1,
        }
    }
    Ok(scan)
}
