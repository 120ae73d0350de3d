//! Per-document quality heuristics in the Gopher/ROOTS style.
//!
//! Every configured rule is evaluated for every document (no short-circuit)
//! so the measurements map is always complete. Code and math documents are
//! exempt from the prose heuristics but still measured.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Category, Document, Lang};

pub const RULE_TOO_SHORT: &str = "too_short";
pub const RULE_TOO_LONG: &str = "too_long";
pub const RULE_MEAN_WORD_LENGTH: &str = "mean_word_length";
pub const RULE_SYMBOL_TO_WORD_RATIO: &str = "symbol_to_word_ratio";
pub const RULE_BULLET_LINE_FRACTION: &str = "bullet_line_fraction";
pub const RULE_ELLIPSIS_END_FRACTION: &str = "ellipsis_end_fraction";
pub const RULE_ALPHA_WORD_FRACTION: &str = "alpha_word_fraction";
pub const RULE_STOPWORD_HITS: &str = "stopword_hits";
pub const RULE_DUPLICATE_LINE_FRACTION: &str = "duplicate_line_fraction";

/// Flag key recorded in measurements when no stopword list exists for the
/// document's language and the stopword rule was skipped.
pub const MEASURE_STOPWORDS_SKIPPED: &str = "stopword_list_missing";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_words: usize,
    pub max_words: usize,
    pub mean_word_len_range: (f64, f64),
    pub max_symbol_to_word_ratio: f64,
    pub max_bullet_line_fraction: f64,
    pub max_ellipsis_end_fraction: f64,
    pub min_alpha_word_fraction: f64,
    pub min_stopword_hits: u64,
    pub stopword_lists: BTreeMap<Lang, Vec<String>>,
    pub max_duplicate_line_fraction: f64,
    pub exempt_categories: BTreeSet<Category>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_words: 50,
            max_words: 100_000,
            mean_word_len_range: (3.0, 10.0),
            max_symbol_to_word_ratio: 0.1,
            max_bullet_line_fraction: 0.9,
            max_ellipsis_end_fraction: 0.3,
            min_alpha_word_fraction: 0.8,
            min_stopword_hits: 2,
            stopword_lists: default_stopword_lists(),
            max_duplicate_line_fraction: 0.3,
            exempt_categories: [Category::Code, Category::Math].into_iter().collect(),
        }
    }
}

fn list(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

/// Small function-word lists per language. These are defaults, not a claim
/// about any particular production configuration; override via config.
pub fn default_stopword_lists() -> BTreeMap<Lang, Vec<String>> {
    let mut m = BTreeMap::new();
    m.insert(
        Lang::En,
        list(&["the", "be", "to", "of", "and", "that", "have", "with"]),
    );
    m.insert(
        Lang::Sv,
        list(&["och", "att", "det", "som", "en", "på", "är", "av", "för", "med"]),
    );
    m.insert(
        Lang::Da,
        list(&["og", "i", "det", "at", "en", "den", "til", "er", "som", "på"]),
    );
    m.insert(
        Lang::No,
        list(&["og", "i", "det", "som", "på", "er", "av", "til", "en", "at"]),
    );
    m.insert(
        Lang::Is,
        list(&["og", "að", "í", "á", "það", "sem", "er", "við", "um", "en"]),
    );
    m
}

/// Outcome of evaluating one document: accepted iff no rule fired.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub accepted: bool,
    pub reasons: Vec<String>,
    pub measurements: BTreeMap<String, f64>,
}

/// Evaluate every configured rule against one document.
///
/// Words are maximal runs of non-whitespace. Exempt categories are accepted
/// unconditionally; their measurements are still recorded.
pub fn evaluate_document(doc: &Document, cfg: &FilterConfig) -> FilterVerdict {
    let mut reasons = Vec::new();
    let mut measurements = BTreeMap::new();

    let words: Vec<&str> = doc.text.split_whitespace().collect();
    let word_count = words.len();
    measurements.insert("word_count".to_string(), word_count as f64);

    if word_count < cfg.min_words {
        reasons.push(RULE_TOO_SHORT.to_string());
    }
    if word_count > cfg.max_words {
        reasons.push(RULE_TOO_LONG.to_string());
    }

    let mean_word_len = if word_count > 0 {
        words.iter().map(|w| w.chars().count()).sum::<usize>() as f64 / word_count as f64
    } else {
        0.0
    };
    measurements.insert(RULE_MEAN_WORD_LENGTH.to_string(), mean_word_len);
    if word_count > 0
        && (mean_word_len < cfg.mean_word_len_range.0 || mean_word_len > cfg.mean_word_len_range.1)
    {
        reasons.push(RULE_MEAN_WORD_LENGTH.to_string());
    }

    let symbol_count = count_symbols(&doc.text);
    let symbol_ratio = if word_count > 0 {
        symbol_count as f64 / word_count as f64
    } else {
        0.0
    };
    measurements.insert(RULE_SYMBOL_TO_WORD_RATIO.to_string(), symbol_ratio);
    if word_count > 0 && symbol_ratio > cfg.max_symbol_to_word_ratio {
        reasons.push(RULE_SYMBOL_TO_WORD_RATIO.to_string());
    }

    let lines: Vec<&str> = doc
        .text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    let line_count = lines.len();

    let bullet_fraction = fraction(&lines, starts_with_bullet);
    measurements.insert(RULE_BULLET_LINE_FRACTION.to_string(), bullet_fraction);
    if line_count > 0 && bullet_fraction > cfg.max_bullet_line_fraction {
        reasons.push(RULE_BULLET_LINE_FRACTION.to_string());
    }

    let ellipsis_fraction = fraction(&lines, |l| l.ends_with("...") || l.ends_with('…'));
    measurements.insert(RULE_ELLIPSIS_END_FRACTION.to_string(), ellipsis_fraction);
    if line_count > 0 && ellipsis_fraction > cfg.max_ellipsis_end_fraction {
        reasons.push(RULE_ELLIPSIS_END_FRACTION.to_string());
    }

    let alpha_fraction = if word_count > 0 {
        words
            .iter()
            .filter(|w| w.chars().any(char::is_alphabetic))
            .count() as f64
            / word_count as f64
    } else {
        0.0
    };
    measurements.insert(RULE_ALPHA_WORD_FRACTION.to_string(), alpha_fraction);
    if word_count > 0 && alpha_fraction < cfg.min_alpha_word_fraction {
        reasons.push(RULE_ALPHA_WORD_FRACTION.to_string());
    }

    match cfg.stopword_lists.get(&doc.lang) {
        Some(stopwords) if !stopwords.is_empty() => {
            let hits = count_stopword_hits(&words, stopwords);
            measurements.insert(RULE_STOPWORD_HITS.to_string(), hits as f64);
            if hits < cfg.min_stopword_hits {
                reasons.push(RULE_STOPWORD_HITS.to_string());
            }
        }
        _ => {
            measurements.insert(MEASURE_STOPWORDS_SKIPPED.to_string(), 1.0);
        }
    }

    let duplicate_fraction = duplicate_line_fraction(&lines);
    measurements.insert(RULE_DUPLICATE_LINE_FRACTION.to_string(), duplicate_fraction);
    if line_count > 0 && duplicate_fraction > cfg.max_duplicate_line_fraction {
        reasons.push(RULE_DUPLICATE_LINE_FRACTION.to_string());
    }

    let exempt = cfg.exempt_categories.contains(&doc.category);
    if exempt {
        reasons.clear();
    }

    FilterVerdict {
        accepted: reasons.is_empty(),
        reasons,
        measurements,
    }
}

fn count_symbols(text: &str) -> usize {
    let chars = text.chars().filter(|&c| c == '#' || c == '…').count();
    // non-overlapping "..." occurrences
    let mut dots = 0;
    let mut rest = text;
    while let Some(pos) = rest.find("...") {
        dots += 1;
        rest = &rest[pos + 3..];
    }
    chars + dots
}

fn starts_with_bullet(line: &str) -> bool {
    matches!(
        line.chars().next(),
        Some('•') | Some('‣') | Some('▪') | Some('·') | Some('-') | Some('*')
    )
}

fn fraction(lines: &[&str], pred: impl Fn(&str) -> bool) -> f64 {
    if lines.is_empty() {
        return 0.0;
    }
    lines.iter().filter(|l| pred(l)).count() as f64 / lines.len() as f64
}

fn count_stopword_hits(words: &[&str], stopwords: &[String]) -> u64 {
    let set: HashSet<&str> = stopwords.iter().map(String::as_str).collect();
    words
        .iter()
        .filter(|w| {
            let trimmed = w.trim_matches(|c: char| !c.is_alphanumeric());
            !trimmed.is_empty() && set.contains(trimmed.to_lowercase().as_str())
        })
        .count() as u64
}

fn duplicate_line_fraction(lines: &[&str]) -> f64 {
    if lines.is_empty() {
        return 0.0;
    }
    let unique: HashSet<&&str> = lines.iter().collect();
    (lines.len() - unique.len()) as f64 / lines.len() as f64
}

/// Partition a document stream into accepted and rejected (with verdicts).
/// Evaluation is per-document and order-independent; output order follows
/// input order.
pub fn filter_stream(
    docs: Vec<Document>,
    cfg: &FilterConfig,
) -> (Vec<Document>, Vec<(Document, FilterVerdict)>) {
    let verdicts: Vec<FilterVerdict> =
        docs.par_iter().map(|d| evaluate_document(d, cfg)).collect();
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for (doc, verdict) in docs.into_iter().zip(verdicts) {
        if verdict.accepted {
            accepted.push(doc);
        } else {
            rejected.push((doc, verdict));
        }
    }
    (accepted, rejected)
}
