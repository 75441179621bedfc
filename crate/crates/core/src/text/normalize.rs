//! Transcript normalisation: lowercase, strip punctuation, drop stopwords,
//! then lemmatise with a suffix-rule table.
//!
//! Rule file format (UTF-8, one entry per line, `#` starts a comment):
//!
//! * rules: `suffix<TAB>replacement`; the longest matching suffix wins and the
//!   remaining stem must keep at least [`MIN_STEM_CHARS`] characters. A rule
//!   whose replacement equals its suffix protects that ending. Any other
//!   replacement must be strictly shorter than its suffix.
//! * exceptions: `word<TAB>lemma`, looked up before the rules.
//!
//! A token is rewritten until it no longer changes, so lemmatising a lemma
//! returns it unchanged.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil;

pub const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords.txt");
pub const DEFAULT_LEMMA_RULES: &str = include_str!("../../data/lemma_rules.tsv");
pub const DEFAULT_LEMMA_EXCEPTIONS: &str = include_str!("../../data/lemma_exceptions.tsv");

pub const MIN_STEM_CHARS: usize = 2;
const MAX_REWRITES: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffixRule {
    pub suffix: String,
    pub replacement: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TextNormConfig {
    pub stopwords: BTreeSet<String>,
    /// Sorted longest suffix first.
    rules: Vec<SuffixRule>,
    exceptions: BTreeMap<String, String>,
}

fn entries(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn parse_pairs(text: &str, what: &str) -> Result<Vec<(String, String)>> {
    entries(text)
        .map(|(n, line)| {
            let mut parts = line.splitn(2, '\t');
            let key = parts.next().unwrap_or_default().trim();
            let val = parts
                .next()
                .ok_or_else(|| Error::format(format!("{what} line {n}: missing tab separator")))?
                .trim();
            if key.is_empty() {
                return Err(Error::format(format!("{what} line {n}: empty key")));
            }
            Ok((key.to_lowercase(), val.to_lowercase()))
        })
        .collect()
}

impl TextNormConfig {
    pub fn new(
        stopwords: BTreeSet<String>,
        rules: Vec<SuffixRule>,
        exceptions: BTreeMap<String, String>,
    ) -> Result<Self> {
        for r in &rules {
            let (s, rep) = (r.suffix.chars().count(), r.replacement.chars().count());
            if r.suffix != r.replacement && rep >= s {
                return Err(Error::format(format!(
                    "lemma rule {:?} -> {:?} does not shorten the token",
                    r.suffix, r.replacement
                )));
            }
        }
        let mut rules = rules;
        rules.sort_by(|a, b| {
            b.suffix
                .chars()
                .count()
                .cmp(&a.suffix.chars().count())
                .then_with(|| a.suffix.cmp(&b.suffix))
        });
        rules.dedup_by(|a, b| a.suffix == b.suffix);
        let cfg = Self {
            stopwords,
            rules,
            exceptions,
        };
        for lemma in cfg.exceptions.values() {
            let once = cfg.lemmatize(lemma);
            if cfg.lemmatize(&once) != once {
                return Err(Error::format(format!(
                    "lemma exceptions do not converge for {lemma:?}"
                )));
            }
        }
        Ok(cfg)
    }

    pub fn parse(stopwords: &str, rules: &str, exceptions: &str) -> Result<Self> {
        let stop = entries(stopwords)
            .map(|(_, l)| l.trim().to_lowercase())
            .collect();
        let rules = parse_pairs(rules, "lemma rule")?
            .into_iter()
            .map(|(suffix, replacement)| SuffixRule {
                suffix,
                replacement,
            })
            .collect();
        let exc = parse_pairs(exceptions, "lemma exception")?.into_iter().collect();
        Self::new(stop, rules, exc)
    }

    /// Load from files; `None` picks the bundled default for that table.
    pub fn load(
        stopwords: Option<&Path>,
        rules: Option<&Path>,
        exceptions: Option<&Path>,
    ) -> Result<Self> {
        let read = |p: Option<&Path>, default: &str| -> Result<String> {
            p.map_or_else(|| Ok(default.to_string()), fsutil::read_string)
        };
        Self::parse(
            &read(stopwords, DEFAULT_STOPWORDS)?,
            &read(rules, DEFAULT_LEMMA_RULES)?,
            &read(exceptions, DEFAULT_LEMMA_EXCEPTIONS)?,
        )
    }

    pub fn rules(&self) -> &[SuffixRule] {
        &self.rules
    }

    fn rewrite_once(&self, token: &str) -> Option<String> {
        if let Some(l) = self.exceptions.get(token) {
            return (l != token).then(|| l.clone());
        }
        let len = token.chars().count();
        for r in &self.rules {
            if token.ends_with(&r.suffix) && len - r.suffix.chars().count() >= MIN_STEM_CHARS {
                if r.suffix == r.replacement {
                    return None;
                }
                let stem = &token[..token.len() - r.suffix.len()];
                return Some(format!("{stem}{}", r.replacement));
            }
        }
        None
    }

    pub fn lemmatize(&self, token: &str) -> String {
        let mut cur = token.to_string();
        for _ in 0..MAX_REWRITES {
            match self.rewrite_once(&cur) {
                Some(next) => cur = next,
                None => break,
            }
        }
        cur
    }
}

impl TextNormConfig {
    pub fn bundled() -> Self {
        Self::parse(DEFAULT_STOPWORDS, DEFAULT_LEMMA_RULES, DEFAULT_LEMMA_EXCEPTIONS)
            .expect("bundled text tables are valid")
    }
}

fn is_apostrophe(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '\u{2018}' | '`')
}

/// Lowercase, strip punctuation, split on whitespace, drop stopwords and
/// lemmatise. Apostrophes are deleted ("don't" -> "dont"); every other
/// non-alphanumeric character acts as a separator.
pub fn normalize_text(raw: &str, cfg: &TextNormConfig) -> Vec<String> {
    let cleaned: String = raw
        .chars()
        .filter(|&c| !is_apostrophe(c))
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    cleaned
        .split_whitespace()
        .filter(|t| !cfg.stopwords.contains(*t))
        .map(|t| cfg.lemmatize(t))
        .filter(|t| !cfg.stopwords.contains(t))
        .collect()
}
