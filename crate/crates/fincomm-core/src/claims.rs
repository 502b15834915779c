//! Sentence segmentation and claim parsing.
//!
//! Summaries are split into sentences and matched against a small closed set
//! of surface patterns ("X in R as main growth driver.", "X up in all
//! regions.", "Decrease from X in R.", ...). Entities are resolved against a
//! lexicon built from the delta table; surfaces that do not resolve become
//! `Ungrounded` rather than errors; the grounding policy belongs to the
//! validator, not the parser. Sentences matching no pattern land in
//! `unparsed`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::DeltaTable;
use crate::trend_oracle::Direction;

#[derive(Debug, Error)]
pub enum ClaimsError {
    #[error("alias target {target:?} for surface {surface:?} is not a known label")]
    BadAliasTarget { surface: String, target: String },
    #[error("missing column: {0}")]
    MissingColumn(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Entity lexicon derived from the input data plus optional aliases.
///
/// Lookup is case-insensitive; multi-word surfaces resolve as a whole before
/// any splitting, so longer entries always win over their prefixes.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    product_lines: BTreeSet<String>,
    regions: BTreeSet<String>,
    /// lowercased alias surface → canonical label
    aliases: BTreeMap<String, String>,
    /// lowercased word → direction
    direction_words: BTreeMap<String, Direction>,
    /// lowercased canonical → canonical, per label kind
    line_index: BTreeMap<String, String>,
    region_index: BTreeMap<String, String>,
}

const UP_WORDS: [&str; 11] = [
    "up",
    "increase",
    "increases",
    "increased",
    "increasing",
    "growth",
    "growing",
    "rise",
    "rising",
    "gain",
    "gains",
];

const DOWN_WORDS: [&str; 14] = [
    "down",
    "decrease",
    "decreases",
    "decreased",
    "decreasing",
    "decline",
    "declines",
    "declined",
    "declining",
    "drop",
    "drops",
    "dropping",
    "fall",
    "falling",
];

impl Lexicon {
    fn with_defaults(product_lines: BTreeSet<String>, regions: BTreeSet<String>) -> Self {
        let mut direction_words = BTreeMap::new();
        for w in UP_WORDS {
            direction_words.insert(w.to_string(), Direction::Up);
        }
        for w in DOWN_WORDS {
            direction_words.insert(w.to_string(), Direction::Down);
        }
        let line_index = product_lines
            .iter()
            .map(|l| (l.to_lowercase(), l.clone()))
            .collect();
        let region_index = regions
            .iter()
            .map(|r| (r.to_lowercase(), r.clone()))
            .collect();
        Lexicon {
            product_lines,
            regions,
            aliases: BTreeMap::new(),
            direction_words,
            line_index,
            region_index,
        }
    }

    pub fn product_lines(&self) -> &BTreeSet<String> {
        &self.product_lines
    }

    pub fn regions(&self) -> &BTreeSet<String> {
        &self.regions
    }

    pub fn direction_of(&self, word: &str) -> Option<Direction> {
        self.direction_words
            .get(word.to_lowercase().as_str())
            .copied()
    }

    fn resolve_in(&self, surface: &str, index: &BTreeMap<String, String>) -> Option<String> {
        let lower = surface.trim().to_lowercase();
        if let Some(c) = index.get(&lower) {
            return Some(c.clone());
        }
        if let Some(c) = self.aliases.get(&lower) {
            if index.contains_key(&c.to_lowercase()) {
                return Some(c.clone());
            }
        }
        // Tolerate a leading article: "the Americas" → "Americas".
        if let Some(stripped) = lower.strip_prefix("the ") {
            if let Some(c) = index.get(stripped) {
                return Some(c.clone());
            }
            if let Some(c) = self.aliases.get(stripped) {
                if index.contains_key(&c.to_lowercase()) {
                    return Some(c.clone());
                }
            }
        }
        None
    }

    /// Resolve a surface as a product line, via canonical labels or aliases.
    pub fn resolve_product_line(&self, surface: &str) -> Option<String> {
        self.resolve_in(surface, &self.line_index)
    }

    /// Resolve a surface as a region, via canonical labels or aliases.
    pub fn resolve_region(&self, surface: &str) -> Option<String> {
        self.resolve_in(surface, &self.region_index)
    }

    /// Every known surface (labels and aliases), longest first. Used for
    /// masking entity mentions before numeral checks.
    pub fn entity_surfaces(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .product_lines
            .iter()
            .chain(self.regions.iter())
            .cloned()
            .chain(self.aliases.keys().cloned())
            .collect();
        out.sort_by(|a, b| b.chars().count().cmp(&a.chars().count()).then(a.cmp(b)));
        out.dedup();
        out
    }

    /// Surfaces containing a period, which must never trigger a sentence
    /// split (e.g. "U.S.").
    pub fn protected_tokens(&self) -> Vec<String> {
        self.entity_surfaces()
            .into_iter()
            .filter(|s| s.contains('.'))
            .collect()
    }
}

/// Build a lexicon from a table's labels, with optional aliases loaded from
/// a `surface,canonical` CSV file.
pub fn build_lexicon(table: &DeltaTable, alias_file: Option<&Path>) -> Result<Lexicon, ClaimsError> {
    let mut lexicon = Lexicon::with_defaults(table.product_lines(), table.regions());
    if let Some(path) = alias_file {
        let file = std::fs::File::open(path)?;
        add_aliases_from(&mut lexicon, file)?;
    }
    Ok(lexicon)
}

/// Merge aliases from a CSV reader into an existing lexicon.
pub fn add_aliases_from<R: Read>(lexicon: &mut Lexicon, reader: R) -> Result<(), ClaimsError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let surface_idx = headers
        .iter()
        .position(|h| h.trim() == "surface")
        .ok_or_else(|| ClaimsError::MissingColumn("surface".into()))?;
    let canonical_idx = headers
        .iter()
        .position(|h| h.trim() == "canonical")
        .ok_or_else(|| ClaimsError::MissingColumn("canonical".into()))?;
    for record in rdr.records() {
        let record = record?;
        let surface = record.get(surface_idx).unwrap_or("").trim().to_string();
        let target = record.get(canonical_idx).unwrap_or("").trim().to_string();
        if surface.is_empty() && target.is_empty() {
            continue;
        }
        let canonical = lexicon
            .line_index
            .get(&target.to_lowercase())
            .or_else(|| lexicon.region_index.get(&target.to_lowercase()))
            .cloned()
            .ok_or_else(|| ClaimsError::BadAliasTarget {
                surface: surface.clone(),
                target: target.clone(),
            })?;
        lexicon.aliases.insert(surface.to_lowercase(), canonical);
    }
    Ok(())
}

/// A resolved or unresolved entity mention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "label")]
pub enum EntityRef {
    Grounded(String),
    Ungrounded(String),
}

impl EntityRef {
    pub fn is_grounded(&self) -> bool {
        matches!(self, EntityRef::Grounded(_))
    }

    pub fn label(&self) -> &str {
        match self {
            EntityRef::Grounded(s) | EntityRef::Ungrounded(s) => s,
        }
    }
}

/// The regional scope a claim asserts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scope", content = "region")]
pub enum RegionScope {
    Specific(EntityRef),
    AllRegions,
    Unspecified,
}

/// Whether the claim carries headline salience.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Salience {
    MainDriver,
    MainDetractor,
    Plain,
}

/// One parsed assertion from a summary sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub subject: EntityRef,
    pub region_scope: RegionScope,
    pub direction: Direction,
    pub salience: Salience,
    /// 1-based index of the sentence this claim came from.
    pub sentence_index: usize,
    /// Retained "mainly/primarily in R" qualifier text, if any.
    pub qualifier: Option<String>,
}

/// A sentence no pattern matched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnparsedSentence {
    pub sentence_index: usize,
    pub text: String,
}

/// Output of [`parse_summary`]: every input sentence lands in exactly one of
/// the two lists.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParseResult {
    pub claims: Vec<Claim>,
    pub unparsed: Vec<UnparsedSentence>,
}

/// Split text into sentences at '.', '!' or '?' followed by whitespace or
/// end of text. Occurrences inside protected lexicon tokens (entries
/// containing periods) never split. Results are trimmed; empties dropped.
pub fn segment_sentences(text: &str, lexicon: Option<&Lexicon>) -> Vec<String> {
    let protected: Vec<String> = lexicon.map(|l| l.protected_tokens()).unwrap_or_default();
    // ASCII lowercasing preserves byte offsets into the original text.
    let lower = text.to_ascii_lowercase();
    let mut shielded: Vec<(usize, usize)> = Vec::new();
    for token in &protected {
        let needle = token.to_ascii_lowercase();
        if needle.is_empty() {
            continue;
        }
        let mut from = 0;
        while let Some(pos) = lower[from..].find(&needle) {
            let start = from + pos;
            shielded.push((start, start + needle.len()));
            from = start + needle.len();
        }
    }
    let in_shield = |i: usize| shielded.iter().any(|(s, e)| i >= *s && i < *e);

    let mut sentences = Vec::new();
    let mut start = 0;
    let bytes_len = text.len();
    let mut iter = text.char_indices().peekable();
    while let Some((i, ch)) = iter.next() {
        if matches!(ch, '.' | '!' | '?') && !in_shield(i) {
            let at_boundary = match iter.peek() {
                None => true,
                Some((_, next)) => next.is_whitespace(),
            };
            if at_boundary {
                let end = i + ch.len_utf8();
                let piece = text[start..end].trim();
                if !piece.is_empty() {
                    sentences.push(piece.to_string());
                }
                start = end;
            }
        }
    }
    if start < bytes_len {
        let piece = text[start..].trim();
        if !piece.is_empty() {
            sentences.push(piece.to_string());
        }
    }
    sentences
}

/// Parse a summary into claims and unparsed sentences.
pub fn parse_summary(text: &str, lexicon: &Lexicon) -> ParseResult {
    let mut result = ParseResult::default();
    for (i, sentence) in segment_sentences(text, Some(lexicon)).into_iter().enumerate() {
        let index = i + 1;
        match parse_sentence(&sentence, lexicon, index) {
            Some(claims) if !claims.is_empty() => result.claims.extend(claims),
            _ => result.unparsed.push(UnparsedSentence {
                sentence_index: index,
                text: sentence,
            }),
        }
    }
    result
}

fn strip_terminal(sentence: &str) -> &str {
    sentence.trim().trim_end_matches(['.', '!', '?']).trim_end()
}

/// Words that head quantified or deictic noun phrases rather than entity
/// mentions ("All product lines up." is outside the claim grammar).
const SUBJECT_STOP_WORDS: [&str; 15] = [
    "all", "both", "most", "some", "several", "many", "no", "these", "those", "this", "that",
    "overall", "total", "major", "minor",
];

fn stop_word_headed(surface: &str) -> bool {
    surface
        .split_whitespace()
        .next()
        .map(|w| SUBJECT_STOP_WORDS.contains(&w.to_lowercase().as_str()))
        .unwrap_or(false)
}

/// Resolve a subject surface into one or more entity refs. The full surface
/// is tried first (longest match); only if it fails do we split conjunctive
/// " and " parts and resolve each independently. Unresolved surfaces headed
/// by a quantifier yield nothing, routing the sentence to `unparsed`.
fn resolve_subjects(surface: &str, lexicon: &Lexicon) -> Vec<EntityRef> {
    let surface = surface.trim();
    if surface.is_empty() {
        return Vec::new();
    }
    if let Some(c) = lexicon.resolve_product_line(surface) {
        return vec![EntityRef::Grounded(c)];
    }
    if stop_word_headed(surface) {
        return Vec::new();
    }
    let lower = surface.to_ascii_lowercase();
    if lower.contains(" and ") {
        let mut parts = Vec::new();
        let mut rest = surface;
        loop {
            let rest_lower = rest.to_ascii_lowercase();
            match rest_lower.find(" and ") {
                Some(pos) => {
                    parts.push(rest[..pos].trim());
                    rest = rest[pos + 5..].trim();
                }
                None => {
                    parts.push(rest.trim());
                    break;
                }
            }
        }
        if parts.iter().all(|p| !p.is_empty() && !stop_word_headed(p)) {
            return parts
                .into_iter()
                .map(|p| match lexicon.resolve_product_line(p) {
                    Some(c) => EntityRef::Grounded(c),
                    None => EntityRef::Ungrounded(p.to_string()),
                })
                .collect();
        }
        return Vec::new();
    }
    vec![EntityRef::Ungrounded(surface.to_string())]
}

fn resolve_region_ref(surface: &str, lexicon: &Lexicon) -> EntityRef {
    match lexicon.resolve_region(surface) {
        Some(c) => EntityRef::Grounded(c),
        None => EntityRef::Ungrounded(surface.trim().to_string()),
    }
}

/// A region slot: either the literal "all regions" or a concrete surface.
/// Surfaces containing commas or a nested " in " are clause structure, not
/// regions.
fn parse_region_scope(surface: &str, lexicon: &Lexicon) -> Option<RegionScope> {
    let surface = surface.trim();
    if surface.is_empty() || surface.contains(',') || surface.to_lowercase().contains(" in ") {
        return None;
    }
    if surface.eq_ignore_ascii_case("all regions") {
        return Some(RegionScope::AllRegions);
    }
    Some(RegionScope::Specific(resolve_region_ref(surface, lexicon)))
}

/// Case-insensitive search returning the byte offset of `needle` in `hay`.
fn find_ci(hay: &str, needle: &str) -> Option<usize> {
    hay.to_ascii_lowercase().find(&needle.to_ascii_lowercase())
}

/// "<PL> in <R> as main growth driver[s]" / "<PL> in <R> as main
/// detractor[s]", with an optional trailing clause. A ", partly offset by
/// <PL> in <R>" clause yields additional opposite-direction claims; any
/// other trailing clause is ignored and only the main claim is kept.
fn try_main_claim(sentence: &str, lexicon: &Lexicon, index: usize) -> Option<Vec<Claim>> {
    const DRIVER: &str = " as main growth driver";
    const DETRACTOR: &str = " as main detractor";
    let (pos, phrase, salience, direction) = match (find_ci(sentence, DRIVER), find_ci(sentence, DETRACTOR)) {
        (Some(p), None) => (p, DRIVER, Salience::MainDriver, Direction::Up),
        (None, Some(p)) => (p, DETRACTOR, Salience::MainDetractor, Direction::Down),
        (Some(p), Some(q)) if p < q => (p, DRIVER, Salience::MainDriver, Direction::Up),
        (Some(_), Some(q)) => (q, DETRACTOR, Salience::MainDetractor, Direction::Down),
        (None, None) => return None,
    };

    let head = &sentence[..pos];
    let mut tail = &sentence[pos + phrase.len()..];
    if let Some(rest) = tail.strip_prefix('s') {
        tail = rest;
    }

    let in_pos = find_last_in(head)?;
    let subject_surface = &head[..in_pos];
    let region_surface = &head[in_pos + 4..];
    let scope = parse_region_scope(region_surface, lexicon)?;
    let subjects = resolve_subjects(subject_surface, lexicon);
    if subjects.is_empty() {
        return None;
    }

    let mut claims: Vec<Claim> = subjects
        .into_iter()
        .map(|subject| Claim {
            subject,
            region_scope: scope.clone(),
            direction,
            salience,
            sentence_index: index,
            qualifier: None,
        })
        .collect();

    let tail = tail.trim();
    if !tail.is_empty() {
        let clause = tail.strip_prefix(',').map(str::trim).unwrap_or(tail);
        if let Some(rest) = strip_prefix_ci(clause, "partly offset by ") {
            let in_pos = find_last_in(rest)?;
            let offset_scope = parse_region_scope(&rest[in_pos + 4..], lexicon)?;
            let offset_direction = match direction {
                Direction::Up => Direction::Down,
                Direction::Down => Direction::Up,
            };
            for subject in resolve_subjects(&rest[..in_pos], lexicon) {
                claims.push(Claim {
                    subject,
                    region_scope: offset_scope.clone(),
                    direction: offset_direction,
                    salience: Salience::Plain,
                    sentence_index: index,
                    qualifier: None,
                });
            }
        }
        // Other subordinate clauses are dropped without interpretation.
    }
    Some(claims)
}

fn strip_prefix_ci<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    if s.len() >= prefix.len() && s[..prefix.len()].eq_ignore_ascii_case(prefix) {
        Some(&s[prefix.len()..])
    } else {
        None
    }
}

/// Byte offset of the last " in " in `s` (case-insensitive).
fn find_last_in(s: &str) -> Option<usize> {
    s.to_ascii_lowercase().rfind(" in ")
}

/// "Increase/Decrease/Decline... from <PL> in <R|all regions>".
fn try_from_claim(sentence: &str, lexicon: &Lexicon, index: usize) -> Option<Vec<Claim>> {
    let mut words = sentence.splitn(2, char::is_whitespace);
    let first = words.next()?;
    let rest = words.next()?.trim_start();
    let direction = lexicon.direction_of(first)?;
    let rest = strip_prefix_ci(rest, "from ")?;
    let in_pos = find_last_in(rest)?;
    let scope = parse_region_scope(&rest[in_pos + 4..], lexicon)?;
    let subjects = resolve_subjects(&rest[..in_pos], lexicon);
    if subjects.is_empty() {
        return None;
    }
    Some(
        subjects
            .into_iter()
            .map(|subject| Claim {
                subject,
                region_scope: scope.clone(),
                direction,
                salience: Salience::Plain,
                sentence_index: index,
                qualifier: None,
            })
            .collect(),
    )
}

const QUALIFIER_WORDS: [&str; 3] = ["mainly", "primarily", "mostly"];

/// Remainder after the direction word: "", "in all regions", "in <R>",
/// ", mainly [in] <R>", or "in all regions, mainly [in] <R>".
fn parse_tail(tail: &str, lexicon: &Lexicon) -> Option<(RegionScope, Option<String>)> {
    let tail = tail.trim();
    if tail.is_empty() {
        return Some((RegionScope::Unspecified, None));
    }
    if let Some(clause) = tail.strip_prefix(',') {
        let qualifier = parse_qualifier(clause.trim(), lexicon)?;
        let scope = match &qualifier.1 {
            EntityRef::Grounded(c) => RegionScope::Specific(EntityRef::Grounded(c.clone())),
            EntityRef::Ungrounded(s) => RegionScope::Specific(EntityRef::Ungrounded(s.clone())),
        };
        return Some((scope, Some(qualifier.0)));
    }
    let rest = strip_prefix_ci(tail, "in ")?;
    if let Some(q) = strip_prefix_ci(rest, "all regions") {
        let q = q.trim();
        if q.is_empty() {
            return Some((RegionScope::AllRegions, None));
        }
        let clause = q.strip_prefix(',')?.trim();
        let qualifier = parse_qualifier(clause, lexicon)?;
        return Some((RegionScope::AllRegions, Some(qualifier.0)));
    }
    let scope = parse_region_scope(rest, lexicon)?;
    Some((scope, None))
}

/// "mainly [in] <R>" → (display text, resolved region).
fn parse_qualifier(clause: &str, lexicon: &Lexicon) -> Option<(String, EntityRef)> {
    let mut words = clause.splitn(2, char::is_whitespace);
    let word = words.next()?.to_lowercase();
    if !QUALIFIER_WORDS.contains(&word.as_str()) {
        return None;
    }
    let rest = words.next()?.trim();
    let region_surface = strip_prefix_ci(rest, "in ").unwrap_or(rest).trim();
    if region_surface.is_empty() || region_surface.contains(',') {
        return None;
    }
    let region = resolve_region_ref(region_surface, lexicon);
    Some((format!("{word} in {}", region.label()), region))
}

/// "<PL> up/down/increasing/... [in <R> | in all regions][, mainly in <R>]".
/// The subject is every token before the first direction word that yields a
/// complete parse.
fn try_direction_claim(sentence: &str, lexicon: &Lexicon, index: usize) -> Option<Vec<Claim>> {
    // Candidate split points: each standalone direction word with a
    // non-empty prefix. The first candidate that parses wins.
    let lower = sentence.to_ascii_lowercase();
    let mut search_from = 0;
    while search_from < lower.len() {
        let slice = &lower[search_from..];
        let Some(rel) = slice.find(|c: char| !c.is_whitespace()) else {
            break;
        };
        let word_start = search_from + rel;
        let word_end = lower[word_start..]
            .find(char::is_whitespace)
            .map(|p| word_start + p)
            .unwrap_or(lower.len());
        let word = lower[word_start..word_end].trim_end_matches(',');
        if word_start > 0 && lexicon.direction_words.contains_key(word) {
            let subject_surface = sentence[..word_start].trim();
            if !subject_surface.is_empty() && !subject_surface.contains(',') {
                let direction = lexicon.direction_words[word];
                // A trailing comma on the direction word starts the
                // qualifier clause.
                let had_comma = lower[word_start..word_end].ends_with(',');
                let tail_start = if had_comma { word_end - 1 } else { word_end };
                if let Some((scope, qualifier)) = parse_tail(&sentence[tail_start..], lexicon) {
                    let subjects = resolve_subjects(subject_surface, lexicon);
                    if !subjects.is_empty() {
                        return Some(
                            subjects
                                .into_iter()
                                .map(|subject| Claim {
                                    subject,
                                    region_scope: scope.clone(),
                                    direction,
                                    salience: Salience::Plain,
                                    sentence_index: index,
                                    qualifier: qualifier.clone(),
                                })
                                .collect(),
                        );
                    }
                }
            }
        }
        search_from = word_end;
    }
    None
}

fn parse_sentence(sentence: &str, lexicon: &Lexicon, index: usize) -> Option<Vec<Claim>> {
    let body = strip_terminal(sentence);
    if body.is_empty() {
        return None;
    }
    try_main_claim(body, lexicon, index)
        .or_else(|| try_from_claim(body, lexicon, index))
        .or_else(|| try_direction_claim(body, lexicon, index))
}
