//! Gap-tolerant MWE identification over lemma sequences.
//!
//! Every lexicon entry is matched as an in-order subsequence of the
//! sentence that skips at most [`GAP_BUDGET`] tokens in total. Overlapping
//! candidates are then resolved greedily so that the longest MWE claims a
//! contested token.

use std::cmp::Reverse;

use serde::{Deserialize, Serialize};

use crate::lexicon::{CategoryGroup, Lexicon, MweCategory};

/// Maximum number of non-member tokens inside one MWE occurrence.
pub const GAP_BUDGET: usize = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MweMatch {
    pub entry_id: usize,
    pub token_positions: Vec<usize>,
    pub gap_count: usize,
}

impl MweMatch {
    pub fn first(&self) -> usize {
        self.token_positions[0]
    }

    pub fn last(&self) -> usize {
        *self.token_positions.last().expect("match has positions")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenTag {
    pub category: MweCategory,
    pub occurrence_id: Option<usize>,
}

impl TokenTag {
    pub const NONE: TokenTag = TokenTag {
        category: MweCategory::NoMwe,
        occurrence_id: None,
    };
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedSentence {
    pub lemmas: Vec<String>,
    pub tags: Vec<TokenTag>,
    /// Selected, category-active matches in order of first position.
    pub matches: Vec<MweMatch>,
}

impl TaggedSentence {
    pub fn has_mwe(&self) -> bool {
        !self.matches.is_empty()
    }

    pub fn categories(&self) -> Vec<MweCategory> {
        self.tags.iter().map(|t| t.category).collect()
    }
}

fn extend_match(
    lemmas: &[String],
    pattern: &[String],
    gaps_used: usize,
    positions: &mut Vec<usize>,
    out: &mut Vec<(Vec<usize>, usize)>,
) {
    let k = positions.len();
    if k == pattern.len() {
        out.push((positions.clone(), gaps_used));
        return;
    }
    let prev = positions[k - 1];
    let slack = GAP_BUDGET - gaps_used;
    for next in prev + 1..=(prev + 1 + slack).min(lemmas.len().saturating_sub(1)) {
        if lemmas[next] == pattern[k] {
            positions.push(next);
            extend_match(lemmas, pattern, gaps_used + (next - prev - 1), positions, out);
            positions.pop();
        }
    }
}

/// All gap-tolerant occurrences of all entries, possibly overlapping.
///
/// Ordered by first position, then entry id, then gap count, then positions.
pub fn find_candidate_matches<S: AsRef<str>>(lemmas: &[S], lexicon: &Lexicon) -> Vec<MweMatch> {
    let lemmas: Vec<String> = lemmas.iter().map(|l| l.as_ref().to_string()).collect();
    let mut matches = Vec::new();
    let mut found = Vec::new();
    for (start, lemma) in lemmas.iter().enumerate() {
        for &entry_id in lexicon.entries_starting_with(lemma) {
            let pattern = &lexicon.entry(entry_id).lemmas;
            found.clear();
            let mut positions = vec![start];
            extend_match(&lemmas, pattern, 0, &mut positions, &mut found);
            matches.extend(found.drain(..).map(|(token_positions, gap_count)| MweMatch {
                entry_id,
                token_positions,
                gap_count,
            }));
        }
    }
    matches.sort_by(|a, b| {
        (a.first(), a.entry_id, a.gap_count, &a.token_positions).cmp(&(
            b.first(),
            b.entry_id,
            b.gap_count,
            &b.token_positions,
        ))
    });
    matches
}

/// Greedy longest-first selection of token-disjoint matches.
///
/// Priority: more lemmas, fewer gaps, leftmost start, lower entry id, then
/// lexicographically smaller positions.
pub fn resolve_overlaps(candidates: &[MweMatch], lexicon: &Lexicon) -> Vec<MweMatch> {
    let mut order: Vec<&MweMatch> = candidates.iter().collect();
    order.sort_by_key(|m| {
        (
            Reverse(lexicon.entry(m.entry_id).len()),
            m.gap_count,
            m.first(),
            m.entry_id,
            m.token_positions.clone(),
        )
    });
    let n_tokens = candidates.iter().map(|m| m.last() + 1).max().unwrap_or(0);
    let mut claimed = vec![false; n_tokens];
    let mut selected = Vec::new();
    for m in order {
        if m.token_positions.iter().any(|&p| claimed[p]) {
            continue;
        }
        for &p in &m.token_positions {
            claimed[p] = true;
        }
        selected.push(m.clone());
    }
    selected
}

/// Tags a lemma sequence. Overlaps are resolved over all lexicon
/// categories first; matches outside `active` are dropped afterwards.
pub fn tag_sentence<S: AsRef<str>>(
    lemmas: &[S],
    lexicon: &Lexicon,
    active: &CategoryGroup,
) -> TaggedSentence {
    let candidates = find_candidate_matches(lemmas, lexicon);
    let selected = resolve_overlaps(&candidates, lexicon);
    build_tagged(lemmas, lexicon, active, selected)
}

/// Assembles a [`TaggedSentence`] from already-resolved matches.
pub fn build_tagged<S: AsRef<str>>(
    lemmas: &[S],
    lexicon: &Lexicon,
    active: &CategoryGroup,
    selected: Vec<MweMatch>,
) -> TaggedSentence {
    let mut matches: Vec<MweMatch> = selected
        .into_iter()
        .filter(|m| active.contains(lexicon.entry(m.entry_id).category))
        .collect();
    matches.sort_by_key(|m| m.first());
    let mut tags = vec![TokenTag::NONE; lemmas.len()];
    for (occurrence, m) in matches.iter().enumerate() {
        let category = lexicon.entry(m.entry_id).category;
        for &p in &m.token_positions {
            tags[p] = TokenTag {
                category,
                occurrence_id: Some(occurrence),
            };
        }
    }
    TaggedSentence {
        lemmas: lemmas.iter().map(|l| l.as_ref().to_string()).collect(),
        tags,
        matches,
    }
}

/// JSON-lines record written by the `tag` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TagRecord {
    pub id: String,
    pub lemmas: Vec<String>,
    pub tags: Vec<MweCategory>,
    pub matches: Vec<MatchRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub entry: String,
    pub category: MweCategory,
    pub positions: Vec<usize>,
    pub gaps: usize,
}

impl TagRecord {
    pub fn new(id: &str, tagged: &TaggedSentence, lexicon: &Lexicon) -> Self {
        TagRecord {
            id: id.to_string(),
            lemmas: tagged.lemmas.clone(),
            tags: tagged.categories(),
            matches: tagged
                .matches
                .iter()
                .map(|m| {
                    let entry = lexicon.entry(m.entry_id);
                    MatchRecord {
                        entry: entry.text(),
                        category: entry.category,
                        positions: m.token_positions.clone(),
                        gaps: m.gap_count,
                    }
                })
                .collect(),
        }
    }
}
