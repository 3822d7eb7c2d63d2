//! MWE lexicon: category taxonomy, TSV loading, and category selection.
//!
//! The lexicon file holds one entry per line:
//!
//! ```text
//! get out<TAB>FullVerbParticle
//! thank you<TAB>Discourse
//! ```
//!
//! Lemmas are space separated and stored lowercase. Blank lines and lines
//! starting with `#` are ignored.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lexical MWE categories plus the `NoMwe` label for tokens outside any MWE.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MweCategory {
    Adjective,
    Adverb,
    Discourse,
    Nominal,
    AdpositionPhrase,
    InherentlyAdpositionalVerb,
    FullLightVerbConstruction,
    VerbalIdiom,
    FullVerbParticle,
    SemiVerbParticle,
    Auxiliary,
    CoordinatingConjunction,
    Determiner,
    InfinitiveMarker,
    Adposition,
    NonPossessivePronoun,
    SubordinatingConjunction,
    CauseLightVerbConstruction,
    Symbol,
    Interjection,
    NoMwe,
}

impl MweCategory {
    /// Every category a lexicon entry can carry (excludes `NoMwe`).
    pub const LEXICAL: [MweCategory; 20] = [
        MweCategory::Adjective,
        MweCategory::Adverb,
        MweCategory::Discourse,
        MweCategory::Nominal,
        MweCategory::AdpositionPhrase,
        MweCategory::InherentlyAdpositionalVerb,
        MweCategory::FullLightVerbConstruction,
        MweCategory::VerbalIdiom,
        MweCategory::FullVerbParticle,
        MweCategory::SemiVerbParticle,
        MweCategory::Auxiliary,
        MweCategory::CoordinatingConjunction,
        MweCategory::Determiner,
        MweCategory::InfinitiveMarker,
        MweCategory::Adposition,
        MweCategory::NonPossessivePronoun,
        MweCategory::SubordinatingConjunction,
        MweCategory::CauseLightVerbConstruction,
        MweCategory::Symbol,
        MweCategory::Interjection,
    ];

    pub const ALL: [MweCategory; 21] = {
        let mut all = [MweCategory::NoMwe; 21];
        let mut i = 0;
        while i < 20 {
            all[i] = Self::LEXICAL[i];
            i += 1;
        }
        all
    };

    pub fn name(self) -> &'static str {
        match self {
            MweCategory::Adjective => "Adjective",
            MweCategory::Adverb => "Adverb",
            MweCategory::Discourse => "Discourse",
            MweCategory::Nominal => "Nominal",
            MweCategory::AdpositionPhrase => "AdpositionPhrase",
            MweCategory::InherentlyAdpositionalVerb => "InherentlyAdpositionalVerb",
            MweCategory::FullLightVerbConstruction => "FullLightVerbConstruction",
            MweCategory::VerbalIdiom => "VerbalIdiom",
            MweCategory::FullVerbParticle => "FullVerbParticle",
            MweCategory::SemiVerbParticle => "SemiVerbParticle",
            MweCategory::Auxiliary => "Auxiliary",
            MweCategory::CoordinatingConjunction => "CoordinatingConjunction",
            MweCategory::Determiner => "Determiner",
            MweCategory::InfinitiveMarker => "InfinitiveMarker",
            MweCategory::Adposition => "Adposition",
            MweCategory::NonPossessivePronoun => "NonPossessivePronoun",
            MweCategory::SubordinatingConjunction => "SubordinatingConjunction",
            MweCategory::CauseLightVerbConstruction => "CauseLightVerbConstruction",
            MweCategory::Symbol => "Symbol",
            MweCategory::Interjection => "Interjection",
            MweCategory::NoMwe => "NoMwe",
        }
    }
}

impl fmt::Display for MweCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MweCategory {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        MweCategory::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexiconEntry {
    pub lemmas: Vec<String>,
    pub category: MweCategory,
}

impl LexiconEntry {
    pub fn new<S: AsRef<str>>(lemmas: &[S], category: MweCategory) -> Result<Self> {
        let lemmas: Vec<String> = lemmas.iter().map(|l| l.as_ref().to_lowercase()).collect();
        if lemmas.len() < 2 {
            return Err(Error::invalid("entry has fewer than 2 lemmas"));
        }
        if lemmas.iter().any(|l| l.is_empty() || l.chars().any(char::is_whitespace)) {
            return Err(Error::invalid("entry has an empty or malformed lemma"));
        }
        if category == MweCategory::NoMwe {
            return Err(Error::invalid("NoMwe cannot be a lexicon category"));
        }
        Ok(LexiconEntry { lemmas, category })
    }

    pub fn len(&self) -> usize {
        self.lemmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lemmas.is_empty()
    }

    pub fn text(&self) -> String {
        self.lemmas.join(" ")
    }
}

/// An immutable, indexed MWE lexicon.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: Vec<LexiconEntry>,
    first_lemma_index: HashMap<String, Vec<usize>>,
}

impl Lexicon {
    /// Builds a lexicon from entries, rejecting duplicate (lemmas, category) pairs.
    pub fn from_entries(entries: Vec<LexiconEntry>) -> Result<Self> {
        let mut lexicon = Lexicon::default();
        for (i, entry) in entries.into_iter().enumerate() {
            lexicon
                .push(entry)
                .map_err(|e| Error::invalid(format!("entry {i}: {e}")))?;
        }
        Ok(lexicon)
    }

    fn push(&mut self, entry: LexiconEntry) -> std::result::Result<(), String> {
        let ids = self.first_lemma_index.entry(entry.lemmas[0].clone()).or_default();
        if ids.iter().any(|&id| self.entries[id] == entry) {
            return Err(format!(
                "duplicate entry \"{}\" ({})",
                entry.text(),
                entry.category
            ));
        }
        ids.push(self.entries.len());
        self.entries.push(entry);
        Ok(())
    }

    /// Reads the TSV lexicon format. Entry order is preserved.
    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut lexicon = Lexicon::default();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Lexicon { line: line_no, msg };
            let (lemma_part, category_part) = trimmed
                .split_once('\t')
                .ok_or_else(|| err("expected `<lemmas>\\t<category>`".into()))?;
            let category: MweCategory = category_part.trim().parse().map_err(err)?;
            if category == MweCategory::NoMwe {
                return Err(err("NoMwe cannot be a lexicon category".into()));
            }
            let lemmas: Vec<&str> = lemma_part.split_whitespace().collect();
            if lemmas.len() < 2 {
                return Err(err("entry has fewer than 2 lemmas".into()));
            }
            let entry = LexiconEntry::new(&lemmas, category).map_err(|e| err(e.to_string()))?;
            lexicon.push(entry).map_err(err)?;
        }
        Ok(lexicon)
    }

    pub fn load_str(text: &str) -> Result<Self> {
        Self::load(text.as_bytes())
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for entry in &self.entries {
            writeln!(out, "{}\t{}", entry.text(), entry.category)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn entry(&self, id: usize) -> &LexiconEntry {
        &self.entries[id]
    }

    /// Entry ids whose first lemma is `lemma`, in lexicon order.
    pub fn entries_starting_with(&self, lemma: &str) -> &[usize] {
        self.first_lemma_index
            .get(lemma)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn first_lemmas(&self) -> impl Iterator<Item = &str> {
        self.first_lemma_index.keys().map(String::as_str)
    }

    pub fn category_counts(&self) -> BTreeMap<MweCategory, usize> {
        let mut counts = BTreeMap::new();
        for entry in &self.entries {
            *counts.entry(entry.category).or_insert(0) += 1;
        }
        counts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupSelector {
    #[serde(rename = "mweall")]
    MweAll,
    #[serde(rename = "mwe5")]
    Mwe5,
    #[serde(rename = "vmwe5")]
    Vmwe5,
    #[serde(rename = "mwe5_vmwe5")]
    Mwe5Vmwe5,
}

impl GroupSelector {
    pub fn name(self) -> &'static str {
        match self {
            GroupSelector::MweAll => "mweall",
            GroupSelector::Mwe5 => "mwe5",
            GroupSelector::Vmwe5 => "vmwe5",
            GroupSelector::Mwe5Vmwe5 => "mwe5_vmwe5",
        }
    }
}

impl FromStr for GroupSelector {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "mweall" | "all" => Ok(GroupSelector::MweAll),
            "mwe5" => Ok(GroupSelector::Mwe5),
            "vmwe5" => Ok(GroupSelector::Vmwe5),
            "mwe5_vmwe5" | "vmwe5_mwe5" => Ok(GroupSelector::Mwe5Vmwe5),
            _ => Err(format!(
                "unknown category group {s:?} (expected mweall, mwe5, vmwe5 or mwe5_vmwe5)"
            )),
        }
    }
}

impl fmt::Display for GroupSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const MWE5: [MweCategory; 5] = [
    MweCategory::Adjective,
    MweCategory::Adverb,
    MweCategory::Discourse,
    MweCategory::Nominal,
    MweCategory::AdpositionPhrase,
];

pub const VMWE5: [MweCategory; 5] = [
    MweCategory::InherentlyAdpositionalVerb,
    MweCategory::FullLightVerbConstruction,
    MweCategory::VerbalIdiom,
    MweCategory::FullVerbParticle,
    MweCategory::SemiVerbParticle,
];

/// A fixed set of active categories.
///
/// `columns()` is the one-hot column order used by featurization: active
/// categories sorted by name, with `NoMwe` appended last.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CategoryGroup {
    pub selector: GroupSelector,
    categories: BTreeSet<MweCategory>,
}

impl CategoryGroup {
    pub fn categories(&self) -> &BTreeSet<MweCategory> {
        &self.categories
    }

    pub fn contains(&self, category: MweCategory) -> bool {
        self.categories.contains(&category)
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn columns(&self) -> Vec<MweCategory> {
        let mut cols: Vec<MweCategory> = self.categories.iter().copied().collect();
        cols.sort_by_key(|c| c.name());
        cols.push(MweCategory::NoMwe);
        cols
    }

    /// Column of `category` in the one-hot layout; inactive categories map to `NoMwe`.
    pub fn column_of(&self, category: MweCategory) -> usize {
        let cols = self.columns();
        cols.iter()
            .position(|&c| c == category)
            .unwrap_or(cols.len() - 1)
    }

    /// Custom group, used for tests and for statistics-driven selections.
    pub fn custom(selector: GroupSelector, categories: impl IntoIterator<Item = MweCategory>) -> Self {
        CategoryGroup {
            selector,
            categories: categories
                .into_iter()
                .filter(|&c| c != MweCategory::NoMwe)
                .collect(),
        }
    }
}

pub fn category_group(selector: GroupSelector) -> CategoryGroup {
    let categories: BTreeSet<MweCategory> = match selector {
        GroupSelector::MweAll => MweCategory::LEXICAL
            .iter()
            .copied()
            .filter(|c| !matches!(c, MweCategory::Symbol | MweCategory::Interjection))
            .collect(),
        GroupSelector::Mwe5 => MWE5.into_iter().collect(),
        GroupSelector::Vmwe5 => VMWE5.into_iter().collect(),
        GroupSelector::Mwe5Vmwe5 => MWE5.into_iter().chain(VMWE5).collect(),
    };
    CategoryGroup {
        selector,
        categories,
    }
}

/// Occurrence counts of one category split by the classes its MWEs occur in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub hateful_only: u64,
    pub nonhateful_only: u64,
    pub both: u64,
}

impl CategoryCounts {
    pub const fn new(hateful_only: u64, nonhateful_only: u64, both: u64) -> Self {
        CategoryCounts {
            hateful_only,
            nonhateful_only,
            both,
        }
    }

    pub fn total(&self) -> u64 {
        self.hateful_only + self.nonhateful_only + self.both
    }
}

/// Keeps categories with more than `min_occurrences` occurrences whose
/// share of "both classes" occurrences is at most `max_both_share`.
pub fn filter_categories_by_stats(
    stats: &BTreeMap<MweCategory, CategoryCounts>,
    min_occurrences: u64,
    max_both_share: f64,
) -> BTreeSet<MweCategory> {
    stats
        .iter()
        .filter(|(&category, counts)| {
            let total = counts.total();
            category != MweCategory::NoMwe
                && total > 0
                && total > min_occurrences
                && (counts.both as f64 / total as f64) <= max_both_share
        })
        .map(|(&category, _)| category)
        .collect()
}
