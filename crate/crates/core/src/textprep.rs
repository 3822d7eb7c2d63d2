//! Tweet cleaning, tokenization and lemmatization.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class vocabulary of a corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelScheme {
    /// `nonhateful` = 0, `hateful` = 1.
    Hateval,
    /// `normal` = 0, `abusive` = 1, `hateful` = 2; `spam` rows are dropped.
    Founta,
}

impl LabelScheme {
    pub fn n_classes(self) -> usize {
        match self {
            LabelScheme::Hateval => 2,
            LabelScheme::Founta => 3,
        }
    }

    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            LabelScheme::Hateval => &["nonhateful", "hateful"],
            LabelScheme::Founta => &["normal", "abusive", "hateful"],
        }
    }

    /// Class assigned to tweets that are empty after cleaning.
    pub fn non_hateful(self) -> usize {
        0
    }

    /// `Ok(None)` for rows the scheme drops (spam).
    pub fn class_of(self, label: &str) -> std::result::Result<Option<usize>, String> {
        let label = label.trim().to_ascii_lowercase();
        if self == LabelScheme::Founta && label == "spam" {
            return Ok(None);
        }
        if let Some(i) = self.class_names().iter().position(|&n| n == label) {
            return Ok(Some(i));
        }
        match (self, label.as_str()) {
            (LabelScheme::Hateval, "0") => Ok(Some(0)),
            (LabelScheme::Hateval, "1") => Ok(Some(1)),
            _ => Err(format!("unknown label {label:?}")),
        }
    }

    pub fn class_name(self, class: usize) -> &'static str {
        self.class_names().get(class).copied().unwrap_or("?")
    }
}

impl std::str::FromStr for LabelScheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hateval" | "binary" => Ok(LabelScheme::Hateval),
            "founta" => Ok(LabelScheme::Founta),
            _ => Err(format!("unknown label scheme {s:?} (expected hateval or founta)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawTweet {
    pub id: String,
    pub text: String,
    pub label: usize,
}

#[derive(Deserialize)]
struct CorpusRecord {
    id: String,
    text: String,
    label: String,
}

/// Loads a JSON-lines corpus (`{"id", "text", "label"}` per line).
///
/// Returns the retained tweets and the number of rows dropped by the scheme.
pub fn load_corpus<R: BufRead>(reader: R, scheme: LabelScheme) -> Result<(Vec<RawTweet>, usize)> {
    let mut tweets = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut dropped = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Format {
            what: "corpus",
            line: i + 1,
            msg,
        };
        let record: CorpusRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if !seen.insert(record.id.clone()) {
            return Err(err(format!("duplicate tweet id {:?}", record.id)));
        }
        match scheme.class_of(&record.label).map_err(err)? {
            Some(label) => tweets.push(RawTweet {
                id: record.id,
                text: record.text,
                label,
            }),
            None => dropped += 1,
        }
    }
    Ok((tweets, dropped))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanTweet {
    pub id: String,
    pub surface_tokens: Vec<String>,
    pub lemmas: Vec<String>,
    pub label: usize,
}

impl CleanTweet {
    pub fn is_empty(&self) -> bool {
        self.surface_tokens.is_empty()
    }
}

fn is_url(token: &str) -> bool {
    let lower = token.to_lowercase();
    ["http://", "https://", "www."]
        .iter()
        .any(|p| lower.starts_with(p))
}

/// Punctuation split off token edges. `@` and `#` stay attached so that
/// mentions and hashtags are recognizable as whole words.
pub fn is_edge_punct(c: char) -> bool {
    (c.is_ascii_punctuation() && c != '@' && c != '#')
        || matches!(
            c,
            '…' | '“' | '”' | '‘' | '’' | '«' | '»' | '¡' | '¿' | '–' | '—'
        )
}

fn is_marker(token: &str) -> bool {
    let core = token.trim_start_matches(is_edge_punct);
    core.starts_with('@') || core.starts_with('#') || is_url(token) || is_url(core)
}

/// Removes mentions, hashtags and URLs as whole tokens and collapses
/// whitespace. Case is left unchanged.
pub fn clean_text(text: &str) -> String {
    text.split_whitespace()
        .filter(|t| !is_marker(t))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Splits on whitespace and peels leading/trailing punctuation into
/// one-character tokens. Inner punctuation (`don't`) is kept.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let start = word
            .char_indices()
            .find(|&(_, c)| !is_edge_punct(c))
            .map(|(i, _)| i)
            .unwrap_or(word.len());
        let end = word
            .char_indices()
            .rev()
            .find(|&(_, c)| !is_edge_punct(c))
            .map(|(i, c)| i + c.len_utf8())
            .unwrap_or(start)
            .max(start);
        tokens.extend(word[..start].chars().map(String::from));
        if start < end {
            tokens.push(word[start..end].to_string());
        }
        tokens.extend(word[end..].chars().map(String::from));
    }
    tokens
}

/// Lowercase token → lemma lookup table.
#[derive(Clone, Debug, Default)]
pub struct LemmaDictionary {
    table: HashMap<String, String>,
}

impl LemmaDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, token: &str, lemma: &str) {
        self.table.insert(token.to_lowercase(), lemma.to_lowercase());
    }

    pub fn get(&self, token: &str) -> Option<&str> {
        self.table.get(token).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// A small table of irregular English forms.
    pub fn english_irregulars() -> Self {
        const PAIRS: &[(&str, &str)] = &[
            ("am", "be"),
            ("is", "be"),
            ("are", "be"),
            ("was", "be"),
            ("were", "be"),
            ("been", "be"),
            ("being", "be"),
            ("has", "have"),
            ("had", "have"),
            ("having", "have"),
            ("does", "do"),
            ("did", "do"),
            ("done", "do"),
            ("doing", "do"),
            ("goes", "go"),
            ("went", "go"),
            ("gone", "go"),
            ("got", "get"),
            ("gotten", "get"),
            ("gave", "give"),
            ("given", "give"),
            ("took", "take"),
            ("taken", "take"),
            ("made", "make"),
            ("came", "come"),
            ("said", "say"),
            ("saw", "see"),
            ("seen", "see"),
            ("knew", "know"),
            ("known", "know"),
            ("thought", "think"),
            ("told", "tell"),
            ("felt", "feel"),
            ("left", "leave"),
            ("kept", "keep"),
            ("stood", "stand"),
            ("put", "put"),
            ("ran", "run"),
            ("men", "man"),
            ("women", "woman"),
            ("children", "child"),
            ("people", "people"),
            ("lives", "life"),
            ("this", "this"),
            ("his", "his"),
            ("its", "its"),
            ("us", "us"),
            ("thus", "thus"),
        ];
        let mut dict = Self::new();
        for (token, lemma) in PAIRS {
            dict.insert(token, lemma);
        }
        dict
    }

    /// Reads `token<TAB>lemma` lines; blank lines and `#` comments are skipped.
    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut dict = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (token, lemma) = trimmed.split_once('\t').ok_or_else(|| Error::Format {
                what: "lemma dictionary",
                line: i + 1,
                msg: "expected `token<TAB>lemma`".into(),
            })?;
            dict.insert(token.trim(), lemma.trim());
        }
        Ok(dict)
    }

    pub fn load_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::load(std::io::BufReader::new(file))
    }

    pub fn merged(mut self, other: &LemmaDictionary) -> Self {
        for (k, v) in &other.table {
            self.table.insert(k.clone(), v.clone());
        }
        self
    }
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

fn has_vowel(s: &str) -> bool {
    s.chars().any(|c| is_vowel(c) || c == 'y')
}

fn ends_consonant_vowel_consonant(stem: &[char]) -> bool {
    match stem {
        [.., a, b, c] => {
            !is_vowel(*a) && is_vowel(*b) && !is_vowel(*c) && !matches!(c, 'w' | 'x' | 'y')
        }
        _ => false,
    }
}

/// Undo `-ing` / `-ed`: undouble a final consonant (`stopp` → `stop`) or
/// restore a silent `e` on short consonant-vowel-consonant stems (`mak` → `make`).
fn restore_verb_stem(stem: &str) -> Option<String> {
    if stem.chars().count() < 2 || !has_vowel(stem) {
        return None;
    }
    let chars: Vec<char> = stem.chars().collect();
    let n = chars.len();
    if n >= 3 && chars[n - 1] == chars[n - 2] && !is_vowel(chars[n - 1]) {
        if !matches!(chars[n - 1], 'l' | 's' | 'z' | 'f') {
            return Some(chars[..n - 1].iter().collect());
        }
        return Some(stem.to_string());
    }
    if n == 3 && ends_consonant_vowel_consonant(&chars) {
        return Some(format!("{stem}e"));
    }
    Some(stem.to_string())
}

/// Suffix rules applied when the dictionary has no entry, longest suffix first.
pub fn suffix_lemma(word: &str) -> Option<String> {
    let n = word.chars().count();
    if let Some(stem) = word.strip_suffix("ies") {
        if n >= 5 {
            return Some(format!("{stem}y"));
        }
    }
    if let Some(stem) = word.strip_suffix("ing") {
        if n >= 5 {
            if let Some(s) = restore_verb_stem(stem) {
                return Some(s);
            }
        }
    }
    if let Some(stem) = word.strip_suffix("es") {
        if n >= 4 && ["s", "x", "z", "ch", "sh"].iter().any(|e| stem.ends_with(e)) {
            return Some(stem.to_string());
        }
    }
    if let Some(stem) = word.strip_suffix("ed") {
        if n >= 5 {
            if let Some(s) = restore_verb_stem(stem) {
                return Some(s);
            }
        }
    }
    if let Some(stem) = word.strip_suffix('s') {
        if n >= 4 && !["ss", "us", "is"].iter().any(|e| word.ends_with(e)) {
            return Some(stem.to_string());
        }
    }
    None
}

/// Lowercases each token, then looks it up in `dict`, falling back to
/// suffix rules and finally to the lowercased token itself.
pub fn lemmatize<S: AsRef<str>>(tokens: &[S], dict: &LemmaDictionary) -> Vec<String> {
    tokens
        .iter()
        .map(|t| {
            let lower = t.as_ref().to_lowercase();
            if let Some(lemma) = dict.get(&lower) {
                return lemma.to_string();
            }
            suffix_lemma(&lower).unwrap_or(lower)
        })
        .collect()
}

/// At least two tokens remain after cleaning.
pub fn is_trainable(tweet: &CleanTweet) -> bool {
    tweet.surface_tokens.len() >= 2
}

pub fn preprocess(tweet: &RawTweet, dict: &LemmaDictionary) -> CleanTweet {
    let surface_tokens = tokenize(&clean_text(&tweet.text));
    let lemmas = lemmatize(&surface_tokens, dict);
    CleanTweet {
        id: tweet.id.clone(),
        surface_tokens,
        lemmas,
        label: tweet.label,
    }
}

pub fn preprocess_corpus(tweets: &[RawTweet], dict: &LemmaDictionary) -> Vec<CleanTweet> {
    tweets.iter().map(|t| preprocess(t, dict)).collect()
}
