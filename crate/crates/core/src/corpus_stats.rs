//! MWE distribution statistics over a tagged, labelled corpus.
//!
//! Binary labels follow the hateval scheme: 0 = non-hateful, 1 = hateful.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{CategoryCounts, Lexicon, MweCategory};
use crate::mwe_tagger::TaggedSentence;

const HATEFUL: usize = 1;

/// Number of tweets per MWE-occurrence count.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: BTreeMap<usize, usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.bins.values().sum()
    }

    pub fn percent(&self) -> BTreeMap<usize, f64> {
        let total = self.total() as f64;
        self.bins
            .iter()
            .map(|(&k, &v)| (k, 100.0 * v as f64 / total))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["count", "tweets", "percent"])?;
        let percent = self.percent();
        for (k, v) in &self.bins {
            w.write_record([k.to_string(), v.to_string(), format!("{:.4}", percent[k])])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn mwe_per_tweet_histogram(tagged: &[TaggedSentence]) -> Histogram {
    let mut hist = Histogram::default();
    for t in tagged {
        *hist.bins.entry(t.matches.len()).or_insert(0) += 1;
    }
    hist
}

fn check_binary(tagged: &[TaggedSentence], labels: &[usize]) -> Result<()> {
    if tagged.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} tagged sentences but {} labels",
            tagged.len(),
            labels.len()
        )));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::invalid(format!(
            "non-binary label {l}; statistics need hateful/non-hateful labels"
        )));
    }
    Ok(())
}

fn empty_table<T: Default>() -> BTreeMap<MweCategory, T> {
    MweCategory::LEXICAL.iter().map(|&c| (c, T::default())).collect()
}

/// Splits each category's occurrences by whether the underlying lexicon
/// entry was seen only in hateful tweets, only in non-hateful tweets, or in
/// both. Partition is per distinct entry; counts are occurrence sums.
pub fn category_partition(
    tagged: &[TaggedSentence],
    labels: &[usize],
    lexicon: &Lexicon,
) -> Result<BTreeMap<MweCategory, CategoryCounts>> {
    check_binary(tagged, labels)?;
    let mut per_entry: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    for (t, &label) in tagged.iter().zip(labels) {
        for m in &t.matches {
            let slot = per_entry.entry(m.entry_id).or_default();
            if label == HATEFUL {
                slot.0 += 1;
            } else {
                slot.1 += 1;
            }
        }
    }
    let mut table = empty_table::<CategoryCounts>();
    for (entry_id, (hateful, nonhateful)) in per_entry {
        let counts = table
            .get_mut(&lexicon.entry(entry_id).category)
            .expect("lexicon categories are lexical");
        match (hateful > 0, nonhateful > 0) {
            (true, true) => counts.both += hateful + nonhateful,
            (true, false) => counts.hateful_only += hateful,
            _ => counts.nonhateful_only += nonhateful,
        }
    }
    Ok(table)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub hateful: u64,
    pub nonhateful: u64,
}

/// Raw MWE occurrences per category and class.
pub fn category_class_counts(
    tagged: &[TaggedSentence],
    labels: &[usize],
    lexicon: &Lexicon,
) -> Result<BTreeMap<MweCategory, ClassCounts>> {
    check_binary(tagged, labels)?;
    let mut table = empty_table::<ClassCounts>();
    for (t, &label) in tagged.iter().zip(labels) {
        for m in &t.matches {
            let counts = table
                .get_mut(&lexicon.entry(m.entry_id).category)
                .expect("lexicon categories are lexical");
            if label == HATEFUL {
                counts.hateful += 1;
            } else {
                counts.nonhateful += 1;
            }
        }
    }
    Ok(table)
}

pub fn write_partition_csv<W: Write>(table: &BTreeMap<MweCategory, CategoryCounts>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["category", "hateful_only", "nonhateful_only", "both"])?;
    for (c, counts) in table {
        w.write_record([
            c.name().to_string(),
            counts.hateful_only.to_string(),
            counts.nonhateful_only.to_string(),
            counts.both.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_class_counts_csv<W: Write>(table: &BTreeMap<MweCategory, ClassCounts>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["category", "hateful", "nonhateful"])?;
    for (c, counts) in table {
        w.write_record([
            c.name().to_string(),
            counts.hateful.to_string(),
            counts.nonhateful.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
