//! Builds the three branch inputs of one tweet.

use serde::{Deserialize, Serialize};

use crate::embed_store::{
    synth_vector, ContextualVectorStore, SentenceVectorStore, WordVectorStore,
};
use crate::error::{Error, Result};
use crate::lexicon::{CategoryGroup, Lexicon, MweCategory};
use crate::mwe_tagger::{tag_sentence, TaggedSentence};
use crate::tensornet::{Example, ModelInput, Tensor};
use crate::textprep::CleanTweet;

pub const MAX_TOKENS: usize = 64;
pub const MAX_MWE_TOKENS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLimits {
    pub max_tokens: usize,
    pub max_mwe_tokens: usize,
}

impl Default for FeatureLimits {
    fn default() -> Self {
        FeatureLimits {
            max_tokens: MAX_TOKENS,
            max_mwe_tokens: MAX_MWE_TOKENS,
        }
    }
}

pub enum SentenceSource {
    Store(SentenceVectorStore),
    /// `synth_vector(tweet id, dim, seed)`.
    Synthetic { dim: usize, seed: u64 },
}

impl SentenceSource {
    pub fn dim(&self) -> usize {
        match self {
            SentenceSource::Store(s) => s.dim(),
            SentenceSource::Synthetic { dim, .. } => *dim,
        }
    }

    pub fn vector(&self, id: &str) -> Result<Vec<f64>> {
        match self {
            SentenceSource::Store(store) => store
                .get(id)
                .map(|v| v.iter().map(|&x| f64::from(x)).collect())
                .ok_or_else(|| Error::Tweet {
                    id: id.to_string(),
                    msg: "no sentence vector".into(),
                }),
            SentenceSource::Synthetic { dim, seed } => Ok(to_f64(&synth_vector(id, *dim, *seed))),
        }
    }
}

pub enum MweEmbeddingSource {
    /// Word vectors keyed by lowercased surface token.
    Static(WordVectorStore),
    /// Per-tweet subword vectors; every subword of an MWE word is used.
    Contextual(ContextualVectorStore),
    /// `synth_vector(lowercased token, dim, seed)`.
    Synthetic { dim: usize, seed: u64 },
}

impl MweEmbeddingSource {
    pub fn dim(&self) -> usize {
        match self {
            MweEmbeddingSource::Static(s) => s.dim(),
            MweEmbeddingSource::Contextual(s) => s.dim(),
            MweEmbeddingSource::Synthetic { dim, .. } => *dim,
        }
    }
}

pub struct FeatureSources {
    pub sentence: SentenceSource,
    /// `None` for the sentence-only baseline.
    pub mwe: Option<MweEmbeddingSource>,
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExampleFeatures {
    pub id: String,
    /// `[max_tokens, K + 1]`
    pub onehot: Tensor,
    /// Valid rows only: `[mwe_len, E]`.
    pub mwe_embeds: Tensor,
    pub mwe_len: usize,
    pub max_mwe_tokens: usize,
    pub sentence_vec: Vec<f64>,
    pub label: usize,
}

impl ExampleFeatures {
    /// The embedding matrix zero-padded to `[max_mwe_tokens, E]`.
    pub fn padded_mwe_embeds(&self) -> Tensor {
        let dim = self.mwe_embeds.cols();
        let mut data = self.mwe_embeds.data().to_vec();
        data.resize(self.max_mwe_tokens * dim, 0.0);
        Tensor::from_vec(&[self.max_mwe_tokens, dim], data).expect("padded shape")
    }
}

impl Example for ExampleFeatures {
    fn input(&self) -> ModelInput<'_> {
        ModelInput {
            onehot: &self.onehot,
            mwe: &self.mwe_embeds,
            sentence: &self.sentence_vec,
        }
    }

    fn label(&self) -> usize {
        self.label
    }
}

/// Row `t` is the one-hot of token `t`'s category over `group.columns()`;
/// tokens beyond `max_tokens` are cut and remaining rows stay zero.
pub fn onehot_sequence(tagged: &TaggedSentence, group: &CategoryGroup, max_tokens: usize) -> Tensor {
    let columns = group.columns();
    let width = columns.len();
    let mut m = Tensor::zeros(&[max_tokens, width]);
    for (t, tag) in tagged.tags.iter().take(max_tokens).enumerate() {
        let col = columns
            .iter()
            .position(|&c| c == tag.category)
            .unwrap_or(width - 1);
        m.data_mut()[t * width + col] = 1.0;
    }
    m
}

/// Embeddings of the MWE member tokens in sentence order, zero-padded to
/// `[max_mwe_tokens, E]`, and the number of filled rows.
pub fn mwe_embedding_sequence(
    tagged: &TaggedSentence,
    tweet: &CleanTweet,
    source: &MweEmbeddingSource,
    max_mwe_tokens: usize,
) -> Result<(Tensor, usize)> {
    let dim = source.dim();
    let members = tagged
        .tags
        .iter()
        .enumerate()
        .filter(|(_, t)| t.category != MweCategory::NoMwe)
        .map(|(i, _)| i);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    match source {
        MweEmbeddingSource::Static(store) => {
            for p in members {
                rows.push(to_f64(store.lookup(&tweet.surface_tokens[p].to_lowercase())));
            }
        }
        MweEmbeddingSource::Synthetic { dim, seed } => {
            for p in members {
                let key = tweet.surface_tokens[p].to_lowercase();
                rows.push(to_f64(&synth_vector(&key, *dim, *seed)));
            }
        }
        MweEmbeddingSource::Contextual(store) => {
            let members: Vec<usize> = members.collect();
            if !members.is_empty() {
                let entry = store.get(&tweet.id).ok_or_else(|| Error::Tweet {
                    id: tweet.id.clone(),
                    msg: "no contextual vectors".into(),
                })?;
                for p in members {
                    rows.extend(entry.vectors_for_word(p).map(to_f64));
                }
            }
        }
    }
    rows.truncate(max_mwe_tokens);
    let len = rows.len();
    let mut m = Tensor::zeros(&[max_mwe_tokens, dim]);
    for (r, row) in rows.iter().enumerate() {
        m.data_mut()[r * dim..(r + 1) * dim].copy_from_slice(row);
    }
    Ok((m, len))
}

pub fn tag_corpus(corpus: &[CleanTweet], lexicon: &Lexicon, group: &CategoryGroup) -> Vec<TaggedSentence> {
    corpus
        .iter()
        .map(|t| tag_sentence(&t.lemmas, lexicon, group))
        .collect()
}

pub fn features_for(
    tweet: &CleanTweet,
    tagged: &TaggedSentence,
    group: &CategoryGroup,
    sentence: &SentenceSource,
    mwe: Option<&MweEmbeddingSource>,
    limits: FeatureLimits,
) -> Result<ExampleFeatures> {
    let onehot = onehot_sequence(tagged, group, limits.max_tokens);
    let (mwe_embeds, mwe_len) = match mwe {
        Some(source) => {
            let (padded, len) = mwe_embedding_sequence(tagged, tweet, source, limits.max_mwe_tokens)?;
            let dim = source.dim();
            let valid = Tensor::from_vec(&[len, dim], padded.data()[..len * dim].to_vec())?;
            (valid, len)
        }
        None => (Tensor::zeros(&[0, 0]), 0),
    };
    let sentence_vec = sentence.vector(&tweet.id)?;
    Ok(ExampleFeatures {
        id: tweet.id.clone(),
        onehot,
        mwe_embeds,
        mwe_len,
        max_mwe_tokens: limits.max_mwe_tokens,
        sentence_vec,
        label: tweet.label,
    })
}

/// Tags every tweet and builds its features; corpus order is kept.
pub fn assemble_dataset(
    corpus: &[CleanTweet],
    lexicon: &Lexicon,
    group: &CategoryGroup,
    sources: &FeatureSources,
    limits: FeatureLimits,
) -> Result<Vec<ExampleFeatures>> {
    corpus
        .iter()
        .map(|tweet| {
            let tagged = tag_sentence(&tweet.lemmas, lexicon, group);
            features_for(
                tweet,
                &tagged,
                group,
                &sources.sentence,
                sources.mwe.as_ref(),
                limits,
            )
        })
        .collect()
}

/// Debug dump of one example (one JSON object per line).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub id: String,
    pub label: usize,
    pub columns: Vec<MweCategory>,
    /// One-hot column of each valid token row.
    pub onehot_columns: Vec<usize>,
    pub mwe_len: usize,
    pub mwe_embeds: Vec<Vec<f64>>,
    pub sentence_vec: Vec<f64>,
}

impl FeatureRecord {
    pub fn new(features: &ExampleFeatures, group: &CategoryGroup, n_tokens: usize) -> Self {
        let width = features.onehot.cols();
        let rows = n_tokens.min(features.onehot.rows());
        FeatureRecord {
            id: features.id.clone(),
            label: features.label,
            columns: group.columns(),
            onehot_columns: (0..rows)
                .map(|r| {
                    features.onehot.row(r).iter().position(|&v| v == 1.0).unwrap_or(width)
                })
                .collect(),
            mwe_len: features.mwe_len,
            mwe_embeds: (0..features.mwe_len)
                .map(|r| features.mwe_embeds.row(r).to_vec())
                .collect(),
            sentence_vec: features.sentence_vec.clone(),
        }
    }
}
