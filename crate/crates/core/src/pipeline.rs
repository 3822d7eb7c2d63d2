//! Experiment orchestration: splits, multi-seed training, test prediction
//! and reports.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed_store::{ContextualVectorStore, SentenceVectorStore, WordVectorStore};
use crate::error::{Error, Result};
use crate::featurize::{
    features_for, tag_corpus, ExampleFeatures, FeatureLimits, MweEmbeddingSource, SentenceSource,
};
use crate::lexicon::{category_group, CategoryGroup, GroupSelector, Lexicon};
use crate::metrics::{mwe_subset, EvalReport};
use crate::mwe_tagger::TaggedSentence;
use crate::tensornet::{
    predict_all, train, Checkpoint, CheckpointMeta, Example, History, Model, ModelConfig, ModelVariant,
    TrainParams,
};
use crate::textprep::{is_trainable, load_corpus, preprocess_corpus, CleanTweet, LabelScheme, LemmaDictionary};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSpec {
    /// Train and dev sizes are floored; test takes the remainder.
    Fractions { train: f64, dev: f64, test: f64 },
    /// Tweets beyond the three counts are left unassigned.
    Counts { train: usize, dev: usize, test: usize },
}

impl SplitSpec {
    fn sizes(&self, n: usize) -> Result<(usize, usize, usize)> {
        match *self {
            SplitSpec::Fractions { train, dev, test } => {
                if [train, dev, test].iter().any(|f| !(0.0..=1.0).contains(f))
                    || (train + dev + test - 1.0).abs() > 1e-9
                {
                    return Err(Error::invalid(format!(
                        "split fractions {train}/{dev}/{test} must be in [0, 1] and sum to 1"
                    )));
                }
                let n_train = (train * n as f64 + 1e-9).floor() as usize;
                let n_dev = ((dev * n as f64 + 1e-9).floor() as usize).min(n - n_train);
                Ok((n_train, n_dev, n - n_train - n_dev))
            }
            SplitSpec::Counts { train, dev, test } => {
                if train + dev + test > n {
                    return Err(Error::invalid(format!(
                        "split counts {train}+{dev}+{test} exceed corpus size {n}"
                    )));
                }
                Ok((train, dev, test))
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<CleanTweet>,
    pub dev: Vec<CleanTweet>,
    pub test: Vec<CleanTweet>,
    /// Ids removed from train/dev for having fewer than two tokens.
    pub dropped: Vec<String>,
    /// Ids not assigned to any part (count splits only).
    pub unassigned: Vec<String>,
}

/// Seeded shuffle, then consecutive train/dev/test slices.
pub fn split_corpus(corpus: &[CleanTweet], spec: SplitSpec, seed: u64) -> Result<Split> {
    let (n_train, n_dev, n_test) = spec.sizes(corpus.len())?;
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut split = Split::default();
    for (rank, &i) in order.iter().enumerate() {
        let tweet = &corpus[i];
        if rank >= n_train + n_dev + n_test {
            split.unassigned.push(tweet.id.clone());
        } else if rank >= n_train + n_dev {
            split.test.push(tweet.clone());
        } else if !is_trainable(tweet) {
            split.dropped.push(tweet.id.clone());
        } else if rank >= n_train {
            split.dev.push(tweet.clone());
        } else {
            split.train.push(tweet.clone());
        }
    }
    Ok(split)
}

/// Moves the last `count` tweets of `train` into a validation set.
pub fn carve_validation(mut train: Vec<CleanTweet>, count: usize) -> Result<(Vec<CleanTweet>, Vec<CleanTweet>)> {
    if count > train.len() {
        return Err(Error::invalid(format!(
            "validation count {count} exceeds training size {}",
            train.len()
        )));
    }
    let validation = train.split_off(train.len() - count);
    Ok((train, validation))
}

/// Removes tweets with fewer than two tokens; returns the kept tweets and
/// the dropped ids.
pub fn keep_trainable(tweets: Vec<CleanTweet>) -> (Vec<CleanTweet>, Vec<String>) {
    let (kept, dropped): (Vec<_>, Vec<_>) = tweets.into_iter().partition(is_trainable);
    (kept, dropped.into_iter().map(|t| t.id).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMode {
    Static,
    Contextual,
    SentenceOnly,
}

impl EmbeddingMode {
    pub fn variant(self) -> ModelVariant {
        match self {
            EmbeddingMode::SentenceOnly => ModelVariant::SentenceOnly,
            _ => ModelVariant::ThreeBranch,
        }
    }
}

impl std::str::FromStr for EmbeddingMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "static" => Ok(EmbeddingMode::Static),
            "contextual" => Ok(EmbeddingMode::Contextual),
            "sentence_only" => Ok(EmbeddingMode::SentenceOnly),
            _ => Err(format!(
                "unknown embedding mode {s:?} (expected static, contextual or sentence-only)"
            )),
        }
    }
}

/// Everything needed to rebuild inputs for a trained model; stored in the
/// checkpoint metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub group: GroupSelector,
    pub mode: EmbeddingMode,
    pub scheme: LabelScheme,
    pub limits: FeatureLimits,
    /// Set when synthetic vectors stood in for real stores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticVectors>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticVectors {
    pub sentence_dim: usize,
    pub word_dim: usize,
    pub seed: u64,
}

impl SyntheticVectors {
    pub fn sentence_source(&self) -> SentenceSource {
        SentenceSource::Synthetic {
            dim: self.sentence_dim,
            seed: self.seed,
        }
    }

    /// Word vectors use a seed distinct from the sentence vectors.
    pub fn mwe_source(&self) -> MweEmbeddingSource {
        MweEmbeddingSource::Synthetic {
            dim: self.word_dim,
            seed: self.seed.wrapping_add(1),
        }
    }
}

pub struct ExperimentData {
    pub scheme: LabelScheme,
    pub lexicon: Lexicon,
    pub train: Vec<CleanTweet>,
    /// Early-stopping set; empty means the training set is used.
    pub validation: Vec<CleanTweet>,
    /// Seed-selection set.
    pub dev: Vec<CleanTweet>,
    pub test: Vec<CleanTweet>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub group: GroupSelector,
    pub mode: EmbeddingMode,
    pub limits: FeatureLimits,
    pub train_params: TrainParams,
    pub n_seeds: usize,
    pub base_seed: u64,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            group: GroupSelector::Mwe5Vmwe5,
            mode: EmbeddingMode::Static,
            limits: FeatureLimits::default(),
            train_params: TrainParams::default(),
            n_seeds: 9,
            base_seed: 0,
        }
    }
}

/// Model inputs of one partition plus the tagging they were built from.
pub struct PreparedSet {
    pub tweets: Vec<CleanTweet>,
    pub tagged: Vec<TaggedSentence>,
    pub features: Vec<ExampleFeatures>,
}

/// Tags and featurizes `tweets`. MWE embeddings are skipped for the
/// sentence-only mode.
pub fn prepare(
    tweets: &[CleanTweet],
    lexicon: &Lexicon,
    group: &CategoryGroup,
    mode: EmbeddingMode,
    sentence: &SentenceSource,
    mwe: Option<&MweEmbeddingSource>,
    limits: FeatureLimits,
) -> Result<PreparedSet> {
    let mwe = match mode {
        EmbeddingMode::SentenceOnly => None,
        _ => Some(mwe.ok_or_else(|| {
            Error::invalid("the static and contextual modes need an MWE embedding source")
        })?),
    };
    let tagged = tag_corpus(tweets, lexicon, group);
    let features = tweets
        .iter()
        .zip(&tagged)
        .map(|(t, tg)| features_for(t, tg, group, sentence, mwe, limits))
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedSet {
        tweets: tweets.to_vec(),
        tagged,
        features,
    })
}

/// Builds the model configuration matching a feature layout.
pub fn model_config(
    mode: EmbeddingMode,
    group: &CategoryGroup,
    limits: FeatureLimits,
    sentence_dim: usize,
    mwe_dim: usize,
    n_classes: usize,
    seed: u64,
) -> ModelConfig {
    match mode {
        EmbeddingMode::SentenceOnly => ModelConfig::sentence_only(sentence_dim, n_classes, seed),
        _ => ModelConfig::new(
            limits.max_tokens,
            group.len() + 1,
            mwe_dim,
            sentence_dim,
            n_classes,
            seed,
        ),
    }
}

/// Empty tweets get the non-hateful class without running the model.
pub fn predict_test(
    model: &Model,
    tweets: &[CleanTweet],
    features: &[ExampleFeatures],
    scheme: LabelScheme,
) -> Result<Vec<usize>> {
    if tweets.len() != features.len() {
        return Err(Error::invalid(format!(
            "{} tweets but {} feature rows",
            tweets.len(),
            features.len()
        )));
    }
    tweets
        .iter()
        .zip(features)
        .map(|(t, f)| {
            if t.is_empty() {
                Ok(scheme.non_hateful())
            } else {
                model.predict(&f.input()).map(|(c, _)| c)
            }
        })
        .collect()
}

/// Full-test and MWE-subset reports for a set of predictions.
pub fn evaluate_reports(
    gold: &[usize],
    predicted: &[usize],
    tagged: &[TaggedSentence],
    scheme: LabelScheme,
) -> Result<(EvalReport, EvalReport)> {
    let k = scheme.n_classes();
    let names = scheme.class_names();
    let full = EvalReport::evaluate(gold, predicted, k, "full")?.with_class_names(names);
    let subset = mwe_subset(tagged);
    let sub_gold: Vec<usize> = subset.iter().map(|&i| gold[i]).collect();
    let sub_pred: Vec<usize> = subset.iter().map(|&i| predicted[i]).collect();
    let sub = EvalReport::evaluate(&sub_gold, &sub_pred, k, "mwe_subset")?.with_class_names(names);
    Ok((full, sub))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub dev_macro_f1: f64,
    pub history: History,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub runs: Vec<SeedRun>,
    /// Index into `runs` of the selected model.
    pub best_index: usize,
    pub checkpoint: Checkpoint,
    pub test_predictions: Vec<usize>,
    pub report: EvalReport,
    pub subset_report: EvalReport,
}

impl ExperimentResult {
    pub fn best_seed(&self) -> u64 {
        self.runs[self.best_index].seed
    }

    pub fn dev_scores(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.dev_macro_f1).collect()
    }
}

/// First index of the maximum; earlier (lower-seed) runs win ties.
pub fn select_best(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Trains `n_seeds` models, keeps the one with the best dev macro-F1 and
/// evaluates it once on the test set.
pub fn run_experiment(
    data: &ExperimentData,
    sentence: &SentenceSource,
    mwe: Option<&MweEmbeddingSource>,
    settings: &ExperimentSettings,
    synthetic: Option<SyntheticVectors>,
) -> Result<ExperimentResult> {
    if settings.n_seeds == 0 {
        return Err(Error::invalid("n_seeds must be at least 1"));
    }
    if data.dev.is_empty() {
        return Err(Error::invalid("empty dev set"));
    }
    let group = category_group(settings.group);
    let prep = |tweets: &[CleanTweet]| {
        prepare(
            tweets,
            &data.lexicon,
            &group,
            settings.mode,
            sentence,
            mwe,
            settings.limits,
        )
    };
    let train_set = prep(&data.train)?;
    let val_set = prep(&data.validation)?;
    let dev_set = prep(&data.dev)?;
    let test_set = prep(&data.test)?;
    let n_classes = data.scheme.n_classes();
    let dev_gold: Vec<usize> = data.dev.iter().map(|t| t.label).collect();

    let mut runs = Vec::with_capacity(settings.n_seeds);
    let mut models = Vec::with_capacity(settings.n_seeds);
    for i in 0..settings.n_seeds {
        let seed = settings.base_seed + i as u64;
        let with_seed = |e: Error| Error::invalid(format!("seed {seed}: {e}"));
        let config = model_config(
            settings.mode,
            &group,
            settings.limits,
            sentence.dim(),
            mwe.map_or(0, |m| m.dim()),
            n_classes,
            seed,
        );
        let model = Model::build(config).map_err(with_seed)?;
        let (model, history) = train(
            model,
            &train_set.features,
            &val_set.features,
            &settings.train_params,
        )
        .map_err(with_seed)?;
        let dev_pred = predict_all(&model, &dev_set.features).map_err(with_seed)?;
        let cm = crate::metrics::confusion_matrix(&dev_gold, &dev_pred, n_classes)?;
        runs.push(SeedRun {
            seed,
            dev_macro_f1: crate::metrics::macro_f1(&cm),
            history,
        });
        models.push(model);
    }

    let scores: Vec<f64> = runs.iter().map(|r| r.dev_macro_f1).collect();
    let best_index = select_best(&scores).expect("at least one seed");
    let best = &models[best_index];
    let test_predictions = predict_test(best, &data.test, &test_set.features, data.scheme)?;
    let gold: Vec<usize> = data.test.iter().map(|t| t.label).collect();
    let (report, subset_report) =
        evaluate_reports(&gold, &test_predictions, &test_set.tagged, data.scheme)?;

    let run = &runs[best_index];
    let spec = FeatureSpec {
        group: settings.group,
        mode: settings.mode,
        scheme: data.scheme,
        limits: settings.limits,
        synthetic,
    };
    let meta = CheckpointMeta {
        seed: run.seed,
        epochs_run: run.history.epochs.len(),
        best_epoch: run.history.best_epoch,
        dev_macro_f1: Some(run.dev_macro_f1),
        float_width: 64,
        extra: serde_json::to_value(&spec)?,
    };
    Ok(ExperimentResult {
        checkpoint: Checkpoint::from_model(best, meta),
        runs,
        best_index,
        test_predictions,
        report,
        subset_report,
    })
}

#[derive(Serialize)]
struct Summary<'a> {
    best_seed: u64,
    best_index: usize,
    dev_scores: Vec<f64>,
    settings: &'a ExperimentSettings,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Writes `report.json`, `report_subset.json`, `history_<i>.json`,
/// `model_best.json` and `summary.json` into `dir`.
pub fn write_experiment_outputs(result: &ExperimentResult, settings: &ExperimentSettings, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("report.json"), &result.report)?;
    write_json(&dir.join("report_subset.json"), &result.subset_report)?;
    for (i, run) in result.runs.iter().enumerate() {
        write_json(&dir.join(format!("history_{i}.json")), &run.history)?;
    }
    let mut out = BufWriter::new(File::create(dir.join("model_best.json"))?);
    result.checkpoint.write(&mut out)?;
    out.flush()?;
    write_json(
        &dir.join("summary.json"),
        &Summary {
            best_seed: result.best_seed(),
            best_index: result.best_index,
            dev_scores: result.dev_scores(),
            settings,
        },
    )
}

/// How the corpus is partitioned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CorpusSource {
    /// Pre-split files.
    Files {
        train: PathBuf,
        dev: PathBuf,
        test: PathBuf,
    },
    /// One file split by `split_corpus`.
    Single { corpus: PathBuf, split: SplitSpec },
}

/// Experiment configuration file (JSON). Relative paths resolve against
/// the file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: CorpusSource,
    #[serde(default = "default_scheme")]
    pub scheme: LabelScheme,
    pub lexicon: PathBuf,
    /// Extra `token<TAB>lemma` entries on top of the built-in table.
    #[serde(default)]
    pub lemmas: Option<PathBuf>,
    #[serde(default = "default_group")]
    pub group: GroupSelector,
    pub mode: EmbeddingMode,
    #[serde(default)]
    pub sentence_vectors: Option<PathBuf>,
    #[serde(default)]
    pub word_vectors: Option<PathBuf>,
    #[serde(default)]
    pub contextual_vectors: Option<PathBuf>,
    /// Replaces every store with seeded synthetic vectors.
    #[serde(default)]
    pub synthetic: Option<SyntheticVectors>,
    /// Tail of the training set held out for early stopping.
    #[serde(default)]
    pub validation_count: usize,
    #[serde(default)]
    pub limits: FeatureLimits,
    #[serde(default)]
    pub train_params: TrainParams,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Seed of the corpus shuffle for single-file corpora.
    #[serde(default)]
    pub split_seed: u64,
    pub output_dir: PathBuf,
}

fn default_scheme() -> LabelScheme {
    LabelScheme::Hateval
}

fn default_group() -> GroupSelector {
    GroupSelector::Mwe5Vmwe5
}

fn default_n_seeds() -> usize {
    9
}

/// Loaded inputs of an experiment config.
pub struct ResolvedExperiment {
    pub data: ExperimentData,
    pub sentence: SentenceSource,
    pub mwe: Option<MweEmbeddingSource>,
    pub settings: ExperimentSettings,
    pub synthetic: Option<SyntheticVectors>,
    pub output_dir: PathBuf,
    /// Ids dropped from train/dev for being shorter than two tokens.
    pub dropped: Vec<String>,
}

impl ExperimentConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config: ExperimentConfig = serde_json::from_str(&text)?;
        if let Some(base) = path.parent() {
            config.rebase(base);
        }
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.data {
            CorpusSource::Files { train, dev, test } => {
                fix(train);
                fix(dev);
                fix(test);
            }
            CorpusSource::Single { corpus, .. } => fix(corpus),
        }
        fix(&mut self.lexicon);
        fix(&mut self.output_dir);
        for p in [
            &mut self.lemmas,
            &mut self.sentence_vectors,
            &mut self.word_vectors,
            &mut self.contextual_vectors,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn settings(&self) -> ExperimentSettings {
        ExperimentSettings {
            group: self.group,
            mode: self.mode,
            limits: self.limits,
            train_params: self.train_params.clone(),
            n_seeds: self.n_seeds,
            base_seed: self.base_seed,
        }
    }

    pub fn resolve(&self) -> Result<ResolvedExperiment> {
        let lexicon = Lexicon::load(BufReader::new(open(&self.lexicon)?))?;
        let dict = lemma_dictionary(self.lemmas.as_deref())?;
        let load = |p: &Path| -> Result<Vec<CleanTweet>> {
            let (raw, _) = load_corpus(BufReader::new(open(p)?), self.scheme)?;
            Ok(preprocess_corpus(&raw, &dict))
        };
        let (train_all, dev, test, mut dropped) = match &self.data {
            CorpusSource::Files { train, dev, test } => {
                let (train, mut dropped) = keep_trainable(load(train)?);
                let (dev, more) = keep_trainable(load(dev)?);
                dropped.extend(more);
                (train, dev, load(test)?, dropped)
            }
            CorpusSource::Single { corpus, split } => {
                let s = split_corpus(&load(corpus)?, *split, self.split_seed)?;
                (s.train, s.dev, s.test, s.dropped)
            }
        };
        dropped.sort();
        let (train, validation) = carve_validation(train_all, self.validation_count)?;
        let (sentence, mwe) = self.sources()?;
        Ok(ResolvedExperiment {
            data: ExperimentData {
                scheme: self.scheme,
                lexicon,
                train,
                validation,
                dev,
                test,
            },
            sentence,
            mwe,
            settings: self.settings(),
            synthetic: self.synthetic,
            output_dir: self.output_dir.clone(),
            dropped,
        })
    }

    fn sources(&self) -> Result<(SentenceSource, Option<MweEmbeddingSource>)> {
        load_sources(
            self.mode,
            self.synthetic,
            self.sentence_vectors.as_deref(),
            self.word_vectors.as_deref(),
            self.contextual_vectors.as_deref(),
        )
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

/// Built-in irregular forms, extended by an optional dictionary file.
pub fn lemma_dictionary(path: Option<&Path>) -> Result<LemmaDictionary> {
    let base = LemmaDictionary::english_irregulars();
    match path {
        Some(p) => Ok(base.merged(&LemmaDictionary::load_path(p)?)),
        None => Ok(base),
    }
}

/// Opens the vector stores a mode needs, or synthetic stand-ins.
pub fn load_sources(
    mode: EmbeddingMode,
    synthetic: Option<SyntheticVectors>,
    sentence_vectors: Option<&Path>,
    word_vectors: Option<&Path>,
    contextual_vectors: Option<&Path>,
) -> Result<(SentenceSource, Option<MweEmbeddingSource>)> {
    if let Some(s) = synthetic {
        let mwe = (mode != EmbeddingMode::SentenceOnly).then(|| s.mwe_source());
        return Ok((s.sentence_source(), mwe));
    }
    let need = |p: Option<&Path>, what: &str| {
        p.ok_or_else(|| Error::invalid(format!("missing {what} path")))
            .map(Path::to_path_buf)
    };
    let sentence = SentenceSource::Store(SentenceVectorStore::load(BufReader::new(open(&need(
        sentence_vectors,
        "sentence vector",
    )?)?))?);
    let mwe = match mode {
        EmbeddingMode::SentenceOnly => None,
        EmbeddingMode::Static => Some(MweEmbeddingSource::Static(WordVectorStore::load(
            BufReader::new(open(&need(word_vectors, "word vector")?)?),
        )?)),
        EmbeddingMode::Contextual => Some(MweEmbeddingSource::Contextual(
            ContextualVectorStore::load(BufReader::new(open(&need(
                contextual_vectors,
                "contextual vector",
            )?)?))?,
        )),
    };
    Ok((sentence, mwe))
}
