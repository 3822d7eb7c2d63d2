use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use mwehsd::corpus_stats::{
    category_class_counts, category_partition, mwe_per_tweet_histogram, write_class_counts_csv,
    write_partition_csv,
};
use mwehsd::featurize::{tag_corpus, FeatureLimits, FeatureRecord};
use mwehsd::lexicon::{
    category_group, filter_categories_by_stats, CategoryCounts, CategoryGroup, GroupSelector,
    Lexicon, MweCategory,
};
use mwehsd::metrics::{matched_pair_test, EvalReport};
use mwehsd::mwe_tagger::TagRecord;
use mwehsd::pipeline::{
    lemma_dictionary, load_sources, prepare, predict_test, run_experiment,
    write_experiment_outputs, EmbeddingMode, ExperimentConfig, FeatureSpec, SyntheticVectors,
};
use mwehsd::tensornet::Checkpoint;
use mwehsd::textprep::{load_corpus, preprocess_corpus, CleanTweet, LabelScheme};

/// Lexicon-based multiword-expression features for hate speech detection.
///
/// Formats:
///   lexicon      TSV `lemma1 lemma2 ...<TAB>Category`
///   corpus       JSON lines `{"id", "text", "label"}`
///   lemmas       TSV `token<TAB>lemma`
///   word vectors text, header `N D`, then `token v1 .. vD`
///   sentence     JSON lines `{"id", "vec"}`
///   contextual   JSON lines `{"id", "tokens", "word_index", "vecs"}`
///   predictions  JSON lines `{"id", "label", "class"}`
#[derive(Parser)]
#[command(name = "mwehsd", version, verbatim_doc_comment)]
struct Cli {
    /// Seed for every random choice (shuffles, initialization).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment config (JSON), used by `train`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a lexicon; with --counts, select categories by class statistics.
    LexiconCheck(LexiconCheckArgs),
    /// Clean, tokenize and lemmatize a corpus (JSON lines of cleaned tweets).
    Preprocess(PreprocessArgs),
    /// Tag MWEs (JSON lines `{"id", "lemmas", "tags", "matches"}`).
    Tag(TagArgs),
    /// Write histogram.csv, partition.csv and class_counts.csv.
    Stats(StatsArgs),
    /// Dump model inputs (JSON lines per tweet).
    Features(FeaturesArgs),
    /// Run the multi-seed experiment given by --config.
    Train(TrainArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
    /// Score predictions against gold labels.
    Evaluate(EvaluateArgs),
    /// Matched-pair significance test between two prediction files.
    Significance(SignificanceArgs),
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// hateval (nonhateful/hateful) or founta (normal/abusive/hateful; spam dropped).
    #[arg(long, default_value = "hateval")]
    scheme: LabelScheme,
    /// Extra lemma dictionary.
    #[arg(long)]
    lemmas: Option<PathBuf>,
}

#[derive(Args)]
struct LexiconCheckArgs {
    #[arg(long)]
    lexicon: PathBuf,
    /// CSV `category,hateful_only,nonhateful_only,both`.
    #[arg(long)]
    counts: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    min_total: u64,
    #[arg(long, default_value_t = 0.97)]
    max_both_share: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PreprocessArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TagArgs {
    #[arg(long)]
    lexicon: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// mweall, mwe5, vmwe5 or mwe5_vmwe5.
    #[arg(long, default_value = "mweall")]
    group: GroupSelector,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    lexicon: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SourceArgs {
    /// static, contextual or sentence-only.
    #[arg(long, default_value = "static")]
    mode: EmbeddingMode,
    #[arg(long)]
    sentence_vectors: Option<PathBuf>,
    #[arg(long)]
    word_vectors: Option<PathBuf>,
    #[arg(long)]
    contextual_vectors: Option<PathBuf>,
    /// Use seeded synthetic vectors of this dimension instead of stores.
    #[arg(long)]
    synthetic_dim: Option<usize>,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    lexicon: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value = "mwe5_vmwe5")]
    group: GroupSelector,
    #[command(flatten)]
    sources: SourceArgs,
    #[arg(long, default_value_t = mwehsd::featurize::MAX_TOKENS)]
    max_tokens: usize,
    #[arg(long, default_value_t = mwehsd::featurize::MAX_MWE_TOKENS)]
    max_mwe_tokens: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Output directory (overrides the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Checkpoint written by `train` (model_best.json).
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    lemmas: Option<PathBuf>,
    #[arg(long)]
    sentence_vectors: Option<PathBuf>,
    #[arg(long)]
    word_vectors: Option<PathBuf>,
    #[arg(long)]
    contextual_vectors: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Gold corpus (JSON lines with labels).
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, default_value = "hateval")]
    scheme: LabelScheme,
    /// With --lexicon, also score the tweets carrying at least one MWE.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, default_value = "mweall")]
    group: GroupSelector,
    #[arg(long)]
    lemmas: Option<PathBuf>,
    /// Report JSON; the MWE-subset report goes next to it as `<stem>_subset.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SignificanceArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred_a: PathBuf,
    #[arg(long)]
    pred_b: PathBuf,
    #[arg(long, default_value = "hateval")]
    scheme: LabelScheme,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct Prediction {
    id: String,
    label: String,
    class: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::LexiconCheck(a) => lexicon_check(a),
        Command::Preprocess(a) => {
            let tweets = load_clean(&a.corpus)?;
            write_jsonl(&a.out, &tweets)
        }
        Command::Tag(a) => tag(a),
        Command::Stats(a) => stats(a),
        Command::Features(a) => features(a, cli.seed.unwrap_or(0)),
        Command::Train(a) => train(a, cli.config.as_deref(), cli.seed),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Significance(a) => significance(a),
    }
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
    ))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> anyhow::Result<()> {
    let mut out = create(path)?;
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn load_lexicon(path: &Path) -> anyhow::Result<Lexicon> {
    Lexicon::load(open(path)?).with_context(|| path.display().to_string())
}

fn load_clean(args: &CorpusArgs) -> anyhow::Result<Vec<CleanTweet>> {
    let (raw, dropped) = load_corpus(open(&args.corpus)?, args.scheme)
        .with_context(|| args.corpus.display().to_string())?;
    if dropped > 0 {
        eprintln!("dropped {dropped} rows with labels outside the scheme");
    }
    let dict = lemma_dictionary(args.lemmas.as_deref())?;
    Ok(preprocess_corpus(&raw, &dict))
}

fn lexicon_check(a: LexiconCheckArgs) -> anyhow::Result<()> {
    let lexicon = load_lexicon(&a.lexicon)?;
    let mut text = format!("{} entries\n", lexicon.len());
    for (category, n) in lexicon.category_counts() {
        text += &format!("{category}\t{n}\n");
    }
    if let Some(path) = &a.counts {
        let mut table = std::collections::BTreeMap::new();
        let mut reader = csv::Reader::from_reader(open(path)?);
        for (i, row) in reader.records().enumerate() {
            let row = row?;
            let line = i + 2;
            if row.len() != 4 {
                bail!("{} line {line}: expected 4 fields", path.display());
            }
            let category: MweCategory = row[0]
                .parse()
                .map_err(|e| anyhow::anyhow!("{} line {line}: {e}", path.display()))?;
            let num = |j: usize| -> anyhow::Result<u64> {
                row[j]
                    .trim()
                    .parse()
                    .with_context(|| format!("{} line {line}", path.display()))
            };
            table.insert(category, CategoryCounts::new(num(1)?, num(2)?, num(3)?));
        }
        let selected = filter_categories_by_stats(&table, a.min_total, a.max_both_share);
        text += "selected";
        for c in &selected {
            text += &format!(" {c}");
        }
        text += "\n";
    }
    match &a.out {
        Some(path) => {
            let mut out = create(path)?;
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn tag(a: TagArgs) -> anyhow::Result<()> {
    let lexicon = load_lexicon(&a.lexicon)?;
    let tweets = load_clean(&a.corpus)?;
    let tagged = tag_corpus(&tweets, &lexicon, &category_group(a.group));
    let records: Vec<TagRecord> = tweets
        .iter()
        .zip(&tagged)
        .map(|(t, tg)| TagRecord::new(&t.id, tg, &lexicon))
        .collect();
    write_jsonl(&a.out, &records)
}

fn stats(a: StatsArgs) -> anyhow::Result<()> {
    if a.corpus.scheme != LabelScheme::Hateval {
        bail!("stats need the binary hateval scheme");
    }
    let lexicon = load_lexicon(&a.lexicon)?;
    let tweets = load_clean(&a.corpus)?;
    let every = CategoryGroup::custom(GroupSelector::MweAll, MweCategory::LEXICAL);
    let tagged = tag_corpus(&tweets, &lexicon, &every);
    let labels: Vec<usize> = tweets.iter().map(|t| t.label).collect();
    std::fs::create_dir_all(&a.out)?;
    mwe_per_tweet_histogram(&tagged).write_csv(create(&a.out.join("histogram.csv"))?)?;
    write_partition_csv(
        &category_partition(&tagged, &labels, &lexicon)?,
        create(&a.out.join("partition.csv"))?,
    )?;
    write_class_counts_csv(
        &category_class_counts(&tagged, &labels, &lexicon)?,
        create(&a.out.join("class_counts.csv"))?,
    )?;
    Ok(())
}

fn features(a: FeaturesArgs, seed: u64) -> anyhow::Result<()> {
    let lexicon = load_lexicon(&a.lexicon)?;
    let tweets = load_clean(&a.corpus)?;
    let s = &a.sources;
    let synthetic = s.synthetic_dim.map(|d| SyntheticVectors {
        sentence_dim: d,
        word_dim: d,
        seed,
    });
    let (sentence, mwe) = load_sources(
        s.mode,
        synthetic,
        s.sentence_vectors.as_deref(),
        s.word_vectors.as_deref(),
        s.contextual_vectors.as_deref(),
    )?;
    let limits = FeatureLimits {
        max_tokens: a.max_tokens,
        max_mwe_tokens: a.max_mwe_tokens,
    };
    let group = category_group(a.group);
    let prepared = prepare(&tweets, &lexicon, &group, s.mode, &sentence, mwe.as_ref(), limits)?;
    let records: Vec<FeatureRecord> = prepared
        .features
        .iter()
        .zip(&tweets)
        .map(|(f, t)| FeatureRecord::new(f, &group, t.surface_tokens.len()))
        .collect();
    write_jsonl(&a.out, &records)
}

fn train(a: TrainArgs, config: Option<&Path>, seed: Option<u64>) -> anyhow::Result<()> {
    let Some(path) = config else {
        bail!("train needs --config <experiment.json>");
    };
    let mut config = ExperimentConfig::read(path).with_context(|| path.display().to_string())?;
    if let Some(seed) = seed {
        config.base_seed = seed;
        config.split_seed = seed;
    }
    if let Some(out) = a.out {
        config.output_dir = out;
    }
    let resolved = config.resolve()?;
    if !resolved.dropped.is_empty() {
        eprintln!(
            "dropped {} train/dev tweets with fewer than two tokens",
            resolved.dropped.len()
        );
    }
    let result = run_experiment(
        &resolved.data,
        &resolved.sentence,
        resolved.mwe.as_ref(),
        &resolved.settings,
        resolved.synthetic,
    )?;
    write_experiment_outputs(&result, &resolved.settings, &resolved.output_dir)?;
    eprintln!(
        "best seed {} (dev macro-F1 {:.4}); test macro-F1 {:.4}, MWE subset {:.4}",
        result.best_seed(),
        result.runs[result.best_index].dev_macro_f1,
        result.report.macro_f1,
        result.subset_report.macro_f1
    );
    Ok(())
}

fn predict(a: PredictArgs) -> anyhow::Result<()> {
    let checkpoint = Checkpoint::read(open(&a.model)?).with_context(|| a.model.display().to_string())?;
    let spec: FeatureSpec = serde_json::from_value(checkpoint.meta.extra.clone())
        .context("checkpoint lacks its feature layout")?;
    let model = checkpoint.to_model()?;
    let lexicon = load_lexicon(&a.lexicon)?;
    let tweets = load_clean(&CorpusArgs {
        corpus: a.corpus,
        scheme: spec.scheme,
        lemmas: a.lemmas,
    })?;
    let (sentence, mwe) = load_sources(
        spec.mode,
        spec.synthetic,
        a.sentence_vectors.as_deref(),
        a.word_vectors.as_deref(),
        a.contextual_vectors.as_deref(),
    )?;
    let group = category_group(spec.group);
    let prepared = prepare(&tweets, &lexicon, &group, spec.mode, &sentence, mwe.as_ref(), spec.limits)?;
    let classes = predict_test(&model, &tweets, &prepared.features, spec.scheme)?;
    let records: Vec<Prediction> = tweets
        .iter()
        .zip(classes)
        .map(|(t, c)| Prediction {
            id: t.id.clone(),
            label: spec.scheme.class_name(c).to_string(),
            class: c,
        })
        .collect();
    write_jsonl(&a.out, &records)
}

fn read_predictions(path: &Path) -> anyhow::Result<HashMap<String, usize>> {
    let mut map = HashMap::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction = serde_json::from_str(&line)
            .with_context(|| format!("{} line {}", path.display(), i + 1))?;
        map.insert(p.id, p.class);
    }
    Ok(map)
}

fn aligned(gold: &[CleanTweet], pred: &HashMap<String, usize>, path: &Path) -> anyhow::Result<Vec<usize>> {
    gold.iter()
        .map(|t| {
            pred.get(&t.id)
                .copied()
                .with_context(|| format!("{}: no prediction for tweet {}", path.display(), t.id))
        })
        .collect()
}

fn evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let gold_args = CorpusArgs {
        corpus: a.gold,
        scheme: a.scheme,
        lemmas: a.lemmas,
    };
    let tweets = load_clean(&gold_args)?;
    let pred = aligned(&tweets, &read_predictions(&a.pred)?, &a.pred)?;
    let gold: Vec<usize> = tweets.iter().map(|t| t.label).collect();
    match &a.lexicon {
        Some(path) => {
            let lexicon = load_lexicon(path)?;
            let tagged = tag_corpus(&tweets, &lexicon, &category_group(a.group));
            let (full, subset) = mwehsd::pipeline::evaluate_reports(&gold, &pred, &tagged, a.scheme)?;
            write_json(&a.out, &full)?;
            let stem = a.out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
            write_json(&a.out.with_file_name(format!("{stem}_subset.json")), &subset)
        }
        None => {
            let report = EvalReport::evaluate(&gold, &pred, a.scheme.n_classes(), "full")?
                .with_class_names(a.scheme.class_names());
            write_json(&a.out, &report)
        }
    }
}

fn significance(a: SignificanceArgs) -> anyhow::Result<()> {
    let tweets = load_clean(&CorpusArgs {
        corpus: a.gold,
        scheme: a.scheme,
        lemmas: None,
    })?;
    let pa = aligned(&tweets, &read_predictions(&a.pred_a)?, &a.pred_a)?;
    let pb = aligned(&tweets, &read_predictions(&a.pred_b)?, &a.pred_b)?;
    let correct = |p: &[usize]| -> Vec<bool> { tweets.iter().zip(p).map(|(t, &c)| t.label == c).collect() };
    let result = matched_pair_test(&correct(&pa), &correct(&pb), a.alpha)?;
    match &a.out {
        Some(path) => write_json(path, &result),
        None => {
            println!("{}", serde_json::to_string_pretty(&result)?);
            Ok(())
        }
    }
}
