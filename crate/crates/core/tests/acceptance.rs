//! Acceptance criteria, one PASS/FAIL line each. Oracles are computed here,
//! independently of the library code under test.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mwehsd::featurize::tag_corpus;
use mwehsd::lexicon::{
    filter_categories_by_stats, CategoryCounts, CategoryGroup, GroupSelector,
    Lexicon, LexiconEntry, MweCategory, MWE5, VMWE5,
};
use mwehsd::metrics::{confusion_matrix, macro_f1, matched_pair_test, ConfusionMatrix};
use mwehsd::mwe_tagger::tag_sentence;
use mwehsd::pipeline::{run_experiment, write_experiment_outputs, EmbeddingMode, ExperimentConfig};
use mwehsd::tensornet::{grad_check, GradCheckTarget, Model, ModelConfig, ModelInput, Tensor};
use mwehsd::corpus_stats::{category_class_counts, category_partition, mwe_per_tweet_histogram};
use mwehsd::textprep::{load_corpus, preprocess_corpus, LemmaDictionary};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

// Category selection ------------------------------------------------------

fn category_selection() -> Outcome {
    use MweCategory::*;
    let printed: [(MweCategory, u64, u64, u64); 20] = [
        (Adjective, 9, 8, 255),
        (Adverb, 1, 5, 194),
        (Discourse, 12, 15, 401),
        (Nominal, 25, 36, 189),
        (AdpositionPhrase, 9, 36, 134),
        (InherentlyAdpositionalVerb, 11, 21, 447),
        (FullLightVerbConstruction, 9, 10, 36),
        (VerbalIdiom, 14, 24, 384),
        (FullVerbParticle, 11, 20, 387),
        (SemiVerbParticle, 6, 18, 153),
        (Auxiliary, 4, 0, 475),
        (CoordinatingConjunction, 1, 0, 8),
        (Determiner, 1, 2, 242),
        (InfinitiveMarker, 0, 0, 12),
        (Adposition, 3, 13, 573),
        (NonPossessivePronoun, 0, 3, 11),
        (SubordinatingConjunction, 0, 0, 28),
        (CauseLightVerbConstruction, 1, 0, 0),
        (Symbol, 0, 0, 0),
        (Interjection, 0, 0, 0),
    ];
    let table: BTreeMap<MweCategory, CategoryCounts> = printed
        .iter()
        .map(|&(c, h, n, b)| (c, CategoryCounts::new(h, n, b)))
        .collect();
    let start = Instant::now();
    let selected = filter_categories_by_stats(&table, 50, 0.97);
    let elapsed = start.elapsed();
    let expected: BTreeSet<MweCategory> = MWE5.iter().chain(VMWE5.iter()).copied().collect();
    ensure(expected.len() == 10, || "expected union is not 10 categories".into())?;
    ensure(selected == expected, || format!("selected {selected:?}"))?;
    within(elapsed, Duration::from_millis(1))?;
    Ok(format!("10 categories in {elapsed:?}"))
}

// Tagger oracle -----------------------------------------------------------

/// All in-order position subsets matching an entry with at most one
/// skipped token, then the same priority-ordered greedy claim.
fn brute_force_tags(
    lemmas: &[String],
    entries: &[LexiconEntry],
    active: &BTreeSet<MweCategory>,
) -> (Vec<MweCategory>, Vec<(usize, Vec<usize>)>) {
    let n = lemmas.len();
    let mut candidates: Vec<(usize, Vec<usize>, usize)> = Vec::new();
    for (id, entry) in entries.iter().enumerate() {
        let k = entry.lemmas.len();
        if k > n {
            continue;
        }
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let positions: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
            if positions.iter().zip(&entry.lemmas).any(|(&p, l)| &lemmas[p] != l) {
                continue;
            }
            let gaps = positions[k - 1] - positions[0] + 1 - k;
            if gaps <= 1 {
                candidates.push((id, positions, gaps));
            }
        }
    }
    candidates.sort_by(|a, b| {
        let key = |c: &(usize, Vec<usize>, usize)| {
            (std::cmp::Reverse(entries[c.0].lemmas.len()), c.2, c.1[0], c.0, c.1.clone())
        };
        key(a).cmp(&key(b))
    });
    let mut claimed = vec![false; n];
    let mut chosen = Vec::new();
    for (id, positions, _) in candidates {
        if positions.iter().any(|&p| claimed[p]) {
            continue;
        }
        for &p in &positions {
            claimed[p] = true;
        }
        chosen.push((id, positions));
    }
    chosen.retain(|(id, _)| active.contains(&entries[*id].category));
    chosen.sort_by_key(|(_, p)| p[0]);
    let mut tags = vec![MweCategory::NoMwe; n];
    for (id, positions) in &chosen {
        for &p in positions {
            tags[p] = entries[*id].category;
        }
    }
    (tags, chosen)
}

fn tagger_oracle() -> Outcome {
    let alphabet: Vec<String> = (0..12).map(|i| format!("l{i}")).collect();
    let start = Instant::now();
    let mut total_matches = 0;
    for case in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        // Mostly a narrow slice of the alphabet, so that repeats and overlaps are common.
        let width = if case % 4 == 0 { 12 } else { rng.gen_range(2..=5) };
        let pick = |rng: &mut ChaCha8Rng| alphabet[rng.gen_range(0..width)].clone();
        let mut seen = BTreeSet::new();
        let mut entries = Vec::new();
        for _ in 0..rng.gen_range(1..=10) {
            let len = rng.gen_range(2..=4);
            let lemmas: Vec<String> = (0..len).map(|_| pick(&mut rng)).collect();
            if !seen.insert(lemmas.clone()) {
                continue;
            }
            let category = MweCategory::LEXICAL[rng.gen_range(0..20)];
            entries.push(LexiconEntry::new(&lemmas, category).map_err(|e| e.to_string())?);
        }
        let sentence: Vec<String> = (0..rng.gen_range(0..=10)).map(|_| pick(&mut rng)).collect();
        let active: BTreeSet<MweCategory> = MweCategory::LEXICAL
            .iter()
            .copied()
            .filter(|_| rng.gen_bool(0.7))
            .collect();
        let lexicon = Lexicon::from_entries(entries.clone()).map_err(|e| e.to_string())?;
        let group = CategoryGroup::custom(GroupSelector::MweAll, active.iter().copied());
        let got = tag_sentence(&sentence, &lexicon, &group);
        let (tags, chosen) = brute_force_tags(&sentence, &entries, &active);
        let got_matches: Vec<(usize, Vec<usize>)> = got
            .matches
            .iter()
            .map(|m| (m.entry_id, m.token_positions.clone()))
            .collect();
        ensure(got.categories() == tags && got_matches == chosen, || {
            format!("case {case}: sentence {sentence:?}: got {got_matches:?}, oracle {chosen:?}")
        })?;
        total_matches += chosen.len();
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(10))?;
    Ok(format!("1000/1000 cases, {total_matches} matches, {elapsed:?}"))
}

// Gradient verification ---------------------------------------------------

fn gradient_verification() -> Outcome {
    let mut composite = ModelConfig::new(8, 4, 3, 4, 3, 0);
    composite.conv_filters = vec![4, 3, 2];
    composite.lstm_units = 5;
    composite.dense_units = 6;
    let targets = [
        ("conv1d", GradCheckTarget::Conv1d {
            len: 7,
            in_channels: 3,
            out_channels: 4,
            kernel: 3,
        }),
        ("lstm", GradCheckTarget::Lstm {
            steps: 5,
            input_dim: 3,
            hidden: 4,
        }),
        ("dense", GradCheckTarget::Dense { inputs: 6, outputs: 5 }),
        ("composite", GradCheckTarget::Composite {
            config: composite,
            mwe_len: 3,
        }),
    ];
    let start = Instant::now();
    let mut summary = Vec::new();
    for (name, target) in &targets {
        let mut worst: f64 = 0.0;
        for trial in 0..20 {
            // Composite gradients go down to 1e-9; below this step, loss roundoff dominates them.
            let err = grad_check(target, 1e-4, trial).map_err(|e| format!("{name}: {e}"))?;
            ensure(err < 1e-4, || format!("{name} trial {trial}: relative error {err:e}"))?;
            worst = worst.max(err);
        }
        summary.push(format!("{name} {worst:.2e}"));
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(60))?;
    Ok(format!("max relative error {}; {elapsed:?}", summary.join(", ")))
}

// Metric oracles ----------------------------------------------------------

fn binomial_u128(n: u128, k: u128) -> u128 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn metric_oracles() -> Outcome {
    let cm = ConfusionMatrix::from_counts(vec![vec![1, 1], vec![0, 1]]).map_err(|e| e.to_string())?;
    // F1 of class 0: P = 1, R = 1/2 -> 2/3; class 1: P = 1/2, R = 1 -> 2/3.
    let f = macro_f1(&cm);
    ensure((f - 2.0 / 3.0).abs() <= 1e-12, || format!("macro-F1 {f}"))?;
    let identity = confusion_matrix(&[0, 1, 1, 0, 1], &[0, 1, 1, 0, 1], 2).map_err(|e| e.to_string())?;
    ensure(macro_f1(&identity) == 1.0, || "identity macro-F1 != 1".into())?;

    let (n01, n10) = (15usize, 5usize);
    let a: Vec<bool> = (0..40).map(|i| i >= n01 && i < n01 + n10 || i >= 30).collect();
    let b: Vec<bool> = (0..40).map(|i| i < n01 || i >= 30).collect();
    let result = matched_pair_test(&a, &b, 0.05).map_err(|e| e.to_string())?;
    ensure(result.n01 == 15 && result.n10 == 5, || format!("{result:?}"))?;
    let n = 20u128;
    let tail: u128 = (15..=n).map(|k| binomial_u128(n, k)).sum();
    let exact = 2.0 * tail as f64 / (1u128 << n) as f64;
    ensure((result.p_value - exact).abs() < 1e-6, || {
        format!("p {} vs exact {exact}", result.p_value)
    })?;
    Ok(format!("macro-F1 {f:.12}, p {:.6} (exact {exact:.6})", result.p_value))
}

// Zeroed-branch invariance -------------------------------------------------

fn zeroed_branch_invariance() -> Outcome {
    let mut config = ModelConfig::new(16, 11, 8, 12, 2, 3);
    config.lstm_units = 24;
    config.dense_units = 32;
    let mut model = Model::build(config).map_err(|e| e.to_string())?;
    model.zero_mwe_branches();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let sentence: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut reference: Option<Vec<f64>> = None;
    for i in 0..100 {
        let mut onehot = Tensor::zeros(&[16, 11]);
        for r in 0..16 {
            let c = rng.gen_range(0..11);
            onehot.data_mut()[r * 11 + c] = 1.0;
        }
        let len = rng.gen_range(0..=6);
        let mut mwe = Tensor::zeros(&[len, 8]);
        for x in mwe.data_mut() {
            *x = rng.gen_range(-2.0..2.0);
        }
        let logits = model
            .logits(&ModelInput {
                onehot: &onehot,
                mwe: &mwe,
                sentence: &sentence,
            })
            .map_err(|e| e.to_string())?;
        match &reference {
            None => reference = Some(logits),
            Some(r) => {
                let same = r.iter().zip(&logits).all(|(a, b)| a.to_bits() == b.to_bits());
                ensure(same, || format!("input {i}: {logits:?} != {r:?}"))?;
            }
        }
    }
    Ok("100 inputs, logits bit-identical".into())
}

// End-to-end synthetic experiment -----------------------------------------

/// Plain logistic regression on per-category MWE counts.
fn logistic_oracle_accuracy() -> Result<f64, String> {
    let dir = fixture_dir();
    let lexicon = Lexicon::load(std::io::BufReader::new(
        std::fs::File::open(dir.join("lexicon.tsv")).map_err(|e| e.to_string())?,
    ))
    .map_err(|e| e.to_string())?;
    let tweets = load_fixture()?;
    let every = CategoryGroup::custom(GroupSelector::MweAll, MweCategory::LEXICAL);
    let tagged = tag_corpus(&tweets, &lexicon, &every);
    let xs: Vec<Vec<f64>> = tagged
        .iter()
        .map(|t| {
            let mut x = vec![0.0; 21];
            for m in &t.matches {
                let c = lexicon.entry(m.entry_id).category;
                x[MweCategory::LEXICAL.iter().position(|&k| k == c).unwrap()] += 1.0;
            }
            x[20] = 1.0;
            x
        })
        .collect();
    let ys: Vec<f64> = tweets.iter().map(|t| t.label as f64).collect();
    let mut w = vec![0.0; 21];
    for _ in 0..2000 {
        let mut grad = [0.0; 21];
        for (x, y) in xs.iter().zip(&ys) {
            let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            let p = 1.0 / (1.0 + (-z).exp());
            for j in 0..21 {
                grad[j] += (p - y) * x[j];
            }
        }
        for j in 0..21 {
            w[j] -= 0.5 * grad[j] / xs.len() as f64;
        }
    }
    let correct = xs
        .iter()
        .zip(&ys)
        .filter(|(x, &y)| {
            let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            (z > 0.0) == (y == 1.0)
        })
        .count();
    Ok(correct as f64 / xs.len() as f64)
}

fn load_fixture() -> Result<Vec<mwehsd::textprep::CleanTweet>, String> {
    let file = std::fs::File::open(fixture_dir().join("corpus.jsonl")).map_err(|e| e.to_string())?;
    let (raw, _) = load_corpus(std::io::BufReader::new(file), mwehsd::textprep::LabelScheme::Hateval)
        .map_err(|e| e.to_string())?;
    Ok(preprocess_corpus(&raw, &LemmaDictionary::english_irregulars()))
}

fn fixture_config(mode: EmbeddingMode) -> Result<ExperimentConfig, String> {
    let mut config =
        ExperimentConfig::read(&fixture_dir().join("experiment.json")).map_err(|e| e.to_string())?;
    config.mode = mode;
    Ok(config)
}

fn end_to_end() -> Outcome {
    let accuracy = logistic_oracle_accuracy()?;
    ensure(accuracy == 1.0, || format!("logistic oracle accuracy {accuracy}"))?;

    let run = |mode| -> Result<_, String> {
        let config = fixture_config(mode)?;
        let r = config.resolve().map_err(|e| e.to_string())?;
        ensure(r.settings.n_seeds == 9, || "fixture config must use 9 seeds".into())?;
        let start = Instant::now();
        let result = run_experiment(&r.data, &r.sentence, r.mwe.as_ref(), &r.settings, r.synthetic)
            .map_err(|e| e.to_string())?;
        Ok((result, start.elapsed()))
    };
    let (three, elapsed) = run(EmbeddingMode::Static)?;
    within(elapsed, Duration::from_secs(300))?;
    let (again, _) = run(EmbeddingMode::Static)?;
    ensure(three == again, || "two identical runs differ".into())?;
    let (baseline, _) = run(EmbeddingMode::SentenceOnly)?;
    let margin = three.report.macro_f1 - baseline.report.macro_f1;
    ensure(margin >= 0.10, || {
        format!(
            "three-branch {:.4} vs sentence-only {:.4}",
            three.report.macro_f1, baseline.report.macro_f1
        )
    })?;
    Ok(format!(
        "three-branch {:.4}, sentence-only {:.4}, seed {} selected, {elapsed:?}; oracle accuracy 1.0",
        three.report.macro_f1,
        baseline.report.macro_f1,
        three.best_seed()
    ))
}

// Report schema ------------------------------------------------------------

fn report_schema() -> Outcome {
    let config = fixture_config(EmbeddingMode::Static)?;
    let r = config.resolve().map_err(|e| e.to_string())?;
    let result = run_experiment(&r.data, &r.sentence, r.mwe.as_ref(), &r.settings, r.synthetic)
        .map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_experiment_outputs(&result, &r.settings, dir.path()).map_err(|e| e.to_string())?;
    let read = |name: &str| -> Result<serde_json::Value, String> {
        let text = std::fs::read_to_string(dir.path().join(name)).map_err(|e| format!("{name}: {e}"))?;
        serde_json::from_str(&text).map_err(|e| format!("{name}: {e}"))
    };
    for (name, variant) in [("report.json", "full"), ("report_subset.json", "mwe_subset")] {
        let v = read(name)?;
        let obj = v.as_object().ok_or(format!("{name} is not an object"))?;
        let keys: BTreeSet<&str> = obj.keys().map(String::as_str).collect();
        let required = [
            "confusion_counts",
            "confusion_percent",
            "per_class_f1",
            "macro_f1",
            "n",
            "subset_variant",
        ];
        for k in required {
            ensure(keys.contains(k), || format!("{name} lacks {k}"))?;
        }
        ensure(v["subset_variant"] == variant, || format!("{name} variant {}", v["subset_variant"]))?;
        let counts = v["confusion_counts"].as_array().ok_or("counts")?;
        let percent = v["confusion_percent"].as_array().ok_or("percent")?;
        ensure(counts.len() == 2 && percent.len() == 2, || format!("{name} not 2x2"))?;
        ensure(v["per_class_f1"].as_array().map(Vec::len) == Some(2), || format!("{name} per-class F1"))?;
        let n: u64 = counts
            .iter()
            .flat_map(|row| row.as_array().into_iter().flatten())
            .filter_map(|x| x.as_u64())
            .sum();
        ensure(Some(n) == v["n"].as_u64(), || format!("{name}: n does not match counts"))?;
        for row in percent {
            let s: f64 = row.as_array().ok_or("row")?.iter().filter_map(|x| x.as_f64()).sum();
            ensure(s == 0.0 || (s - 100.0).abs() < 1e-9, || format!("{name}: row sums to {s}"))?;
        }
    }
    for i in 0..9 {
        let h = read(&format!("history_{i}.json"))?;
        let epochs = h["epochs"].as_array().ok_or("epochs")?;
        ensure(
            !epochs.is_empty() && epochs.iter().all(|e| e["loss"].is_f64() && e["val_macro_f1"].is_f64()),
            || format!("history_{i}.json malformed"),
        )?;
    }
    let model = read("model_best.json")?;
    ensure(
        model["config"].is_object() && model["tensors"].is_array() && model["meta"]["seed"].is_u64(),
        || "model_best.json malformed".into(),
    )?;
    Ok(format!(
        "full n={}, mwe_subset n={}",
        result.report.n, result.subset_report.n
    ))
}

// Stats determinism --------------------------------------------------------

fn stats_determinism() -> Outcome {
    let lexicon = Lexicon::load(std::io::BufReader::new(
        std::fs::File::open(fixture_dir().join("lexicon.tsv")).map_err(|e| e.to_string())?,
    ))
    .map_err(|e| e.to_string())?;
    let tweets = load_fixture()?;
    let every = CategoryGroup::custom(GroupSelector::MweAll, MweCategory::LEXICAL);
    let tagged = tag_corpus(&tweets, &lexicon, &every);
    let labels: Vec<usize> = tweets.iter().map(|t| t.label).collect();

    // Tweet i carries labelling MWE i % 10 (0-4 hateful: two VerbalIdiom,
    // three FullVerbParticle; 5-9 non-hateful: two Discourse, one Adverb,
    // two Nominal) and "a lot" when i % 3 == 0: 100 tweets, 50 per class.
    let hist = mwe_per_tweet_histogram(&tagged);
    ensure(hist.bins == BTreeMap::from([(1, 200), (2, 100)]), || format!("histogram {:?}", hist.bins))?;
    ensure(hist.total() == tweets.len(), || "histogram does not sum to corpus size".into())?;

    use MweCategory::*;
    let expected: BTreeMap<MweCategory, (u64, u64, u64)> = BTreeMap::from([
        (VerbalIdiom, (60, 0, 0)),
        (FullVerbParticle, (90, 0, 0)),
        (Discourse, (0, 60, 0)),
        (Adverb, (0, 30, 0)),
        (Nominal, (0, 60, 0)),
        (Determiner, (0, 0, 100)),
    ]);
    let partition = category_partition(&tagged, &labels, &lexicon).map_err(|e| e.to_string())?;
    let classes = category_class_counts(&tagged, &labels, &lexicon).map_err(|e| e.to_string())?;
    ensure(partition.len() == 20, || "partition must list every category".into())?;
    for (category, counts) in &partition {
        let (h, n, b) = expected.get(category).copied().unwrap_or((0, 0, 0));
        ensure(*counts == CategoryCounts::new(h, n, b), || format!("{category}: {counts:?}"))?;
        let c = classes[category];
        ensure(
            counts.hateful_only + counts.nonhateful_only + counts.both == c.hateful + c.nonhateful,
            || format!("{category}: partition does not sum to total"),
        )?;
    }
    let again = category_partition(&tagged, &labels, &lexicon).map_err(|e| e.to_string())?;
    ensure(again == partition, || "partition not deterministic".into())?;
    Ok("histogram {1: 200, 2: 100}; partition matches hand counts".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("category selection", category_selection),
        ("tagger oracle equivalence", tagger_oracle),
        ("gradient verification", gradient_verification),
        ("metric oracles", metric_oracles),
        ("zeroed-branch invariance", zeroed_branch_invariance),
        ("end-to-end synthetic experiment", end_to_end),
        ("report schema", report_schema),
        ("stats determinism", stats_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
