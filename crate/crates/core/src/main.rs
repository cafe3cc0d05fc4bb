//! Command-line front end: train embeddings, measure association tests,
//! modify bias either way, evaluate downstream gaps, or run the whole
//! experiment grid from one config.
//!
//! Exit codes: 0 on success, 2 when inputs fail validation, 1 on runtime
//! (I/O) failure.

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use embias::corpus::Corpus;
use embias::eval::{read_labeled_tsv, Classifier, ClassifierConfig, Group};
use embias::harness::{run_experiment, ExperimentConfig};
use embias::modify::{
    attract_repel, balance_corpus, build_constraint_pairs, expand_wordlist, tag_sentences,
    ArHyper, Direction, StereotypeLexicon,
};
use embias::sgns::{train_skipgram, train_skipgram_parallel, TrainConfig};
use embias::store::{EmbeddingStore, StoreFormat};
use embias::weat::{run_weat_suite, OovPolicy, WeatTest};
use embias::Error;

#[derive(Parser)]
#[command(
    name = "embias",
    version,
    about = "Measure, modify and cross-examine bias in word embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train skip-gram embeddings from a one-sentence-per-line corpus.
    TrainEmbeddings(TrainEmbeddingsArgs),
    /// Run association tests against a store and report effect sizes.
    Weat(WeatArgs),
    /// Expand seed words to their nearest neighbours in a store.
    ExpandWordlist(ExpandArgs),
    /// Sub-sample a corpus toward less (or more) stereotype imbalance.
    BalanceCorpus(BalanceArgs),
    /// Specialize a trained store with attract/repel constraints.
    AttractRepel(AttractRepelArgs),
    /// Train the frozen-embedding downstream classifier.
    TrainClassifier(TrainClassifierArgs),
    /// Evaluate per-group precision/recall gaps of a saved classifier.
    EvalGaps(EvalGapsArgs),
    /// Run the full baseline → modification grid → correlation study.
    RunExperiment(RunExperimentArgs),
}

fn parse_format(s: &str) -> Result<StoreFormat, String> {
    match s {
        "text" => Ok(StoreFormat::Text),
        "binary" => Ok(StoreFormat::Binary),
        other => Err(format!("unknown format {other:?} (expected text or binary)")),
    }
}

#[derive(Args)]
struct TrainEmbeddingsArgs {
    /// Corpus file, one sentence per line, tokens space-separated.
    #[arg(long)]
    corpus: PathBuf,
    /// Where to write the trained store.
    #[arg(long)]
    out: PathBuf,
    /// Optional training config file (TOML, trainer section fields).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "text", value_parser = parse_format)]
    format: StoreFormat,
    /// Worker threads; more than one trades determinism for speed.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    min_count: Option<u64>,
    /// Enable character n-gram composition.
    #[arg(long)]
    subword: bool,
}

#[derive(Args)]
struct WeatArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value = "text", value_parser = parse_format)]
    format: StoreFormat,
    /// Test files (TOML), one result row each.
    #[arg(long, required = true, num_args = 1..)]
    tests: Vec<PathBuf>,
    /// drop: skip missing words and report coverage; strict: fail the
    /// test instead.
    #[arg(long)]
    policy: Option<String>,
    /// Seed for sampled permutation p-values.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the result CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional defaults file (TOML: policy, seed); flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
struct WeatFileConfig {
    policy: Option<String>,
    seed: Option<u64>,
}

#[derive(Args)]
struct ExpandArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value = "text", value_parser = parse_format)]
    format: StoreFormat,
    /// File with one seed word per line.
    #[arg(long)]
    seeds: PathBuf,
    /// Unique nearest neighbours per seed.
    #[arg(long)]
    k: Option<usize>,
    /// Write the expanded list here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted for interface uniformity; expansion is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Optional defaults file (TOML: k); flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExpandFileConfig {
    k: Option<usize>,
}

#[derive(Args)]
struct BalanceArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    /// debias or overbias.
    #[arg(long)]
    direction: Option<String>,
    /// Fraction of the removable imbalance to remove.
    #[arg(long)]
    strength: Option<f64>,
    /// Removal cap as a fraction of the corpus, at most 0.05.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the balanced corpus.
    #[arg(long)]
    out: PathBuf,
    /// Also write the tagged corpus (TAG<TAB>sentence per line).
    #[arg(long)]
    tags_out: Option<PathBuf>,
    /// Optional defaults file (TOML: direction, strength, budget, seed);
    /// flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BalanceFileConfig {
    direction: Option<String>,
    strength: Option<f64>,
    budget: Option<f64>,
    seed: Option<u64>,
}

#[derive(Args)]
struct AttractRepelArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value = "text", value_parser = parse_format)]
    format: StoreFormat,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    direction: String,
    /// Optional hyperparameter file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Expand the lexicon to this many neighbours per term first.
    #[arg(long, default_value_t = 0)]
    expand: usize,
    /// Where to write the specialized store (same format as the input).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainClassifierArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value = "text", value_parser = parse_format)]
    format: StoreFormat,
    /// Labeled TSV: label<TAB>group<TAB>text.
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the model file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalGapsArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value = "text", value_parser = parse_format)]
    format: StoreFormat,
    #[arg(long)]
    model: PathBuf,
    /// Labeled TSV test set.
    #[arg(long)]
    test: PathBuf,
    /// Reference group for gap signs: a or b.
    #[arg(long)]
    reference: Option<String>,
    /// Write the metrics CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted for interface uniformity; evaluation is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Optional defaults file (TOML: reference); flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalGapsFileConfig {
    reference: Option<String>,
}

#[derive(Args)]
struct RunExperimentArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run grid conditions one at a time.
    #[arg(long)]
    sequential: bool,
}

fn load_toml_config<T: serde::de::DeserializeOwned + Default>(
    path: &Option<PathBuf>,
    what: &str,
) -> Result<T, Error> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| {
                Error::Harness(embias::harness::HarnessError::Parse(format!(
                    "{what}: {e}"
                )))
            })
        }
    }
}

fn validation_error(msg: String) -> Error {
    Error::Harness(embias::harness::HarnessError::InvalidConfig(msg))
}

fn write_or_print(out: &Option<PathBuf>, content: &str) -> Result<(), Error> {
    match out {
        Some(path) => {
            fs::write(path, content)?;
            Ok(())
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::TrainEmbeddings(args) => {
            let mut config: TrainConfig = load_toml_config(&args.config, "train config")?;
            if let Some(seed) = args.seed {
                config.seed = seed;
            }
            if let Some(dim) = args.dim {
                config.dim = dim;
            }
            if let Some(window) = args.window {
                config.window = window;
            }
            if let Some(epochs) = args.epochs {
                config.epochs = epochs;
            }
            if let Some(min_count) = args.min_count {
                config.min_count = min_count;
            }
            if args.subword {
                config.subword_mode = true;
            }
            let corpus = Corpus::read_pretokenized(&args.corpus)?;
            let store = if args.threads > 1 {
                eprintln!("note: {} threads, results are not reproducible", args.threads);
                train_skipgram_parallel(&corpus, &config, args.threads)?
            } else {
                train_skipgram(&corpus, &config)?
            };
            store.save(&args.out, args.format)?;
            eprintln!(
                "trained {} words x {} dims from {} sentences",
                store.len(),
                store.dim(),
                corpus.len()
            );
            Ok(())
        }
        Command::Weat(args) => {
            let file: WeatFileConfig = load_toml_config(&args.config, "weat config")?;
            let policy_name = args
                .policy
                .or(file.policy)
                .unwrap_or_else(|| "drop".to_string());
            let policy = match policy_name.as_str() {
                "drop" => OovPolicy::Drop,
                "strict" => OovPolicy::Strict,
                other => {
                    return Err(validation_error(format!("unknown policy {other:?}")));
                }
            };
            let seed = args.seed.or(file.seed).unwrap_or(0);
            let store = EmbeddingStore::load(&args.store, args.format)?;
            let tests = args
                .tests
                .iter()
                .map(|p| WeatTest::load(p))
                .collect::<Result<Vec<_>, _>>()?;
            let entries = run_weat_suite(&store, &tests, policy, seed);
            let mut csv = String::from(
                "test_name,statistic,effect_size,p_value,coverage_x,coverage_y,coverage_a,coverage_b,dropped,status\n",
            );
            for entry in &entries {
                match &entry.outcome {
                    Ok(r) => {
                        let p = r
                            .p_value
                            .map(|p| format!("{p:.6}"))
                            .unwrap_or_else(|| "NA".into());
                        csv.push_str(&format!(
                            "{},{:.6},{:.6},{},{:.4},{:.4},{:.4},{:.4},{},ok\n",
                            entry.test_name,
                            r.statistic,
                            r.effect_size,
                            p,
                            r.coverage.x,
                            r.coverage.y,
                            r.coverage.a,
                            r.coverage.b,
                            r.dropped_words.join(";"),
                        ));
                    }
                    Err(e) => {
                        csv.push_str(&format!(
                            "{},NA,NA,NA,NA,NA,NA,NA,,{}\n",
                            entry.test_name,
                            e.to_string().replace(',', ";")
                        ));
                    }
                }
            }
            write_or_print(&args.out, &csv)?;
            if entries.iter().any(|e| e.outcome.is_err()) {
                return Err(validation_error("one or more tests failed".into()));
            }
            Ok(())
        }
        Command::ExpandWordlist(args) => {
            let file: ExpandFileConfig = load_toml_config(&args.config, "expand config")?;
            let k = args.k.or(file.k).unwrap_or(100);
            let store = EmbeddingStore::load(&args.store, args.format)?;
            let text = fs::read_to_string(&args.seeds)?;
            let seeds: BTreeSet<String> = text
                .lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect();
            if seeds.is_empty() {
                return Err(validation_error("seed file contains no words".into()));
            }
            let expansion = expand_wordlist(&store, &seeds, k)?;
            for skipped in &expansion.skipped_seeds {
                eprintln!("warning: seed {skipped:?} not resolvable, skipped");
            }
            let mut out = String::new();
            for word in &expansion.words {
                out.push_str(word);
                out.push('\n');
            }
            write_or_print(&args.out, &out)?;
            Ok(())
        }
        Command::BalanceCorpus(args) => {
            let file: BalanceFileConfig = load_toml_config(&args.config, "balance config")?;
            let direction = args
                .direction
                .or(file.direction)
                .ok_or_else(|| validation_error("direction is required (flag or config)".into()))?;
            let direction = Direction::from_str(&direction).map_err(validation_error)?;
            let strength = args.strength.or(file.strength).unwrap_or(1.0);
            let budget = args.budget.or(file.budget).unwrap_or(0.05);
            let seed = args.seed.or(file.seed).unwrap_or(0);
            let corpus = Corpus::read_pretokenized(&args.corpus)?;
            let lexicon = StereotypeLexicon::load(&args.lexicon)?;
            let tagged = tag_sentences(&corpus, &lexicon)?;
            if let Some(tags_out) = &args.tags_out {
                tagged.write(tags_out)?;
            }
            let outcome = balance_corpus(&tagged, direction, budget, strength, seed)?;
            if let Some(warning) = &outcome.warning {
                eprintln!("warning: {warning}");
            }
            outcome.corpus.write(&args.out)?;
            eprintln!(
                "removed {} of {} sentences",
                outcome.removed_indices.len(),
                corpus.len()
            );
            Ok(())
        }
        Command::AttractRepel(args) => {
            let direction = Direction::from_str(&args.direction).map_err(validation_error)?;
            let store = EmbeddingStore::load(&args.store, args.format)?;
            let mut hyper: ArHyper = load_toml_config(&args.config, "attract-repel config")?;
            if let Some(seed) = args.seed {
                hyper.seed = seed;
            }
            let lexicon = StereotypeLexicon::load(&args.lexicon)?;
            let lexicon = lexicon.expanded(&store, args.expand)?;
            let constraints = build_constraint_pairs(&lexicon, direction)?;
            let outcome = attract_repel(&store, &constraints, &hyper)?;
            for (l, r) in &outcome.dropped_pairs {
                eprintln!("warning: dropped unresolvable pair ({l}, {r})");
            }
            outcome.store.save(&args.out, args.format)?;
            Ok(())
        }
        Command::TrainClassifier(args) => {
            let store = EmbeddingStore::load(&args.store, args.format)?;
            let mut config: ClassifierConfig = load_toml_config(&args.config, "classifier config")?;
            if let Some(seed) = args.seed {
                config.seed = seed;
            }
            let train_set = read_labeled_tsv(&args.train)?;
            let classifier = embias::eval::train_classifier(&store, &train_set, &config)?;
            classifier.save(&args.out)?;
            eprintln!("trained on {} examples", train_set.len());
            Ok(())
        }
        Command::EvalGaps(args) => {
            let file: EvalGapsFileConfig = load_toml_config(&args.config, "eval-gaps config")?;
            let reference = args
                .reference
                .or(file.reference)
                .unwrap_or_else(|| "a".to_string());
            let reference = match reference.as_str() {
                "a" => Group::A,
                "b" => Group::B,
                other => {
                    return Err(validation_error(format!(
                        "reference must be a or b, got {other:?}"
                    )));
                }
            };
            let store = EmbeddingStore::load(&args.store, args.format)?;
            let classifier = Classifier::load(&args.model)?;
            if classifier.dim() != store.dim() {
                return Err(validation_error(format!(
                    "model dimension {} does not match store dimension {}",
                    classifier.dim(),
                    store.dim()
                )));
            }
            let test_set = read_labeled_tsv(&args.test)?;
            let conf = embias::eval::grouped_confusion(&classifier, &store, &test_set);
            let gaps = embias::eval::compute_gaps(&conf, reference)?;
            let csv = format!(
                "metric,value\naccuracy,{:.6}\nf1,{:.6}\nprecision_a,{:.6}\nprecision_b,{:.6}\nrecall_a,{:.6}\nrecall_b,{:.6}\nprecision_gap,{:.6}\nrecall_gap,{:.6}\nreference,{}\n",
                conf.accuracy(),
                conf.f1(),
                gaps.precision_a,
                gaps.precision_b,
                gaps.recall_a,
                gaps.recall_b,
                gaps.precision_gap,
                gaps.recall_gap,
                gaps.reference,
            );
            write_or_print(&args.out, &csv)?;
            Ok(())
        }
        Command::RunExperiment(args) => {
            let mut config = ExperimentConfig::load(&args.config)?;
            if let Some(seed) = args.seed {
                config.master_seed = seed;
            }
            if let Some(out) = args.out {
                config.output_dir = out;
            }
            if args.sequential {
                config.parallel = false;
            }
            let table = run_experiment(&config)?;
            let failures = table.records.iter().filter(|r| r.error.is_some()).count();
            eprintln!(
                "wrote {} records ({} with failures) to {}",
                table.records.len(),
                failures,
                config.output_dir.display()
            );
            for record in table.records.iter().filter(|r| r.error.is_some()) {
                eprintln!(
                    "  {}: {}",
                    record.condition_id,
                    record.error.as_deref().unwrap_or("unknown")
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_runtime() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
