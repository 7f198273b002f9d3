use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use semfeat::dictionary::{self, load_all};
use semfeat::features::export::FeatureTable;
use semfeat::features::{DeltaKind, DictionarySet, DEFAULT_DIVIDE_EXPONENT};
use semfeat::ingest::{generate_synthetic, split_corpus, Corpus, Split, SyntheticSpec};
use semfeat::pipeline::{
    build_dictionaries, cross_validate_features, featurize_split, load_corpus, run_ablation,
    run_pipeline, write_features, write_json, write_trace, AblationAxis, AblationGrid,
    AblationValue, ConfigOverrides, CorpusSource, PipelineConfig, TrainedModel,
};

#[derive(Parser)]
#[command(
    name = "semfeat",
    version,
    about = "Semantic scene features from object-tag corpora"
)]
struct Cli {
    /// Flat TOML file with pipeline settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (overrides SEMFEAT_WORKERS).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic tag corpus as JSONL.
    GenSynthetic {
        #[command(flatten)]
        synth: SyntheticArgs,
        /// Output file; standard output when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Build per-category dictionaries from the training images.
    BuildDict {
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Re-split the corpus even if it already carries a split.
        #[arg(long)]
        resplit: bool,
    },
    /// Compute feature vectors for the train and test images.
    Featurize {
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        resplit: bool,
    },
    /// Fit normalization and a one-vs-one SVM on a feature file.
    Train {
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Training feature file (CSV or svmlight).
        #[arg(long)]
        features: PathBuf,
        /// Model output; defaults to <out-dir>/model.json.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Evaluate a model on a feature file, or cross-validate the file.
    Eval {
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        features: PathBuf,
        /// Trained model; without it the file is cross-validated.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Report output; standard output when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Split, build dictionaries, featurize, train and evaluate.
    Run {
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Run an ablation grid and print the accuracy table.
    Ablate {
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        axis: AblationAxis,
        /// Comma-separated axis values; built-in presets when omitted.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        /// Generate the corpus instead of reading --corpus. `{slices}` in
        /// --corpus is replaced per cell.
        #[arg(long)]
        synthetic: bool,
        #[command(flatten)]
        synth: SyntheticArgs,
        /// Seed for the synthetic generator.
        #[arg(long, default_value_t = 0)]
        corpus_seed: u64,
        /// CSV output; defaults to <out-dir>/ablation_<axis>.csv.
        #[arg(long)]
        table: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct SyntheticArgs {
    #[arg(long, default_value_t = 5)]
    categories: usize,
    #[arg(long, default_value_t = 40)]
    images_per_category: usize,
    /// Sub-images per image (9, 16 or 25).
    #[arg(long = "synthetic-slices", default_value_t = 9)]
    synthetic_slices: usize,
    #[arg(long, default_value_t = 0.8)]
    q: f64,
    #[arg(long, default_value_t = 24)]
    signature_size: usize,
    /// Signature labels available to one image.
    #[arg(long, default_value_t = 10)]
    theme_width: usize,
    #[arg(long, default_value_t = 80)]
    noise_size: usize,
}

impl SyntheticArgs {
    fn spec(&self) -> SyntheticSpec {
        let mut spec = SyntheticSpec::disjoint_with(
            self.categories,
            self.images_per_category,
            self.synthetic_slices,
            self.q,
            self.signature_size,
            self.noise_size,
        );
        spec.theme_width = self.theme_width;
        spec
    }
}

#[derive(Args, Clone, Default)]
struct PipelineArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    dict_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    slices: Option<usize>,
    #[arg(long)]
    k_tags: Option<usize>,
    #[arg(long)]
    max_images: Option<usize>,
    #[arg(long)]
    count_both_directions: bool,
    #[arg(long)]
    within_subimage: bool,
    #[arg(long)]
    k_cand: Option<usize>,
    #[arg(long)]
    s_sem: Option<usize>,
    /// Comma-separated subset of p1,p2,p3,p4.
    #[arg(long)]
    propositions: Option<String>,
    /// normal, avg, normalized, multi, root or divide.
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    divide_k: Option<u32>,
    /// summed or per-object.
    #[arg(long)]
    layout: Option<String>,
    /// csv or svmlight.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Cross-validation folds; 0 disables.
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    /// JSONL dump of semantic objects per image and category.
    #[arg(long)]
    trace: Option<PathBuf>,
}

impl PipelineArgs {
    fn overrides(&self, seed: Option<u64>) -> ConfigOverrides {
        ConfigOverrides {
            corpus: self.corpus.clone(),
            dict_dir: self.dict_dir.clone(),
            out_dir: self.out_dir.clone(),
            slices: self.slices,
            k_tags: self.k_tags,
            max_images: self.max_images,
            count_both_directions: self.count_both_directions.then_some(true),
            within_subimage: self.within_subimage.then_some(true),
            k_cand: self.k_cand,
            s_sem: self.s_sem,
            propositions: self.propositions.clone(),
            delta: self.delta.clone(),
            divide_k: self.divide_k,
            layout: self.layout.clone(),
            format: self.format.clone(),
            train_fraction: self.train_fraction,
            folds: self.folds,
            c: self.c,
            tol: self.tol,
            seed,
            trace: self.trace.clone(),
        }
    }

    fn resolve(&self, cli: &Cli) -> Result<PipelineConfig> {
        let base = match &cli.config {
            Some(path) => ConfigOverrides::from_file(path)?,
            None => ConfigOverrides::default(),
        };
        Ok(base.overlay(self.overrides(cli.seed)).resolve()?)
    }
}

fn configure_workers(flag: Option<usize>) -> Result<()> {
    let from_env = match std::env::var("SEMFEAT_WORKERS") {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .with_context(|| format!("SEMFEAT_WORKERS={v:?} is not a count"))?,
        ),
        Err(_) => None,
    };
    if let Some(n) = flag.or(from_env).filter(|&n| n > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn require_corpus(cfg: &PipelineConfig) -> Result<&Path> {
    match &cfg.corpus {
        Some(p) => Ok(p),
        None => bail!("--corpus is required"),
    }
}

/// Load the corpus and split it when asked or when no image has a split.
fn split_input(cfg: &PipelineConfig, resplit: bool) -> Result<Corpus> {
    let corpus = load_corpus(require_corpus(cfg)?, cfg)?;
    let unassigned = corpus.images.iter().all(|im| im.split == Split::Unassigned);
    if resplit || unassigned {
        log::info!("splitting corpus with seed {}", cfg.seed);
        Ok(split_corpus(&corpus, cfg.train_fraction, cfg.seed)?)
    } else {
        Ok(corpus)
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => io::stdout()
            .write_all(text.as_bytes())
            .context("writing to standard output"),
    }
}

fn read_table(path: &Path) -> Result<FeatureTable> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    FeatureTable::read(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenSynthetic { synth, out } => {
            let corpus = generate_synthetic(&synth.spec(), cli.seed.unwrap_or(0))?;
            match out {
                Some(p) => {
                    let file =
                        File::create(p).with_context(|| format!("creating {}", p.display()))?;
                    let mut w = BufWriter::new(file);
                    corpus.write_jsonl(&mut w)?;
                    w.flush()?;
                }
                None => corpus.write_jsonl(io::stdout().lock())?,
            }
        }
        Command::BuildDict { pipeline, resplit } => {
            let cfg = pipeline.resolve(cli)?;
            let corpus = split_input(&cfg, *resplit)?;
            let dicts = build_dictionaries(&corpus, &cfg)?;
            dictionary::save_all(&cfg.dict_dir, dicts.entries())?;
            log::info!(
                "wrote {} dictionaries to {}",
                dicts.len(),
                cfg.dict_dir.display()
            );
        }
        Command::Featurize { pipeline, resplit } => {
            let cfg = pipeline.resolve(cli)?;
            let corpus = split_input(&cfg, *resplit)?;
            let dicts = DictionarySet::new(
                &corpus.categories,
                load_all(&cfg.dict_dir, &corpus.categories)?,
            )?;
            let dir = cfg.out_dir.join("features");
            for (name, split) in [("train", Split::Train), ("test", Split::Test)] {
                let vectors = featurize_split(&corpus, &dicts, &cfg.features, split);
                let dim = vectors.first().map_or(0, |v| v.values.len());
                let table = FeatureTable::new(corpus.categories.clone(), dim, vectors);
                let path = dir.join(format!("{name}.{}", cfg.format.extension()));
                write_features(&path, &table, &cfg)?;
                log::info!(
                    "wrote {} vectors to {}",
                    table.vectors.len(),
                    path.display()
                );
            }
            if let Some(trace) = &cfg.trace {
                write_trace(trace, &corpus, &dicts, &cfg.features)?;
            }
        }
        Command::Train {
            pipeline,
            features,
            model,
        } => {
            let cfg = pipeline.resolve(cli)?;
            let table = read_table(features)?;
            let trained = TrainedModel::fit(&table.vectors, &table.categories, &cfg.smo)?;
            let path = model
                .clone()
                .unwrap_or_else(|| cfg.out_dir.join("model.json"));
            write_json(&path, &trained)?;
            log::info!("wrote model to {}", path.display());
        }
        Command::Eval {
            pipeline,
            features,
            model,
            report,
        } => {
            let cfg = pipeline.resolve(cli)?;
            let table = read_table(features)?;
            let result = match model {
                Some(path) => {
                    let text = fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    let trained: TrainedModel = serde_json::from_str(&text)
                        .with_context(|| format!("parsing {}", path.display()))?;
                    trained.evaluate(&table.vectors)?
                }
                None => {
                    if cfg.folds < 2 {
                        bail!("eval without --model needs --folds of at least 2");
                    }
                    cross_validate_features(
                        &table.vectors,
                        &table.categories,
                        cfg.folds,
                        cfg.seed,
                        &cfg.smo,
                    )?
                }
            };
            let mut text = serde_json::to_string_pretty(&result)?;
            text.push('\n');
            write_output(report.as_deref(), &text)?;
        }
        Command::Run { pipeline } => {
            let cfg = pipeline.resolve(cli)?;
            let report = run_pipeline(&cfg)?;
            println!(
                "test accuracy {:.4} ({}/{})",
                report.test.accuracy, report.test.correct, report.test.total
            );
            if let Some(cv) = &report.cross_validation {
                println!(
                    "{}-fold cross-validation accuracy {:.4}",
                    cfg.folds, cv.accuracy
                );
            }
            println!("outputs in {}", cfg.out_dir.display());
        }
        Command::Ablate {
            pipeline,
            axis,
            values,
            repeats,
            synthetic,
            synth,
            corpus_seed,
            table,
        } => {
            let cfg = pipeline.resolve(cli)?;
            let divide_k = match cfg.features.delta {
                DeltaKind::Divide { exponent } => exponent,
                _ => pipeline.divide_k.unwrap_or(DEFAULT_DIVIDE_EXPONENT),
            };
            let mut grid = AblationGrid::preset(*axis, *repeats, divide_k);
            if !values.is_empty() {
                grid.values = values
                    .iter()
                    .map(|v| AblationValue::parse(*axis, v, cfg.k_tags, divide_k))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(anyhow::Error::msg)?;
            }
            let source = if *synthetic {
                CorpusSource::Synthetic {
                    spec: synth.spec(),
                    seed: *corpus_seed,
                }
            } else {
                let path = require_corpus(&cfg)?;
                CorpusSource::Path(path.to_string_lossy().into_owned())
            };
            let result = run_ablation(&cfg, &grid, &source)?;
            print!("{}", result.to_text());
            let path = table
                .clone()
                .unwrap_or_else(|| cfg.out_dir.join(format!("ablation_{axis}.csv")));
            write_output(Some(&path), &result.to_csv())?;
            let failed = result.failures();
            if failed > 0 {
                log::warn!("{failed} cell(s) failed; see {}", path.display());
            }
        }
    }
    Ok(())
}

/// Join the error chain, skipping causes already quoted by their parent.
fn error_chain(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_workers(cli.workers).and_then(|()| run(&cli)) {
        eprintln!("error: {}", error_chain(&e));
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
