use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser as ClapParser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use lowres_core::augment::{AllowedRelations, AugmentConfig, Augmenter};
use lowres_core::conllu::{read_treebank, write_treebank, ReadOptions};
use lowres_core::evaluation::evaluate_sentences;
use lowres_core::experiments::{run_experiment, ExperimentConfig, ModeName, RunOptions};
use lowres_core::neural::{EncoderConfig, TrainConfig};
use lowres_core::parser::{train_parser, Parser, TagMode};
use lowres_core::synthetic::{Grammar, SynthConfig};
use lowres_core::tagger::{capture_bins, train_tagger, BinSchedule, CaptureOptions, Tagger, DEFAULT_WINDOW};
use lowres_core::treebank_ops::{combine_and_split, compute_stats, sample_subset, Fraction, SplitSpec};
use lowres_core::Treebank;

#[derive(ClapParser)]
#[command(name = "lowres", version, about = "Low-resource dependency parsing toolkit")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Combine train and dev files and split them again.
    Split {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long, default_value = "0.8")]
        fraction: Fraction,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep document order instead of shuffling before the split.
        #[arg(long)]
        no_shuffle: bool,
        #[arg(long)]
        out_train: PathBuf,
        #[arg(long)]
        out_dev: PathBuf,
    },
    /// Sample sentences without replacement.
    Sample {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print sentence and token counts.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Generate trees by subtree swapping.
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// One base relation per line, replacing the default set.
        #[arg(long)]
        relations_file: Option<PathBuf>,
        /// Let the second swap take its donor from either other tree.
        #[arg(long)]
        any_donor: bool,
        /// Match root relations on their base labels.
        #[arg(long)]
        base_label_match: bool,
    },
    /// Train or apply UPOS taggers.
    Tagger {
        #[command(subcommand)]
        command: TaggerCommand,
    },
    /// Train or apply dependency parsers.
    Parser {
        #[command(subcommand)]
        command: ParserCommand,
    },
    /// Score a system file against gold annotations.
    Eval {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        json: bool,
        /// Also print per-sentence counts.
        #[arg(long)]
        per_sentence: bool,
    },
    /// Experiment grids.
    Exp {
        #[command(subcommand)]
        command: ExpCommand,
    },
    /// Write a treebank drawn from a seeded toy grammar.
    Synth {
        #[arg(long, default_value_t = 0)]
        language: u64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "synth")]
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Full,
    Tiny,
}

/// Network and optimizer settings shared by training commands.
#[derive(Args)]
struct ModelArgs {
    /// TOML file with `[encoder]`, `[train]` and `[capture]` tables.
    #[arg(long)]
    model_config: Option<PathBuf>,
    /// Base settings before the model config is applied.
    #[arg(long, value_enum, default_value = "full")]
    preset: Preset,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    encoder: Option<toml::Table>,
    train: Option<TrainConfig>,
    capture: Option<CaptureOptions>,
}

struct Settings {
    encoder: EncoderConfig,
    train: TrainConfig,
    capture: CaptureOptions,
}

impl ModelArgs {
    fn settings(&self) -> Result<Settings> {
        let mut encoder = match self.preset {
            Preset::Full => EncoderConfig::default(),
            Preset::Tiny => EncoderConfig::tiny(),
        };
        let mut file = ModelFile::default();
        if let Some(p) = &self.model_config {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            file = toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        }
        if let Some(overrides) = file.encoder {
            // Fields missing from the file keep the preset's values.
            let mut merged = toml::Table::try_from(&encoder)?;
            merged.extend(overrides);
            encoder = merged.try_into().context("invalid [encoder] table")?;
        }
        encoder.seed = self.seed;
        let mut train = file.train.unwrap_or_default();
        if let Some(e) = self.epochs {
            train.max_epochs = e;
        }
        Ok(Settings {
            encoder,
            train,
            capture: file.capture.unwrap_or_default(),
        })
    }
}

#[derive(Subcommand)]
enum TaggerCommand {
    /// Train a tagger, or capture checkpoints at target accuracies.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        /// Comma-separated accuracy targets, e.g. 60,66,72,78,85,89.
        #[arg(long)]
        bins: Option<String>,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: f64,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Rewrite the UPOS column with predicted tags.
    Tag {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ParserCommand {
    /// Train a parser; the best dev-LAS parameters are saved.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long, default_value = "none")]
        mode: String,
        /// Tagger checkpoint or tagger manifest for predicted tags.
        #[arg(long)]
        tagger_manifest: Option<PathBuf>,
        /// Bin of the manifest to use; defaults to the best tagger.
        #[arg(long)]
        tagger_bin: Option<f64>,
        #[arg(long, default_value_t = lowres_core::parser::DEFAULT_AUX_WEIGHT)]
        aux_weight: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Write predicted HEAD and DEPREL (and UPOS in multi mode).
    Parse {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// In pred mode, parse the input's UPOS column as is instead of
        /// retagging with the parser's tagger.
        #[arg(long)]
        keep_tags: bool,
    },
}

#[derive(Subcommand)]
enum ExpCommand {
    /// Run the experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Reuse finished cells from an earlier run.
        #[arg(long)]
        resume: bool,
    },
}

fn read(path: &Path) -> Result<Treebank> {
    read_treebank(path, &ReadOptions::default()).with_context(|| format!("reading {}", path.display()))
}

fn read_unchecked(path: &Path) -> Result<Treebank> {
    let opts = ReadOptions {
        validate_trees: false,
        ..Default::default()
    };
    read_treebank(path, &opts).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, tb: &Treebank) -> Result<()> {
    write_treebank(path, tb).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize, Deserialize)]
struct TaggerManifest {
    train: PathBuf,
    dev: PathBuf,
    seed: u64,
    window: f64,
    /// Checkpoint of the best dev-accuracy tagger, when trained without bins.
    best: Option<ManifestEntry>,
    bins: Vec<ManifestEntry>,
    retries: usize,
    attempts: Vec<lowres_core::tagger::AttemptLog>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    target: Option<f64>,
    achieved: Option<f64>,
    checkpoint: Option<PathBuf>,
    diagnostic: Option<String>,
}

fn tagger_train(
    train: &Path,
    dev: &Path,
    bins: Option<&str>,
    window: f64,
    out_dir: &Path,
    model: &ModelArgs,
) -> Result<()> {
    let s = model.settings()?;
    let (tr, dv) = (read(train)?, read(dev)?);
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut manifest = TaggerManifest {
        train: train.to_path_buf(),
        dev: dev.to_path_buf(),
        seed: model.seed,
        window,
        best: None,
        bins: Vec::new(),
        retries: 0,
        attempts: Vec::new(),
    };
    match bins {
        None => {
            let (tagger, _) = train_tagger(&tr, &dv, &s.encoder, &s.train)?;
            tagger.save(&out_dir.join("best.ckpt"))?;
            println!("best\t{:.2}", tagger.meta.dev_accuracy.unwrap_or(f64::NAN));
            manifest.best = Some(ManifestEntry {
                target: None,
                achieved: tagger.meta.dev_accuracy,
                checkpoint: Some("best.ckpt".into()),
                diagnostic: None,
            });
        }
        Some(b) => {
            let schedule = BinSchedule::new(b.parse::<BinSchedule>()?.targets().to_vec(), window)?;
            let capture = capture_bins(&tr, &dv, &s.encoder, &s.train, &schedule, &s.capture)?;
            for bin in &capture.bins {
                let mut entry = ManifestEntry {
                    target: Some(bin.target),
                    achieved: bin.achieved,
                    checkpoint: None,
                    diagnostic: bin.diagnostic.clone(),
                };
                if let Some(t) = bin.tagger(&capture.base) {
                    let name = format!("bin{}.ckpt", bin.target);
                    t.save(&out_dir.join(&name))?;
                    entry.checkpoint = Some(name.into());
                }
                match bin.achieved {
                    Some(a) => println!("bin{}\t{:.4}", bin.target, a),
                    None => println!("bin{}\tmissing\t{}", bin.target, bin.diagnostic.as_deref().unwrap_or("")),
                }
                manifest.bins.push(entry);
            }
            manifest.retries = capture.retries();
            manifest.attempts = capture.attempts;
        }
    }
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// A tagger checkpoint, or the chosen entry of a tagger manifest.
fn resolve_tagger(path: &Path, bin: Option<f64>) -> Result<(Tagger, PathBuf)> {
    if let Ok(t) = Tagger::load(path) {
        if bin.is_some() {
            bail!("--tagger-bin applies to manifests, but {} is a checkpoint", path.display());
        }
        return Ok((t, path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let m: TaggerManifest =
        serde_json::from_str(&text).with_context(|| format!("{} is neither a tagger checkpoint nor a manifest", path.display()))?;
    let entry = match bin {
        Some(b) => m.bins.iter().find(|e| e.target == Some(b)).with_context(|| format!("no bin {} in manifest", b))?,
        None => m.best.as_ref().context("manifest has no best tagger; pass --tagger-bin")?,
    };
    let rel = entry.checkpoint.as_ref().context("the selected bin was not captured")?;
    let ckpt = path.parent().unwrap_or(Path::new("")).join(rel);
    Ok((Tagger::load(&ckpt)?, ckpt))
}

#[allow(clippy::too_many_arguments)]
fn parser_train(
    train: &Path,
    dev: &Path,
    mode: &str,
    tagger_manifest: Option<&Path>,
    tagger_bin: Option<f64>,
    aux_weight: f64,
    out: &Path,
    model: &ModelArgs,
) -> Result<()> {
    let s = model.settings()?;
    let name: ModeName = mode.parse()?;
    let (mut tr, mut dv) = (read(train)?, read(dev)?);
    let mode = match name {
        ModeName::Pred => {
            let manifest = tagger_manifest.context("pred mode needs --tagger-manifest")?;
            let (tagger, ckpt) = resolve_tagger(manifest, tagger_bin)?;
            tr = tagger.retag(&tr)?;
            dv = tagger.retag(&dv)?;
            TagMode::Predicted {
                checkpoint: std::path::absolute(&ckpt)?,
            }
        }
        other => other.mode(Path::new(""), aux_weight),
    };
    let (parser, _) = train_parser(&tr, &dv, &mode, &s.encoder, &s.train)?;
    parser.save(out)?;
    println!("dev_las\t{:.2}", parser.dev_las.unwrap_or(f64::NAN));
    Ok(())
}

fn parser_parse(model: &Path, input: &Path, out: &Path, keep_tags: bool) -> Result<()> {
    let parser = Parser::load(model)?;
    let mut tb = read_unchecked(input)?;
    if let (TagMode::Predicted { checkpoint }, false) = (&parser.mode, keep_tags) {
        let tagger = Tagger::load(checkpoint)
            .with_context(|| format!("loading the parser's tagger {}; pass --keep-tags to skip retagging", checkpoint.display()))?;
        tb = tagger.retag(&tb)?;
    }
    write(out, &parser.parse_treebank(&tb)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Split {
            train,
            dev,
            fraction,
            seed,
            no_shuffle,
            out_train,
            out_dev,
        } => {
            let tr = read(&train)?;
            let dv = dev.as_deref().map(read).transpose()?;
            let spec = SplitSpec {
                train_fraction: fraction,
                seed,
                shuffle: !no_shuffle,
            };
            let (a, b) = combine_and_split(&tr, dv.as_ref(), &spec)?;
            write(&out_train, &a)?;
            write(&out_dev, &b)?;
            println!("train\t{}\t{}", a.len(), a.token_count());
            println!("dev\t{}\t{}", b.len(), b.token_count());
        }
        Command::Sample { input, n, seed, out } => write(&out, &sample_subset(&read(&input)?, n, seed)?)?,
        Command::Stats { input } => {
            let s = compute_stats(&read_unchecked(&input)?);
            println!("{}\t{}", s.sentence_count, s.token_count);
        }
        Command::Augment {
            input,
            n,
            seed,
            out,
            relations_file,
            any_donor,
            base_label_match,
        } => {
            let mut cfg = AugmentConfig {
                any_donor,
                base_label_match,
                ..Default::default()
            };
            if let Some(p) = relations_file {
                let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                cfg.relations = AllowedRelations::from_lines(&text);
            }
            let aug = Augmenter::new(cfg).augment_treebank(&read(&input)?, n, seed)?;
            for w in &aug.warnings {
                log::warn!("{}", w);
            }
            write(&out, &aug.treebank)?;
            println!("generated\t{}\tpool\t{}", aug.treebank.len(), aug.pool_size);
        }
        Command::Tagger { command } => match command {
            TaggerCommand::Train {
                train,
                dev,
                bins,
                window,
                out_dir,
                model,
            } => tagger_train(&train, &dev, bins.as_deref(), window, &out_dir, &model)?,
            TaggerCommand::Tag { model, input, out } => {
                let tagger = Tagger::load(&model)?;
                write(&out, &tagger.retag(&read_unchecked(&input)?)?)?;
            }
        },
        Command::Parser { command } => match command {
            ParserCommand::Train {
                train,
                dev,
                mode,
                tagger_manifest,
                tagger_bin,
                aux_weight,
                out,
                model,
            } => parser_train(
                &train,
                &dev,
                &mode,
                tagger_manifest.as_deref(),
                tagger_bin,
                aux_weight,
                &out,
                &model,
            )?,
            ParserCommand::Parse {
                model,
                input,
                out,
                keep_tags,
            } => parser_parse(&model, &input, &out, keep_tags)?,
        },
        Command::Eval {
            system,
            gold,
            json,
            per_sentence,
        } => {
            let (sys, gold) = (read_unchecked(&system)?, read(&gold)?);
            let report = evaluate_sentences(&sys.sentences, &gold.sentences, per_sentence)?;
            if json {
                let mut v = report.to_json();
                if let Some(ps) = &report.per_sentence {
                    v["sentences"] = serde_json::to_value(ps)?;
                }
                println!("{}", v);
            } else {
                println!("UAS\t{:.2}", report.uas);
                println!("LAS\t{:.2}", report.las);
                match report.upos {
                    Some(u) => println!("UPOS\t{:.2}", u),
                    None => println!("UPOS\t-"),
                }
                println!("tokens\t{}", report.tokens);
                for (i, s) in report.per_sentence.iter().flatten().enumerate() {
                    println!("sentence\t{}\t{}\t{}\t{}", i + 1, s.tokens, s.heads, s.labeled);
                }
            }
        }
        Command::Exp {
            command: ExpCommand::Run { config, jobs, resume },
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let outcome = run_experiment(&cfg, &RunOptions { jobs, resume })?;
            let ok = outcome.records.iter().filter(|r| r.is_ok()).count();
            println!("records\t{}\tok\t{}", outcome.records.len(), ok);
            for f in &outcome.files {
                println!("wrote\t{}", f.display());
            }
        }
        Command::Synth {
            language,
            n,
            seed,
            name,
            out,
        } => write(&out, &Grammar::new(language, &SynthConfig::default()).treebank(&name, n, seed))?,
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(cli) {
        eprintln!("error: {:#}", e);
        std::process::exit(1);
    }
}
