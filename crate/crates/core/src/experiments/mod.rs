//! Config-driven experiment grids.
//!
//! Every grid cell derives its seeds from the base seed and its own
//! coordinates, so cells run in any order, in parallel, and can be resumed
//! from their saved outputs. Test data is read only by the evaluation step
//! at the end of each cell.
//!
//! Output files:
//!
//! - `records.csv`: one row per evaluated model (no timings)
//! - `summary.csv`: means and standard errors over repetitions
//! - `table.csv` (real low-resource) or `grid.csv` (artificial, augmented)
//! - `timings.csv`: wall time per cell
//! - `manifest.json`: config, input hashes, seeds, bin capture logs
//! - `cells/`, `models/`: per-cell outputs and tagger checkpoints

pub mod config;
pub mod output;

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{ExperimentConfig, ExperimentKind, ModeName, SyntheticSource, TreebankSource};
pub use output::{RecordKind, RunRecord, Timing, STATUS_NO_BIN, STATUS_OK};

use crate::augment::Augmenter;
use crate::conllu::{read_treebank, validate_tree, ReadOptions, Treebank};
use crate::error::{Error, Result};
use crate::evaluation::evaluate;
use crate::neural::EncoderConfig;
use crate::parser::{train_parser, Parser, TagMode};
use crate::synthetic::{Grammar, SynthConfig};
use crate::tagger::{capture_bins, jackknife_retag, train_tagger, AttemptLog, Tagger};
use crate::treebank_ops::{combine_and_split, sample_subset, Fraction, SplitSpec};

/// A seed from the base seed and a cell's coordinates: the first eight bytes
/// of the SHA-256 digest of the base seed and the length-prefixed parts.
pub fn derive_seed(base: u64, parts: &[&dyn Display]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for p in parts {
        let s = p.to_string();
        h.update((s.len() as u64).to_le_bytes());
        h.update(s.as_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{:02x}", b)).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Worker threads for grid cells.
    pub jobs: usize,
    /// Reuse saved cell outputs instead of recomputing them.
    pub resume: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { jobs: 1, resume: false }
    }
}

/// What a finished run produced.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub records: Vec<RunRecord>,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Capture outcome of one tagger training set, as stored in the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureLog {
    pub treebank: String,
    pub level: usize,
    pub repetition: usize,
    pub seed: u64,
    pub retries: usize,
    pub bins: Vec<BinLog>,
    pub attempts: Vec<AttemptLog>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinLog {
    pub target: f64,
    pub achieved: Option<f64>,
    pub attempt: Option<usize>,
    pub step: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub diagnostic: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct CellOutput {
    records: Vec<RunRecord>,
    capture: Option<CaptureLog>,
    seeds: BTreeMap<String, u64>,
    warnings: Vec<String>,
    seconds: f64,
}

/// Training inputs of one treebank. Test data sits behind [`TestData`].
struct Source {
    cfg: TreebankSource,
    train: Treebank,
    dev: Option<Treebank>,
    test: TestData,
}

struct TestData {
    cfg: TreebankSource,
    cache: OnceLock<std::result::Result<Treebank, String>>,
}

impl TestData {
    /// Only evaluation code calls this.
    fn load(&self) -> Result<&Treebank> {
        self.cache
            .get_or_init(|| {
                let r = match (&self.cfg.synthetic, &self.cfg.test) {
                    (Some(s), _) => Ok(grammar(s).treebank(&format!("{}-test", self.cfg.name), s.test, 3)),
                    (None, Some(p)) => read_treebank(p, &ReadOptions::default()),
                    (None, None) => Err(Error::Config(format!("treebank `{}` has no test data", self.cfg.name))),
                };
                r.map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| Error::invalid(e.clone()))
    }
}

fn grammar(s: &SyntheticSource) -> Grammar {
    Grammar::new(s.language, &SynthConfig::default())
}

fn load_source(cfg: &TreebankSource) -> Result<Source> {
    let (train, dev) = match &cfg.synthetic {
        Some(s) => {
            let g = grammar(s);
            let train = g.treebank(&format!("{}-train", cfg.name), s.train, 1);
            let dev = (s.dev > 0).then(|| g.treebank(&format!("{}-dev", cfg.name), s.dev, 2));
            (train, dev)
        }
        None => {
            let read = |p: &Path| read_treebank(p, &ReadOptions::default());
            let train = read(cfg.train.as_deref().expect("validated"))?;
            let dev = cfg.dev.as_deref().map(read).transpose()?;
            (train, dev)
        }
    };
    let mut train = train;
    train.name = cfg.name.clone();
    Ok(Source {
        cfg: cfg.clone(),
        train,
        dev,
        test: TestData {
            cfg: cfg.clone(),
            cache: OnceLock::new(),
        },
    })
}

fn split(train: &Treebank, dev: Option<&Treebank>, seed: u64) -> Result<(Treebank, Treebank)> {
    combine_and_split(
        train,
        dev,
        &SplitSpec {
            train_fraction: Fraction::default(),
            seed,
            shuffle: true,
        },
    )
}

fn concat(name: &str, parts: &[&Treebank]) -> Treebank {
    Treebank::new(name, parts.iter().flat_map(|t| t.sentences.iter().cloned()).collect())
}

fn bin_label(target: f64) -> String {
    format!("{}", target)
}

fn failed(e: &Error) -> String {
    format!("failed: {}", e)
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    opts: &'a RunOptions,
    out: PathBuf,
    id: String,
    sources: Vec<Source>,
}

/// Run the configured experiment and write its output files.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    cfg.validate()?;
    // Missing inputs stop the run before any training.
    for tb in &cfg.treebanks {
        for (role, p) in tb.files() {
            if !p.is_file() {
                return Err(Error::Config(format!(
                    "treebank `{}`: {} file {} does not exist",
                    tb.name,
                    role,
                    p.display()
                )));
            }
        }
    }
    let sources = cfg.treebanks.iter().map(load_source).collect::<Result<Vec<_>>>()?;
    for s in &sources {
        let pool = s.train.len() + s.dev.as_ref().map_or(0, |d| d.len());
        if cfg.experiment == ExperimentKind::ArtificialLowResource {
            if let Some(&n) = cfg.sizes().iter().max().filter(|&&n| n > pool) {
                return Err(Error::Config(format!(
                    "treebank `{}` has {} sentences, fewer than the sample size {}",
                    s.cfg.name, pool, n
                )));
            }
        } else if pool < 2 {
            return Err(Error::Config(format!("treebank `{}` needs at least 2 sentences", s.cfg.name)));
        }
    }
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(out.join("cells")).map_err(|e| Error::file(&out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {}", e)))?;
    let runner = Runner {
        cfg,
        opts,
        out,
        id: cfg.id(),
        sources,
    };
    pool.install(|| runner.run())
}

impl Runner<'_> {
    fn run(&self) -> Result<Outcome> {
        let cells = match self.cfg.experiment {
            ExperimentKind::RealLowResource => self.run_real()?,
            _ => self.run_grid()?,
        };
        self.finish(cells)
    }

    fn seed(&self, parts: &[&dyn Display]) -> u64 {
        derive_seed(self.cfg.seed, parts)
    }

    fn encoder(&self, seed: u64) -> EncoderConfig {
        EncoderConfig {
            seed,
            ..self.cfg.encoder.clone()
        }
    }

    fn models_dir(&self, parts: &[String]) -> Result<PathBuf> {
        let mut d = self.out.join("models");
        for p in parts {
            d.push(p);
        }
        std::fs::create_dir_all(&d).map_err(|e| Error::file(&d, e))?;
        Ok(d)
    }

    /// Run `work` for every key, reusing saved outputs when resuming.
    fn cells<C: Sync>(
        &self,
        items: &[C],
        key: impl Fn(&C) -> String + Sync,
        work: impl Fn(&C) -> CellOutput + Sync,
    ) -> Result<Vec<(String, CellOutput)>> {
        items
            .par_iter()
            .map(|c| {
                let k = key(c);
                let path = self.out.join("cells").join(format!("{}.json", k));
                if self.opts.resume && path.is_file() {
                    let text = std::fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?;
                    if let Ok(saved) = serde_json::from_str::<CellOutput>(&text) {
                        info!("reusing {}", k);
                        return Ok((k, saved));
                    }
                    warn!("ignoring unreadable cell output {}", path.display());
                }
                info!("running {}", k);
                let t0 = Instant::now();
                let mut o = work(c);
                o.seconds = t0.elapsed().as_secs_f64();
                let text = serde_json::to_string(&o)?;
                std::fs::write(&path, text).map_err(|e| Error::file(&path, e))?;
                Ok((k, o))
            })
            .collect()
    }

    fn run_real(&self) -> Result<Vec<(String, CellOutput)>> {
        let items: Vec<(usize, usize)> = (0..self.sources.len())
            .flat_map(|t| (0..self.cfg.repetitions).map(move |r| (t, r)))
            .collect();
        self.cells(
            &items,
            |&(t, r)| format!("{}.r{}", self.sources[t].cfg.name, r),
            |&(t, r)| self.real_cell(&self.sources[t], r),
        )
    }

    fn real_record(&self, src: &Source, rep: usize, kind: RecordKind, mode: &str, seed: u64) -> RunRecord {
        RunRecord {
            experiment: self.id.clone(),
            treebank: src.cfg.name.clone(),
            kind,
            parser_n: None,
            tagger_n: None,
            repetition: rep,
            bin_target: None,
            bin_achieved: None,
            mode: mode.to_owned(),
            uas: None,
            las: None,
            upos: None,
            tokens: None,
            seed,
            status: STATUS_OK.to_owned(),
        }
    }

    fn real_cell(&self, src: &Source, rep: usize) -> CellOutput {
        let name = &src.cfg.name;
        let mut o = CellOutput::default();
        let split_seed = self.seed(&[name, &"split"]).wrapping_add(rep as u64);
        o.seeds.insert("split".into(), split_seed);
        let (tr, dv) = match split(&src.train, src.dev.as_ref(), split_seed) {
            Ok(x) => x,
            Err(e) => {
                let mut r = self.real_record(src, rep, RecordKind::Tagger, "", 0);
                r.status = failed(&e);
                o.records.push(r);
                return o;
            }
        };

        let tagger_seed = self.seed(&[name, &rep, &"tagger"]);
        o.seeds.insert("tagger".into(), tagger_seed);
        let mut tag_rec = self.real_record(src, rep, RecordKind::Tagger, "", tagger_seed);
        let tagger = (|| -> Result<(Tagger, PathBuf)> {
            let (tagger, _) = train_tagger(&tr, &dv, &self.encoder(tagger_seed), &self.cfg.train)?;
            let path = self.models_dir(&[name.clone(), format!("r{}", rep)])?.join("tagger.ckpt");
            tagger.save(&path)?;
            Ok((tagger, path))
        })();
        let tagger = match tagger {
            Ok(t) => Some(t),
            Err(e) => {
                tag_rec.status = failed(&e);
                None
            }
        };

        // Training stage: every parser of this cell.
        let mut parsers = Vec::new();
        for &m in &self.cfg.modes {
            let seed = self.seed(&[name, &rep, &m.as_str()]);
            o.seeds.insert(format!("parser.{}", m.as_str()), seed);
            let trained = (|| -> Result<Parser> {
                let enc = self.encoder(seed);
                match m {
                    ModeName::Pred => {
                        let (tagger, path) = tagger
                            .as_ref()
                            .ok_or_else(|| Error::invalid("no tagger for predicted tags"))?;
                        let tr_p = match self.cfg.jackknife_folds {
                            Some(k) => jackknife_retag(&tr, &dv, k, &self.encoder(tagger_seed), &self.cfg.train)?,
                            None => tagger.retag(&tr)?,
                        };
                        let dv_p = tagger.retag(&dv)?;
                        Ok(train_parser(&tr_p, &dv_p, &m.mode(path, self.cfg.aux_weight), &enc, &self.cfg.train)?.0)
                    }
                    _ => Ok(train_parser(&tr, &dv, &m.mode(Path::new(""), self.cfg.aux_weight), &enc, &self.cfg.train)?.0),
                }
            })();
            parsers.push((m, seed, trained));
        }

        // Evaluation stage.
        let test = match src.test.load() {
            Ok(t) => t,
            Err(e) => {
                tag_rec.status = failed(&e);
                o.records.push(tag_rec);
                return o;
            }
        };
        let tagged_test = tagger.as_ref().map(|(t, _)| t.retag(test));
        if let Some((t, _)) = &tagger {
            match t.accuracy(test) {
                Ok(acc) => {
                    tag_rec.upos = Some(output::round2(acc));
                    tag_rec.tokens = Some(test.token_count());
                }
                Err(e) => tag_rec.status = failed(&e),
            }
        }
        o.records.push(tag_rec);
        for (m, seed, trained) in parsers {
            let mut rec = self.real_record(src, rep, RecordKind::Parser, m.as_str(), seed);
            let scored = trained.and_then(|p| {
                let input = match (m, &tagged_test) {
                    (ModeName::Pred, Some(Ok(tt))) => tt,
                    (ModeName::Pred, Some(Err(e))) => return Err(Error::invalid(e.to_string())),
                    (ModeName::Pred, None) => return Err(Error::invalid("no tagger for predicted tags")),
                    _ => test,
                };
                evaluate(&p.parse_treebank(input)?, test)
            });
            match scored {
                Ok(rep) => {
                    rec.uas = Some(rep.uas);
                    rec.las = Some(rep.las);
                    rec.tokens = Some(rep.tokens);
                    if matches!(m, ModeName::Pred | ModeName::Multi) {
                        rec.upos = rep.upos;
                    }
                }
                Err(e) => rec.status = failed(&e),
            }
            o.records.push(rec);
        }
        o
    }

    /// Training and development data of one grid level.
    fn variant(&self, src: &Source, level: usize, rep: usize) -> Result<(Treebank, Treebank, Vec<String>)> {
        let name = &src.cfg.name;
        let mut warnings = Vec::new();
        match self.cfg.experiment {
            ExperimentKind::ArtificialLowResource => {
                let pool = concat(name, &[&src.train, src.dev.as_ref().unwrap_or(&Treebank::new(name, vec![]))]);
                let seed = self.seed(&[name, &level, &"sample"]).wrapping_add(rep as u64);
                let sample = sample_subset(&pool, level, seed)?;
                let (tr, dv) = split(&sample, None, self.seed(&[name, &level, &"split"]).wrapping_add(rep as u64))?;
                Ok((tr, dv, warnings))
            }
            _ => {
                let (gold_tr, gold_dv) = split(&src.train, src.dev.as_ref(), self.seed(&[name, &"split"]).wrapping_add(rep as u64))?;
                if level == 0 {
                    return Ok((gold_tr, gold_dv, warnings));
                }
                let aug = Augmenter::new(self.cfg.augment.clone()).augment_treebank(
                    &gold_tr,
                    level,
                    self.seed(&[name, &level, &"augment"]).wrapping_add(rep as u64),
                )?;
                warnings.extend(aug.warnings.iter().map(|w| format!("{} level {} rep {}: {}", name, level, rep, w)));
                for (i, s) in aug.treebank.sentences.iter().enumerate() {
                    if !validate_tree(s).is_ok() {
                        return Err(Error::InvalidTree {
                            sentence: i + 1,
                            violations: validate_tree(s).violations,
                        });
                    }
                }
                let (aug_tr, aug_dv) = if aug.treebank.len() >= 2 {
                    split(&aug.treebank, None, self.seed(&[name, &level, &"augment-split"]).wrapping_add(rep as u64))?
                } else {
                    (aug.treebank.clone(), Treebank::new(name, vec![]))
                };
                Ok((concat(name, &[&gold_tr, &aug_tr]), concat(name, &[&gold_dv, &aug_dv]), warnings))
            }
        }
    }

    fn tagger_path(&self, name: &str, level: usize, rep: usize, target: f64) -> Result<PathBuf> {
        Ok(self
            .models_dir(&[name.to_owned(), format!("n{}", level), format!("r{}", rep)])?
            .join(format!("bin{}.ckpt", bin_label(target))))
    }

    fn grid_record(&self, name: &str, rep: usize, kind: RecordKind, seed: u64) -> RunRecord {
        RunRecord {
            experiment: self.id.clone(),
            treebank: name.to_owned(),
            kind,
            parser_n: None,
            tagger_n: None,
            repetition: rep,
            bin_target: None,
            bin_achieved: None,
            mode: String::new(),
            uas: None,
            las: None,
            upos: None,
            tokens: None,
            seed,
            status: STATUS_OK.to_owned(),
        }
    }

    fn run_grid(&self) -> Result<Vec<(String, CellOutput)>> {
        let levels = self.cfg.levels();
        let schedule = self.cfg.schedule()?;
        let mut keys = Vec::new();
        for t in 0..self.sources.len() {
            for &l in &levels {
                for r in 0..self.cfg.repetitions {
                    keys.push((t, l, r));
                }
            }
        }
        // Data of every (treebank, level, repetition), shared by both phases.
        let data: Vec<_> = keys
            .par_iter()
            .map(|&(t, l, r)| self.variant(&self.sources[t], l, r).map_err(|e| e.to_string()))
            .collect();
        let data: BTreeMap<_, _> = keys.iter().copied().zip(data).collect();

        let captures = self.cells(
            &keys,
            |&(t, l, r)| format!("{}.capture.n{}.r{}", self.sources[t].cfg.name, l, r),
            |&(t, l, r)| self.capture_cell(&self.sources[t], l, r, &data[&(t, l, r)], &schedule),
        )?;
        let logs: BTreeMap<(usize, usize, usize), Option<&CaptureLog>> = keys
            .iter()
            .copied()
            .zip(captures.iter().map(|(_, o)| o.capture.as_ref()))
            .collect();

        let mut parse_items = Vec::new();
        for &(t, p, r) in &keys {
            parse_items.push((t, p, r, None));
            for &q in &levels {
                for &b in schedule.targets() {
                    parse_items.push((t, p, r, Some((q, b))));
                }
            }
        }
        let parses = self.cells(
            &parse_items,
            |&(t, p, r, tb)| {
                let name = &self.sources[t].cfg.name;
                match tb {
                    None => format!("{}.baseline.p{}.r{}", name, p, r),
                    Some((q, b)) => format!("{}.parse.p{}.t{}.b{}.r{}", name, p, q, bin_label(b), r),
                }
            },
            |&(t, p, r, tb)| {
                let log = tb.and_then(|(q, _)| logs[&(t, q, r)]);
                self.parse_cell(&self.sources[t], p, r, tb, log, &data[&(t, p, r)])
            },
        )?;
        Ok(captures.into_iter().chain(parses).collect())
    }

    fn capture_cell(
        &self,
        src: &Source,
        level: usize,
        rep: usize,
        data: &std::result::Result<(Treebank, Treebank, Vec<String>), String>,
        schedule: &crate::tagger::BinSchedule,
    ) -> CellOutput {
        let name = &src.cfg.name;
        let seed = self.seed(&[name, &level, &rep, &"tagger"]);
        let mut o = CellOutput::default();
        o.seeds.insert("tagger".into(), seed);
        let record = |target: f64| {
            let mut r = self.grid_record(name, rep, RecordKind::Tagger, seed);
            r.tagger_n = Some(level);
            r.bin_target = Some(target);
            r
        };
        let (tr, dv) = match data {
            Ok((tr, dv, w)) => {
                o.warnings.extend(w.iter().cloned());
                (tr, dv)
            }
            Err(e) => {
                for &b in schedule.targets() {
                    let mut r = record(b);
                    r.status = format!("failed: {}", e);
                    o.records.push(r);
                }
                return o;
            }
        };
        let capture = capture_bins(tr, dv, &self.encoder(seed), &self.cfg.train, schedule, &self.cfg.capture);
        let capture = match capture {
            Ok(c) => c,
            Err(e) => {
                for &b in schedule.targets() {
                    let mut r = record(b);
                    r.status = failed(&e);
                    o.records.push(r);
                }
                return o;
            }
        };
        let mut log = CaptureLog {
            treebank: name.clone(),
            level,
            repetition: rep,
            seed,
            retries: capture.retries(),
            bins: Vec::new(),
            attempts: capture.attempts.clone(),
        };
        let mut saved = Vec::new();
        for bin in &capture.bins {
            let mut entry = BinLog {
                target: bin.target,
                achieved: bin.achieved,
                attempt: bin.attempt,
                step: bin.step,
                checkpoint: None,
                diagnostic: bin.diagnostic.clone(),
            };
            let mut r = record(bin.target);
            r.bin_achieved = bin.achieved;
            match bin.tagger(&capture.base) {
                Some(t) => {
                    match self.tagger_path(name, level, rep, bin.target).and_then(|p| t.save(&p).map(|_| p)) {
                        Ok(p) => {
                            entry.checkpoint = Some(p);
                            saved.push((t, o.records.len()));
                        }
                        Err(e) => r.status = failed(&e),
                    }
                }
                None => r.status = STATUS_NO_BIN.to_owned(),
            }
            log.bins.push(entry);
            o.records.push(r);
        }
        // Evaluation stage.
        match src.test.load() {
            Ok(test) => {
                for (t, i) in saved {
                    match t.accuracy(test) {
                        Ok(acc) => {
                            o.records[i].upos = Some(output::round2(acc));
                            o.records[i].tokens = Some(test.token_count());
                        }
                        Err(e) => o.records[i].status = failed(&e),
                    }
                }
            }
            Err(e) => {
                for (_, i) in saved {
                    o.records[i].status = failed(&e);
                }
            }
        }
        o.capture = Some(log);
        o
    }

    fn parse_cell(
        &self,
        src: &Source,
        level: usize,
        rep: usize,
        tagger: Option<(usize, f64)>,
        log: Option<&CaptureLog>,
        data: &std::result::Result<(Treebank, Treebank, Vec<String>), String>,
    ) -> CellOutput {
        let name = &src.cfg.name;
        let mut o = CellOutput::default();
        let seed = match tagger {
            None => self.seed(&[name, &level, &rep, &"none"]),
            Some((q, b)) => self.seed(&[name, &level, &rep, &q, &bin_label(b), &"pred"]),
        };
        o.seeds.insert("parser".into(), seed);
        let kind = if tagger.is_some() { RecordKind::Parser } else { RecordKind::Baseline };
        let mut rec = self.grid_record(name, rep, kind, seed);
        rec.parser_n = Some(level);
        rec.mode = if tagger.is_some() { "pred" } else { "none" }.to_owned();
        if let Some((q, b)) = tagger {
            rec.tagger_n = Some(q);
            rec.bin_target = Some(b);
        }
        let bin = tagger.and_then(|(_, b)| log.and_then(|l| l.bins.iter().find(|x| x.target == b)));
        rec.bin_achieved = bin.and_then(|b| b.achieved);
        let checkpoint = bin.and_then(|b| b.checkpoint.clone());
        if tagger.is_some() && checkpoint.is_none() {
            rec.status = if log.is_none() {
                "failed: bin capture did not run".to_owned()
            } else {
                STATUS_NO_BIN.to_owned()
            };
            o.records.push(rec);
            return o;
        }
        let result = (|| -> Result<crate::evaluation::EvalReport> {
            let (tr, dv, _) = data.as_ref().map_err(|e| Error::invalid(e.clone()))?;
            let enc = self.encoder(seed);
            let (parser, tagger) = match &checkpoint {
                Some(path) => {
                    let tagger = Tagger::load(path)?;
                    let mode = TagMode::Predicted { checkpoint: path.clone() };
                    let (p, _) = train_parser(&tagger.retag(tr)?, &tagger.retag(dv)?, &mode, &enc, &self.cfg.train)?;
                    (p, Some(tagger))
                }
                None => (train_parser(tr, dv, &TagMode::None, &enc, &self.cfg.train)?.0, None),
            };
            // Evaluation stage.
            let test = src.test.load()?;
            let input = match &tagger {
                Some(t) => t.retag(test)?,
                None => test.clone(),
            };
            evaluate(&parser.parse_treebank(&input)?, test)
        })();
        match result {
            Ok(r) => {
                rec.uas = Some(r.uas);
                rec.las = Some(r.las);
                rec.tokens = Some(r.tokens);
                if tagger.is_some() {
                    rec.upos = r.upos;
                }
            }
            Err(e) => rec.status = failed(&e),
        }
        o.records.push(rec);
        o
    }

    fn finish(&self, cells: Vec<(String, CellOutput)>) -> Result<Outcome> {
        let mut records = Vec::new();
        let mut timings = Vec::new();
        let mut seeds = BTreeMap::new();
        let mut captures = Vec::new();
        let mut warnings = Vec::new();
        for (key, cell) in cells {
            records.extend(cell.records);
            timings.push(Timing {
                cell: key.clone(),
                seconds: cell.seconds,
            });
            for (k, v) in cell.seeds {
                seeds.insert(format!("{}.{}", key, k), v);
            }
            captures.extend(cell.capture);
            warnings.extend(cell.warnings);
        }
        warnings.sort();
        warnings.dedup();
        for w in &warnings {
            warn!("{}", w);
        }
        records.sort_by(RunRecord::canonical_cmp);

        let mut files = Vec::new();
        let mut emit = |name: &str, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
            let p = self.out.join(name);
            f(&p)?;
            files.push(p);
            Ok(())
        };
        emit("records.csv", &|p| output::write_records(p, &records))?;
        emit("summary.csv", &|p| output::write_summary(p, &records))?;
        match self.cfg.experiment {
            ExperimentKind::RealLowResource => emit("table.csv", &|p| output::write_table(p, &records))?,
            ExperimentKind::ArtificialLowResource => emit("grid.csv", &|p| output::write_grid(p, &records, "n"))?,
            ExperimentKind::Augmented => emit("grid.csv", &|p| output::write_grid(p, &records, "aug"))?,
        }
        emit("timings.csv", &|p| output::write_timings(p, &timings))?;

        let mut status: BTreeMap<String, usize> = BTreeMap::new();
        for r in &records {
            let s = r.status.split(':').next().unwrap_or_default().to_owned();
            *status.entry(s).or_default() += 1;
        }
        let mut inputs = Vec::new();
        for tb in &self.cfg.treebanks {
            for (role, p) in tb.files() {
                inputs.push(serde_json::json!({
                    "treebank": tb.name,
                    "role": role,
                    "path": p,
                    "sha256": sha256_file(p)?,
                }));
            }
        }
        let config_json = serde_json::to_string(self.cfg)?;
        let manifest = serde_json::json!({
            "tool": "lowres",
            "version": env!("CARGO_PKG_VERSION"),
            "experiment": self.cfg.experiment.to_string(),
            "id": self.id,
            "config": self.cfg,
            "config_sha256": hex(&Sha256::digest(config_json.as_bytes())),
            "inputs": inputs,
            "rng": "ChaCha8",
            "train_tags": match self.cfg.jackknife_folds {
                Some(k) => format!("jackknife-{}", k),
                None => "self".to_owned(),
            },
            "seeds": seeds,
            "captures": captures,
            "warnings": warnings,
            "status": status,
        });
        emit("manifest.json", &|p| {
            let text = serde_json::to_string_pretty(&manifest)? + "\n";
            std::fs::write(p, text).map_err(|e| Error::file(p, e))
        })?;
        Ok(Outcome {
            records,
            files,
            warnings,
        })
    }
}
