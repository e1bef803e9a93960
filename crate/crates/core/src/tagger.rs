//! UPOS tagger: token embeddings, a bidirectional recurrent encoder and an
//! MLP over each state, plus checkpoint capture at chosen dev accuracies.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conllu::{Sentence, Treebank};
use crate::error::{Error, Result};
use crate::neural::checkpoint::Checkpoint;
use crate::neural::graph::{Graph, Var};
use crate::neural::layers::{Activation, BiLstm, CharEncoder, Embedding, Mlp, Noise, TokenEmbedder};
use crate::neural::train::{train, Control, EarlyStopping, Monitor, Objective, StepInfo};
use crate::neural::vocab::{IndexedSentence, UposSource, Vocab};
use crate::neural::{EncoderConfig, ParamStore, TrainConfig};
use crate::treebank_ops::seeded_rng;

pub const CHECKPOINT_KIND: &str = "tagger";

/// Sentences per inference batch.
const INFER_BATCH: usize = 32;

/// Network layout; parameters live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct TaggerNet {
    pub embedder: TokenEmbedder,
    pub encoder: BiLstm,
    pub head: Mlp,
}

impl TaggerNet {
    pub fn build(cfg: &EncoderConfig, vocab: &Vocab, store: &mut ParamStore, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeded_rng(seed);
        let embedder = TokenEmbedder {
            words: Embedding::new(store, &mut rng, "words", vocab.words.len(), cfg.word_dim)?,
            chars: CharEncoder::new(store, &mut rng, "chars", vocab.chars.len(), cfg.char_input_dim, cfg.char_out_dim)?,
            upos: None,
        };
        let encoder = BiLstm::new(
            store,
            &mut rng,
            "encoder",
            cfg.input_dim(false),
            cfg.hidden_per_direction,
            cfg.num_layers,
        )?;
        let head = Mlp::new(
            store,
            &mut rng,
            "tag_mlp",
            &[cfg.state_dim(), cfg.tag_mlp_dim, vocab.upos_labels.len()],
            Activation::Relu,
            Activation::Identity,
        )?;
        Ok(TaggerNet { embedder, encoder, head })
    }

    /// Tag scores for every token of the batch, flat.
    pub fn logits(
        &self,
        g: &mut Graph<'_>,
        vocab: &Vocab,
        batch: &[&IndexedSentence],
        mut noise: Option<&mut Noise<'_>>,
    ) -> Result<Var> {
        let x = self.embedder.forward(g, batch, vocab, noise.as_deref_mut())?;
        let lengths: Vec<usize> = batch.iter().map(|s| s.words.len()).collect();
        let h = self.encoder.forward(g, x, &lengths, noise);
        Ok(self.head.forward(g, h))
    }

    pub fn predict(&self, params: &ParamStore, vocab: &Vocab, sentences: &[IndexedSentence]) -> Result<Vec<Vec<usize>>> {
        let mut out = Vec::with_capacity(sentences.len());
        for chunk in sentences.chunks(INFER_BATCH) {
            let refs: Vec<&IndexedSentence> = chunk.iter().collect();
            let mut g = Graph::new(params);
            let logits = self.logits(&mut g, vocab, &refs, None)?;
            let scores = g.value(logits);
            let mut row = 0;
            for s in chunk {
                let tags = (0..s.words.len())
                    .map(|i| argmax(scores.row(row + i).iter().copied()))
                    .collect();
                row += s.words.len();
                out.push(tags);
            }
        }
        Ok(out)
    }
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

struct TaggingObjective<'a> {
    net: &'a TaggerNet,
    vocab: &'a Vocab,
}

impl Objective for TaggingObjective<'_> {
    type Item = IndexedSentence;

    fn loss(
        &self,
        g: &mut Graph<'_>,
        batch: &[&IndexedSentence],
        noise: Option<&mut Noise<'_>>,
    ) -> Result<(Var, usize)> {
        let logits = self.net.logits(g, self.vocab, batch, noise)?;
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        let mut offset = 0;
        for s in batch {
            for (i, t) in s.upos_targets.iter().enumerate() {
                if let Some(t) = t {
                    rows.push(offset + i);
                    targets.push(*t);
                }
            }
            offset += s.words.len();
        }
        let picked = g.select_rows(logits, &rows);
        Ok((g.cross_entropy(picked, &targets), targets.len()))
    }
}

/// Settings stored next to tagger parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TaggerMeta {
    pub dev_accuracy: Option<f64>,
    pub bin_target: Option<f64>,
    pub seed: u64,
}

/// A tagger ready for inference.
#[derive(Clone, Debug)]
pub struct Tagger {
    pub config: EncoderConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    pub net: TaggerNet,
    pub meta: TaggerMeta,
}

impl Tagger {
    /// A freshly initialized tagger; parameters depend only on `config.seed`.
    pub fn new(config: EncoderConfig, vocab: Vocab) -> Result<Self> {
        let mut params = ParamStore::new();
        let net = TaggerNet::build(&config, &vocab, &mut params, config.seed)?;
        Ok(Tagger {
            meta: TaggerMeta {
                seed: config.seed,
                ..Default::default()
            },
            config,
            vocab,
            params,
            net,
        })
    }

    fn index(&self, s: &Sentence) -> Result<IndexedSentence> {
        self.vocab.index(s, false, UposSource::Absent)
    }

    pub fn tag(&self, s: &Sentence) -> Result<Vec<String>> {
        Ok(self.tag_all(std::slice::from_ref(s))?.pop().unwrap_or_default())
    }

    pub fn tag_all(&self, sentences: &[Sentence]) -> Result<Vec<Vec<String>>> {
        let indexed = sentences.iter().map(|s| self.index(s)).collect::<Result<Vec<_>>>()?;
        let pred = self.net.predict(&self.params, &self.vocab, &indexed)?;
        Ok(pred
            .into_iter()
            .map(|tags| tags.into_iter().map(|t| self.vocab.upos_labels.item(t).to_owned()).collect())
            .collect())
    }

    /// A copy of `tb` with the UPOS column replaced by predictions.
    pub fn retag(&self, tb: &Treebank) -> Result<Treebank> {
        let tags = self.tag_all(&tb.sentences)?;
        let mut out = tb.clone();
        for (s, tags) in out.sentences.iter_mut().zip(tags) {
            for (t, tag) in s.tokens.iter_mut().zip(tags) {
                t.upos = tag;
            }
        }
        Ok(out)
    }

    /// Token-weighted dev accuracy, unrounded.
    pub fn accuracy(&self, gold: &Treebank) -> Result<f64> {
        treebank_accuracy(&self.tag_all(&gold.sentences)?, gold)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Checkpoint::new(
            CHECKPOINT_KIND,
            self.config.clone(),
            self.vocab.clone(),
            self.meta.clone(),
            &self.params,
        )?
        .save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint<TaggerMeta> = Checkpoint::load(path, CHECKPOINT_KIND)?;
        let mut tagger = Tagger::new(ck.config.clone(), ck.vocab.clone())?;
        ck.restore_into(&mut tagger.params)?;
        tagger.meta = ck.meta;
        Ok(tagger)
    }
}

/// `100 · correct / total` for one sentence.
pub fn tagging_accuracy(pred: &[String], gold: &[String]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::invalid(format!(
            "{} predicted tags for {} gold tags",
            pred.len(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Ok(0.0);
    }
    let correct = pred.iter().zip(gold).filter(|(a, b)| a == b).count();
    Ok(100.0 * correct as f64 / gold.len() as f64)
}

/// Token-weighted accuracy over a treebank.
pub fn treebank_accuracy(pred: &[Vec<String>], gold: &Treebank) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::invalid(format!(
            "{} tagged sentences for {} gold sentences",
            pred.len(),
            gold.len()
        )));
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    for (i, (p, s)) in pred.iter().zip(&gold.sentences).enumerate() {
        if p.len() != s.len() {
            return Err(Error::Alignment {
                sentence: i + 1,
                message: format!("{} tags for {} tokens", p.len(), s.len()),
            });
        }
        correct += p.iter().zip(&s.tokens).filter(|(a, t)| **a == t.upos).count();
        total += s.len();
    }
    Ok(if total == 0 { 0.0 } else { 100.0 * correct as f64 / total as f64 })
}

fn check_nonempty(train: &Treebank, dev: &Treebank) -> Result<()> {
    if train.token_count() == 0 || dev.token_count() == 0 {
        return Err(Error::invalid("tagger training needs non-empty train and dev data"));
    }
    Ok(())
}

fn indexed(tb: &Treebank, vocab: &Vocab) -> Result<Vec<IndexedSentence>> {
    tb.sentences
        .iter()
        .map(|s| vocab.index(s, false, UposSource::Absent))
        .collect()
}

/// Train a tagger and return the parameters that scored best on `dev`.
pub fn train_tagger(train_tb: &Treebank, dev: &Treebank, cfg: &EncoderConfig, tcfg: &TrainConfig) -> Result<(Tagger, Vec<f64>)> {
    check_nonempty(train_tb, dev)?;
    let vocab = Vocab::build(train_tb, 1)?;
    let mut tagger = Tagger::new(cfg.clone(), vocab)?;
    let data = indexed(train_tb, &tagger.vocab)?;
    let dev_ix = indexed(dev, &tagger.vocab)?;
    let objective = TaggingObjective {
        net: &tagger.net,
        vocab: &tagger.vocab,
    };
    let net = tagger.net.clone();
    let vocab = tagger.vocab.clone();
    let mut monitor = EarlyStopping::new(tcfg.patience, |p: &ParamStore| {
        let pred = net.predict(p, &vocab, &dev_ix)?;
        let tags: Vec<Vec<String>> = pred
            .into_iter()
            .map(|t| t.into_iter().map(|i| vocab.upos_labels.item(i).to_owned()).collect())
            .collect();
        treebank_accuracy(&tags, dev)
    });
    let mut params = tagger.params.clone();
    train(&mut params, &objective, &data, tcfg, cfg.seed, &mut monitor)?;
    let history = monitor.history.clone();
    if let Some((score, best)) = monitor.best.take() {
        tagger.params = best;
        tagger.meta.dev_accuracy = Some(score);
    } else {
        tagger.params = params;
    }
    Ok((tagger, history))
}

/// Accuracy targets, strictly increasing, sharing one window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinSchedule {
    targets: Vec<f64>,
    window: f64,
}

pub const DEFAULT_WINDOW: f64 = 0.25;

impl BinSchedule {
    pub fn new(targets: Vec<f64>, window: f64) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::invalid("bin schedule is empty"));
        }
        if targets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("bin targets must be strictly increasing"));
        }
        if targets.iter().any(|t| !(0.0..=100.0).contains(t)) || window.is_nan() || window <= 0.0 {
            return Err(Error::invalid("bin targets must lie in [0, 100] with a positive window"));
        }
        Ok(BinSchedule { targets, window })
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn window(&self) -> f64 {
        self.window
    }
}

impl std::str::FromStr for BinSchedule {
    type Err = Error;

    /// Comma-separated targets with the default window.
    fn from_str(s: &str) -> Result<Self> {
        let targets = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| Error::invalid(format!("bin `{}`: {}", t, e))))
            .collect::<Result<Vec<_>>>()?;
        BinSchedule::new(targets, DEFAULT_WINDOW)
    }
}

/// A captured (or missing) checkpoint for one accuracy target.
#[derive(Clone, Debug)]
pub struct AccuracyBin {
    pub target: f64,
    pub window: f64,
    pub achieved: Option<f64>,
    pub checkpoint: Option<ParamStore>,
    /// Attempt (0-based) and update step of the capture.
    pub attempt: Option<usize>,
    pub step: Option<usize>,
    pub diagnostic: Option<String>,
}

impl AccuracyBin {
    pub fn is_captured(&self) -> bool {
        self.checkpoint.is_some()
    }

    /// A tagger carrying this bin's parameters.
    pub fn tagger(&self, base: &Tagger) -> Option<Tagger> {
        self.checkpoint.as_ref().map(|p| {
            let mut t = base.clone();
            t.params = p.clone();
            t.meta.dev_accuracy = self.achieved;
            t.meta.bin_target = Some(self.target);
            t
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptureOptions {
    /// Extra attempts with fresh seeds for bins the first run missed.
    pub retries: usize,
    /// Early epochs evaluated every `early_interval` updates.
    pub early_epochs: usize,
    pub early_interval: usize,
    /// Evaluate after every update while the last dev accuracy is this
    /// close to an open bin.
    pub near: f64,
    /// Learning-rate multiplier applied per retry.
    pub retry_lr_factor: f64,
}

impl Default for CaptureOptions {
    fn default() -> Self {
        CaptureOptions {
            retries: 5,
            early_epochs: 5,
            early_interval: 10,
            near: 2.0,
            retry_lr_factor: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttemptLog {
    pub attempt: usize,
    pub seed: u64,
    pub learning_rate: f64,
    /// Whether every update was followed by an evaluation.
    pub every_update: bool,
    pub evaluations: usize,
    pub epochs: usize,
    pub min_accuracy: Option<f64>,
    pub max_accuracy: Option<f64>,
    pub captured: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Capture {
    /// The untrained tagger sharing vocabulary and layout with every bin.
    pub base: Tagger,
    pub bins: Vec<AccuracyBin>,
    pub attempts: Vec<AttemptLog>,
}

impl Capture {
    /// Retries performed beyond the first attempt.
    pub fn retries(&self) -> usize {
        self.attempts.len().saturating_sub(1)
    }
}

struct BinMonitor<'a> {
    net: &'a TaggerNet,
    vocab: &'a Vocab,
    dev: &'a Treebank,
    dev_ix: &'a [IndexedSentence],
    bins: &'a mut [AccuracyBin],
    opts: &'a CaptureOptions,
    attempt: usize,
    every_update: bool,
    patience: usize,
    last: Option<f64>,
    best: f64,
    since_best: usize,
    log: AttemptLog,
}

impl BinMonitor<'_> {
    fn open(&self) -> impl Iterator<Item = &AccuracyBin> {
        self.bins.iter().filter(|b| !b.is_captured())
    }
}

impl Monitor for BinMonitor<'_> {
    fn wants_eval(&mut self, info: &StepInfo) -> bool {
        if self.every_update {
            return true;
        }
        if let Some(last) = self.last {
            if self.open().any(|b| (last - b.target).abs() <= self.opts.near) {
                return true;
            }
        }
        if info.epoch < self.opts.early_epochs && info.step.is_multiple_of(self.opts.early_interval.max(1)) {
            return true;
        }
        info.is_epoch_end()
    }

    fn evaluate(&mut self, params: &ParamStore, info: &StepInfo) -> Result<Control> {
        let pred = self.net.predict(params, self.vocab, self.dev_ix)?;
        let tags: Vec<Vec<String>> = pred
            .into_iter()
            .map(|t| t.into_iter().map(|i| self.vocab.upos_labels.item(i).to_owned()).collect())
            .collect();
        let acc = treebank_accuracy(&tags, self.dev)?;
        self.last = Some(acc);
        self.log.evaluations += 1;
        self.log.min_accuracy = Some(self.log.min_accuracy.map_or(acc, |m| m.min(acc)));
        self.log.max_accuracy = Some(self.log.max_accuracy.map_or(acc, |m| m.max(acc)));
        for bin in self.bins.iter_mut().filter(|b| !b.is_captured()) {
            if (acc - bin.target).abs() <= bin.window + 1e-9 {
                bin.achieved = Some(acc);
                bin.checkpoint = Some(params.clone());
                bin.attempt = Some(self.attempt);
                bin.step = Some(info.step);
                self.log.captured.push(bin.target);
            }
        }
        if self.open().next().is_none() {
            return Ok(Control::Stop);
        }
        // Every open bin lies well behind the trajectory.
        if self.open().all(|b| b.target + self.opts.near < self.best.max(acc)) {
            return Ok(Control::Stop);
        }
        if acc > self.best {
            self.best = acc;
            self.since_best = 0;
        } else if info.is_epoch_end() {
            self.since_best += 1;
            if self.since_best >= self.patience {
                return Ok(Control::Stop);
            }
        }
        Ok(Control::Continue)
    }
}

/// Train taggers and keep the first checkpoint whose dev accuracy falls in
/// each bin's window. Missed bins are retried with fresh seeds, evaluation
/// after every update and a reduced learning rate.
pub fn capture_bins(
    train_tb: &Treebank,
    dev: &Treebank,
    cfg: &EncoderConfig,
    tcfg: &TrainConfig,
    schedule: &BinSchedule,
    opts: &CaptureOptions,
) -> Result<Capture> {
    check_nonempty(train_tb, dev)?;
    let vocab = Vocab::build(train_tb, 1)?;
    let base = Tagger::new(cfg.clone(), vocab)?;
    let data = indexed(train_tb, &base.vocab)?;
    let dev_ix = indexed(dev, &base.vocab)?;
    let mut bins: Vec<AccuracyBin> = schedule
        .targets()
        .iter()
        .map(|&target| AccuracyBin {
            target,
            window: schedule.window(),
            achieved: None,
            checkpoint: None,
            attempt: None,
            step: None,
            diagnostic: None,
        })
        .collect();
    let mut attempts = Vec::new();

    for attempt in 0..=opts.retries {
        if bins.iter().all(AccuracyBin::is_captured) {
            break;
        }
        let seed = cfg.seed.wrapping_add(attempt as u64 * 1_000_003);
        let mut params = ParamStore::new();
        let net = TaggerNet::build(cfg, &base.vocab, &mut params, seed)?;
        let mut t = tcfg.clone();
        t.learning_rate *= opts.retry_lr_factor.powi(attempt as i32);
        let objective = TaggingObjective {
            net: &net,
            vocab: &base.vocab,
        };
        let every_update = attempt > 0;
        let mut monitor = BinMonitor {
            net: &net,
            vocab: &base.vocab,
            dev,
            dev_ix: &dev_ix,
            bins: &mut bins,
            opts,
            attempt,
            every_update,
            patience: tcfg.patience,
            last: None,
            best: f64::NEG_INFINITY,
            since_best: 0,
            log: AttemptLog {
                attempt,
                seed,
                learning_rate: t.learning_rate,
                every_update,
                evaluations: 0,
                epochs: 0,
                min_accuracy: None,
                max_accuracy: None,
                captured: Vec::new(),
            },
        };
        // Score the untrained network too, so low targets can be caught.
        let start = StepInfo {
            epoch: 0,
            batch: 0,
            batches_per_epoch: usize::MAX,
            step: 0,
            loss: f64::NAN,
        };
        let summary = if monitor.evaluate(&params, &start)? == Control::Stop {
            None
        } else {
            Some(train(&mut params, &objective, &data, &t, seed, &mut monitor)?)
        };
        let mut log = monitor.log;
        log.epochs = summary.map_or(0, |s| s.epochs);
        log::info!(
            "bin capture attempt {}: captured {:?}, dev accuracy range {:?}..{:?}",
            attempt,
            log.captured,
            log.min_accuracy,
            log.max_accuracy
        );
        attempts.push(log);
    }

    let (lo, hi) = attempts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| {
        (
            a.min_accuracy.map_or(lo, |m| lo.min(m)),
            a.max_accuracy.map_or(hi, |m| hi.max(m)),
        )
    });
    for bin in bins.iter_mut().filter(|b| !b.is_captured()) {
        let why = if bin.target > hi {
            "target above the highest dev accuracy reached"
        } else if bin.target < lo {
            "target below the lowest dev accuracy observed"
        } else {
            "dev accuracy stepped over the window"
        };
        bin.diagnostic = Some(format!(
            "no checkpoint within ±{} of {} after {} attempt(s); dev accuracy ranged {:.2}..{:.2} ({})",
            bin.window,
            bin.target,
            attempts.len(),
            lo,
            hi,
            why
        ));
    }
    Ok(Capture { base, bins, attempts })
}

/// Tag each of `folds` parts of `tb` with a tagger trained on the others.
pub fn jackknife_retag(
    tb: &Treebank,
    dev: &Treebank,
    folds: usize,
    cfg: &EncoderConfig,
    tcfg: &TrainConfig,
) -> Result<Treebank> {
    if folds < 2 || folds > tb.len() {
        return Err(Error::invalid(format!(
            "cannot split {} sentences into {} folds",
            tb.len(),
            folds
        )));
    }
    let mut out = tb.clone();
    for k in 0..folds {
        let (held, rest): (Vec<_>, Vec<_>) = tb
            .sentences
            .iter()
            .cloned()
            .enumerate()
            .partition(|(i, _)| i % folds == k);
        let train_part = Treebank::new(tb.name.clone(), rest.into_iter().map(|x| x.1).collect());
        let mut c = cfg.clone();
        c.seed = cfg.seed.wrapping_add(k as u64);
        let (tagger, _) = train_tagger(&train_part, dev, &c, tcfg)?;
        let held_idx: Vec<usize> = held.iter().map(|x| x.0).collect();
        let held_tb = Treebank::new(tb.name.clone(), held.into_iter().map(|x| x.1).collect());
        let tagged = tagger.retag(&held_tb)?;
        for (i, s) in held_idx.into_iter().zip(tagged.sentences) {
            out.sentences[i] = s;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::synthetic_treebank;

    fn tiny_train() -> TrainConfig {
        TrainConfig {
            max_epochs: 3,
            ..Default::default()
        }
    }

    #[test]
    fn accuracy_definitions() {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert_eq!(tagging_accuracy(&s(&["A", "B"]), &s(&["A", "B"])).unwrap(), 100.0);
        assert_eq!(tagging_accuracy(&s(&["A", "x", "y", "z"]), &s(&["A", "B", "C", "D"])).unwrap(), 25.0);
        assert!(tagging_accuracy(&s(&["A"]), &s(&["A", "B"])).is_err());
    }

    #[test]
    fn schedules_must_increase() {
        assert!(BinSchedule::new(vec![60.0, 66.0], 0.25).is_ok());
        assert!(BinSchedule::new(vec![66.0, 60.0], 0.25).is_err());
        assert!(BinSchedule::new(vec![60.0, 60.0], 0.25).is_err());
        assert!(BinSchedule::new(vec![], 0.25).is_err());
        let s: BinSchedule = "41,44,48,51".parse().unwrap();
        assert_eq!(s.targets(), &[41.0, 44.0, 48.0, 51.0]);
        assert_eq!(s.window(), 0.25);
    }

    #[test]
    fn tags_have_sentence_length_and_are_stable() {
        let tb = synthetic_treebank("t", 0, 8, 1);
        let (tagger, history) = train_tagger(&tb, &tb, &EncoderConfig::tiny(), &tiny_train()).unwrap();
        assert!(history.iter().all(|a| (0.0..=100.0).contains(a)));
        for s in &tb.sentences {
            let t = tagger.tag(s).unwrap();
            assert_eq!(t.len(), s.len());
            assert_eq!(t, tagger.tag(s).unwrap());
            assert!(t.iter().all(|x| tagger.vocab.upos_labels.get(x).is_some()));
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let tb = synthetic_treebank("t", 0, 8, 1);
        let a = train_tagger(&tb, &tb, &EncoderConfig::tiny(), &tiny_train()).unwrap();
        let b = train_tagger(&tb, &tb, &EncoderConfig::tiny(), &tiny_train()).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0.params, b.0.params);
    }

    #[test]
    fn empty_inputs_rejected() {
        let tb = synthetic_treebank("t", 0, 3, 1);
        let empty = Treebank::new("e", vec![]);
        assert!(train_tagger(&tb, &empty, &EncoderConfig::tiny(), &tiny_train()).is_err());
        assert!(train_tagger(&empty, &tb, &EncoderConfig::tiny(), &tiny_train()).is_err());
    }

    #[test]
    fn unreachable_bin_is_reported() {
        let tb = synthetic_treebank("t", 0, 6, 1);
        let schedule = BinSchedule::new(vec![100.0], 0.25).unwrap();
        let mut dev = tb.clone();
        // A tag never seen in training caps accuracy below 100.
        dev.sentences[0].tokens[0].upos = "INTJ".into();
        let opts = CaptureOptions {
            retries: 1,
            ..Default::default()
        };
        let cap = capture_bins(&tb, &dev, &EncoderConfig::tiny(), &tiny_train(), &schedule, &opts).unwrap();
        assert_eq!(cap.attempts.len(), 2);
        assert!(!cap.bins[0].is_captured());
        assert!(cap.bins[0].diagnostic.as_ref().unwrap().contains("above"));
    }

    #[test]
    fn save_load_round_trip() {
        let tb = synthetic_treebank("t", 0, 5, 1);
        let (tagger, _) = train_tagger(&tb, &tb, &EncoderConfig::tiny(), &tiny_train()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ckpt");
        tagger.save(&path).unwrap();
        let back = Tagger::load(&path).unwrap();
        assert_eq!(back.params, tagger.params);
        assert_eq!(back.tag_all(&tb.sentences).unwrap(), tagger.tag_all(&tb.sentences).unwrap());
    }
}
