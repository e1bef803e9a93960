//! Biaffine dependency parser.
//!
//! Tokens (with an artificial root prepended) pass through the shared
//! embedding layer and recurrent encoder. Separate MLPs project each state
//! into arc and relation spaces; a biaffine scorer rates every head for every
//! dependent and a per-label biaffine scorer labels the chosen arcs. Trees
//! are decoded with [`mst_decode`].

pub mod mst;

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use mst::mst_decode;

use crate::conllu::{Sentence, Treebank, EMPTY};
use crate::error::{Error, Result};
use crate::evaluation::evaluate_sentences;
use crate::neural::checkpoint::Checkpoint;
use crate::neural::graph::{log_softmax_rows, Graph, Var};
use crate::neural::layers::{
    Activation, BiLstm, Biaffine, CharEncoder, Embedding, LabelBiaffine, Mlp, Noise, TokenEmbedder,
};
use crate::neural::train::{train, EarlyStopping, Objective};
use crate::neural::vocab::{IndexedSentence, UposSource, Vocab};
use crate::neural::{EncoderConfig, ParamStore, TrainConfig};
use crate::tagger::argmax;
use crate::treebank_ops::seeded_rng;

pub const CHECKPOINT_KIND: &str = "parser";
pub const DEFAULT_AUX_WEIGHT: f64 = 1.0;
const ROOT_LABEL: &str = "root";
const INFER_BATCH: usize = 32;

/// How the parser uses UPOS information.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TagMode {
    /// No UPOS input.
    None,
    /// UPOS input rewritten by the referenced tagger checkpoint.
    Predicted { checkpoint: PathBuf },
    /// Gold UPOS input.
    Gold,
    /// UPOS tagging as an auxiliary task sharing the encoder.
    Multitask { aux_weight: f64 },
}

impl TagMode {
    pub fn uses_upos_input(&self) -> bool {
        matches!(self, TagMode::Predicted { .. } | TagMode::Gold)
    }

    pub fn name(&self) -> &'static str {
        match self {
            TagMode::None => "none",
            TagMode::Predicted { .. } => "pred",
            TagMode::Gold => "gold",
            TagMode::Multitask { .. } => "multi",
        }
    }

    fn upos_source(&self) -> UposSource<'static> {
        if self.uses_upos_input() {
            UposSource::Column
        } else {
            UposSource::Absent
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseResult {
    pub heads: Vec<usize>,
    pub deprels: Vec<String>,
    /// Tag predictions of a multitask parser.
    pub predicted_upos: Option<Vec<String>>,
}

/// Network layout; parameters live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct ParserNet {
    pub embedder: TokenEmbedder,
    pub encoder: BiLstm,
    pub arc_dep: Mlp,
    pub arc_head: Mlp,
    pub rel_dep: Mlp,
    pub rel_head: Mlp,
    pub arc: Biaffine,
    pub rel: LabelBiaffine,
    pub tag_head: Option<Mlp>,
    pub aux_weight: f64,
}

/// Encoder outputs for one batch.
struct Encoded {
    arc_dep: Var,
    arc_head: Var,
    rel_dep: Var,
    rel_head: Var,
    states: Var,
    /// First flat row (the root) of each sentence.
    offsets: Vec<usize>,
}

impl ParserNet {
    pub fn build(cfg: &EncoderConfig, vocab: &Vocab, mode: &TagMode, store: &mut ParamStore, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if vocab.deprels.is_empty() {
            return Err(Error::invalid("no dependency relations in training data"));
        }
        let mut rng = seeded_rng(seed);
        let rng = &mut rng;
        let upos = if mode.uses_upos_input() {
            Some(Embedding::new(store, rng, "upos", vocab.upos_inputs.len(), cfg.upos_dim)?)
        } else {
            None
        };
        let embedder = TokenEmbedder {
            words: Embedding::new(store, rng, "words", vocab.words.len(), cfg.word_dim)?,
            chars: CharEncoder::new(store, rng, "chars", vocab.chars.len(), cfg.char_input_dim, cfg.char_out_dim)?,
            upos,
        };
        let state = cfg.state_dim();
        let encoder = BiLstm::new(
            store,
            rng,
            "encoder",
            cfg.input_dim(mode.uses_upos_input()),
            cfg.hidden_per_direction,
            cfg.num_layers,
        )?;
        let mlp = |store: &mut ParamStore, rng: &mut _, name: &str, out: usize| {
            Mlp::new(store, rng, name, &[state, out], Activation::Relu, Activation::Relu)
        };
        let arc_dep = mlp(store, rng, "arc_dep", cfg.arc_mlp_dim)?;
        let arc_head = mlp(store, rng, "arc_head", cfg.arc_mlp_dim)?;
        let rel_dep = mlp(store, rng, "rel_dep", cfg.rel_mlp_dim)?;
        let rel_head = mlp(store, rng, "rel_head", cfg.rel_mlp_dim)?;
        let arc = Biaffine::new(store, rng, "arc", cfg.arc_mlp_dim, cfg.arc_mlp_dim)?;
        let rel = LabelBiaffine::new(store, rng, "rel", cfg.rel_mlp_dim, cfg.rel_mlp_dim, vocab.deprels.len())?;
        let (tag_head, aux_weight) = match mode {
            TagMode::Multitask { aux_weight } => (
                Some(Mlp::new(
                    store,
                    rng,
                    "tag_mlp",
                    &[state, cfg.tag_mlp_dim, vocab.upos_labels.len()],
                    Activation::Relu,
                    Activation::Identity,
                )?),
                *aux_weight,
            ),
            _ => (None, 0.0),
        };
        Ok(ParserNet {
            embedder,
            encoder,
            arc_dep,
            arc_head,
            rel_dep,
            rel_head,
            arc,
            rel,
            tag_head,
            aux_weight,
        })
    }

    fn encode(
        &self,
        g: &mut Graph<'_>,
        vocab: &Vocab,
        batch: &[&IndexedSentence],
        mut noise: Option<&mut Noise<'_>>,
    ) -> Result<Encoded> {
        if batch.iter().any(|s| !s.has_root) {
            return Err(Error::invalid("parser input lacks the root position"));
        }
        let x = self.embedder.forward(g, batch, vocab, noise.as_deref_mut())?;
        let lengths: Vec<usize> = batch.iter().map(|s| s.words.len()).collect();
        let states = self.encoder.forward(g, x, &lengths, noise);
        let mut offsets = Vec::with_capacity(batch.len());
        let mut o = 0;
        for l in &lengths {
            offsets.push(o);
            o += l;
        }
        Ok(Encoded {
            arc_dep: self.arc_dep.forward(g, states),
            arc_head: self.arc_head.forward(g, states),
            rel_dep: self.rel_dep.forward(g, states),
            rel_head: self.rel_head.forward(g, states),
            states,
            offsets,
        })
    }

    /// Arc scores of sentence `k`: `n × (n+1)`, heads including the root.
    fn arc_scores(&self, g: &mut Graph<'_>, enc: &Encoded, k: usize, n: usize) -> Result<Var> {
        let o = enc.offsets[k];
        let d = g.slice_rows(enc.arc_dep, o + 1, n);
        let h = g.slice_rows(enc.arc_head, o, n + 1);
        self.arc.forward(g, d, h)
    }

    /// Label scores for (flat dependent row, flat head row) pairs.
    fn label_scores(&self, g: &mut Graph<'_>, enc: &Encoded, deps: &[usize], heads: &[usize]) -> Result<Var> {
        let d = g.select_rows(enc.rel_dep, deps);
        let h = g.select_rows(enc.rel_head, heads);
        self.rel.forward(g, d, h)
    }

    /// Tag scores for the word rows of the batch.
    fn tag_scores(&self, g: &mut Graph<'_>, enc: &Encoded, rows: &[usize]) -> Option<Var> {
        self.tag_head.as_ref().map(|mlp| {
            let s = g.select_rows(enc.states, rows);
            mlp.forward(g, s)
        })
    }

    /// Word rows (excluding roots) of every sentence, flat.
    fn word_rows(enc: &Encoded, batch: &[&IndexedSentence]) -> Vec<usize> {
        batch
            .iter()
            .zip(&enc.offsets)
            .flat_map(|(s, &o)| (1..s.words.len()).map(move |i| o + i))
            .collect()
    }

    fn loss(
        &self,
        g: &mut Graph<'_>,
        vocab: &Vocab,
        batch: &[&IndexedSentence],
        noise: Option<&mut Noise<'_>>,
        parse_weight: f64,
    ) -> Result<(Var, usize)> {
        let enc = self.encode(g, vocab, batch, noise)?;
        let mut parts = Vec::new();
        let mut dep_rows = Vec::new();
        let mut head_rows = Vec::new();
        let mut labels = Vec::new();
        let mut words = 0;
        for (k, s) in batch.iter().enumerate() {
            let n = s.len();
            words += n;
            let scores = self.arc_scores(g, &enc, k, n)?;
            parts.push(g.cross_entropy(scores, &s.heads));
            let o = enc.offsets[k];
            for (i, rel) in s.deprels.iter().enumerate() {
                if let Some(rel) = rel {
                    dep_rows.push(o + 1 + i);
                    head_rows.push(o + s.heads[i]);
                    labels.push(*rel);
                }
            }
        }
        if !labels.is_empty() {
            let ls = self.label_scores(g, &enc, &dep_rows, &head_rows)?;
            parts.push(g.cross_entropy(ls, &labels));
        }
        let mut total = parts[0];
        for &p in &parts[1..] {
            total = g.add(total, p);
        }
        if parse_weight != 1.0 {
            total = g.scale(total, parse_weight);
        }
        if let Some(tag_loss) = self.tag_loss(g, &enc, batch) {
            let weighted = g.scale(tag_loss, self.aux_weight);
            total = g.add(total, weighted);
        }
        Ok((total, words))
    }

    fn tag_loss(&self, g: &mut Graph<'_>, enc: &Encoded, batch: &[&IndexedSentence]) -> Option<Var> {
        self.tag_head.as_ref()?;
        let rows = Self::word_rows(enc, batch);
        let mut keep = Vec::new();
        let mut targets = Vec::new();
        for (r, t) in batch.iter().flat_map(|s| s.upos_targets.iter()).enumerate() {
            if let Some(t) = t {
                keep.push(rows[r]);
                targets.push(*t);
            }
        }
        if targets.is_empty() {
            return None;
        }
        let scores = self.tag_scores(g, enc, &keep)?;
        Some(g.cross_entropy(scores, &targets))
    }

    pub fn predict(&self, params: &ParamStore, vocab: &Vocab, sentences: &[IndexedSentence]) -> Result<Vec<ParseResult>> {
        let root_label = vocab.deprels.get(ROOT_LABEL);
        let mut out = Vec::with_capacity(sentences.len());
        for chunk in sentences.chunks(INFER_BATCH) {
            let refs: Vec<&IndexedSentence> = chunk.iter().collect();
            let mut g = Graph::new(params);
            let enc = self.encode(&mut g, vocab, &refs, None)?;
            let mut all_heads = Vec::with_capacity(chunk.len());
            let mut dep_rows = Vec::new();
            let mut head_rows = Vec::new();
            for (k, s) in chunk.iter().enumerate() {
                let n = s.len();
                let scores = self.arc_scores(&mut g, &enc, k, n)?;
                let logp = log_softmax_rows(g.value(scores));
                let mut full = Array2::zeros((n + 1, n + 1));
                full.slice_mut(ndarray::s![1.., ..]).assign(&logp);
                let heads = mst_decode(&full)?;
                let o = enc.offsets[k];
                for (i, &h) in heads.iter().enumerate() {
                    dep_rows.push(o + 1 + i);
                    head_rows.push(o + h);
                }
                all_heads.push(heads);
            }
            let label_scores = self.label_scores(&mut g, &enc, &dep_rows, &head_rows)?;
            let rows = Self::word_rows(&enc, &refs);
            let tag_scores = self.tag_scores(&mut g, &enc, &rows);
            let ls = g.value(label_scores);
            let mut r = 0;
            for heads in all_heads {
                let mut deprels = Vec::with_capacity(heads.len());
                let mut tags = tag_scores.map(|_| Vec::with_capacity(heads.len()));
                for &h in &heads {
                    let label = match (h, root_label) {
                        (0, Some(root)) => root,
                        (_, Some(root)) => argmax(
                            ls.row(r)
                                .iter()
                                .enumerate()
                                .map(|(j, &v)| if j == root { f64::NEG_INFINITY } else { v }),
                        ),
                        (_, None) => argmax(ls.row(r).iter().copied()),
                    };
                    deprels.push(vocab.deprels.item(label).to_owned());
                    if let (Some(tags), Some(ts)) = (tags.as_mut(), tag_scores) {
                        let t = argmax(g.value(ts).row(r).iter().copied());
                        tags.push(vocab.upos_labels.item(t).to_owned());
                    }
                    r += 1;
                }
                out.push(ParseResult {
                    heads,
                    deprels,
                    predicted_upos: tags,
                });
            }
        }
        Ok(out)
    }
}

struct ParsingObjective<'a> {
    net: &'a ParserNet,
    vocab: &'a Vocab,
}

impl Objective for ParsingObjective<'_> {
    type Item = IndexedSentence;

    fn loss(
        &self,
        g: &mut Graph<'_>,
        batch: &[&IndexedSentence],
        noise: Option<&mut Noise<'_>>,
    ) -> Result<(Var, usize)> {
        self.net.loss(g, self.vocab, batch, noise, 1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParserMeta {
    pub mode: TagMode,
    pub dev_las: Option<f64>,
    pub seed: u64,
}

/// A parser ready for inference.
#[derive(Clone, Debug)]
pub struct Parser {
    pub config: EncoderConfig,
    pub vocab: Vocab,
    pub mode: TagMode,
    pub params: ParamStore,
    pub net: ParserNet,
    pub dev_las: Option<f64>,
}

impl Parser {
    /// A freshly initialized parser; parameters depend only on `config.seed`.
    pub fn new(config: EncoderConfig, vocab: Vocab, mode: TagMode) -> Result<Self> {
        let mut params = ParamStore::new();
        let net = ParserNet::build(&config, &vocab, &mode, &mut params, config.seed)?;
        Ok(Parser {
            config,
            vocab,
            mode,
            params,
            net,
            dev_las: None,
        })
    }

    fn index(&self, s: &Sentence) -> Result<IndexedSentence> {
        self.vocab.index(s, true, self.mode.upos_source())
    }

    pub fn parse(&self, s: &Sentence) -> Result<ParseResult> {
        Ok(self.parse_all(std::slice::from_ref(s))?.remove(0))
    }

    pub fn parse_all(&self, sentences: &[Sentence]) -> Result<Vec<ParseResult>> {
        let indexed = sentences.iter().map(|s| self.index(s)).collect::<Result<Vec<_>>>()?;
        self.net.predict(&self.params, &self.vocab, &indexed)
    }

    /// A copy of `tb` with HEAD and DEPREL (and UPOS for multitask parsers)
    /// replaced by predictions. DEPS is cleared.
    pub fn parse_treebank(&self, tb: &Treebank) -> Result<Treebank> {
        let results = self.parse_all(&tb.sentences)?;
        Ok(apply(tb, results))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = ParserMeta {
            mode: self.mode.clone(),
            dev_las: self.dev_las,
            seed: self.config.seed,
        };
        Checkpoint::new(CHECKPOINT_KIND, self.config.clone(), self.vocab.clone(), meta, &self.params)?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint<ParserMeta> = Checkpoint::load(path, CHECKPOINT_KIND)?;
        let mut parser = Parser::new(ck.config.clone(), ck.vocab.clone(), ck.meta.mode.clone())?;
        ck.restore_into(&mut parser.params)?;
        parser.dev_las = ck.meta.dev_las;
        Ok(parser)
    }
}

fn apply(tb: &Treebank, results: Vec<ParseResult>) -> Treebank {
    let mut out = tb.clone();
    for (s, r) in out.sentences.iter_mut().zip(results) {
        for (i, t) in s.tokens.iter_mut().enumerate() {
            t.head = r.heads[i];
            t.deprel = r.deprels[i].clone();
            t.deps = EMPTY.to_owned();
            if let Some(tags) = &r.predicted_upos {
                t.upos = tags[i].clone();
            }
        }
    }
    out
}

/// Train a parser and return the parameters with the best dev LAS.
///
/// In predicted mode the UPOS columns of `train` and `dev` must already
/// hold the referenced tagger's output.
pub fn train_parser(
    train_tb: &Treebank,
    dev: &Treebank,
    mode: &TagMode,
    cfg: &EncoderConfig,
    tcfg: &TrainConfig,
) -> Result<(Parser, Vec<f64>)> {
    if let TagMode::Predicted { checkpoint } = mode {
        if !checkpoint.is_file() {
            return Err(Error::invalid(format!(
                "predicted-tag mode needs a tagger checkpoint; {} does not exist",
                checkpoint.display()
            )));
        }
    }
    if train_tb.token_count() == 0 || dev.token_count() == 0 {
        return Err(Error::invalid("parser training needs non-empty train and dev data"));
    }
    train_tb.validate()?;
    let vocab = Vocab::build(train_tb, 1)?;
    let mut parser = Parser::new(cfg.clone(), vocab, mode.clone())?;
    let data = train_tb
        .sentences
        .iter()
        .map(|s| parser.index(s))
        .collect::<Result<Vec<_>>>()?;
    let dev_ix = dev.sentences.iter().map(|s| parser.index(s)).collect::<Result<Vec<_>>>()?;
    let objective = ParsingObjective {
        net: &parser.net,
        vocab: &parser.vocab,
    };
    let net = parser.net.clone();
    let vocab = parser.vocab.clone();
    let mut monitor = EarlyStopping::new(tcfg.patience, |p: &ParamStore| {
        let results = net.predict(p, &vocab, &dev_ix)?;
        let parsed = apply(dev, results);
        let report = evaluate_sentences(&parsed.sentences, &dev.sentences, false)?;
        Ok(100.0 * report.correct_labeled as f64 / report.tokens.max(1) as f64)
    });
    let mut params = parser.params.clone();
    train(&mut params, &objective, &data, tcfg, cfg.seed, &mut monitor)?;
    let history = monitor.history.clone();
    match monitor.best.take() {
        Some((score, best)) => {
            parser.params = best;
            parser.dev_las = Some(score);
        }
        None => parser.params = params,
    }
    Ok((parser, history))
}
