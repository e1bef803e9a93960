//! Trainable layers built on the [`Graph`] tape.
//!
//! Sequence layers operate on a *flat* batch layout: the token rows of every
//! sentence in a mini-batch are stacked into one matrix, and recurrent
//! layers step through all sentences at once, reading the rows that belong
//! to each time step.

use std::collections::HashMap;

use ndarray::Array2;
use rand::Rng as _;

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use super::vocab::IndexedSentence;
use crate::error::{Error, Result};
use crate::treebank_ops::Rng;

/// Bound for uniform embedding initialization.
pub const EMBEDDING_INIT: f64 = 0.1;

/// Training-time stochasticity; absent at inference.
pub struct Noise<'r> {
    pub dropout: f64,
    pub word_dropout: f64,
    pub rng: &'r mut Rng,
}

/// Inverted dropout. A no-op without noise or at rate 0.
pub fn dropout(g: &mut Graph<'_>, x: Var, noise: Option<&mut Noise<'_>>) -> Var {
    let noise = match noise {
        Some(n) if n.dropout > 0.0 => n,
        _ => return x,
    };
    let keep = 1.0 - noise.dropout;
    let shape = g.shape(x);
    let mask = Array2::from_shape_simple_fn(shape, || {
        if noise.rng.random::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    });
    g.mul_const(x, mask)
}

#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub dim: usize,
}

impl Embedding {
    pub fn new(store: &mut ParamStore, rng: &mut Rng, name: &str, rows: usize, dim: usize) -> Result<Self> {
        let table = store.add_uniform(format!("{}.table", name), (rows, dim), EMBEDDING_INIT, rng)?;
        Ok(Embedding { table, dim })
    }

    pub fn forward(&self, g: &mut Graph<'_>, indices: &[usize]) -> Var {
        g.lookup(self.table, indices)
    }
}

/// `y = x·W + b`
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, rng: &mut Rng, name: &str, input: usize, output: usize) -> Result<Self> {
        Ok(Linear {
            weight: store.add_scaled(format!("{}.weight", name), (input, output), rng)?,
            bias: store.add_zeros(format!("{}.bias", name), (1, output))?,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let xw = g.matmul(x, w);
        g.add(xw, b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

/// A stack of dense layers.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<(Linear, Activation)>,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        name: &str,
        dims: &[usize],
        hidden: Activation,
        last: Activation,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        for (i, w) in dims.windows(2).enumerate() {
            let act = if i + 2 == dims.len() { last } else { hidden };
            layers.push((Linear::new(store, rng, &format!("{}.{}", name, i), w[0], w[1])?, act));
        }
        Ok(Mlp { layers })
    }

    pub fn forward(&self, g: &mut Graph<'_>, mut x: Var) -> Var {
        for (linear, act) in &self.layers {
            x = linear.forward(g, x);
            x = match act {
                Activation::Relu => g.relu(x),
                Activation::Tanh => g.tanh(x),
                Activation::Identity => x,
            };
        }
        x
    }
}

/// One direction of an LSTM layer. Gates are laid out `[input, forget,
/// candidate, output]` along the columns.
#[derive(Clone, Debug)]
pub struct LstmDirection {
    pub w_in: ParamId,
    pub w_rec: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

/// For each step, the flat input row feeding each batch slot.
pub type Schedule = Vec<Vec<Option<usize>>>;

/// Forward and reverse step schedules for sequences stored contiguously.
pub fn schedules(lengths: &[usize]) -> (Schedule, Schedule) {
    let max = lengths.iter().copied().max().unwrap_or(0);
    let mut offsets = Vec::with_capacity(lengths.len());
    let mut o = 0;
    for &l in lengths {
        offsets.push(o);
        o += l;
    }
    let mut fwd = Vec::with_capacity(max);
    let mut bwd = Vec::with_capacity(max);
    for t in 0..max {
        fwd.push(
            lengths
                .iter()
                .zip(&offsets)
                .map(|(&l, &o)| (t < l).then_some(o + t))
                .collect(),
        );
        bwd.push(
            lengths
                .iter()
                .zip(&offsets)
                .map(|(&l, &o)| (t < l).then(|| o + l - 1 - t))
                .collect(),
        );
    }
    (fwd, bwd)
}

impl LstmDirection {
    pub fn new(store: &mut ParamStore, rng: &mut Rng, name: &str, input: usize, hidden: usize) -> Result<Self> {
        let w_in = store.add_scaled(format!("{}.w_in", name), (input, 4 * hidden), rng)?;
        let w_rec = store.add_scaled(format!("{}.w_rec", name), (hidden, 4 * hidden), rng)?;
        let mut b = Array2::zeros((1, 4 * hidden));
        b.slice_mut(ndarray::s![.., hidden..2 * hidden]).fill(1.0);
        let bias = store.add(format!("{}.bias", name), b)?;
        Ok(LstmDirection {
            w_in,
            w_rec,
            bias,
            hidden,
        })
    }

    /// Run over input projections `proj` (flat rows × 4h, bias excluded)
    /// following `schedule`. Returns the hidden state matrix of every step
    /// (batch slots × h).
    pub fn run(&self, g: &mut Graph<'_>, proj: Var, schedule: &Schedule) -> Vec<Var> {
        let h = self.hidden;
        let width = 4 * h;
        let mut states = Vec::with_capacity(schedule.len());
        let mut prev: Option<(Var, Var)> = None;
        for rows in schedule {
            let x = g.gather(rows.iter().map(|r| r.map(|i| (proj, i))).collect(), width);
            let b = g.param(self.bias);
            let mut gates = g.add(x, b);
            if let Some((h_prev, _)) = prev {
                let w = g.param(self.w_rec);
                let rec = g.matmul(h_prev, w);
                gates = g.add(gates, rec);
            }
            let i = g.slice_cols(gates, 0, h);
            let i = g.sigmoid(i);
            let f = g.slice_cols(gates, h, h);
            let f = g.sigmoid(f);
            let cand = g.slice_cols(gates, 2 * h, h);
            let cand = g.tanh(cand);
            let o = g.slice_cols(gates, 3 * h, h);
            let o = g.sigmoid(o);
            let mut c = g.mul(i, cand);
            if let Some((_, c_prev)) = prev {
                let kept = g.mul(f, c_prev);
                c = g.add(c, kept);
            }
            let tc = g.tanh(c);
            let h_t = g.mul(o, tc);
            states.push(h_t);
            prev = Some((h_t, c));
        }
        states
    }
}

/// Stacked bidirectional LSTM over flat batches.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub layers: Vec<(LstmDirection, LstmDirection)>,
}

impl BiLstm {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        name: &str,
        input: usize,
        hidden: usize,
        num_layers: usize,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        let mut d = input;
        for l in 0..num_layers {
            let fwd = LstmDirection::new(store, rng, &format!("{}.l{}.fwd", name, l), d, hidden)?;
            let bwd = LstmDirection::new(store, rng, &format!("{}.l{}.bwd", name, l), d, hidden)?;
            layers.push((fwd, bwd));
            d = 2 * hidden;
        }
        Ok(BiLstm { layers })
    }

    pub fn output_dim(&self) -> usize {
        2 * self.layers.last().map(|l| l.0.hidden).unwrap_or(0)
    }

    /// `x` holds the rows of all sequences back to back; the output keeps
    /// that layout with forward and backward states concatenated.
    pub fn forward(
        &self,
        g: &mut Graph<'_>,
        x: Var,
        lengths: &[usize],
        mut noise: Option<&mut Noise<'_>>,
    ) -> Var {
        let (fwd_sched, bwd_sched) = schedules(lengths);
        let mut input = x;
        for (fwd, bwd) in &self.layers {
            let wf = g.param(fwd.w_in);
            let pf = g.matmul(input, wf);
            let steps_f = fwd.run(g, pf, &fwd_sched);
            let wb = g.param(bwd.w_in);
            let pb = g.matmul(input, wb);
            let steps_b = bwd.run(g, pb, &bwd_sched);

            let mut rows_f = Vec::new();
            let mut rows_b = Vec::new();
            for (slot, &l) in lengths.iter().enumerate() {
                for p in 0..l {
                    rows_f.push(Some((steps_f[p], slot)));
                    rows_b.push(Some((steps_b[l - 1 - p], slot)));
                }
            }
            let out_f = g.gather(rows_f, fwd.hidden);
            let out_b = g.gather(rows_b, bwd.hidden);
            input = g.concat_cols(&[out_f, out_b]);
            input = dropout(g, input, noise.as_deref_mut());
        }
        input
    }
}

/// Word representations from a single-layer bidirectional LSTM over
/// characters; the final states of both directions are projected.
#[derive(Clone, Debug)]
pub struct CharEncoder {
    pub embedding: Embedding,
    pub fwd: LstmDirection,
    pub bwd: LstmDirection,
    pub projection: Linear,
}

impl CharEncoder {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        name: &str,
        num_chars: usize,
        input_dim: usize,
        output_dim: usize,
    ) -> Result<Self> {
        Ok(CharEncoder {
            embedding: Embedding::new(store, rng, &format!("{}.embedding", name), num_chars, input_dim)?,
            fwd: LstmDirection::new(store, rng, &format!("{}.fwd", name), input_dim, output_dim)?,
            bwd: LstmDirection::new(store, rng, &format!("{}.bwd", name), input_dim, output_dim)?,
            projection: Linear::new(store, rng, &format!("{}.projection", name), 2 * output_dim, output_dim)?,
        })
    }

    /// One output row per word. Every word needs at least one character.
    pub fn forward(&self, g: &mut Graph<'_>, words: &[&[usize]]) -> Var {
        let lengths: Vec<usize> = words.iter().map(|w| w.len()).collect();
        assert!(lengths.iter().all(|&l| l > 0), "empty character sequence");
        let flat: Vec<usize> = words.iter().flat_map(|w| w.iter().copied()).collect();
        let emb = self.embedding.forward(g, &flat);
        let (fwd_sched, bwd_sched) = schedules(&lengths);
        let wf = g.param(self.fwd.w_in);
        let pf = g.matmul(emb, wf);
        let steps_f = self.fwd.run(g, pf, &fwd_sched);
        let wb = g.param(self.bwd.w_in);
        let pb = g.matmul(emb, wb);
        let steps_b = self.bwd.run(g, pb, &bwd_sched);
        let last_f = g.gather(
            lengths.iter().enumerate().map(|(s, &l)| Some((steps_f[l - 1], s))).collect(),
            self.fwd.hidden,
        );
        let last_b = g.gather(
            lengths.iter().enumerate().map(|(s, &l)| Some((steps_b[l - 1], s))).collect(),
            self.bwd.hidden,
        );
        let both = g.concat_cols(&[last_f, last_b]);
        self.projection.forward(g, both)
    }
}

/// Arc scorer: `S = D·U·Hᵀ + D·w_dep + (H·w_headᵀ)ᵀ + b`, where row `i`
/// scores every candidate head for dependent `i`.
#[derive(Clone, Debug)]
pub struct Biaffine {
    pub u: ParamId,
    pub w_head: ParamId,
    pub w_dep: ParamId,
    pub bias: ParamId,
}

impl Biaffine {
    pub fn new(store: &mut ParamStore, rng: &mut Rng, name: &str, dep_dim: usize, head_dim: usize) -> Result<Self> {
        Ok(Biaffine {
            u: store.add_scaled(format!("{}.u", name), (dep_dim, head_dim), rng)?,
            w_head: store.add_scaled(format!("{}.w_head", name), (1, head_dim), rng)?,
            w_dep: store.add_scaled(format!("{}.w_dep", name), (dep_dim, 1), rng)?,
            bias: store.add_zeros(format!("{}.bias", name), (1, 1))?,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, dep: Var, head: Var) -> Result<Var> {
        let (_, dd) = g.shape(dep);
        let (_, hd) = g.shape(head);
        let (ud, uh) = g.params().get(self.u).dim();
        if dd != ud || hd != uh {
            return Err(Error::Shape(format!(
                "biaffine expects {}/{} dims, got {}/{}",
                ud, uh, dd, hd
            )));
        }
        let u = g.param(self.u);
        let du = g.matmul(dep, u);
        let bilinear = g.matmul_t(du, head);
        let wh = g.param(self.w_head);
        let head_term = g.matmul_t(wh, head);
        let wd = g.param(self.w_dep);
        let dep_term = g.matmul(dep, wd);
        let b = g.param(self.bias);
        let s = g.add(bilinear, head_term);
        let s = g.add(s, dep_term);
        Ok(g.add(s, b))
    }
}

/// Per-label biaffine scorer for (dependent, selected head) pairs.
#[derive(Clone, Debug)]
pub struct LabelBiaffine {
    pub u: ParamId,
    pub w: ParamId,
    pub bias: ParamId,
    pub labels: usize,
    pub head_dim: usize,
}

impl LabelBiaffine {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        name: &str,
        dep_dim: usize,
        head_dim: usize,
        labels: usize,
    ) -> Result<Self> {
        let bound = (6.0 / (dep_dim + head_dim) as f64).sqrt();
        Ok(LabelBiaffine {
            u: store.add_uniform(format!("{}.u", name), (dep_dim, labels * head_dim), bound, rng)?,
            w: store.add_scaled(format!("{}.w", name), (dep_dim + head_dim, labels), rng)?,
            bias: store.add_zeros(format!("{}.bias", name), (1, labels))?,
            labels,
            head_dim,
        })
    }

    /// `dep` and `head` have one row per dependent; the result is `n × labels`.
    pub fn forward(&self, g: &mut Graph<'_>, dep: Var, head: Var) -> Result<Var> {
        if g.shape(dep).0 != g.shape(head).0 || g.shape(head).1 != self.head_dim {
            return Err(Error::Shape(format!(
                "label scorer got {:?} and {:?}",
                g.shape(dep),
                g.shape(head)
            )));
        }
        let u = g.param(self.u);
        let du = g.matmul(dep, u);
        let bilinear = g.grouped_row_dot(du, head);
        let both = g.concat_cols(&[dep, head]);
        let w = g.param(self.w);
        let linear = g.matmul(both, w);
        let b = g.param(self.bias);
        let s = g.add(bilinear, linear);
        Ok(g.add(s, b))
    }
}

/// Word embedding ⊕ character encoding ⊕ optional UPOS embedding.
#[derive(Clone, Debug)]
pub struct TokenEmbedder {
    pub words: Embedding,
    pub chars: CharEncoder,
    pub upos: Option<Embedding>,
}

impl TokenEmbedder {
    pub fn output_dim(&self) -> usize {
        self.words.dim + self.chars.projection_dim() + self.upos.as_ref().map_or(0, |e| e.dim)
    }

    /// Flat token representations for a batch. Singleton words are
    /// replaced by `<unk>` according to `noise`, and dropout is applied to
    /// the concatenated vectors.
    pub fn forward(
        &self,
        g: &mut Graph<'_>,
        batch: &[&IndexedSentence],
        vocab: &super::vocab::Vocab,
        mut noise: Option<&mut Noise<'_>>,
    ) -> Result<Var> {
        let mut words = Vec::new();
        for s in batch {
            match noise.as_deref_mut() {
                Some(n) => words.extend(vocab.word_dropout(&s.words, n.word_dropout, n.rng)),
                None => words.extend_from_slice(&s.words),
            }
        }
        let word_emb = self.words.forward(g, &words);

        // Encode each distinct character sequence once.
        let mut unique: Vec<&[usize]> = Vec::new();
        let mut seen: HashMap<&[usize], usize> = HashMap::new();
        let mut rows = Vec::with_capacity(words.len());
        for s in batch {
            for w in &s.chars {
                let idx = *seen.entry(w.as_slice()).or_insert_with(|| {
                    unique.push(w.as_slice());
                    unique.len() - 1
                });
                rows.push(idx);
            }
        }
        let encoded = self.chars.forward(g, &unique);
        let char_repr = g.select_rows(encoded, &rows);

        let mut parts = vec![word_emb, char_repr];
        if let Some(upos) = &self.upos {
            let mut tags = Vec::with_capacity(words.len());
            for s in batch {
                match &s.upos {
                    Some(t) => tags.extend_from_slice(t),
                    None => {
                        return Err(Error::invalid(
                            "model uses UPOS features but the input carries none",
                        ))
                    }
                }
            }
            parts.push(upos.forward(g, &tags));
        }
        let x = g.concat_cols(&parts);
        Ok(dropout(g, x, noise))
    }
}

impl CharEncoder {
    pub fn projection_dim(&self) -> usize {
        self.fwd.hidden
    }
}
