//! Per-layer gradient checks, one random configuration at a time.

use lowres_core::neural::gradcheck::{check_gradients, random_projection, GradCheck};
use lowres_core::neural::layers::{Activation, BiLstm, Biaffine, CharEncoder, Embedding, LabelBiaffine, Mlp};
use lowres_core::neural::{Graph, ParamStore, Var};
use lowres_core::treebank_ops::{seeded_rng, Rng};
use ndarray::Array2;
use rand::Rng as _;

pub const STEP: f64 = 1e-6;

pub type LayerCheck = fn(u64) -> GradCheck;

pub const LAYERS: [(&str, LayerCheck); 8] = [
    ("embedding", embedding),
    ("mlp", mlp),
    ("bilstm", bilstm),
    ("char encoder", char_encoder),
    ("biaffine", biaffine),
    ("label biaffine", label_biaffine),
    ("cross entropy", cross_entropy),
    ("stacked", stacked_network),
];

fn input(rng: &mut Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

fn lengths(rng: &mut Rng) -> Vec<usize> {
    (0..rng.random_range(1..=3)).map(|_| rng.random_range(1..=4)).collect()
}

fn check(store: &ParamStore, f: impl Fn(&mut Graph<'_>) -> lowres_core::Result<Var>) -> GradCheck {
    check_gradients(store, STEP, f).unwrap()
}

pub fn embedding(c: u64) -> GradCheck {
    let mut rng = seeded_rng(c);
    let mut store = ParamStore::new();
    let rows = rng.random_range(2..8);
    let dim = rng.random_range(1..6);
    let emb = Embedding::new(&mut store, &mut rng, "e", rows, dim).unwrap();
    // Repeated indices accumulate.
    let idx: Vec<usize> = (0..rng.random_range(1..10)).map(|_| rng.random_range(0..rows)).collect();
    let seed = rng.random();
    check(&store, |g| {
        let out = emb.forward(g, &idx);
        Ok(random_projection(g, out, &mut seeded_rng(seed)))
    })
}

pub fn mlp(c: u64) -> GradCheck {
    let acts = [Activation::Tanh, Activation::Relu, Activation::Identity];
    let mut rng = seeded_rng(100 + c);
    let mut store = ParamStore::new();
    let dims: Vec<usize> = (0..rng.random_range(2..=4)).map(|_| rng.random_range(1..6)).collect();
    let mlp = Mlp::new(&mut store, &mut rng, "m", &dims, acts[c as usize % 3], acts[(c as usize / 3) % 3]).unwrap();
    let n = rng.random_range(1..5);
    let x = input(&mut rng, n, dims[0]);
    let seed = rng.random();
    check(&store, |g| {
        let x = g.input(x.clone());
        let out = mlp.forward(g, x);
        Ok(random_projection(g, out, &mut seeded_rng(seed)))
    })
}

pub fn bilstm(c: u64) -> GradCheck {
    let mut rng = seeded_rng(200 + c);
    let mut store = ParamStore::new();
    let d = rng.random_range(1..4);
    let (h, layers) = (rng.random_range(1..4), rng.random_range(1..=2));
    let lstm = BiLstm::new(&mut store, &mut rng, "l", d, h, layers).unwrap();
    let lens = lengths(&mut rng);
    let x = input(&mut rng, lens.iter().sum(), d);
    let seed = rng.random();
    check(&store, |g| {
        let x = g.input(x.clone());
        let out = lstm.forward(g, x, &lens, None);
        Ok(random_projection(g, out, &mut seeded_rng(seed)))
    })
}

pub fn char_encoder(c: u64) -> GradCheck {
    let mut rng = seeded_rng(300 + c);
    let mut store = ParamStore::new();
    let chars = rng.random_range(2..6);
    let (input_dim, output_dim) = (rng.random_range(1..4), rng.random_range(1..4));
    let enc = CharEncoder::new(&mut store, &mut rng, "c", chars, input_dim, output_dim).unwrap();
    let words: Vec<Vec<usize>> = lengths(&mut rng)
        .into_iter()
        .map(|l| (0..l).map(|_| rng.random_range(0..chars)).collect())
        .collect();
    let seed = rng.random();
    check(&store, |g| {
        let refs: Vec<&[usize]> = words.iter().map(|w| w.as_slice()).collect();
        let out = enc.forward(g, &refs);
        Ok(random_projection(g, out, &mut seeded_rng(seed)))
    })
}

pub fn biaffine(c: u64) -> GradCheck {
    let mut rng = seeded_rng(400 + c);
    let mut store = ParamStore::new();
    let (d, h) = (rng.random_range(1..5), rng.random_range(1..5));
    let arc = Biaffine::new(&mut store, &mut rng, "a", d, h).unwrap();
    let n = rng.random_range(1..5);
    // Nonzero weights everywhere so that every term is exercised.
    for id in store.ids().collect::<Vec<_>>() {
        let shape = store.get(id).dim();
        *store.get_mut(id) = input(&mut rng, shape.0, shape.1);
    }
    let dep = input(&mut rng, n, d);
    let head = input(&mut rng, n + 1, h);
    let seed = rng.random();
    check(&store, |g| {
        let (dv, hv) = (g.input(dep.clone()), g.input(head.clone()));
        let out = arc.forward(g, dv, hv)?;
        Ok(random_projection(g, out, &mut seeded_rng(seed)))
    })
}

pub fn label_biaffine(c: u64) -> GradCheck {
    let mut rng = seeded_rng(500 + c);
    let mut store = ParamStore::new();
    let (d, h, l) = (rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..5));
    let rel = LabelBiaffine::new(&mut store, &mut rng, "r", d, h, l).unwrap();
    for id in store.ids().collect::<Vec<_>>() {
        let shape = store.get(id).dim();
        *store.get_mut(id) = input(&mut rng, shape.0, shape.1);
    }
    let n = rng.random_range(1..5);
    let dep = input(&mut rng, n, d);
    let head = input(&mut rng, n, h);
    let seed = rng.random();
    check(&store, |g| {
        let (dv, hv) = (g.input(dep.clone()), g.input(head.clone()));
        let out = rel.forward(g, dv, hv)?;
        Ok(random_projection(g, out, &mut seeded_rng(seed)))
    })
}

pub fn cross_entropy(c: u64) -> GradCheck {
    let mut rng = seeded_rng(600 + c);
    let mut store = ParamStore::new();
    let (n, k) = (rng.random_range(1..6), rng.random_range(2..6));
    let scale = [1.0, 5.0, 20.0][c as usize % 3];
    let logits = store.add("logits", input(&mut rng, n, k).mapv(|v| v * scale)).unwrap();
    let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    check(&store, |g| {
        let x = g.param(logits);
        Ok(g.cross_entropy(x, &targets))
    })
}

pub fn stacked_network(c: u64) -> GradCheck {
    // Embedding, BiLSTM, MLPs, arc scorer and loss in one tape.
    let mut rng = seeded_rng(700 + c);
    let mut store = ParamStore::new();
    let emb = Embedding::new(&mut store, &mut rng, "e", 6, 3).unwrap();
    let lstm = BiLstm::new(&mut store, &mut rng, "l", 3, 2, 1).unwrap();
    let dep = Mlp::new(&mut store, &mut rng, "d", &[4, 3], Activation::Tanh, Activation::Tanh).unwrap();
    let head = Mlp::new(&mut store, &mut rng, "h", &[4, 3], Activation::Tanh, Activation::Tanh).unwrap();
    let arc = Biaffine::new(&mut store, &mut rng, "a", 3, 3).unwrap();
    let n = rng.random_range(1..5);
    let words: Vec<usize> = (0..=n).map(|_| rng.random_range(0..6)).collect();
    let heads: Vec<usize> = (0..n).map(|_| rng.random_range(0..=n)).collect();
    check(&store, |g| {
        let x = emb.forward(g, &words);
        let s = lstm.forward(g, x, &[n + 1], None);
        let d = g.slice_rows(s, 1, n);
        let d = dep.forward(g, d);
        let h = head.forward(g, s);
        let scores = arc.forward(g, d, h)?;
        Ok(g.cross_entropy(scores, &heads))
    })
}
