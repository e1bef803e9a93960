//! A reverse-mode automatic differentiation tape over dense `f64` matrices.
//!
//! A [`Graph`] borrows the parameter store for the duration of one forward
//! pass. Every operation appends a node holding its output value; calling
//! [`Graph::backward`] on a scalar node walks the tape in reverse and
//! returns gradients for every parameter.

use ndarray::{s, Array2, Axis};

use super::params::{Gradients, ParamId, ParamStore};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Param(ParamId),
    Input,
    Lookup { table: ParamId, rows: Vec<usize> },
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    /// Second operand may broadcast: same shape, `1×m`, `n×1` or `1×1`.
    Add(Var, Var),
    Mul(Var, Var),
    /// Elementwise product with the constant held in `aux`.
    MulConst(Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    /// Row `r` of the output is row `i` of node `v`, or zeros.
    Gather(Vec<Option<(Var, usize)>>),
    /// `out[i, l] = Σ_m a[i, l·k + m] · b[i, m]`
    GroupedRowDot(Var, Var),
    /// Summed negative log-likelihood; `aux` holds the row softmax.
    CrossEntropy { logits: Var, targets: Vec<usize> },
    Sum(Var),
}

struct Node {
    value: Array2<f64>,
    op: Op,
    aux: Option<Array2<f64>>,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax, numerically stabilized.
pub fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Row-wise log-softmax.
pub fn log_softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::with_capacity(1024),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        match self.nodes[v.0].op {
            Op::Param(p) => self.params.get(p),
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            op,
            aux: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, p: ParamId) -> Var {
        self.nodes.push(Node {
            value: Array2::zeros((0, 0)),
            op: Op::Param(p),
            aux: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Input)
    }

    /// Rows of an embedding table.
    pub fn lookup(&mut self, table: ParamId, rows: &[usize]) -> Var {
        let t = self.params.get(table);
        let mut out = Array2::zeros((rows.len(), t.ncols()));
        for (r, &i) in rows.iter().enumerate() {
            out.row_mut(r).assign(&t.row(i));
        }
        self.push(
            out,
            Op::Lookup {
                table,
                rows: rows.to_vec(),
            },
        )
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(&self.value(b).t());
        self.push(out, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        assert!(
            (br == ar || br == 1) && (bc == ac || bc == 1),
            "cannot broadcast {}x{} onto {}x{}",
            br,
            bc,
            ar,
            ac
        );
        let out = self.value(a) + self.value(b);
        self.push(out, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "elementwise shape mismatch");
        let out = self.value(a) * self.value(b);
        self.push(out, Op::Mul(a, b))
    }

    pub fn mul_const(&mut self, a: Var, c: Array2<f64>) -> Var {
        assert_eq!(self.shape(a), c.dim(), "constant shape mismatch");
        let out = self.value(a) * &c;
        let v = self.push(out, Op::MulConst(a));
        self.nodes[v.0].aux = Some(c);
        v
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a) * factor;
        self.push(out, Op::Scale(a, factor))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|v| v.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("row counts differ in concat_cols");
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(0), &views).expect("column counts differ in concat_rows");
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let out = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let out = self.value(a).slice(s![start..start + len, ..]).to_owned();
        self.push(out, Op::SliceRows(a, start))
    }

    /// Assemble a matrix row by row from other nodes; `None` gives a zero row.
    pub fn gather(&mut self, rows: Vec<Option<(Var, usize)>>, width: usize) -> Var {
        let mut out = Array2::zeros((rows.len(), width));
        for (r, src) in rows.iter().enumerate() {
            if let Some((v, i)) = *src {
                out.row_mut(r).assign(&self.value(v).row(i));
            }
        }
        self.push(out, Op::Gather(rows))
    }

    /// Rows `indices` of `a`.
    pub fn select_rows(&mut self, a: Var, indices: &[usize]) -> Var {
        let width = self.shape(a).1;
        self.gather(indices.iter().map(|&i| Some((a, i))).collect(), width)
    }

    pub fn grouped_row_dot(&mut self, a: Var, b: Var) -> Var {
        let (n, lk) = self.shape(a);
        let (bn, k) = self.shape(b);
        assert!(bn == n && k > 0 && lk % k == 0, "grouped_row_dot shape mismatch");
        let groups = lk / k;
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = Array2::zeros((n, groups));
        for i in 0..n {
            for l in 0..groups {
                let mut acc = 0.0;
                for m in 0..k {
                    acc += av[[i, l * k + m]] * bv[[i, m]];
                }
                out[[i, l]] = acc;
            }
        }
        self.push(out, Op::GroupedRowDot(a, b))
    }

    /// Sum over rows of `-log softmax(logits)[row, target]`, as a `1×1` node.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let x = self.value(logits);
        assert_eq!(x.nrows(), targets.len(), "one target per row");
        let logp = log_softmax_rows(x);
        let nll: f64 = targets
            .iter()
            .enumerate()
            .map(|(r, &t)| -logp[[r, t]])
            .sum();
        let probs = logp.mapv(f64::exp);
        let v = self.push(
            Array2::from_elem((1, 1), nll),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
            },
        );
        self.nodes[v.0].aux = Some(probs);
        v
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).sum();
        self.push(Array2::from_elem((1, 1), total), Op::Sum(a))
    }

    /// Scalar value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let x = self.value(v);
        assert_eq!(x.dim(), (1, 1), "not a scalar node");
        x[[0, 0]]
    }

    /// Gradients of the scalar node `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut pgrads = Gradients::zeros_like(self.params);
        let mut grads: Vec<Option<Array2<f64>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Array2::ones(self.shape(loss)));

        fn slot(
            grads: &mut [Option<Array2<f64>>],
            v: Var,
            shape: (usize, usize),
        ) -> &mut Array2<f64> {
            grads[v.0].get_or_insert_with(|| Array2::zeros(shape))
        }

        for i in (0..=loss.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => (),
                Op::Param(p) => *pgrads.get_mut(*p) += &g,
                Op::Lookup { table, rows } => {
                    let t = pgrads.get_mut(*table);
                    for (r, &row) in rows.iter().enumerate() {
                        let mut dst = t.row_mut(row);
                        dst += &g.row(r);
                    }
                }
                Op::MatMul(a, b) => {
                    let da = g.dot(&self.value(*b).t());
                    let db = self.value(*a).t().dot(&g);
                    *slot(&mut grads, *a, da.dim()) += &da;
                    *slot(&mut grads, *b, db.dim()) += &db;
                }
                Op::MatMulT(a, b) => {
                    let da = g.dot(self.value(*b));
                    let db = g.t().dot(self.value(*a));
                    *slot(&mut grads, *a, da.dim()) += &da;
                    *slot(&mut grads, *b, db.dim()) += &db;
                }
                Op::Add(a, b) => {
                    let bshape = self.shape(*b);
                    let db = reduce_to(&g, bshape);
                    *slot(&mut grads, *b, bshape) += &db;
                    *slot(&mut grads, *a, g.dim()) += &g;
                }
                Op::Mul(a, b) => {
                    let da = &g * self.value(*b);
                    let db = &g * self.value(*a);
                    *slot(&mut grads, *a, da.dim()) += &da;
                    *slot(&mut grads, *b, db.dim()) += &db;
                }
                Op::MulConst(a) => {
                    let da = &g * node.aux.as_ref().unwrap();
                    *slot(&mut grads, *a, da.dim()) += &da;
                }
                Op::Scale(a, f) => {
                    slot(&mut grads, *a, g.dim()).scaled_add(*f, &g);
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let mut da = g;
                    ndarray::Zip::from(&mut da)
                        .and(y)
                        .for_each(|d, &y| *d *= y * (1.0 - y));
                    *slot(&mut grads, *a, da.dim()) += &da;
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let mut da = g;
                    ndarray::Zip::from(&mut da)
                        .and(y)
                        .for_each(|d, &y| *d *= 1.0 - y * y);
                    *slot(&mut grads, *a, da.dim()) += &da;
                }
                Op::Relu(a) => {
                    let y = &node.value;
                    let mut da = g;
                    ndarray::Zip::from(&mut da).and(y).for_each(|d, &y| {
                        if y <= 0.0 {
                            *d = 0.0
                        }
                    });
                    *slot(&mut grads, *a, da.dim()) += &da;
                }
                Op::ConcatCols(parts) => {
                    let mut col = 0;
                    for &p in parts {
                        let shape = self.shape(p);
                        let part = g.slice(s![.., col..col + shape.1]);
                        *slot(&mut grads, p, shape) += &part;
                        col += shape.1;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut row = 0;
                    for &p in parts {
                        let shape = self.shape(p);
                        let part = g.slice(s![row..row + shape.0, ..]);
                        *slot(&mut grads, p, shape) += &part;
                        row += shape.0;
                    }
                }
                Op::SliceCols(a, start) => {
                    let shape = self.shape(*a);
                    let w = g.ncols();
                    let mut dst = slot(&mut grads, *a, shape).slice_mut(s![.., *start..*start + w]);
                    dst += &g;
                }
                Op::SliceRows(a, start) => {
                    let shape = self.shape(*a);
                    let h = g.nrows();
                    let mut dst = slot(&mut grads, *a, shape).slice_mut(s![*start..*start + h, ..]);
                    dst += &g;
                }
                Op::Gather(rows) => {
                    for (r, src) in rows.iter().enumerate() {
                        if let Some((v, row)) = *src {
                            let shape = self.shape(v);
                            let mut dst = slot(&mut grads, v, shape).row_mut(row);
                            dst += &g.row(r);
                        }
                    }
                }
                Op::GroupedRowDot(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let (n, k) = bv.dim();
                    let groups = g.ncols();
                    let mut da = Array2::zeros(av.dim());
                    let mut db = Array2::zeros(bv.dim());
                    for i in 0..n {
                        for l in 0..groups {
                            let gil = g[[i, l]];
                            for m in 0..k {
                                da[[i, l * k + m]] += gil * bv[[i, m]];
                                db[[i, m]] += gil * av[[i, l * k + m]];
                            }
                        }
                    }
                    *slot(&mut grads, *a, da.dim()) += &da;
                    *slot(&mut grads, *b, db.dim()) += &db;
                }
                Op::CrossEntropy { logits, targets } => {
                    let upstream = g[[0, 0]];
                    let mut d = node.aux.as_ref().unwrap().clone();
                    for (r, &t) in targets.iter().enumerate() {
                        d[[r, t]] -= 1.0;
                    }
                    d.mapv_inplace(|v| v * upstream);
                    *slot(&mut grads, *logits, d.dim()) += &d;
                }
                Op::Sum(a) => {
                    let shape = self.shape(*a);
                    let upstream = g[[0, 0]];
                    slot(&mut grads, *a, shape).mapv_inplace(|v| v + upstream);
                }
            }
        }
        pgrads
    }
}

/// Sum `g` down to a broadcast operand's shape.
fn reduce_to(g: &Array2<f64>, shape: (usize, usize)) -> Array2<f64> {
    let mut out = g.clone();
    if shape.0 == 1 && out.nrows() != 1 {
        out = out.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape.1 == 1 && out.ncols() != 1 {
        out = out.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    out
}
