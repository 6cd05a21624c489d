//! Tape-based reverse-mode automatic differentiation over 2-D matrices.
//!
//! A [`Graph`] records every operation eagerly; [`Graph::backward`] walks the
//! tape in reverse and accumulates parameter gradients into a
//! [`ParamGrads`] buffer, so gradients of several examples can be summed
//! before an optimizer step.

use super::matrix::{gemm, layer_norm_rows, matmul, softmax_rows, AttnMask, Matrix, Real};
use super::params::{ParamId, ParamStore};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Input,
    Param(ParamId),
    MatMul { a: Var, b: Var, tb: bool },
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Softmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Matrix<T>, inv_std: Vec<T> },
    Gather { table: Var, ids: Vec<u32> },
    SliceCols { a: Var, start: usize },
    ConcatCols(Vec<Var>),
    Mean(Vec<Var>),
    RowMean { inputs: Vec<Var>, denom: Vec<T> },
    CrossEntropy { logits: Var, targets: Vec<u32>, weights: Vec<T>, probs: Matrix<T> },
    Dropout { a: Var, mask: Vec<T> },
}

struct Node<T> {
    value: Option<Matrix<T>>,
    op: Op<T>,
    needs_grad: bool,
}

/// Accumulated gradients, one matrix per parameter.
pub struct ParamGrads<T> {
    pub grads: Vec<Matrix<T>>,
}

impl<T: Real> ParamGrads<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        ParamGrads {
            grads: store.values().iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect(),
        }
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|x| *x = T::zero());
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.data().iter())
            .map(|x| {
                let v = x.to_f64().unwrap();
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: T) {
        self.grads.iter_mut().for_each(|g| g.scale_assign(s));
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().all(Matrix::all_finite)
    }
}

pub struct Graph<'p, T: Real> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_vars: Vec<Option<Var>>,
}

impl<'p, T: Real> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, m: Matrix<T>) -> Var {
        self.push(m, Op::Input, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.index()] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.index()] = Some(v);
        v
    }

    /// `a * b`, or `a * b^T` when `tb`.
    pub fn matmul(&mut self, a: Var, b: Var, tb: bool) -> Var {
        let out = matmul(self.value(a), false, self.value(b), tb);
        let ng = self.needs(a) || self.needs(b);
        self.push(out, Op::MatMul { a, b, tb }, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(out, Op::Add(a, b), ng)
    }

    /// Adds a `1 x cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.rows(), 1, "add_row expects a row vector");
        let mut out = self.value(a).clone();
        assert_eq!(out.cols(), r.cols(), "add_row width");
        let rv = r.row(0).to_vec();
        for i in 0..out.rows() {
            out.row_mut(i).iter_mut().zip(&rv).for_each(|(x, &b)| *x += b);
        }
        let ng = self.needs(a) || self.needs(row);
        self.push(out, Op::AddRow(a, row), ng)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).map(|x| x * s);
        let ng = self.needs(a);
        self.push(out, Op::Scale(a, s), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        let ng = self.needs(a);
        self.push(out, Op::Relu(a), ng)
    }

    pub fn softmax(&mut self, a: Var, mask: &AttnMask) -> Var {
        let mut out = self.value(a).clone();
        softmax_rows(&mut out, mask);
        let ng = self.needs(a);
        self.push(out, Op::Softmax(a), ng)
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let (out, xhat, inv_std) = layer_norm_rows(self.value(x), self.value(gain).row(0), self.value(bias).row(0));
        let ng = self.needs(x) || self.needs(gain) || self.needs(bias);
        self.push(out, Op::LayerNorm { x, gain, bias, xhat, inv_std }, ng)
    }

    /// Rows of `table` selected by `ids`.
    pub fn gather(&mut self, table: Var, ids: &[u32]) -> Var {
        let t = self.value(table);
        let mut out = Matrix::zeros(ids.len(), t.cols());
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(id as usize));
        }
        let ng = self.needs(table);
        self.push(out, Op::Gather { table, ids: ids.to_vec() }, ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let out = self.value(a).slice_cols(start, width);
        let ng = self.needs(a);
        self.push(out, Op::SliceCols { a, start }, ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for &p in parts {
                let src = self.value(p);
                assert_eq!(src.rows(), rows, "concat rows");
                out.row_mut(r)[c0..c0 + src.cols()].copy_from_slice(src.row(r));
                c0 += src.cols();
            }
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(out, Op::ConcatCols(parts.to_vec()), ng)
    }

    /// Element-wise mean of equally shaped nodes, summed in list order.
    pub fn mean(&mut self, parts: &[Var]) -> Var {
        let mut out = self.value(parts[0]).clone();
        for &p in &parts[1..] {
            out.add_assign(self.value(p));
        }
        out.scale_assign(T::one() / T::from_usize(parts.len()).unwrap());
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(out, Op::Mean(parts.to_vec()), ng)
    }

    /// Position-wise mean of matrices with possibly different row counts.
    ///
    /// Row `j` of the result averages row `j` of every input that has one.
    /// With `strict`, the divisor is always the number of inputs (shorter
    /// inputs count as zero rows); otherwise it is the number of inputs
    /// present at that position.
    pub fn row_mean(&mut self, parts: &[Var], strict: bool) -> Var {
        let rows = parts.iter().map(|&p| self.value(p).rows()).max().unwrap_or(0);
        let cols = self.value(parts[0]).cols();
        let mut out = Matrix::zeros(rows, cols);
        let mut count = vec![0usize; rows];
        for &p in parts {
            let m = self.value(p);
            for r in 0..m.rows() {
                out.row_mut(r).iter_mut().zip(m.row(r)).for_each(|(o, &x)| *o += x);
                count[r] += 1;
            }
        }
        let denom: Vec<T> = count
            .iter()
            .map(|&c| T::from_usize(if strict { parts.len() } else { c }).unwrap())
            .collect();
        for (r, &d) in denom.iter().enumerate() {
            out.row_mut(r).iter_mut().for_each(|x| *x /= d);
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(out, Op::RowMean { inputs: parts.to_vec(), denom }, ng)
    }

    /// Weighted sum over rows of `-log softmax(logits)[target]`, as a `1 x 1` node.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[u32], weights: &[T]) -> Var {
        let l = self.value(logits);
        assert_eq!(l.rows(), targets.len(), "one target per logit row");
        assert_eq!(targets.len(), weights.len(), "one weight per target");
        let mut probs = l.clone();
        softmax_rows(&mut probs, &AttnMask::None);
        let mut total = T::zero();
        for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
            if w != T::zero() {
                let row = l.row(r);
                let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
                let lse = max + row.iter().fold(T::zero(), |a, &b| a + (b - max).exp()).ln();
                total += w * (lse - row[t as usize]);
            }
        }
        let ng = self.needs(logits);
        self.push(
            Matrix::filled(1, 1, total),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                probs,
            },
            ng,
        )
    }

    /// Multiplies element-wise by a fixed (already rescaled) mask.
    pub fn dropout(&mut self, a: Var, mask: Vec<T>) -> Var {
        let v = self.value(a);
        assert_eq!(v.data().len(), mask.len(), "dropout mask size");
        let out = Matrix::from_vec(v.rows(), v.cols(), v.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect());
        let ng = self.needs(a);
        self.push(out, Op::Dropout { a, mask }, ng)
    }

    /// Back-propagates `seed * d(root)/d(params)` into `out`.
    pub fn backward(&self, root: Var, seed: T, out: &mut ParamGrads<T>) {
        assert_eq!(self.shape(root), (1, 1), "backward from a scalar");
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Matrix::filled(1, 1, seed));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::Param(id) => out.grads[id.index()].add_assign(&g),
                Op::MatMul { a, b, tb } => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if self.needs(*a) {
                        let ga = slot(&mut grads, *a, va.shape());
                        // c = a b  -> ga += g b^T ; c = a b^T -> ga += g b
                        gemm(T::one(), &g, false, vb, !*tb, T::one(), ga);
                    }
                    if self.needs(*b) {
                        let gb = slot(&mut grads, *b, vb.shape());
                        if *tb {
                            gemm(T::one(), &g, true, va, false, T::one(), gb);
                        } else {
                            gemm(T::one(), va, true, &g, false, T::one(), gb);
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if self.needs(v) {
                            slot(&mut grads, v, g.shape()).add_assign(&g);
                        }
                    }
                }
                Op::AddRow(a, row) => {
                    if self.needs(*a) {
                        slot(&mut grads, *a, g.shape()).add_assign(&g);
                    }
                    if self.needs(*row) {
                        let gr = slot(&mut grads, *row, (1, g.cols()));
                        for r in 0..g.rows() {
                            gr.row_mut(0).iter_mut().zip(g.row(r)).for_each(|(o, &x)| *o += x);
                        }
                    }
                }
                Op::Scale(a, s) => {
                    let ga = slot(&mut grads, *a, g.shape());
                    ga.data_mut().iter_mut().zip(g.data()).for_each(|(o, &x)| *o += x * *s);
                }
                Op::Relu(a) => {
                    let y = node.value.as_ref().unwrap();
                    let ga = slot(&mut grads, *a, g.shape());
                    for ((o, &x), &yv) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        if yv > T::zero() {
                            *o += x;
                        }
                    }
                }
                Op::Softmax(a) => {
                    let y = node.value.as_ref().unwrap();
                    let ga = slot(&mut grads, *a, g.shape());
                    for r in 0..g.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot = yr.iter().zip(gr).fold(T::zero(), |acc, (&p, &q)| acc + p * q);
                        ga.row_mut(r)
                            .iter_mut()
                            .zip(yr.iter().zip(gr))
                            .for_each(|(o, (&p, &q))| *o += p * (q - dot));
                    }
                }
                Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                    let gv = self.value(*gain).row(0).to_vec();
                    let cols = g.cols();
                    if self.needs(*gain) {
                        let gg = slot(&mut grads, *gain, (1, cols));
                        for r in 0..g.rows() {
                            for c in 0..cols {
                                gg.row_mut(0)[c] += g.get(r, c) * xhat.get(r, c);
                            }
                        }
                    }
                    if self.needs(*bias) {
                        let gb = slot(&mut grads, *bias, (1, cols));
                        for r in 0..g.rows() {
                            gb.row_mut(0).iter_mut().zip(g.row(r)).for_each(|(o, &v)| *o += v);
                        }
                    }
                    if self.needs(*x) {
                        let n = T::from_usize(cols).unwrap();
                        let gx = slot(&mut grads, *x, g.shape());
                        for r in 0..g.rows() {
                            let dxhat: Vec<T> = (0..cols).map(|c| g.get(r, c) * gv[c]).collect();
                            let mean_d = dxhat.iter().fold(T::zero(), |a, &b| a + b) / n;
                            let mean_dx = (0..cols).fold(T::zero(), |a, c| a + dxhat[c] * xhat.get(r, c)) / n;
                            let row = gx.row_mut(r);
                            for c in 0..cols {
                                row[c] += inv_std[r] * (dxhat[c] - mean_d - xhat.get(r, c) * mean_dx);
                            }
                        }
                    }
                }
                Op::Gather { table, ids } => {
                    let shape = self.shape(*table);
                    let gt = slot(&mut grads, *table, shape);
                    for (r, &id) in ids.iter().enumerate() {
                        gt.row_mut(id as usize).iter_mut().zip(g.row(r)).for_each(|(o, &v)| *o += v);
                    }
                }
                Op::SliceCols { a, start } => {
                    let shape = self.shape(*a);
                    let ga = slot(&mut grads, *a, shape);
                    for r in 0..g.rows() {
                        ga.row_mut(r)[*start..*start + g.cols()]
                            .iter_mut()
                            .zip(g.row(r))
                            .for_each(|(o, &v)| *o += v);
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut c0 = 0;
                    for &p in parts {
                        let shape = self.shape(p);
                        if self.needs(p) {
                            let gp = slot(&mut grads, p, shape);
                            for r in 0..g.rows() {
                                gp.row_mut(r)
                                    .iter_mut()
                                    .zip(&g.row(r)[c0..c0 + shape.1])
                                    .for_each(|(o, &v)| *o += v);
                            }
                        }
                        c0 += shape.1;
                    }
                }
                Op::Mean(parts) => {
                    let s = T::one() / T::from_usize(parts.len()).unwrap();
                    for &p in parts {
                        if self.needs(p) {
                            let gp = slot(&mut grads, p, g.shape());
                            gp.data_mut().iter_mut().zip(g.data()).for_each(|(o, &v)| *o += v * s);
                        }
                    }
                }
                Op::RowMean { inputs, denom } => {
                    for &p in inputs {
                        if !self.needs(p) {
                            continue;
                        }
                        let shape = self.shape(p);
                        let gp = slot(&mut grads, p, shape);
                        for r in 0..shape.0 {
                            let d = denom[r];
                            gp.row_mut(r).iter_mut().zip(g.row(r)).for_each(|(o, &v)| *o += v / d);
                        }
                    }
                }
                Op::CrossEntropy { logits, targets, weights, probs } => {
                    let seed = g.get(0, 0);
                    let gl = slot(&mut grads, *logits, probs.shape());
                    for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                        if w == T::zero() {
                            continue;
                        }
                        let scale = seed * w;
                        let row = gl.row_mut(r);
                        row.iter_mut().zip(probs.row(r)).for_each(|(o, &p)| *o += scale * p);
                        row[t as usize] -= scale;
                    }
                }
                Op::Dropout { a, mask } => {
                    let ga = slot(&mut grads, *a, g.shape());
                    ga.data_mut()
                        .iter_mut()
                        .zip(g.data().iter().zip(mask))
                        .for_each(|(o, (&v, &m))| *o += v * m);
                }
            }
        }
    }
}

fn slot<T: Real>(grads: &mut [Option<Matrix<T>>], v: Var, shape: (usize, usize)) -> &mut Matrix<T> {
    grads[v.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1))
}
