use std::sync::Arc;

use super::matrix::{Matrix, Real};
use super::params::{Gradients, ParamId, ParamSet};

/// Sparse attention pattern in CSR form: query row `i` attends to
/// `keys[offsets[i]..offsets[i + 1]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttnPlan {
    offsets: Vec<u32>,
    keys: Vec<u32>,
}

impl AttnPlan {
    /// Fails if a query row has no keys or the offsets are malformed.
    pub fn new(offsets: Vec<u32>, keys: Vec<u32>) -> Result<Self, String> {
        if offsets.first() != Some(&0) || *offsets.last().unwrap() as usize != keys.len() {
            return Err("malformed attention offsets".into());
        }
        if let Some(i) = offsets.windows(2).position(|w| w[1] <= w[0]) {
            return Err(format!("query row {i} has every key masked"));
        }
        Ok(Self { offsets, keys })
    }

    /// Every query attends to every key.
    pub fn dense(queries: usize, keys: usize) -> Result<Self, String> {
        let offsets = (0..=queries).map(|i| (i * keys) as u32).collect();
        let ks = (0..queries).flat_map(|_| 0..keys as u32).collect();
        Self::new(offsets, ks)
    }

    pub fn queries(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.keys.len()
    }

    pub fn max_key(&self) -> Option<u32> {
        self.keys.iter().copied().max()
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i] as usize..self.offsets[i + 1] as usize
    }

    pub fn keys(&self) -> &[u32] {
        &self.keys
    }

    pub fn offsets(&self) -> &[u32] {
        &self.offsets
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Input,
    Linear {
        x: Var,
        w: ParamId,
        b: Option<ParamId>,
    },
    Add(Var, Var),
    LayerNorm {
        x: Var,
        g: ParamId,
        b: ParamId,
        xhat: Matrix<T>,
        inv_std: Vec<T>,
    },
    Relu(Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        plan: Arc<AttnPlan>,
        heads: usize,
        weights: Vec<T>,
    },
    Scores {
        q: Var,
        k: Var,
        plan: Arc<AttnPlan>,
        scale: T,
    },
    Gather {
        x: Var,
        idx: Arc<[u32]>,
    },
    Concat(Var, Var),
    ScaledTanh {
        x: Var,
        c: T,
    },
    LogSoftmax {
        x: Var,
        offsets: Arc<[u32]>,
    },
}

struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records a forward computation for one reverse sweep. Parameters are read
/// from a borrowed [`ParamSet`].
pub struct Tape<'p, T> {
    params: &'p ParamSet<T>,
    nodes: Vec<Node<T>>,
}

/// Result of [`Tape::backward`].
pub struct TapeGrads<T> {
    pub params: Gradients<T>,
    nodes: Vec<Option<Matrix<T>>>,
}

impl<T: Real> TapeGrads<T> {
    /// Gradient w.r.t. an input created by [`Tape::input_tracked`] (`None`
    /// if no gradient reached it).
    pub fn wrt(&self, v: Var) -> Option<&Matrix<T>> {
        self.nodes[v.0].as_ref()
    }
}

fn accumulate<T: Real>(slot: &mut Option<Matrix<T>>, g: Matrix<T>) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new(params: &'p ParamSet<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamSet<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>, needs_grad: bool) -> Var {
        debug_assert!(value.is_finite(), "non-finite value produced");
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input (no gradient).
    pub fn input(&mut self, m: Matrix<T>) -> Var {
        self.push(m, Op::Input, false)
    }

    /// Input whose gradient is kept by [`Tape::backward`].
    pub fn input_tracked(&mut self, m: Matrix<T>) -> Var {
        self.push(m, Op::Input, true)
    }

    /// `x W + b` with `W` of shape `(in, out)` and `b` of shape `(1, out)`.
    pub fn linear(&mut self, x: Var, w: ParamId, b: Option<ParamId>) -> Var {
        let xv = self.value(x);
        let wv = self.params.get(w);
        let mut out = Matrix::zeros(xv.rows(), wv.cols());
        if let Some(b) = b {
            let bv = self.params.get(b);
            for r in 0..out.rows() {
                out.row_mut(r).copy_from_slice(bv.row(0));
            }
            Matrix::gemm_into(&mut out, xv, false, wv, false, T::one());
        } else {
            Matrix::gemm_into(&mut out, xv, false, wv, false, T::zero());
        }
        self.push(out, Op::Linear { x, w, b }, true)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let needs = self.needs(a) || self.needs(b);
        self.push(out, Op::Add(a, b), needs)
    }

    /// Row-wise layer normalization with gain `g` and bias `b` (both `1 x d`).
    pub fn layer_norm(&mut self, x: Var, g: ParamId, b: ParamId) -> Var {
        let eps = T::of(1e-5);
        let xv = self.value(x);
        let (n, d) = xv.shape();
        let gv = self.params.get(g).row(0);
        let bv = self.params.get(b).row(0);
        let mut xhat = Matrix::zeros(n, d);
        let mut out = Matrix::zeros(n, d);
        let mut inv_std = Vec::with_capacity(n);
        let dn = T::of(d as f64);
        for r in 0..n {
            let row = xv.row(r);
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            let xh = xhat.row_mut(r);
            for c in 0..d {
                xh[c] = (row[c] - mean) * is;
            }
            let o = out.row_mut(r);
            for c in 0..d {
                o[c] = gv[c] * xhat.get(r, c) + bv[c];
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x,
                g,
                b,
                xhat,
                inv_std,
            },
            true,
        )
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
        let needs = self.needs(x);
        self.push(out, Op::Relu(x), needs)
    }

    /// Multi-head scaled dot-product attention restricted to `plan`.
    /// `q` is `(queries, d)`, `k` and `v` are `(keys, d)`; heads split the
    /// columns evenly and scores are scaled by `1/sqrt(d / heads)`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, plan: Arc<AttnPlan>, heads: usize) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let d = qv.cols();
        assert!(heads > 0 && d % heads == 0, "d must be divisible by heads");
        assert_eq!(qv.rows(), plan.queries(), "attention query count");
        assert_eq!(kv.shape(), vv.shape(), "key/value shape");
        assert_eq!(kv.cols(), d, "key width");
        assert!(
            plan.max_key().map_or(true, |m| (m as usize) < kv.rows()),
            "key index out of range"
        );
        let dh = d / heads;
        let scale = T::one() / T::of(dh as f64).sqrt();
        let mut weights = vec![T::zero(); plan.nnz() * heads];
        let mut out = Matrix::zeros(qv.rows(), d);
        for i in 0..plan.queries() {
            let range = plan.range(i);
            let keys = &plan.keys()[range.clone()];
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let qi = &qv.row(i)[cols.clone()];
                let mut max = T::neg_infinity();
                for (e, &j) in keys.iter().enumerate() {
                    let s = dot(qi, &kv.row(j as usize)[cols.clone()]) * scale;
                    weights[(range.start + e) * heads + h] = s;
                    max = max.max(s);
                }
                let mut total = T::zero();
                for e in range.clone() {
                    let w = (weights[e * heads + h] - max).exp();
                    weights[e * heads + h] = w;
                    total = total + w;
                }
                let orow = &mut out.row_mut(i)[cols.clone()];
                for (e, &j) in keys.iter().enumerate() {
                    let w = weights[(range.start + e) * heads + h] / total;
                    weights[(range.start + e) * heads + h] = w;
                    axpy(w, &vv.row(j as usize)[cols.clone()], orow);
                }
            }
        }
        let needs = self.needs(q) || self.needs(k) || self.needs(v);
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                plan,
                heads,
                weights,
            },
            needs,
        )
    }

    /// Attention weights of the last recorded attention op, `nnz x heads`.
    pub fn attention_weights(&self, v: Var) -> Option<&[T]> {
        match &self.nodes[v.0].op {
            Op::Attention { weights, .. } => Some(weights),
            _ => None,
        }
    }

    /// Scaled dot products `scale * q_i . k_j` for every plan entry, as a
    /// column vector in plan order.
    pub fn scores(&mut self, q: Var, k: Var, plan: Arc<AttnPlan>, scale: T) -> Var {
        let (qv, kv) = (self.value(q), self.value(k));
        assert_eq!(qv.rows(), plan.queries(), "score query count");
        assert_eq!(qv.cols(), kv.cols(), "score width");
        let mut out = Matrix::zeros(plan.nnz(), 1);
        for i in 0..plan.queries() {
            for e in plan.range(i) {
                let j = plan.keys()[e] as usize;
                out.data_mut()[e] = dot(qv.row(i), kv.row(j)) * scale;
            }
        }
        let needs = self.needs(q) || self.needs(k);
        self.push(out, Op::Scores { q, k, plan, scale }, needs)
    }

    /// Rows of `x` selected (with repetition) by `idx`.
    pub fn gather(&mut self, x: Var, idx: Arc<[u32]>) -> Var {
        let xv = self.value(x);
        let mut out = Matrix::zeros(idx.len(), xv.cols());
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(xv.row(i as usize));
        }
        let needs = self.needs(x);
        self.push(out, Op::Gather { x, idx }, needs)
    }

    /// Column-wise concatenation `[a | b]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.rows(), bv.rows(), "concat rows");
        let (ca, cb) = (av.cols(), bv.cols());
        let mut out = Matrix::zeros(av.rows(), ca + cb);
        for r in 0..av.rows() {
            let o = out.row_mut(r);
            o[..ca].copy_from_slice(av.row(r));
            o[ca..].copy_from_slice(bv.row(r));
        }
        let needs = self.needs(a) || self.needs(b);
        self.push(out, Op::Concat(a, b), needs)
    }

    /// `c * tanh(x)`.
    pub fn scaled_tanh(&mut self, x: Var, c: T) -> Var {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v = c * v.tanh();
        }
        let needs = self.needs(x);
        self.push(out, Op::ScaledTanh { x, c }, needs)
    }

    /// Log-softmax of a column vector within segments
    /// `offsets[s]..offsets[s + 1]`.
    pub fn log_softmax(&mut self, x: Var, offsets: Arc<[u32]>) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.cols(), 1, "log_softmax expects a column");
        assert_eq!(
            *offsets.last().unwrap() as usize,
            xv.rows(),
            "segment offsets"
        );
        let mut out = xv.clone();
        for s in offsets.windows(2) {
            let seg = &mut out.data_mut()[s[0] as usize..s[1] as usize];
            assert!(!seg.is_empty(), "empty softmax segment");
            let max = seg.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let lse = max + seg.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            for v in seg {
                *v = *v - lse;
            }
        }
        let needs = self.needs(x);
        self.push(out, Op::LogSoftmax { x, offsets }, needs)
    }

    /// Reverse sweep from `root` seeded with `seed` (same shape as the root
    /// value): returns `d(sum(seed ⊙ root))/d(params)` and the gradients of
    /// tracked inputs.
    pub fn backward(&self, root: Var, seed: Matrix<T>) -> TapeGrads<T> {
        assert_eq!(seed.shape(), self.value(root).shape(), "seed shape");
        let mut pg = Gradients::zeros_like(self.params);
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(seed);
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            debug_assert!(g.is_finite(), "non-finite gradient");
            if matches!(node.op, Op::Input) {
                grads[i] = Some(g);
            } else {
                self.backward_op(node, &g, &mut grads, &mut pg);
            }
        }
        TapeGrads {
            params: pg,
            nodes: grads,
        }
    }

    fn backward_op(
        &self,
        node: &Node<T>,
        g: &Matrix<T>,
        grads: &mut [Option<Matrix<T>>],
        pg: &mut Gradients<T>,
    ) {
        match &node.op {
            Op::Input => {}
            Op::Linear { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.params.get(*w);
                Matrix::gemm_into(&mut pg.grads[w.0], xv, true, g, false, T::one());
                if let Some(b) = b {
                    let gb = pg.grads[b.0].row_mut(0);
                    for r in 0..g.rows() {
                        for (a, &v) in gb.iter_mut().zip(g.row(r)) {
                            *a = *a + v;
                        }
                    }
                }
                if self.needs(*x) {
                    let mut dx = Matrix::zeros(xv.rows(), xv.cols());
                    Matrix::gemm_into(&mut dx, g, false, wv, true, T::zero());
                    accumulate(&mut grads[x.0], dx);
                }
            }
            Op::Add(a, b) => {
                if self.needs(*a) {
                    accumulate(&mut grads[a.0], g.clone());
                }
                if self.needs(*b) {
                    accumulate(&mut grads[b.0], g.clone());
                }
            }
            Op::LayerNorm {
                x,
                g: gid,
                b,
                xhat,
                inv_std,
            } => {
                let (n, d) = xhat.shape();
                let gv = self.params.get(*gid).row(0);
                {
                    let gg = pg.grads[gid.0].row_mut(0);
                    for r in 0..n {
                        for c in 0..d {
                            gg[c] = gg[c] + g.get(r, c) * xhat.get(r, c);
                        }
                    }
                }
                {
                    let gb = pg.grads[b.0].row_mut(0);
                    for r in 0..n {
                        for (a, &v) in gb.iter_mut().zip(g.row(r)) {
                            *a = *a + v;
                        }
                    }
                }
                if self.needs(*x) {
                    let dn = T::of(d as f64);
                    let mut dx = Matrix::zeros(n, d);
                    for r in 0..n {
                        let xh = xhat.row(r);
                        let gr = g.row(r);
                        let dxh: Vec<T> = (0..d).map(|c| gr[c] * gv[c]).collect();
                        let m1 = dxh.iter().copied().sum::<T>() / dn;
                        let m2 = dot(&dxh, xh) / dn;
                        let o = dx.row_mut(r);
                        for c in 0..d {
                            o[c] = inv_std[r] * (dxh[c] - m1 - xh[c] * m2);
                        }
                    }
                    accumulate(&mut grads[x.0], dx);
                }
            }
            Op::Relu(x) => {
                let mut dx = g.clone();
                for (d, &y) in dx.data_mut().iter_mut().zip(node.value.data()) {
                    if y <= T::zero() {
                        *d = T::zero();
                    }
                }
                accumulate(&mut grads[x.0], dx);
            }
            Op::Attention {
                q,
                k,
                v,
                plan,
                heads,
                weights,
            } => {
                let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                let d = qv.cols();
                let dh = d / heads;
                let scale = T::one() / T::of(dh as f64).sqrt();
                let mut dq = Matrix::zeros(qv.rows(), d);
                let mut dk = Matrix::zeros(kv.rows(), d);
                let mut dv = Matrix::zeros(vv.rows(), d);
                let mut dw: Vec<T> = Vec::new();
                for i in 0..plan.queries() {
                    let range = plan.range(i);
                    let keys = &plan.keys()[range.clone()];
                    for h in 0..*heads {
                        let cols = h * dh..(h + 1) * dh;
                        let go = &g.row(i)[cols.clone()];
                        dw.clear();
                        let mut wsum = T::zero();
                        for (e, &j) in keys.iter().enumerate() {
                            let w = weights[(range.start + e) * heads + h];
                            axpy(w, go, &mut dv.row_mut(j as usize)[cols.clone()]);
                            let dwe = dot(go, &vv.row(j as usize)[cols.clone()]);
                            wsum = wsum + w * dwe;
                            dw.push(dwe);
                        }
                        for (e, &j) in keys.iter().enumerate() {
                            let w = weights[(range.start + e) * heads + h];
                            let ds = w * (dw[e] - wsum) * scale;
                            if ds == T::zero() {
                                continue;
                            }
                            let kj = &kv.row(j as usize)[cols.clone()];
                            axpy(ds, kj, &mut dq.row_mut(i)[cols.clone()]);
                            let qi = &qv.row(i)[cols.clone()];
                            axpy(ds, qi, &mut dk.row_mut(j as usize)[cols.clone()]);
                        }
                    }
                }
                if self.needs(*q) {
                    accumulate(&mut grads[q.0], dq);
                }
                if self.needs(*k) {
                    accumulate(&mut grads[k.0], dk);
                }
                if self.needs(*v) {
                    accumulate(&mut grads[v.0], dv);
                }
            }
            Op::Scores { q, k, plan, scale } => {
                let (qv, kv) = (self.value(*q), self.value(*k));
                let mut dq = Matrix::zeros(qv.rows(), qv.cols());
                let mut dk = Matrix::zeros(kv.rows(), kv.cols());
                for i in 0..plan.queries() {
                    for e in plan.range(i) {
                        let j = plan.keys()[e] as usize;
                        let ge = g.data()[e] * *scale;
                        axpy(ge, kv.row(j), dq.row_mut(i));
                        axpy(ge, qv.row(i), dk.row_mut(j));
                    }
                }
                if self.needs(*q) {
                    accumulate(&mut grads[q.0], dq);
                }
                if self.needs(*k) {
                    accumulate(&mut grads[k.0], dk);
                }
            }
            Op::Gather { x, idx } => {
                let xv = self.value(*x);
                let mut dx = Matrix::zeros(xv.rows(), xv.cols());
                for (r, &i) in idx.iter().enumerate() {
                    axpy(T::one(), g.row(r), dx.row_mut(i as usize));
                }
                accumulate(&mut grads[x.0], dx);
            }
            Op::Concat(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                if self.needs(*a) {
                    let da = Matrix::from_fn(g.rows(), ca, |r, c| g.get(r, c));
                    accumulate(&mut grads[a.0], da);
                }
                if self.needs(*b) {
                    let db = Matrix::from_fn(g.rows(), cb, |r, c| g.get(r, ca + c));
                    accumulate(&mut grads[b.0], db);
                }
            }
            Op::ScaledTanh { x, c } => {
                let mut dx = g.clone();
                for (d, &y) in dx.data_mut().iter_mut().zip(node.value.data()) {
                    *d = *d * (*c - y * y / *c);
                }
                accumulate(&mut grads[x.0], dx);
            }
            Op::LogSoftmax { x, offsets } => {
                let mut dx = g.clone();
                for s in offsets.windows(2) {
                    let r = s[0] as usize..s[1] as usize;
                    let gsum: T = g.data()[r.clone()].iter().copied().sum();
                    for e in r {
                        dx.data_mut()[e] = g.data()[e] - node.value.data()[e].exp() * gsum;
                    }
                }
                accumulate(&mut grads[x.0], dx);
            }
        }
    }
}
