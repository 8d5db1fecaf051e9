use super::ops::{sigmoid, BinaryKind, UnaryKind};
use super::tape::{Op, Tape, Var};
use super::{NumError, Tensor};

/// Gradients of a scalar root with respect to every tracked leaf.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `v`; `None` if `v` is untracked or unreachable from the root.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for a tracked leaf, or zeros of `like`'s shape when unreachable.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Sums per-element contributions `f(i)`, `i < n`, into a buffer of `len`
/// entries that was tiled to length `n` in the forward pass.
fn reduce_to(len: usize, n: usize, f: impl Fn(usize) -> f64) -> Vec<f64> {
    if len == n {
        return (0..n).map(f).collect();
    }
    let mut out = vec![0.0; len];
    if len > 0 {
        for i in 0..n {
            out[i % len] += f(i);
        }
    }
    out
}

impl Tape {
    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients, NumError> {
        let rv = self.value(root);
        if !rv.is_scalar() {
            return Err(NumError::NonScalarRoot(rv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::full(rv.shape(), 1.0));
        for id in (0..=root.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                grads[id] = None;
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            self.propagate(id, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[id];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (r, s, t) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                let gd = g.data();
                if self.wants(*a) {
                    let mut da = vec![0.0; r * s];
                    let bd = bv.data();
                    for i in 0..r {
                        let grow = &gd[i * t..(i + 1) * t];
                        for k in 0..s {
                            let brow = &bd[k * t..(k + 1) * t];
                            da[i * s + k] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    accumulate(grads, *a, Tensor::new(vec![r, s], da).expect("shape"));
                }
                if self.wants(*b) {
                    let mut db = vec![0.0; s * t];
                    let ad = av.data();
                    for i in 0..r {
                        let grow = &gd[i * t..(i + 1) * t];
                        for k in 0..s {
                            let aik = ad[i * s + k];
                            if aik == 0.0 {
                                continue;
                            }
                            for (d, &gv) in db[k * t..(k + 1) * t].iter_mut().zip(grow) {
                                *d += aik * gv;
                            }
                        }
                    }
                    accumulate(grads, *b, Tensor::new(vec![s, t], db).expect("shape"));
                }
            }
            Op::Transpose(x) => {
                let (r, c) = (out.shape()[0], out.shape()[1]);
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        dx[j * r + i] = g.data()[i * c + j];
                    }
                }
                accumulate(grads, *x, Tensor::new(vec![c, r], dx).expect("shape"));
            }
            Op::Reshape(x) => {
                let shape = self.shape(*x).to_vec();
                accumulate(grads, *x, g.clone().reshaped(shape).expect("shape"));
            }
            Op::Unary(x, kind) => {
                let xv = self.value(*x);
                let skew = if fault::softplus_skewed() && matches!(kind, UnaryKind::Softplus) {
                    1.05
                } else {
                    1.0
                };
                let dx: Vec<f64> = xv
                    .data()
                    .iter()
                    .zip(out.data())
                    .zip(g.data())
                    .map(|((&xi, &yi), &gi)| {
                        gi * match *kind {
                            UnaryKind::LeakyRelu(slope) => {
                                if xi >= 0.0 {
                                    1.0
                                } else {
                                    slope
                                }
                            }
                            UnaryKind::Sigmoid => yi * (1.0 - yi),
                            UnaryKind::Softplus => skew * sigmoid(xi),
                            UnaryKind::Exp => yi,
                            UnaryKind::Log => 1.0 / xi,
                            UnaryKind::Neg => -1.0,
                            UnaryKind::Sqrt => 0.5 / yi,
                            UnaryKind::Square => 2.0 * xi,
                        }
                    })
                    .collect();
                accumulate(
                    grads,
                    *x,
                    Tensor::new(xv.shape().to_vec(), dx).expect("shape"),
                );
            }
            Op::Binary(x, y, kind) => {
                let (xv, yv) = (self.value(*x), self.value(*y));
                let (xd, yd) = (xv.data(), yv.data());
                let (xn, yn) = (xd.len().max(1), yd.len().max(1));
                let gd = g.data();
                let n = gd.len();
                let xa = |i: usize| if xn == n { xd[i] } else { xd[i % xn] };
                let yb = |i: usize| if yn == n { yd[i] } else { yd[i % yn] };
                if self.wants(*x) {
                    let dx = reduce_to(xd.len(), gd.len(), |i| {
                        let (gi, b) = (gd[i], yb(i));
                        match kind {
                            BinaryKind::Add | BinaryKind::Sub => gi,
                            BinaryKind::Mul => gi * b,
                            BinaryKind::Div => gi / b,
                        }
                    });
                    accumulate(
                        grads,
                        *x,
                        Tensor::new(xv.shape().to_vec(), dx).expect("shape"),
                    );
                }
                if self.wants(*y) {
                    let dy = reduce_to(yd.len(), gd.len(), |i| {
                        let (gi, a, b) = (gd[i], xa(i), yb(i));
                        match kind {
                            BinaryKind::Add => gi,
                            BinaryKind::Sub => -gi,
                            BinaryKind::Mul => gi * a,
                            BinaryKind::Div => -gi * a / (b * b),
                        }
                    });
                    accumulate(
                        grads,
                        *y,
                        Tensor::new(yv.shape().to_vec(), dy).expect("shape"),
                    );
                }
            }
            Op::Scale(x, c) => accumulate(grads, *x, g.map(|v| v * c)),
            Op::AddScalar(x) => accumulate(grads, *x, g.clone()),
            Op::SumAll(x) => {
                let shape = self.shape(*x).to_vec();
                accumulate(grads, *x, Tensor::full(&shape, g.item()));
            }
            Op::SoftmaxRows(x) => {
                let c = out.last_dim();
                let mut dx = vec![0.0; out.numel()];
                for i in 0..out.leading() {
                    let y = out.row(i);
                    let gr = g.row(i);
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        dx[i * c + j] = y[j] * (gr[j] - dot);
                    }
                }
                accumulate(
                    grads,
                    *x,
                    Tensor::new(out.shape().to_vec(), dx).expect("shape"),
                );
            }
            Op::LogSoftmaxRows(x) => {
                let c = out.last_dim();
                let mut dx = vec![0.0; out.numel()];
                for i in 0..out.leading() {
                    let y = out.row(i);
                    let gr = g.row(i);
                    let gsum: f64 = gr.iter().sum();
                    for j in 0..c {
                        dx[i * c + j] = gr[j] - y[j].exp() * gsum;
                    }
                }
                accumulate(
                    grads,
                    *x,
                    Tensor::new(out.shape().to_vec(), dx).expect("shape"),
                );
            }
            Op::LogSumExpRows(x) => {
                let xv = self.value(*x);
                let c = xv.last_dim();
                let mut dx = vec![0.0; xv.numel()];
                for i in 0..xv.leading() {
                    let lse = out.data()[i];
                    let gi = g.data()[i];
                    for (j, &v) in xv.row(i).iter().enumerate() {
                        dx[i * c + j] = gi * (v - lse).exp();
                    }
                }
                accumulate(
                    grads,
                    *x,
                    Tensor::new(xv.shape().to_vec(), dx).expect("shape"),
                );
            }
            Op::SegmentSum(x, targets) => {
                let xv = self.value(*x);
                let c = xv.last_dim();
                let mut dx = Vec::with_capacity(xv.numel());
                for &t in targets.iter() {
                    dx.extend_from_slice(&g.data()[t * c..(t + 1) * c]);
                }
                accumulate(
                    grads,
                    *x,
                    Tensor::new(xv.shape().to_vec(), dx).expect("shape"),
                );
            }
            Op::GatherRows(x, indices) => {
                let xv = self.value(*x);
                let c = xv.last_dim();
                let mut dx = vec![0.0; xv.numel()];
                for (e, &i) in indices.iter().enumerate() {
                    for (d, &gv) in dx[i * c..(i + 1) * c].iter_mut().zip(g.row(e)) {
                        *d += gv;
                    }
                }
                accumulate(
                    grads,
                    *x,
                    Tensor::new(xv.shape().to_vec(), dx).expect("shape"),
                );
            }
            Op::SegmentSoftmax(x, segments) => {
                let c = out.last_dim();
                let (y, gd) = (out.data(), g.data());
                let mut dx = vec![0.0; out.numel()];
                for range in segments.iter() {
                    for j in 0..c {
                        let dot: f64 = range.clone().map(|e| y[e * c + j] * gd[e * c + j]).sum();
                        for e in range.clone() {
                            dx[e * c + j] = y[e * c + j] * (gd[e * c + j] - dot);
                        }
                    }
                }
                accumulate(
                    grads,
                    *x,
                    Tensor::new(out.shape().to_vec(), dx).expect("shape"),
                );
            }
            Op::SegmentLogSoftmax(x, segments) => {
                let c = out.last_dim();
                let (y, gd) = (out.data(), g.data());
                let mut dx = vec![0.0; out.numel()];
                for range in segments.iter() {
                    for j in 0..c {
                        let gsum: f64 = range.clone().map(|e| gd[e * c + j]).sum();
                        for e in range.clone() {
                            dx[e * c + j] = gd[e * c + j] - y[e * c + j].exp() * gsum;
                        }
                    }
                }
                accumulate(
                    grads,
                    *x,
                    Tensor::new(out.shape().to_vec(), dx).expect("shape"),
                );
            }
            Op::WeightedAggregate { z, w, src, dst } => {
                let (zv, wv) = (self.value(*z), self.value(*w));
                let heads = wv.last_dim();
                let width = zv.last_dim();
                let c = width / heads;
                let want_z = self.wants(*z);
                let want_w = self.wants(*w);
                let mut dz = if want_z {
                    vec![0.0; zv.numel()]
                } else {
                    Vec::new()
                };
                let mut dw = if want_w {
                    vec![0.0; wv.numel()]
                } else {
                    Vec::new()
                };
                for (e, (&s, &t)) in src.iter().zip(dst.iter()).enumerate() {
                    let grow = g.row(t);
                    let zrow = zv.row(s);
                    let wrow = wv.row(e);
                    for h in 0..heads {
                        let cols = h * c..(h + 1) * c;
                        if want_w {
                            dw[e * heads + h] = cols.clone().map(|j| zrow[j] * grow[j]).sum();
                        }
                        if want_z {
                            let wh = wrow[h];
                            if wh != 0.0 {
                                for j in cols {
                                    dz[s * width + j] += wh * grow[j];
                                }
                            }
                        }
                    }
                }
                if want_z {
                    accumulate(
                        grads,
                        *z,
                        Tensor::new(zv.shape().to_vec(), dz).expect("shape"),
                    );
                }
                if want_w {
                    accumulate(
                        grads,
                        *w,
                        Tensor::new(wv.shape().to_vec(), dw).expect("shape"),
                    );
                }
            }
            Op::SelectCols(x, cols) => {
                let xv = self.value(*x);
                let c = xv.last_dim();
                let k = cols.len();
                let mut dx = vec![0.0; xv.numel()];
                for i in 0..xv.leading() {
                    let grow = &g.data()[i * k..(i + 1) * k];
                    for (&j, &gv) in cols.iter().zip(grow) {
                        dx[i * c + j] += gv;
                    }
                }
                accumulate(
                    grads,
                    *x,
                    Tensor::new(xv.shape().to_vec(), dx).expect("shape"),
                );
            }
            Op::Concat(parts) => {
                let total = out.last_dim();
                let rows = out.leading();
                let mut offset = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let w = pv.last_dim();
                    if self.wants(p) {
                        let mut dp = Vec::with_capacity(pv.numel());
                        for i in 0..rows {
                            dp.extend_from_slice(
                                &g.data()[i * total + offset..i * total + offset + w],
                            );
                        }
                        accumulate(
                            grads,
                            p,
                            Tensor::new(pv.shape().to_vec(), dp).expect("shape"),
                        );
                    }
                    offset += w;
                }
            }
            Op::Slice(x, start) => {
                let xv = self.value(*x);
                let c = xv.last_dim();
                let w = out.last_dim();
                let mut dx = vec![0.0; xv.numel()];
                for i in 0..xv.leading() {
                    dx[i * c + start..i * c + start + w].copy_from_slice(g.row(i));
                }
                accumulate(
                    grads,
                    *x,
                    Tensor::new(xv.shape().to_vec(), dx).expect("shape"),
                );
            }
        }
    }
}

/// Fault injection for exercising gradient checks.
#[doc(hidden)]
pub mod fault {
    use std::cell::Cell;

    thread_local! {
        static SKEW_SOFTPLUS: Cell<bool> = const { Cell::new(false) };
    }

    /// While set on this thread, the softplus backward rule is wrong by 5%.
    pub fn skew_softplus_gradient(on: bool) {
        SKEW_SOFTPLUS.with(|c| c.set(on));
    }

    pub(crate) fn softplus_skewed() -> bool {
        SKEW_SOFTPLUS.with(Cell::get)
    }
}
