use std::sync::Arc;

use super::tape::{Op, Segments, Tape, Var};
use super::{NumError, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnaryKind {
    LeakyRelu(f64),
    Sigmoid,
    Softplus,
    Exp,
    Log,
    Neg,
    Sqrt,
    Square,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `b` broadcasts against `a` when its elements tile `a`'s trailing dimensions.
fn broadcastable(a: &[usize], b: &[usize]) -> bool {
    let b_trim: Vec<usize> = b.iter().copied().skip_while(|&d| d == 1).collect();
    if b_trim.len() > a.len() {
        return false;
    }
    a[a.len() - b_trim.len()..] == b_trim[..]
}

fn apply_unary(kind: UnaryKind, x: f64) -> f64 {
    match kind {
        UnaryKind::LeakyRelu(slope) => {
            if x >= 0.0 {
                x
            } else {
                slope * x
            }
        }
        UnaryKind::Sigmoid => sigmoid(x),
        UnaryKind::Softplus => softplus(x),
        UnaryKind::Exp => x.exp(),
        UnaryKind::Log => x.ln(),
        UnaryKind::Neg => -x,
        UnaryKind::Sqrt => x.sqrt(),
        UnaryKind::Square => x * x,
    }
}

fn row_softmax_into(row: &[f64], mask: Option<&[bool]>, out: &mut [f64]) -> bool {
    let allowed = |j: usize| mask.is_none_or(|m| m[j]);
    let mut max = f64::NEG_INFINITY;
    for (j, &x) in row.iter().enumerate() {
        if allowed(j) && x > max {
            max = x;
        }
    }
    if max == f64::NEG_INFINITY {
        return false;
    }
    let mut total = 0.0;
    for (j, &x) in row.iter().enumerate() {
        out[j] = if allowed(j) { (x - max).exp() } else { 0.0 };
        total += out[j];
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    true
}

pub(crate) fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl Tape {
    /// Matrix product of two rank-2 tensors. Zero entries of `a` are skipped,
    /// which keeps sparse bag-of-words inputs cheap without changing results.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.ndim() != 2 || bv.ndim() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(NumError::Shape {
                op: "matmul",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let (r, s, t) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        let mut out = vec![0.0; r * t];
        let (ad, bd) = (av.data(), bv.data());
        for i in 0..r {
            let orow = &mut out[i * t..(i + 1) * t];
            for k in 0..s {
                let aik = ad[i * s + k];
                if aik == 0.0 {
                    continue;
                }
                let brow = &bd[k * t..(k + 1) * t];
                for (o, &bkj) in orow.iter_mut().zip(brow) {
                    *o += aik * bkj;
                }
            }
        }
        let value = Tensor::new(vec![r, t], out)?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var, NumError> {
        let xv = self.value(x);
        if xv.ndim() != 2 {
            return Err(NumError::Shape {
                op: "transpose",
                left: xv.shape().to_vec(),
                right: vec![],
            });
        }
        let (r, c) = (xv.shape()[0], xv.shape()[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = xv.data()[i * c + j];
            }
        }
        let value = Tensor::new(vec![c, r], out)?;
        Ok(self.push(value, Op::Transpose(x), &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, NumError> {
        let value = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(x), &[x]))
    }

    pub fn unary(&mut self, x: Var, kind: UnaryKind) -> Result<Var, NumError> {
        let xv = self.value(x);
        if matches!(kind, UnaryKind::Log | UnaryKind::Sqrt) {
            let strict = kind == UnaryKind::Log;
            if let Some(index) = xv
                .data()
                .iter()
                .position(|&v| if strict { v <= 0.0 } else { v < 0.0 })
            {
                return Err(NumError::Domain {
                    op: if strict { "log" } else { "sqrt" },
                    index,
                    value: xv.data()[index],
                });
            }
        }
        let value = xv.map(|v| apply_unary(kind, v));
        Ok(self.push(value, Op::Unary(x, kind), &[x]))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var, NumError> {
        self.unary(x, UnaryKind::LeakyRelu(slope))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, NumError> {
        self.unary(x, UnaryKind::Sigmoid)
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var, NumError> {
        self.unary(x, UnaryKind::Softplus)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var, NumError> {
        self.unary(x, UnaryKind::Exp)
    }

    pub fn log(&mut self, x: Var) -> Result<Var, NumError> {
        self.unary(x, UnaryKind::Log)
    }

    pub fn neg(&mut self, x: Var) -> Result<Var, NumError> {
        self.unary(x, UnaryKind::Neg)
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var, NumError> {
        self.unary(x, UnaryKind::Sqrt)
    }

    pub fn square(&mut self, x: Var) -> Result<Var, NumError> {
        self.unary(x, UnaryKind::Square)
    }

    /// Elementwise binary operation. Shapes must be equal, or one operand must
    /// tile the other's trailing dimensions (leading-dimension broadcast).
    pub fn binary(&mut self, x: Var, y: Var, kind: BinaryKind) -> Result<Var, NumError> {
        let (xv, yv) = (self.value(x), self.value(y));
        let big = if xv.shape() == yv.shape() || broadcastable(xv.shape(), yv.shape()) {
            xv
        } else if broadcastable(yv.shape(), xv.shape()) {
            yv
        } else {
            return Err(NumError::Shape {
                op: "binary",
                left: xv.shape().to_vec(),
                right: yv.shape().to_vec(),
            });
        };
        let n = big.numel();
        let (xd, yd) = (xv.data(), yv.data());
        let (xn, yn) = (xd.len().max(1), yd.len().max(1));
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let a = if xn == n { xd[i] } else { xd[i % xn] };
            let b = if yn == n { yd[i] } else { yd[i % yn] };
            let v = match kind {
                BinaryKind::Add => a + b,
                BinaryKind::Sub => a - b,
                BinaryKind::Mul => a * b,
                BinaryKind::Div => {
                    if b == 0.0 {
                        return Err(NumError::Domain {
                            op: "div",
                            index: i % yn,
                            value: b,
                        });
                    }
                    a / b
                }
            };
            out.push(v);
        }
        let value = Tensor::new(big.shape().to_vec(), out)?;
        Ok(self.push(value, Op::Binary(x, y, kind), &[x, y]))
    }

    pub fn add(&mut self, x: Var, y: Var) -> Result<Var, NumError> {
        self.binary(x, y, BinaryKind::Add)
    }

    pub fn sub(&mut self, x: Var, y: Var) -> Result<Var, NumError> {
        self.binary(x, y, BinaryKind::Sub)
    }

    pub fn mul(&mut self, x: Var, y: Var) -> Result<Var, NumError> {
        self.binary(x, y, BinaryKind::Mul)
    }

    pub fn div(&mut self, x: Var, y: Var) -> Result<Var, NumError> {
        self.binary(x, y, BinaryKind::Div)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v * c);
        self.push(value, Op::Scale(x, c), &[x])
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v + c);
        self.push(value, Op::AddScalar(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::SumAll(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel().max(1) as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Row-wise softmax over the last dimension. Masked entries (`false`) are
    /// exactly zero; every row needs at least one unmasked entry.
    pub fn softmax_rows(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var, NumError> {
        let xv = self.value(x);
        if let Some(m) = mask {
            if m.len() != xv.numel() {
                return Err(NumError::Shape {
                    op: "softmax_rows mask",
                    left: xv.shape().to_vec(),
                    right: vec![m.len()],
                });
            }
        }
        let c = xv.last_dim();
        let mut out = vec![0.0; xv.numel()];
        for i in 0..xv.leading() {
            let row_mask = mask.map(|m| &m[i * c..(i + 1) * c]);
            if !row_softmax_into(xv.row(i), row_mask, &mut out[i * c..(i + 1) * c]) {
                return Err(NumError::FullyMasked { row: i });
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(value, Op::SoftmaxRows(x), &[x]))
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Result<Var, NumError> {
        let xv = self.value(x);
        let c = xv.last_dim();
        let mut out = Vec::with_capacity(xv.numel());
        for i in 0..xv.leading() {
            let row = xv.row(i);
            let lse = log_sum_exp(row.iter().copied());
            out.extend(row.iter().map(|&v| v - lse));
        }
        debug_assert_eq!(out.len(), xv.leading() * c);
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(value, Op::LogSoftmaxRows(x), &[x]))
    }

    /// Log-sum-exp over the last dimension; output has one entry per row.
    pub fn log_sum_exp_rows(&mut self, x: Var) -> Result<Var, NumError> {
        let xv = self.value(x);
        let out: Vec<f64> = (0..xv.leading())
            .map(|i| log_sum_exp(xv.row(i).iter().copied()))
            .collect();
        let value = Tensor::new(vec![out.len()], out)?;
        Ok(self.push(value, Op::LogSumExpRows(x), &[x]))
    }

    /// Sums message rows into `n_segments` output rows by target index.
    pub fn segment_sum(
        &mut self,
        messages: Var,
        targets: &[usize],
        n_segments: usize,
    ) -> Result<Var, NumError> {
        let mv = self.value(messages);
        if mv.leading() != targets.len() {
            return Err(NumError::Shape {
                op: "segment_sum",
                left: mv.shape().to_vec(),
                right: vec![targets.len()],
            });
        }
        let c = mv.last_dim();
        let mut out = vec![0.0; n_segments * c];
        for (e, &t) in targets.iter().enumerate() {
            if t >= n_segments {
                return Err(NumError::IndexOutOfRange {
                    op: "segment_sum",
                    index: t,
                    bound: n_segments,
                });
            }
            for (o, &m) in out[t * c..(t + 1) * c].iter_mut().zip(mv.row(e)) {
                *o += m;
            }
        }
        let value = Tensor::new(vec![n_segments, c], out)?;
        Ok(self.push(value, Op::SegmentSum(messages, targets.into()), &[messages]))
    }

    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var, NumError> {
        let xv = self.value(x);
        let (n, c) = (xv.leading(), xv.last_dim());
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= n {
                return Err(NumError::IndexOutOfRange {
                    op: "gather_rows",
                    index: i,
                    bound: n,
                });
            }
            out.extend_from_slice(xv.row(i));
        }
        let value = Tensor::new(vec![indices.len(), c], out)?;
        Ok(self.push(value, Op::GatherRows(x, indices.into()), &[x]))
    }

    fn check_segments(
        &self,
        x: Var,
        segments: &Segments,
        op: &'static str,
    ) -> Result<(), NumError> {
        let xv = self.value(x);
        if xv.leading() != segments.total() {
            return Err(NumError::Shape {
                op,
                left: xv.shape().to_vec(),
                right: vec![segments.total()],
            });
        }
        Ok(())
    }

    /// Column-wise softmax within each contiguous row segment.
    pub fn segment_softmax(&mut self, x: Var, segments: &Segments) -> Result<Var, NumError> {
        self.check_segments(x, segments, "segment_softmax")?;
        let xv = self.value(x);
        let c = xv.last_dim();
        let d = xv.data();
        let mut out = vec![0.0; xv.numel()];
        for range in segments.iter() {
            for j in 0..c {
                let max = range
                    .clone()
                    .map(|e| d[e * c + j])
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for e in range.clone() {
                    let v = (d[e * c + j] - max).exp();
                    out[e * c + j] = v;
                    total += v;
                }
                for e in range.clone() {
                    out[e * c + j] /= total;
                }
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(value, Op::SegmentSoftmax(x, segments.clone()), &[x]))
    }

    pub fn segment_log_softmax(&mut self, x: Var, segments: &Segments) -> Result<Var, NumError> {
        self.check_segments(x, segments, "segment_log_softmax")?;
        let xv = self.value(x);
        let c = xv.last_dim();
        let d = xv.data();
        let mut out = vec![0.0; xv.numel()];
        for range in segments.iter() {
            for j in 0..c {
                let lse = log_sum_exp(range.clone().map(|e| d[e * c + j]));
                for e in range.clone() {
                    out[e * c + j] = d[e * c + j] - lse;
                }
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(value, Op::SegmentLogSoftmax(x, segments.clone()), &[x]))
    }

    /// Multi-head weighted neighbor aggregation.
    ///
    /// `z` is `n×(H·c)` (head-major column blocks), `w` is `E×H`; output row
    /// `dst[e]` accumulates `w[e,h] · z[src[e], block h]` for every pair `e`.
    pub fn weighted_aggregate(
        &mut self,
        z: Var,
        w: Var,
        src: &[usize],
        dst: &[usize],
        n_out: usize,
    ) -> Result<Var, NumError> {
        let (zv, wv) = (self.value(z), self.value(w));
        let heads = wv.last_dim();
        let width = zv.last_dim();
        if wv.leading() != src.len() || src.len() != dst.len() || heads == 0 || width % heads != 0 {
            return Err(NumError::Shape {
                op: "weighted_aggregate",
                left: zv.shape().to_vec(),
                right: wv.shape().to_vec(),
            });
        }
        let c = width / heads;
        let n_in = zv.leading();
        let mut out = vec![0.0; n_out * width];
        for (e, (&s, &t)) in src.iter().zip(dst).enumerate() {
            if s >= n_in || t >= n_out {
                return Err(NumError::IndexOutOfRange {
                    op: "weighted_aggregate",
                    index: s.max(t),
                    bound: if s >= n_in { n_in } else { n_out },
                });
            }
            let zrow = zv.row(s);
            let wrow = wv.row(e);
            let orow = &mut out[t * width..(t + 1) * width];
            for h in 0..heads {
                let wh = wrow[h];
                if wh == 0.0 {
                    continue;
                }
                for j in h * c..(h + 1) * c {
                    orow[j] += wh * zrow[j];
                }
            }
        }
        let value = Tensor::new(vec![n_out, width], out)?;
        let op = Op::WeightedAggregate {
            z,
            w,
            src: src.into(),
            dst: dst.into(),
        };
        Ok(self.push(value, op, &[z, w]))
    }

    /// Selects (possibly repeated) columns of the last dimension.
    pub fn select_cols(&mut self, x: Var, cols: &[usize]) -> Result<Var, NumError> {
        let xv = self.value(x);
        let c = xv.last_dim();
        if let Some(&bad) = cols.iter().find(|&&j| j >= c) {
            return Err(NumError::IndexOutOfRange {
                op: "select_cols",
                index: bad,
                bound: c,
            });
        }
        let r = xv.leading();
        let mut out = Vec::with_capacity(r * cols.len());
        for i in 0..r {
            let row = xv.row(i);
            out.extend(cols.iter().map(|&j| row[j]));
        }
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().expect("select_cols on scalar") = cols.len();
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::SelectCols(x, Arc::from(cols)), &[x]))
    }

    /// Concatenation along the last dimension.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NumError> {
        let first = *parts.first().ok_or(NumError::Shape {
            op: "concat",
            left: vec![],
            right: vec![],
        })?;
        let lead_shape = {
            let s = self.shape(first);
            s[..s.len().saturating_sub(1)].to_vec()
        };
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.is_empty() || s[..s.len() - 1] != lead_shape[..] {
                return Err(NumError::Shape {
                    op: "concat",
                    left: self.shape(first).to_vec(),
                    right: s.to_vec(),
                });
            }
            widths.push(s[s.len() - 1]);
        }
        let rows = self.value(first).leading();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        let mut shape = lead_shape;
        shape.push(total);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Concat(parts.to_vec()), parts))
    }

    /// Contiguous slice `start..end` of the last dimension.
    pub fn slice(&mut self, x: Var, start: usize, end: usize) -> Result<Var, NumError> {
        let xv = self.value(x);
        let c = xv.last_dim();
        if start > end || end > c || xv.ndim() == 0 {
            return Err(NumError::SliceBounds { start, end, dim: c });
        }
        let mut out = Vec::with_capacity(xv.leading() * (end - start));
        for i in 0..xv.leading() {
            out.extend_from_slice(&xv.row(i)[start..end]);
        }
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().expect("checked ndim") = end - start;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Slice(x, start), &[x]))
    }
}
