//! Tape-based reverse-mode differentiation over batched tensors.
//!
//! Every operation appends a node holding its output; `backward` walks the
//! tape in reverse. Reductions run in a fixed order so results are
//! reproducible bit for bit.

use crate::error::{shape_err, Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl ConvSpec {
    pub fn new(stride: usize, dilation: usize, padding: usize) -> Self {
        Self { stride, dilation, padding }
    }

    /// Output length for an input of length `len` and a kernel of size `k`.
    pub fn out_len(&self, len: usize, k: usize) -> Result<usize> {
        if self.stride == 0 || self.dilation == 0 || k == 0 {
            return Err(shape_err("stride, dilation and kernel must be positive"));
        }
        let span = self.dilation * (k - 1) + 1;
        let padded = len + 2 * self.padding;
        if padded < span {
            return Err(shape_err(format!(
                "kernel span {span} exceeds padded length {padded} (length {len}, padding {})",
                self.padding
            )));
        }
        Ok((padded - span) / self.stride + 1)
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Conv { x: Var, w: Var, b: Option<Var>, spec: ConvSpec, cols: Vec<f64> },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64>, train: bool },
    LeakyRelu { x: Var, slope: f64 },
    Concat { xs: Vec<Var> },
    Add { a: Var, b: Var },
    GlobalAvgPool { x: Var },
    Dense { x: Var, w: Var, b: Var },
    SmoothL1 { pred: Var, target: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
    label: String,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    no_grad: bool,
    scope: String,
}

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    debug_assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    debug_assert!((m - 1) * rsc + (n - 1) * csc < c.len());
    // SAFETY: the asserted extents keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Output positions `t` whose tap `t * stride + off` falls inside `0..len`.
fn tap_range(off: isize, stride: usize, len: usize, lout: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
    let hi = if (len as isize) <= off { 0 } else { ((len as isize - off) + s - 1) / s };
    let (lo, hi) = (lo as usize, (hi as usize).min(lout));
    (lo, hi.max(lo))
}

fn check_finite(t: &Tensor, label: &str, phase: &'static str) -> Result<()> {
    // Any NaN or infinity turns the sum of zeros into NaN.
    if t.data.iter().fold(0.0, |acc, &v| acc + v * 0.0) == 0.0 {
        return Ok(());
    }
    match t.first_non_finite() {
        None => Ok(()),
        Some((i, v)) => Err(Error::NonFinite {
            layer: label.to_string(),
            phase,
            detail: format!("value {v} at flat index {i} of shape {:?}", t.shape),
        }),
    }
}

impl Graph {
    /// Graph that records what `backward` needs.
    pub fn new() -> Self {
        Self::default()
    }

    /// Graph for inference only; `backward` is unavailable.
    pub fn inference() -> Self {
        Self { no_grad: true, ..Self::default() }
    }

    /// Label attached to subsequently created nodes, used in diagnostics.
    pub fn set_scope(&mut self, scope: impl Into<String>) {
        self.scope = scope.into();
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool, name: &str) -> Result<Var> {
        let label = if self.scope.is_empty() { name.to_string() } else { format!("{}.{name}", self.scope) };
        check_finite(&value, &label, "forward")?;
        self.nodes.push(Node { value, op, needs_grad: needs_grad && !self.no_grad, label });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input.
    pub fn input(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Leaf, false, "input")
    }

    /// Input whose gradient is tracked.
    pub fn variable(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Leaf, true, "variable")
    }

    /// Snapshot of a stored parameter; its gradient is written back by
    /// `accumulate_param_grads`.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        let p = store.get(id);
        let label = p.name.clone();
        let value = p.value.clone();
        check_finite(&value, &label, "forward")?;
        self.nodes.push(Node { value, op: Op::Param(id), needs_grad: !self.no_grad, label });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Cross-correlation of `x` (batch, in, length) with `w` (out, in, k).
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, spec: ConvSpec) -> Result<Var> {
        let (batch, cin, len) = self.value(x).dims3()?;
        let (cout, win, k) = self.value(w).dims3()?;
        if win != cin {
            return Err(shape_err(format!("conv expects {win} input channels, got {cin}")));
        }
        if let Some(b) = b {
            if self.value(b).shape != [cout] {
                return Err(shape_err(format!("conv bias shape {:?}, expected [{cout}]", self.value(b).shape)));
            }
        }
        let lout = spec.out_len(len, k)?;
        let rows = cin * k;
        let xv = &self.nodes[x.0].value.data;
        let mut cols = vec![0.0; batch * rows * lout];
        for bi in 0..batch {
            let cb = &mut cols[bi * rows * lout..(bi + 1) * rows * lout];
            for ci in 0..cin {
                let xr = &xv[(bi * cin + ci) * len..(bi * cin + ci + 1) * len];
                for j in 0..k {
                    let row = &mut cb[(ci * k + j) * lout..(ci * k + j + 1) * lout];
                    let off = (j * spec.dilation) as isize - spec.padding as isize;
                    let (lo, hi) = tap_range(off, spec.stride, len, lout);
                    let start = (lo * spec.stride) as isize + off;
                    if spec.stride == 1 {
                        row[lo..hi].copy_from_slice(&xr[start as usize..start as usize + hi - lo]);
                    } else {
                        for (r, &v) in row[lo..hi].iter_mut().zip(xr[start as usize..].iter().step_by(spec.stride)) {
                            *r = v;
                        }
                    }
                }
            }
        }
        let wv = &self.nodes[w.0].value.data;
        let mut y = vec![0.0; batch * cout * lout];
        for bi in 0..batch {
            gemm(
                cout,
                rows,
                lout,
                wv,
                (rows, 1),
                &cols[bi * rows * lout..],
                (lout, 1),
                0.0,
                &mut y[bi * cout * lout..],
                (lout, 1),
            );
        }
        if let Some(b) = b {
            let bv = &self.nodes[b.0].value.data;
            for (i, chunk) in y.chunks_mut(lout).enumerate() {
                let bias = bv[i % cout];
                chunk.iter_mut().for_each(|v| *v += bias);
            }
        }
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        let cols = if needs && !self.no_grad { cols } else { Vec::new() };
        let value = Tensor::new(vec![batch, cout, lout], y)?;
        self.push(value, Op::Conv { x, w, b, spec, cols }, needs, "conv")
    }

    /// Batch normalization over the batch and length axes of (batch, channels, length).
    ///
    /// In training mode the batch statistics normalize the input and the
    /// running statistics move towards them; otherwise the running statistics
    /// are used.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &mut [f64],
        running_var: &mut [f64],
        train: bool,
    ) -> Result<Var> {
        let (batch, ch, len) = self.value(x).dims3()?;
        for (v, what) in [(gamma, "scale"), (beta, "shift")] {
            if self.value(v).shape != [ch] {
                return Err(shape_err(format!("batch norm {what} shape {:?}, expected [{ch}]", self.value(v).shape)));
            }
        }
        if running_mean.len() != ch || running_var.len() != ch {
            return Err(shape_err("running statistics do not match channel count"));
        }
        if train && batch < 2 {
            return Err(Error::InvalidArgument("batch normalization in training mode needs a batch of at least 2".into()));
        }
        let xv = &self.nodes[x.0].value.data;
        let (g, bt) = (&self.nodes[gamma.0].value.data, &self.nodes[beta.0].value.data);
        let n = (batch * len) as f64;
        let mut mean = vec![0.0; ch];
        let mut inv_std = vec![0.0; ch];
        for c in 0..ch {
            let (m, var) = if train {
                let mut s = 0.0;
                for bi in 0..batch {
                    s += xv[(bi * ch + c) * len..(bi * ch + c + 1) * len].iter().sum::<f64>();
                }
                let m = s / n;
                let mut ss = 0.0;
                for bi in 0..batch {
                    ss += xv[(bi * ch + c) * len..(bi * ch + c + 1) * len].iter().map(|v| (v - m) * (v - m)).sum::<f64>();
                }
                let var = ss / n;
                running_mean[c] = BN_MOMENTUM * running_mean[c] + (1.0 - BN_MOMENTUM) * m;
                running_var[c] = BN_MOMENTUM * running_var[c] + (1.0 - BN_MOMENTUM) * var;
                (m, var)
            } else {
                (running_mean[c], running_var[c])
            };
            mean[c] = m;
            inv_std[c] = 1.0 / (var + BN_EPS).sqrt();
        }
        let mut xhat = vec![0.0; xv.len()];
        let mut y = vec![0.0; xv.len()];
        for (row, ((xr, xh), yr)) in xv.chunks(len).zip(xhat.chunks_mut(len)).zip(y.chunks_mut(len)).enumerate() {
            let c = row % ch;
            let (m, s, gc, bc) = (mean[c], inv_std[c], g[c], bt[c]);
            for ((&x, h), o) in xr.iter().zip(xh.iter_mut()).zip(yr.iter_mut()) {
                *h = (x - m) * s;
                *o = gc * *h + bc;
            }
        }
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let xhat = if needs && !self.no_grad { xhat } else { Vec::new() };
        let value = Tensor::new(vec![batch, ch, len], y)?;
        self.push(value, Op::BatchNorm { x, gamma, beta, xhat, inv_std, train }, needs, "batch_norm")
    }

    /// `x` for positive inputs, `slope * x` otherwise.
    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        let t = self.value(x);
        let data = t.data.iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect();
        let value = Tensor::new(t.shape.clone(), data)?;
        let needs = self.needs(x);
        self.push(value, Op::LeakyRelu { x, slope }, needs, "leaky_relu")
    }

    /// Concatenation along the channel axis.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = xs.first().ok_or_else(|| shape_err("concat of nothing"))?;
        let (batch, _, len) = self.value(*first).dims3()?;
        let mut total = 0;
        for &v in xs {
            let (b, c, l) = self.value(v).dims3()?;
            if b != batch || l != len {
                return Err(shape_err(format!("concat of ({b}, {c}, {l}) with batch {batch}, length {len}")));
            }
            total += c;
        }
        let mut data = Vec::with_capacity(batch * total * len);
        for bi in 0..batch {
            for &v in xs {
                let t = self.value(v);
                let c = t.shape[1];
                data.extend_from_slice(&t.data[bi * c * len..(bi + 1) * c * len]);
            }
        }
        let needs = xs.iter().any(|&v| self.needs(v));
        let value = Tensor::new(vec![batch, total, len], data)?;
        self.push(value, Op::Concat { xs: xs.to_vec() }, needs, "concat")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape != tb.shape {
            return Err(shape_err(format!("add of {:?} and {:?}", ta.shape, tb.shape)));
        }
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect();
        let value = Tensor::new(ta.shape.clone(), data)?;
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::Add { a, b }, needs, "add")
    }

    /// Mean over the length axis: (batch, channels, length) to (batch, channels).
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let (batch, ch, len) = self.value(x).dims3()?;
        if len == 0 {
            return Err(shape_err("pooling over an empty length axis"));
        }
        let data = self.value(x).data.chunks(len).map(|c| c.iter().sum::<f64>() / len as f64).collect();
        let value = Tensor::new(vec![batch, ch], data)?;
        let needs = self.needs(x);
        self.push(value, Op::GlobalAvgPool { x }, needs, "global_avg_pool")
    }

    /// `x W^T + b` for `x` (batch, in), `w` (out, in) and `b` (out).
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (batch, fin) = self.value(x).dims2()?;
        let (fout, win) = self.value(w).dims2()?;
        if win != fin || self.value(b).shape != [fout] {
            return Err(shape_err(format!(
                "dense of input {:?} with weights {:?} and bias {:?}",
                self.value(x).shape,
                self.value(w).shape,
                self.value(b).shape
            )));
        }
        let mut y = vec![0.0; batch * fout];
        gemm(batch, fin, fout, &self.value(x).data, (fin, 1), &self.value(w).data, (1, fin), 0.0, &mut y, (fout, 1));
        let bv = &self.value(b).data;
        for row in y.chunks_mut(fout) {
            row.iter_mut().zip(bv).for_each(|(v, b)| *v += b);
        }
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        let value = Tensor::new(vec![batch, fout], y)?;
        self.push(value, Op::Dense { x, w, b }, needs, "dense")
    }

    /// Smooth L1 loss summed over the batch; `pred` is (batch, 1).
    pub fn smooth_l1(&mut self, pred: Var, target: &[f64]) -> Result<Var> {
        let p = self.value(pred);
        if p.shape != [target.len(), 1] {
            return Err(shape_err(format!("prediction shape {:?} for {} targets", p.shape, target.len())));
        }
        let loss: f64 = p.data.iter().zip(target).map(|(&p, &t)| smooth_l1_value(t - p)).sum();
        let needs = self.needs(pred);
        self.push(Tensor::filled(&[1], loss), Op::SmoothL1 { pred, target: target.to_vec() }, needs, "smooth_l1")
    }

    fn grad_slot(&mut self, v: Var) -> Option<&mut Vec<f64>> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        let len = self.nodes[v.0].value.len();
        Some(self.grads[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(shape_err(format!("backward needs a scalar, got {:?}", self.value(loss).shape)));
        }
        self.backward_from(loss, vec![1.0])
    }

    /// Reverse pass seeded with `seed` as the gradient of `out`, giving the
    /// gradients of `sum(seed * out)`.
    pub fn backward_from(&mut self, out: Var, seed: Vec<f64>) -> Result<()> {
        if self.no_grad {
            return Err(Error::InvalidArgument("backward on an inference graph".into()));
        }
        if seed.len() != self.value(out).len() {
            return Err(shape_err(format!("seed of {} values for shape {:?}", seed.len(), self.value(out).shape)));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[out.0].needs_grad {
            return Ok(());
        }
        self.grads[out.0] = Some(seed);
        for i in (0..=out.0).rev() {
            let Some(gy) = self.grads[i].take() else { continue };
            if gy.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    layer: self.nodes[i].label.clone(),
                    phase: "backward",
                    detail: "gradient contains non-finite values".into(),
                });
            }
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            self.backprop(i, &op, &gy);
            self.nodes[i].op = op;
            self.grads[i] = Some(gy);
        }
        Ok(())
    }

    fn backprop(&mut self, i: usize, op: &Op, gy: &[f64]) {
        match op {
            Op::Leaf | Op::Param(_) => {}
            Op::Conv { x, w, b, spec, cols } => {
                let (batch, cin, len) = self.value(*x).dims3().expect("checked in forward");
                let (cout, _, k) = self.value(*w).dims3().expect("checked in forward");
                let lout = self.nodes[i].value.shape[2];
                let rows = cin * k;
                if let Some(b) = *b {
                    if let Some(gb) = self.grad_slot(b) {
                        for (j, chunk) in gy.chunks(lout).enumerate() {
                            gb[j % cout] += chunk.iter().sum::<f64>();
                        }
                    }
                }
                if self.needs(*w) {
                    let mut gw = self.grads[w.0].take().unwrap_or_else(|| vec![0.0; cout * rows]);
                    for bi in 0..batch {
                        gemm(
                            cout,
                            lout,
                            rows,
                            &gy[bi * cout * lout..],
                            (lout, 1),
                            &cols[bi * rows * lout..],
                            (1, lout),
                            1.0,
                            &mut gw,
                            (rows, 1),
                        );
                    }
                    self.grads[w.0] = Some(gw);
                }
                if self.needs(*x) {
                    let wv = self.nodes[w.0].value.data.clone();
                    let mut dcols = vec![0.0; rows * lout];
                    let gx = self.grad_slot(*x).expect("needs grad");
                    for bi in 0..batch {
                        gemm(rows, cout, lout, &wv, (1, rows), &gy[bi * cout * lout..], (lout, 1), 0.0, &mut dcols, (lout, 1));
                        for ci in 0..cin {
                            let gr = &mut gx[(bi * cin + ci) * len..(bi * cin + ci + 1) * len];
                            for j in 0..k {
                                let row = &dcols[(ci * k + j) * lout..(ci * k + j + 1) * lout];
                                let off = (j * spec.dilation) as isize - spec.padding as isize;
                                let (lo, hi) = tap_range(off, spec.stride, len, lout);
                                let start = ((lo * spec.stride) as isize + off) as usize;
                                for (g, &d) in gr[start..].iter_mut().step_by(spec.stride).zip(&row[lo..hi]) {
                                    *g += d;
                                }
                            }
                        }
                    }
                }
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, train } => {
                let (batch, ch, len) = self.value(*x).dims3().expect("checked in forward");
                let g = self.nodes[gamma.0].value.data.clone();
                let mut sum_dy = vec![0.0; ch];
                let mut sum_dy_xhat = vec![0.0; ch];
                for (row, (dr, hr)) in gy.chunks(len).zip(xhat.chunks(len)).enumerate() {
                    let c = row % ch;
                    sum_dy[c] += dr.iter().sum::<f64>();
                    sum_dy_xhat[c] += dr.iter().zip(hr).map(|(d, h)| d * h).sum::<f64>();
                }
                if let Some(gg) = self.grad_slot(*gamma) {
                    gg.iter_mut().zip(&sum_dy_xhat).for_each(|(a, b)| *a += b);
                }
                if let Some(gb) = self.grad_slot(*beta) {
                    gb.iter_mut().zip(&sum_dy).for_each(|(a, b)| *a += b);
                }
                let train = *train;
                if let Some(gx) = self.grad_slot(*x) {
                    let n = (batch * len) as f64;
                    for (row, ((gr, dr), hr)) in gx.chunks_mut(len).zip(gy.chunks(len)).zip(xhat.chunks(len)).enumerate() {
                        let c = row % ch;
                        let scale = g[c] * inv_std[c];
                        let (mdy, mdyh) = if train { (sum_dy[c] / n, sum_dy_xhat[c] / n) } else { (0.0, 0.0) };
                        for ((o, &d), &h) in gr.iter_mut().zip(dr).zip(hr) {
                            *o += scale * (d - mdy - h * mdyh);
                        }
                    }
                }
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.nodes[x.0].value.data.clone();
                let slope = *slope;
                if let Some(gx) = self.grad_slot(*x) {
                    for ((g, &d), &v) in gx.iter_mut().zip(gy).zip(&xv) {
                        *g += if v > 0.0 { d } else { slope * d };
                    }
                }
            }
            Op::Concat { xs } => {
                let (batch, total, len) = self.nodes[i].value.dims3().expect("rank 3");
                let mut start = 0;
                for &v in xs {
                    let c = self.nodes[v.0].value.shape[1];
                    if let Some(gx) = self.grad_slot(v) {
                        for bi in 0..batch {
                            let src = &gy[(bi * total + start) * len..(bi * total + start + c) * len];
                            gx[bi * c * len..(bi + 1) * c * len].iter_mut().zip(src).for_each(|(a, b)| *a += b);
                        }
                    }
                    start += c;
                }
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if let Some(g) = self.grad_slot(v) {
                        g.iter_mut().zip(gy).for_each(|(a, b)| *a += b);
                    }
                }
            }
            Op::GlobalAvgPool { x } => {
                let len = self.nodes[x.0].value.shape[2];
                if let Some(gx) = self.grad_slot(*x) {
                    for (chunk, &d) in gx.chunks_mut(len).zip(gy) {
                        chunk.iter_mut().for_each(|v| *v += d / len as f64);
                    }
                }
            }
            Op::Dense { x, w, b } => {
                let (batch, fin) = self.value(*x).dims2().expect("checked in forward");
                let fout = self.value(*w).shape[0];
                if let Some(gb) = self.grad_slot(*b) {
                    for row in gy.chunks(fout) {
                        gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                }
                if self.needs(*w) {
                    let xv = self.nodes[x.0].value.data.clone();
                    let gw = self.grad_slot(*w).expect("needs grad");
                    gemm(fout, batch, fin, gy, (1, fout), &xv, (fin, 1), 1.0, gw, (fin, 1));
                }
                if self.needs(*x) {
                    let wv = self.nodes[w.0].value.data.clone();
                    let gx = self.grad_slot(*x).expect("needs grad");
                    gemm(batch, fout, fin, gy, (fout, 1), &wv, (fin, 1), 1.0, gx, (fin, 1));
                }
            }
            Op::SmoothL1 { pred, target } => {
                let pv = self.nodes[pred.0].value.data.clone();
                let d0 = gy[0];
                if let Some(gp) = self.grad_slot(*pred) {
                    for ((g, &p), &t) in gp.iter_mut().zip(&pv).zip(target) {
                        *g += d0 * smooth_l1_grad(t - p);
                    }
                }
            }
        }
    }

    /// Adds the gradients of every parameter node to the store.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) {
        for (node, g) in self.nodes.iter().zip(&self.grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, g) {
                store.get_mut(*id).grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
        }
    }
}

/// Smooth L1 of a residual `d = target - pred`.
pub fn smooth_l1_value(d: f64) -> f64 {
    if d.abs() < 1.0 {
        0.5 * d * d
    } else {
        d.abs() - 0.5
    }
}

/// Derivative of the smooth L1 loss with respect to the prediction.
pub fn smooth_l1_grad(d: f64) -> f64 {
    if d.abs() < 1.0 {
        -d
    } else {
        -d.signum()
    }
}
