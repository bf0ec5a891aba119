//! Reverse-mode tape. Every operation appends a node holding its value and
//! enough context to run its adjoint; nodes are created in topological
//! order, so the graph is acyclic by construction.

use super::kernels::{conv2d_backward, conv2d_forward, gemm, ConvGeom};
use crate::error::{Error, Result};

/// Owned n-dimensional array used as graph input.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {} values, got {}",
                shape.iter().product::<usize>(),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Per-channel statistics of a train-mode batch normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (population) variance.
    pub var: Vec<f64>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        kernel: Var,
        bias: Var,
        geom: ConvGeom,
    },
    Dense {
        x: Var,
        weight: Var,
        bias: Var,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        x_hat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
    LeakyRelu {
        x: Var,
        slope: f64,
    },
    Sigmoid {
        x: Var,
    },
    SoftmaxT {
        x: Var,
        t: f64,
    },
    Mse {
        pred: Var,
        target: Var,
    },
    SoftCrossEntropy {
        teacher: Var,
        student: Var,
    },
    Concat {
        a: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    ScaleGate {
        x: Var,
        alpha: Var,
    },
    Scale {
        x: Var,
        c: f64,
    },
    Reshape {
        x: Var,
    },
    Sum {
        x: Var,
    },
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    shape: Vec<usize>,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Floor applied inside the logarithm of [`Tape::soft_cross_entropy`].
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn check_same(a: &[usize], b: &[usize], what: &str) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!("{what}: {a:?} vs {b:?}")));
    }
    Ok(())
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

/// Numerically stable logistic function.
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, shape: Vec<usize>, op: Op, parents: &[Var]) -> Var {
        debug_assert_eq!(value.len(), shape.iter().product::<usize>());
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            shape,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: t.data,
            shape: t.shape,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// A constant input; receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    /// A differentiable leaf (parameters, or inputs under gradient check).
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.leaf(t, true)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor {
            shape: self.shape(v).to_vec(),
            data: self.value(v).to_vec(),
        }
    }

    /// Same-padded 2-D cross-correlation plus per-channel bias.
    pub fn conv2d(&mut self, x: Var, kernel: Var, bias: Var) -> Result<Var> {
        let xs = self.shape(x);
        let ks = self.shape(kernel);
        if xs.len() != 4 || ks.len() != 4 {
            return Err(Error::ShapeMismatch(format!(
                "conv2d expects 4-D input and kernel, got {xs:?} and {ks:?}"
            )));
        }
        if xs[1] != ks[1] {
            return Err(Error::ShapeMismatch(format!(
                "conv2d input has {} channels, kernel expects {}",
                xs[1], ks[1]
            )));
        }
        check_same(self.shape(bias), &[ks[0]], "conv2d bias")?;
        let geom = ConvGeom {
            c_in: xs[1],
            c_out: ks[0],
            h: xs[2],
            w: xs[3],
            kh: ks[2],
            kw: ks[3],
        };
        let batch = xs[0];
        let mut y = vec![0.0; batch * geom.c_out * geom.hw()];
        conv2d_forward(
            &geom,
            batch,
            self.value(x),
            self.value(kernel),
            self.value(bias),
            &mut y,
        );
        let shape = vec![batch, geom.c_out, geom.h, geom.w];
        Ok(self.push(
            y,
            shape,
            Op::Conv2d {
                x,
                kernel,
                bias,
                geom,
            },
            &[x, kernel, bias],
        ))
    }

    /// Affine map `x W^T + b` with `x: [B, L_in]`, `W: [L_out, L_in]`.
    pub fn dense(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let xs = self.shape(x);
        let ws = self.shape(weight);
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(Error::ShapeMismatch(format!(
                "dense input {xs:?} incompatible with weight {ws:?}"
            )));
        }
        let (batch, l_in, l_out) = (xs[0], xs[1], ws[0]);
        check_same(self.shape(bias), &[l_out], "dense bias")?;
        let mut y = Vec::with_capacity(batch * l_out);
        for _ in 0..batch {
            y.extend_from_slice(self.value(bias));
        }
        gemm(
            batch,
            l_in,
            l_out,
            self.value(x),
            l_in,
            1,
            self.value(weight),
            1,
            l_in,
            1.0,
            &mut y,
            l_out,
            1,
        );
        Ok(self.push(
            y,
            vec![batch, l_out],
            Op::Dense { x, weight, bias },
            &[x, weight, bias],
        ))
    }

    fn bn_layout(&self, x: Var, gamma: Var, beta: Var) -> Result<(usize, usize, usize)> {
        let xs = self.shape(x);
        if xs.len() < 2 {
            return Err(Error::ShapeMismatch(format!(
                "batch_norm expects [B, C, ...], got {xs:?}"
            )));
        }
        let (b, c) = (xs[0], xs[1]);
        let inner: usize = xs[2..].iter().product();
        check_same(self.shape(gamma), &[c], "batch_norm gamma")?;
        check_same(self.shape(beta), &[c], "batch_norm beta")?;
        Ok((b, c, inner))
    }

    fn bn_apply(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        var: &[f64],
        eps: f64,
        train: bool,
    ) -> Result<Var> {
        let (b, c, inner) = self.bn_layout(x, gamma, beta)?;
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let xv = self.value(x);
        let (g, bt) = (self.value(gamma), self.value(beta));
        let mut x_hat = vec![0.0; xv.len()];
        let mut y = vec![0.0; xv.len()];
        for n in 0..b {
            for ch in 0..c {
                let off = (n * c + ch) * inner;
                for i in off..off + inner {
                    let h = (xv[i] - mean[ch]) * inv_std[ch];
                    x_hat[i] = h;
                    y[i] = g[ch] * h + bt[ch];
                }
            }
        }
        let shape = self.shape(x).to_vec();
        Ok(self.push(
            y,
            shape,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                x_hat,
                inv_std,
                train,
            },
            &[x, gamma, beta],
        ))
    }

    /// Train-mode batch normalization over every axis except channels.
    /// Returns the batch statistics so the caller can update running stats.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, BatchStats)> {
        let (b, c, inner) = self.bn_layout(x, gamma, beta)?;
        if b < 2 {
            return Err(Error::DegenerateBatch);
        }
        let xv = self.value(x);
        let count = (b * inner) as f64;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for ch in 0..c {
            let mut s = 0.0;
            for n in 0..b {
                let off = (n * c + ch) * inner;
                s += xv[off..off + inner].iter().sum::<f64>();
            }
            let m = s / count;
            let mut sq = 0.0;
            for n in 0..b {
                let off = (n * c + ch) * inner;
                sq += xv[off..off + inner].iter().map(|v| (v - m) * (v - m)).sum::<f64>();
            }
            mean[ch] = m;
            var[ch] = sq / count;
        }
        let y = self.bn_apply(x, gamma, beta, &mean, &var, eps, true)?;
        Ok((y, BatchStats { mean, var }))
    }

    /// Eval-mode batch normalization with fixed statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        self.bn_apply(x, gamma, beta, running_mean, running_var, eps, false)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let y = self
            .value(x)
            .iter()
            .map(|&v| if v >= 0.0 { v } else { slope * v })
            .collect();
        let shape = self.shape(x).to_vec();
        self.push(y, shape, Op::LeakyRelu { x, slope }, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = self.value(x).iter().map(|&v| sigmoid_scalar(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(y, shape, Op::Sigmoid { x }, &[x])
    }

    /// Temperature softmax over each sample's flattened features.
    pub fn softmax_t(&mut self, x: Var, t: f64) -> Result<Var> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidTemperature(t));
        }
        let shape = self.shape(x).to_vec();
        let b = shape[0];
        let l = self.value(x).len() / b.max(1);
        let xv = self.value(x);
        let mut y = vec![0.0; xv.len()];
        for n in 0..b {
            let row = &xv[n * l..(n + 1) * l];
            let out = &mut y[n * l..(n + 1) * l];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / t;
            let mut sum = 0.0;
            for (o, &v) in out.iter_mut().zip(row) {
                *o = (v / t - max).exp();
                sum += *o;
            }
            for o in out.iter_mut() {
                *o /= sum;
            }
        }
        Ok(self.push(y, shape, Op::SoftmaxT { x, t }, &[x]))
    }

    /// Mean of squared differences over every element.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        check_same(self.shape(pred), self.shape(target), "mse_loss")?;
        let p = self.value(pred);
        let q = self.value(target);
        let s: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
        let v = s / p.len() as f64;
        Ok(self.push(vec![v], vec![1], Op::Mse { pred, target }, &[pred, target]))
    }

    /// Batch mean of `-sum_i p_i log(max(q_i, 1e-12))`.
    pub fn soft_cross_entropy(&mut self, teacher: Var, student: Var) -> Result<Var> {
        check_same(self.shape(teacher), self.shape(student), "soft_cross_entropy")?;
        let b = self.shape(teacher)[0];
        let p = self.value(teacher);
        let q = self.value(student);
        let s: f64 = p
            .iter()
            .zip(q)
            .map(|(pi, qi)| -pi * qi.max(LOG_FLOOR).ln())
            .sum();
        Ok(self.push(
            vec![s / b as f64],
            vec![1],
            Op::SoftCrossEntropy { teacher, student },
            &[teacher, student],
        ))
    }

    /// Concatenates `[B, Ca, ...]` and `[B, Cb, ...]` along channels.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() < 2 || sa.len() != sb.len() || sa[0] != sb[0] || sa[2..] != sb[2..] {
            return Err(Error::ShapeMismatch(format!(
                "concat_channels: {sa:?} vs {sb:?}"
            )));
        }
        let inner: usize = sa[2..].iter().product();
        let (batch, ca, cb) = (sa[0], sa[1], sb[1]);
        let mut shape = sa.to_vec();
        shape[1] = ca + cb;
        let (va, vb) = (self.value(a), self.value(b));
        let mut y = Vec::with_capacity(va.len() + vb.len());
        for n in 0..batch {
            y.extend_from_slice(&va[n * ca * inner..(n + 1) * ca * inner]);
            y.extend_from_slice(&vb[n * cb * inner..(n + 1) * cb * inner]);
        }
        Ok(self.push(y, shape, Op::Concat { a, b }, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same(self.shape(a), self.shape(b), "add")?;
        let y = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(y, shape, Op::Add { a, b }, &[a, b]))
    }

    /// Multiplies `x` by the single learned value in `alpha` (ReZero gate).
    pub fn scale_gate(&mut self, x: Var, alpha: Var) -> Result<Var> {
        if self.value(alpha).len() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "scale_gate expects a scalar gate, got {:?}",
                self.shape(alpha)
            )));
        }
        let a = self.value(alpha)[0];
        let y = self.value(x).iter().map(|v| v * a).collect();
        let shape = self.shape(x).to_vec();
        Ok(self.push(y, shape, Op::ScaleGate { x, alpha }, &[x, alpha]))
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let y = self.value(x).iter().map(|v| v * c).collect();
        let shape = self.shape(x).to_vec();
        self.push(y, shape, Op::Scale { x, c }, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape(x)
            )));
        }
        let y = self.value(x).to_vec();
        Ok(self.push(y, shape, Op::Reshape { x }, &[x]))
    }

    /// Collapses `[B, ...]` into `[B, prod(...)]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        let b = s[0];
        let rest = s[1..].iter().product();
        self.reshape(x, vec![b, rest])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        self.push(vec![s], vec![1], Op::Sum { x }, &[x])
    }

    /// Propagates d(loss)/d(node) back to every differentiable leaf. Leaf
    /// gradients accumulate across calls; intermediate adjoints do not persist.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::NonScalarLoss(self.nodes[loss.0].shape.clone()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => add_into(acc, &g),
                    None => node.grad = Some(g),
                }
                continue;
            }
            self.propagate(i, &g, &mut adj);
        }
        Ok(())
    }

    /// Clears leaf gradients.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn take(&self, v: Var, adj: &mut [Option<Vec<f64>>]) -> Option<Vec<f64>> {
        if !self.wants(v) {
            return None;
        }
        let len = self.nodes[v.0].value.len();
        Some(adj[v.0].take().unwrap_or_else(|| vec![0.0; len]))
    }

    fn put(v: Var, buf: Option<Vec<f64>>, adj: &mut [Option<Vec<f64>>]) {
        let Some(buf) = buf else { return };
        match &mut adj[v.0] {
            Some(existing) => add_into(existing, &buf),
            slot @ None => *slot = Some(buf),
        }
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        // Parent adjoints are taken out of `adj`, updated, and put back.
        macro_rules! with_grad {
            ($v:expr, |$d:ident| $body:block) => {{
                let v = $v;
                let mut buf = self.take(v, adj);
                if let Some($d) = buf.as_deref_mut() $body
                Self::put(v, buf, adj);
            }};
        }
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                x,
                kernel,
                bias,
                geom,
            } => {
                let batch = self.shape(*x)[0];
                let mut dk = self.take(*kernel, adj);
                let mut db = self.take(*bias, adj);
                let mut dx = self.take(*x, adj);
                conv2d_backward(
                    geom,
                    batch,
                    self.value(*x),
                    self.value(*kernel),
                    g,
                    dk.as_deref_mut(),
                    db.as_deref_mut(),
                    dx.as_deref_mut(),
                );
                Self::put(*kernel, dk, adj);
                Self::put(*bias, db, adj);
                Self::put(*x, dx, adj);
            }
            Op::Dense { x, weight, bias } => {
                let (batch, l_in) = (self.shape(*x)[0], self.shape(*x)[1]);
                let l_out = self.shape(*weight)[0];
                with_grad!(*bias, |db| {
                    for row in g.chunks_exact(l_out) {
                        add_into(db, row);
                    }
                });
                with_grad!(*weight, |dw| {
                    gemm(l_out, batch, l_in, g, 1, l_out, self.value(*x), l_in, 1, 1.0, dw, l_in, 1);
                });
                with_grad!(*x, |dx| {
                    gemm(batch, l_out, l_in, g, l_out, 1, self.value(*weight), l_in, 1, 1.0, dx, l_in, 1);
                });
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                x_hat,
                inv_std,
                train,
            } => {
                let xs = self.shape(*x);
                let (b, c) = (xs[0], xs[1]);
                let inner: usize = xs[2..].iter().product();
                let mut sum_g = vec![0.0; c];
                let mut sum_gx = vec![0.0; c];
                for n in 0..b {
                    for ch in 0..c {
                        let off = (n * c + ch) * inner;
                        for k in off..off + inner {
                            sum_g[ch] += g[k];
                            sum_gx[ch] += g[k] * x_hat[k];
                        }
                    }
                }
                with_grad!(*beta, |dbeta| {
                    add_into(dbeta, &sum_g);
                });
                with_grad!(*gamma, |dgamma| {
                    add_into(dgamma, &sum_gx);
                });
                with_grad!(*x, |dx| {
                    let gam = self.value(*gamma);
                    let count = (b * inner) as f64;
                    for n in 0..b {
                        for ch in 0..c {
                            let off = (n * c + ch) * inner;
                            let k0 = gam[ch] * inv_std[ch];
                            if *train {
                                let mg = sum_g[ch] / count;
                                let mgx = sum_gx[ch] / count;
                                for k in off..off + inner {
                                    dx[k] += k0 * (g[k] - mg - x_hat[k] * mgx);
                                }
                            } else {
                                for k in off..off + inner {
                                    dx[k] += k0 * g[k];
                                }
                            }
                        }
                    }
                });
            }
            Op::LeakyRelu { x, slope } => {
                with_grad!(*x, |dx| {
                    for ((d, &gv), &xv) in dx.iter_mut().zip(g).zip(self.value(*x)) {
                        *d += if xv >= 0.0 { gv } else { slope * gv };
                    }
                });
            }
            Op::Sigmoid { x } => {
                with_grad!(*x, |dx| {
                    for ((d, &gv), &y) in dx.iter_mut().zip(g).zip(&node.value) {
                        *d += gv * y * (1.0 - y);
                    }
                });
            }
            Op::SoftmaxT { x, t } => {
                with_grad!(*x, |dx| {
                    let b = node.shape[0];
                    let l = node.value.len() / b;
                    for n in 0..b {
                        let y = &node.value[n * l..(n + 1) * l];
                        let gr = &g[n * l..(n + 1) * l];
                        let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for k in 0..l {
                            dx[n * l + k] += y[k] * (gr[k] - dot) / t;
                        }
                    }
                });
            }
            Op::Mse { pred, target } => {
                let n = self.value(*pred).len() as f64;
                let scale = 2.0 * g[0] / n;
                let (p, q) = (self.value(*pred), self.value(*target));
                with_grad!(*pred, |dp| {
                    for ((d, a), b) in dp.iter_mut().zip(p).zip(q) {
                        *d += scale * (a - b);
                    }
                });
                with_grad!(*target, |dq| {
                    for ((d, a), b) in dq.iter_mut().zip(p).zip(q) {
                        *d -= scale * (a - b);
                    }
                });
            }
            Op::SoftCrossEntropy { teacher, student } => {
                let b = self.shape(*teacher)[0] as f64;
                let scale = g[0] / b;
                let (p, q) = (self.value(*teacher), self.value(*student));
                with_grad!(*student, |dq| {
                    for ((d, &pi), &qi) in dq.iter_mut().zip(p).zip(q) {
                        if qi > LOG_FLOOR {
                            *d -= scale * pi / qi;
                        }
                    }
                });
                with_grad!(*teacher, |dp| {
                    for (d, &qi) in dp.iter_mut().zip(q) {
                        *d -= scale * qi.max(LOG_FLOOR).ln();
                    }
                });
            }
            Op::Concat { a, b } => {
                let sa = self.shape(*a);
                let inner: usize = sa[2..].iter().product();
                let (batch, ca, cb) = (sa[0], sa[1], self.shape(*b)[1]);
                let stride = (ca + cb) * inner;
                with_grad!(*a, |da| {
                    for n in 0..batch {
                        add_into(
                            &mut da[n * ca * inner..(n + 1) * ca * inner],
                            &g[n * stride..n * stride + ca * inner],
                        );
                    }
                });
                with_grad!(*b, |db| {
                    for n in 0..batch {
                        add_into(
                            &mut db[n * cb * inner..(n + 1) * cb * inner],
                            &g[n * stride + ca * inner..(n + 1) * stride],
                        );
                    }
                });
            }
            Op::Add { a, b } => {
                with_grad!(*a, |da| {
                    add_into(da, g);
                });
                with_grad!(*b, |db| {
                    add_into(db, g);
                });
            }
            Op::ScaleGate { x, alpha } => {
                let a = self.value(*alpha)[0];
                with_grad!(*alpha, |dalpha| {
                    dalpha[0] += g.iter().zip(self.value(*x)).map(|(g, x)| g * x).sum::<f64>();
                });
                with_grad!(*x, |dx| {
                    for (d, gv) in dx.iter_mut().zip(g) {
                        *d += gv * a;
                    }
                });
            }
            Op::Scale { x, c } => {
                with_grad!(*x, |dx| {
                    for (d, gv) in dx.iter_mut().zip(g) {
                        *d += gv * c;
                    }
                });
            }
            Op::Reshape { x } => {
                with_grad!(*x, |dx| {
                    add_into(dx, g);
                });
            }
            Op::Sum { x } => {
                with_grad!(*x, |dx| {
                    for d in dx.iter_mut() {
                        *d += g[0];
                    }
                });
            }
        }
    }
}
