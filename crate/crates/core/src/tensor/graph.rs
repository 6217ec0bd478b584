//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Every primitive evaluates eagerly when it is recorded, so the tape is
//! always in topological order and the forward values are available right
//! away. [`Graph::backward`] replays the tape in reverse and returns the
//! gradient of a scalar loss with respect to every leaf that requires it.
//! Repeated uses of a node sum their contributions.

use super::Tensor;
use crate::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Conv2d { input: Var, kernel: Var, stride: usize, padding: usize },
    ConvTranspose2d { input: Var, kernel: Var, stride: usize, padding: usize },
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Sum(Var),
    SumLast(Var),
    Mean(Var),
    Reshape(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    AddBias { x: Var, bias: Var, axis: usize },
    BceWithLogits { logits: Var, target: Var },
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Tape of evaluated primitives.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to the leaves of a graph.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Removes and returns the gradient of `v`, or zeros of `shape` when the
    /// loss does not depend on it.
    pub fn take_or_zeros(&mut self, v: Var, shape: &[usize]) -> Tensor {
        self.grads
            .get_mut(v.0)
            .and_then(Option::take)
            .unwrap_or_else(|| Tensor::zeros(shape))
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// C = op(A) * op(B) + beta * C, with A logically m×k and B k×n.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above address exactly the m×k, k×n and m×n
    // row-major buffers whose lengths are asserted.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(x: &Tensor) -> Tensor {
    let m = x.last_dim();
    let mut out = Vec::with_capacity(x.len());
    for row in x.rows() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut total = 0.0;
        for &v in row {
            let e = (v - max).exp();
            total += e;
            out.push(e);
        }
        for v in &mut out[start..start + m] {
            *v /= total;
        }
    }
    Tensor::from_parts(x.shape().to_vec(), out)
}

fn log_softmax_rows(x: &Tensor) -> Tensor {
    let mut out = Vec::with_capacity(x.len());
    for row in x.rows() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        out.extend(row.iter().map(|&v| v - lse));
    }
    Tensor::from_parts(x.shape().to_vec(), out)
}

struct ConvGeom {
    batch: usize,
    in_c: usize,
    in_h: usize,
    in_w: usize,
    out_c: usize,
    out_h: usize,
    out_w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
}

impl ConvGeom {
    /// Visits every (input index, output index, kernel index) triple of a
    /// direct convolution. For the transposed variant the roles of input and
    /// output spatial maps are swapped by the caller.
    fn for_each(&self, transposed: bool, mut f: impl FnMut(usize, usize, usize)) {
        let (lo_h, lo_w, hi_h, hi_w) = if transposed {
            (self.in_h, self.in_w, self.out_h, self.out_w)
        } else {
            (self.out_h, self.out_w, self.in_h, self.in_w)
        };
        // `lo` is the strided grid, `hi` the dense one.
        for n in 0..self.batch {
            for o in 0..self.out_c {
                for c in 0..self.in_c {
                    for ky in 0..self.kh {
                        for kx in 0..self.kw {
                            let kidx = if transposed {
                                ((c * self.out_c + o) * self.kh + ky) * self.kw + kx
                            } else {
                                ((o * self.in_c + c) * self.kh + ky) * self.kw + kx
                            };
                            for ly in 0..lo_h {
                                let hy = (ly * self.stride + ky) as isize - self.padding as isize;
                                if hy < 0 || hy >= hi_h as isize {
                                    continue;
                                }
                                for lx in 0..lo_w {
                                    let hx =
                                        (lx * self.stride + kx) as isize - self.padding as isize;
                                    if hx < 0 || hx >= hi_w as isize {
                                        continue;
                                    }
                                    let (hy, hx) = (hy as usize, hx as usize);
                                    let (iidx, oidx) = if transposed {
                                        (
                                            ((n * self.in_c + c) * self.in_h + ly) * self.in_w + lx,
                                            ((n * self.out_c + o) * self.out_h + hy) * self.out_w
                                                + hx,
                                        )
                                    } else {
                                        (
                                            ((n * self.in_c + c) * self.in_h + hy) * self.in_w + hx,
                                            ((n * self.out_c + o) * self.out_h + ly) * self.out_w
                                                + lx,
                                        )
                                    };
                                    f(iidx, oidx, kidx);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { op, value, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant leaf.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { op: Op::Leaf, value, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf whose gradient is collected by [`Graph::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { op: Op::Leaf, value, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn zip(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape(op, x, y)?;
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Ok(Tensor::from_parts(x.shape().to_vec(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip("add", a, b, |p, q| p + q)?;
        Ok(self.push(Op::Add(a, b), t, &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip("sub", a, b, |p, q| p - q)?;
        Ok(self.push(Op::Sub(a, b), t, &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip("mul", a, b, |p, q| p * q)?;
        Ok(self.push(Op::Mul(a, b), t, &[a, b]))
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a).map(|v| v * c);
        self.push(Op::Scale(a, c), t, &[a])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a).map(|v| v + c);
        self.push(Op::AddScalar(a), t, &[a])
    }

    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let (m, k, n) = match (x.shape(), y.shape()) {
            ([m, k], [k2, n]) if k == k2 => (*m, *k, *n),
            (s, t) => return Err(Error::shape("matmul", format!("{s:?} x {t:?}"))),
        };
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, x.data(), false, y.data(), false, 0.0, &mut out);
        let t = Tensor::from_parts(vec![m, n], out);
        Ok(self.push(Op::MatMul(a, b), t, &[a, b]))
    }

    fn conv_geom(&self, input: Var, kernel: Var, stride: usize, padding: usize, transposed: bool) -> Result<ConvGeom> {
        let op = if transposed { "conv_transpose2d" } else { "conv2d" };
        if stride == 0 {
            return Err(Error::shape(op, "stride must be positive"));
        }
        let (x, k) = (self.value(input), self.value(kernel));
        let ([batch, in_c, in_h, in_w], &[k0, k1, kh, kw]) = (x.shape(), k.shape()) else {
            return Err(Error::shape(op, format!("input {:?}, kernel {:?}", x.shape(), k.shape())));
        };
        let (kin, out_c) = if transposed { (k0, k1) } else { (k1, k0) };
        if kin != *in_c {
            return Err(Error::shape(op, format!("input {:?}, kernel {:?}", x.shape(), k.shape())));
        }
        let (out_h, out_w) = if transposed {
            let oh = ((in_h - 1) * stride + kh) as isize - 2 * padding as isize;
            let ow = ((in_w - 1) * stride + kw) as isize - 2 * padding as isize;
            if oh <= 0 || ow <= 0 {
                return Err(Error::shape(op, "empty output"));
            }
            (oh as usize, ow as usize)
        } else {
            if in_h + 2 * padding < kh || in_w + 2 * padding < kw {
                return Err(Error::shape(op, format!("kernel {kh}x{kw} larger than padded input")));
            }
            ((in_h + 2 * padding - kh) / stride + 1, (in_w + 2 * padding - kw) / stride + 1)
        };
        Ok(ConvGeom {
            batch: *batch,
            in_c: *in_c,
            in_h: *in_h,
            in_w: *in_w,
            out_c,
            out_h,
            out_w,
            kh,
            kw,
            stride,
            padding,
        })
    }

    /// Direct 2-D convolution of `[N, C, H, W]` with kernel `[O, C, kh, kw]`.
    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let g = self.conv_geom(input, kernel, stride, padding, false)?;
        let mut out = vec![0.0; g.batch * g.out_c * g.out_h * g.out_w];
        {
            let (x, k) = (self.value(input).data(), self.value(kernel).data());
            g.for_each(false, |i, o, kk| out[o] += x[i] * k[kk]);
        }
        let t = Tensor::from_parts(vec![g.batch, g.out_c, g.out_h, g.out_w], out);
        Ok(self.push(Op::Conv2d { input, kernel, stride, padding }, t, &[input, kernel]))
    }

    /// Transposed convolution of `[N, C, H, W]` with kernel `[C, O, kh, kw]`.
    pub fn conv_transpose2d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let g = self.conv_geom(input, kernel, stride, padding, true)?;
        let mut out = vec![0.0; g.batch * g.out_c * g.out_h * g.out_w];
        {
            let (x, k) = (self.value(input).data(), self.value(kernel).data());
            g.for_each(true, |i, o, kk| out[o] += x[i] * k[kk]);
        }
        let t = Tensor::from_parts(vec![g.batch, g.out_c, g.out_h, g.out_w], out);
        Ok(self.push(Op::ConvTranspose2d { input, kernel, stride, padding }, t, &[input, kernel]))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|v| v.max(0.0));
        self.push(Op::Relu(a), t, &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let t = self.value(a).map(|v| if v > 0.0 { v } else { slope * v });
        self.push(Op::LeakyRelu(a, slope), t, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), t, &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), t, &[a])
    }

    pub fn log(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::ln);
        self.push(Op::Log(a), t, &[a])
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let t = softmax_rows(self.value(a));
        self.push(Op::Softmax(a), t, &[a])
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let t = log_softmax_rows(self.value(a));
        self.push(Op::LogSoftmax(a), t, &[a])
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, a: Var) -> Var {
        let t = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum(a), t, &[a])
    }

    /// Sum over the last axis.
    pub fn sum_last(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut shape = x.shape()[..x.rank() - 1].to_vec();
        if shape.is_empty() {
            shape.push(1);
        }
        let data = x.rows().map(|r| r.iter().sum()).collect();
        let t = Tensor::from_parts(shape, data);
        self.push(Op::SumLast(a), t, &[a])
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let t = Tensor::scalar(x.sum() / x.len() as f64);
        self.push(Op::Mean(a), t, &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        Ok(self.push(Op::Reshape(a), t, &[a]))
    }

    /// Concatenation along `axis`; all other extents must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs.first().ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let base = self.value(*first).shape().to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", format!("axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for v in inputs {
            let s = self.value(*v).shape();
            if s.len() != base.len()
                || s.iter().zip(&base).enumerate().any(|(d, (a, b))| d != axis && a != b)
            {
                return Err(Error::shape("concat", format!("{s:?} vs {base:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in inputs {
                let x = self.value(*v);
                let chunk = x.shape()[axis] * inner;
                data.extend_from_slice(&x.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let t = Tensor::from_parts(shape, data);
        Ok(self.push(Op::Concat { inputs: inputs.to_vec(), axis }, t, inputs))
    }

    /// Adds a rank-1 `bias` broadcast along `axis` of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var, axis: usize) -> Result<Var> {
        let (xt, bt) = (self.value(x), self.value(bias));
        if bt.rank() != 1 || axis >= xt.rank() || xt.shape()[axis] != bt.len() {
            return Err(Error::shape(
                "add_bias",
                format!("x {:?}, bias {:?}, axis {axis}", xt.shape(), bt.shape()),
            ));
        }
        let inner: usize = xt.shape()[axis + 1..].iter().product();
        let c = bt.len();
        let b = bt.data();
        let data = xt.data().iter().enumerate().map(|(i, &v)| v + b[(i / inner) % c]).collect();
        let t = Tensor::from_parts(xt.shape().to_vec(), data);
        Ok(self.push(Op::AddBias { x, bias, axis }, t, &[x, bias]))
    }

    /// Elementwise Bernoulli negative log-likelihood of `target` under
    /// `logits`. The target is treated as a constant.
    pub fn bce_with_logits(&mut self, logits: Var, target: Var) -> Result<Var> {
        let t = self.zip("bce_with_logits", logits, target, |l, y| {
            l.max(0.0) - l * y + (-l.abs()).exp().ln_1p()
        })?;
        Ok(self.push(Op::BceWithLogits { logits, target }, t, &[logits]))
    }

    /// Gradients of the scalar `loss` with respect to every leaf recorded
    /// with [`Graph::param`]. Intermediate gradients are discarded.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::from_parts(lv.shape().to_vec(), vec![1.0]));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let Some(gout) = grads[idx].take() else { continue };
            self.backprop_node(node, &gout, &mut grads);
        }
        // Keep only leaf gradients.
        for (node, g) in self.nodes.iter().zip(grads.iter_mut()) {
            if !matches!(node.op, Op::Leaf) || !node.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop_node(&self, node: &Node, gout: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &node.value;
        let unary = |f: &dyn Fn(f64, f64, f64) -> f64, a: Var| -> Tensor {
            let x = self.value(a).data();
            let y = out.data();
            let data = gout.data().iter().enumerate().map(|(i, &g)| f(x[i], y[i], g)).collect();
            Tensor::from_parts(gout.shape().to_vec(), data)
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, gout.clone());
                self.accumulate(grads, *b, gout.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, gout.clone());
                self.accumulate(grads, *b, gout.map(|g| -g));
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    let d = gout.data().iter().zip(y.data()).map(|(g, q)| g * q).collect();
                    self.accumulate(grads, *a, Tensor::from_parts(x.shape().to_vec(), d));
                }
                if self.requires_grad(*b) {
                    let d = gout.data().iter().zip(x.data()).map(|(g, p)| g * p).collect();
                    self.accumulate(grads, *b, Tensor::from_parts(y.shape().to_vec(), d));
                }
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, gout.map(|g| g * c)),
            Op::AddScalar(a) | Op::Reshape(a) => {
                let shape = self.value(*a).shape().to_vec();
                self.accumulate(grads, *a, Tensor::from_parts(shape, gout.data().to_vec()));
            }
            Op::MatMul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let (m, k, n) = (x.shape()[0], x.shape()[1], y.shape()[1]);
                if self.requires_grad(*a) {
                    let mut d = vec![0.0; m * k];
                    gemm(m, n, k, gout.data(), false, y.data(), true, 0.0, &mut d);
                    self.accumulate(grads, *a, Tensor::from_parts(vec![m, k], d));
                }
                if self.requires_grad(*b) {
                    let mut d = vec![0.0; k * n];
                    gemm(k, m, n, x.data(), true, gout.data(), false, 0.0, &mut d);
                    self.accumulate(grads, *b, Tensor::from_parts(vec![k, n], d));
                }
            }
            Op::Conv2d { input, kernel, stride, padding }
            | Op::ConvTranspose2d { input, kernel, stride, padding } => {
                let transposed = matches!(node.op, Op::ConvTranspose2d { .. });
                let geom = self
                    .conv_geom(*input, *kernel, *stride, *padding, transposed)
                    .expect("geometry validated in forward");
                let (x, k) = (self.value(*input), self.value(*kernel));
                let go = gout.data();
                if self.requires_grad(*input) {
                    let mut d = vec![0.0; x.len()];
                    let kd = k.data();
                    geom.for_each(transposed, |i, o, kk| d[i] += go[o] * kd[kk]);
                    self.accumulate(grads, *input, Tensor::from_parts(x.shape().to_vec(), d));
                }
                if self.requires_grad(*kernel) {
                    let mut d = vec![0.0; k.len()];
                    let xd = x.data();
                    geom.for_each(transposed, |i, o, kk| d[kk] += go[o] * xd[i]);
                    self.accumulate(grads, *kernel, Tensor::from_parts(k.shape().to_vec(), d));
                }
            }
            Op::Relu(a) => {
                let g = unary(&|x, _, g| if x > 0.0 { g } else { 0.0 }, *a);
                self.accumulate(grads, *a, g);
            }
            Op::LeakyRelu(a, slope) => {
                let s = *slope;
                let g = unary(&|x, _, g| if x > 0.0 { g } else { s * g }, *a);
                self.accumulate(grads, *a, g);
            }
            Op::Sigmoid(a) => {
                let g = unary(&|_, y, g| g * y * (1.0 - y), *a);
                self.accumulate(grads, *a, g);
            }
            Op::Exp(a) => {
                let g = unary(&|_, y, g| g * y, *a);
                self.accumulate(grads, *a, g);
            }
            Op::Log(a) => {
                let g = unary(&|x, _, g| g / x, *a);
                self.accumulate(grads, *a, g);
            }
            Op::Softmax(a) => {
                let m = out.last_dim();
                let mut d = Vec::with_capacity(out.len());
                for (y, g) in out.rows().zip(gout.data().chunks_exact(m)) {
                    let dot: f64 = y.iter().zip(g).map(|(p, q)| p * q).sum();
                    d.extend(y.iter().zip(g).map(|(p, q)| p * (q - dot)));
                }
                self.accumulate(grads, *a, Tensor::from_parts(out.shape().to_vec(), d));
            }
            Op::LogSoftmax(a) => {
                let m = out.last_dim();
                let mut d = Vec::with_capacity(out.len());
                for (y, g) in out.rows().zip(gout.data().chunks_exact(m)) {
                    let total: f64 = g.iter().sum();
                    d.extend(y.iter().zip(g).map(|(ly, q)| q - ly.exp() * total));
                }
                self.accumulate(grads, *a, Tensor::from_parts(out.shape().to_vec(), d));
            }
            Op::Sum(a) => {
                let shape = self.value(*a).shape().to_vec();
                let g = gout.data()[0];
                self.accumulate(grads, *a, Tensor::full(&shape, g));
            }
            Op::Mean(a) => {
                let x = self.value(*a);
                let g = gout.data()[0] / x.len() as f64;
                self.accumulate(grads, *a, Tensor::full(x.shape(), g));
            }
            Op::SumLast(a) => {
                let x = self.value(*a);
                let m = x.last_dim();
                let d = gout.data().iter().flat_map(|&g| std::iter::repeat_n(g, m)).collect();
                self.accumulate(grads, *a, Tensor::from_parts(x.shape().to_vec(), d));
            }
            Op::Concat { inputs, axis } => {
                let outer: usize = out.shape()[..*axis].iter().product();
                let inner: usize = out.shape()[axis + 1..].iter().product();
                let row = out.shape()[*axis] * inner;
                let mut offset = 0;
                for v in inputs {
                    let x = self.value(*v);
                    let chunk = x.shape()[*axis] * inner;
                    if self.requires_grad(*v) {
                        let mut d = Vec::with_capacity(x.len());
                        for o in 0..outer {
                            let start = o * row + offset;
                            d.extend_from_slice(&gout.data()[start..start + chunk]);
                        }
                        self.accumulate(grads, *v, Tensor::from_parts(x.shape().to_vec(), d));
                    }
                    offset += chunk;
                }
            }
            Op::AddBias { x, bias, axis } => {
                self.accumulate(grads, *x, gout.clone());
                if self.requires_grad(*bias) {
                    let xs = self.value(*x).shape();
                    let inner: usize = xs[axis + 1..].iter().product();
                    let c = xs[*axis];
                    let mut d = vec![0.0; c];
                    for (i, g) in gout.data().iter().enumerate() {
                        d[(i / inner) % c] += g;
                    }
                    self.accumulate(grads, *bias, Tensor::from_vec(d));
                }
            }
            Op::BceWithLogits { logits, target } => {
                let (l, y) = (self.value(*logits).data(), self.value(*target).data());
                let d = gout
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, g)| g * (sigmoid(l[i]) - y[i]))
                    .collect();
                self.accumulate(grads, *logits, Tensor::from_parts(gout.shape().to_vec(), d));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity_is_neutral() {
        let mut g = Graph::new();
        let a = Tensor::new(vec![3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let i = g.input(Tensor::identity(3));
        let av = g.input(a.clone());
        let out = g.matmul(i, av).unwrap();
        assert_eq!(g.value(out), &a);
    }

    #[test]
    fn relu_and_softmax_definitions() {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(vec![-1.0, 0.0, 2.0]));
        let r = g.relu(x);
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
        let z = g.input(Tensor::from_vec(vec![0.0, 0.0]));
        let s = g.softmax(z);
        assert_eq!(g.value(s).data(), &[0.5, 0.5]);
    }

    #[test]
    fn shape_errors_name_the_primitive() {
        let mut g = Graph::new();
        let a = g.input(Tensor::zeros(&[2, 3]));
        let b = g.input(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
        let c = g.input(Tensor::zeros(&[3]));
        assert!(g.add(a, c).unwrap_err().to_string().contains("add"));
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(&[2, 4]));
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap(), &Tensor::ones(&[2, 4]));
    }

    #[test]
    fn product_rule() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(2.0));
        let y = g.param(Tensor::scalar(3.0));
        let p = g.mul(x, y).unwrap();
        let grads = g.backward(p).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[3.0]);
        assert_eq!(grads.get(y).unwrap().data(), &[2.0]);
    }

    #[test]
    fn loss_gradient_wrt_itself_is_one() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(5.0));
        let grads = g.backward(x).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0]);
    }

    #[test]
    fn reused_node_accumulates() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let sq = g.mul(x, x).unwrap();
        let total = g.add(sq, x).unwrap();
        let grads = g.backward(total).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[7.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(&[2]));
        assert!(matches!(g.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn softmax_survives_huge_and_masked_logits() {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(vec![1000.0, 0.0, -1e30]));
        let s = g.softmax(x);
        assert_eq!(g.value(s).data(), &[1.0, 0.0, 0.0]);
        let ls = g.log_softmax(x);
        assert!(g.value(ls).is_finite());
    }

    #[test]
    fn conv_transpose_inverts_stride_geometry() {
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[1, 2, 4, 4]));
        let k = g.input(Tensor::zeros(&[2, 3, 4, 4]));
        let y = g.conv_transpose2d(x, k, 2, 1).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 3, 8, 8]);
        let k2 = g.input(Tensor::zeros(&[5, 3, 4, 4]));
        let z = g.conv2d(y, k2, 2, 1).unwrap();
        assert_eq!(g.value(z).shape(), &[1, 5, 4, 4]);
    }

    #[test]
    fn concat_interleaves_along_axis() {
        let mut g = Graph::new();
        let a = g.input(Tensor::new(vec![2, 1], vec![1.0, 2.0]).unwrap());
        let b = g.input(Tensor::new(vec![2, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap());
        let c = g.concat(&[a, b], 1).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
    }
}
