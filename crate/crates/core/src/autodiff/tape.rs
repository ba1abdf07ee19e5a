//! Eager reverse-mode tape.
//!
//! Every primitive computes its value immediately and appends a node; node
//! inputs always precede the node, so the tape is topologically ordered by
//! construction and a single reverse sweep visits each node once.

use super::kernels::{self, ConvGeom};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive tags accepted by [`Tape::apply`].
#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    /// Inputs: `x [N,C_in,H,W]`, `w [C_out,C_in,K,K]`, `b [C_out]`.
    Conv2d {
        stride: usize,
        pad: usize,
    },
    /// Inputs: `x [N,in]`, `w [out,in]`, `b [out]`.
    Dense,
    Relu,
    Sigmoid,
    MaxPool2d {
        window: usize,
    },
    Flatten,
    /// Row-wise over the last axis of a 2-D input.
    Softmax,
    /// Mean negative log-likelihood of `labels` under softmax of 2-D logits.
    CrossEntropy {
        labels: Vec<usize>,
    },
    Add,
    Mul,
    /// Mean squared difference of two same-shape inputs.
    Mse,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d(ConvGeom),
    Dense { n: usize, d_in: usize, d_out: usize },
    Relu,
    Sigmoid,
    MaxPool { argmax: Vec<usize> },
    Reshape,
    Softmax { cols: usize },
    CrossEntropy { labels: Vec<usize>, probs: Vec<f64> },
    Add,
    Sub,
    Mul,
    Mse,
    Affine { scale: f64 },
    ScaleRows { cols: usize },
    Mean,
    Sum,
    Bce { targets: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    inputs: Vec<Var>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    no_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

const BCE_EPS: f64 = 1e-12;

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// A tape for inference only: leaves never require gradients, so no
    /// backward state is retained.
    pub fn no_grad() -> Self {
        Tape {
            nodes: Vec::new(),
            no_grad: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a tensor as a leaf. Its `requires_grad` flag decides whether
    /// gradients are propagated into it.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        let grad = t.requires_grad() && !self.no_grad;
        self.push(
            t.shape().to_vec(),
            t.data().to_vec(),
            Op::Leaf,
            vec![],
            grad,
        )
    }

    /// Leaf that never receives a gradient (inputs, detached targets).
    pub fn constant(&mut self, shape: Vec<usize>, value: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, value)?;
        Ok(self.push(t.shape().to_vec(), t.into_data(), Op::Leaf, vec![], false))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Value of a single-element node.
    pub fn item(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shapes are validated on insert")
    }

    fn push(
        &mut self,
        shape: Vec<usize>,
        value: Vec<f64>,
        op: Op,
        inputs: Vec<Var>,
        leaf_grad: bool,
    ) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let requires_grad = if inputs.is_empty() {
            leaf_grad
        } else {
            inputs.iter().any(|i| self.nodes[i.0].requires_grad)
        };
        self.nodes.push(Node {
            shape,
            value,
            op,
            inputs,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn check_finite(&self, op: &'static str, vars: &[Var]) -> Result<()> {
        for v in vars {
            if self.nodes[v.0].value.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { op });
            }
        }
        Ok(())
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    /// Dispatches a primitive by tag.
    pub fn apply(&mut self, prim: &Primitive, inputs: &[Var]) -> Result<Var> {
        let arity = match prim {
            Primitive::Conv2d { .. } | Primitive::Dense => 3,
            Primitive::Add | Primitive::Mul | Primitive::Mse => 2,
            _ => 1,
        };
        if inputs.len() != arity {
            return Err(Error::shape(
                "apply",
                format!("{prim:?} takes {arity} inputs, got {}", inputs.len()),
            ));
        }
        match prim {
            Primitive::Conv2d { stride, pad } => {
                self.conv2d(inputs[0], inputs[1], inputs[2], *stride, *pad)
            }
            Primitive::Dense => self.dense(inputs[0], inputs[1], inputs[2]),
            Primitive::Relu => self.relu(inputs[0]),
            Primitive::Sigmoid => self.sigmoid(inputs[0]),
            Primitive::MaxPool2d { window } => self.maxpool2d(inputs[0], *window),
            Primitive::Flatten => self.flatten(inputs[0]),
            Primitive::Softmax => self.softmax(inputs[0]),
            Primitive::CrossEntropy { labels } => self.cross_entropy(inputs[0], labels),
            Primitive::Add => self.add(inputs[0], inputs[1]),
            Primitive::Mul => self.mul(inputs[0], inputs[1]),
            Primitive::Mse => self.mse(inputs[0], inputs[1]),
        }
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        const OP: &str = "conv2d";
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 4 || ws.len() != 4 || bs.len() != 1 {
            return Err(Error::shape(OP, format!("ranks x{xs:?} w{ws:?} b{bs:?}")));
        }
        if ws[1] != xs[1] || ws[2] != ws[3] || bs[0] != ws[0] {
            return Err(Error::shape(
                OP,
                format!("input {xs:?} incompatible with weight {ws:?} and bias {bs:?}"),
            ));
        }
        let k = ws[2];
        let h_out = kernels::conv_out_extent(xs[2], k, stride, pad);
        let w_out = kernels::conv_out_extent(xs[3], k, stride, pad);
        let (Some(h_out), Some(w_out)) = (h_out, w_out) else {
            return Err(Error::shape(
                OP,
                format!("kernel {k} stride {stride} pad {pad} does not fit input {xs:?}"),
            ));
        };
        let g = ConvGeom {
            n: xs[0],
            c_in: xs[1],
            h: xs[2],
            w: xs[3],
            c_out: ws[0],
            k,
            stride,
            pad,
            h_out,
            w_out,
        };
        self.check_finite(OP, &[x, w, b])?;
        let out = kernels::conv2d_forward(self.value(x), self.value(w), self.value(b), &g);
        Ok(self.push(
            vec![g.n, g.c_out, h_out, w_out],
            out,
            Op::Conv2d(g),
            vec![x, w, b],
            false,
        ))
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        const OP: &str = "dense";
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 2 || ws.len() != 2 || bs.len() != 1 || ws[1] != xs[1] || bs[0] != ws[0] {
            return Err(Error::shape(OP, format!("x{xs:?} w{ws:?} b{bs:?}")));
        }
        let (n, d_in, d_out) = (xs[0], xs[1], ws[0]);
        self.check_finite(OP, &[x, w, b])?;
        let y = kernels::dense_forward(self.value(x), self.value(w), self.value(b), n, d_in, d_out);
        Ok(self.push(
            vec![n, d_out],
            y,
            Op::Dense { n, d_in, d_out },
            vec![x, w, b],
            false,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.check_finite("relu", &[x])?;
        let y = self.value(x).iter().map(|&v| v.max(0.0)).collect();
        Ok(self.push(self.shape(x).to_vec(), y, Op::Relu, vec![x], false))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.check_finite("sigmoid", &[x])?;
        let y = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        Ok(self.push(self.shape(x).to_vec(), y, Op::Sigmoid, vec![x], false))
    }

    /// Non-overlapping pooling with stride equal to `window`; trailing rows
    /// and columns that do not fill a window are dropped.
    pub fn maxpool2d(&mut self, x: Var, window: usize) -> Result<Var> {
        const OP: &str = "maxpool2d";
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 || window == 0 || window > xs[2] || window > xs[3] {
            return Err(Error::shape(OP, format!("window {window} on input {xs:?}")));
        }
        self.check_finite(OP, &[x])?;
        let (out, argmax) =
            kernels::maxpool_forward(self.value(x), xs[0] * xs[1], xs[2], xs[3], window);
        let shape = vec![xs[0], xs[1], xs[2] / window, xs[3] / window];
        Ok(self.push(shape, out, Op::MaxPool { argmax }, vec![x], false))
    }

    /// Collapses every axis after the first.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x);
        let rest: usize = xs[1..].iter().product();
        let shape = vec![xs[0], rest.max(1)];
        let v = self.value(x).to_vec();
        Ok(self.push(shape, v, Op::Reshape, vec![x], false))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        const OP: &str = "softmax";
        let xs = self.shape(x);
        if xs.len() != 2 {
            return Err(Error::shape(OP, format!("expected 2-D input, got {xs:?}")));
        }
        let cols = xs[1];
        self.check_finite(OP, &[x])?;
        let y = softmax_rows(self.value(x), cols);
        Ok(self.push(
            self.shape(x).to_vec(),
            y,
            Op::Softmax { cols },
            vec![x],
            false,
        ))
    }

    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        const OP: &str = "cross_entropy";
        let xs = self.shape(logits);
        if xs.len() != 2 || xs[0] != labels.len() {
            return Err(Error::shape(
                OP,
                format!("logits {xs:?} with {} labels", labels.len()),
            ));
        }
        let cols = xs[1];
        if let Some(bad) = labels.iter().find(|&&l| l >= cols) {
            return Err(Error::shape(
                OP,
                format!("label {bad} out of range for {cols} classes"),
            ));
        }
        self.check_finite(OP, &[logits])?;
        let probs = softmax_rows(self.value(logits), cols);
        let n = labels.len();
        let loss = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| -log_softmax_at(&self.value(logits)[i * cols..(i + 1) * cols], l))
            .sum::<f64>()
            / n as f64;
        let op = Op::CrossEntropy {
            labels: labels.to_vec(),
            probs,
        };
        Ok(self.push(vec![1], vec![loss], op, vec![logits], false))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    fn binary(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        tag: Op,
    ) -> Result<Var> {
        self.same_shape(op, a, b)?;
        self.check_finite(op, &[a, b])?;
        let y = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.push(self.shape(a).to_vec(), y, tag, vec![a, b], false))
    }

    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        self.check_finite("mse", &[a, b])?;
        let n = self.value(a).len() as f64;
        let s = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / n;
        Ok(self.push(vec![1], vec![s], Op::Mse, vec![a, b], false))
    }

    /// `scale · x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        self.check_finite("affine", &[x])?;
        let y = self.value(x).iter().map(|v| scale * v + shift).collect();
        Ok(self.push(
            self.shape(x).to_vec(),
            y,
            Op::Affine { scale },
            vec![x],
            false,
        ))
    }

    /// Multiplies each row of `x [N, C]` by the matching entry of `s [N, 1]`.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        const OP: &str = "scale_rows";
        let (xs, ss) = (self.shape(x), self.shape(s));
        if xs.len() != 2 || ss != [xs[0], 1] {
            return Err(Error::shape(OP, format!("x{xs:?} scaled by {ss:?}")));
        }
        let cols = xs[1];
        self.check_finite(OP, &[x, s])?;
        let sv = self.value(s);
        let y = self
            .value(x)
            .chunks_exact(cols)
            .zip(sv)
            .flat_map(|(row, &k)| row.iter().map(move |v| v * k))
            .collect();
        Ok(self.push(
            self.shape(x).to_vec(),
            y,
            Op::ScaleRows { cols },
            vec![x, s],
            false,
        ))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.check_finite("mean", &[x])?;
        let v = self.value(x);
        let m = v.iter().sum::<f64>() / v.len() as f64;
        Ok(self.push(vec![1], vec![m], Op::Mean, vec![x], false))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check_finite("sum", &[x])?;
        let s = self.value(x).iter().sum();
        Ok(self.push(vec![1], vec![s], Op::Sum, vec![x], false))
    }

    /// Mean binary cross-entropy of probabilities `c` against fixed targets.
    pub fn bce(&mut self, c: Var, targets: &[f64]) -> Result<Var> {
        const OP: &str = "bce";
        if self.value(c).len() != targets.len() {
            return Err(Error::shape(
                OP,
                format!(
                    "{} probabilities vs {} targets",
                    self.value(c).len(),
                    targets.len()
                ),
            ));
        }
        self.check_finite(OP, &[c])?;
        let n = targets.len() as f64;
        let l = self
            .value(c)
            .iter()
            .zip(targets)
            .map(|(&p, &t)| {
                let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / n;
        let op = Op::Bce {
            targets: targets.to_vec(),
        };
        Ok(self.push(vec![1], vec![l], op, vec![c], false))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || node.inputs.is_empty() {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let ins = &node.inputs;
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d(geom) => {
                let (dx, dw, db) = kernels::conv2d_backward(
                    self.value(ins[0]),
                    self.value(ins[1]),
                    g,
                    geom,
                    self.wants(ins[0]),
                );
                if let Some(dx) = dx {
                    accumulate(grads, ins[0], dx);
                }
                self.accumulate_if(grads, ins[1], dw);
                self.accumulate_if(grads, ins[2], db);
            }
            Op::Dense { n, d_in, d_out } => {
                let (dx, dw, db) = kernels::dense_backward(
                    self.value(ins[0]),
                    self.value(ins[1]),
                    g,
                    *n,
                    *d_in,
                    *d_out,
                );
                self.accumulate_if(grads, ins[0], dx);
                self.accumulate_if(grads, ins[1], dw);
                self.accumulate_if(grads, ins[2], db);
            }
            Op::Relu => {
                let x = self.value(ins[0]);
                let d = g
                    .iter()
                    .zip(x)
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect();
                accumulate(grads, ins[0], d);
            }
            Op::Sigmoid => {
                let d = g
                    .iter()
                    .zip(&node.value)
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect();
                accumulate(grads, ins[0], d);
            }
            Op::MaxPool { argmax } => {
                let mut d = vec![0.0; self.value(ins[0]).len()];
                for (gi, &src) in g.iter().zip(argmax) {
                    d[src] += gi;
                }
                accumulate(grads, ins[0], d);
            }
            Op::Reshape => accumulate(grads, ins[0], g.to_vec()),
            Op::Softmax { cols } => {
                let mut d = Vec::with_capacity(g.len());
                for (gr, yr) in g.chunks_exact(*cols).zip(node.value.chunks_exact(*cols)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    d.extend(gr.iter().zip(yr).map(|(gi, yi)| yi * (gi - dot)));
                }
                accumulate(grads, ins[0], d);
            }
            Op::CrossEntropy { labels, probs } => {
                let cols = probs.len() / labels.len();
                let scale = g[0] / labels.len() as f64;
                let mut d: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (i, &l) in labels.iter().enumerate() {
                    d[i * cols + l] -= scale;
                }
                accumulate(grads, ins[0], d);
            }
            Op::Add => {
                self.accumulate_if(grads, ins[0], g.to_vec());
                self.accumulate_if(grads, ins[1], g.to_vec());
            }
            Op::Sub => {
                self.accumulate_if(grads, ins[0], g.to_vec());
                self.accumulate_if(grads, ins[1], g.iter().map(|v| -v).collect());
            }
            Op::Mul => {
                let (a, b) = (self.value(ins[0]), self.value(ins[1]));
                if self.wants(ins[0]) {
                    accumulate(grads, ins[0], g.iter().zip(b).map(|(g, b)| g * b).collect());
                }
                if self.wants(ins[1]) {
                    accumulate(grads, ins[1], g.iter().zip(a).map(|(g, a)| g * a).collect());
                }
            }
            Op::Mse => {
                let (a, b) = (self.value(ins[0]), self.value(ins[1]));
                let k = 2.0 * g[0] / a.len() as f64;
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| k * (x - y)).collect();
                if self.wants(ins[1]) {
                    accumulate(grads, ins[1], d.iter().map(|v| -v).collect());
                }
                self.accumulate_if(grads, ins[0], d);
            }
            Op::Affine { scale } => {
                accumulate(grads, ins[0], g.iter().map(|v| v * scale).collect());
            }
            Op::ScaleRows { cols } => {
                let (x, s) = (self.value(ins[0]), self.value(ins[1]));
                if self.wants(ins[0]) {
                    let d = g
                        .chunks_exact(*cols)
                        .zip(s)
                        .flat_map(|(row, &k)| row.iter().map(move |v| v * k))
                        .collect();
                    accumulate(grads, ins[0], d);
                }
                if self.wants(ins[1]) {
                    let d = g
                        .chunks_exact(*cols)
                        .zip(x.chunks_exact(*cols))
                        .map(|(gr, xr)| gr.iter().zip(xr).map(|(a, b)| a * b).sum())
                        .collect();
                    accumulate(grads, ins[1], d);
                }
            }
            Op::Mean => {
                let n = self.value(ins[0]).len();
                accumulate(grads, ins[0], vec![g[0] / n as f64; n]);
            }
            Op::Sum => {
                let n = self.value(ins[0]).len();
                accumulate(grads, ins[0], vec![g[0]; n]);
            }
            Op::Bce { targets } => {
                let n = targets.len() as f64;
                let d = self
                    .value(ins[0])
                    .iter()
                    .zip(targets)
                    .map(|(&p, &t)| {
                        if p <= BCE_EPS || p >= 1.0 - BCE_EPS {
                            0.0
                        } else {
                            g[0] * (p - t) / (p * (1.0 - p)) / n
                        }
                    })
                    .collect();
                accumulate(grads, ins[0], d);
            }
        }
    }

    fn accumulate_if(&self, grads: &mut [Option<Vec<f64>>], v: Var, d: Vec<f64>) {
        if self.wants(v) {
            accumulate(grads, v, d);
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, d: Vec<f64>) {
    match &mut grads[v.0] {
        Some(buf) => buf.iter_mut().zip(&d).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(d),
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_rows(x: &[f64], cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks_exact(cols) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut z = 0.0;
        for &v in row {
            let e = (v - m).exp();
            z += e;
            out.push(e);
        }
        out[start..].iter_mut().for_each(|e| *e /= z);
    }
    out
}

fn log_softmax_at(row: &[f64], idx: usize) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    row[idx] - lse
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        Tensor::new(shape, data).unwrap().requiring_grad()
    }

    #[test]
    fn identity_kernel_conv_returns_input() {
        let mut tape = Tape::new();
        let data: Vec<f64> = (0..16).map(|i| i as f64 * 0.5 - 3.0).collect();
        let x = tape.constant(vec![1, 1, 4, 4], data.clone()).unwrap();
        let w = tape.constant(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let b = tape.constant(vec![1], vec![0.0]).unwrap();
        let y = tape
            .apply(&Primitive::Conv2d { stride: 1, pad: 0 }, &[x, w, b])
            .unwrap();
        assert_eq!(tape.shape(y), &[1, 1, 4, 4]);
        assert_eq!(tape.value(y), data.as_slice());
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![1, 3], vec![0.0; 3]).unwrap();
        let y = tape.softmax(x).unwrap();
        for v in tape.value(y) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let s: f64 = tape.value(y).iter().sum();
        assert!((s - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn maxpool_two_by_two() {
        let mut tape = Tape::new();
        let x = tape
            .constant(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0])
            .unwrap();
        let y = tape
            .apply(&Primitive::MaxPool2d { window: 2 }, &[x])
            .unwrap();
        assert_eq!(tape.shape(y), &[1, 1, 1, 1]);
        assert_eq!(tape.value(y), &[4.0]);
    }

    #[test]
    fn square_has_gradient_two_x() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(vec![1], vec![3.0]));
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap(), &[6.0]);
    }

    #[test]
    fn fan_out_gradients_add_up() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(vec![2], vec![1.0, -2.0]));
        let a = tape.affine(x, 3.0, 0.0).unwrap();
        let b = tape.affine(x, -1.0, 5.0).unwrap();
        let s = tape.add(a, b).unwrap();
        let l = tape.sum(s).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(x).unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(vec![2], vec![1.0, 2.0]));
        let y = tape.relu(x).unwrap();
        assert!(matches!(tape.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn shape_errors_name_dimensions() {
        let mut tape = Tape::new();
        let a = tape.constant(vec![2, 3], vec![0.0; 6]).unwrap();
        let b = tape.constant(vec![3, 2], vec![0.0; 6]).unwrap();
        let err = tape.add(a, b).unwrap_err();
        assert!(err.to_string().contains("[2, 3]"));
        let x = tape.constant(vec![1, 2, 4, 4], vec![0.0; 32]).unwrap();
        let w = tape.constant(vec![1, 3, 3, 3], vec![0.0; 27]).unwrap();
        let bias = tape.constant(vec![1], vec![0.0]).unwrap();
        assert!(matches!(
            tape.conv2d(x, w, bias, 1, 1),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![2], vec![1.0, f64::NAN]).unwrap();
        assert!(matches!(tape.relu(x), Err(Error::NonFinite { op: "relu" })));
    }

    #[test]
    fn nothing_recorded_for_grad_without_params() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![1], vec![2.0]).unwrap();
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert!(g.get(x).is_none());
    }
}
