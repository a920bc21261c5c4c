//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value; inputs always
//! precede outputs, so a single reverse sweep visits each node once.

use super::tensor::{gemm, matrix_dims, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Sin,
    Cos,
    Tanh,
    /// Subgradient 0 at the kink.
    Relu,
    Exp,
    Ln,
    Square,
}

impl Unary {
    pub const ALL: [Unary; 7] = [
        Unary::Sin,
        Unary::Cos,
        Unary::Tanh,
        Unary::Relu,
        Unary::Exp,
        Unary::Ln,
        Unary::Square,
    ];

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Sin => x.sin(),
            Unary::Cos => x.cos(),
            Unary::Tanh => super::fastmath::tanh(x),
            Unary::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Unary::Exp => x.exp(),
            Unary::Ln => x.ln(),
            Unary::Square => x * x,
        }
    }

    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Sin => x.cos(),
            Unary::Cos => -x.sin(),
            Unary::Tanh => 1.0 - y * y,
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Exp => y,
            Unary::Ln => 1.0 / x,
            Unary::Square => 2.0 * x,
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Param,
    Const,
    MatMul { a: Var, b: Var, trans_b: bool },
    Affine { x: Var, w: Var, bias: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    AddRow(Var, Var),
    Unary(Unary, Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Interleave(Var, Var),
    CosSin(Var),
    ConcatCols(Vec<Var>),
    SliceRows { a: Var, start: usize },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records one forward evaluation. A tape belongs to a single training step.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Number of scalars registered as trainable leaves.
    pub fn param_scalars(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n.op, Op::Param))
            .map(|n| n.value.len())
            .sum()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_flag(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Param, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Const, false)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Shape {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    /// `a · b` for 2-D operands.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ`; the usual layout for `x · Wᵀ` with `W` stored `out×in`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (r, k) = matrix_dims(self.value(a), "matmul")?;
        let (b0, b1) = matrix_dims(self.value(b), "matmul")?;
        let (kb, c) = if trans_b { (b1, b0) } else { (b0, b1) };
        if k != kb {
            return Err(Error::Shape {
                op: "matmul",
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        let mut out = vec![0.0; r * c];
        gemm(
            r,
            k,
            c,
            self.value(a).data(),
            false,
            self.value(b).data(),
            trans_b,
            0.0,
            &mut out,
        );
        let value = Tensor::new(vec![r, c], out)?;
        let g = self.grad_flag(&[a, b]);
        Ok(self.push(value, Op::MatMul { a, b, trans_b }, g))
    }

    /// `x · wᵀ + bias` (bias broadcast over rows) in one pass.
    pub fn affine(&mut self, x: Var, w: Var, bias: Var) -> Result<Var> {
        let (r, k) = matrix_dims(self.value(x), "affine")?;
        let (c, kw) = matrix_dims(self.value(w), "affine")?;
        if k != kw || self.value(bias).len() != c {
            return Err(Error::Shape {
                op: "affine",
                left: self.shape(x).to_vec(),
                right: self.shape(w).to_vec(),
            });
        }
        let mut out = Vec::with_capacity(r * c);
        for _ in 0..r {
            out.extend_from_slice(self.value(bias).data());
        }
        gemm(
            r,
            k,
            c,
            self.value(x).data(),
            false,
            self.value(w).data(),
            true,
            1.0,
            &mut out,
        );
        let value = Tensor::new(vec![r, c], out)?;
        let g = self.grad_flag(&[x, w, bias]);
        Ok(self.push(value, Op::Affine { x, w, bias }, g))
    }

    fn zip(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        self.same_shape(name, a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(va.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip(a, b, "add", |x, y| x + y)?;
        let g = self.grad_flag(&[a, b]);
        Ok(self.push(v, Op::Add(a, b), g))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip(a, b, "sub", |x, y| x - y)?;
        let g = self.grad_flag(&[a, b]);
        Ok(self.push(v, Op::Sub(a, b), g))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip(a, b, "mul", |x, y| x * y)?;
        let g = self.grad_flag(&[a, b]);
        Ok(self.push(v, Op::Mul(a, b), g))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let v = self.value(a).map(|x| factor * x);
        let g = self.grad_flag(&[a]);
        self.push(v, Op::Scale(a, factor), g)
    }

    /// `a + offset` elementwise.
    pub fn shift(&mut self, a: Var, offset: f64) -> Var {
        let v = self.value(a).map(|x| x + offset);
        let g = self.grad_flag(&[a]);
        self.push(v, Op::Shift(a), g)
    }

    /// Adds a bias vector of length `cols(a)` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (r, c) = matrix_dims(self.value(a), "add_row")?;
        if self.value(bias).len() != c {
            return Err(Error::Shape {
                op: "add_row",
                left: self.shape(a).to_vec(),
                right: self.shape(bias).to_vec(),
            });
        }
        let bv = self.value(bias).data();
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_exact_mut(c) {
            for (x, b) in row.iter_mut().zip(bv) {
                *x += b;
            }
        }
        let v = Tensor::new(vec![r, c], data)?;
        let g = self.grad_flag(&[a, bias]);
        Ok(self.push(v, Op::AddRow(a, bias), g))
    }

    pub fn unary(&mut self, kind: Unary, a: Var) -> Var {
        // One monomorphic loop per kind so the hot ones vectorize.
        let src = self.value(a);
        let v = match kind {
            Unary::Tanh => Tensor::new(
                src.shape().to_vec(),
                super::fastmath::tanh_slice(src.data()),
            )
            .expect("same shape"),
            Unary::Relu => src.map(|x| Unary::Relu.apply(x)),
            Unary::Exp => src.map(f64::exp),
            Unary::Square => src.map(|x| x * x),
            _ => src.map(|x| kind.apply(x)),
        };
        let g = self.grad_flag(&[a]);
        self.push(v, Op::Unary(kind, a), g)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(Unary::Sin, a)
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.unary(Unary::Cos, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Unary::Relu, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Unary::Exp, a)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(Unary::Ln, a)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(Unary::Square, a)
    }

    /// Sequential left-to-right sum to a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().fold(0.0, |acc, &x| acc + x);
        let g = self.grad_flag(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), g)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().fold(0.0, |acc, &x| acc + x) / t.len() as f64;
        let g = self.grad_flag(&[a]);
        self.push(Tensor::scalar(s), Op::Mean(a), g)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).clone().reshaped(shape)?;
        let g = self.grad_flag(&[a]);
        Ok(self.push(v, Op::Reshape(a), g))
    }

    /// Column interleave of two `r×c` matrices: `[a₀ b₀ a₁ b₁ …]` per row.
    pub fn interleave_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("interleave_cols", a, b)?;
        let (r, c) = matrix_dims(self.value(a), "interleave_cols")?;
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(2 * r * c);
        for (ra, rb) in va.chunks_exact(c).zip(vb.chunks_exact(c)) {
            for (x, y) in ra.iter().zip(rb) {
                data.push(*x);
                data.push(*y);
            }
        }
        let v = Tensor::new(vec![r, 2 * c], data)?;
        let g = self.grad_flag(&[a, b]);
        Ok(self.push(v, Op::Interleave(a, b), g))
    }

    /// `r×c → r×2c` with `[cos a₀, sin a₀, cos a₁, sin a₁, …]` per row. Same
    /// values as `interleave_cols(cos a, sin a)`, but the backward pass reuses
    /// the stored outputs instead of re-evaluating the trig functions.
    pub fn cos_sin(&mut self, a: Var) -> Result<Var> {
        let (r, c) = matrix_dims(self.value(a), "cos_sin")?;
        let mut data = Vec::with_capacity(2 * r * c);
        for &x in self.value(a).data() {
            data.push(x.cos());
            data.push(x.sin());
        }
        let v = Tensor::new(vec![r, 2 * c], data)?;
        let g = self.grad_flag(&[a]);
        Ok(self.push(v, Op::CosSin(a), g))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::contract("concat_cols of nothing"))?;
        let (r, _) = matrix_dims(self.value(first), "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pr, pc) = matrix_dims(self.value(p), "concat_cols")?;
            if pr != r {
                return Err(Error::Shape {
                    op: "concat_cols",
                    left: self.shape(first).to_vec(),
                    right: self.shape(p).to_vec(),
                });
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let v = Tensor::new(vec![r, total], data)?;
        let g = self.grad_flag(parts);
        Ok(self.push(v, Op::ConcatCols(parts.to_vec()), g))
    }

    /// Rows `start..start+len` of a 2-D tensor.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = matrix_dims(self.value(a), "slice_rows")?;
        if len == 0 || start + len > r {
            return Err(Error::contract(format!(
                "row slice {start}..{} out of range for {r} rows",
                start + len
            )));
        }
        let data = self.value(a).data()[start * c..(start + len) * c].to_vec();
        let v = Tensor::new(vec![len, c], data)?;
        let g = self.grad_flag(&[a]);
        Ok(self.push(v, Op::SliceRows { a, start }, g))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Param | Op::Const) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }

        let mut out = Vec::new();
        for (i, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if matches!(node.op, Op::Param | Op::Const) {
                let g = match (&node.op, grads[i].take()) {
                    (Op::Param, Some(g)) => Tensor::new(node.value.shape().to_vec(), g)?,
                    _ => Tensor::zeros(node.value.shape()),
                };
                out.push((Var(i), g));
            }
        }
        for (i, node) in self.nodes.iter().enumerate().skip(loss.0 + 1) {
            if matches!(node.op, Op::Param | Op::Const) {
                out.push((Var(i), Tensor::zeros(node.value.shape())));
            }
        }
        Ok(Gradients { leaves: out })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            slot => *slot = Some(g),
        }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn matmul_backward(
        &self,
        a: Var,
        b: Var,
        trans_b: bool,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let va = self.value(a);
        let vb = self.value(b);
        let (r, k) = (va.rows(), va.cols());
        let c = g.len() / r;
        if self.needs(a) {
            // dA = dC · op(B)ᵀ
            let mut da = vec![0.0; r * k];
            gemm(r, c, k, g, false, vb.data(), !trans_b, 0.0, &mut da);
            self.accumulate(grads, a, da);
        }
        if self.needs(b) {
            let mut db = vec![0.0; k * c];
            if trans_b {
                // B is c×k: dB = dCᵀ · A
                gemm(c, r, k, g, true, va.data(), false, 0.0, &mut db);
            } else {
                // B is k×c: dB = Aᵀ · dC
                gemm(k, r, c, va.data(), true, g, false, 0.0, &mut db);
            }
            self.accumulate(grads, b, db);
        }
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Param | Op::Const => {}
            Op::MatMul { a, b, trans_b } => self.matmul_backward(*a, *b, *trans_b, g, grads),
            Op::Affine { x, w, bias } => {
                self.matmul_backward(*x, *w, true, g, grads);
                if self.needs(*bias) {
                    self.accumulate(grads, *bias, column_sums(g, node.value.cols()));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.iter().map(|x| -x).collect());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if self.needs(*a) {
                    self.accumulate(grads, *a, g.iter().zip(vb).map(|(g, y)| g * y).collect());
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, g.iter().zip(va).map(|(g, x)| g * x).collect());
                }
            }
            Op::Scale(a, f) => self.accumulate(grads, *a, g.iter().map(|x| f * x).collect()),
            Op::Shift(a) | Op::Reshape(a) => self.accumulate(grads, *a, g.to_vec()),
            Op::AddRow(a, bias) => {
                self.accumulate(grads, *a, g.to_vec());
                if self.needs(*bias) {
                    self.accumulate(grads, *bias, column_sums(g, node.value.cols()));
                }
            }
            Op::Unary(kind, a) => {
                let x = self.value(*a).data();
                let y = node.value.data();
                let da = match kind {
                    Unary::Tanh => g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect(),
                    Unary::Exp => g.iter().zip(y).map(|(g, y)| g * y).collect(),
                    _ => g
                        .iter()
                        .zip(x.iter().zip(y))
                        .map(|(g, (&x, &y))| g * kind.derivative(x, y))
                        .collect(),
                };
                self.accumulate(grads, *a, da);
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                self.accumulate(grads, *a, vec![g[0]; n]);
            }
            Op::Mean(a) => {
                let n = self.value(*a).len();
                self.accumulate(grads, *a, vec![g[0] / n as f64; n]);
            }
            Op::Interleave(a, b) => {
                let n = self.value(*a).len();
                let (mut da, mut db) = (Vec::with_capacity(n), Vec::with_capacity(n));
                for pair in g.chunks_exact(2) {
                    da.push(pair[0]);
                    db.push(pair[1]);
                }
                self.accumulate(grads, *a, da);
                self.accumulate(grads, *b, db);
            }
            Op::CosSin(a) => {
                let y = node.value.data();
                let da = g
                    .chunks_exact(2)
                    .zip(y.chunks_exact(2))
                    .map(|(g, cs)| cs[0] * g[1] - cs[1] * g[0])
                    .collect();
                self.accumulate(grads, *a, da);
            }
            Op::ConcatCols(parts) => {
                let r = node.value.rows();
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.needs(p) {
                        let mut dp = Vec::with_capacity(r * w);
                        for row in g.chunks_exact(total) {
                            dp.extend_from_slice(&row[offset..offset + w]);
                        }
                        self.accumulate(grads, p, dp);
                    }
                    offset += w;
                }
            }
            Op::SliceRows { a, start } => {
                let va = self.value(*a);
                let c = va.cols();
                let mut da = vec![0.0; va.len()];
                da[start * c..start * c + g.len()].copy_from_slice(g);
                self.accumulate(grads, *a, da);
            }
        }
    }
}

fn column_sums(g: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for row in g.chunks_exact(cols) {
        for (d, x) in out.iter_mut().zip(row) {
            *d += x;
        }
    }
    out
}

/// Gradients of a scalar loss with respect to every leaf on the tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    leaves: Vec<(Var, Tensor)>,
}

impl Gradients {
    /// Gradient for a leaf; `None` if `v` is not a leaf.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.leaves
            .binary_search_by_key(&v.0, |(var, _)| var.0)
            .ok()
            .map(|i| &self.leaves[i].1)
    }
}
