//! Differentiable operations on [`Var`].

use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::graph::{Graph, Op, Var};
use crate::kernels;
use crate::tensor::numel;

/// Slope used for LeakyReLU throughout the crate family.
pub const LEAKY_RELU_SLOPE: f64 = 0.2;

/// Elementwise operations addressable by kind, for code that iterates
/// over the whole op family (gradient suites, benchmarks).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Div,
    Square,
    Sin,
    Cos,
    Tanh,
    LeakyRelu(f64),
    Exp,
    Log,
    Sigmoid,
}

impl Elementwise {
    pub const ALL: [Elementwise; 12] = [
        Elementwise::Add,
        Elementwise::Sub,
        Elementwise::Mul,
        Elementwise::Div,
        Elementwise::Square,
        Elementwise::Sin,
        Elementwise::Cos,
        Elementwise::Tanh,
        Elementwise::LeakyRelu(LEAKY_RELU_SLOPE),
        Elementwise::Exp,
        Elementwise::Log,
        Elementwise::Sigmoid,
    ];

    pub fn is_binary(self) -> bool {
        matches!(self, Self::Add | Self::Sub | Self::Mul | Self::Div)
    }

    /// Applies the op; `b` is required for binary kinds and ignored otherwise.
    pub fn apply<'g>(self, a: Var<'g>, b: Option<Var<'g>>) -> Result<Var<'g>> {
        let rhs = || {
            b.ok_or(TensorError::Dimension {
                op: "elementwise",
                lhs: a.shape(),
                rhs: Vec::new(),
            })
        };
        match self {
            Self::Add => a.add(rhs()?),
            Self::Sub => a.sub(rhs()?),
            Self::Mul => a.mul(rhs()?),
            Self::Div => a.div(rhs()?),
            Self::Square => a.square(),
            Self::Sin => a.sin(),
            Self::Cos => a.cos(),
            Self::Tanh => a.tanh(),
            Self::LeakyRelu(slope) => a.leaky_relu(slope),
            Self::Exp => a.exp(),
            Self::Log => a.ln(),
            Self::Sigmoid => a.sigmoid(),
        }
    }
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
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl<'g> Var<'g> {
    fn unary(self, name: &'static str, op: Op, f: impl Fn(f64) -> f64) -> Result<Var<'g>> {
        let value = self.value().map(f);
        self.graph.record(name, op, &[self], value)
    }

    fn binary(
        self,
        rhs: Var<'g>,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var<'g>> {
        let value = kernels::binary(name, &self.value(), &rhs.value(), f)?;
        self.graph.record(name, op, &[self, rhs], value)
    }

    fn check_domain(self, name: &'static str, ok: impl Fn(f64) -> bool) -> Result<()> {
        if self.graph.is_checked() && !self.value().data().iter().all(|&v| ok(v)) {
            return Err(TensorError::Domain { op: name });
        }
        Ok(())
    }

    pub fn add(self, rhs: Var<'g>) -> Result<Var<'g>> {
        self.binary(rhs, "add", Op::Add, |a, b| a + b)
    }

    pub fn sub(self, rhs: Var<'g>) -> Result<Var<'g>> {
        self.binary(rhs, "sub", Op::Sub, |a, b| a - b)
    }

    pub fn mul(self, rhs: Var<'g>) -> Result<Var<'g>> {
        self.binary(rhs, "mul", Op::Mul, |a, b| a * b)
    }

    pub fn div(self, rhs: Var<'g>) -> Result<Var<'g>> {
        rhs.check_domain("div", |v| v != 0.0)?;
        self.binary(rhs, "div", Op::Div, |a, b| a / b)
    }

    pub fn neg(self) -> Result<Var<'g>> {
        self.unary("neg", Op::Neg, |a| -a)
    }

    /// Multiplication by a constant.
    pub fn scale(self, c: f64) -> Result<Var<'g>> {
        self.unary("scale", Op::Scale(c), |a| a * c)
    }

    pub fn add_scalar(self, c: f64) -> Result<Var<'g>> {
        self.unary("add_scalar", Op::AddScalar, |a| a + c)
    }

    pub fn square(self) -> Result<Var<'g>> {
        self.unary("square", Op::Square, |a| a * a)
    }

    pub fn sqrt(self) -> Result<Var<'g>> {
        self.check_domain("sqrt", |v| v >= 0.0)?;
        self.unary("sqrt", Op::Sqrt, f64::sqrt)
    }

    pub fn sin(self) -> Result<Var<'g>> {
        self.unary("sin", Op::Sin, f64::sin)
    }

    pub fn cos(self) -> Result<Var<'g>> {
        self.unary("cos", Op::Cos, f64::cos)
    }

    pub fn tanh(self) -> Result<Var<'g>> {
        self.unary("tanh", Op::Tanh, f64::tanh)
    }

    pub fn leaky_relu(self, slope: f64) -> Result<Var<'g>> {
        self.unary("leaky_relu", Op::LeakyRelu(slope), move |a| if a > 0.0 { a } else { slope * a })
    }

    pub fn exp(self) -> Result<Var<'g>> {
        self.unary("exp", Op::Exp, f64::exp)
    }

    /// Natural logarithm.
    pub fn ln(self) -> Result<Var<'g>> {
        self.check_domain("log", |v| v > 0.0)?;
        self.unary("log", Op::Log, f64::ln)
    }

    pub fn sigmoid(self) -> Result<Var<'g>> {
        self.unary("sigmoid", Op::Sigmoid, sigmoid)
    }

    /// `log(1 + exp(x))`, evaluated without overflow.
    pub fn softplus(self) -> Result<Var<'g>> {
        self.unary("softplus", Op::Softplus, softplus)
    }

    /// Matrix product over the last two dimensions. A rank-2 right operand
    /// is shared across the leading dimensions of the left one.
    pub fn matmul(self, rhs: Var<'g>) -> Result<Var<'g>> {
        let (sa, sb) = (self.shape(), rhs.shape());
        if sa.len() > 2 && sb.len() == 2 {
            let k = sa[sa.len() - 1];
            let rows = numel(&sa[..sa.len() - 1]);
            let flat = self.reshape(&[rows, k])?.matmul(rhs)?;
            let mut out_shape = sa[..sa.len() - 1].to_vec();
            out_shape.push(sb[1]);
            return flat.reshape(&out_shape);
        }
        let value = kernels::matmul(&self.value(), &rhs.value())?;
        self.graph.record("matmul", Op::MatMul, &[self, rhs], value)
    }

    /// Swaps the last two dimensions.
    pub fn transpose(self) -> Result<Var<'g>> {
        let value = kernels::transpose(&self.value())?;
        self.graph.record("transpose", Op::Transpose, &[self], value)
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'g>> {
        if self.shape() == shape {
            return Ok(self);
        }
        let value = self.value().reshape(shape)?;
        self.graph.record("reshape", Op::Reshape, &[self], value)
    }

    pub fn broadcast_to(self, shape: &[usize]) -> Result<Var<'g>> {
        if self.shape() == shape {
            return Ok(self);
        }
        let value = kernels::broadcast_to(&self.value(), shape)?;
        self.graph.record("broadcast_to", Op::BroadcastTo, &[self], value)
    }

    /// Sums over broadcast dimensions so the result has `shape`.
    pub fn sum_to(self, shape: &[usize]) -> Result<Var<'g>> {
        if self.shape() == shape {
            return Ok(self);
        }
        let value = kernels::sum_to(&self.value(), shape)?;
        self.graph.record("sum_to", Op::SumTo, &[self], value)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(self) -> Result<Var<'g>> {
        self.sum_to(&[])
    }

    pub fn mean(self) -> Result<Var<'g>> {
        let n = self.value().len() as f64;
        self.sum()?.scale(1.0 / n)
    }

    fn reduced_shape(&self, op: &'static str, axes: &[usize]) -> Result<(Vec<usize>, Vec<usize>, usize)> {
        let shape = self.shape();
        let mut keep = shape.clone();
        let mut count = 1;
        for &axis in axes {
            if axis >= shape.len() {
                return Err(TensorError::InvalidAxis {
                    op,
                    axis,
                    rank: shape.len(),
                });
            }
        }
        for (axis, &dim) in shape.iter().enumerate() {
            if axes.contains(&axis) {
                count *= dim;
                keep[axis] = 1;
            }
        }
        let dropped = shape
            .iter()
            .enumerate()
            .filter(|(i, _)| !axes.contains(i))
            .map(|(_, &d)| d)
            .collect();
        Ok((keep, dropped, count))
    }

    /// Sum over `axes`. With `keepdim` the reduced axes stay as size 1.
    pub fn sum_axes(self, axes: &[usize], keepdim: bool) -> Result<Var<'g>> {
        let (keep, dropped, _) = self.reduced_shape("sum_axes", axes)?;
        let summed = self.sum_to(&keep)?;
        if keepdim {
            Ok(summed)
        } else {
            summed.reshape(&dropped)
        }
    }

    pub fn mean_axes(self, axes: &[usize], keepdim: bool) -> Result<Var<'g>> {
        let (_, _, count) = self.reduced_shape("mean_axes", axes)?;
        self.sum_axes(axes, keepdim)?.scale(1.0 / count as f64)
    }

    /// Rows `indices` of the first dimension, in order (repeats allowed).
    pub fn index_select(self, indices: &[usize]) -> Result<Var<'g>> {
        self.index_select_rc(indices.into())
    }

    pub(crate) fn index_select_rc(self, indices: Rc<[usize]>) -> Result<Var<'g>> {
        let value = kernels::index_select(&self.value(), &indices)?;
        self.graph.record("index_select", Op::IndexSelect(indices), &[self], value)
    }

    /// Adds row `r` of `self` into row `indices[r]` of a zero tensor with
    /// `rows` rows.
    pub fn index_add(self, indices: &[usize], rows: usize) -> Result<Var<'g>> {
        self.index_add_rc(indices.into(), rows)
    }

    pub(crate) fn index_add_rc(self, indices: Rc<[usize]>, rows: usize) -> Result<Var<'g>> {
        let value = kernels::index_add(&self.value(), &indices, rows)?;
        self.graph.record("index_add", Op::IndexAdd(indices), &[self], value)
    }

    /// The slice `start..start + len` along `axis`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Result<Var<'g>> {
        if start == 0 && self.shape().get(axis) == Some(&len) {
            return Ok(self);
        }
        let value = kernels::narrow(&self.value(), axis, start, len)?;
        self.graph.record("narrow", Op::Narrow { axis, start }, &[self], value)
    }

    /// Zero-pads along `axis` to length `total`, placing `self` at `start`.
    pub fn pad(self, axis: usize, start: usize, total: usize) -> Result<Var<'g>> {
        if start == 0 && self.shape().get(axis) == Some(&total) {
            return Ok(self);
        }
        let value = kernels::pad(&self.value(), axis, start, total)?;
        self.graph.record("pad", Op::Pad { axis, start }, &[self], value)
    }
}

impl Graph {
    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat<'g>(&'g self, parts: &[Var<'g>], axis: usize) -> Result<Var<'g>> {
        let first = parts.first().ok_or(TensorError::EmptyDimension(vec![0]))?;
        let base = first.shape();
        if axis >= base.len() {
            return Err(TensorError::InvalidAxis {
                op: "concat",
                axis,
                rank: base.len(),
            });
        }
        let mut total = 0;
        for p in parts {
            let s = p.shape();
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(TensorError::Dimension {
                    op: "concat",
                    lhs: base.clone(),
                    rhs: s,
                });
            }
            total += s[axis];
        }
        let mut start = 0;
        let mut acc: Option<Var<'g>> = None;
        for p in parts {
            let len = p.shape()[axis];
            let padded = p.pad(axis, start, total)?;
            acc = Some(match acc {
                Some(a) => a.add(padded)?,
                None => padded,
            });
            start += len;
        }
        Ok(acc.expect("at least one part"))
    }
}
