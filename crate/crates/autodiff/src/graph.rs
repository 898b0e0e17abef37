//! The computation graph and reverse-mode differentiation.
//!
//! Nodes are appended in creation order, so every node's inputs have
//! smaller ids than the node itself and id order is a topological order.
//! Vector-Jacobian products are written with the same [`Var`] operations
//! as the forward pass; with `create_graph` they are recorded like any
//! other computation and can be differentiated again.

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale(f64),
    AddScalar,
    Square,
    Sqrt,
    Sin,
    Cos,
    Tanh,
    LeakyRelu(f64),
    Exp,
    Log,
    Sigmoid,
    Softplus,
    MatMul,
    Transpose,
    Reshape,
    BroadcastTo,
    SumTo,
    IndexSelect(Rc<[usize]>),
    IndexAdd(Rc<[usize]>),
    Narrow { axis: usize, start: usize },
    Pad { axis: usize, start: usize },
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Option<Op>,
    inputs: Vec<usize>,
}

/// Append-only record of a differentiable computation.
///
/// A graph is single-threaded; build one per forward/backward pass and drop
/// it afterwards.
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    checked: bool,
    grad_enabled: Cell<bool>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    pub(crate) graph: &'g Graph,
    pub(crate) id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{} {:?}", self.id, self.value())
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    /// A graph without per-op finiteness scans.
    pub fn new() -> Self {
        Self::with_checks(false)
    }

    /// A graph that rejects non-finite results and out-of-domain arguments
    /// after every operation, and flags disconnected gradient targets.
    pub fn checked() -> Self {
        Self::with_checks(true)
    }

    pub fn with_checks(checked: bool) -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            checked,
            grad_enabled: Cell::new(true),
        }
    }

    pub fn is_checked(&self) -> bool {
        self.checked
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A leaf that gradients can be taken with respect to.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        self.push(Node {
            value,
            requires_grad,
            op: None,
            inputs: Vec::new(),
        })
    }

    fn push(&self, node: Node) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn value_of(&self, id: usize) -> Tensor {
        self.nodes.borrow()[id].value.clone()
    }

    fn requires_grad_of(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Records the result of `op` applied to `inputs`.
    pub(crate) fn record(
        &self,
        name: &'static str,
        op: Op,
        inputs: &[Var<'_>],
        value: Tensor,
    ) -> Result<Var<'_>> {
        for v in inputs {
            if !std::ptr::eq(v.graph, self) {
                return Err(TensorError::ForeignVariable);
            }
        }
        if self.checked && !value.all_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let requires_grad =
            self.grad_enabled.get() && inputs.iter().any(|v| self.requires_grad_of(v.id));
        let node = if requires_grad {
            Node {
                value,
                requires_grad,
                op: Some(op),
                inputs: inputs.iter().map(|v| v.id).collect(),
            }
        } else {
            Node {
                value,
                requires_grad,
                op: None,
                inputs: Vec::new(),
            }
        };
        Ok(self.push(node))
    }

    /// Gradients of the single-element `output` with respect to each of
    /// `wrt`, in order and with matching shapes.
    ///
    /// With `create_graph` the returned gradients are themselves recorded
    /// in this graph and can be differentiated again. Targets that do not
    /// influence `output` receive zeros; a checked graph reports them as
    /// [`TensorError::Disconnected`] instead.
    pub fn backward<'g>(
        &'g self,
        output: Var<'g>,
        wrt: &[Var<'g>],
        create_graph: bool,
    ) -> Result<Vec<Var<'g>>> {
        let out_value = output.value();
        if out_value.len() != 1 {
            return Err(TensorError::NonScalarOutput(out_value.shape().to_vec()));
        }
        for v in wrt.iter().chain(std::iter::once(&output)) {
            if !std::ptr::eq(v.graph, self) {
                return Err(TensorError::ForeignVariable);
            }
        }

        let last = output.id;
        // needed[i]: some gradient target is reachable from node i
        let mut needed = vec![false; last + 1];
        for v in wrt {
            if v.id <= last {
                needed[v.id] = true;
            }
        }
        {
            let nodes = self.nodes.borrow();
            for i in 0..=last {
                if !needed[i] && nodes[i].requires_grad {
                    needed[i] = nodes[i].inputs.iter().any(|&j| needed[j]);
                }
            }
        }

        let previous = self.grad_enabled.replace(create_graph);
        let result = self.propagate(output, &needed);
        self.grad_enabled.set(previous);
        let grads = result?;

        wrt.iter()
            .enumerate()
            .map(|(index, v)| match grads.get(v.id).copied().flatten() {
                Some(g) => Ok(g),
                None if self.checked => Err(TensorError::Disconnected(index)),
                None => Ok(self.constant(Tensor::zeros(v.value().shape())?)),
            })
            .collect()
    }

    fn propagate<'g>(&'g self, output: Var<'g>, needed: &[bool]) -> Result<Vec<Option<Var<'g>>>> {
        let last = output.id;
        let mut grads: Vec<Option<Var<'g>>> = vec![None; last + 1];
        if !needed[last] {
            return Ok(grads);
        }
        let seed = Tensor::ones(output.value().shape())?;
        grads[last] = Some(self.constant(seed));

        for id in (0..=last).rev() {
            let Some(g) = grads[id] else { continue };
            if !needed[id] {
                continue;
            }
            let (op, inputs) = {
                let nodes = self.nodes.borrow();
                match &nodes[id].op {
                    Some(op) => (op.clone(), nodes[id].inputs.clone()),
                    None => continue,
                }
            };
            let node = Var { graph: self, id };
            let input_vars: Vec<Var<'g>> = inputs.iter().map(|&i| Var { graph: self, id: i }).collect();
            let input_grads = self.vjp(&op, node, &input_vars, g, needed)?;
            for (input, ig) in input_vars.iter().zip(input_grads) {
                let Some(ig) = ig else { continue };
                grads[input.id] = Some(match grads[input.id] {
                    Some(acc) => acc.add(ig)?,
                    None => ig,
                });
            }
        }
        Ok(grads)
    }

    /// Vector-Jacobian product of one node: the gradient contributions for
    /// each input given the gradient `g` of the node's output.
    fn vjp<'g>(
        &'g self,
        op: &Op,
        out: Var<'g>,
        inputs: &[Var<'g>],
        g: Var<'g>,
        needed: &[bool],
    ) -> Result<Vec<Option<Var<'g>>>> {
        let want = |i: usize| needed[inputs[i].id];
        let shape_of = |i: usize| inputs[i].value().shape().to_vec();
        let unary = |v: Result<Var<'g>>| -> Result<Vec<Option<Var<'g>>>> { Ok(vec![Some(v?)]) };
        if inputs.len() == 1 && !want(0) {
            return Ok(vec![None]);
        }

        match op {
            Op::Add => Ok(vec![
                if want(0) { Some(g.sum_to(&shape_of(0))?) } else { None },
                if want(1) { Some(g.sum_to(&shape_of(1))?) } else { None },
            ]),
            Op::Sub => Ok(vec![
                if want(0) { Some(g.sum_to(&shape_of(0))?) } else { None },
                if want(1) { Some(g.neg()?.sum_to(&shape_of(1))?) } else { None },
            ]),
            Op::Mul => {
                let (a, b) = (inputs[0], inputs[1]);
                Ok(vec![
                    if want(0) { Some(g.mul(b)?.sum_to(&shape_of(0))?) } else { None },
                    if want(1) { Some(g.mul(a)?.sum_to(&shape_of(1))?) } else { None },
                ])
            }
            Op::Div => {
                let b = inputs[1];
                let ga = g.div(b)?;
                let gb = if want(1) {
                    // d(a/b)/db = -(a/b)/b
                    Some(ga.mul(out)?.neg()?.sum_to(&shape_of(1))?)
                } else {
                    None
                };
                let ga = if want(0) { Some(ga.sum_to(&shape_of(0))?) } else { None };
                Ok(vec![ga, gb])
            }
            Op::Neg => unary(g.neg()),
            Op::Scale(c) => unary(g.scale(*c)),
            Op::AddScalar => Ok(vec![Some(g)]),
            Op::Square => unary(g.mul(inputs[0])?.scale(2.0)),
            Op::Sqrt => unary(g.div(out)?.scale(0.5)),
            Op::Sin => unary(g.mul(inputs[0].cos()?)),
            Op::Cos => unary(g.mul(inputs[0].sin()?)?.neg()),
            Op::Tanh => {
                let slope = out.square()?.neg()?.add_scalar(1.0)?;
                unary(g.mul(slope))
            }
            Op::LeakyRelu(slope) => {
                // piecewise-constant derivative: its own derivative is zero
                let mask = inputs[0].value().map(|x| if x > 0.0 { 1.0 } else { *slope });
                unary(g.mul(self.constant(mask)))
            }
            Op::Exp => unary(g.mul(out)),
            Op::Log => unary(g.div(inputs[0])),
            Op::Sigmoid => {
                let slope = out.mul(out.neg()?.add_scalar(1.0)?)?;
                unary(g.mul(slope))
            }
            Op::Softplus => unary(g.mul(inputs[0].sigmoid()?)),
            Op::MatMul => {
                let (a, b) = (inputs[0], inputs[1]);
                Ok(vec![
                    if want(0) { Some(g.matmul(b.transpose()?)?) } else { None },
                    if want(1) { Some(a.transpose()?.matmul(g)?) } else { None },
                ])
            }
            Op::Transpose => unary(g.transpose()),
            Op::Reshape => unary(g.reshape(&shape_of(0))),
            Op::BroadcastTo => unary(g.sum_to(&shape_of(0))),
            Op::SumTo => unary(g.broadcast_to(&shape_of(0))),
            Op::IndexSelect(idx) => {
                let rows = shape_of(0)[0];
                unary(g.index_add_rc(Rc::clone(idx), rows))
            }
            Op::IndexAdd(idx) => unary(g.index_select_rc(Rc::clone(idx))),
            Op::Narrow { axis, start } => {
                let total = shape_of(0)[*axis];
                unary(g.pad(*axis, *start, total))
            }
            Op::Pad { axis, start } => {
                let len = shape_of(0)[*axis];
                unary(g.narrow(*axis, *start, len))
            }
        }
    }
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Tensor {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.requires_grad_of(self.id)
    }

    /// Value of a single-element variable.
    pub fn item(&self) -> Option<f64> {
        self.value().item()
    }
}
