//! Parameter storage and the few layer primitives shared by every model.

use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Ordered, named collection of trainable tensors.
///
/// Models keep their weights here between steps and bind them into a fresh
/// [`Graph`] for each forward pass. Index order is stable and doubles as the
/// order of gradients and optimizer state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor and returns its index.
    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(value);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, index: usize) -> &Tensor {
        &self.tensors[index]
    }

    pub fn get_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.tensors[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Leaves for every parameter; `trainable` decides whether gradients
    /// flow into them.
    pub fn bind<'g>(&self, graph: &'g Graph, trainable: bool) -> Vec<Var<'g>> {
        self.tensors
            .iter()
            .map(|t| graph.leaf(t.clone(), trainable))
            .collect()
    }
}

/// `x · w + b` with `w` stored as `[in, out]` and `b` as `[out]`.
pub fn linear<'g>(x: Var<'g>, w: Var<'g>, b: Var<'g>) -> Result<Var<'g>> {
    x.matmul(w)?.add(b)
}

/// Running statistics of a batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub running_mean: Tensor,
    pub running_var: Tensor,
    /// Weight kept on the old running value at each update.
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormState {
    pub const DEFAULT_MOMENTUM: f64 = 0.9;
    pub const DEFAULT_EPS: f64 = 1e-5;

    pub fn new(features: usize) -> Self {
        Self {
            running_mean: Tensor::from_parts(vec![features], vec![0.0; features]),
            running_var: Tensor::from_parts(vec![features], vec![1.0; features]),
            momentum: Self::DEFAULT_MOMENTUM,
            eps: Self::DEFAULT_EPS,
        }
    }

    pub fn features(&self) -> usize {
        self.running_mean.len()
    }
}

/// Batch normalization over the rows of `x: [batch, features]`.
///
/// Training mode normalizes with the (biased) batch statistics and folds
/// them into the running estimates; inference mode uses the running
/// estimates. `gamma` and `beta` are `[features]`.
pub fn batch_norm<'g>(
    x: Var<'g>,
    gamma: Var<'g>,
    beta: Var<'g>,
    state: &mut BatchNormState,
    training: bool,
) -> Result<Var<'g>> {
    let shape = x.shape();
    if shape.len() != 2 || shape[1] != state.features() {
        return Err(TensorError::Dimension {
            op: "batch_norm",
            lhs: shape,
            rhs: vec![state.features()],
        });
    }
    let graph = x.graph();
    let normalized = if training {
        if shape[0] < 2 {
            return Err(TensorError::BatchStatistics(shape[0]));
        }
        let mean = x.mean_axes(&[0], false)?;
        let centered = x.sub(mean)?;
        let var = centered.square()?.mean_axes(&[0], false)?;
        let std = var.add_scalar(state.eps)?.sqrt()?;

        let m = state.momentum;
        let blend = |old: &Tensor, new: &Tensor| {
            let data = old
                .data()
                .iter()
                .zip(new.data())
                .map(|(o, n)| m * o + (1.0 - m) * n)
                .collect();
            Tensor::from_parts(old.shape().to_vec(), data)
        };
        state.running_mean = blend(&state.running_mean, &mean.value());
        state.running_var = blend(&state.running_var, &var.value());
        centered.div(std)?
    } else {
        let mean = graph.constant(state.running_mean.clone());
        let std = graph.constant(state.running_var.map(|v| (v + state.eps).sqrt()));
        x.sub(mean)?.div(std)?
    };
    normalized.mul(gamma)?.add(beta)
}
