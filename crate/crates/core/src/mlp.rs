//! Plain fully connected networks whose weights live in a [`ParamStore`].

use gasp_autodiff::nn::{linear, ParamStore};
use gasp_autodiff::{Graph, Tensor, Var, LEAKY_RELU_SLOPE};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    LeakyRelu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply<'g>(self, x: Var<'g>) -> Result<Var<'g>> {
        Ok(match self {
            Activation::Identity => x,
            Activation::LeakyRelu => x.leaky_relu(LEAKY_RELU_SLOPE)?,
            Activation::Tanh => x.tanh()?,
            Activation::Sigmoid => x.sigmoid()?,
        })
    }

    /// Upper bound on the activation's slope.
    pub fn lipschitz(self) -> f64 {
        match self {
            Activation::Identity | Activation::LeakyRelu | Activation::Tanh => 1.0,
            Activation::Sigmoid => 0.25,
        }
    }
}

/// Layer widths `dims[0] → … → dims[last]`, one activation between hidden
/// layers and one on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    hidden: Activation,
    output: Activation,
    params: ParamStore,
}

impl Mlp {
    /// Weights and biases uniform in `±1/√fan_in`.
    pub fn new(dims: &[usize], hidden: Activation, output: Activation, rng: &mut Rng) -> Result<Self> {
        Self::validate(dims)?;
        let mut params = ParamStore::new();
        for (l, pair) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            params.push(format!("w{l}"), Tensor::matrix(fan_in, fan_out, rng::uniform_vec(rng, fan_in * fan_out, bound))?);
            params.push(format!("b{l}"), Tensor::new(&[fan_out], rng::uniform_vec(rng, fan_out, bound))?);
        }
        Ok(Self {
            dims: dims.to_vec(),
            hidden,
            output,
            params,
        })
    }

    pub fn zeros(dims: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        Self::validate(dims)?;
        let mut params = ParamStore::new();
        for (l, pair) in dims.windows(2).enumerate() {
            params.push(format!("w{l}"), Tensor::zeros(&[pair[0], pair[1]])?);
            params.push(format!("b{l}"), Tensor::zeros(&[pair[1]])?);
        }
        Ok(Self {
            dims: dims.to_vec(),
            hidden,
            output,
            params,
        })
    }

    fn validate(dims: &[usize]) -> Result<()> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::invalid(format!("MLP needs at least two positive widths, got {dims:?}")));
        }
        Ok(())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("validated non-empty")
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn weight(&self, layer: usize) -> &Tensor {
        self.params.get(2 * layer)
    }

    pub fn bias(&self, layer: usize) -> &Tensor {
        self.params.get(2 * layer + 1)
    }

    /// Replaces the stored parameters, checking shapes.
    pub fn set_params(&mut self, tensors: Vec<Tensor>) -> Result<()> {
        if tensors.len() != self.params.len() {
            return Err(Error::dim(format!(
                "MLP has {} parameter tensors, got {}",
                self.params.len(),
                tensors.len()
            )));
        }
        for (slot, t) in self.params.tensors_mut().iter_mut().zip(tensors) {
            if slot.shape() != t.shape() {
                return Err(Error::dim(format!(
                    "parameter shape {:?} does not match {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        Ok(())
    }

    /// Forward pass of `x: [rows, in]` with parameters already bound into
    /// the graph (in [`ParamStore`] order).
    pub fn forward<'g>(&self, params: &[Var<'g>], x: Var<'g>) -> Result<Var<'g>> {
        if params.len() != self.params.len() {
            return Err(Error::dim(format!(
                "expected {} bound parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        let last = self.num_layers() - 1;
        let mut h = x;
        for l in 0..=last {
            h = linear(h, params[2 * l], params[2 * l + 1])?;
            h = if l == last { self.output } else { self.hidden }.apply(h)?;
        }
        Ok(h)
    }

    /// Inference on plain tensors.
    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        let graph = Graph::new();
        let params = self.params.bind(&graph, false);
        Ok(self.forward(&params, graph.constant(x.clone()))?.value())
    }
}
