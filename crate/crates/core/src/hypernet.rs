//! The generator: a Gaussian latent code pushed through an MLP that emits
//! the flat weight vector of an implicit function.

use gasp_autodiff::{Graph, Tensor, Var};

use crate::error::{Error, Result};
use crate::function_rep::{encode_batched, forward_batched, FunctionRep, MlpArchitecture};
use crate::mlp::{Activation, Mlp};
use crate::rff::FourierEncoding;
use crate::rng::{self, Rng};

pub const DEFAULT_LATENT_DIM: usize = 64;
pub const DEFAULT_HIDDEN: [usize; 2] = [256, 512];

/// Extra shrink applied to the output layer at initialization so the first
/// emitted functions are close to constant instead of saturating tanh.
const OUTPUT_INIT_SHRINK: f64 = 10.0;

/// A draw from the standard Gaussian prior.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode(pub Vec<f64>);

impl LatentCode {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `latent_dim` i.i.d. standard normal entries.
pub fn sample_latent(latent_dim: usize, seed: u64) -> Result<LatentCode> {
    sample_latent_with(latent_dim, &mut rng::seeded(seed))
}

pub fn sample_latent_with(latent_dim: usize, rng: &mut Rng) -> Result<LatentCode> {
    if latent_dim == 0 {
        return Err(Error::invalid("latent dimension must be at least 1"));
    }
    Ok(LatentCode(rng::normal_vec(rng, latent_dim, 1.0)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypernetwork {
    latent_dim: usize,
    net: Mlp,
    target: MlpArchitecture,
    encoding: Option<FourierEncoding>,
}

impl Hypernetwork {
    pub fn new(
        latent_dim: usize,
        hidden: &[usize],
        target: MlpArchitecture,
        encoding: Option<FourierEncoding>,
        seed: u64,
    ) -> Result<Self> {
        check_encoding(&target, encoding.as_ref())?;
        let dims = Self::widths(latent_dim, hidden, &target);
        let mut net = Mlp::new(&dims, Activation::LeakyRelu, Activation::Identity, &mut rng::seeded(seed))?;
        let last = net.num_layers() - 1;
        let store = net.params_mut();
        let w = store.get_mut(2 * last);
        *w = w.map(|v| v / OUTPUT_INIT_SHRINK);
        let b = store.get_mut(2 * last + 1);
        *b = b.map(|_| 0.0);
        Ok(Self {
            latent_dim,
            net,
            target,
            encoding,
        })
    }

    /// A hypernetwork with every weight zero.
    pub fn zeros(
        latent_dim: usize,
        hidden: &[usize],
        target: MlpArchitecture,
        encoding: Option<FourierEncoding>,
    ) -> Result<Self> {
        check_encoding(&target, encoding.as_ref())?;
        let dims = Self::widths(latent_dim, hidden, &target);
        Ok(Self {
            latent_dim,
            net: Mlp::zeros(&dims, Activation::LeakyRelu, Activation::Identity)?,
            target,
            encoding,
        })
    }

    /// Reassembles a hypernetwork from stored parameters.
    pub fn from_parts(
        latent_dim: usize,
        hidden: &[usize],
        target: MlpArchitecture,
        encoding: Option<FourierEncoding>,
        params: Vec<Tensor>,
    ) -> Result<Self> {
        let mut h = Self::zeros(latent_dim, hidden, target, encoding)?;
        h.net.set_params(params)?;
        Ok(h)
    }

    fn widths(latent_dim: usize, hidden: &[usize], target: &MlpArchitecture) -> Vec<usize> {
        let mut dims = vec![latent_dim];
        dims.extend_from_slice(hidden);
        dims.push(target.param_count());
        dims
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn hidden_dims(&self) -> &[usize] {
        let dims = self.net.dims();
        &dims[1..dims.len() - 1]
    }

    pub fn output_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn target_arch(&self) -> &MlpArchitecture {
        &self.target
    }

    pub fn encoding(&self) -> Option<&FourierEncoding> {
        self.encoding.as_ref()
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    /// Raw coordinate dimension of the emitted functions.
    pub fn coord_dim(&self) -> usize {
        self.encoding.as_ref().map_or(self.target.input_dim, FourierEncoding::input_dim)
    }

    pub fn sample_latents(&self, count: usize, rng: &mut Rng) -> Result<Tensor> {
        if count == 0 {
            return Err(Error::invalid("latent batch must be non-empty"));
        }
        Ok(Tensor::matrix(count, self.latent_dim, rng::normal_vec(rng, count * self.latent_dim, 1.0))?)
    }

    /// `θ = g_φ(z)` for a batch `z: [B, latent]`, giving `[B, P]`.
    pub fn weights_var<'g>(&self, phi: &[Var<'g>], z: Var<'g>) -> Result<Var<'g>> {
        let s = z.shape();
        if s.len() != 2 || s[1] != self.latent_dim {
            return Err(Error::dim(format!(
                "latents must be [batch, {}], got {s:?}",
                self.latent_dim
            )));
        }
        self.net.forward(phi, z)
    }

    /// Generated features `[B, n, k]` at per-element coordinates `[B, n, d]`.
    pub fn features_var<'g>(&self, phi: &[Var<'g>], z: Var<'g>, coords: Var<'g>) -> Result<Var<'g>> {
        let theta = self.weights_var(phi, z)?;
        let cs = coords.shape();
        if cs.len() != 3 || cs[0] != theta.shape()[0] || cs[2] != self.coord_dim() {
            return Err(Error::dim(format!(
                "coordinates must be [{}, n, {}], got {cs:?}",
                theta.shape()[0],
                self.coord_dim()
            )));
        }
        let h = encode_batched(self.encoding(), coords)?;
        forward_batched(&self.target, theta, h)
    }

    fn check_latent(&self, z: &LatentCode) -> Result<()> {
        if z.dim() != self.latent_dim {
            return Err(Error::dim(format!(
                "latent has {} entries, generator expects {}",
                z.dim(),
                self.latent_dim
            )));
        }
        Ok(())
    }

    pub fn generate_weights(&self, z: &LatentCode) -> Result<Tensor> {
        self.check_latent(z)?;
        let graph = Graph::new();
        let phi = self.net.params().bind(&graph, false);
        let z = graph.constant(Tensor::matrix(1, self.latent_dim, z.0.clone())?);
        Ok(self.weights_var(&phi, z)?.value().reshape(&[self.output_dim()])?)
    }

    /// The implicit function emitted for `z`.
    pub fn generate_function(&self, z: &LatentCode) -> Result<FunctionRep> {
        FunctionRep::new(self.target.clone(), self.generate_weights(z)?, self.encoding.clone())
    }

    /// Features `[n, k]` of the function emitted for `z` at `coords: [n, d]`.
    pub fn generate_features(&self, z: &LatentCode, coords: &Tensor) -> Result<Tensor> {
        self.generate_function(z)?.evaluate(coords)
    }
}

fn check_encoding(target: &MlpArchitecture, encoding: Option<&FourierEncoding>) -> Result<()> {
    if let Some(enc) = encoding {
        if enc.output_dim() != target.input_dim {
            return Err(Error::dim(format!(
                "encoding emits {} features but the target network takes {}",
                enc.output_dim(),
                target.input_dim
            )));
        }
    }
    Ok(())
}
