//! Implicit coordinate networks `f_θ` with a flat weight vector, and
//! fitting one to a single datapoint.
//!
//! `θ` is laid out layer by layer as `W₁, b₁, W₂, b₂, …` with each `W`
//! stored row-major as `[in, out]`. Hidden layers use leaky ReLU and the
//! output uses tanh, so features land in `(−1, 1)`.

use gasp_autodiff::{Graph, Tensor, Var, LEAKY_RELU_SLOPE};

use crate::data::PointCloud;
use crate::error::{Error, Result};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::rff::FourierEncoding;
use crate::rng;

pub const DEFAULT_HIDDEN: [usize; 3] = [128, 128, 128];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
}

/// Where one layer's weights and bias sit inside `θ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlice {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl MlpArchitecture {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden_dims.contains(&0) {
            return Err(Error::invalid(format!(
                "architecture widths must be positive: {input_dim} → {hidden_dims:?} → {output_dim}"
            )));
        }
        Ok(Self {
            input_dim,
            hidden_dims,
            output_dim,
        })
    }

    pub fn with_default_hidden(input_dim: usize, output_dim: usize) -> Result<Self> {
        Self::new(input_dim, DEFAULT_HIDDEN.to_vec(), output_dim)
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden_dims);
        w.push(self.output_dim);
        w
    }

    pub fn layers(&self) -> Vec<LayerSlice> {
        let mut offset = 0;
        self.widths()
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let slice = LayerSlice {
                    fan_in,
                    fan_out,
                    weight_offset: offset,
                    bias_offset: offset + fan_in * fan_out,
                };
                offset += fan_in * fan_out + fan_out;
                slice
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }
}

pub fn param_count(arch: &MlpArchitecture) -> usize {
    arch.param_count()
}

/// Applies the network to already-encoded inputs `h: [B, n, in]` with one
/// weight vector per batch element, `theta: [B, P]`. Returns `[B, n, out]`.
pub fn forward_batched<'g>(arch: &MlpArchitecture, theta: Var<'g>, h: Var<'g>) -> Result<Var<'g>> {
    let (ts, hs) = (theta.shape(), h.shape());
    if ts.len() != 2 || ts[1] != arch.param_count() {
        return Err(Error::dim(format!(
            "weights must be [batch, {}], got {ts:?}",
            arch.param_count()
        )));
    }
    if hs.len() != 3 || hs[0] != ts[0] || hs[2] != arch.input_dim {
        return Err(Error::dim(format!(
            "inputs must be [{}, n, {}], got {hs:?}",
            ts[0], arch.input_dim
        )));
    }
    let batch = ts[0];
    let layers = arch.layers();
    let last = layers.len() - 1;
    let mut h = h;
    for (l, layer) in layers.iter().enumerate() {
        let w = theta
            .narrow(1, layer.weight_offset, layer.fan_in * layer.fan_out)?
            .reshape(&[batch, layer.fan_in, layer.fan_out])?;
        let b = theta
            .narrow(1, layer.bias_offset, layer.fan_out)?
            .reshape(&[batch, 1, layer.fan_out])?;
        h = h.matmul(w)?.add(b)?;
        h = if l == last { h.tanh()? } else { h.leaky_relu(LEAKY_RELU_SLOPE)? };
    }
    Ok(h)
}

/// Encodes raw coordinates `[B, n, d]` (or passes them through when there
/// is no encoding) into network inputs `[B, n, in]`.
pub fn encode_batched<'g>(encoding: Option<&FourierEncoding>, coords: Var<'g>) -> Result<Var<'g>> {
    let Some(enc) = encoding else { return Ok(coords) };
    let s = coords.shape();
    if s.len() != 3 {
        return Err(Error::dim(format!("batched coordinates must be 3-D, got {s:?}")));
    }
    let flat = coords.reshape(&[s[0] * s[1], s[2]])?;
    Ok(enc.encode(flat)?.reshape(&[s[0], s[1], enc.output_dim()])?)
}

/// A single implicit function: architecture, weights and optional encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionRep {
    arch: MlpArchitecture,
    theta: Tensor,
    encoding: Option<FourierEncoding>,
}

impl FunctionRep {
    pub fn new(arch: MlpArchitecture, theta: Tensor, encoding: Option<FourierEncoding>) -> Result<Self> {
        if theta.shape() != [arch.param_count()] {
            return Err(Error::dim(format!(
                "architecture needs {} weights, got shape {:?}",
                arch.param_count(),
                theta.shape()
            )));
        }
        if let Some(enc) = &encoding {
            if enc.output_dim() != arch.input_dim {
                return Err(Error::dim(format!(
                    "encoding emits {} features but the network takes {}",
                    enc.output_dim(),
                    arch.input_dim
                )));
            }
        }
        Ok(Self { arch, theta, encoding })
    }

    /// Per-layer uniform `±1/√fan_in` initialization.
    pub fn init(arch: MlpArchitecture, encoding: Option<FourierEncoding>, seed: u64) -> Result<Self> {
        let mut rng = rng::seeded(seed);
        let mut theta = Vec::with_capacity(arch.param_count());
        for layer in arch.layers() {
            let bound = 1.0 / (layer.fan_in as f64).sqrt();
            theta.extend(rng::uniform_vec(&mut rng, layer.fan_in * layer.fan_out + layer.fan_out, bound));
        }
        Self::new(arch, Tensor::vector(&theta), encoding)
    }

    pub fn arch(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn theta(&self) -> &Tensor {
        &self.theta
    }

    pub fn encoding(&self) -> Option<&FourierEncoding> {
        self.encoding.as_ref()
    }

    /// Dimension of the raw coordinates the function accepts.
    pub fn coord_dim(&self) -> usize {
        self.encoding.as_ref().map_or(self.arch.input_dim, FourierEncoding::input_dim)
    }

    /// Differentiable evaluation at `coords: [n, d]` with weights `theta: [P]`.
    pub fn evaluate_var<'g>(&self, theta: Var<'g>, coords: Var<'g>) -> Result<Var<'g>> {
        let cs = coords.shape();
        if cs.len() != 2 || cs[1] != self.coord_dim() {
            return Err(Error::dim(format!(
                "function expects [n, {}] coordinates, got {cs:?}",
                self.coord_dim()
            )));
        }
        let p = self.arch.param_count();
        let theta = theta.reshape(&[1, p])?;
        let h = encode_batched(self.encoding(), coords.reshape(&[1, cs[0], cs[1]])?)?;
        Ok(forward_batched(&self.arch, theta, h)?.reshape(&[cs[0], self.arch.output_dim])?)
    }

    /// Features `[n, k]` at coordinates `[n, d]`.
    pub fn evaluate(&self, coords: &Tensor) -> Result<Tensor> {
        let graph = Graph::new();
        let theta = graph.constant(self.theta.clone());
        Ok(self.evaluate_var(theta, graph.constant(coords.clone()))?.value())
    }

    /// Mean squared error against a point cloud's features.
    pub fn mse(&self, data: &PointCloud) -> Result<f64> {
        let y = self.evaluate(data.coords())?;
        if y.shape() != data.features().shape() {
            return Err(Error::dim(format!(
                "function emits {:?} but data has {:?}",
                y.shape(),
                data.features().shape()
            )));
        }
        let sum: f64 = y.data().iter().zip(data.features().data()).map(|(a, b)| (a - b).powi(2)).sum();
        Ok(sum / y.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            lr: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub rep: FunctionRep,
    /// Mean squared error of the returned function.
    pub final_loss: f64,
    /// Loss before each optimizer step.
    pub history: Vec<f64>,
}

impl FitResult {
    /// Running minimum of [`FitResult::history`].
    pub fn best_so_far(&self) -> Vec<f64> {
        self.history
            .iter()
            .scan(f64::INFINITY, |best, &l| {
                *best = best.min(l);
                Some(*best)
            })
            .collect()
    }
}

/// Fits `f_θ` to one datapoint by Adam on the mean squared error over all
/// feature entries.
pub fn fit_single(
    data: &PointCloud,
    arch: &MlpArchitecture,
    encoding: Option<FourierEncoding>,
    config: &FitConfig,
) -> Result<FitResult> {
    if !data.features().data().iter().all(|v| (-1.0..=1.0).contains(v)) {
        return Err(Error::invalid("features must lie in [−1, 1] before fitting"));
    }
    let adam = AdamConfig::new(config.lr, 0.9, 0.999);
    adam.validate()?;
    let rep = FunctionRep::init(arch.clone(), encoding, config.seed)?;
    if data.coord_dim() != rep.coord_dim() || data.feature_dim() != arch.output_dim {
        return Err(Error::dim(format!(
            "data is {}-D → {}-D but the function maps {}-D → {}-D",
            data.coord_dim(),
            data.feature_dim(),
            rep.coord_dim(),
            arch.output_dim
        )));
    }

    // The encoded coordinates never change, so they are computed once.
    let n = data.len();
    let inputs = {
        let graph = Graph::new();
        let coords = graph.constant(data.coords().reshape(&[1, n, data.coord_dim()])?);
        encode_batched(rep.encoding(), coords)?.value()
    };
    let target = data.features().reshape(&[1, n, arch.output_dim])?;

    let loss_at = |theta: &Tensor, need_grad: bool| -> Result<(f64, Option<Tensor>)> {
        let graph = Graph::new();
        let t = graph.leaf(theta.reshape(&[1, arch.param_count()])?, need_grad);
        let pred = forward_batched(arch, t, graph.constant(inputs.clone()))?;
        let loss = pred.sub(graph.constant(target.clone()))?.square()?.mean()?;
        let value = loss.item().expect("mean is scalar");
        if !value.is_finite() {
            return Err(Error::Numeric(format!("fitting loss became {value}")));
        }
        let grad = if need_grad {
            let g = graph.backward(loss, &[t], false)?[0].value();
            Some(g.reshape(&[arch.param_count()])?)
        } else {
            None
        };
        Ok((value, grad))
    };

    let mut params = vec![rep.theta.clone()];
    let mut state = AdamState::zeros_like(&params);
    let mut history = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        let (loss, grad) = loss_at(&params[0], true)?;
        history.push(loss);
        adam_step(&mut params, &[grad.expect("requested")], &mut state, &adam)?;
    }
    let (final_loss, _) = loss_at(&params[0], false)?;
    let theta = params.pop().expect("one tensor");
    Ok(FitResult {
        rep: FunctionRep { theta, ..rep },
        final_loss,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts() {
        let big = MlpArchitecture::with_default_hidden(256, 3).unwrap();
        assert_eq!(param_count(&big), 256 * 128 + 128 + 2 * (128 * 128 + 128) + 128 * 3 + 3);
        assert_eq!(param_count(&big), 66307);
        assert_eq!(param_count(&MlpArchitecture::new(1, vec![], 1).unwrap()), 2);
        assert_eq!(param_count(&MlpArchitecture::new(2, vec![4], 1).unwrap()), 17);
    }

    #[test]
    fn layer_slices_tile_theta() {
        let arch = MlpArchitecture::new(2, vec![4, 3], 1).unwrap();
        let layers = arch.layers();
        assert_eq!(layers[0].bias_offset, 8);
        assert_eq!(layers[1].weight_offset, 12);
        assert_eq!(layers[2].bias_offset + layers[2].fan_out, arch.param_count());
    }

    #[test]
    fn zero_weights_give_zero_features() {
        let arch = MlpArchitecture::new(2, vec![8], 3).unwrap();
        let rep = FunctionRep::new(arch.clone(), Tensor::zeros(&[arch.param_count()]).unwrap(), None).unwrap();
        let y = rep.evaluate(&Tensor::matrix(2, 2, vec![0.1, 0.2, -0.9, 0.4]).unwrap()).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn construction_checks() {
        let arch = MlpArchitecture::new(4, vec![8], 1).unwrap();
        assert!(FunctionRep::new(arch.clone(), Tensor::zeros(&[3]).unwrap(), None).is_err());
        let enc = FourierEncoding::sample(3, 2, 1.0, 0).unwrap();
        assert!(FunctionRep::init(arch.clone(), Some(enc), 0).is_err());
        let rep = FunctionRep::init(arch, None, 0).unwrap();
        assert!(rep.evaluate(&Tensor::matrix(1, 3, vec![0.0; 3]).unwrap()).is_err());
        assert!(MlpArchitecture::new(0, vec![], 1).is_err());
    }

    #[test]
    fn hand_computed_single_layer() {
        // 1 → [] → 1 with w = 0.5, b = 0.25 gives tanh(0.5x + 0.25)
        let arch = MlpArchitecture::new(1, vec![], 1).unwrap();
        let rep = FunctionRep::new(arch, Tensor::vector(&[0.5, 0.25]), None).unwrap();
        let y = rep.evaluate(&Tensor::matrix(2, 1, vec![1.0, -2.0]).unwrap()).unwrap();
        assert!((y.data()[0] - 0.75f64.tanh()).abs() < 1e-15);
        assert!((y.data()[1] - (-0.75f64).tanh()).abs() < 1e-15);
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let pc = PointCloud::from_rows(1, 1, vec![-1.0, 1.0], vec![0.5, -0.5]).unwrap();
        let arch = MlpArchitecture::new(1, vec![4], 1).unwrap();
        let config = FitConfig { steps: 0, ..FitConfig::default() };
        let fit = fit_single(&pc, &arch, None, &config).unwrap();
        let init = FunctionRep::init(arch, None, config.seed).unwrap();
        assert!(fit.rep.theta().bit_eq(init.theta()));
        assert!(fit.history.is_empty());
        assert!((fit.final_loss - init.mse(&pc).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_features_are_rejected() {
        let pc = PointCloud::from_rows(1, 1, vec![0.0], vec![2.0]).unwrap();
        let arch = MlpArchitecture::new(1, vec![], 1).unwrap();
        assert!(matches!(
            fit_single(&pc, &arch, None, &FitConfig::default()),
            Err(Error::InvalidArgument(_))
        ));
    }
}
