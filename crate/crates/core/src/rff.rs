//! Random Fourier feature encoding `x ↦ (cos 2πBx, sin 2πBx)`.

use std::f64::consts::TAU;

use gasp_autodiff::{Tensor, Var};

use crate::error::{Error, Result};
use crate::rng;

/// A fixed random frequency matrix `B` (`m × d`) and the encoding it defines.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierEncoding {
    frequencies: Tensor,
    sigma: f64,
    seed: u64,
}

impl FourierEncoding {
    /// Draws `B` with i.i.d. `N(0, sigma²)` entries.
    pub fn sample(m: usize, d: usize, sigma: f64, seed: u64) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::invalid(format!("encoding needs m ≥ 1 and d ≥ 1, got m={m}, d={d}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("encoding sigma must be positive, got {sigma}")));
        }
        let mut rng = rng::seeded(seed);
        let data = rng::normal_vec(&mut rng, m * d, sigma);
        Ok(Self {
            frequencies: Tensor::matrix(m, d, data)?,
            sigma,
            seed,
        })
    }

    /// Wraps an explicit frequency matrix. `sigma` and `seed` are recorded
    /// as zero.
    pub fn from_matrix(frequencies: Tensor) -> Result<Self> {
        if frequencies.ndim() != 2 {
            return Err(Error::dim(format!(
                "frequency matrix must be 2-D, got shape {:?}",
                frequencies.shape()
            )));
        }
        Ok(Self {
            frequencies,
            sigma: 0.0,
            seed: 0,
        })
    }

    pub(crate) fn with_provenance(frequencies: Tensor, sigma: f64, seed: u64) -> Result<Self> {
        let mut enc = Self::from_matrix(frequencies)?;
        enc.sigma = sigma;
        enc.seed = seed;
        Ok(enc)
    }

    pub fn frequencies(&self) -> &Tensor {
        &self.frequencies
    }

    pub fn num_frequencies(&self) -> usize {
        self.frequencies.shape()[0]
    }

    pub fn input_dim(&self) -> usize {
        self.frequencies.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        2 * self.num_frequencies()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Encodes one coordinate vector.
    pub fn encode_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (m, d) = (self.num_frequencies(), self.input_dim());
        if x.len() != d {
            return Err(Error::dim(format!("encoding expects {d}-D coordinates, got {}", x.len())));
        }
        let b = self.frequencies.data();
        let phases: Vec<f64> = (0..m)
            .map(|i| TAU * b[i * d..(i + 1) * d].iter().zip(x).map(|(b, x)| b * x).sum::<f64>())
            .collect();
        let mut out: Vec<f64> = phases.iter().map(|p| p.cos()).collect();
        out.extend(phases.iter().map(|p| p.sin()));
        Ok(out)
    }

    /// Encodes the rows of `x: [n, d]` into `[n, 2m]`, differentiably in `x`.
    pub fn encode<'g>(&self, x: Var<'g>) -> Result<Var<'g>> {
        let shape = x.shape();
        if shape.len() != 2 || shape[1] != self.input_dim() {
            return Err(Error::dim(format!(
                "encoding expects [n, {}] coordinates, got {shape:?}",
                self.input_dim()
            )));
        }
        let graph = x.graph();
        let bt = graph.constant(self.frequencies.clone()).transpose()?;
        let phases = x.matmul(bt)?.scale(TAU)?;
        Ok(graph.concat(&[phases.cos()?, phases.sin()?], 1)?)
    }
}
