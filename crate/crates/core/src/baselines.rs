//! Two simpler alternatives to the PointConv discriminator setup: a
//! DeepSets-style set discriminator and an auto-decoder that learns one
//! latent code per training example.

use gasp_autodiff::nn::ParamStore;
use gasp_autodiff::{Graph, Tensor, Var};

use crate::data::PointCloud;
use crate::error::{Error, Result};
use crate::function_rep::MlpArchitecture;
use crate::mlp::{Activation, Mlp};
use crate::optim::{Adam, AdamConfig};
use crate::pointconv::{canonical_order, check_batch};
use crate::rff::FourierEncoding;
use crate::rng::{self, Rng};
use crate::training::Discriminator;

pub const DEFAULT_SET_WIDTH: usize = 128;

/// `D(s) = σ(ρ((1/√n) Σᵢ φ(γ_x(xᵢ), γ_y(yᵢ))))`.
///
/// `φ` has leaky-ReLU activations throughout, `ρ` has leaky-ReLU hidden
/// layers and a linear output that [`Discriminator::logits`] returns
/// before the sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct SetDiscriminator {
    enc_x: FourierEncoding,
    enc_y: FourierEncoding,
    phi: Mlp,
    rho: Mlp,
    params: ParamStore,
}

impl SetDiscriminator {
    /// `phi_dims` runs from `2(m_x + m_y)` to the set width `p`, and
    /// `rho_dims` from `p` to 1.
    pub fn new(
        enc_x: FourierEncoding,
        enc_y: FourierEncoding,
        phi_dims: &[usize],
        rho_dims: &[usize],
        seed: u64,
    ) -> Result<Self> {
        let mut rng = rng::seeded(seed);
        let phi = Mlp::new(phi_dims, Activation::LeakyRelu, Activation::LeakyRelu, &mut rng)?;
        let rho = Mlp::new(rho_dims, Activation::LeakyRelu, Activation::Identity, &mut rng)?;
        Self::assemble(enc_x, enc_y, phi, rho)
    }

    /// `φ: 2(m_x + m_y) → 128 → 128 → 128`, `ρ: 128 → 128 → 1`.
    pub fn with_defaults(enc_x: FourierEncoding, enc_y: FourierEncoding, seed: u64) -> Result<Self> {
        let input = enc_x.output_dim() + enc_y.output_dim();
        let p = DEFAULT_SET_WIDTH;
        Self::new(enc_x, enc_y, &[input, p, p, p], &[p, p, 1], seed)
    }

    /// Builds from explicit networks, whose parameters are copied into the
    /// discriminator's own store (`φ` first, then `ρ`).
    pub fn from_networks(enc_x: FourierEncoding, enc_y: FourierEncoding, phi: Mlp, rho: Mlp) -> Result<Self> {
        Self::assemble(enc_x, enc_y, phi, rho)
    }

    fn assemble(enc_x: FourierEncoding, enc_y: FourierEncoding, phi: Mlp, rho: Mlp) -> Result<Self> {
        if phi.input_dim() != enc_x.output_dim() + enc_y.output_dim() {
            return Err(Error::dim(format!(
                "φ takes {} inputs but the encodings emit {}",
                phi.input_dim(),
                enc_x.output_dim() + enc_y.output_dim()
            )));
        }
        if rho.input_dim() != phi.output_dim() || rho.output_dim() != 1 {
            return Err(Error::dim(format!(
                "ρ must map the set width {} to 1, got {:?}",
                phi.output_dim(),
                rho.dims()
            )));
        }
        let mut params = ParamStore::new();
        for (name, t) in phi.params().iter() {
            params.push(format!("phi.{name}"), t.clone());
        }
        for (name, t) in rho.params().iter() {
            params.push(format!("rho.{name}"), t.clone());
        }
        Ok(Self {
            enc_x,
            enc_y,
            phi,
            rho,
            params,
        })
    }

    pub fn encoding_x(&self) -> &FourierEncoding {
        &self.enc_x
    }

    pub fn encoding_y(&self) -> &FourierEncoding {
        &self.enc_y
    }

    pub fn phi_dims(&self) -> &[usize] {
        self.phi.dims()
    }

    pub fn rho_dims(&self) -> &[usize] {
        self.rho.dims()
    }

    pub fn phi_activations(&self) -> (Activation, Activation) {
        (self.phi.hidden_activation(), self.phi.output_activation())
    }

    pub fn rho_activations(&self) -> (Activation, Activation) {
        (self.rho.hidden_activation(), self.rho.output_activation())
    }

    /// Current `φ` weight matrices, input layer first.
    pub fn phi_weights(&self) -> Vec<&Tensor> {
        (0..self.phi.num_layers()).map(|l| self.params.get(2 * l)).collect()
    }

    /// Current `ρ` weight matrices, input layer first.
    pub fn rho_weights(&self) -> Vec<&Tensor> {
        let base = self.phi.params().len();
        (0..self.rho.num_layers()).map(|l| self.params.get(base + 2 * l)).collect()
    }

    /// Probability for a single cloud.
    pub fn discriminate(&self, pc: &PointCloud) -> Result<f64> {
        self.clone().probability(pc, false)
    }

    /// Probability as a plain function of the stacked inputs: row `i` of
    /// `coords` paired with row `i` of `features`.
    pub fn probability_of(&self, coords: &Tensor, features: &Tensor) -> Result<f64> {
        self.discriminate(&PointCloud::new(coords.clone(), features.clone())?)
    }
}

impl Discriminator for SetDiscriminator {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn logits<'g>(
        &mut self,
        params: &[Var<'g>],
        coords: &[Tensor],
        features: Var<'g>,
        _training: bool,
    ) -> Result<Var<'g>> {
        let (d, k) = (self.coord_dim(), self.feature_dim());
        let total = check_batch(coords, features, d, k)?;
        if params.len() != self.params.len() {
            return Err(Error::dim(format!(
                "expected {} bound parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        let graph = features.graph();
        let (perm, sorted) = canonical_order(coords, &features.value(), d, k);
        let xs = Tensor::matrix(total, d, sorted.concat())?;
        let ys = features.index_select(&perm)?;
        let encoded = graph.concat(&[self.enc_x.encode(graph.constant(xs))?, self.enc_y.encode(ys)?], 1)?;
        let split = self.phi.params().len();
        let per_point = self.phi.forward(&params[..split], encoded)?;

        let mut owner = Vec::with_capacity(total);
        let mut norm = Vec::with_capacity(coords.len());
        for (b, c) in coords.iter().enumerate() {
            let n = c.shape()[0];
            owner.extend(std::iter::repeat(b).take(n));
            norm.push(1.0 / (n as f64).sqrt());
        }
        let pooled = per_point
            .index_add(&owner, coords.len())?
            .mul(graph.constant(Tensor::matrix(coords.len(), 1, norm)?))?;
        let logits = self.rho.forward(&params[split..], pooled)?;
        Ok(logits.reshape(&[coords.len()])?)
    }

    fn coord_dim(&self) -> usize {
        self.enc_x.input_dim()
    }

    fn feature_dim(&self) -> usize {
        self.enc_y.input_dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoDecoderConfig {
    pub latent_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub steps: usize,
    pub lr: f64,
    /// Weight of the mean `‖z⁽ⁱ⁾‖²` term.
    pub prior_weight: f64,
    /// Standard deviation of the initial latent codes.
    pub init_std: f64,
    pub seed: u64,
}

impl Default for AutoDecoderConfig {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            hidden_dims: vec![128; 3],
            steps: 1000,
            lr: 1e-3,
            prior_weight: 1e-4,
            init_std: 0.01,
            seed: 0,
        }
    }
}

impl AutoDecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::invalid("latent dimension must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.prior_weight >= 0.0 && self.prior_weight.is_finite()) {
            return Err(Error::invalid(format!("prior weight must be non-negative, got {}", self.prior_weight)));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(Error::invalid(format!("initial latent std must be non-negative, got {}", self.init_std)));
        }
        Ok(())
    }
}

/// A decoder shared across the dataset plus one learnable latent per
/// example. The decoder sees `[z, γ(x)]` and ends in `tanh`.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoDecoder {
    latents: Tensor,
    decoder: Mlp,
    encoding: Option<FourierEncoding>,
    prior_weight: f64,
}

impl AutoDecoder {
    /// Decoder widths `latent + encoded → hidden → k`.
    pub fn decoder_arch(
        latent_dim: usize,
        hidden: &[usize],
        coord_dim: usize,
        feature_dim: usize,
        encoding: Option<&FourierEncoding>,
    ) -> Result<MlpArchitecture> {
        let encoded = match encoding {
            Some(enc) if enc.input_dim() != coord_dim => {
                return Err(Error::dim(format!(
                    "encoding takes {}-D coordinates, data is {coord_dim}-D",
                    enc.input_dim()
                )))
            }
            Some(enc) => enc.output_dim(),
            None => coord_dim,
        };
        MlpArchitecture::new(latent_dim + encoded, hidden.to_vec(), feature_dim)
    }

    /// Reassembles a trained model.
    pub fn from_parts(
        latents: Tensor,
        decoder_params: Vec<Tensor>,
        arch: &MlpArchitecture,
        encoding: Option<FourierEncoding>,
        prior_weight: f64,
    ) -> Result<Self> {
        let mut decoder = Mlp::zeros(&arch.widths(), Activation::LeakyRelu, Activation::Tanh)?;
        decoder.set_params(decoder_params)?;
        let ls = latents.shape();
        if ls.len() != 2 || ls[0] == 0 || ls[1] >= arch.input_dim {
            return Err(Error::dim(format!(
                "latent table {ls:?} does not fit a decoder with {} inputs",
                arch.input_dim
            )));
        }
        Ok(Self {
            latents,
            decoder,
            encoding,
            prior_weight,
        })
    }

    pub fn latents(&self) -> &Tensor {
        &self.latents
    }

    pub fn latent(&self, i: usize) -> Result<Vec<f64>> {
        let (n, l) = (self.len(), self.latent_dim());
        if i >= n {
            return Err(Error::invalid(format!("example {i} out of range for {n} latents")));
        }
        Ok(self.latents.data()[i * l..(i + 1) * l].to_vec())
    }

    pub fn len(&self) -> usize {
        self.latents.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn latent_dim(&self) -> usize {
        self.latents.shape()[1]
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn encoding(&self) -> Option<&FourierEncoding> {
        self.encoding.as_ref()
    }

    pub fn prior_weight(&self) -> f64 {
        self.prior_weight
    }

    pub fn coord_dim(&self) -> usize {
        match &self.encoding {
            Some(enc) => enc.input_dim(),
            None => self.decoder.input_dim() - self.latent_dim(),
        }
    }

    /// Features `[n, k]` decoded from latent `z` at `coords: [n, d]`.
    pub fn sample(&self, z: &[f64], coords: &Tensor) -> Result<Tensor> {
        if z.len() != self.latent_dim() {
            return Err(Error::dim(format!(
                "latent has {} entries, decoder expects {}",
                z.len(),
                self.latent_dim()
            )));
        }
        let cs = coords.shape();
        if cs.len() != 2 || cs[1] != self.coord_dim() {
            return Err(Error::dim(format!("coordinates must be [n, {}], got {cs:?}", self.coord_dim())));
        }
        let graph = Graph::new();
        let params = self.decoder.params().bind(&graph, false);
        let z = graph.constant(Tensor::matrix(1, z.len(), z.to_vec())?);
        let rows = vec![0; cs[0]];
        let out = decode(&graph, &self.decoder, &params, self.encoding.as_ref(), z, &rows, coords)?;
        Ok(out.value())
    }

    /// Decodes the trained latent of example `i`.
    pub fn reconstruct(&self, i: usize, coords: &Tensor) -> Result<Tensor> {
        self.sample(&self.latent(i)?, coords)
    }
}

/// Decoder output for rows `coords[r]` conditioned on `latents[owner[r]]`.
fn decode<'g>(
    graph: &'g Graph,
    decoder: &Mlp,
    params: &[Var<'g>],
    encoding: Option<&FourierEncoding>,
    latents: Var<'g>,
    owner: &[usize],
    coords: &Tensor,
) -> Result<Var<'g>> {
    let x = graph.constant(coords.clone());
    let encoded = match encoding {
        Some(enc) => enc.encode(x)?,
        None => x,
    };
    let z = latents.index_select(owner)?;
    decoder.forward(params, graph.concat(&[z, encoded], 1)?)
}

/// Result of an auto-decoder fit.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoDecoderFit {
    pub model: AutoDecoder,
    /// Mean squared reconstruction error over every feature of every example.
    pub final_mse: f64,
    /// Total objective per step, including the prior term.
    pub history: Vec<f64>,
}

/// Jointly fits the decoder and one latent per example by full-batch Adam
/// on `MSE + prior_weight · mean ‖z⁽ⁱ⁾‖²`.
pub fn autodecoder_train(
    dataset: &[PointCloud],
    encoding: Option<FourierEncoding>,
    config: &AutoDecoderConfig,
) -> Result<AutoDecoderFit> {
    config.validate()?;
    let first = dataset.first().ok_or_else(|| Error::invalid("auto-decoder needs a non-empty dataset"))?;
    let (d, k) = (first.coord_dim(), first.feature_dim());
    if dataset.iter().any(|pc| pc.coord_dim() != d || pc.feature_dim() != k) {
        return Err(Error::dim("dataset elements have different dimensions"));
    }
    let arch = AutoDecoder::decoder_arch(config.latent_dim, &config.hidden_dims, d, k, encoding.as_ref())?;
    let mut rng: Rng = rng::seeded(config.seed);
    let decoder = Mlp::new(&arch.widths(), Activation::LeakyRelu, Activation::Tanh, &mut rng)?;
    let n = dataset.len();
    let latents = Tensor::matrix(
        n,
        config.latent_dim,
        rng::normal_vec(&mut rng, n * config.latent_dim, config.init_std),
    )?;

    let mut owner = Vec::new();
    let mut coord_rows = Vec::new();
    let mut target_rows = Vec::new();
    for (i, pc) in dataset.iter().enumerate() {
        owner.extend(std::iter::repeat(i).take(pc.len()));
        coord_rows.extend_from_slice(pc.coords().data());
        target_rows.extend_from_slice(pc.features().data());
    }
    let coords = Tensor::matrix(owner.len(), d, coord_rows)?;
    let targets = Tensor::matrix(owner.len(), k, target_rows)?;

    let mut store = decoder.params().clone();
    store.push("latents", latents);
    let mut adam = Adam::new(AdamConfig::new(config.lr, 0.9, 0.999), &store);
    let split = decoder.params().len();

    let objective = |store: &ParamStore, graph: &Graph| -> Result<(f64, f64, Vec<Tensor>)> {
        let bound = store.bind(graph, true);
        let out = decode(graph, &decoder, &bound[..split], encoding.as_ref(), bound[split], &owner, &coords)?;
        let mse = out.sub(graph.constant(targets.clone()))?.square()?.mean()?;
        let prior = bound[split].square()?.sum()?.scale(config.prior_weight / n as f64)?;
        let total = mse.add(prior)?;
        let grads = graph.backward(total, &bound, false)?.iter().map(Var::value).collect();
        Ok((total.value().data()[0], mse.value().data()[0], grads))
    };

    let mut history = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let graph = Graph::new();
        let (loss, _, grads) = objective(&store, &graph)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("auto-decoder loss is {loss} at step {step}")));
        }
        history.push(loss);
        adam.step(&mut store, &grads)?;
    }
    let (_, final_mse, _) = objective(&store, &Graph::new())?;

    let mut tensors = store.tensors().to_vec();
    let latents = tensors.pop().expect("latent table was pushed last");
    let model = AutoDecoder::from_parts(latents, tensors, &arch, encoding, config.prior_weight)?;
    Ok(AutoDecoderFit {
        model,
        final_mse,
        history,
    })
}

/// Compares the mean latent norm of a table against the spread of the same
/// statistic over fresh `N(0, I)` tables of the same size.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorCheck {
    pub mean_norm: f64,
    /// Smallest and largest mean norm seen across the reference draws.
    pub band: (f64, f64),
    pub reference_draws: usize,
    pub consistent: bool,
}

impl std::fmt::Display for PriorCheck {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "mean latent norm {:.4}, N(0,I) band [{:.4}, {:.4}] over {} draws: {}",
            self.mean_norm,
            self.band.0,
            self.band.1,
            self.reference_draws,
            if self.consistent { "consistent with prior" } else { "inconsistent with prior" }
        )
    }
}

fn mean_row_norm(data: &[f64], dim: usize) -> f64 {
    let rows = data.len() / dim;
    data.chunks(dim).map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).sum::<f64>() / rows as f64
}

/// Whether the rows of `latents: [N, L]` look like `N(0, I)` draws by their
/// mean norm.
pub fn latent_prior_check(latents: &Tensor, draws: usize, seed: u64) -> Result<PriorCheck> {
    let s = latents.shape();
    if s.len() != 2 || s[0] == 0 || s[1] == 0 {
        return Err(Error::dim(format!("latent table must be a non-empty matrix, got {s:?}")));
    }
    if draws == 0 {
        return Err(Error::invalid("prior check needs at least one reference draw"));
    }
    let (n, l) = (s[0], s[1]);
    let mut rng = rng::seeded(seed);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..draws {
        let m = mean_row_norm(&rng::normal_vec(&mut rng, n * l, 1.0), l);
        lo = lo.min(m);
        hi = hi.max(m);
    }
    let mean_norm = mean_row_norm(latents.data(), l);
    Ok(PriorCheck {
        mean_norm,
        band: (lo, hi),
        reference_draws: draws,
        consistent: mean_norm >= lo && mean_norm <= hi,
    })
}
