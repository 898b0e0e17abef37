//! Adversarial training of a hypernetwork generator against a set
//! discriminator.
//!
//! Each step draws a batch of real point clouds, samples one latent per
//! element, evaluates the generated functions at the real coordinates, and
//! then updates the discriminator (non-saturating loss plus an R1 penalty
//! on the real features) followed by the generator.

use std::fmt;
use std::io::Write as _;
use std::path::Path;

use gasp_autodiff::nn::ParamStore;
use gasp_autodiff::{Graph, Tensor, Var};
use rand::seq::SliceRandom;

use crate::checkpoint::Checkpoint;
use crate::data::PointCloud;
use crate::error::{Error, Result};
use crate::hypernet::Hypernetwork;
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::rng::{self, Rng, RngState};

/// Smallest probability fed to a logarithm in the probability-space losses.
pub const PROB_FLOOR: f64 = 1e-12;

/// Any model that scores batches of point clouds with one logit each.
pub trait Discriminator: Clone {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;

    /// Logits `[B]` for clouds with coordinates `coords[b]: [n_b, d]` and
    /// stacked features `[Σ n_b, k]`.
    fn logits<'g>(&mut self, params: &[Var<'g>], coords: &[Tensor], features: Var<'g>, training: bool)
        -> Result<Var<'g>>;

    fn coord_dim(&self) -> usize;
    fn feature_dim(&self) -> usize;

    /// Non-trainable state (such as batch-norm running statistics).
    fn buffers(&self) -> Vec<Tensor> {
        Vec::new()
    }

    fn set_buffers(&mut self, buffers: Vec<Tensor>) -> Result<()> {
        if buffers.is_empty() {
            Ok(())
        } else {
            Err(Error::dim("discriminator has no buffers"))
        }
    }

    /// Probability for one cloud.
    fn probability(&mut self, pc: &PointCloud, training: bool) -> Result<f64> {
        let graph = Graph::new();
        let params = self.params().bind(&graph, false);
        let feats = graph.constant(pc.features().clone());
        let logit = self.logits(&params, &[pc.coords().clone()], feats, training)?;
        Ok(logit.sigmoid()?.value().data()[0])
    }
}

impl Discriminator for crate::pointconv::DiscriminatorStack {
    fn params(&self) -> &ParamStore {
        self.params()
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        self.params_mut()
    }

    fn logits<'g>(
        &mut self,
        params: &[Var<'g>],
        coords: &[Tensor],
        features: Var<'g>,
        training: bool,
    ) -> Result<Var<'g>> {
        self.logits(params, coords, features, training)
    }

    fn coord_dim(&self) -> usize {
        self.config().coord_dim
    }

    fn feature_dim(&self) -> usize {
        self.config().feature_dim
    }

    fn buffers(&self) -> Vec<Tensor> {
        self.bn_states()
            .into_iter()
            .flat_map(|s| [s.running_mean.clone(), s.running_var.clone()])
            .collect()
    }

    fn set_buffers(&mut self, buffers: Vec<Tensor>) -> Result<()> {
        let mut states = self.bn_states_mut();
        if buffers.len() != 2 * states.len() {
            return Err(Error::dim(format!(
                "expected {} batch-norm buffers, got {}",
                2 * states.len(),
                buffers.len()
            )));
        }
        for (state, pair) in states.iter_mut().zip(buffers.chunks(2)) {
            if pair[0].shape() != state.running_mean.shape() || pair[1].shape() != state.running_var.shape() {
                return Err(Error::dim("batch-norm buffer shape mismatch"));
            }
            state.running_mean = pair[0].clone();
            state.running_var = pair[1].clone();
        }
        Ok(())
    }
}

/// `−log D(fake)`, with the probability floored at [`PROB_FLOOR`].
pub fn g_loss(d_fake: f64) -> f64 {
    -d_fake.max(PROB_FLOOR).ln()
}

/// `−log D(real) − log(1 − D(fake))`, floored like [`g_loss`].
pub fn d_loss(d_real: f64, d_fake: f64) -> f64 {
    -d_real.max(PROB_FLOOR).ln() - (1.0 - d_fake).max(PROB_FLOOR).ln()
}

/// Mean generator loss from fake logits: `softplus(−l)`.
pub fn g_loss_logits<'g>(fake_logits: Var<'g>) -> Result<Var<'g>> {
    Ok(fake_logits.neg()?.softplus()?.mean()?)
}

/// Mean discriminator loss from logits: `softplus(−l_real) + softplus(l_fake)`.
pub fn d_loss_logits<'g>(real_logits: Var<'g>, fake_logits: Var<'g>) -> Result<Var<'g>> {
    let real = real_logits.neg()?.softplus()?.mean()?;
    let fake = fake_logits.softplus()?.mean()?;
    Ok(real.add(fake)?)
}

/// `½ Σᵢ ‖∇_{yᵢ} D‖²` averaged over the batch, where `probabilities: [B]`
/// were computed from the leaf `features`. The result stays differentiable
/// with respect to the discriminator parameters.
pub fn r1_from_output<'g>(probabilities: Var<'g>, features: Var<'g>) -> Result<Var<'g>> {
    let graph = features.graph();
    let batch = probabilities.shape().iter().product::<usize>().max(1);
    let grads = graph.backward(probabilities.sum()?, &[features], true)?;
    Ok(grads[0].square()?.sum()?.scale(0.5 / batch as f64)?)
}

/// R1 penalty of `disc` on a batch of real clouds.
pub fn r1_penalty<'g, D: Discriminator>(
    disc: &mut D,
    params: &[Var<'g>],
    coords: &[Tensor],
    features: Var<'g>,
    training: bool,
) -> Result<Var<'g>> {
    let probs = disc.logits(params, coords, features, training)?.sigmoid()?;
    r1_from_output(probs, features)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub k_subsample: Option<usize>,
    pub r1_weight: f64,
    pub seed: u64,
    /// Stops after this many steps even if epochs remain.
    pub max_steps: Option<u64>,
    /// Calls the checkpoint hook every this many steps.
    pub checkpoint_every: Option<u64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lr_generator: 1e-4,
            lr_discriminator: 4e-4,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 16,
            epochs: 1,
            k_subsample: None,
            r1_weight: 10.0,
            seed: 0,
            max_steps: None,
            checkpoint_every: None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        self.generator_adam().validate()?;
        self.discriminator_adam().validate()?;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.k_subsample == Some(0) {
            return Err(Error::invalid("subsample size must be at least 1"));
        }
        if !(self.r1_weight >= 0.0 && self.r1_weight.is_finite()) {
            return Err(Error::invalid(format!("r1 weight must be non-negative, got {}", self.r1_weight)));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::invalid("checkpoint interval must be at least 1"));
        }
        Ok(())
    }

    pub fn generator_adam(&self) -> AdamConfig {
        AdamConfig::new(self.lr_generator, self.beta1, self.beta2)
    }

    pub fn discriminator_adam(&self) -> AdamConfig {
        AdamConfig::new(self.lr_discriminator, self.beta1, self.beta2)
    }

    pub fn steps_per_epoch(&self, dataset_len: usize) -> u64 {
        dataset_len.div_ceil(self.batch_size) as u64
    }

    /// Steps a full run performs on a dataset of this size.
    pub fn total_steps(&self, dataset_len: usize) -> u64 {
        let planned = self.epochs as u64 * self.steps_per_epoch(dataset_len);
        self.max_steps.map_or(planned, |m| m.min(planned))
    }

    pub(crate) fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<u64>| v.map_or_else(|| "none".to_string(), |v| v.to_string());
        vec![
            ("training.lr_generator", self.lr_generator.to_string()),
            ("training.lr_discriminator", self.lr_discriminator.to_string()),
            ("training.beta1", self.beta1.to_string()),
            ("training.beta2", self.beta2.to_string()),
            ("training.batch_size", self.batch_size.to_string()),
            ("training.epochs", self.epochs.to_string()),
            ("training.k_subsample", opt(self.k_subsample.map(|k| k as u64))),
            ("training.r1_weight", self.r1_weight.to_string()),
            ("training.seed", self.seed.to_string()),
            ("training.max_steps", opt(self.max_steps)),
            ("training.checkpoint_every", opt(self.checkpoint_every)),
        ]
    }

    pub(crate) fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let opt = |key: &str| -> Result<Option<u64>> {
            match ck.get(key)? {
                "none" => Ok(None),
                _ => Ok(Some(ck.parse(key)?)),
            }
        };
        Ok(Self {
            lr_generator: ck.parse("training.lr_generator")?,
            lr_discriminator: ck.parse("training.lr_discriminator")?,
            beta1: ck.parse("training.beta1")?,
            beta2: ck.parse("training.beta2")?,
            batch_size: ck.parse("training.batch_size")?,
            epochs: ck.parse("training.epochs")?,
            k_subsample: opt("training.k_subsample")?.map(|k| k as usize),
            r1_weight: ck.parse("training.r1_weight")?,
            seed: ck.parse("training.seed")?,
            max_steps: opt("training.max_steps")?,
            checkpoint_every: opt("training.checkpoint_every")?,
        })
    }
}

/// Losses and discriminator outputs of one step. `d_real` and `d_fake` are
/// batch means of the probabilities seen by the discriminator update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: u64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub r1: f64,
    pub d_real: f64,
    pub d_fake: f64,
}

impl LossRecord {
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.step == other.step
            && [self.d_loss, self.g_loss, self.r1, self.d_real, self.d_fake]
                .iter()
                .zip([other.d_loss, other.g_loss, other.r1, other.d_real, other.d_fake])
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl fmt::Display for LossRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step {}: d_loss {:.4} g_loss {:.4} r1 {:.4} D(real) {:.3} D(fake) {:.3}",
            self.step, self.d_loss, self.g_loss, self.r1, self.d_real, self.d_fake
        )
    }
}

/// Loss history as CSV with header `step,d_loss,g_loss,r1`.
pub fn loss_csv(history: &[LossRecord]) -> String {
    let mut out = String::from("step,d_loss,g_loss,r1\n");
    for r in history {
        out.push_str(&format!("{},{},{},{}\n", r.step, r.d_loss, r.g_loss, r.r1));
    }
    out
}

pub fn write_loss_csv(path: &Path, history: &[LossRecord]) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(loss_csv(history).as_bytes()).map_err(|e| Error::io(path, e))
}

/// Checks that a dataset can be batched for the given generator and
/// discriminator.
pub fn validate_dataset<D: Discriminator>(
    data: &[PointCloud],
    generator: &Hypernetwork,
    disc: &D,
    config: &TrainingConfig,
) -> Result<()> {
    let first = data.first().ok_or_else(|| Error::invalid("dataset is empty"))?;
    let (d, k) = (first.coord_dim(), first.feature_dim());
    if d != generator.coord_dim() || k != generator.target_arch().output_dim {
        return Err(Error::dim(format!(
            "data maps {d}-D → {k}-D but the generator emits {}-D → {}-D functions",
            generator.coord_dim(),
            generator.target_arch().output_dim
        )));
    }
    if d != disc.coord_dim() || k != disc.feature_dim() {
        return Err(Error::dim(format!(
            "data maps {d}-D → {k}-D but the discriminator takes {}-D → {}-D",
            disc.coord_dim(),
            disc.feature_dim()
        )));
    }
    for (i, pc) in data.iter().enumerate() {
        if pc.coord_dim() != d || pc.feature_dim() != k {
            return Err(Error::dim(format!("datapoint {i} has different coordinate or feature width")));
        }
        match config.k_subsample {
            Some(kk) if kk > pc.len() => {
                return Err(Error::invalid(format!(
                    "subsample size {kk} exceeds the {} points of datapoint {i}",
                    pc.len()
                )))
            }
            None if pc.len() != first.len() => {
                return Err(Error::dim(format!(
                    "datapoint {i} has {} points but datapoint 0 has {}; set a subsample size",
                    pc.len(),
                    first.len()
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Complete, resumable training state.
#[derive(Debug, Clone)]
pub struct Trainer<D: Discriminator> {
    pub generator: Hypernetwork,
    pub discriminator: D,
    pub config: TrainingConfig,
    pub g_state: AdamState,
    pub d_state: AdamState,
    pub history: Vec<LossRecord>,
    pub(crate) rng: Rng,
    pub(crate) step: u64,
    /// Current epoch's visiting order and how far into it we are.
    pub(crate) order: Vec<usize>,
    pub(crate) position: usize,
}

impl<D: Discriminator> Trainer<D> {
    pub fn new(generator: Hypernetwork, discriminator: D, config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            g_state: AdamState::zeros_like(generator.net().params().tensors()),
            d_state: AdamState::zeros_like(discriminator.params().tensors()),
            rng: rng::seeded(config.seed),
            generator,
            discriminator,
            config,
            history: Vec::new(),
            step: 0,
            order: Vec::new(),
            position: 0,
        })
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn rng_state(&self) -> RngState {
        RngState::capture(&self.rng)
    }

    /// Draws the next real batch, reshuffling at epoch boundaries.
    fn next_batch(&mut self, data: &[PointCloud]) -> Result<Vec<PointCloud>> {
        if self.position >= self.order.len() {
            self.order = (0..data.len()).collect();
            self.order.shuffle(&mut self.rng);
            self.position = 0;
        }
        let end = (self.position + self.config.batch_size).min(self.order.len());
        let picks: Vec<usize> = self.order[self.position..end].to_vec();
        self.position = end;
        let mut batch = Vec::with_capacity(picks.len());
        for i in picks {
            let pc = data.get(i).ok_or_else(|| Error::invalid("dataset shrank during training"))?;
            batch.push(match self.config.k_subsample {
                Some(k) => pc.subsample_with(k, &mut self.rng)?,
                None => pc.clone(),
            });
        }
        Ok(batch)
    }

    /// Features `[B·n, k]` of freshly sampled functions at the batch's
    /// coordinates, without gradient tracking.
    fn fake_features(&mut self, coords: &Tensor) -> Result<Tensor> {
        let batch = coords.shape()[0];
        let z = self.generator.sample_latents(batch, &mut self.rng)?;
        let graph = Graph::new();
        let phi = self.generator.net().params().bind(&graph, false);
        let y = self
            .generator
            .features_var(&phi, graph.constant(z), graph.constant(coords.clone()))?
            .value();
        let s = y.shape().to_vec();
        Ok(y.reshape(&[s[0] * s[1], s[2]])?)
    }

    /// One discriminator update followed by one generator update. On a
    /// non-finite loss the trainer is left exactly as it was before the
    /// call.
    pub fn step(&mut self, data: &[PointCloud]) -> Result<LossRecord> {
        let snapshot = self.clone();
        match self.step_inner(data) {
            Ok(record) => Ok(record),
            Err(e) => {
                *self = snapshot;
                Err(e)
            }
        }
    }

    /// One discriminator update with the generator frozen. The recorded
    /// generator loss is measured on the same fake batch, before the
    /// update.
    pub fn discriminator_step(&mut self, data: &[PointCloud]) -> Result<LossRecord> {
        let snapshot = self.clone();
        let result = self.next_batch(data).and_then(|batch| {
            let prepared = Prepared::new(&batch)?;
            let update = self.update_discriminator(&prepared)?;
            let g_loss = update.g_loss_before;
            Ok(self.record(update, g_loss))
        });
        result.map_err(|e| {
            *self = snapshot;
            e
        })
    }

    fn step_inner(&mut self, data: &[PointCloud]) -> Result<LossRecord> {
        let batch = self.next_batch(data)?;
        let prepared = Prepared::new(&batch)?;
        let update = self.update_discriminator(&prepared)?;
        let g_loss = self.update_generator(prepared)?;
        Ok(self.record(update, g_loss))
    }

    fn record(&mut self, update: DiscriminatorUpdate, g_loss: f64) -> LossRecord {
        self.step += 1;
        let record = LossRecord {
            step: self.step,
            d_loss: update.d_loss,
            g_loss,
            r1: update.r1,
            d_real: update.d_real,
            d_fake: update.d_fake,
        };
        self.history.push(record);
        record
    }

    fn update_discriminator(&mut self, batch: &Prepared) -> Result<DiscriminatorUpdate> {
        let b = batch.coords.len();
        let fake = self.fake_features(&batch.stacked_coords)?;
        let update = {
            let graph = Graph::new();
            let params = self.discriminator.params().bind(&graph, true);
            let real_leaf = graph.param(batch.real.clone());
            let l_real = self.discriminator.logits(&params, &batch.coords, real_leaf, true)?;
            let l_fake = self.discriminator.logits(&params, &batch.coords, graph.constant(fake), true)?;
            let adv = d_loss_logits(l_real, l_fake)?;
            let p_real = l_real.sigmoid()?;
            let mut total = adv;
            let mut r1 = 0.0;
            if self.config.r1_weight > 0.0 {
                let penalty = r1_from_output(p_real, real_leaf)?;
                r1 = penalty.item().expect("scalar");
                total = total.add(penalty.scale(self.config.r1_weight)?)?;
            }
            let mean = |v: Var<'_>| v.value().data().iter().sum::<f64>() / b as f64;
            let grads: Vec<Tensor> = graph.backward(total, &params, false)?.iter().map(Var::value).collect();
            DiscriminatorUpdate {
                d_loss: adv.item().expect("scalar"),
                r1,
                d_real: mean(p_real),
                d_fake: mean(l_fake.sigmoid()?),
                g_loss_before: g_loss_logits(l_fake)?.item().expect("scalar"),
                grads,
            }
        };
        let step_no = self.step + 1;
        finite("discriminator loss", update.d_loss, step_no)?;
        finite("R1 penalty", update.r1, step_no)?;
        let d_config = self.config.discriminator_adam();
        adam_step(self.discriminator.params_mut().tensors_mut(), &update.grads, &mut self.d_state, &d_config)?;
        Ok(update)
    }

    /// Generator update with fresh latents at the batch's coordinates.
    fn update_generator(&mut self, batch: Prepared) -> Result<f64> {
        let (b, n, k) = (batch.coords.len(), batch.n, batch.k);
        let z = self.generator.sample_latents(b, &mut self.rng)?;
        let (g_loss, grads) = {
            let graph = Graph::new();
            let phi = self.generator.net().params().bind(&graph, true);
            let d_params = self.discriminator.params().bind(&graph, false);
            let y = self
                .generator
                .features_var(&phi, graph.constant(z), graph.constant(batch.stacked_coords))?
                .reshape(&[b * n, k])?;
            let l_fake = self.discriminator.logits(&d_params, &batch.coords, y, true)?;
            let loss = g_loss_logits(l_fake)?;
            let grads: Vec<Tensor> = graph.backward(loss, &phi, false)?.iter().map(Var::value).collect();
            (loss.item().expect("scalar"), grads)
        };
        finite("generator loss", g_loss, self.step + 1)?;
        let g_config = self.config.generator_adam();
        adam_step(self.generator.net_mut().params_mut().tensors_mut(), &grads, &mut self.g_state, &g_config)?;
        Ok(g_loss)
    }

    /// Trains until the configured epochs or step cap are exhausted. The
    /// hook runs after every `checkpoint_every` steps.
    pub fn run(&mut self, data: &[PointCloud], mut hook: impl FnMut(&Self) -> Result<()>) -> Result<()> {
        validate_dataset(data, &self.generator, &self.discriminator, &self.config)?;
        let total = self.config.total_steps(data.len());
        while self.step < total {
            self.step(data)?;
            if let Some(every) = self.config.checkpoint_every {
                if self.step % every == 0 {
                    hook(self)?;
                }
            }
        }
        Ok(())
    }
}

/// A real batch laid out for the discriminator and the generator.
struct Prepared {
    coords: Vec<Tensor>,
    stacked_coords: Tensor,
    real: Tensor,
    n: usize,
    k: usize,
}

impl Prepared {
    fn new(batch: &[PointCloud]) -> Result<Self> {
        let b = batch.len();
        let (n, d, k) = (batch[0].len(), batch[0].coord_dim(), batch[0].feature_dim());
        Ok(Self {
            coords: batch.iter().map(|pc| pc.coords().clone()).collect(),
            stacked_coords: Tensor::new(&[b, n, d], batch.iter().flat_map(|pc| pc.coords().data().to_vec()).collect())?,
            real: Tensor::matrix(b * n, k, batch.iter().flat_map(|pc| pc.features().data().to_vec()).collect())?,
            n,
            k,
        })
    }
}

struct DiscriminatorUpdate {
    d_loss: f64,
    r1: f64,
    d_real: f64,
    d_fake: f64,
    g_loss_before: f64,
    grads: Vec<Tensor>,
}

fn finite(what: &str, v: f64, step: u64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} became {v} at step {step}")))
    }
}

/// Trained models with their loss history.
#[derive(Debug, Clone)]
pub struct TrainOutput<D: Discriminator> {
    pub generator: Hypernetwork,
    pub discriminator: D,
    pub history: Vec<LossRecord>,
}

/// Runs a full training job from scratch.
pub fn train<D: Discriminator>(
    data: &[PointCloud],
    generator: Hypernetwork,
    discriminator: D,
    config: &TrainingConfig,
) -> Result<TrainOutput<D>> {
    let mut trainer = Trainer::new(generator, discriminator, config.clone())?;
    trainer.run(data, |_| Ok(()))?;
    Ok(TrainOutput {
        generator: trainer.generator,
        discriminator: trainer.discriminator,
        history: trainer.history,
    })
}
