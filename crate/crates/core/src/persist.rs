//! Mapping models and training state to and from [`Checkpoint`]s.

use gasp_autodiff::Tensor;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::error::{Error, Result};
use crate::function_rep::{FunctionRep, MlpArchitecture};
use crate::hypernet::Hypernetwork;
use crate::optim::AdamState;
use crate::pointconv::{DiscriminatorConfig, DiscriminatorStack};
use crate::rff::FourierEncoding;
use crate::rng::{self, RngState};
use crate::training::{Discriminator, TrainingConfig, Trainer};

/// Value stored under `model` for each checkpoint kind.
pub const KIND_FUNCTION: &str = "function";
pub const KIND_GASP: &str = "gasp";

fn list(values: &[usize]) -> String {
    values.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list(ck: &Checkpoint, key: &str) -> Result<Vec<usize>> {
    let raw = ck.get(key)?;
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',')
        .map(|s| {
            s.parse()
                .map_err(|_| CheckpointError::Malformed(format!("`{key}` has bad list `{raw}`")).into())
        })
        .collect()
}

fn expect_kind(ck: &Checkpoint, kind: &str) -> Result<()> {
    let found = ck.get("model")?;
    if found != kind {
        return Err(CheckpointError::Malformed(format!("checkpoint holds a `{found}` model, expected `{kind}`")).into());
    }
    Ok(())
}

fn put_arch(ck: &mut Checkpoint, prefix: &str, arch: &MlpArchitecture) {
    ck.set(format!("{prefix}.input_dim"), arch.input_dim);
    ck.set(format!("{prefix}.hidden"), list(&arch.hidden_dims));
    ck.set(format!("{prefix}.output_dim"), arch.output_dim);
}

fn get_arch(ck: &Checkpoint, prefix: &str) -> Result<MlpArchitecture> {
    MlpArchitecture::new(
        ck.parse(&format!("{prefix}.input_dim"))?,
        parse_list(ck, &format!("{prefix}.hidden"))?,
        ck.parse(&format!("{prefix}.output_dim"))?,
    )
}

fn put_encoding(ck: &mut Checkpoint, prefix: &str, enc: Option<&FourierEncoding>) {
    match enc {
        Some(enc) => {
            ck.set(format!("{prefix}.encoding"), "rff");
            ck.set(format!("{prefix}.encoding.sigma"), enc.sigma());
            ck.set(format!("{prefix}.encoding.seed"), enc.seed());
            ck.push(format!("{prefix}.encoding.B"), enc.frequencies().clone());
        }
        None => ck.set(format!("{prefix}.encoding"), "none"),
    }
}

fn get_encoding(ck: &Checkpoint, prefix: &str) -> Result<Option<FourierEncoding>> {
    match ck.get(&format!("{prefix}.encoding"))? {
        "none" => Ok(None),
        "rff" => Ok(Some(FourierEncoding::with_provenance(
            ck.tensor(&format!("{prefix}.encoding.B"))?.clone(),
            ck.parse(&format!("{prefix}.encoding.sigma"))?,
            ck.parse(&format!("{prefix}.encoding.seed"))?,
        )?)),
        other => Err(CheckpointError::Malformed(format!("unknown encoding `{other}`")).into()),
    }
}

fn put_tensors(ck: &mut Checkpoint, prefix: &str, tensors: &[Tensor]) {
    ck.set(format!("{prefix}.count"), tensors.len());
    for (i, t) in tensors.iter().enumerate() {
        ck.push(format!("{prefix}.{i}"), t.clone());
    }
}

fn get_tensors(ck: &Checkpoint, prefix: &str) -> Result<Vec<Tensor>> {
    let count: usize = ck.parse(&format!("{prefix}.count"))?;
    (0..count).map(|i| ck.tensor(&format!("{prefix}.{i}")).cloned()).collect()
}

fn put_adam(ck: &mut Checkpoint, prefix: &str, state: &AdamState) {
    ck.set(format!("{prefix}.step"), state.step);
    put_tensors(ck, &format!("{prefix}.m"), &state.first);
    put_tensors(ck, &format!("{prefix}.v"), &state.second);
}

fn get_adam(ck: &Checkpoint, prefix: &str) -> Result<AdamState> {
    Ok(AdamState {
        first: get_tensors(ck, &format!("{prefix}.m"))?,
        second: get_tensors(ck, &format!("{prefix}.v"))?,
        step: ck.parse(&format!("{prefix}.step"))?,
    })
}

/// A fitted single function.
pub fn function_checkpoint(rep: &FunctionRep) -> Checkpoint {
    let mut ck = Checkpoint::new(RngState::capture(&rng::seeded(0)));
    ck.set("model", KIND_FUNCTION);
    put_arch(&mut ck, "function.arch", rep.arch());
    put_encoding(&mut ck, "function", rep.encoding());
    ck.push("function.theta", rep.theta().clone());
    ck
}

pub fn function_from_checkpoint(ck: &Checkpoint) -> Result<FunctionRep> {
    expect_kind(ck, KIND_FUNCTION)?;
    FunctionRep::new(
        get_arch(ck, "function.arch")?,
        ck.tensor("function.theta")?.clone(),
        get_encoding(ck, "function")?,
    )
}

pub fn put_generator(ck: &mut Checkpoint, generator: &Hypernetwork) {
    ck.set("generator.latent_dim", generator.latent_dim());
    ck.set("generator.hidden", list(generator.hidden_dims()));
    put_arch(ck, "generator.target", generator.target_arch());
    put_encoding(ck, "generator", generator.encoding());
    put_tensors(ck, "generator.phi", generator.net().params().tensors());
}

pub fn get_generator(ck: &Checkpoint) -> Result<Hypernetwork> {
    Hypernetwork::from_parts(
        ck.parse("generator.latent_dim")?,
        &parse_list(ck, "generator.hidden")?,
        get_arch(ck, "generator.target")?,
        get_encoding(ck, "generator")?,
        get_tensors(ck, "generator.phi")?,
    )
}

pub fn put_discriminator(ck: &mut Checkpoint, disc: &DiscriminatorStack) {
    let c = disc.config();
    ck.set("discriminator.coord_dim", c.coord_dim);
    ck.set("discriminator.feature_dim", c.feature_dim);
    ck.set("discriminator.channels", list(&c.channels));
    ck.set("discriminator.k_neighbors", c.k_neighbors);
    ck.set("discriminator.pool_factor", c.pool_factor);
    ck.set("discriminator.norm_p", c.norm_p);
    ck.set("discriminator.weight_hidden", list(&c.weight_hidden));
    put_tensors(ck, "discriminator.params", disc.params().tensors());
    put_tensors(ck, "discriminator.buffers", &Discriminator::buffers(disc));
}

pub fn get_discriminator(ck: &Checkpoint) -> Result<DiscriminatorStack> {
    let config = DiscriminatorConfig {
        coord_dim: ck.parse("discriminator.coord_dim")?,
        feature_dim: ck.parse("discriminator.feature_dim")?,
        channels: parse_list(ck, "discriminator.channels")?,
        k_neighbors: ck.parse("discriminator.k_neighbors")?,
        pool_factor: ck.parse("discriminator.pool_factor")?,
        norm_p: ck.parse("discriminator.norm_p")?,
        weight_hidden: parse_list(ck, "discriminator.weight_hidden")?,
    };
    let mut disc = DiscriminatorStack::new(config, 0)?;
    let params = get_tensors(ck, "discriminator.params")?;
    if params.len() != disc.params().len() {
        return Err(Error::dim("stored discriminator parameters do not match its configuration"));
    }
    for (slot, t) in disc.params_mut().tensors_mut().iter_mut().zip(params) {
        if slot.shape() != t.shape() {
            return Err(Error::dim("stored discriminator parameter has the wrong shape"));
        }
        *slot = t;
    }
    disc.set_buffers(get_tensors(ck, "discriminator.buffers")?)?;
    Ok(disc)
}

/// Everything needed to resume training bitwise.
pub fn trainer_checkpoint(trainer: &Trainer<DiscriminatorStack>) -> Checkpoint {
    let mut ck = Checkpoint::new(trainer.rng_state());
    ck.set("model", KIND_GASP);
    for (k, v) in trainer.config.to_pairs() {
        ck.set(k, v);
    }
    put_generator(&mut ck, &trainer.generator);
    put_discriminator(&mut ck, &trainer.discriminator);
    put_adam(&mut ck, "adam.generator", &trainer.g_state);
    put_adam(&mut ck, "adam.discriminator", &trainer.d_state);
    ck.set("trainer.step", trainer.step);
    ck.set("trainer.position", trainer.position);
    let order: Vec<f64> = trainer.order.iter().map(|&i| i as f64).collect();
    if !order.is_empty() {
        ck.push("trainer.order", Tensor::vector(&order));
    }
    let history: Vec<f64> = trainer
        .history
        .iter()
        .flat_map(|r| [r.step as f64, r.d_loss, r.g_loss, r.r1, r.d_real, r.d_fake])
        .collect();
    if !history.is_empty() {
        ck.push("trainer.history", Tensor::matrix(trainer.history.len(), 6, history).expect("6 columns"));
    }
    ck
}

pub fn trainer_from_checkpoint(ck: &Checkpoint) -> Result<Trainer<DiscriminatorStack>> {
    expect_kind(ck, KIND_GASP)?;
    let config = TrainingConfig::from_checkpoint(ck)?;
    let mut trainer = Trainer::new(get_generator(ck)?, get_discriminator(ck)?, config)?;
    trainer.g_state = get_adam(ck, "adam.generator")?;
    trainer.d_state = get_adam(ck, "adam.discriminator")?;
    trainer.rng = ck.rng.restore();
    trainer.step = ck.parse("trainer.step")?;
    trainer.position = ck.parse("trainer.position")?;
    trainer.order = match ck.tensor("trainer.order") {
        Ok(t) => t.data().iter().map(|&v| v as usize).collect(),
        Err(_) => Vec::new(),
    };
    if let Ok(h) = ck.tensor("trainer.history") {
        trainer.history = h
            .data()
            .chunks(6)
            .map(|r| crate::training::LossRecord {
                step: r[0] as u64,
                d_loss: r[1],
                g_loss: r[2],
                r1: r[3],
                d_real: r[4],
                d_fake: r[5],
            })
            .collect();
    }
    Ok(trainer)
}

/// Loads only the generator from a training checkpoint.
pub fn generator_from_checkpoint(ck: &Checkpoint) -> Result<Hypernetwork> {
    expect_kind(ck, KIND_GASP)?;
    get_generator(ck)
}
