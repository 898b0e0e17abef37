//! End-to-end behavior of the adversarial training loop on tiny problems.

use gasp_autodiff::Tensor;
use gasp_core::data::PointCloud;
use gasp_core::function_rep::MlpArchitecture;
use gasp_core::hypernet::Hypernetwork;
use gasp_core::pointconv::{DiscriminatorConfig, DiscriminatorStack};
use gasp_core::rff::FourierEncoding;
use gasp_core::toy::sinusoid_dataset;
use gasp_core::training::{train, Trainer, TrainingConfig};

fn models(seed: u64) -> (Hypernetwork, DiscriminatorStack) {
    let enc = FourierEncoding::sample(4, 1, 1.0, seed).unwrap();
    let target = MlpArchitecture::new(8, vec![8], 1).unwrap();
    let gen = Hypernetwork::new(4, &[16], target, Some(enc), seed).unwrap();
    let disc = DiscriminatorStack::new(DiscriminatorConfig::new(1, 1, vec![4, 8]), seed).unwrap();
    (gen, disc)
}

fn config(epochs: usize, seed: u64) -> TrainingConfig {
    TrainingConfig {
        batch_size: 4,
        epochs,
        seed,
        ..TrainingConfig::default()
    }
}

#[test]
fn identical_seeds_give_identical_histories() {
    let data = sinusoid_dataset(12, 10, 1).unwrap();
    let (g, d) = models(3);
    let a = train(&data, g.clone(), d.clone(), &config(2, 8)).unwrap();
    let b = train(&data, g, d, &config(2, 8)).unwrap();
    assert_eq!(a.history.len(), 6);
    assert!(a.history.iter().zip(&b.history).all(|(x, y)| x.bit_eq(y)));
    assert_eq!(a.generator.net().params(), b.generator.net().params());

    let (g, d) = models(3);
    let c = train(&data, g, d, &config(2, 9)).unwrap();
    assert!(!a.history.iter().zip(&c.history).all(|(x, y)| x.bit_eq(y)));
}

#[test]
fn zero_epochs_leave_the_models_untouched() {
    let data = sinusoid_dataset(4, 8, 1).unwrap();
    let (g, d) = models(2);
    let out = train(&data, g.clone(), d.clone(), &config(0, 0)).unwrap();
    assert!(out.history.is_empty());
    assert_eq!(out.generator.net().params(), g.net().params());
    assert_eq!(out.discriminator.params(), d.params());
}

#[test]
fn subsampling_trains_on_fewer_points() {
    let data = sinusoid_dataset(8, 32, 1).unwrap();
    let (g, d) = models(4);
    let cfg = TrainingConfig {
        k_subsample: Some(8),
        ..config(1, 0)
    };
    let out = train(&data, g, d, &cfg).unwrap();
    assert_eq!(out.history.len(), 2);
    assert!(out.history.iter().all(|r| r.d_loss.is_finite() && r.g_loss.is_finite()));
}

/// Real clouds are all `+0.9`; a generator whose output is pinned near
/// `−1` makes the two sets trivially separable.
#[test]
fn frozen_generator_lets_the_discriminator_separate() {
    let coords = gasp_core::data::grid_coordinates(&[16]).unwrap();
    let real = PointCloud::new(coords, Tensor::matrix(16, 1, vec![0.9; 16]).unwrap()).unwrap();
    let data = vec![real; 8];

    let (mut gen, disc) = models(5);
    let last = gen.net().params().tensors().len() - 1;
    let bias = &mut gen.net_mut().params_mut().tensors_mut()[last];
    let n = bias.len();
    *bias = Tensor::new(bias.shape(), vec![-3.0; n]).unwrap();
    for t in gen.net_mut().params_mut().tensors_mut()[..last].iter_mut() {
        *t = Tensor::zeros(t.shape()).unwrap();
    }
    let before = gen.net().params().clone();

    let mut trainer = Trainer::new(gen, disc, config(100, 1)).unwrap();
    let mut last_loss = f64::INFINITY;
    for _ in 0..60 {
        last_loss = trainer.discriminator_step(&data).unwrap().d_loss;
    }
    assert!(last_loss < 4f64.ln(), "discriminator loss {last_loss}");
    assert!(last_loss < trainer.history[0].d_loss);
    assert_eq!(trainer.generator.net().params(), &before);
}
