//! Every differentiable operation against central finite differences on
//! 100 seeded instances each.

use gasp_autodiff::check::{max_relative_error, numeric_gradient, FD_STEP};
use gasp_autodiff::nn::{batch_norm, BatchNormState, ParamStore};
use gasp_autodiff::{Elementwise, Graph, Tensor, Var};
use gasp_core::function_rep::{FunctionRep, MlpArchitecture};
use gasp_core::pointconv::{pointconv_forward, DiscriminatorConfig, DiscriminatorStack, PointConvLayer};
use gasp_core::rff::FourierEncoding;
use gasp_core::rng::{self, Rng};
use gasp_core::training::{r1_penalty, Discriminator};
use rand::Rng as _;

use crate::common::{gradient_error, uniform, Outcome};

const INSTANCES: u64 = 100;
const TOL: f64 = 1e-5;
const R1_TOL: f64 = 1e-3;
/// Step for anything behind the kernel network's batch norm. Few offset
/// rows give a small batch variance and sharp curvature, and whole
/// discriminators hold dozens of leaky units whose kinks the central
/// difference must not straddle.
const STACK_STEP: f64 = 1e-6;

/// Magnitudes in `[0.2, 2]` with random sign, away from kinks and poles.
fn away_from_zero(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.2..2.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

fn family(name: &str, tol: f64, mut instance: impl FnMut(u64) -> f64) -> (String, f64, bool) {
    let worst = (0..INSTANCES).map(&mut instance).fold(0.0, f64::max);
    (name.to_string(), worst, worst < tol)
}

fn elementwise(op: Elementwise, seed: u64) -> f64 {
    let mut rng = rng::seeded(seed);
    let shape: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(1..=4)).collect();
    let a = match op {
        Elementwise::Log => {
            let n = shape.iter().product();
            Tensor::new(&shape, (0..n).map(|_| rng.gen_range(0.2..3.0)).collect()).unwrap()
        }
        Elementwise::LeakyRelu(_) => away_from_zero(&mut rng, &shape),
        _ => uniform(&mut rng, &shape, 2.0),
    };
    if op.is_binary() {
        let b_shape = [*shape.last().unwrap()];
        let b = match op {
            Elementwise::Div => away_from_zero(&mut rng, &b_shape),
            _ => uniform(&mut rng, &b_shape, 2.0),
        };
        gradient_error(&|_, v| op.apply(v[0], Some(v[1])).unwrap(), &[a, b], &mut rng, FD_STEP)
    } else {
        gradient_error(&|_, v| op.apply(v[0], None).unwrap(), &[a], &mut rng, FD_STEP)
    }
}

fn matmul(seed: u64) -> f64 {
    let mut rng = rng::seeded(seed);
    let (m, k, n) = (rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..6));
    let a = uniform(&mut rng, &[2, m, k], 1.0);
    let b = uniform(&mut rng, &[k, n], 1.0);
    let c = uniform(&mut rng, &[2, k, n], 1.0);
    let plain = gradient_error(&|_, v| v[0].matmul(v[1]).unwrap(), &[a.clone(), b], &mut rng, FD_STEP);
    let batched = gradient_error(&|_, v| v[0].matmul(v[1]).unwrap(), &[a, c], &mut rng, FD_STEP);
    plain.max(batched)
}

fn reduce(seed: u64) -> f64 {
    let mut rng = rng::seeded(seed);
    let shape = [rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..4)];
    let x = uniform(&mut rng, &shape, 1.0);
    let a = gradient_error(&|_, v| v[0].sum_axes(&[1], false).unwrap(), &[x.clone()], &mut rng, FD_STEP);
    let b = gradient_error(&|_, v| v[0].mean_axes(&[0, 2], true).unwrap(), &[x.clone()], &mut rng, FD_STEP);
    let c = gradient_error(&|_, v| v[0].mean().unwrap(), &[x], &mut rng, FD_STEP);
    let rows = uniform(&mut rng, &[3, shape[2]], 1.0);
    let d = gradient_error(&|_, v| v[0].index_add(&[1, 0, 1], 2).unwrap(), &[rows], &mut rng, FD_STEP);
    a.max(b).max(c).max(d)
}

fn bn<'g>(v: &[Var<'g>]) -> Var<'g> {
    let mut state = BatchNormState::new(v[1].shape()[0]);
    batch_norm(v[0], v[1], v[2], &mut state, true).unwrap()
}

fn batch_norm_instance(seed: u64) -> f64 {
    let mut rng = rng::seeded(seed);
    let (rows, features) = (rng.gen_range(2..7), rng.gen_range(1..4));
    let x = uniform(&mut rng, &[rows, features], 2.0);
    let gamma = Tensor::new(&[features], (0..features).map(|_| rng.gen_range(0.5..1.5)).collect()).unwrap();
    let beta = uniform(&mut rng, &[features], 0.5);
    gradient_error(&|_, v| bn(v), &[x, gamma, beta], &mut rng, FD_STEP)
}

fn encode(seed: u64) -> f64 {
    let mut rng = rng::seeded(seed);
    let (m, d, n) = (rng.gen_range(1..6), rng.gen_range(1..4), rng.gen_range(1..6));
    let enc = FourierEncoding::sample(m, d, rng.gen_range(0.5..3.0), seed).unwrap();
    let x = uniform(&mut rng, &[n, d], 1.0);
    gradient_error(&|_, v| enc.encode(v[0]).unwrap(), &[x], &mut rng, FD_STEP)
}

fn evaluate(seed: u64) -> f64 {
    let mut rng = rng::seeded(seed);
    let d = rng.gen_range(1..3);
    let enc = (seed % 2 == 0).then(|| FourierEncoding::sample(3, d, 1.0, seed).unwrap());
    let input = enc.as_ref().map_or(d, FourierEncoding::output_dim);
    let arch = MlpArchitecture::new(input, vec![rng.gen_range(2..6); rng.gen_range(1..3)], rng.gen_range(1..3)).unwrap();
    let rep = FunctionRep::init(arch, enc, seed).unwrap();
    let rows = rng.gen_range(1..5);
    let x = uniform(&mut rng, &[rows, d], 1.0);
    gradient_error(&|_, v| rep.evaluate_var(v[0], v[1]).unwrap(), &[rep.theta().clone(), x], &mut rng, FD_STEP)
}

fn conv<'g>(layer: &PointConvLayer, v: &[Var<'g>], split: usize, points: &Tensor, queries: &Tensor) -> Var<'g> {
    let mut layer = layer.clone();
    pointconv_forward(&mut layer, &v[..split], points, v[split], queries, true).unwrap()
}

fn pointconv(seed: u64) -> f64 {
    let mut rng = rng::seeded(seed);
    let d = rng.gen_range(1..3);
    let (c_in, c_out) = (rng.gen_range(1..3), rng.gen_range(1..3));
    let mut store = ParamStore::new();
    let k = rng.gen_range(1..5);
    let layer = PointConvLayer::new(&mut store, "conv", d, c_in, c_out, k, 2.0, &[4, 3], &mut rng).unwrap();
    let n = rng.gen_range(4..8);
    let points = uniform(&mut rng, &[n, d], 1.0);
    let q = rng.gen_range(2..5);
    let queries = uniform(&mut rng, &[q, d], 1.0);
    let mut inputs: Vec<Tensor> = store.tensors().iter().map(|t| jitter(t, &mut rng)).collect();
    inputs.push(uniform(&mut rng, &[n, c_in], 1.0));
    let split = inputs.len() - 1;
    gradient_error(&|_, v| conv(&layer, v, split, &points, &queries), &inputs, &mut rng, STACK_STEP)
}

/// `t` moved off its initial value, so no batch-norm output sits exactly
/// on a kink.
fn jitter(t: &Tensor, rng: &mut Rng) -> Tensor {
    let noise = rng::uniform_vec(rng, t.len(), 0.3);
    Tensor::new(t.shape(), t.data().iter().zip(noise).map(|(v, e)| v + e).collect()).unwrap()
}

/// A small stack with every parameter jittered.
fn tiny_stack(seed: u64) -> DiscriminatorStack {
    let mut config = DiscriminatorConfig::new(2, 1, vec![2, 4]);
    config.k_neighbors = 4;
    config.weight_hidden = vec![3, 3];
    let mut disc = DiscriminatorStack::new(config, seed).unwrap();
    let mut rng = rng::seeded(seed ^ 0xabcd);
    for t in disc.params_mut().tensors_mut() {
        *t = jitter(t, &mut rng);
    }
    disc
}

fn logits<'g>(disc: &DiscriminatorStack, v: &[Var<'g>], split: usize, coords: &[Tensor]) -> Var<'g> {
    let mut disc = disc.clone();
    disc.logits(&v[..split], coords, v[split], true).unwrap()
}

fn discriminate(seed: u64) -> f64 {
    let mut rng = rng::seeded(seed);
    let disc = tiny_stack(seed);
    let n = rng.gen_range(5..9);
    let coords: Vec<Tensor> = (0..2).map(|_| uniform(&mut rng, &[n, 2], 1.0)).collect();
    let mut inputs = Discriminator::params(&disc).tensors().to_vec();
    inputs.push(uniform(&mut rng, &[2 * n, 1], 1.0));
    let split = inputs.len() - 1;
    gradient_error(&|_, v| logits(&disc, v, split, &coords), &inputs, &mut rng, STACK_STEP)
}

fn r1_value(disc: &DiscriminatorStack, params: &[Tensor], coords: &[Tensor], feats: &Tensor) -> f64 {
    let g = Graph::new();
    let mut disc = disc.clone();
    let p: Vec<_> = params.iter().map(|t| g.constant(t.clone())).collect();
    r1_penalty(&mut disc, &p, coords, g.param(feats.clone()), true).unwrap().item().unwrap()
}

fn r1(seed: u64) -> f64 {
    let mut rng = rng::seeded(seed);
    let disc = tiny_stack(seed);
    let coords: Vec<Tensor> = (0..2).map(|_| uniform(&mut rng, &[6, 2], 1.0)).collect();
    let feats = uniform(&mut rng, &[12, 1], 1.0);
    let params = Discriminator::params(&disc).tensors().to_vec();
    let numeric = numeric_gradient(|ps| r1_value(&disc, ps, &coords, &feats), &params, STACK_STEP);

    let g = Graph::new();
    let mut d = disc.clone();
    let p: Vec<_> = params.iter().map(|t| g.param(t.clone())).collect();
    let penalty = r1_penalty(&mut d, &p, &coords, g.param(feats.clone()), true).unwrap();
    let grads: Vec<Tensor> = g.backward(penalty, &p, false).unwrap().iter().map(Var::value).collect();
    max_relative_error(&grads, &numeric)
}

pub fn run() -> Outcome {
    let mut families = Vec::new();
    for op in Elementwise::ALL {
        families.push(family(&format!("{op:?}"), TOL, |s| elementwise(op, 10_000 + s)));
    }
    families.push(family("matmul", TOL, |s| matmul(20_000 + s)));
    families.push(family("reduce", TOL, |s| reduce(30_000 + s)));
    families.push(family("batch_norm", TOL, |s| batch_norm_instance(40_000 + s)));
    families.push(family("encode", TOL, |s| encode(50_000 + s)));
    families.push(family("evaluate", TOL, |s| evaluate(60_000 + s)));
    families.push(family("pointconv_forward", TOL, |s| pointconv(70_000 + s)));
    families.push(family("discriminate", TOL, |s| discriminate(80_000 + s)));
    families.push(family("r1_penalty", R1_TOL, |s| r1(90_000 + s)));

    let failed: Vec<String> = families
        .iter()
        .filter(|f| !f.2)
        .map(|f| format!("{} {:.1e}", f.0, f.1))
        .collect();
    let worst = families.iter().filter(|f| f.0 != "r1_penalty").map(|f| f.1).fold(0.0, f64::max);
    let r1 = families.last().unwrap().1;
    let detail = if failed.is_empty() {
        format!(
            "{} families x {INSTANCES} instances, worst {worst:.1e} (< {TOL:e}), R1 {r1:.1e} (< {R1_TOL:e})",
            families.len()
        )
    } else {
        format!("failed: {}", failed.join(", "))
    };
    Outcome::new(failed.is_empty(), detail)
}
