//! Numerical checks of Lipschitz bounds: spectral norms, the random
//! Fourier feature bound, the set-discriminator composition bound and the
//! norm inequalities behind it.

use std::f64::consts::PI;
use std::fmt;

use gasp_autodiff::{Graph, Tensor};

use crate::baselines::SetDiscriminator;
use crate::error::{Error, Result};
use crate::mlp::Activation;
use crate::rff::FourierEncoding;
use crate::rng::{self, Rng};
use crate::training::Discriminator;

/// Absolute slack allowed between an empirical estimate and its bound.
pub const BOUND_TOLERANCE: f64 = 1e-9;

/// Length of the local perturbation pairs used by [`empirical_lipschitz`].
pub const LOCAL_STEP: f64 = 1e-4;

const POWER_START_SEED: u64 = 0x5eed;

/// Largest singular value of a matrix by power iteration on `AᵀA` from a
/// fixed pseudo-random start. Stops when the estimate changes by less
/// than `tol` (relative) or after `iters` rounds.
pub fn spectral_norm(a: &Tensor, iters: usize, tol: f64) -> Result<f64> {
    let s = a.shape();
    if s.len() != 2 || s[0] == 0 || s[1] == 0 {
        return Err(Error::dim(format!("spectral norm needs a non-empty matrix, got {s:?}")));
    }
    let (m, n) = (s[0], s[1]);
    let data = a.data();
    if data.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let apply = |v: &[f64]| -> Vec<f64> { (0..m).map(|i| dot(&data[i * n..(i + 1) * n], v)).collect() };
    let apply_t = |u: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (i, &ui) in u.iter().enumerate() {
            for (o, &aij) in out.iter_mut().zip(&data[i * n..(i + 1) * n]) {
                *o += aij * ui;
            }
        }
        out
    };
    let mut v = rng::normal_vec(&mut rng::seeded(POWER_START_SEED), n, 1.0);
    normalize(&mut v);
    let mut sigma = norm(&apply(&v));
    for _ in 0..iters.max(1) {
        let mut w = apply_t(&apply(&v));
        if norm(&w) == 0.0 {
            break;
        }
        normalize(&mut w);
        v = w;
        let next = norm(&apply(&v));
        let done = (next - sigma).abs() <= tol * next;
        sigma = next;
        if done {
            break;
        }
    }
    Ok(sigma)
}

/// [`spectral_norm`] with settings accurate to about machine precision on
/// small matrices.
pub fn spectral_norm_default(a: &Tensor) -> Result<f64> {
    spectral_norm(a, 10_000, 1e-15)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// `√8·π·‖B‖`, an upper bound on the Lipschitz constant of `γ`.
pub fn rff_bound(enc: &FourierEncoding) -> Result<f64> {
    Ok(8f64.sqrt() * PI * spectral_norm_default(enc.frequencies())?)
}

/// Largest difference quotient `‖f(x₁) − f(x₂)‖ / ‖x₁ − x₂‖` over `pairs`
/// random pairs from `sampler` plus `pairs` local pairs at distance
/// [`LOCAL_STEP`]. `f` maps a batch of inputs `[N, dim]` to outputs
/// `[N, out]`. Coincident pairs are skipped.
pub fn empirical_lipschitz(
    mut f: impl FnMut(&Tensor) -> Result<Tensor>,
    mut sampler: impl FnMut(&mut Rng) -> Vec<f64>,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    if pairs == 0 {
        return Err(Error::invalid("empirical Lipschitz estimate needs at least one pair"));
    }
    const CHUNK: usize = 2048;
    let mut rng = rng::seeded(seed);
    let mut best = 0.0f64;
    let mut remaining = 2 * pairs;
    let mut produced = 0;
    while remaining > 0 {
        let count = remaining.min(CHUNK);
        let mut left = Vec::new();
        let mut right = Vec::new();
        let mut dim = 0;
        for _ in 0..count {
            let x = sampler(&mut rng);
            dim = x.len();
            let y = if produced < pairs {
                sampler(&mut rng)
            } else {
                let mut u = rng::normal_vec(&mut rng, dim, 1.0);
                normalize(&mut u);
                x.iter().zip(&u).map(|(a, b)| a + LOCAL_STEP * b).collect()
            };
            if y.len() != dim {
                return Err(Error::dim("sampler returned points of different sizes"));
            }
            left.extend(x);
            right.extend(y);
            produced += 1;
        }
        if dim == 0 {
            return Err(Error::dim("sampler returned empty points"));
        }
        let fl = f(&Tensor::matrix(count, dim, left.clone())?)?;
        let fr = f(&Tensor::matrix(count, dim, right.clone())?)?;
        if fl.shape() != fr.shape() || fl.shape().first() != Some(&count) {
            return Err(Error::dim("function must return one output row per input row"));
        }
        let out = fl.len() / count;
        for i in 0..count {
            let dx = dist(&left[i * dim..(i + 1) * dim], &right[i * dim..(i + 1) * dim]);
            if dx == 0.0 {
                continue;
            }
            let dy = dist(&fl.data()[i * out..(i + 1) * out], &fr.data()[i * out..(i + 1) * out]);
            best = best.max(dy / dx);
        }
        remaining -= count;
    }
    Ok(best)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Samples uniformly from the box `[−r, r]^dim`.
pub fn box_sampler(dim: usize, r: f64) -> impl FnMut(&mut Rng) -> Vec<f64> {
    move |rng| rng::uniform_vec(rng, dim, r)
}

/// One checked inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub name: String,
    pub bound: f64,
    pub empirical: f64,
    pub samples: usize,
    pub margin: f64,
    pub pass: bool,
}

impl BoundReport {
    pub fn new(name: impl Into<String>, bound: f64, empirical: f64, samples: usize) -> Self {
        Self {
            name: name.into(),
            bound,
            empirical,
            samples,
            margin: bound - empirical,
            pass: empirical <= bound + BOUND_TOLERANCE,
        }
    }

    /// Folds many trials of one inequality into a single report that keeps
    /// the trial with the smallest margin and fails if any trial failed.
    pub fn worst_of(name: impl Into<String>, trials: impl IntoIterator<Item = (f64, f64)>, samples: usize) -> Self {
        let mut report = Self::new(name, f64::INFINITY, f64::NEG_INFINITY, samples);
        let mut all_pass = true;
        for (bound, empirical) in trials {
            all_pass &= empirical <= bound + BOUND_TOLERANCE;
            if bound - empirical < report.margin || report.margin.is_nan() {
                report.bound = bound;
                report.empirical = empirical;
                report.margin = bound - empirical;
            }
        }
        report.pass = all_pass;
        report
    }
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<24} bound {:>14.9} empirical {:>14.9} margin {:>14.9} n {:>8} {}",
            self.name,
            self.bound,
            self.empirical,
            self.margin,
            self.samples,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// Upper bound on an MLP's Lipschitz constant: the product of its layer
/// spectral norms and activation slope bounds.
pub fn mlp_bound(weights: &[&Tensor], hidden: Activation, output: Activation) -> Result<f64> {
    let mut bound = 1.0;
    for (l, w) in weights.iter().enumerate() {
        bound *= spectral_norm_default(w)?;
        bound *= if l + 1 == weights.len() { output } else { hidden }.lipschitz();
    }
    Ok(bound)
}

/// The composition bound `Lip(σ∘ρ)·Lip(φ)·√(Lip(γ_x)² + Lip(γ_y)²)` for a
/// set discriminator.
pub fn set_disc_lipschitz_bound(sd: &SetDiscriminator) -> Result<f64> {
    let (ph, po) = sd.phi_activations();
    let (rh, ro) = sd.rho_activations();
    let phi = mlp_bound(&sd.phi_weights(), ph, po)?;
    let rho = mlp_bound(&sd.rho_weights(), rh, ro)? * Activation::Sigmoid.lipschitz();
    let lx = rff_bound(sd.encoding_x())?;
    let ly = rff_bound(sd.encoding_y())?;
    Ok(rho * phi * (lx * lx + ly * ly).sqrt())
}

/// Probabilities of a set discriminator for clouds of `n` points given as
/// flattened rows `[x₁ … x_n, y₁ … y_n]`.
pub fn set_disc_batch(sd: &SetDiscriminator, n: usize, rows: &Tensor) -> Result<Tensor> {
    let (d, k) = (sd.coord_dim(), sd.feature_dim());
    let width = n * (d + k);
    let s = rows.shape();
    if s.len() != 2 || s[1] != width {
        return Err(Error::dim(format!("rows must be [batch, {width}], got {s:?}")));
    }
    let mut coords = Vec::with_capacity(s[0]);
    let mut feats = Vec::with_capacity(s[0] * n * k);
    for r in rows.data().chunks(width) {
        coords.push(Tensor::matrix(n, d, r[..n * d].to_vec())?);
        feats.extend_from_slice(&r[n * d..]);
    }
    let graph = Graph::new();
    let mut sd = sd.clone();
    let params = sd.params().bind(&graph, false);
    let feats = graph.constant(Tensor::matrix(s[0] * n, k, feats)?);
    let p = sd.logits(&params, &coords, feats, false)?.sigmoid()?;
    Ok(p.value().reshape(&[s[0], 1])?)
}

/// Checks the composition bound against sampled clouds of `n` points with
/// coordinates and features in `[−1, 1]`.
pub fn set_disc_bound(sd: &SetDiscriminator, n: usize, pairs: usize, seed: u64) -> Result<BoundReport> {
    if n == 0 {
        return Err(Error::invalid("clouds need at least one point"));
    }
    let bound = set_disc_lipschitz_bound(sd)?;
    let width = n * (sd.coord_dim() + sd.feature_dim());
    let empirical = empirical_lipschitz(|x| set_disc_batch(sd, n, x), box_sampler(width, 1.0), pairs, seed)?;
    Ok(BoundReport::new("set discriminator", bound, empirical, 2 * pairs))
}

/// Checks the random Fourier feature bound for one encoding on `[−1, 1]^d`.
pub fn rff_bound_report(enc: &FourierEncoding, pairs: usize, seed: u64) -> Result<BoundReport> {
    let bound = rff_bound(enc)?;
    let encode = |x: &Tensor| -> Result<Tensor> {
        let graph = Graph::new();
        Ok(enc.encode(graph.constant(x.clone()))?.value())
    };
    let empirical = empirical_lipschitz(encode, box_sampler(enc.input_dim(), 1.0), pairs, seed)?;
    Ok(BoundReport::new("fourier features", bound, empirical, 2 * pairs))
}

fn random_matrix(rng: &mut Rng, max_side: usize) -> (usize, usize, Vec<f64>) {
    use rand::Rng as _;
    let r = rng.gen_range(1..=max_side);
    let c = rng.gen_range(1..=max_side);
    (r, c, rng::normal_vec(rng, r * c, 1.0))
}

fn random_count(rng: &mut Rng, max: usize) -> usize {
    use rand::Rng as _;
    rng.gen_range(1..=max)
}

/// `‖[A; B]‖ ≤ √(‖A‖² + ‖B‖²)` for stacked matrices sharing a column count.
pub fn stacked_norm_instance(a: &Tensor, b: &Tensor) -> Result<(f64, f64)> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
        return Err(Error::dim(format!("cannot stack {sa:?} over {sb:?}")));
    }
    let stacked = Tensor::matrix(sa[0] + sb[0], sa[1], [a.data(), b.data()].concat())?;
    let (na, nb) = (spectral_norm_default(a)?, spectral_norm_default(b)?);
    Ok(((na * na + nb * nb).sqrt(), spectral_norm_default(&stacked)?))
}

/// `Σ‖xᵢ‖ ≤ √n·‖(x₁ … x_n)‖` for the rows of `xs: [n, m]`.
pub fn norm_sum_instance(xs: &Tensor) -> Result<(f64, f64)> {
    let s = xs.shape();
    if s.len() != 2 || s[0] == 0 || s[1] == 0 {
        return Err(Error::dim(format!("need a non-empty matrix of vectors, got {s:?}")));
    }
    let sum: f64 = xs.data().chunks(s[1]).map(norm).sum();
    Ok(((s[0] as f64).sqrt() * norm(xs.data()), sum))
}

/// `Lip(x₁ … x_n ↦ Σ f(xᵢ)) ≤ √n·Lip(f)` for `f(x) = tanh(Wx + c)`, whose
/// Lipschitz constant is at most `‖W‖`.
fn sum_of_copies_instance(rng: &mut Rng, pairs: usize, seed: u64) -> Result<(f64, f64)> {
    let (out, dim, w) = random_matrix(rng, 4);
    let n = random_count(rng, 6);
    let c = rng::normal_vec(rng, out, 1.0);
    let w = Tensor::matrix(out, dim, w)?;
    let lip_f = spectral_norm_default(&w)?;
    let wd = w.data().to_vec();
    let g = |x: &Tensor| -> Result<Tensor> {
        let rows = x.shape()[0];
        let mut result = Vec::with_capacity(rows * out);
        for r in x.data().chunks(n * dim) {
            let mut acc = vec![0.0; out];
            for xi in r.chunks(dim) {
                for (o, a) in acc.iter_mut().enumerate() {
                    *a += (dot(&wd[o * dim..(o + 1) * dim], xi) + c[o]).tanh();
                }
            }
            result.extend(acc);
        }
        Ok(Tensor::matrix(rows, out, result)?)
    };
    let empirical = empirical_lipschitz(g, box_sampler(n * dim, 1.0), pairs, seed)?;
    Ok(((n as f64).sqrt() * lip_f, empirical))
}

/// `Lip(x ↦ (Gx, Hx)) ≤ √(‖G‖² + ‖H‖²)`.
fn concatenation_instance(g: &Tensor, h: &Tensor, pairs: usize, seed: u64) -> Result<(f64, f64)> {
    let (sg, sh) = (g.shape(), h.shape());
    if sg[1] != sh[1] {
        return Err(Error::dim("g and h must take the same input"));
    }
    let dim = sg[1];
    let (ng, nh) = (spectral_norm_default(g)?, spectral_norm_default(h)?);
    let stacked = [g.data(), h.data()].concat();
    let rows_out = sg[0] + sh[0];
    let f = |x: &Tensor| -> Result<Tensor> {
        let rows = x.shape()[0];
        let mut out = Vec::with_capacity(rows * rows_out);
        for xi in x.data().chunks(dim) {
            out.extend(stacked.chunks(dim).map(|w| dot(w, xi)));
        }
        Ok(Tensor::matrix(rows, rows_out, out)?)
    };
    let empirical = empirical_lipschitz(f, box_sampler(dim, 1.0), pairs, seed)?;
    Ok(((ng * ng + nh * nh).sqrt(), empirical))
}

/// Lipschitz of `x ↦ (Gx, Hx)` estimated from sampled pairs.
pub fn concat_lipschitz(g: &Tensor, h: &Tensor, pairs: usize, seed: u64) -> Result<(f64, f64)> {
    concatenation_instance(g, h, pairs, seed)
}

/// Pairs sampled per trial for the lemmas that need an empirical estimate.
pub const LEMMA_PAIRS: usize = 16;

/// Checks the four norm lemmas on `trials` random instances each.
pub fn verify_lemmas(trials: usize, seed: u64) -> Result<Vec<BoundReport>> {
    if trials == 0 {
        return Err(Error::invalid("verification needs at least one trial"));
    }
    let mut rng = rng::seeded(seed);
    let mut l1 = Vec::with_capacity(trials);
    let mut l2 = Vec::with_capacity(trials);
    let mut l3 = Vec::with_capacity(trials);
    let mut l4 = Vec::with_capacity(trials);
    for t in 0..trials {
        let (ra, c, a) = random_matrix(&mut rng, 6);
        let rb = random_count(&mut rng, 6);
        let b = rng::normal_vec(&mut rng, rb * c, 1.0);
        l1.push(stacked_norm_instance(&Tensor::matrix(ra, c, a)?, &Tensor::matrix(rb, c, b)?)?);

        let (n, m, xs) = random_matrix(&mut rng, 8);
        l2.push(norm_sum_instance(&Tensor::matrix(n, m, xs)?)?);

        l3.push(sum_of_copies_instance(&mut rng, LEMMA_PAIRS, seed ^ (t as u64).wrapping_mul(0x9e37_79b9))?);

        let (rg, dim, g) = random_matrix(&mut rng, 5);
        let rh = random_count(&mut rng, 5);
        let h = rng::normal_vec(&mut rng, rh * dim, 1.0);
        l4.push(concatenation_instance(
            &Tensor::matrix(rg, dim, g)?,
            &Tensor::matrix(rh, dim, h)?,
            LEMMA_PAIRS,
            seed ^ (t as u64).wrapping_mul(0x85eb_ca6b),
        )?);
    }
    Ok(vec![
        BoundReport::worst_of("stacked norm", l1, trials),
        BoundReport::worst_of("norm sum", l2, trials),
        BoundReport::worst_of("sum of copies", l3, trials),
        BoundReport::worst_of("concatenation", l4, trials),
    ])
}

/// Lemma checks plus the encoding bound on `encodings` random frequency
/// matrices and the composition bound on `discriminators` random set
/// discriminators, `pairs` sampled pairs each.
pub fn verify_all(trials: usize, pairs: usize, seed: u64) -> Result<Vec<BoundReport>> {
    const ENCODINGS: usize = 4;
    const DISCRIMINATORS: usize = 2;
    if pairs == 0 {
        return Err(Error::invalid("verification needs at least one pair"));
    }
    let mut reports = verify_lemmas(trials, seed)?;
    let mut rng = rng::seeded(seed.wrapping_add(1));
    let mut rff = Vec::new();
    for i in 0..ENCODINGS {
        let enc = random_encoding(&mut rng)?;
        let r = rff_bound_report(&enc, pairs, seed.wrapping_add(100 + i as u64))?;
        rff.push((r.bound, r.empirical));
    }
    reports.push(BoundReport::worst_of("fourier features", rff, ENCODINGS * 2 * pairs));
    let mut sets = Vec::new();
    for i in 0..DISCRIMINATORS {
        let sd = random_set_discriminator(&mut rng)?;
        let r = set_disc_bound(&sd, 4, pairs, seed.wrapping_add(200 + i as u64))?;
        sets.push((r.bound, r.empirical));
    }
    reports.push(BoundReport::worst_of("set discriminator", sets, DISCRIMINATORS * 2 * pairs));
    Ok(reports)
}

/// An encoding with 1–8 frequencies over 1–3 input dimensions and
/// `σ ∈ [0.5, 2]`.
pub fn random_encoding(rng: &mut Rng) -> Result<FourierEncoding> {
    use rand::Rng as _;
    let m = random_count(rng, 8);
    let d = random_count(rng, 3);
    let sigma = rng.gen_range(0.5..2.0);
    FourierEncoding::sample(m, d, sigma, rng.gen())
}

/// A small randomly initialized set discriminator on 2-D coordinates with
/// scalar features.
pub fn random_set_discriminator(rng: &mut Rng) -> Result<SetDiscriminator> {
    use rand::Rng as _;
    let ex = FourierEncoding::sample(random_count(rng, 6), 2, rng.gen_range(0.5..2.0), rng.gen())?;
    let ey = FourierEncoding::sample(random_count(rng, 4), 1, rng.gen_range(0.5..2.0), rng.gen())?;
    let input = ex.output_dim() + ey.output_dim();
    let p = 4 + random_count(rng, 12);
    SetDiscriminator::new(ex, ey, &[input, 16, p], &[p, 8, 1], rng.gen())
}

/// One line per report.
pub fn report_text(reports: &[BoundReport]) -> String {
    reports.iter().map(|r| format!("{r}\n")).collect()
}

/// `name,bound,empirical,samples,margin,pass` with a header row.
pub fn report_csv(reports: &[BoundReport]) -> String {
    let mut out = String::from("name,bound,empirical,samples,margin,pass\n");
    for r in reports {
        out.push_str(&format!(
            "{},{:e},{:e},{},{:e},{}\n",
            r.name, r.bound, r.empirical, r.samples, r.margin, r.pass
        ));
    }
    out
}
