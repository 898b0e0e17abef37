//! Seeded randomness.
//!
//! Everything random in the crate draws from ChaCha8, a counter-based
//! generator whose stream is identical on every platform. Gaussian draws
//! use Box–Muller so they do not depend on a distribution crate's
//! sampling algorithm.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Uniform in the open interval (0, 1).
fn open_unit(rng: &mut Rng) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

/// One standard normal draw (the cosine branch of Box–Muller).
pub fn standard_normal(rng: &mut Rng) -> f64 {
    let u1 = open_unit(rng);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn normal_vec(rng: &mut Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n).map(|_| std * standard_normal(rng)).collect()
}

pub fn uniform_vec(rng: &mut Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
}

/// Serializable position of a [`Rng`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> Rng {
        let mut rng = Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_round_trip_continues_stream() {
        let mut rng = seeded(3);
        for _ in 0..5 {
            standard_normal(&mut rng);
        }
        let state = RngState::capture(&rng);
        let expected: Vec<f64> = (0..10).map(|_| standard_normal(&mut rng)).collect();
        let mut restored = state.restore();
        let got: Vec<f64> = (0..10).map(|_| standard_normal(&mut restored)).collect();
        assert_eq!(expected, got);
    }

    #[test]
    fn normal_moments() {
        let mut rng = seeded(1);
        let xs = normal_vec(&mut rng, 20_000, 1.0);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
