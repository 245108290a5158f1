//! Hilbert-Schmidt-distributed random density matrices via the
//! fixed-trace Wishart construction rho = W / tr W, W = G G^dagger with G
//! an n x m complex Ginibre matrix.
//!
//! Reproducibility contract (part of the repo's compatibility surface):
//!
//! * RNG: ChaCha8, keyed by `seed_from_u64(seed)`, one stream per sample:
//!   sample index i draws from stream i via `set_stream(i)`.
//! * Gaussians: Box-Muller. Each complex entry consumes exactly two
//!   64-bit words, u1 then u2, mapped to doubles by taking the top 53
//!   bits; u1 is mapped into (0, 1] so the log never sees zero. The entry
//!   is (r cos(2 pi u2) + i r sin(2 pi u2)) / sqrt(2) with
//!   r = sqrt(-2 ln u1), i.e. real and imaginary parts each of variance
//!   1/2, E|g|^2 = 1, matching the exp(-tr W) ensemble weight.
//! * G is filled row by row, left to right. A pair draws rho_1 fully,
//!   then rho_2, from the same stream.
//!
//! Parallel generation partitions the sample index space, never a shared
//! stream, so results are bitwise independent of the worker count.

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{trace, CMatrix};
use crate::states::DensityMatrix;

/// Parameters of a single-ensemble run. m2 distinguishes the
/// two-random-state scenario, where the second state has its own m.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnsembleSpec {
    pub n: u32,
    pub m: u32,
    pub samples: u32,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn new(n: u32, m: u32, samples: u32, seed: u64) -> Result<Self> {
        if n == 0 || m < n {
            return Err(Error::parameter(format!(
                "ensemble requires 1 <= n <= m, got n = {n}, m = {m}"
            )));
        }
        if samples == 0 {
            return Err(Error::parameter("ensemble requires at least one sample"));
        }
        Ok(Self { n, m, samples, seed })
    }
}

/// The documented seed -> stream mapping: one ChaCha8 stream per sample.
pub fn rng_for_sample(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One standard complex Gaussian (E g = 0, E |g|^2 = 1) by Box-Muller;
/// consumes exactly two RNG words.
pub fn standard_complex_gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    let u1 = 1.0 - (rng.next_u64() >> 11) as f64 * 2f64.powi(-53);
    let u2 = (rng.next_u64() >> 11) as f64 * 2f64.powi(-53);
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (2.0 * std::f64::consts::TAU * u2).sin_cos();
    Complex64::new(r * c, r * s).scale(std::f64::consts::FRAC_1_SQRT_2)
}

/// W = G G^dagger with G an n x m standard complex Ginibre matrix:
/// Wishart-Laguerre with weight det(W)^{m-n} exp(-tr W), E W = m I.
pub fn sample_wishart(n: usize, m: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    assert!(n >= 1 && m >= n, "sampler requires 1 <= n <= m");
    let mut g = CMatrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            g[(i, j)] = standard_complex_gaussian(rng);
        }
    }
    let adj = g.adjoint();
    g * adj
}

/// rho = W / tr W: a Hilbert-Schmidt (m = n) or induced-measure draw.
pub fn sample_density(n: usize, m: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
    let w = sample_wishart(n, m, rng);
    let t = trace(&w).re;
    DensityMatrix::new(w.scale(1.0 / t))
        .expect("fixed-trace Wishart draw must be a valid state")
}

/// Two independent draws, rho_1 (n x m1 Ginibre) then rho_2 (n x m2),
/// from one stream.
pub fn sample_pair(
    n: usize,
    m1: usize,
    m2: usize,
    rng: &mut ChaCha8Rng,
) -> (DensityMatrix, DensityMatrix) {
    let r1 = sample_density(n, m1, rng);
    let r2 = sample_density(n, m2, rng);
    (r1, r2)
}

/// Maps `f` over sample indices 0..samples in parallel, each index on its
/// own RNG stream, collecting results in index order. The output is
/// bitwise independent of the rayon worker count.
pub fn par_map_samples<T, F>(samples: u32, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut ChaCha8Rng) -> T + Sync,
{
    (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for_sample(seed, i);
            f(i, &mut rng)
        })
        .collect()
}
