//! Monte Carlo comparison harness: ensemble means with error bars,
//! histogram-versus-curve goodness of fit, and the CSV/JSON figure
//! pipeline behind the CLI.
//!
//! Everything here is deterministic for a fixed seed: samples run on
//! per-index RNG streams, reductions happen in index order, and files
//! are assembled as complete strings before a single write, so repeated
//! runs emit byte-identical artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{
    density_chi, density_tau, density_tau_mixed, fidelity_pdf_pure, grid_density,
    mean_root_fidelity_fixed, mean_root_fidelity_mixed, mean_root_fidelity_pure,
    mean_root_fidelity_two_random, GridDensity, MeanFidelityResult, Scenario,
};
use crate::error::{Error, Result};
use crate::kickedtop::{coherent_state, evolve_ensemble, evolve_pair_ensemble, KickedTopConfig};
use crate::matrix::{eigh, CVector};
use crate::sampler::{par_map_samples, sample_density, sample_pair, EnsembleSpec};
use crate::states::{
    fidelity, fidelity_with_pure, symmetrized_product, DensityMatrix, FixedStateSpectrum,
};

/// Batch count for standard errors over kicked-top streams, which are
/// autocorrelated in time. Independent-sample ensembles use the plain
/// sample variance instead.
pub const KICKED_TOP_BATCHES: usize = 50;

// ---------------------------------------------------------------------
// Comparison reports
// ---------------------------------------------------------------------

/// One Monte-Carlo-versus-analytic comparison. Field order is the JSON
/// report contract; `m2` and `sigma_eigs` serialize as null when the
/// scenario does not use them, and `seed` is null for kicked-top runs,
/// which have no RNG.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub scenario: String,
    pub n: u32,
    pub m1: u32,
    pub m2: Option<u32>,
    pub sigma_eigs: Option<Vec<f64>>,
    pub samples: u32,
    pub seed: Option<u64>,
    pub mean_root_fidelity_mc: f64,
    pub mean_root_fidelity_mc_stderr: f64,
    pub mean_root_fidelity_analytic: f64,
    pub msbd_mc: f64,
    pub msbd_analytic: f64,
    pub percent_rel_diff: f64,
}

impl ComparisonReport {
    #[allow(clippy::too_many_arguments)]
    fn from_parts(
        scenario: Scenario,
        n: u32,
        m1: u32,
        m2: Option<u32>,
        sigma_eigs: Option<Vec<f64>>,
        samples: u32,
        seed: Option<u64>,
        mc_mean: f64,
        mc_stderr: f64,
        analytic: &MeanFidelityResult,
    ) -> Result<Self> {
        let msbd_analytic = analytic.mean_sq_bures;
        if msbd_analytic <= 0.0 {
            return Err(Error::parameter(
                "analytic mean square Bures distance is zero; the relative \
                 comparison needs n >= 2",
            ));
        }
        if samples >= 2 && !(mc_stderr > 0.0) {
            return Err(Error::consistency(
                "degenerate ensemble: standard error vanished over >= 2 samples",
            ));
        }
        let msbd_mc = 2.0 - 2.0 * mc_mean;
        Ok(Self {
            scenario: scenario.tag().to_string(),
            n,
            m1,
            m2,
            sigma_eigs,
            samples,
            seed,
            mean_root_fidelity_mc: mc_mean,
            mean_root_fidelity_mc_stderr: mc_stderr,
            mean_root_fidelity_analytic: analytic.mean_root_fidelity,
            msbd_mc,
            msbd_analytic,
            percent_rel_diff: 100.0 * (msbd_mc / msbd_analytic - 1.0).abs(),
        })
    }

    /// Standard error of the mean square Bures distance (twice the root
    /// fidelity standard error, since D^2 = 2 - 2<sqrt F>).
    pub fn msbd_stderr(&self) -> f64 {
        2.0 * self.mean_root_fidelity_mc_stderr
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::consistency(format!("report serialization failed: {e}")))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json_pretty()?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

/// Sample mean and standard error for independent draws.
pub fn mean_and_stderr(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.len() < 2 {
        return Err(Error::parameter(
            "standard error needs at least two samples",
        ));
    }
    let len = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / len;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (len - 1.0);
    Ok((mean, (var / len).sqrt()))
}

/// Mean and batch-means standard error for an autocorrelated stream.
/// The stream is cut into `batches` consecutive blocks of equal length
/// (a trailing remainder is dropped) and the spread of block means sets
/// the error bar.
pub fn batch_mean_stderr(xs: &[f64], batches: usize) -> Result<(f64, f64)> {
    if batches < 2 {
        return Err(Error::parameter("batch means need at least two batches"));
    }
    let block = xs.len() / batches;
    if block == 0 {
        return Err(Error::parameter(format!(
            "stream of {} samples cannot fill {batches} batches",
            xs.len()
        )));
    }
    let used = block * batches;
    let mean = xs[..used].iter().sum::<f64>() / used as f64;
    let mut var = 0.0;
    for b in 0..batches {
        let bm = xs[b * block..(b + 1) * block].iter().sum::<f64>() / block as f64;
        var += (bm - mean) * (bm - mean);
    }
    var /= (batches - 1) as f64;
    Ok((mean, (var / batches as f64).sqrt()))
}

// ---------------------------------------------------------------------
// Scenario plumbing
// ---------------------------------------------------------------------

fn check_scenario_args(
    scenario: Scenario,
    n: usize,
    sigma: Option<&FixedStateSpectrum>,
    m2: Option<u32>,
) -> Result<()> {
    match scenario {
        Scenario::FixedSigma => {
            let sig = sigma.ok_or_else(|| {
                Error::parameter("fixed-sigma scenario requires sigma eigenvalues")
            })?;
            if sig.dim() != n {
                return Err(Error::parameter(format!(
                    "sigma has {} eigenvalues but n = {n}",
                    sig.dim()
                )));
            }
        }
        _ => {
            if sigma.is_some() {
                return Err(Error::parameter(format!(
                    "sigma eigenvalues only apply to the fixed scenario, not {scenario}"
                )));
            }
        }
    }
    match scenario {
        Scenario::TwoRandom => {
            if m2.is_none() {
                return Err(Error::parameter("two-random scenario requires m2"));
            }
        }
        _ => {
            if m2.is_some() {
                return Err(Error::parameter(format!(
                    "m2 only applies to the two-random scenario, not {scenario}"
                )));
            }
        }
    }
    Ok(())
}

fn analytic_mean(
    scenario: Scenario,
    sigma: Option<&FixedStateSpectrum>,
    n: usize,
    m: usize,
    m2: Option<u32>,
) -> Result<MeanFidelityResult> {
    match scenario {
        Scenario::FixedSigma => mean_root_fidelity_fixed(sigma.unwrap(), n, m),
        Scenario::PureSigma => mean_root_fidelity_pure(n, m),
        Scenario::MaximallyMixedSigma => mean_root_fidelity_mixed(n, m),
        Scenario::TwoRandom => mean_root_fidelity_two_random(n, m, m2.unwrap() as usize),
    }
}

/// The analytic density and its support for a scenario, as a closure
/// over the abscissa. For the pure scenario the density is over the
/// fidelity itself; the other three are generic-eigenvalue densities.
fn scenario_curve<'a>(
    scenario: Scenario,
    n: usize,
    m: usize,
    m2: Option<u32>,
    sigma: Option<&'a FixedStateSpectrum>,
) -> Result<(Box<dyn Fn(f64) -> Result<f64> + Sync + 'a>, (f64, f64))> {
    check_scenario_args(scenario, n, sigma, m2)?;
    Ok(match scenario {
        Scenario::FixedSigma => {
            let sig = sigma.unwrap();
            let hi = sig.eigs().iter().cloned().fold(0.0, f64::max);
            (
                Box::new(move |x| density_tau(sig, n, m, x)) as Box<_>,
                (0.0, hi),
            )
        }
        Scenario::PureSigma => (
            Box::new(move |x| fidelity_pdf_pure(n, m, x)) as Box<_>,
            (0.0, 1.0),
        ),
        Scenario::MaximallyMixedSigma => (
            Box::new(move |x| density_tau_mixed(n, m, x)) as Box<_>,
            (0.0, 1.0 / n as f64),
        ),
        Scenario::TwoRandom => {
            let m2 = m2.unwrap() as usize;
            (
                Box::new(move |x| density_chi(n, m, m2, x)) as Box<_>,
                (0.0, 1.0),
            )
        }
    })
}

fn basis_state(n: usize) -> CVector {
    let mut psi = CVector::zeros(n);
    psi[0] = num_complex::Complex64::new(1.0, 0.0);
    psi
}

fn collect_flat(chunks: Vec<Result<Vec<f64>>>) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Root fidelities sqrt(F) of each ensemble member against the scenario's
/// reference state (or between paired draws for two-random).
fn mc_root_fidelities(
    spec: &EnsembleSpec,
    scenario: Scenario,
    sigma: Option<&FixedStateSpectrum>,
    m2: Option<u32>,
) -> Result<Vec<f64>> {
    check_scenario_args(scenario, spec.n as usize, sigma, m2)?;
    let n = spec.n as usize;
    let m = spec.m as usize;
    let draws: Vec<Result<f64>> = match scenario {
        Scenario::FixedSigma => {
            let sig = DensityMatrix::from_spectrum(sigma.unwrap());
            par_map_samples(spec.samples, spec.seed, |_, rng| {
                let rho = sample_density(n, m, rng);
                fidelity(&sig, &rho).map(f64::sqrt)
            })
        }
        Scenario::PureSigma => {
            let psi = basis_state(n);
            par_map_samples(spec.samples, spec.seed, |_, rng| {
                let rho = sample_density(n, m, rng);
                fidelity_with_pure(&rho, &psi).map(f64::sqrt)
            })
        }
        Scenario::MaximallyMixedSigma => {
            let mm = DensityMatrix::maximally_mixed(n);
            par_map_samples(spec.samples, spec.seed, |_, rng| {
                let rho = sample_density(n, m, rng);
                fidelity(&mm, &rho).map(f64::sqrt)
            })
        }
        Scenario::TwoRandom => {
            let m2 = m2.unwrap() as usize;
            par_map_samples(spec.samples, spec.seed, |_, rng| {
                let (r1, r2) = sample_pair(n, m, m2, rng);
                fidelity(&r1, &r2).map(f64::sqrt)
            })
        }
    };
    draws.into_iter().collect()
}

/// Monte Carlo mean square Bures distance against the matching analytic
/// value. `sigma` is required exactly for the fixed scenario, `m2`
/// exactly for two-random.
pub fn mc_mean_bures(
    spec: &EnsembleSpec,
    scenario: Scenario,
    sigma: Option<&FixedStateSpectrum>,
    m2: Option<u32>,
) -> Result<ComparisonReport> {
    check_scenario_args(scenario, spec.n as usize, sigma, m2)?;
    let analytic = analytic_mean(
        scenario,
        sigma,
        spec.n as usize,
        spec.m as usize,
        m2,
    )?;
    let roots = mc_root_fidelities(spec, scenario, sigma, m2)?;
    let (mean, stderr) = mean_and_stderr(&roots)?;
    ComparisonReport::from_parts(
        scenario,
        spec.n,
        spec.m,
        m2,
        sigma.map(|s| s.eigs().to_vec()),
        spec.samples,
        Some(spec.seed),
        mean,
        stderr,
        &analytic,
    )
}

// ---------------------------------------------------------------------
// Histograms
// ---------------------------------------------------------------------

/// A pooled-sample histogram over uniform bins spanning the analytic
/// support, with the analytic curve sampled at bin centers. Densities
/// are count/(N * width), so they integrate to one by construction.
///
/// `curve_bin_mean` holds the curve averaged over each bin (5-point
/// Gauss-Legendre); that is what the empirical density actually
/// estimates, so the Poisson goodness-of-fit compares against it
/// rather than the center samples, which carry a curvature bias on
/// sharp densities. Curve values are clipped at zero: analytic tails
/// can evaluate to roundoff-scale negatives.
#[derive(Debug, Clone, Serialize)]
pub struct HistogramData {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
    pub curve: Vec<f64>,
    pub curve_bin_mean: Vec<f64>,
    pub pooled: u64,
}

impl HistogramData {
    pub fn bins(&self) -> usize {
        self.density.len()
    }

    pub fn width(&self) -> f64 {
        (self.edges[self.edges.len() - 1] - self.edges[0]) / self.bins() as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        let w = self.width();
        (0..self.bins())
            .map(|b| self.edges[0] + (b as f64 + 0.5) * w)
            .collect()
    }

    pub fn normalization(&self) -> f64 {
        let w = self.width();
        self.density.iter().map(|d| d * w).sum()
    }

    /// Per-bin Poisson standard error of the density estimate,
    /// sqrt(count)/(N * width).
    pub fn density_stderr(&self) -> Vec<f64> {
        let w = self.width();
        let norm = self.pooled as f64 * w;
        self.density
            .iter()
            .map(|d| (d * norm).round().sqrt() / norm)
            .collect()
    }

    /// Counts bins whose density lies within `k` Poisson standard
    /// deviations of the bin-averaged curve, with sigma_b =
    /// sqrt(curve_mean_b / (N * width)). Returns (within, total).
    pub fn poisson_within(&self, k: f64) -> (usize, usize) {
        let w = self.width();
        let norm = self.pooled as f64 * w;
        let mut within = 0;
        for (d, c) in self.density.iter().zip(&self.curve_bin_mean) {
            let sigma = (c / norm).sqrt();
            if (d - c).abs() <= k * sigma {
                within += 1;
            }
        }
        (within, self.bins())
    }
}

/// Bins `values` into `bins` uniform cells over `support` and samples
/// `curve_fn` at the bin centers. Values may stray outside the support
/// by at most 1e-9 of its width (eigensolver roundoff); anything beyond
/// is a consistency failure.
pub fn histogram_from_values<F>(
    values: &[f64],
    support: (f64, f64),
    bins: usize,
    curve_fn: &F,
) -> Result<HistogramData>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    if bins < 10 {
        return Err(Error::parameter(format!(
            "histogram needs at least 10 bins, got {bins}"
        )));
    }
    let (lo, hi) = support;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::parameter(format!(
            "invalid histogram support ({lo}, {hi})"
        )));
    }
    if values.is_empty() {
        return Err(Error::parameter("histogram needs at least one value"));
    }
    let width = (hi - lo) / bins as f64;
    let slack = 1e-9 * (hi - lo);
    let mut counts = vec![0u64; bins];
    for &v in values {
        if v < lo - slack || v > hi + slack {
            return Err(Error::consistency(format!(
                "sample {v:e} lies outside the analytic support ({lo:e}, {hi:e})"
            )));
        }
        let idx = (((v - lo) / width) as isize).clamp(0, bins as isize - 1) as usize;
        counts[idx] += 1;
    }
    let pooled = values.len() as u64;
    let density: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / (pooled as f64 * width))
        .collect();
    let edges: Vec<f64> = (0..=bins)
        .map(|b| {
            if b == bins {
                hi
            } else {
                lo + b as f64 * width
            }
        })
        .collect();
    let centers: Vec<f64> = (0..bins).map(|b| lo + (b as f64 + 0.5) * width).collect();
    let curve = centers
        .par_iter()
        .map(|&x| curve_fn(x).map(|v| v.max(0.0)))
        .collect::<Result<Vec<f64>>>()?;
    // 5-point Gauss-Legendre nodes/weights on (-1, 1), weights summing to 2.
    const GL5: [(f64, f64); 5] = [
        (-0.906179845938664, 0.23692688505618908),
        (-0.5384693101056831, 0.47862867049936647),
        (0.0, 0.5688888888888889),
        (0.5384693101056831, 0.47862867049936647),
        (0.906179845938664, 0.23692688505618908),
    ];
    let curve_bin_mean = centers
        .par_iter()
        .map(|&c| {
            let mut acc = 0.0;
            for (node, weight) in GL5 {
                acc += weight * curve_fn(c + 0.5 * width * node)?.max(0.0);
            }
            Ok(0.5 * acc)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(HistogramData {
        edges,
        density,
        curve,
        curve_bin_mean,
        pooled,
    })
}

/// Pooled per-sample observables for a scenario: eigenvalues of tau or
/// chi (n per sample), or the scalar fidelity for the pure scenario.
fn pooled_values(
    spec: &EnsembleSpec,
    scenario: Scenario,
    sigma: Option<&FixedStateSpectrum>,
    m2: Option<u32>,
) -> Result<Vec<f64>> {
    let n = spec.n as usize;
    let m = spec.m as usize;
    match scenario {
        Scenario::FixedSigma => {
            let sig = DensityMatrix::from_spectrum(sigma.unwrap());
            collect_flat(par_map_samples(spec.samples, spec.seed, |_, rng| {
                let rho = sample_density(n, m, rng);
                let tau = symmetrized_product(&sig, &rho)?;
                Ok(eigh(&tau)?.0)
            }))
        }
        Scenario::PureSigma => {
            let psi = basis_state(n);
            collect_flat(par_map_samples(spec.samples, spec.seed, |_, rng| {
                let rho = sample_density(n, m, rng);
                Ok(vec![fidelity_with_pure(&rho, &psi)?])
            }))
        }
        Scenario::MaximallyMixedSigma => {
            collect_flat(par_map_samples(spec.samples, spec.seed, |_, rng| {
                let rho = sample_density(n, m, rng);
                Ok(rho.eigenvalues().iter().map(|l| l / n as f64).collect())
            }))
        }
        Scenario::TwoRandom => {
            let m2 = m2.unwrap() as usize;
            collect_flat(par_map_samples(spec.samples, spec.seed, |_, rng| {
                let (r1, r2) = sample_pair(n, m, m2, rng);
                let chi = symmetrized_product(&r1, &r2)?;
                Ok(eigh(&chi)?.0)
            }))
        }
    }
}

/// Histogram of pooled tau/chi eigenvalues (or pure-state fidelities)
/// over the analytic support, against the analytic curve at bin centers.
pub fn mc_histogram(
    spec: &EnsembleSpec,
    scenario: Scenario,
    bins: usize,
    sigma: Option<&FixedStateSpectrum>,
    m2: Option<u32>,
) -> Result<HistogramData> {
    let (curve, support) = scenario_curve(scenario, spec.n as usize, spec.m as usize, m2, sigma)?;
    let values = pooled_values(spec, scenario, sigma, m2)?;
    histogram_from_values(&values, support, bins, &curve)
}

// ---------------------------------------------------------------------
// Kicked-top comparisons
// ---------------------------------------------------------------------

/// Root fidelities of a kicked-top reduced-state stream against the
/// scenario's fixed reference. The pure reference is the initial spin
/// coherent state of the first top.
fn kicked_root_fidelities(
    config: &KickedTopConfig,
    scenario: Scenario,
    sigma: Option<&FixedStateSpectrum>,
) -> Result<Vec<f64>> {
    let (n, _) = config.dims()?;
    check_scenario_args(scenario, n, sigma, None)?;
    let states = evolve_ensemble(config)?;
    let draws: Vec<Result<f64>> = match scenario {
        Scenario::FixedSigma => {
            let sig = DensityMatrix::from_spectrum(sigma.unwrap());
            states
                .par_iter()
                .map(|rho| fidelity(&sig, rho).map(f64::sqrt))
                .collect()
        }
        Scenario::PureSigma => {
            let psi = coherent_state(config.j1, config.theta1, config.phi1)?;
            states
                .par_iter()
                .map(|rho| fidelity_with_pure(rho, &psi).map(f64::sqrt))
                .collect()
        }
        Scenario::MaximallyMixedSigma => {
            let mm = DensityMatrix::maximally_mixed(n);
            states
                .par_iter()
                .map(|rho| fidelity(&mm, rho).map(f64::sqrt))
                .collect()
        }
        Scenario::TwoRandom => {
            return Err(Error::parameter(
                "two-random comparisons pair two tops; use kicked_top_pair_mean_bures",
            ))
        }
    };
    draws.into_iter().collect()
}

/// Kicked-top mean square Bures distance against the RMT prediction for
/// the matching (n, m) = (2 j1 + 1, 2 j2 + 1). Standard errors use batch
/// means over the time stream.
pub fn kicked_top_mean_bures(
    config: &KickedTopConfig,
    scenario: Scenario,
    sigma: Option<&FixedStateSpectrum>,
) -> Result<ComparisonReport> {
    let (n, m) = config.dims()?;
    if n > m {
        return Err(Error::parameter(format!(
            "RMT comparison requires n <= m, got ({n}, {m}); choose j1 <= j2"
        )));
    }
    if scenario == Scenario::TwoRandom {
        return Err(Error::parameter(
            "two-random comparisons pair two tops; use kicked_top_pair_mean_bures",
        ));
    }
    check_scenario_args(scenario, n, sigma, None)?;
    let analytic = analytic_mean(scenario, sigma, n, m, None)?;
    let roots = kicked_root_fidelities(config, scenario, sigma)?;
    let (mean, stderr) = batch_mean_stderr(&roots, KICKED_TOP_BATCHES)?;
    ComparisonReport::from_parts(
        scenario,
        n as u32,
        m as u32,
        None,
        sigma.map(|s| s.eigs().to_vec()),
        config.samples as u32,
        None,
        mean,
        stderr,
        &analytic,
    )
}

/// Mean square Bures distance between reduced states of two independent
/// coupled-kicked-top systems sharing j1, against the two-random RMT
/// prediction for (n, m1, m2).
pub fn kicked_top_pair_mean_bures(
    config_a: &KickedTopConfig,
    config_b: &KickedTopConfig,
) -> Result<ComparisonReport> {
    let (n, m1) = config_a.dims()?;
    let (_, m2) = config_b.dims()?;
    if n > m1 || n > m2 {
        return Err(Error::parameter(format!(
            "RMT comparison requires n <= m1 and n <= m2, got ({n}, {m1}, {m2})"
        )));
    }
    let analytic = mean_root_fidelity_two_random(n, m1, m2)?;
    let pairs = evolve_pair_ensemble(config_a, config_b)?;
    let roots = pairs
        .par_iter()
        .map(|(a, b)| fidelity(a, b).map(f64::sqrt))
        .collect::<Vec<Result<f64>>>()
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let (mean, stderr) = batch_mean_stderr(&roots, KICKED_TOP_BATCHES)?;
    ComparisonReport::from_parts(
        Scenario::TwoRandom,
        n as u32,
        m1 as u32,
        Some(m2 as u32),
        None,
        config_a.samples as u32,
        None,
        mean,
        stderr,
        &analytic,
    )
}

/// Pooled chi eigenvalues from paired kicked-top reduced states.
fn kicked_pair_chi_values(
    config_a: &KickedTopConfig,
    config_b: &KickedTopConfig,
) -> Result<Vec<f64>> {
    let pairs = evolve_pair_ensemble(config_a, config_b)?;
    collect_flat(
        pairs
            .par_iter()
            .map(|(a, b)| {
                let chi = symmetrized_product(a, b)?;
                Ok(eigh(&chi)?.0)
            })
            .collect(),
    )
}

// ---------------------------------------------------------------------
// CSV and numeric formatting
// ---------------------------------------------------------------------

/// 15 significant digits, the CSV number format.
fn fmt15(x: f64) -> String {
    format!("{x:.14e}")
}

/// Writes the density CSV contract: `x,analytic_pdf[,mc_density,mc_stderr]`.
pub fn write_density_csv(
    path: &Path,
    xs: &[f64],
    analytic: &[f64],
    mc: Option<(&[f64], &[f64])>,
) -> Result<()> {
    let mut out = String::new();
    match mc {
        Some(_) => out.push_str("x,analytic_pdf,mc_density,mc_stderr\n"),
        None => out.push_str("x,analytic_pdf\n"),
    }
    for (i, (&x, &a)) in xs.iter().zip(analytic).enumerate() {
        out.push_str(&fmt15(x));
        out.push(',');
        out.push_str(&fmt15(a));
        if let Some((d, s)) = mc {
            out.push(',');
            out.push_str(&fmt15(d[i]));
            out.push(',');
            out.push_str(&fmt15(s[i]));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Trapezoid first moment of a tabulated density, with the same
/// boundary-cap convention as the GridDensity integral.
pub fn grid_first_moment(grid: &GridDensity) -> f64 {
    let xs = &grid.abscissae;
    let ys = &grid.values;
    let (lo, hi) = grid.support;
    let last = xs.len() - 1;
    let mut t = xs[0] * ys[0] * (xs[0] - lo) + xs[last] * ys[last] * (hi - xs[last]);
    for k in 0..last {
        t += 0.5 * (xs[k] * ys[k] + xs[k + 1] * ys[k + 1]) * (xs[k + 1] - xs[k]);
    }
    t
}

// ---------------------------------------------------------------------
// Figure pipeline
// ---------------------------------------------------------------------

/// Stochasticity/coupling sets (kappa1, kappa2, epsilon) used by the
/// single-system kicked-top sweeps.
pub const CKT_SETS: [(f64, f64, f64); 3] = [(7.0, 8.0, 1.0), (6.0, 7.0, 0.75), (7.0, 9.0, 0.5)];

/// Parameter sets for paired kicked-top runs: ((kappa1, kappa2, eps) for
/// system A, same for system B).
pub const CKTP_SETS: [((f64, f64, f64), (f64, f64, f64)); 3] = [
    ((8.0, 7.0, 0.5), (7.0, 8.0, 1.0)),
    ((6.0, 7.0, 0.8), (6.0, 8.0, 0.75)),
    ((7.0, 8.0, 0.75), (8.0, 7.0, 0.75)),
];

/// m values of the single-system kicked-top sweeps (n = 25).
pub const KICKED_SWEEP_M: [u32; 4] = [25, 35, 45, 55];

/// (m1, m2) pairs of the paired kicked-top sweep (n = 25).
pub const KICKED_PAIR_GRID: [(u32, u32); 4] = [(25, 27), (29, 33), (35, 41), (45, 51)];

/// The fixed sigma spectrum used by the n = 5 fixed-scenario panels.
pub const FIG_SIGMA_5: [f64; 5] = [0.09, 0.12, 0.21, 0.28, 0.30];

const FIG_SIGMA_3: [f64; 3] = [0.15, 0.33, 0.52];
const FIG_SIGMA_4: [f64; 4] = [0.07, 0.17, 0.35, 0.41];

/// Parameters of one histogram-versus-curve density panel.
#[derive(Debug, Clone, Copy)]
pub struct DensityPanelSpec {
    pub id: &'static str,
    pub scenario: Scenario,
    pub n: u32,
    pub m: u32,
    pub m2: Option<u32>,
    pub sigma: Option<&'static [f64]>,
}

/// The spectral-density panels with plain Monte Carlo ensembles
/// (everything except the kicked-top figures).
pub fn density_panels() -> [DensityPanelSpec; 8] {
    [
        DensityPanelSpec {
            id: "fig1a",
            scenario: Scenario::FixedSigma,
            n: 3,
            m: 8,
            m2: None,
            sigma: Some(&FIG_SIGMA_3),
        },
        DensityPanelSpec {
            id: "fig1b",
            scenario: Scenario::FixedSigma,
            n: 4,
            m: 9,
            m2: None,
            sigma: Some(&FIG_SIGMA_4),
        },
        DensityPanelSpec {
            id: "fig1c",
            scenario: Scenario::FixedSigma,
            n: 5,
            m: 10,
            m2: None,
            sigma: Some(&FIG_SIGMA_5),
        },
        DensityPanelSpec {
            id: "fig2a",
            scenario: Scenario::PureSigma,
            n: 5,
            m: 6,
            m2: None,
            sigma: None,
        },
        DensityPanelSpec {
            id: "fig2b",
            scenario: Scenario::MaximallyMixedSigma,
            n: 5,
            m: 6,
            m2: None,
            sigma: None,
        },
        DensityPanelSpec {
            id: "fig4a",
            scenario: Scenario::TwoRandom,
            n: 3,
            m: 6,
            m2: Some(7),
            sigma: None,
        },
        DensityPanelSpec {
            id: "fig4b",
            scenario: Scenario::TwoRandom,
            n: 4,
            m: 5,
            m2: Some(8),
            sigma: None,
        },
        DensityPanelSpec {
            id: "fig4c",
            scenario: Scenario::TwoRandom,
            n: 5,
            m: 8,
            m2: Some(10),
            sigma: None,
        },
    ]
}

/// Figure-runner options. `samples` overrides each panel's default
/// ensemble size (pooled-eigenvalue panels default to 1e5 pooled values,
/// mean sweeps to 2e4 samples per point, kicked-top runs to 5000).
#[derive(Debug, Clone)]
pub struct FigureOptions {
    pub samples: Option<u32>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for FigureOptions {
    fn default() -> Self {
        Self {
            samples: None,
            seed: 77001,
            out_dir: PathBuf::from("figures"),
        }
    }
}

/// Files written by a figure run plus human-readable check notes.
#[derive(Debug, Default)]
pub struct FigureOutput {
    pub files: Vec<PathBuf>,
    pub notes: Vec<String>,
}

impl FigureOutput {
    fn merge(&mut self, other: FigureOutput) {
        self.files.extend(other.files);
        self.notes.extend(other.notes);
    }
}

/// All recognized figure ids: each panel, plus whole-figure aliases that
/// run every panel of that figure.
pub fn figure_ids() -> &'static [&'static str] {
    &[
        "fig1", "fig1a", "fig1b", "fig1c", "fig2", "fig2a", "fig2b", "fig3", "fig3a", "fig3b",
        "fig3c", "fig4", "fig4a", "fig4b", "fig4c", "fig5", "fig5a", "fig5b", "fig6", "fig6a",
        "fig6b", "fig7", "fig8", "fig9", "fig10",
    ]
}

#[derive(Serialize)]
struct PanelMeta {
    id: String,
    version: &'static str,
    scenario: String,
    n: u32,
    m1: u32,
    m2: Option<u32>,
    sigma_eigs: Option<Vec<f64>>,
    samples: u32,
    seed: Option<u64>,
    bins: Option<usize>,
    pooled: Option<u64>,
    histogram_normalization: Option<f64>,
    poisson_within_4sigma: Option<usize>,
    poisson_bins: Option<usize>,
    grid_points: Option<usize>,
    grid_integral: Option<f64>,
    grid_first_moment: Option<f64>,
    grid_warning: Option<String>,
}

impl PanelMeta {
    fn bare(id: &str, scenario: Scenario, n: u32, m1: u32) -> Self {
        Self {
            id: id.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            scenario: scenario.tag().to_string(),
            n,
            m1,
            m2: None,
            sigma_eigs: None,
            samples: 0,
            seed: None,
            bins: None,
            pooled: None,
            histogram_normalization: None,
            poisson_within_4sigma: None,
            poisson_bins: None,
            grid_points: None,
            grid_integral: None,
            grid_first_moment: None,
            grid_warning: None,
        }
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::consistency(format!("meta serialization failed: {e}")))?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

/// Runs one figure (or one panel) and writes its CSV/JSON files under
/// `opts.out_dir`. Any internal normalization or consistency check that
/// fails turns into a consistency error after all files are written.
pub fn run_figure(id: &str, opts: &FigureOptions) -> Result<FigureOutput> {
    fs::create_dir_all(&opts.out_dir)?;
    let id = id.to_ascii_lowercase();
    match id.as_str() {
        "fig1" => run_alias(&["fig1a", "fig1b", "fig1c"], opts),
        "fig2" => run_alias(&["fig2a", "fig2b"], opts),
        "fig3" => run_alias(&["fig3a", "fig3b", "fig3c"], opts),
        "fig4" => run_alias(&["fig4a", "fig4b", "fig4c"], opts),
        "fig5" => run_alias(&["fig5a", "fig5b"], opts),
        "fig6" => run_alias(&["fig6a", "fig6b"], opts),
        "fig1a" | "fig1b" | "fig1c" | "fig2a" | "fig2b" | "fig4a" | "fig4b" | "fig4c" => {
            let spec = density_panels()
                .into_iter()
                .find(|p| p.id == id)
                .expect("panel table covers the id list");
            run_density_panel(&spec, opts)
        }
        "fig3a" => run_mc_sweep("fig3a", Scenario::PureSigma, None, opts),
        "fig3b" => run_mc_sweep("fig3b", Scenario::MaximallyMixedSigma, None, opts),
        "fig3c" => run_mc_sweep("fig3c", Scenario::FixedSigma, Some(&FIG_SIGMA_5), opts),
        "fig5a" => run_two_random_grid("fig5a", 2, opts),
        "fig5b" => run_two_random_grid("fig5b", 5, opts),
        "fig6a" => run_kicked_density("fig6a", Scenario::PureSigma, 22.0, 600, opts),
        "fig6b" => run_kicked_density("fig6b", Scenario::MaximallyMixedSigma, 17.0, 60, opts),
        "fig7" => run_kicked_sweep("fig7", Scenario::PureSigma, opts),
        "fig8" => run_kicked_sweep("fig8", Scenario::MaximallyMixedSigma, opts),
        "fig9" => run_kicked_pair_density("fig9", opts),
        "fig10" => run_kicked_pair_sweep("fig10", opts),
        other => Err(Error::parameter(format!(
            "unknown figure id {other:?}; known ids: {}",
            figure_ids().join(", ")
        ))),
    }
}

fn run_alias(panels: &[&str], opts: &FigureOptions) -> Result<FigureOutput> {
    let mut out = FigureOutput::default();
    for p in panels {
        out.merge(run_figure(p, opts)?);
    }
    Ok(out)
}

fn fail_on(failures: Vec<String>, out: FigureOutput) -> Result<FigureOutput> {
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(Error::consistency(failures.join("; ")))
    }
}

/// Density panel: 60-bin histogram CSV at bin centers, a fine analytic
/// grid CSV, and a provenance meta JSON. Checks: histogram normalization,
/// analytic-grid normalization within 1e-5, and the first moment of the
/// density (trace moment for eigenvalue densities) at 1/n within 1e-5.
fn run_density_panel(panel: &DensityPanelSpec, opts: &FigureOptions) -> Result<FigureOutput> {
    let n = panel.n as usize;
    let per_sample = if panel.scenario == Scenario::PureSigma {
        1
    } else {
        n
    };
    let samples = opts
        .samples
        .unwrap_or_else(|| (100_000usize.div_ceil(per_sample)) as u32);
    let sigma_spec = panel
        .sigma
        .map(|e| FixedStateSpectrum::new(e.to_vec()))
        .transpose()?;
    let espec = EnsembleSpec::new(panel.n, panel.m, samples, opts.seed)?;
    let hist = mc_histogram(&espec, panel.scenario, 60, sigma_spec.as_ref(), panel.m2)?;
    let (curve_fn, support) = scenario_curve(
        panel.scenario,
        n,
        panel.m as usize,
        panel.m2,
        sigma_spec.as_ref(),
    )?;
    let grid_points = if panel.scenario == Scenario::TwoRandom {
        384
    } else {
        512
    };
    let grid = grid_density(&curve_fn, grid_points, support)?;

    let mut files = Vec::new();
    let mut notes = Vec::new();
    let mut failures = Vec::new();

    let csv = opts.out_dir.join(format!("{}.csv", panel.id));
    let stderr = hist.density_stderr();
    write_density_csv(
        &csv,
        &hist.centers(),
        &hist.curve,
        Some((&hist.density, &stderr)),
    )?;
    files.push(csv);

    let grid_csv = opts.out_dir.join(format!("{}_grid.csv", panel.id));
    write_density_csv(&grid_csv, &grid.abscissae, &grid.values, None)?;
    files.push(grid_csv);

    let norm = hist.normalization();
    if (norm - 1.0).abs() > 1e-9 {
        failures.push(format!(
            "{}: histogram normalization {norm} drifted from 1",
            panel.id
        ));
    }
    if let Some(w) = &grid.normalization_warning {
        failures.push(format!("{}: {w}", panel.id));
    }
    let moment = grid_first_moment(&grid);
    let trace_moment = if panel.scenario == Scenario::PureSigma {
        moment
    } else {
        n as f64 * moment
    };
    let target = 1.0 / n as f64;
    if (trace_moment - target).abs() > 1e-5 {
        failures.push(format!(
            "{}: first moment {trace_moment} misses 1/n = {target}",
            panel.id
        ));
    }
    let (within, total) = hist.poisson_within(4.0);
    notes.push(format!(
        "{}: {within}/{total} bins within 4 Poisson sigma, curve integral {:.6}, trace moment {:.6}",
        panel.id, grid.integral, trace_moment
    ));

    let mut meta = PanelMeta::bare(panel.id, panel.scenario, panel.n, panel.m);
    meta.m2 = panel.m2;
    meta.sigma_eigs = panel.sigma.map(|e| e.to_vec());
    meta.samples = samples;
    meta.seed = Some(opts.seed);
    meta.bins = Some(hist.bins());
    meta.pooled = Some(hist.pooled);
    meta.histogram_normalization = Some(norm);
    meta.poisson_within_4sigma = Some(within);
    meta.poisson_bins = Some(total);
    meta.grid_points = Some(grid.abscissae.len());
    meta.grid_integral = Some(grid.integral);
    meta.grid_first_moment = Some(moment);
    meta.grid_warning = grid.normalization_warning.clone();
    let meta_path = opts.out_dir.join(format!("{}_meta.json", panel.id));
    meta.write(&meta_path)?;
    files.push(meta_path);

    fail_on(failures, FigureOutput { files, notes })
}

/// Mean sweep over m = 5..10 at n = 5 with independent Monte Carlo
/// ensembles: summary CSV plus one report JSON per point. A point whose
/// MC mean drifts more than 8 standard errors from the analytic value is
/// flagged as a consistency failure.
fn run_mc_sweep(
    id: &str,
    scenario: Scenario,
    sigma: Option<&[f64]>,
    opts: &FigureOptions,
) -> Result<FigureOutput> {
    let samples = opts.samples.unwrap_or(20_000);
    let sigma_spec = sigma
        .map(|e| FixedStateSpectrum::new(e.to_vec()))
        .transpose()?;
    let mut files = Vec::new();
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    let mut csv = String::from("m,analytic_msbd,mc_msbd,mc_stderr_msbd,percent_rel_diff\n");
    for (idx, m) in (5u32..=10).enumerate() {
        let espec = EnsembleSpec::new(5, m, samples, opts.seed.wrapping_add(idx as u64))?;
        let report = mc_mean_bures(&espec, scenario, sigma_spec.as_ref(), None)?;
        csv.push_str(&format!(
            "{m},{},{},{},{}\n",
            fmt15(report.msbd_analytic),
            fmt15(report.msbd_mc),
            fmt15(report.msbd_stderr()),
            fmt15(report.percent_rel_diff),
        ));
        let gap = (report.msbd_mc - report.msbd_analytic).abs();
        if gap > 8.0 * report.msbd_stderr() {
            failures.push(format!(
                "{id} m={m}: MC mean square Bures distance sits {:.1} standard errors from analytic",
                gap / report.msbd_stderr()
            ));
        }
        notes.push(format!(
            "{id} m={m}: rel diff {:.3}%",
            report.percent_rel_diff
        ));
        let path = opts.out_dir.join(format!("{id}_m{m}.json"));
        report.write_json(&path)?;
        files.push(path);
    }
    let csv_path = opts.out_dir.join(format!("{id}.csv"));
    fs::write(&csv_path, csv)?;
    files.push(csv_path);

    let mut meta = PanelMeta::bare(id, scenario, 5, 0);
    meta.sigma_eigs = sigma.map(|e| e.to_vec());
    meta.samples = samples;
    meta.seed = Some(opts.seed);
    let meta_path = opts.out_dir.join(format!("{id}_meta.json"));
    meta.write(&meta_path)?;
    files.push(meta_path);

    fail_on(failures, FigureOutput { files, notes })
}

/// Two-random D_B^2 over an (m1, m2) grid: analytic value, MC value and
/// error bar per point, all in one CSV.
fn run_two_random_grid(id: &str, n: u32, opts: &FigureOptions) -> Result<FigureOutput> {
    let samples = opts.samples.unwrap_or(20_000);
    let mut files = Vec::new();
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    let mut csv = String::from("m1,m2,analytic_msbd,mc_msbd,mc_stderr_msbd,percent_rel_diff\n");
    let mut idx = 0u64;
    for m1 in n..n + 6 {
        for m2 in n..n + 6 {
            let espec = EnsembleSpec::new(n, m1, samples, opts.seed.wrapping_add(idx))?;
            idx += 1;
            let report = mc_mean_bures(&espec, Scenario::TwoRandom, None, Some(m2))?;
            csv.push_str(&format!(
                "{m1},{m2},{},{},{},{}\n",
                fmt15(report.msbd_analytic),
                fmt15(report.msbd_mc),
                fmt15(report.msbd_stderr()),
                fmt15(report.percent_rel_diff),
            ));
            let gap = (report.msbd_mc - report.msbd_analytic).abs();
            if gap > 8.0 * report.msbd_stderr() {
                failures.push(format!(
                    "{id} ({m1},{m2}): MC mean sits {:.1} standard errors out",
                    gap / report.msbd_stderr()
                ));
            }
        }
    }
    notes.push(format!("{id}: {} grid points at n={n}", idx));
    let csv_path = opts.out_dir.join(format!("{id}.csv"));
    fs::write(&csv_path, csv)?;
    files.push(csv_path);

    let mut meta = PanelMeta::bare(id, Scenario::TwoRandom, n, 0);
    meta.samples = samples;
    meta.seed = Some(opts.seed);
    let meta_path = opts.out_dir.join(format!("{id}_meta.json"));
    meta.write(&meta_path)?;
    files.push(meta_path);

    fail_on(failures, FigureOutput { files, notes })
}

/// Single-system kicked-top density panel (n = 25 against pure or
/// maximally mixed sigma): histogram CSV, fine analytic grid CSV, the
/// stream-mean report JSON, and meta JSON.
fn run_kicked_density(
    id: &str,
    scenario: Scenario,
    j2: f64,
    bins: usize,
    opts: &FigureOptions,
) -> Result<FigureOutput> {
    let samples = opts.samples.unwrap_or(5000) as usize;
    let config = KickedTopConfig::new(12.0, j2, 7.0, 8.0, 1.0, samples);
    let (n, m) = config.dims()?;
    let states = evolve_ensemble(&config)?;

    let values: Vec<f64> = match scenario {
        Scenario::PureSigma => {
            let psi = coherent_state(config.j1, config.theta1, config.phi1)?;
            states
                .par_iter()
                .map(|rho| fidelity_with_pure(rho, &psi))
                .collect::<Vec<Result<f64>>>()
                .into_iter()
                .collect::<Result<Vec<f64>>>()?
        }
        Scenario::MaximallyMixedSigma => states
            .iter()
            .flat_map(|rho| rho.eigenvalues().iter().map(|l| l / n as f64))
            .collect(),
        _ => {
            return Err(Error::parameter(
                "kicked-top density panels cover the pure and mixed scenarios",
            ))
        }
    };
    let roots: Vec<f64> = match scenario {
        Scenario::PureSigma => values.iter().map(|f| f.sqrt()).collect(),
        _ => {
            let mm = DensityMatrix::maximally_mixed(n);
            states
                .par_iter()
                .map(|rho| fidelity(&mm, rho).map(f64::sqrt))
                .collect::<Vec<Result<f64>>>()
                .into_iter()
                .collect::<Result<Vec<f64>>>()?
        }
    };

    let (curve_fn, support) = scenario_curve(scenario, n, m, None, None)?;
    let hist = histogram_from_values(&values, support, bins, &curve_fn)?;
    let grid = grid_density(&curve_fn, 512, support)?;
    let analytic = analytic_mean(scenario, None, n, m, None)?;
    let (mean, stderr) = batch_mean_stderr(&roots, KICKED_TOP_BATCHES)?;
    let report = ComparisonReport::from_parts(
        scenario,
        n as u32,
        m as u32,
        None,
        None,
        samples as u32,
        None,
        mean,
        stderr,
        &analytic,
    )?;

    let mut files = Vec::new();
    let mut notes = Vec::new();
    let mut failures = Vec::new();

    let csv = opts.out_dir.join(format!("{id}.csv"));
    let hist_stderr = hist.density_stderr();
    write_density_csv(
        &csv,
        &hist.centers(),
        &hist.curve,
        Some((&hist.density, &hist_stderr)),
    )?;
    files.push(csv);
    let grid_csv = opts.out_dir.join(format!("{id}_grid.csv"));
    write_density_csv(&grid_csv, &grid.abscissae, &grid.values, None)?;
    files.push(grid_csv);
    let report_path = opts.out_dir.join(format!("{id}_report.json"));
    report.write_json(&report_path)?;
    files.push(report_path);

    let norm = hist.normalization();
    if (norm - 1.0).abs() > 1e-9 {
        failures.push(format!("{id}: histogram normalization {norm} drifted from 1"));
    }
    if (grid.integral - 1.0).abs() > 1e-4 {
        failures.push(format!(
            "{id}: analytic grid integral {} drifted from 1",
            grid.integral
        ));
    }
    let (within, total) = hist.poisson_within(4.0);
    notes.push(format!(
        "{id}: {within}/{total} bins within 4 Poisson sigma, stream rel diff {:.3}%",
        report.percent_rel_diff
    ));

    let mut meta = PanelMeta::bare(id, scenario, n as u32, m as u32);
    meta.samples = samples as u32;
    meta.bins = Some(hist.bins());
    meta.pooled = Some(hist.pooled);
    meta.histogram_normalization = Some(norm);
    meta.poisson_within_4sigma = Some(within);
    meta.poisson_bins = Some(total);
    meta.grid_points = Some(grid.abscissae.len());
    meta.grid_integral = Some(grid.integral);
    meta.grid_first_moment = Some(grid_first_moment(&grid));
    meta.grid_warning = grid.normalization_warning.clone();
    let meta_path = opts.out_dir.join(format!("{id}_meta.json"));
    meta.write(&meta_path)?;
    files.push(meta_path);

    fail_on(failures, FigureOutput { files, notes })
}

/// Kicked-top D_B^2 sweep over m in {25,35,45,55} for the three CKT
/// parameter sets: one CSV, one report JSON per (set, m).
fn run_kicked_sweep(id: &str, scenario: Scenario, opts: &FigureOptions) -> Result<FigureOutput> {
    let samples = opts.samples.unwrap_or(5000) as usize;
    let mut params = Vec::new();
    for (set_idx, &(k1, k2, eps)) in CKT_SETS.iter().enumerate() {
        for &m in &KICKED_SWEEP_M {
            params.push((set_idx + 1, k1, k2, eps, m));
        }
    }
    let mut rows = Vec::new();
    for chunk in params.chunks(4) {
        let part: Vec<(usize, f64, f64, f64, u32, ComparisonReport)> = chunk
            .par_iter()
            .map(|&(set, k1, k2, eps, m)| {
                let j2 = f64::from(m - 1) / 2.0;
                let config = KickedTopConfig::new(12.0, j2, k1, k2, eps, samples);
                let report = kicked_top_mean_bures(&config, scenario, None)?;
                Ok((set, k1, k2, eps, m, report))
            })
            .collect::<Vec<Result<_>>>()
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        rows.extend(part);
    }

    let mut files = Vec::new();
    let mut notes = Vec::new();
    let mut csv = String::from(
        "ckt_set,kappa1,kappa2,epsilon,m,analytic_msbd,kt_msbd,kt_stderr_msbd,percent_rel_diff\n",
    );
    for (set, k1, k2, eps, m, report) in &rows {
        csv.push_str(&format!(
            "{set},{k1},{k2},{eps},{m},{},{},{},{}\n",
            fmt15(report.msbd_analytic),
            fmt15(report.msbd_mc),
            fmt15(report.msbd_stderr()),
            fmt15(report.percent_rel_diff),
        ));
        notes.push(format!(
            "{id} set {set} m={m}: rel diff {:.3}%",
            report.percent_rel_diff
        ));
        let path = opts.out_dir.join(format!("{id}_set{set}_m{m}.json"));
        report.write_json(&path)?;
        files.push(path);
    }
    let csv_path = opts.out_dir.join(format!("{id}.csv"));
    fs::write(&csv_path, csv)?;
    files.push(csv_path);

    let mut meta = PanelMeta::bare(id, scenario, 25, 0);
    meta.samples = samples as u32;
    let meta_path = opts.out_dir.join(format!("{id}_meta.json"));
    meta.write(&meta_path)?;
    files.push(meta_path);

    Ok(FigureOutput { files, notes })
}

/// Paired kicked-top chi spectral density at (n, m1, m2) = (15, 17, 21)
/// using the first CKTP parameter set.
fn run_kicked_pair_density(id: &str, opts: &FigureOptions) -> Result<FigureOutput> {
    let samples = opts.samples.unwrap_or(5000) as usize;
    let ((k1a, k2a, ea), (k1b, k2b, eb)) = CKTP_SETS[0];
    let config_a = KickedTopConfig::new(7.0, 8.0, k1a, k2a, ea, samples);
    let config_b = KickedTopConfig::new(7.0, 10.0, k1b, k2b, eb, samples);
    let (n, m1) = config_a.dims()?;
    let (_, m2) = config_b.dims()?;

    let values = kicked_pair_chi_values(&config_a, &config_b)?;
    let (curve_fn, support) =
        scenario_curve(Scenario::TwoRandom, n, m1, Some(m2 as u32), None)?;
    let hist = histogram_from_values(&values, support, 2000, &curve_fn)?;
    let grid = grid_density(&curve_fn, 192, support)?;
    let report = kicked_top_pair_mean_bures(&config_a, &config_b)?;

    let mut files = Vec::new();
    let mut notes = Vec::new();
    let mut failures = Vec::new();

    let csv = opts.out_dir.join(format!("{id}.csv"));
    let hist_stderr = hist.density_stderr();
    write_density_csv(
        &csv,
        &hist.centers(),
        &hist.curve,
        Some((&hist.density, &hist_stderr)),
    )?;
    files.push(csv);
    let grid_csv = opts.out_dir.join(format!("{id}_grid.csv"));
    write_density_csv(&grid_csv, &grid.abscissae, &grid.values, None)?;
    files.push(grid_csv);
    let report_path = opts.out_dir.join(format!("{id}_report.json"));
    report.write_json(&report_path)?;
    files.push(report_path);

    let norm = hist.normalization();
    if (norm - 1.0).abs() > 1e-9 {
        failures.push(format!("{id}: histogram normalization {norm} drifted from 1"));
    }
    if (grid.integral - 1.0).abs() > 1e-4 {
        failures.push(format!(
            "{id}: analytic grid integral {} drifted from 1",
            grid.integral
        ));
    }
    let (within, total) = hist.poisson_within(4.0);
    notes.push(format!(
        "{id}: {within}/{total} bins within 4 Poisson sigma, pair rel diff {:.3}%",
        report.percent_rel_diff
    ));

    let mut meta = PanelMeta::bare(id, Scenario::TwoRandom, n as u32, m1 as u32);
    meta.m2 = Some(m2 as u32);
    meta.samples = samples as u32;
    meta.bins = Some(hist.bins());
    meta.pooled = Some(hist.pooled);
    meta.histogram_normalization = Some(norm);
    meta.poisson_within_4sigma = Some(within);
    meta.poisson_bins = Some(total);
    meta.grid_points = Some(grid.abscissae.len());
    meta.grid_integral = Some(grid.integral);
    meta.grid_first_moment = Some(grid_first_moment(&grid));
    meta.grid_warning = grid.normalization_warning.clone();
    let meta_path = opts.out_dir.join(format!("{id}_meta.json"));
    meta.write(&meta_path)?;
    files.push(meta_path);

    fail_on(failures, FigureOutput { files, notes })
}

/// Paired kicked-top D_B^2 sweep over the (m1, m2) grid for the three
/// CKTP parameter sets.
fn run_kicked_pair_sweep(id: &str, opts: &FigureOptions) -> Result<FigureOutput> {
    let samples = opts.samples.unwrap_or(5000) as usize;
    let mut params = Vec::new();
    for (set_idx, &(pa, pb)) in CKTP_SETS.iter().enumerate() {
        for &(m1, m2) in &KICKED_PAIR_GRID {
            params.push((set_idx + 1, pa, pb, m1, m2));
        }
    }
    let mut rows = Vec::new();
    for chunk in params.chunks(4) {
        let part: Vec<(usize, u32, u32, ComparisonReport)> = chunk
            .par_iter()
            .map(|&(set, (k1a, k2a, ea), (k1b, k2b, eb), m1, m2)| {
                let config_a =
                    KickedTopConfig::new(12.0, f64::from(m1 - 1) / 2.0, k1a, k2a, ea, samples);
                let config_b =
                    KickedTopConfig::new(12.0, f64::from(m2 - 1) / 2.0, k1b, k2b, eb, samples);
                let report = kicked_top_pair_mean_bures(&config_a, &config_b)?;
                Ok((set, m1, m2, report))
            })
            .collect::<Vec<Result<_>>>()
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        rows.extend(part);
    }

    let mut files = Vec::new();
    let mut notes = Vec::new();
    let mut csv = String::from(
        "cktp_set,m1,m2,analytic_msbd,kt_msbd,kt_stderr_msbd,percent_rel_diff\n",
    );
    for (set, m1, m2, report) in &rows {
        csv.push_str(&format!(
            "{set},{m1},{m2},{},{},{},{}\n",
            fmt15(report.msbd_analytic),
            fmt15(report.msbd_mc),
            fmt15(report.msbd_stderr()),
            fmt15(report.percent_rel_diff),
        ));
        notes.push(format!(
            "{id} set {set} ({m1},{m2}): rel diff {:.3}%",
            report.percent_rel_diff
        ));
        let path = opts.out_dir.join(format!("{id}_set{set}_m1_{m1}_m2_{m2}.json"));
        report.write_json(&path)?;
        files.push(path);
    }
    let csv_path = opts.out_dir.join(format!("{id}.csv"));
    fs::write(&csv_path, csv)?;
    files.push(csv_path);

    let mut meta = PanelMeta::bare(id, Scenario::TwoRandom, 25, 0);
    meta.samples = samples as u32;
    let meta_path = opts.out_dir.join(format!("{id}_meta.json"));
    meta.write(&meta_path)?;
    files.push(meta_path);

    Ok(FigureOutput { files, notes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_json_keeps_contract_key_order() {
        let analytic =
            mean_root_fidelity_two_random(2, 2, 2).expect("closed form evaluates");
        let report = ComparisonReport::from_parts(
            Scenario::TwoRandom,
            2,
            2,
            Some(2),
            None,
            100,
            Some(7),
            0.80,
            0.002,
            &analytic,
        )
        .expect("valid parts");
        let json = report.to_json_pretty().expect("serializes");
        let keys = [
            "\"scenario\"",
            "\"n\"",
            "\"m1\"",
            "\"m2\"",
            "\"sigma_eigs\"",
            "\"samples\"",
            "\"seed\"",
            "\"mean_root_fidelity_mc\"",
            "\"mean_root_fidelity_mc_stderr\"",
            "\"mean_root_fidelity_analytic\"",
            "\"msbd_mc\"",
            "\"msbd_analytic\"",
            "\"percent_rel_diff\"",
        ];
        let mut last = 0;
        for k in keys {
            let pos = json.find(k).unwrap_or_else(|| panic!("missing key {k}"));
            assert!(pos > last || last == 0, "key {k} out of order");
            last = pos;
        }
        assert!(json.contains("\"sigma_eigs\": null"));
    }

    #[test]
    fn report_msbd_matches_mrf_on_both_sides() {
        let analytic = mean_root_fidelity_pure(3, 4).unwrap();
        let report = ComparisonReport::from_parts(
            Scenario::PureSigma,
            3,
            4,
            None,
            None,
            50,
            Some(1),
            0.61,
            0.01,
            &analytic,
        )
        .unwrap();
        assert_eq!(report.msbd_mc, 2.0 - 2.0 * report.mean_root_fidelity_mc);
        assert_eq!(
            report.msbd_analytic,
            2.0 - 2.0 * report.mean_root_fidelity_analytic
        );
        assert!(report.percent_rel_diff >= 0.0);
    }

    #[test]
    fn mean_and_stderr_match_hand_values() {
        let (mean, se) = mean_and_stderr(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((mean - 2.5).abs() < 1e-15);
        let expected = (5.0f64 / 3.0 / 4.0).sqrt();
        assert!((se - expected).abs() < 1e-15);
        assert!(mean_and_stderr(&[1.0]).is_err());
    }

    #[test]
    fn batch_means_drop_remainder_and_average_blocks() {
        let xs: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let (mean, se) = batch_mean_stderr(&xs, 4).unwrap();
        assert!((mean - 3.5).abs() < 1e-15);
        let bm = [0.5, 2.5, 4.5, 6.5];
        let var = bm.iter().map(|b| (b - 3.5) * (b - 3.5)).sum::<f64>() / 3.0;
        assert!((se - (var / 4.0).sqrt()).abs() < 1e-14);
        assert!(batch_mean_stderr(&xs, 10).is_err());
    }

    #[test]
    fn histogram_normalizes_and_rejects_outliers() {
        let values = [0.05, 0.15, 0.15, 0.95];
        let uniform = |_x: f64| Ok(1.0);
        let hist = histogram_from_values(&values, (0.0, 1.0), 10, &uniform).unwrap();
        assert!((hist.normalization() - 1.0).abs() < 1e-12);
        assert_eq!(hist.pooled, 4);
        assert_eq!(hist.bins(), 10);
        assert!((hist.density[1] - 2.0 / (4.0 * 0.1)).abs() < 1e-12);
        // Roundoff-scale strays clamp into the edge bins.
        let fuzzy = [-1e-12, 1.0 + 1e-12];
        assert!(histogram_from_values(&fuzzy, (0.0, 1.0), 10, &uniform).is_ok());
        let bad = [1.5];
        assert!(matches!(
            histogram_from_values(&bad, (0.0, 1.0), 10, &uniform),
            Err(Error::Consistency(_))
        ));
        assert!(histogram_from_values(&values, (0.0, 1.0), 9, &uniform).is_err());
    }

    #[test]
    fn mc_mean_two_random_2_2_2_agrees_with_closed_form() {
        let spec = EnsembleSpec::new(2, 2, 4000, 42).unwrap();
        let report = mc_mean_bures(&spec, Scenario::TwoRandom, None, Some(2)).unwrap();
        assert!((report.mean_root_fidelity_analytic - 0.80979591836734693878).abs() < 1e-12);
        let gap = (report.mean_root_fidelity_mc - report.mean_root_fidelity_analytic).abs();
        assert!(
            gap < 5.0 * report.mean_root_fidelity_mc_stderr,
            "MC gap {gap:e} vs stderr {:e}",
            report.mean_root_fidelity_mc_stderr
        );
        assert_eq!(report.seed, Some(42));
        assert_eq!(report.m2, Some(2));
    }

    #[test]
    fn mc_mean_validates_scenario_arguments() {
        let spec = EnsembleSpec::new(3, 5, 100, 1).unwrap();
        let sigma = FixedStateSpectrum::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert!(mc_mean_bures(&spec, Scenario::PureSigma, Some(&sigma), None).is_err());
        assert!(mc_mean_bures(&spec, Scenario::TwoRandom, None, None).is_err());
        assert!(mc_mean_bures(&spec, Scenario::MaximallyMixedSigma, None, Some(4)).is_err());
        let wrong_dim = FixedStateSpectrum::new(vec![0.5, 0.5]).unwrap();
        assert!(mc_mean_bures(&spec, Scenario::FixedSigma, Some(&wrong_dim), None).is_err());
        let one = EnsembleSpec::new(1, 3, 100, 1).unwrap();
        assert!(mc_mean_bures(&one, Scenario::PureSigma, None, None).is_err());
    }

    #[test]
    fn mc_histogram_pure_matches_beta_curve() {
        let spec = EnsembleSpec::new(2, 3, 3000, 9).unwrap();
        let hist = mc_histogram(&spec, Scenario::PureSigma, 12, None, None).unwrap();
        assert!((hist.normalization() - 1.0).abs() < 1e-12);
        assert_eq!(hist.pooled, 3000);
        let (within, total) = hist.poisson_within(4.0);
        assert_eq!(total, 12);
        assert!(within >= 10, "only {within}/12 bins within 4 sigma");
    }

    #[test]
    fn mc_histogram_mixed_pools_scaled_eigenvalues() {
        let spec = EnsembleSpec::new(2, 4, 2000, 5).unwrap();
        let hist = mc_histogram(&spec, Scenario::MaximallyMixedSigma, 16, None, None).unwrap();
        assert_eq!(hist.pooled, 4000);
        assert!((hist.edges[hist.edges.len() - 1] - 0.5).abs() < 1e-15);
        assert!((hist.normalization() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn density_csv_is_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let path1 = dir.path().join("a.csv");
        let path2 = dir.path().join("b.csv");
        let xs = [0.125, 0.375];
        let ys = [1.5, 0.5];
        let d = [1.4, 0.6];
        let s = [0.05, 0.03];
        write_density_csv(&path1, &xs, &ys, Some((&d, &s))).unwrap();
        write_density_csv(&path2, &xs, &ys, Some((&d, &s))).unwrap();
        let b1 = fs::read(&path1).unwrap();
        let b2 = fs::read(&path2).unwrap();
        assert_eq!(b1, b2);
        let text = String::from_utf8(b1).unwrap();
        assert!(text.starts_with("x,analytic_pdf,mc_density,mc_stderr\n"));
        assert!(text.contains("1.25000000000000e-1"));
    }

    #[test]
    fn kicked_comparison_small_spins_produces_finite_report() {
        let mut config = KickedTopConfig::new(1.5, 2.0, 7.0, 8.0, 1.0, 200);
        config.transient = 100;
        let report =
            kicked_top_mean_bures(&config, Scenario::MaximallyMixedSigma, None).unwrap();
        assert_eq!(report.n, 4);
        assert_eq!(report.m1, 5);
        assert_eq!(report.seed, None);
        assert!(report.mean_root_fidelity_mc > 0.0 && report.mean_root_fidelity_mc < 1.0);
        assert!(report.mean_root_fidelity_mc_stderr > 0.0);
        assert!(report.percent_rel_diff.is_finite());
    }

    #[test]
    fn kicked_pair_comparison_small_spins_produces_finite_report() {
        let mut config_a = KickedTopConfig::new(1.0, 1.5, 8.0, 7.0, 0.5, 150);
        config_a.transient = 100;
        let mut config_b = KickedTopConfig::new(1.0, 2.0, 7.0, 8.0, 1.0, 150);
        config_b.transient = 100;
        let report = kicked_top_pair_mean_bures(&config_a, &config_b).unwrap();
        assert_eq!((report.n, report.m1, report.m2), (3, 4, Some(5)));
        assert!(report.msbd_mc > 0.0 && report.msbd_mc < 2.0);
        // two tops, same scenario rejection
        let config = KickedTopConfig::new(1.5, 2.0, 7.0, 8.0, 1.0, 100);
        assert!(kicked_top_mean_bures(&config, Scenario::TwoRandom, None).is_err());
    }

    #[test]
    fn run_figure_rejects_unknown_ids() {
        let dir = tempfile::tempdir().unwrap();
        let opts = FigureOptions {
            samples: Some(100),
            seed: 3,
            out_dir: dir.path().to_path_buf(),
        };
        assert!(matches!(
            run_figure("fig99", &opts),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn run_figure_fig5a_writes_grid_csv() {
        let dir = tempfile::tempdir().unwrap();
        let opts = FigureOptions {
            samples: Some(400),
            seed: 11,
            out_dir: dir.path().to_path_buf(),
        };
        let out = run_figure("fig5a", &opts).unwrap();
        let csv_path = dir.path().join("fig5a.csv");
        assert!(out.files.contains(&csv_path));
        let text = fs::read_to_string(&csv_path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 37, "header plus 36 grid points");
        assert_eq!(
            lines[0],
            "m1,m2,analytic_msbd,mc_msbd,mc_stderr_msbd,percent_rel_diff"
        );
        assert!(dir.path().join("fig5a_meta.json").exists());
    }

    #[test]
    fn run_figure_fig2a_emits_histogram_and_grid() {
        let dir = tempfile::tempdir().unwrap();
        let opts = FigureOptions {
            samples: Some(4000),
            seed: 21,
            out_dir: dir.path().to_path_buf(),
        };
        let out = run_figure("fig2a", &opts).unwrap();
        assert!(dir.path().join("fig2a.csv").exists());
        assert!(dir.path().join("fig2a_grid.csv").exists());
        assert!(dir.path().join("fig2a_meta.json").exists());
        assert!(!out.notes.is_empty());
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("fig2a_meta.json")).unwrap())
                .unwrap();
        assert_eq!(meta["scenario"], "pure");
        assert_eq!(meta["samples"], 4000);
        let hist_text = fs::read_to_string(dir.path().join("fig2a.csv")).unwrap();
        assert_eq!(hist_text.lines().count(), 61, "header plus 60 bins");
    }

    #[test]
    fn grid_first_moment_matches_beta_mean() {
        let curve = |x: f64| fidelity_pdf_pure(5, 6, x);
        let grid = grid_density(&curve, 256, (0.0, 1.0)).unwrap();
        let m1 = grid_first_moment(&grid);
        assert!(
            (m1 - 0.2).abs() < 1e-6,
            "Beta(6,24) mean via grid: {m1}, want 0.2"
        );
    }
}
