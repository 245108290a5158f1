//! Closed-form ensemble results: spectral densities of the symmetrized
//! products tau = sqrt(sigma) rho sqrt(sigma) and chi = sqrt(rho1) rho2
//! sqrt(rho1), the pure-state fidelity PDF, and the mean root fidelity /
//! mean square Bures distance for every scenario (fixed sigma, pure
//! sigma, maximally mixed sigma, two random states).
//!
//! The determinant-over-Vandermonde expressions are never evaluated as
//! raw determinants. Writing the alternant with column i replaced by
//! f(a_j) as a Newton expansion,
//!
//! ```text
//!   det / Vandermonde = sum_{l=i}^{n} f[a_1..a_l] (-1)^{l-i}
//!                       e_{l-i}(a_1, .., a_{l-1}),
//! ```
//!
//! with f[..] divided differences and e_k elementary symmetric
//! polynomials, removes the Vandermonde cancellation analytically: for
//! well-separated nodes a_j = 1/eig_j the divided-difference table is
//! benign, and for clustered nodes the table is replaced by a Taylor
//! expansion of f about the node mean, which stays accurate arbitrarily
//! close to degeneracy. Exactly degenerate spectra are rejected and
//! served by the explicit perturb-and-extrapolate helper instead.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::specfun::{
    binom_half, gauss_2f1_terminating, ln_gamma, meijer_g_321_scaled, peak_ln_321, pochhammer,
    signed_ln_gamma, MeijerGSpec321,
};
use crate::states::FixedStateSpectrum;

/// Which ensemble average a result belongs to. The tag strings match the
/// CLI's `--scenario` values and the JSON report field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    FixedSigma,
    PureSigma,
    MaximallyMixedSigma,
    TwoRandom,
}

impl Scenario {
    pub fn tag(&self) -> &'static str {
        match self {
            Scenario::FixedSigma => "fixed",
            Scenario::PureSigma => "pure",
            Scenario::MaximallyMixedSigma => "mixed",
            Scenario::TwoRandom => "two",
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Mean root fidelity together with the mean square Bures distance it
/// fixes through D_B^2 = 2 - 2<sqrt F>. The two fields always satisfy
/// that relation exactly (same floating-point expression, no rounding
/// slack), which downstream consistency checks assert bitwise.
#[derive(Debug, Clone, Copy)]
pub struct MeanFidelityResult {
    pub mean_root_fidelity: f64,
    pub mean_sq_bures: f64,
    pub scenario: Scenario,
}

impl MeanFidelityResult {
    fn from_mrf(mrf: f64, scenario: Scenario) -> Result<Self> {
        // n = 1 identities land on 1.0 up to a few ulp; snap those.
        let mrf = if mrf > 1.0 && mrf < 1.0 + 1e-9 { 1.0 } else { mrf };
        if !(mrf > 0.0 && mrf <= 1.0) {
            return Err(Error::consistency(format!(
                "mean root fidelity {mrf:e} fell outside (0, 1]"
            )));
        }
        Ok(Self {
            mean_root_fidelity: mrf,
            mean_sq_bures: 2.0 - 2.0 * mrf,
            scenario,
        })
    }
}

/// A density tabulated on an adaptive grid over its support, with the
/// trapezoid normalization recorded. Abscissae are strictly interior and
/// strictly increasing; values are clipped at zero (analytic tails can
/// evaluate to tiny negatives at roundoff level) with the largest clipped
/// magnitude kept for the caller.
#[derive(Debug, Clone)]
pub struct GridDensity {
    pub abscissae: Vec<f64>,
    pub values: Vec<f64>,
    pub support: (f64, f64),
    /// Trapezoid integral over the support, end segments included.
    pub integral: f64,
    /// Set when |integral - 1| > 1e-5.
    pub normalization_warning: Option<String>,
    /// Largest |negative value| clipped to zero, 0.0 if none.
    pub clipped_magnitude: f64,
}

// ---------------------------------------------------------------------
// Alternant machinery
// ---------------------------------------------------------------------

/// Number of Taylor orders kept beyond the divided-difference order when
/// a node cluster is expanded about its mean. The expansion ratio is
/// bounded by the route guards (< 0.3), so 60 orders leave the
/// truncation far below f64 resolution.
const TAYLOR_EXTRA: usize = 60;

/// Elementary symmetric polynomials e_0..e_k of the given nodes.
fn elem_sym(nodes: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; nodes.len() + 1];
    e[0] = 1.0;
    for (count, &x) in nodes.iter().enumerate() {
        for q in (1..=count + 1).rev() {
            e[q] += x * e[q - 1];
        }
    }
    e
}

/// Divided differences f[a_1..a_l] for l = 1..n from sampled values.
fn divdiff_table(nodes: &[f64], fvals: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut d = fvals.to_vec();
    let mut out = Vec::with_capacity(n);
    out.push(d[0]);
    for order in 1..n {
        for r in (order..n).rev() {
            d[r] = (d[r] - d[r - 1]) / (nodes[r] - nodes[r - order]);
        }
        out.push(d[order]);
    }
    out
}

/// Divided differences from Taylor coefficients about the node mean:
/// f[a_1..a_l] = sum_q t_{l-1+q} h_q(delta_1..delta_l), with h_q the
/// complete homogeneous symmetric polynomials of the offsets. `coeffs`
/// must hold deltas.len() + TAYLOR_EXTRA entries.
fn divdiff_from_taylor(deltas: &[f64], coeffs: &[f64]) -> Vec<f64> {
    let n = deltas.len();
    debug_assert_eq!(coeffs.len(), n + TAYLOR_EXTRA);
    let mut h = vec![0.0; TAYLOR_EXTRA + 1];
    h[0] = 1.0;
    let mut out = Vec::with_capacity(n);
    for l in 1..=n {
        let x = deltas[l - 1];
        for q in 1..=TAYLOR_EXTRA {
            h[q] += x * h[q - 1];
        }
        let mut s = 0.0;
        for q in (0..=TAYLOR_EXTRA).rev() {
            s += coeffs[l - 1 + q] * h[q];
        }
        out.push(s);
    }
    out
}

/// Divided differences of f(a) = scale * a^p on clustered nodes, via the
/// Taylor route. Coefficients are generalized binomials C(p, r) abar^{p-r}.
fn divdiff_power_taylor(nodes: &[f64], p: f64, scale: f64) -> Vec<f64> {
    let n = nodes.len();
    let abar = nodes.iter().sum::<f64>() / n as f64;
    let deltas: Vec<f64> = nodes.iter().map(|a| a - abar).collect();
    let rmax = n + TAYLOR_EXTRA;
    let mut coeffs = Vec::with_capacity(rmax);
    let mut binom = 1.0;
    for r in 0..rmax {
        coeffs.push(scale * binom * abar.powf(p - r as f64));
        binom *= (p - r as f64) / (r as f64 + 1.0);
    }
    divdiff_from_taylor(&deltas, &coeffs)
}

/// det(alternant with column i replaced by f) / Vandermonde, from the
/// divided differences of f. Columns are numbered 1..n.
fn alternant_ratio(nodes: &[f64], dd: &[f64], i: usize) -> f64 {
    let n = nodes.len();
    let mut total = 0.0;
    for l in i..=n {
        let e = elem_sym(&nodes[..l - 1]);
        let k = l - i;
        let signed = if k % 2 == 0 { e[k] } else { -e[k] };
        total += dd[l - 1] * signed;
    }
    total
}

// ---------------------------------------------------------------------
// Shared validation
// ---------------------------------------------------------------------

fn check_dims(n: usize, m: usize) -> Result<()> {
    if n == 0 || m < n {
        return Err(Error::parameter(format!(
            "need 1 <= n <= m, got n = {n}, m = {m}"
        )));
    }
    Ok(())
}

/// Sorted ascending inverse eigenvalues a_j = 1/eig_j of a fixed sigma,
/// rejecting dimension mismatches, zero eigenvalues and degenerate
/// spectra (the latter with a pointer to the perturbation helper).
fn sigma_nodes(sigma: &FixedStateSpectrum, n: usize) -> Result<Vec<f64>> {
    if sigma.dim() != n {
        return Err(Error::parameter(format!(
            "sigma has {} eigenvalues but n = {n}",
            sigma.dim()
        )));
    }
    if sigma.is_degenerate() {
        return Err(Error::parameter(
            "sigma spectrum is degenerate; the determinant form is singular there - \
             spread the spectrum with spread_degenerate / mean_root_fidelity_fixed_degenerate, \
             or use the pure/mixed closed forms",
        ));
    }
    let mut a = sigma.inverse_eigs()?;
    a.sort_by(f64::total_cmp);
    Ok(a)
}

fn node_spread(a: &[f64]) -> f64 {
    let abar = a.iter().sum::<f64>() / a.len() as f64;
    (a[a.len() - 1] - a[0]) / abar
}

// ---------------------------------------------------------------------
// Mean root fidelity: closed forms
// ---------------------------------------------------------------------

/// Mean root fidelity between a fixed state sigma and a random state,
/// from the determinant formula with column i carrying
/// (m-i+1)_{1/2} a_j^{i-3/2}.
pub fn mean_root_fidelity_fixed(
    sigma: &FixedStateSpectrum,
    n: usize,
    m: usize,
) -> Result<MeanFidelityResult> {
    check_dims(n, m)?;
    let a = sigma_nodes(sigma, n)?;
    let clustered = node_spread(&a) < 0.15;
    let mut total = 0.0;
    for i in 1..=n {
        let p = i as f64 - 1.5;
        let scale = pochhammer((m - i + 1) as f64, 0.5);
        let dd = if clustered {
            divdiff_power_taylor(&a, p, scale)
        } else {
            let fvals: Vec<f64> = a.iter().map(|&x| scale * x.powf(p)).collect();
            divdiff_table(&a, &fvals)
        };
        total += alternant_ratio(&a, &dd, i);
    }
    let mrf = total / pochhammer((n * m) as f64, 0.5);
    MeanFidelityResult::from_mrf(mrf, Scenario::FixedSigma)
}

/// Mean root fidelity between a fixed pure state and a random state:
/// (m)_{1/2} / (nm)_{1/2}.
pub fn mean_root_fidelity_pure(n: usize, m: usize) -> Result<MeanFidelityResult> {
    check_dims(n, m)?;
    let mrf = (ln_pochhammer(m as f64, 0.5) - ln_pochhammer((n * m) as f64, 0.5)).exp();
    MeanFidelityResult::from_mrf(mrf, Scenario::PureSigma)
}

/// Mean root fidelity between the maximally mixed state and a random
/// state: 2/(sqrt(n) (nm)_{1/2}) sum_i C(1/2,i) C(1/2,i-1)
/// (m)_{3/2-i} / (n+1)_{-i}.
pub fn mean_root_fidelity_mixed(n: usize, m: usize) -> Result<MeanFidelityResult> {
    check_dims(n, m)?;
    // One exponent per summand: at n = 1 the pochhammer logs are the
    // same f64 values and cancel exactly, so the identity mrf = 1 holds
    // without rounding residue.
    let ln_norm = ln_pochhammer((n * m) as f64, 0.5);
    let mut s = 0.0;
    for i in 1..=n {
        let ln_term = ln_pochhammer(m as f64, 1.5 - i as f64)
            - ln_pochhammer((n + 1) as f64, -(i as f64))
            - ln_norm;
        s += binom_half(i as u32) * binom_half(i as u32 - 1) * ln_term.exp();
    }
    let mrf = 2.0 / (n as f64).sqrt() * s;
    MeanFidelityResult::from_mrf(mrf, Scenario::MaximallyMixedSigma)
}

/// Mean root fidelity between two independent random states with size
/// parameters m1, m2: the alternating k-sum whose Gamma(k-n+1/2) factors
/// at negative half-integer arguments are handled by reflection. Every
/// summand is in fact positive (the (-1)^{n-k} prefactor cancels the
/// gamma's sign), so the sum carries no cancellation.
pub fn mean_root_fidelity_two_random(
    n: usize,
    m1: usize,
    m2: usize,
) -> Result<MeanFidelityResult> {
    check_dims(n, m1)?;
    check_dims(n, m2)?;
    let v1 = (m1 - n) as f64;
    let v2 = (m2 - n) as f64;
    let mut s = 0.0;
    for k in 1..=n {
        let kf = k as f64;
        let (gsign, gln) = signed_ln_gamma(kf - n as f64 + 0.5);
        let ln_term = ln_pochhammer(kf, 0.5) + ln_pochhammer(kf + v1, 0.5)
            + ln_pochhammer(kf + v2, 0.5)
            - ln_gamma((n - k + 1) as f64)
            - gln;
        let parity = if (n - k) % 2 == 0 { 1.0 } else { -1.0 };
        s += parity * gsign * ln_term.exp();
    }
    let mrf = 2.0
        * (-ln_pochhammer((n * m1) as f64, 0.5) - ln_pochhammer((n * m2) as f64, 0.5)).exp()
        * s;
    MeanFidelityResult::from_mrf(mrf, Scenario::TwoRandom)
}

fn ln_pochhammer(alpha: f64, beta: f64) -> f64 {
    ln_gamma(alpha + beta) - ln_gamma(alpha)
}

// ---------------------------------------------------------------------
// Degenerate spectra: perturb and extrapolate
// ---------------------------------------------------------------------

/// Spreads every exactly-degenerate eigenvalue group of `sigma` by
/// symmetric steps of `delta` (offsets k - (g-1)/2 within a group of
/// size g, which sum to zero, so the trace is preserved). The returned
/// spectrum is sorted ascending.
pub fn spread_degenerate(sigma: &FixedStateSpectrum, delta: f64) -> Result<FixedStateSpectrum> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::parameter(format!("spread delta must be positive, got {delta}")));
    }
    let mut eigs = sigma.eigs().to_vec();
    eigs.sort_by(f64::total_cmp);
    let n = eigs.len();
    let gap_tol = 1e-12 * eigs[n - 1].max(f64::MIN_POSITIVE);
    let mut out = eigs.clone();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && eigs[end] - eigs[end - 1] <= gap_tol {
            end += 1;
        }
        let g = end - start;
        if g > 1 {
            for (idx, slot) in out[start..end].iter_mut().enumerate() {
                *slot += (idx as f64 - (g as f64 - 1.0) / 2.0) * delta;
            }
        }
        start = end;
    }
    FixedStateSpectrum::new(out)
}

/// Limiting route for degenerate sigma spectra: evaluates the fixed-sigma
/// mean on spectra spread by delta and delta/2 and Richardson-
/// extrapolates (the spread pattern is symmetric, so the leading error is
/// O(delta^2) and (4 v(delta/2) - v(delta))/3 cancels it). The base step
/// is 1e-5 of the mean adjacent gap, falling back to the mean eigenvalue
/// when the spectrum is fully degenerate, and is capped so the smallest
/// eigenvalue stays positive. Non-degenerate input passes straight
/// through to mean_root_fidelity_fixed.
pub fn mean_root_fidelity_fixed_degenerate(
    sigma: &FixedStateSpectrum,
    n: usize,
    m: usize,
) -> Result<MeanFidelityResult> {
    if !sigma.is_degenerate() {
        return mean_root_fidelity_fixed(sigma, n, m);
    }
    check_dims(n, m)?;
    if sigma.dim() != n {
        return Err(Error::parameter(format!(
            "sigma has {} eigenvalues but n = {n}",
            sigma.dim()
        )));
    }
    let mut eigs = sigma.eigs().to_vec();
    eigs.sort_by(f64::total_cmp);
    let span = eigs[n - 1] - eigs[0];
    let scale = if n > 1 && span > 0.0 {
        span / (n as f64 - 1.0)
    } else {
        eigs.iter().sum::<f64>() / n as f64
    };
    let mut delta = 1e-5 * scale;
    // Keep the smallest eigenvalue strictly positive under the largest
    // possible offset.
    let max_offset = (n as f64 - 1.0) / 2.0;
    if eigs[0] > 0.0 {
        delta = delta.min(0.5 * eigs[0] / max_offset);
    }
    let coarse = mean_root_fidelity_fixed(&spread_degenerate(sigma, delta)?, n, m)?;
    let fine = mean_root_fidelity_fixed(&spread_degenerate(sigma, delta / 2.0)?, n, m)?;
    let mrf = (4.0 * fine.mean_root_fidelity - coarse.mean_root_fidelity) / 3.0;
    MeanFidelityResult::from_mrf(mrf, Scenario::FixedSigma)
}

// ---------------------------------------------------------------------
// Spectral density of tau (fixed sigma)
// ---------------------------------------------------------------------

/// Spectral density p_lambda of tau = sqrt(sigma) rho sqrt(sigma) at
/// `lambda` for a fixed sigma with distinct positive eigenvalues.
/// Support is (0, max eig sigma); outside it the density is identically
/// zero and 0.0 is returned (both endpoint limits vanish for n >= 2).
pub fn density_tau(sigma: &FixedStateSpectrum, n: usize, m: usize, lambda: f64) -> Result<f64> {
    check_dims(n, m)?;
    if n < 2 {
        return Err(Error::parameter(
            "density_tau needs n >= 2: for n = 1 the spectrum of tau is a point mass",
        ));
    }
    let a = sigma_nodes(sigma, n)?;
    let e_max = 1.0 / a[0];
    if !lambda.is_finite() || lambda <= 0.0 || lambda >= e_max {
        return Ok(0.0);
    }
    let nm = n * m;
    let abar = a.iter().sum::<f64>() / n as f64;
    let dmax = (a[n - 1] - abar).max(abar - a[0]);
    // Taylor route needs every node on the smooth side of the Theta kink
    // and the expansion ratios of both factors a^m and (1 - lambda a)^q
    // comfortably inside the convergence radius.
    let denom = 1.0 - lambda * abar;
    let ratio = if a[n - 1] * lambda < 1.0 && denom > 0.0 {
        (dmax / abar).max(dmax * lambda / denom)
    } else {
        f64::INFINITY
    };
    let use_taylor = ratio < 0.3;
    let ln_lambda = lambda.ln();
    let ln_global = ln_gamma(nm as f64) - (n as f64).ln();
    let mut total = 0.0;
    for i in 1..=n {
        let q = (i + nm - m) as f64 - 2.0;
        let ln_pref = ln_global + (m - i) as f64 * ln_lambda
            - ln_gamma((m - i + 1) as f64)
            - ln_gamma((i + nm - m - 1) as f64);
        let (dd, ln_shift) = if use_taylor {
            (taylor_dd_product(&a, abar, m, q, lambda), m as f64 * abar.ln() + q * denom.ln())
        } else {
            let mut ln_vals = Vec::with_capacity(n);
            let mut ln_max = f64::NEG_INFINITY;
            for &aj in &a {
                let support = 1.0 - aj * lambda;
                let ln_v = if support > 0.0 {
                    m as f64 * aj.ln() + q * support.ln()
                } else {
                    f64::NEG_INFINITY
                };
                ln_max = ln_max.max(ln_v);
                ln_vals.push(ln_v);
            }
            let scaled: Vec<f64> = ln_vals.iter().map(|&l| (l - ln_max).exp()).collect();
            (divdiff_table(&a, &scaled), ln_max)
        };
        let r = alternant_ratio(&a, &dd, i);
        if r != 0.0 {
            total += r.signum() * (r.abs().ln() + ln_shift + ln_pref).exp();
        }
    }
    Ok(total)
}

/// Taylor coefficients (relative to the value at the mean node) of
/// g(a) = a^m (1 - lambda a)^q, convolved from the binomial expansions of
/// both factors, then pushed through the divided-difference recurrence.
fn taylor_dd_product(a: &[f64], abar: f64, m: usize, q: f64, lambda: f64) -> Vec<f64> {
    let n = a.len();
    let rmax = n + TAYLOR_EXTRA;
    let gg = -lambda / (1.0 - lambda * abar);
    // pm[u] = C(m, u) abar^{-u}, pq[w] = C(q, w) gg^w
    let mut pm = vec![0.0; rmax];
    let mut c = 1.0;
    for (u, slot) in pm.iter_mut().enumerate() {
        if u > m {
            break;
        }
        *slot = c;
        c *= (m - u) as f64 / ((u + 1) as f64 * abar);
    }
    let mut pq = vec![0.0; rmax];
    let mut c = 1.0;
    for (w, slot) in pq.iter_mut().enumerate() {
        if w as f64 > q {
            break;
        }
        *slot = c;
        c *= (q - w as f64) * gg / (w + 1) as f64;
    }
    let mut coeffs = vec![0.0; rmax];
    for (r, slot) in coeffs.iter_mut().enumerate() {
        let mut s = 0.0;
        for u in 0..=r.min(m) {
            s += pm[u] * pq[r - u];
        }
        *slot = s;
    }
    let deltas: Vec<f64> = a.iter().map(|&x| x - abar).collect();
    divdiff_from_taylor(&deltas, &coeffs)
}

// ---------------------------------------------------------------------
// Pure-sigma fidelity PDF and maximally-mixed density
// ---------------------------------------------------------------------

/// PDF of the fidelity between a fixed pure state and a random state:
/// the Beta(m, nm - m) density on (0, 1), zero outside (both endpoint
/// exponents are >= 1 for n >= 2, so the limits vanish).
pub fn fidelity_pdf_pure(n: usize, m: usize, fidelity: f64) -> Result<f64> {
    check_dims(n, m)?;
    if n < 2 {
        return Err(Error::parameter(
            "fidelity_pdf_pure needs n >= 2: for n = 1 the fidelity is the point mass at 1",
        ));
    }
    if !fidelity.is_finite() || fidelity <= 0.0 || fidelity >= 1.0 {
        return Ok(0.0);
    }
    let nm = (n * m) as f64;
    let mf = m as f64;
    let ln_p = ln_gamma(nm) - ln_gamma(mf) - ln_gamma(nm - mf)
        + (mf - 1.0) * fidelity.ln()
        + (nm - mf - 1.0) * (1.0 - fidelity).ln();
    Ok(ln_p.exp())
}

/// Spectral density of tau for the maximally mixed sigma = I/n, i.e. the
/// marginal eigenvalue density of rho rescaled by n. Support (0, 1/n).
/// The terminating hypergeometric pieces are evaluated through the
/// regularized series; coefficients are assembled in log space because
/// Gamma(nm) overflows f64 well inside the paper's parameter range.
pub fn density_tau_mixed(n: usize, m: usize, lambda: f64) -> Result<f64> {
    check_dims(n, m)?;
    if n < 2 {
        return Err(Error::parameter(
            "density_tau_mixed needs n >= 2: for n = 1 the spectrum is a point mass",
        ));
    }
    let w = n as f64 * lambda;
    if !w.is_finite() || w <= 0.0 || w >= 1.0 {
        return Ok(0.0);
    }
    let nm = n * m;
    let gam = (m - n + 1) as f64;
    let z = w / (w - 1.0);
    let ln_w = w.ln();
    let ln_1w = (1.0 - w).ln();
    let ln_shared = ln_gamma((m + 1) as f64) + ln_gamma(nm as f64);
    let mut total = 0.0;
    for i in 1..=n {
        let b = (i + m) as f64 - (nm + n) as f64;
        let f1 = gauss_2f1_terminating(-(n as i64), b, gam, z);
        let f2 = gauss_2f1_terminating(1 - n as i64, b, gam, z);
        let bracket = (n - i) as f64 * f1 - n as f64 * f2;
        let ln_mag = ln_shared - ln_gamma(i as f64) - ln_gamma((n - i + 1) as f64)
            - ln_gamma((i + m - n + 1) as f64)
            - ln_gamma((nm - m + n - i) as f64)
            + (i + m - n - 1) as f64 * ln_w
            + ((nm - m + n - i) as f64 - 1.0) * ln_1w;
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * ln_mag.exp() * bracket;
    }
    Ok(total)
}

// ---------------------------------------------------------------------
// Spectral density of chi (two random states)
// ---------------------------------------------------------------------

/// Eigenvalue density of chi = sqrt(rho1) rho2 sqrt(rho1) at mu in (0,1),
/// with the integration error bound accumulated over the Meijer G terms.
///
/// Every (j, k) term is a Mellin-Barnes integral with the full log-gamma
/// coefficient of the double sum folded into its contour, so no
/// intermediate exceeds f64 range. A shared absolute tolerance is derived
/// from the largest on-axis integrand peak across terms; a term whose
/// quadrature floor keeps it from that tolerance is still accepted if its
/// error bound stays three orders below the peak scale (the bound is
/// propagated either way).
pub fn density_chi_with_error(n: usize, m1: usize, m2: usize, mu: f64) -> Result<(f64, f64)> {
    check_dims(n, m1)?;
    check_dims(n, m2)?;
    if n < 2 {
        return Err(Error::parameter(
            "density_chi needs n >= 2: for n = 1 the spectrum of chi is a point mass",
        ));
    }
    if !(mu > 0.0 && mu < 1.0) || !mu.is_finite() {
        return Err(Error::parameter(format!(
            "chi density argument must lie in (0, 1), got {mu}"
        )));
    }
    let v1 = (m1 - n) as f64;
    let v2 = (m2 - n) as f64;
    let ln_mu = mu.ln();
    let ln_shared = ln_gamma((n * m1) as f64) + ln_gamma((n * m2) as f64) - (n as f64).ln();
    let mut specs = Vec::new();
    let mut signs = Vec::new();
    for j in 0..n as u32 {
        for k in 0..=j {
            let kf = k as f64;
            let ln_pref = ln_shared + kf * ln_mu
                - ln_gamma(kf + 1.0)
                - ln_gamma(kf + v1 + 1.0)
                - ln_gamma(kf + v2 + 1.0)
                - ln_gamma((j - k) as f64 + 1.0);
            let spec = MeijerGSpec321::for_ensemble(j, k, n as u32, m1 as u32, m2 as u32, mu)?;
            specs.push((spec, ln_pref));
            signs.push(if k % 2 == 0 { 1.0 } else { -1.0 });
        }
    }
    let peak_ln = specs
        .iter()
        .map(|&(spec, ln_pref)| peak_ln_321(&spec, ln_pref))
        .fold(f64::NEG_INFINITY, f64::max);
    let peak = peak_ln.min(700.0).exp();
    let tol_term = (1e-11 * peak).max(1e-300);
    let budget = 1e-8 * peak;
    let results: Vec<Result<(f64, f64)>> = specs
        .par_iter()
        .map(|&(spec, ln_pref)| match meijer_g_321_scaled(&spec, ln_pref, tol_term) {
            Err(Error::Convergence { value, err_bound, .. }) if err_bound <= budget => {
                Ok((value, err_bound))
            }
            other => other,
        })
        .collect();
    let mut total = 0.0;
    let mut err = 0.0;
    for (res, sign) in results.into_iter().zip(signs) {
        let (value, bound) = res?;
        total += sign * value;
        err += bound;
    }
    Ok((total, err))
}

/// Eigenvalue density of chi; see density_chi_with_error. Deep-tail
/// values are dominated by cancellation across terms and can come out as
/// tiny negatives of the order of the returned bound.
pub fn density_chi(n: usize, m1: usize, m2: usize, mu: f64) -> Result<f64> {
    density_chi_with_error(n, m1, m2, mu).map(|(v, _)| v)
}

// ---------------------------------------------------------------------
// Grid construction
// ---------------------------------------------------------------------

/// Tabulates a density on an adaptive grid over `support`.
///
/// Initial abscissae follow the smootherstep warp u^2 (3 - 2u), which
/// clusters points toward both endpoints while staying strictly
/// interior. Refinement then alternates between halving the gap to each
/// endpoint until the end-segment mass is resolved (this is what makes
/// integrable endpoint blowups converge) and inserting midpoints where
/// the local curvature error estimate h^3 |f''| is largest, until the
/// trapezoid integral stabilizes or the point budget (4x the request) is
/// reached. Evaluations run in parallel; assembly order is fixed, so the
/// result is independent of the worker count.
pub fn grid_density<F>(eval: &F, points: usize, support: (f64, f64)) -> Result<GridDensity>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let (lo, hi) = support;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::parameter(format!(
            "support must be a finite nonempty interval, got ({lo}, {hi})"
        )));
    }
    if points < 32 {
        return Err(Error::parameter(format!(
            "grid needs at least 32 points, got {points}"
        )));
    }
    let width = hi - lo;
    let warp = |u: f64| lo + width * (u * u * (3.0 - 2.0 * u));
    let mut clipped: f64 = 0.0;
    let mut xs: Vec<f64> = (0..points)
        .map(|i| warp((i as f64 + 0.5) / points as f64))
        .collect();
    let mut ys = eval_batch(eval, &xs, &mut clipped)?;

    let budget = 4 * points;
    let mut prev_integral = f64::NAN;
    for _round in 0..24 {
        let integral = trapezoid_with_caps(&xs, &ys, lo, hi);
        let mut new_x: Vec<f64> = Vec::new();
        let cap_tol = 1e-8 * integral.abs().max(1.0);
        if ys[0] * (xs[0] - lo) > cap_tol {
            new_x.push(lo + 0.5 * (xs[0] - lo));
        }
        if ys[ys.len() - 1] * (hi - xs[xs.len() - 1]) > cap_tol {
            new_x.push(hi - 0.5 * (hi - xs[xs.len() - 1]));
        }
        let stable = (integral - prev_integral).abs() <= 2e-7 * integral.abs().max(1.0);
        if new_x.is_empty() && stable {
            break;
        }
        if xs.len() < budget && !stable {
            insert_curvature_midpoints(&xs, &ys, points / 8 + 4, &mut new_x);
        }
        if new_x.is_empty() {
            break;
        }
        let new_y = eval_batch(eval, &new_x, &mut clipped)?;
        merge_sorted(&mut xs, &mut ys, new_x, new_y);
        prev_integral = integral;
    }

    let integral = trapezoid_with_caps(&xs, &ys, lo, hi);
    let normalization_warning = if (integral - 1.0).abs() > 1e-5 {
        Some(format!(
            "grid integral {integral:.8} deviates from 1 by more than 1e-5"
        ))
    } else {
        None
    };
    Ok(GridDensity {
        abscissae: xs,
        values: ys,
        support,
        integral,
        normalization_warning,
        clipped_magnitude: clipped,
    })
}

fn eval_batch<F>(eval: &F, xs: &[f64], clipped: &mut f64) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let raw: Vec<Result<f64>> = xs.par_iter().map(|&x| eval(x)).collect();
    let mut out = Vec::with_capacity(raw.len());
    for r in raw {
        let v = r?;
        if v < 0.0 {
            *clipped = clipped.max(-v);
            out.push(0.0);
        } else {
            out.push(v);
        }
    }
    Ok(out)
}

fn trapezoid_with_caps(xs: &[f64], ys: &[f64], lo: f64, hi: f64) -> f64 {
    let mut t = ys[0] * (xs[0] - lo) + ys[ys.len() - 1] * (hi - xs[xs.len() - 1]);
    for k in 0..xs.len() - 1 {
        t += 0.5 * (ys[k] + ys[k + 1]) * (xs[k + 1] - xs[k]);
    }
    t
}

/// Scores each segment by h^3 |f''| with f'' estimated from the divided
/// difference of the neighbouring triple, and appends midpoints of the
/// top `take` segments.
fn insert_curvature_midpoints(xs: &[f64], ys: &[f64], take: usize, new_x: &mut Vec<f64>) {
    let n = xs.len();
    if n < 3 {
        return;
    }
    let mut curv = vec![0.0; n];
    for k in 1..n - 1 {
        let d1 = (ys[k] - ys[k - 1]) / (xs[k] - xs[k - 1]);
        let d2 = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k]);
        curv[k] = (2.0 * (d2 - d1) / (xs[k + 1] - xs[k - 1])).abs();
    }
    curv[0] = curv[1];
    curv[n - 1] = curv[n - 2];
    let mut scored: Vec<(f64, usize)> = (0..n - 1)
        .map(|k| {
            let h = xs[k + 1] - xs[k];
            (h * h * h * curv[k].max(curv[k + 1]), k)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(score, k) in scored.iter().take(take) {
        if score > 0.0 {
            new_x.push(0.5 * (xs[k] + xs[k + 1]));
        }
    }
}

fn merge_sorted(xs: &mut Vec<f64>, ys: &mut Vec<f64>, new_x: Vec<f64>, new_y: Vec<f64>) {
    let mut pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pairs.extend(new_x.into_iter().zip(new_y));
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.dedup_by(|a, b| a.0 == b.0);
    *xs = pairs.iter().map(|p| p.0).collect();
    *ys = pairs.iter().map(|p| p.1).collect();
}
