//! Density-matrix domain layer: validated states, fidelity, Bures
//! distance, and the symmetrized products the spectral densities describe.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrix::{self, CMatrix, CVector};

/// A valid quantum state: Hermitian, unit trace (1e-10), eigenvalues
/// >= -1e-10 (rounding slack for MC-generated matrices). Eigenvalues are
/// computed once at construction and kept, ascending.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    mat: CMatrix,
    eigs: Vec<f64>,
}

impl DensityMatrix {
    pub fn new(mat: CMatrix) -> Result<Self> {
        let tr = matrix::trace(&mat);
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::consistency(format!(
                "density matrix trace must be 1, got {} + {}i",
                tr.re, tr.im
            )));
        }
        let (eigs, _) = matrix::eigh(&mat)?;
        if eigs[0] < -1e-10 {
            return Err(Error::consistency(format!(
                "density matrix has eigenvalue {:e} below the PSD slack",
                eigs[0]
            )));
        }
        Ok(Self { mat, eigs })
    }

    /// Diagonal state with the given spectrum; the basis choice is
    /// immaterial, every statistic in this crate is unitarily invariant.
    pub fn from_spectrum(spec: &FixedStateSpectrum) -> Self {
        let n = spec.dim();
        let mat = CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(spec.eigs()[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let mut eigs = spec.eigs().to_vec();
        eigs.sort_by(f64::total_cmp);
        Self { mat, eigs }
    }

    pub fn maximally_mixed(n: usize) -> Self {
        let mat = CMatrix::identity(n, n).scale(1.0 / n as f64);
        Self { mat, eigs: vec![1.0 / n as f64; n] }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    /// Ascending eigenvalues, as validated at construction.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigs
    }

    /// tr rho^2.
    pub fn purity(&self) -> f64 {
        self.eigs.iter().map(|w| w * w).sum()
    }
}

/// Spectrum of the fixed reference state sigma: n nonnegative reals
/// summing to 1 (1e-12). The closed-form fixed-sigma results need the
/// inverse eigenvalues a_j = 1/eig_j and break down on exact
/// degeneracies, so equal entries are flagged at construction.
#[derive(Debug, Clone)]
pub struct FixedStateSpectrum {
    eigs: Vec<f64>,
    degenerate: bool,
}

impl FixedStateSpectrum {
    pub fn new(eigs: Vec<f64>) -> Result<Self> {
        if eigs.is_empty() {
            return Err(Error::parameter("spectrum must be non-empty"));
        }
        if let Some(&bad) = eigs.iter().find(|&&e| !(e >= 0.0)) {
            return Err(Error::parameter(format!(
                "spectrum entries must be nonnegative, got {bad}"
            )));
        }
        let sum: f64 = eigs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::parameter(format!(
                "spectrum must sum to 1 within 1e-12, got {sum}"
            )));
        }
        let mut sorted = eigs.clone();
        sorted.sort_by(f64::total_cmp);
        let degenerate = sorted
            .windows(2)
            .any(|w| (w[1] - w[0]).abs() <= 1e-12 * w[1].abs().max(w[0].abs()));
        Ok(Self { eigs, degenerate })
    }

    pub fn uniform(n: usize) -> Self {
        Self { eigs: vec![1.0 / n as f64; n], degenerate: n > 1 }
    }

    pub fn dim(&self) -> usize {
        self.eigs.len()
    }

    pub fn eigs(&self) -> &[f64] {
        &self.eigs
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// a_j = 1/eig_j, defined only for a strictly positive spectrum.
    pub fn inverse_eigs(&self) -> Result<Vec<f64>> {
        if self.eigs.iter().any(|&e| e <= 0.0) {
            return Err(Error::parameter(
                "inverse spectrum requires strictly positive eigenvalues",
            ));
        }
        Ok(self.eigs.iter().map(|&e| 1.0 / e).collect())
    }
}

/// sqrt(a) b sqrt(a): Hermitian, PSD, same spectrum as the plain product
/// a b (they are related by a similarity transform).
pub fn symmetrized_product(a: &DensityMatrix, b: &DensityMatrix) -> Result<CMatrix> {
    if a.dim() != b.dim() {
        return Err(Error::parameter(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let sa = matrix::sqrt_psd(a.matrix())?;
    Ok(&sa * b.matrix() * &sa)
}

/// Uhlmann fidelity F = (tr sqrt(sqrt(r1) r2 sqrt(r1)))^2 = (sum_i
/// sqrt(lambda_i))^2 over the eigenvalues of the symmetrized product.
/// Clamped to [0, 1]; values outside by more than 1e-9 are an error.
pub fn fidelity(r1: &DensityMatrix, r2: &DensityMatrix) -> Result<f64> {
    let prod = symmetrized_product(r1, r2)?;
    let (w, _) = matrix::eigh(&prod)?;
    let root_sum: f64 = w.iter().map(|&x| x.max(0.0).sqrt()).sum();
    let f = root_sum * root_sum;
    if !(-1e-9..=1.0 + 1e-9).contains(&f) {
        return Err(Error::consistency(format!(
            "fidelity {f} outside [0, 1] beyond the 1e-9 slack"
        )));
    }
    Ok(f.clamp(0.0, 1.0))
}

/// Fast path when one state is pure: F(|psi><psi|, rho) = <psi|rho|psi>.
pub fn fidelity_with_pure(rho: &DensityMatrix, psi: &CVector) -> Result<f64> {
    if psi.len() != rho.dim() {
        return Err(Error::parameter(format!(
            "dimension mismatch: state vector {} vs density matrix {}",
            psi.len(),
            rho.dim()
        )));
    }
    let f = (psi.adjoint() * rho.matrix() * psi)[(0, 0)].re;
    if !(-1e-9..=1.0 + 1e-9).contains(&f) {
        return Err(Error::consistency(format!(
            "fidelity {f} outside [0, 1] beyond the 1e-9 slack"
        )));
    }
    Ok(f.clamp(0.0, 1.0))
}

/// Squared Bures distance d_B^2 = 2 - 2 sqrt(F), in [0, 2].
pub fn bures_distance_sq(r1: &DensityMatrix, r2: &DensityMatrix) -> Result<f64> {
    Ok(2.0 - 2.0 * fidelity(r1, r2)?.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn diag_state(p: &[f64]) -> DensityMatrix {
        DensityMatrix::from_spectrum(&FixedStateSpectrum::new(p.to_vec()).unwrap())
    }

    /// Deterministic random density matrix (Wishart-like, not HS-exact;
    /// fine for contract tests).
    fn random_state(n: usize, seed: &mut u64) -> DensityMatrix {
        let mut next = move |s: &mut u64| {
            *s ^= *s << 13;
            *s ^= *s >> 7;
            *s ^= *s << 17;
            (*s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let g = CMatrix::from_fn(n, n, |_, _| c(next(seed), next(seed)));
        let w = &g * g.adjoint();
        let tr = matrix::trace(&w).re;
        DensityMatrix::new(w.scale(1.0 / tr)).unwrap()
    }

    #[test]
    fn validation_catches_bad_states() {
        let not_unit_trace = CMatrix::identity(2, 2);
        assert!(DensityMatrix::new(not_unit_trace).is_err());
        let indefinite = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c(1.5, 0.0),
            c(-0.5, 0.0),
        ]));
        assert!(DensityMatrix::new(indefinite).is_err());
    }

    #[test]
    fn fidelity_trivial_cases() {
        let mut seed = 5u64;
        let rho = random_state(4, &mut seed);
        assert!((fidelity(&rho, &rho).unwrap() - 1.0).abs() < 1e-10);
        let a = diag_state(&[1.0, 0.0]);
        let b = diag_state(&[0.0, 1.0]);
        assert!(fidelity(&a, &b).unwrap() < 1e-12);
        let half = diag_state(&[0.5, 0.5]);
        assert!((fidelity(&a, &half).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bures_distance_range_and_anchors() {
        let a = diag_state(&[1.0, 0.0]);
        let b = diag_state(&[0.0, 1.0]);
        assert!((bures_distance_sq(&a, &b).unwrap() - 2.0).abs() < 1e-10);
        let half = diag_state(&[0.5, 0.5]);
        let want = 2.0 - 2.0 * 0.5f64.sqrt();
        assert!((bures_distance_sq(&a, &half).unwrap() - want).abs() < 1e-12);
        assert!(bures_distance_sq(&a, &a).unwrap().abs() < 1e-10);
    }

    #[test]
    fn commuting_states_reduce_to_bhattacharyya() {
        let p = [0.1, 0.2, 0.3, 0.4];
        let q = [0.4, 0.3, 0.2, 0.1];
        let f = fidelity(&diag_state(&p), &diag_state(&q)).unwrap();
        let b: f64 = p.iter().zip(&q).map(|(&x, &y)| (x * y).sqrt()).sum();
        assert!((f - b * b).abs() < 1e-10);
    }

    #[test]
    fn fidelity_symmetry() {
        let mut seed = 17u64;
        for _ in 0..20 {
            let a = random_state(5, &mut seed);
            let b = random_state(5, &mut seed);
            let fab = fidelity(&a, &b).unwrap();
            let fba = fidelity(&b, &a).unwrap();
            assert!((fab - fba).abs() < 1e-9, "{fab} vs {fba}");
        }
    }

    #[test]
    fn symmetrized_product_spectrum_matches_plain_product() {
        // Newton-identity style check: tr((a b)^k) = sum lambda_i^k for
        // the (real, nonnegative) spectrum of sqrt(a) b sqrt(a).
        let mut seed = 29u64;
        let a = random_state(4, &mut seed);
        let b = random_state(4, &mut seed);
        let sym = symmetrized_product(&a, &b).unwrap();
        let (w, _) = matrix::eigh(&sym).unwrap();
        let ab = a.matrix() * b.matrix();
        let mut pw = CMatrix::identity(4, 4);
        for k in 1..=4 {
            pw = &pw * &ab;
            let tr = matrix::trace(&pw);
            let moment: f64 = w.iter().map(|&x| x.powi(k)).sum();
            assert!(
                (tr.re - moment).abs() < 1e-9 && tr.im.abs() < 1e-12,
                "power {k}: {} vs {moment}",
                tr.re
            );
        }
    }

    #[test]
    fn symmetrized_product_with_mixed_identity() {
        let mut seed = 31u64;
        let b = random_state(3, &mut seed);
        let id3 = DensityMatrix::maximally_mixed(3);
        let sym = symmetrized_product(&id3, &b).unwrap();
        assert!(matrix::max_abs_diff(&sym, &b.matrix().scale(1.0 / 3.0)) < 1e-12);
    }

    #[test]
    fn pure_fidelity_fast_path() {
        let mut seed = 37u64;
        let rho = random_state(3, &mut seed);
        let psi = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let fast = fidelity_with_pure(&rho, &psi).unwrap();
        let pure = diag_state(&[1.0, 0.0, 0.0]);
        let slow = fidelity(&pure, &rho).unwrap();
        assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
        assert!((fast - rho.matrix()[(0, 0)].re).abs() < 1e-14);
    }

    #[test]
    fn spectrum_validation_and_degeneracy_flag() {
        assert!(FixedStateSpectrum::new(vec![0.5, 0.6]).is_err());
        assert!(FixedStateSpectrum::new(vec![1.2, -0.2]).is_err());
        let s = FixedStateSpectrum::new(vec![0.15, 0.33, 0.52]).unwrap();
        assert!(!s.is_degenerate());
        let a = s.inverse_eigs().unwrap();
        assert!((a[0] - 1.0 / 0.15).abs() < 1e-12);
        let d = FixedStateSpectrum::new(vec![0.25, 0.25, 0.5]).unwrap();
        assert!(d.is_degenerate());
        let pure = FixedStateSpectrum::new(vec![1.0, 0.0]).unwrap();
        assert!(pure.inverse_eigs().is_err());
    }
}
