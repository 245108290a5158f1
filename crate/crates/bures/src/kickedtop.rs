//! Coupled kicked tops: a Floquet simulator producing ensembles of
//! reduced density matrices whose spectral statistics the analytic
//! ensemble formulas predict.
//!
//! One period of the pair is U = U12 (U1 x U2) with
//! U_r = exp(-i kappa_r/(2 j_r) Jz_r^2) exp(-i pi/2 Jy_r) and the
//! coupling U12 = exp(-i eps/sqrt(j1 j2) Jz1 x Jz2). Both kick and
//! coupling factors are diagonal in the product basis, so a step costs
//! one m x m and one n x n rotation per block plus a diagonal phase,
//! O(n m (n + m)) instead of dense (nm)^2 matrix-vector work.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrix::{max_abs_diff, reduced_from_vector, tensor, unitary_exp, CMatrix, CVector};
use crate::states::DensityMatrix;

/// Parameters of one coupled-kicked-tops system. Spins may be integer or
/// half-integer; the reduced states live on the first top, dimension
/// n = 2 j1 + 1, with the second top (m = 2 j2 + 1) traced out.
#[derive(Debug, Clone, Copy)]
pub struct KickedTopConfig {
    pub j1: f64,
    pub j2: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub epsilon: f64,
    pub theta1: f64,
    pub phi1: f64,
    pub theta2: f64,
    pub phi2: f64,
    /// Iterations discarded before sampling starts.
    pub transient: usize,
    /// Reduced density matrices to emit.
    pub samples: usize,
    /// Keep one state every `thinning` iterations (>= 1). Consecutive
    /// samples remain autocorrelated at stride 1; error bars over this
    /// ensemble must use batch means, not independent-sample variance.
    pub thinning: usize,
}

impl KickedTopConfig {
    /// Config with the default initial state (theta = 2.25, phi = 1.1 on
    /// both tops, a generic point in the chaotic sea for the kappa range
    /// of interest), transient 500 and thinning 1.
    pub fn new(j1: f64, j2: f64, kappa1: f64, kappa2: f64, epsilon: f64, samples: usize) -> Self {
        Self {
            j1,
            j2,
            kappa1,
            kappa2,
            epsilon,
            theta1: 2.25,
            phi1: 1.1,
            theta2: 2.25,
            phi2: 1.1,
            transient: 500,
            samples,
            thinning: 1,
        }
    }

    /// (n, m) = (2 j1 + 1, 2 j2 + 1).
    pub fn dims(&self) -> Result<(usize, usize)> {
        Ok((spin_dim(self.j1)?, spin_dim(self.j2)?))
    }

    pub fn validate(&self) -> Result<()> {
        self.dims()?;
        for (name, v) in [
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("epsilon", self.epsilon),
            ("theta1", self.theta1),
            ("phi1", self.phi1),
            ("theta2", self.theta2),
            ("phi2", self.phi2),
        ] {
            if !v.is_finite() {
                return Err(Error::parameter(format!("{name} must be finite, got {v}")));
            }
        }
        if self.samples == 0 {
            return Err(Error::parameter("samples must be >= 1"));
        }
        if self.thinning == 0 {
            return Err(Error::parameter("thinning must be >= 1"));
        }
        Ok(())
    }
}

fn spin_dim(j: f64) -> Result<usize> {
    let twoj = 2.0 * j;
    if !(j > 0.0) || twoj.fract() != 0.0 || twoj > 4096.0 {
        return Err(Error::parameter(format!(
            "spin must be a positive integer or half-integer (got j = {j})"
        )));
    }
    Ok(twoj as usize + 1)
}

/// Jy and Jz for spin j in the |j, m_z> basis ordered m_z = j, .., -j.
/// Jz is diagonal with entries m_z; Jy = (J+ - J-)/(2i) with the ladder
/// elements <m+-1|J+-|m> = sqrt(j(j+1) - m(m+-1)).
pub fn angular_momentum_ops(j: f64) -> Result<(CMatrix, CMatrix)> {
    let dim = spin_dim(j)?;
    let mut jz = CMatrix::zeros(dim, dim);
    let mut jy = CMatrix::zeros(dim, dim);
    for row in 0..dim {
        jz[(row, row)] = Complex64::new(j - row as f64, 0.0);
    }
    // Column c holds m = j - c; J+ raises it into row c - 1.
    let cas = j * (j + 1.0);
    for c in 1..dim {
        let m = j - c as f64;
        let amp = (cas - m * (m + 1.0)).sqrt();
        // (J+ - J-)/(2i): J- is the transpose of J+ with the matching
        // lowering amplitude, which equals this amp by symmetry.
        jy[(c - 1, c)] = Complex64::new(0.0, -0.5) * amp;
        jy[(c, c - 1)] = Complex64::new(0.0, 0.5) * amp;
    }
    Ok((jy, jz))
}

/// Normalized spin coherent state |theta, phi>: the highest-weight state
/// |j, j> rotated by theta about the axis (sin phi, -cos phi, 0), so
/// that <J> = j (sin theta cos phi, sin theta sin phi, cos theta).
pub fn coherent_state(j: f64, theta: f64, phi: f64) -> Result<CVector> {
    let dim = spin_dim(j)?;
    if !theta.is_finite() || !phi.is_finite() {
        return Err(Error::parameter("coherent-state angles must be finite"));
    }
    let mut psi = CVector::zeros(dim);
    if theta == 0.0 {
        psi[0] = Complex64::new(1.0, 0.0);
        return Ok(psi);
    }
    let (jy, jz) = angular_momentum_ops(j)?;
    let jx = jx_from(&jy, &jz);
    // exp(-i theta (cos phi Jy - sin phi Jx)) |j, j>
    let gen = jy.map(|v| v * phi.cos()) - jx.map(|v| v * phi.sin());
    let u = unitary_exp(&gen, theta)?;
    for row in 0..dim {
        psi[row] = u[(row, 0)];
    }
    Ok(psi)
}

/// Jx = -i [Jy, Jz].
fn jx_from(jy: &CMatrix, jz: &CMatrix) -> CMatrix {
    let comm = jy * jz - jz * jy;
    comm.map(|v| v * Complex64::new(0.0, -1.0))
}

/// One Floquet period U = U12 (U1 x U2), kept both as cached factors
/// (the fast application path) and as the dense unitary (the reference
/// path and the matrix accessor).
#[derive(Debug, Clone)]
pub struct FloquetOperator {
    n: usize,
    m: usize,
    u1: CMatrix,
    u2: CMatrix,
    u12: Vec<Complex64>,
    dense: CMatrix,
}

impl FloquetOperator {
    pub fn dim(&self) -> usize {
        self.n * self.m
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    /// The dense n m x n m unitary.
    pub fn matrix(&self) -> &CMatrix {
        &self.dense
    }

    /// One period via the cached factors: (I x U2), then (U1 x I), then
    /// the diagonal coupling phases.
    pub fn apply(&self, psi: &CVector) -> CVector {
        let (n, m) = (self.n, self.m);
        debug_assert_eq!(psi.len(), n * m);
        let mut mid = CVector::zeros(n * m);
        for block in 0..n {
            for r in 0..m {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..m {
                    acc += self.u2[(r, c)] * psi[block * m + c];
                }
                mid[block * m + r] = acc;
            }
        }
        let mut out = CVector::zeros(n * m);
        for k in 0..m {
            for r in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..n {
                    acc += self.u1[(r, c)] * mid[c * m + k];
                }
                out[r * m + k] = acc;
            }
        }
        for (idx, v) in out.iter_mut().enumerate() {
            *v *= self.u12[idx];
        }
        out
    }

    /// One period through the dense matrix; the factored path must agree
    /// with this to 1e-10.
    pub fn apply_naive(&self, psi: &CVector) -> CVector {
        &self.dense * psi
    }
}

/// Builds the Floquet operator for a config. The per-top factors are
/// checked unitary to 1e-10 (which the diagonal coupling phases then
/// preserve for the composite).
pub fn build_floquet(config: &KickedTopConfig) -> Result<FloquetOperator> {
    config.validate()?;
    let (n, m) = config.dims()?;
    let u1 = top_factor(config.j1, config.kappa1)?;
    let u2 = top_factor(config.j2, config.kappa2)?;
    for (name, u) in [("U1", &u1), ("U2", &u2)] {
        let gram = u.adjoint() * u;
        let miss = max_abs_diff(&gram, &CMatrix::identity(u.nrows(), u.nrows()));
        if miss > 1e-10 {
            return Err(Error::consistency(format!(
                "{name} failed the unitarity check: max |U^H U - I| = {miss:e}"
            )));
        }
    }
    let scale = config.epsilon / (config.j1 * config.j2).sqrt();
    let mut u12 = Vec::with_capacity(n * m);
    for i in 0..n {
        let m1 = config.j1 - i as f64;
        for k in 0..m {
            let m2 = config.j2 - k as f64;
            u12.push(Complex64::from_polar(1.0, -scale * m1 * m2));
        }
    }
    let mut dense = tensor(&u1, &u2);
    for (row, &phase) in u12.iter().enumerate() {
        for col in 0..n * m {
            dense[(row, col)] *= phase;
        }
    }
    Ok(FloquetOperator { n, m, u1, u2, u12, dense })
}

/// U_r = exp(-i kappa/(2j) Jz^2) exp(-i pi/2 Jy): the kick is diagonal,
/// so it multiplies the rotation's rows by phases.
fn top_factor(j: f64, kappa: f64) -> Result<CMatrix> {
    let (jy, _) = angular_momentum_ops(j)?;
    let mut u = unitary_exp(&jy, std::f64::consts::FRAC_PI_2)?;
    let dim = u.nrows();
    for row in 0..dim {
        let mz = j - row as f64;
        let phase = Complex64::from_polar(1.0, -kappa * mz * mz / (2.0 * j));
        for col in 0..dim {
            u[(row, col)] *= phase;
        }
    }
    Ok(u)
}

/// Evolves the product of the two coherent states through `transient`
/// periods, then emits `samples` reduced states of the first top, one
/// every `thinning` periods (sample nu is the state after
/// transient + nu * thinning periods).
pub fn evolve_ensemble(config: &KickedTopConfig) -> Result<Vec<DensityMatrix>> {
    let floquet = build_floquet(config)?;
    let (n, m) = floquet.dims();
    let a = coherent_state(config.j1, config.theta1, config.phi1)?;
    let b = coherent_state(config.j2, config.theta2, config.phi2)?;
    let mut psi = CVector::zeros(n * m);
    for i in 0..n {
        for k in 0..m {
            psi[i * m + k] = a[i] * b[k];
        }
    }
    for _ in 0..config.transient {
        psi = floquet.apply(&psi);
    }
    let mut out = Vec::with_capacity(config.samples);
    while out.len() < config.samples {
        for _ in 0..config.thinning {
            psi = floquet.apply(&psi);
        }
        out.push(DensityMatrix::new(reduced_from_vector(&psi, n, m)?)?);
    }
    Ok(out)
}

/// Two independent systems sharing the first top's spin (their reduced
/// states have a common dimension), evolved side by side and paired per
/// step.
pub fn evolve_pair_ensemble(
    config_a: &KickedTopConfig,
    config_b: &KickedTopConfig,
) -> Result<Vec<(DensityMatrix, DensityMatrix)>> {
    if config_a.j1 != config_b.j1 {
        return Err(Error::parameter(format!(
            "paired systems must share j1, got {} and {}",
            config_a.j1, config_b.j1
        )));
    }
    if config_a.samples != config_b.samples {
        return Err(Error::parameter(format!(
            "paired systems must request the same sample count, got {} and {}",
            config_a.samples, config_b.samples
        )));
    }
    let stream_a = evolve_ensemble(config_a)?;
    let stream_b = evolve_ensemble(config_b)?;
    Ok(stream_a.into_iter().zip(stream_b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spin_half_matrices_are_pauli_halves() {
        let (jy, jz) = angular_momentum_ops(0.5).unwrap();
        assert_eq!(jz[(0, 0)], Complex64::new(0.5, 0.0));
        assert_eq!(jz[(1, 1)], Complex64::new(-0.5, 0.0));
        assert!((jy[(0, 1)] - Complex64::new(0.0, -0.5)).norm() < 1e-15);
        assert!((jy[(1, 0)] - Complex64::new(0.0, 0.5)).norm() < 1e-15);
        assert_eq!(jy[(0, 0)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn casimir_commutator_and_trace() {
        for j in [0.5, 1.0, 1.5, 5.0, 8.5] {
            let (jy, jz) = angular_momentum_ops(j).unwrap();
            let tr: Complex64 = (0..jz.nrows()).map(|i| jz[(i, i)]).sum();
            assert!(tr.norm() < 1e-12, "tr Jz at j = {j}");
            let jx = jx_from(&jy, &jz);
            assert!(max_abs_diff(&jx.adjoint(), &jx) < 1e-12);
            let total = &jx * &jx + &jy * &jy + &jz * &jz;
            let want = CMatrix::identity(jx.nrows(), jx.nrows()).map(|v| v * (j * (j + 1.0)));
            assert!(max_abs_diff(&total, &want) < 1e-12, "Casimir at j = {j}");
            // [Jz, Jx] = i Jy closes the algebra.
            let comm = (&jz * &jx - &jx * &jz).map(|v| v * Complex64::new(0.0, -1.0));
            assert!(max_abs_diff(&comm, &jy) < 1e-12);
        }
    }

    #[test]
    fn rejects_invalid_spins() {
        assert!(angular_momentum_ops(0.0).is_err());
        assert!(angular_momentum_ops(0.7).is_err());
        assert!(angular_momentum_ops(-1.0).is_err());
        assert!(angular_momentum_ops(f64::NAN).is_err());
    }

    fn mean_j(psi: &CVector, op: &CMatrix) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..psi.len() {
            for c in 0..psi.len() {
                acc += psi[r].conj() * op[(r, c)] * psi[c];
            }
        }
        acc.re
    }

    #[test]
    fn coherent_state_points_where_requested() {
        for (j, theta, phi) in [
            (0.5, 1.0, 0.3),
            (2.0, 2.25, 1.1),
            (8.5, 0.4, -2.0),
            (12.0, 2.25, 1.1),
            (3.0, std::f64::consts::PI, 0.7),
        ] {
            let psi = coherent_state(j, theta, phi).unwrap();
            let norm: f64 = psi.iter().map(|v| v.norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-12, "norm at j = {j}");
            let (jy, jz) = angular_momentum_ops(j).unwrap();
            let jx = jx_from(&jy, &jz);
            let got = [mean_j(&psi, &jx), mean_j(&psi, &jy), mean_j(&psi, &jz)];
            let want = [
                j * theta.sin() * phi.cos(),
                j * theta.sin() * phi.sin(),
                j * theta.cos(),
            ];
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-10, "<J> at (j,theta,phi)=({j},{theta},{phi}): {got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn coherent_state_at_zero_theta_is_highest_weight() {
        let psi = coherent_state(3.5, 0.0, 2.4).unwrap();
        assert_eq!(psi[0], Complex64::new(1.0, 0.0));
        assert!(psi.iter().skip(1).all(|v| *v == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn floquet_is_unitary_and_factored_path_matches_dense() {
        let config = KickedTopConfig::new(3.0, 3.5, 7.0, 8.0, 1.0, 1);
        let f = build_floquet(&config).unwrap();
        let d = f.dim();
        let gram = f.matrix().adjoint() * f.matrix();
        assert!(max_abs_diff(&gram, &CMatrix::identity(d, d)) < 1e-10);
        let mut psi = CVector::zeros(d);
        for k in 0..d {
            let ang = 0.3 * k as f64;
            psi[k] = Complex64::from_polar(((k % 5) + 1) as f64, ang);
        }
        let norm: f64 = psi.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        psi /= Complex64::new(norm, 0.0);
        let fast = f.apply(&psi);
        let slow = f.apply_naive(&psi);
        let diff = (0..d).map(|k| (fast[k] - slow[k]).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-10, "factored vs dense: {diff:e}");
    }

    #[test]
    fn uncoupled_unkicked_evolution_is_order_four() {
        // kappa = eps = 0 leaves pure pi/2 rotations; four of them are a
        // 2 pi rotation = identity up to the half-integer-spin sign.
        let config = KickedTopConfig::new(1.5, 2.0, 0.0, 0.0, 0.0, 1);
        let f = build_floquet(&config).unwrap();
        let d = f.dim();
        let u2 = f.matrix() * f.matrix();
        let u4 = &u2 * &u2;
        let phase = u4[(0, 0)];
        assert!((phase.norm() - 1.0).abs() < 1e-10);
        let want = CMatrix::identity(d, d).map(|v| v * phase);
        assert!(max_abs_diff(&u4, &want) < 1e-10);
    }

    #[test]
    fn uncoupled_reduced_states_stay_pure() {
        let mut config = KickedTopConfig::new(1.0, 1.5, 6.0, 7.0, 0.0, 20);
        config.transient = 10;
        for rho in evolve_ensemble(&config).unwrap() {
            assert!((rho.purity() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn coupled_reduced_states_are_valid_and_mixed() {
        let mut config = KickedTopConfig::new(2.0, 2.5, 7.0, 8.0, 0.75, 30);
        config.transient = 50;
        let states = evolve_ensemble(&config).unwrap();
        assert_eq!(states.len(), 30);
        let mut saw_mixed = false;
        for rho in &states {
            assert_eq!(rho.dim(), 5);
            if rho.purity() < 0.999 {
                saw_mixed = true;
            }
        }
        assert!(saw_mixed, "coupling never mixed the reduced state");
    }

    #[test]
    fn thinning_subsamples_the_stride_one_stream() {
        let mut coarse = KickedTopConfig::new(1.5, 1.5, 7.0, 8.0, 0.5, 5);
        coarse.transient = 7;
        coarse.thinning = 3;
        let mut fine = coarse;
        fine.thinning = 1;
        fine.samples = 15;
        let coarse_states = evolve_ensemble(&coarse).unwrap();
        let fine_states = evolve_ensemble(&fine).unwrap();
        for (idx, rho) in coarse_states.iter().enumerate() {
            let counterpart = &fine_states[3 * idx + 2];
            assert_eq!(max_abs_diff(rho.matrix(), counterpart.matrix()), 0.0);
        }
    }

    #[test]
    fn pair_constraints() {
        let a = KickedTopConfig::new(2.0, 2.5, 8.0, 7.0, 0.5, 4);
        let mut b = KickedTopConfig::new(2.0, 3.0, 7.0, 8.0, 1.0, 4);
        b.transient = 30;
        let mut a_run = a;
        a_run.transient = 30;
        let pairs = evolve_pair_ensemble(&a_run, &b).unwrap();
        assert_eq!(pairs.len(), 4);
        assert_eq!(pairs[0].0.dim(), 5);
        assert_eq!(pairs[0].1.dim(), 5);

        let bad_j = KickedTopConfig::new(2.5, 2.5, 8.0, 7.0, 0.5, 4);
        assert!(matches!(
            evolve_pair_ensemble(&a, &bad_j),
            Err(Error::Parameter(_))
        ));
        let mut bad_count = b;
        bad_count.samples = 5;
        assert!(matches!(
            evolve_pair_ensemble(&a, &bad_count),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(KickedTopConfig::new(2.0, 2.5, 7.0, 8.0, 1.0, 0).validate().is_err());
        let mut c = KickedTopConfig::new(2.0, 2.5, 7.0, 8.0, 1.0, 5);
        c.thinning = 0;
        assert!(c.validate().is_err());
        c.thinning = 1;
        c.kappa1 = f64::INFINITY;
        assert!(c.validate().is_err());
    }
}
