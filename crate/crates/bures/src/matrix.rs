//! Dense complex linear algebra on top of nalgebra: Hermitian
//! eigendecomposition, PSD square root, tensor product, partial trace,
//! and unitaries built as exponentials of Hermitian generators.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix; all quantum operators in this crate use it.
pub type CMatrix = DMatrix<Complex64>;
/// Dense complex vector (state vectors of the coupled tops).
pub type CVector = nalgebra::DVector<Complex64>;

/// Checks Hermiticity entrywise to 1e-12 absolute.
pub fn assert_hermitian(m: &CMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::parameter(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            let d = m[(i, j)] - m[(j, i)].conj();
            if d.norm() > 1e-12 {
                return Err(Error::consistency(format!(
                    "matrix is not Hermitian: |m[{i},{j}] - conj(m[{j},{i}])| = {:e}",
                    d.norm()
                )));
            }
        }
    }
    Ok(())
}

/// Hermitian eigendecomposition with ascending eigenvalues and the
/// matching unitary of column eigenvectors, so h = V diag(w) V^dagger.
pub fn eigh(h: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    assert_hermitian(h)?;
    let se = h.clone().symmetric_eigen();
    let n = h.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let w: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut v = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        v.set_column(dst, &se.eigenvectors.column(src));
    }
    Ok((w, v))
}

/// PSD matrix square root via eigendecomposition. Eigenvalues in
/// [-1e-10 * max_eig, 0) are rounding noise from symmetrized products and
/// clamp to zero; anything more negative is a genuinely non-PSD input.
pub fn sqrt_psd(h: &CMatrix) -> Result<CMatrix> {
    let (w, v) = eigh(h)?;
    let wmax = w.last().copied().unwrap_or(0.0).abs().max(1e-300);
    if w[0] < -1e-10 * wmax {
        return Err(Error::consistency(format!(
            "sqrt_psd input has eigenvalue {:e} below the PSD slack {:e}",
            w[0],
            -1e-10 * wmax
        )));
    }
    let n = h.nrows();
    let mut out = CMatrix::zeros(n, n);
    for (k, &wk) in w.iter().enumerate() {
        let s = wk.max(0.0).sqrt();
        if s == 0.0 {
            continue;
        }
        let col = v.column(k);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += s * col[i] * col[j].conj();
            }
        }
    }
    Ok(out)
}

/// Traces out the second (m_dim-sized) factor of an operator on an
/// (n * m_dim)-dimensional product space:
/// out(i, j) = sum_k in(i * m_dim + k, j * m_dim + k).
pub fn partial_trace_second(m: &CMatrix, n: usize, m_dim: usize) -> Result<CMatrix> {
    if m.nrows() != n * m_dim || m.ncols() != n * m_dim {
        return Err(Error::parameter(format!(
            "partial trace expects a {0}x{0} matrix for (n, m) = ({n}, {m_dim}), got {1}x{2}",
            n * m_dim,
            m.nrows(),
            m.ncols()
        )));
    }
    let mut out = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..m_dim {
                acc += m[(i * m_dim + k, j * m_dim + k)];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Reduced state of the first factor from a pure state on the product
/// space: rho(i, j) = sum_k psi[i m + k] conj(psi[j m + k]). Skips
/// forming the (n m)^2 projector.
pub fn reduced_from_vector(psi: &CVector, n: usize, m_dim: usize) -> Result<CMatrix> {
    if psi.len() != n * m_dim {
        return Err(Error::parameter(format!(
            "state vector length {} does not match n * m = {}",
            psi.len(),
            n * m_dim
        )));
    }
    let mut out = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..m_dim {
                acc += psi[i * m_dim + k] * psi[j * m_dim + k].conj();
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// exp(-i * scale * h) for Hermitian h, via eigendecomposition.
pub fn unitary_exp(h: &CMatrix, scale: f64) -> Result<CMatrix> {
    let (w, v) = eigh(h)?;
    let n = h.nrows();
    let mut out = CMatrix::zeros(n, n);
    for (k, &wk) in w.iter().enumerate() {
        let phase = Complex64::from_polar(1.0, -scale * wk);
        let col = v.column(k);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += phase * col[i] * col[j].conj();
            }
        }
    }
    Ok(out)
}

/// Kronecker product, first factor varying slowest.
pub fn tensor(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().sum()
}

/// Max-norm of the difference, the residual measure of the contracts.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}
