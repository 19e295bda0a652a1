//! Dense complex helpers: Toeplitz matrices, least squares, polynomial roots.

use nalgebra::{DMatrix, DVector, Schur, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative singular-value threshold used to declare rank loss.
pub const RANK_TOL: f64 = 1e-11;

/// Rectangular Toeplitz matrix `T[i][j] = y[i + cols - 1 - j]`, with
/// `rows = y.len() - cols + 1`. Row `i` applied to a filter `h` gives
/// `sum_j h_j y[i + cols - 1 - j]`, a sample of the convolution `h * y`.
pub fn toeplitz(y: &[Complex64], cols: usize) -> CMatrix {
    let rows = y.len() + 1 - cols;
    CMatrix::from_fn(rows, cols, |i, j| y[i + cols - 1 - j])
}

/// Averages each diagonal of a Toeplitz-shaped matrix back into a sequence.
pub fn diagonal_average(t: &CMatrix) -> Vec<Complex64> {
    let (rows, cols) = t.shape();
    let len = rows + cols - 1;
    let mut acc = vec![Complex64::new(0.0, 0.0); len];
    let mut count = vec![0usize; len];
    for i in 0..rows {
        for j in 0..cols {
            let p = i + cols - 1 - j;
            acc[p] += t[(i, j)];
            count[p] += 1;
        }
    }
    acc.iter().zip(&count).map(|(a, &c)| a / c as f64).collect()
}

/// Singular values sorted in decreasing order.
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Number of singular values above `tol * sigma_max`.
pub fn effective_rank(sv: &[f64], tol: f64) -> usize {
    let max = sv.first().copied().unwrap_or(0.0);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * max).count()
}

/// Minimum-norm least-squares solution of `a x = b` via the SVD.
pub fn lstsq(a: &CMatrix, b: &CVector) -> Result<CVector> {
    let svd = SVD::new(a.clone(), true, true);
    let max = svd.singular_values.max();
    svd.solve(b, RANK_TOL * max.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Numerical(e.to_string()))
}

/// Roots of `sum_j c_j z^(deg - j)` (coefficients highest degree first),
/// from the companion matrix and refined by Newton steps.
pub fn poly_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let lead = coeffs
        .first()
        .copied()
        .filter(|c| c.norm() > 0.0)
        .ok_or_else(|| Error::Numerical("polynomial has a zero leading coefficient".into()))?;
    let deg = coeffs.len() - 1;
    if deg == 0 {
        return Ok(Vec::new());
    }
    let monic: Vec<Complex64> = coeffs.iter().map(|c| c / lead).collect();
    if deg == 1 {
        return Ok(vec![-monic[1]]);
    }
    let mut comp = CMatrix::zeros(deg, deg);
    for j in 0..deg {
        comp[(0, j)] = -monic[j + 1];
    }
    for i in 1..deg {
        comp[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    let schur = Schur::try_new(comp, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("companion eigenvalue iteration did not converge".into()))?;
    let eig = schur
        .eigenvalues()
        .ok_or_else(|| Error::Numerical("companion Schur form is not triangular".into()))?;
    Ok(eig.iter().map(|&z| polish(&monic, z)).collect())
}

fn horner(c: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = c[0];
    let mut dp = Complex64::new(0.0, 0.0);
    for &ci in &c[1..] {
        dp = dp * z + p;
        p = p * z + ci;
    }
    (p, dp)
}

/// A few Newton steps, kept only while they reduce `|p|`.
fn polish(c: &[Complex64], mut z: Complex64) -> Complex64 {
    let (mut p, mut dp) = horner(c, z);
    for _ in 0..3 {
        if dp.norm() == 0.0 || p.norm() == 0.0 {
            break;
        }
        let cand = z - p / dp;
        let (pc, dpc) = horner(c, cand);
        if pc.norm() < p.norm() {
            z = cand;
            p = pc;
            dp = dpc;
        } else {
            break;
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn toeplitz_layout() {
        let y: Vec<Complex64> = (0..5).map(|i| c(i as f64, 0.0)).collect();
        let t = toeplitz(&y, 3);
        assert_eq!(t.shape(), (3, 3));
        assert_eq!(t[(0, 0)], y[2]);
        assert_eq!(t[(0, 2)], y[0]);
        assert_eq!(t[(2, 0)], y[4]);
        assert_eq!(diagonal_average(&t), y);
    }

    #[test]
    fn roots_of_unity() {
        // z^4 - 1
        let mut roots = poly_roots(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]).unwrap();
        roots.sort_by(|a, b| a.arg().total_cmp(&b.arg()));
        let expect = [c(0.0, -1.0), c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0)];
        for (r, e) in roots.iter().zip(&expect) {
            assert!((r - e).norm() < 1e-12, "{r} vs {e}");
        }
        assert_eq!(poly_roots(&[c(2.0, 0.0), c(-1.0, 0.0)]).unwrap(), vec![c(0.5, 0.0)]);
        assert!(poly_roots(&[c(0.0, 0.0), c(1.0, 0.0)]).is_err());
    }

    #[test]
    fn least_squares() {
        let a = CMatrix::from_row_slice(3, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]);
        let b = CVector::from_vec(vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)]);
        let x = lstsq(&a, &b).unwrap();
        assert!((x[0] - c(1.0, 0.0)).norm() < 1e-12);
        assert!((x[1] - c(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rank_count() {
        assert_eq!(effective_rank(&[1.0, 1e-3, 1e-13], RANK_TOL), 2);
        assert_eq!(effective_rank(&[0.0, 0.0], RANK_TOL), 0);
    }
}
