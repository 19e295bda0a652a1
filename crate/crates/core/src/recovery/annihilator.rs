//! Annihilating-filter estimation of `y_k = sum_l a_l u_l^k`,
//! `u_l = exp(-j 2 pi t_l / tau)`, plus TLS and Cadzow variants.

use std::f64::consts::TAU;

use nalgebra::SVD;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::linalg::{effective_rank, lstsq, poly_roots, singular_values, toeplitz, CMatrix, CVector, RANK_TOL};
use crate::error::{Error, Result};
use crate::index::IndexSet;

/// Roots closer than this are flagged as colliding.
const ROOT_COLLISION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FilterSolver {
    /// Leading coefficient fixed to one, remaining taps by least squares.
    #[default]
    Exact,
    /// Unit-norm right singular vector of the smallest singular value.
    TotalLeastSquares,
}

/// Output of the annihilating-filter stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnihilatorResult {
    pub solver: FilterSolver,
    /// Filter taps `h_0..h_L`.
    pub filter: Vec<Complex64>,
    /// Polynomial roots, in the same order as `delays`.
    pub roots: Vec<Complex64>,
    /// Delays in `[0, tau)`, ascending.
    pub delays: Vec<f64>,
    pub amplitudes: Vec<Complex64>,
    /// `| |u_l| - 1 |` per root.
    pub root_modulus_error: Vec<f64>,
    /// `||V(t^) a^ - y||`.
    pub residual: f64,
    /// Singular values of the annihilation matrix, decreasing.
    pub singular_values: Vec<f64>,
    pub effective_rank: usize,
    pub root_collision: bool,
    /// Set when TLS had to break a tie between smallest singular values.
    pub tie_broken: bool,
}

/// `t = -tau arg(u) / 2 pi`, wrapped into `[0, tau)`.
pub fn root_to_delay(u: Complex64, tau: f64) -> f64 {
    let frac = (-u.arg() / TAU).rem_euclid(1.0);
    if frac >= 1.0 {
        0.0
    } else {
        frac * tau
    }
}

/// `V(t)` with entries `exp(-j 2 pi k t_l / tau)`, rows over the index set.
pub fn vandermonde(indices: &IndexSet, delays: &[f64], tau: f64) -> CMatrix {
    let ks: Vec<i64> = indices.iter().collect();
    CMatrix::from_fn(ks.len(), delays.len(), |r, l| {
        Complex64::from_polar(1.0, -TAU * ks[r] as f64 * delays[l] / tau)
    })
}

fn check_sizes(y: &[Complex64], pulses: usize, strict: bool) -> Result<()> {
    if pulses == 0 {
        return Err(Error::InsufficientData("model order L must be >= 1".into()));
    }
    let m = y.len();
    if (strict && m <= 2 * pulses) || m < 2 * pulses {
        return Err(Error::InsufficientData(format!(
            "{m} coefficients for L = {pulses} (need {} {})",
            if strict { ">" } else { ">=" },
            2 * pulses
        )));
    }
    Ok(())
}

/// Exact annihilating filter with `h_0 = 1`. Needs `M >= 2L`.
pub fn annihilating_filter(y: &[Complex64], indices: &IndexSet, tau: f64, pulses: usize) -> Result<AnnihilatorResult> {
    check_sizes(y, pulses, false)?;
    let a = toeplitz(y, pulses + 1);
    let sv = singular_values(&a);
    let tail = a.columns(1, pulses).into_owned();
    let rank = effective_rank(&singular_values(&tail), RANK_TOL);
    if rank < pulses {
        return Err(Error::RankDeficient { rank, required: pulses });
    }
    let rhs = -a.column(0).into_owned();
    let taps = lstsq(&tail, &rhs)?;
    let mut filter = Vec::with_capacity(pulses + 1);
    filter.push(Complex64::new(1.0, 0.0));
    filter.extend(taps.iter().copied());
    finish(FilterSolver::Exact, filter, y, indices, tau, sv, rank, false)
}

/// TLS annihilating filter. Needs `M > 2L`.
pub fn annihilating_filter_tls(y: &[Complex64], indices: &IndexSet, tau: f64, pulses: usize) -> Result<AnnihilatorResult> {
    check_sizes(y, pulses, true)?;
    let a = toeplitz(y, pulses + 1);
    let (filter, sv, tie) = smallest_right_singular_vector(&a)?;
    let rank = effective_rank(&sv, RANK_TOL);
    if rank < pulses {
        return Err(Error::RankDeficient { rank, required: pulses });
    }
    finish(FilterSolver::TotalLeastSquares, filter, y, indices, tau, sv, rank, tie)
}

/// Unit-norm `v` minimizing `||A v||`, the sorted singular values and
/// whether the two smallest were tied.
fn smallest_right_singular_vector(a: &CMatrix) -> Result<(Vec<Complex64>, Vec<f64>, bool)> {
    let cols = a.ncols();
    // Pad to at least square so the full right basis is available.
    let padded = if a.nrows() < cols {
        let mut p = CMatrix::zeros(cols, cols);
        p.rows_mut(0, a.nrows()).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = SVD::new(padded, false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return right singular vectors".into()))?;
    let s = &svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[i].total_cmp(&s[j]).then(i.cmp(&j)));
    let pick = order[0];
    let tie = order.len() > 1 && {
        let s0 = s[order[0]];
        let s1 = s[order[1]];
        (s1 - s0) <= 1e-12 * s.max().max(f64::MIN_POSITIVE)
    };
    let v: Vec<Complex64> = v_t.row(pick).iter().map(|c| c.conj()).collect();
    let mut sorted: Vec<f64> = s.iter().copied().collect();
    sorted.sort_by(|x, y| y.total_cmp(x));
    Ok((v, sorted, tie))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    solver: FilterSolver,
    filter: Vec<Complex64>,
    y: &[Complex64],
    indices: &IndexSet,
    tau: f64,
    singular_values: Vec<f64>,
    effective_rank: usize,
    tie_broken: bool,
) -> Result<AnnihilatorResult> {
    // h(u) = sum_j h_j u^(L - j): highest degree first.
    let roots = poly_roots(&filter)?;
    let mut pairs: Vec<(f64, Complex64)> = roots.iter().map(|&u| (root_to_delay(u, tau), u)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let delays: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let roots: Vec<Complex64> = pairs.iter().map(|p| p.1).collect();
    let root_modulus_error = roots.iter().map(|u| (u.norm() - 1.0).abs()).collect();
    let root_collision = roots
        .iter()
        .enumerate()
        .any(|(i, a)| roots[i + 1..].iter().any(|b| (a - b).norm() < ROOT_COLLISION_TOL));

    let (amplitudes, residual) = fit_amplitudes(y, indices, &delays, tau)?;
    Ok(AnnihilatorResult {
        solver,
        filter,
        roots,
        delays,
        amplitudes,
        root_modulus_error,
        residual,
        singular_values,
        effective_rank,
        root_collision,
        tie_broken,
    })
}

/// Least-squares amplitudes for known delays, with the fit residual.
pub fn fit_amplitudes(y: &[Complex64], indices: &IndexSet, delays: &[f64], tau: f64) -> Result<(Vec<Complex64>, f64)> {
    let v = vandermonde(indices, delays, tau);
    let yv = CVector::from_column_slice(y);
    let a = lstsq(&v, &yv)?;
    let residual = (&v * &a - &yv).norm();
    Ok((a.iter().copied().collect(), residual))
}

/// Column count of the Cadzow Toeplitz matrix for `m` coefficients: as
/// square as possible.
pub fn cadzow_columns(m: usize) -> usize {
    m.div_ceil(2).max(1) + usize::from(m % 2 == 0)
}

/// Cadzow denoising: alternate rank-`L` truncation and diagonal averaging.
///
/// Stops early once `sigma_{L+1} < 1e-12 sigma_1`. Needs `M > 2L`.
pub fn cadzow_denoise(y: &[Complex64], pulses: usize, iterations: usize) -> Result<Vec<Complex64>> {
    check_sizes(y, pulses, true)?;
    let cols = cadzow_columns(y.len());
    let mut current = y.to_vec();
    for _ in 0..iterations {
        let t = toeplitz(&current, cols);
        let svd = SVD::new(t, true, true);
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let s1 = svd.singular_values[order[0]];
        if order.len() <= pulses || svd.singular_values[order[pulses]] < 1e-12 * s1 {
            break;
        }
        let u = svd.u.as_ref().expect("u requested");
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let mut low = CMatrix::zeros(u.nrows(), v_t.ncols());
        for &i in order.iter().take(pulses) {
            low += u.column(i) * v_t.row(i) * Complex64::new(svd.singular_values[i], 0.0);
        }
        current = super::linalg::diagonal_average(&low);
    }
    Ok(current)
}

/// Model order from the largest ratio between consecutive singular values
/// of the Cadzow Toeplitz matrix, capped at `max_order`.
pub fn estimate_model_order(y: &[Complex64], max_order: usize) -> usize {
    if y.len() < 3 {
        return 1;
    }
    let cols = cadzow_columns(y.len()).min(y.len());
    let sv = singular_values(&toeplitz(y, cols));
    let cap = max_order.min(sv.len().saturating_sub(1)).max(1);
    let rank = effective_rank(&sv, RANK_TOL);
    if rank < sv.len() {
        return rank.clamp(1, cap);
    }
    let mut best = (1, 0.0);
    for l in 1..=cap {
        let ratio = sv[l - 1] / sv[l].max(f64::MIN_POSITIVE * sv[0].max(1.0));
        if ratio > best.1 {
            best = (l, ratio);
        }
    }
    best.0
}
