//! MSE-optimal coefficient magnitudes (waterfilling).
//!
//! Minimizes `sum_i q_i / (1 + beta_i q_i N / s2)` over the simplex
//! `beta_i >= 0, sum beta_i = 1`, where `q_i = |h~_i|^2` and
//! `h~_k = H(2 pi k / tau) sigma_a sqrt(L) / tau`. The solution activates
//! indices from the largest `|h~|` downward:
//!
//! ```text
//! beta_i = (s2/N) (sqrt(N / (lambda s2)) - 1/q_i)   if lambda <= q_i^2 N / s2
//!        = 0                                        otherwise
//! ```

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{SosKernel, Window};
use crate::error::{Error, Result};
use crate::index::IndexSet;
use crate::signal::PulseShape;

/// Raw waterfilling solution in the caller's index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waterfill {
    pub beta: Vec<f64>,
    pub lambda: f64,
    /// Number of inactive entries in sorted order (`m`).
    pub inactive: usize,
    /// Permutation sorting `|h~|` increasingly (stable).
    pub order: Vec<usize>,
}

/// Waterfilling over `|h~_i|` values with noise variance `noise_var` and
/// `n_samples` samples.
pub fn waterfill(h_abs: &[f64], noise_var: f64, n_samples: usize) -> Result<Waterfill> {
    if h_abs.is_empty() {
        return Err(Error::Waterfilling("empty index set".into()));
    }
    if !(noise_var.is_finite() && noise_var > 0.0) {
        return Err(Error::Waterfilling(format!("noise variance must be > 0, got {noise_var}")));
    }
    if n_samples == 0 {
        return Err(Error::Waterfilling("need at least one sample".into()));
    }
    if let Some(h) = h_abs.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
        return Err(Error::Waterfilling(format!("|h~| must be finite and > 0, got {h}")));
    }
    let m_total = h_abs.len();
    let mut order: Vec<usize> = (0..m_total).collect();
    order.sort_by(|&a, &b| h_abs[a].total_cmp(&h_abs[b]));

    // Equal gains: every coefficient gets the same share.
    if h_abs.iter().all(|&h| h == h_abs[0]) {
        let share = 1.0 / m_total as f64;
        return Ok(Waterfill {
            beta: vec![share; m_total],
            lambda: {
                let c = n_samples as f64 / noise_var;
                let q = h_abs[0] * h_abs[0];
                let denom = 1.0 + share * q * c;
                q * q * c / (denom * denom)
            },
            inactive: 0,
            order,
        });
    }

    let c = n_samples as f64 / noise_var;
    let q: Vec<f64> = order.iter().map(|&i| h_abs[i] * h_abs[i]).collect();
    // Suffix sums of 1/q over the active tail.
    let mut tail = vec![0.0; m_total + 1];
    for i in (0..m_total).rev() {
        tail[i] = tail[i + 1] + 1.0 / q[i];
    }
    const SLACK: f64 = 1e-12;
    let mut found = None;
    for m in 0..m_total {
        let sqrt_lambda = (m_total - m) as f64 * c.sqrt() / (c + tail[m]);
        let lambda = sqrt_lambda * sqrt_lambda;
        let upper = q[m] * q[m] * c;
        let lower = if m == 0 { 0.0 } else { q[m - 1] * q[m - 1] * c };
        if lambda <= upper * (1.0 + SLACK) && lambda > lower * (1.0 - SLACK) {
            found = Some((m, lambda));
            break;
        }
    }
    let (m, lambda) = found.ok_or_else(|| {
        Error::Waterfilling("no active set satisfies its own threshold inequalities".into())
    })?;
    let root = (c / lambda).sqrt();
    let mut beta = vec![0.0; m_total];
    for (rank, &i) in order.iter().enumerate().skip(m) {
        beta[i] = ((root - 1.0 / q[rank]) / c).max(0.0);
    }
    Ok(Waterfill {
        beta,
        lambda,
        inactive: m,
        order,
    })
}

/// Largest KKT stationarity violation, relative to `lambda`.
///
/// Active entries must satisfy `q^2 c / (1 + beta q c)^2 = lambda`; inactive
/// ones need a nonnegative multiplier `mu = lambda - q^2 c`.
pub fn kkt_residual(h_abs: &[f64], noise_var: f64, n_samples: usize, sol: &Waterfill) -> f64 {
    let c = n_samples as f64 / noise_var;
    h_abs
        .iter()
        .zip(&sol.beta)
        .map(|(&h, &b)| {
            let q = h * h;
            let grad = q * q * c / (1.0 + b * q * c).powi(2);
            if b > 0.0 {
                (grad - sol.lambda).abs() / sol.lambda
            } else {
                (grad - sol.lambda).max(0.0) / sol.lambda
            }
        })
        .fold(0.0, f64::max)
}

/// Phase assigned to optimal coefficients (only `|b_k|^2` is fixed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhaseProfile {
    /// Real positive `b_k`.
    #[default]
    Zero,
    /// `b_k = |b_k| exp(-j 2 pi k delay / tau)`: conjugate-symmetric, so the
    /// kernel stays real and is shifted in time by `delay`.
    Linear { delay: f64 },
}

/// Optimal `|b_k|^2` for a pulse shape and noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub indices: IndexSet,
    pub tau: f64,
    /// `beta_k = |b_k|^2`, in index order.
    pub beta: Vec<f64>,
    /// `|h~_k|`, in index order.
    pub h_tilde: Vec<f64>,
    pub lambda: f64,
    pub inactive: usize,
}

impl PowerAllocation {
    /// Rect-sinc kernel with `|b_k| = sqrt(beta_k)`. Fails when some index
    /// received no power, since the sampling condition needs `b_k != 0`.
    pub fn to_kernel(&self, phase: PhaseProfile) -> Result<SosKernel> {
        let coeffs = self
            .indices
            .iter()
            .zip(&self.beta)
            .map(|(k, &b)| {
                let mag = b.sqrt();
                match phase {
                    PhaseProfile::Zero => Complex64::new(mag, 0.0),
                    PhaseProfile::Linear { delay } => {
                        Complex64::from_polar(mag, -TAU * k as f64 * delay / self.tau)
                    }
                }
            })
            .collect();
        SosKernel::new(self.tau, self.indices, coeffs, Window::RectSinc)
    }
}

/// MSE-optimal coefficient energies for `L` pulses with amplitude variance
/// `amp_var`, sample-noise variance `noise_var` and `n_samples` samples.
pub fn optimal_coefficients(
    shape: &PulseShape,
    tau: f64,
    indices: &IndexSet,
    pulses: usize,
    amp_var: f64,
    noise_var: f64,
    n_samples: usize,
) -> Result<PowerAllocation> {
    if pulses == 0 || !(amp_var > 0.0) {
        return Err(Error::Waterfilling("need L >= 1 and amplitude variance > 0".into()));
    }
    let scale = amp_var.sqrt() * (pulses as f64).sqrt() / tau;
    let h_tilde: Vec<f64> = indices
        .iter()
        .map(|k| shape.ctft(TAU * k as f64 / tau).norm() * scale)
        .collect();
    if let Some((k, _)) = indices.iter().zip(&h_tilde).find(|(_, h)| **h == 0.0) {
        return Err(Error::Waterfilling(format!("H(2 pi k / tau) vanishes at k = {k}")));
    }
    let sol = waterfill(&h_tilde, noise_var, n_samples)?;
    Ok(PowerAllocation {
        indices: *indices,
        tau,
        beta: sol.beta,
        h_tilde,
        lambda: sol.lambda,
        inactive: sol.inactive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirac_is_uniform() {
        let idx = IndexSet::symmetric(5);
        let a = optimal_coefficients(&PulseShape::Dirac, 1.0, &idx, 3, 1.0, 0.1, 11).unwrap();
        for &b in &a.beta {
            assert_eq!(b, 1.0 / 11.0);
        }
        let k = a.to_kernel(PhaseProfile::Zero).unwrap();
        assert!(k.is_real());
    }

    #[test]
    fn single_index() {
        let s = waterfill(&[0.3], 0.5, 4).unwrap();
        assert_eq!(s.beta, vec![1.0]);
    }

    #[test]
    fn weak_indices_switch_off() {
        // One very weak gain under heavy noise gets nothing.
        let h = [1e-3, 1.0, 1.1, 1.2];
        let s = waterfill(&h, 1.0, 4).unwrap();
        assert_eq!(s.beta[0], 0.0);
        assert_eq!(s.inactive, 1);
        assert!((s.beta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(kkt_residual(&h, 1.0, 4, &s) < 1e-10);
    }

    #[test]
    fn ties_are_stable() {
        let s = waterfill(&[2.0, 1.0, 2.0, 1.0, 3.0], 0.1, 5).unwrap();
        assert_eq!(s.order, vec![1, 3, 0, 2, 4]);
        assert_eq!(s.beta[0], s.beta[2]);
        assert_eq!(s.beta[1], s.beta[3]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(waterfill(&[], 1.0, 1).is_err());
        assert!(waterfill(&[1.0, 0.0], 1.0, 1).is_err());
        assert!(waterfill(&[1.0], 0.0, 1).is_err());
        assert!(waterfill(&[1.0], 1.0, 0).is_err());
    }

    #[test]
    fn linear_phase_keeps_kernel_real() {
        let idx = IndexSet::symmetric(3);
        let a = optimal_coefficients(&PulseShape::gaussian(0.05).unwrap(), 1.0, &idx, 2, 1.0, 0.01, 7).unwrap();
        let k = a.to_kernel(PhaseProfile::Linear { delay: 0.1 }).unwrap();
        assert!(k.is_real());
        for (b, beta) in k.coefficients().iter().zip(&a.beta) {
            assert!((b.norm_sqr() - beta).abs() < 1e-15);
        }
    }
}
