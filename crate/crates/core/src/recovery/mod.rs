//! Spectral recovery: samples to Fourier coefficients, pulse deconvolution,
//! and delay/amplitude estimation with the annihilating filter.

mod annihilator;
pub(crate) mod linalg;

use std::f64::consts::TAU;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

pub use annihilator::{
    annihilating_filter, annihilating_filter_tls, cadzow_columns, cadzow_denoise, estimate_model_order,
    fit_amplitudes, root_to_delay, vandermonde, AnnihilatorResult, FilterSolver,
};
pub use linalg::RANK_TOL;

use crate::error::{Error, Result};
use crate::index::IndexSet;
use crate::kernel::SamplingKernel;
use crate::sampling::SampleSet;
use crate::signal::{pulse_diagonal, FourierCoeffVector, PulseShape};
use linalg::{effective_rank, singular_values, CMatrix, CVector};

/// `|H_k|` below this fraction of the largest entry attaches a warning.
pub const CONDITION_WARN_REL: f64 = 1e-6;
/// Diagonal entries at or below this fraction of the largest are treated as zero.
pub const ZERO_DIAG_REL: f64 = 1e-14;

/// Linear map from Fourier coefficients to samples, `c = V(-t_s) S x`.
#[derive(Debug, Clone)]
pub struct CoefficientSystem {
    indices: IndexSet,
    tau: f64,
    instants: Vec<f64>,
    /// `conj(S_k)`: the kernel factor multiplying `X[k]` in each sample.
    kernel_diag: Vec<Complex64>,
    /// `(1/tau) H(2 pi k / tau)`.
    pulse_diag: Vec<Complex64>,
    vandermonde: CMatrix,
    pinv: CMatrix,
    dft_offset: Option<f64>,
}

impl CoefficientSystem {
    /// Builds the system for a kernel, pulse shape and (window-local) sample
    /// instants.
    pub fn new(kernel: &SamplingKernel, shape: &PulseShape, instants: &[f64]) -> Result<Self> {
        let indices = kernel.indices();
        let tau = kernel.tau();
        let m = indices.len();
        let n = instants.len();
        if n < m {
            return Err(Error::InsufficientData(format!("{n} samples for {m} Fourier coefficients")));
        }
        let kernel_diag: Vec<Complex64> = indices.iter().map(|k| kernel.sampling_response(k).conj()).collect();
        let pulse_diag = pulse_diagonal(shape, tau, &indices);
        check_diagonal(&indices, &kernel_diag)?;
        check_diagonal(&indices, &pulse_diag)?;

        let ks: Vec<i64> = indices.iter().collect();
        let vandermonde = CMatrix::from_fn(n, m, |r, c| {
            Complex64::from_polar(1.0, TAU * ks[c] as f64 * instants[r] / tau)
        });
        let sv = singular_values(&vandermonde);
        let rank = effective_rank(&sv, RANK_TOL);
        if rank < m {
            return Err(Error::RankDeficient { rank, required: m });
        }
        let pinv = vandermonde
            .clone()
            .pseudo_inverse(RANK_TOL * sv[0])
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let dft_offset = uniform_offset(instants, tau, m);
        Ok(Self {
            indices,
            tau,
            instants: instants.to_vec(),
            kernel_diag,
            pulse_diag,
            vandermonde,
            pinv,
            dft_offset,
        })
    }

    /// System matching the kernel and instants recorded with a sample set.
    pub fn from_samples(samples: &SampleSet, shape: &PulseShape) -> Result<Self> {
        let kernel = samples.meta.sampling_kernel()?;
        Self::new(&kernel, shape, &samples.instants)
    }

    pub fn indices(&self) -> &IndexSet {
        &self.indices
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn instants(&self) -> &[f64] {
        &self.instants
    }

    pub fn kernel_diag(&self) -> &[Complex64] {
        &self.kernel_diag
    }

    pub fn pulse_diag(&self) -> &[Complex64] {
        &self.pulse_diag
    }

    /// `V(-t_s)` with entries `exp(j 2 pi k t_n / tau)`.
    pub fn vandermonde(&self) -> &CMatrix {
        &self.vandermonde
    }

    /// True when `N = M` and `t_n = t_0 + n tau / N`.
    pub fn dft_applicable(&self) -> bool {
        self.dft_offset.is_some()
    }

    /// Noiseless samples for given coefficients: `V S x`.
    pub fn forward(&self, x: &[Complex64]) -> Vec<Complex64> {
        let sx = CVector::from_iterator(x.len(), x.iter().zip(&self.kernel_diag).map(|(a, b)| a * b));
        (&self.vandermonde * sx).iter().copied().collect()
    }
}

fn check_diagonal(indices: &IndexSet, diag: &[Complex64]) -> Result<()> {
    let max = diag.iter().map(|d| d.norm()).fold(0.0, f64::max);
    match indices.iter().zip(diag).find(|(_, d)| d.norm() <= ZERO_DIAG_REL * max || !d.is_finite()) {
        Some((k, _)) => Err(Error::ZeroDiagonal { k }),
        None if max == 0.0 => Err(Error::ZeroDiagonal { k: indices.k_min() }),
        None => Ok(()),
    }
}

fn uniform_offset(instants: &[f64], tau: f64, m: usize) -> Option<f64> {
    let n = instants.len();
    if n != m || n == 0 {
        return None;
    }
    let t0 = instants[0];
    let step = tau / n as f64;
    instants
        .iter()
        .enumerate()
        .all(|(i, &t)| (t - (t0 + i as f64 * step)).abs() <= 1e-12 * tau)
        .then_some(t0)
}

/// Coefficient extraction path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExtractMethod {
    /// DFT when applicable, least squares otherwise.
    #[default]
    Auto,
    LeastSquares,
    Dft,
}

/// `x = S^-1 V^+ c` for a sample set.
pub fn extract_coefficients(
    samples: &SampleSet,
    system: &CoefficientSystem,
    method: ExtractMethod,
) -> Result<FourierCoeffVector> {
    extract_from_values(&samples.values, system, method)
}

/// `x = S^-1 V^+ c` for raw sample values.
pub fn extract_from_values(
    values: &[Complex64],
    system: &CoefficientSystem,
    method: ExtractMethod,
) -> Result<FourierCoeffVector> {
    if values.len() != system.instants.len() {
        return Err(Error::InsufficientData(format!(
            "{} sample values for {} instants",
            values.len(),
            system.instants.len()
        )));
    }
    let vx = match (method, system.dft_offset) {
        (ExtractMethod::Dft, None) => {
            return Err(Error::InvalidConfig("DFT path needs N = M uniform samples at T = tau / N".into()))
        }
        (ExtractMethod::Dft, Some(t0)) | (ExtractMethod::Auto, Some(t0)) => dft_path(values, system, t0),
        _ => {
            let c = CVector::from_column_slice(values);
            (&system.pinv * c).iter().copied().collect()
        }
    };
    let values = vx.iter().zip(&system.kernel_diag).map(|(v, s)| v / s).collect();
    Ok(FourierCoeffVector {
        indices: system.indices,
        values,
        pulse_diag: Some(system.pulse_diag.clone()),
        kernel_diag: Some(system.kernel_diag.clone()),
    })
}

/// `(S x)_k = DFT(c)[k mod N] / N * exp(-j 2 pi k t0 / tau)`.
fn dft_path(values: &[Complex64], system: &CoefficientSystem, t0: f64) -> Vec<Complex64> {
    let n = values.len();
    let mut buf = values.to_vec();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    system
        .indices
        .iter()
        .map(|k| {
            let bin = k.rem_euclid(n as i64) as usize;
            buf[bin] / n as f64 * Complex64::from_polar(1.0, -TAU * k as f64 * t0 / system.tau)
        })
        .collect()
}

/// `y = H^-1 x` with a list of conditioning warnings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deconvolved {
    pub y: Vec<Complex64>,
    pub warnings: Vec<String>,
}

/// Removes the pulse spectrum: `y_k = x_k / ((1/tau) H(2 pi k / tau))`.
pub fn deconvolve_pulse(x: &FourierCoeffVector, h_diag: &[Complex64]) -> Result<Deconvolved> {
    if h_diag.len() != x.values.len() {
        return Err(Error::InvalidConfig("pulse diagonal length differs from coefficient count".into()));
    }
    check_diagonal(&x.indices, h_diag)?;
    let max = h_diag.iter().map(|h| h.norm()).fold(0.0, f64::max);
    let warnings = x
        .indices
        .iter()
        .zip(h_diag)
        .filter(|(_, h)| h.norm() < CONDITION_WARN_REL * max)
        .map(|(k, h)| format!("|H| at k = {k} is {:.3e} of the peak; deconvolution is ill-conditioned", h.norm() / max))
        .collect();
    let y = x.values.iter().zip(h_diag).map(|(v, h)| v / h).collect();
    Ok(Deconvolved { y, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryOptions {
    pub tls: bool,
    pub cadzow_iters: usize,
    pub extract: ExtractMethod,
    /// Replace `L` by the singular-value-gap estimate (capped at `L`).
    pub estimate_order: bool,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self {
            tls: false,
            cadzow_iters: 0,
            extract: ExtractMethod::Auto,
            estimate_order: false,
        }
    }
}

impl RecoveryOptions {
    /// TLS with the given Cadzow budget.
    pub fn denoising(cadzow_iters: usize) -> Self {
        Self {
            tls: true,
            cadzow_iters,
            ..Self::default()
        }
    }
}

/// Every intermediate of one recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub tau: f64,
    pub model_order: usize,
    pub options: RecoveryOptions,
    pub coefficients: FourierCoeffVector,
    pub y: Vec<Complex64>,
    /// Cadzow output, when denoising ran.
    pub y_denoised: Option<Vec<Complex64>>,
    /// Columns of the Cadzow Toeplitz matrix, when denoising ran.
    pub cadzow_columns: Option<usize>,
    pub annihilator: AnnihilatorResult,
    /// Delays in `[0, tau)` (absolute time for burst recoveries), ascending.
    pub delays: Vec<f64>,
    pub amplitudes: Vec<Complex64>,
    pub warnings: Vec<String>,
}

impl RecoveryResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Shifts delays by `offset` (burst start).
    pub fn shifted(mut self, offset: f64) -> Self {
        for t in &mut self.delays {
            *t += offset;
        }
        self
    }
}

/// Full pipeline on a sample set.
pub fn recover(
    samples: &SampleSet,
    system: &CoefficientSystem,
    pulses: usize,
    options: &RecoveryOptions,
) -> Result<RecoveryResult> {
    recover_values(&samples.values, system, pulses, options)
}

/// Full pipeline on raw sample values: extract, deconvolve, optionally
/// denoise, annihilate, fit amplitudes.
pub fn recover_values(
    values: &[Complex64],
    system: &CoefficientSystem,
    pulses: usize,
    options: &RecoveryOptions,
) -> Result<RecoveryResult> {
    let m = system.indices.len();
    if pulses == 0 || m < 2 * pulses {
        return Err(Error::InsufficientData(format!("M = {m} coefficients cannot resolve L = {pulses}")));
    }
    let coefficients = extract_from_values(values, system, options.extract)?;
    let Deconvolved { y, warnings } = deconvolve_pulse(&coefficients, &system.pulse_diag)?;
    let order = if options.estimate_order {
        estimate_model_order(&y, pulses)
    } else {
        pulses
    };
    let (work, y_denoised, columns) = if options.cadzow_iters > 0 {
        let d = cadzow_denoise(&y, order, options.cadzow_iters)?;
        (d.clone(), Some(d), Some(cadzow_columns(m)))
    } else {
        (y.clone(), None, None)
    };
    let mut annihilator = if options.tls {
        annihilating_filter_tls(&work, &system.indices, system.tau, order)?
    } else {
        annihilating_filter(&work, &system.indices, system.tau, order)?
    };
    if y_denoised.is_some() {
        let (a, res) = fit_amplitudes(&y, &system.indices, &annihilator.delays, system.tau)?;
        annihilator.amplitudes = a;
        annihilator.residual = res;
    }
    let mut warnings = warnings;
    if annihilator.root_collision {
        warnings.push("annihilating polynomial has (near-)repeated roots".into());
    }
    if annihilator.tie_broken {
        warnings.push("smallest singular values tied; lowest index chosen".into());
    }
    Ok(RecoveryResult {
        tau: system.tau,
        model_order: order,
        options: *options,
        coefficients,
        y,
        y_denoised,
        cadzow_columns: columns,
        delays: annihilator.delays.clone(),
        amplitudes: annihilator.amplitudes.clone(),
        annihilator,
        warnings,
    })
}

/// `||sort(t) - sort(t^)||^2`; `None` when the lengths differ.
pub fn delay_error_sq(truth: &[f64], estimate: &[f64]) -> Option<f64> {
    if truth.len() != estimate.len() {
        return None;
    }
    let mut a = truth.to_vec();
    let mut b = estimate.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Some(a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum())
}
