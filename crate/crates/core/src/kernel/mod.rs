//! Sum-of-Sincs (SoS) sampling kernels.
//!
//! In frequency, `G(w) = (tau / sqrt(2 pi)) sum_k b_k phi(w tau / 2 pi - k)`
//! with `phi = sinc` by default; in time the default kernel is the windowed
//! Fourier sum `g(t) = rect(t / tau) sum_k b_k exp(j 2 pi k t / tau)`.
//!
//! `G` is reported in the unitary convention (the `1/sqrt(2 pi)` factor),
//! while [`SamplingKernel::sampling_response`] gives the unnormalized
//! analysis integral that actually multiplies `X[k]` in the samples.

mod optimal;

pub use optimal::{
    kkt_residual, optimal_coefficients, waterfill, PhaseProfile, PowerAllocation, Waterfill,
};

use std::f64::consts::{PI, TAU};
use std::ops::RangeInclusive;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::IndexSet;

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Normalized sinc `sin(pi x) / (pi x)`, exactly zero at nonzero integers.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    if x.fract() == 0.0 {
        return 0.0;
    }
    (PI * x).sin() / (PI * x)
}

/// Snap `u` to the nearest integer when it is within rounding distance.
fn snap(u: f64) -> f64 {
    let r = u.round();
    if (u - r).abs() <= 1e-12 * r.abs().max(1.0) {
        r
    } else {
        u
    }
}

/// Tabulated real function on a symmetric grid, linearly interpolated and
/// zero outside. Sample `i` sits at `(i - (n - 1) / 2) * spacing`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tabulated {
    pub samples: Vec<f64>,
    pub spacing: f64,
}

impl Tabulated {
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.samples.len();
        if n == 0 {
            return 0.0;
        }
        let pos = x / self.spacing + (n - 1) as f64 / 2.0;
        if pos < 0.0 || pos > (n - 1) as f64 {
            return 0.0;
        }
        let i = pos.floor() as usize;
        if i + 1 >= n {
            return self.samples[n - 1];
        }
        let frac = pos - i as f64;
        self.samples[i] * (1.0 - frac) + self.samples[i + 1] * frac
    }

    pub fn half_width(&self) -> f64 {
        (self.samples.len().saturating_sub(1)) as f64 * self.spacing / 2.0
    }
}

/// Frequency-domain window `phi` of an SoS kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum Window {
    /// `phi = sinc`, time window `rect(t / tau)`.
    RectSinc,
    /// Tabulated `phi` with `phi(0) = 1` and `phi(n) = 0` for integers
    /// `n != 0`. `time_window`, when given, is the matching time-domain
    /// window `w(t)` so that `g(t) = w(t) sum_k b_k exp(j 2 pi k t / tau)`.
    Custom {
        phi: Tabulated,
        time_window: Option<Tabulated>,
    },
}

/// SoS kernel `g(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SosKernel {
    tau: f64,
    indices: IndexSet,
    coeffs: Vec<Complex64>,
    window: Window,
}

impl SosKernel {
    pub fn new(tau: f64, indices: IndexSet, coeffs: Vec<Complex64>, window: Window) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidKernel(format!("tau must be > 0, got {tau}")));
        }
        if coeffs.len() != indices.len() {
            return Err(Error::InvalidKernel(format!(
                "{} coefficients for an index set of size {}",
                coeffs.len(),
                indices.len()
            )));
        }
        if let Some((k, _)) = indices.iter().zip(&coeffs).find(|(_, b)| b.norm() == 0.0 || !b.is_finite()) {
            return Err(Error::InvalidKernel(format!("coefficient b_{k} must be finite and nonzero")));
        }
        if let Window::Custom { phi, .. } = &window {
            validate_phi(phi)?;
        }
        Ok(Self {
            tau,
            indices,
            coeffs,
            window,
        })
    }

    /// Rect-sinc kernel from real coefficients.
    pub fn rect_sinc(tau: f64, indices: IndexSet, coeffs: &[f64]) -> Result<Self> {
        let coeffs = coeffs.iter().map(|&b| Complex64::new(b, 0.0)).collect();
        Self::new(tau, indices, coeffs, Window::RectSinc)
    }

    /// All `b_k = 1`: the Dirichlet kernel.
    pub fn dirichlet(tau: f64, indices: IndexSet) -> Result<Self> {
        Self::rect_sinc(tau, indices, &vec![1.0; indices.len()])
    }

    /// Symmetric Hamming-window coefficients over the index set.
    pub fn hamming(tau: f64, indices: IndexSet) -> Result<Self> {
        Self::rect_sinc(tau, indices, &hamming_coefficients(indices.len()))
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn indices(&self) -> &IndexSet {
        &self.indices
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn coefficient(&self, k: i64) -> Option<Complex64> {
        self.indices.position(k).map(|i| self.coeffs[i])
    }

    /// True iff the index set is symmetric and `b_k = conj(b_{-k})`.
    pub fn is_real(&self) -> bool {
        if !self.indices.is_symmetric() {
            return false;
        }
        let scale = self.coeffs.iter().map(|b| b.norm()).fold(0.0, f64::max);
        self.indices.iter().all(|k| {
            let b = self.coefficient(k).unwrap();
            let bm = self.coefficient(-k).unwrap();
            (b - bm.conj()).norm() <= 1e-14 * scale
        })
    }

    /// Time support width (`tau` for the rect window).
    pub fn support(&self) -> f64 {
        match &self.window {
            Window::RectSinc => self.tau,
            Window::Custom {
                time_window: Some(w), ..
            } => 2.0 * w.half_width(),
            Window::Custom { time_window: None, .. } => f64::INFINITY,
        }
    }

    /// `sum_k b_k exp(j 2 pi k t / tau)` without any window.
    pub fn fourier_sum(&self, t: f64) -> Complex64 {
        let theta = TAU * t / self.tau;
        self.indices
            .iter()
            .zip(&self.coeffs)
            .map(|(k, b)| b * Complex64::from_polar(1.0, theta * k as f64))
            .sum()
    }

    /// `g(t)`. The rect window is half-open: `[-tau/2, tau/2)`.
    pub fn eval_time(&self, t: f64) -> Result<Complex64> {
        match &self.window {
            Window::RectSinc => {
                let half = 0.5 * self.tau;
                if t >= -half && t < half {
                    Ok(self.fourier_sum(t))
                } else {
                    Ok(Complex64::new(0.0, 0.0))
                }
            }
            Window::Custom {
                time_window: Some(w), ..
            } => {
                let wv = w.eval(t);
                if wv == 0.0 {
                    Ok(Complex64::new(0.0, 0.0))
                } else {
                    Ok(self.fourier_sum(t) * wv)
                }
            }
            Window::Custom { time_window: None, .. } => Err(Error::UnsupportedKernel(
                "custom window has no tabulated time-domain form".into(),
            )),
        }
    }

    /// `G(w)` in the unitary convention.
    pub fn eval_freq(&self, omega: f64) -> Complex64 {
        let u = snap(omega * self.tau / TAU);
        let sum: Complex64 = self
            .indices
            .iter()
            .zip(&self.coeffs)
            .map(|(k, b)| b * self.phi(u - k as f64))
            .sum();
        sum * (self.tau / SQRT_2PI)
    }

    fn phi(&self, x: f64) -> f64 {
        match &self.window {
            Window::RectSinc => sinc(x),
            Window::Custom { phi, .. } => {
                if x.fract() == 0.0 {
                    if x == 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    phi.eval(x)
                }
            }
        }
    }

    /// Same kernel with the coefficient at `k` replaced (no validation).
    /// Used to build deliberately broken kernels for condition checks.
    pub fn with_raw_coefficient(&self, k: i64, value: Complex64) -> Self {
        let mut out = self.clone();
        if let Some(i) = self.indices.position(k) {
            out.coeffs[i] = value;
        }
        out
    }
}

fn validate_phi(phi: &Tabulated) -> Result<()> {
    if !(phi.spacing.is_finite() && phi.spacing > 0.0) || phi.samples.is_empty() {
        return Err(Error::InvalidKernel("custom phi needs samples and a positive spacing".into()));
    }
    if (phi.eval(0.0) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidKernel("custom phi must satisfy phi(0) = 1".into()));
    }
    let max_n = phi.half_width().floor() as i64;
    for n in 1..=max_n {
        for x in [n as f64, -(n as f64)] {
            if phi.eval(x).abs() > 1e-9 {
                return Err(Error::InvalidKernel(format!("custom phi must vanish at {x}")));
            }
        }
    }
    Ok(())
}

/// Symmetric Hamming window of length `m`: `0.54 - 0.46 cos(2 pi i / (m - 1))`.
pub fn hamming_coefficients(m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![1.0];
    }
    (0..m)
        .map(|i| 0.54 - 0.46 * (TAU * i as f64 / (m - 1) as f64).cos())
        .collect()
}

/// `g_r(t) = sum_{m=-r}^{r} g(t + m tau)`, support `(2r + 1) tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicExtensionKernel {
    base: SosKernel,
    r: usize,
}

impl PeriodicExtensionKernel {
    pub fn new(base: SosKernel, r: usize) -> Self {
        Self { base, r }
    }

    pub fn base(&self) -> &SosKernel {
        &self.base
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn support(&self) -> f64 {
        (2 * self.r + 1) as f64 * self.base.support()
    }

    pub fn eval_time(&self, t: f64) -> Result<Complex64> {
        let r = self.r as i64;
        let tau = self.base.tau();
        let mut acc = Complex64::new(0.0, 0.0);
        for m in -r..=r {
            acc += self.base.eval_time(t + m as f64 * tau)?;
        }
        Ok(acc)
    }
}

/// Replica count `r = ceil((R / tau + 3) / 2) - 1` for pulse support `R`.
pub fn replica_count(pulse_support: f64, tau: f64) -> usize {
    let v = ((pulse_support / tau + 3.0) / 2.0).ceil() - 1.0;
    v.max(0.0) as usize
}

pub fn make_periodic_extension(kernel: &SosKernel, pulse_support: f64) -> Result<PeriodicExtensionKernel> {
    if !(pulse_support.is_finite() && pulse_support >= 0.0) {
        return Err(Error::InvalidKernel(format!(
            "pulse support must be finite and >= 0, got {pulse_support}"
        )));
    }
    // Custom windows need a time-domain form to be replicated.
    kernel.eval_time(0.0)?;
    Ok(PeriodicExtensionKernel::new(
        kernel.clone(),
        replica_count(pulse_support, kernel.tau()),
    ))
}

/// Ideal lowpass `S(w) = rect(w / 2 pi B) / sqrt(2 pi)` with `B = M / tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowpassKernel {
    pub tau: f64,
    pub m: usize,
}

impl LowpassKernel {
    pub fn new(tau: f64, m: usize) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) || m == 0 {
            return Err(Error::InvalidKernel("lowpass needs tau > 0 and M >= 1".into()));
        }
        Ok(Self { tau, m })
    }

    pub fn bandwidth(&self) -> f64 {
        self.m as f64 / self.tau
    }

    /// Passband index set `{-floor(M/2), ..., floor(M/2)}`.
    pub fn indices(&self) -> IndexSet {
        IndexSet::symmetric((self.m / 2) as u32)
    }

    /// `S(w)`, unitary convention.
    pub fn eval_freq(&self, omega: f64) -> Complex64 {
        let edge = PI * self.bandwidth();
        let v = if omega.abs() < edge {
            1.0
        } else if omega.abs() == edge {
            0.5
        } else {
            0.0
        };
        Complex64::new(v / SQRT_2PI, 0.0)
    }

    /// `s(t) = B sinc(B t)`.
    pub fn eval_time(&self, t: f64) -> Complex64 {
        let b = self.bandwidth();
        Complex64::new(b * sinc(b * t), 0.0)
    }
}

/// Kernel used by the acquisition engine.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplingKernel {
    Sos(SosKernel),
    Extended(PeriodicExtensionKernel),
    Lowpass(LowpassKernel),
}

impl SamplingKernel {
    pub fn tau(&self) -> f64 {
        match self {
            SamplingKernel::Sos(k) => k.tau(),
            SamplingKernel::Extended(k) => k.base().tau(),
            SamplingKernel::Lowpass(k) => k.tau,
        }
    }

    pub fn indices(&self) -> IndexSet {
        match self {
            SamplingKernel::Sos(k) => *k.indices(),
            SamplingKernel::Extended(k) => *k.base().indices(),
            SamplingKernel::Lowpass(k) => k.indices(),
        }
    }

    /// Time support width; infinite for the lowpass kernel.
    pub fn support(&self) -> f64 {
        match self {
            SamplingKernel::Sos(k) => k.support(),
            SamplingKernel::Extended(k) => k.support(),
            SamplingKernel::Lowpass(_) => f64::INFINITY,
        }
    }

    pub fn eval_time(&self, t: f64) -> Result<Complex64> {
        match self {
            SamplingKernel::Sos(k) => k.eval_time(t),
            SamplingKernel::Extended(k) => k.eval_time(t),
            SamplingKernel::Lowpass(k) => Ok(k.eval_time(t)),
        }
    }

    /// `int s(t) exp(-j 2 pi k t / tau) dt` for `k` in the passband: the
    /// factor that multiplies `X[k]` (after conjugation) in the samples.
    pub fn sampling_response(&self, k: i64) -> Complex64 {
        match self {
            SamplingKernel::Sos(s) => s.eval_freq(TAU * k as f64 / s.tau()) * SQRT_2PI,
            SamplingKernel::Extended(e) => {
                let s = e.base();
                s.eval_freq(TAU * k as f64 / s.tau()) * SQRT_2PI
            }
            SamplingKernel::Lowpass(l) => l.eval_freq(TAU * k as f64 / l.tau) * SQRT_2PI,
        }
    }

    /// Unitary-convention frequency response.
    pub fn eval_freq(&self, omega: f64) -> Complex64 {
        match self {
            SamplingKernel::Sos(s) => s.eval_freq(omega),
            SamplingKernel::Extended(e) => e.base().eval_freq(omega),
            SamplingKernel::Lowpass(l) => l.eval_freq(omega),
        }
    }
}

impl From<SosKernel> for SamplingKernel {
    fn from(k: SosKernel) -> Self {
        SamplingKernel::Sos(k)
    }
}

impl From<PeriodicExtensionKernel> for SamplingKernel {
    fn from(k: PeriodicExtensionKernel) -> Self {
        SamplingKernel::Extended(k)
    }
}

impl From<LowpassKernel> for SamplingKernel {
    fn from(k: LowpassKernel) -> Self {
        SamplingKernel::Lowpass(k)
    }
}

// ---------------------------------------------------------------------------
// Sampling-condition check.

/// Relative threshold below which `|S|` counts as zero.
pub const EPS_ZERO_REL: f64 = 1e-9;
/// Relative threshold above which `|S|` counts as nonzero.
pub const EPS_NONZERO_REL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionStatus {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub k: i64,
    pub magnitude: f64,
    pub in_set: bool,
    pub status: ConditionStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub entries: Vec<ConditionEntry>,
    pub eps_zero: f64,
    pub eps_nonzero: f64,
}

impl ConditionReport {
    /// True when every probed index passes.
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.status == ConditionStatus::Pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConditionEntry> {
        self.entries.iter().filter(|e| e.status == ConditionStatus::Fail)
    }

    pub fn inconclusive(&self) -> impl Iterator<Item = &ConditionEntry> {
        self.entries.iter().filter(|e| e.status == ConditionStatus::Inconclusive)
    }
}

/// Checks that `S(2 pi k / tau)` vanishes for `k` outside the index set and
/// is nonzero inside it, for every `k` in `probe`.
pub fn verify_condition<F>(
    response: F,
    indices: &IndexSet,
    tau: f64,
    probe: RangeInclusive<i64>,
) -> Result<ConditionReport>
where
    F: Fn(f64) -> Complex64,
{
    if *probe.start() > indices.k_min() || *probe.end() < indices.k_max() {
        return Err(Error::InvalidIndexSet(format!(
            "probe range {probe:?} does not cover the index set"
        )));
    }
    let magnitudes: Vec<(i64, f64)> = probe.map(|k| (k, response(TAU * k as f64 / tau).norm())).collect();
    let peak = magnitudes
        .iter()
        .filter(|(k, _)| indices.contains(*k))
        .map(|&(_, m)| m)
        .fold(0.0, f64::max);
    let eps_zero = EPS_ZERO_REL * peak;
    let eps_nonzero = EPS_NONZERO_REL * peak;
    let entries = magnitudes
        .into_iter()
        .map(|(k, magnitude)| {
            let in_set = indices.contains(k);
            // A vanishing peak means nothing inside the set can pass.
            let status = if peak == 0.0 {
                if in_set {
                    ConditionStatus::Fail
                } else {
                    ConditionStatus::Pass
                }
            } else if magnitude <= eps_zero {
                if in_set {
                    ConditionStatus::Fail
                } else {
                    ConditionStatus::Pass
                }
            } else if magnitude >= eps_nonzero {
                if in_set {
                    ConditionStatus::Pass
                } else {
                    ConditionStatus::Fail
                }
            } else {
                ConditionStatus::Inconclusive
            };
            ConditionEntry {
                k,
                magnitude,
                in_set,
                status,
            }
        })
        .collect();
    Ok(ConditionReport {
        entries,
        eps_zero,
        eps_nonzero,
    })
}

// ---------------------------------------------------------------------------
// JSON form.

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEntry {
    pub k: i64,
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowTag {
    #[serde(rename = "rect-sinc")]
    RectSinc,
    #[serde(rename = "custom")]
    Custom,
}

/// `{tau, k_min, k_max, coefficients: [{k, re, im}], window, r?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDocument {
    pub tau: f64,
    pub k_min: i64,
    pub k_max: i64,
    pub coefficients: Vec<CoefficientEntry>,
    pub window: WindowTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Tabulated>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_window: Option<Tabulated>,
}

impl From<&SosKernel> for KernelDocument {
    fn from(k: &SosKernel) -> Self {
        let (window, phi, time_window) = match k.window() {
            Window::RectSinc => (WindowTag::RectSinc, None, None),
            Window::Custom { phi, time_window } => (WindowTag::Custom, Some(phi.clone()), time_window.clone()),
        };
        Self {
            tau: k.tau(),
            k_min: k.indices().k_min(),
            k_max: k.indices().k_max(),
            coefficients: k
                .indices()
                .iter()
                .zip(k.coefficients())
                .map(|(k, b)| CoefficientEntry { k, re: b.re, im: b.im })
                .collect(),
            window,
            r: None,
            phi,
            time_window,
        }
    }
}

impl From<&PeriodicExtensionKernel> for KernelDocument {
    fn from(k: &PeriodicExtensionKernel) -> Self {
        Self {
            r: Some(k.r()),
            ..KernelDocument::from(k.base())
        }
    }
}

impl KernelDocument {
    pub fn to_kernel(&self) -> Result<SosKernel> {
        let indices = IndexSet::new(self.k_min, self.k_max)?;
        let mut coeffs = vec![None; indices.len()];
        for e in &self.coefficients {
            let i = indices
                .position(e.k)
                .ok_or_else(|| Error::InvalidKernel(format!("coefficient index {} outside [k_min, k_max]", e.k)))?;
            coeffs[i] = Some(Complex64::new(e.re, e.im));
        }
        let coeffs = coeffs
            .into_iter()
            .zip(indices.iter())
            .map(|(c, k)| c.ok_or_else(|| Error::InvalidKernel(format!("missing coefficient for k = {k}"))))
            .collect::<Result<Vec<_>>>()?;
        let window = match self.window {
            WindowTag::RectSinc => Window::RectSinc,
            WindowTag::Custom => Window::Custom {
                phi: self
                    .phi
                    .clone()
                    .ok_or_else(|| Error::InvalidKernel("custom window needs a tabulated phi".into()))?,
                time_window: self.time_window.clone(),
            },
        };
        SosKernel::new(self.tau, indices, coeffs, window)
    }

    /// Base kernel or, when `r` is present, its periodic extension.
    pub fn to_sampling_kernel(&self) -> Result<SamplingKernel> {
        let base = self.to_kernel()?;
        Ok(match self.r {
            Some(r) => PeriodicExtensionKernel::new(base, r).into(),
            None => base.into(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
