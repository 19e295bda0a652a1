//! Pulse shapes, pulse streams and their Fourier-series coefficients.
//!
//! A stream is `x(t) = sum_l a_l h(t - t_l)`, optionally repeated with
//! period `tau`. The CTFT convention throughout is the unnormalized analysis
//! transform `X(w) = int x(t) exp(-j w t) dt`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::IndexSet;

/// Effective support of a Gaussian pulse, in units of sigma.
pub const GAUSSIAN_SUPPORT_SIGMAS: f64 = 8.0;
/// Half-width, in sigmas, beyond which a Gaussian is below double precision.
pub const GAUSSIAN_REACH_SIGMAS: f64 = 9.0;

/// Known pulse shape `h(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PulseShape {
    Dirac,
    /// Unit-area Gaussian `exp(-t^2 / 2 sigma^2) / sqrt(2 pi sigma^2)`.
    Gaussian { sigma: f64 },
    /// Real samples of a pulse centered at `t = 0`, sample `i` sitting at
    /// `(i - (n - 1) / 2) * spacing`. Linear interpolation in between.
    TabulatedSymmetric { samples: Vec<f64>, spacing: f64 },
}

impl PulseShape {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        let shape = PulseShape::Gaussian { sigma };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PulseShape::Dirac => Ok(()),
            PulseShape::Gaussian { sigma } => {
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::InvalidShape(format!("gaussian sigma must be > 0, got {sigma}")));
                }
                Ok(())
            }
            PulseShape::TabulatedSymmetric { samples, spacing } => {
                if !(spacing.is_finite() && *spacing > 0.0) {
                    return Err(Error::InvalidShape(format!("tabulated spacing must be > 0, got {spacing}")));
                }
                if samples.is_empty() || samples.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidShape("tabulated samples must be finite and non-empty".into()));
                }
                Ok(())
            }
        }
    }

    /// Support width `R`, with `h(t) = 0` for `|t| >= R/2`. Gaussians use
    /// the effective support of `GAUSSIAN_SUPPORT_SIGMAS * sigma`.
    pub fn support(&self) -> f64 {
        match self {
            PulseShape::Dirac => 0.0,
            PulseShape::Gaussian { sigma } => GAUSSIAN_SUPPORT_SIGMAS * sigma,
            PulseShape::TabulatedSymmetric { samples, spacing } => {
                (samples.len().saturating_sub(1)) as f64 * spacing
            }
        }
    }

    /// Half-width beyond which `h(t)` evaluates to zero in double precision.
    pub fn reach(&self) -> f64 {
        match self {
            PulseShape::Gaussian { sigma } => GAUSSIAN_REACH_SIGMAS * sigma,
            _ => 0.5 * self.support(),
        }
    }

    pub fn is_dirac(&self) -> bool {
        matches!(self, PulseShape::Dirac)
    }

    /// Pointwise value `h(t)`. Fails for Dirac pulses.
    pub fn eval(&self, t: f64) -> Result<f64> {
        match self {
            PulseShape::Dirac => Err(Error::DiracOnGrid),
            PulseShape::Gaussian { sigma } => Ok(gaussian(t, *sigma)),
            PulseShape::TabulatedSymmetric { samples, spacing } => {
                let half = (samples.len() - 1) as f64 / 2.0;
                let pos = t / spacing + half;
                if pos < 0.0 || pos > (samples.len() - 1) as f64 {
                    return Ok(0.0);
                }
                let i = pos.floor() as usize;
                if i + 1 >= samples.len() {
                    return Ok(samples[samples.len() - 1]);
                }
                let frac = pos - i as f64;
                Ok(samples[i] * (1.0 - frac) + samples[i + 1] * frac)
            }
        }
    }

    /// CTFT `H(w)`.
    pub fn ctft(&self, omega: f64) -> Complex64 {
        match self {
            PulseShape::Dirac => Complex64::new(1.0, 0.0),
            PulseShape::Gaussian { sigma } => {
                Complex64::new((-0.5 * omega * omega * sigma * sigma).exp(), 0.0)
            }
            PulseShape::TabulatedSymmetric { samples, spacing } => {
                // Trapezoidal quadrature of the analysis integral.
                let n = samples.len();
                let half = (n - 1) as f64 / 2.0;
                let mut acc = Complex64::new(0.0, 0.0);
                for (i, &h) in samples.iter().enumerate() {
                    let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                    let t = (i as f64 - half) * spacing;
                    acc += Complex64::from_polar(w * h, -omega * t);
                }
                acc * *spacing
            }
        }
    }
}

/// Alias kept for readability at call sites that mirror the operation list.
pub fn ctft_pulse(shape: &PulseShape, omega: f64) -> Complex64 {
    shape.ctft(omega)
}

fn gaussian(t: f64, sigma: f64) -> f64 {
    (-(t * t) / (2.0 * sigma * sigma)).exp() / (TAU * sigma * sigma).sqrt()
}

/// How the pulses repeat in time.
#[derive(Debug, Clone, PartialEq)]
pub enum StreamKind {
    /// `tau`-periodic repetition, delays in `[0, tau)`.
    Periodic { tau: f64 },
    /// A single window, delays in `[0, tau)`.
    Finite { tau: f64 },
    /// Bursts of duration at most `tau` starting at `burst_starts`. Delays
    /// are absolute times, each inside some `[start, start + tau)`.
    Bursty { tau: f64, burst_starts: Vec<f64> },
}

impl StreamKind {
    pub fn tau(&self) -> f64 {
        match self {
            StreamKind::Periodic { tau } | StreamKind::Finite { tau } | StreamKind::Bursty { tau, .. } => *tau,
        }
    }
}

/// Parametric pulse stream.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseStream {
    shape: PulseShape,
    delays: Vec<f64>,
    amplitudes: Vec<Complex64>,
    kind: StreamKind,
}

impl PulseStream {
    pub fn new(
        shape: PulseShape,
        delays: Vec<f64>,
        amplitudes: Vec<Complex64>,
        kind: StreamKind,
    ) -> Result<Self> {
        let stream = Self {
            shape,
            delays,
            amplitudes,
            kind,
        };
        stream.validate()?;
        Ok(stream)
    }

    /// Convenience constructor for real amplitudes.
    pub fn real(shape: PulseShape, delays: Vec<f64>, amplitudes: &[f64], kind: StreamKind) -> Result<Self> {
        let amplitudes = amplitudes.iter().map(|&a| Complex64::new(a, 0.0)).collect();
        Self::new(shape, delays, amplitudes, kind)
    }

    pub fn periodic(shape: PulseShape, tau: f64, delays: Vec<f64>, amplitudes: &[f64]) -> Result<Self> {
        Self::real(shape, delays, amplitudes, StreamKind::Periodic { tau })
    }

    pub fn finite(shape: PulseShape, tau: f64, delays: Vec<f64>, amplitudes: &[f64]) -> Result<Self> {
        Self::real(shape, delays, amplitudes, StreamKind::Finite { tau })
    }

    fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        let tau = self.kind.tau();
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidStream(format!("tau must be > 0, got {tau}")));
        }
        if self.delays.is_empty() {
            return Err(Error::InvalidStream("at least one pulse is required".into()));
        }
        if self.delays.len() != self.amplitudes.len() {
            return Err(Error::InvalidStream(format!(
                "{} delays but {} amplitudes",
                self.delays.len(),
                self.amplitudes.len()
            )));
        }
        if self.delays.iter().any(|t| !t.is_finite()) || self.amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidStream("non-finite delay or amplitude".into()));
        }
        let mut sorted = self.delays.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidStream("delays must be pairwise distinct".into()));
        }
        match &self.kind {
            StreamKind::Periodic { .. } | StreamKind::Finite { .. } => {
                if let Some(t) = self.delays.iter().find(|&&t| !(0.0..tau).contains(&t)) {
                    return Err(Error::InvalidStream(format!("delay {t} outside [0, {tau})")));
                }
            }
            StreamKind::Bursty { burst_starts, .. } => {
                if burst_starts.is_empty() {
                    return Err(Error::InvalidStream("bursty stream without bursts".into()));
                }
                if burst_starts.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidStream("burst starts must be increasing".into()));
                }
                for &t in &self.delays {
                    if self.burst_of(t).is_none() {
                        return Err(Error::InvalidStream(format!("delay {t} is not inside any burst window")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Burst index whose window `[start, start + tau)` holds `t`.
    pub fn burst_of(&self, t: f64) -> Option<usize> {
        match &self.kind {
            StreamKind::Bursty { tau, burst_starts } => burst_starts
                .iter()
                .position(|&s| t >= s && t < s + tau),
            _ => None,
        }
    }

    pub fn shape(&self) -> &PulseShape {
        &self.shape
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn kind(&self) -> &StreamKind {
        &self.kind
    }

    pub fn tau(&self) -> f64 {
        self.kind.tau()
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    /// True when every amplitude is real.
    pub fn is_real(&self) -> bool {
        self.amplitudes.iter().all(|a| a.im == 0.0)
    }

    /// Same pulses with a different stream kind.
    pub fn with_kind(&self, kind: StreamKind) -> Result<Self> {
        Self::new(self.shape.clone(), self.delays.clone(), self.amplitudes.clone(), kind)
    }

    /// Same pulses with scaled amplitudes.
    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            amplitudes: self.amplitudes.iter().map(|a| a * factor).collect(),
            ..self.clone()
        }
    }

    /// Pulses `(delay, amplitude)` for which `h(t - t_l)` may be nonzero on
    /// `[lo, hi]`, including periodic replicas.
    pub fn pulses_touching(&self, lo: f64, hi: f64) -> Vec<(f64, Complex64)> {
        let half = self.shape.reach();
        let mut out = Vec::new();
        match &self.kind {
            StreamKind::Periodic { tau } => {
                for (&t, &a) in self.delays.iter().zip(&self.amplitudes) {
                    let m_lo = ((lo - half - t) / tau).floor() as i64;
                    let m_hi = ((hi + half - t) / tau).ceil() as i64;
                    for m in m_lo..=m_hi {
                        let c = t + m as f64 * tau;
                        if c + half >= lo && c - half <= hi {
                            out.push((c, a));
                        }
                    }
                }
            }
            _ => {
                for (&t, &a) in self.delays.iter().zip(&self.amplitudes) {
                    if t + half >= lo && t - half <= hi {
                        out.push((t, a));
                    }
                }
            }
        }
        out
    }
}

/// Uniform fine grid `t0 + i * dt`, `i = 0..n_points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FineGrid {
    pub t0: f64,
    pub dt: f64,
    pub n_points: usize,
}

impl FineGrid {
    pub fn new(t0: f64, dt: f64, n_points: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidGrid(format!("dt must be > 0, got {dt}")));
        }
        if n_points < 2 {
            return Err(Error::InvalidGrid("need at least 2 grid points".into()));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidGrid("t0 must be finite".into()));
        }
        Ok(Self { t0, dt, n_points })
    }

    /// Grid covering `[start, start + duration)` with `n_points` samples.
    pub fn over(start: f64, duration: f64, n_points: usize) -> Result<Self> {
        Self::new(start, duration / n_points as f64, n_points)
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.time(self.n_points - 1)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|i| self.time(i))
    }

    /// Checks that the grid is at least `factor` times finer than `period`.
    pub fn check_resolution(&self, period: f64, factor: f64) -> Result<()> {
        let required = period / factor;
        if self.dt > required * (1.0 + 1e-9) {
            return Err(Error::GridTooCoarse { dt: self.dt, required });
        }
        Ok(())
    }
}

/// `v[i] = sum_l a_l h(t_i - t_l)` over the grid, periodic replicas included.
pub fn evaluate_stream(stream: &PulseStream, grid: &FineGrid) -> Result<Vec<Complex64>> {
    let shape = stream.shape();
    match shape {
        PulseShape::Dirac => return Err(Error::DiracOnGrid),
        PulseShape::Gaussian { sigma } => {
            // At least two samples per sigma.
            if grid.dt > 0.5 * sigma {
                return Err(Error::GridTooCoarse {
                    dt: grid.dt,
                    required: 0.5 * sigma,
                });
            }
        }
        PulseShape::TabulatedSymmetric { spacing, .. } => {
            if grid.dt > 2.0 * spacing {
                return Err(Error::GridTooCoarse {
                    dt: grid.dt,
                    required: 2.0 * spacing,
                });
            }
        }
    }
    let pulses = stream.pulses_touching(grid.t0, grid.end());
    let half = shape.reach();
    let mut out = vec![Complex64::new(0.0, 0.0); grid.n_points];
    for (center, amp) in pulses {
        // Only visit grid points the pulse can reach.
        let lo = (((center - half) - grid.t0) / grid.dt).floor().max(0.0) as usize;
        let hi = ((((center + half) - grid.t0) / grid.dt).ceil().max(0.0) as usize).min(grid.n_points - 1);
        for (i, slot) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let t = grid.time(i);
            *slot += amp * shape.eval(t - center)?;
        }
    }
    Ok(out)
}

/// Fourier coefficients `X[k]` for `k` in an index set, with the diagonal
/// corrections used to obtain them when they came from samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierCoeffVector {
    pub indices: IndexSet,
    pub values: Vec<Complex64>,
    /// `(1/tau) H(2 pi k / tau)` per index, when known.
    pub pulse_diag: Option<Vec<Complex64>>,
    /// Sampling-kernel response per index, when known.
    pub kernel_diag: Option<Vec<Complex64>>,
}

impl FourierCoeffVector {
    pub fn new(indices: IndexSet, values: Vec<Complex64>) -> Self {
        Self {
            indices,
            values,
            pulse_diag: None,
            kernel_diag: None,
        }
    }

    pub fn get(&self, k: i64) -> Option<Complex64> {
        self.indices.position(k).map(|i| self.values[i])
    }
}

/// `(1/tau) H(2 pi k / tau)` for every index.
pub fn pulse_diagonal(shape: &PulseShape, tau: f64, indices: &IndexSet) -> Vec<Complex64> {
    indices
        .iter()
        .map(|k| shape.ctft(TAU * k as f64 / tau) / tau)
        .collect()
}

/// Closed-form Fourier-series coefficients
/// `X[k] = (1/tau) H(2 pi k / tau) sum_l a_l exp(-j 2 pi k t_l / tau)`.
///
/// Finite streams are treated through their `tau`-periodization.
pub fn exact_fourier_coeffs(stream: &PulseStream, indices: &IndexSet) -> Result<FourierCoeffVector> {
    if let StreamKind::Bursty { .. } = stream.kind() {
        return Err(Error::InvalidStream(
            "Fourier series are defined for periodic or single-window streams".into(),
        ));
    }
    let tau = stream.tau();
    let diag = pulse_diagonal(stream.shape(), tau, indices);
    let values = indices
        .iter()
        .zip(&diag)
        .map(|(k, &h)| h * exponential_sum(stream.delays(), stream.amplitudes(), k, tau))
        .collect();
    Ok(FourierCoeffVector {
        indices: *indices,
        values,
        pulse_diag: Some(diag),
        kernel_diag: None,
    })
}

/// `sum_l a_l exp(-j 2 pi k t_l / tau)`.
pub fn exponential_sum(delays: &[f64], amplitudes: &[Complex64], k: i64, tau: f64) -> Complex64 {
    delays
        .iter()
        .zip(amplitudes)
        .map(|(&t, &a)| a * Complex64::from_polar(1.0, -2.0 * PI * k as f64 * t / tau))
        .sum()
}

// ---------------------------------------------------------------------------
// JSON document form.

/// Amplitude as written in stream documents: a bare real number or `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AmplitudeRepr {
    Real(f64),
    Complex([f64; 2]),
}

impl From<Complex64> for AmplitudeRepr {
    fn from(a: Complex64) -> Self {
        if a.im == 0.0 {
            AmplitudeRepr::Real(a.re)
        } else {
            AmplitudeRepr::Complex([a.re, a.im])
        }
    }
}

impl From<AmplitudeRepr> for Complex64 {
    fn from(a: AmplitudeRepr) -> Self {
        match a {
            AmplitudeRepr::Real(re) => Complex64::new(re, 0.0),
            AmplitudeRepr::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKindTag {
    Periodic,
    Finite,
    Bursty,
}

/// Serialized stream: `{shape, tau, kind, delays, amplitudes, burst_starts?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamDocument {
    pub shape: PulseShape,
    pub tau: f64,
    pub kind: StreamKindTag,
    pub delays: Vec<f64>,
    pub amplitudes: Vec<AmplitudeRepr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burst_starts: Option<Vec<f64>>,
}

impl From<&PulseStream> for StreamDocument {
    fn from(s: &PulseStream) -> Self {
        let (kind, burst_starts) = match s.kind() {
            StreamKind::Periodic { .. } => (StreamKindTag::Periodic, None),
            StreamKind::Finite { .. } => (StreamKindTag::Finite, None),
            StreamKind::Bursty { burst_starts, .. } => (StreamKindTag::Bursty, Some(burst_starts.clone())),
        };
        Self {
            shape: s.shape().clone(),
            tau: s.tau(),
            kind,
            delays: s.delays().to_vec(),
            amplitudes: s.amplitudes().iter().map(|&a| a.into()).collect(),
            burst_starts,
        }
    }
}

impl TryFrom<StreamDocument> for PulseStream {
    type Error = Error;

    fn try_from(doc: StreamDocument) -> Result<Self> {
        let kind = match doc.kind {
            StreamKindTag::Periodic => StreamKind::Periodic { tau: doc.tau },
            StreamKindTag::Finite => StreamKind::Finite { tau: doc.tau },
            StreamKindTag::Bursty => StreamKind::Bursty {
                tau: doc.tau,
                burst_starts: doc
                    .burst_starts
                    .ok_or_else(|| Error::InvalidStream("bursty stream needs burst_starts".into()))?,
            },
        };
        PulseStream::new(
            doc.shape,
            doc.delays,
            doc.amplitudes.into_iter().map(Complex64::from).collect(),
            kind,
        )
    }
}

impl PulseStream {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&StreamDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: StreamDocument = serde_json::from_str(text)?;
        doc.try_into()
    }
}
