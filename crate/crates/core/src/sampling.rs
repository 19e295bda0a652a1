//! Acquisition: filter a pulse stream with a sampling kernel and sample it.
//!
//! Samples are `c[n] = <s(t - t_n), x(t)> = int x(t) conj(s(t - t_n)) dt`.
//! Dirac streams are handled in closed form; other pulses are integrated
//! with the trapezoidal rule on a fine grid.

use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::burst;
use crate::error::{Error, Result};
use crate::kernel::{replica_count, KernelDocument, SamplingKernel, Window};
use crate::signal::{exponential_sum, PulseShape, PulseStream, StreamKind};

/// Default fine-grid oversampling relative to the sampling period.
pub const DEFAULT_GRID_FACTOR: usize = 1000;
/// Smallest accepted fine-grid oversampling.
pub const MIN_GRID_FACTOR: usize = 100;

/// How sample values are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionMethod {
    /// Closed form for Dirac pulses and infinite-support kernels, quadrature otherwise.
    #[default]
    Auto,
    /// Closed form only: Dirac pulses in time, periodic streams via their
    /// Fourier series. Fails where no closed form exists.
    Analytic,
    /// Fine-grid trapezoidal quadrature; fails for Dirac pulses.
    Quadrature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionConfig {
    /// Sampling period `T`.
    pub period: f64,
    pub n_samples: usize,
    /// Explicit (possibly nonuniform) instants; overrides the uniform grid.
    pub instants: Option<Vec<f64>>,
    pub kernel: SamplingKernel,
    pub window_start: f64,
    pub grid_factor: usize,
    pub method: AcquisitionMethod,
}

impl AcquisitionConfig {
    /// `n` uniform samples at `T = tau / n` starting at 0.
    pub fn uniform(kernel: impl Into<SamplingKernel>, n: usize) -> Self {
        let kernel = kernel.into();
        Self {
            period: kernel.tau() / n.max(1) as f64,
            n_samples: n,
            instants: None,
            kernel,
            window_start: 0.0,
            grid_factor: DEFAULT_GRID_FACTOR,
            method: AcquisitionMethod::Auto,
        }
    }

    pub fn with_instants(mut self, instants: Vec<f64>) -> Self {
        self.n_samples = instants.len();
        self.instants = Some(instants);
        self
    }

    pub fn with_window_start(mut self, start: f64) -> Self {
        self.window_start = start;
        self
    }

    pub fn with_method(mut self, method: AcquisitionMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_grid_factor(mut self, factor: usize) -> Self {
        self.grid_factor = factor;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig("need at least one sample".into()));
        }
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::InvalidConfig(format!("sampling period must be > 0, got {}", self.period)));
        }
        if let Some(inst) = &self.instants {
            if inst.len() != self.n_samples {
                return Err(Error::InvalidConfig("instant count differs from N".into()));
            }
            if inst.iter().any(|t| !t.is_finite()) {
                return Err(Error::InvalidConfig("non-finite sample instant".into()));
            }
        }
        if self.grid_factor < MIN_GRID_FACTOR {
            return Err(Error::GridTooCoarse {
                dt: self.period / self.grid_factor as f64,
                required: self.period / MIN_GRID_FACTOR as f64,
            });
        }
        Ok(())
    }

    pub fn instants(&self) -> Vec<f64> {
        match &self.instants {
            Some(v) => v.clone(),
            None => (0..self.n_samples)
                .map(|n| self.window_start + n as f64 * self.period)
                .collect(),
        }
    }
}

/// Snapshot of the acquisition settings stored with the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionMeta {
    pub period: f64,
    pub n_samples: usize,
    pub window_start: f64,
    pub uniform: bool,
    pub grid_factor: usize,
    pub method: String,
    /// SoS kernel document, absent for the lowpass kernel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelDocument>,
    /// Lowpass cardinality `M`, when the lowpass kernel was used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lowpass_m: Option<usize>,
    pub tau: f64,
    #[serde(default)]
    pub decimation: Option<usize>,
}

impl AcquisitionMeta {
    pub fn sampling_kernel(&self) -> Result<SamplingKernel> {
        match (&self.kernel, self.lowpass_m) {
            (Some(doc), _) => doc.to_sampling_kernel(),
            (None, Some(m)) => Ok(crate::kernel::LowpassKernel::new(self.tau, m)?.into()),
            (None, None) => Err(Error::InvalidConfig("metadata carries no kernel".into())),
        }
    }
}

fn meta_for(config: &AcquisitionConfig, method: &str) -> AcquisitionMeta {
    let (kernel, lowpass_m) = match &config.kernel {
        SamplingKernel::Sos(k) => (Some(KernelDocument::from(k)), None),
        SamplingKernel::Extended(k) => (Some(KernelDocument::from(k)), None),
        SamplingKernel::Lowpass(l) => (None, Some(l.m)),
    };
    AcquisitionMeta {
        period: config.period,
        n_samples: config.n_samples,
        window_start: config.window_start,
        uniform: config.instants.is_none(),
        grid_factor: config.grid_factor,
        method: method.to_string(),
        kernel,
        lowpass_m,
        tau: config.kernel.tau(),
        decimation: None,
    }
}

/// Acquired samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub instants: Vec<f64>,
    pub values: Vec<Complex64>,
    pub clean_values: Vec<Complex64>,
    pub noise_sigma: f64,
    pub snr_db: Option<f64>,
    pub seed: Option<u64>,
    pub meta: AcquisitionMeta,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `||c||^2 / N` of the clean samples.
    pub fn clean_power(&self) -> f64 {
        mean_power(&self.clean_values)
    }

    /// Ratio of clean power to the realized noise power, in dB.
    pub fn empirical_snr_db(&self) -> f64 {
        let noise: Vec<Complex64> = self
            .values
            .iter()
            .zip(&self.clean_values)
            .map(|(v, c)| v - c)
            .collect();
        10.0 * (self.clean_power() / mean_power(&noise)).log10()
    }

    /// True when the clean samples are real up to rounding.
    pub fn is_real(&self) -> bool {
        is_real_vector(&self.clean_values)
    }
}

pub(crate) fn mean_power(v: &[Complex64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().map(|c| c.norm_sqr()).sum::<f64>() / v.len() as f64
}

pub(crate) fn is_real_vector(v: &[Complex64]) -> bool {
    let scale = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    v.iter().all(|c| c.im.abs() <= 1e-12 * scale)
}

fn check_compatibility(stream: &PulseStream, config: &AcquisitionConfig, instants: &[f64]) -> Result<()> {
    let tau = stream.tau();
    let ktau = config.kernel.tau();
    if (tau - ktau).abs() > 1e-12 * tau {
        return Err(Error::SupportMismatch(format!("stream tau {tau} differs from kernel tau {ktau}")));
    }
    match (stream.kind(), &config.kernel) {
        (StreamKind::Periodic { .. }, SamplingKernel::Extended(_)) => Err(Error::SupportMismatch(
            "periodic streams are sampled with the base kernel, not its periodic extension".into(),
        )),
        (StreamKind::Periodic { .. }, _) => Ok(()),
        (_, SamplingKernel::Sos(_)) | (_, SamplingKernel::Lowpass(_)) => Err(Error::SupportMismatch(
            "finite and bursty streams need a periodic-extension kernel".into(),
        )),
        (StreamKind::Finite { .. }, SamplingKernel::Extended(ext)) => {
            let need = replica_count(stream.shape().support(), tau);
            if ext.r() < need {
                return Err(Error::SupportMismatch(format!(
                    "pulse support needs r = {need}, kernel has r = {}",
                    ext.r()
                )));
            }
            if let Some(t) = instants.iter().find(|&&t| !(0.0..tau).contains(&t)) {
                return Err(Error::InvalidConfig(format!(
                    "finite-stream sample instant {t} outside [0, {tau})"
                )));
            }
            Ok(())
        }
        (StreamKind::Bursty { .. }, SamplingKernel::Extended(ext)) => {
            let need = replica_count(stream.shape().support(), tau);
            if ext.r() < need {
                return Err(Error::SupportMismatch(format!(
                    "pulse support needs r = {need}, kernel has r = {}",
                    ext.r()
                )));
            }
            burst::check_spacing(stream, ext.r())?;
            if let Some(t) = instants.iter().find(|&&t| stream.burst_of(t).is_none()) {
                return Err(Error::InvalidConfig(format!(
                    "sample instant {t} is not inside a burst window"
                )));
            }
            Ok(())
        }
    }
}

/// Filters and samples a stream. Noise is added separately by [`add_noise`].
pub fn acquire(stream: &PulseStream, config: &AcquisitionConfig) -> Result<SampleSet> {
    config.validate()?;
    let instants = config.instants();
    check_compatibility(stream, config, &instants)?;

    let periodic = matches!(stream.kind(), StreamKind::Periodic { .. });
    let dirac = stream.shape().is_dirac();
    let lowpass = matches!(config.kernel, SamplingKernel::Lowpass(_));

    let (values, method) = match config.method {
        AcquisitionMethod::Auto if dirac && !lowpass => (dirac_samples(stream, config, &instants)?, "analytic"),
        AcquisitionMethod::Auto if periodic && lowpass => (fourier_samples(stream, config, &instants), "fourier"),
        AcquisitionMethod::Auto => (quadrature_samples(stream, config, &instants)?, "quadrature"),
        AcquisitionMethod::Analytic if periodic => (fourier_samples(stream, config, &instants), "fourier"),
        AcquisitionMethod::Analytic if dirac => (dirac_samples(stream, config, &instants)?, "analytic"),
        AcquisitionMethod::Analytic => {
            return Err(Error::InvalidConfig(
                "no closed form for non-Dirac pulses outside the periodic setting".into(),
            ))
        }
        AcquisitionMethod::Quadrature => {
            if lowpass {
                return Err(Error::SupportMismatch("quadrature needs a compactly supported kernel".into()));
            }
            (quadrature_samples(stream, config, &instants)?, "quadrature")
        }
    };

    Ok(SampleSet {
        instants,
        clean_values: values.clone(),
        values,
        noise_sigma: 0.0,
        snr_db: None,
        seed: None,
        meta: meta_for(config, method),
    })
}

/// `c[n] = sum_l a_l conj(s(t_l - t_n))`, replicas included for periodic streams.
fn dirac_samples(stream: &PulseStream, config: &AcquisitionConfig, instants: &[f64]) -> Result<Vec<Complex64>> {
    let half = 0.5 * config.kernel.support();
    instants
        .iter()
        .map(|&tn| {
            stream
                .pulses_touching(tn - half, tn + half)
                .into_iter()
                .map(|(t, a)| Ok(a * config.kernel.eval_time(t - tn)?.conj()))
                .sum()
        })
        .collect()
}

/// `c[n] = sum_{k in K} X[k] exp(j 2 pi k t_n / tau) conj(S_k)`, exact for
/// periodic streams.
fn fourier_samples(stream: &PulseStream, config: &AcquisitionConfig, instants: &[f64]) -> Vec<Complex64> {
    let tau = stream.tau();
    let terms: Vec<(i64, Complex64)> = config
        .kernel
        .indices()
        .iter()
        .map(|k| {
            let x = stream.shape().ctft(TAU * k as f64 / tau) / tau
                * exponential_sum(stream.delays(), stream.amplitudes(), k, tau);
            (k, x * config.kernel.sampling_response(k).conj())
        })
        .collect();
    instants
        .iter()
        .map(|&tn| {
            terms
                .iter()
                .map(|&(k, w)| w * Complex64::from_polar(1.0, TAU * k as f64 * tn / tau))
                .sum()
        })
        .collect()
}

/// Kernel value with interior limits at the support edges, so that the
/// trapezoidal endpoints see the one-sided values of the integrand.
fn kernel_closed(kernel: &SamplingKernel, t: f64, half: f64) -> Result<Complex64> {
    let base = match kernel {
        SamplingKernel::Sos(k) => k,
        SamplingKernel::Extended(e) => e.base(),
        SamplingKernel::Lowpass(l) => return Ok(l.eval_time(t)),
    };
    match base.window() {
        Window::RectSinc => {
            if t.abs() <= half {
                Ok(base.fourier_sum(t))
            } else {
                Ok(Complex64::new(0.0, 0.0))
            }
        }
        Window::Custom { .. } => kernel.eval_time(t),
    }
}

fn quadrature_samples(stream: &PulseStream, config: &AcquisitionConfig, instants: &[f64]) -> Result<Vec<Complex64>> {
    if stream.shape().is_dirac() {
        return Err(Error::DiracOnGrid);
    }
    let support = config.kernel.support();
    if !support.is_finite() {
        return Err(Error::SupportMismatch("quadrature needs a compactly supported kernel".into()));
    }
    let dt_target = config.period / config.grid_factor as f64;
    // Whole number of steps across the kernel support.
    let steps = (support / dt_target).ceil().max(2.0) as usize;
    let dt = support / steps as f64;
    if let PulseShape::Gaussian { sigma } = stream.shape() {
        if dt > 0.5 * sigma {
            return Err(Error::GridTooCoarse { dt, required: 0.5 * sigma });
        }
    }
    let half = 0.5 * support;
    let shape = stream.shape();
    instants
        .iter()
        .map(|&tn| {
            let lo = tn - half;
            let pulses = stream.pulses_touching(lo, tn + half);
            let mut acc = Complex64::new(0.0, 0.0);
            if pulses.is_empty() {
                return Ok(acc);
            }
            for i in 0..=steps {
                // Offsets on a grid that hits both support edges exactly.
                let u = if i == steps { half } else { -half + i as f64 * dt };
                let t = tn + u;
                let mut x = Complex64::new(0.0, 0.0);
                for &(c, a) in &pulses {
                    x += a * shape.eval(t - c)?;
                }
                if x == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
                acc += x * kernel_closed(&config.kernel, u, half)?.conj() * w;
            }
            Ok(acc * dt)
        })
        .collect()
}

/// Adds white Gaussian noise for a target SNR `(||c||^2 / N) / sigma_n^2`.
///
/// Real sample vectors get real noise; complex ones get circular complex
/// noise with the same total variance. An infinite SNR leaves the samples
/// untouched.
pub fn add_noise(samples: &SampleSet, target_snr_db: f64, seed: u64) -> SampleSet {
    let mut out = samples.clone();
    out.seed = Some(seed);
    if target_snr_db.is_infinite() && target_snr_db > 0.0 {
        out.values = out.clean_values.clone();
        out.noise_sigma = 0.0;
        out.snr_db = Some(f64::INFINITY);
        return out;
    }
    let variance = noise_variance(samples.clean_power(), target_snr_db);
    let sigma = variance.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.values = noisy(&samples.clean_values, sigma, samples.is_real(), &mut rng);
    out.noise_sigma = sigma;
    out.snr_db = Some(target_snr_db);
    out
}

/// `sigma_n^2 = power / 10^(snr / 10)`.
pub fn noise_variance(power: f64, snr_db: f64) -> f64 {
    power / 10f64.powf(snr_db / 10.0)
}

pub(crate) fn noisy(clean: &[Complex64], sigma: f64, real: bool, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    if sigma == 0.0 {
        return clean.to_vec();
    }
    if real {
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        clean
            .iter()
            .map(|c| Complex64::new(c.re + normal.sample(rng), c.im))
            .collect()
    } else {
        let normal = Normal::new(0.0, sigma / std::f64::consts::SQRT_2).expect("finite sigma");
        clean
            .iter()
            .map(|c| c + Complex64::new(normal.sample(rng), normal.sample(rng)))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// CSV + JSON sidecar.

#[derive(Debug, Serialize, Deserialize)]
struct SampleRow {
    instant: f64,
    re: f64,
    im: f64,
    clean_re: f64,
    clean_im: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    noise_sigma: f64,
    snr_db: Option<f64>,
    seed: Option<u64>,
    meta: AcquisitionMeta,
}

impl SampleSet {
    /// Writes `instant,re,im,clean_re,clean_im` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for ((t, v), c) in self.instants.iter().zip(&self.values).zip(&self.clean_values) {
            w.serialize(SampleRow {
                instant: *t,
                re: v.re,
                im: v.im,
                clean_re: c.re,
                clean_im: c.im,
            })
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn metadata_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Sidecar {
            noise_sigma: self.noise_sigma,
            snr_db: self.snr_db,
            seed: self.seed,
            meta: self.meta.clone(),
        })?)
    }

    pub fn read_csv<R: Read>(reader: R, metadata_json: &str) -> Result<Self> {
        let side: Sidecar = serde_json::from_str(metadata_json)?;
        let mut instants = Vec::new();
        let mut values = Vec::new();
        let mut clean_values = Vec::new();
        for row in csv::Reader::from_reader(reader).deserialize::<SampleRow>() {
            let row = row.map_err(csv_err)?;
            instants.push(row.instant);
            values.push(Complex64::new(row.re, row.im));
            clean_values.push(Complex64::new(row.clean_re, row.clean_im));
        }
        Ok(Self {
            instants,
            values,
            clean_values,
            noise_sigma: side.noise_sigma,
            snr_db: side.snr_db,
            seed: side.seed,
            meta: side.meta,
        })
    }

    /// Writes `<stem>.csv` and `<stem>.json`.
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(csv_path)?)?;
        std::fs::write(csv_path.with_extension("json"), self.metadata_json()?)?;
        Ok(())
    }

    pub fn load(csv_path: &Path) -> Result<Self> {
        let meta = std::fs::read_to_string(csv_path.with_extension("json"))?;
        Self::read_csv(std::fs::File::open(csv_path)?, &meta)
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::IndexSet;
    use crate::kernel::{make_periodic_extension, LowpassKernel, SosKernel};

    fn dirac_pair() -> PulseStream {
        PulseStream::periodic(PulseShape::Dirac, 1.0, vec![1.0 / 3.0, 2.0 / 3.0], &[1.0, 1.0]).unwrap()
    }

    #[test]
    fn zero_stream_gives_zero_samples() {
        let s = PulseStream::periodic(PulseShape::gaussian(7e-3).unwrap(), 1.0, vec![0.2, 0.6], &[0.0, 0.0]).unwrap();
        let k = SosKernel::hamming(1.0, IndexSet::symmetric(5)).unwrap();
        let out = acquire(&s, &AcquisitionConfig::uniform(k, 11)).unwrap();
        assert!(out.values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn periodic_needs_base_kernel() {
        let k = SosKernel::dirichlet(1.0, IndexSet::symmetric(2)).unwrap();
        let ext = make_periodic_extension(&k, 0.0).unwrap();
        assert!(matches!(
            acquire(&dirac_pair(), &AcquisitionConfig::uniform(ext.clone(), 5)),
            Err(Error::SupportMismatch(_))
        ));
        let finite = dirac_pair().with_kind(StreamKind::Finite { tau: 1.0 }).unwrap();
        assert!(acquire(&finite, &AcquisitionConfig::uniform(k, 5)).is_err());
        assert!(acquire(&finite, &AcquisitionConfig::uniform(ext.clone(), 5)).is_ok());
        let off_window = AcquisitionConfig::uniform(ext, 5).with_window_start(0.5);
        assert!(matches!(acquire(&finite, &off_window), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn wide_pulse_needs_more_replicas() {
        let shape = PulseShape::gaussian(0.2).unwrap(); // R = 1.6 tau -> r = 2
        let s = PulseStream::finite(shape, 1.0, vec![0.5], &[1.0]).unwrap();
        let k = SosKernel::dirichlet(1.0, IndexSet::symmetric(2)).unwrap();
        let bad = crate::kernel::PeriodicExtensionKernel::new(k.clone(), 1);
        assert!(matches!(
            acquire(&s, &AcquisitionConfig::uniform(bad, 5)),
            Err(Error::SupportMismatch(_))
        ));
        let good = make_periodic_extension(&k, s.shape().support()).unwrap();
        assert_eq!(good.r(), 2);
        assert!(acquire(&s, &AcquisitionConfig::uniform(good, 5)).is_ok());
    }

    #[test]
    fn coarse_grid_rejected() {
        let k = SosKernel::dirichlet(1.0, IndexSet::symmetric(2)).unwrap();
        let cfg = AcquisitionConfig::uniform(k, 5).with_grid_factor(50);
        assert!(matches!(acquire(&dirac_pair(), &cfg), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn lowpass_matches_dirichlet_on_dirac() {
        // Both kernels pass K = {-2..2} with unit sampling response.
        let lp = LowpassKernel::new(1.0, 5).unwrap();
        let d = SosKernel::dirichlet(1.0, IndexSet::symmetric(2)).unwrap();
        let a = acquire(&dirac_pair(), &AcquisitionConfig::uniform(lp, 5)).unwrap();
        let b = acquire(&dirac_pair(), &AcquisitionConfig::uniform(d, 5)).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn noise_levels() {
        let d = SosKernel::dirichlet(1.0, IndexSet::symmetric(2)).unwrap();
        let clean = acquire(&dirac_pair(), &AcquisitionConfig::uniform(d, 5)).unwrap();
        let same = add_noise(&clean, f64::INFINITY, 1);
        assert_eq!(same.values, clean.values);
        assert!(clean.is_real());
        let noisy = add_noise(&clean, 10.0, 7);
        assert!((noisy.noise_sigma.powi(2) - clean.clean_power() / 10.0).abs() < 1e-12);
        assert!(noisy.values.iter().all(|v| v.im.abs() < 1e-12));
        assert_eq!(add_noise(&clean, 10.0, 7).values, noisy.values);
        assert!((noise_variance(4.0, 0.0) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let d = SosKernel::dirichlet(1.0, IndexSet::symmetric(2)).unwrap();
        let s = add_noise(&acquire(&dirac_pair(), &AcquisitionConfig::uniform(d, 5)).unwrap(), 20.0, 3);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("instant,re,im,clean_re,clean_im"));
        let back = SampleSet::read_csv(buf.as_slice(), &s.metadata_json().unwrap()).unwrap();
        assert_eq!(back, s);
        assert!(back.meta.sampling_kernel().is_ok());
    }
}
