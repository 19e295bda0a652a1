//! Single-element ultrasound chain: synthetic or recorded RF data,
//! quadrature demodulation, low-rate acquisition through a digital `g_3p`,
//! hard thresholding, recovery and depth reporting.

use std::f64::consts::{PI, TAU};
use std::io::Read;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::IndexSet;
use crate::kernel::{make_periodic_extension, KernelDocument, PeriodicExtensionKernel, SamplingKernel, SosKernel};
use crate::recovery::{recover_values, CoefficientSystem, RecoveryOptions, RecoveryResult};
use crate::sampling::{csv_err, noise_variance, noisy, AcquisitionMeta, SampleSet};
use crate::signal::PulseShape;

pub const PHANTOM_FS: f64 = 20e6;
pub const PHANTOM_FC: f64 = 1.7021e6;
pub const PHANTOM_SIGMA: f64 = 3e-7;
pub const PHANTOM_TAU: f64 = 2.08e-4;
pub const SOUND_SPEED: f64 = 1550.0;

/// Acquisition parameters of a single-channel RF record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordParams {
    pub fs: f64,
    pub fc: f64,
    pub c_sound: f64,
    pub tau: f64,
    pub sigma: f64,
}

impl Default for RecordParams {
    fn default() -> Self {
        Self {
            fs: PHANTOM_FS,
            fc: PHANTOM_FC,
            c_sound: SOUND_SPEED,
            tau: PHANTOM_TAU,
            sigma: PHANTOM_SIGMA,
        }
    }
}

impl RecordParams {
    /// `round(tau * fs)` samples.
    pub fn n_samples(&self) -> usize {
        (self.tau * self.fs).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let all_pos = [self.fs, self.fc, self.c_sound, self.tau, self.sigma]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !all_pos {
            return Err(Error::InvalidConfig("record parameters must be finite and > 0".into()));
        }
        if self.fs <= 2.0 * self.fc {
            return Err(Error::InvalidConfig(format!(
                "f_s = {} Hz does not exceed 2 f_c = {} Hz",
                self.fs,
                2.0 * self.fc
            )));
        }
        Ok(())
    }
}

/// Time-to-depth mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DepthConvention {
    /// `depth = c t / 2` (echo travels down and back).
    #[default]
    TwoWay,
    /// `depth = c t`.
    OneWay,
}

impl DepthConvention {
    pub fn depth(self, delay: f64, c_sound: f64) -> f64 {
        match self {
            DepthConvention::TwoWay => 0.5 * c_sound * delay,
            DepthConvention::OneWay => c_sound * delay,
        }
    }

    pub fn delay(self, depth: f64, c_sound: f64) -> f64 {
        match self {
            DepthConvention::TwoWay => 2.0 * depth / c_sound,
            DepthConvention::OneWay => depth / c_sound,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    /// Echo arrival time in seconds.
    pub delay: f64,
    pub reflectivity: f64,
}

/// Four pins at 3, 6, 9 and 12 cm with decaying reflectivity.
pub fn phantom_scatterers(c_sound: f64, convention: DepthConvention) -> Vec<Scatterer> {
    [(0.03, 1.0), (0.06, 0.8), (0.09, 0.65), (0.12, 0.5)]
        .iter()
        .map(|&(d, r)| Scatterer {
            delay: convention.delay(d, c_sound),
            reflectivity: r,
        })
        .collect()
}

/// Real RF samples at `fs`, starting at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub params: RecordParams,
    pub samples: Vec<f64>,
    /// Ground truth, when synthesized.
    #[serde(default)]
    pub truth: Option<Vec<Scatterer>>,
    #[serde(default)]
    pub noise_sigma: f64,
}

impl ChannelRecord {
    pub fn dt(&self) -> f64 {
        1.0 / self.params.fs
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.params.fs
    }
}

/// Gaussian echo `a h(t - t_l) cos(2 pi f_c (t - t_l))` with unit-area `h`.
fn echo(t: f64, s: &Scatterer, p: &RecordParams) -> f64 {
    let u = t - s.delay;
    let h = (-(u * u) / (2.0 * p.sigma * p.sigma)).exp() / ((TAU).sqrt() * p.sigma);
    s.reflectivity * h * (TAU * p.fc * u).cos()
}

/// Modulated Gaussian echoes plus white noise at `snr_db`
/// (`mean(x^2) / sigma_n^2`). With no scatterers the noise has variance
/// `10^(-snr/10)`.
pub fn synthesize_channel(scatterers: &[Scatterer], params: &RecordParams, snr_db: f64, seed: u64) -> Result<ChannelRecord> {
    params.validate()?;
    if let Some(s) = scatterers.iter().find(|s| !(0.0..params.tau).contains(&s.delay)) {
        return Err(Error::InvalidStream(format!("scatterer delay {} outside [0, {})", s.delay, params.tau)));
    }
    let n = params.n_samples();
    let clean: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / params.fs;
            scatterers.iter().map(|s| echo(t, s, params)).sum()
        })
        .collect();
    let power = clean.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let reference = if power > 0.0 { power } else { 1.0 };
    let sigma = if snr_db.is_infinite() && snr_db > 0.0 {
        0.0
    } else {
        noise_variance(reference, snr_db).sqrt()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let as_complex: Vec<Complex64> = clean.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let samples = noisy(&as_complex, sigma, true, &mut rng).iter().map(|c| c.re).collect();
    Ok(ChannelRecord {
        params: *params,
        samples,
        truth: Some(scatterers.to_vec()),
        noise_sigma: sigma,
    })
}

/// Linear-phase lowpass FIR (Blackman-windowed sinc, unit DC gain).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirLowpass {
    pub taps: Vec<f64>,
    pub cutoff_hz: f64,
    pub fs: f64,
}

impl FirLowpass {
    /// `n_taps` is forced odd so the group delay is a whole sample.
    pub fn design(cutoff_hz: f64, fs: f64, n_taps: usize) -> Result<Self> {
        if !(cutoff_hz > 0.0 && cutoff_hz < 0.5 * fs) {
            return Err(Error::InvalidConfig(format!("cutoff {cutoff_hz} Hz outside (0, fs/2)")));
        }
        let n = n_taps.max(3) | 1;
        let mid = (n / 2) as f64;
        let fc = cutoff_hz / fs;
        let mut taps: Vec<f64> = (0..n)
            .map(|i| {
                let m = i as f64 - mid;
                let ideal = if m == 0.0 { 2.0 * fc } else { (TAU * fc * m).sin() / (PI * m) };
                let x = i as f64 / (n - 1) as f64;
                let w = 0.42 - 0.5 * (TAU * x).cos() + 0.08 * (2.0 * TAU * x).cos();
                ideal * w
            })
            .collect();
        let gain: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= gain);
        Ok(Self { taps, cutoff_hz, fs })
    }

    pub fn group_delay(&self) -> usize {
        self.taps.len() / 2
    }

    /// Zero-padded convolution aligned to remove the group delay.
    pub fn filter(&self, x: &[Complex64]) -> Vec<Complex64> {
        let d = self.group_delay() as isize;
        let n = x.len() as isize;
        (0..n)
            .map(|i| {
                self.taps
                    .iter()
                    .enumerate()
                    .filter_map(|(j, &h)| {
                        let src = i + d - j as isize;
                        (0..n).contains(&src).then(|| x[src as usize] * h)
                    })
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemodConfig {
    /// Lowpass cutoff; defaults to `min(3 / (2 pi sigma), f_c)`.
    pub cutoff_hz: Option<f64>,
    pub taps: usize,
}

impl Default for DemodConfig {
    fn default() -> Self {
        Self {
            cutoff_hz: None,
            taps: 201,
        }
    }
}

impl DemodConfig {
    pub fn cutoff(&self, p: &RecordParams) -> f64 {
        self.cutoff_hz.unwrap_or_else(|| (3.0 / (TAU * p.sigma)).min(p.fc))
    }
}

/// Complex baseband `LPF{2 x(t) exp(-j 2 pi f_c t)}`. A pulse
/// `a h(t - t_l) cos(2 pi f_c (t - t_l))` maps to `a exp(-j 2 pi f_c t_l) h(t - t_l)`.
pub fn demodulate(record: &ChannelRecord, config: &DemodConfig) -> Result<Vec<Complex64>> {
    let p = &record.params;
    p.validate()?;
    let fir = FirLowpass::design(config.cutoff(p), p.fs, config.taps)?;
    let mixed: Vec<Complex64> = record
        .samples
        .iter()
        .enumerate()
        .map(|(i, &x)| Complex64::from_polar(2.0 * x, -TAU * p.fc * record.time(i)))
        .collect();
    Ok(fir.filter(&mixed))
}

/// `|baseband|`.
pub fn envelope(baseband: &[Complex64]) -> Vec<f64> {
    baseband.iter().map(|c| c.norm()).collect()
}

/// The `g_3p` kernel (`b_k = 1`) over `M` centered indices.
pub fn dirichlet_g3p(tau: f64, m: usize) -> Result<PeriodicExtensionKernel> {
    let base = SosKernel::dirichlet(tau, IndexSet::centered(m)?)?;
    make_periodic_extension(&base, 0.0)
}

/// Digital surrogate of analog filtering by `g_r` and sampling at
/// `t_n = n tau / N`: `c[n] = dt sum_i x[i] conj(g_r(t_i - t_n))`.
///
/// All lags lie in `(-tau, tau)`, where `g_r` coincides with the Fourier
/// sum, so the sum is evaluated through the record's DFT.
pub fn low_rate_acquire(baseband: &[Complex64], fs: f64, kernel: &PeriodicExtensionKernel, n: usize) -> Result<SampleSet> {
    let tau = kernel.base().tau();
    let ns = baseband.len();
    if n == 0 || ns == 0 {
        return Err(Error::InsufficientData("need samples on both rates".into()));
    }
    if ((ns as f64 / fs) - tau).abs() > 0.5 / fs {
        return Err(Error::SupportMismatch(format!("record spans {} s, window is {tau} s", ns as f64 / fs)));
    }
    let idx = kernel.base().indices();
    if idx.len() > ns {
        return Err(Error::InvalidConfig("index set wider than the record's DFT".into()));
    }
    let mut spec = baseband.to_vec();
    FftPlanner::new().plan_fft_forward(ns).process(&mut spec);
    let terms: Vec<(i64, Complex64)> = idx
        .iter()
        .zip(kernel.base().coefficients())
        .map(|(k, b)| {
            let bin = k.rem_euclid(ns as i64) as usize;
            // dt * DFT = tau * X_disc[k]
            (k, b.conj() * spec[bin] / fs)
        })
        .collect();
    let instants: Vec<f64> = (0..n).map(|i| i as f64 * tau / n as f64).collect();
    let values: Vec<Complex64> = instants
        .iter()
        .map(|&t| {
            terms
                .iter()
                .map(|&(k, w)| w * Complex64::from_polar(1.0, TAU * k as f64 * t / tau))
                .sum()
        })
        .collect();
    let meta = AcquisitionMeta {
        period: tau / n as f64,
        n_samples: n,
        window_start: 0.0,
        uniform: true,
        grid_factor: (ns as f64 / n as f64).round() as usize,
        method: "fir-decimation".into(),
        kernel: Some(KernelDocument::from(kernel)),
        lowpass_m: None,
        tau,
        decimation: Some((ns as f64 / n as f64).round() as usize),
    };
    Ok(SampleSet {
        instants,
        clean_values: values.clone(),
        values,
        noise_sigma: 0.0,
        snr_db: None,
        seed: None,
        meta,
    })
}

/// Time-domain reference for [`low_rate_acquire`]: explicit inner products
/// with the sampled kernel.
pub fn low_rate_acquire_direct(baseband: &[Complex64], fs: f64, kernel: &PeriodicExtensionKernel, n: usize) -> Result<Vec<Complex64>> {
    let tau = kernel.base().tau();
    let dt = 1.0 / fs;
    (0..n)
        .map(|j| {
            let tn = j as f64 * tau / n as f64;
            baseband
                .iter()
                .enumerate()
                .map(|(i, &x)| Ok(x * kernel.eval_time(i as f64 * dt - tn)?.conj()))
                .sum::<Result<Complex64>>()
                .map(|s| s * dt)
        })
        .collect()
}

/// Zeroes entries below `fraction * max |v|`; returns the number changed.
pub fn hard_threshold(values: &mut [Complex64], fraction: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidConfig(format!("threshold fraction {fraction} outside [0, 1)")));
    }
    let peak = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let cut = fraction * peak;
    let mut changed = 0;
    for v in values.iter_mut() {
        if v.norm() < cut && *v != Complex64::new(0.0, 0.0) {
            *v = Complex64::new(0.0, 0.0);
            changed += 1;
        }
    }
    Ok(changed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthEstimate {
    pub delay: f64,
    pub depth_m: f64,
    pub reflectivity: f64,
}

/// Depths and reflectivities (`|a|`) of a recovery, shallowest first.
pub fn depth_report(result: &RecoveryResult, c_sound: f64, convention: DepthConvention) -> Vec<DepthEstimate> {
    result
        .delays
        .iter()
        .zip(&result.amplitudes)
        .map(|(&t, a)| DepthEstimate {
            delay: t,
            depth_m: convention.depth(t, c_sound),
            reflectivity: a.norm(),
        })
        .collect()
}

/// Which baseband signal is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BasebandInput {
    /// The envelope magnitude: real amplitudes, but noise acquires a bias.
    #[default]
    Envelope,
    /// The complex baseband: linear in the echoes, amplitudes carry the
    /// carrier phase.
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UltrasoundConfig {
    pub pulses: usize,
    /// Low-rate samples `N`; the Fourier index set has `M = N` entries.
    pub n_samples: usize,
    pub threshold_fraction: f64,
    pub recovery: RecoveryOptions,
    pub convention: DepthConvention,
    pub demod: DemodConfig,
    pub input: BasebandInput,
}

impl UltrasoundConfig {
    /// `L = 4`, `N = 17`, 10% thresholding.
    pub fn thresholded() -> Self {
        Self {
            pulses: 4,
            n_samples: 17,
            threshold_fraction: 0.1,
            recovery: RecoveryOptions::denoising(20),
            convention: DepthConvention::TwoWay,
            demod: DemodConfig::default(),
            input: BasebandInput::Envelope,
        }
    }

    /// `L = 4`, `N = 33`, no thresholding.
    pub fn oversampled() -> Self {
        Self {
            n_samples: 33,
            threshold_fraction: 0.0,
            ..Self::thresholded()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScattererMatch {
    pub true_depth_m: f64,
    pub estimated_depth_m: f64,
    pub error_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UltrasoundReport {
    pub config: UltrasoundConfig,
    pub params: RecordParams,
    pub high_rate_samples: usize,
    pub low_rate_samples: usize,
    /// `high_rate_samples / low_rate_samples`.
    pub reduction_factor: f64,
    pub thresholded_entries: usize,
    pub estimates: Vec<DepthEstimate>,
    /// Sorted matching against the ground truth, when known.
    pub matches: Option<Vec<ScattererMatch>>,
    pub max_error_m: Option<f64>,
    pub warnings: Vec<String>,
}

impl UltrasoundReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Demodulate, acquire `N` samples, threshold, recover and report depths.
pub fn process_record(record: &ChannelRecord, config: &UltrasoundConfig) -> Result<(UltrasoundReport, RecoveryResult)> {
    let p = record.params;
    p.validate()?;
    let mut warnings = Vec::new();
    if config.n_samples < 2 * config.pulses + 1 {
        warnings.push(format!("N = {} is below 2L + 1 = {}", config.n_samples, 2 * config.pulses + 1));
    }
    let bb = demodulate(record, &config.demod)?;
    let input: Vec<Complex64> = match config.input {
        BasebandInput::Complex => bb,
        BasebandInput::Envelope => envelope(&bb).into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
    };
    let kernel = dirichlet_g3p(p.tau, config.n_samples)?;
    let mut samples = low_rate_acquire(&input, p.fs, &kernel, config.n_samples)?;
    let changed = hard_threshold(&mut samples.values, config.threshold_fraction)?;
    let sampling: SamplingKernel = kernel.into();
    let system = CoefficientSystem::new(&sampling, &PulseShape::gaussian(p.sigma)?, &samples.instants)?;
    let result = recover_values(&samples.values, &system, config.pulses, &config.recovery)?;
    warnings.extend(result.warnings.iter().cloned());
    let estimates = depth_report(&result, p.c_sound, config.convention);
    let matches = record.truth.as_ref().filter(|t| t.len() == estimates.len()).map(|truth| {
        let mut td: Vec<f64> = truth.iter().map(|s| config.convention.depth(s.delay, p.c_sound)).collect();
        td.sort_by(f64::total_cmp);
        td.iter()
            .zip(&estimates)
            .map(|(&t, e)| ScattererMatch {
                true_depth_m: t,
                estimated_depth_m: e.depth_m,
                error_m: (t - e.depth_m).abs(),
            })
            .collect::<Vec<_>>()
    });
    let max_error_m = matches.as_ref().map(|m| m.iter().map(|x| x.error_m).fold(0.0, f64::max));
    let report = UltrasoundReport {
        config: *config,
        params: p,
        high_rate_samples: record.samples.len(),
        low_rate_samples: config.n_samples,
        reduction_factor: record.samples.len() as f64 / config.n_samples as f64,
        thresholded_entries: changed,
        estimates,
        matches,
        max_error_m,
        warnings,
    };
    Ok((report, result))
}

/// JSON header accompanying recorded channel data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub f_s: f64,
    pub f_c: f64,
    /// Physical units of one sample count, informational.
    #[serde(default)]
    pub units: Option<String>,
    /// Multiplier applied to raw values.
    #[serde(default = "unit_scale")]
    pub scale: f64,
    #[serde(default)]
    pub c_sound: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
}

fn unit_scale() -> f64 {
    1.0
}

impl RecordHeader {
    fn record(&self, samples: Vec<f64>) -> Result<ChannelRecord> {
        let params = RecordParams {
            fs: self.f_s,
            fc: self.f_c,
            c_sound: self.c_sound.unwrap_or(SOUND_SPEED),
            tau: samples.len() as f64 / self.f_s,
            sigma: self.sigma.unwrap_or(PHANTOM_SIGMA),
        };
        params.validate()?;
        Ok(ChannelRecord {
            params,
            samples: samples.into_iter().map(|v| v * self.scale).collect(),
            truth: None,
            noise_sigma: 0.0,
        })
    }
}

/// One value per line (first column), no header row.
pub fn read_record_csv<R: Read>(reader: R, header: &RecordHeader) -> Result<ChannelRecord> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut samples = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let field = row.get(0).unwrap_or("");
        let v: f64 = field
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("not a number: {field:?}")))?;
        samples.push(v);
    }
    header.record(samples)
}

/// Little-endian signed 16-bit samples.
pub fn read_record_i16<R: Read>(mut reader: R, header: &RecordHeader) -> Result<ChannelRecord> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() % 2 != 0 {
        return Err(Error::InvalidConfig("odd byte count in 16-bit record".into()));
    }
    let samples = bytes
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64)
        .collect();
    header.record(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(delay: f64) -> Vec<Scatterer> {
        vec![Scatterer { delay, reflectivity: 1.0 }]
    }

    #[test]
    fn phantom_record_size() {
        let p = RecordParams::default();
        assert_eq!(p.n_samples(), 4160);
        let r = synthesize_channel(&phantom_scatterers(p.c_sound, DepthConvention::TwoWay), &p, 20.0, 1).unwrap();
        assert_eq!(r.samples.len(), 4160);
    }

    #[test]
    fn max_depth_two_way() {
        let d = DepthConvention::TwoWay.depth(PHANTOM_TAU, SOUND_SPEED);
        assert!((d - 0.1612).abs() < 1e-12);
        assert_eq!(DepthConvention::TwoWay.depth(0.0, SOUND_SPEED), 0.0);
        assert!((DepthConvention::OneWay.depth(PHANTOM_TAU, SOUND_SPEED) - 0.3224).abs() < 1e-12);
    }

    #[test]
    fn no_scatterers_is_noise() {
        let r = synthesize_channel(&[], &RecordParams::default(), 0.0, 3).unwrap();
        assert_eq!(r.noise_sigma, 1.0);
        assert!(r.samples.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn out_of_window_rejected() {
        assert!(synthesize_channel(&one(3e-4), &RecordParams::default(), 20.0, 0).is_err());
    }

    #[test]
    fn envelope_peaks_at_delay() {
        let p = RecordParams::default();
        let t0 = 0.5 * p.tau + 0.3 / p.fs;
        let r = synthesize_channel(&one(t0), &p, f64::INFINITY, 0).unwrap();
        let env = envelope(&demodulate(&r, &DemodConfig::default()).unwrap());
        let peak = env.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!((peak as f64 / p.fs - t0).abs() <= 1.0 / p.fs);
    }

    #[test]
    fn envelope_matches_gaussian() {
        let p = RecordParams::default();
        let t0 = 1e-4;
        let r = synthesize_channel(&one(t0), &p, f64::INFINITY, 0).unwrap();
        let env = envelope(&demodulate(&r, &DemodConfig::default()).unwrap());
        let peak_true = 1.0 / (TAU.sqrt() * p.sigma);
        let worst = env
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                let u = i as f64 / p.fs - t0;
                (e - peak_true * (-(u * u) / (2.0 * p.sigma * p.sigma)).exp()).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 0.02 * peak_true, "worst {}", worst / peak_true);
    }

    #[test]
    fn tone_has_flat_envelope() {
        let p = RecordParams::default();
        let n = p.n_samples();
        let rec = ChannelRecord {
            params: p,
            samples: (0..n).map(|i| (TAU * p.fc * i as f64 / p.fs).cos()).collect(),
            truth: None,
            noise_sigma: 0.0,
        };
        let env = envelope(&demodulate(&rec, &DemodConfig::default()).unwrap());
        for &e in &env[300..n - 300] {
            assert!((e - 1.0).abs() < 1e-3, "{e}");
        }
    }

    #[test]
    fn fast_acquisition_matches_direct() {
        let p = RecordParams {
            fs: 1.0e3,
            fc: 100.0,
            c_sound: 1.0,
            tau: 0.2,
            sigma: 2e-3,
        };
        let bb: Vec<Complex64> = (0..200).map(|i| Complex64::new((i as f64 * 0.1).sin(), (i as f64 * 0.03).cos())).collect();
        let k = dirichlet_g3p(p.tau, 9).unwrap();
        let fast = low_rate_acquire(&bb, p.fs, &k, 9).unwrap();
        let direct = low_rate_acquire_direct(&bb, p.fs, &k, 9).unwrap();
        for (a, b) in fast.values.iter().zip(&direct) {
            assert!((a - b).norm() < 1e-9 * b.norm().max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn full_rate_is_identity() {
        let fs = 64.0;
        let bb: Vec<Complex64> = (0..64).map(|i| Complex64::new(i as f64, -(i as f64) * 0.5)).collect();
        let k = dirichlet_g3p(1.0, 64).unwrap();
        let s = low_rate_acquire(&bb, fs, &k, 64).unwrap();
        for (c, x) in s.values.iter().zip(&bb) {
            assert!((c - x).norm() < 1e-9, "{c} {x}");
        }
    }

    #[test]
    fn thresholding() {
        let mut v: Vec<Complex64> = [10.0, 0.5, 1.0, -3.0, 0.99].iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let orig = v.clone();
        assert_eq!(hard_threshold(&mut v, 0.0).unwrap(), 0);
        assert_eq!(v, orig);
        assert_eq!(hard_threshold(&mut v, 0.1).unwrap(), 2);
        assert_eq!(v[1].re, 0.0);
        assert_eq!(v[2].re, 1.0);
        assert_eq!(v[4].re, 0.0);
        assert!(hard_threshold(&mut v, 1.0).is_err());
    }

    #[test]
    fn noiseless_phantom_minimal_rate() {
        let p = RecordParams::default();
        let truth = phantom_scatterers(p.c_sound, DepthConvention::TwoWay);
        let r = synthesize_channel(&truth, &p, f64::INFINITY, 0).unwrap();
        let cfg = UltrasoundConfig {
            n_samples: 9,
            threshold_fraction: 0.0,
            recovery: RecoveryOptions::default(),
            ..UltrasoundConfig::thresholded()
        };
        let (rep, _) = process_record(&r, &cfg).unwrap();
        for (e, s) in rep.estimates.iter().zip(&truth) {
            assert!((e.delay - s.delay).abs() < 1e-3 * p.tau);
        }
    }

    #[test]
    fn raw_ingestion() {
        let header = RecordHeader {
            f_s: 20.0,
            f_c: 2.0,
            units: Some("adc".into()),
            scale: 0.5,
            c_sound: None,
            sigma: Some(0.1),
        };
        let bytes: Vec<u8> = [1i16, -2, 300].iter().flat_map(|v| v.to_le_bytes()).collect();
        let r = read_record_i16(bytes.as_slice(), &header).unwrap();
        assert_eq!(r.samples, vec![0.5, -1.0, 150.0]);
        let c = read_record_csv("1.0\n-2\n 3.5\n".as_bytes(), &header).unwrap();
        assert_eq!(c.samples, vec![0.5, -1.0, 1.75]);
        assert!((c.params.tau - 0.15).abs() < 1e-15);
    }
}
