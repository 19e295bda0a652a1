//! Bursty streams: spacing checks, per-burst windowing and recovery.
//!
//! A burst occupies `[start, start + tau)`. When the quiet gap to the next
//! burst exceeds `((2r + 1) tau + R) / 2`, every sample taken inside a burst
//! window sees that burst only, so each burst is a finite-stream problem.

use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{PeriodicExtensionKernel, SamplingKernel};
use crate::recovery::{recover_values, CoefficientSystem, RecoveryOptions, RecoveryResult};
use crate::sampling::{acquire, csv_err, AcquisitionConfig, SampleSet};
use crate::signal::{PulseShape, PulseStream, StreamKind};

/// Minimal quiet gap `((2r + 1) tau + R) / 2` between consecutive bursts.
pub fn spacing_threshold(tau: f64, r: usize, pulse_support: f64) -> f64 {
    ((2 * r + 1) as f64 * tau + pulse_support) / 2.0
}

/// Spacing check for one adjacent pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCheck {
    pub first: usize,
    pub second: usize,
    /// Quiet gap `start_{i+1} - (start_i + tau)`.
    pub gap: f64,
    /// `gap - threshold`; positive means compliant.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingReport {
    pub tau: f64,
    pub r: usize,
    pub pulse_support: f64,
    pub threshold: f64,
    pub pairs: Vec<PairCheck>,
}

impl SpacingReport {
    pub fn passed(&self) -> bool {
        self.pairs.iter().all(|p| p.pass)
    }
}

/// Checks every adjacent pair of burst starts.
pub fn spacing_report(burst_starts: &[f64], tau: f64, r: usize, pulse_support: f64) -> SpacingReport {
    let threshold = spacing_threshold(tau, r, pulse_support);
    let pairs = burst_starts
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let gap = w[1] - (w[0] + tau);
            PairCheck {
                first: i,
                second: i + 1,
                gap,
                margin: gap - threshold,
                pass: gap > threshold,
            }
        })
        .collect();
    SpacingReport {
        tau,
        r,
        pulse_support,
        threshold,
        pairs,
    }
}

/// Report-only validation of a bursty stream against a kernel.
pub fn validate_plan(stream: &PulseStream, kernel: &PeriodicExtensionKernel) -> Result<SpacingReport> {
    match stream.kind() {
        StreamKind::Bursty { tau, burst_starts } => {
            Ok(spacing_report(burst_starts, *tau, kernel.r(), stream.shape().support()))
        }
        _ => Err(Error::InvalidStream("spacing validation needs a bursty stream".into())),
    }
}

/// Fails on the first non-compliant pair.
pub fn check_spacing(stream: &PulseStream, r: usize) -> Result<()> {
    let StreamKind::Bursty { tau, burst_starts } = stream.kind() else {
        return Ok(());
    };
    let report = spacing_report(burst_starts, *tau, r, stream.shape().support());
    match report.pairs.iter().find(|p| !p.pass) {
        Some(p) => Err(Error::BurstSpacing {
            first: p.first,
            second: p.second,
            gap: p.gap,
            required: report.threshold,
        }),
        None => Ok(()),
    }
}

/// Serializable description of a bursty acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstPlan {
    pub burst_starts: Vec<f64>,
    pub tau: f64,
    pub r: usize,
    /// Pulse support `R`.
    pub pulse_support: f64,
    /// Samples per burst, uniform at `tau / N` from the burst start.
    pub samples_per_burst: usize,
    pub pulses_per_burst: usize,
}

impl BurstPlan {
    pub fn report(&self) -> SpacingReport {
        spacing_report(&self.burst_starts, self.tau, self.r, self.pulse_support)
    }

    /// Absolute sample instants for every burst, in burst order.
    pub fn instants(&self) -> Vec<f64> {
        let n = self.samples_per_burst;
        self.burst_starts
            .iter()
            .flat_map(|&s| (0..n).map(move |i| s + i as f64 * self.tau / n as f64))
            .collect()
    }

    pub fn rates(&self) -> RateReport {
        let period = match self.burst_starts.windows(2).map(|w| w[1] - w[0]).reduce(f64::min) {
            Some(p) => p,
            None => self.tau + spacing_threshold(self.tau, self.r, self.pulse_support),
        };
        rate_accounting(self.tau, self.pulses_per_burst, self.samples_per_burst, period)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Sampling rate during bursts versus the rate of innovation of the stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// `N / tau`, the rate while a burst is being sampled.
    pub burst_rate: f64,
    /// `2L / P` for burst repetition period `P`.
    pub innovation_rate: f64,
    /// `burst_rate / innovation_rate`.
    pub oversampling: f64,
}

pub fn rate_accounting(tau: f64, pulses: usize, samples_per_burst: usize, burst_period: f64) -> RateReport {
    let burst_rate = samples_per_burst as f64 / tau;
    let innovation_rate = 2.0 * pulses as f64 / burst_period;
    RateReport {
        burst_rate,
        innovation_rate,
        oversampling: burst_rate / innovation_rate,
    }
}

/// Samples `n_per_burst` uniform instants inside each burst window.
pub fn acquire_bursts(stream: &PulseStream, kernel: &PeriodicExtensionKernel, n_per_burst: usize) -> Result<SampleSet> {
    let StreamKind::Bursty { tau, burst_starts } = stream.kind() else {
        return Err(Error::InvalidStream("burst acquisition needs a bursty stream".into()));
    };
    let plan = BurstPlan {
        burst_starts: burst_starts.clone(),
        tau: *tau,
        r: kernel.r(),
        pulse_support: stream.shape().support(),
        samples_per_burst: n_per_burst,
        pulses_per_burst: 0,
    };
    let config = AcquisitionConfig::uniform(kernel.clone(), n_per_burst).with_instants(plan.instants());
    acquire(stream, &config)
}

/// Outcome for one burst; failures do not affect the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstRecovery {
    pub burst: usize,
    pub start: f64,
    pub n_samples: usize,
    /// Delays in absolute time.
    pub result: Option<RecoveryResult>,
    pub error: Option<String>,
}

/// Windows samples by burst, recovers each burst as a finite stream and
/// reports delays in absolute time. Results are ordered by burst index.
pub fn segment_and_recover(
    samples: &SampleSet,
    burst_starts: &[f64],
    shape: &PulseShape,
    pulses: usize,
    options: &RecoveryOptions,
) -> Result<Vec<BurstRecovery>> {
    let kernel = samples.meta.sampling_kernel()?;
    segment_values(&samples.instants, &samples.values, burst_starts, &kernel, shape, pulses, options)
}

/// [`segment_and_recover`] on raw instants and values.
pub fn segment_values(
    instants: &[f64],
    values: &[Complex64],
    burst_starts: &[f64],
    kernel: &SamplingKernel,
    shape: &PulseShape,
    pulses: usize,
    options: &RecoveryOptions,
) -> Result<Vec<BurstRecovery>> {
    if instants.len() != values.len() {
        return Err(Error::InvalidConfig("instant and value counts differ".into()));
    }
    let tau = kernel.tau();
    Ok(burst_starts
        .par_iter()
        .enumerate()
        .map(|(b, &start)| {
            let (local, vals): (Vec<f64>, Vec<Complex64>) = instants
                .iter()
                .zip(values)
                .filter(|(&t, _)| t >= start && t < start + tau)
                .map(|(&t, &v)| (t - start, v))
                .unzip();
            let outcome = CoefficientSystem::new(kernel, shape, &local)
                .and_then(|sys| recover_values(&vals, &sys, pulses, options))
                .map(|r| r.shifted(start));
            let (result, error) = match outcome {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            BurstRecovery {
                burst: b,
                start,
                n_samples: local.len(),
                result,
                error,
            }
        })
        .collect())
}

/// Acquires and recovers every burst of a bursty stream.
pub fn recover_stream(
    stream: &PulseStream,
    kernel: &PeriodicExtensionKernel,
    n_per_burst: usize,
    pulses: usize,
    options: &RecoveryOptions,
) -> Result<Vec<BurstRecovery>> {
    let StreamKind::Bursty { burst_starts, .. } = stream.kind() else {
        return Err(Error::InvalidStream("burst recovery needs a bursty stream".into()));
    };
    let samples = acquire_bursts(stream, kernel, n_per_burst)?;
    segment_and_recover(&samples, burst_starts, stream.shape(), pulses, options)
}

/// Convenience detector: a burst starts at the first sample whose magnitude
/// exceeds `fraction` of the peak, and lasts `tau`.
pub fn detect_bursts(instants: &[f64], values: &[Complex64], fraction: f64, tau: f64) -> Vec<f64> {
    let peak = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Vec::new();
    }
    let mut starts: Vec<f64> = Vec::new();
    for (&t, v) in instants.iter().zip(values) {
        if v.norm() > fraction * peak && starts.last().is_none_or(|&s| t >= s + tau) {
            starts.push(t);
        }
    }
    starts
}

#[derive(Debug, Serialize, Deserialize)]
struct TaggedRow {
    burst: usize,
    instant: f64,
    re: f64,
    im: f64,
}

/// Writes `burst,instant,re,im` rows; samples outside every window are skipped.
pub fn write_tagged_csv<W: Write>(writer: W, instants: &[f64], values: &[Complex64], burst_starts: &[f64], tau: f64) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (&t, v) in instants.iter().zip(values) {
        if let Some(b) = burst_starts.iter().position(|&s| t >= s && t < s + tau) {
            w.serialize(TaggedRow {
                burst: b,
                instant: t,
                re: v.re,
                im: v.im,
            })
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads tagged rows back as `(burst, instant, value)`.
pub fn read_tagged_csv<R: Read>(reader: R) -> Result<Vec<(usize, f64, Complex64)>> {
    csv::Reader::from_reader(reader)
        .deserialize::<TaggedRow>()
        .map(|row| {
            let row = row.map_err(csv_err)?;
            Ok((row.burst, row.instant, Complex64::new(row.re, row.im)))
        })
        .collect()
}
