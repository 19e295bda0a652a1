//! Monte Carlo experiment harness: noiseless demos, SNR sweeps,
//! oversampling studies, high-order runs, bursty streams and the
//! ultrasound surrogate. Results are deterministic given the spec.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::burst::{acquire_bursts, segment_values};
use crate::error::{Error, Result};
use crate::index::IndexSet;
use crate::kernel::{make_periodic_extension, optimal_coefficients, PhaseProfile, PowerAllocation, SamplingKernel, SosKernel};
use crate::recovery::{delay_error_sq, recover_values, CoefficientSystem, RecoveryOptions};
use crate::sampling::{acquire, add_noise, AcquisitionConfig, SampleSet};
use crate::signal::{exponential_sum, PulseShape, PulseStream, StreamKind};
use crate::ultrasound::{phantom_scatterers, process_record, synthesize_channel, RecordParams, UltrasoundConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    PeriodicDemo,
    PeriodicNoisy,
    FiniteDemo,
    FiniteNoisy,
    HighOrder,
    Oversampling,
    InfiniteDemo,
    Ultrasound,
}

impl Scenario {
    fn kind(self) -> StreamShape {
        match self {
            Scenario::PeriodicDemo | Scenario::PeriodicNoisy | Scenario::Oversampling => StreamShape::Periodic,
            Scenario::FiniteDemo | Scenario::FiniteNoisy | Scenario::HighOrder => StreamShape::Finite,
            Scenario::InfiniteDemo => StreamShape::Bursty,
            Scenario::Ultrasound => StreamShape::Ultrasound,
        }
    }

    fn default_layout(self) -> DelayLayout {
        match self {
            Scenario::PeriodicDemo | Scenario::FiniteDemo | Scenario::InfiniteDemo => DelayLayout::Random,
            _ => DelayLayout::EquallySpaced,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum StreamShape {
    Periodic,
    Finite,
    Bursty,
    Ultrasound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    /// `b_k = 1`.
    #[default]
    Dirichlet,
    Hamming,
    /// Waterfilling magnitudes for the pulse spectrum and noise level.
    Optimal,
}

impl KernelChoice {
    pub fn name(self) -> &'static str {
        match self {
            KernelChoice::Dirichlet => "dirichlet",
            KernelChoice::Hamming => "hamming",
            KernelChoice::Optimal => "optimal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayLayout {
    /// Delays and amplitudes from the spec.
    Fixed,
    /// `t_l = tau (l + 1) / (L + 1)`, unit amplitudes.
    EquallySpaced,
    /// Fresh uniform delays and amplitudes in `[0.5, 1.5]` per trial.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMetric {
    /// `||t - t^||^2` with sorted matching.
    #[default]
    DelaySquared,
    /// `max_l |t_l - t^_l|` with sorted matching.
    DelayMaxAbs,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn dirac() -> PulseShape {
    PulseShape::Dirac
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    /// Pulses per period, window or burst (`L`).
    pub pulses: usize,
    #[serde(default = "one")]
    pub tau: f64,
    #[serde(default = "dirac")]
    pub shape: PulseShape,
    #[serde(default)]
    pub layout: Option<DelayLayout>,
    /// Delays for the fixed layout, in `[0, tau)`.
    #[serde(default)]
    pub delays: Option<Vec<f64>>,
    #[serde(default)]
    pub amplitudes: Option<Vec<f64>>,
    /// `p` in `K = {-p..p}`; defaults to `L`.
    #[serde(default)]
    pub index_half_width: Option<u32>,
    /// Samples per window; defaults to `M`.
    #[serde(default)]
    pub n_samples: Option<usize>,
    #[serde(default)]
    pub kernel: KernelChoice,
    /// Empty means a single noiseless run.
    #[serde(default)]
    pub snr_db: Vec<f64>,
    #[serde(default = "one_usize")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Factors `f` giving `K = {-f p..f p}`; defaults to `[1]`.
    #[serde(default)]
    pub oversampling: Vec<usize>,
    #[serde(default)]
    pub recovery: RecoveryOptions,
    #[serde(default)]
    pub metric: ErrorMetric,
    /// Bursts in the infinite scenario.
    #[serde(default)]
    pub bursts: Option<usize>,
    /// Quiet gap between bursts; defaults to 1.01 times the threshold.
    #[serde(default)]
    pub burst_gap: Option<f64>,
    #[serde(default)]
    pub ultrasound: Option<UltrasoundConfig>,
    /// Amplitude variance assumed by the optimal kernel.
    #[serde(default = "one")]
    pub amplitude_variance: f64,
}

impl ExperimentSpec {
    pub fn new(scenario: Scenario, pulses: usize) -> Self {
        Self {
            scenario,
            pulses,
            tau: 1.0,
            shape: PulseShape::Dirac,
            layout: None,
            delays: None,
            amplitudes: None,
            index_half_width: None,
            n_samples: None,
            kernel: KernelChoice::Dirichlet,
            snr_db: Vec::new(),
            trials: 1,
            seed: 0,
            oversampling: Vec::new(),
            recovery: RecoveryOptions::default(),
            metric: ErrorMetric::DelaySquared,
            bursts: None,
            burst_gap: None,
            ultrasound: None,
            amplitude_variance: 1.0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn layout(&self) -> DelayLayout {
        self.layout.unwrap_or_else(|| {
            if self.delays.is_some() {
                DelayLayout::Fixed
            } else {
                self.scenario.default_layout()
            }
        })
    }

    fn half_width(&self) -> u32 {
        self.index_half_width.unwrap_or(self.pulses as u32)
    }

    fn factors(&self) -> Vec<usize> {
        if self.oversampling.is_empty() {
            vec![1]
        } else {
            self.oversampling.clone()
        }
    }

    fn snrs(&self) -> Vec<f64> {
        if self.snr_db.is_empty() {
            vec![f64::INFINITY]
        } else {
            self.snr_db.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidSpec("trials must be >= 1".into()));
        }
        if self.pulses == 0 {
            return Err(Error::InvalidSpec("pulses must be >= 1".into()));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidSpec("tau must be > 0".into()));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidSpec("SNR grid must be finite".into()));
        }
        if self.oversampling.contains(&0) {
            return Err(Error::InvalidSpec("oversampling factors must be >= 1".into()));
        }
        self.shape.validate()?;
        if self.layout() == DelayLayout::Fixed {
            let d = self
                .delays
                .as_ref()
                .ok_or_else(|| Error::InvalidSpec("fixed layout needs delays".into()))?;
            if d.len() != self.pulses {
                return Err(Error::InvalidSpec(format!("{} delays for L = {}", d.len(), self.pulses)));
            }
            if let Some(a) = &self.amplitudes {
                if a.len() != self.pulses {
                    return Err(Error::InvalidSpec(format!("{} amplitudes for L = {}", a.len(), self.pulses)));
                }
            }
        }
        let m = 2 * self.half_width() as usize + 1;
        if m < 2 * self.pulses {
            return Err(Error::InvalidSpec(format!("M = {m} cannot resolve L = {}", self.pulses)));
        }
        if let Some(n) = self.n_samples {
            if n < m {
                return Err(Error::InvalidSpec(format!("N = {n} < M = {m}")));
            }
        }
        Ok(())
    }
}

/// One row of the result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub kernel: String,
    pub factor: usize,
    pub m: usize,
    pub n: usize,
    /// `inf` for noiseless runs.
    pub snr_db: f64,
    pub trials: usize,
    pub failures: usize,
    /// Mean of `||t - t^||^2` over successful trials.
    pub mean_delay_error: f64,
    /// Mean of `max |t - t^|`.
    pub mean_max_abs_delay_error: f64,
    /// Mean of `||a - a^||^2`.
    pub mean_amplitude_error: f64,
    /// The column selected by the spec's metric.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub rows: Vec<ResultRow>,
    /// Wall-clock seconds per row; kept apart from the deterministic table.
    pub runtime_s: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct TrialOutcome {
    delay_sq: f64,
    delay_max: f64,
    amp_sq: f64,
}

/// SplitMix64 finalizer, used to derive independent per-trial seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for trial `trial` at SNR position `snr_idx`; independent of the
/// kernel and oversampling factor so comparisons use matched noise.
pub fn trial_seed(base: u64, snr_idx: usize, trial: usize) -> u64 {
    mix(mix(mix(base) ^ snr_idx as u64) ^ trial as u64)
}

/// Uniform delays with a minimum separation, sorted.
fn random_delays(rng: &mut ChaCha8Rng, l: usize, lo: f64, hi: f64, min_sep: f64) -> Vec<f64> {
    loop {
        let mut d: Vec<f64> = (0..l).map(|_| rng.random_range(lo..hi)).collect();
        d.sort_by(f64::total_cmp);
        if d.windows(2).all(|w| w[1] - w[0] >= min_sep) {
            return d;
        }
    }
}

struct Layout {
    delays: Vec<f64>,
    amplitudes: Vec<f64>,
}

fn make_layout(spec: &ExperimentSpec, m: usize, rng: &mut ChaCha8Rng) -> Layout {
    let l = spec.pulses;
    let tau = spec.tau;
    match spec.layout() {
        DelayLayout::Fixed => Layout {
            delays: spec.delays.clone().unwrap_or_default(),
            amplitudes: spec.amplitudes.clone().unwrap_or_else(|| vec![1.0; l]),
        },
        DelayLayout::EquallySpaced => Layout {
            delays: (0..l).map(|i| tau * (i + 1) as f64 / (l + 1) as f64).collect(),
            amplitudes: spec.amplitudes.clone().unwrap_or_else(|| vec![1.0; l]),
        },
        DelayLayout::Random => {
            // Keep clear of the window edges for pulses with nonzero width.
            let margin = 0.5 * spec.shape.support();
            let delays = random_delays(rng, l, margin, tau - margin, tau / (4.0 * m as f64));
            let amplitudes = (0..l).map(|_| rng.random_range(0.5..1.5)).collect();
            Layout { delays, amplitudes }
        }
    }
}

fn base_kernel(spec: &ExperimentSpec, idx: IndexSet, n: usize, snr_db: f64) -> Result<SosKernel> {
    match spec.kernel {
        KernelChoice::Dirichlet => SosKernel::dirichlet(spec.tau, idx),
        KernelChoice::Hamming => SosKernel::hamming(spec.tau, idx),
        KernelChoice::Optimal => optimal_kernel(&spec.shape, spec.tau, idx, spec.pulses, spec.amplitude_variance, n, snr_db),
    }
}

/// Noise variance in the `y = V B x + w` model for a given SNR, measured
/// against the expected clean power `sum q_k / M` of a uniform kernel.
pub fn design_noise_variance(q: &[f64], snr_db: f64) -> f64 {
    let reference = q.iter().sum::<f64>() / q.len() as f64;
    if snr_db.is_infinite() {
        reference * 1e-12
    } else {
        reference / 10f64.powf(snr_db / 10.0)
    }
}

/// `E|x_k|^2 = sigma_a^2 L |H_k|^2 / tau^2` for uniform delays.
fn coefficient_power(shape: &PulseShape, tau: f64, idx: IndexSet, pulses: usize, amp_var: f64) -> Vec<f64> {
    idx.iter()
        .map(|k| (shape.ctft(TAU * k as f64 / tau).norm() / tau).powi(2) * amp_var * pulses as f64)
        .collect()
}

fn optimal_allocation(shape: &PulseShape, tau: f64, idx: IndexSet, pulses: usize, amp_var: f64, n: usize, snr_db: f64) -> Result<PowerAllocation> {
    let noise = design_noise_variance(&coefficient_power(shape, tau, idx, pulses, amp_var), snr_db);
    optimal_coefficients(shape, tau, &idx, pulses, amp_var, noise, n)
}

fn optimal_kernel(shape: &PulseShape, tau: f64, idx: IndexSet, pulses: usize, amp_var: f64, n: usize, snr_db: f64) -> Result<SosKernel> {
    optimal_allocation(shape, tau, idx, pulses, amp_var, n, snr_db)?.to_kernel(PhaseProfile::Zero)
}

fn outcome(truth: &Layout, delays: &[f64], amps: &[Complex64]) -> Option<TrialOutcome> {
    let delay_sq = delay_error_sq(&truth.delays, delays)?;
    let mut order: Vec<usize> = (0..truth.delays.len()).collect();
    order.sort_by(|&a, &b| truth.delays[a].total_cmp(&truth.delays[b]));
    let sorted_truth: Vec<f64> = order.iter().map(|&i| truth.delays[i]).collect();
    let delay_max = sorted_truth.iter().zip(delays).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let amp_sq = order
        .iter()
        .zip(amps)
        .map(|(&i, a)| (Complex64::new(truth.amplitudes[i], 0.0) - a).norm_sqr())
        .sum();
    Some(TrialOutcome {
        delay_sq,
        delay_max,
        amp_sq,
    })
}

/// Everything fixed across the trials of one (factor, SNR) cell.
struct Cell {
    idx: IndexSet,
    n: usize,
    kernel: SamplingKernel,
    clean: Option<(Layout, SampleSet)>,
}

fn stream_for(spec: &ExperimentSpec, layout: &Layout, r_kernel: &SamplingKernel) -> Result<PulseStream> {
    match spec.scenario.kind() {
        StreamShape::Periodic => PulseStream::periodic(spec.shape.clone(), spec.tau, layout.delays.clone(), &layout.amplitudes),
        StreamShape::Finite => PulseStream::finite(spec.shape.clone(), spec.tau, layout.delays.clone(), &layout.amplitudes),
        StreamShape::Bursty => {
            let r = match r_kernel {
                SamplingKernel::Extended(e) => e.r(),
                _ => 1,
            };
            let starts = burst_starts(spec, r);
            let mut delays = Vec::new();
            let mut amps = Vec::new();
            for &s in &starts {
                delays.extend(layout.delays.iter().map(|t| s + t));
                amps.extend(layout.amplitudes.iter().copied());
            }
            PulseStream::real(
                spec.shape.clone(),
                delays,
                &amps,
                StreamKind::Bursty {
                    tau: spec.tau,
                    burst_starts: starts,
                },
            )
        }
        StreamShape::Ultrasound => Err(Error::InvalidSpec("ultrasound trials do not use pulse streams".into())),
    }
}

fn burst_starts(spec: &ExperimentSpec, r: usize) -> Vec<f64> {
    let threshold = crate::burst::spacing_threshold(spec.tau, r, spec.shape.support());
    let gap = spec.burst_gap.unwrap_or(1.01 * threshold);
    (0..spec.bursts.unwrap_or(3)).map(|b| b as f64 * (spec.tau + gap)).collect()
}

fn build_cell(spec: &ExperimentSpec, factor: usize, snr_db: f64) -> Result<Cell> {
    let p = spec.half_width() * factor as u32;
    let idx = IndexSet::symmetric(p);
    let m0 = 2 * spec.half_width() as usize + 1;
    let n = idx.len() + spec.n_samples.map_or(0, |n0| n0 - m0);
    let base = base_kernel(spec, idx, n, snr_db)?;
    let kernel: SamplingKernel = match spec.scenario.kind() {
        StreamShape::Periodic => base.into(),
        _ => make_periodic_extension(&base, spec.shape.support())?.into(),
    };
    let clean = if spec.layout() == DelayLayout::Random {
        None
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let layout = make_layout(spec, idx.len(), &mut rng);
        let samples = clean_samples(spec, &layout, &kernel, n)?;
        Some((layout, samples))
    };
    Ok(Cell { idx, n, kernel, clean })
}

fn clean_samples(spec: &ExperimentSpec, layout: &Layout, kernel: &SamplingKernel, n: usize) -> Result<SampleSet> {
    let stream = stream_for(spec, layout, kernel)?;
    match kernel {
        SamplingKernel::Extended(ext) if spec.scenario.kind() == StreamShape::Bursty => acquire_bursts(&stream, ext, n),
        _ => acquire(&stream, &AcquisitionConfig::uniform(kernel.clone(), n)),
    }
}

fn run_trial(spec: &ExperimentSpec, cell: &Cell, snr_db: f64, seed: u64) -> Result<TrialOutcome> {
    let fresh;
    let (layout, clean) = match &cell.clean {
        Some((l, s)) => (l, s),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ 0x5157_4e41_4c00_0000));
            let layout = make_layout(spec, cell.idx.len(), &mut rng);
            let samples = clean_samples(spec, &layout, &cell.kernel, cell.n)?;
            fresh = (layout, samples);
            (&fresh.0, &fresh.1)
        }
    };
    let noisy = add_noise(clean, snr_db, seed);
    let (delays, amps) = if spec.scenario.kind() == StreamShape::Bursty {
        let StreamKind::Bursty { burst_starts, .. } = stream_for(spec, layout, &cell.kernel)?.kind().clone() else {
            unreachable!("bursty scenario builds bursty streams")
        };
        let out = segment_values(&noisy.instants, &noisy.values, &burst_starts, &cell.kernel, &spec.shape, spec.pulses, &spec.recovery)?;
        let mut delays = Vec::new();
        let mut amps = Vec::new();
        for b in out {
            let r = b.result.ok_or_else(|| Error::Numerical(b.error.unwrap_or_default()))?;
            // Compare each burst against the local layout.
            delays.extend(r.delays.iter().map(|t| t - b.start));
            amps.extend(r.amplitudes);
        }
        let bursts = burst_starts.len();
        let truth = Layout {
            delays: layout.delays.iter().copied().cycle().take(bursts * spec.pulses).collect(),
            amplitudes: layout.amplitudes.iter().copied().cycle().take(bursts * spec.pulses).collect(),
        };
        // Per-burst sorted matching: errors add across bursts.
        let mut total = TrialOutcome {
            delay_sq: 0.0,
            delay_max: 0.0,
            amp_sq: 0.0,
        };
        for b in 0..bursts {
            let range = b * spec.pulses..(b + 1) * spec.pulses;
            let local = Layout {
                delays: truth.delays[range.clone()].to_vec(),
                amplitudes: truth.amplitudes[range.clone()].to_vec(),
            };
            let o = outcome(&local, &delays[range.clone()], &amps[range])
                .ok_or_else(|| Error::Numerical("estimate count mismatch".into()))?;
            total.delay_sq += o.delay_sq;
            total.delay_max = total.delay_max.max(o.delay_max);
            total.amp_sq += o.amp_sq;
        }
        return Ok(total);
    } else {
        let system = CoefficientSystem::new(&cell.kernel, &spec.shape, &noisy.instants)?;
        let r = recover_values(&noisy.values, &system, spec.pulses, &spec.recovery)?;
        (r.delays, r.amplitudes)
    };
    outcome(layout, &delays, &amps).ok_or_else(|| Error::Numerical("estimate count mismatch".into()))
}

fn ultrasound_trial(spec: &ExperimentSpec, snr_db: f64, seed: u64) -> Result<TrialOutcome> {
    let params = RecordParams::default();
    let config = spec.ultrasound.unwrap_or_else(UltrasoundConfig::thresholded);
    let truth = phantom_scatterers(params.c_sound, config.convention);
    let record = synthesize_channel(&truth, &params, snr_db, seed)?;
    let (_, result) = process_record(&record, &config)?;
    let layout = Layout {
        delays: truth.iter().map(|s| s.delay).collect(),
        amplitudes: truth.iter().map(|s| s.reflectivity).collect(),
    };
    let mags: Vec<Complex64> = result.amplitudes.iter().map(|a| Complex64::new(a.norm(), 0.0)).collect();
    outcome(&layout, &result.delays, &mags).ok_or_else(|| Error::Numerical("estimate count mismatch".into()))
}

fn aggregate(spec: &ExperimentSpec, factor: usize, m: usize, n: usize, snr_db: f64, trials: &[Result<TrialOutcome>]) -> ResultRow {
    let ok: Vec<&TrialOutcome> = trials.iter().filter_map(|t| t.as_ref().ok()).collect();
    let count = ok.len().max(1) as f64;
    // Sequential sums in trial order keep the table bit-reproducible.
    let mean = |f: fn(&TrialOutcome) -> f64| {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|o| f(o)).sum::<f64>() / count
        }
    };
    let mean_delay_error = mean(|o| o.delay_sq);
    let mean_max_abs_delay_error = mean(|o| o.delay_max);
    ResultRow {
        kernel: spec.kernel.name().to_string(),
        factor,
        m,
        n,
        snr_db,
        trials: trials.len(),
        failures: trials.len() - ok.len(),
        mean_delay_error,
        mean_max_abs_delay_error,
        mean_amplitude_error: mean(|o| o.amp_sq),
        error: match spec.metric {
            ErrorMetric::DelaySquared => mean_delay_error,
            ErrorMetric::DelayMaxAbs => mean_max_abs_delay_error,
        },
    }
}

/// Runs every (oversampling factor, SNR) cell of a spec.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let mut rows = Vec::new();
    let mut runtime_s = Vec::new();
    for factor in spec.factors() {
        for (si, &snr) in spec.snrs().iter().enumerate() {
            let start = Instant::now();
            let row = if spec.scenario == Scenario::Ultrasound {
                let cfg = spec.ultrasound.unwrap_or_else(UltrasoundConfig::thresholded);
                let outcomes: Vec<Result<TrialOutcome>> = (0..spec.trials)
                    .into_par_iter()
                    .map(|t| ultrasound_trial(spec, snr, trial_seed(spec.seed, si, t)))
                    .collect();
                aggregate(spec, factor, cfg.n_samples, cfg.n_samples, snr, &outcomes)
            } else {
                let cell = build_cell(spec, factor, snr)?;
                let outcomes: Vec<Result<TrialOutcome>> = (0..spec.trials)
                    .into_par_iter()
                    .map(|t| run_trial(spec, &cell, snr, trial_seed(spec.seed, si, t)))
                    .collect();
                aggregate(spec, factor, cell.idx.len(), cell.n, snr, &outcomes)
            };
            rows.push(row);
            runtime_s.push(start.elapsed().as_secs_f64());
        }
    }
    Ok(ExperimentResult {
        spec: spec.clone(),
        rows,
        runtime_s,
    })
}

impl ExperimentResult {
    /// Result table as CSV (no timings).
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(crate::sampling::csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    /// gnuplot data: one indexed block per (kernel, factor), columns
    /// `snr error delay_error amplitude_error`.
    pub fn to_gnuplot(&self) -> String {
        let mut out = String::new();
        let mut keys: Vec<(String, usize)> = Vec::new();
        for r in &self.rows {
            let key = (r.kernel.clone(), r.factor);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        for (i, (kernel, factor)) in keys.iter().enumerate() {
            if i > 0 {
                out.push_str("\n\n");
            }
            let _ = writeln!(out, "# kernel={kernel} factor={factor}");
            let _ = writeln!(out, "# snr_db error mean_delay_error mean_amplitude_error");
            for r in self.rows.iter().filter(|r| &r.kernel == kernel && r.factor == *factor) {
                let _ = writeln!(out, "{} {:e} {:e} {:e}", r.snr_db, r.error, r.mean_delay_error, r.mean_amplitude_error);
            }
        }
        out
    }

    /// Writes `results.csv`, `summary.json` and `plot.dat` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("results.csv"), self.to_csv()?)?;
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(self)?)?;
        fs::write(dir.join("plot.dat"), self.to_gnuplot())?;
        Ok(())
    }
}

/// Linear-estimator MSE of `x` for one kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XMseRow {
    pub kernel: String,
    pub snr_db: f64,
    pub noise_var: f64,
    pub empirical_mse: f64,
    /// Standard error of `empirical_mse`.
    pub std_error: f64,
    pub theoretical_mse: f64,
}

/// Delay-error table for one kernel, or why it could not be built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayTable {
    pub kernel: String,
    pub result: Option<ExperimentResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelComparison {
    pub delay_tables: Vec<DelayTable>,
    pub x_mse: Vec<XMseRow>,
}

/// `|b_k|^2` normalized to unit trace. The optimal allocation may switch
/// indices off, so it is used directly rather than through a kernel.
fn normalized_energies(spec: &ExperimentSpec, choice: KernelChoice, idx: IndexSet, n: usize, snr_db: f64) -> Result<Vec<f64>> {
    let e: Vec<f64> = match choice {
        KernelChoice::Optimal => optimal_allocation(&spec.shape, spec.tau, idx, spec.pulses, spec.amplitude_variance, n, snr_db)?.beta,
        _ => {
            let s = ExperimentSpec { kernel: choice, ..spec.clone() };
            base_kernel(&s, idx, n, snr_db)?.coefficients().iter().map(|b| b.norm_sqr()).collect()
        }
    };
    let total: f64 = e.iter().sum();
    Ok(e.iter().map(|v| v / total).collect())
}

/// LMMSE estimate of `x` from `y = V B x + w` with `R_xx = diag(q)`.
fn lmmse(v: &DMatrix<Complex64>, b: &[Complex64], q: &[f64], noise_var: f64, y: &[Complex64]) -> Vec<Complex64> {
    let m = b.len();
    let vb = DMatrix::from_fn(v.nrows(), m, |i, j| v[(i, j)] * b[j]);
    let vbh = vb.adjoint();
    let mut a = &vbh * &vb / Complex64::new(noise_var, 0.0);
    for i in 0..m {
        a[(i, i)] += Complex64::new(1.0 / q[i], 0.0);
    }
    let rhs = &vbh * nalgebra::DVector::from_column_slice(y) / Complex64::new(noise_var, 0.0);
    a.lu().solve(&rhs).expect("LMMSE system is positive definite").iter().copied().collect()
}

/// Matched-seed comparison of kernel choices: delay-error tables plus the
/// empirical MSE of the linear estimate of `x` under a common noise level
/// and unit-trace `b` (random uniform delays, Gaussian zero-mean amplitudes).
pub fn compare_kernels(spec: &ExperimentSpec, kernels: &[KernelChoice]) -> Result<KernelComparison> {
    let mut delay_tables = Vec::new();
    for &k in kernels {
        let s = ExperimentSpec { kernel: k, ..spec.clone() };
        let (result, error) = match run(&s) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        delay_tables.push(DelayTable {
            kernel: k.name().to_string(),
            result,
            error,
        });
    }
    let idx = IndexSet::symmetric(spec.half_width());
    let m = idx.len();
    let n = spec.n_samples.unwrap_or(m);
    let tau = spec.tau;
    let l = spec.pulses;
    let q = coefficient_power(&spec.shape, tau, idx, l, spec.amplitude_variance);
    let instants: Vec<f64> = (0..n).map(|i| i as f64 * tau / n as f64).collect();
    let ks: Vec<i64> = idx.iter().collect();
    let v = DMatrix::from_fn(n, m, |r, c| Complex64::from_polar(1.0, TAU * ks[c] as f64 * instants[r] / tau));
    let amp = Normal::new(0.0, spec.amplitude_variance.sqrt()).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let mut x_mse = Vec::new();
    for (si, &snr) in spec.snrs().iter().enumerate() {
        let noise_var = design_noise_variance(&q, snr);
        for &choice in kernels {
            let beta = normalized_energies(spec, choice, idx, n, snr)?;
            let b: Vec<Complex64> = beta.iter().map(|&e| Complex64::new(e.sqrt(), 0.0)).collect();
            let theoretical_mse = q.iter().zip(&beta).map(|(&qi, &bi)| 1.0 / (1.0 / qi + n as f64 * bi / noise_var)).sum();
            let errs: Vec<f64> = (0..spec.trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(spec.seed, si, t));
                    let delays: Vec<f64> = (0..l).map(|_| rng.random_range(0.0..tau)).collect();
                    let amps: Vec<Complex64> = (0..l).map(|_| Complex64::new(amp.sample(&mut rng), 0.0)).collect();
                    let x: Vec<Complex64> = ks
                        .iter()
                        .map(|&k| spec.shape.ctft(TAU * k as f64 / tau) / tau * exponential_sum(&delays, &amps, k, tau))
                        .collect();
                    let w = Normal::new(0.0, (noise_var / 2.0).sqrt()).expect("finite noise");
                    let y: Vec<Complex64> = (0..n)
                        .map(|r| {
                            let clean: Complex64 = (0..m).map(|c| v[(r, c)] * b[c] * x[c]).sum();
                            clean + Complex64::new(w.sample(&mut rng), w.sample(&mut rng))
                        })
                        .collect();
                    let est = lmmse(&v, &b, &q, noise_var, &y);
                    est.iter().zip(&x).map(|(e, x)| (e - x).norm_sqr()).sum()
                })
                .collect();
            let count = errs.len() as f64;
            let mean = errs.iter().sum::<f64>() / count;
            let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (count - 1.0).max(1.0);
            x_mse.push(XMseRow {
                kernel: choice.name().to_string(),
                snr_db: snr,
                noise_var,
                empirical_mse: mean,
                std_error: (var / count).sqrt(),
                theoretical_mse,
            });
        }
    }
    Ok(KernelComparison { delay_tables, x_mse })
}
