use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sosfri::burst::{acquire_bursts, segment_values};
use sosfri::experiment::{compare_kernels, run, ExperimentSpec, KernelChoice};
use sosfri::kernel::{make_periodic_extension, optimal_coefficients, KernelDocument, PhaseProfile};
use sosfri::recovery::{recover, CoefficientSystem, RecoveryOptions};
use sosfri::sampling::{acquire, add_noise, AcquisitionConfig, SampleSet};
use sosfri::ultrasound::{
    phantom_scatterers, process_record, read_record_csv, read_record_i16, synthesize_channel, BasebandInput,
    DepthConvention, RecordHeader, RecordParams, UltrasoundConfig,
};
use sosfri::{IndexSet, PulseShape, PulseStream, SamplingKernel, SosKernel, StreamKind};

#[derive(Parser)]
#[command(name = "sosfri", version, about = "Sum-of-Sincs sampling and recovery of pulse streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit a kernel document (JSON).
    DesignKernel(DesignKernel),
    /// Filter and sample a stream document.
    Sample(Sample),
    /// Recover delays and amplitudes from a sample set.
    Recover(Recover),
    /// Run a Monte Carlo experiment spec.
    Experiment(Experiment),
    /// Ultrasound channel processing on recorded or synthetic data.
    Ultrasound(Ultrasound),
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelType {
    Dirichlet,
    Hamming,
    Optimal,
}

#[derive(Args)]
struct PulseArgs {
    /// Gaussian pulse width; Dirac pulses when absent.
    #[arg(long)]
    sigma: Option<f64>,
}

impl PulseArgs {
    fn shape(&self) -> Result<PulseShape> {
        Ok(match self.sigma {
            Some(s) => PulseShape::gaussian(s)?,
            None => PulseShape::Dirac,
        })
    }
}

#[derive(Args)]
struct DesignKernel {
    #[arg(long = "type", value_enum, default_value = "hamming")]
    kind: KernelType,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Index set {-p..p}.
    #[arg(long)]
    p: u32,
    /// Periodically extend for finite streams with this pulse support.
    #[arg(long)]
    extend: Option<f64>,
    #[command(flatten)]
    pulse: PulseArgs,
    /// Pulses per period (optimal kernel).
    #[arg(long = "L", default_value_t = 1)]
    pulses: usize,
    /// Noise variance (optimal kernel).
    #[arg(long, default_value_t = 0.1)]
    noise_var: f64,
    #[arg(long, default_value_t = 1.0)]
    amp_var: f64,
    /// Samples per period (optimal kernel); defaults to 2p+1.
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Sample {
    /// Stream document (JSON).
    #[arg(long)]
    stream: PathBuf,
    /// Kernel document (JSON).
    #[arg(long)]
    kernel: PathBuf,
    /// Samples per period, window or burst.
    #[arg(long = "N")]
    n: usize,
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output; the metadata sidecar goes next to it as .json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Recover {
    /// Sample CSV with its .json sidecar.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long = "L")]
    pulses: usize,
    #[command(flatten)]
    pulse: PulseArgs,
    /// TLS annihilator.
    #[arg(long)]
    tls: bool,
    #[arg(long, default_value_t = 0)]
    cadzow: usize,
    /// Estimate the model order, capped at L.
    #[arg(long)]
    estimate_order: bool,
    /// Comma-separated burst starts for bursty streams.
    #[arg(long, value_delimiter = ',')]
    burst_starts: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Experiment {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also compare these kernels on matched seeds.
    #[arg(long, value_enum, value_delimiter = ',')]
    compare: Vec<KernelType>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Convention {
    TwoWay,
    OneWay,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseband {
    Envelope,
    Complex,
}

#[derive(Args)]
struct Ultrasound {
    /// Recorded channel: CSV (one value per line) or raw little-endian i16.
    #[arg(long, conflicts_with = "synthesize", required_unless_present = "synthesize")]
    input: Option<PathBuf>,
    /// JSON header {f_s, f_c, units, ...}; defaults to the input path with a .json extension.
    #[arg(long, requires = "input")]
    header: Option<PathBuf>,
    /// Synthesize the four-scatterer phantom instead of reading a record.
    #[arg(long)]
    synthesize: bool,
    #[arg(long = "L", default_value_t = 4)]
    pulses: usize,
    #[arg(long = "N", default_value_t = 17)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    threshold_fraction: f64,
    #[arg(long, default_value_t = 20.0)]
    snr_db: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    cadzow: usize,
    #[arg(long, value_enum, default_value = "two-way")]
    convention: Convention,
    #[arg(long, value_enum, default_value = "envelope")]
    baseband: Baseband,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => Ok(r?),
            }
        }
    }
}

fn design_kernel(a: DesignKernel) -> Result<()> {
    let idx = IndexSet::symmetric(a.p);
    let shape = a.pulse.shape()?;
    let base = match a.kind {
        KernelType::Dirichlet => SosKernel::dirichlet(a.tau, idx)?,
        KernelType::Hamming => SosKernel::hamming(a.tau, idx)?,
        KernelType::Optimal => {
            let n = a.n.unwrap_or(idx.len());
            optimal_coefficients(&shape, a.tau, &idx, a.pulses, a.amp_var, a.noise_var, n)?.to_kernel(PhaseProfile::Zero)?
        }
    };
    let doc = match a.extend {
        Some(r) => KernelDocument::from(&make_periodic_extension(&base, r)?),
        None => KernelDocument::from(&base),
    };
    emit(a.out.as_deref(), &doc.to_json()?)
}

fn sample(a: Sample) -> Result<()> {
    let stream = PulseStream::from_json(&fs::read_to_string(&a.stream)?)?;
    let kernel = KernelDocument::from_json(&fs::read_to_string(&a.kernel)?)?.to_sampling_kernel()?;
    let clean = match (&kernel, stream.kind()) {
        (SamplingKernel::Extended(ext), StreamKind::Bursty { .. }) => acquire_bursts(&stream, ext, a.n)?,
        _ => acquire(&stream, &AcquisitionConfig::uniform(kernel, a.n))?,
    };
    let samples = match a.snr_db {
        Some(snr) => add_noise(&clean, snr, a.seed),
        None => clean,
    };
    samples.save(&a.out)?;
    eprintln!("wrote {} samples to {}", samples.len(), a.out.display());
    Ok(())
}

fn recover_cmd(a: Recover) -> Result<()> {
    let samples = SampleSet::load(&a.samples)?;
    let shape = a.pulse.shape()?;
    let kernel = samples.meta.sampling_kernel()?;
    let opts = RecoveryOptions {
        tls: a.tls || a.cadzow > 0,
        cadzow_iters: a.cadzow,
        estimate_order: a.estimate_order,
        ..RecoveryOptions::default()
    };
    let text = if a.burst_starts.is_empty() {
        let sys = CoefficientSystem::from_samples(&samples, &shape)?;
        recover(&samples, &sys, a.pulses, &opts)?.to_json()?
    } else {
        let bursts = segment_values(&samples.instants, &samples.values, &a.burst_starts, &kernel, &shape, a.pulses, &opts)?;
        let docs: Vec<serde_json::Value> = bursts
            .iter()
            .map(|b| {
                serde_json::json!({
                    "burst": b.burst,
                    "start": b.start,
                    "n_samples": b.n_samples,
                    "result": b.result,
                    "error": b.error,
                })
            })
            .collect();
        serde_json::to_string_pretty(&docs)?
    };
    emit(a.out.as_deref(), &text)
}

fn experiment(a: Experiment) -> Result<()> {
    let spec = ExperimentSpec::from_json(&fs::read_to_string(&a.spec)?)?;
    let result = run(&spec)?;
    result.write(&a.out)?;
    for row in &result.rows {
        eprintln!(
            "{} f={} snr={} dB: error {:.3e} ({} failures of {})",
            row.kernel, row.factor, row.snr_db, row.error, row.failures, row.trials
        );
    }
    if !a.compare.is_empty() {
        let kernels: Vec<KernelChoice> = a
            .compare
            .iter()
            .map(|k| match k {
                KernelType::Dirichlet => KernelChoice::Dirichlet,
                KernelType::Hamming => KernelChoice::Hamming,
                KernelType::Optimal => KernelChoice::Optimal,
            })
            .collect();
        let cmp = compare_kernels(&spec, &kernels)?;
        fs::write(a.out.join("kernel_comparison.json"), serde_json::to_string_pretty(&cmp)?)?;
    }
    eprintln!("results in {}", a.out.display());
    Ok(())
}

fn ultrasound(a: Ultrasound) -> Result<()> {
    let convention = match a.convention {
        Convention::TwoWay => DepthConvention::TwoWay,
        Convention::OneWay => DepthConvention::OneWay,
    };
    let record = match &a.input {
        Some(path) => {
            let header_path = a.header.clone().unwrap_or_else(|| path.with_extension("json"));
            let header: RecordHeader = serde_json::from_str(
                &fs::read_to_string(&header_path).with_context(|| format!("reading header {}", header_path.display()))?,
            )?;
            let file = fs::File::open(path)?;
            match path.extension().and_then(|e| e.to_str()) {
                Some("csv") | Some("txt") => read_record_csv(file, &header)?,
                _ => read_record_i16(file, &header)?,
            }
        }
        None => {
            if !a.synthesize {
                bail!("either --input or --synthesize is required");
            }
            let params = RecordParams::default();
            synthesize_channel(&phantom_scatterers(params.c_sound, convention), &params, a.snr_db, a.seed)?
        }
    };
    let config = UltrasoundConfig {
        pulses: a.pulses,
        n_samples: a.n,
        threshold_fraction: a.threshold_fraction,
        recovery: RecoveryOptions::denoising(a.cadzow),
        convention,
        input: match a.baseband {
            Baseband::Envelope => BasebandInput::Envelope,
            Baseband::Complex => BasebandInput::Complex,
        },
        ..UltrasoundConfig::thresholded()
    };
    let (report, _) = process_record(&record, &config)?;
    for e in &report.estimates {
        eprintln!("depth {:.2} mm, reflectivity {:.3}", e.depth_m * 1e3, e.reflectivity);
    }
    if let Some(err) = report.max_error_m {
        eprintln!("max localization error {:.3} mm", err * 1e3);
    }
    emit(a.out.as_deref(), &report.to_json()?)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::DesignKernel(a) => design_kernel(a),
        Command::Sample(a) => sample(a),
        Command::Recover(a) => recover_cmd(a),
        Command::Experiment(a) => experiment(a),
        Command::Ultrasound(a) => ultrasound(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
