use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use sosfri::experiment::{run, ExperimentSpec, Scenario};
use sosfri::kernel::make_periodic_extension;
use sosfri::recovery::{
    annihilating_filter, annihilating_filter_tls, cadzow_denoise, recover, CoefficientSystem, RecoveryOptions,
};
use sosfri::sampling::{acquire, add_noise, AcquisitionConfig};
use sosfri::signal::{exact_fourier_coeffs, exponential_sum};
use sosfri::{IndexSet, PulseShape, PulseStream, SosKernel};

fn two_dirac_setup() -> (PulseStream, SosKernel) {
    let stream = PulseStream::periodic(PulseShape::Dirac, 1.0, vec![1.0 / 3.0, 2.0 / 3.0], &[1.0, 1.0]).unwrap();
    (stream, SosKernel::dirichlet(1.0, IndexSet::symmetric(2)).unwrap())
}

#[test]
fn two_dirac_samples_have_closed_form() {
    // X[0] = 2 and X[k] = -1 otherwise, so c[n] = 3 - 5 delta[n].
    let (stream, kernel) = two_dirac_setup();
    let s = acquire(&stream, &AcquisitionConfig::uniform(kernel, 5)).unwrap();
    let expect = [-2.0, 3.0, 3.0, 3.0, 3.0];
    for (v, e) in s.values.iter().zip(expect) {
        assert!((v - Complex64::new(e, 0.0)).norm() < 1e-12, "{v} vs {e}");
    }
}

#[test]
fn two_dirac_coefficients_and_recovery() {
    let (stream, kernel) = two_dirac_setup();
    let s = acquire(&stream, &AcquisitionConfig::uniform(kernel.clone(), 5)).unwrap();
    let sys = CoefficientSystem::new(&kernel.into(), &PulseShape::Dirac, &s.instants).unwrap();
    let r = recover(&s, &sys, 2, &RecoveryOptions::default()).unwrap();

    let idx = IndexSet::symmetric(2);
    let exact = exact_fourier_coeffs(&stream, &idx).unwrap();
    let norm: f64 = exact.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let gap: f64 = exact.values.iter().zip(&r.coefficients.values).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    assert!(gap / norm < 1e-9);

    for (k, y) in idx.iter().zip(&r.y) {
        assert!((y - exponential_sum(stream.delays(), stream.amplitudes(), k, 1.0)).norm() < 1e-12);
    }
    assert!((r.delays[0] - 1.0 / 3.0).abs() < 1e-9 && (r.delays[1] - 2.0 / 3.0).abs() < 1e-9);
    for a in &r.amplitudes {
        assert!((a - Complex64::new(1.0, 0.0)).norm() < 1e-9);
    }
}

#[test]
fn finite_stream_with_extension_matches_periodized_stream() {
    let delays = vec![0.05, 0.3, 0.42, 0.7, 0.93];
    let amps = [1.0, -0.5, 0.8, 1.2, 0.3];
    let base = SosKernel::dirichlet(1.0, IndexSet::symmetric(5)).unwrap();
    let g3 = make_periodic_extension(&base, 0.0).unwrap();
    let finite = PulseStream::finite(PulseShape::Dirac, 1.0, delays.clone(), &amps).unwrap();
    let periodic = PulseStream::periodic(PulseShape::Dirac, 1.0, delays, &amps).unwrap();
    let a = acquire(&finite, &AcquisitionConfig::uniform(g3, 11)).unwrap();
    let b = acquire(&periodic, &AcquisitionConfig::uniform(base, 11)).unwrap();
    for (x, y) in a.values.iter().zip(&b.values) {
        assert!((x - y).norm() < 1e-12);
    }
}

#[test]
fn empirical_snr_matches_target() {
    let stream = PulseStream::periodic(PulseShape::Dirac, 1.0, vec![0.1, 0.45, 0.8], &[1.0, 0.6, -0.9]).unwrap();
    let kernel = SosKernel::hamming(1.0, IndexSet::symmetric(50)).unwrap();
    let clean = acquire(&stream, &AcquisitionConfig::uniform(kernel, 101)).unwrap();
    // 1000 realizations of 101 samples.
    let mut noise = 0.0;
    let mut count = 0usize;
    for seed in 0..1000 {
        let noisy = add_noise(&clean, 12.0, seed);
        noise += noisy.values.iter().zip(&noisy.clean_values).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
        count += noisy.len();
    }
    let snr = 10.0 * (clean.clean_power() / (noise / count as f64)).log10();
    assert!((snr - 12.0).abs() < 0.1, "{snr}");
}

#[test]
fn oversampling_by_eight_beats_critical_sampling() {
    let mut spec = ExperimentSpec::new(Scenario::Oversampling, 2);
    spec.delays = Some(vec![1.0 / 3.0, 2.0 / 3.0]);
    spec.snr_db = vec![20.0];
    spec.trials = 1000;
    spec.oversampling = vec![1, 8];
    spec.recovery = RecoveryOptions::denoising(10);
    let r = run(&spec).unwrap();
    assert!(r.rows[1].mean_delay_error < r.rows[0].mean_delay_error, "{:?}", r.rows);
}

fn direction_error(a: &[Complex64], b: &[Complex64]) -> f64 {
    let dot: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let na: f64 = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    1.0 - dot.norm() / (na * nb)
}

#[test]
fn tls_filter_converges_as_perturbation_vanishes() {
    let idx = IndexSet::symmetric(4);
    let delays = [0.21, 0.58];
    let amps = [Complex64::new(1.0, 0.0), Complex64::new(0.7, 0.0)];
    let y: Vec<Complex64> = idx.iter().map(|k| exponential_sum(&delays, &amps, k, 1.0)).collect();
    let clean = annihilating_filter(&y, &idx, 1.0, 2).unwrap().filter;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let w: Vec<Complex64> = (0..y.len()).map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng))).collect();
    let mut last = f64::INFINITY;
    for eps in [1e-2, 1e-4, 1e-6] {
        let noisy: Vec<Complex64> = y.iter().zip(&w).map(|(a, b)| a + b * eps).collect();
        let err = direction_error(&annihilating_filter_tls(&noisy, &idx, 1.0, 2).unwrap().filter, &clean);
        assert!(err < last, "eps = {eps}: {err} !< {last}");
        assert!(err < 10.0 * eps, "eps = {eps}: {err}");
        last = err;
    }
}

#[test]
fn cadzow_lowers_the_trailing_singular_value_ratio() {
    let idx = IndexSet::symmetric(6);
    let delays = [0.15, 0.5, 0.77];
    let amps = [Complex64::new(1.0, 0.0), Complex64::new(0.8, 0.0), Complex64::new(1.2, 0.0)];
    let y: Vec<Complex64> = idx.iter().map(|k| exponential_sum(&delays, &amps, k, 1.0)).collect();
    let power = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / y.len() as f64;
    let sigma = (power / 10.0 / 2.0).sqrt();
    let normal = Normal::new(0.0, sigma).unwrap();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noisy: Vec<Complex64> = y.iter().map(|v| v + Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng))).collect();
        let denoised = cadzow_denoise(&noisy, 3, 20).unwrap();
        let ratio = |v: &[Complex64]| {
            let sv = annihilating_filter_tls(v, &idx, 1.0, 3).unwrap().singular_values;
            sv[3] / sv[0]
        };
        assert!(ratio(&denoised) < ratio(&noisy), "seed {seed}");
    }
}

#[test]
fn hundred_diracs_are_stable() {
    let l = 100;
    let delays: Vec<f64> = (0..l).map(|i| (i + 1) as f64 / (l + 1) as f64).collect();
    let stream = PulseStream::finite(PulseShape::Dirac, 1.0, delays.clone(), &vec![1.0; l]).unwrap();
    let base = SosKernel::dirichlet(1.0, IndexSet::symmetric(l as u32)).unwrap();
    let g3 = make_periodic_extension(&base, 0.0).unwrap();
    let s = acquire(&stream, &AcquisitionConfig::uniform(g3.clone(), 201)).unwrap();
    let sys = CoefficientSystem::new(&g3.into(), &PulseShape::Dirac, &s.instants).unwrap();
    let r = recover(&s, &sys, l, &RecoveryOptions::default()).unwrap();
    for (a, b) in delays.iter().zip(&r.delays) {
        assert!((a - b).abs() < 1e-6);
    }
}
