use sosfri::burst::{recover_stream, spacing_threshold, BurstPlan};
use sosfri::kernel::make_periodic_extension;
use sosfri::recovery::RecoveryOptions;
use sosfri::ultrasound::{
    phantom_scatterers, process_record, synthesize_channel, DepthConvention, RecordParams, UltrasoundConfig,
};
use sosfri::{IndexSet, PulseShape, PulseStream, SosKernel, StreamKind};

fn triangle(support: f64) -> PulseShape {
    PulseShape::TabulatedSymmetric {
        samples: vec![0.0, 1.0, 0.0],
        spacing: support / 2.0,
    }
}

/// Largest contribution `|int h(t - s1) g3(t - t_n) dt|` of a pulse at the
/// start of a second burst to the first burst's samples, by quadrature.
fn leakage(gap: f64) -> f64 {
    let tau = 1.0;
    let shape = triangle(0.5);
    let base = SosKernel::hamming(tau, IndexSet::symmetric(3)).unwrap();
    let g3 = make_periodic_extension(&base, shape.support()).unwrap();
    assert_eq!(g3.r(), 1);
    let s1 = tau + gap;
    let steps = 4000;
    let dt = shape.support() / steps as f64;
    (0..7)
        .map(|n| {
            let tn = n as f64 * tau / 7.0;
            let mut acc = num_complex::Complex64::new(0.0, 0.0);
            for i in 0..=steps {
                let t = s1 - 0.25 + i as f64 * dt;
                acc += g3.eval_time(t - tn).unwrap().conj() * shape.eval(t - s1).unwrap();
            }
            (acc * dt).norm()
        })
        .fold(0.0, f64::max)
}

#[test]
fn threshold_for_half_period_pulse() {
    assert!((spacing_threshold(1.0, 1, 0.5) - 1.75).abs() < 1e-15);
    assert!(leakage(1.75 + 1e-3) < 1e-10);
    assert!(leakage(1.6) > 1e-6);
}

#[test]
fn three_bursts_of_five_diracs() {
    let tau = 1.0;
    let gap = spacing_threshold(tau, 1, 0.0) * 1.05;
    let local = [0.07, 0.26, 0.41, 0.66, 0.9];
    let starts: Vec<f64> = (0..3).map(|b| b as f64 * (tau + gap)).collect();
    let mut delays = Vec::new();
    let mut amps = Vec::new();
    for (b, s) in starts.iter().enumerate() {
        delays.extend(local.iter().map(|t| s + t));
        amps.extend(local.iter().map(|t| 1.0 + t * (b + 1) as f64));
    }
    let stream = PulseStream::real(
        PulseShape::Dirac,
        delays.clone(),
        &amps,
        StreamKind::Bursty {
            tau,
            burst_starts: starts,
        },
    )
    .unwrap();
    let base = SosKernel::dirichlet(tau, IndexSet::symmetric(5)).unwrap();
    let g3 = make_periodic_extension(&base, 0.0).unwrap();
    let out = recover_stream(&stream, &g3, 11, 5, &RecoveryOptions::default()).unwrap();
    let found: Vec<f64> = out.iter().flat_map(|b| b.result.as_ref().unwrap().delays.clone()).collect();
    assert_eq!(found.len(), 15);
    for (a, b) in delays.iter().zip(&found) {
        assert!((a - b).abs() < 1e-7 * tau, "{a} vs {b}");
    }
}

#[test]
fn back_to_back_bursts_oversample_by_two_and_a_half() {
    let plan = BurstPlan {
        burst_starts: vec![0.0, 2.5, 5.0],
        tau: 1.0,
        r: 1,
        pulse_support: 0.0,
        samples_per_burst: 6,
        pulses_per_burst: 3,
    };
    let rates = plan.rates();
    assert!((rates.burst_rate - 6.0).abs() < 1e-12);
    assert!((rates.innovation_rate - 6.0 / 2.5).abs() < 1e-12);
    assert!((rates.oversampling - 2.5).abs() < 1e-12);
}

#[test]
fn window_depth_is_sixteen_centimetres() {
    let p = RecordParams::default();
    assert_eq!(p.n_samples(), 4160);
    let depth = DepthConvention::TwoWay.depth(p.tau, p.c_sound);
    assert!((depth - 0.1612).abs() < 1e-12);
    assert!((depth - 0.16).abs() < 2e-3);
}

#[test]
fn thresholded_phantom_recovery() {
    let params = RecordParams::default();
    let cfg = UltrasoundConfig::thresholded();
    let truth = phantom_scatterers(params.c_sound, cfg.convention);
    let record = synthesize_channel(&truth, &params, 25.0, 17).unwrap();
    let (report, result) = process_record(&record, &cfg).unwrap();
    assert!(report.thresholded_entries <= cfg.n_samples - 2 * cfg.pulses);
    assert_eq!(result.delays.len(), 4);
    assert!(report.max_error_m.unwrap() <= 0.5e-3);
    assert!((report.reduction_factor - 4160.0 / 17.0).abs() < 1e-9);
}

#[test]
fn oversampled_phantom_recovery() {
    let params = RecordParams::default();
    let cfg = UltrasoundConfig::oversampled();
    let truth = phantom_scatterers(params.c_sound, cfg.convention);
    for seed in 0..5 {
        let record = synthesize_channel(&truth, &params, 20.0, seed).unwrap();
        let (report, _) = process_record(&record, &cfg).unwrap();
        assert!(report.max_error_m.unwrap() <= 0.5e-3, "seed {seed}");
        assert!((report.reduction_factor - 4160.0 / 33.0).abs() < 1e-9);
        assert_eq!(report.thresholded_entries, 0);
    }
}

#[test]
fn complex_baseband_option_also_localizes() {
    let params = RecordParams::default();
    let cfg = UltrasoundConfig {
        input: sosfri::ultrasound::BasebandInput::Complex,
        ..UltrasoundConfig::oversampled()
    };
    let truth = phantom_scatterers(params.c_sound, cfg.convention);
    let record = synthesize_channel(&truth, &params, 30.0, 3).unwrap();
    let (report, result) = process_record(&record, &cfg).unwrap();
    assert!(report.max_error_m.unwrap() <= 0.5e-3);
    // Amplitudes carry the carrier phase but keep the reflectivity magnitudes.
    let mags: Vec<f64> = result.amplitudes.iter().map(|a| a.norm()).collect();
    for (m, s) in mags.iter().zip(&truth) {
        assert!((m - s.reflectivity).abs() < 0.1 * s.reflectivity, "{m} vs {}", s.reflectivity);
    }
}
