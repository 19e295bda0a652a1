use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sosfri::kernel::{
    make_periodic_extension, optimal_coefficients, replica_count, verify_condition, waterfill, LowpassKernel,
};
use sosfri::signal::{evaluate_stream, exact_fourier_coeffs, FineGrid};
use sosfri::{IndexSet, PulseShape, PulseStream, SosKernel};

fn gaussian_stream(seed: u64) -> PulseStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delays: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
    let amps: Vec<f64> = (0..5).map(|_| rng.random_range(-1.5..1.5)).collect();
    PulseStream::periodic(PulseShape::gaussian(7e-3).unwrap(), 1.0, delays, &amps).unwrap()
}

#[test]
fn periodic_gaussians_match_brute_force_superposition() {
    let stream = gaussian_stream(11);
    let grid = FineGrid::over(0.0, 1.0, 4000).unwrap();
    let values = evaluate_stream(&stream, &grid).unwrap();
    let s = 7e-3;
    for (i, v) in values.iter().enumerate() {
        let t = grid.time(i);
        let mut expect = 0.0;
        for (c, a) in stream.delays().iter().zip(stream.amplitudes()) {
            for m in -2..=2 {
                let d = t - c - m as f64;
                expect += a.re * (-d * d / (2.0 * s * s)).exp() / (TAU * s * s).sqrt();
            }
        }
        assert!((v.re - expect).abs() < 1e-9 * (1.0 + expect.abs()), "t = {t}: {} vs {expect}", v.re);
        assert_eq!(v.im, 0.0);
    }
}

#[test]
fn gaussian_ctft_matches_quadrature() {
    let shape = PulseShape::gaussian(7e-3).unwrap();
    let omega = TAU * 5.0;
    let h = shape.ctft(omega);
    assert!((h.re - 0.976_109_476_042_902_1).abs() < 1e-15);
    let s = 7e-3;
    let steps = 8000;
    let dt = 20.0 * s / steps as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..=steps {
        let t = -10.0 * s + i as f64 * dt;
        let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
        acc += Complex64::from_polar(w * shape.eval(t).unwrap(), -omega * t);
    }
    acc *= dt;
    assert!((acc - h).norm() < 1e-10, "{acc} vs {h}");
}

#[test]
fn fourier_coefficients_match_dense_grid_dft() {
    let stream = gaussian_stream(12);
    let idx = IndexSet::symmetric(5);
    let exact = exact_fourier_coeffs(&stream, &idx).unwrap();
    let n = 20_000;
    let grid = FineGrid::over(0.0, 1.0, n).unwrap();
    let x = evaluate_stream(&stream, &grid).unwrap();
    let num: f64 = idx
        .iter()
        .zip(&exact.values)
        .map(|(k, e)| {
            let dft: Complex64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * Complex64::from_polar(1.0, -TAU * k as f64 * i as f64 / n as f64))
                .sum::<Complex64>()
                / n as f64;
            (dft - e).norm_sqr()
        })
        .sum();
    let den: f64 = exact.values.iter().map(|v| v.norm_sqr()).sum();
    assert!((num / den).sqrt() < 1e-6);
}

#[test]
fn dirichlet_peak_is_two_p_plus_one() {
    let k = SosKernel::dirichlet(1.0, IndexSet::symmetric(10)).unwrap();
    let g0 = k.eval_time(0.0).unwrap();
    assert!((g0.re - 21.0).abs() < 1e-12 && g0.im.abs() < 1e-12);
}

#[test]
fn hamming_peak_is_coefficient_sum() {
    let k = SosKernel::hamming(1.0, IndexSet::symmetric(5)).unwrap();
    let direct: f64 = (0..11).map(|i| 0.54 - 0.46 * (TAU * i as f64 / 10.0).cos()).sum();
    assert!((direct - 5.48).abs() < 1e-12);
    assert!((k.eval_time(0.0).unwrap().re - direct).abs() < 1e-12);
}

#[test]
fn kernel_spectrum_matches_quadrature_between_grid_points() {
    let k = SosKernel::hamming(1.0, IndexSet::symmetric(4)).unwrap();
    for u in [0.37, 2.5, -3.81, 6.2] {
        let omega = TAU * u;
        let steps = 20_000;
        let dt = 1.0 / steps as f64;
        // Simpson over the support [-1/2, 1/2).
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..=steps {
            let t = -0.5 + i as f64 * dt;
            let w = if i == 0 || i == steps {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += k.fourier_sum(t) * Complex64::from_polar(w, -omega * t);
        }
        let quad = acc * dt / 3.0 / (2.0 * PI).sqrt();
        let g = k.eval_freq(omega);
        assert!((quad - g).norm() < 1e-8 * g.norm().max(1e-3), "u = {u}: {quad} vs {g}");
    }
}

#[test]
fn lowpass_satisfies_sampling_condition() {
    let lp = LowpassKernel::new(1.0, 11).unwrap();
    let idx = IndexSet::symmetric(5);
    let report = verify_condition(|w| lp.eval_freq(w), &idx, 1.0, -9..=9).unwrap();
    assert!(report.passed());
}

/// Smallest `r` whose extension covers every pulse/sample offset, found by
/// scanning offsets on a grid.
fn brute_force_replicas(support: f64, tau: f64) -> usize {
    let mut worst: f64 = 0.0;
    for i in 0..=200 {
        let tn = tau * i as f64 / 201.0;
        for j in 0..=200 {
            let tl = tau * j as f64 / 201.0;
            for u in [-support / 2.0, support / 2.0] {
                worst = worst.max((tl + u - tn).abs());
            }
        }
    }
    (0..).find(|&r| (2 * r + 1) as f64 * tau / 2.0 >= worst).unwrap()
}

#[test]
fn replica_count_matches_enumeration() {
    assert_eq!(replica_count(1.0, 1.0), 1);
    assert_eq!(replica_count(0.0, 1.0), 1);
    assert_eq!(replica_count(2.5, 1.0), 2);
    for support in [0.0, 0.3, 0.99, 1.6, 2.5, 3.7] {
        assert_eq!(replica_count(support, 1.0), brute_force_replicas(support, 1.0).max(1), "R = {support}");
    }
}

#[test]
fn extension_is_sum_of_shifted_copies() {
    let base = SosKernel::hamming(1.0, IndexSet::symmetric(3)).unwrap();
    let ext = make_periodic_extension(&base, 2.5).unwrap();
    assert_eq!(ext.r(), 2);
    for i in 0..500 {
        let t = -2.6 + 5.2 * i as f64 / 500.0;
        let sum: Complex64 = (-2..=2).map(|m| base.eval_time(t + m as f64).unwrap()).sum();
        assert!((ext.eval_time(t).unwrap() - sum).norm() < 1e-12);
    }
}

/// Pairwise exchange descent on the convex objective
/// `sum q_i / (1 + beta_i q_i c)` over the simplex.
fn exchange_descent(h: &[f64], s2: f64, n: usize) -> Vec<f64> {
    let c = n as f64 / s2;
    let q: Vec<f64> = h.iter().map(|x| x * x).collect();
    let d = |i: usize, b: f64| -q[i] * q[i] * c / (1.0 + b * q[i] * c).powi(2);
    let m = h.len();
    let mut beta = vec![1.0 / m as f64; m];
    for _ in 0..20_000 {
        let i = (0..m).min_by(|&a, &b| d(a, beta[a]).total_cmp(&d(b, beta[b]))).unwrap();
        let j = (0..m)
            .filter(|&j| beta[j] > 0.0)
            .max_by(|&a, &b| d(a, beta[a]).total_cmp(&d(b, beta[b])))
            .unwrap();
        if i == j || d(j, beta[j]) - d(i, beta[i]) < 1e-13 * d(i, beta[i]).abs() {
            break;
        }
        // Move mass from j to i until the derivatives meet.
        let (mut lo, mut hi) = (0.0, beta[j]);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if d(i, beta[i] + mid) < d(j, beta[j] - mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let step = if d(i, beta[i] + beta[j]) < d(j, 0.0) { beta[j] } else { 0.5 * (lo + hi) };
        beta[i] += step;
        beta[j] -= step;
    }
    beta
}

#[test]
fn gaussian_allocation_matches_descent_oracle() {
    let idx = IndexSet::symmetric(5);
    let shape = PulseShape::gaussian(7e-3).unwrap();
    let alloc = optimal_coefficients(&shape, 1.0, &idx, 5, 1.0, 0.01, 11).unwrap();
    let oracle = exchange_descent(&alloc.h_tilde, 0.01, 11);
    for (a, b) in alloc.beta.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn waterfilling_matches_descent_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let m = rng.random_range(2..12);
        let h: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..2.0)).collect();
        let s2 = 10f64.powf(rng.random_range(-2.0..1.0));
        let n = rng.random_range(m..3 * m);
        let sol = waterfill(&h, s2, n).unwrap();
        let oracle = exchange_descent(&h, s2, n);
        for (a, b) in sol.beta.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "h = {h:?}, s2 = {s2}, n = {n}: {a} vs {b}");
        }
    }
}
