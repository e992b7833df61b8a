use crosssim::estimator::{calibrate_timescale, emulate_noisy_reference, CalibrationCurve, Noise};
use crosssim::exact::{exact_correlations, sample_states, trotter_evolve_exact};
use crosssim::graphs::{build_square_lattice, sample_couplings, Distribution, SpinGlassInstance};
use crosssim::metrics::{ensemble_median_with_ci, epsilon_c, median, overlap_qsquared, CorrelationMatrix};
use crosssim::model::QuenchSpec;

/// Expected `q²` between two independent replicas: `(n + 2 Σ_{i<j} c_ij²) / n²`.
fn replica_q2(c: &CorrelationMatrix) -> f64 {
    let n = c.n_spins() as f64;
    (n + 2.0 * c.packed().iter().map(|v| v * v).sum::<f64>()) / (n * n)
}

fn ensemble_q2(ensemble: &[SpinGlassInstance], spec: &QuenchSpec) -> Vec<f64> {
    ensemble
        .iter()
        .map(|inst| replica_q2(&exact_correlations(&trotter_evolve_exact(inst, spec).unwrap())))
        .collect()
}

#[test]
fn sampled_overlap_matches_replica_formula() {
    let g = build_square_lattice(3, 3).unwrap();
    let inst = sample_couplings(&g, Distribution::Uniform, 1).unwrap();
    let state = trotter_evolve_exact(&inst, &QuenchSpec::new(4.0)).unwrap();
    let sampled = overlap_qsquared(&sample_states(&state, 200_000, 9).unwrap()).unwrap();
    let exact = replica_q2(&exact_correlations(&state));
    assert!((sampled - exact).abs() < 0.01, "{sampled} vs {exact}");
}

#[test]
fn calibrated_time_reproduces_the_measured_overlap() {
    let g = build_square_lattice(3, 3).unwrap();
    let ensemble: Vec<SpinGlassInstance> =
        (0..12).map(|s| sample_couplings(&g, Distribution::Uniform, 300 + s).unwrap()).collect();

    let grid = [0.1, 0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0];
    let points: Vec<(f64, f64)> = grid
        .iter()
        .map(|&t| (t, median(&ensemble_q2(&ensemble, &QuenchSpec::new(t))).unwrap()))
        .collect();
    let curve = CalibrationCurve::new(points).unwrap();

    // The device stand-in runs with its couplings scaled by one half for a fixed 5 ns.
    let fixed = 5.0;
    let measured_values = ensemble_q2(&ensemble, &QuenchSpec::new(fixed).with_alpha(0.5));
    let measured = ensemble_median_with_ci(&measured_values, 2000, 17).unwrap();
    let cal = calibrate_timescale(&curve, measured.median, fixed, fixed).unwrap();
    assert!(!cal.extrapolated && !cal.ambiguous, "{cal:?}");
    let t_hat = cal.value();

    let reproduced = median(&ensemble_q2(&ensemble, &QuenchSpec::new(t_hat))).unwrap();
    assert!(
        measured.lo <= reproduced && reproduced <= measured.hi,
        "{reproduced} outside [{}, {}]",
        measured.lo,
        measured.hi
    );
}

#[test]
fn gaussian_emulation_error_matches_its_expectation() {
    let g = build_square_lattice(4, 4).unwrap();
    let inst = sample_couplings(&g, Distribution::Bimodal, 2).unwrap();
    let truth = exact_correlations(&trotter_evolve_exact(&inst, &QuenchSpec::new(3.0)).unwrap());
    let sigma = 0.01;
    let noisy = emulate_noisy_reference(&truth, Noise::Gaussian { sigma }, 4).unwrap();
    let p = truth.n_pairs() as f64;
    let norm: f64 = truth.packed().iter().map(|v| v * v).sum();
    let expected = sigma * (p / norm).sqrt();
    let got = epsilon_c(&noisy, &truth).unwrap();
    assert!((got / expected - 1.0).abs() < 0.05, "{got} vs {expected}");
}
