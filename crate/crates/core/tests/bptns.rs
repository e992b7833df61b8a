mod common;

use common::{dense_amplitudes, fidelity, zz};
use crosssim::bptns::{
    apply_gate, bp_fixed_point, evolve_bptns, evolve_bptns_logged, init_tns, loop_corrected_norm,
    measure_all_correlations, measure_correlation, Gate, MeasurementConfig, TNState,
};
use crosssim::exact::{exact_correlations, trotter_evolve_exact, StateVector};
use crosssim::graphs::{
    build_cubic_dimer_lattice, enumerate_loops, sample_couplings, Coupling, DimerAttachment,
    Distribution, LatticeGraph, SpinGlassInstance,
};
use crosssim::metrics::epsilon_c;
use crosssim::model::QuenchSpec;
use crosssim::C64;

fn instance(graph: LatticeGraph, seed: u64) -> SpinGlassInstance {
    let couplings = (0..graph.n_edges())
        .map(|k| Coupling::from_numerator(((seed as i32 * 37 + k as i32 * 101) % 512) - 256 | 1))
        .collect();
    SpinGlassInstance::from_couplings(graph, couplings, false, DimerAttachment::default()).unwrap()
}

fn tight() -> MeasurementConfig {
    MeasurementConfig {
        chi: 16,
        bp_tolerance: 1e-13,
        bp_max_iters: 5000,
        ..MeasurementConfig::default()
    }
}

fn plaquette() -> LatticeGraph {
    LatticeGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap()
}

fn bridged_plaquettes() -> LatticeGraph {
    LatticeGraph::from_edges(
        8,
        &[(0, 1), (1, 2), (2, 3), (0, 3), (3, 4), (4, 5), (5, 6), (6, 7), (4, 7)],
    )
    .unwrap()
}

fn separate_plaquettes() -> LatticeGraph {
    LatticeGraph::from_edges(
        8,
        &[(0, 1), (1, 2), (2, 3), (0, 3), (4, 5), (5, 6), (6, 7), (4, 7)],
    )
    .unwrap()
}

fn dense_zz_all(tns: &TNState) -> Vec<f64> {
    let amps = dense_amplitudes(tns);
    let n = tns.n_spins();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            out.push(zz(&amps, i, j));
        }
    }
    out
}

#[test]
fn initial_state_is_the_paramagnet() {
    let g = build_cubic_dimer_lattice(2, false).unwrap();
    let inst = sample_couplings(&g, Distribution::Bimodal, 3).unwrap();
    let amps = dense_amplitudes(&init_tns(&inst));
    let exact = StateVector::paramagnet(16);
    assert!((fidelity(&amps, exact.amplitudes()) - 1.0).abs() < 1e-12);
}

#[test]
fn two_site_evolution_matches_statevector() {
    let g = LatticeGraph::from_edges(2, &[(0, 1)]).unwrap();
    let inst = instance(g, 1);
    let spec = QuenchSpec::new(2.0);
    let tns = evolve_bptns(&inst, &spec, &tight()).unwrap();
    let exact = trotter_evolve_exact(&inst, &spec).unwrap();
    let f = fidelity(&dense_amplitudes(&tns), exact.amplitudes());
    assert!((f - 1.0).abs() < 1e-10, "fidelity {f}");
}

#[test]
fn chain_evolution_is_exact_without_truncation() {
    let g = LatticeGraph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (1, 4)]).unwrap();
    let inst = instance(g, 2);
    let spec = QuenchSpec::new(1.0);
    let tns = evolve_bptns(&inst, &spec, &tight()).unwrap();
    let exact = trotter_evolve_exact(&inst, &spec).unwrap();
    let f = fidelity(&dense_amplitudes(&tns), exact.amplitudes());
    assert!((f - 1.0).abs() < 1e-9, "fidelity {f}");
    let measured = measure_all_correlations(&tns, &tight()).unwrap();
    let eps = epsilon_c(&measured, &exact_correlations(&exact)).unwrap();
    assert!(eps < 1e-6, "eps {eps}");
}

#[test]
fn plain_bp_misses_the_plaquette_loop_and_the_series_recovers_it() {
    let inst = instance(plaquette(), 3);
    let spec = QuenchSpec::new(1.0);
    let cfg = tight();
    let tns = evolve_bptns(&inst, &spec, &cfg).unwrap();
    let reference = dense_zz_all(&tns);
    let plain = measure_all_correlations(&tns, &cfg).unwrap();
    let corrected = measure_all_correlations(&tns, &cfg.clone().with_l_max(4)).unwrap();
    let err = |m: &crosssim::metrics::CorrelationMatrix| {
        m.packed().iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    assert!(err(&corrected) < 1e-8, "corrected {}", err(&corrected));
    assert!(err(&plain) > 1e-6, "plain {}", err(&plain));
}

fn max_error(m: &crosssim::metrics::CorrelationMatrix, reference: &[f64]) -> f64 {
    m.packed().iter().zip(reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

#[test]
fn separate_plaquettes_are_exact_with_loops() {
    let inst = instance(separate_plaquettes(), 4);
    let spec = QuenchSpec::new(1.0);
    let cfg = tight();
    let tns = evolve_bptns(&inst, &spec, &cfg).unwrap();
    let reference = dense_zz_all(&tns);
    let plain = measure_all_correlations(&tns, &cfg).unwrap();
    let corrected = measure_all_correlations(&tns, &cfg.clone().with_l_max(4)).unwrap();
    let err = max_error(&corrected, &reference);
    assert!(err < 1e-8, "err {err}");
    assert!(err <= max_error(&plain, &reference));
}

#[test]
fn bridged_plaquettes_improve_but_keep_the_dumbbell_error() {
    let inst = instance(bridged_plaquettes(), 4);
    let spec = QuenchSpec::new(1.0);
    let cfg = tight();
    let tns = evolve_bptns(&inst, &spec, &cfg).unwrap();
    let reference = dense_zz_all(&tns);
    let plain = max_error(&measure_all_correlations(&tns, &cfg).unwrap(), &reference);
    let corrected = max_error(&measure_all_correlations(&tns, &cfg.clone().with_l_max(4)).unwrap(), &reference);
    assert!(corrected < plain, "corrected {corrected} plain {plain}");
    assert!(corrected < 1e-4);
}

#[test]
fn loop_corrected_norm_of_random_ring_is_exact() {
    let g = plaquette();
    let tns = TNState::random(&g, 1, 2, 9);
    let cfg = tight();
    let cache = bp_fixed_point(&tns, &cfg).unwrap();
    assert!(cache.converged);
    let amps = dense_amplitudes(&tns);
    let exact = common::norm_sqr(&amps).ln();
    let plain = loop_corrected_norm(&tns, &cache, &enumerate_loops(&g, 0)).unwrap();
    let loops = loop_corrected_norm(&tns, &cache, &enumerate_loops(&g, 4)).unwrap();
    let ln_plain = plain.log_value().unwrap().re;
    let ln_loops = loops.log_value().unwrap().re;
    assert!((ln_loops - exact).abs() < 1e-9, "{ln_loops} vs {exact}");
    let w = loops.loop_weights[0];
    assert!(((1.0 + w).ln().re - (exact - ln_plain)).abs() < 1e-9);
}

#[test]
fn measurement_is_gauge_invariant() {
    let inst = instance(plaquette(), 5);
    let spec = QuenchSpec::new(1.0);
    let cfg = tight().with_l_max(4);
    let tns = evolve_bptns(&inst, &spec, &cfg).unwrap();
    let before = measure_all_correlations(&tns, &cfg).unwrap();
    let mut gauged = tns.clone();
    for e in 0..gauged.graph().n_edges() {
        let d = gauged.bond_dim(e);
        let g: Vec<C64> = (0..d * d)
            .map(|k| {
                let diag = if k % (d + 1) == 0 { 2.0 } else { 0.0 };
                C64::new(diag + 0.3 * ((k * 7 + e) % 5) as f64 - 0.5, 0.2 * (k % 3) as f64)
            })
            .collect();
        gauged.apply_bond_gauge(e, &g).unwrap();
    }
    let a = dense_amplitudes(&tns);
    let b = dense_amplitudes(&gauged);
    assert!((fidelity(&a, &b) - 1.0).abs() < 1e-10);
    let after = measure_all_correlations(&gauged, &cfg).unwrap();
    assert!(epsilon_c(&before, &after).unwrap() < 1e-8);
}

#[test]
fn identity_gate_leaves_correlations_unchanged() {
    let inst = instance(plaquette(), 6);
    let spec = QuenchSpec::new(1.0);
    let cfg = tight().with_l_max(4);
    let evo = evolve_bptns_logged(&inst, &spec, &cfg).unwrap();
    let before = measure_all_correlations(&evo.state, &cfg).unwrap();
    let mut state = evo.state.clone();
    let mut cache = evo.cache.clone();
    let id: Vec<C64> = (0..16)
        .map(|k| C64::new(if k % 5 == 0 { 1.0 } else { 0.0 }, 0.0))
        .collect();
    apply_gate(&mut state, &mut cache, &Gate::TwoSite { a: 0, b: 1, matrix: id }, 16).unwrap();
    let after = measure_all_correlations(&state, &cfg).unwrap();
    assert!(epsilon_c(&before, &after).unwrap() < 1e-8);
}

#[test]
fn decoupled_spins_have_zero_correlation() {
    let g = build_cubic_dimer_lattice(2, false).unwrap();
    let couplings = vec![Coupling::from_integer(0); g.n_edges()];
    let inst = SpinGlassInstance::from_couplings(g, couplings, false, DimerAttachment::default()).unwrap();
    let cfg = MeasurementConfig::default().with_l_max(4);
    let tns = evolve_bptns(&inst, &QuenchSpec::new(1.0), &cfg).unwrap();
    let c = measure_all_correlations(&tns, &cfg).unwrap();
    assert!(c.packed().iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn dimer_evolution_on_small_lattice_tracks_exact() {
    let g = LatticeGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
    let couplings = vec![Coupling::from_integer(1), Coupling::from_integer(-1)];
    let inst = SpinGlassInstance::from_couplings(g, couplings, true, DimerAttachment::default()).unwrap();
    let spec = QuenchSpec::new(1.0);
    let cfg = tight().with_dimer_expansion(false);
    let tns = evolve_bptns(&inst, &spec, &cfg).unwrap();
    let exact = trotter_evolve_exact(&inst, &spec).unwrap();
    let f = fidelity(&dense_amplitudes(&tns), exact.amplitudes());
    assert!((f - 1.0).abs() < 1e-9, "fidelity {f}");
    let measured = measure_all_correlations(&tns, &cfg).unwrap();
    assert!(epsilon_c(&measured, &exact_correlations(&exact)).unwrap() < 1e-6);
    let one = measure_correlation(&tns, &bp_fixed_point(&tns, &cfg).unwrap(), 0, 5, &cfg).unwrap();
    assert!((one - exact_correlations(&exact).get(0, 5)).abs() < 1e-6);
}
