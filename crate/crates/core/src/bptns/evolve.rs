use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::bp::{bp_fixed_point, bp_refresh, BPCache, MeasurementConfig};
use super::gates::{apply_gate_with_cutoff, Gate};
use super::state::{init_tns, TNState};
use crate::error::Result;
use crate::graphs::SpinGlassInstance;
use crate::model::QuenchSpec;
use crate::C64;

/// One record per Trotter step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub step: usize,
    pub s: f64,
    /// Largest discarded weight among the step's two-site gates.
    pub max_discarded: f64,
    pub bp_iterations: usize,
    pub bp_residual: f64,
    pub bp_converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsLog {
    pub records: Vec<LayerRecord>,
}

impl DiagnosticsLog {
    /// Steps whose message refresh did not converge.
    pub fn unconverged_steps(&self) -> Vec<usize> {
        self.records
            .iter()
            .filter(|r| !r.bp_converged)
            .map(|r| r.step)
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# crosssim-bptns-log v1\nstep s max_discarded bp_iterations bp_residual converged\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{} {:?} {:e} {} {:e} {}",
                r.step,
                r.s,
                r.max_discarded,
                r.bp_iterations,
                r.bp_residual,
                u8::from(r.bp_converged)
            );
        }
        s
    }
}

/// Final state, message cache and per-step diagnostics of an evolution.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub state: TNState,
    pub cache: BPCache,
    pub log: DiagnosticsLog,
}

/// `exp(−iθσˣ)` on every spin of a site with `k` spins.
pub(crate) fn x_rotation(k: usize, theta: f64) -> Vec<C64> {
    let (c, s) = (theta.cos(), theta.sin());
    let r = [[C64::new(c, 0.0), C64::new(0.0, -s)], [C64::new(0.0, -s), C64::new(c, 0.0)]];
    let p = 1usize << k;
    let mut m = vec![C64::new(0.0, 0.0); p * p];
    for q in 0..p {
        for pp in 0..p {
            let mut v = C64::new(1.0, 0.0);
            for bit in 0..k {
                v *= r[(q >> bit) & 1][(pp >> bit) & 1];
            }
            m[q * p + pp] = v;
        }
    }
    m
}

/// `σᶻ` eigenvalue of spin `member` in local basis state `p`.
pub(crate) fn z_value(p: usize, member: usize) -> f64 {
    if (p >> member) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// The Trotter circuit of `spec` compiled onto logical sites: one step is a
/// half-step `σˣ` layer, the full `σᶻσᶻ` layer (intra-dimer terms as
/// one-site gates) and another half-step `σˣ` layer.
pub fn trotter_layers(instance: &SpinGlassInstance, spec: &QuenchSpec) -> Result<Vec<(f64, Vec<Gate>)>> {
    let steps = spec.steps()?;
    let g = instance.graph();
    let k = instance.spins_per_site();
    let p = 1usize << k;
    let mut out = Vec::with_capacity(steps.len());
    for step in steps {
        let mut gates = Vec::new();
        let x = x_rotation(k, 0.5 * step.gamma * step.duration);
        let x_layer: Vec<Gate> = (0..g.n_sites())
            .map(|site| Gate::OneSite {
                site,
                matrix: x.clone(),
            })
            .collect();
        gates.extend(x_layer.iter().cloned());
        if instance.has_dimers() {
            let theta = step.zz_scale * instance.intra_dimer_coupling().value() * step.duration;
            let mut m = vec![C64::new(0.0, 0.0); p * p];
            for q in 0..p {
                m[q * p + q] = C64::from_polar(1.0, -theta * z_value(q, 0) * z_value(q, 1));
            }
            for site in 0..g.n_sites() {
                gates.push(Gate::OneSite {
                    site,
                    matrix: m.clone(),
                });
            }
        }
        for (e, edge) in g.edges().iter().enumerate() {
            let (i, j) = instance.edge_spins(e);
            let (mi, mj) = (i % k, j % k);
            let theta = step.zz_scale * instance.coupling(e).value() * step.duration;
            let diag: Vec<C64> = (0..p * p)
                .map(|idx| {
                    let (pu, pv) = (idx / p, idx % p);
                    C64::from_polar(1.0, -theta * z_value(pu, mi) * z_value(pv, mj))
                })
                .collect();
            gates.push(Gate::diagonal_two_site(edge.u, edge.v, &diag));
        }
        gates.extend(x_layer);
        out.push((step.s_mid, gates));
    }
    Ok(out)
}

/// Evolve the paramagnetic product state through the Trotter circuit.
pub fn evolve_bptns(instance: &SpinGlassInstance, spec: &QuenchSpec, cfg: &MeasurementConfig) -> Result<TNState> {
    Ok(evolve_bptns_logged(instance, spec, cfg)?.state)
}

/// As [`evolve_bptns`], also returning the converged cache and the diagnostics log.
pub fn evolve_bptns_logged(
    instance: &SpinGlassInstance,
    spec: &QuenchSpec,
    cfg: &MeasurementConfig,
) -> Result<Evolution> {
    cfg.validate()?;
    instance.validate()?;
    let layers = trotter_layers(instance, spec)?;
    let mut state = init_tns(instance);
    let mut cache = bp_fixed_point(&state, cfg)?;
    let mut log = DiagnosticsLog::default();
    for (step, (s, gates)) in layers.iter().enumerate() {
        let mut max_discarded = 0.0_f64;
        for gate in gates {
            let report = apply_gate_with_cutoff(&mut state, &mut cache, gate, cfg.chi, cfg.svd_cutoff)?;
            max_discarded = max_discarded.max(report.discarded);
        }
        if cfg.refresh_each_step {
            bp_refresh(&state, &mut cache, cfg)?;
        }
        log.records.push(LayerRecord {
            step,
            s: *s,
            max_discarded,
            bp_iterations: if cfg.refresh_each_step { cache.iterations } else { 0 },
            bp_residual: cache.residual,
            bp_converged: cache.converged,
        });
    }
    if !cfg.refresh_each_step {
        bp_refresh(&state, &mut cache, cfg)?;
    }
    Ok(Evolution { state, cache, log })
}
