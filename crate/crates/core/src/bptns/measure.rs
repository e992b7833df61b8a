use rayon::prelude::*;

use super::bp::{
    bp_fixed_point, estimate, run_bp, spanning_forest, BPCache, Forest, MeasurementConfig, MessageKind,
    Network,
};
use super::evolve::z_value;
use super::state::TNState;
use crate::error::{Error, Result};
use crate::graphs::{enumerate_loops, LoopSet};
use crate::metrics::CorrelationMatrix;
use crate::C64;

/// Shared denominator data for measuring many pairs of one state.
pub(crate) struct Measurer<'a> {
    tns: &'a TNState,
    cache: &'a BPCache,
    cfg: &'a MeasurementConfig,
    forest: Forest,
    loops: LoopSet,
    log_norm: C64,
}

impl<'a> Measurer<'a> {
    pub fn new(tns: &'a TNState, cache: &'a BPCache, cfg: &'a MeasurementConfig) -> Result<Self> {
        cfg.validate()?;
        if cache.n_messages() != 2 * tns.graph().n_edges() {
            return Err(Error::Config("message cache does not belong to this state".into()));
        }
        let forest = spanning_forest(tns);
        let loops = enumerate_loops(tns.graph(), cfg.l_max);
        let net = Network::norm(tns);
        let est = estimate(&net, &cache.messages, &forest, &loops)?;
        let log_norm = est
            .log_value()
            .ok_or_else(|| Error::SingularContraction("norm estimate vanishes".into()))?;
        if !log_norm.re.is_finite() {
            return Err(Error::SingularContraction("norm estimate is not finite".into()));
        }
        Ok(Self {
            tns,
            cache,
            cfg,
            forest,
            loops,
            log_norm,
        })
    }

    /// `⟨σᶻ_i σᶻ_j⟩` for physical spins `i ≠ j`.
    pub fn spin_pair(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.tns.n_spins();
        if i == j || i >= n || j >= n {
            return Err(Error::Domain(format!("invalid spin pair ({i}, {j}) for {n} spins")));
        }
        let (si, mi) = self.tns.spin_site(i);
        let (sj, mj) = self.tns.spin_site(j);
        let diag = |site: usize, member: usize| -> (usize, Vec<C64>) {
            let p = self.tns.phys_dim(site);
            (site, (0..p).map(|x| C64::new(z_value(x, member), 0.0)).collect())
        };
        let ops = vec![diag(si, mi), diag(sj, mj)];
        self.with_ops(&ops).map_err(|e| match e {
            Error::SingularContraction(msg) => {
                Error::SingularContraction(format!("pair ({i}, {j}): {msg}"))
            }
            other => other,
        })
    }

    fn with_ops(&self, ops: &[(usize, Vec<C64>)]) -> Result<f64> {
        let net = Network::with_operators(self.tns, ops);
        let mut msgs = self.cache.messages.clone();
        let mut dirty = vec![false; self.tns.n_sites()];
        for s in net.inserted_sites() {
            dirty[s] = true;
        }
        let run = run_bp(
            &net,
            &mut msgs,
            MessageKind::Signed,
            self.cfg.bp_tolerance,
            self.cfg.bp_max_iters,
            self.cfg.damping,
            Some(dirty),
        )?;
        if run.vanished {
            return Ok(0.0);
        }
        // A vanishing edge weight in the numerator network means the
        // numerator itself is zero (typically by spin-flip symmetry).
        let est = match estimate(&net, &msgs, &self.forest, &self.loops) {
            Ok(est) => est,
            Err(Error::SingularContraction(_)) => return Ok(0.0),
            Err(e) => return Err(e),
        };
        Ok(match est.log_value() {
            Some(log_num) => (log_num - self.log_norm).exp().re,
            None => 0.0,
        })
    }
}

/// Loop-corrected BP estimate of `⟨σᶻ_i σᶻ_j⟩` for physical spins `i`, `j`.
pub fn measure_correlation(
    tns: &TNState,
    cache: &BPCache,
    i: usize,
    j: usize,
    cfg: &MeasurementConfig,
) -> Result<f64> {
    Measurer::new(tns, cache, cfg)?.spin_pair(i, j)
}

/// All spin-pair correlations, converging a fresh message cache first.
pub fn measure_all_correlations(tns: &TNState, cfg: &MeasurementConfig) -> Result<CorrelationMatrix> {
    let cache = bp_fixed_point(tns, cfg)?;
    measure_all_correlations_with(tns, &cache, cfg)
}

/// All spin-pair correlations from an existing cache. With dimer expansion
/// only first-spin pairs of distinct sites are contracted; any two spins of
/// different sites take the value of their sites' first spins and the two
/// spins of one site are assigned correlation 1.
pub fn measure_all_correlations_with(
    tns: &TNState,
    cache: &BPCache,
    cfg: &MeasurementConfig,
) -> Result<CorrelationMatrix> {
    let m = Measurer::new(tns, cache, cfg)?;
    let k = tns.spins_per_site();
    let n = tns.n_spins();
    if cfg.dimer_expansion && k > 1 {
        let sites = tns.n_sites();
        let pairs: Vec<(usize, usize)> = (0..sites)
            .flat_map(|a| (a + 1..sites).map(move |b| (a, b)))
            .collect();
        let values = pairs
            .par_iter()
            .map(|&(a, b)| m.spin_pair(a * k, b * k))
            .collect::<Result<Vec<f64>>>()?;
        let mut site_value = vec![0.0; sites * sites];
        for (&(a, b), v) in pairs.iter().zip(values) {
            site_value[a * sites + b] = v;
            site_value[b * sites + a] = v;
        }
        Ok(CorrelationMatrix::from_fn(n, |i, j| {
            let (a, b) = (i / k, j / k);
            if a == b {
                1.0
            } else {
                site_value[a * sites + b]
            }
        }))
    } else {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let values = pairs
            .par_iter()
            .map(|&(i, j)| m.spin_pair(i, j))
            .collect::<Result<Vec<f64>>>()?;
        CorrelationMatrix::from_packed(n, values)
    }
}
