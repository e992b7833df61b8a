use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{Tensor, TensorRecord};
use crate::error::{Error, Result};
use crate::graphs::{LatticeGraph, SpinGlassInstance};
use crate::linalg::Mat;
use crate::C64;

/// Tensor-network state on a lattice graph.
///
/// Site tensor `v` has shape `[p, d_1, …, d_k]`: the physical index first,
/// then one virtual index per incident edge in `graph.neighbors(v)` order.
/// A site holding `k` spins has `p = 2^k`, with spin `m` of the site stored
/// in bit `m` of the physical index (clear bit is `σᶻ = +1`). The represented
/// vector is `exp(log_norm)` times the contraction of the site tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct TNState {
    graph: LatticeGraph,
    spins_per_site: usize,
    tensors: Vec<Tensor>,
    log_norm: f64,
}

impl TNState {
    /// Product state in which every spin is `(|↑⟩ − |↓⟩)/√2`.
    pub fn paramagnet(graph: &LatticeGraph, spins_per_site: usize) -> Self {
        let p = 1usize << spins_per_site;
        let amp = (p as f64).sqrt().recip();
        let local: Vec<C64> = (0..p)
            .map(|x: usize| C64::new(if x.count_ones() % 2 == 0 { amp } else { -amp }, 0.0))
            .collect();
        let tensors = (0..graph.n_sites())
            .map(|v| {
                let mut shape = vec![p];
                shape.extend(std::iter::repeat(1).take(graph.degree(v)));
                Tensor::new(shape, local.clone())
            })
            .collect();
        Self {
            graph: graph.clone(),
            spins_per_site,
            tensors,
            log_norm: 0.0,
        }
    }

    /// State from explicit site tensors, checked against the graph.
    pub fn from_tensors(
        graph: &LatticeGraph,
        spins_per_site: usize,
        tensors: Vec<Tensor>,
    ) -> Result<Self> {
        let out = Self {
            graph: graph.clone(),
            spins_per_site,
            tensors,
            log_norm: 0.0,
        };
        out.validate()?;
        Ok(out)
    }

    /// Random complex tensors with every bond of dimension `bond_dim`.
    pub fn random(graph: &LatticeGraph, spins_per_site: usize, bond_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = 1usize << spins_per_site;
        let tensors = (0..graph.n_sites())
            .map(|v| {
                let mut shape = vec![p];
                shape.extend(std::iter::repeat(bond_dim).take(graph.degree(v)));
                let n = shape.iter().product();
                let data = (0..n)
                    .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect();
                Tensor::new(shape, data)
            })
            .collect();
        Self {
            graph: graph.clone(),
            spins_per_site,
            tensors,
            log_norm: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.graph;
        if self.tensors.len() != g.n_sites() {
            return Err(Error::InvalidSize(format!(
                "{} tensors for {} sites",
                self.tensors.len(),
                g.n_sites()
            )));
        }
        let p = 1usize << self.spins_per_site;
        for (v, t) in self.tensors.iter().enumerate() {
            if t.rank() != 1 + g.degree(v) || t.shape()[0] != p {
                return Err(Error::InvalidSize(format!(
                    "site {v} tensor has shape {:?}, expected physical dimension {p} and {} bonds",
                    t.shape(),
                    g.degree(v)
                )));
            }
        }
        for (k, e) in g.edges().iter().enumerate() {
            let du = self.tensors[e.u].shape()[self.leg(e.u, k)];
            let dv = self.tensors[e.v].shape()[self.leg(e.v, k)];
            if du != dv {
                return Err(Error::InvalidSize(format!(
                    "edge {k} has bond dimensions {du} and {dv} on its two ends"
                )));
            }
        }
        Ok(())
    }

    pub fn graph(&self) -> &LatticeGraph {
        &self.graph
    }

    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn spins_per_site(&self) -> usize {
        self.spins_per_site
    }

    pub fn n_spins(&self) -> usize {
        self.n_sites() * self.spins_per_site
    }

    pub fn phys_dim(&self, site: usize) -> usize {
        self.tensors[site].shape()[0]
    }

    pub fn tensor(&self, site: usize) -> &Tensor {
        &self.tensors[site]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub(crate) fn set_tensor(&mut self, site: usize, t: Tensor) {
        self.tensors[site] = t;
    }

    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    pub(crate) fn add_log_norm(&mut self, x: f64) {
        self.log_norm += x;
    }

    /// Tensor index of `edge` on `site` (1-based because index 0 is physical).
    pub fn leg(&self, site: usize, edge: usize) -> usize {
        1 + self
            .graph
            .neighbors(site)
            .iter()
            .position(|&(_, e)| e == edge)
            .unwrap_or_else(|| panic!("edge {edge} is not incident to site {site}"))
    }

    pub fn bond_dim(&self, edge: usize) -> usize {
        let u = self.graph.edge(edge).u;
        self.tensors[u].shape()[self.leg(u, edge)]
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        (0..self.graph.n_edges()).map(|e| self.bond_dim(e)).collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Logical site and member of a physical spin.
    pub fn spin_site(&self, spin: usize) -> (usize, usize) {
        (spin / self.spins_per_site, spin % self.spins_per_site)
    }

    /// Rescale every site tensor to unit norm, moving the scale into `log_norm`.
    pub(crate) fn normalize_site(&mut self, site: usize) {
        let n = self.tensors[site].norm();
        if n > 0.0 && n.is_finite() {
            self.tensors[site].scale(1.0 / n);
            self.log_norm += n.ln();
        }
    }

    /// Insert `G` and `(Gᵀ)⁻¹` on the two ends of `edge`; the contracted
    /// state is unchanged. `g` is row-major `D × D`.
    pub fn apply_bond_gauge(&mut self, edge: usize, g: &[C64]) -> Result<()> {
        let d = self.bond_dim(edge);
        if g.len() != d * d {
            return Err(Error::InvalidSize(format!("gauge of {} entries for bond dimension {d}", g.len())));
        }
        let gm = Mat::from_fn(d, d, |r, c| g[r * d + c]);
        let inv_t = gm
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Domain("gauge matrix is singular".into()))?
            .transpose();
        let e = self.graph.edge(edge);
        let (lu, lv) = (self.leg(e.u, edge), self.leg(e.v, edge));
        self.tensors[e.u] = self.tensors[e.u].apply_leg(lu, &gm);
        self.tensors[e.v] = self.tensors[e.v].apply_leg(lv, &inv_t);
        Ok(())
    }

    /// Versioned JSON snapshot.
    pub fn to_snapshot(&self) -> TnsSnapshot {
        TnsSnapshot {
            format: SNAPSHOT_FORMAT.into(),
            n_sites: self.n_sites(),
            edges: self.graph.edges().iter().map(|e| (e.u, e.v)).collect(),
            spins_per_site: self.spins_per_site,
            log_norm: self.log_norm,
            tensors: self.tensors.iter().map(TensorRecord::from).collect(),
        }
    }

    /// Restore from a snapshot onto `graph`, which must have the same edges.
    pub fn from_snapshot(graph: &LatticeGraph, snap: &TnsSnapshot) -> Result<Self> {
        if snap.format != SNAPSHOT_FORMAT {
            return Err(Error::Config(format!("unsupported snapshot format `{}`", snap.format)));
        }
        let edges: Vec<(usize, usize)> = graph.edges().iter().map(|e| (e.u, e.v)).collect();
        if snap.n_sites != graph.n_sites() || snap.edges != edges {
            return Err(Error::Topology("snapshot graph does not match".into()));
        }
        let tensors = snap
            .tensors
            .iter()
            .map(|r| r.to_tensor().ok_or_else(|| Error::InvalidSize("malformed tensor record".into())))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Self::from_tensors(graph, snap.spins_per_site, tensors)?;
        out.log_norm = snap.log_norm;
        Ok(out)
    }
}

pub const SNAPSHOT_FORMAT: &str = "crosssim-tns v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TnsSnapshot {
    pub format: String,
    pub n_sites: usize,
    pub edges: Vec<(usize, usize)>,
    pub spins_per_site: usize,
    pub log_norm: f64,
    pub tensors: Vec<TensorRecord>,
}

/// Paramagnetic product state for `instance`; dimer sites have physical
/// dimension 4.
pub fn init_tns(instance: &SpinGlassInstance) -> TNState {
    TNState::paramagnet(instance.graph(), instance.spins_per_site())
}
