use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::state::TNState;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::graphs::{Cycle, LoopSet};
use crate::linalg::{frobenius, hermitize, matmul, Mat};
use crate::C64;

/// Numerical settings for evolution and measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementConfig {
    /// Largest bond dimension kept by a two-site gate.
    pub chi: usize,
    /// Longest simple cycle included in the loop series; 0 is plain BP.
    pub l_max: usize,
    /// Contract only first-spin pairs of dimer sites and fill in the rest.
    pub dimer_expansion: bool,
    pub bp_tolerance: f64,
    pub bp_max_iters: usize,
    /// Weight of the previous message in each update, in `[0, 1)`.
    pub damping: f64,
    /// Singular values below this fraction of the largest are dropped.
    pub svd_cutoff: f64,
    /// Re-converge the message cache after every Trotter step.
    pub refresh_each_step: bool,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            chi: 8,
            l_max: 0,
            dimer_expansion: true,
            bp_tolerance: 1e-10,
            bp_max_iters: 500,
            damping: 0.2,
            svd_cutoff: 1e-12,
            refresh_each_step: true,
        }
    }
}

impl MeasurementConfig {
    pub fn with_chi(mut self, chi: usize) -> Self {
        self.chi = chi;
        self
    }

    pub fn with_l_max(mut self, l_max: usize) -> Self {
        self.l_max = l_max;
        self
    }

    pub fn with_dimer_expansion(mut self, on: bool) -> Self {
        self.dimer_expansion = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.chi < 1 {
            return Err(Error::Config("chi must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::Config(format!("damping {} is outside [0, 1)", self.damping)));
        }
        if !(self.bp_tolerance > 0.0) || self.bp_max_iters == 0 {
            return Err(Error::Config("BP tolerance and iteration limit must be positive".into()));
        }
        if !(self.svd_cutoff >= 0.0 && self.svd_cutoff < 1.0) {
            return Err(Error::Config(format!("svd_cutoff {} is outside [0, 1)", self.svd_cutoff)));
        }
        Ok(())
    }
}

/// Converged (or best-effort) messages of the norm network `⟨ψ|ψ⟩`.
///
/// The message on directed edge `x → v` is a `D × D` matrix indexed
/// `(ket, bra)` on the bond's virtual space; it has unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct BPCache {
    pub(crate) messages: Vec<Mat>,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
}

/// Index of the message travelling out of `from` along `edge`.
pub(crate) fn dir_index(tns: &TNState, edge: usize, from: usize) -> usize {
    if tns.graph().edge(edge).u == from {
        2 * edge
    } else {
        2 * edge + 1
    }
}

impl BPCache {
    /// Maximally mixed messages `I / D` on every bond.
    pub fn new(tns: &TNState) -> Self {
        let messages = (0..2 * tns.graph().n_edges())
            .map(|k| {
                let d = tns.bond_dim(k / 2);
                Mat::identity(d, d).scale(1.0 / d as f64)
            })
            .collect();
        Self {
            messages,
            converged: false,
            iterations: 0,
            residual: f64::INFINITY,
        }
    }

    /// Message from `from` into its neighbour along `edge`.
    pub fn message(&self, tns: &TNState, edge: usize, from: usize) -> &Mat {
        &self.messages[dir_index(tns, edge, from)]
    }

    pub fn n_messages(&self) -> usize {
        self.messages.len()
    }
}

/// Network `⟨ψ| O |ψ⟩` with diagonal operators `O` inserted on some ket sites.
pub(crate) struct Network<'a> {
    pub tns: &'a TNState,
    inserted: Vec<(usize, Tensor)>,
}

impl<'a> Network<'a> {
    pub fn norm(tns: &'a TNState) -> Self {
        Self {
            tns,
            inserted: Vec::new(),
        }
    }

    /// Insert diagonal physical operators `(site, diag)`.
    pub fn with_operators(tns: &'a TNState, ops: &[(usize, Vec<C64>)]) -> Self {
        let mut inserted: Vec<(usize, Tensor)> = Vec::new();
        for (site, diag) in ops {
            match inserted.iter_mut().find(|(s, _)| s == site) {
                Some((_, t)) => *t = t.scale_leg(0, diag),
                None => inserted.push((*site, tns.tensor(*site).scale_leg(0, diag))),
            }
        }
        Self { tns, inserted }
    }

    pub fn inserted_sites(&self) -> impl Iterator<Item = usize> + '_ {
        self.inserted.iter().map(|(s, _)| *s)
    }

    fn ket(&self, v: usize) -> &Tensor {
        self.inserted
            .iter()
            .find(|(s, _)| *s == v)
            .map(|(_, t)| t)
            .unwrap_or_else(|| self.tns.tensor(v))
    }

    fn bra(&self, v: usize) -> &Tensor {
        self.tns.tensor(v)
    }

    /// Ket tensor of `v` with every incoming message absorbed except those on
    /// the tensor indices in `skip`.
    fn absorbed(&self, msgs: &[Mat], v: usize, skip: &[usize]) -> Tensor {
        let mut t = self.ket(v).clone();
        for (pos, &(x, e)) in self.tns.graph().neighbors(v).iter().enumerate() {
            let leg = pos + 1;
            if skip.contains(&leg) {
                continue;
            }
            let m = &msgs[dir_index(self.tns, e, x)];
            t = t.apply_leg(leg, &m.transpose());
        }
        t
    }

    /// Unnormalized update of the message `v → w` along `edge`, together with
    /// an upper bound on its Frobenius norm.
    pub fn raw_message(&self, msgs: &[Mat], v: usize, edge: usize) -> (Mat, f64) {
        let leg = self.tns.leg(v, edge);
        let k = self.absorbed(msgs, v, &[leg]);
        let a = k.matricize(&[leg]);
        let b = self.bra(v).matricize(&[leg]);
        let mut bound = self.ket(v).norm() * self.bra(v).norm();
        for (pos, &(x, e)) in self.tns.graph().neighbors(v).iter().enumerate() {
            if pos + 1 != leg {
                bound *= frobenius(&msgs[dir_index(self.tns, e, x)]);
            }
        }
        (matmul(&a, &b.adjoint()), bound)
    }

    /// Local contraction `Z_v` with all incoming messages.
    pub fn vertex_value(&self, msgs: &[Mat], v: usize) -> C64 {
        self.absorbed(msgs, v, &[]).dot_conj(self.bra(v))
    }

    /// `A_v[(k, k'), (l, l')]`: site `v` with the bonds `in_edge` and
    /// `out_edge` left open and every other incoming message absorbed.
    fn loop_vertex(&self, msgs: &[Mat], v: usize, in_edge: usize, out_edge: usize) -> Mat {
        let li = self.tns.leg(v, in_edge);
        let lo = self.tns.leg(v, out_edge);
        let k = self.absorbed(msgs, v, &[li, lo]);
        let x = k.matricize(&[li, lo]);
        let y = self.bra(v).matricize(&[li, lo]);
        let g = matmul(&x, &y.adjoint());
        let (di, dout) = (k.shape()[li], k.shape()[lo]);
        Mat::from_fn(di * di, dout * dout, |r, c| {
            let (ki, kb) = (r / di, r % di);
            let (li_, lb) = (c / dout, c % dout);
            g[(ki * dout + li_, kb * dout + lb)]
        })
    }
}

/// Bilinear pairing `Σ a[k, k'] b[k, k']`.
fn pair(a: &Mat, b: &Mat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// `Σ conj(a) b`.
fn inner(a: &Mat, b: &Mat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// How messages are normalized during an update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum MessageKind {
    /// Positive semidefinite, unit trace.
    Norm,
    /// General complex, unit Frobenius norm, phase aligned with the previous iterate.
    Signed,
}

/// Outcome of a BP run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct BpRun {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Some message vanished identically (only for [`MessageKind::Signed`]).
    pub vanished: bool,
}

/// Relative size below which a signed message is treated as exactly zero.
const VANISHING: f64 = 1e-14;

fn normalize_message(
    kind: MessageKind,
    raw: Mat,
    bound: f64,
    old: &Mat,
    damping: f64,
) -> Result<Option<Mat>> {
    match kind {
        MessageKind::Norm => {
            let h = hermitize(&raw);
            let tr = h.trace().re;
            if !(tr > 0.0) || !tr.is_finite() {
                return Err(Error::SingularContraction(
                    "norm message has vanishing trace".into(),
                ));
            }
            let f = h.unscale(tr);
            let mut m = f.scale(1.0 - damping) + old.scale(damping);
            let tr2 = m.trace().re;
            m.unscale_mut(tr2);
            Ok(Some(m))
        }
        MessageKind::Signed => {
            let n = frobenius(&raw);
            if !(n > VANISHING * bound) {
                return Ok(None);
            }
            let mut f = raw.unscale(n);
            let overlap = inner(old, &f);
            if overlap.norm() > 0.0 {
                f *= overlap.conj() / overlap.norm();
            }
            let mut m = f.scale(1.0 - damping) + old.scale(damping);
            let n2 = frobenius(&m);
            if n2 > 0.0 {
                m.unscale_mut(n2);
            } else {
                m = f;
            }
            Ok(Some(m))
        }
    }
}

/// Synchronous damped BP sweeps. Only messages leaving a site whose inputs
/// changed in the previous sweep (or which have not settled themselves) are
/// recomputed; this gives the same iterates as full sweeps.
pub(crate) fn run_bp(
    net: &Network,
    msgs: &mut [Mat],
    kind: MessageKind,
    tolerance: f64,
    max_iters: usize,
    damping: f64,
    dirty_sites: Option<Vec<bool>>,
) -> Result<BpRun> {
    let tns = net.tns;
    let g = tns.graph();
    let n_dir = msgs.len();
    let mut dirty = dirty_sites.unwrap_or_else(|| vec![true; g.n_sites()]);
    let mut unsettled = vec![false; n_dir];
    let mut vanished = vec![false; n_dir];
    let mut iterations = 0;
    let mut residual = 0.0;
    let settle = 0.1 * tolerance;
    for _ in 0..max_iters {
        iterations += 1;
        let mut updates: Vec<(usize, Option<Mat>)> = Vec::new();
        for (k, e) in g.edges().iter().enumerate() {
            for (from, d) in [(e.u, 2 * k), (e.v, 2 * k + 1)] {
                if !dirty[from] && !unsettled[d] {
                    continue;
                }
                let (raw, bound) = net.raw_message(msgs, from, k);
                let new = normalize_message(kind, raw, bound, &msgs[d], damping)?;
                updates.push((d, new));
            }
        }
        residual = 0.0_f64;
        let mut next_dirty = vec![false; g.n_sites()];
        for (d, new) in updates {
            let e = g.edge(d / 2);
            let to = if d % 2 == 0 { e.v } else { e.u };
            let change = match new {
                Some(m) => {
                    let c = frobenius(&(&m - &msgs[d]));
                    msgs[d] = m;
                    vanished[d] = false;
                    c
                }
                None => {
                    let c = frobenius(&msgs[d]);
                    msgs[d].fill(C64::new(0.0, 0.0));
                    vanished[d] = true;
                    c
                }
            };
            residual = residual.max(change);
            unsettled[d] = change > settle && damping > 0.0;
            if change > settle {
                next_dirty[to] = true;
            }
        }
        dirty = next_dirty;
        if residual <= tolerance {
            break;
        }
    }
    Ok(BpRun {
        iterations,
        residual,
        converged: residual <= tolerance,
        vanished: vanished.iter().any(|&z| z),
    })
}

/// Run BP on the norm network from maximally mixed messages.
pub fn bp_fixed_point(tns: &TNState, cfg: &super::MeasurementConfig) -> Result<BPCache> {
    let mut cache = BPCache::new(tns);
    bp_refresh(tns, &mut cache, cfg)?;
    Ok(cache)
}

/// Continue BP sweeps from the current messages of `cache`.
pub fn bp_refresh(tns: &TNState, cache: &mut BPCache, cfg: &super::MeasurementConfig) -> Result<()> {
    cfg.validate()?;
    let net = Network::norm(tns);
    let run = run_bp(
        &net,
        &mut cache.messages,
        MessageKind::Norm,
        cfg.bp_tolerance,
        cfg.bp_max_iters,
        cfg.damping,
        None,
    )?;
    cache.iterations = run.iterations;
    cache.residual = run.residual;
    cache.converged = run.converged;
    Ok(())
}

/// Spanning forest: `(root, order)` per component, with `(site, parent, edge)`
/// in breadth-first order, plus the edges left out of the forest.
pub(crate) struct Forest {
    pub roots: Vec<usize>,
    pub tree: Vec<(usize, usize, usize)>,
    pub extra_edges: Vec<usize>,
}

pub(crate) fn spanning_forest(tns: &TNState) -> Forest {
    let g = tns.graph();
    let mut seen = vec![false; g.n_sites()];
    let mut in_tree = vec![false; g.n_edges()];
    let mut roots = Vec::new();
    let mut tree = Vec::new();
    for r in 0..g.n_sites() {
        if seen[r] {
            continue;
        }
        seen[r] = true;
        roots.push(r);
        let mut queue = VecDeque::from([r]);
        while let Some(v) = queue.pop_front() {
            for &(w, e) in g.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    in_tree[e] = true;
                    tree.push((w, v, e));
                    queue.push_back(w);
                }
            }
        }
    }
    let extra_edges = (0..g.n_edges()).filter(|&e| !in_tree[e]).collect();
    Forest {
        roots,
        tree,
        extra_edges,
    }
}

/// Complex logarithm of the BP estimate `Π_v Z_v / Π_e Z_e`, evaluated as
/// `Π_roots Z_r · Π_{v ≠ root} λ_{v→parent} / Π_{e ∉ forest} Z_e` where
/// `λ_{v→w}` is the scale of the fresh update relative to the stored message.
/// At a fixed point `Z_v = λ_{v→w} Z_e`, so both forms agree; this one stays
/// finite when a message vanishes. Returns `None` when the estimate is zero.
pub(crate) fn log_bp_value(net: &Network, msgs: &[Mat], forest: &Forest) -> Result<Option<C64>> {
    let tns = net.tns;
    let mut acc = C64::new(0.0, 0.0);
    for &r in &forest.roots {
        let z = net.vertex_value(msgs, r);
        if z == C64::new(0.0, 0.0) {
            return Ok(None);
        }
        acc += z.ln();
    }
    for &(v, _parent, e) in &forest.tree {
        let m = &msgs[dir_index(tns, e, v)];
        let mm = inner(m, m).re;
        if mm == 0.0 {
            return Ok(None);
        }
        let (raw, _) = net.raw_message(msgs, v, e);
        let lambda = inner(m, &raw) / mm;
        if lambda == C64::new(0.0, 0.0) {
            return Ok(None);
        }
        acc += lambda.ln();
    }
    for &e in &forest.extra_edges {
        let edge = tns.graph().edge(e);
        let ze = pair(&msgs[2 * e], &msgs[2 * e + 1]);
        if !(ze.norm() > EDGE_SINGULAR) {
            return Err(Error::SingularContraction(format!(
                "edge ({}, {}) has vanishing BP weight {ze}",
                edge.u, edge.v
            )));
        }
        acc -= ze.ln();
    }
    Ok(Some(acc))
}

const EDGE_SINGULAR: f64 = 1e-13;

/// Relative weight `w_l` of a simple cycle in the loop series around the BP
/// fixed point: the network with the BP-orthogonal projector on every cycle
/// edge and the BP projector elsewhere, divided by the BP estimate.
pub(crate) fn loop_weight(net: &Network, msgs: &[Mat], cycle: &Cycle) -> Result<C64> {
    let tns = net.tns;
    let n = cycle.len();
    let mut ratio = C64::new(1.0, 0.0);
    let mut product: Option<Mat> = None;
    for k in 0..n {
        let v = cycle.vertices[k];
        let next = cycle.vertices[(k + 1) % n];
        let in_edge = cycle.edges[(k + n - 1) % n];
        let out_edge = cycle.edges[k];
        let a = net.loop_vertex(msgs, v, in_edge, out_edge);
        let zv = net.vertex_value(msgs, v);
        // message entering v from `next`, and entering `next` from v
        let back = &msgs[dir_index(tns, out_edge, next)];
        let fwd = &msgs[dir_index(tns, out_edge, v)];
        let ze = pair(back, fwd);
        if !(zv.norm() > EDGE_SINGULAR) || !(ze.norm() > EDGE_SINGULAR) {
            return Err(Error::SingularContraction(format!(
                "vanishing BP weight on loop through site {v}"
            )));
        }
        ratio *= ze / zv;
        // vec(m) with the pair (ket, bra) flattened row-major, as in `loop_vertex`
        let d = back.nrows();
        let d2 = d * d;
        let vb = Mat::from_fn(d2, 1, |r, _| back[(r / d, r % d)]);
        let vf = Mat::from_fn(1, d2, |_, c| fwd[(c / d, c % d)] / ze);
        // a · (I − vb vf)
        let step = &a - (&a * vb) * vf;
        product = Some(match product {
            None => step,
            Some(p) => matmul(&p, &step),
        });
    }
    let tr = product.map(|p| p.trace()).unwrap_or(C64::new(0.0, 0.0));
    Ok(tr * ratio)
}

/// Logarithm of a network contraction estimated by BP plus a simple-cycle loop series.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionEstimate {
    /// `ln Z_BP`, or `None` when the BP estimate vanishes.
    pub log_bp: Option<C64>,
    /// `w_l` per cycle, in loop-set order.
    pub loop_weights: Vec<C64>,
}

impl ContractionEstimate {
    /// `ln(Z_BP · Π_l (1 + w_l))`.
    pub fn log_value(&self) -> Option<C64> {
        let mut acc = self.log_bp?;
        for w in &self.loop_weights {
            let f = C64::new(1.0, 0.0) + w;
            if f == C64::new(0.0, 0.0) {
                return None;
            }
            acc += f.ln();
        }
        Some(acc)
    }
}

pub(crate) fn estimate(
    net: &Network,
    msgs: &[Mat],
    forest: &Forest,
    loops: &LoopSet,
) -> Result<ContractionEstimate> {
    let log_bp = log_bp_value(net, msgs, forest)?;
    let loop_weights = if log_bp.is_some() {
        loops
            .cycles
            .iter()
            .map(|c| loop_weight(net, msgs, c))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(ContractionEstimate {
        log_bp,
        loop_weights,
    })
}

/// BP estimate of `⟨ψ_T|ψ_T⟩` for the bare site tensors, corrected by every
/// simple cycle in `loops`.
pub fn loop_corrected_norm(tns: &TNState, cache: &BPCache, loops: &LoopSet) -> Result<ContractionEstimate> {
    let net = Network::norm(tns);
    let forest = spanning_forest(tns);
    let est = estimate(&net, &cache.messages, &forest, loops)?;
    if est.log_bp.is_none() {
        return Err(Error::SingularContraction("norm network has zero BP weight".into()));
    }
    Ok(est)
}
