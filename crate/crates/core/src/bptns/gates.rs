use super::bp::{dir_index, BPCache, Network};
use super::state::TNState;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::linalg::{factored_svd, hermitize, regularized_psd_sqrt, thin_qr, truncated_svd, Mat};
use crate::C64;

/// Message eigenvalues are raised to at least this fraction of the largest
/// before gauging, so the gauge can be undone exactly.
const GAUGE_FLOOR: f64 = 1e-8;

/// Operator-Schmidt terms of a gate below this fraction of the largest are dropped.
const GATE_RANK_CUTOFF: f64 = 1e-14;

/// Default relative singular-value cutoff for [`apply_gate`].
pub const DEFAULT_SVD_CUTOFF: f64 = 1e-12;

/// A unitary on one site or on the two ends of an edge. Matrices are
/// row-major; a two-site matrix is indexed by `q_a · p_b + q_b`, with `a`
/// the first site given.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    OneSite { site: usize, matrix: Vec<C64> },
    TwoSite { a: usize, b: usize, matrix: Vec<C64> },
}

impl Gate {
    /// Diagonal two-site gate.
    pub fn diagonal_two_site(a: usize, b: usize, diag: &[C64]) -> Self {
        let n = diag.len();
        let mut matrix = vec![C64::new(0.0, 0.0); n * n];
        for (k, &d) in diag.iter().enumerate() {
            matrix[k * n + k] = d;
        }
        Gate::TwoSite { a, b, matrix }
    }
}

/// Result of one gate application.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GateReport {
    /// Discarded fraction of the squared singular values.
    pub discarded: f64,
    pub bond_dim: usize,
}

/// Apply `gate` with bond dimension at most `chi` and the default cutoff.
pub fn apply_gate(tns: &mut TNState, cache: &mut BPCache, gate: &Gate, chi: usize) -> Result<GateReport> {
    apply_gate_with_cutoff(tns, cache, gate, chi, DEFAULT_SVD_CUTOFF)
}

pub fn apply_gate_with_cutoff(
    tns: &mut TNState,
    cache: &mut BPCache,
    gate: &Gate,
    chi: usize,
    svd_cutoff: f64,
) -> Result<GateReport> {
    if chi == 0 {
        return Err(Error::Config("chi must be at least 1".into()));
    }
    match gate {
        Gate::OneSite { site, matrix } => {
            let site = *site;
            if site >= tns.n_sites() {
                return Err(Error::Topology(format!("site {site} does not exist")));
            }
            let p = tns.phys_dim(site);
            check_len(matrix, p)?;
            let m = Mat::from_fn(p, p, |r, c| matrix[r * p + c]);
            let t = tns.tensor(site).apply_leg(0, &m);
            tns.set_tensor(site, t);
            tns.normalize_site(site);
            Ok(GateReport {
                discarded: 0.0,
                bond_dim: 0,
            })
        }
        Gate::TwoSite { a, b, matrix } => {
            let (a, b) = (*a, *b);
            if a >= tns.n_sites() || b >= tns.n_sites() {
                return Err(Error::Topology(format!("gate on ({a}, {b}) references a missing site")));
            }
            let edge = tns
                .graph()
                .edge_between(a, b)
                .ok_or_else(|| Error::Topology(format!("sites {a} and {b} are not adjacent")))?;
            let (pa, pb) = (tns.phys_dim(a), tns.phys_dim(b));
            check_len(matrix, pa * pb)?;
            two_site(tns, cache, a, b, edge, matrix, chi, svd_cutoff)
        }
    }
}

fn check_len(matrix: &[C64], n: usize) -> Result<()> {
    if matrix.len() != n * n {
        return Err(Error::InvalidSize(format!(
            "gate has {} entries, expected {}",
            matrix.len(),
            n * n
        )));
    }
    Ok(())
}

/// Site tensor with every bond except `skip_edge` multiplied by the square
/// root of its incoming message, plus the matrices undoing that.
fn gauge_site(tns: &TNState, cache: &BPCache, site: usize, skip_edge: usize) -> (Tensor, Vec<(usize, Mat)>) {
    let mut t = tns.tensor(site).clone();
    let mut undo = Vec::new();
    for (pos, &(x, e)) in tns.graph().neighbors(site).iter().enumerate() {
        if e == skip_edge {
            continue;
        }
        let m = &cache.messages[dir_index(tns, e, x)];
        let (s, s_inv) = regularized_psd_sqrt(m, GAUGE_FLOOR);
        t = t.apply_leg(pos + 1, &s.transpose());
        undo.push((pos + 1, s_inv.transpose()));
    }
    (t, undo)
}

#[allow(clippy::too_many_arguments)]
fn two_site(
    tns: &mut TNState,
    cache: &mut BPCache,
    a: usize,
    b: usize,
    edge: usize,
    matrix: &[C64],
    chi: usize,
    svd_cutoff: f64,
) -> Result<GateReport> {
    let (pa, pb) = (tns.phys_dim(a), tns.phys_dim(b));
    let d = tns.bond_dim(edge);
    let (la, lb) = (tns.leg(a, edge), tns.leg(b, edge));

    let (ta, undo_a) = gauge_site(tns, cache, a, edge);
    let (tb, undo_b) = gauge_site(tns, cache, b, edge);
    let others_a: Vec<usize> = (1..ta.rank()).filter(|&l| l != la).collect();
    let others_b: Vec<usize> = (1..tb.rank()).filter(|&l| l != lb).collect();
    // columns are (physical, bond) because index 0 precedes the bond index
    let (qa, ra) = thin_qr(&ta.matricize(&others_a));
    let (qb, rb) = thin_qr(&tb.matricize(&others_b));
    let (na, nb) = (ra.nrows(), rb.nrows());

    // The gate as Σ_s A_s ⊗ B_s; A_s[q, p] = op[(q, p), s], B_s[q, p] = op_adj[s, (q, p)].
    let op = Mat::from_fn(pa * pa, pb * pb, |r, c| {
        let (qa, pa_) = (r / pa, r % pa);
        let (qb, pb_) = (c / pb, c % pb);
        matrix[(qa * pb + qb) * pa * pb + pa_ * pb + pb_]
    });
    let op_svd = truncated_svd(&op, pa * pa, GATE_RANK_CUTOFF);
    let terms = op_svd.s.len();
    // left[(x, q), (s, bond)] = Σ_p A_s[q, p] ra[x, (p, bond)], and likewise right,
    // so that the gated two-site matrix is left · rightᵀ.
    let left = Mat::from_fn(na * pa, terms * d, |r, c| {
        let (x, q) = (r / pa, r % pa);
        let (t, bond) = (c / d, c % d);
        let w = op_svd.s[t].sqrt();
        (0..pa).map(|p| op_svd.u[(q * pa + p, t)] * ra[(x, p * d + bond)]).sum::<C64>() * w
    });
    let right = Mat::from_fn(nb * pb, terms * d, |r, c| {
        let (y, q) = (r / pb, r % pb);
        let (t, bond) = (c / d, c % d);
        let w = op_svd.s[t].sqrt();
        (0..pb).map(|p| op_svd.v_adj[(t, q * pb + p)] * rb[(y, p * d + bond)]).sum::<C64>() * w
    });

    let svd = factored_svd(&left, &right, chi, svd_cutoff);
    let k = svd.s.len();
    let s_norm = svd.s.iter().map(|s| s * s).sum::<f64>().sqrt();
    if !(s_norm > 0.0) {
        return Err(Error::SingularContraction("gate annihilated the state".into()));
    }
    tns.add_log_norm(s_norm.ln());
    let root: Vec<f64> = svd.s.iter().map(|s| (s / s_norm).sqrt()).collect();
    // new ra'[x, (p, k)] and rb'[y, (p', k)]
    let new_ra = Mat::from_fn(na, pa * k, |x, c| {
        let (p, j) = (c / k, c % k);
        svd.u[(x * pa + p, j)] * root[j]
    });
    let new_rb = Mat::from_fn(nb, pb * k, |y, c| {
        let (p, j) = (c / k, c % k);
        svd.v_adj[(j, y * pb + p)] * root[j]
    });

    let rebuild = |q: &Mat, r: &Mat, old: &Tensor, leg: usize, others: &[usize], undo: &[(usize, Mat)]| {
        let mut shape = old.shape().to_vec();
        shape[leg] = k;
        let mut t = Tensor::from_matrix(&(q * r), &shape, others);
        for (l, m) in undo {
            t = t.apply_leg(*l, m);
        }
        t
    };
    let new_a = rebuild(&qa, &new_ra, tns.tensor(a), la, &others_a, &undo_a);
    let new_b = rebuild(&qb, &new_rb, tns.tensor(b), lb, &others_b, &undo_b);
    tns.set_tensor(a, new_a);
    tns.set_tensor(b, new_b);
    tns.normalize_site(a);
    tns.normalize_site(b);

    refresh_local_messages(tns, cache, a, b, edge)?;
    Ok(GateReport {
        discarded: svd.discarded,
        bond_dim: k,
    })
}

/// Recompute the two messages on `edge`, then every message leaving `a` or `b`.
fn refresh_local_messages(tns: &TNState, cache: &mut BPCache, a: usize, b: usize, edge: usize) -> Result<()> {
    let net = Network::norm(tns);
    for from in [a, b] {
        let d = dir_index(tns, edge, from);
        let (raw, _) = net.raw_message(&cache.messages, from, edge);
        cache.messages[d] = unit_trace(raw)?;
    }
    for from in [a, b] {
        for &(_, e) in tns.graph().neighbors(from) {
            if e == edge {
                continue;
            }
            let d = dir_index(tns, e, from);
            let (raw, _) = net.raw_message(&cache.messages, from, e);
            cache.messages[d] = unit_trace(raw)?;
        }
    }
    Ok(())
}

fn unit_trace(raw: Mat) -> Result<Mat> {
    let h = hermitize(&raw);
    let tr = h.trace().re;
    if !(tr > 0.0) || !tr.is_finite() {
        return Err(Error::SingularContraction("norm message has vanishing trace".into()));
    }
    Ok(h.unscale(tr))
}
