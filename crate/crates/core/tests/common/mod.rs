//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use crosssim::bptns::TNState;
use crosssim::graphs::{LatticeGraph, SpinGlassInstance};
use crosssim::model::QuenchSpec;
use crosssim::C64;

/// Amplitudes of the contracted site tensors, indexed like the statevector
/// (bit `k` of the index is spin `k`, spin `k` lives on site `k / spins_per_site`).
/// Sites are absorbed one at a time with an explicit open-bond list.
pub fn dense_amplitudes(tns: &TNState) -> Vec<C64> {
    let g = tns.graph();
    let n_sites = tns.n_sites();
    // running tensor: index = (phys of absorbed sites in order) then open bonds
    let mut phys_dims: Vec<usize> = Vec::new();
    let mut open: Vec<(usize, usize)> = Vec::new(); // (edge, dim)
    let mut data = vec![C64::new(1.0, 0.0)];
    for v in 0..n_sites {
        let t = tns.tensor(v);
        let shape = t.shape().to_vec();
        let legs: Vec<usize> = g.neighbors(v).iter().map(|&(_, e)| e).collect();
        // which legs close an open bond
        let closing: Vec<Option<usize>> = legs
            .iter()
            .map(|e| open.iter().position(|(oe, _)| oe == e))
            .collect();
        let remaining_open: Vec<usize> = (0..open.len())
            .filter(|k| !closing.contains(&Some(*k)))
            .collect();
        let new_open: Vec<usize> = (0..legs.len()).filter(|&k| closing[k].is_none()).collect();

        let old_phys: usize = phys_dims.iter().product();
        let old_open_dims: Vec<usize> = open.iter().map(|o| o.1).collect();
        let old_open_size: usize = old_open_dims.iter().product();
        let p = shape[0];
        let rem_dims: Vec<usize> = remaining_open.iter().map(|&k| open[k].1).collect();
        let new_dims: Vec<usize> = new_open.iter().map(|&k| shape[k + 1]).collect();
        let rem_size: usize = rem_dims.iter().product();
        let new_size: usize = new_dims.iter().product();
        let mut out = vec![C64::new(0.0, 0.0); old_phys * p * rem_size * new_size];

        let t_size: usize = shape[1..].iter().product();
        for ph in 0..old_phys {
            for oo in 0..old_open_size {
                let a = data[ph * old_open_size + oo];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let old_idx = unravel(oo, &old_open_dims);
                let rem_idx: Vec<usize> = remaining_open.iter().map(|&k| old_idx[k]).collect();
                let rem_flat = ravel(&rem_idx, &rem_dims);
                for pv in 0..p {
                    for tb in 0..t_size {
                        let leg_idx = unravel(tb, &shape[1..]);
                        let matches = closing
                            .iter()
                            .enumerate()
                            .all(|(k, c)| c.map_or(true, |ok| old_idx[ok] == leg_idx[k]));
                        if !matches {
                            continue;
                        }
                        let b = t.data()[pv * t_size + tb];
                        let new_idx: Vec<usize> = new_open.iter().map(|&k| leg_idx[k]).collect();
                        let new_flat = ravel(&new_idx, &new_dims);
                        let target = ((ph * p + pv) * rem_size + rem_flat) * new_size + new_flat;
                        out[target] += a * b;
                    }
                }
            }
        }
        phys_dims.push(p);
        let mut next_open: Vec<(usize, usize)> = remaining_open.iter().map(|&k| open[k]).collect();
        next_open.extend(new_open.iter().map(|&k| (legs[k], shape[k + 1])));
        open = next_open;
        data = out;
    }
    assert!(open.is_empty(), "all bonds closed");
    // data index: site 0 most significant; convert to spin-bit order
    let k = tns.spins_per_site();
    let n_spins = n_sites * k;
    let p = 1usize << k;
    let mut amps = vec![C64::new(0.0, 0.0); 1 << n_spins];
    for (idx, &a) in data.iter().enumerate() {
        let mut rest = idx;
        let mut basis = 0usize;
        for v in (0..n_sites).rev() {
            let pv = rest % p;
            rest /= p;
            basis |= pv << (v * k);
        }
        amps[basis] = a;
    }
    amps
}

fn unravel(mut flat: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        out[k] = flat % dims[k];
        flat /= dims[k];
    }
    out
}

fn ravel(idx: &[usize], dims: &[usize]) -> usize {
    idx.iter().zip(dims).fold(0, |acc, (&i, &d)| acc * d + i)
}

pub fn norm_sqr(amps: &[C64]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum()
}

/// `⟨σᶻ_i σᶻ_j⟩` of an unnormalized vector.
pub fn zz(amps: &[C64], i: usize, j: usize) -> f64 {
    let mut acc = 0.0;
    for (x, a) in amps.iter().enumerate() {
        let s = if ((x >> i) ^ (x >> j)) & 1 == 0 { 1.0 } else { -1.0 };
        acc += s * a.norm_sqr();
    }
    acc / norm_sqr(amps)
}

/// `|⟨a|b⟩| / (|a| |b|)`.
pub fn fidelity(a: &[C64], b: &[C64]) -> f64 {
    let ov: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    ov.norm() / (norm_sqr(a) * norm_sqr(b)).sqrt()
}

/// `H(s)|ψ⟩` for the transverse-field Ising Hamiltonian, built directly from
/// the instance couplings and the schedule.
fn apply_h(instance: &SpinGlassInstance, spec: &QuenchSpec, t: f64, psi: &[C64], out: &mut [C64]) {
    let n = instance.n_spins();
    let s = (t / spec.t_a).clamp(0.0, 1.0);
    let (gamma, j) = spec.schedule.at(s).unwrap();
    let terms: Vec<(usize, usize, f64)> = instance
        .spin_couplings()
        .iter()
        .map(|c| (c.i, c.j, j * spec.alpha * c.j_ij))
        .collect();
    for (x, o) in out.iter_mut().enumerate() {
        let mut diag = 0.0;
        for &(a, b, c) in &terms {
            let same = ((x >> a) ^ (x >> b)) & 1 == 0;
            diag += if same { c } else { -c };
        }
        let mut acc = psi[x] * diag;
        for k in 0..n {
            acc += psi[x ^ (1 << k)] * gamma;
        }
        *o = acc;
    }
}

/// Integrate `i dψ/dt = H(t) ψ` from the paramagnetic state over
/// `[0, t_a · s_end]` with adaptive Dormand–Prince 5(4) steps.
pub fn ode_evolve(instance: &SpinGlassInstance, spec: &QuenchSpec, rtol: f64) -> Vec<C64> {
    let n = instance.n_spins();
    let dim = 1usize << n;
    let amp = (dim as f64).sqrt().recip();
    let mut psi: Vec<C64> = (0..dim)
        .map(|x: usize| C64::new(if x.count_ones() % 2 == 0 { amp } else { -amp }, 0.0))
        .collect();
    let t_end = spec.t_a * spec.s_end;
    let rhs = |t: f64, y: &[C64], out: &mut [C64]| {
        apply_h(instance, spec, t, y, out);
        for o in out.iter_mut() {
            *o *= C64::new(0.0, -1.0);
        }
    };
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let mut t = 0.0;
    let mut h = 1e-3_f64.min(t_end);
    let mut k = vec![vec![C64::new(0.0, 0.0); dim]; 7];
    let mut tmp = vec![C64::new(0.0, 0.0); dim];
    while t < t_end {
        if t + h > t_end {
            h = t_end - t;
        }
        for stage in 0..7 {
            for x in 0..dim {
                let mut acc = psi[x];
                for (prev, &a) in A[stage].iter().enumerate().take(stage) {
                    acc += k[prev][x] * (a * h);
                }
                tmp[x] = acc;
            }
            let (head, tail) = k.split_at_mut(stage);
            let _ = head;
            rhs(t + C[stage] * h, &tmp, &mut tail[0]);
        }
        let mut err = 0.0_f64;
        let mut next = psi.clone();
        for x in 0..dim {
            let mut y5 = psi[x];
            let mut y4 = psi[x];
            for s in 0..7 {
                y5 += k[s][x] * (B5[s] * h);
                y4 += k[s][x] * (B4[s] * h);
            }
            next[x] = y5;
            err = err.max((y5 - y4).norm());
        }
        let tol = rtol;
        if err <= tol {
            t += h;
            psi = next;
        }
        let factor = if err > 0.0 { 0.9 * (tol / err).powf(0.2) } else { 5.0 };
        h *= factor.clamp(0.2, 5.0);
    }
    psi
}

/// Number of simple cycles of each length up to `l_max`, counted as closed
/// walks without repeated vertices and divided by `2 · length`.
pub fn brute_force_cycle_counts(graph: &LatticeGraph, l_max: usize) -> Vec<usize> {
    let n = graph.n_sites();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|v| graph.neighbors(v).iter().map(|&(w, _)| w).collect())
        .collect();
    let mut walks = vec![0usize; l_max + 1];
    let mut path = Vec::new();
    let mut used = vec![false; n];
    fn go(
        adj: &[Vec<usize>],
        start: usize,
        l_max: usize,
        path: &mut Vec<usize>,
        used: &mut [bool],
        walks: &mut [usize],
    ) {
        let last = *path.last().unwrap();
        for &w in &adj[last] {
            if w == start && path.len() >= 3 {
                walks[path.len()] += 1;
            } else if !used[w] && path.len() < l_max {
                used[w] = true;
                path.push(w);
                go(adj, start, l_max, path, used, walks);
                path.pop();
                used[w] = false;
            }
        }
    }
    for s in 0..n {
        used[s] = true;
        path.push(s);
        go(&adj, s, l_max, &mut path, &mut used, &mut walks);
        path.pop();
        used[s] = false;
    }
    walks
        .iter()
        .enumerate()
        .map(|(len, &w)| if len == 0 { 0 } else { w / (2 * len) })
        .collect()
}
