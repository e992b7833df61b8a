//! Dense complex matrix helpers built on nalgebra.

use nalgebra::DMatrix;

use crate::C64;

pub type Mat = DMatrix<C64>;

/// Hermitian part `(m + m†) / 2`.
pub fn hermitize(m: &Mat) -> Mat {
    (m + m.adjoint()).scale(0.5)
}

/// `sqrt(m)` and its exact inverse for a Hermitian positive-semidefinite
/// matrix, with every eigenvalue raised to at least `floor · λ_max` first.
/// A zero matrix gives the identity.
pub fn regularized_psd_sqrt(m: &Mat, floor: f64) -> (Mat, Mat) {
    let n = m.nrows();
    let eig = hermitize(m).symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b));
    if !(lmax > 0.0) || !lmax.is_finite() {
        return (Mat::identity(n, n), Mat::identity(n, n));
    }
    let u = &eig.eigenvectors;
    let root: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(floor * lmax).sqrt()).collect();
    let scaled = |f: &dyn Fn(f64) -> f64| {
        let mut cols = u.clone();
        for (k, &r) in root.iter().enumerate() {
            cols.column_mut(k).scale_mut(f(r));
        }
        matmul(&cols, &u.adjoint())
    };
    (scaled(&|r| r), scaled(&|r| 1.0 / r))
}

/// Truncated singular value decomposition `m ≈ U diag(s) Vᴴ`.
pub struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v_adj: Mat,
    /// Sum of discarded squared singular values over the total.
    pub discarded: f64,
}

/// SVD keeping at most `max_rank` singular values, in descending order with
/// ties resolved toward the lower original index, and dropping values below
/// `rel_cutoff` times the largest one.
pub fn truncated_svd(m: &Mat, max_rank: usize, rel_cutoff: f64) -> Svd {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let vt = svd.v_t.expect("right singular vectors requested");
    let vals: Vec<f64> = svd.singular_values.iter().copied().collect();
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    let smax = order.first().map(|&k| vals[k]).unwrap_or(0.0);
    let total: f64 = vals.iter().map(|s| s * s).sum();
    let keep: Vec<usize> = order
        .iter()
        .copied()
        .take(max_rank.max(1))
        .enumerate()
        .filter(|&(rank, k)| rank == 0 || vals[k] > rel_cutoff * smax)
        .map(|(_, k)| k)
        .collect();
    let kept: f64 = keep.iter().map(|&k| vals[k] * vals[k]).sum();
    let r = keep.len();
    let mut uu = Mat::zeros(u.nrows(), r);
    let mut vv = Mat::zeros(r, vt.ncols());
    for (c, &k) in keep.iter().enumerate() {
        uu.set_column(c, &u.column(k));
        vv.set_row(c, &vt.row(k));
    }
    Svd {
        u: uu,
        s: keep.iter().map(|&k| vals[k]).collect(),
        v_adj: vv,
        discarded: if total > 0.0 { (1.0 - kept / total).max(0.0) } else { 0.0 },
    }
}

/// [`truncated_svd`] of `a · bᵀ`, computed from thin QR factors of `a` and
/// `b` so only a small core matrix is decomposed.
pub fn factored_svd(a: &Mat, b: &Mat, max_rank: usize, rel_cutoff: f64) -> Svd {
    assert_eq!(a.ncols(), b.ncols(), "factors have different inner dimensions");
    let (qa, ra) = thin_qr(a);
    let (qb, rb) = thin_qr(b);
    let core = truncated_svd(&matmul(&ra, &rb.transpose()), max_rank, rel_cutoff);
    Svd {
        u: matmul(&qa, &core.u),
        s: core.s,
        v_adj: matmul(&core.v_adj, &qb.transpose()),
        discarded: core.discarded,
    }
}

/// Thin QR factorization `m = Q R` with `Q` of size `rows × min(rows, cols)`.
pub fn thin_qr(m: &Mat) -> (Mat, Mat) {
    let qr = m.clone().qr();
    (qr.q(), qr.r())
}

/// Complex product `a · b` through four real products, which use the blocked
/// real kernel instead of the generic complex loop.
pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.ncols(), b.nrows(), "inner dimensions differ");
    if a.nrows() * a.ncols() * b.ncols() < 4096 {
        return a * b;
    }
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    re.zip_map(&im, C64::new)
}

/// Frobenius norm.
pub fn frobenius(m: &Mat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
