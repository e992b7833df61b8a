use serde::{Deserialize, Serialize};

use crate::linalg::Mat;
use crate::C64;

/// Dense complex tensor stored row-major (last index fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data does not match shape {shape:?}"
        );
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![C64::new(0.0, 0.0); n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub(crate) fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|z| *z *= a);
    }

    /// `out[.., a, ..] = Σ_b m[a, b] self[.., b, ..]` on index `leg`.
    pub(crate) fn apply_leg(&self, leg: usize, m: &Mat) -> Tensor {
        let d = self.shape[leg];
        assert_eq!(m.ncols(), d, "leg {leg} has dimension {d}");
        let outer: usize = self.shape[..leg].iter().product();
        let inner: usize = self.shape[leg + 1..].iter().product();
        let nd = m.nrows();
        let mut shape = self.shape.clone();
        shape[leg] = nd;
        let mut out = vec![C64::new(0.0, 0.0); outer * nd * inner];
        for o in 0..outer {
            let src = &self.data[o * d * inner..(o + 1) * d * inner];
            let dst = &mut out[o * nd * inner..(o + 1) * nd * inner];
            for a in 0..nd {
                let row = &mut dst[a * inner..(a + 1) * inner];
                for b in 0..d {
                    let c = m[(a, b)];
                    if c == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for (r, s) in row.iter_mut().zip(&src[b * inner..(b + 1) * inner]) {
                        *r += c * s;
                    }
                }
            }
        }
        Tensor { shape, data: out }
    }

    /// Multiply index `leg` elementwise by `diag`.
    pub(crate) fn scale_leg(&self, leg: usize, diag: &[C64]) -> Tensor {
        let d = self.shape[leg];
        assert_eq!(diag.len(), d);
        let inner: usize = self.shape[leg + 1..].iter().product();
        let mut out = self.clone();
        for (k, z) in out.data.iter_mut().enumerate() {
            *z *= diag[(k / inner) % d];
        }
        out
    }

    /// Reorder indices: index `k` of the result is index `perm[k]` of `self`.
    pub(crate) fn permute(&self, perm: &[usize]) -> Tensor {
        assert_eq!(perm.len(), self.rank());
        if perm.iter().enumerate().all(|(k, &p)| k == p) {
            return self.clone();
        }
        let shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let src_strides = strides(&self.shape);
        let step: Vec<usize> = perm.iter().map(|&p| src_strides[p]).collect();
        let n = self.data.len();
        let mut out = Vec::with_capacity(n);
        let mut idx = vec![0usize; shape.len()];
        let mut offset = 0usize;
        for _ in 0..n {
            out.push(self.data[offset]);
            for k in (0..shape.len()).rev() {
                idx[k] += 1;
                offset += step[k];
                if idx[k] < shape[k] {
                    break;
                }
                offset -= step[k] * shape[k];
                idx[k] = 0;
            }
        }
        Tensor { shape, data: out }
    }

    /// Matrix whose rows run over `row_legs` (in the given order) and whose
    /// columns run over the remaining indices in their original order.
    pub(crate) fn matricize(&self, row_legs: &[usize]) -> Mat {
        let perm = self.row_first_perm(row_legs);
        let t = self.permute(&perm);
        let rows: usize = row_legs.iter().map(|&l| self.shape[l]).product();
        let cols = if rows == 0 { 0 } else { t.data.len() / rows };
        Mat::from_fn(rows, cols, |r, c| t.data[r * cols + c])
    }

    fn row_first_perm(&self, row_legs: &[usize]) -> Vec<usize> {
        let mut perm = row_legs.to_vec();
        perm.extend((0..self.rank()).filter(|k| !row_legs.contains(k)));
        perm
    }

    /// Inverse of [`Tensor::matricize`]: `m` has rows over `row_legs` and
    /// columns over the other indices of `shape`, in order.
    pub(crate) fn from_matrix(m: &Mat, shape: &[usize], row_legs: &[usize]) -> Tensor {
        let probe = Tensor {
            shape: shape.to_vec(),
            data: Vec::new(),
        };
        let perm = probe.row_first_perm(row_legs);
        let permuted_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let cols = m.ncols();
        let mut data = Vec::with_capacity(m.nrows() * cols);
        for r in 0..m.nrows() {
            for c in 0..cols {
                data.push(m[(r, c)]);
            }
        }
        let t = Tensor::new(permuted_shape, data);
        let mut inverse = vec![0; perm.len()];
        for (k, &p) in perm.iter().enumerate() {
            inverse[p] = k;
        }
        t.permute(&inverse)
    }

    /// `Σ_k self[k] · conj(other[k])`.
    pub(crate) fn dot_conj(&self, other: &Tensor) -> C64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b.conj())
            .sum()
    }
}

/// Serializable form of a tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub shape: Vec<usize>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&Tensor> for TensorRecord {
    fn from(t: &Tensor) -> Self {
        Self {
            shape: t.shape.clone(),
            re: t.data.iter().map(|z| z.re).collect(),
            im: t.data.iter().map(|z| z.im).collect(),
        }
    }
}

impl TensorRecord {
    pub fn to_tensor(&self) -> Option<Tensor> {
        let n: usize = self.shape.iter().product();
        if self.re.len() != n || self.im.len() != n {
            return None;
        }
        Some(Tensor {
            shape: self.shape.clone(),
            data: self.re.iter().zip(&self.im).map(|(&a, &b)| C64::new(a, b)).collect(),
        })
    }
}
