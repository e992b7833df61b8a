//! Correlation matrices, error metrics and ensemble statistics.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{parse_err, Error, Result};
use crate::exact::SampleSet;

/// Tolerance on `|c_ij| ≤ 1`.
pub const CORRELATION_BOUND_TOL: f64 = 1e-9;

/// Value reported by [`bhattacharyya`] for distributions with disjoint support.
pub const BHATTACHARYYA_SATURATED: f64 = f64::MAX;

/// Default number of bootstrap resamples.
pub const DEFAULT_N_BOOT: usize = 1000;

/// Symmetric matrix of two-body `σᶻσᶻ` expectations, stored as the packed
/// upper triangle `i < j` together with a mask of populated pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    n: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
}

fn n_pairs(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

impl CorrelationMatrix {
    /// All-pairs matrix filled with zeros.
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; n_pairs(n)],
            mask: vec![true; n_pairs(n)],
        }
    }

    /// All-pairs matrix with `c_ij = f(i, j)` for `i < j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n_pairs(n));
        for i in 0..n {
            for j in i + 1..n {
                values.push(f(i, j));
            }
        }
        Self {
            n,
            mask: vec![true; values.len()],
            values,
        }
    }

    /// All-pairs matrix from the packed upper triangle.
    pub fn from_packed(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_pairs(n) {
            return Err(Error::Config(format!(
                "{} packed values for {n} spins",
                values.len()
            )));
        }
        Ok(Self {
            n,
            mask: vec![true; values.len()],
            values,
        })
    }

    pub fn n_spins(&self) -> usize {
        self.n
    }

    pub fn n_pairs(&self) -> usize {
        self.values.len()
    }

    fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        assert!(i != j && j < self.n, "pair ({i}, {j}) out of range");
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    /// `c_ij`, symmetric in its arguments. Panics on `i == j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.index(i, j);
        self.values[k] = v;
    }

    pub fn is_populated(&self, i: usize, j: usize) -> bool {
        self.mask[self.index(i, j)]
    }

    /// Restrict the mask to the given pairs; values outside it are cleared.
    pub fn with_pair_mask(mut self, pairs: &[(usize, usize)]) -> Self {
        let mut mask = vec![false; self.mask.len()];
        for &(i, j) in pairs {
            mask[self.index(i, j)] = true;
        }
        for (v, &m) in self.values.iter_mut().zip(&mask) {
            if !m {
                *v = 0.0;
            }
        }
        self.mask = mask;
        self
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn packed(&self) -> &[f64] {
        &self.values
    }

    /// `(i, j, c_ij)` over populated pairs, row-major.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n;
        (0..n)
            .flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
            .zip(self.values.iter().zip(&self.mask))
            .filter(|(_, (_, &m))| m)
            .map(|((i, j), (&v, _))| (i, j, v))
    }

    /// Populated values in packed order.
    pub fn masked_values(&self) -> Vec<f64> {
        self.pairs().map(|(_, _, v)| v).collect()
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= a);
        out
    }

    /// Relabel spins: entry `(perm[i], perm[j])` of the result is `c_ij`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n);
        let mut out = Self {
            n: self.n,
            values: vec![0.0; self.values.len()],
            mask: vec![false; self.mask.len()],
        };
        for i in 0..self.n {
            for j in i + 1..self.n {
                let src = self.index(i, j);
                let dst = out.index(perm[i], perm[j]);
                out.values[dst] = self.values[src];
                out.mask[dst] = self.mask[src];
            }
        }
        out
    }

    /// Check `|c_ij| ≤ 1` within [`CORRELATION_BOUND_TOL`] and finiteness.
    pub fn validate(&self) -> Result<()> {
        for (i, j, v) in self.pairs() {
            if !v.is_finite() || v.abs() > 1.0 + CORRELATION_BOUND_TOL {
                return Err(Error::Domain(format!("c[{i}][{j}] = {v} is not a correlation")));
            }
        }
        Ok(())
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::Config(format!(
                "correlation matrices over {} and {} spins",
                self.n, other.n
            )));
        }
        if self.mask != other.mask {
            return Err(Error::Config("correlation matrices have different pair masks".into()));
        }
        Ok(())
    }

    /// Versioned text container with provenance.
    pub fn to_text(&self, provenance: &Provenance) -> String {
        let mut s = String::from("# crosssim-correlations v1\n");
        provenance.write_header(&mut s);
        let _ = writeln!(s, "n_spins {}", self.n);
        let _ = writeln!(s, "pairs {}", self.mask.iter().filter(|&&m| m).count());
        for (i, j, v) in self.pairs() {
            let _ = writeln!(s, "{i} {j} {v:?}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<(Self, Provenance)> {
        let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l.trim()));
        match lines.next() {
            Some((_, "# crosssim-correlations v1")) => {}
            Some((ln, other)) => return Err(parse_err(ln, format!("unsupported header `{other}`"))),
            None => return Err(parse_err(1, "empty input")),
        }
        let provenance = Provenance::read_header(&mut lines)?;
        let n: usize = header_value(&mut lines, "n_spins")?;
        let count: usize = header_value(&mut lines, "pairs")?;
        let mut out = Self {
            n,
            values: vec![0.0; n_pairs(n)],
            mask: vec![false; n_pairs(n)],
        };
        let mut seen = 0;
        for (ln, line) in lines {
            if line.is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            let [i, j, v] = tok[..] else {
                return Err(parse_err(ln, "expected `i j value`"));
            };
            let (i, j, v) = match (i.parse::<usize>(), j.parse::<usize>(), v.parse::<f64>()) {
                (Ok(i), Ok(j), Ok(v)) if i < j && j < n => (i, j, v),
                _ => return Err(parse_err(ln, "bad pair line")),
            };
            let k = out.index(i, j);
            out.values[k] = v;
            out.mask[k] = true;
            seen += 1;
        }
        if seen != count {
            return Err(parse_err(0, format!("expected {count} pairs, found {seen}")));
        }
        Ok((out, provenance))
    }
}

/// Where a stored result came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub instance: String,
    pub spec: String,
    pub engine: String,
    pub seed: u64,
}

impl Provenance {
    pub(crate) fn write_header(&self, s: &mut String) {
        let or_dash = |x: &str| if x.is_empty() { "-".to_string() } else { x.to_string() };
        let _ = writeln!(s, "instance {}", or_dash(&self.instance));
        let _ = writeln!(s, "spec {}", or_dash(&self.spec));
        let _ = writeln!(s, "engine {}", or_dash(&self.engine));
        let _ = writeln!(s, "seed {}", self.seed);
    }

    pub(crate) fn read_header<'a>(
        lines: &mut impl Iterator<Item = (usize, &'a str)>,
    ) -> Result<Self> {
        let mut field = |key: &str| -> Result<String> {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| parse_err(0, format!("missing `{key}` line")))?;
            let (k, v) = line.split_once(' ').unwrap_or((line, ""));
            if k != key {
                return Err(parse_err(ln, format!("expected `{key}`, found `{k}`")));
            }
            Ok(if v == "-" { String::new() } else { v.to_string() })
        };
        let instance = field("instance")?;
        let spec = field("spec")?;
        let engine = field("engine")?;
        let seed = field("seed")?
            .parse()
            .map_err(|_| parse_err(0, "bad seed"))?;
        Ok(Self {
            instance,
            spec,
            engine,
            seed,
        })
    }
}

pub(crate) fn header_value<'a, T: std::str::FromStr>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    key: &str,
) -> Result<T> {
    let (ln, line) = lines
        .next()
        .ok_or_else(|| parse_err(0, format!("missing `{key}` line")))?;
    match line.split_once(' ') {
        Some((k, v)) if k == key => v.parse().map_err(|_| parse_err(ln, format!("bad `{key}` value"))),
        _ => Err(parse_err(ln, format!("expected `{key}`"))),
    }
}

/// Normalized ℓ² error between two correlation vectors.
pub fn epsilon_c_values(c: &[f64], c_tilde: &[f64]) -> Result<f64> {
    if c.len() != c_tilde.len() {
        return Err(Error::Config("vectors of different length".into()));
    }
    let den: f64 = c_tilde.iter().map(|v| v * v).sum();
    if !(den > 0.0) {
        return Err(Error::UndefinedMetric(
            "ground-truth correlations are identically zero".into(),
        ));
    }
    let num: f64 = c.iter().zip(c_tilde).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((num / den).sqrt())
}

/// `ε_c = sqrt(Σ (c_ij − c̃_ij)² / Σ c̃_ij²)` over the populated pairs.
pub fn epsilon_c(c: &CorrelationMatrix, c_tilde: &CorrelationMatrix) -> Result<f64> {
    c.check_compatible(c_tilde)?;
    epsilon_c_values(&c.masked_values(), &c_tilde.masked_values())
}

/// `c_ij = (1/M) Σ_samples s_i s_j`.
pub fn sample_correlations(samples: &SampleSet) -> CorrelationMatrix {
    let n = samples.n_spins();
    let m = samples.len();
    let mut sums = vec![0i64; n_pairs(n)];
    for config in samples.iter() {
        let mut k = 0;
        for i in 0..n {
            let si = config[i] as i64;
            for &sj in &config[i + 1..] {
                sums[k] += si * sj as i64;
                k += 1;
            }
        }
    }
    let scale = if m == 0 { 0.0 } else { 1.0 / m as f64 };
    CorrelationMatrix {
        n,
        values: sums.into_iter().map(|s| s as f64 * scale).collect(),
        mask: vec![true; n_pairs(n)],
    }
}

/// `−ln Σ_x sqrt(p(x) q(x))`. Disjoint supports give [`BHATTACHARYYA_SATURATED`].
pub fn bhattacharyya(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Domain(format!(
            "distributions of size {} and {}",
            p.len(),
            q.len()
        )));
    }
    for (name, d) in [("p", p), ("q", q)] {
        if d.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Domain(format!("{name} has negative or NaN entries")));
        }
        let total: f64 = d.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("{name} sums to {total}")));
        }
    }
    let bc: f64 = p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum();
    if bc <= 0.0 {
        return Ok(BHATTACHARYYA_SATURATED);
    }
    Ok((-bc.ln()).max(0.0))
}

/// Pearson correlation between two vectors.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::UndefinedMetric("need two equal-length vectors of length ≥ 2".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedMetric("zero-variance error vector".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation between the error vectors `c_A − c̃` and `c_B − c̃`.
pub fn error_correlation_coefficient(
    c_a: &CorrelationMatrix,
    c_b: &CorrelationMatrix,
    c_tilde: &CorrelationMatrix,
) -> Result<f64> {
    c_a.check_compatible(c_tilde)?;
    c_b.check_compatible(c_tilde)?;
    let t = c_tilde.masked_values();
    let ea: Vec<f64> = c_a.masked_values().iter().zip(&t).map(|(x, y)| x - y).collect();
    let eb: Vec<f64> = c_b.masked_values().iter().zip(&t).map(|(x, y)| x - y).collect();
    pearson(&ea, &eb)
}

/// Sample median; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("median of an empty list".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let f = pos - lo as f64;
    sorted[lo] + f * (sorted[hi] - sorted[lo])
}

/// Median with a percentile-bootstrap confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianCi {
    pub median: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Sample median and 95% percentile-bootstrap interval from `n_boot`
/// resamples. The interval is widened to contain the sample median if needed.
pub fn ensemble_median_with_ci(values: &[f64], n_boot: usize, seed: u64) -> Result<MedianCi> {
    ensemble_median_with_level(values, n_boot, seed, 0.95)
}

pub fn ensemble_median_with_level(
    values: &[f64],
    n_boot: usize,
    seed: u64,
    level: f64,
) -> Result<MedianCi> {
    let med = median(values)?;
    if values.len() == 1 || n_boot == 0 {
        return Ok(MedianCi {
            median: med,
            lo: med,
            hi: med,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = values.len();
    let mut resample = vec![0.0; n];
    let mut medians = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        for slot in resample.iter_mut() {
            *slot = values[rng.random_range(0..n)];
        }
        medians.push(median(&resample)?);
    }
    medians.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    Ok(MedianCi {
        median: med,
        lo: quantile_sorted(&medians, tail).min(med),
        hi: quantile_sorted(&medians, 1.0 - tail).max(med),
    })
}

/// Mean of `q²` over consecutive disjoint sample pairs `(0,1), (2,3), …`,
/// with `q = (1/N) Σ_i s_i⁽¹⁾ s_i⁽²⁾`.
pub fn overlap_qsquared(samples: &SampleSet) -> Result<f64> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::Domain(format!("need at least two samples, got {m}")));
    }
    let n = samples.n_spins() as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for k in 0..m / 2 {
        let (a, b) = (samples.get(2 * k), samples.get(2 * k + 1));
        let dot: i64 = a.iter().zip(b).map(|(&x, &y)| (x as i64) * (y as i64)).sum();
        let q = dot as f64 / n;
        total += q * q;
        count += 1;
    }
    Ok(total / count as f64)
}

/// Ensemble cell label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellLabel {
    pub geometry: String,
    pub distribution: String,
    pub t_a: f64,
    pub method: String,
    pub chi: Option<usize>,
    pub l_max: Option<usize>,
}

/// Per-instance errors of one cell with their median and bootstrap interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub cell: CellLabel,
    pub per_instance_errors: Vec<f64>,
    pub median: f64,
    pub ci95: (f64, f64),
}

/// Column header of [`EnsembleRecord::to_rows`].
pub const ENSEMBLE_TABLE_HEADER: &str =
    "geometry,distribution,t_a,method,chi,l_max,row,value,ci_lo,ci_hi";

impl EnsembleRecord {
    pub fn new(cell: CellLabel, errors: Vec<f64>, n_boot: usize, seed: u64) -> Result<Self> {
        let ci = ensemble_median_with_ci(&errors, n_boot, seed)?;
        Ok(Self {
            cell,
            per_instance_errors: errors,
            median: ci.median,
            ci95: (ci.lo, ci.hi),
        })
    }

    /// Flat table rows (no header): one per instance, then a `median` row.
    pub fn to_rows(&self) -> String {
        let c = &self.cell;
        let opt = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
        let prefix = format!(
            "{},{},{:?},{},{},{}",
            c.geometry,
            c.distribution,
            c.t_a,
            c.method,
            opt(c.chi),
            opt(c.l_max)
        );
        let mut s = String::new();
        for (k, e) in self.per_instance_errors.iter().enumerate() {
            let _ = writeln!(s, "{prefix},{k},{e:?},,");
        }
        let _ = writeln!(
            s,
            "{prefix},median,{:?},{:?},{:?}",
            self.median, self.ci95.0, self.ci95.1
        );
        s
    }
}
