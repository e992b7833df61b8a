//! Dense statevector evolution, exact observables and sampling.
//!
//! Basis index bit `k` holds spin `k`; a clear bit is `σᶻ = +1` and a set bit
//! is `σᶻ = −1`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{parse_err, Error, Result};
use crate::graphs::SpinGlassInstance;
use crate::metrics::{header_value, CorrelationMatrix, Provenance};
use crate::model::QuenchSpec;
use crate::C64;

/// Default largest statevector, in spins.
pub const DEFAULT_SPIN_CAP: usize = 24;

/// Below this many spins the amplitude loops run serially.
const PARALLEL_THRESHOLD: usize = 14;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<C64>,
    n_spins: usize,
}

fn check_cap(n_spins: usize, cap: usize) -> Result<()> {
    if n_spins > cap || n_spins >= usize::BITS as usize - 1 {
        return Err(Error::Capacity { n_spins, cap });
    }
    Ok(())
}

impl StateVector {
    /// Every spin in the `σˣ = −1` eigenstate `(|↑⟩ − |↓⟩)/√2`.
    pub fn paramagnet(n_spins: usize) -> Self {
        let dim = 1usize << n_spins;
        let norm = (dim as f64).sqrt().recip();
        let amplitudes = (0..dim)
            .map(|x: usize| {
                let sign = if x.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                C64::new(sign * norm, 0.0)
            })
            .collect();
        Self {
            amplitudes,
            n_spins,
        }
    }

    /// Computational basis state for a `±1` configuration.
    pub fn basis(config: &[i8]) -> Result<Self> {
        let n = config.len();
        let mut index = 0usize;
        for (k, &s) in config.iter().enumerate() {
            match s {
                1 => {}
                -1 => index |= 1 << k,
                _ => return Err(Error::Domain(format!("spin value {s} is not ±1"))),
            }
        }
        let mut amplitudes = vec![C64::new(0.0, 0.0); 1 << n];
        amplitudes[index] = C64::new(1.0, 0.0);
        Ok(Self {
            amplitudes,
            n_spins: n,
        })
    }

    /// State from raw amplitudes, normalized.
    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Result<Self> {
        let dim = amplitudes.len();
        if !dim.is_power_of_two() {
            return Err(Error::InvalidSize(format!("{dim} amplitudes is not a power of two")));
        }
        let mut out = Self {
            n_spins: dim.trailing_zeros() as usize,
            amplitudes,
        };
        if !(out.norm() > 0.0) {
            return Err(Error::Domain("zero state".into()));
        }
        out.normalize();
        Ok(out)
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            let inv = 1.0 / n;
            self.amplitudes.iter_mut().for_each(|a| *a *= inv);
        }
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    fn parallel(&self) -> bool {
        self.n_spins >= PARALLEL_THRESHOLD
    }

    /// Apply `exp(−iθσˣ)` to `spin`.
    pub fn apply_x_rotation(&mut self, spin: usize, theta: f64) {
        assert!(spin < self.n_spins, "spin {spin} out of range");
        let (c, s) = (theta.cos(), theta.sin());
        let ms = C64::new(0.0, -s);
        let stride = 1usize << spin;
        let kernel = |block: &mut [C64]| {
            let (lo, hi) = block.split_at_mut(stride);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x * c + y * ms;
                *b = x * ms + y * c;
            }
        };
        if self.parallel() {
            self.amplitudes.par_chunks_mut(2 * stride).for_each(kernel);
        } else {
            self.amplitudes.chunks_mut(2 * stride).for_each(kernel);
        }
    }

    /// Apply `exp(−iθ σᶻ_i σᶻ_j)`.
    pub fn apply_zz_phase(&mut self, i: usize, j: usize, theta: f64) {
        assert!(i < self.n_spins && j < self.n_spins && i != j, "bad pair ({i}, {j})");
        let same = C64::from_polar(1.0, -theta);
        let diff = C64::from_polar(1.0, theta);
        let kernel = |(x, a): (usize, &mut C64)| {
            if ((x >> i) ^ (x >> j)) & 1 == 0 {
                *a *= same;
            } else {
                *a *= diff;
            }
        };
        if self.parallel() {
            self.amplitudes.par_iter_mut().enumerate().for_each(kernel);
        } else {
            self.amplitudes.iter_mut().enumerate().for_each(kernel);
        }
    }

    /// Basis-state probabilities `|a_x|²`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `⟨σᶻ_i⟩` for every spin.
    pub fn magnetizations(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_spins];
        for (x, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            for (k, mk) in m.iter_mut().enumerate() {
                if (x >> k) & 1 == 0 {
                    *mk += p;
                } else {
                    *mk -= p;
                }
            }
        }
        m
    }

    /// `⟨σˣ_k⟩`.
    pub fn expectation_x(&self, spin: usize) -> f64 {
        let bit = 1usize << spin;
        let mut acc = 0.0;
        for (x, a) in self.amplitudes.iter().enumerate() {
            if x & bit == 0 {
                acc += 2.0 * (a.conj() * self.amplitudes[x | bit]).re;
            }
        }
        acc
    }
}

/// Options for [`trotter_evolve_exact_with`].
#[derive(Debug, Clone, Default)]
pub struct ExactOptions {
    /// Largest allowed spin count; `None` uses [`DEFAULT_SPIN_CAP`].
    pub spin_cap: Option<usize>,
    /// Order in which the `σᶻσᶻ` terms of a layer are applied, as indices
    /// into `instance.spin_couplings()`. `None` keeps natural order.
    pub zz_order: Option<Vec<usize>>,
}

/// Second-order Trotter evolution of the paramagnetic initial state.
pub fn trotter_evolve_exact(instance: &SpinGlassInstance, spec: &QuenchSpec) -> Result<StateVector> {
    trotter_evolve_exact_with(instance, spec, &ExactOptions::default())
}

pub fn trotter_evolve_exact_with(
    instance: &SpinGlassInstance,
    spec: &QuenchSpec,
    options: &ExactOptions,
) -> Result<StateVector> {
    let n = instance.n_spins();
    check_cap(n, options.spin_cap.unwrap_or(DEFAULT_SPIN_CAP))?;
    let steps = spec.steps()?;
    let couplings = instance.spin_couplings();
    let order: Vec<usize> = match &options.zz_order {
        Some(o) => {
            let mut sorted = o.clone();
            sorted.sort_unstable();
            if sorted != (0..couplings.len()).collect::<Vec<_>>() {
                return Err(Error::Config("zz_order is not a permutation of the couplings".into()));
            }
            o.clone()
        }
        None => (0..couplings.len()).collect(),
    };
    let mut state = StateVector::paramagnet(n);
    for step in &steps {
        let half = 0.5 * step.gamma * step.duration;
        for k in 0..n {
            state.apply_x_rotation(k, half);
        }
        for &t in &order {
            let c = couplings[t];
            state.apply_zz_phase(c.i, c.j, step.zz_scale * c.j_ij * step.duration);
        }
        for k in 0..n {
            state.apply_x_rotation(k, half);
        }
    }
    state.normalize();
    Ok(state)
}

/// Raw `⟨σᶻσᶻ⟩` or the connected part `⟨σᶻσᶻ⟩ − ⟨σᶻ⟩⟨σᶻ⟩`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    #[default]
    Raw,
    Connected,
}

/// `c_ij = ⟨σᶻ_i σᶻ_j⟩` for all pairs.
pub fn exact_correlations(state: &StateVector) -> CorrelationMatrix {
    exact_correlations_with(state, CorrelationKind::Raw)
}

pub fn exact_correlations_with(state: &StateVector, kind: CorrelationKind) -> CorrelationMatrix {
    let n = state.n_spins;
    let probs = state.probabilities();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let corr = |&(i, j): &(usize, usize)| -> f64 {
        probs
            .iter()
            .enumerate()
            .map(|(x, p)| if ((x >> i) ^ (x >> j)) & 1 == 0 { *p } else { -*p })
            .sum()
    };
    let raw: Vec<f64> = if state.parallel() {
        pairs.par_iter().map(corr).collect()
    } else {
        pairs.iter().map(corr).collect()
    };
    let values = match kind {
        CorrelationKind::Raw => raw,
        CorrelationKind::Connected => {
            let m = state.magnetizations();
            raw.iter()
                .zip(&pairs)
                .map(|(c, &(i, j))| c - m[i] * m[j])
                .collect()
        }
    };
    CorrelationMatrix::from_packed(n, values).expect("packed length matches")
}

/// Probability of every basis configuration, indexed as the amplitudes.
pub fn exact_distribution(state: &StateVector) -> Result<Vec<f64>> {
    exact_distribution_with_cap(state, DEFAULT_SPIN_CAP)
}

pub fn exact_distribution_with_cap(state: &StateVector, cap: usize) -> Result<Vec<f64>> {
    check_cap(state.n_spins, cap)?;
    let mut p = state.probabilities();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    Ok(p)
}

/// `±1` configuration of a basis index.
pub fn config_of_index(index: usize, n_spins: usize) -> Vec<i8> {
    (0..n_spins)
        .map(|k| if (index >> k) & 1 == 0 { 1 } else { -1 })
        .collect()
}

/// Where a sample set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    Exact,
    BptnsEmulated,
    External,
}

impl SampleSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::BptnsEmulated => "bptns_emulated",
            Self::External => "external",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "exact" => Some(Self::Exact),
            "bptns_emulated" => Some(Self::BptnsEmulated),
            "external" => Some(Self::External),
            _ => None,
        }
    }
}

/// `M` spin configurations stored row-major as `±1` bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    n_spins: usize,
    samples: Vec<i8>,
    pub seed: u64,
    pub source: SampleSource,
}

impl SampleSet {
    pub fn new(n_spins: usize, samples: Vec<i8>, seed: u64, source: SampleSource) -> Result<Self> {
        if n_spins == 0 || samples.len() % n_spins != 0 {
            return Err(Error::InvalidSize(format!(
                "{} entries do not split into configurations of {n_spins} spins",
                samples.len()
            )));
        }
        if samples.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::Domain("sample entries must be ±1".into()));
        }
        Ok(Self {
            n_spins,
            samples,
            seed,
            source,
        })
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    /// Number of configurations.
    pub fn len(&self) -> usize {
        self.samples.len() / self.n_spins
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, k: usize) -> &[i8] {
        &self.samples[k * self.n_spins..(k + 1) * self.n_spins]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[i8]> {
        self.samples.chunks_exact(self.n_spins)
    }

    /// Versioned text container: one configuration per line as `+`/`-`.
    pub fn to_text(&self, provenance: &Provenance) -> String {
        let mut s = String::from("# crosssim-samples v1\n");
        provenance.write_header(&mut s);
        let _ = writeln!(s, "source {}", self.source.as_str());
        let _ = writeln!(s, "n_spins {}", self.n_spins);
        let _ = writeln!(s, "samples {}", self.len());
        for config in self.iter() {
            s.extend(config.iter().map(|&v| if v > 0 { '+' } else { '-' }));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<(Self, Provenance)> {
        let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l.trim()));
        match lines.next() {
            Some((_, "# crosssim-samples v1")) => {}
            Some((ln, other)) => return Err(parse_err(ln, format!("unsupported header `{other}`"))),
            None => return Err(parse_err(1, "empty input")),
        }
        let provenance = Provenance::read_header(&mut lines)?;
        let source: String = header_value(&mut lines, "source")?;
        let source = SampleSource::parse(&source)
            .ok_or_else(|| parse_err(0, format!("unknown sample source `{source}`")))?;
        let n: usize = header_value(&mut lines, "n_spins")?;
        let m: usize = header_value(&mut lines, "samples")?;
        let mut samples = Vec::with_capacity(n * m);
        for (ln, line) in lines {
            if line.is_empty() {
                continue;
            }
            if line.chars().count() != n {
                return Err(parse_err(ln, format!("expected {n} spins")));
            }
            for ch in line.chars() {
                samples.push(match ch {
                    '+' => 1,
                    '-' => -1,
                    _ => return Err(parse_err(ln, format!("bad spin `{ch}`"))),
                });
            }
        }
        if samples.len() != n * m {
            return Err(parse_err(0, format!("expected {m} samples")));
        }
        let set = Self::new(n, samples, provenance.seed, source)?;
        Ok((set, provenance))
    }
}

/// Draw `m` i.i.d. configurations from `|amplitude|²`.
pub fn sample_states(state: &StateVector, m: usize, seed: u64) -> Result<SampleSet> {
    if m == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    let probs = exact_distribution_with_cap(state, usize::BITS as usize - 2)?;
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p;
        cdf.push(acc);
    }
    let last_nonzero = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = state.n_spins;
    let mut samples = Vec::with_capacity(m * n);
    for _ in 0..m {
        let u: f64 = rng.random::<f64>() * acc;
        let idx = cdf.partition_point(|&c| c <= u).min(last_nonzero);
        samples.extend(config_of_index(idx, n));
    }
    SampleSet::new(n.max(1), samples, seed, SampleSource::Exact)
}
