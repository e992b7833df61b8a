//! Error triangulation against an independent noisy reference.
//!
//! If method A and reference B make independent errors relative to an
//! unavailable ground truth, their squared errors add:
//! `ε_B^A ≈ sqrt(ε_A² + ε_B²)`. Given an estimate of `ε_B` this recovers `ε_A`.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution as _, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{sample_states, StateVector};
use crate::metrics::{median, sample_correlations, CorrelationMatrix};

/// Above this `|ρ|` between the two error vectors the independence
/// assumption behind triangulation is treated as violated.
pub const INDEPENDENCE_THRESHOLD: f64 = 0.2;

/// Measured cross-error and estimated reference error of one cell or instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangulationInput {
    pub eps_cross: f64,
    pub eps_ref_hat: f64,
}

impl TriangulationInput {
    pub fn new(eps_cross: f64, eps_ref_hat: f64) -> Result<Self> {
        for (name, v) in [("eps_cross", eps_cross), ("eps_ref_hat", eps_ref_hat)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        Ok(Self {
            eps_cross,
            eps_ref_hat,
        })
    }
}

/// Result of triangulation. The estimate is undefined when the reference
/// error exceeds the cross-error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Triangulated {
    Defined { value: f64 },
    IllDefined { deficit: f64 },
}

impl Triangulated {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Triangulated::Defined { value } => Some(value),
            Triangulated::IllDefined { .. } => None,
        }
    }

    pub fn is_defined(&self) -> bool {
        matches!(self, Triangulated::Defined { .. })
    }
}

impl fmt::Display for Triangulated {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Triangulated::Defined { value } => write!(f, "{value}"),
            Triangulated::IllDefined { .. } => f.write_str("ill-defined"),
        }
    }
}

/// `sqrt(ε_cross² − ε_ref²)`, or [`Triangulated::IllDefined`] carrying
/// `ε_ref² − ε_cross²` when that is positive.
pub fn triangulate_error(input: &TriangulationInput) -> Triangulated {
    let (x, y) = (input.eps_cross, input.eps_ref_hat);
    if x >= y {
        Triangulated::Defined {
            value: ((x - y) * (x + y)).sqrt(),
        }
    } else {
        Triangulated::IllDefined {
            deficit: (y - x) * (y + x),
        }
    }
}

/// Median over the defined estimates, with counts of both kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangulatedSummary {
    pub median: Option<f64>,
    pub n_defined: usize,
    pub n_ill_defined: usize,
}

pub fn summarize_triangulated(values: &[Triangulated]) -> TriangulatedSummary {
    let defined: Vec<f64> = values.iter().filter_map(Triangulated::value).collect();
    TriangulatedSummary {
        median: median(&defined).ok(),
        n_defined: defined.len(),
        n_ill_defined: values.len() - defined.len(),
    }
}

/// Reference error chosen for a target size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlugInReference {
    pub value: f64,
    /// Size the value was taken from.
    pub size: usize,
    /// Set when the value comes from another size, i.e. the reference error
    /// is assumed constant with system size.
    pub assumes_size_constancy: bool,
}

/// Median of the direct reference-vs-truth errors at `target_size`, or at the
/// largest size with data when the target has none.
pub fn plug_in_reference_error(
    records: &BTreeMap<usize, Vec<f64>>,
    target_size: usize,
) -> Result<PlugInReference> {
    if let Some(v) = records.get(&target_size).filter(|v| !v.is_empty()) {
        return Ok(PlugInReference {
            value: median(v)?,
            size: target_size,
            assumes_size_constancy: false,
        });
    }
    let (&size, v) = records
        .iter()
        .rev()
        .find(|(_, v)| !v.is_empty())
        .ok_or_else(|| Error::Domain("no reference-vs-truth errors at any size".into()))?;
    Ok(PlugInReference {
        value: median(v)?,
        size,
        assumes_size_constancy: true,
    })
}

/// Ensemble-median `⟨q²⟩` as a function of annealing time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub points: Vec<(f64, f64)>,
    pub monotone_hint: bool,
}

impl CalibrationCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Domain("a calibration curve needs at least two points".into()));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Domain(format!(
                    "annealing times must increase strictly, got {} then {}",
                    w[0].0, w[1].0
                )));
            }
        }
        for &(t, q) in &points {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Domain(format!("invalid annealing time {t}")));
            }
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::Domain(format!("median q² {q} outside [0, 1]")));
            }
        }
        let rising = points.windows(2).all(|w| w[1].1 >= w[0].1);
        let falling = points.windows(2).all(|w| w[1].1 <= w[0].1);
        Ok(Self {
            points,
            monotone_hint: rising || falling,
        })
    }
}

/// Calibrated model annealing times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Every crossing of the curve, scaled to the model time, in increasing order.
    pub candidates: Vec<f64>,
    /// More than one crossing was found.
    pub ambiguous: bool,
    /// The measured value lies outside the curve's range and the nearest end
    /// segment was extended.
    pub extrapolated: bool,
}

impl Calibration {
    /// The earliest crossing.
    pub fn value(&self) -> f64 {
        self.candidates[0]
    }
}

/// Invert the curve at `measured_q2` by piecewise-linear interpolation and
/// scale the crossing by `model_t_a / fixed_quench`.
pub fn calibrate_timescale(
    curve: &CalibrationCurve,
    measured_q2: f64,
    fixed_quench: f64,
    model_t_a: f64,
) -> Result<Calibration> {
    if !measured_q2.is_finite() {
        return Err(Error::Domain(format!("measured q² {measured_q2} is not finite")));
    }
    if !(fixed_quench > 0.0 && model_t_a > 0.0) {
        return Err(Error::Domain("annealing times must be positive".into()));
    }
    let pts = &curve.points;
    let mut raw: Vec<f64> = Vec::new();
    for w in pts.windows(2) {
        let ((t0, q0), (t1, q1)) = (w[0], w[1]);
        let (lo, hi) = (q0.min(q1), q0.max(q1));
        if measured_q2 < lo || measured_q2 > hi {
            continue;
        }
        if q0 == q1 {
            raw.push(t0);
            raw.push(t1);
        } else {
            raw.push(t0 + (measured_q2 - q0) / (q1 - q0) * (t1 - t0));
        }
    }
    let mut extrapolated = false;
    if raw.is_empty() {
        extrapolated = true;
        let last = pts.len() - 1;
        // extend whichever end segment points towards the measured value
        let ends = [(pts[0], pts[1]), (pts[last - 1], pts[last])];
        for ((t0, q0), (t1, q1)) in ends {
            if q0 != q1 {
                let t = t0 + (measured_q2 - q0) / (q1 - q0) * (t1 - t0);
                let outward = if (t0, q0) == pts[0] { t <= t0 } else { t >= t1 };
                if outward && t > 0.0 {
                    raw.push(t);
                }
            }
        }
        if raw.is_empty() {
            let nearest = pts
                .iter()
                .min_by(|a, b| (a.1 - measured_q2).abs().total_cmp(&(b.1 - measured_q2).abs()))
                .map_or(pts[0].0, |p| p.0);
            raw.push(nearest);
        }
    }
    raw.sort_by(f64::total_cmp);
    raw.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    let scale = model_t_a / fixed_quench;
    Ok(Calibration {
        ambiguous: raw.len() > 1,
        candidates: raw.into_iter().map(|t| t * scale).collect(),
        extrapolated,
    })
}

/// Noise model of the emulated reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noise {
    /// Sample estimate from `m` draws, element by element.
    FiniteSample { m: usize },
    /// Additive Gaussian noise of standard deviation `sigma`.
    Gaussian { sigma: f64 },
    /// Finite-sample noise followed by Gaussian noise.
    Mixed { m: usize, sigma: f64 },
}

impl Noise {
    fn validate(&self) -> Result<()> {
        let (m, sigma) = match *self {
            Noise::FiniteSample { m } => (Some(m), None),
            Noise::Gaussian { sigma } => (None, Some(sigma)),
            Noise::Mixed { m, sigma } => (Some(m), Some(sigma)),
        };
        if m == Some(0) {
            return Err(Error::Domain("sample count must be positive".into()));
        }
        if let Some(s) = sigma {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Domain(format!("noise sigma must be nonnegative, got {s}")));
            }
        }
        Ok(())
    }
}

/// Perturb every populated entry of `c_tilde` independently. Finite-sample
/// noise replaces an entry `c` by the mean of `m` products `±1` drawn with
/// `P(+1) = (1 + c) / 2`. Output entries are clipped to `[-1, 1]`.
pub fn emulate_noisy_reference(c_tilde: &CorrelationMatrix, noise: Noise, seed: u64) -> Result<CorrelationMatrix> {
    c_tilde.validate()?;
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = c_tilde.clone();
    let n = c_tilde.n_spins();
    for i in 0..n {
        for j in i + 1..n {
            if !c_tilde.is_populated(i, j) {
                continue;
            }
            let mut v = c_tilde.get(i, j).clamp(-1.0, 1.0);
            if let Noise::FiniteSample { m } | Noise::Mixed { m, .. } = noise {
                let p = (1.0 + v) / 2.0;
                let k = Binomial::new(m as u64, p)
                    .map_err(|e| Error::Domain(e.to_string()))?
                    .sample(&mut rng);
                v = 2.0 * k as f64 / m as f64 - 1.0;
            }
            if let Noise::Gaussian { sigma } | Noise::Mixed { sigma, .. } = noise {
                if sigma > 0.0 {
                    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Domain(e.to_string()))?;
                    v += normal.sample(&mut rng);
                }
            }
            out.set(i, j, v.clamp(-1.0, 1.0));
        }
    }
    Ok(out)
}

/// Sample correlations of `m` configurations drawn from a statevector, the
/// finite-sample reference when the full state is available.
pub fn sampled_reference(state: &StateVector, m: usize, seed: u64) -> Result<CorrelationMatrix> {
    if m == 0 {
        return Err(Error::Domain("sample count must be positive".into()));
    }
    Ok(sample_correlations(&sample_states(state, m, seed)?))
}

/// Whether `|ρ|` between the two error vectors exceeds [`INDEPENDENCE_THRESHOLD`].
pub fn independence_violated(rho: f64) -> bool {
    rho.abs() > INDEPENDENCE_THRESHOLD
}

/// Caveats attached to a triangulated estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriangulationFlag {
    /// The reference error exceeds the cross-error.
    IllDefined,
    /// The error vectors are correlated beyond the independence threshold.
    CorrelatedErrors,
    /// The error correlation could not be checked.
    UncheckedIndependence,
    /// The reference error was borrowed from another system size.
    AssumedSizeConstancy,
}

impl TriangulationFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            TriangulationFlag::IllDefined => "ill_defined",
            TriangulationFlag::CorrelatedErrors => "correlated_errors",
            TriangulationFlag::UncheckedIndependence => "unchecked_independence",
            TriangulationFlag::AssumedSizeConstancy => "assumed_size_constancy",
        }
    }
}

/// One row of the triangulation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangulationRow {
    pub cell: String,
    pub eps_cross: f64,
    pub eps_ref_hat: f64,
    pub eps_hat: Triangulated,
    pub rho: Option<f64>,
    pub flags: Vec<TriangulationFlag>,
}

impl TriangulationRow {
    pub fn new(
        cell: impl Into<String>,
        input: TriangulationInput,
        rho: Option<f64>,
        assumes_size_constancy: bool,
    ) -> Self {
        let eps_hat = triangulate_error(&input);
        let mut flags = Vec::new();
        if !eps_hat.is_defined() {
            flags.push(TriangulationFlag::IllDefined);
        }
        match rho {
            Some(r) if independence_violated(r) => flags.push(TriangulationFlag::CorrelatedErrors),
            Some(_) => {}
            None => flags.push(TriangulationFlag::UncheckedIndependence),
        }
        if assumes_size_constancy {
            flags.push(TriangulationFlag::AssumedSizeConstancy);
        }
        Self {
            cell: cell.into(),
            eps_cross: input.eps_cross,
            eps_ref_hat: input.eps_ref_hat,
            eps_hat,
            rho,
            flags,
        }
    }

    pub fn is_trusted(&self) -> bool {
        self.flags.is_empty()
    }
}

pub const TRIANGULATION_TABLE_HEADER: &str = "cell,eps_cross,eps_ref_hat,eps_hat,rho,flags";

/// Comma-separated table with [`TRIANGULATION_TABLE_HEADER`]; flags are
/// joined with `;` and an unknown `rho` is left empty.
pub fn triangulation_table(rows: &[TriangulationRow]) -> String {
    let mut out = String::from(TRIANGULATION_TABLE_HEADER);
    out.push('\n');
    for r in rows {
        let rho = r.rho.map(|v| v.to_string()).unwrap_or_default();
        let flags: Vec<&str> = r.flags.iter().map(TriangulationFlag::as_str).collect();
        out += &format!(
            "{},{},{},{},{},{}\n",
            r.cell,
            r.eps_cross,
            r.eps_ref_hat,
            r.eps_hat,
            rho,
            flags.join(";")
        );
    }
    out
}

/// Planted error vectors for validating triangulation: `n_pairs` entries
/// with standard deviations `sigma_a`, `sigma_b` and correlation `rho`.
pub fn planted_error_vectors(
    n_pairs: usize,
    sigma_a: f64,
    sigma_b: f64,
    rho: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!("correlation {rho} outside [-1, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
    let orth = (1.0 - rho * rho).sqrt();
    let mut a = Vec::with_capacity(n_pairs);
    let mut b = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let (x, y): (f64, f64) = (normal.sample(&mut rng), normal.sample(&mut rng));
        a.push(sigma_a * x);
        b.push(sigma_b * (rho * x + orth * y));
    }
    Ok((a, b))
}

/// Ground-truth correlations with entries uniform in `[-amplitude, amplitude]`.
pub fn random_correlations(n_spins: usize, amplitude: f64, seed: u64) -> CorrelationMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CorrelationMatrix::from_fn(n_spins, |_, _| amplitude * (2.0 * rng.random::<f64>() - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{epsilon_c, error_correlation_coefficient};
    use proptest::prelude::*;

    fn tri(x: f64, y: f64) -> Triangulated {
        triangulate_error(&TriangulationInput::new(x, y).unwrap())
    }

    #[test]
    fn pythagorean_triple() {
        assert_eq!(tri(5.0, 3.0), Triangulated::Defined { value: 4.0 });
        assert_eq!(tri(0.7, 0.0).value(), Some(0.7));
        assert_eq!(tri(0.3, 0.3).value(), Some(0.0));
    }

    #[test]
    fn reference_worse_than_cross_error_is_marked() {
        let t = tri(3.0, 5.0);
        assert_eq!(t, Triangulated::IllDefined { deficit: 16.0 });
        assert_eq!(t.to_string(), "ill-defined");
        let s = summarize_triangulated(&[t, tri(5.0, 3.0), tri(5.0, 4.0)]);
        assert_eq!(s.n_ill_defined, 1);
        assert_eq!(s.n_defined, 2);
        assert_eq!(s.median, Some(3.5));
    }

    #[test]
    fn negative_inputs_are_rejected() {
        assert!(TriangulationInput::new(-1.0, 0.0).is_err());
        assert!(TriangulationInput::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn plug_in_prefers_the_target_size() {
        let mut r = BTreeMap::new();
        r.insert(2, vec![0.1, 0.3, 0.2]);
        r.insert(3, vec![0.4, 0.5]);
        let direct = plug_in_reference_error(&r, 2).unwrap();
        assert_eq!(direct.value, 0.2);
        assert!(!direct.assumes_size_constancy);
        let borrowed = plug_in_reference_error(&r, 4).unwrap();
        assert_eq!(borrowed.size, 3);
        assert_eq!(borrowed.value, 0.45);
        assert!(borrowed.assumes_size_constancy);
        let mut single = BTreeMap::new();
        single.insert(5, vec![0.125]);
        assert_eq!(plug_in_reference_error(&single, 5).unwrap().value, 0.125);
        assert!(plug_in_reference_error(&BTreeMap::new(), 2).is_err());
        let mut empty = BTreeMap::new();
        empty.insert(2, Vec::new());
        assert!(plug_in_reference_error(&empty, 2).is_err());
    }

    #[test]
    fn calibration_interpolates_linearly() {
        let curve = CalibrationCurve::new(vec![(5.0, 0.2), (10.0, 0.4)]).unwrap();
        let c = calibrate_timescale(&curve, 0.3, 5.0, 5.0).unwrap();
        assert!((c.value() - 7.5).abs() < 1e-12);
        assert!(!c.ambiguous && !c.extrapolated);
        let scaled = calibrate_timescale(&curve, 0.3, 5.0, 10.0).unwrap();
        assert!((scaled.value() - 15.0).abs() < 1e-12);
        assert_eq!(calibrate_timescale(&curve, 0.4, 5.0, 5.0).unwrap().candidates, vec![10.0]);
    }

    #[test]
    fn calibration_reports_every_crossing() {
        let curve = CalibrationCurve::new(vec![(1.0, 0.1), (2.0, 0.5), (3.0, 0.3), (4.0, 0.6)]).unwrap();
        assert!(!curve.monotone_hint);
        let c = calibrate_timescale(&curve, 0.4, 1.0, 1.0).unwrap();
        assert!(c.ambiguous);
        assert_eq!(c.candidates.len(), 3);
        for (got, want) in c.candidates.iter().zip([1.75, 2.5, 10.0 / 3.0]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn calibration_outside_the_range_extrapolates() {
        let curve = CalibrationCurve::new(vec![(5.0, 0.2), (10.0, 0.4), (20.0, 0.5)]).unwrap();
        let hi = calibrate_timescale(&curve, 0.6, 5.0, 5.0).unwrap();
        assert!(hi.extrapolated);
        assert!((hi.value() - 30.0).abs() < 1e-12);
        let lo = calibrate_timescale(&curve, 0.1, 5.0, 5.0).unwrap();
        assert!(lo.extrapolated);
        assert!((lo.value() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn calibration_curve_is_validated() {
        assert!(CalibrationCurve::new(vec![(5.0, 0.2)]).is_err());
        assert!(CalibrationCurve::new(vec![(5.0, 0.2), (5.0, 0.3)]).is_err());
        assert!(CalibrationCurve::new(vec![(5.0, 0.2), (6.0, 1.3)]).is_err());
    }

    #[test]
    fn zero_noise_is_the_identity() {
        let c = random_correlations(12, 0.8, 1);
        let out = emulate_noisy_reference(&c, Noise::Gaussian { sigma: 0.0 }, 9).unwrap();
        assert_eq!(out, c);
    }

    #[test]
    fn gaussian_noise_sets_the_expected_error() {
        let c = random_correlations(120, 0.5, 2);
        let sigma = 0.01;
        let out = emulate_noisy_reference(&c, Noise::Gaussian { sigma }, 3).unwrap();
        let p = c.n_pairs() as f64;
        let norm2: f64 = c.packed().iter().map(|x| x * x).sum();
        let expected = sigma * (p / norm2).sqrt();
        let eps = epsilon_c(&out, &c).unwrap();
        assert!((eps / expected - 1.0).abs() < 0.05, "{eps} vs {expected}");
    }

    #[test]
    fn finite_sample_noise_scales_with_sample_count() {
        let c = random_correlations(60, 0.6, 4);
        let coarse = emulate_noisy_reference(&c, Noise::FiniteSample { m: 100 }, 5).unwrap();
        let fine = emulate_noisy_reference(&c, Noise::FiniteSample { m: 10_000 }, 5).unwrap();
        let ratio = epsilon_c(&coarse, &c).unwrap() / epsilon_c(&fine, &c).unwrap();
        assert!((ratio - 10.0).abs() < 1.5, "ratio {ratio}");
        assert!(coarse.packed().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn independent_seeds_give_uncorrelated_errors() {
        let c = random_correlations(80, 0.5, 6);
        let a = emulate_noisy_reference(&c, Noise::Mixed { m: 1000, sigma: 0.02 }, 7).unwrap();
        let b = emulate_noisy_reference(&c, Noise::Mixed { m: 1000, sigma: 0.02 }, 8).unwrap();
        let rho = error_correlation_coefficient(&a, &b, &c).unwrap();
        assert!(rho.abs() <= 0.1, "rho {rho}");
        let again = emulate_noisy_reference(&c, Noise::Mixed { m: 1000, sigma: 0.02 }, 7).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn masked_pairs_stay_empty() {
        let c = random_correlations(6, 0.5, 1).with_pair_mask(&[(0, 1), (2, 5)]);
        let out = emulate_noisy_reference(&c, Noise::Gaussian { sigma: 0.1 }, 1).unwrap();
        assert_eq!(out.mask(), c.mask());
        assert_eq!(out.get(0, 2), 0.0);
    }

    #[test]
    fn report_table_lists_flags() {
        let rows = vec![
            TriangulationRow::new("square/L3/ta7", TriangulationInput::new(5.0, 3.0).unwrap(), Some(0.07), false),
            TriangulationRow::new("square/L4/ta7", TriangulationInput::new(2.0, 3.0).unwrap(), Some(-0.5), true),
            TriangulationRow::new("square/L5/ta7", TriangulationInput::new(2.0, 1.0).unwrap(), None, false),
        ];
        assert!(rows[0].is_trusted());
        let table = triangulation_table(&rows);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], TRIANGULATION_TABLE_HEADER);
        assert_eq!(lines[1], "square/L3/ta7,5,3,4,0.07,");
        assert_eq!(
            lines[2],
            "square/L4/ta7,2,3,ill-defined,-0.5,ill_defined;correlated_errors;assumed_size_constancy"
        );
        assert!(lines[3].ends_with(",,unchecked_independence"));
    }

    #[test]
    fn planted_vectors_have_the_requested_correlation() {
        let (a, b) = planted_error_vectors(20_000, 1.0, 2.0, -0.5, 3).unwrap();
        let rho = crate::metrics::pearson(&a, &b).unwrap();
        assert!((rho + 0.5).abs() < 0.02, "rho {rho}");
        assert!(independence_violated(rho));
        assert!(!independence_violated(0.07));
    }

    proptest! {
        #[test]
        fn triangulation_inverts_the_quadrature_sum(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let x = a.hypot(b);
            let got = tri(x, b).value().unwrap_or(0.0);
            // the rounding of the hypotenuse limits the recoverable precision of small legs
            let tol = 1e-12_f64.max(4.0 * f64::EPSILON * x * x / a.max(1e-300));
            prop_assert!((got - a).abs() <= tol, "{} vs {}", got, a);
        }

        #[test]
        fn plug_in_returns_an_order_statistic_or_midpoint(
            values in proptest::collection::vec(0.0f64..1.0, 1..20),
            target in 1usize..6,
        ) {
            let mut r = BTreeMap::new();
            r.insert(3, values.clone());
            let v = plug_in_reference_error(&r, target).unwrap().value;
            let mut s = values.clone();
            s.sort_by(f64::total_cmp);
            let n = s.len();
            let mid = if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) };
            prop_assert_eq!(v, mid);
        }

        #[test]
        fn emulated_entries_stay_in_range(seed in 0u64..1000, sigma in 0.0f64..2.0) {
            let c = random_correlations(8, 1.0, seed);
            let out = emulate_noisy_reference(&c, Noise::Mixed { m: 50, sigma }, seed).unwrap();
            prop_assert!(out.packed().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}
