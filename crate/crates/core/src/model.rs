//! Annealing schedule and the time-dependent Hamiltonian
//! `H(s) = Γ(s) Σ σˣ + J(s) α Σ J_ij σᶻσᶻ`.
//!
//! Energies are angular frequencies in rad/ns and times are in ns, so a
//! Trotter factor is `exp(-i · coefficient · dt)`. Schedule files may declare
//! GHz instead; those values are multiplied by 2π on load.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{parse_err, Error, Result};
use crate::graphs::SpinGlassInstance;

/// Default transverse-field scale of the synthetic schedule (rad/ns).
pub const DEFAULT_GAMMA0: f64 = 2.0 * PI;
/// Default problem-energy scale of the synthetic schedule (rad/ns).
pub const DEFAULT_J0: f64 = 2.0 * PI;
pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_S_END: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub s: f64,
    pub gamma: f64,
    pub j_scale: f64,
}

/// Piecewise-linear tabulated schedule over `s ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    rows: Vec<ScheduleRow>,
}

impl Schedule {
    pub fn new(rows: Vec<ScheduleRow>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::Config("schedule needs at least two rows".into()));
        }
        if rows.windows(2).any(|w| !(w[1].s > w[0].s)) {
            return Err(Error::Config("schedule s values must be strictly increasing".into()));
        }
        let (first, last) = (rows[0], rows[rows.len() - 1]);
        if first.s != 0.0 || last.s != 1.0 {
            return Err(Error::Config("schedule must span s = 0 to s = 1".into()));
        }
        if !(first.gamma > 0.0) {
            return Err(Error::Config("Gamma(0) must be positive".into()));
        }
        if !(first.j_scale >= 0.0) {
            return Err(Error::Config("J(0) must be nonnegative".into()));
        }
        if rows.windows(2).any(|w| w[1].gamma > w[0].gamma) {
            return Err(Error::Config("Gamma must be nonincreasing".into()));
        }
        if rows.windows(2).any(|w| w[1].j_scale < w[0].j_scale) {
            return Err(Error::Config("J must be nondecreasing".into()));
        }
        if rows.iter().any(|r| !r.gamma.is_finite() || !r.j_scale.is_finite()) {
            return Err(Error::Config("schedule values must be finite".into()));
        }
        Ok(Self { rows })
    }

    /// `Γ(s) = Γ₀(1 − s)`, `J(s) = J₀ s`.
    pub fn synthetic(gamma0: f64, j0: f64) -> Result<Self> {
        Self::new(vec![
            ScheduleRow {
                s: 0.0,
                gamma: gamma0,
                j_scale: 0.0,
            },
            ScheduleRow {
                s: 1.0,
                gamma: 0.0,
                j_scale: j0,
            },
        ])
    }

    pub fn rows(&self) -> &[ScheduleRow] {
        &self.rows
    }

    /// `(Γ(s), J(s))` by linear interpolation between tabulated rows.
    pub fn at(&self, s: f64) -> Result<(f64, f64)> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Domain(format!("schedule evaluated at s = {s}")));
        }
        let k = self.rows.partition_point(|r| r.s <= s);
        if k == 0 {
            let r = self.rows[0];
            return Ok((r.gamma, r.j_scale));
        }
        let lo = self.rows[k - 1];
        if lo.s == s || k == self.rows.len() {
            return Ok((lo.gamma, lo.j_scale));
        }
        let hi = self.rows[k];
        let f = (s - lo.s) / (hi.s - lo.s);
        Ok((
            lo.gamma + f * (hi.gamma - lo.gamma),
            lo.j_scale + f * (hi.j_scale - lo.j_scale),
        ))
    }

    /// Versioned text table in rad/ns.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# crosssim-schedule v1\nunits rad_per_ns\ns Gamma J_scale\n");
        for r in &self.rows {
            let _ = writeln!(out, "{:?} {:?} {:?}", r.s, r.gamma, r.j_scale);
        }
        out
    }

    /// Parse a schedule table. The `units` line is `rad_per_ns` or `ghz`.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        match lines.next() {
            Some((_, "# crosssim-schedule v1")) => {}
            Some((ln, other)) => return Err(parse_err(ln, format!("unsupported header `{other}`"))),
            None => return Err(parse_err(1, "empty schedule")),
        }
        let scale = match lines.next() {
            Some((_, "units rad_per_ns")) => 1.0,
            Some((_, "units ghz")) => 2.0 * PI,
            Some((ln, other)) => return Err(parse_err(ln, format!("bad units line `{other}`"))),
            None => return Err(parse_err(2, "missing units line")),
        };
        match lines.next() {
            Some((_, "s Gamma J_scale")) => {}
            Some((ln, other)) => return Err(parse_err(ln, format!("bad column line `{other}`"))),
            None => return Err(parse_err(3, "missing column line")),
        }
        let mut rows = Vec::new();
        for (ln, line) in lines {
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(ln, "expected three numbers"))?;
            let [s, gamma, j_scale] = vals[..] else {
                return Err(parse_err(ln, "expected three numbers"));
            };
            rows.push(ScheduleRow {
                s,
                gamma: gamma * scale,
                j_scale: j_scale * scale,
            });
        }
        Self::new(rows)
    }
}

impl Default for Schedule {
    fn default() -> Self {
        Self::synthetic(DEFAULT_GAMMA0, DEFAULT_J0).expect("default schedule is valid")
    }
}

/// `(Γ(s), J(s))`; see [`Schedule::at`].
pub fn schedule_at(schedule: &Schedule, s: f64) -> Result<(f64, f64)> {
    schedule.at(s)
}

/// Quench parameters: duration, Trotter step, end point and energy scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchSpec {
    /// Quench duration in ns; `s(t) = t / t_a`.
    pub t_a: f64,
    /// Trotter step in ns.
    pub dt: f64,
    /// Evolution stops at `s = s_end`.
    pub s_end: f64,
    /// Multiplier on the problem Hamiltonian.
    pub alpha: f64,
    pub schedule: Schedule,
}

/// One second-order Trotter step, with the schedule evaluated at its midpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrotterStep {
    pub index: usize,
    pub s_mid: f64,
    pub duration: f64,
    pub gamma: f64,
    /// `J(s_mid) · α`.
    pub zz_scale: f64,
}

impl QuenchSpec {
    pub fn new(t_a: f64) -> Self {
        Self {
            t_a,
            dt: DEFAULT_DT,
            s_end: DEFAULT_S_END,
            alpha: 1.0,
            schedule: Schedule::default(),
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_s_end(mut self, s_end: f64) -> Self {
        self.s_end = s_end;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_a > 0.0) || self.dt > self.t_a {
            return Err(Error::Config(format!(
                "need 0 < dt <= t_a, got dt = {}, t_a = {}",
                self.dt, self.t_a
            )));
        }
        if !(self.s_end > 0.0 && self.s_end <= 1.0) {
            return Err(Error::Config(format!("s_end must lie in (0, 1], got {}", self.s_end)));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Total evolution time `t_a · s_end`.
    pub fn total_time(&self) -> f64 {
        self.t_a * self.s_end
    }

    /// Number of Trotter steps; the last one is shortened when `dt` does not
    /// divide the total time.
    pub fn n_steps(&self) -> usize {
        let ratio = self.total_time() / self.dt;
        let rounded = ratio.round();
        if (ratio - rounded).abs() < 1e-9 * ratio.max(1.0) {
            (rounded as usize).max(1)
        } else {
            ratio.ceil() as usize
        }
    }

    /// The Trotter steps in order.
    pub fn steps(&self) -> Result<Vec<TrotterStep>> {
        self.validate()?;
        let total = self.total_time();
        let n = self.n_steps();
        (0..n)
            .map(|k| {
                let start = k as f64 * self.dt;
                let end = if k + 1 == n {
                    total
                } else {
                    (k + 1) as f64 * self.dt
                };
                let s_mid = (0.5 * (start + end) / self.t_a).clamp(0.0, 1.0);
                let (gamma, j) = self.schedule.at(s_mid)?;
                Ok(TrotterStep {
                    index: k,
                    s_mid,
                    duration: end - start,
                    gamma,
                    zz_scale: j * self.alpha,
                })
            })
            .collect()
    }

    /// SHA-256 over the JSON encoding.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Coefficients of `H(s)` for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianTerms {
    /// `Γ(s)` for every physical spin.
    pub x_fields: Vec<f64>,
    /// `(i, j, J(s)·α·J_ij)` for every coupling, intra-dimer included.
    pub zz_terms: Vec<(usize, usize, f64)>,
}

impl HamiltonianTerms {
    pub fn n_terms(&self) -> usize {
        self.x_fields.len() + self.zz_terms.len()
    }
}

pub fn build_hamiltonian_terms(
    instance: &SpinGlassInstance,
    s: f64,
    spec: &QuenchSpec,
) -> Result<HamiltonianTerms> {
    let (gamma, j) = spec.schedule.at(s)?;
    let scale = j * spec.alpha;
    Ok(HamiltonianTerms {
        x_fields: vec![gamma; instance.n_spins()],
        zz_terms: instance
            .spin_couplings()
            .into_iter()
            .map(|c| (c.i, c.j, scale * c.j_ij))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{build_cubic_dimer_lattice, sample_couplings, Distribution};
    use crate::graphs::{Coupling, DimerAttachment, LatticeGraph};

    fn table() -> Schedule {
        Schedule::new(vec![
            ScheduleRow { s: 0.0, gamma: 5.0, j_scale: 0.0 },
            ScheduleRow { s: 0.25, gamma: 1.0, j_scale: 2.0 },
            ScheduleRow { s: 0.75, gamma: 1.0, j_scale: 4.0 },
            ScheduleRow { s: 1.0, gamma: 0.0, j_scale: 4.0 },
        ])
        .unwrap()
    }

    #[test]
    fn interpolation() {
        let sch = table();
        assert_eq!(sch.at(0.25).unwrap(), (1.0, 2.0));
        assert_eq!(sch.at(1.0).unwrap(), (0.0, 4.0));
        assert_eq!(sch.at(0.5).unwrap(), (1.0, 3.0));
        assert_eq!(sch.at(0.125).unwrap(), (3.0, 1.0));
        assert!(matches!(sch.at(1.5), Err(Error::Domain(_))));
        assert!(matches!(sch.at(-0.1), Err(Error::Domain(_))));
        let (_, j0) = Schedule::default().at(0.0).unwrap();
        assert_eq!(j0, 0.0);
    }

    #[test]
    fn rejects_bad_tables() {
        let bad = |rows: Vec<(f64, f64, f64)>| {
            Schedule::new(
                rows.into_iter()
                    .map(|(s, gamma, j_scale)| ScheduleRow { s, gamma, j_scale })
                    .collect(),
            )
            .is_err()
        };
        assert!(bad(vec![(0.0, 1.0, 0.0), (0.5, 1.0, 0.0), (0.5, 0.0, 1.0), (1.0, 0.0, 1.0)]));
        assert!(bad(vec![(0.0, 0.0, 0.0), (1.0, 0.0, 1.0)]));
        assert!(bad(vec![(0.0, 1.0, 0.0), (1.0, 2.0, 1.0)]));
        assert!(bad(vec![(0.0, 1.0, 1.0), (1.0, 0.0, 0.5)]));
        assert!(bad(vec![(0.1, 1.0, 0.0), (1.0, 0.0, 1.0)]));
    }

    #[test]
    fn text_round_trip_and_units() {
        let sch = table();
        assert_eq!(Schedule::from_text(&sch.to_text()).unwrap(), sch);
        let ghz = "# crosssim-schedule v1\nunits ghz\ns Gamma J_scale\n0 1 0\n1 0 1\n";
        let parsed = Schedule::from_text(ghz).unwrap();
        assert!((parsed.at(0.0).unwrap().0 - 2.0 * PI).abs() < 1e-15);
        let unsorted = "# crosssim-schedule v1\nunits ghz\ns Gamma J_scale\n0 1 0\n0.7 0.5 0.5\n0.6 0.4 0.6\n1 0 1\n";
        assert!(Schedule::from_text(unsorted).is_err());
    }

    #[test]
    fn quench_steps() {
        let spec = QuenchSpec::new(7.0);
        let steps = spec.steps().unwrap();
        assert_eq!(steps.len(), 420);
        let total: f64 = steps.iter().map(|s| s.duration).sum();
        assert!((total - 4.2).abs() < 1e-12);
        assert!((steps[0].s_mid - 0.005 / 7.0).abs() < 1e-15);

        let odd = QuenchSpec::new(1.0).with_dt(0.07).with_s_end(0.5);
        let steps = odd.steps().unwrap();
        assert_eq!(steps.len(), 8);
        assert!((steps[7].duration - 0.01).abs() < 1e-12);

        assert!(QuenchSpec::new(1.0).with_dt(0.0).validate().is_err());
        assert!(QuenchSpec::new(1.0).with_dt(-1.0).steps().is_err());
        assert!(QuenchSpec::new(1.0).with_alpha(0.0).validate().is_err());
    }

    #[test]
    fn hamiltonian_terms() {
        let g = build_cubic_dimer_lattice(2, false).unwrap();
        let inst = sample_couplings(&g, Distribution::Uniform, 4).unwrap();
        let spec = QuenchSpec::new(7.0);
        let h0 = build_hamiltonian_terms(&inst, 0.0, &spec).unwrap();
        assert_eq!(h0.n_terms(), 16 + 12 + 8);
        assert!(h0.zz_terms.iter().all(|t| t.2 == 0.0));

        let h1 = build_hamiltonian_terms(&inst, 0.4, &spec).unwrap();
        let h_half = build_hamiltonian_terms(&inst, 0.4, &spec.clone().with_alpha(0.5)).unwrap();
        assert_eq!(h1.x_fields, h_half.x_fields);
        for (a, b) in h1.zz_terms.iter().zip(&h_half.zz_terms) {
            assert_eq!(a.2 * 0.5, b.2);
        }

        let pair = LatticeGraph::from_edges(2, &[(0, 1)]).unwrap();
        let inst = SpinGlassInstance::from_couplings(
            pair,
            vec![Coupling::from_integer(1)],
            false,
            DimerAttachment::default(),
        )
        .unwrap();
        let spec = QuenchSpec::new(1.0).with_schedule(Schedule::synthetic(1.0, 4.0).unwrap());
        let h = build_hamiltonian_terms(&inst, 0.5, &spec).unwrap();
        assert_eq!(h.zz_terms, vec![(0, 1, 2.0)]);
    }
}
