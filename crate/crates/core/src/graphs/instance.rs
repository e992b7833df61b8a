use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::lattice::{build_lattice, Boundary, LatticeGraph, LatticeKind};
use crate::error::{parse_err, Error, Result};

/// Denominator of every stored coupling.
pub const COUPLING_DENOMINATOR: i32 = 256;

/// Coupling stored as an exact rational `numerator / 256`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coupling(i32);

impl Coupling {
    pub const fn from_numerator(numerator: i32) -> Self {
        Coupling(numerator)
    }

    pub const fn from_integer(j: i32) -> Self {
        Coupling(j * COUPLING_DENOMINATOR)
    }

    pub fn numerator(&self) -> i32 {
        self.0
    }

    pub fn value(&self) -> f64 {
        self.0 as f64 / COUPLING_DENOMINATOR as f64
    }
}

/// Intra-dimer ferromagnetic coupling, J = -2.
pub const INTRA_DIMER_COUPLING: Coupling = Coupling::from_integer(-2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    /// J uniform over {-1, +1}.
    Bimodal,
    /// J uniform over k/256 for k in [-256, -1] ∪ [1, 256].
    Uniform,
    /// Couplings supplied by hand.
    Custom,
}

impl Distribution {
    pub fn as_str(&self) -> &'static str {
        match self {
            Distribution::Bimodal => "bimodal",
            Distribution::Uniform => "uniform",
            Distribution::Custom => "custom",
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bimodal" => Ok(Distribution::Bimodal),
            "uniform" => Ok(Distribution::Uniform),
            "custom" => Ok(Distribution::Custom),
            other => Err(Error::Config(format!("unknown distribution `{other}`"))),
        }
    }
}

/// Member spin of a dimer site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Member {
    A,
    B,
}

impl Member {
    fn as_str(&self) -> &'static str {
        match self {
            Member::A => "a",
            Member::B => "b",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "a" => Some(Member::A),
            "b" => Some(Member::B),
            _ => None,
        }
    }

    pub fn offset(&self) -> usize {
        match self {
            Member::A => 0,
            Member::B => 1,
        }
    }
}

/// Which dimer members an inter-site coupling attaches to: `lower` on the
/// smaller site index, `upper` on the larger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DimerAttachment {
    pub lower: Member,
    pub upper: Member,
}

impl Default for DimerAttachment {
    fn default() -> Self {
        Self {
            lower: Member::A,
            upper: Member::A,
        }
    }
}

/// Options for [`sample_couplings_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct InstanceOptions {
    /// Replace every site with a two-spin dimer. Defaults to `kind == CubicDimer`.
    pub dimers: Option<bool>,
    pub attachment: DimerAttachment,
}

/// A coupling graph with one coupling per edge, plus dimer structure.
///
/// Physical spin numbering: with dimers, logical site `s` holds spins `2s`
/// (member a) and `2s + 1` (member b); otherwise spin `s` is site `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinGlassInstance {
    graph: LatticeGraph,
    couplings: Vec<Coupling>,
    dimers: bool,
    attachment: DimerAttachment,
    intra_dimer: Coupling,
    distribution: Distribution,
    seed: u64,
}

/// One physical `σᶻσᶻ` term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinCoupling {
    pub i: usize,
    pub j: usize,
    pub j_ij: f64,
}

impl SpinGlassInstance {
    /// Instance with explicit per-edge couplings (distribution `custom`).
    pub fn from_couplings(
        graph: LatticeGraph,
        couplings: Vec<Coupling>,
        dimers: bool,
        attachment: DimerAttachment,
    ) -> Result<Self> {
        if couplings.len() != graph.n_edges() {
            return Err(Error::Config(format!(
                "{} couplings for {} edges",
                couplings.len(),
                graph.n_edges()
            )));
        }
        Ok(Self {
            graph,
            couplings,
            dimers,
            attachment,
            intra_dimer: INTRA_DIMER_COUPLING,
            distribution: Distribution::Custom,
            seed: 0,
        })
    }

    pub fn graph(&self) -> &LatticeGraph {
        &self.graph
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn coupling(&self, edge: usize) -> Coupling {
        self.couplings[edge]
    }

    pub fn has_dimers(&self) -> bool {
        self.dimers
    }

    pub fn attachment(&self) -> DimerAttachment {
        self.attachment
    }

    pub fn intra_dimer_coupling(&self) -> Coupling {
        self.intra_dimer
    }

    pub fn distribution(&self) -> Distribution {
        self.distribution
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_sites(&self) -> usize {
        self.graph.n_sites()
    }

    pub fn n_spins(&self) -> usize {
        if self.dimers {
            2 * self.graph.n_sites()
        } else {
            self.graph.n_sites()
        }
    }

    /// Spins per logical site (1 or 2).
    pub fn spins_per_site(&self) -> usize {
        if self.dimers {
            2
        } else {
            1
        }
    }

    /// Physical spins held by a logical site.
    pub fn site_spins(&self, site: usize) -> Vec<usize> {
        if self.dimers {
            vec![2 * site, 2 * site + 1]
        } else {
            vec![site]
        }
    }

    /// Logical site and member offset of a physical spin.
    pub fn spin_location(&self, spin: usize) -> (usize, usize) {
        if self.dimers {
            (spin / 2, spin % 2)
        } else {
            (spin, 0)
        }
    }

    /// Physical endpoints of the coupling on `edge`.
    pub fn edge_spins(&self, edge: usize) -> (usize, usize) {
        let e = self.graph.edge(edge);
        if self.dimers {
            (
                2 * e.u + self.attachment.lower.offset(),
                2 * e.v + self.attachment.upper.offset(),
            )
        } else {
            (e.u, e.v)
        }
    }

    /// All physical `σᶻσᶻ` terms: inter-site couplings in edge order, then
    /// intra-dimer couplings in site order.
    pub fn spin_couplings(&self) -> Vec<SpinCoupling> {
        let mut out: Vec<SpinCoupling> = (0..self.graph.n_edges())
            .map(|k| {
                let (i, j) = self.edge_spins(k);
                SpinCoupling {
                    i,
                    j,
                    j_ij: self.couplings[k].value(),
                }
            })
            .collect();
        if self.dimers {
            for s in 0..self.graph.n_sites() {
                out.push(SpinCoupling {
                    i: 2 * s,
                    j: 2 * s + 1,
                    j_ij: self.intra_dimer.value(),
                });
            }
        }
        out
    }

    /// Versioned text serialization; couplings are written as exact rationals.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let dims = self.graph.dims();
        let b = self.graph.boundary();
        let _ = writeln!(s, "# crosssim-instance v1");
        let _ = writeln!(s, "kind {}", self.graph.kind());
        let _ = writeln!(s, "dims {} {} {}", dims[0], dims[1], dims[2]);
        let _ = writeln!(
            s,
            "boundary {} {} {}",
            b[0].as_str(),
            b[1].as_str(),
            b[2].as_str()
        );
        let _ = writeln!(s, "construction {}", self.graph.construction());
        let _ = writeln!(s, "distribution {}", self.distribution);
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "dimers {}", u8::from(self.dimers));
        let _ = writeln!(
            s,
            "attachment {} {}",
            self.attachment.lower.as_str(),
            self.attachment.upper.as_str()
        );
        let _ = writeln!(
            s,
            "intra_dimer {}/{}",
            self.intra_dimer.numerator(),
            COUPLING_DENOMINATOR
        );
        let _ = writeln!(s, "sites {}", self.graph.n_sites());
        let _ = writeln!(s, "edges {}", self.graph.n_edges());
        for (e, c) in self.graph.edges().iter().zip(&self.couplings) {
            if self.distribution == Distribution::Bimodal {
                let sign = if c.numerator() > 0 { "+1" } else { "-1" };
                let _ = writeln!(s, "{} {} {}", e.u, e.v, sign);
            } else {
                let _ = writeln!(s, "{} {} {}/{}", e.u, e.v, c.numerator(), COUPLING_DENOMINATOR);
            }
        }
        s
    }

    /// Parse the format produced by [`to_text`](Self::to_text).
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l.trim()));
        let (ln, first) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
        if first != "# crosssim-instance v1" {
            return Err(parse_err(ln, format!("unsupported header `{first}`")));
        }

        let mut header = std::collections::HashMap::new();
        let mut n_edges = None;
        let mut last = ln;
        for (ln, line) in lines.by_ref() {
            last = ln;
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            if key == "edges" {
                n_edges = Some(
                    rest.parse::<usize>()
                        .map_err(|_| parse_err(ln, "bad edge count"))?,
                );
                break;
            }
            header.insert(key.to_string(), (ln, rest.to_string()));
        }
        let n_edges = n_edges.ok_or_else(|| parse_err(last, "missing `edges` line"))?;
        let field = |key: &str| -> Result<(usize, String)> {
            header
                .get(key)
                .cloned()
                .ok_or_else(|| parse_err(last, format!("missing `{key}` line")))
        };

        let (ln, kind) = field("kind")?;
        let kind: LatticeKind = kind.parse().map_err(|e: Error| parse_err(ln, e.to_string()))?;
        let (ln, dims) = field("dims")?;
        let dims = parse_triple(&dims, |t| t.parse::<usize>().ok())
            .ok_or_else(|| parse_err(ln, "bad dims"))?;
        let (ln, boundary) = field("boundary")?;
        let boundary = parse_triple(&boundary, |t| t.parse::<Boundary>().ok())
            .ok_or_else(|| parse_err(ln, "bad boundary"))?;
        let (ln, dist) = field("distribution")?;
        let distribution: Distribution =
            dist.parse().map_err(|e: Error| parse_err(ln, e.to_string()))?;
        let (ln, seed) = field("seed")?;
        let seed = seed.parse::<u64>().map_err(|_| parse_err(ln, "bad seed"))?;
        let (ln, dimers) = field("dimers")?;
        let dimers = match dimers.as_str() {
            "0" => false,
            "1" => true,
            _ => return Err(parse_err(ln, "dimers must be 0 or 1")),
        };
        let (ln, att) = field("attachment")?;
        let mut parts = att.split_whitespace().map(Member::parse);
        let attachment = match (parts.next().flatten(), parts.next().flatten()) {
            (Some(lower), Some(upper)) => DimerAttachment { lower, upper },
            _ => return Err(parse_err(ln, "bad attachment")),
        };
        let (ln, intra) = field("intra_dimer")?;
        let intra_dimer = parse_coupling(&intra).ok_or_else(|| parse_err(ln, "bad intra_dimer"))?;
        let (ln, n_sites) = field("sites")?;
        let n_sites = n_sites
            .parse::<usize>()
            .map_err(|_| parse_err(ln, "bad site count"))?;

        let mut pairs = Vec::with_capacity(n_edges);
        let mut couplings = Vec::with_capacity(n_edges);
        for (ln, line) in lines {
            if line.is_empty() {
                continue;
            }
            let mut tok = line.split_whitespace();
            let (Some(u), Some(v), Some(j), None) = (tok.next(), tok.next(), tok.next(), tok.next())
            else {
                return Err(parse_err(ln, "edge line must be `u v J`"));
            };
            let u = u.parse::<usize>().map_err(|_| parse_err(ln, "bad site id"))?;
            let v = v.parse::<usize>().map_err(|_| parse_err(ln, "bad site id"))?;
            let c = parse_coupling(j).ok_or_else(|| parse_err(ln, format!("bad coupling `{j}`")))?;
            pairs.push((u, v));
            couplings.push(c);
        }
        if pairs.len() != n_edges {
            return Err(parse_err(
                last,
                format!("expected {n_edges} edges, found {}", pairs.len()),
            ));
        }

        let graph = if kind == LatticeKind::Custom {
            LatticeGraph::from_edges(n_sites, &pairs)?
        } else {
            let g = build_lattice(kind, dims, boundary)?;
            let same = g.n_sites() == n_sites
                && g.n_edges() == pairs.len()
                && g.edges().iter().zip(&pairs).all(|(e, &(u, v))| (e.u, e.v) == (u, v));
            if !same {
                return Err(Error::Config(
                    "edge list does not match the declared lattice".into(),
                ));
            }
            g
        };
        if graph.n_edges() != couplings.len() {
            return Err(Error::Config("duplicate edges in instance file".into()));
        }
        let inst = Self {
            graph,
            couplings,
            dimers,
            attachment,
            intra_dimer,
            distribution,
            seed,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Check the coupling invariants of the declared distribution.
    pub fn validate(&self) -> Result<()> {
        for (k, c) in self.couplings.iter().enumerate() {
            let n = c.numerator();
            let ok = match self.distribution {
                Distribution::Bimodal => n.abs() == COUPLING_DENOMINATOR,
                Distribution::Uniform => n != 0 && n.abs() <= COUPLING_DENOMINATOR,
                Distribution::Custom => true,
            };
            if !ok {
                return Err(Error::Config(format!(
                    "edge {k}: coupling {n}/256 is not in the {} support",
                    self.distribution
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical text form, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

fn parse_triple<T>(s: &str, f: impl Fn(&str) -> Option<T>) -> Option<[T; 3]> {
    let mut it = s.split_whitespace().map(f);
    let out = [it.next()??, it.next()??, it.next()??];
    if it.next().is_some() {
        return None;
    }
    Some(out)
}

fn parse_coupling(s: &str) -> Option<Coupling> {
    match s {
        "+1" | "1" => return Some(Coupling::from_integer(1)),
        "-1" => return Some(Coupling::from_integer(-1)),
        _ => {}
    }
    let (num, den) = s.split_once('/')?;
    if den.parse::<i32>().ok()? != COUPLING_DENOMINATOR {
        return None;
    }
    Some(Coupling::from_numerator(num.parse().ok()?))
}

/// Draw one coupling per edge. Equivalent to [`sample_couplings_with`] with defaults.
pub fn sample_couplings(
    graph: &LatticeGraph,
    distribution: Distribution,
    seed: u64,
) -> Result<SpinGlassInstance> {
    sample_couplings_with(graph, distribution, seed, InstanceOptions::default())
}

/// Draw one coupling per edge.
///
/// Stream splitting: edge `k` uses a ChaCha8 generator keyed by `seed` on
/// stream `k`, so each coupling depends only on `(seed, k)`.
pub fn sample_couplings_with(
    graph: &LatticeGraph,
    distribution: Distribution,
    seed: u64,
    options: InstanceOptions,
) -> Result<SpinGlassInstance> {
    if graph.n_sites() == 0 {
        return Err(Error::Config("cannot sample couplings on an empty graph".into()));
    }
    let couplings = (0..graph.n_edges())
        .map(|k| edge_coupling(distribution, seed, k as u64))
        .collect::<Result<Vec<_>>>()?;
    let dimers = options
        .dimers
        .unwrap_or(graph.kind() == LatticeKind::CubicDimer);
    Ok(SpinGlassInstance {
        graph: graph.clone(),
        couplings,
        dimers,
        attachment: options.attachment,
        intra_dimer: INTRA_DIMER_COUPLING,
        distribution,
        seed,
    })
}

/// The coupling drawn for edge `edge` under `seed`.
pub fn edge_coupling(distribution: Distribution, seed: u64, edge: u64) -> Result<Coupling> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(edge);
    match distribution {
        Distribution::Bimodal => Ok(Coupling::from_integer(if rng.random::<bool>() {
            1
        } else {
            -1
        })),
        Distribution::Uniform => {
            let k = rng.random_range(0..2 * COUPLING_DENOMINATOR);
            let n = if k < COUPLING_DENOMINATOR {
                k - COUPLING_DENOMINATOR
            } else {
                k - COUPLING_DENOMINATOR + 1
            };
            Ok(Coupling::from_numerator(n))
        }
        Distribution::Custom => Err(Error::Config(
            "the custom distribution cannot be sampled".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::lattice::{build_cubic_dimer_lattice, build_square_lattice};

    #[test]
    fn bimodal_values_and_balance() {
        let g = build_square_lattice(4, 6).unwrap();
        let inst = sample_couplings(&g, Distribution::Bimodal, 3).unwrap();
        assert!(inst.couplings().iter().all(|c| c.value().abs() == 1.0));

        let n = 100_000u64;
        let sum: f64 = (0..n)
            .map(|k| edge_coupling(Distribution::Bimodal, 11, k).unwrap().value())
            .sum();
        let mean = sum / n as f64;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn uniform_grid_excludes_zero() {
        let mut seen = std::collections::BTreeSet::new();
        for k in 0..20_000 {
            let c = edge_coupling(Distribution::Uniform, 5, k).unwrap();
            assert_ne!(c.numerator(), 0);
            assert!(c.numerator().abs() <= 256);
            seen.insert(c.numerator());
        }
        let v: Vec<_> = seen.into_iter().collect();
        let min_step = v.windows(2).map(|w| w[1] - w[0]).min().unwrap();
        assert_eq!(min_step, 1);
        assert_eq!(v.len(), 512);
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = build_cubic_dimer_lattice(3, true).unwrap();
        let a = sample_couplings(&g, Distribution::Uniform, 77).unwrap();
        let b = sample_couplings(&g, Distribution::Uniform, 77).unwrap();
        assert_eq!(a, b);
        let c = sample_couplings(&g, Distribution::Uniform, 78).unwrap();
        assert_ne!(a.couplings(), c.couplings());
    }

    #[test]
    fn cubic_dimer_structure() {
        let g = build_cubic_dimer_lattice(3, true).unwrap();
        let inst = sample_couplings(&g, Distribution::Bimodal, 1).unwrap();
        assert!(inst.has_dimers());
        assert_eq!(inst.n_spins(), 54);
        assert_eq!(inst.intra_dimer_coupling().value(), -2.0);
        let terms = inst.spin_couplings();
        assert_eq!(terms.len(), g.n_edges() + 27);
        assert!(terms[g.n_edges()..].iter().all(|t| t.j_ij == -2.0 && t.j == t.i + 1));
    }

    #[test]
    fn unknown_distribution_tag() {
        assert!(matches!("gaussian".parse::<Distribution>(), Err(Error::Config(_))));
    }

    #[test]
    fn text_round_trip() {
        let g = build_cubic_dimer_lattice(3, true).unwrap();
        for dist in [Distribution::Bimodal, Distribution::Uniform] {
            let inst = sample_couplings(&g, dist, 9).unwrap();
            let back = SpinGlassInstance::from_text(&inst.to_text()).unwrap();
            assert_eq!(inst, back);
        }
        let ring = LatticeGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let inst = SpinGlassInstance::from_couplings(
            ring,
            vec![Coupling::from_numerator(13); 4],
            false,
            DimerAttachment::default(),
        )
        .unwrap();
        assert_eq!(SpinGlassInstance::from_text(&inst.to_text()).unwrap(), inst);
    }

    #[test]
    fn text_rejects_tampering() {
        let g = build_square_lattice(2, 2).unwrap();
        let inst = sample_couplings(&g, Distribution::Uniform, 9).unwrap();
        let text = inst.to_text().replace("edges 4", "edges 5");
        assert!(SpinGlassInstance::from_text(&text).is_err());
        let bimodal = sample_couplings(&g, Distribution::Bimodal, 9).unwrap();
        let text = bimodal.to_text().replacen("+1", "3/256", 1).replacen("-1", "3/256", 1);
        assert!(SpinGlassInstance::from_text(&text).is_err());
    }

    proptest::proptest! {
        #[test]
        fn text_form_round_trips(seed in proptest::num::u64::ANY, bimodal in proptest::bool::ANY) {
            let g = build_cubic_dimer_lattice(2, true).unwrap();
            let dist = if bimodal { Distribution::Bimodal } else { Distribution::Uniform };
            let inst = sample_couplings(&g, dist, seed).unwrap();
            let back = SpinGlassInstance::from_text(&inst.to_text()).unwrap();
            proptest::prop_assert_eq!(back.content_hash(), inst.content_hash());
            proptest::prop_assert_eq!(back, inst);
        }

        #[test]
        fn couplings_are_nonzero_and_bounded(seed in proptest::num::u64::ANY) {
            let g = build_square_lattice(3, 3).unwrap();
            let inst = sample_couplings(&g, Distribution::Uniform, seed).unwrap();
            for c in inst.couplings() {
                proptest::prop_assert!(c.value() != 0.0 && c.value().abs() <= 1.0);
            }
        }
    }
}
