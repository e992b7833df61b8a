use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bptns::MeasurementConfig;
use crate::error::{Error, Result};
use crate::estimator::Noise;
use crate::graphs::{
    build_cubic_dimer_lattice, build_diamond_lattice, build_square_lattice, sample_couplings, Distribution,
    LatticeGraph, SpinGlassInstance,
};
use crate::model::{QuenchSpec, Schedule, DEFAULT_DT, DEFAULT_GAMMA0, DEFAULT_J0, DEFAULT_S_END};

/// Plan file format version understood by this build.
pub const PLAN_VERSION: u32 = 1;

/// Smallest number of repeats behind a wall-clock median.
pub const MIN_TIMING_REPEATS: usize = 5;

/// A full experiment: cells of instance ensembles, each run through a list of engines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub version: u32,
    /// Master seed; every instance and noise seed is derived from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_n_boot")]
    pub n_boot: usize,
    /// Repeats of one pair measurement behind each wall-clock median.
    #[serde(default = "default_timing_repeats")]
    pub timing_repeats: usize,
    pub cells: Vec<CellSpec>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_n_boot() -> usize {
    crate::metrics::DEFAULT_N_BOOT
}

fn default_timing_repeats() -> usize {
    MIN_TIMING_REPEATS
}

/// Lattice family of a cell; `size` is the side length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    /// `size³` dimer sites, open in x and y.
    CubicDimer {
        #[serde(default = "yes")]
        z_periodic: bool,
    },
    /// `size × size` open grid.
    Square,
    /// Diamond lattice filling a `size³` box of quarter-cell coordinates.
    Diamond,
}

fn yes() -> bool {
    true
}

impl Geometry {
    pub fn build(&self, size: usize) -> Result<LatticeGraph> {
        match *self {
            Geometry::CubicDimer { z_periodic } => build_cubic_dimer_lattice(size, z_periodic),
            Geometry::Square => build_square_lattice(size, size),
            Geometry::Diamond => build_diamond_lattice(size, size, size),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Geometry::CubicDimer { z_periodic: true } => "cubic_dimer",
            Geometry::CubicDimer { z_periodic: false } => "cubic_dimer_open",
            Geometry::Square => "square",
            Geometry::Diamond => "diamond",
        }
    }
}

/// Schedule and Trotter settings shared by every quench of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuenchSettings {
    pub gamma0: f64,
    pub j0: f64,
    pub dt: f64,
    pub s_end: f64,
    pub alpha: f64,
}

impl Default for QuenchSettings {
    fn default() -> Self {
        Self {
            gamma0: DEFAULT_GAMMA0,
            j0: DEFAULT_J0,
            dt: DEFAULT_DT,
            s_end: DEFAULT_S_END,
            alpha: 1.0,
        }
    }
}

impl QuenchSettings {
    pub fn spec(&self, t_a: f64) -> Result<QuenchSpec> {
        let spec = QuenchSpec::new(t_a)
            .with_dt(self.dt)
            .with_s_end(self.s_end)
            .with_alpha(self.alpha)
            .with_schedule(Schedule::synthetic(self.gamma0, self.j0)?);
        spec.validate()?;
        Ok(spec)
    }
}

/// A simulation method applied to every instance of a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EngineConfig {
    /// Dense statevector; the ground truth.
    Exact,
    /// BP-gauged tensor network.
    Bptns(MeasurementConfig),
    /// Noisy reference emulated from the exact state.
    Reference { noise: Noise },
}

impl EngineConfig {
    /// Short stable label, e.g. `bptns-x8-l4`.
    pub fn label(&self) -> String {
        match self {
            EngineConfig::Exact => "exact".into(),
            EngineConfig::Bptns(c) => format!("bptns-x{}-l{}", c.chi, c.l_max),
            EngineConfig::Reference { noise } => match noise {
                Noise::FiniteSample { m } => format!("reference-m{m}"),
                Noise::Gaussian { sigma } => format!("reference-g{sigma}"),
                Noise::Mixed { m, sigma } => format!("reference-m{m}-g{sigma}"),
            },
        }
    }

    /// SHA-256 of the JSON encoding.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("engine config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    fn validate(&self) -> Result<()> {
        match self {
            EngineConfig::Exact => Ok(()),
            EngineConfig::Bptns(c) => c.validate(),
            EngineConfig::Reference { noise } => {
                crate::estimator::emulate_noisy_reference(&crate::metrics::CorrelationMatrix::zeros(2), *noise, 0)
                    .map(|_| ())
            }
        }
    }
}

/// One ensemble cell: a geometry at several sizes and annealing times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub name: String,
    pub geometry: Geometry,
    pub sizes: Vec<usize>,
    pub distribution: Distribution,
    pub t_a: Vec<f64>,
    pub n_instances: usize,
    pub engines: Vec<EngineConfig>,
    /// Explicit coupling seeds, one per instance; derived from the master
    /// seed when absent.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub quench: QuenchSettings,
}

impl CellSpec {
    /// Seed of this cell: the master seed hashed with the cell descriptor, so
    /// that adding or editing other cells never changes it.
    pub fn cell_seed(&self, master: u64) -> u64 {
        let descriptor = serde_json::to_string(self).expect("cell serializes");
        derive_seed(master, &descriptor)
    }

    /// Coupling seed of instance `index` at `size`.
    pub fn instance_seed(&self, master: u64, size: usize, index: usize) -> u64 {
        match &self.seeds {
            Some(s) => s[index],
            None => derive_seed(self.cell_seed(master), &format!("size={size};instance={index}")),
        }
    }

    pub fn instance(&self, master: u64, size: usize, index: usize) -> Result<SpinGlassInstance> {
        let graph = self.geometry.build(size)?;
        sample_couplings(&graph, self.distribution, self.instance_seed(master, size, index))
    }

    pub fn has_exact(&self) -> bool {
        self.engines.iter().any(|e| matches!(e, EngineConfig::Exact))
    }
}

/// First eight bytes of `SHA-256(master ‖ descriptor)`.
pub fn derive_seed(master: u64, descriptor: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(descriptor.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

impl ExperimentPlan {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let plan: Self = toml::from_str(text).map_err(|e| Error::InvalidPlan(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidPlan(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidPlan(msg));
        if self.version != PLAN_VERSION {
            return bad(format!("unsupported plan version {} (expected {PLAN_VERSION})", self.version));
        }
        if self.cells.is_empty() {
            return bad("plan has no cells".into());
        }
        if self.n_boot == 0 {
            return bad("n_boot must be positive".into());
        }
        if self.timing_repeats < MIN_TIMING_REPEATS {
            return bad(format!("timing_repeats must be at least {MIN_TIMING_REPEATS}"));
        }
        let mut names = std::collections::BTreeSet::new();
        for cell in &self.cells {
            let name = &cell.name;
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                return bad(format!("cell name `{name}` must be nonempty and use [A-Za-z0-9._-]"));
            }
            if !names.insert(name.clone()) {
                return bad(format!("duplicate cell name `{name}`"));
            }
            if cell.sizes.is_empty() || cell.t_a.is_empty() || cell.engines.is_empty() {
                return bad(format!("cell `{name}` needs sizes, t_a and engines"));
            }
            if cell.n_instances == 0 {
                return bad(format!("cell `{name}` has no instances"));
            }
            if cell.distribution == Distribution::Custom {
                return bad(format!("cell `{name}`: custom couplings cannot be sampled"));
            }
            if let Some(s) = &cell.seeds {
                if s.len() != cell.n_instances {
                    return bad(format!("cell `{name}`: {} seeds for {} instances", s.len(), cell.n_instances));
                }
            }
            for &size in &cell.sizes {
                cell.geometry.build(size).map_err(|e| Error::InvalidPlan(format!("cell `{name}`: {e}")))?;
            }
            for &t in &cell.t_a {
                cell.quench.spec(t).map_err(|e| Error::InvalidPlan(format!("cell `{name}`: {e}")))?;
            }
            let mut labels = std::collections::BTreeSet::new();
            for e in &cell.engines {
                e.validate().map_err(|err| Error::InvalidPlan(format!("cell `{name}`: {err}")))?;
                if !labels.insert(e.label()) {
                    return bad(format!("cell `{name}` lists engine `{}` twice", e.label()));
                }
            }
            let needs_exact = cell
                .engines
                .iter()
                .any(|e| matches!(e, EngineConfig::Reference { .. }));
            if needs_exact && !cell.has_exact() {
                return bad(format!("cell `{name}`: reference engines need the exact engine"));
            }
        }
        Ok(())
    }
}
