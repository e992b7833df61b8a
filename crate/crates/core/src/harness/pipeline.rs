use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::plan::{derive_seed, CellSpec, EngineConfig, ExperimentPlan};
use super::store::{content_key, ArtifactKind, Store};
use crate::bptns::{bp_fixed_point, evolve_bptns_logged, measure_all_correlations_with, measure_correlation, TNState, TnsSnapshot};
use crate::error::{Error, Result};
use crate::estimator::{
    emulate_noisy_reference, plug_in_reference_error, sampled_reference, triangulation_table, Noise,
    TriangulationInput, TriangulationRow,
};
use crate::exact::{exact_correlations, trotter_evolve_exact, StateVector};
use crate::graphs::SpinGlassInstance;
use crate::metrics::{epsilon_c, error_correlation_coefficient, median, CorrelationMatrix, Provenance};
use crate::C64;

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Gen,
    Evolve,
    Measure,
    Score,
    Triangulate,
}

/// File names of the summary tables.
pub const SCORES_TABLE: &str = "scores.csv";
pub const TRIANGULATION_TABLE: &str = "triangulation.csv";

pub const SCORES_HEADER: &str =
    "run,cell,geometry,size,distribution,t_a,engine,instance,instance_hash,spec_hash,engine_hash,eps_c,status";

/// One instance of one cell at one size.
#[derive(Debug, Clone)]
pub struct InstanceSlot {
    pub cell: usize,
    pub size: usize,
    pub index: usize,
    pub instance: SpinGlassInstance,
    pub hash: String,
}

impl InstanceSlot {
    pub fn id(&self, plan: &ExperimentPlan) -> String {
        format!("{}/L{}/#{}", plan.cells[self.cell].name, self.size, self.index)
    }
}

/// One engine run: an instance slot at one annealing time.
#[derive(Debug, Clone)]
pub struct RunSlot {
    pub slot: usize,
    pub t_a: f64,
    pub engine: usize,
    pub spec_hash: String,
    pub engine_hash: String,
}

/// Expanded, deterministic job list of a plan.
#[derive(Debug, Clone)]
pub struct Layout {
    pub plan: ExperimentPlan,
    pub instances: Vec<InstanceSlot>,
    pub runs: Vec<RunSlot>,
}

impl Layout {
    pub fn new(plan: &ExperimentPlan) -> Result<Self> {
        plan.validate()?;
        let mut instances = Vec::new();
        let mut runs = Vec::new();
        for (c, cell) in plan.cells.iter().enumerate() {
            for &size in &cell.sizes {
                for index in 0..cell.n_instances {
                    let instance = cell.instance(plan.seed, size, index)?;
                    let hash = instance.content_hash();
                    instances.push(InstanceSlot {
                        cell: c,
                        size,
                        index,
                        instance,
                        hash,
                    });
                    let slot = instances.len() - 1;
                    for &t_a in &cell.t_a {
                        let spec_hash = cell.quench.spec(t_a)?.content_hash();
                        for (engine, e) in cell.engines.iter().enumerate() {
                            runs.push(RunSlot {
                                slot,
                                t_a,
                                engine,
                                spec_hash: spec_hash.clone(),
                                engine_hash: e.content_hash(),
                            });
                        }
                    }
                }
            }
        }
        Ok(Self {
            plan: plan.clone(),
            instances,
            runs,
        })
    }

    pub fn cell_of(&self, run: &RunSlot) -> &CellSpec {
        &self.plan.cells[self.instances[run.slot].cell]
    }

    pub fn engine_of(&self, run: &RunSlot) -> &EngineConfig {
        &self.cell_of(run).engines[run.engine]
    }

    pub fn run_id(&self, run: &RunSlot) -> String {
        let inst = &self.instances[run.slot];
        format!(
            "{}/L{}/ta{}/{}/#{}",
            self.cell_of(run).name,
            inst.size,
            run.t_a,
            self.engine_of(run).label(),
            inst.index
        )
    }

    /// The exact run sharing instance and annealing time with `run`.
    pub fn exact_partner(&self, run: &RunSlot) -> Option<&RunSlot> {
        self.runs.iter().find(|r| {
            r.slot == run.slot && r.t_a == run.t_a && matches!(self.engine_of(r), EngineConfig::Exact)
        })
    }

    fn state_key(&self, run: &RunSlot) -> String {
        content_key(&["state", &self.instances[run.slot].hash, &run.spec_hash, &run.engine_hash])
    }

    /// Seed of the noise of a reference run. It depends on the master seed
    /// and the run contents only.
    pub fn noise_seed(&self, run: &RunSlot) -> u64 {
        let inst = &self.instances[run.slot];
        derive_seed(self.plan.seed, &format!("{}:{}:{}", inst.hash, run.spec_hash, run.engine_hash))
    }

    pub fn correlation_key(&self, run: &RunSlot) -> String {
        let seed = match self.engine_of(run) {
            EngineConfig::Reference { .. } => self.noise_seed(run).to_string(),
            _ => String::new(),
        };
        content_key(&["correlations", &self.instances[run.slot].hash, &run.spec_hash, &run.engine_hash, &seed])
    }

    pub fn provenance(&self, run: &RunSlot) -> Provenance {
        let seed = match self.engine_of(run) {
            EngineConfig::Reference { .. } => self.noise_seed(run),
            _ => self.instances[run.slot].instance.seed(),
        };
        Provenance {
            instance: self.instances[run.slot].hash.clone(),
            spec: run.spec_hash.clone(),
            engine: run.engine_hash.clone(),
            seed,
        }
    }
}

/// Failed job with its error message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub job: String,
    pub message: String,
}

/// Counts of a pipeline run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub computed: usize,
    pub skipped: usize,
    pub failures: Vec<FailureRecord>,
}

impl RunSummary {
    fn absorb(&mut self, outcomes: Vec<Outcome>) {
        for o in outcomes {
            match o {
                Outcome::Computed => self.computed += 1,
                Outcome::Skipped => self.skipped += 1,
                Outcome::Failed(f) => self.failures.push(f),
            }
        }
    }
}

enum Outcome {
    Computed,
    Skipped,
    Failed(FailureRecord),
}

/// Wall-clock cost of one pair measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub pair: (usize, usize),
    pub seconds: Vec<f64>,
    pub median: f64,
}

/// Runs plan stages against a store with a fixed worker count.
pub struct Pipeline {
    layout: Layout,
    store: Store,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(plan: &ExperimentPlan, store: Store, workers: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            layout: Layout::new(plan)?,
            store,
            pool,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Run every stage up to and including `upto`. Completed artifacts are
    /// skipped; failures are recorded per job and do not stop other jobs.
    pub fn run(&self, upto: Stage) -> Result<RunSummary> {
        let mut summary = RunSummary::default();
        let order = [Stage::Gen, Stage::Evolve, Stage::Measure, Stage::Score, Stage::Triangulate];
        for stage in order.into_iter().filter(|s| *s <= upto) {
            match stage {
                Stage::Gen => {
                    let out = self.pool.install(|| {
                        self.layout.instances.par_iter().map(|s| self.gen(s)).collect::<Vec<_>>()
                    });
                    summary.absorb(out);
                }
                Stage::Evolve => {
                    let out = self.pool.install(|| {
                        self.layout.runs.par_iter().map(|r| self.evolve(r)).collect::<Vec<_>>()
                    });
                    summary.absorb(out);
                }
                Stage::Measure => {
                    // references sample the exact states, which the first pass provides
                    let (refs, direct): (Vec<&RunSlot>, Vec<&RunSlot>) = self
                        .layout
                        .runs
                        .iter()
                        .partition(|r| matches!(self.layout.engine_of(r), EngineConfig::Reference { .. }));
                    for batch in [direct, refs] {
                        let out = self
                            .pool
                            .install(|| batch.par_iter().map(|r| self.measure(r)).collect::<Vec<_>>());
                        summary.absorb(out);
                    }
                }
                Stage::Score => {
                    let table = scores_table(&self.layout, &self.store)?;
                    self.store.write(ArtifactKind::Summary, SCORES_TABLE, table.as_bytes())?;
                }
                Stage::Triangulate => {
                    let rows = triangulation_rows(&self.layout, &self.store)?;
                    let table = triangulation_table(&rows.iter().map(|r| r.row.clone()).collect::<Vec<_>>());
                    self.store.write(ArtifactKind::Summary, TRIANGULATION_TABLE, table.as_bytes())?;
                }
            }
        }
        Ok(summary)
    }

    fn finish(&self, job: String, key: &str, result: Result<bool>) -> Outcome {
        match result {
            Ok(true) => {
                let _ = self.store.remove(ArtifactKind::Failure, &format!("{key}.txt"));
                Outcome::Computed
            }
            Ok(false) => Outcome::Skipped,
            Err(e) => {
                let message = e.to_string();
                let _ = self
                    .store
                    .write(ArtifactKind::Failure, &format!("{key}.txt"), format!("{job}\n{message}\n").as_bytes());
                Outcome::Failed(FailureRecord { job, message })
            }
        }
    }

    fn gen(&self, slot: &InstanceSlot) -> Outcome {
        let name = format!("{}.txt", slot.hash);
        let result = if self.store.exists(ArtifactKind::Instance, &name) {
            Ok(false)
        } else {
            self.store
                .write(ArtifactKind::Instance, &name, slot.instance.to_text().as_bytes())
                .map(|_| true)
        };
        self.finish(format!("gen {}", slot.id(&self.layout.plan)), &slot.hash, result)
    }

    fn evolve(&self, run: &RunSlot) -> Outcome {
        let key = self.layout.state_key(run);
        let job = format!("evolve {}", self.layout.run_id(run));
        let result = (|| -> Result<bool> {
            let engine = self.layout.engine_of(run);
            let name = match engine {
                EngineConfig::Exact => format!("{key}.bin"),
                EngineConfig::Bptns(_) => format!("{key}.json"),
                EngineConfig::Reference { .. } => return Ok(false),
            };
            if self.store.exists(ArtifactKind::State, &name) {
                return Ok(false);
            }
            let instance = &self.layout.instances[run.slot].instance;
            let spec = self.layout.cell_of(run).quench.spec(run.t_a)?;
            match engine {
                EngineConfig::Exact => {
                    let state = trotter_evolve_exact(instance, &spec)?;
                    self.store.write(ArtifactKind::State, &name, &encode_state(&state))?;
                }
                EngineConfig::Bptns(cfg) => {
                    let evo = evolve_bptns_logged(instance, &spec, cfg)?;
                    self.store
                        .write(ArtifactKind::State, &format!("{key}.log"), evo.log.to_text().as_bytes())?;
                    let json = serde_json::to_vec(&evo.state.to_snapshot())?;
                    self.store.write(ArtifactKind::State, &name, &json)?;
                }
                EngineConfig::Reference { .. } => unreachable!(),
            }
            Ok(true)
        })();
        self.finish(job, &key, result)
    }

    fn load_exact_state(&self, run: &RunSlot) -> Result<StateVector> {
        let name = format!("{}.bin", self.layout.state_key(run));
        if !self.store.exists(ArtifactKind::State, &name) {
            return Err(Error::Config(format!("exact state of {} is missing", self.layout.run_id(run))));
        }
        decode_state(&self.store.read(ArtifactKind::State, &name)?)
    }

    fn measure(&self, run: &RunSlot) -> Outcome {
        let key = self.layout.correlation_key(run);
        let job = format!("measure {}", self.layout.run_id(run));
        let result = (|| -> Result<bool> {
            let name = format!("{key}.txt");
            let engine = self.layout.engine_of(run);
            let timed = matches!(engine, EngineConfig::Bptns(_));
            if self.store.exists(ArtifactKind::Correlations, &name)
                && (!timed || self.store.exists(ArtifactKind::Timing, &format!("{key}.json")))
            {
                return Ok(false);
            }
            let c = match engine {
                EngineConfig::Exact => exact_correlations(&self.load_exact_state(run)?),
                EngineConfig::Bptns(cfg) => {
                    let state_name = format!("{}.json", self.layout.state_key(run));
                    if !self.store.exists(ArtifactKind::State, &state_name) {
                        return Err(Error::Config("tensor-network state is missing".into()));
                    }
                    let snap: TnsSnapshot = serde_json::from_slice(&self.store.read(ArtifactKind::State, &state_name)?)?;
                    let graph = self.layout.instances[run.slot].instance.graph();
                    let tns = TNState::from_snapshot(graph, &snap)?;
                    let cache = bp_fixed_point(&tns, cfg)?;
                    let c = measure_all_correlations_with(&tns, &cache, cfg)?;
                    let timing = time_pair(&tns, cfg, self.layout.plan.timing_repeats)?;
                    self.store
                        .write(ArtifactKind::Timing, &format!("{key}.json"), &serde_json::to_vec(&timing)?)?;
                    c
                }
                EngineConfig::Reference { noise } => {
                    let partner = self
                        .layout
                        .exact_partner(run)
                        .ok_or_else(|| Error::Config("reference run has no exact partner".into()))?;
                    let state = self.load_exact_state(partner)?;
                    let seed = self.layout.noise_seed(run);
                    match *noise {
                        Noise::FiniteSample { m } => sampled_reference(&state, m, seed)?,
                        Noise::Gaussian { .. } => emulate_noisy_reference(&exact_correlations(&state), *noise, seed)?,
                        Noise::Mixed { m, sigma } => {
                            let sampled = sampled_reference(&state, m, seed)?;
                            emulate_noisy_reference(&sampled, Noise::Gaussian { sigma }, derive_seed(seed, "gaussian"))?
                        }
                    }
                }
            };
            let text = c.to_text(&self.layout.provenance(run));
            self.store.write(ArtifactKind::Correlations, &name, text.as_bytes())?;
            Ok(true)
        })();
        self.finish(job, &key, result)
    }
}

/// Median wall-clock time of measuring the first and last spin.
fn time_pair(tns: &TNState, cfg: &crate::bptns::MeasurementConfig, repeats: usize) -> Result<TimingRecord> {
    let cache = bp_fixed_point(tns, cfg)?;
    let pair = (0, tns.n_spins() - 1);
    let mut seconds = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        measure_correlation(tns, &cache, pair.0, pair.1, cfg)?;
        seconds.push(start.elapsed().as_secs_f64());
    }
    Ok(TimingRecord {
        pair,
        median: median(&seconds)?,
        seconds,
    })
}

fn encode_state(state: &StateVector) -> Vec<u8> {
    let amps = state.amplitudes();
    let mut out = Vec::with_capacity(8 + 16 * amps.len());
    out.extend_from_slice(&(state.n_spins() as u64).to_le_bytes());
    for a in amps {
        out.extend_from_slice(&a.re.to_le_bytes());
        out.extend_from_slice(&a.im.to_le_bytes());
    }
    out
}

fn decode_state(bytes: &[u8]) -> Result<StateVector> {
    let bad = || Error::InvalidSize("malformed statevector file".into());
    let n = u64::from_le_bytes(bytes.get(..8).ok_or_else(bad)?.try_into().map_err(|_| bad())?) as usize;
    let body = &bytes[8..];
    if n >= usize::BITS as usize || body.len() != 16usize << n {
        return Err(bad());
    }
    let f = |k: usize| f64::from_le_bytes(body[8 * k..8 * k + 8].try_into().expect("8 bytes"));
    StateVector::from_amplitudes((0..1usize << n).map(|x| C64::new(f(2 * x), f(2 * x + 1))).collect())
}

/// Stored correlations of a run, if present.
pub fn load_correlations(layout: &Layout, store: &Store, run: &RunSlot) -> Result<Option<CorrelationMatrix>> {
    let name = format!("{}.txt", layout.correlation_key(run));
    if !store.exists(ArtifactKind::Correlations, &name) {
        return Ok(None);
    }
    Ok(Some(CorrelationMatrix::from_text(&store.read_string(ArtifactKind::Correlations, &name)?)?.0))
}

/// Stored failure message of a run's measurement or evolution, if any.
pub fn failure_of(layout: &Layout, store: &Store, run: &RunSlot) -> Option<String> {
    let mut keys = vec![layout.correlation_key(run), layout.state_key(run)];
    if let Some(p) = layout.exact_partner(run) {
        keys.push(layout.state_key(p));
        keys.push(layout.correlation_key(p));
    }
    keys.iter().find_map(|k| {
        store
            .read_string(ArtifactKind::Failure, &format!("{k}.txt"))
            .ok()
            .map(|s| s.lines().nth(1).unwrap_or("").to_string())
    })
}

/// Error of a run against its exact partner.
#[derive(Debug, Clone, PartialEq)]
pub enum Score {
    Value(f64),
    Failed(String),
    Missing,
}

pub fn score_run(layout: &Layout, store: &Store, run: &RunSlot) -> Result<Score> {
    let Some(partner) = layout.exact_partner(run) else {
        return Ok(Score::Missing);
    };
    match (load_correlations(layout, store, run)?, load_correlations(layout, store, partner)?) {
        (Some(c), Some(truth)) => Ok(Score::Value(epsilon_c(&c, &truth)?)),
        _ => Ok(match failure_of(layout, store, run) {
            Some(msg) => Score::Failed(msg),
            None => Score::Missing,
        }),
    }
}

fn csv_safe(s: &str) -> String {
    s.replace([',', '\n'], ";")
}

/// Per-run errors against the exact engine with provenance hashes.
pub fn scores_table(layout: &Layout, store: &Store) -> Result<String> {
    let mut out = String::from(SCORES_HEADER);
    out.push('\n');
    for run in &layout.runs {
        let inst = &layout.instances[run.slot];
        let cell = layout.cell_of(run);
        let score = if matches!(layout.engine_of(run), EngineConfig::Exact) {
            // ground-truth rows carry provenance only
            match load_correlations(layout, store, run)? {
                Some(_) => None,
                None => Some(failure_of(layout, store, run).map_or(Score::Missing, Score::Failed)),
            }
        } else {
            Some(score_run(layout, store, run)?)
        };
        let (eps, status) = match score {
            None => (String::new(), "ground_truth".to_string()),
            Some(Score::Value(v)) => (format!("{v:?}"), "ok".to_string()),
            Some(Score::Failed(msg)) => (String::new(), format!("failed: {}", csv_safe(&msg))),
            Some(Score::Missing) => (String::new(), "missing".to_string()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:?},{},{},{},{},{},{},{}",
            layout.run_id(run),
            cell.name,
            cell.geometry.label(),
            inst.size,
            cell.distribution,
            run.t_a,
            layout.engine_of(run).label(),
            inst.index,
            inst.hash,
            run.spec_hash,
            run.engine_hash,
            eps,
            status
        );
    }
    Ok(out)
}

/// A triangulation row together with the direct error when known.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangulatedRun {
    pub method_run: usize,
    pub reference_run: usize,
    pub eps_direct: Option<f64>,
    pub row: TriangulationRow,
}

/// Triangulate every tensor-network run against every reference run of the
/// same instance and annealing time. The reference error is the median of the
/// reference-vs-exact errors of its cell at the run's size, or at the largest
/// size with data.
pub fn triangulation_rows(layout: &Layout, store: &Store) -> Result<Vec<TriangulatedRun>> {
    // reference-vs-truth errors keyed by (cell, t_a bits, engine) then size
    let mut ref_errors: BTreeMap<(usize, u64, usize), BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for run in &layout.runs {
        if !matches!(layout.engine_of(run), EngineConfig::Reference { .. }) {
            continue;
        }
        let inst = &layout.instances[run.slot];
        if let Score::Value(v) = score_run(layout, store, run)? {
            ref_errors
                .entry((inst.cell, run.t_a.to_bits(), run.engine))
                .or_default()
                .entry(inst.size)
                .or_default()
                .push(v);
        }
    }
    let mut out = Vec::new();
    for (mi, method) in layout.runs.iter().enumerate() {
        if !matches!(layout.engine_of(method), EngineConfig::Bptns(_)) {
            continue;
        }
        let Some(c_method) = load_correlations(layout, store, method)? else {
            continue;
        };
        let truth = match layout.exact_partner(method) {
            Some(p) => load_correlations(layout, store, p)?,
            None => None,
        };
        for (ri, reference) in layout.runs.iter().enumerate() {
            if reference.slot != method.slot
                || reference.t_a != method.t_a
                || !matches!(layout.engine_of(reference), EngineConfig::Reference { .. })
            {
                continue;
            }
            let Some(c_ref) = load_correlations(layout, store, reference)? else {
                continue;
            };
            let inst = &layout.instances[method.slot];
            let Some(records) = ref_errors.get(&(inst.cell, method.t_a.to_bits(), reference.engine)) else {
                continue;
            };
            let plug = plug_in_reference_error(records, inst.size)?;
            let eps_cross = epsilon_c(&c_method, &c_ref)?;
            let rho = truth
                .as_ref()
                .and_then(|t| error_correlation_coefficient(&c_method, &c_ref, t).ok());
            let eps_direct = truth.as_ref().map(|t| epsilon_c(&c_method, t)).transpose()?;
            let id = format!(
                "{}~{}",
                layout.run_id(method),
                layout.engine_of(reference).label()
            );
            let row = TriangulationRow::new(
                id,
                TriangulationInput::new(eps_cross, plug.value)?,
                rho,
                plug.assumes_size_constancy,
            );
            out.push(TriangulatedRun {
                method_run: mi,
                reference_run: ri,
                eps_direct,
                row,
            });
        }
    }
    Ok(out)
}

/// Open the plan's store (or `out`) and run up to `upto`.
pub fn run_plan(plan: &ExperimentPlan, upto: Stage, workers: usize) -> Result<(RunSummary, Store)> {
    let store = Store::open(&plan.output_dir)?;
    let pipeline = Pipeline::new(plan, store.clone(), workers)?;
    Ok((pipeline.run(upto)?, store))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statevector_files_round_trip() {
        let s = StateVector::paramagnet(3);
        let back = decode_state(&encode_state(&s)).unwrap();
        for (a, b) in back.amplitudes().iter().zip(s.amplitudes()) {
            assert!((a - b).norm() < 1e-15);
        }
        assert!(decode_state(&encode_state(&s)[..20]).is_err());
    }
}
