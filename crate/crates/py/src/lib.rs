//! Python bindings: lattices, instances, both engines, the error metric,
//! triangulation and the plan runner.

use std::path::PathBuf;

use crosssim::bptns::{evolve_bptns_logged, measure_all_correlations_with, MeasurementConfig};
use crosssim::estimator::{self, CalibrationCurve, Noise, TriangulationInput};
use crosssim::exact::{exact_correlations, trotter_evolve_exact};
use crosssim::graphs::{self, Distribution};
use crosssim::harness::{ExperimentPlan, Pipeline, Stage, Store};
use crosssim::metrics;
use crosssim::model::{self, Schedule};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: crosssim::Error) -> PyErr {
    match e {
        crosssim::Error::Io(_) | crosssim::Error::SingularContraction(_) | crosssim::Error::MissingCells(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Coupling graph of logical sites.
#[pyclass(frozen, skip_from_py_object, module = "crosssim_py")]
#[derive(Clone)]
struct Lattice(graphs::LatticeGraph);

#[pymethods]
impl Lattice {
    #[staticmethod]
    #[pyo3(signature = (side, z_periodic = true))]
    fn cubic_dimer(side: usize, z_periodic: bool) -> PyResult<Self> {
        graphs::build_cubic_dimer_lattice(side, z_periodic).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn square(w: usize, h: usize) -> PyResult<Self> {
        graphs::build_square_lattice(w, h).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn diamond(a: usize, b: usize, c: usize) -> PyResult<Self> {
        graphs::build_diamond_lattice(a, b, c).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn from_edges(n_sites: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        graphs::LatticeGraph::from_edges(n_sites, &edges).map(Self).map_err(to_py)
    }

    #[getter]
    fn n_sites(&self) -> usize {
        self.0.n_sites()
    }

    #[getter]
    fn n_edges(&self) -> usize {
        self.0.n_edges()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.0.edges().iter().map(|e| (e.u, e.v)).collect()
    }

    /// Number of simple cycles of each length `0..=l_max`.
    fn loop_census(&self, l_max: usize) -> Vec<usize> {
        graphs::enumerate_loops(&self.0, l_max).census()
    }
}

/// A spin-glass instance: couplings on a lattice, optionally with dimers.
#[pyclass(frozen, skip_from_py_object, module = "crosssim_py")]
#[derive(Clone)]
struct Instance(graphs::SpinGlassInstance);

#[pymethods]
impl Instance {
    /// Draw couplings from `"bimodal"` or `"uniform"`.
    #[staticmethod]
    fn sample(lattice: &Lattice, distribution: &str, seed: u64) -> PyResult<Self> {
        let d: Distribution = distribution.parse().map_err(to_py)?;
        graphs::sample_couplings(&lattice.0, d, seed).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        graphs::SpinGlassInstance::from_text(text).map(Self).map_err(to_py)
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    fn content_hash(&self) -> String {
        self.0.content_hash()
    }

    #[getter]
    fn n_spins(&self) -> usize {
        self.0.n_spins()
    }

    fn couplings(&self) -> Vec<f64> {
        self.0.couplings().iter().map(|c| c.value()).collect()
    }
}

/// Quench settings: duration `t_a` in ns and the synthetic schedule.
#[pyclass(frozen, skip_from_py_object, module = "crosssim_py")]
#[derive(Clone)]
struct Quench(model::QuenchSpec);

#[pymethods]
impl Quench {
    #[new]
    #[pyo3(signature = (t_a, dt = model::DEFAULT_DT, s_end = model::DEFAULT_S_END, alpha = 1.0,
                        gamma0 = model::DEFAULT_GAMMA0, j0 = model::DEFAULT_J0))]
    fn new(t_a: f64, dt: f64, s_end: f64, alpha: f64, gamma0: f64, j0: f64) -> PyResult<Self> {
        let spec = model::QuenchSpec::new(t_a)
            .with_dt(dt)
            .with_s_end(s_end)
            .with_alpha(alpha)
            .with_schedule(Schedule::synthetic(gamma0, j0).map_err(to_py)?);
        spec.validate().map_err(to_py)?;
        Ok(Self(spec))
    }

    #[getter]
    fn t_a(&self) -> f64 {
        self.0.t_a
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.0.n_steps()
    }

    fn content_hash(&self) -> String {
        self.0.content_hash()
    }
}

/// Symmetric matrix of `⟨σᶻ_i σᶻ_j⟩` over spin pairs `i < j`.
#[pyclass(frozen, skip_from_py_object, module = "crosssim_py")]
#[derive(Clone)]
struct Correlations(metrics::CorrelationMatrix);

#[pymethods]
impl Correlations {
    #[staticmethod]
    fn from_packed(n_spins: usize, values: Vec<f64>) -> PyResult<Self> {
        metrics::CorrelationMatrix::from_packed(n_spins, values).map(Self).map_err(to_py)
    }

    #[getter]
    fn n_spins(&self) -> usize {
        self.0.n_spins()
    }

    fn get(&self, i: usize, j: usize) -> PyResult<f64> {
        let n = self.0.n_spins();
        if i >= n || j >= n || i == j {
            return Err(PyValueError::new_err(format!("invalid pair ({i}, {j}) for {n} spins")));
        }
        Ok(self.0.get(i, j))
    }

    /// Values in row-major upper-triangle order.
    fn packed(&self) -> Vec<f64> {
        self.0.packed().to_vec()
    }
}

/// Correlations of the exact Trotterized quench.
#[pyfunction]
fn exact_quench(instance: &Instance, quench: &Quench) -> PyResult<Correlations> {
    let state = trotter_evolve_exact(&instance.0, &quench.0).map_err(to_py)?;
    Ok(Correlations(exact_correlations(&state)))
}

/// Correlations of the BP tensor-network quench.
#[pyfunction]
#[pyo3(signature = (instance, quench, chi = 8, l_max = 0, dimer_expansion = true))]
fn bptns_quench(
    py: Python<'_>,
    instance: &Instance,
    quench: &Quench,
    chi: usize,
    l_max: usize,
    dimer_expansion: bool,
) -> PyResult<Correlations> {
    let cfg = MeasurementConfig::default()
        .with_chi(chi)
        .with_l_max(l_max)
        .with_dimer_expansion(dimer_expansion);
    let (inst, spec) = (instance.0.clone(), quench.0.clone());
    py.detach(move || {
        let evo = evolve_bptns_logged(&inst, &spec, &cfg)?;
        measure_all_correlations_with(&evo.state, &evo.cache, &cfg)
    })
    .map(Correlations)
    .map_err(to_py)
}

/// Normalized ℓ² error of `c` against `c_tilde`.
#[pyfunction]
fn epsilon_c(c: &Correlations, c_tilde: &Correlations) -> PyResult<f64> {
    metrics::epsilon_c(&c.0, &c_tilde.0).map_err(to_py)
}

/// `sqrt(eps_cross² − eps_ref²)`, or `None` when the reference error is larger.
#[pyfunction]
fn triangulate_error(eps_cross: f64, eps_ref: f64) -> PyResult<Option<f64>> {
    let input = TriangulationInput::new(eps_cross, eps_ref).map_err(to_py)?;
    Ok(estimator::triangulate_error(&input).value())
}

/// Noisy copy of `c`: pass `m` for finite-sample noise, `sigma` for Gaussian
/// noise, or both.
#[pyfunction]
#[pyo3(signature = (c, seed, m = None, sigma = None))]
fn emulate_noisy_reference(c: &Correlations, seed: u64, m: Option<usize>, sigma: Option<f64>) -> PyResult<Correlations> {
    let noise = match (m, sigma) {
        (Some(m), None) => Noise::FiniteSample { m },
        (None, Some(sigma)) => Noise::Gaussian { sigma },
        (Some(m), Some(sigma)) => Noise::Mixed { m, sigma },
        (None, None) => return Err(PyValueError::new_err("give m, sigma or both")),
    };
    estimator::emulate_noisy_reference(&c.0, noise, seed)
        .map(Correlations)
        .map_err(to_py)
}

/// Every model annealing time whose calibration curve value equals `measured_q2`.
#[pyfunction]
fn calibrate_timescale(points: Vec<(f64, f64)>, measured_q2: f64, fixed_quench: f64, model_t_a: f64) -> PyResult<Vec<f64>> {
    let curve = CalibrationCurve::new(points).map_err(to_py)?;
    estimator::calibrate_timescale(&curve, measured_q2, fixed_quench, model_t_a)
        .map(|c| c.candidates)
        .map_err(to_py)
}

/// Run a plan file through `stage` and return `(computed, skipped, failed)`.
#[pyfunction]
#[pyo3(signature = (plan_path, stage = "triangulate", workers = 1, out = None))]
fn run_plan(
    py: Python<'_>,
    plan_path: PathBuf,
    stage: &str,
    workers: usize,
    out: Option<PathBuf>,
) -> PyResult<(usize, usize, usize)> {
    let stage = match stage {
        "gen" => Stage::Gen,
        "evolve" => Stage::Evolve,
        "measure" => Stage::Measure,
        "score" => Stage::Score,
        "triangulate" => Stage::Triangulate,
        other => return Err(PyValueError::new_err(format!("unknown stage `{other}`"))),
    };
    let mut plan = ExperimentPlan::load(&plan_path).map_err(to_py)?;
    if let Some(out) = out {
        plan.output_dir = out;
    }
    py.detach(move || {
        let store = Store::open(&plan.output_dir)?;
        Pipeline::new(&plan, store, workers)?.run(stage)
    })
    .map(|s| (s.computed, s.skipped, s.failures.len()))
    .map_err(to_py)
}

#[pymodule]
fn crosssim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Lattice>()?;
    m.add_class::<Instance>()?;
    m.add_class::<Quench>()?;
    m.add_class::<Correlations>()?;
    m.add_function(wrap_pyfunction!(exact_quench, m)?)?;
    m.add_function(wrap_pyfunction!(bptns_quench, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_c, m)?)?;
    m.add_function(wrap_pyfunction!(triangulate_error, m)?)?;
    m.add_function(wrap_pyfunction!(emulate_noisy_reference, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_timescale, m)?)?;
    m.add_function(wrap_pyfunction!(run_plan, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrappers_forward_to_the_core() {
        let lattice = Lattice::square(2, 2).unwrap();
        assert_eq!(lattice.loop_census(4), vec![0, 0, 0, 0, 1]);
        let inst = Instance::sample(&lattice, "bimodal", 3).unwrap();
        let quench = Quench::new(1.0, 0.05, 0.6, 1.0, 1.0, 1.0).unwrap();
        let c = exact_quench(&inst, &quench).unwrap();
        assert_eq!(epsilon_c(&c, &c).unwrap(), 0.0);
        assert_eq!(triangulate_error(5.0, 3.0).unwrap(), Some(4.0));
        assert_eq!(triangulate_error(3.0, 5.0).unwrap(), None);
        assert_eq!(calibrate_timescale(vec![(5.0, 0.2), (10.0, 0.4)], 0.3, 5.0, 5.0).unwrap(), vec![7.5]);
        assert!(Instance::sample(&lattice, "gaussian", 1).is_err());
        assert!(c.get(1, 1).is_err());
    }
}
