//! Python bindings over the core simulator: system configuration, seeded
//! channel generation, and the joint precoding/surface solver.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use bdris::channels::{draw_channels, FadingSpec, GeometrySpec};
use bdris::model::{Architecture, PowerBudget, Reciprocity};
use bdris::optimizer::{bcd_solve, derive_seed, fp_precoder_baseline, SolveOptions};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_reciprocity(s: &str) -> PyResult<Reciprocity> {
    match s {
        "reciprocal" => Ok(Reciprocity::Reciprocal),
        "non-reciprocal" => Ok(Reciprocity::NonReciprocal),
        other => Err(err(format!(
            "reciprocity must be 'reciprocal' or 'non-reciprocal', got {other:?}"
        ))),
    }
}

/// Scenario configuration: antenna/cell/user counts, the power split, noise
/// powers, and the surface architecture.
#[pyclass(name = "SystemConfig")]
struct PySystemConfig {
    inner: bdris::SystemConfig,
}

#[pymethods]
impl PySystemConfig {
    #[new]
    #[pyo3(signature = (
        n_tx, n_cells, group_size, k_r, k_t,
        p_total_dbm = 30.0, tx_fraction = 0.99,
        sigma_i_dbm = -90.0, sigma_r_dbm = -90.0,
        reciprocity = "non-reciprocal"
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n_tx: usize,
        n_cells: usize,
        group_size: usize,
        k_r: usize,
        k_t: usize,
        p_total_dbm: f64,
        tx_fraction: f64,
        sigma_i_dbm: f64,
        sigma_r_dbm: f64,
        reciprocity: &str,
    ) -> PyResult<Self> {
        let architecture = if group_size == 1 {
            Architecture::CwSingle
        } else if group_size == n_cells {
            Architecture::CwFully
        } else {
            Architecture::CwGroup
        };
        let inner = bdris::SystemConfig {
            n_tx,
            n_cells,
            group_size,
            k_r,
            k_t,
            p_total_dbm,
            tx_fraction,
            sigma_i_dbm,
            sigma_r_dbm,
            reciprocity: parse_reciprocity(reciprocity)?,
            architecture,
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_tx(&self) -> usize {
        self.inner.n_tx
    }

    #[getter]
    fn n_cells(&self) -> usize {
        self.inner.n_cells
    }

    #[getter]
    fn group_size(&self) -> usize {
        self.inner.group_size
    }

    #[getter]
    fn n_users(&self) -> usize {
        self.inner.n_users()
    }

    fn __repr__(&self) -> String {
        format!(
            "SystemConfig(n_tx={}, n_cells={}, group_size={}, k_r={}, k_t={})",
            self.inner.n_tx, self.inner.n_cells, self.inner.group_size, self.inner.k_r,
            self.inner.k_t
        )
    }
}

/// One channel realization (opaque handle).
#[pyclass(name = "ChannelSet")]
struct PyChannelSet {
    inner: bdris::ChannelSet,
}

#[pymethods]
impl PyChannelSet {
    #[getter]
    fn n_users(&self) -> usize {
        self.inner.n_users()
    }

    fn __repr__(&self) -> String {
        format!(
            "ChannelSet(users={}, tx={}, cells={})",
            self.inner.n_users(),
            self.inner.n_tx(),
            self.inner.n_cells()
        )
    }
}

/// Solve outcome: the achieved sum rate and convergence diagnostics.
#[pyclass(name = "SolveResult")]
struct PySolveResult {
    #[pyo3(get)]
    sum_rate: f64,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    objective_trace: Vec<f64>,
}

impl From<bdris::Solution> for PySolveResult {
    fn from(sol: bdris::Solution) -> Self {
        Self {
            sum_rate: sol.sum_rate(),
            iterations: sol.report.iterations,
            converged: sol.report.converged,
            objective_trace: sol.report.objective_trace,
        }
    }
}

/// 3GPP-style path loss in dB for a distance in meters.
#[pyfunction]
fn path_loss_db(d: f64) -> PyResult<f64> {
    bdris::channels::path_loss_db(d).map_err(err)
}

/// Draw a seeded channel realization with the default paper geometry
/// (transmitter at [0, -70] m, surface at [300, 0] m, user disks of radius
/// 3 m at [300, ∓10] m).
#[pyfunction]
#[pyo3(signature = (cfg, seed, rician_kappa = 1.0))]
fn draw_channel_set(cfg: &PySystemConfig, seed: u64, rician_kappa: f64) -> PyResult<PyChannelSet> {
    let sys = &cfg.inner;
    let geometry = GeometrySpec::default().sample_users_seeded(sys.k_r, sys.k_t, seed);
    let fading = FadingSpec {
        rician_kappa,
        seed: derive_seed(&[seed, 1]),
        antenna_spacing: 0.5,
    };
    let inner = draw_channels(&geometry, &fading, sys).map_err(err)?;
    Ok(PyChannelSet { inner })
}

/// Jointly optimize the precoder and surface for one channel realization.
#[pyfunction]
#[pyo3(signature = (cfg, channels, seed = 0, starts = 3, max_sweeps = 200, tolerance = 1e-4))]
fn solve(
    cfg: &PySystemConfig,
    channels: &PyChannelSet,
    seed: u64,
    starts: usize,
    max_sweeps: usize,
    tolerance: f64,
) -> PyResult<PySolveResult> {
    let opts = SolveOptions {
        max_sweeps,
        tolerance,
        starts,
        seed,
    };
    bcd_solve(&cfg.inner, &channels.inner, &opts, None)
        .map(PySolveResult::from)
        .map_err(err)
}

/// RIS-free reference: the same fractional-programming precoder loop with the
/// whole power budget at the transmitter.
#[pyfunction]
#[pyo3(signature = (cfg, channels, seed = 0, max_sweeps = 200, tolerance = 1e-4))]
fn solve_no_ris(
    cfg: &PySystemConfig,
    channels: &PyChannelSet,
    seed: u64,
    max_sweeps: usize,
    tolerance: f64,
) -> PyResult<PySolveResult> {
    let opts = SolveOptions {
        max_sweeps,
        tolerance,
        starts: 1,
        seed,
    };
    let mut budget = cfg.inner.power_budget();
    budget = PowerBudget {
        p_t: budget.p_t + budget.p_a,
        p_a: 0.0,
        ..budget
    };
    fp_precoder_baseline(&cfg.inner, &channels.inner, &budget, &opts)
        .map(PySolveResult::from)
        .map_err(err)
}

#[pymodule]
fn bdris_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemConfig>()?;
    m.add_class::<PyChannelSet>()?;
    m.add_class::<PySolveResult>()?;
    m.add_function(wrap_pyfunction!(path_loss_db, m)?)?;
    m.add_function(wrap_pyfunction!(draw_channel_set, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(solve_no_ris, m)?)?;
    Ok(())
}
