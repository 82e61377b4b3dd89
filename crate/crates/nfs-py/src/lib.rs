//! Python bindings for `nfs_core`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use nfs_core::angular::{self, HyperfineConfig, Projection, SpinHalfInt};
use nfs_core::currents::{Geometry, NuclearConstants};
use nfs_core::photonics::{self, ChshSettings, InterferometerConfig, WindowSpec};
use nfs_core::scattering::{self, SampleConfig, SeriesOptions, TimeGrid};
use nfs_core::switching::{self, DesignOptions, RotationSpec, SwitchingEvent};
use nfs_core::NfsError;
use num_complex::Complex64;

const NS: f64 = 1e-9;

fn err(e: NfsError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn twice(x: f64, what: &str) -> PyResult<i32> {
    let t = 2.0 * x;
    if (t - t.round()).abs() > 1e-12 {
        return Err(PyValueError::new_err(format!("{what} = {x} is not a multiple of 1/2")));
    }
    Ok(t.round() as i32)
}

fn spin(x: f64) -> PyResult<SpinHalfInt> {
    let t = twice(x, "spin")?;
    if t < 0 {
        return Err(PyValueError::new_err("spin must be non-negative"));
    }
    Ok(SpinHalfInt::from_twice(t as u32))
}

fn proj(x: f64) -> PyResult<Projection> {
    Ok(Projection::from_twice(twice(x, "projection")?))
}

/// Wigner small-d element `d^j_{m_to, m_from}(beta)`; spins as floats (0.5, 1.5, ...).
#[pyfunction]
fn wigner_small_d(j: f64, m_to: f64, m_from: f64, beta: f64) -> PyResult<f64> {
    angular::wigner_small_d(spin(j)?, proj(m_to)?, proj(m_from)?, beta).map_err(err)
}

#[pyfunction]
fn three_j(j1: f64, j2: f64, j3: f64, m1: f64, m2: f64, m3: f64) -> PyResult<f64> {
    Ok(angular::three_j(spin(j1)?, spin(j2)?, spin(j3)?, proj(m1)?, proj(m2)?, proj(m3)?))
}

/// Six-line hyperfine scheme of the 14.4 keV transition.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct LevelScheme {
    inner: angular::LevelScheme,
}

#[pymethods]
impl LevelScheme {
    /// Field chosen so the first beat minimum falls at `t1_ns`.
    #[staticmethod]
    #[pyo3(signature = (t1_ns = 8.0))]
    fn calibrated(t1_ns: f64) -> PyResult<Self> {
        let cfg = HyperfineConfig::calibrated_for_t1(t1_ns * NS).map_err(err)?;
        Ok(LevelScheme { inner: angular::build_level_scheme(&cfg).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (field_tesla, g_ground = angular::FE57_G_GROUND, g_excited = angular::FE57_G_EXCITED))]
    fn from_field(field_tesla: f64, g_ground: f64, g_excited: f64) -> PyResult<Self> {
        let cfg = HyperfineConfig { field_tesla, g_ground, g_excited, override_frequencies: None };
        Ok(LevelScheme { inner: angular::build_level_scheme(&cfg).map_err(err)? })
    }

    /// rad/s
    #[getter]
    fn omega0(&self) -> f64 {
        self.inner.omega0()
    }

    /// rad/s
    #[getter]
    fn omega1(&self) -> f64 {
        self.inner.omega1()
    }

    /// `(m_g, m_e, omega_rad_per_s)` per line.
    #[getter]
    fn lines(&self) -> Vec<(f64, f64, f64)> {
        self.inner.lines.iter().map(|l| (l.m_g.value(), l.m_e.value(), l.omega_hf)).collect()
    }

    fn suppression_times_ns(&self, n: usize) -> Vec<f64> {
        switching::suppression_times(&self.inner, n).into_iter().map(|t| t / NS).collect()
    }

    fn __repr__(&self) -> String {
        format!("LevelScheme(omega0={:.6e}, omega1={:.6e})", self.inner.omega0(), self.inner.omega1())
    }
}

/// Ordered field rotations, each `(t_ns, alpha_deg, beta_deg, gamma_deg)`.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct SwitchSequence {
    inner: switching::SwitchSequence,
}

#[pymethods]
impl SwitchSequence {
    #[new]
    #[pyo3(signature = (events = Vec::new()))]
    fn new(events: Vec<(f64, f64, f64, f64)>) -> PyResult<Self> {
        let ev = events
            .into_iter()
            .map(|(t, a, b, g)| SwitchingEvent { time: t * NS, rotation: RotationSpec::new(a.to_radians(), b.to_radians(), g.to_radians()) })
            .collect();
        Ok(SwitchSequence { inner: switching::SwitchSequence::new(ev).map_err(err)? })
    }

    #[getter]
    fn events(&self) -> Vec<(f64, f64, f64, f64)> {
        self.inner
            .events()
            .iter()
            .map(|e| (e.time / NS, e.rotation.alpha.to_degrees(), e.rotation.beta.to_degrees(), e.rotation.gamma.to_degrees()))
            .collect()
    }

    #[getter]
    fn times_ns(&self) -> Vec<f64> {
        self.inner.times().into_iter().map(|t| t / NS).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.events().len()
    }

    fn __repr__(&self) -> String {
        format!("SwitchSequence(times_ns={:?})", self.times_ns())
    }
}

/// Exit-plane field on the time grid, projected on σ and π.
#[pyclass(frozen)]
struct FieldRecord {
    inner: scattering::FieldRecord,
}

#[pymethods]
impl FieldRecord {
    #[getter]
    fn t_ns(&self) -> Vec<f64> {
        self.inner.grid.times().into_iter().map(|t| t / NS).collect()
    }

    #[getter]
    fn e_sigma(&self) -> Vec<Complex64> {
        self.inner.e_sigma.clone()
    }

    #[getter]
    fn e_pi(&self) -> Vec<Complex64> {
        self.inner.e_pi.clone()
    }

    /// `(I_total, I_sigma, I_pi)` as three lists.
    fn intensity(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let rows = scattering::intensity_series(&self.inner);
        (rows.iter().map(|r| r.total).collect(), rows.iter().map(|r| r.sigma).collect(), rows.iter().map(|r| r.pi).collect())
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn truncation_order(&self) -> usize {
        self.inner.truncation_order
    }

    #[getter]
    fn order_maxima(&self) -> Vec<f64> {
        self.inner.order_maxima.clone()
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        scattering::write_intensity_csv(&self.inner, &mut buf).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(String::from_utf8(buf).expect("ascii"))
    }
}

#[pyclass(frozen)]
struct TwoModeState {
    inner: photonics::TwoModeState,
}

#[pymethods]
impl TwoModeState {
    #[new]
    #[pyo3(signature = (alpha, beta, loss_fraction = 0.0))]
    fn new(alpha: Complex64, beta: Complex64, loss_fraction: f64) -> PyResult<Self> {
        Ok(TwoModeState { inner: photonics::TwoModeState::new(alpha, beta, loss_fraction).map_err(err)? })
    }

    #[getter]
    fn alpha(&self) -> Complex64 {
        self.inner.alpha
    }

    #[getter]
    fn beta(&self) -> Complex64 {
        self.inner.beta
    }

    #[getter]
    fn loss_fraction(&self) -> f64 {
        self.inner.loss_fraction
    }

    fn visibility(&self) -> f64 {
        photonics::visibility(&self.inner)
    }

    /// Phases in radians.
    #[pyo3(signature = (phase_sigma, phase_pi, splitter_transmittance = 0.5))]
    fn detector_probabilities(&self, phase_sigma: f64, phase_pi: f64, splitter_transmittance: f64) -> PyResult<(f64, f64)> {
        let cfg = InterferometerConfig { phase_sigma, phase_pi, splitter_transmittance };
        photonics::detector_probabilities(&self.inner, &cfg).map_err(err)
    }

    /// CHSH combination at `(a, a', b, b')` in radians; canonical settings by default.
    #[pyo3(signature = (settings = None))]
    fn chsh(&self, settings: Option<(f64, f64, f64, f64)>) -> f64 {
        let s = settings.map_or_else(ChshSettings::canonical, |(a, a_prime, b, b_prime)| ChshSettings { a, a_prime, b, b_prime });
        photonics::bell_scan(&self.inner, &s).s
    }

    fn __repr__(&self) -> String {
        format!("TwoModeState(alpha={}, beta={}, loss_fraction={:.3})", self.inner.alpha, self.inner.beta, self.inner.loss_fraction)
    }
}

/// Forward-scattered field of the standard geometry (beam along y,
/// polarization along x, field along z).
#[pyfunction]
#[pyo3(signature = (xi, sequence = None, scheme = None, t_end_ns = 300.0, dt_ns = 0.05, first_order_only = false, max_order = 32, tol_rel = 1e-8))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    xi: f64,
    sequence: Option<SwitchSequence>,
    scheme: Option<LevelScheme>,
    t_end_ns: f64,
    dt_ns: f64,
    first_order_only: bool,
    max_order: usize,
    tol_rel: f64,
) -> PyResult<FieldRecord> {
    let consts = NuclearConstants::fe57();
    let geom = Geometry::standard(&consts);
    let scheme = match scheme {
        Some(s) => s.inner,
        None => LevelScheme::calibrated(8.0)?.inner,
    };
    let seq = sequence.map(|s| s.inner).unwrap_or_default();
    let sample = SampleConfig::new(xi).map_err(err)?;
    let grid = TimeGrid::new(0.0, t_end_ns * NS, dt_ns * NS).map_err(err)?;
    let rec = if first_order_only {
        scattering::first_order_for_sequence(&sample, &geom, &scheme, &seq, &grid, &consts)
    } else {
        scattering::solve_series(&sample, &geom, &scheme, &seq, &grid, &consts, &SeriesOptions { max_order, tol_rel, keep_orders: false })
    }
    .map_err(err)?;
    Ok(FieldRecord { inner: rec })
}

/// Designed four-switch sequence ending in a `"sigma"` or `"pi"` release.
#[pyfunction]
#[pyo3(signature = (final_polarization, xi = 5.0, t_max_ns = 300.0, scheme = None))]
fn four_switch_plan(final_polarization: &str, xi: f64, t_max_ns: f64, scheme: Option<LevelScheme>) -> PyResult<SwitchSequence> {
    let pol = match final_polarization {
        "sigma" => switching::Polarization::Sigma,
        "pi" => switching::Polarization::Pi,
        other => return Err(PyValueError::new_err(format!("final_polarization must be 'sigma' or 'pi', got {other:?}"))),
    };
    let consts = NuclearConstants::fe57();
    let scheme = match scheme {
        Some(s) => s.inner,
        None => LevelScheme::calibrated(8.0)?.inner,
    };
    let init = switching::initial_amplitudes(&Geometry::standard(&consts), &scheme, &SampleConfig::new(xi).map_err(err)?).map_err(err)?;
    let plan = switching::four_switch_plan(pol, &init, t_max_ns * NS, &DesignOptions::default()).map_err(err)?;
    Ok(SwitchSequence { inner: plan.sequence })
}

/// Two-mode state from σ and π detection windows given in ns.
#[pyfunction]
fn extract_modes(record: &FieldRecord, sigma_window_ns: (f64, f64), pi_window_ns: (f64, f64)) -> PyResult<TwoModeState> {
    let w = WindowSpec {
        sigma_window: (sigma_window_ns.0 * NS, sigma_window_ns.1 * NS),
        pi_window: (pi_window_ns.0 * NS, pi_window_ns.1 * NS),
    };
    Ok(TwoModeState { inner: photonics::extract_modes(&record.inner, &w).map_err(err)? })
}

/// Runs `simulate`, `design`, `scan` or `entangle` on a JSON config string,
/// writing into `out_dir`; returns the command summary as a JSON string.
#[pyfunction]
fn run_config(command: &str, config_json: &str, out_dir: &str) -> PyResult<String> {
    use nfs_core::cli;
    let cfg = cli::parse_config(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let out = std::path::Path::new(out_dir);
    let json = match command {
        "simulate" => cli::cmd_simulate(&cfg, out).map(|s| serde_json::to_string(&s)),
        "design" => cli::cmd_design(&cfg, out).map(|s| serde_json::to_string(&s)),
        "scan" => cli::cmd_scan(&cfg, out).map(|s| serde_json::to_string(&s)),
        "entangle" => cli::cmd_entangle(&cfg, out).map(|s| serde_json::to_string(&s)),
        other => return Err(PyValueError::new_err(format!("unknown command {other:?}"))),
    };
    json.map_err(|e| PyValueError::new_err(format!("exit {}: {e}", e.exit_code())))?.map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
mod nfs_py {
    #[pymodule_export]
    use super::{
        extract_modes, four_switch_plan, run_config, simulate, three_j, wigner_small_d, FieldRecord, LevelScheme, SwitchSequence, TwoModeState,
    };
}
