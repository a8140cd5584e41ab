//! Python bindings for `fiberlink_core`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use fiberlink_core::constants::{fiber_delay, DEFAULT_NU0};
use fiberlink_core::link::{self, FreeRunning};
use fiberlink_core::noise::{self, AmplitudeConvention, NoiseSpec, ThermalModel};
use fiberlink_core::postproc::{self, BudgetEntry, Policy, SelectionConfig, UncertaintyBudget};
use fiberlink_core::scenario::Scenario;
use fiberlink_core::stability::{self, Kernel, TauSpec};
use fiberlink_core::{io, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Uniformly sampled fractional-frequency record with a validity mask.
#[pyclass(name = "FreqSeries", module = "fiberlink", skip_from_py_object)]
#[derive(Clone)]
struct PyFreqSeries {
    inner: fiberlink_core::FreqSeries,
}

#[pymethods]
impl PyFreqSeries {
    #[new]
    #[pyo3(signature = (y, gate=1.0, t0=58000.0, nu0=DEFAULT_NU0, valid=None))]
    fn new(y: Vec<f64>, gate: f64, t0: f64, nu0: f64, valid: Option<Vec<bool>>) -> PyResult<Self> {
        let valid = valid.unwrap_or_else(|| vec![true; y.len()]);
        let y = y
            .into_iter()
            .zip(&valid)
            .map(|(v, &ok)| if ok { v } else { f64::NAN })
            .collect();
        fiberlink_core::FreqSeries::from_parts(t0, gate, nu0, y, valid)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (path, nu0=None))]
    fn read(path: PathBuf, nu0: Option<f64>) -> PyResult<Self> {
        io::read_series(&path, nu0).map(|inner| Self { inner }).map_err(py_err)
    }

    #[pyo3(signature = (path, config_hash="python"))]
    fn write(&self, path: PathBuf, config_hash: &str) -> PyResult<()> {
        io::write_series(&path, &self.inner, config_hash, "y").map_err(py_err)
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y().to_vec()
    }

    #[getter]
    fn valid(&self) -> Vec<bool> {
        self.inner.valid().to_vec()
    }

    #[getter]
    fn gate(&self) -> f64 {
        self.inner.gate()
    }

    #[getter]
    fn t0(&self) -> f64 {
        self.inner.t0()
    }

    #[getter]
    fn nu0(&self) -> f64 {
        self.inner.nu0()
    }

    fn uptime(&self) -> f64 {
        self.inner.uptime()
    }

    fn scaled(&self, c: f64) -> Self {
        Self {
            inner: self.inner.scaled(c),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "FreqSeries(n={}, gate={}, t0={}, valid={})",
            self.inner.len(),
            self.inner.gate(),
            self.inner.t0(),
            self.inner.valid_count()
        )
    }
}

type Curve = (Vec<f64>, Vec<f64>, Vec<usize>);

fn taus_for(s: &fiberlink_core::FreqSeries, taus: Option<Vec<f64>>) -> Vec<f64> {
    taus.unwrap_or_else(|| TauSpec::Grid125.resolve(s.len(), s.gate()))
}

fn unpack(c: fiberlink_core::StabilityCurve) -> Curve {
    (c.taus, c.values, c.counts)
}

/// Overlapping Allan deviation: `(taus, values, counts)`.
#[pyfunction]
#[pyo3(signature = (s, taus=None))]
fn adev(s: &PyFreqSeries, taus: Option<Vec<f64>>) -> PyResult<Curve> {
    stability::adev(&s.inner, &taus_for(&s.inner, taus)).map(unpack).map_err(py_err)
}

/// Modified Allan deviation: `(taus, values, counts)`.
#[pyfunction]
#[pyo3(signature = (s, taus=None))]
fn mdev(s: &PyFreqSeries, taus: Option<Vec<f64>>) -> PyResult<Curve> {
    stability::mdev(&s.inner, &taus_for(&s.inner, taus)).map(unpack).map_err(py_err)
}

/// Seeded power-law noise; `h` maps exponents (-2..=2) to levels.
#[pyfunction]
#[pyo3(signature = (h, n, gate=1.0, seed=0, t0=58000.0, nu0=DEFAULT_NU0))]
fn power_law(h: BTreeMap<i32, f64>, n: usize, gate: f64, seed: u64, t0: f64, nu0: f64) -> PyResult<PyFreqSeries> {
    let spec = NoiseSpec {
        h,
        seed,
        ..Default::default()
    };
    noise::realize(&spec, n, gate, t0, nu0)
        .map(|inner| PyFreqSeries { inner })
        .map_err(py_err)
}

/// `h_2` giving sampled white phase noise an ADEV of `adev` at the gate.
#[pyfunction]
#[pyo3(signature = (adev, gate=1.0))]
fn white_pm_h2(adev: f64, gate: f64) -> f64 {
    noise::white_pm_h2(adev, gate)
}

#[pyfunction]
#[pyo3(signature = (gate=1.0, nu0=DEFAULT_NU0))]
fn slip_step(gate: f64, nu0: f64) -> f64 {
    noise::slip_step(gate, nu0)
}

/// Thermal limit of an uncompensated section with a daily cycle of
/// `excursion_k` peak to peak.
#[pyfunction]
fn thermal_limit(length_m: f64, excursion_k: f64, tau: f64) -> PyResult<f64> {
    let tm = ThermalModel::daily(length_m, excursion_k, AmplitudeConvention::PeakToPeak);
    link::uncompensated_thermal_limit(&tm, tau).map_err(py_err)
}

/// Delay-limited residual of a white-PM free-running level `adev_1s` over
/// `length_m` of fiber, assuming a 1 Hz measurement bandwidth.
#[pyfunction]
#[pyo3(signature = (adev_1s, length_m, taus, bandwidth=1.0))]
fn residual_floor(adev_1s: f64, length_m: f64, taus: Vec<f64>, bandwidth: f64) -> PyResult<Vec<f64>> {
    let free = FreeRunning::Spec(NoiseSpec::white_pm(adev_1s, 1.0, 0));
    link::residual_floor(&free, fiber_delay(length_m), &taus, Kernel::Averaged { bandwidth })
        .map(|c| c.values)
        .map_err(py_err)
}

#[pyfunction]
fn rf_reference_contribution(beat_hz: f64, sigma_rf: f64, nu0: f64) -> PyResult<f64> {
    link::rf_reference_contribution(beat_hz, sigma_rf, nu0).map_err(py_err)
}

#[pyfunction]
fn desync_error(drift_hz_per_s: f64, dt: f64, nu0: f64) -> PyResult<f64> {
    link::desync_error(drift_hz_per_s, dt, nu0).map_err(py_err)
}

#[pyfunction]
fn uptime_product(fractions: Vec<f64>) -> PyResult<f64> {
    postproc::uptime_product(&fractions).map_err(py_err)
}

/// Combine `(label, bias, uncertainty)` entries: `(bias, quadrature, total)`.
#[pyfunction]
#[pyo3(signature = (entries, policy="conservative"))]
fn combine_budget(entries: Vec<(String, f64, f64)>, policy: &str) -> PyResult<(f64, f64, f64)> {
    let b = UncertaintyBudget {
        entries: entries
            .into_iter()
            .map(|(label, bias, uncertainty)| BudgetEntry {
                label,
                bias,
                uncertainty,
            })
            .collect(),
        policy: policy.parse::<Policy>().map_err(py_err)?,
    };
    postproc::combine_budget(&b)
        .map(|t| (t.bias, t.quadrature, t.uncertainty))
        .map_err(py_err)
}

/// Three-observable selection with default thresholds: `(keep, reasons)`.
#[pyfunction]
fn select(s: &PyFreqSeries) -> PyResult<(Vec<bool>, Vec<u8>)> {
    postproc::three_observable_select(&s.inner, &SelectionConfig::default())
        .map(|o| (o.mask.bits, o.reasons))
        .map_err(py_err)
}

/// Simulate a scenario file: `(remote, end_to_end)`.
#[pyfunction]
#[pyo3(signature = (path, seed=None))]
fn simulate(path: PathBuf, seed: Option<u64>) -> PyResult<(PyFreqSeries, PyFreqSeries)> {
    let (scn, _) = Scenario::load(&path).map_err(py_err)?;
    let run = &scn.run;
    let sim = link::simulate_end_to_end(
        &scn.topology().map_err(py_err)?,
        &scn.link_noise().map_err(py_err)?,
        run.samples().map_err(py_err)?,
        run.gate,
        run.t0_mjd,
        run.nu0,
        seed.unwrap_or(run.seed),
    )
    .map_err(py_err)?;
    Ok((PyFreqSeries { inner: sim.remote }, PyFreqSeries { inner: sim.end_to_end }))
}

#[pymodule]
fn fiberlink(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFreqSeries>()?;
    m.add_function(wrap_pyfunction!(adev, m)?)?;
    m.add_function(wrap_pyfunction!(mdev, m)?)?;
    m.add_function(wrap_pyfunction!(power_law, m)?)?;
    m.add_function(wrap_pyfunction!(white_pm_h2, m)?)?;
    m.add_function(wrap_pyfunction!(slip_step, m)?)?;
    m.add_function(wrap_pyfunction!(thermal_limit, m)?)?;
    m.add_function(wrap_pyfunction!(residual_floor, m)?)?;
    m.add_function(wrap_pyfunction!(rf_reference_contribution, m)?)?;
    m.add_function(wrap_pyfunction!(desync_error, m)?)?;
    m.add_function(wrap_pyfunction!(uptime_product, m)?)?;
    m.add_function(wrap_pyfunction!(combine_budget, m)?)?;
    m.add_function(wrap_pyfunction!(select, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("DEFAULT_NU0", DEFAULT_NU0)?;
    Ok(())
}
