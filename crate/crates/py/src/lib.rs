//! Python bindings: tube specs, support fields, classification, obstruction
//! sweeps, tilted sections and the ellipsoid criterion.
//!
//! Reports cross the boundary as plain dicts with the same layout as the
//! JSON files written by the command-line tool.

use copscan_core::io::{parse_json, parse_spec, to_json_string};
use copscan_core::obstruction::{ellipsoid_criterion, obstruction_field};
use copscan_core::slicing::{cross_section, SliceOptions, TiltedPlane};
use copscan_core::tube::{transverse_support, AffineMap};
use copscan_core::{Config, Family, SphereDim, SupportField, TubeSpec};
use nalgebra::Vector3;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde_json::{json, Value};

create_exception!(copscan, CopscanError, PyValueError);

fn err(e: copscan_core::Error) -> PyErr {
    CopscanError::new_err(e.to_string())
}

/// Converts a Python object (dict, list, number) to JSON via `json.dumps`.
fn to_value(obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    let text: String = obj
        .py()
        .import("json")?
        .call_method1("dumps", (obj,))?
        .extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Converts serializable data to Python objects via `json.loads`.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, data: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = to_json_string(data).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn sphere_dim(dim: u8) -> PyResult<SphereDim> {
    SphereDim::new(dim).map_err(err)
}

/// Embeds a section-space vector (2 or 3 components) in `R³`.
fn vector(dim: SphereDim, x: &[f64]) -> PyResult<Vector3<f64>> {
    if x.len() != dim.section_dim() {
        return Err(CopscanError::new_err(format!(
            "expected {} components, got {}",
            dim.section_dim(),
            x.len()
        )));
    }
    let mut v = Vector3::zeros();
    v.as_mut_slice()[..x.len()].copy_from_slice(x);
    Ok(v)
}

/// Like [`vector`], normalized to unit length.
fn direction(dim: SphereDim, tau: &[f64]) -> PyResult<Vector3<f64>> {
    let v = vector(dim, tau)?;
    let norm = v.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(CopscanError::new_err(
            "direction must be a nonzero finite vector",
        ));
    }
    Ok(v / norm)
}

/// A tube of convex sections over a height window.
#[pyclass(name = "Tube", module = "copscan", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTube {
    spec: TubeSpec,
}

#[pymethods]
impl PyTube {
    /// Builds a generator family. `params` overrides the family defaults and
    /// `window` the default height window.
    #[staticmethod]
    #[pyo3(signature = (family, dim = 2, params = None, window = None))]
    fn generate(
        family: &str,
        dim: u8,
        params: Option<&Bound<'_, PyAny>>,
        window: Option<(f64, f64)>,
    ) -> PyResult<Self> {
        let dim = sphere_dim(dim)?;
        let mut fam = Family::default_for(family, dim).map_err(err)?;
        if let Some(params) = params {
            let mut value =
                serde_json::to_value(&fam).map_err(|e| PyValueError::new_err(e.to_string()))?;
            let Value::Object(overrides) = to_value(params)? else {
                return Err(PyValueError::new_err("params must be a dict"));
            };
            for (k, v) in overrides {
                value["params"][k] = v;
            }
            fam = parse_json(&value.to_string()).map_err(err)?;
        }
        let spec = TubeSpec::generate(dim, fam, window).map_err(err)?;
        Ok(PyTube { spec })
    }

    /// Parses a tube spec JSON document.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyTube {
            spec: parse_spec(text).map_err(err)?,
        })
    }

    /// Loads a tube spec file.
    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(PyTube {
            spec: copscan_core::io::load_spec(&path).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        to_json_string(&self.spec).map_err(err)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.spec)
    }

    /// Applies an affine map given as a dict with `matrix`, `shear`,
    /// `offset`, `z_scale` and `z_offset`.
    fn transformed(&self, map: &Bound<'_, PyAny>) -> PyResult<Self> {
        let map: AffineMap = parse_json(&to_value(map)?.to_string()).map_err(err)?;
        Ok(PyTube {
            spec: self.spec.transformed(&map).map_err(err)?,
        })
    }

    /// Uniform rescaling of the whole tube.
    fn scaled(&self, s: f64) -> PyResult<Self> {
        Ok(PyTube {
            spec: self.spec.scaled(s).map_err(err)?,
        })
    }

    /// Section dimension d (1 or 2).
    #[getter]
    fn dim(&self) -> usize {
        self.spec.dim.d()
    }

    /// Ambient dimension n = d + 2.
    #[getter]
    fn n(&self) -> usize {
        self.spec.dim.n()
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.spec.family.name()
    }

    #[getter]
    fn window(&self) -> (f64, f64) {
        self.spec.window()
    }

    /// Evenly spaced analysis heights inside the window.
    fn z_grid(&self, count: usize) -> Vec<f64> {
        self.spec.z_grid(count)
    }

    /// Support function of the section at height `z` in direction `x`.
    fn support_at(&self, z: f64, x: Vec<f64>) -> PyResult<f64> {
        let x = vector(self.spec.dim, &x)?;
        Ok(self.spec.support_at(z, &x))
    }

    /// Horizontal section at height `z` as a support field of degree `L`.
    #[pyo3(signature = (z, L = 32))]
    #[allow(non_snake_case)]
    fn section(&self, z: f64, L: usize) -> PyResult<PySupportField> {
        Ok(PySupportField {
            field: self.spec.section_field(z, L).map_err(err)?,
        })
    }

    fn __repr__(&self) -> String {
        let (lo, hi) = self.spec.window();
        format!(
            "Tube({}, n={}, z in [{lo}, {hi}])",
            self.spec.family.name(),
            self.spec.dim.n()
        )
    }
}

/// Support function of a convex body, stored as harmonic coefficients.
#[pyclass(name = "SupportField", module = "copscan", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySupportField {
    field: SupportField,
}

#[pymethods]
impl PySupportField {
    #[new]
    #[pyo3(signature = (dim, L, coeffs))]
    #[allow(non_snake_case)]
    fn new(dim: u8, L: usize, coeffs: Vec<f64>) -> PyResult<Self> {
        Ok(PySupportField {
            field: SupportField::new(sphere_dim(dim)?, L, coeffs).map_err(err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.field.dim().d()
    }

    #[getter(L)]
    fn degree_cap(&self) -> usize {
        self.field.degree_cap()
    }

    #[getter]
    fn coeffs(&self) -> Vec<f64> {
        self.field.coeffs().to_vec()
    }

    /// Value at the direction `u` (normalized first).
    fn eval(&self, u: Vec<f64>) -> PyResult<f64> {
        let u = direction(self.field.dim(), &u)?;
        self.field.eval(&u).map_err(err)
    }

    fn sup_norm(&self) -> f64 {
        self.field.sup_norm()
    }

    /// Coefficient mass in the two top degrees relative to the sup norm.
    fn spectral_tail(&self) -> f64 {
        self.field.spectral_tail()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.field)
    }

    fn __repr__(&self) -> String {
        format!(
            "SupportField(dim={}, L={})",
            self.field.dim().d(),
            self.field.degree_cap()
        )
    }
}

/// Assembles a run configuration from keyword arguments.
fn run_config(
    l: Option<usize>,
    grid: Option<usize>,
    sweep: Option<usize>,
    seed: Option<u64>,
    thresholds: Option<&Bound<'_, PyAny>>,
) -> PyResult<Config> {
    let mut config = Config::default();
    if let Some(t) = thresholds {
        config.thresholds = parse_json(&to_value(t)?.to_string()).map_err(err)?;
    }
    config.l = l.unwrap_or(config.l);
    config.grid = grid.unwrap_or(config.grid);
    config.sweep = sweep.unwrap_or(config.sweep);
    config.seed = seed.or(config.seed);
    config.validate().map_err(err)?;
    Ok(config)
}

/// Classifies a tube; returns the classification report.
#[pyfunction]
#[pyo3(signature = (tube, L = None, grid = None, sweep = None, seed = None, thresholds = None))]
#[allow(non_snake_case)]
fn classify<'py>(
    py: Python<'py>,
    tube: &PyTube,
    L: Option<usize>,
    grid: Option<usize>,
    sweep: Option<usize>,
    seed: Option<u64>,
    thresholds: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let config = run_config(L, grid, sweep, seed, thresholds)?;
    let spec = tube.spec.clone();
    let report = py
        .detach(move || copscan_core::classify(&spec, &config))
        .map_err(err)?;
    to_py(py, &report)
}

/// Obstruction field summary over the analysis grid and the tilt sweep.
#[pyfunction]
#[pyo3(signature = (tube, L = None, grid = None, sweep = None, seed = None))]
#[allow(non_snake_case)]
fn obstruction<'py>(
    py: Python<'py>,
    tube: &PyTube,
    L: Option<usize>,
    grid: Option<usize>,
    sweep: Option<usize>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let config = run_config(L, grid, sweep, seed, None)?;
    let spec = &tube.spec;
    let value = py
        .detach(|| -> copscan_core::Result<Value> {
            let ts = transverse_support(spec, &spec.z_grid(config.grid), config.l)?;
            let field = obstruction_field(&ts);
            let taus = config.tau_sweep(spec.dim);
            let sweep = field.sweep(&taus);
            Ok(json!({
                "n": spec.dim.n(),
                "L": field.l,
                "z_grid": field.z_grid,
                "scale": field.scale,
                "norms": field.norms,
                "taus": taus,
                "max_abs_f": sweep.max.value,
                "sweep": sweep,
            }))
        })
        .map_err(err)?;
    to_py(py, &value)
}

/// Cross-section by the plane `x_{n} = z0 + eps τ·x`; returns the section
/// report with its centrality deviation.
#[pyfunction(name = "slice")]
#[pyo3(signature = (tube, tau, z0, eps = 0.0, L = 32))]
#[allow(non_snake_case)]
fn slice_tube<'py>(
    py: Python<'py>,
    tube: &PyTube,
    tau: Vec<f64>,
    z0: f64,
    eps: f64,
    L: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let dim = tube.spec.dim;
    let plane = TiltedPlane::new(dim, direction(dim, &tau)?, z0, eps).map_err(err)?;
    let spec = &tube.spec;
    let report = py
        .detach(|| cross_section(spec, &plane, &SliceOptions::new(L)))
        .map_err(err)?;
    to_py(py, &report)
}

/// Ellipsoid criterion on a support field.
#[pyfunction]
#[pyo3(signature = (field, tol = 1e-5))]
fn ellipsoid_test<'py>(
    py: Python<'py>,
    field: &PySupportField,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let report = ellipsoid_criterion(&field.field, tol).map_err(err)?;
    to_py(py, &report)
}

#[pymodule]
fn copscan(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTube>()?;
    m.add_class::<PySupportField>()?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(obstruction, m)?)?;
    m.add_function(wrap_pyfunction!(slice_tube, m)?)?;
    m.add_function(wrap_pyfunction!(ellipsoid_test, m)?)?;
    m.add("CopscanError", m.py().get_type::<CopscanError>())?;
    m.add("FAMILIES", copscan_core::tube::FAMILY_NAMES.to_vec())?;
    Ok(())
}
