//! Python bindings for `multispin_core`.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use multispin_core::algebra::C64;
use multispin_core::coherent::{self, GroupId};
use multispin_core::dynamics::{self, EomMethod, Term};
use multispin_core::generators::Generator;
use multispin_core::{observables, quantum};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_group(name: &str) -> PyResult<GroupId> {
    name.parse().map_err(value_error)
}

fn parse_method(name: &str) -> PyResult<EomMethod> {
    name.parse().map_err(value_error)
}

/// A point of a coherent-state manifold.
#[pyclass(name = "CoherentParams", frozen, from_py_object)]
#[derive(Clone)]
struct PyCoherentParams {
    inner: coherent::CoherentParams,
}

#[pymethods]
impl PyCoherentParams {
    #[new]
    fn new(group: &str, values: Vec<f64>) -> PyResult<Self> {
        let inner = coherent::CoherentParams::new(parse_group(group)?, values).map_err(value_error)?;
        Ok(PyCoherentParams { inner })
    }

    #[getter]
    fn group(&self) -> String {
        self.inner.group().to_string()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    /// Oracle amplitudes, highest weight first.
    fn state(&self) -> Vec<Complex64> {
        coherent::build_oracle(&self.inner).amplitudes.into_vec()
    }

    /// Amplitudes from the printed closed form.
    fn closed_form(&self) -> Vec<Complex64> {
        coherent::build_closed_form(&self.inner).state.amplitudes.into_vec()
    }

    /// `(<Sx>, <Sy>, <Sz>)`.
    fn spin(&self) -> (f64, f64, f64) {
        let [x, y, z] = observables::spin_vector(&coherent::build_oracle(&self.inner));
        (x, y, z)
    }

    fn berry_connection(&self, hbar: Option<f64>) -> Vec<f64> {
        coherent::berry_connection(&self.inner, hbar.unwrap_or(1.0))
    }

    fn symplectic_form(&self, hbar: Option<f64>) -> Vec<Vec<f64>> {
        dynamics::symplectic_form(&self.inner, hbar.unwrap_or(1.0))
    }

    fn overlap(&self, other: &PyCoherentParams) -> PyResult<Complex64> {
        coherent::overlap(&self.inner, &other.inner).map_err(value_error)
    }

    fn __repr__(&self) -> String {
        format!("CoherentParams({}, {})", self.inner.group(), self.inner)
    }
}

/// A Hamiltonian on a chain of identical sites.
///
/// `terms` is a list of `(coeff, [(site, ["Sz", ...]), ...])`.
#[pyclass(name = "Hamiltonian", frozen)]
struct PyHamiltonian {
    inner: dynamics::HamiltonianSpec,
}

#[pymethods]
impl PyHamiltonian {
    #[new]
    #[pyo3(signature = (group, terms, sites = 1))]
    fn new(group: &str, terms: Vec<(Complex64, Vec<(usize, Vec<String>)>)>, sites: usize) -> PyResult<Self> {
        let terms = terms
            .into_iter()
            .map(|(coeff, factors)| {
                let factors = factors
                    .into_iter()
                    .map(|(site, names)| {
                        let gens = names
                            .iter()
                            .map(|n| n.parse::<Generator>().map_err(value_error))
                            .collect::<PyResult<Vec<_>>>()?;
                        Ok((site, gens))
                    })
                    .collect::<PyResult<Vec<_>>>()?;
                Ok(Term::new(C64::new(coeff.re, coeff.im), factors))
            })
            .collect::<PyResult<Vec<_>>>()?;
        let inner = dynamics::HamiltonianSpec::new(parse_group(group)?, sites, terms).map_err(value_error)?;
        Ok(PyHamiltonian { inner })
    }

    #[getter]
    fn sites(&self) -> usize {
        self.inner.sites()
    }

    /// Full matrix as a list of rows.
    fn matrix(&self) -> PyResult<Vec<Vec<Complex64>>> {
        let m = self.inner.assemble().map_err(value_error)?;
        Ok((0..m.rows()).map(|r| (0..m.cols()).map(|c| m[(r, c)]).collect()).collect())
    }

    fn energy(&self, points: Vec<PyCoherentParams>) -> PyResult<f64> {
        dynamics::classical_energy(&self.inner, &unwrap(points)).map_err(value_error)
    }

    #[pyo3(signature = (points, method = "berry", hbar = 1.0))]
    fn velocity(&self, points: Vec<PyCoherentParams>, method: &str, hbar: f64) -> PyResult<Vec<f64>> {
        dynamics::eom_rhs(&self.inner, &unwrap(points), parse_method(method)?, hbar).map_err(value_error)
    }

    /// Returns `(times, params per time per site, energies, stop time or None)`.
    #[pyo3(signature = (points, dt, steps, method = "berry", hbar = 1.0))]
    #[allow(clippy::type_complexity)]
    fn integrate(
        &self,
        points: Vec<PyCoherentParams>,
        dt: f64,
        steps: usize,
        method: &str,
        hbar: f64,
    ) -> PyResult<(Vec<f64>, Vec<Vec<Vec<f64>>>, Vec<f64>, Option<f64>)> {
        let t = dynamics::integrate(&self.inner, &unwrap(points), dt, steps, parse_method(method)?, hbar)
            .map_err(value_error)?;
        let params = t
            .points
            .iter()
            .map(|row| row.iter().map(|p| p.values().to_vec()).collect())
            .collect();
        Ok((t.times, params, t.energies, t.singular.map(|s| s.time)))
    }

    /// Max `|Δ<S>|` between the classical trajectory and exact propagation.
    #[pyo3(signature = (points, t_max, dt, hbar = 1.0))]
    fn compare(&self, points: Vec<PyCoherentParams>, t_max: f64, dt: f64, hbar: f64) -> PyResult<f64> {
        let m = quantum::compare(&self.inner, &unwrap(points), t_max, dt, hbar).map_err(value_error)?;
        Ok(m.max_deviation())
    }
}

fn unwrap(points: Vec<PyCoherentParams>) -> Vec<coherent::CoherentParams> {
    points.into_iter().map(|p| p.inner).collect()
}

/// Compatibility report of the printed formulas as CSV text.
#[pyfunction]
#[pyo3(signature = (group, samples = 100, seed = 0))]
fn compatibility_report(group: &str, samples: usize, seed: u64) -> PyResult<String> {
    Ok(observables::compatibility_report(parse_group(group)?, samples, seed).to_csv_string())
}

/// Max deviation of the spin-1/2 resolution of unity from the identity.
#[pyfunction]
fn unity_check(n_theta: usize, n_phi: usize) -> PyResult<f64> {
    quantum::unity_check(n_theta, n_phi).map_err(value_error)
}

/// `(points compared, points with degenerate restricted ω, max deviation)`.
#[pyfunction]
#[pyo3(signature = (source, target, n_points = 100, seed = 0))]
fn reduce_check(source: &str, target: &str, n_points: usize, seed: u64) -> PyResult<(usize, usize, f64)> {
    let r = dynamics::reduce_check(parse_group(source)?, parse_group(target)?, n_points, seed, 1.0)
        .map_err(value_error)?;
    Ok((r.n_points, r.restricted_singular, r.max_deviation))
}

#[pymodule]
fn multispin(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCoherentParams>()?;
    m.add_class::<PyHamiltonian>()?;
    m.add_function(wrap_pyfunction!(compatibility_report, m)?)?;
    m.add_function(wrap_pyfunction!(unity_check, m)?)?;
    m.add_function(wrap_pyfunction!(reduce_check, m)?)?;
    Ok(())
}
