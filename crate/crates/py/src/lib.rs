//! Python bindings: assemblage loading/serialization, validation, and the
//! certification engines (lambda relaxation, full certify, LHS membership,
//! robustness, outer hierarchy), plus CHSH evaluation on realizations.

use pqsteer::bell;
use pqsteer::certify;
use pqsteer::construct::{load_fixture, FixtureName, NoiseKind};
use pqsteer::document::{AssemblageDocument, RealizationDocument};
use pqsteer::model::Assemblage;
use pqsteer::robustness;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyTuple};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_noise(spec: &str) -> Result<NoiseKind, PyErr> {
    match spec.to_ascii_lowercase().as_str() {
        "white" => Ok(NoiseKind::White),
        "ghz" => Ok(NoiseKind::Ghz),
        "w" => Ok(NoiseKind::W),
        other => Err(value_err(format!("unknown noise kind {:?} (white|ghz|w)", other))),
    }
}

fn membership_name(m: &certify::Membership) -> &'static str {
    match m {
        certify::Membership::Feasible { .. } => "feasible",
        certify::Membership::Infeasible { .. } => "infeasible",
        certify::Membership::Unknown { .. } => "unknown",
    }
}

/// A steering assemblage with one or more characterised parties.
#[pyclass(name = "Assemblage", frozen)]
struct PyAssemblage {
    inner: Assemblage,
}

#[pymethods]
impl PyAssemblage {
    /// Load a bundled example by name (e.g. "abb1", "abb-pqnl", "abb-ptp1",
    /// "pr").
    #[staticmethod]
    fn fixture(name: &str) -> PyResult<Self> {
        let fx: FixtureName = name.parse().map_err(value_err)?;
        Ok(PyAssemblage { inner: load_fixture(fx) })
    }

    /// Parse an assemblage document (JSON text).
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let doc = AssemblageDocument::from_json(text).map_err(value_err)?;
        Ok(PyAssemblage { inner: doc.to_assemblage().map_err(value_err)? })
    }

    /// Serialize to an assemblage document (JSON text); exact-rational
    /// entries survive bit-exactly.
    fn to_json(&self) -> PyResult<String> {
        AssemblageDocument::from_assemblage(&self.inner).to_json().map_err(runtime_err)
    }

    #[getter]
    fn num_alices(&self) -> usize {
        self.inner.scenario.num_alices
    }

    #[getter]
    fn num_bobs(&self) -> usize {
        self.inner.scenario.num_bobs
    }

    /// Human-readable violation descriptions; empty when valid.
    fn validate(&self) -> Vec<String> {
        self.inner
            .validate()
            .violations
            .iter()
            .map(|v| {
                format!(
                    "[{}] {}: magnitude {:.3e} (tolerance {:.3e})",
                    v.check, v.context, v.magnitude, v.tolerance
                )
            })
            .collect()
    }

    fn is_valid(&self) -> bool {
        self.inner.validate().is_valid()
    }

    /// `p(a|x)` as a dict keyed by (outcomes, settings) tuples.
    fn joint_probabilities<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for ((a, x), p) in self.inner.joint_probabilities() {
            let key = (PyTuple::new(py, &a)?, PyTuple::new(py, &x)?);
            d.set_item(key, p)?;
        }
        Ok(d)
    }

    /// Optimal minimum-eigenvalue slack of the parent-state program, as a
    /// dict with keys lambda_star, feasible, eps_feas.
    fn lambda_relaxation<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let rep = certify::lambda_relaxation(&self.inner).map_err(runtime_err)?;
        let d = PyDict::new(py);
        d.set_item("lambda_star", rep.lambda_star)?;
        d.set_item("feasible", rep.feasible)?;
        d.set_item("eps_feas", rep.eps_feas)?;
        Ok(d)
    }

    /// Full certification; returns a dict with keys verdict,
    /// failed_condition, lambda_star, npa_level_used, npa.
    #[pyo3(signature = (npa_level = 1))]
    fn certify<'py>(&self, py: Python<'py>, npa_level: usize) -> PyResult<Bound<'py, PyDict>> {
        let rep = certify::certify(&self.inner, npa_level).map_err(runtime_err)?;
        let d = PyDict::new(py);
        d.set_item("verdict", format!("{:?}", rep.verdict))?;
        d.set_item("failed_condition", rep.failed_condition.map(|f| format!("{:?}", f)))?;
        d.set_item("lambda_star", rep.lambda.lambda_star)?;
        d.set_item("npa_level_used", rep.npa_level_used)?;
        d.set_item("npa", rep.npa.as_ref().map(membership_name))?;
        Ok(d)
    }

    /// Local-hidden-state membership; dict with keys status and slack.
    fn lhs_membership<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let out = certify::lhs_membership(&self.inner).map_err(runtime_err)?;
        let d = PyDict::new(py);
        match out {
            certify::LhsOutcome::Feasible { slack, .. } => {
                d.set_item("status", "feasible")?;
                d.set_item("slack", slack)?;
            }
            certify::LhsOutcome::Infeasible { slack } => {
                d.set_item("status", "infeasible")?;
                d.set_item("slack", slack)?;
            }
            certify::LhsOutcome::Unknown { detail } => {
                d.set_item("status", "unknown")?;
                d.set_item("detail", detail)?;
            }
        }
        Ok(d)
    }

    /// Minimum noise weight restoring parent-state feasibility; dict with
    /// keys r_star and lower_bound_only.
    fn robustness<'py>(&self, py: Python<'py>, noise: &str) -> PyResult<Bound<'py, PyDict>> {
        let res = robustness::robustness(&self.inner, parse_noise(noise)?).map_err(runtime_err)?;
        let d = PyDict::new(py);
        d.set_item("r_star", res.r_star)?;
        d.set_item("lower_bound_only", res.diagnostics.lower_bound_only)?;
        Ok(d)
    }

    /// Outer moment hierarchy membership at the given level:
    /// "feasible" | "infeasible" | "unknown".
    #[pyo3(signature = (level = 1))]
    fn hierarchy(&self, level: usize) -> PyResult<String> {
        let out = certify::outer_hierarchy_membership(&self.inner, level).map_err(runtime_err)?;
        Ok(membership_name(&out).to_string())
    }

    /// `r * noise + (1 - r) * self`, elementwise.
    fn mix_with_noise(&self, noise: &PyAssemblage, r: f64) -> PyResult<Self> {
        let mixed = robustness::mix(&noise.inner, &self.inner, r).map_err(value_err)?;
        Ok(PyAssemblage { inner: mixed })
    }

    fn __repr__(&self) -> String {
        format!(
            "Assemblage(num_alices={}, num_bobs={}, elements={})",
            self.inner.scenario.num_alices,
            self.inner.scenario.num_bobs,
            self.inner.elements.len()
        )
    }
}

/// Evaluate CHSH on a realization document (JSON text with measurement
/// choices for the characterised parties). Returns a dict with the standard
/// and best-sign-variant values and the classical bound; three-party data is
/// first marginalised onto the characterised parties.
#[pyfunction]
fn chsh_from_realization_json<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyDict>> {
    let doc = RealizationDocument::from_json(text).map_err(value_err)?;
    let (qr, bob_meas) = doc.to_parts().map_err(value_err)?;
    let data = bell::correlations_from_realization(&qr, &bob_meas).map_err(runtime_err)?;
    let data = if data.alice_settings.len() + data.bob_settings.len() == 2 {
        data
    } else {
        data.bob_marginal().map_err(runtime_err)?
    };
    let std_f =
        bell::chsh(data.alice_settings.len(), data.bob_settings.len()).map_err(value_err)?;
    let (best, _) = bell::chsh_maximal(&data).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("standard", bell::evaluate(&std_f, &data))?;
    d.set_item("best_variant", best)?;
    d.set_item("classical_bound", std_f.classical_bound)?;
    Ok(d)
}

/// Build a noise assemblage document (JSON) for the one-Alice two-qubit-Bob
/// scenario: "white" | "ghz" | "w".
#[pyfunction]
fn noise_assemblage_json(kind: &str) -> PyResult<String> {
    let scenario =
        pqsteer::model::ScenarioSpec::uniform(1, 2, 2, vec![2, 2]).map_err(runtime_err)?;
    let asm =
        pqsteer::construct::noise_assemblage(&parse_noise(kind)?, &scenario).map_err(value_err)?;
    AssemblageDocument::from_assemblage(&asm).to_json().map_err(runtime_err)
}

#[pymodule]
fn pqsteer_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAssemblage>()?;
    m.add_function(wrap_pyfunction!(chsh_from_realization_json, m)?)?;
    m.add_function(wrap_pyfunction!(noise_assemblage_json, m)?)?;
    Ok(())
}
