//! Scenario and assemblage data model, with validation, plus quantum
//! realization descriptions.
//!
//! A steering scenario has `n` uncharacterised parties (Alices), each with a
//! set of measurement settings and per-setting outcome counts, and `N`
//! characterised parties (Bobs) with fixed local dimensions. An assemblage
//! assigns to every joint outcome/setting pair one subnormalised local state
//! per Bob; the shared trace of those states is the Alices' joint outcome
//! probability.

use crate::matcore::{
    is_psd, min_eigenvalue, CMatrix, DimVector, HermitianMatrix, RatMatrix, C64,
};
use std::collections::BTreeMap;
use thiserror::Error;

/// Key into an assemblage's element map: joint outcomes `a`, joint settings `x`.
pub type ElemKey = (Vec<usize>, Vec<usize>);

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("scenario is inconsistent: {0}")]
    BadScenario(String),
    #[error("missing assemblage elements for keys: {0:?}")]
    MissingElements(Vec<ElemKey>),
    #[error("element {key:?} has {got} Bob matrices, expected {expected}")]
    WrongBobCount { key: String, got: usize, expected: usize },
    #[error("element {key} Bob {bob} has dimension {got}, expected {expected}")]
    WrongDim { key: String, bob: usize, got: usize, expected: usize },
    #[error("Bob reduced state varies with the setting by {magnitude:.3e} (tolerance {tol:.3e})")]
    Signalling { magnitude: f64, tol: f64 },
    #[error("measurement set invalid: {0}")]
    BadMeasurement(String),
    #[error("realization invalid: {0}")]
    BadRealization(String),
    #[error("conditional state undefined: probability below 1e-12")]
    UndefinedConditional,
}

/// All joint index vectors with `digits[i] < radix[i]`, in lexicographic order.
pub fn cartesian(radix: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &r in radix {
        let mut next = Vec::with_capacity(out.len() * r);
        for v in &out {
            for d in 0..r {
                let mut w = v.clone();
                w.push(d);
                next.push(w);
            }
        }
        out = next;
    }
    out
}

/// The scenario tuple: party counts, label-set sizes, Bob dimensions.
///
/// Settings and outcomes are 0-based contiguous integers.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ScenarioSpec {
    pub num_alices: usize,
    /// Setting count per Alice.
    pub settings: Vec<usize>,
    /// Outcome count per Alice and per setting: `outcomes[j][x]`.
    pub outcomes: Vec<Vec<usize>>,
    pub num_bobs: usize,
    pub bob_dims: Vec<usize>,
}

impl ScenarioSpec {
    pub fn new(
        settings: Vec<usize>,
        outcomes: Vec<Vec<usize>>,
        bob_dims: Vec<usize>,
    ) -> Result<Self, ModelError> {
        let s = ScenarioSpec {
            num_alices: settings.len(),
            settings,
            outcomes,
            num_bobs: bob_dims.len(),
            bob_dims,
        };
        s.check()?;
        Ok(s)
    }

    /// Uniform scenario: every Alice has `n_settings` settings with
    /// `n_outcomes` outcomes each.
    pub fn uniform(
        num_alices: usize,
        n_settings: usize,
        n_outcomes: usize,
        bob_dims: Vec<usize>,
    ) -> Result<Self, ModelError> {
        ScenarioSpec::new(
            vec![n_settings; num_alices],
            vec![vec![n_outcomes; n_settings]; num_alices],
            bob_dims,
        )
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if self.num_alices == 0 || self.num_bobs == 0 {
            return Err(ModelError::BadScenario("party counts must be positive".into()));
        }
        if self.settings.len() != self.num_alices || self.outcomes.len() != self.num_alices {
            return Err(ModelError::BadScenario("per-Alice lists have wrong length".into()));
        }
        for j in 0..self.num_alices {
            if self.settings[j] == 0 || self.outcomes[j].len() != self.settings[j] {
                return Err(ModelError::BadScenario(format!(
                    "Alice {} has inconsistent settings/outcomes",
                    j
                )));
            }
            if self.outcomes[j].iter().any(|&o| o == 0) {
                return Err(ModelError::BadScenario(format!("Alice {} has an empty outcome set", j)));
            }
        }
        if self.bob_dims.len() != self.num_bobs || self.bob_dims.iter().any(|&d| d == 0) {
            return Err(ModelError::BadScenario("bad Bob dimensions".into()));
        }
        Ok(())
    }

    /// All joint setting vectors.
    pub fn all_settings(&self) -> Vec<Vec<usize>> {
        cartesian(&self.settings)
    }

    /// All joint outcome vectors for a given joint setting.
    pub fn outcomes_for(&self, x: &[usize]) -> Vec<Vec<usize>> {
        let radix: Vec<usize> = (0..self.num_alices).map(|j| self.outcomes[j][x[j]]).collect();
        cartesian(&radix)
    }

    /// All element keys `(a, x)` in canonical order.
    pub fn element_keys(&self) -> Vec<ElemKey> {
        let mut keys = Vec::new();
        for x in self.all_settings() {
            for a in self.outcomes_for(&x) {
                keys.push((a, x.clone()));
            }
        }
        keys
    }

    /// Dimension of the composite Bob space.
    pub fn composite_bob_dim(&self) -> usize {
        self.bob_dims.iter().product()
    }

    pub fn bob_dim_vector(&self) -> DimVector {
        DimVector::new(self.bob_dims.clone())
    }
}

/// Tolerances used by [`Assemblage::validate`].
#[derive(Debug, Clone, Copy)]
pub struct ValidationTolerances {
    pub psd: f64,
    pub trace_match: f64,
    pub normalisation: f64,
    pub no_signalling: f64,
}

impl Default for ValidationTolerances {
    fn default() -> Self {
        ValidationTolerances { psd: 1e-9, trace_match: 1e-9, normalisation: 1e-9, no_signalling: 1e-8 }
    }
}

/// One violated invariant, with its magnitude.
#[derive(Debug, Clone)]
pub struct Violation {
    pub check: String,
    pub context: String,
    pub magnitude: f64,
    pub tolerance: f64,
}

/// Outcome of validating an assemblage; empty means all invariants hold.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Map from joint outcome/setting pairs to one subnormalised Hermitian
/// matrix per Bob.
#[derive(Debug, Clone)]
pub struct Assemblage {
    pub scenario: ScenarioSpec,
    pub elements: BTreeMap<ElemKey, Vec<HermitianMatrix>>,
    /// Optional exact-rational mirror of `elements`, carried by generators
    /// that work in exact arithmetic, for lossless serialization.
    pub exact_elements: Option<BTreeMap<ElemKey, Vec<RatMatrix>>>,
}

impl Assemblage {
    /// Build with structural checks (completeness, Bob counts, dimensions).
    pub fn new(
        scenario: ScenarioSpec,
        elements: BTreeMap<ElemKey, Vec<HermitianMatrix>>,
    ) -> Result<Self, ModelError> {
        scenario.check()?;
        let mut missing = Vec::new();
        for key in scenario.element_keys() {
            match elements.get(&key) {
                None => missing.push(key),
                Some(bobs) => {
                    if bobs.len() != scenario.num_bobs {
                        return Err(ModelError::WrongBobCount {
                            key: format!("{:?}", key),
                            got: bobs.len(),
                            expected: scenario.num_bobs,
                        });
                    }
                    for (k, m) in bobs.iter().enumerate() {
                        if m.dim() != scenario.bob_dims[k] {
                            return Err(ModelError::WrongDim {
                                key: format!("{:?}", key),
                                bob: k,
                                got: m.dim(),
                                expected: scenario.bob_dims[k],
                            });
                        }
                    }
                }
            }
        }
        if !missing.is_empty() {
            return Err(ModelError::MissingElements(missing));
        }
        Ok(Assemblage { scenario, elements, exact_elements: None })
    }

    pub fn with_exact(mut self, exact: BTreeMap<ElemKey, Vec<RatMatrix>>) -> Self {
        self.exact_elements = Some(exact);
        self
    }

    pub fn element(&self, a: &[usize], x: &[usize], bob: usize) -> &HermitianMatrix {
        &self.elements[&(a.to_vec(), x.to_vec())][bob]
    }

    /// Check every invariant at the given tolerances.
    pub fn validate_with(&self, tol: &ValidationTolerances) -> ValidationReport {
        let mut report = ValidationReport::default();
        let mut push = |check: &str, context: String, magnitude: f64, tolerance: f64| {
            if magnitude > tolerance {
                report.violations.push(Violation { check: check.into(), context, magnitude, tolerance });
            }
        };

        // PSD and trace agreement across Bobs.
        for (key, bobs) in &self.elements {
            let t0 = bobs[0].trace();
            for (k, m) in bobs.iter().enumerate() {
                let e = min_eigenvalue(m);
                push("psd", format!("element {:?} bob {}", key, k + 1), (-e).max(0.0), tol.psd);
                push(
                    "trace_match",
                    format!("element {:?} bob {}", key, k + 1),
                    (m.trace() - t0).abs(),
                    tol.trace_match,
                );
            }
        }

        // Normalisation per joint setting.
        for x in self.scenario.all_settings() {
            for k in 0..self.scenario.num_bobs {
                let total: f64 = self
                    .scenario
                    .outcomes_for(&x)
                    .iter()
                    .map(|a| self.elements[&(a.clone(), x.clone())][k].trace())
                    .sum();
                push("normalisation", format!("x = {:?} bob {}", x, k + 1), (total - 1.0).abs(), tol.normalisation);
            }
        }

        // No-signalling among Alices: summing out Alice j's outcome must make
        // the elements independent of x_j, for every fixed other setting.
        let n = self.scenario.num_alices;
        if n >= 2 {
            for j in 0..n {
                let mut other_radix = self.scenario.settings.clone();
                other_radix.remove(j);
                for others in cartesian(&other_radix) {
                    let embed = |xj: usize| -> Vec<usize> {
                        let mut x = others.clone();
                        x.insert(j, xj);
                        x
                    };
                    let marginal = |xj: usize, k: usize| -> CMatrix {
                        let x = embed(xj);
                        let mut radix: Vec<usize> =
                            (0..n).map(|jj| self.scenario.outcomes[jj][x[jj]]).collect();
                        let my_outcomes = radix[j];
                        radix.remove(j);
                        let d = self.scenario.bob_dims[k];
                        let mut acc = CMatrix::zeros(d, d);
                        for rest in cartesian(&radix) {
                            for aj in 0..my_outcomes {
                                let mut a = rest.clone();
                                a.insert(j, aj);
                                acc = acc.add(self.elements[&(a, x.clone())][k].matrix());
                            }
                        }
                        acc
                    };
                    for k in 0..self.scenario.num_bobs {
                        let base = marginal(0, k);
                        for xj in 1..self.scenario.settings[j] {
                            let diff = marginal(xj, k).max_abs_diff(&base);
                            push(
                                "alice_no_signalling",
                                format!("alice {} others {:?} bob {}", j + 1, others, k + 1),
                                diff,
                                tol.no_signalling,
                            );
                        }
                    }
                }
            }
        }

        // No-signalling to the Bobs: the summed element is setting-independent.
        let all_x = self.scenario.all_settings();
        for k in 0..self.scenario.num_bobs {
            let sum_for = |x: &Vec<usize>| -> CMatrix {
                let d = self.scenario.bob_dims[k];
                let mut acc = CMatrix::zeros(d, d);
                for a in self.scenario.outcomes_for(x) {
                    acc = acc.add(self.elements[&(a, x.clone())][k].matrix());
                }
                acc
            };
            let base = sum_for(&all_x[0]);
            for x in all_x.iter().skip(1) {
                push(
                    "bob_state_consistency",
                    format!("x = {:?} bob {}", x, k + 1),
                    sum_for(x).max_abs_diff(&base),
                    tol.no_signalling,
                );
            }
        }

        report
    }

    pub fn validate(&self) -> ValidationReport {
        self.validate_with(&ValidationTolerances::default())
    }

    /// Joint outcome probabilities `p(a|x)` from the Bob-1 traces.
    pub fn joint_probabilities(&self) -> BTreeMap<ElemKey, f64> {
        self.elements.iter().map(|(k, bobs)| (k.clone(), bobs[0].trace())).collect()
    }

    /// The reduced state of Bob `k` (0-based), from the all-zeros setting.
    ///
    /// Errors when the summed element varies with the setting beyond 1e-8.
    pub fn bob_reduced_state(&self, k: usize) -> Result<HermitianMatrix, ModelError> {
        let tol = 1e-8;
        let d = self.scenario.bob_dims[k];
        let mut states: Vec<CMatrix> = Vec::new();
        for x in self.scenario.all_settings() {
            let mut acc = CMatrix::zeros(d, d);
            for a in self.scenario.outcomes_for(&x) {
                acc = acc.add(self.elements[&(a, x.clone())][k].matrix());
            }
            states.push(acc);
        }
        let mut worst = 0.0f64;
        for s in states.iter().skip(1) {
            worst = worst.max(s.max_abs_diff(&states[0]));
        }
        if worst > tol {
            return Err(ModelError::Signalling { magnitude: worst, tol });
        }
        HermitianMatrix::new(states.swap_remove(0)).map_err(|e| ModelError::BadScenario(e.to_string()))
    }

    /// Normalised conditional state of Bob `k` given `(a, x)`, when defined.
    pub fn conditional_state(
        &self,
        a: &[usize],
        x: &[usize],
        k: usize,
    ) -> Result<HermitianMatrix, ModelError> {
        let m = self.element(a, x, k);
        let p = m.trace();
        if p < 1e-12 {
            return Err(ModelError::UndefinedConditional);
        }
        Ok(m.scale(1.0 / p))
    }
}

/// A POVM per setting on a fixed-dimension space.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub dim: usize,
    /// Outcome count per setting.
    pub outcomes: Vec<usize>,
    /// `(setting, outcome)` to effect operator.
    pub operators: BTreeMap<(usize, usize), HermitianMatrix>,
}

impl MeasurementSet {
    pub fn new(
        dim: usize,
        outcomes: Vec<usize>,
        operators: BTreeMap<(usize, usize), HermitianMatrix>,
    ) -> Result<Self, ModelError> {
        let tol = 1e-10;
        for (x, &n_out) in outcomes.iter().enumerate() {
            let mut sum = CMatrix::zeros(dim, dim);
            for a in 0..n_out {
                let op = operators.get(&(x, a)).ok_or_else(|| {
                    ModelError::BadMeasurement(format!("missing operator for setting {} outcome {}", x, a))
                })?;
                if op.dim() != dim {
                    return Err(ModelError::BadMeasurement(format!(
                        "operator ({}, {}) has dimension {}, expected {}",
                        x, a, op.dim(), dim
                    )));
                }
                if !is_psd(op, tol) {
                    return Err(ModelError::BadMeasurement(format!(
                        "operator ({}, {}) is not PSD (min eigenvalue {:.3e})",
                        x, a, min_eigenvalue(op)
                    )));
                }
                sum = sum.add(op.matrix());
            }
            let dev = sum.max_abs_diff(&CMatrix::identity(dim));
            if dev > tol {
                return Err(ModelError::BadMeasurement(format!(
                    "setting {} operators sum to identity only within {:.3e}",
                    x, dev
                )));
            }
        }
        Ok(MeasurementSet { dim, outcomes, operators })
    }

    pub fn operator(&self, x: usize, a: usize) -> &HermitianMatrix {
        &self.operators[&(x, a)]
    }

    /// Two projective binary measurements from rank-1 projector pairs.
    pub fn from_projector_pairs(dim: usize, pairs: &[(CMatrix, CMatrix)]) -> Result<Self, ModelError> {
        let mut ops = BTreeMap::new();
        for (x, (p0, p1)) in pairs.iter().enumerate() {
            ops.insert(
                (x, 0),
                HermitianMatrix::new(p0.clone()).map_err(|e| ModelError::BadMeasurement(e.to_string()))?,
            );
            ops.insert(
                (x, 1),
                HermitianMatrix::new(p1.clone()).map_err(|e| ModelError::BadMeasurement(e.to_string()))?,
            );
        }
        MeasurementSet::new(dim, vec![2; pairs.len()], ops)
    }
}

/// Global state plus one measurement set per Alice (Def.-2.3-style data).
#[derive(Debug, Clone)]
pub struct QuantumRealization {
    pub alice_dims: Vec<usize>,
    pub bob_dims: Vec<usize>,
    /// State on `(⊗_j Alice_j) ⊗ (⊗_k Bob_k)`, Alice factors first.
    pub state: HermitianMatrix,
    pub alice_measurements: Vec<MeasurementSet>,
}

impl QuantumRealization {
    pub fn new(
        alice_dims: Vec<usize>,
        bob_dims: Vec<usize>,
        state: HermitianMatrix,
        alice_measurements: Vec<MeasurementSet>,
    ) -> Result<Self, ModelError> {
        let tol = 1e-10;
        let total: usize = alice_dims.iter().chain(bob_dims.iter()).product();
        if state.dim() != total {
            return Err(ModelError::BadRealization(format!(
                "state dimension {} does not match factors {:?} x {:?}",
                state.dim(),
                alice_dims,
                bob_dims
            )));
        }
        if (state.trace() - 1.0).abs() > tol {
            return Err(ModelError::BadRealization(format!("state trace {} is not 1", state.trace())));
        }
        if !is_psd(&state, tol) {
            return Err(ModelError::BadRealization(format!(
                "state is not PSD (min eigenvalue {:.3e})",
                min_eigenvalue(&state)
            )));
        }
        if alice_measurements.len() != alice_dims.len() {
            return Err(ModelError::BadRealization("one measurement set per Alice required".into()));
        }
        for (j, ms) in alice_measurements.iter().enumerate() {
            if ms.dim != alice_dims[j] {
                return Err(ModelError::BadRealization(format!(
                    "Alice {} measurement dimension {} != {}",
                    j, ms.dim, alice_dims[j]
                )));
            }
        }
        Ok(QuantumRealization { alice_dims, bob_dims, state, alice_measurements })
    }

    pub fn full_dim_vector(&self) -> DimVector {
        DimVector::new(self.alice_dims.iter().chain(self.bob_dims.iter()).copied().collect())
    }

    /// Scenario induced by the measurement sets and Bob dimensions.
    pub fn scenario(&self) -> Result<ScenarioSpec, ModelError> {
        ScenarioSpec::new(
            self.alice_measurements.iter().map(|m| m.outcomes.len()).collect(),
            self.alice_measurements.iter().map(|m| m.outcomes.clone()).collect(),
            self.bob_dims.clone(),
        )
    }
}

/// Convenience: maximally mixed matrix `I/d` scaled by `p`.
pub fn scaled_identity(d: usize, p: f64) -> HermitianMatrix {
    HermitianMatrix::new(CMatrix::identity(d).scale(C64::new(p, 0.0))).expect("identity is Hermitian")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// All elements `I/4` in the 1-Alice, 2-Bob qubit scenario.
    fn maximally_mixed() -> Assemblage {
        let sc = ScenarioSpec::uniform(1, 2, 2, vec![2, 2]).unwrap();
        let mut elems = BTreeMap::new();
        for key in sc.element_keys() {
            elems.insert(key, vec![scaled_identity(2, 0.25), scaled_identity(2, 0.25)]);
        }
        Assemblage::new(sc, elems).unwrap()
    }

    #[test]
    fn maximally_mixed_is_valid() {
        let asm = maximally_mixed();
        let rep = asm.validate();
        assert!(rep.is_valid(), "violations: {:?}", rep.violations);
    }

    #[test]
    fn joint_probabilities_normalised() {
        let asm = maximally_mixed();
        let p = asm.joint_probabilities();
        for x in asm.scenario.all_settings() {
            let total: f64 = asm.scenario.outcomes_for(&x).iter().map(|a| p[&(a.clone(), x.clone())]).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        for v in p.values() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn negated_element_reports_psd_violation() {
        let mut asm = maximally_mixed();
        let key = (vec![0], vec![0]);
        let bobs = asm.elements.get_mut(&key).unwrap();
        bobs[0] = bobs[0].scale(-1.0);
        let rep = asm.validate();
        assert!(!rep.is_valid());
        let psd = rep.violations.iter().find(|v| v.check == "psd").expect("psd violation");
        assert!((psd.magnitude - 0.25).abs() < 1e-9, "magnitude {}", psd.magnitude);
    }

    #[test]
    fn missing_element_is_structural_error() {
        let sc = ScenarioSpec::uniform(1, 2, 2, vec![2]).unwrap();
        let mut elems = BTreeMap::new();
        for key in sc.element_keys().into_iter().skip(1) {
            elems.insert(key, vec![scaled_identity(2, 0.25)]);
        }
        match Assemblage::new(sc, elems) {
            Err(ModelError::MissingElements(keys)) => assert_eq!(keys.len(), 1),
            other => panic!("expected missing-element error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn bob_reduced_state_of_mixed() {
        let asm = maximally_mixed();
        let rho = asm.bob_reduced_state(0).unwrap();
        assert!(rho.matrix().max_abs_diff(&CMatrix::identity(2).scale(C64::new(0.5, 0.0))) < 1e-12);
    }

    #[test]
    fn signalling_assemblage_detected() {
        let mut asm = maximally_mixed();
        // Skew the x = 1 elements so the Bob-1 sum depends on x.
        let k0 = (vec![0], vec![1]);
        let k1 = (vec![1], vec![1]);
        asm.elements.get_mut(&k0).unwrap()[0] =
            HermitianMatrix::new(CMatrix::diag(&[0.6, 0.0])).unwrap();
        asm.elements.get_mut(&k1).unwrap()[0] =
            HermitianMatrix::new(CMatrix::diag(&[0.0, 0.4])).unwrap();
        let rep = asm.validate();
        assert!(rep.violations.iter().any(|v| v.check == "bob_state_consistency"));
        assert!(matches!(asm.bob_reduced_state(0), Err(ModelError::Signalling { .. })));
    }

    #[test]
    fn measurement_completeness_enforced() {
        let p0 = CMatrix::diag(&[1.0, 0.0]);
        // Deliberately broken: both outcomes are the same projector.
        let res = MeasurementSet::from_projector_pairs(2, &[(p0.clone(), p0)]);
        assert!(matches!(res, Err(ModelError::BadMeasurement(_))));
    }

    #[test]
    fn conditional_state_normalises() {
        let asm = maximally_mixed();
        let rho = asm.conditional_state(&[0], &[0], 0).unwrap();
        assert!((rho.trace() - 1.0).abs() < 1e-12);
    }
}
