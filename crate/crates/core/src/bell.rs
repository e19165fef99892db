//! Bell correlations from fully specified realizations, and Bell functional
//! evaluation.
//!
//! An assemblage alone never determines the joint correlations of the
//! uncharacterised and characterised parties, so this module deliberately
//! accepts only a [`QuantumRealization`] together with explicit measurement
//! choices for every characterised party.

use crate::matcore::{kron_all, CMatrix};
use crate::model::{cartesian, MeasurementSet, ModelError, QuantumRealization};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BellError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid correlations: {0}")]
    BadCorrelations(String),
    #[error("unsupported scenario: {0}")]
    UnsupportedScenario(String),
}

/// Key of one correlation entry: Alice outcomes, Bob outcomes, Alice
/// settings, Bob settings.
pub type BellKey = (Vec<usize>, Vec<usize>, Vec<usize>, Vec<usize>);

/// Full-scenario conditional probabilities `p(a b | x y)`.
#[derive(Debug, Clone)]
pub struct BellScenarioData {
    /// Setting counts per uncharacterised party.
    pub alice_settings: Vec<usize>,
    /// Outcome counts per uncharacterised party and setting.
    pub alice_outcomes: Vec<Vec<usize>>,
    /// Setting counts per characterised party.
    pub bob_settings: Vec<usize>,
    /// Outcome counts per characterised party and setting.
    pub bob_outcomes: Vec<Vec<usize>>,
    pub correlations: BTreeMap<BellKey, f64>,
}

const NS_TOL: f64 = 1e-9;

impl BellScenarioData {
    /// Validate nonnegativity, normalisation per joint setting, and
    /// no-signalling for every single party.
    pub fn new(
        alice_settings: Vec<usize>,
        alice_outcomes: Vec<Vec<usize>>,
        bob_settings: Vec<usize>,
        bob_outcomes: Vec<Vec<usize>>,
        correlations: BTreeMap<BellKey, f64>,
    ) -> Result<Self, BellError> {
        let d = BellScenarioData {
            alice_settings,
            alice_outcomes,
            bob_settings,
            bob_outcomes,
            correlations,
        };
        d.check()?;
        Ok(d)
    }

    fn n_alices(&self) -> usize {
        self.alice_settings.len()
    }

    fn n_parties(&self) -> usize {
        self.alice_settings.len() + self.bob_settings.len()
    }

    /// Setting count of the flattened party `t` (Alices first, then Bobs).
    fn settings_of(&self, t: usize) -> usize {
        let na = self.n_alices();
        if t < na {
            self.alice_settings[t]
        } else {
            self.bob_settings[t - na]
        }
    }

    /// Outcome count of flattened party `t` at its setting `x`.
    fn outcomes_of(&self, t: usize, x: usize) -> usize {
        let na = self.n_alices();
        if t < na {
            self.alice_outcomes[t][x]
        } else {
            self.bob_outcomes[t - na][x]
        }
    }

    fn key_from_flat(&self, outs: &[usize], setts: &[usize]) -> BellKey {
        let na = self.n_alices();
        (
            outs[..na].to_vec(),
            outs[na..].to_vec(),
            setts[..na].to_vec(),
            setts[na..].to_vec(),
        )
    }

    fn prob_flat(&self, outs: &[usize], setts: &[usize]) -> f64 {
        *self.correlations.get(&self.key_from_flat(outs, setts)).unwrap_or(&0.0)
    }

    fn all_setting_tuples(&self) -> Vec<Vec<usize>> {
        cartesian(&(0..self.n_parties()).map(|t| self.settings_of(t)).collect::<Vec<_>>())
    }

    fn outcome_tuples_for(&self, setts: &[usize]) -> Vec<Vec<usize>> {
        cartesian(
            &(0..self.n_parties()).map(|t| self.outcomes_of(t, setts[t])).collect::<Vec<_>>(),
        )
    }

    fn check(&self) -> Result<(), BellError> {
        for (&v, key) in self.correlations.values().zip(self.correlations.keys()) {
            if !v.is_finite() || v < -NS_TOL {
                return Err(BellError::BadCorrelations(format!(
                    "entry {:?} has value {}",
                    key, v
                )));
            }
        }
        for setts in self.all_setting_tuples() {
            let total: f64 =
                self.outcome_tuples_for(&setts).iter().map(|o| self.prob_flat(o, &setts)).sum();
            if (total - 1.0).abs() > 1e-7 {
                return Err(BellError::BadCorrelations(format!(
                    "setting {:?} sums to {}",
                    setts, total
                )));
            }
        }
        // Per-party no-signalling: summing out any one party's outcome gives
        // a distribution independent of that party's setting.
        for t in 0..self.n_parties() {
            let mut grouped: BTreeMap<Vec<usize>, BTreeMap<Vec<usize>, f64>> = BTreeMap::new();
            for setts in self.all_setting_tuples() {
                let mut others = setts.clone();
                others.remove(t);
                let mut marg: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
                for outs in self.outcome_tuples_for(&setts) {
                    let mut others_out = outs.clone();
                    others_out.remove(t);
                    *marg.entry(others_out).or_insert(0.0) += self.prob_flat(&outs, &setts);
                }
                match grouped.get(&others) {
                    None => {
                        grouped.insert(others, marg);
                    }
                    Some(base) => {
                        for (o, &v) in &marg {
                            let b = *base.get(o).unwrap_or(&0.0);
                            if (v - b).abs() > NS_TOL {
                                return Err(BellError::BadCorrelations(format!(
                                    "party {} signals by {:.3e}",
                                    t,
                                    (v - b).abs()
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Marginal over all uncharacterised parties (at their all-zeros setting;
    /// no-signalling makes the choice immaterial), as a Bobs-only scenario.
    pub fn bob_marginal(&self) -> Result<BellScenarioData, BellError> {
        let x0 = vec![0; self.n_alices()];
        let mut correlations: BTreeMap<BellKey, f64> = BTreeMap::new();
        for ((a, b, x, y), &v) in &self.correlations {
            if *x == x0 {
                let _ = a;
                *correlations
                    .entry((Vec::new(), b.clone(), Vec::new(), y.clone()))
                    .or_insert(0.0) += v;
            }
        }
        BellScenarioData::new(
            Vec::new(),
            Vec::new(),
            self.bob_settings.clone(),
            self.bob_outcomes.clone(),
            correlations,
        )
    }

    /// Marginal over all characterised parties (at their all-zeros setting).
    pub fn alice_marginal(&self) -> BTreeMap<(Vec<usize>, Vec<usize>), f64> {
        let y0 = vec![0; self.bob_settings.len()];
        let mut out: BTreeMap<(Vec<usize>, Vec<usize>), f64> = BTreeMap::new();
        for ((a, _b, x, y), &v) in &self.correlations {
            if *y == y0 {
                *out.entry((a.clone(), x.clone())).or_insert(0.0) += v;
            }
        }
        out
    }
}

/// A linear functional on correlations with a stated classical bound.
#[derive(Debug, Clone)]
pub struct BellFunctional {
    pub coefficients: BTreeMap<BellKey, f64>,
    pub classical_bound: f64,
    pub label: String,
}

impl BellFunctional {
    pub fn new(
        coefficients: BTreeMap<BellKey, f64>,
        classical_bound: f64,
        label: impl Into<String>,
    ) -> Result<Self, BellError> {
        if coefficients.values().any(|c| !c.is_finite()) || !classical_bound.is_finite() {
            return Err(BellError::BadCorrelations("non-finite functional coefficient".into()));
        }
        Ok(BellFunctional { coefficients, classical_bound, label: label.into() })
    }
}

/// `sum coefficients * probabilities`; absent correlation entries count as 0.
pub fn evaluate(f: &BellFunctional, d: &BellScenarioData) -> f64 {
    f.coefficients
        .iter()
        .map(|(key, &c)| c * d.correlations.get(key).copied().unwrap_or(0.0))
        .sum()
}

/// Joint correlations of a realization once every characterised party also
/// measures: `p(a b | x y) = tr[(M_a|x ⊗ N_b|y) rho]`.
pub fn correlations_from_realization(
    qr: &QuantumRealization,
    bob_meas: &[MeasurementSet],
) -> Result<BellScenarioData, BellError> {
    if bob_meas.len() != qr.bob_dims.len() {
        return Err(BellError::DimensionMismatch(format!(
            "{} measurement sets for {} characterised parties",
            bob_meas.len(),
            qr.bob_dims.len()
        )));
    }
    for (k, ms) in bob_meas.iter().enumerate() {
        if ms.dim != qr.bob_dims[k] {
            return Err(BellError::DimensionMismatch(format!(
                "party {} measurement dimension {} != {}",
                k, ms.dim, qr.bob_dims[k]
            )));
        }
    }
    let na = qr.alice_dims.len();
    let nb = qr.bob_dims.len();
    let alice_settings: Vec<usize> =
        qr.alice_measurements.iter().map(|m| m.outcomes.len()).collect();
    let alice_outcomes: Vec<Vec<usize>> =
        qr.alice_measurements.iter().map(|m| m.outcomes.clone()).collect();
    let bob_settings: Vec<usize> = bob_meas.iter().map(|m| m.outcomes.len()).collect();
    let bob_outcomes: Vec<Vec<usize>> = bob_meas.iter().map(|m| m.outcomes.clone()).collect();

    let mut correlations = BTreeMap::new();
    for x in cartesian(&alice_settings) {
        for y in cartesian(&bob_settings) {
            let a_radix: Vec<usize> = (0..na).map(|j| alice_outcomes[j][x[j]]).collect();
            let b_radix: Vec<usize> = (0..nb).map(|k| bob_outcomes[k][y[k]]).collect();
            for a in cartesian(&a_radix) {
                for b in cartesian(&b_radix) {
                    let mut factors: Vec<&CMatrix> = Vec::with_capacity(na + nb);
                    for j in 0..na {
                        factors.push(qr.alice_measurements[j].operator(x[j], a[j]).matrix());
                    }
                    for k in 0..nb {
                        factors.push(bob_meas[k].operator(y[k], b[k]).matrix());
                    }
                    let effect = kron_all(&factors);
                    let p = effect.matmul(qr.state.matrix()).trace().re;
                    correlations.insert((a.clone(), b, x.clone(), y.clone()), p);
                }
            }
        }
    }
    BellScenarioData::new(alice_settings, alice_outcomes, bob_settings, bob_outcomes, correlations)
}

// ---------------------------------------------------------------------------
// CHSH
// ---------------------------------------------------------------------------

fn chsh_keyed(
    n_alices: usize,
    n_bobs: usize,
    neg_cell: (usize, usize),
    global: f64,
    label: &str,
) -> Result<BellFunctional, BellError> {
    if n_alices + n_bobs != 2 {
        return Err(BellError::UnsupportedScenario(
            "CHSH needs exactly two binary parties".into(),
        ));
    }
    let mut coefficients = BTreeMap::new();
    for s1 in 0..2usize {
        for s2 in 0..2usize {
            for o1 in 0..2usize {
                for o2 in 0..2usize {
                    let mut sign = if (o1 + o2) % 2 == 0 { 1.0 } else { -1.0 };
                    if (s1, s2) == neg_cell {
                        sign = -sign;
                    }
                    let outs = [o1, o2];
                    let setts = [s1, s2];
                    let key = (
                        outs[..n_alices].to_vec(),
                        outs[n_alices..].to_vec(),
                        setts[..n_alices].to_vec(),
                        setts[n_alices..].to_vec(),
                    );
                    coefficients.insert(key, global * sign);
                }
            }
        }
    }
    BellFunctional::new(coefficients, 2.0, label)
}

/// The CHSH functional in correlator form,
/// `E(0,0) + E(0,1) + E(1,0) - E(1,1)`, with classical bound 2. The two
/// binary parties are the scenario's parties in order (uncharacterised
/// first).
pub fn chsh(n_alices: usize, n_bobs: usize) -> Result<BellFunctional, BellError> {
    chsh_keyed(n_alices, n_bobs, (1, 1), 1.0, "CHSH")
}

/// Largest CHSH value over the eight sign conventions (choice of the negated
/// correlator and an overall sign), with the achieving functional. All
/// variants share the classical bound 2.
pub fn chsh_maximal(d: &BellScenarioData) -> Result<(f64, BellFunctional), BellError> {
    let na = d.alice_settings.len();
    let nb = d.bob_settings.len();
    if na + nb != 2
        || (0..na).any(|t| d.alice_settings[t] != 2 || d.alice_outcomes[t] != vec![2, 2])
        || (0..nb).any(|t| d.bob_settings[t] != 2 || d.bob_outcomes[t] != vec![2, 2])
    {
        return Err(BellError::UnsupportedScenario(
            "CHSH needs exactly two parties with two binary settings each".into(),
        ));
    }
    let mut best: Option<(f64, BellFunctional)> = None;
    for neg in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        for global in [1.0, -1.0] {
            let f = chsh_keyed(na, nb, neg, global, "CHSH variant")?;
            let v = evaluate(&f, d);
            if best.as_ref().map_or(true, |(b, _)| v > *b) {
                best = Some((v, f));
            }
        }
    }
    Ok(best.expect("eight variants evaluated"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::{
        from_quantum_realization, ket, projector, x_basis_projectors, xz_eigenbasis_projectors,
        z_basis_projectors,
    };
    use crate::matcore::{kron, C64};
    use crate::matcore::HermitianMatrix;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    /// One maximally mixed uncharacterised qubit alongside a Bell pair shared
    /// by the two characterised qubits, with the measurement choices that
    /// maximally violate CHSH between the characterised parties.
    fn example_realization() -> (QuantumRealization, Vec<MeasurementSet>) {
        let psi_plus = ket(&[(0.0, 0.0), (1.0 / SQRT2, 0.0), (1.0 / SQRT2, 0.0), (0.0, 0.0)]);
        let bell = projector(&psi_plus);
        let state = kron(&CMatrix::identity(2).scale(C64::new(0.5, 0.0)), &bell);
        let alice =
            MeasurementSet::from_projector_pairs(2, &[x_basis_projectors(), z_basis_projectors()])
                .unwrap();
        let qr = QuantumRealization::new(
            vec![2],
            vec![2, 2],
            HermitianMatrix::new(state).unwrap(),
            vec![alice],
        )
        .unwrap();
        let b1 =
            MeasurementSet::from_projector_pairs(2, &[x_basis_projectors(), z_basis_projectors()])
                .unwrap();
        let b2 = MeasurementSet::from_projector_pairs(
            2,
            &[xz_eigenbasis_projectors(1.0), xz_eigenbasis_projectors(-1.0)],
        )
        .unwrap();
        (qr, vec![b1, b2])
    }

    fn pr_correlations() -> BellScenarioData {
        let mut correlations = BTreeMap::new();
        for x1 in 0..2usize {
            for x2 in 0..2usize {
                for a1 in 0..2usize {
                    for a2 in 0..2usize {
                        let p = if (a1 ^ a2) == (x1 & x2) { 0.5 } else { 0.0 };
                        correlations.insert((vec![a1, a2], vec![], vec![x1, x2], vec![]), p);
                    }
                }
            }
        }
        BellScenarioData::new(vec![2, 2], vec![vec![2, 2], vec![2, 2]], vec![], vec![], correlations)
            .unwrap()
    }

    #[test]
    fn example_factorises_into_half_times_bob_marginal() {
        let (qr, bobs) = example_realization();
        let d = correlations_from_realization(&qr, &bobs).unwrap();
        let marg = d.bob_marginal().unwrap();
        for ((_a, b, _x, y), &v) in &d.correlations {
            let pb = marg.correlations[&(vec![], b.clone(), vec![], y.clone())];
            assert!((v - 0.5 * pb).abs() < 1e-10, "p = {}, p(b|y) = {}", v, pb);
        }
    }

    #[test]
    fn example_bob_marginal_violates_chsh_maximally() {
        let (qr, bobs) = example_realization();
        let d = correlations_from_realization(&qr, &bobs).unwrap();
        let marg = d.bob_marginal().unwrap();
        let (v, f) = chsh_maximal(&marg).unwrap();
        assert!((v - 2.0 * SQRT2).abs() < 1e-9, "value = {}", v);
        assert_eq!(f.classical_bound, 2.0);
        // The standard sign convention is not the maximising one here.
        let std_v = evaluate(&chsh(0, 2).unwrap(), &marg);
        assert!(std_v.abs() < 1e-9, "standard form = {}", std_v);
    }

    #[test]
    fn chsh_on_pr_correlations_reaches_four() {
        let d = pr_correlations();
        let v = evaluate(&chsh(2, 0).unwrap(), &d);
        assert!((v - 4.0).abs() < 1e-12, "value = {}", v);
        let (vmax, _) = chsh_maximal(&d).unwrap();
        assert!((vmax - 4.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_box_respects_classical_bound() {
        // a1 = x1, a2 = 0 deterministically.
        let mut correlations = BTreeMap::new();
        for x1 in 0..2usize {
            for x2 in 0..2usize {
                for a1 in 0..2usize {
                    for a2 in 0..2usize {
                        let p = if a1 == x1 && a2 == 0 { 1.0 } else { 0.0 };
                        correlations.insert((vec![a1, a2], vec![], vec![x1, x2], vec![]), p);
                    }
                }
            }
        }
        let d = BellScenarioData::new(
            vec![2, 2],
            vec![vec![2, 2], vec![2, 2]],
            vec![],
            vec![],
            correlations,
        )
        .unwrap();
        let f = chsh(2, 0).unwrap();
        assert!(evaluate(&f, &d).abs() <= f.classical_bound + 1e-12);
    }

    #[test]
    fn product_state_computational_measurements_are_deterministic() {
        // |000> with computational-basis measurements everywhere.
        let mut state = CMatrix::zeros(8, 8);
        state[(0, 0)] = C64::new(1.0, 0.0);
        let zmeas = || {
            MeasurementSet::from_projector_pairs(2, &[z_basis_projectors()]).unwrap()
        };
        let qr = QuantumRealization::new(
            vec![2],
            vec![2, 2],
            HermitianMatrix::new(state).unwrap(),
            vec![zmeas()],
        )
        .unwrap();
        let d = correlations_from_realization(&qr, &[zmeas(), zmeas()]).unwrap();
        for &v in d.correlations.values() {
            assert!(v.abs() < 1e-12 || (v - 1.0).abs() < 1e-12);
        }
        assert!((d.correlations[&(vec![0], vec![0, 0], vec![0], vec![0, 0])] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alice_marginal_matches_assemblage_probabilities() {
        let (qr, bobs) = example_realization();
        let d = correlations_from_realization(&qr, &bobs).unwrap();
        let asm = from_quantum_realization(&qr).unwrap();
        let probs = asm.joint_probabilities();
        for (key, &v) in &d.alice_marginal() {
            assert!((v - probs[key]).abs() < 1e-10, "key {:?}: {} vs {}", key, v, probs[key]);
        }
    }

    #[test]
    fn signalling_correlations_rejected() {
        // Party 1's marginal depends on party 2's setting.
        let mut correlations = BTreeMap::new();
        for x1 in 0..2usize {
            for x2 in 0..2usize {
                for a1 in 0..2usize {
                    for a2 in 0..2usize {
                        let p1 = if x2 == 0 { [0.5, 0.5] } else { [0.9, 0.1] };
                        let p = p1[a1] * 0.5;
                        correlations.insert((vec![a1, a2], vec![], vec![x1, x2], vec![]), p);
                    }
                }
            }
        }
        assert!(matches!(
            BellScenarioData::new(
                vec![2, 2],
                vec![vec![2, 2], vec![2, 2]],
                vec![],
                vec![],
                correlations
            ),
            Err(BellError::BadCorrelations(_))
        ));
    }

    #[test]
    fn chsh_rejects_wrong_party_count() {
        assert!(chsh(2, 1).is_err());
    }
}
