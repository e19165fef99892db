//! Certification engines: parent-state feasibility and its minimum-eigenvalue
//! relaxation, quantum membership for one uncharacterised party, classical
//! (local-hidden-state) membership, a scalar NPA moment hierarchy for the
//! uncharacterised parties' correlations, and level 1 of the operator-valued
//! outer moment hierarchy.

use crate::matcore::{min_eigenvalue, CMatrix, HermitianMatrix, MatError, C64};
use crate::model::{cartesian, Assemblage, ElemKey, ModelError, ScenarioSpec};
use crate::sdp::{
    ConicProblem, MatExpr, ScalarExpr, SdpError, SolveOutcome, Solution, SolverConfig, VarId,
};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error("hierarchy level {level} is not supported (maximum {max})")]
    UnsupportedLevel { level: usize, max: usize },
    #[error("unsupported scenario: {0}")]
    UnsupportedScenario(String),
    #[error("{count} deterministic strategies exceed the cap of {cap}")]
    TooManyStrategies { count: u128, cap: u128 },
    #[error("invalid correlation table: {0}")]
    BadCorrelations(String),
    #[error("solver could not decide: {0}")]
    Indeterminate(String),
}

/// Result of a membership query against a convex relaxation.
#[derive(Debug, Clone)]
pub enum Membership {
    /// In the set; `slack` is the optimal minimum-eigenvalue margin.
    Feasible { slack: f64 },
    /// Not in the set. `slack` is `None` when the linear constraints alone
    /// were inconsistent.
    Infeasible { slack: Option<f64> },
    Unknown { detail: String },
}

impl Membership {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Membership::Feasible { .. })
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, Membership::Infeasible { .. })
    }

    fn from_outcome(out: SolveOutcome) -> Result<Membership, CertifyError> {
        Ok(match out {
            SolveOutcome::Feasible { slack, .. } => Membership::Feasible { slack },
            SolveOutcome::Infeasible { slack, .. } => Membership::Infeasible { slack },
            SolveOutcome::Indeterminate { detail, .. } => Membership::Unknown { detail },
            other => {
                return Err(CertifyError::Indeterminate(format!(
                    "unexpected solver outcome {:?}",
                    other
                )))
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Parent-state program and the lambda relaxation
// ---------------------------------------------------------------------------

/// A candidate parent assemblage: one operator on the composite-Bob space per
/// joint outcome/setting, whose per-Bob partial traces reproduce a given
/// assemblage.
#[derive(Debug, Clone)]
pub struct ParentAssemblage {
    pub scenario: ScenarioSpec,
    pub elements: BTreeMap<ElemKey, HermitianMatrix>,
}

impl ParentAssemblage {
    /// Smallest eigenvalue over all elements.
    pub fn min_eigenvalue(&self) -> f64 {
        self.elements.values().map(min_eigenvalue).fold(f64::INFINITY, f64::min)
    }

    /// Largest deviation of the per-Bob partial traces from `asm`'s elements.
    pub fn max_marginal_residual(&self, asm: &Assemblage) -> f64 {
        let dims = self.scenario.bob_dim_vector();
        let mut worst = 0.0f64;
        for (key, parent) in &self.elements {
            for k in 0..self.scenario.num_bobs {
                let red = crate::matcore::partial_trace(parent.matrix(), &dims, &[k])
                    .expect("parent dims are the Bob dims");
                let target = &asm.elements[key][k];
                worst = worst.max(red.max_abs_diff(target.matrix()));
            }
        }
        worst
    }

    /// Largest setting-dependence of the summed elements.
    pub fn max_signalling(&self) -> f64 {
        let all_x = self.scenario.all_settings();
        let d = self.scenario.composite_bob_dim();
        let sum_for = |x: &Vec<usize>| -> CMatrix {
            let mut acc = CMatrix::zeros(d, d);
            for a in self.scenario.outcomes_for(x) {
                acc = acc.add(self.elements[&(a, x.clone())].matrix());
            }
            acc
        };
        let base = sum_for(&all_x[0]);
        all_x.iter().skip(1).map(|x| sum_for(x).max_abs_diff(&base)).fold(0.0, f64::max)
    }
}

/// Output of [`lambda_relaxation`].
#[derive(Debug, Clone)]
pub struct LambdaReport {
    /// Optimal minimum-eigenvalue slack of the parent elements.
    pub lambda_star: f64,
    /// Whether `lambda_star >= -eps_feas`, i.e. the parent program is feasible.
    pub feasible: bool,
    /// The parent assemblage at the optimum, when the solver produced a
    /// usable certificate matrix.
    pub parent: Option<ParentAssemblage>,
    /// Feasibility threshold that `feasible` was judged against.
    pub eps_feas: f64,
}

/// Declare the parent variables on a problem: one Hermitian matrix on the
/// composite-Bob space per element key, PSD, with the summed element
/// independent of the setting.
pub(crate) fn declare_parent_vars(
    p: &mut ConicProblem,
    scenario: &ScenarioSpec,
) -> BTreeMap<ElemKey, VarId> {
    let d = scenario.composite_bob_dim();
    let mut vars = BTreeMap::new();
    for (a, x) in scenario.element_keys() {
        let v = p.hermitian_var(&format!("parent[{:?}|{:?}]", a, x), d);
        p.psd(&format!("parent[{:?}|{:?}]", a, x), p.var_expr(v));
        vars.insert((a, x), v);
    }
    // No-signalling of the parent: the sum over outcomes is setting-independent.
    let all_x = scenario.all_settings();
    let sum_for = |p: &ConicProblem, x: &Vec<usize>| -> MatExpr {
        let mut acc = MatExpr::zeros(d);
        for a in scenario.outcomes_for(x) {
            acc = acc.add(&p.var_expr(vars[&(a, x.clone())]));
        }
        acc
    };
    let base = sum_for(p, &all_x[0]);
    for x in all_x.iter().skip(1) {
        let s = sum_for(p, x);
        p.require_eq(&s, &base);
    }
    vars
}

/// Add the marginal constraints: for each Bob `k` and element key, the partial
/// trace of the parent over all other Bobs equals the assemblage element.
fn constrain_parent_marginals(
    p: &mut ConicProblem,
    vars: &BTreeMap<ElemKey, VarId>,
    asm: &Assemblage,
) {
    let dims = asm.scenario.bob_dim_vector();
    for (key, &v) in vars {
        let expr = p.var_expr(v);
        for k in 0..asm.scenario.num_bobs {
            let red = expr.partial_trace(&dims, &[k]).expect("Bob factor index");
            p.require_eq_const(&red, asm.elements[key][k].matrix());
        }
    }
}

pub(crate) fn extract_parent(
    scenario: &ScenarioSpec,
    vars: &BTreeMap<ElemKey, VarId>,
    sol: &Solution,
) -> ParentAssemblage {
    let elements = vars
        .iter()
        .map(|(key, &v)| {
            let m = HermitianMatrix::symmetrize(sol.matrix_value(v)).expect("square");
            (key.clone(), m)
        })
        .collect();
    ParentAssemblage { scenario: scenario.clone(), elements }
}

/// Maximise the minimum-eigenvalue slack `t` such that parent elements with
/// `sigma >= t I` reproduce every Bob's elements as partial traces.
///
/// The parent program is feasible (a quantum explanation survives this
/// necessary condition) iff `lambda_star >= -eps_feas`.
pub fn lambda_relaxation(asm: &Assemblage) -> Result<LambdaReport, CertifyError> {
    lambda_relaxation_with(asm, &SolverConfig::default())
}

pub fn lambda_relaxation_with(
    asm: &Assemblage,
    cfg: &SolverConfig,
) -> Result<LambdaReport, CertifyError> {
    let mut p = ConicProblem::new();
    let vars = declare_parent_vars(&mut p, &asm.scenario);
    constrain_parent_marginals(&mut p, &vars, asm);
    match p.solve_feasibility(cfg)? {
        SolveOutcome::Feasible { slack, solution } => Ok(LambdaReport {
            lambda_star: slack,
            feasible: true,
            parent: Some(extract_parent(&asm.scenario, &vars, &solution)),
            eps_feas: cfg.eps_feas,
        }),
        SolveOutcome::Infeasible { slack: Some(slack), solution } => Ok(LambdaReport {
            lambda_star: slack,
            feasible: false,
            parent: solution.map(|s| extract_parent(&asm.scenario, &vars, &s)),
            eps_feas: cfg.eps_feas,
        }),
        SolveOutcome::Infeasible { slack: None, .. } => Err(CertifyError::Indeterminate(
            "marginal equality system inconsistent; input violates no-signalling".into(),
        )),
        SolveOutcome::Indeterminate { detail, .. } => Err(CertifyError::Indeterminate(detail)),
        other => Err(CertifyError::Indeterminate(format!("unexpected outcome {:?}", other))),
    }
}

/// SDPA-sparse text of the parent-state program (in max-slack form), for
/// hand-off to external solvers.
pub fn lambda_sdpa(asm: &Assemblage) -> Result<String, CertifyError> {
    let mut p = ConicProblem::new();
    let vars = declare_parent_vars(&mut p, &asm.scenario);
    constrain_parent_marginals(&mut p, &vars, asm);
    Ok(p.to_sdpa()?)
}

// ---------------------------------------------------------------------------
// Certification verdicts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    QuantumCertified,
    PostquantumCertified,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailedCondition {
    /// The uncharacterised parties' correlations fail the NPA relaxation.
    Condition1Npa,
    /// The parent-state program is infeasible.
    Condition2Parent,
}

#[derive(Debug, Clone)]
pub struct CertificationReport {
    pub verdict: Verdict,
    pub failed_condition: Option<FailedCondition>,
    pub lambda: LambdaReport,
    /// NPA level actually run on the correlations; 0 when not applicable
    /// (single uncharacterised party).
    pub npa_level_used: usize,
    pub npa: Option<Membership>,
}

/// Full certification: the parent-state relaxation always runs; for two or
/// more uncharacterised parties the NPA relaxation additionally screens their
/// joint correlations. With a single uncharacterised party the parent
/// condition is also sufficient, so feasibility certifies a quantum
/// explanation; with several parties a pass is only inconclusive.
pub fn certify(asm: &Assemblage, npa_level: usize) -> Result<CertificationReport, CertifyError> {
    certify_with(asm, npa_level, &SolverConfig::default())
}

pub fn certify_with(
    asm: &Assemblage,
    npa_level: usize,
    cfg: &SolverConfig,
) -> Result<CertificationReport, CertifyError> {
    let lambda = lambda_relaxation_with(asm, cfg)?;
    let n = asm.scenario.num_alices;
    if n == 1 {
        let (verdict, failed) = if lambda.feasible {
            (Verdict::QuantumCertified, None)
        } else {
            (Verdict::PostquantumCertified, Some(FailedCondition::Condition2Parent))
        };
        return Ok(CertificationReport {
            verdict,
            failed_condition: failed,
            lambda,
            npa_level_used: 0,
            npa: None,
        });
    }
    let table = CorrelationTable::from_assemblage(asm);
    let npa = npa_membership_with(&table, npa_level, cfg)?;
    let (verdict, failed) = if npa.is_infeasible() {
        (Verdict::PostquantumCertified, Some(FailedCondition::Condition1Npa))
    } else if !lambda.feasible {
        (Verdict::PostquantumCertified, Some(FailedCondition::Condition2Parent))
    } else {
        (Verdict::Inconclusive, None)
    };
    Ok(CertificationReport {
        verdict,
        failed_condition: failed,
        lambda,
        npa_level_used: npa_level,
        npa: Some(npa),
    })
}

// ---------------------------------------------------------------------------
// Correlation tables and the scalar NPA hierarchy
// ---------------------------------------------------------------------------

/// A conditional probability table over the uncharacterised parties.
#[derive(Debug, Clone)]
pub struct CorrelationTable {
    /// Number of settings per party.
    pub settings: Vec<usize>,
    /// Outcome counts per party and setting.
    pub outcomes: Vec<Vec<usize>>,
    /// `p(a|x)` for every joint outcome/setting.
    pub p: BTreeMap<ElemKey, f64>,
}

impl CorrelationTable {
    pub fn from_assemblage(asm: &Assemblage) -> CorrelationTable {
        CorrelationTable {
            settings: asm.scenario.settings.clone(),
            outcomes: asm.scenario.outcomes.clone(),
            p: asm.joint_probabilities(),
        }
    }

    pub fn num_parties(&self) -> usize {
        self.settings.len()
    }

    fn all_settings(&self) -> Vec<Vec<usize>> {
        cartesian(&self.settings)
    }

    fn outcomes_for(&self, x: &[usize]) -> Vec<Vec<usize>> {
        let radix: Vec<usize> = (0..self.num_parties()).map(|j| self.outcomes[j][x[j]]).collect();
        cartesian(&radix)
    }

    /// Marginal probability of the fixed `(party, setting, outcome)` triples,
    /// with all other parties summed out at their setting 0 (valid for
    /// no-signalling tables).
    fn marginal(&self, fixed: &[(usize, usize, usize)]) -> f64 {
        let n = self.num_parties();
        let mut x = vec![0usize; n];
        for &(j, xj, _) in fixed {
            x[j] = xj;
        }
        let mut free = Vec::new();
        for j in 0..n {
            if !fixed.iter().any(|&(fj, _, _)| fj == j) {
                free.push(j);
            }
        }
        let radix: Vec<usize> = free.iter().map(|&j| self.outcomes[j][x[j]]).collect();
        let mut total = 0.0;
        for rest in cartesian(&radix) {
            let mut a = vec![0usize; n];
            for (&j, &aj) in free.iter().zip(&rest) {
                a[j] = aj;
            }
            for &(j, _, aj) in fixed {
                a[j] = aj;
            }
            total += self.p[&(a, x.clone())];
        }
        total
    }

    /// Structural and no-signalling validation.
    pub fn check(&self) -> Result<(), CertifyError> {
        let n = self.num_parties();
        for x in self.all_settings() {
            let mut total = 0.0;
            for a in self.outcomes_for(&x) {
                let v = *self
                    .p
                    .get(&(a.clone(), x.clone()))
                    .ok_or_else(|| CertifyError::BadCorrelations(format!("missing entry ({:?}|{:?})", a, x)))?;
                if v < -1e-9 {
                    return Err(CertifyError::BadCorrelations(format!(
                        "negative probability {} at ({:?}|{:?})",
                        v, a, x
                    )));
                }
                total += v;
            }
            if (total - 1.0).abs() > 1e-7 {
                return Err(CertifyError::BadCorrelations(format!(
                    "probabilities for x = {:?} sum to {}",
                    x, total
                )));
            }
        }
        // No-signalling: each party's marginalisation removes its setting.
        for j in 0..n {
            let mut other_radix = self.settings.clone();
            other_radix.remove(j);
            for others in cartesian(&other_radix) {
                let embed = |xj: usize| {
                    let mut x = others.clone();
                    x.insert(j, xj);
                    x
                };
                let marg = |xj: usize| -> Vec<f64> {
                    let x = embed(xj);
                    let mut radix: Vec<usize> = (0..n).map(|jj| self.outcomes[jj][x[jj]]).collect();
                    let mine = radix.remove(j);
                    let mut out = Vec::new();
                    for rest in cartesian(&radix) {
                        let mut total = 0.0;
                        for aj in 0..mine {
                            let mut a = rest.clone();
                            a.insert(j, aj);
                            total += self.p[&(a, x.clone())];
                        }
                        out.push(total);
                    }
                    out
                };
                let base = marg(0);
                for xj in 1..self.settings[j] {
                    let cur = marg(xj);
                    let worst = base
                        .iter()
                        .zip(&cur)
                        .map(|(b, c)| (b - c).abs())
                        .fold(0.0f64, f64::max);
                    if worst > 1e-7 {
                        return Err(CertifyError::BadCorrelations(format!(
                            "party {} signals by {:.3e}",
                            j + 1,
                            worst
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// One projector symbol `(party, setting, outcome)` on the kept outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct OpSym {
    party: usize,
    setting: usize,
    outcome: usize,
}

/// Canonicalise a word of projector symbols: distinct parties commute
/// (stable-sort by party), repeated projectors collapse, and adjacent
/// same-setting distinct-outcome projectors annihilate the word.
fn normalize_word(word: &[OpSym]) -> Option<Vec<OpSym>> {
    let mut sorted = word.to_vec();
    sorted.sort_by_key(|op| op.party);
    let mut out: Vec<OpSym> = Vec::with_capacity(sorted.len());
    for op in sorted {
        match out.last() {
            Some(&prev) if prev == op => {}
            Some(&prev) if prev.party == op.party && prev.setting == op.setting => return None,
            _ => out.push(op),
        }
    }
    Some(out)
}

/// Canonical representative of the pair `{w, w†}` (projectors are Hermitian,
/// so the adjoint is the reversed word). Returns the representative and
/// whether `w` equals its own adjoint's representative (Hermitian class).
fn canonical_word(word: &[OpSym]) -> Option<(Vec<OpSym>, bool)> {
    let fwd = normalize_word(word)?;
    let rev: Vec<OpSym> = word.iter().rev().copied().collect();
    let bwd = normalize_word(&rev).expect("reversal cannot introduce annihilation");
    let hermitian = fwd == bwd;
    Some((fwd.clone().min(bwd), hermitian))
}

/// Scalar NPA membership for an n-party correlation table at levels 1 or 2.
///
/// Builds the standard moment-matrix relaxation (monomials: identity plus
/// products of at most `level` projectors, the last outcome of every setting
/// dropped) and decides feasibility via the max-slack reformulation.
pub fn npa_membership(table: &CorrelationTable, level: usize) -> Result<Membership, CertifyError> {
    npa_membership_with(table, level, &SolverConfig::default())
}

pub fn npa_membership_with(
    table: &CorrelationTable,
    level: usize,
    cfg: &SolverConfig,
) -> Result<Membership, CertifyError> {
    if level == 0 || level > 2 {
        return Err(CertifyError::UnsupportedLevel { level, max: 2 });
    }
    table.check()?;
    let n = table.num_parties();
    let mut ops = Vec::new();
    for j in 0..n {
        for x in 0..table.settings[j] {
            for a in 0..table.outcomes[j][x].saturating_sub(1) {
                ops.push(OpSym { party: j, setting: x, outcome: a });
            }
        }
    }

    // Monomial list: canonical nonzero words of length <= level.
    let mut monomials: Vec<Vec<OpSym>> = vec![Vec::new()];
    let mut frontier: Vec<Vec<OpSym>> = vec![Vec::new()];
    for _ in 0..level {
        let mut next = Vec::new();
        for w in &frontier {
            for &op in &ops {
                let mut cand = w.clone();
                cand.push(op);
                if let Some((rep, _)) = canonical_word(&cand) {
                    if rep.len() == cand.len() && !monomials.contains(&rep) {
                        monomials.push(rep.clone());
                        next.push(rep);
                    }
                }
            }
        }
        frontier = next;
    }

    // Moment expression per canonical word.
    let mut p = ConicProblem::new();
    let mut moments: BTreeMap<Vec<OpSym>, ScalarExpr> = BTreeMap::new();
    let mut moment_expr = |p: &mut ConicProblem, w: &[OpSym]| -> ScalarExpr {
        if let Some(e) = moments.get(w) {
            return e.clone();
        }
        let one_per_party = w.windows(2).all(|pair| pair[0].party != pair[1].party);
        let expr = if w.is_empty() {
            ScalarExpr::constant(1.0)
        } else if one_per_party {
            let fixed: Vec<(usize, usize, usize)> =
                w.iter().map(|op| (op.party, op.setting, op.outcome)).collect();
            ScalarExpr::constant(table.marginal(&fixed))
        } else {
            let v = p.scalar_var(&format!("y{:?}", w));
            p.scalar_expr(v)
        };
        moments.insert(w.to_vec(), expr.clone());
        expr
    };

    let dim = monomials.len();
    let mut gamma = MatExpr::zeros(dim);
    for i in 0..dim {
        for j in i..dim {
            let mut w: Vec<OpSym> = monomials[i].iter().rev().copied().collect();
            w.extend_from_slice(&monomials[j]);
            if let Some((rep, _)) = canonical_word(&w) {
                let expr = moment_expr(&mut p, &rep);
                gamma.add_scalar_entry_sym(i, j, &expr);
            }
        }
    }
    p.psd("moment_matrix", gamma);
    Membership::from_outcome(p.solve_feasibility(cfg)?)
}

// ---------------------------------------------------------------------------
// Local-hidden-state membership
// ---------------------------------------------------------------------------

/// A classical explanation: a distribution over deterministic response
/// strategies together with a normalised state per Bob and strategy.
#[derive(Debug, Clone)]
pub struct LhsModel {
    /// `strategies[l][j][x]` is the outcome party `j` deterministically
    /// produces for setting `x` under hidden variable `l`.
    pub strategies: Vec<Vec<Vec<usize>>>,
    /// `weights[l] = p(l)`, summing to 1.
    pub weights: Vec<f64>,
    /// `bob_states[l][k]` is the normalised state of Bob `k` under `l`.
    pub bob_states: Vec<Vec<HermitianMatrix>>,
}

impl LhsModel {
    /// Rebuild the assemblage this model generates.
    pub fn reconstruct(&self, scenario: &ScenarioSpec) -> Result<Assemblage, ModelError> {
        let mut elements = BTreeMap::new();
        for (a, x) in scenario.element_keys() {
            let mut bobs: Vec<CMatrix> =
                scenario.bob_dims.iter().map(|&d| CMatrix::zeros(d, d)).collect();
            for (l, strat) in self.strategies.iter().enumerate() {
                let hit = (0..scenario.num_alices).all(|j| strat[j][x[j]] == a[j]);
                if hit {
                    for (k, acc) in bobs.iter_mut().enumerate() {
                        *acc = acc.add(
                            &self.bob_states[l][k].matrix().scale(C64::new(self.weights[l], 0.0)),
                        );
                    }
                }
            }
            let bobs = bobs
                .into_iter()
                .map(|m| HermitianMatrix::symmetrize(m).expect("square"))
                .collect();
            elements.insert((a, x), bobs);
        }
        Assemblage::new(scenario.clone(), elements)
    }
}

/// Outcome of [`lhs_membership`].
#[derive(Debug, Clone)]
pub enum LhsOutcome {
    Feasible { model: LhsModel, slack: f64 },
    Infeasible { slack: Option<f64> },
    Unknown { detail: String },
}

impl LhsOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, LhsOutcome::Feasible { .. })
    }
}

const LHS_STRATEGY_CAP: u128 = 1_000_000;

/// Enumerate the deterministic response strategies of every party.
fn deterministic_strategies(scenario: &ScenarioSpec) -> Result<Vec<Vec<Vec<usize>>>, CertifyError> {
    let mut count: u128 = 1;
    for j in 0..scenario.num_alices {
        for x in 0..scenario.settings[j] {
            count = count.saturating_mul(scenario.outcomes[j][x] as u128);
            if count > LHS_STRATEGY_CAP {
                return Err(CertifyError::TooManyStrategies { count, cap: LHS_STRATEGY_CAP });
            }
        }
    }
    let per_party: Vec<Vec<Vec<usize>>> =
        (0..scenario.num_alices).map(|j| cartesian(&scenario.outcomes[j])).collect();
    let radix: Vec<usize> = per_party.iter().map(Vec::len).collect();
    Ok(cartesian(&radix)
        .into_iter()
        .map(|pick| {
            (0..scenario.num_alices).map(|j| per_party[j][pick[j]].clone()).collect::<Vec<_>>()
        })
        .collect())
}

/// Decide whether the assemblage admits a local-hidden-state model, by a
/// feasibility SDP over one subnormalised state per Bob and strategy.
pub fn lhs_membership(asm: &Assemblage) -> Result<LhsOutcome, CertifyError> {
    lhs_membership_with(asm, &SolverConfig::default())
}

pub fn lhs_membership_with(
    asm: &Assemblage,
    cfg: &SolverConfig,
) -> Result<LhsOutcome, CertifyError> {
    let scenario = &asm.scenario;
    let strategies = deterministic_strategies(scenario)?;
    let num = strategies.len();
    let mut p = ConicProblem::new();
    let mut vars: Vec<Vec<VarId>> = Vec::with_capacity(num);
    for l in 0..num {
        let mut per_bob = Vec::with_capacity(scenario.num_bobs);
        for (k, &d) in scenario.bob_dims.iter().enumerate() {
            let v = p.hermitian_var(&format!("rho[{}][{}]", l, k), d);
            p.psd(&format!("rho[{}][{}]", l, k), p.var_expr(v));
            per_bob.push(v);
        }
        // The weight tr(rho^k_l) must agree across Bobs.
        for k in 1..scenario.num_bobs {
            let diff = p
                .var_expr(per_bob[k])
                .trace_re()
                .add(&p.var_expr(per_bob[0]).trace_re().scale(-1.0));
            p.require_scalar_eq(&diff, 0.0);
        }
        vars.push(per_bob);
    }
    // Mixture constraints: sum over matching strategies reproduces each element.
    for (a, x) in scenario.element_keys() {
        for k in 0..scenario.num_bobs {
            let mut acc = MatExpr::zeros(scenario.bob_dims[k]);
            for (l, strat) in strategies.iter().enumerate() {
                let hit = (0..scenario.num_alices).all(|j| strat[j][x[j]] == a[j]);
                if hit {
                    acc = acc.add(&p.var_expr(vars[l][k]));
                }
            }
            p.require_eq_const(&acc, asm.elements[&(a.clone(), x.clone())][k].matrix());
        }
    }
    match p.solve_feasibility(cfg)? {
        SolveOutcome::Feasible { slack, solution } => {
            let mut weights = Vec::with_capacity(num);
            let mut bob_states = Vec::with_capacity(num);
            for per_bob in &vars {
                let raw: Vec<CMatrix> =
                    per_bob.iter().map(|&v| solution.matrix_value(v)).collect();
                let w = raw[0].trace().re.max(0.0);
                weights.push(w);
                let states = raw
                    .into_iter()
                    .enumerate()
                    .map(|(k, m)| {
                        let d = scenario.bob_dims[k];
                        if w > 1e-9 {
                            HermitianMatrix::symmetrize(m.scale(C64::new(1.0 / w, 0.0)))
                                .expect("square")
                        } else {
                            crate::model::scaled_identity(d, 1.0 / d as f64)
                        }
                    })
                    .collect();
                bob_states.push(states);
            }
            let total: f64 = weights.iter().sum();
            if total > 0.0 {
                for w in &mut weights {
                    *w /= total;
                }
            }
            Ok(LhsOutcome::Feasible { model: LhsModel { strategies, weights, bob_states }, slack })
        }
        SolveOutcome::Infeasible { slack, .. } => Ok(LhsOutcome::Infeasible { slack }),
        SolveOutcome::Indeterminate { detail, .. } => Ok(LhsOutcome::Unknown { detail }),
        other => Err(CertifyError::Indeterminate(format!("unexpected outcome {:?}", other))),
    }
}

// ---------------------------------------------------------------------------
// Level-1 outer moment hierarchy
// ---------------------------------------------------------------------------

/// Level-1 membership in the operator-valued outer hierarchy.
///
/// The moment matrix carries one composite-Bob-dimensional block per monomial
/// pair, over monomials {identity} ∪ {single projectors} ∪ (for two parties)
/// {ordered cross-party products}; projectivity and cross-party commutation
/// are imposed by identifying blocks, and the identity row reproduces the
/// assemblage through partial traces. Feasibility tightens the bare
/// parent-state program.
pub fn outer_hierarchy_membership(asm: &Assemblage, level: usize) -> Result<Membership, CertifyError> {
    outer_hierarchy_membership_with(asm, level, &SolverConfig::default())
}

pub fn outer_hierarchy_membership_with(
    asm: &Assemblage,
    level: usize,
    cfg: &SolverConfig,
) -> Result<Membership, CertifyError> {
    if level != 1 {
        return Err(CertifyError::UnsupportedLevel { level, max: 1 });
    }
    let scenario = &asm.scenario;
    let n = scenario.num_alices;
    if n > 2 {
        return Err(CertifyError::UnsupportedScenario(
            "outer hierarchy level 1 supports at most two uncharacterised parties".into(),
        ));
    }
    let d = scenario.composite_bob_dim();
    let dims = scenario.bob_dim_vector();
    let table = CorrelationTable::from_assemblage(asm);

    // Kept projector symbols (last outcome of each setting dropped).
    let mut singles = Vec::new();
    for j in 0..n {
        for x in 0..scenario.settings[j] {
            for a in 0..scenario.outcomes[j][x].saturating_sub(1) {
                singles.push(OpSym { party: j, setting: x, outcome: a });
            }
        }
    }
    let mut monomials: Vec<Vec<OpSym>> = vec![Vec::new()];
    monomials.extend(singles.iter().map(|&op| vec![op]));
    if n == 2 {
        for &op1 in singles.iter().filter(|o| o.party == 0) {
            for &op2 in singles.iter().filter(|o| o.party == 1) {
                monomials.push(vec![op1, op2]);
            }
        }
    }

    // Block expression per ordered word: Hermitian classes get one variable,
    // general classes a Hermitian pair H + iK with the adjoint on the mirror.
    let mut p = ConicProblem::new();
    let mut blocks: BTreeMap<Vec<OpSym>, (VarId, Option<VarId>)> = BTreeMap::new();
    let mut block_expr = |p: &mut ConicProblem, word: &[OpSym]| -> Option<MatExpr> {
        let (rep, hermitian) = canonical_word(word)?;
        let fwd = normalize_word(word).expect("canonical_word checked");
        let entry = blocks.entry(rep.clone()).or_insert_with(|| {
            let h = p.hermitian_var(&format!("H{:?}", rep), d);
            let k = if hermitian { None } else { Some(p.hermitian_var(&format!("K{:?}", rep), d)) };
            (h, k)
        });
        let h_expr = p.var_expr(entry.0);
        Some(match entry.1 {
            None => h_expr,
            Some(kv) => {
                let sign = if fwd == rep { 1.0 } else { -1.0 };
                h_expr.add(&p.var_expr(kv).scale(C64::new(0.0, sign)))
            }
        })
    };

    let nb = monomials.len();
    let mut g = MatExpr::zeros(nb * d);
    for i in 0..nb {
        for j in i..nb {
            let mut w: Vec<OpSym> = monomials[i].iter().rev().copied().collect();
            w.extend_from_slice(&monomials[j]);
            if let Some(expr) = block_expr(&mut p, &w) {
                g.add_embedded(i * d, j * d, &expr);
                if i != j {
                    g.add_embedded(j * d, i * d, &expr.adjoint());
                }
            }
        }
    }
    p.psd("outer_moment_matrix", g);

    // Identity block: unit trace and the Bobs' reduced states.
    let rho_expr = block_expr(&mut p, &[]).expect("identity word");
    p.require_scalar_eq(&rho_expr.trace_re(), 1.0);
    for k in 0..scenario.num_bobs {
        let target = asm.bob_reduced_state(k)?;
        let red = rho_expr.partial_trace(&dims, &[k])?;
        p.require_eq_const(&red, target.matrix());
    }

    // Single and cross-party monomials reproduce the assemblage marginals.
    let marginal_matrix = |fixed: &[OpSym], k: usize| -> CMatrix {
        // Element marginal with unmentioned parties summed out at setting 0.
        let mut x = vec![0usize; n];
        for op in fixed {
            x[op.party] = op.setting;
        }
        let mut free = Vec::new();
        for j in 0..n {
            if !fixed.iter().any(|op| op.party == j) {
                free.push(j);
            }
        }
        let radix: Vec<usize> = free.iter().map(|&j| scenario.outcomes[j][x[j]]).collect();
        let dk = scenario.bob_dims[k];
        let mut acc = CMatrix::zeros(dk, dk);
        for rest in cartesian(&radix) {
            let mut a = vec![0usize; n];
            for (&j, &aj) in free.iter().zip(&rest) {
                a[j] = aj;
            }
            for op in fixed {
                a[op.party] = op.outcome;
            }
            acc = acc.add(asm.elements[&(a, x.clone())][k].matrix());
        }
        acc
    };
    for mono in monomials.iter().skip(1) {
        let expr = block_expr(&mut p, mono).expect("kept monomials are nonzero");
        for k in 0..scenario.num_bobs {
            let red = expr.partial_trace(&dims, &[k])?;
            p.require_eq_const(&red, &marginal_matrix(mono, k));
        }
    }

    // Parent elements for dropped outcomes are linear combinations of the
    // represented blocks; require them PSD too so that feasibility here
    // implies feasibility of the bare parent program.
    let single_expr = |p: &mut ConicProblem,
                       blocks: &mut dyn FnMut(&mut ConicProblem, &[OpSym]) -> Option<MatExpr>,
                       op: OpSym| { blocks(p, &[op]).expect("single") };
    let _ = single_expr; // helper retained for clarity below
    if n == 1 {
        for x in 0..scenario.settings[0] {
            let mut dropped = rho_expr.clone();
            for a in 0..scenario.outcomes[0][x] - 1 {
                let e = block_expr(&mut p, &[OpSym { party: 0, setting: x, outcome: a }]).unwrap();
                dropped = dropped.sub(&e);
            }
            p.psd(&format!("dropped[x={}]", x), dropped);
        }
    } else {
        for x1 in 0..scenario.settings[0] {
            for x2 in 0..scenario.settings[1] {
                let kept1 = scenario.outcomes[0][x1] - 1;
                let kept2 = scenario.outcomes[1][x2] - 1;
                let sym1 = |a| OpSym { party: 0, setting: x1, outcome: a };
                let sym2 = |a| OpSym { party: 1, setting: x2, outcome: a };
                // (dropped, kept) and (kept, dropped) combinations.
                for a2 in 0..kept2 {
                    let mut e = block_expr(&mut p, &[sym2(a2)]).unwrap();
                    for a1 in 0..kept1 {
                        e = e.sub(&block_expr(&mut p, &[sym1(a1), sym2(a2)]).unwrap());
                    }
                    p.psd(&format!("dropped[1][{},{},{}]", x1, x2, a2), e);
                }
                for a1 in 0..kept1 {
                    let mut e = block_expr(&mut p, &[sym1(a1)]).unwrap();
                    for a2 in 0..kept2 {
                        e = e.sub(&block_expr(&mut p, &[sym1(a1), sym2(a2)]).unwrap());
                    }
                    p.psd(&format!("dropped[2][{},{},{}]", x1, x2, a1), e);
                }
                // Both dropped.
                let mut e = rho_expr.clone();
                for a1 in 0..kept1 {
                    e = e.sub(&block_expr(&mut p, &[sym1(a1)]).unwrap());
                }
                for a2 in 0..kept2 {
                    e = e.sub(&block_expr(&mut p, &[sym2(a2)]).unwrap());
                }
                for a1 in 0..kept1 {
                    for a2 in 0..kept2 {
                        e = e.add(&block_expr(&mut p, &[sym1(a1), sym2(a2)]).unwrap());
                    }
                }
                p.psd(&format!("dropped[12][{},{}]", x1, x2), e);
            }
        }
    }
    let _ = table;
    Membership::from_outcome(p.solve_feasibility(cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::{load_fixture, noise_assemblage, pr_assemblage, FixtureName, NoiseKind};
    use crate::model::scaled_identity;

    fn mixed_assemblage() -> Assemblage {
        let sc = ScenarioSpec::uniform(1, 2, 2, vec![2, 2]).unwrap();
        let mut elems = BTreeMap::new();
        for key in sc.element_keys() {
            elems.insert(key, vec![scaled_identity(2, 0.25), scaled_identity(2, 0.25)]);
        }
        Assemblage::new(sc, elems).unwrap()
    }

    #[test]
    fn lambda_pr_feasible() {
        let rep = lambda_relaxation(&pr_assemblage()).unwrap();
        assert!(rep.feasible, "lambda_star = {}", rep.lambda_star);
        assert!(rep.lambda_star >= -1e-6);
        let parent = rep.parent.expect("feasible run returns a parent");
        assert!(parent.max_marginal_residual(&pr_assemblage()) < 1e-6);
        assert!(parent.max_signalling() < 1e-6);
    }

    #[test]
    fn lambda_abb1_infeasible_with_expected_margin() {
        let asm = load_fixture(FixtureName::Abb1);
        let rep = lambda_relaxation(&asm).unwrap();
        assert!(!rep.feasible);
        let expected = -0.00185;
        let rel = (rep.lambda_star - expected).abs() / expected.abs();
        assert!(rel < 0.25, "lambda_star = {}", rep.lambda_star);
    }

    #[test]
    fn certify_verdicts_on_fixtures() {
        let abb1 = certify(&load_fixture(FixtureName::Abb1), 1).unwrap();
        assert_eq!(abb1.verdict, Verdict::PostquantumCertified);
        assert_eq!(abb1.failed_condition, Some(FailedCondition::Condition2Parent));

        let pqnl = certify(&load_fixture(FixtureName::AbbPqnl), 1).unwrap();
        assert_eq!(pqnl.verdict, Verdict::QuantumCertified);

        let pr = certify(&pr_assemblage(), 1).unwrap();
        assert_eq!(pr.verdict, Verdict::PostquantumCertified);
        assert_eq!(pr.failed_condition, Some(FailedCondition::Condition1Npa));
    }

    #[test]
    fn npa_deterministic_box_feasible() {
        let mut p = BTreeMap::new();
        for x1 in 0..2usize {
            for x2 in 0..2usize {
                for a1 in 0..2usize {
                    for a2 in 0..2usize {
                        let v = if a1 == 0 && a2 == 0 { 1.0 } else { 0.0 };
                        p.insert((vec![a1, a2], vec![x1, x2]), v);
                    }
                }
            }
        }
        let table = CorrelationTable {
            settings: vec![2, 2],
            outcomes: vec![vec![2, 2], vec![2, 2]],
            p,
        };
        assert!(npa_membership(&table, 1).unwrap().is_feasible());
        assert!(npa_membership(&table, 2).unwrap().is_feasible());
    }

    #[test]
    fn npa_pr_infeasible_at_level_one() {
        let table = CorrelationTable::from_assemblage(&pr_assemblage());
        let m = npa_membership(&table, 1).unwrap();
        assert!(m.is_infeasible(), "{:?}", m);
    }

    #[test]
    fn npa_rejects_bad_levels() {
        let table = CorrelationTable::from_assemblage(&pr_assemblage());
        assert!(matches!(
            npa_membership(&table, 3),
            Err(CertifyError::UnsupportedLevel { level: 3, max: 2 })
        ));
    }

    #[test]
    fn lhs_mixed_assemblage_feasible_and_reconstructs() {
        let asm = mixed_assemblage();
        match lhs_membership(&asm).unwrap() {
            LhsOutcome::Feasible { model, .. } => {
                let total: f64 = model.weights.iter().sum();
                assert!((total - 1.0).abs() < 1e-6);
                let rebuilt = model.reconstruct(&asm.scenario).unwrap();
                for (key, bobs) in &asm.elements {
                    for (k, b) in bobs.iter().enumerate() {
                        assert!(b.matrix().max_abs_diff(rebuilt.elements[key][k].matrix()) < 1e-6);
                    }
                }
            }
            other => panic!("expected feasible, got {:?}", other),
        }
    }

    #[test]
    fn lhs_ghz_noise_feasible() {
        let sc = ScenarioSpec::uniform(1, 2, 2, vec![2, 2]).unwrap();
        let asm = noise_assemblage(&NoiseKind::Ghz, &sc).unwrap();
        assert!(lhs_membership(&asm).unwrap().is_feasible());
    }

    #[test]
    fn lhs_abb1_infeasible() {
        let asm = load_fixture(FixtureName::Abb1);
        assert!(matches!(lhs_membership(&asm).unwrap(), LhsOutcome::Infeasible { .. }));
    }

    #[test]
    fn outer_level_one_on_mixed_and_abb1() {
        let m = outer_hierarchy_membership(&mixed_assemblage(), 1).unwrap();
        assert!(m.is_feasible(), "{:?}", m);
        let m = outer_hierarchy_membership(&load_fixture(FixtureName::Abb1), 1).unwrap();
        assert!(m.is_infeasible(), "{:?}", m);
    }

    #[test]
    fn outer_rejects_higher_levels() {
        assert!(matches!(
            outer_hierarchy_membership(&mixed_assemblage(), 2),
            Err(CertifyError::UnsupportedLevel { level: 2, max: 1 })
        ));
    }


    #[test]
    fn canonicalisation_rules() {
        let a0 = OpSym { party: 0, setting: 0, outcome: 0 };
        let a1 = OpSym { party: 0, setting: 1, outcome: 0 };
        let b0 = OpSym { party: 1, setting: 0, outcome: 0 };
        // Idempotence.
        assert_eq!(normalize_word(&[a0, a0]).unwrap(), vec![a0]);
        // Same-setting orthogonality.
        let a0b = OpSym { party: 0, setting: 0, outcome: 1 };
        assert!(normalize_word(&[a0, a0b]).is_none());
        // Cross-party commutation.
        assert_eq!(normalize_word(&[b0, a0]).unwrap(), vec![a0, b0]);
        // Adjoint pairing: A0 A1 and A1 A0 share a representative.
        let (r1, h1) = canonical_word(&[a0, a1]).unwrap();
        let (r2, h2) = canonical_word(&[a1, a0]).unwrap();
        assert_eq!(r1, r2);
        assert!(!h1 && !h2);
        // Cross-party products are Hermitian classes.
        let (_, h) = canonical_word(&[a0, b0]).unwrap();
        assert!(h);
    }
}
