//! Noise mixing and minimum-noise robustness.
//!
//! The robustness of an assemblage is the least weight `r` such that mixing
//! it with a chosen noise assemblage — `r * noise + (1 - r) * input` — makes
//! the parent-state program feasible. All constraints are jointly affine in
//! `(r, parents)`, so the minimum is found by a single SDP rather than an
//! outer bisection.

use crate::certify::{declare_parent_vars, extract_parent, ParentAssemblage};
use crate::construct::{noise_assemblage, ConstructError, NoiseKind};
use crate::model::{Assemblage, ModelError};
use crate::sdp::{ConicProblem, MatExpr, Sense, SdpError, SolveOutcome, SolverConfig};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RobustnessError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Construct(#[from] ConstructError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error("assemblages live in different scenarios")]
    ScenarioMismatch,
    #[error("mixing weight {0} is outside [0, 1]")]
    BadWeight(f64),
    #[error("noise assemblage itself fails the parent-state condition; no finite robustness")]
    NoiseInfeasible,
    #[error("solver could not decide: {0}")]
    Indeterminate(String),
}

/// Solver-side evidence attached to a [`RobustnessResult`].
#[derive(Debug, Clone)]
pub struct RobustnessDiagnostics {
    /// Smallest eigenvalue over the parent elements at the optimum.
    pub parent_min_eigenvalue: f64,
    /// Largest deviation of the parent marginals from the optimal mixture.
    pub marginal_residual: f64,
    /// True when more than one uncharacterised party is present: the program
    /// is then the necessary-condition relaxation only, so `r_star` is a
    /// lower bound on the true quantum robustness.
    pub lower_bound_only: bool,
    /// Feasibility tolerance the result was judged against.
    pub eps_feas: f64,
}

/// Minimum noise weight making the input's parent-state program feasible.
#[derive(Debug, Clone)]
pub struct RobustnessResult {
    /// Optimal mixing weight in `[0, 1]`.
    pub r_star: f64,
    /// The noise model that was mixed in.
    pub noise: NoiseKind,
    /// Parent assemblage certifying feasibility at `r_star`.
    pub parent_at_optimum: Option<ParentAssemblage>,
    pub diagnostics: RobustnessDiagnostics,
}

/// Convex combination `r * noise + (1 - r) * asm`, elementwise per Bob.
///
/// The weight `r` multiplies the *first* argument.
pub fn mix(noise: &Assemblage, asm: &Assemblage, r: f64) -> Result<Assemblage, RobustnessError> {
    if noise.scenario != asm.scenario {
        return Err(RobustnessError::ScenarioMismatch);
    }
    if !(0.0..=1.0).contains(&r) || !r.is_finite() {
        return Err(RobustnessError::BadWeight(r));
    }
    let mut elements = BTreeMap::new();
    for (key, bobs) in &asm.elements {
        let mixed = bobs
            .iter()
            .zip(&noise.elements[key])
            .map(|(a, n)| n.scale(r).add(&a.scale(1.0 - r)))
            .collect();
        elements.insert(key.clone(), mixed);
    }
    Ok(Assemblage::new(asm.scenario.clone(), elements)?)
}

/// Minimise `r` such that `r * noise + (1 - r) * asm` admits a parent
/// assemblage (setting-independent sum, PSD elements, correct marginals).
///
/// For more than one uncharacterised party the feasible program is a
/// relaxation, so the returned value is a lower bound on the true quantum
/// robustness; `diagnostics.lower_bound_only` records this.
pub fn robustness(asm: &Assemblage, noise: NoiseKind) -> Result<RobustnessResult, RobustnessError> {
    robustness_with(asm, noise, &SolverConfig::default())
}

pub fn robustness_with(
    asm: &Assemblage,
    noise: NoiseKind,
    cfg: &SolverConfig,
) -> Result<RobustnessResult, RobustnessError> {
    let noise_asm = noise_assemblage(&noise, &asm.scenario)?;

    let mut p = ConicProblem::new();
    let vars = declare_parent_vars(&mut p, &asm.scenario);
    let r_var = p.scalar_var("r");
    let r_expr = p.scalar_expr(r_var);

    // r in [0, 1] as 1x1 PSD blocks.
    let mut lo = MatExpr::zeros(1);
    lo.add_scalar_entry_sym(0, 0, &r_expr);
    p.psd("r >= 0", lo);
    let mut hi = MatExpr::zeros(1);
    hi.add_scalar_entry_sym(0, 0, &r_expr.scale(-1.0).add(&crate::sdp::ScalarExpr::constant(1.0)));
    p.psd("r <= 1", hi);

    // Per-Bob marginals of the parents equal the mixture, affinely in r:
    //     tr_{-k} parent = asm_el + r (noise_el - asm_el).
    let dims = asm.scenario.bob_dim_vector();
    for (key, &v) in &vars {
        let expr = p.var_expr(v);
        for k in 0..asm.scenario.num_bobs {
            let red = expr.partial_trace(&dims, &[k]).expect("Bob factor index");
            let asm_el = asm.elements[key][k].matrix();
            let diff = noise_asm.elements[key][k].matrix().sub(asm_el);
            let target = MatExpr::scalar_times_const(&r_expr, &diff)
                .add(&MatExpr::from_const(asm_el.clone()));
            p.require_eq(&red, &target);
        }
    }
    p.set_objective(Sense::Minimize, r_expr);

    match p.solve_optimization(cfg)? {
        SolveOutcome::Optimal { value, solution } => {
            let r_star = value.clamp(0.0, 1.0);
            let parent = extract_parent(&asm.scenario, &vars, &solution);
            let mixture = mix(&noise_asm, asm, r_star)?;
            let diagnostics = RobustnessDiagnostics {
                parent_min_eigenvalue: parent.min_eigenvalue(),
                marginal_residual: parent.max_marginal_residual(&mixture),
                lower_bound_only: asm.scenario.num_alices >= 2,
                eps_feas: cfg.eps_feas,
            };
            Ok(RobustnessResult { r_star, noise, parent_at_optimum: Some(parent), diagnostics })
        }
        SolveOutcome::Infeasible { .. } => Err(RobustnessError::NoiseInfeasible),
        SolveOutcome::Indeterminate { detail, .. } => Err(RobustnessError::Indeterminate(detail)),
        other => Err(RobustnessError::Indeterminate(format!("unexpected outcome {:?}", other))),
    }
}
