//! Conic problem builder and reduction to a real-symmetric LMI.
//!
//! Callers declare Hermitian matrix variables and scalar variables, affine
//! matrix expressions over them, entrywise equality constraints and PSD
//! constraints, plus an optional linear objective. `solve` then
//!
//! 1. assembles all equalities into a linear system over the real parameters
//!    and eliminates it exactly via SVD (inconsistent systems certify
//!    infeasibility outright),
//! 2. embeds each complex PSD block into its real-symmetric form,
//! 3. prunes parameters that no block sees,
//! 4. hands the reduced LMI to the interior-point solver in [`ipm`].
//!
//! Feasibility problems are posed in max-slack form: maximize `t` such that
//! every block minus `t I` stays PSD. The sign of the optimal slack — never a
//! raw solver status — decides feasibility, with `eps_feas` as the cut.

pub mod ipm;

use crate::matcore::{partial_trace, real_embedding, CMatrix, DimVector, MatError, C64};
use ipm::{IpmConfig, IpmStatus, ReducedSdp, SdpBlock};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("matrix error: {0}")]
    Mat(#[from] MatError),
    #[error("expression dimensions {0} and {1} differ")]
    ExprDim(usize, usize),
    #[error("problem has no PSD constraint")]
    NoCone,
    #[error("objective set twice")]
    DuplicateObjective,
}

/// Handle to a declared variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

#[derive(Debug, Clone)]
struct VarInfo {
    name: String,
    dim: usize,
    offset: usize,
}

impl VarInfo {
    /// Real parameter count: `dim` diagonal entries plus (re, im) per
    /// off-diagonal pair. A scalar variable is the `dim == 1` case.
    fn param_count(&self) -> usize {
        self.dim * self.dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Real-valued affine expression over the problem parameters.
#[derive(Debug, Clone, Default)]
pub struct ScalarExpr {
    pub terms: BTreeMap<usize, f64>,
    pub constant: f64,
}

impl ScalarExpr {
    pub fn constant(v: f64) -> Self {
        ScalarExpr { terms: BTreeMap::new(), constant: v }
    }

    pub fn add(&self, o: &ScalarExpr) -> ScalarExpr {
        let mut out = self.clone();
        out.constant += o.constant;
        for (&p, &c) in &o.terms {
            *out.terms.entry(p).or_insert(0.0) += c;
        }
        out
    }

    pub fn scale(&self, s: f64) -> ScalarExpr {
        ScalarExpr {
            terms: self.terms.iter().map(|(&p, &c)| (p, c * s)).collect(),
            constant: self.constant * s,
        }
    }
}

/// Matrix-valued affine expression: `constant + sum_p y_p coeff[p]`.
///
/// Parameters are real; coefficient matrices may be complex, so expressions
/// can represent Hermitian quantities as well as general intermediate blocks.
#[derive(Debug, Clone)]
pub struct MatExpr {
    dim: usize,
    constant: CMatrix,
    coeffs: BTreeMap<usize, CMatrix>,
}

impl MatExpr {
    pub fn zeros(dim: usize) -> Self {
        MatExpr { dim, constant: CMatrix::zeros(dim, dim), coeffs: BTreeMap::new() }
    }

    pub fn from_const(m: CMatrix) -> Self {
        assert_eq!(m.rows(), m.cols());
        MatExpr { dim: m.rows(), constant: m, coeffs: BTreeMap::new() }
    }

    pub fn identity(dim: usize) -> Self {
        MatExpr::from_const(CMatrix::identity(dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn add(&self, o: &MatExpr) -> MatExpr {
        assert_eq!(self.dim, o.dim);
        let mut out = self.clone();
        out.constant = out.constant.add(&o.constant);
        for (&p, c) in &o.coeffs {
            match out.coeffs.get_mut(&p) {
                Some(e) => *e = e.add(c),
                None => {
                    out.coeffs.insert(p, c.clone());
                }
            }
        }
        out
    }

    pub fn sub(&self, o: &MatExpr) -> MatExpr {
        self.add(&o.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: C64) -> MatExpr {
        MatExpr {
            dim: self.dim,
            constant: self.constant.scale(s),
            coeffs: self.coeffs.iter().map(|(&p, c)| (p, c.scale(s))).collect(),
        }
    }

    pub fn adjoint(&self) -> MatExpr {
        MatExpr {
            dim: self.dim,
            constant: self.constant.adjoint(),
            coeffs: self.coeffs.iter().map(|(&p, c)| (p, c.adjoint())).collect(),
        }
    }

    /// Entrywise partial trace over the factors not in `keep`.
    pub fn partial_trace(&self, dims: &DimVector, keep: &[usize]) -> Result<MatExpr, MatError> {
        let constant = partial_trace(&self.constant, dims, keep)?;
        let mut coeffs = BTreeMap::new();
        for (&p, c) in &self.coeffs {
            coeffs.insert(p, partial_trace(c, dims, keep)?);
        }
        Ok(MatExpr { dim: constant.rows(), constant, coeffs })
    }

    /// Real part of the trace, as a scalar expression.
    pub fn trace_re(&self) -> ScalarExpr {
        ScalarExpr {
            constant: self.constant.trace().re,
            terms: self.coeffs.iter().map(|(&p, c)| (p, c.trace().re)).filter(|(_, v)| *v != 0.0).collect(),
        }
    }

    /// `s * m` for a real affine scalar `s` and a constant matrix `m`.
    pub fn scalar_times_const(s: &ScalarExpr, m: &CMatrix) -> MatExpr {
        assert_eq!(m.rows(), m.cols());
        MatExpr {
            dim: m.rows(),
            constant: m.scale(C64::new(s.constant, 0.0)),
            coeffs: s.terms.iter().map(|(&p, &c)| (p, m.scale(C64::new(c, 0.0)))).collect(),
        }
    }

    /// Place `small` as a sub-block with upper-left corner `(r0, c0)`.
    pub fn add_embedded(&mut self, r0: usize, c0: usize, small: &MatExpr) {
        let pad = |m: &CMatrix| -> CMatrix {
            let mut big = CMatrix::zeros(self.dim, self.dim);
            for i in 0..m.rows() {
                for j in 0..m.cols() {
                    big[(r0 + i, c0 + j)] = m[(i, j)];
                }
            }
            big
        };
        self.constant = self.constant.add(&pad(&small.constant));
        for (&p, c) in &small.coeffs {
            let padded = pad(c);
            match self.coeffs.get_mut(&p) {
                Some(e) => *e = e.add(&padded),
                None => {
                    self.coeffs.insert(p, padded);
                }
            }
        }
    }

    /// Add a real scalar expression at entry `(i, j)`; for `i != j` the
    /// mirrored entry `(j, i)` receives the same value, keeping the
    /// expression Hermitian.
    pub fn add_scalar_entry_sym(&mut self, i: usize, j: usize, s: &ScalarExpr) {
        let put = |m: &mut CMatrix, v: f64| {
            m[(i, j)] += C64::new(v, 0.0);
            if i != j {
                m[(j, i)] += C64::new(v, 0.0);
            }
        };
        put(&mut self.constant, s.constant);
        for (&p, &c) in &s.terms {
            let entry = self.coeffs.entry(p).or_insert_with(|| CMatrix::zeros(self.dim, self.dim));
            put(entry, c);
        }
    }

    /// Evaluate at a full parameter vector.
    pub fn eval(&self, params: &[f64]) -> CMatrix {
        let mut m = self.constant.clone();
        for (&p, c) in &self.coeffs {
            if params[p] != 0.0 {
                m = m.add(&c.scale(C64::new(params[p], 0.0)));
            }
        }
        m
    }
}

/// Outcome of a solve, with the recovered parameter vector where applicable.
#[derive(Debug, Clone)]
pub enum SolveOutcome {
    /// Max-slack feasibility succeeded: optimal slack `>= -eps_feas`.
    Feasible { slack: f64, solution: Solution },
    /// Certified infeasible. `slack` is the (negative) optimal slack when the
    /// max-slack program ran; `None` when the equalities were inconsistent.
    /// `solution` carries the max-slack optimiser when available.
    Infeasible { slack: Option<f64>, solution: Option<Solution> },
    /// Optimization solved to tolerance.
    Optimal { value: f64, solution: Solution },
    /// The objective direction is unconstrained by every PSD block.
    Unbounded,
    /// The solver could not reach the requested accuracy.
    Indeterminate { detail: String, best_value: f64 },
}

/// Recovered values of the declared variables.
#[derive(Debug, Clone)]
pub struct Solution {
    params: Vec<f64>,
    vars: Vec<VarInfo>,
}

impl Solution {
    pub fn matrix_value(&self, v: VarId) -> CMatrix {
        let info = &self.vars[v.0];
        let d = info.dim;
        let mut m = CMatrix::zeros(d, d);
        let base = info.offset;
        for i in 0..d {
            m[(i, i)] = C64::new(self.params[base + i], 0.0);
        }
        let mut k = d;
        for i in 0..d {
            for j in (i + 1)..d {
                let re = self.params[base + k];
                let im = self.params[base + k + 1];
                m[(i, j)] = C64::new(re, im);
                m[(j, i)] = C64::new(re, -im);
                k += 2;
            }
        }
        m
    }

    pub fn scalar_value(&self, v: VarId) -> f64 {
        let info = &self.vars[v.0];
        assert_eq!(info.dim, 1, "scalar_value on matrix variable {}", info.name);
        self.params[info.offset]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Slack threshold separating feasible from infeasible.
    pub eps_feas: f64,
    /// Interior-point convergence tolerance.
    pub eps_gap: f64,
    pub max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { eps_feas: 1e-6, eps_gap: 1e-9, max_iters: 200 }
    }
}

/// Reduction of a conic problem to a real LMI, retained so callers can map
/// reduced solutions back to variables or export the problem.
pub struct Reduction {
    pub sdp: ReducedSdp,
    /// Particular solution of the equalities.
    y0: DVector<f64>,
    /// Nullspace basis (params x reduced dims), including pruned columns as
    /// absent entries of `kept`.
    z_basis: DMatrix<f64>,
    kept: Vec<usize>,
    obj_const: f64,
    sense_flip: bool,
}

impl Reduction {
    /// Lift a reduced point back to the full parameter vector.
    pub fn lift(&self, z: &[f64]) -> Vec<f64> {
        let n = self.y0.len();
        let mut y: Vec<f64> = self.y0.iter().copied().collect();
        for (slot, &col) in self.kept.iter().enumerate() {
            let zz = z[slot];
            if zz != 0.0 {
                for p in 0..n {
                    y[p] += self.z_basis[(p, col)] * zz;
                }
            }
        }
        y
    }

    /// Objective value in the caller's sense for a reduced objective value.
    pub fn user_value(&self, reduced_obj: f64) -> f64 {
        let v = reduced_obj + self.obj_const;
        if self.sense_flip {
            -v
        } else {
            v
        }
    }
}

/// Builder for Hermitian-variable conic problems.
pub struct ConicProblem {
    vars: Vec<VarInfo>,
    n_params: usize,
    equalities: Vec<ScalarExpr>,
    blocks: Vec<(String, MatExpr)>,
    objective: Option<(Sense, ScalarExpr)>,
}

impl Default for ConicProblem {
    fn default() -> Self {
        Self::new()
    }
}

impl ConicProblem {
    pub fn new() -> Self {
        ConicProblem { vars: Vec::new(), n_params: 0, equalities: Vec::new(), blocks: Vec::new(), objective: None }
    }

    pub fn hermitian_var(&mut self, name: &str, dim: usize) -> VarId {
        assert!(dim > 0);
        let info = VarInfo { name: name.to_string(), dim, offset: self.n_params };
        self.n_params += info.param_count();
        self.vars.push(info);
        VarId(self.vars.len() - 1)
    }

    pub fn scalar_var(&mut self, name: &str) -> VarId {
        self.hermitian_var(name, 1)
    }

    /// Expression representing the (Hermitian) value of a variable.
    pub fn var_expr(&self, v: VarId) -> MatExpr {
        let info = &self.vars[v.0];
        let d = info.dim;
        let base = info.offset;
        let mut coeffs = BTreeMap::new();
        for i in 0..d {
            let mut e = CMatrix::zeros(d, d);
            e[(i, i)] = C64::new(1.0, 0.0);
            coeffs.insert(base + i, e);
        }
        let mut k = d;
        for i in 0..d {
            for j in (i + 1)..d {
                let mut re = CMatrix::zeros(d, d);
                re[(i, j)] = C64::new(1.0, 0.0);
                re[(j, i)] = C64::new(1.0, 0.0);
                coeffs.insert(base + k, re);
                let mut im = CMatrix::zeros(d, d);
                im[(i, j)] = C64::new(0.0, 1.0);
                im[(j, i)] = C64::new(0.0, -1.0);
                coeffs.insert(base + k + 1, im);
                k += 2;
            }
        }
        MatExpr { dim: d, constant: CMatrix::zeros(d, d), coeffs }
    }

    pub fn scalar_expr(&self, v: VarId) -> ScalarExpr {
        let info = &self.vars[v.0];
        assert_eq!(info.dim, 1);
        ScalarExpr { terms: BTreeMap::from([(info.offset, 1.0)]), constant: 0.0 }
    }

    /// Constrain `expr == target` entrywise (real and imaginary parts).
    pub fn require_eq(&mut self, expr: &MatExpr, target: &MatExpr) {
        assert_eq!(expr.dim, target.dim);
        let diff = expr.sub(target);
        for i in 0..diff.dim {
            for j in 0..diff.dim {
                for part in 0..2 {
                    let pick = |z: C64| if part == 0 { z.re } else { z.im };
                    let terms: BTreeMap<usize, f64> = diff
                        .coeffs
                        .iter()
                        .map(|(&p, c)| (p, pick(c[(i, j)])))
                        .filter(|(_, v)| v.abs() > 0.0)
                        .collect();
                    let constant = pick(diff.constant[(i, j)]);
                    if terms.is_empty() && constant == 0.0 {
                        continue;
                    }
                    self.equalities.push(ScalarExpr { terms, constant });
                }
            }
        }
    }

    pub fn require_eq_const(&mut self, expr: &MatExpr, target: &CMatrix) {
        self.require_eq(&expr.clone(), &MatExpr::from_const(target.clone()));
    }

    /// Constrain a scalar expression to a constant.
    pub fn require_scalar_eq(&mut self, expr: &ScalarExpr, value: f64) {
        let mut e = expr.clone();
        e.constant -= value;
        self.equalities.push(e);
    }

    /// Add a PSD constraint.
    pub fn psd(&mut self, label: &str, expr: MatExpr) {
        self.blocks.push((label.to_string(), expr));
    }

    pub fn set_objective(&mut self, sense: Sense, expr: ScalarExpr) {
        assert!(self.objective.is_none(), "objective set twice");
        self.objective = Some((sense, expr));
    }

    /// Reduce to a real LMI: eliminate equalities, embed, prune.
    ///
    /// Returns `Err(outcome)` when the reduction itself settles the problem
    /// (inconsistent equalities or an unbounded objective direction).
    pub fn reduce(&self) -> Result<Result<Reduction, SolveOutcome>, SdpError> {
        if self.blocks.is_empty() {
            return Err(SdpError::NoCone);
        }
        let n = self.n_params;

        // Equality system A y = b.
        let rows = self.equalities.len();
        let (y0, z_basis) = if rows == 0 {
            (DVector::zeros(n), DMatrix::identity(n, n))
        } else {
            // Pad with zero rows to at least n x n so the SVD carries a full
            // V: its trailing right singular vectors are then a complete
            // orthonormal nullspace basis, with no separate completion step.
            let arows = rows.max(n);
            let mut a = DMatrix::<f64>::zeros(arows, n);
            let mut b = DVector::<f64>::zeros(arows);
            for (r, eq) in self.equalities.iter().enumerate() {
                for (&p, &c) in &eq.terms {
                    a[(r, p)] = c;
                }
                b[r] = -eq.constant;
            }
            let svd = a.clone().svd(true, true);
            let smax = svd.singular_values.iter().fold(0.0f64, |acc, &s| acc.max(s));
            let rank_tol = smax * 1e-12 * (rows.max(n) as f64) + 1e-300;
            let mut y0 =
                svd.solve(&b, rank_tol).map_err(|_| SdpError::NoCone).unwrap_or_else(|_| DVector::zeros(n));
            // Iterative refinement: the pseudo-inverse solve loses accuracy on
            // ill-conditioned systems, which would misreport consistent
            // equalities as inconsistent below.
            let mut resid = (&a * &y0 - &b).amax();
            for _ in 0..3 {
                if resid <= 1e-10 {
                    break;
                }
                let r = &b - &a * &y0;
                if let Ok(dy) = svd.solve(&r, rank_tol) {
                    let cand = &y0 + &dy;
                    let cand_resid = (&a * &cand - &b).amax();
                    if cand_resid >= resid {
                        break;
                    }
                    y0 = cand;
                    resid = cand_resid;
                } else {
                    break;
                }
            }
            if std::env::var("SDP_DEBUG").is_ok() {
                eprintln!(
                    "reduce: rows={} n={} smax={:.3e} rank_tol={:.3e} resid={:.3e}",
                    rows,
                    n,
                    smax,
                    rank_tol,
                    resid
                );
            }
            if resid > 1e-8 {
                return Ok(Err(SolveOutcome::Infeasible { slack: None, solution: None }));
            }
            // Nullspace: rows of V^T whose singular value is (numerically)
            // zero. V is full (n columns) thanks to the zero-row padding, so
            // these rows alone form a complete orthonormal basis.
            let vt = svd.v_t.expect("requested V^T");
            debug_assert_eq!(vt.nrows(), n);
            let mut cols: Vec<DVector<f64>> = Vec::new();
            for r in 0..vt.nrows() {
                let s = if r < svd.singular_values.len() { svd.singular_values[r] } else { 0.0 };
                if s <= rank_tol {
                    cols.push(vt.row(r).transpose());
                }
            }
            let m_red = cols.len();
            let mut z = DMatrix::zeros(n, m_red);
            for (k, c) in cols.iter().enumerate() {
                z.set_column(k, c);
            }
            (y0, z)
        };

        let m_all = z_basis.ncols();

        // Objective in reduced coordinates.
        let (sense_flip, obj_expr) = match &self.objective {
            Some((Sense::Maximize, e)) => (true, e.scale(-1.0)),
            Some((Sense::Minimize, e)) => (false, e.clone()),
            None => (false, ScalarExpr::constant(0.0)),
        };
        let mut c_full = DVector::<f64>::zeros(n);
        for (&p, &c) in &obj_expr.terms {
            c_full[p] = c;
        }
        let obj_const = obj_expr.constant + c_full.dot(&y0);
        let c_red = z_basis.transpose() * &c_full;

        // Embed blocks.
        struct RawBlock {
            f0: DMatrix<f64>,
            fk: Vec<DMatrix<f64>>,
        }
        let symmetrize = |m: DMatrix<f64>| -> DMatrix<f64> { (&m + m.transpose()) * 0.5 };
        let mut raw_blocks: Vec<RawBlock> = Vec::new();
        for (_label, expr) in &self.blocks {
            let mut const_mat = expr.constant.clone();
            for (&p, cmat) in &expr.coeffs {
                if y0[p] != 0.0 {
                    const_mat = const_mat.add(&cmat.scale(C64::new(y0[p], 0.0)));
                }
            }
            let f0 = symmetrize(real_embedding(&const_mat));
            let mut fk = Vec::with_capacity(m_all);
            for k in 0..m_all {
                let mut acc = CMatrix::zeros(expr.dim, expr.dim);
                for (&p, cmat) in &expr.coeffs {
                    let w = z_basis[(p, k)];
                    if w.abs() > 1e-300 {
                        acc = acc.add(&cmat.scale(C64::new(w, 0.0)));
                    }
                }
                fk.push(symmetrize(real_embedding(&acc)));
            }
            raw_blocks.push(RawBlock { f0, fk });
        }

        // Prune reduced coordinates no block sees.
        let mut kept: Vec<usize> = Vec::new();
        for k in 0..m_all {
            let seen = raw_blocks.iter().any(|b| b.fk[k].amax() > 1e-12);
            if seen {
                kept.push(k);
            } else if c_red[k].abs() > 1e-9 {
                return Ok(Err(SolveOutcome::Unbounded));
            }
        }
        let blocks: Vec<SdpBlock> = raw_blocks
            .into_iter()
            .map(|rb| SdpBlock {
                dim: rb.f0.nrows(),
                f0: rb.f0,
                fk: kept.iter().map(|&k| rb.fk[k].clone()).collect(),
            })
            .collect();
        let sdp = ReducedSdp { m: kept.len(), c: kept.iter().map(|&k| c_red[k]).collect(), blocks };

        if std::env::var("SDP_DEBUG").is_ok() {
            eprintln!(
                "reduce: m={} blocks={} dims={:?}",
                sdp.m,
                sdp.blocks.len(),
                sdp.blocks.iter().map(|b| b.dim).collect::<Vec<_>>()
            );
        }
        Ok(Ok(Reduction { sdp, y0, z_basis, kept, obj_const, sense_flip }))
    }

    /// Solve as an optimization problem (requires an objective, or treats a
    /// missing objective as "find any feasible point" without slack).
    pub fn solve_optimization(&self, cfg: &SolverConfig) -> Result<SolveOutcome, SdpError> {
        let reduction = match self.reduce()? {
            Ok(r) => r,
            Err(outcome) => return Ok(outcome),
        };
        if reduction.sdp.m == 0 {
            // Fully determined: just check the constant blocks.
            let params = reduction.lift(&[]);
            let slack = self.min_block_eig(&params);
            return Ok(if slack >= -cfg.eps_feas {
                SolveOutcome::Optimal {
                    value: reduction.user_value(0.0),
                    solution: Solution { params, vars: self.vars.clone() },
                }
            } else {
                SolveOutcome::Infeasible {
                    slack: Some(slack),
                    solution: Some(Solution { params: reduction.lift(&[]), vars: self.vars.clone() }),
                }
            });
        }
        let ipm_cfg = IpmConfig { tol: cfg.eps_gap, max_iters: cfg.max_iters, ..IpmConfig::default() };
        let sol = ipm::solve(&reduction.sdp, &ipm_cfg);
        let params = reduction.lift(&sol.z);
        let value = reduction.user_value(sol.objective);
        let solution = Solution { params, vars: self.vars.clone() };
        Ok(match sol.status {
            IpmStatus::Converged => SolveOutcome::Optimal { value, solution },
            IpmStatus::MaxIterations | IpmStatus::NumericalTrouble => {
                // Accept near-converged iterates; surface the rest.
                if sol.residual < 1e-6 {
                    SolveOutcome::Optimal { value, solution }
                } else {
                    SolveOutcome::Indeterminate {
                        detail: format!(
                            "interior-point residual {:.2e} after {} iterations",
                            sol.residual, sol.iterations
                        ),
                        best_value: value,
                    }
                }
            }
        })
    }

    /// The max-slack augmentation used by [`Self::solve_feasibility`].
    fn augment_with_slack(&self) -> ConicProblem {
        let mut augmented = self.clone_shallow();
        let t = augmented.scalar_var("__slack");
        let t_expr = augmented.scalar_expr(t);
        for (_, block) in augmented.blocks.iter_mut() {
            let d = block.dim;
            let shift = augmented_identity(d, &t_expr);
            *block = block.sub(&shift);
        }
        augmented.set_objective(Sense::Maximize, t_expr);
        augmented
    }

    /// Serialize the reduced problem in SDPA sparse format. Problems without
    /// an objective are exported in max-slack feasibility form.
    pub fn to_sdpa(&self) -> Result<String, SdpError> {
        let target = if self.objective.is_none() { self.augment_with_slack() } else { self.clone_shallow() };
        match target.reduce()? {
            Ok(reduction) => Ok(export_sdpa(&reduction.sdp)),
            Err(_) => Err(SdpError::NoCone),
        }
    }

    /// Solve as a feasibility problem in max-slack form.
    pub fn solve_feasibility(&self, cfg: &SolverConfig) -> Result<SolveOutcome, SdpError> {
        assert!(self.objective.is_none(), "feasibility solve with an objective set");
        let augmented = self.augment_with_slack();
        let out = augmented.solve_optimization(cfg)?;
        Ok(match out {
            SolveOutcome::Optimal { value, solution } => {
                if value >= -cfg.eps_feas {
                    SolveOutcome::Feasible { slack: value, solution }
                } else {
                    SolveOutcome::Infeasible { slack: Some(value), solution: Some(solution) }
                }
            }
            SolveOutcome::Indeterminate { detail, best_value } => {
                // A clearly signed best slack still decides.
                if best_value >= 100.0 * cfg.eps_feas {
                    SolveOutcome::Indeterminate { detail, best_value }
                } else if best_value <= -100.0 * cfg.eps_feas {
                    SolveOutcome::Infeasible { slack: Some(best_value), solution: None }
                } else {
                    SolveOutcome::Indeterminate { detail, best_value }
                }
            }
            other => other,
        })
    }

    fn clone_shallow(&self) -> ConicProblem {
        ConicProblem {
            vars: self.vars.clone(),
            n_params: self.n_params,
            equalities: self.equalities.clone(),
            blocks: self.blocks.clone(),
            objective: self.objective.clone(),
        }
    }

    fn min_block_eig(&self, params: &[f64]) -> f64 {
        let mut min = f64::INFINITY;
        for (_, expr) in &self.blocks {
            let m = expr.eval(params);
            min = min.min(crate::matcore::min_eigenvalue_raw(&m));
        }
        min
    }
}

fn augmented_identity(dim: usize, t: &ScalarExpr) -> MatExpr {
    // t * I as a MatExpr: one coefficient matrix per scalar param (there is
    // exactly one for a slack expression).
    let mut coeffs = BTreeMap::new();
    for (&p, &c) in &t.terms {
        coeffs.insert(p, CMatrix::identity(dim).scale(C64::new(c, 0.0)));
    }
    MatExpr { dim, constant: CMatrix::identity(dim).scale(C64::new(t.constant, 0.0)), coeffs }
}

/// Serialize a reduced LMI in SDPA sparse format (`.dat-s`).
///
/// SDPA's convention is `min c'x` with `X = sum_i x_i F_i - F0 >= 0`, so the
/// constant blocks are negated on the way out.
pub fn export_sdpa(sdp: &ReducedSdp) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "{}", sdp.m);
    let _ = writeln!(out, "{}", sdp.blocks.len());
    let sizes: Vec<String> = sdp.blocks.iter().map(|b| b.dim.to_string()).collect();
    let _ = writeln!(out, "{}", sizes.join(" "));
    let cs: Vec<String> = sdp.c.iter().map(|v| format!("{:.17e}", v)).collect();
    let _ = writeln!(out, "{}", cs.join(" "));
    let mut emit = |k: usize, blk: usize, m: &DMatrix<f64>, negate: bool| {
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                let v = if negate { -m[(i, j)] } else { m[(i, j)] };
                if v.abs() > 1e-14 {
                    let _ = writeln!(out, "{} {} {} {} {:.17e}", k, blk + 1, i + 1, j + 1, v);
                }
            }
        }
    };
    for (bi, blk) in sdp.blocks.iter().enumerate() {
        emit(0, bi, &blk.f0, true);
    }
    for k in 0..sdp.m {
        for (bi, blk) in sdp.blocks.iter().enumerate() {
            emit(k + 1, bi, &blk.fk[k], false);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::min_eigenvalue_raw;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn feasibility_trace_one_density() {
        // X >= 0 Hermitian 2x2 with tr X = 1: feasible, best slack 1/2.
        let mut p = ConicProblem::new();
        let x = p.hermitian_var("X", 2);
        let xe = p.var_expr(x);
        p.require_scalar_eq(&xe.trace_re(), 1.0);
        p.psd("X", xe);
        match p.solve_feasibility(&cfg()).unwrap() {
            SolveOutcome::Feasible { slack, solution } => {
                assert!((slack - 0.5).abs() < 1e-6, "slack {}", slack);
                let xv = solution.matrix_value(x);
                assert!((xv.trace().re - 1.0).abs() < 1e-7);
                assert!(min_eigenvalue_raw(&xv) > 0.4);
            }
            other => panic!("expected feasible, got {:?}", other),
        }
    }

    #[test]
    fn infeasible_negative_trace() {
        let mut p = ConicProblem::new();
        let x = p.hermitian_var("X", 2);
        let xe = p.var_expr(x);
        p.require_scalar_eq(&xe.trace_re(), -1.0);
        p.psd("X", xe);
        match p.solve_feasibility(&cfg()).unwrap() {
            SolveOutcome::Infeasible { slack: Some(s), .. } => {
                assert!((s + 0.5).abs() < 1e-6, "slack {}", s);
            }
            other => panic!("expected infeasible, got {:?}", other),
        }
    }

    #[test]
    fn inconsistent_equalities() {
        let mut p = ConicProblem::new();
        let x = p.hermitian_var("X", 2);
        let xe = p.var_expr(x);
        p.require_scalar_eq(&xe.trace_re(), 1.0);
        p.require_scalar_eq(&xe.trace_re(), 2.0);
        p.psd("X", xe);
        match p.solve_feasibility(&cfg()).unwrap() {
            SolveOutcome::Infeasible { slack: None, .. } => {}
            other => panic!("expected inconsistent, got {:?}", other),
        }
    }

    #[test]
    fn lambda_max_of_pauli_x() {
        // max <C, X> over density matrices = lambda_max(C) = 1 for C = X.
        let mut p = ConicProblem::new();
        let x = p.hermitian_var("X", 2);
        let xe = p.var_expr(x);
        p.require_scalar_eq(&xe.trace_re(), 1.0);
        p.psd("X", xe.clone());
        let pauli = CMatrix::from_pairs(2, 2, &[(0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (0.0, 0.0)]);
        // <C, X> = Re tr(C X) for Hermitian C, X.
        let obj = xe.scale(C64::new(1.0, 0.0));
        let cx = MatExpr::from_const(pauli);
        // trace of C X: use entrywise expansion via trace_re of product is not
        // supported; instead constrain nothing and use objective via embedding:
        // tr(C X) = sum_ij C_ji X_ij. Build scalar expr manually.
        let mut terms = ScalarExpr::constant(0.0);
        for (pref, coeff) in obj_inner(&obj, &cx) {
            terms.terms.insert(pref, coeff);
        }
        p.set_objective(Sense::Maximize, terms);
        match p.solve_optimization(&cfg()).unwrap() {
            SolveOutcome::Optimal { value, .. } => assert!((value - 1.0).abs() < 1e-6, "value {}", value),
            other => panic!("expected optimal, got {:?}", other),
        }
    }

    /// Helper: coefficients of Re tr(C . expr) as (param, weight) pairs.
    fn obj_inner(expr: &MatExpr, c: &MatExpr) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for (&pidx, coeff) in &expr.coeffs {
            let mut acc = 0.0;
            for i in 0..expr.dim {
                for j in 0..expr.dim {
                    acc += (c.constant[(j, i)] * coeff[(i, j)]).re;
                }
            }
            if acc != 0.0 {
                out.push((pidx, acc));
            }
        }
        out
    }

    #[test]
    fn unbounded_direction() {
        let mut p = ConicProblem::new();
        let t = p.scalar_var("t");
        let te = p.scalar_expr(t);
        let x = p.hermitian_var("X", 2);
        let xe = p.var_expr(x);
        p.psd("X", xe);
        p.set_objective(Sense::Maximize, te);
        match p.solve_optimization(&cfg()).unwrap() {
            SolveOutcome::Unbounded => {}
            other => panic!("expected unbounded, got {:?}", other),
        }
    }

    #[test]
    fn partial_trace_marginal_constraint() {
        // Find 4x4 PSD P with both qubit marginals I/2: feasible (P = I/4).
        let mut p = ConicProblem::new();
        let pv = p.hermitian_var("P", 4);
        let pe = p.var_expr(pv);
        let dims = DimVector::new(vec![2, 2]);
        let half = CMatrix::identity(2).scale(C64::new(0.5, 0.0));
        let m1 = pe.partial_trace(&dims, &[0]).unwrap();
        let m2 = pe.partial_trace(&dims, &[1]).unwrap();
        p.require_eq_const(&m1, &half);
        p.require_eq_const(&m2, &half);
        p.psd("P", pe);
        match p.solve_feasibility(&cfg()).unwrap() {
            SolveOutcome::Feasible { slack, solution } => {
                assert!(slack > 0.2, "slack {}", slack);
                let pm = solution.matrix_value(pv);
                let r1 = crate::matcore::partial_trace(&pm, &dims, &[0]).unwrap();
                assert!(r1.max_abs_diff(&half) < 1e-7);
            }
            other => panic!("expected feasible, got {:?}", other),
        }
    }

    #[test]
    fn robustness_style_scalar_mixing() {
        // min r s.t. (1-r) * M + r * I/2 >= 0 with M = diag(1, -0.2):
        // need (1-r)(-0.2) + 0.5 r >= 0  =>  r >= 0.2/0.7.
        let mut p = ConicProblem::new();
        let r = p.scalar_var("r");
        let re = p.scalar_expr(r);
        let m = CMatrix::diag(&[1.0, -0.2]);
        let half = CMatrix::identity(2).scale(C64::new(0.5, 0.0));
        // expr = M + r (I/2 - M)
        let mut expr = MatExpr::from_const(m.clone());
        let delta = half.sub(&m);
        expr = expr.add(&scaled_param_expr(&re, &delta));
        p.psd("mix", expr);
        // 0 <= r <= 1 blocks.
        let mut rblock = MatExpr::zeros(1);
        rblock = rblock.add(&scaled_param_expr(&re, &CMatrix::identity(1)));
        p.psd("r>=0", rblock.clone());
        let one = MatExpr::identity(1);
        p.psd("r<=1", one.sub(&rblock));
        p.set_objective(Sense::Minimize, re);
        match p.solve_optimization(&cfg()).unwrap() {
            SolveOutcome::Optimal { value, .. } => {
                assert!((value - 0.2 / 0.7).abs() < 1e-6, "r* = {}", value);
            }
            other => panic!("expected optimal, got {:?}", other),
        }
    }

    /// `sum_p t_p * coeff` as a MatExpr (scalar expression times a matrix).
    fn scaled_param_expr(s: &ScalarExpr, m: &CMatrix) -> MatExpr {
        let mut e = MatExpr::from_const(m.scale(C64::new(s.constant, 0.0)));
        for (&p, &c) in &s.terms {
            e.coeffs.insert(p, m.scale(C64::new(c, 0.0)));
        }
        e
    }

    #[test]
    fn sdpa_export_roundtrip_shape() {
        let mut p = ConicProblem::new();
        let x = p.hermitian_var("X", 2);
        let xe = p.var_expr(x);
        p.require_scalar_eq(&xe.trace_re(), 1.0);
        p.psd("X", xe);
        let red = p.reduce().unwrap().unwrap();
        let text = export_sdpa(&red.sdp);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap().trim(), red.sdp.m.to_string());
        assert_eq!(lines.next().unwrap().trim(), "1");
        assert_eq!(lines.next().unwrap().trim(), "4");
    }
}
