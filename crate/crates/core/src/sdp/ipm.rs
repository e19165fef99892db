//! Dense primal-dual interior-point solver for linear matrix inequalities.
//!
//! Solves problems of the form
//!
//! ```text
//!     minimize    c' z
//!     subject to  F0_j + sum_k z_k Fk_j  >= 0   for every block j
//! ```
//!
//! over free reals `z`, where all matrices are real symmetric. This is the
//! dual of the standard-form SDP pair with `A_k = -Fk`, `C = F0`, `b = -c`;
//! the solver runs an infeasible-start Nesterov-Todd predictor-corrector on
//! that pair.
//! Problems handed to it are produced by the reduction in the parent module
//! and are bounded by construction, so no explicit unboundedness detection is
//! attempted here.

use nalgebra::{Cholesky, DMatrix, DVector};

/// One PSD block of a reduced problem: `F0 + sum_k z_k fk[k] >= 0`.
#[derive(Debug, Clone)]
pub struct SdpBlock {
    pub dim: usize,
    pub f0: DMatrix<f64>,
    pub fk: Vec<DMatrix<f64>>,
}

/// Reduced real-symmetric SDP: minimize `c . z` over the block LMIs.
#[derive(Debug, Clone)]
pub struct ReducedSdp {
    pub m: usize,
    pub c: Vec<f64>,
    pub blocks: Vec<SdpBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmStatus {
    /// All residuals and the duality gap met the tolerance.
    Converged,
    /// Iteration limit reached; the returned point is the best iterate seen.
    MaxIterations,
    /// A linear solve or factorization failed beyond recovery.
    NumericalTrouble,
}

#[derive(Debug, Clone)]
pub struct IpmSolution {
    pub status: IpmStatus,
    pub z: Vec<f64>,
    /// Objective `c . z` at the returned point.
    pub objective: f64,
    pub iterations: usize,
    /// Normalized duality gap at exit.
    pub gap: f64,
    /// Relative primal/dual residual norms at exit.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct IpmConfig {
    pub tol: f64,
    pub max_iters: usize,
    /// Fraction of the step to the cone boundary taken each iteration.
    pub step_frac: f64,
}

impl Default for IpmConfig {
    fn default() -> Self {
        IpmConfig { tol: 1e-9, max_iters: 200, step_frac: 0.98 }
    }
}

fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of `L^-1 M L^-T` where `chol` factorizes a PD matrix.
fn min_gen_eig(chol: &Cholesky<f64, nalgebra::Dyn>, m: &DMatrix<f64>) -> f64 {
    let l = chol.l();
    let w = l.solve_lower_triangular(m).expect("triangular solve");
    let y = l.solve_lower_triangular(&w.transpose()).expect("triangular solve");
    let ys = sym(&y);
    ys.symmetric_eigenvalues().iter().fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Largest multiple of `d` that keeps `x + alpha d` inside the PSD cone,
/// damped by `frac`.
fn step_length(x_chol: &Cholesky<f64, nalgebra::Dyn>, d: &DMatrix<f64>, frac: f64) -> f64 {
    let lam = min_gen_eig(x_chol, d);
    if lam >= 0.0 {
        1.0
    } else {
        (frac * (-1.0 / lam)).min(1.0)
    }
}

struct BlockState {
    x: Vec<DMatrix<f64>>,
    y: DVector<f64>,
    s: Vec<DMatrix<f64>>,
}

/// Smallest eigenvalue of `X S` (equivalently of `L^T S L` with `X = L L^T`),
/// or `None` when `X` is not positive definite.
fn min_xs_eig(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<f64> {
    let chol = Cholesky::new(x.clone())?;
    let l = chol.l();
    let t = l.transpose() * s * &l;
    Some(sym(&t).symmetric_eigenvalues().iter().fold(f64::INFINITY, |a, &b| a.min(b)))
}

/// Nesterov-Todd scaling point: the unique PD `W` with `W S W = X`,
/// computed as `W = L (L^T S L)^{-1/2} L^T` for `X = L L^T`.
fn nt_scaling(x_chol: &Cholesky<f64, nalgebra::Dyn>, s: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let l = x_chol.l();
    let t = sym(&(l.transpose() * s * &l));
    let eig = t.symmetric_eigen();
    let mut inv_sqrt = eig.eigenvalues.clone();
    for v in inv_sqrt.iter_mut() {
        if *v <= 0.0 || !v.is_finite() {
            return None;
        }
        *v = 1.0 / v.sqrt();
    }
    let q = &eig.eigenvectors;
    let t_inv_sqrt = q * DMatrix::from_diagonal(&inv_sqrt) * q.transpose();
    Some(sym(&(&l * t_inv_sqrt * l.transpose())))
}

pub fn solve(sdp: &ReducedSdp, cfg: &IpmConfig) -> IpmSolution {
    let m = sdp.m;
    let nb = sdp.blocks.len();
    assert!(nb > 0, "reduced SDP must have at least one block");
    for blk in &sdp.blocks {
        assert_eq!(blk.fk.len(), m);
    }
    let n_total: usize = sdp.blocks.iter().map(|b| b.dim).sum();

    // Standard-form data: A_k = -Fk, C = F0, b = -c.
    let b_vec = DVector::from_iterator(m, sdp.c.iter().map(|&v| -v));

    // Initial scale from the data magnitude.
    let mut scale: f64 = 10.0;
    for blk in &sdp.blocks {
        scale = scale.max(blk.f0.amax());
        for f in &blk.fk {
            scale = scale.max(f.amax());
        }
    }
    scale = scale.max(b_vec.amax()).max(1.0);

    let mut st = BlockState {
        x: sdp.blocks.iter().map(|b| DMatrix::identity(b.dim, b.dim) * scale).collect(),
        y: DVector::zeros(m),
        s: sdp.blocks.iter().map(|b| DMatrix::identity(b.dim, b.dim) * scale).collect(),
    };

    // Flattened coefficient matrices, one row per parameter, reused by the
    // Schur-complement GEMM every iteration.
    let fmat_all: Vec<DMatrix<f64>> = sdp
        .blocks
        .iter()
        .map(|blk| {
            let d2 = blk.dim * blk.dim;
            let mut fmat = DMatrix::zeros(m, d2);
            for k in 0..m {
                for (t, v) in blk.fk[k].iter().enumerate() {
                    fmat[(k, t)] = *v;
                }
            }
            fmat
        })
        .collect();

    let norm_b = 1.0 + b_vec.norm();
    let norm_c: f64 = 1.0 + sdp.blocks.iter().map(|b| b.f0.norm_squared()).sum::<f64>().sqrt();

    let mut best: Option<(f64, Vec<f64>, f64, f64, usize)> = None;
    let mut status = IpmStatus::MaxIterations;
    let mut iters_done = 0;

    for iter in 0..cfg.max_iters {
        iters_done = iter;
        // Residuals.
        // rp_k = b_k - <A_k, X> = b_k + sum_j <Fk_j, X_j>
        let mut rp = b_vec.clone();
        for (j, blk) in sdp.blocks.iter().enumerate() {
            for k in 0..m {
                rp[k] += frob_inner(&blk.fk[k], &st.x[j]);
            }
        }
        // Rd_j = C_j - S_j - sum_k y_k A_kj = F0_j - S_j + sum_k y_k Fk_j
        let rd: Vec<DMatrix<f64>> = sdp
            .blocks
            .iter()
            .enumerate()
            .map(|(j, blk)| {
                let mut r = &blk.f0 - &st.s[j];
                for k in 0..m {
                    if st.y[k] != 0.0 {
                        r += &blk.fk[k] * st.y[k];
                    }
                }
                r
            })
            .collect();

        let xs: f64 = (0..nb).map(|j| frob_inner(&st.x[j], &st.s[j])).sum();
        let mu = xs / n_total as f64;
        let rd_norm: f64 = rd.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt();
        let rel_p = rp.norm() / norm_b;
        let rel_d = rd_norm / norm_c;
        let pobj: f64 = sdp.blocks.iter().enumerate().map(|(j, blk)| frob_inner(&blk.f0, &st.x[j])).sum();
        let dobj: f64 = b_vec.dot(&st.y);
        let gap = xs.abs() / (1.0 + pobj.abs() + dobj.abs());

        let merit = rel_p.max(rel_d).max(gap);
        // The z of interest is y (the free variable of the LMI form).
        let obj_here: f64 = sdp.c.iter().zip(st.y.iter()).map(|(c, y)| c * y).sum();
        if best.as_ref().map_or(true, |(bm, ..)| merit < *bm) {
            best = Some((merit, st.y.iter().copied().collect(), obj_here, gap, iter));
        }

        if std::env::var("SDP_DEBUG").is_ok() {
            eprintln!(
                "ipm iter {:3}: mu={:9.3e} rel_p={:9.3e} rel_d={:9.3e} gap={:9.3e} obj={:12.6e}",
                iter, mu, rel_p, rel_d, gap, obj_here
            );
        }
        if rel_p < cfg.tol && rel_d < cfg.tol && gap < cfg.tol {
            status = IpmStatus::Converged;
            break;
        }

        // Factorize X and S.
        let x_chol: Option<Vec<_>> = st.x.iter().map(|x| Cholesky::new(x.clone())).collect();
        let s_chol: Option<Vec<_>> = st.s.iter().map(|s| Cholesky::new(s.clone())).collect();
        let (x_chol, s_chol) = match (x_chol, s_chol) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                status = IpmStatus::NumericalTrouble;
                break;
            }
        };
        let s_inv: Vec<DMatrix<f64>> = s_chol
            .iter()
            .zip(&st.s)
            .map(|(ch, s)| ch.solve(&DMatrix::identity(s.nrows(), s.ncols())))
            .collect();

        // Nesterov-Todd scaling per block: W S W = X.
        let w_all: Option<Vec<DMatrix<f64>>> =
            (0..nb).map(|j| nt_scaling(&x_chol[j], &st.s[j])).collect();
        let w_all = match w_all {
            Some(w) => w,
            None => {
                status = IpmStatus::NumericalTrouble;
                break;
            }
        };

        // Schur complement M_ik = sum_j tr(F_i W F_k W): symmetric PD in the
        // NT scaling. Precompute W Fk W per block.
        let mut schur = DMatrix::<f64>::zeros(m, m);
        for (j, blk) in sdp.blocks.iter().enumerate() {
            let d2 = blk.dim * blk.dim;
            let mut wfw_mat = DMatrix::<f64>::zeros(m, d2);
            for k in 0..m {
                let wfw = sym(&(&w_all[j] * &blk.fk[k] * &w_all[j]));
                for (t, v) in wfw.iter().enumerate() {
                    wfw_mat[(k, t)] = *v;
                }
            }
            // Frobenius inner products of all pairs as one GEMM.
            schur += &fmat_all[j] * wfw_mat.transpose();
        }
        schur = sym(&schur);
        // Ridge for safety on nearly singular Schur complements.
        let ridge = 1e-13 * (schur.trace().abs() / m as f64 + 1.0);
        for i in 0..m {
            schur[(i, i)] += ridge;
        }
        let schur_lu = schur.clone().lu();

        // W Rd W per block, reused in every right-hand side this iteration.
        let wrdw: Vec<DMatrix<f64>> =
            (0..nb).map(|j| sym(&(&w_all[j] * &rd[j] * &w_all[j]))).collect();

        // Newton system in NT scaling for a complementarity target Rc:
        //     A(dX) = rp,   A*(dy) + dS = Rd,   dX + W dS W = Rc,
        // eliminated to  M dy = rp + A~(Rc - W Rd W)  with A~_i = tr(F_i .)
        // (signs from A_k = -Fk cancel), then dS = Rd + sum dy_k Fk and
        // dX = Rc - W dS W.
        let solve_direction = |rc: &Vec<DMatrix<f64>>| -> (DVector<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
            let mut rhs = rp.clone();
            for (j, blk) in sdp.blocks.iter().enumerate() {
                let diff = &rc[j] - &wrdw[j];
                for k in 0..m {
                    rhs[k] += frob_inner(&blk.fk[k], &diff);
                }
            }
            let dy = schur_lu.solve(&rhs).unwrap_or_else(|| DVector::zeros(m));
            let ds: Vec<DMatrix<f64>> = (0..nb)
                .map(|j| {
                    let mut d = rd[j].clone();
                    for k in 0..m {
                        if dy[k] != 0.0 {
                            d += &sdp.blocks[j].fk[k] * dy[k];
                        }
                    }
                    d
                })
                .collect();
            let dx: Vec<DMatrix<f64>> = (0..nb)
                .map(|j| sym(&(&rc[j] - &w_all[j] * &ds[j] * &w_all[j])))
                .collect();
            (dy, dx, ds)
        };

        // Step selection: longest boundary step damped by step_frac, then a
        // joint backtracking safeguard keeping lambda_min(X S) >= gamma mu so
        // aggressive steps cannot pin the iterate to the cone boundary while
        // the gap is still large. Returns the accepted new iterate.
        const GAMMA: f64 = 1e-3;
        let try_step = |dy: &DVector<f64>,
                        dx: &Vec<DMatrix<f64>>,
                        ds: &Vec<DMatrix<f64>>|
         -> Option<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, DVector<f64>)> {
            let mut alpha: f64 = 1.0;
            let mut beta: f64 = 1.0;
            for j in 0..nb {
                alpha = alpha.min(step_length(&x_chol[j], &dx[j], cfg.step_frac));
                beta = beta.min(step_length(&s_chol[j], &ds[j], cfg.step_frac));
            }
            if !alpha.is_finite() || !beta.is_finite() {
                return None;
            }
            for _ in 0..30 {
                let xn: Vec<DMatrix<f64>> = (0..nb).map(|j| &st.x[j] + &dx[j] * alpha).collect();
                let sn: Vec<DMatrix<f64>> = (0..nb).map(|j| &st.s[j] + &ds[j] * beta).collect();
                let xs_new: f64 = (0..nb).map(|j| frob_inner(&xn[j], &sn[j])).sum();
                let mu_new = xs_new / n_total as f64;
                let centered = mu_new.is_finite()
                    && mu_new > 0.0
                    && (0..nb).all(|j| {
                        min_xs_eig(&xn[j], &sn[j])
                            .is_some_and(|e| e >= GAMMA * mu_new || mu_new < 1e-9)
                    });
                if centered {
                    return Some((xn, sn, dy * beta));
                }
                alpha *= 0.5;
                beta *= 0.5;
                if alpha < 1e-13 && beta < 1e-13 {
                    return None;
                }
            }
            None
        };

        // Predictor (affine direction, Rc = -X) fixes the centering weight.
        let rc_aff: Vec<DMatrix<f64>> = (0..nb).map(|j| -&st.x[j]).collect();
        let (_dy_a, dx_a, ds_a) = solve_direction(&rc_aff);
        let mut alpha_a: f64 = 1.0;
        let mut beta_a: f64 = 1.0;
        for j in 0..nb {
            alpha_a = alpha_a.min(step_length(&x_chol[j], &dx_a[j], 1.0));
            beta_a = beta_a.min(step_length(&s_chol[j], &ds_a[j], 1.0));
        }
        let mut xs_aff = 0.0;
        for j in 0..nb {
            let xn = &st.x[j] + &dx_a[j] * alpha_a;
            let sn = &st.s[j] + &ds_a[j] * beta_a;
            xs_aff += frob_inner(&xn, &sn);
        }
        let sigma = ((xs_aff / xs).max(0.0).powi(3)).clamp(1e-10, 1.0);

        // Corrector with the chosen centering; on rejection fall back to a
        // pure centering step (sigma = 1), which always restores centrality.
        let rc_cor: Vec<DMatrix<f64>> =
            (0..nb).map(|j| &s_inv[j] * (sigma * mu) - &st.x[j]).collect();
        let (dy, dx, ds) = solve_direction(&rc_cor);
        if std::env::var("SDP_DEBUG").is_ok() {
            eprintln!(
                "    steps: alpha_a={:8.2e} beta_a={:8.2e} sigma={:8.2e} |dy|={:8.2e}",
                alpha_a,
                beta_a,
                sigma,
                dy.norm()
            );
        }
        let step = try_step(&dy, &dx, &ds).or_else(|| {
            let rc_cent: Vec<DMatrix<f64>> =
                (0..nb).map(|j| &s_inv[j] * mu - &st.x[j]).collect();
            let (dy_c, dx_c, ds_c) = solve_direction(&rc_cent);
            try_step(&dy_c, &dx_c, &ds_c)
        });
        match step {
            Some((xn, sn, dyb)) => {
                st.x = xn;
                st.s = sn;
                st.y += dyb;
            }
            None => {
                status = IpmStatus::NumericalTrouble;
                break;
            }
        }
    }

    let (merit, z, objective, gap, _it) = best.unwrap_or((f64::INFINITY, vec![0.0; m], 0.0, f64::INFINITY, 0));
    IpmSolution {
        status,
        z,
        objective,
        iterations: iters_done + 1,
        gap,
        residual: merit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(dim: usize, entries: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(dim, dim, entries)
    }

    #[test]
    fn spectral_shift() {
        // maximize t s.t. diag(1,2) - t I >= 0  =>  t* = 1.
        // As minimization: c = [-1], F0 = diag(1,2), F_t = -I.
        let sdp = ReducedSdp {
            m: 1,
            c: vec![-1.0],
            blocks: vec![SdpBlock {
                dim: 2,
                f0: dm(2, &[1.0, 0.0, 0.0, 2.0]),
                fk: vec![dm(2, &[-1.0, 0.0, 0.0, -1.0])],
            }],
        };
        let sol = solve(&sdp, &IpmConfig::default());
        assert_eq!(sol.status, IpmStatus::Converged);
        assert!((sol.z[0] - 1.0).abs() < 1e-7, "t* = {}", sol.z[0]);
    }

    #[test]
    fn lambda_max_via_trace_one() {
        // max <C, X> s.t. tr X = 1, X >= 0, C = [[0,1],[1,0]]  =>  value 1.
        // Parameterize X = [[x1, x2],[x2, 1-x1]]: maximize 2 x2 s.t. X >= 0.
        let sdp = ReducedSdp {
            m: 2,
            c: vec![0.0, -2.0],
            blocks: vec![SdpBlock {
                dim: 2,
                f0: dm(2, &[0.0, 0.0, 0.0, 1.0]),
                fk: vec![dm(2, &[1.0, 0.0, 0.0, -1.0]), dm(2, &[0.0, 1.0, 1.0, 0.0])],
            }],
        };
        let sol = solve(&sdp, &IpmConfig::default());
        assert_eq!(sol.status, IpmStatus::Converged);
        assert!((-sol.objective - 1.0).abs() < 1e-7, "value = {}", -sol.objective);
        assert!((sol.z[0] - 0.5).abs() < 1e-6);
        assert!((sol.z[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn negative_trace_slack_is_negative() {
        // maximize t s.t. X - t I >= 0, tr X = -1 (eliminated:
        // X = [[x1, x2],[x2, -1-x1]]).  Best is x2=0, x1=-1/2 => t* = -1/2.
        let sdp = ReducedSdp {
            m: 3,
            c: vec![0.0, 0.0, -1.0],
            blocks: vec![SdpBlock {
                dim: 2,
                f0: dm(2, &[0.0, 0.0, 0.0, -1.0]),
                fk: vec![
                    dm(2, &[1.0, 0.0, 0.0, -1.0]),
                    dm(2, &[0.0, 1.0, 1.0, 0.0]),
                    dm(2, &[-1.0, 0.0, 0.0, -1.0]),
                ],
            }],
        };
        let sol = solve(&sdp, &IpmConfig::default());
        assert_eq!(sol.status, IpmStatus::Converged);
        assert!((sol.z[2] + 0.5).abs() < 1e-7, "t* = {}", sol.z[2]);
    }

    #[test]
    fn two_blocks_interval() {
        // minimize r s.t. r >= 0.3 (block r - 0.3 >= 0) and 1 - r >= 0.
        let sdp = ReducedSdp {
            m: 1,
            c: vec![1.0],
            blocks: vec![
                SdpBlock { dim: 1, f0: dm(1, &[-0.3]), fk: vec![dm(1, &[1.0])] },
                SdpBlock { dim: 1, f0: dm(1, &[1.0]), fk: vec![dm(1, &[-1.0])] },
            ],
        };
        let sol = solve(&sdp, &IpmConfig::default());
        assert_eq!(sol.status, IpmStatus::Converged);
        assert!((sol.z[0] - 0.3).abs() < 1e-7, "r* = {}", sol.z[0]);
    }
}
