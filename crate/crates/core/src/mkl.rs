//! Multi-kernel learning: the group-sparse RKHS superposition estimator and
//! the kernel-combination estimator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelDictionary;
use crate::linalg;
use crate::static_estimators::Observation;

/// Groups with `‖z_m‖` below this count as inactive.
pub const ACTIVE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MklSolverConfig {
    /// Initial ADMM penalty.
    pub rho_admm: f64,
    pub max_iters: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    /// Rounds of the kernel-combination alternation.
    pub alt_min_rounds: usize,
    /// Ridge weight on `θ` for the kernel-combination estimator.
    pub rho_theta: f64,
}

impl Default for MklSolverConfig {
    fn default() -> Self {
        MklSolverConfig {
            rho_admm: 1.0,
            max_iters: 20_000,
            tol_primal: 1e-9,
            tol_dual: 1e-9,
            alt_min_rounds: 200,
            rho_theta: 1e-3,
        }
    }
}

impl MklSolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho_admm", self.rho_admm),
            ("tol_primal", self.tol_primal),
            ("tol_dual", self.tol_dual),
            ("rho_theta", self.rho_theta),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.max_iters == 0 || self.alt_min_rounds == 0 {
            return Err(Error::InvalidParameter("iteration counts must be positive".into()));
        }
        Ok(())
    }
}

/// Per-kernel transformed coefficients `z_m = K̄_m^{1/2} ᾱ_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCoefficients {
    pub z: Vec<DVector<f64>>,
    /// `ᾱ_m = K̄_m^{†1/2} z_m`.
    pub alpha: Vec<DVector<f64>>,
}

impl GroupCoefficients {
    pub fn norms(&self) -> Vec<f64> {
        self.z.iter().map(|z| z.norm()).collect()
    }

    pub fn active_set(&self) -> Vec<usize> {
        self.norms()
            .iter()
            .enumerate()
            .filter(|(_, n)| **n >= ACTIVE_TOL)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdmmTraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperpositionFit {
    pub coefficients: GroupCoefficients,
    pub f_hat: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit; the fields then hold the last
    /// iterate.
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub trace: Vec<AdmmTraceRow>,
}

impl SuperpositionFit {
    /// Turns a non-converged fit into `SolverDidNotConverge`.
    pub fn ensure_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::SolverDidNotConverge {
                iterations: self.iterations,
                residual: self.primal_residual.max(self.dual_residual),
            })
        }
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidParameter(format!("mu must be finite and > 0, got {mu}")));
    }
    Ok(())
}

fn sampled_kernels(dict: &KernelDictionary, obs: &Observation) -> Result<Vec<DMatrix<f64>>> {
    if let Some(&last) = obs.mask().indices().last() {
        if last >= dict.n() {
            return Err(Error::dim("sampled vertex range", dict.n(), last + 1));
        }
    }
    Ok(dict.members().iter().map(|k| k.sampled(obs.mask().indices())).collect())
}

/// `(1/S)‖y − Σ R_m z_m‖² + μ Σ ‖z_m‖` with `R_m = K̄_m^{1/2}`.
pub fn superposition_objective(roots: &[DMatrix<f64>], y: &DVector<f64>, mu: f64, z: &[DVector<f64>]) -> f64 {
    let s = y.len().max(1) as f64;
    let mut resid = y.clone();
    for (r, zm) in roots.iter().zip(z) {
        resid -= r * zm;
    }
    resid.norm_squared() / s + mu * z.iter().map(|v| v.norm()).sum::<f64>()
}

/// Sampled kernel square roots `K̄_m^{1/2}`.
pub fn sampled_roots(dict: &KernelDictionary, obs: &Observation) -> Result<Vec<DMatrix<f64>>> {
    Ok(sampled_kernels(dict, obs)?.iter().map(linalg::psd_sqrt).collect())
}

/// Group-lasso estimate over the RKHS superposition, solved by ADMM on the
/// consensus split `x = w` with block soft-thresholding on `w`.
pub fn rkhs_superposition_fit(
    dict: &KernelDictionary,
    obs: &Observation,
    mu: f64,
    cfg: &MklSolverConfig,
) -> Result<SuperpositionFit> {
    check_mu(mu)?;
    cfg.validate()?;
    let kbars = sampled_kernels(dict, obs)?;
    let roots: Vec<DMatrix<f64>> = kbars.iter().map(linalg::psd_sqrt).collect();
    let m = roots.len();
    let s = obs.len();
    let y = obs.y();
    let idx = obs.mask().indices();

    if s == 0 {
        return Ok(SuperpositionFit {
            coefficients: GroupCoefficients {
                z: vec![DVector::zeros(0); m],
                alpha: vec![DVector::zeros(0); m],
            },
            f_hat: DVector::zeros(dict.n()),
            objective: 0.0,
            iterations: 0,
            converged: true,
            primal_residual: 0.0,
            dual_residual: 0.0,
            trace: Vec::new(),
        });
    }

    // x-update: (c RᵀR + ρI) x = c Rᵀy + ρ(w − u), c = 2/S, R = [R_1 … R_M].
    // Woodbury: x = (b − c Rᵀ(ρI + c RRᵀ)⁻¹ R b)/ρ with RRᵀ = Σ K̄_m.
    let c = 2.0 / s as f64;
    let mut rr = DMatrix::zeros(s, s);
    for r in &roots {
        rr += r * r;
    }
    let rty: Vec<DVector<f64>> = roots.iter().map(|r| r * y * c).collect();
    let factor = |rho: f64| -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        let mut a = &rr * c;
        for i in 0..s {
            a[(i, i)] += rho;
        }
        linalg::spd_factor(&a)
    };

    let mut rho = cfg.rho_admm;
    let mut chol = factor(rho)?;
    let zero = || vec![DVector::<f64>::zeros(s); m];
    let mut x = zero();
    let mut w = zero();
    let mut u = zero();
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut r_norm = 0.0;
    let mut s_norm = 0.0;
    let dim_sqrt = ((m * s) as f64).sqrt();

    while iterations < cfg.max_iters {
        iterations += 1;
        let b: Vec<DVector<f64>> = (0..m).map(|j| &rty[j] + (&w[j] - &u[j]) * rho).collect();
        let mut rb = DVector::zeros(s);
        for (r, bj) in roots.iter().zip(&b) {
            rb += r * bj;
        }
        let inner = chol.solve(&rb) * c;
        for j in 0..m {
            x[j] = (&b[j] - &roots[j] * &inner) / rho;
        }

        let w_prev = w.clone();
        let thresh = mu / rho;
        for j in 0..m {
            let v = &x[j] + &u[j];
            let norm = v.norm();
            w[j] = if norm > thresh { v * (1.0 - thresh / norm) } else { DVector::zeros(s) };
        }
        for j in 0..m {
            u[j] += &x[j] - &w[j];
        }

        let mut r2 = 0.0;
        let mut s2 = 0.0;
        let (mut xn, mut wn, mut un) = (0.0, 0.0, 0.0);
        for j in 0..m {
            r2 += (&x[j] - &w[j]).norm_squared();
            s2 += (&w[j] - &w_prev[j]).norm_squared();
            xn += x[j].norm_squared();
            wn += w[j].norm_squared();
            un += u[j].norm_squared();
        }
        r_norm = r2.sqrt();
        s_norm = rho * s2.sqrt();
        trace.push(AdmmTraceRow {
            iteration: iterations,
            objective: superposition_objective(&roots, y, mu, &w),
            primal_residual: r_norm,
            dual_residual: s_norm,
            rho,
        });
        let eps_pri = cfg.tol_primal * (dim_sqrt + xn.sqrt().max(wn.sqrt()));
        let eps_dual = cfg.tol_dual * (dim_sqrt + rho * un.sqrt());
        if r_norm <= eps_pri && s_norm <= eps_dual {
            converged = true;
            break;
        }

        // Residual balancing; the scaled dual variable follows ρ.
        let new_rho = if r_norm > 10.0 * s_norm {
            rho * 2.0
        } else if s_norm > 10.0 * r_norm {
            rho / 2.0
        } else {
            rho
        };
        if new_rho != rho {
            for uj in u.iter_mut() {
                *uj *= rho / new_rho;
            }
            rho = new_rho;
            chol = factor(rho)?;
        }
    }

    let z = w;
    let alpha: Vec<DVector<f64>> = kbars.iter().zip(&z).map(|(kb, zm)| linalg::psd_pinv_sqrt(kb) * zm).collect();
    let mut f_hat = DVector::zeros(dict.n());
    for (k, a) in dict.members().iter().zip(&alpha) {
        f_hat += k.sampled_columns(idx) * a;
    }
    let objective = superposition_objective(&roots, y, mu, &z);
    Ok(SuperpositionFit {
        coefficients: GroupCoefficients { z, alpha },
        f_hat,
        objective,
        iterations,
        converged,
        primal_residual: r_norm,
        dual_residual: s_norm,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinationFit {
    pub theta: DVector<f64>,
    pub alpha: DVector<f64>,
    pub f_hat: DVector<f64>,
    /// Objective after the initial `ᾱ` step and after every round.
    pub objective_trace: Vec<f64>,
    pub rounds: usize,
}

/// `(1/S)‖y − K̄(θ)ᾱ‖² + μ ᾱᵀK̄(θ)ᾱ + ρ_θ‖θ‖²`.
pub fn combination_objective(
    kbars: &[DMatrix<f64>],
    y: &DVector<f64>,
    mu: f64,
    rho_theta: f64,
    theta: &DVector<f64>,
    alpha: &DVector<f64>,
) -> f64 {
    let s = y.len().max(1) as f64;
    let mut ka = DVector::zeros(y.len());
    for (kb, &t) in kbars.iter().zip(theta.iter()) {
        ka += kb * alpha * t;
    }
    (y - &ka).norm_squared() / s + mu * alpha.dot(&ka) + rho_theta * theta.norm_squared()
}

/// Minimizes the quadratic `θᵀHθ/2 − gᵀθ` over `θ >= 0` by exact cyclic
/// coordinate descent.
fn nonneg_quadratic(h: &DMatrix<f64>, g: &DVector<f64>, start: &DVector<f64>) -> DVector<f64> {
    let m = g.len();
    let mut theta = start.clone();
    for _ in 0..100_000 {
        let mut change = 0.0f64;
        for j in 0..m {
            let hj = h[(j, j)];
            if hj <= 0.0 {
                continue;
            }
            let grad = h.row(j).transpose().dot(&theta) - g[j];
            let next = (theta[j] - grad / hj).max(0.0);
            change = change.max((next - theta[j]).abs());
            theta[j] = next;
        }
        if change <= 1e-15 * theta.amax().max(1.0) {
            break;
        }
    }
    theta
}

/// Alternating minimization over `ᾱ` (ridge solve with `K̄(θ)`) and `θ >= 0`
/// (non-negative quadratic program). Both steps are exact, so the objective
/// never increases.
pub fn kernel_combination_fit(
    dict: &KernelDictionary,
    obs: &Observation,
    mu: f64,
    cfg: &MklSolverConfig,
) -> Result<CombinationFit> {
    check_mu(mu)?;
    cfg.validate()?;
    let kbars = sampled_kernels(dict, obs)?;
    let m = kbars.len();
    let s = obs.len();
    let y = obs.y();
    let sf = s.max(1) as f64;

    let mut theta = DVector::from_element(m, 1.0 / m as f64);
    let alpha_step = |theta: &DVector<f64>| -> Result<DVector<f64>> {
        let mut a = DMatrix::identity(s, s) * (mu * s as f64);
        for (kb, &t) in kbars.iter().zip(theta.iter()) {
            a += kb * t;
        }
        linalg::spd_solve_vec(&a, y)
    };
    let mut alpha = alpha_step(&theta)?;
    let mut obj = combination_objective(&kbars, y, mu, cfg.rho_theta, &theta, &alpha);
    let mut trace = vec![obj];
    let mut rounds = 0;
    while rounds < cfg.alt_min_rounds {
        rounds += 1;
        // θ step: with G = [K̄_1ᾱ … K̄_Mᾱ] and c_m = ᾱᵀK̄_mᾱ the objective is
        // (1/S)‖y − Gθ‖² + μ cᵀθ + ρ_θ‖θ‖².
        let gmat = DMatrix::from_columns(&kbars.iter().map(|kb| kb * &alpha).collect::<Vec<_>>());
        let cvec = DVector::from_iterator(m, gmat.column_iter().map(|col| alpha.dot(&col)));
        let mut h = gmat.tr_mul(&gmat) * (2.0 / sf);
        for i in 0..m {
            h[(i, i)] += 2.0 * cfg.rho_theta;
        }
        let g = gmat.tr_mul(y) * (2.0 / sf) - cvec * mu;
        theta = nonneg_quadratic(&h, &g, &theta);
        alpha = alpha_step(&theta)?;
        let next = combination_objective(&kbars, y, mu, cfg.rho_theta, &theta, &alpha);
        trace.push(next);
        let rel = (obj - next).abs() / obj.abs().max(f64::MIN_POSITIVE);
        obj = next;
        if rel < 1e-8 {
            break;
        }
    }

    let idx = obs.mask().indices();
    let mut f_hat = DVector::zeros(dict.n());
    for (k, &t) in dict.members().iter().zip(theta.iter()) {
        if t != 0.0 {
            f_hat += k.sampled_columns(idx) * &alpha * t;
        }
    }
    Ok(CombinationFit {
        theta,
        alpha,
        f_hat,
        objective_trace: trace,
        rounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelMatrix;
    use crate::static_estimators::SamplingMask;

    fn small_dict() -> KernelDictionary {
        let a = KernelMatrix::new(DMatrix::from_fn(4, 4, |i, j| (-((i as f64 - j as f64).powi(2))).exp())).unwrap();
        let b = KernelMatrix::new(DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.2 })).unwrap();
        KernelDictionary::new(vec![a, b]).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_estimates() {
        let dict = small_dict();
        let obs = Observation::new(SamplingMask::new(vec![0, 1, 3], 4).unwrap(), DVector::zeros(3)).unwrap();
        let fit = rkhs_superposition_fit(&dict, &obs, 0.1, &MklSolverConfig::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.f_hat.amax() == 0.0);
        assert!(fit.coefficients.active_set().is_empty());
        let kc = kernel_combination_fit(&dict, &obs, 0.1, &MklSolverConfig::default()).unwrap();
        assert!(kc.f_hat.amax() == 0.0 && kc.alpha.amax() == 0.0);
    }

    #[test]
    fn combination_objective_non_increasing() {
        let dict = small_dict();
        let obs = Observation::new(
            SamplingMask::new(vec![0, 2, 3], 4).unwrap(),
            DVector::from_vec(vec![1.0, -0.5, 2.0]),
        )
        .unwrap();
        let fit = kernel_combination_fit(&dict, &obs, 0.05, &MklSolverConfig::default()).unwrap();
        assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-14)));
        assert!(fit.theta.iter().all(|t| *t >= 0.0));
    }
}
