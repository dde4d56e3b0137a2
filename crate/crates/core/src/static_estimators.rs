//! Reconstruction of a time-invariant graph signal from noisy samples.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SpectralDecomposition;
use crate::kernels::KernelMatrix;
use crate::linalg;

/// Strictly increasing vertex indices `n_1 < … < n_S`. Realizes the binary
/// sampling matrix `Φ` whose rows are `e_{n_s}ᵀ`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SamplingMask {
    indices: Vec<usize>,
}

impl SamplingMask {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.len() > n {
            return Err(Error::dim("sample count", n, indices.len()));
        }
        for (pos, &i) in indices.iter().enumerate() {
            if i >= n {
                return Err(Error::InvalidParameter(format!("vertex index {i} out of range for n={n}")));
            }
            if pos > 0 && indices[pos - 1] >= i {
                return Err(Error::InvalidParameter("sample indices must be strictly increasing".into()));
            }
        }
        Ok(SamplingMask { indices })
    }

    pub fn full(n: usize) -> Self {
        SamplingMask {
            indices: (0..n).collect(),
        }
    }

    pub fn empty() -> Self {
        SamplingMask { indices: Vec::new() }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Dense `S×n` sampling matrix.
    pub fn phi(&self, n: usize) -> DMatrix<f64> {
        let mut phi = DMatrix::zeros(self.len(), n);
        for (s, &i) in self.indices.iter().enumerate() {
            phi[(s, i)] = 1.0;
        }
        phi
    }

    /// `Φ f`.
    pub fn sample(&self, f: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.indices.iter().map(|&i| f[i]))
    }

    /// `Φ M` (rows of `m` at the sampled vertices).
    pub fn sample_rows(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m.select_rows(&self.indices)
    }

    /// `Φᵀ v`.
    pub fn scatter(&self, v: &DVector<f64>, n: usize) -> DVector<f64> {
        let mut out = DVector::zeros(n);
        for (s, &i) in self.indices.iter().enumerate() {
            out[i] = v[s];
        }
        out
    }

    fn check_n(&self, n: usize) -> Result<()> {
        match self.indices.last() {
            Some(&last) if last >= n => Err(Error::dim("sampled vertex range", n, last + 1)),
            _ => Ok(()),
        }
    }
}

/// Noisy samples `y = Φ f + e`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    mask: SamplingMask,
    y: DVector<f64>,
}

impl Observation {
    pub fn new(mask: SamplingMask, y: DVector<f64>) -> Result<Self> {
        if y.len() != mask.len() {
            return Err(Error::dim("observation length", mask.len(), y.len()));
        }
        Ok(Observation { mask, y })
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Basis functions of the parametric term, one column per function.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricBasis {
    b: DMatrix<f64>,
}

impl ParametricBasis {
    pub fn new(b: DMatrix<f64>) -> Result<Self> {
        if b.ncols() == 0 {
            return Err(Error::RankDeficientBasis);
        }
        Ok(ParametricBasis { b })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.b.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }
}

/// Representer coefficients and the reconstructed signal.
#[derive(Debug, Clone, PartialEq)]
pub struct KrrFit {
    pub alpha: DVector<f64>,
    pub f_hat: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemiparametricFit {
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    pub f_hat: DVector<f64>,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidParameter(format!("{name} must be finite and > 0, got {v}")));
    }
    Ok(())
}

fn check_obs(k: &KernelMatrix, obs: &Observation) -> Result<()> {
    obs.mask.check_n(k.n())
}

/// `K Φᵀ (ΦKΦᵀ + reg I)⁻¹ y`, returning the coefficients as well.
fn ridge_solve(k: &KernelMatrix, obs: &Observation, reg: f64) -> Result<KrrFit> {
    check_obs(k, obs)?;
    let idx = obs.mask.indices();
    let mut system = k.sampled(idx);
    for i in 0..system.nrows() {
        system[(i, i)] += reg;
    }
    let alpha = linalg::spd_solve_vec(&system, &obs.y)?;
    let f_hat = k.sampled_columns(idx) * &alpha;
    Ok(KrrFit { alpha, f_hat })
}

/// Kernel ridge regression with square loss `(1/S)‖y − Φf‖² + μ‖f‖²_H`:
/// `ᾱ = (K̄ + μS I)⁻¹ y`, `f̂ = KΦᵀᾱ`.
pub fn krr_fit(k: &KernelMatrix, obs: &Observation, mu: f64) -> Result<KrrFit> {
    check_positive("mu", mu)?;
    ridge_solve(k, obs, mu * obs.len() as f64)
}

/// Least-squares fit over the first `bandwidth` Laplacian eigenvectors,
/// `f̂ = U_B (ΦU_B)† y`.
pub fn bl_estimate(decomp: &SpectralDecomposition, obs: &Observation, bandwidth: usize) -> Result<DVector<f64>> {
    let n = decomp.n();
    obs.mask.check_n(n)?;
    if bandwidth == 0 || bandwidth > n {
        return Err(Error::InvalidParameter(format!("bandwidth must lie in 1..={n}, got {bandwidth}")));
    }
    let ub = decomp.eigenvectors().columns(0, bandwidth).into_owned();
    let sampled = obs.mask.sample_rows(&ub);
    let rank = linalg::column_rank(&sampled);
    if rank < bandwidth {
        return Err(Error::RankDeficient { rank, needed: bandwidth });
    }
    // Full column rank: normal equations through a QR of the sampled basis.
    let qr = sampled.qr();
    let qty = qr.q().tr_mul(&obs.y);
    let coeffs = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient { rank, needed: bandwidth })?;
    Ok(ub * coeffs)
}

/// `f̂ = CΦᵀ(ΦCΦᵀ + σ²I)⁻¹ y`.
pub fn lmmse_estimate(c: &KernelMatrix, obs: &Observation, noise_var: f64) -> Result<DVector<f64>> {
    if !(noise_var >= 0.0) || !noise_var.is_finite() {
        return Err(Error::InvalidParameter(format!("noise variance must be >= 0, got {noise_var}")));
    }
    Ok(ridge_solve(c, obs, noise_var)?.f_hat)
}

struct SampledBasis {
    bbar: DMatrix<f64>,
    gram: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

fn sampled_basis(basis: &ParametricBasis, obs: &Observation) -> Result<SampledBasis> {
    let bbar = obs.mask.sample_rows(&basis.b);
    if basis.m() == 0 || linalg::column_rank(&bbar) < basis.m() {
        return Err(Error::RankDeficientBasis);
    }
    let gram = nalgebra::Cholesky::new(bbar.tr_mul(&bbar)).ok_or(Error::RankDeficientBasis)?;
    Ok(SampledBasis { bbar, gram })
}

fn check_basis(k: &KernelMatrix, basis: &ParametricBasis) -> Result<()> {
    if basis.n() != k.n() {
        return Err(Error::dim("parametric basis rows", k.n(), basis.n()));
    }
    Ok(())
}

/// Semi-parametric fit with square loss. With `P = I − B̄(B̄ᵀB̄)⁻¹B̄ᵀ`:
/// `ᾱ = (PK̄ + μS I)⁻¹ P y`, `β̂ = (B̄ᵀB̄)⁻¹B̄ᵀ(y − K̄ᾱ)`, `f̂ = Bβ̂ + KΦᵀᾱ`.
pub fn semiparametric_fit_square(
    k: &KernelMatrix,
    basis: &ParametricBasis,
    obs: &Observation,
    mu: f64,
) -> Result<SemiparametricFit> {
    check_positive("mu", mu)?;
    check_obs(k, obs)?;
    check_basis(k, basis)?;
    let s = obs.len();
    let sb = sampled_basis(basis, obs)?;
    let idx = obs.mask.indices();
    let kbar = k.sampled(idx);

    let hat = &sb.bbar * sb.gram.solve(&sb.bbar.transpose());
    let p = DMatrix::identity(s, s) - hat;
    let mut system = &p * &kbar;
    for i in 0..s {
        system[(i, i)] += mu * s as f64;
    }
    let rhs = &p * &obs.y;
    let alpha = system.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    let beta = sb.gram.solve(&sb.bbar.tr_mul(&(&obs.y - &kbar * &alpha)));
    let f_hat = &basis.b * &beta + k.sampled_columns(idx) * &alpha;
    Ok(SemiparametricFit { alpha, beta, f_hat })
}

/// Iteration limits for the ε-insensitive solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsSolverConfig {
    pub max_iters: usize,
    /// Duality-gap tolerance relative to `max(1, objective)`.
    pub tol: f64,
}

impl Default for EpsSolverConfig {
    fn default() -> Self {
        EpsSolverConfig {
            max_iters: 50_000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsFit {
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    pub f_hat: DVector<f64>,
    pub iterations: usize,
    pub duality_gap: f64,
    /// Objective value after every iteration, starting with the initial point.
    pub objective_trace: Vec<f64>,
}

/// `(1/S) Σ max(0, |r_s| − ε)`.
pub fn eps_insensitive_loss(residual: &DVector<f64>, eps: f64) -> f64 {
    if residual.is_empty() {
        return 0.0;
    }
    residual.iter().map(|r| (r.abs() - eps).max(0.0)).sum::<f64>() / residual.len() as f64
}

/// Objective of the ε-insensitive semi-parametric problem at `(ᾱ, β)`.
pub fn semiparametric_eps_objective(
    k: &KernelMatrix,
    basis: &ParametricBasis,
    obs: &Observation,
    mu: f64,
    eps: f64,
    alpha: &DVector<f64>,
    beta: &DVector<f64>,
) -> f64 {
    let idx = obs.mask.indices();
    let kbar = k.sampled(idx);
    let ka = &kbar * alpha;
    let fit = &ka + obs.mask.sample_rows(&basis.b) * beta;
    eps_insensitive_loss(&(&obs.y - fit), eps) + mu * alpha.dot(&ka)
}

/// Semi-parametric fit with the ε-insensitive loss.
///
/// Solved through its dual
/// `max_λ λᵀy − ε‖λ‖₁ − λᵀK̄λ/(4μ)` s.t. `|λ_s| <= 1/S`, `B̄ᵀλ = 0`,
/// with ADMM splitting the quadratic-plus-equality part from the separable
/// `ε‖·‖₁ + box` part. The primal is read off as `ᾱ = λ/(2μ)` and `β` as the
/// multiplier of `B̄ᵀλ = 0`. Iterates are certified by the duality gap
/// between the best primal point and the best dual-feasible point seen.
/// The objective trace is that best primal value, so it never increases.
pub fn semiparametric_fit_eps(
    k: &KernelMatrix,
    basis: &ParametricBasis,
    obs: &Observation,
    mu: f64,
    eps: f64,
    cfg: &EpsSolverConfig,
) -> Result<EpsFit> {
    check_positive("mu", mu)?;
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!("epsilon must be >= 0, got {eps}")));
    }
    check_obs(k, obs)?;
    check_basis(k, basis)?;
    let s = obs.len();
    let sb = sampled_basis(basis, obs)?;
    let idx = obs.mask.indices();
    let kbar = k.sampled(idx);
    let y = &obs.y;
    let bbar = &sb.bbar;
    let inv_s = 1.0 / s as f64;
    let q = &kbar / (2.0 * mu);

    let primal_at = |alpha: &DVector<f64>, beta: &DVector<f64>| -> f64 {
        let ka = &kbar * alpha;
        eps_insensitive_loss(&(y - &ka - bbar * beta), eps) + mu * alpha.dot(&ka)
    };
    let dual_at = |lambda: &DVector<f64>| -> f64 {
        lambda.dot(y) - eps * lambda.lp_norm(1) - lambda.dot(&(&q * lambda)) / 2.0
    };

    // Factors of the equality-constrained λ-step for penalty ρ.
    struct Step {
        chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
        pinv_b: DMatrix<f64>,
        schur: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    }
    let factor = |rho: f64| -> Result<Step> {
        let mut p = q.clone();
        for i in 0..s {
            p[(i, i)] += rho;
        }
        let chol = nalgebra::Cholesky::new(linalg::symmetrize(&p)).ok_or(Error::NotPositiveDefinite("ADMM system"))?;
        let pinv_b = chol.solve(bbar);
        let schur =
            nalgebra::Cholesky::new(linalg::symmetrize(&bbar.tr_mul(&pinv_b))).ok_or(Error::RankDeficientBasis)?;
        Ok(Step { chol, pinv_b, schur })
    };

    let mut rho = (q.trace() / s as f64).max(f64::MIN_POSITIVE);
    let mut step = factor(rho)?;
    let mut omega = DVector::zeros(s);
    let mut u = DVector::zeros(s);

    // Start from the parametric least-squares fit.
    let mut best_alpha = DVector::zeros(s);
    let mut best_beta = sb.gram.solve(&bbar.tr_mul(y));
    let mut best_primal = primal_at(&best_alpha, &best_beta);
    let mut best_dual = 0.0f64;
    let mut trace = vec![best_primal];
    let mut iterations = 0;
    let gap = |p: f64, d: f64| p - d;
    while gap(best_primal, best_dual) > cfg.tol * best_primal.abs().max(1.0) {
        if iterations >= cfg.max_iters {
            return Err(Error::SolverDidNotConverge {
                iterations,
                residual: gap(best_primal, best_dual),
            });
        }
        iterations += 1;

        let rhs = y + (&omega - &u) * rho;
        let lambda0 = step.chol.solve(&rhs);
        let nu = step.schur.solve(&bbar.tr_mul(&lambda0));
        let lambda = lambda0 - &step.pinv_b * &nu;

        let omega_prev = omega;
        let shrink = eps / rho;
        omega = (&lambda + &u).map(|v| (v.abs() - shrink).max(0.0).copysign(v).clamp(-inv_s, inv_s));
        u += &lambda - &omega;

        let alpha = &lambda / (2.0 * mu);
        let primal = primal_at(&alpha, &nu);
        if primal < best_primal {
            best_primal = primal;
            best_alpha = alpha;
            best_beta = nu;
        }
        let top = lambda.amax();
        let feasible = if top > inv_s { &lambda * (inv_s / top) } else { lambda.clone() };
        best_dual = best_dual.max(dual_at(&feasible));
        trace.push(best_primal);

        if iterations % 10 == 0 {
            let r_primal = (&lambda - &omega).norm();
            let r_dual = rho * (&omega - &omega_prev).norm();
            let scale = if r_primal > 10.0 * r_dual {
                2.0
            } else if r_dual > 10.0 * r_primal {
                0.5
            } else {
                1.0
            };
            if scale != 1.0 {
                rho *= scale;
                u /= scale;
                step = factor(rho)?;
            }
        }
    }
    let f_hat = &basis.b * &best_beta + k.sampled_columns(idx) * &best_alpha;
    Ok(EpsFit {
        alpha: best_alpha,
        beta: best_beta,
        f_hat,
        iterations,
        duality_gap: gap(best_primal, best_dual),
        objective_trace: trace,
    })
}
