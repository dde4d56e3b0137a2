//! Kriged Kalman filtering on graphs: the signal is a state-driven trend
//! `f⁽ᵡ⁾(t) = A f⁽ᵡ⁾(t−1) + η(t)` plus a temporally uncorrelated spatial
//! fluctuation `f⁽ᵛ⁾(t)`, both regularized by graph kernels. Includes the
//! kernel kriged Kalman filter (KeKriKF) and its online multi-kernel
//! variant (MKriKF).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::dynamic::TimeSeriesObservations;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::kernels::{combine, KernelDictionary, KernelMatrix};
use crate::linalg;
use crate::static_estimators::Observation;

/// Relative jitter applied when a combined kernel `K(θ)` is singular.
pub const COMBINATION_JITTER: f64 = 1e-10;

/// State transition model `A(t,t−1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransitionSpec {
    /// `α I`
    ScaledIdentity { alpha: f64 },
    /// `α A` with `A` the graph adjacency.
    ScaledAdjacency { alpha: f64 },
}

impl TransitionSpec {
    pub fn matrix(&self, g: &Graph) -> DMatrix<f64> {
        match *self {
            TransitionSpec::ScaledIdentity { alpha } => DMatrix::identity(g.n(), g.n()) * alpha,
            TransitionSpec::ScaledAdjacency { alpha } => g.adjacency() * alpha,
        }
    }
}

/// `(I − A(t,t))⁻¹ A(t,t−1)`: the structural model rewritten as a plain
/// vector autoregression.
pub fn svarm_to_varm(a_tt: &DMatrix<f64>, a_prev: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = linalg::ensure_square(a_tt)?;
    if a_prev.nrows() != n || a_prev.ncols() != n {
        return Err(Error::dim("transition size", n, a_prev.nrows().max(a_prev.ncols())));
    }
    let lu = (DMatrix::identity(n, n) - a_tt).lu();
    if linalg::column_rank(&(DMatrix::identity(n, n) - a_tt)) < n {
        return Err(Error::SingularInstantaneous);
    }
    lu.solve(a_prev).ok_or(Error::SingularInstantaneous)
}

/// Transition, kernels and regularization weights of the trend/fluctuation
/// model. With an instantaneous term `A(t,t)` the model is stored in its
/// equivalent autoregressive form: transition `(I − A(t,t))⁻¹A(t,t−1)` and
/// state-noise kernel `(I − A(t,t))⁻¹ K⁽ᵑ⁾ (I − A(t,t))⁻ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatioTemporalModel {
    transition: DMatrix<f64>,
    kernel_nu: KernelMatrix,
    kernel_eta: KernelMatrix,
    mu1: f64,
    mu2: f64,
}

impl SpatioTemporalModel {
    pub fn new(
        transition: DMatrix<f64>,
        instantaneous: Option<&DMatrix<f64>>,
        kernel_nu: KernelMatrix,
        kernel_eta: KernelMatrix,
        mu1: f64,
        mu2: f64,
    ) -> Result<Self> {
        let n = kernel_nu.n();
        if kernel_eta.n() != n {
            return Err(Error::dim("state-noise kernel size", n, kernel_eta.n()));
        }
        if transition.nrows() != n || transition.ncols() != n {
            return Err(Error::dim("transition size", n, transition.nrows().max(transition.ncols())));
        }
        for (name, v) in [("mu1", mu1), ("mu2", mu2)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        let (transition, kernel_eta) = match instantaneous {
            None => (transition, kernel_eta),
            Some(a_tt) => {
                let eff = svarm_to_varm(a_tt, &transition)?;
                let b = svarm_to_varm(a_tt, &DMatrix::identity(n, n))?;
                let k = linalg::symmetrize(&(&b * kernel_eta.matrix() * b.transpose()));
                (eff, KernelMatrix::from_parts_unchecked(k, kernel_eta.provenance().clone()))
            }
        };
        Ok(SpatioTemporalModel {
            transition,
            kernel_nu,
            kernel_eta,
            mu1,
            mu2,
        })
    }

    pub fn n(&self) -> usize {
        self.kernel_nu.n()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn kernel_nu(&self) -> &KernelMatrix {
        &self.kernel_nu
    }

    pub fn kernel_eta(&self) -> &KernelMatrix {
        &self.kernel_eta
    }

    pub fn mu1(&self) -> f64 {
        self.mu1
    }

    pub fn mu2(&self) -> f64 {
        self.mu2
    }

    fn with_kernels(&self, kernel_nu: KernelMatrix, kernel_eta: KernelMatrix) -> Self {
        SpatioTemporalModel {
            transition: self.transition.clone(),
            kernel_nu,
            kernel_eta,
            mu1: self.mu1,
            mu2: self.mu2,
        }
    }
}

/// Filtered trend `f̂⁽ᵡ⁾(t|t)`, fluctuation `f̂⁽ᵛ⁾(t|t)` and trend error
/// matrix `M(t|t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrigedState {
    /// Number of slots processed so far (0 for the initial state).
    pub t: usize,
    pub f_chi: DVector<f64>,
    pub f_nu: DVector<f64>,
    pub m: DMatrix<f64>,
}

impl KrigedState {
    pub fn zero(n: usize) -> Self {
        KrigedState {
            t: 0,
            f_chi: DVector::zeros(n),
            f_nu: DVector::zeros(n),
            m: DMatrix::zeros(n, n),
        }
    }

    /// `f̂(t|t) = f̂⁽ᵡ⁾(t|t) + f̂⁽ᵛ⁾(t|t)`.
    pub fn estimate(&self) -> DVector<f64> {
        &self.f_chi + &self.f_nu
    }
}

/// One KeKriKF slot:
/// `K̄⁽ᵡ⁾ = (1/μ₂)ΦK⁽ᵛ⁾Φᵀ + S I`, trend prediction with `A` and
/// `M(t|t−1) = AMAᵀ + (1/μ₁)K⁽ᵑ⁾`, Kalman correction with innovation
/// `K̄⁽ᵡ⁾ + ΦM(t|t−1)Φᵀ`, then kriging of the residual
/// `f̂⁽ᵛ⁾ = (1/μ₂)K⁽ᵛ⁾Φᵀ(K̄⁽ᵡ⁾)⁻¹(y − Φf̂⁽ᵡ⁾(t|t))`. Empty slots only predict
/// and set `f̂⁽ᵛ⁾ = 0`.
pub fn kekrikf_step(state: &KrigedState, model: &SpatioTemporalModel, obs: &Observation) -> Result<KrigedState> {
    let n = model.n();
    if state.f_chi.len() != n || state.m.nrows() != n {
        return Err(Error::dim("filter state size", n, state.f_chi.len()));
    }
    if let Some(&last) = obs.mask().indices().last() {
        if last >= n {
            return Err(Error::dim("sampled vertex range", n, last + 1));
        }
    }
    let a = &model.transition;
    let mut f_chi = a * &state.f_chi;
    let mut m = a * &state.m * a.transpose() + model.kernel_eta.matrix() / model.mu1;
    let mut f_nu = DVector::zeros(n);
    if !obs.is_empty() {
        let idx = obs.mask().indices();
        let s = idx.len();
        let mut kbar_chi = model.kernel_nu.sampled(idx) / model.mu2;
        for i in 0..s {
            kbar_chi[(i, i)] += s as f64;
        }
        let m_phi_t = m.select_columns(idx);
        let innov = &kbar_chi + m_phi_t.select_rows(idx);
        let chol = linalg::spd_factor(&innov).map_err(|_| Error::SingularInnovation(state.t))?;
        let gain_t = chol.solve(&m_phi_t.transpose());
        f_chi += gain_t.tr_mul(&(obs.y() - obs.mask().sample(&f_chi)));
        m -= gain_t.tr_mul(&m_phi_t.transpose());

        let resid = obs.y() - obs.mask().sample(&f_chi);
        let krig = linalg::spd_solve_vec(&kbar_chi, &resid).map_err(|_| Error::SingularInnovation(state.t))?;
        f_nu = model.kernel_nu.sampled_columns(idx) * krig / model.mu2;
    }
    Ok(KrigedState {
        t: state.t + 1,
        f_chi,
        f_nu,
        m: linalg::symmetrize(&m),
    })
}

/// Runs KeKriKF over a whole series from the zero state.
pub fn kekrikf_run(model: &SpatioTemporalModel, series: &TimeSeriesObservations) -> Result<Vec<KrigedState>> {
    if series.n() != model.n() {
        return Err(Error::dim("vertex count", model.n(), series.n()));
    }
    let mut state = KrigedState::zero(model.n());
    let mut out = Vec::with_capacity(series.t_len());
    for obs in series.slots() {
        state = kekrikf_step(&state, model, obs)?;
        out.push(state.clone());
    }
    Ok(out)
}

/// Running second moments of the trend innovations and of the fluctuation
/// estimates, plus the current kernel coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaState {
    pub theta_nu: DVector<f64>,
    pub theta_eta: DVector<f64>,
    count: usize,
    eta_outer: DMatrix<f64>,
    nu_outer: DMatrix<f64>,
    eta_spectral: Option<DVector<f64>>,
    nu_spectral: Option<DVector<f64>>,
}

impl ThetaState {
    /// Coefficients start at `1/M` per member.
    pub fn new(dict_nu: &KernelDictionary, dict_eta: &KernelDictionary) -> Self {
        let n = dict_nu.n();
        ThetaState {
            theta_nu: DVector::from_element(dict_nu.len(), 1.0 / dict_nu.len() as f64),
            theta_eta: DVector::from_element(dict_eta.len(), 1.0 / dict_eta.len() as f64),
            count: 0,
            eta_outer: DMatrix::zeros(n, n),
            nu_outer: DMatrix::zeros(n, n),
            eta_spectral: dict_eta.shared_eigenbasis().map(|_| DVector::zeros(n)),
            nu_spectral: dict_nu.shared_eigenbasis().map(|_| DVector::zeros(n)),
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    fn accumulate(&mut self, delta: &DVector<f64>, nu: &DVector<f64>, sign: f64, dict_nu: &KernelDictionary, dict_eta: &KernelDictionary) {
        self.eta_outer += delta * delta.transpose() * sign;
        self.nu_outer += nu * nu.transpose() * sign;
        if let (Some(acc), Some(basis)) = (self.eta_spectral.as_mut(), dict_eta.shared_eigenbasis()) {
            let c = basis.eigenvectors().tr_mul(delta);
            *acc += c.component_mul(&c) * sign;
        }
        if let (Some(acc), Some(basis)) = (self.nu_spectral.as_mut(), dict_nu.shared_eigenbasis()) {
            let c = basis.eigenvectors().tr_mul(nu);
            *acc += c.component_mul(&c) * sign;
        }
    }

    /// Adds one slot's trend innovation `δ = f̂⁽ᵡ⁾(t|t) − A f̂⁽ᵡ⁾(t−1|t−1)` and
    /// fluctuation estimate `f̂⁽ᵛ⁾(t|t)`.
    pub fn record(&mut self, delta: &DVector<f64>, nu: &DVector<f64>, dict_nu: &KernelDictionary, dict_eta: &KernelDictionary) {
        self.accumulate(delta, nu, 1.0, dict_nu, dict_eta);
        self.count += 1;
    }

    fn retract(&mut self, delta: &DVector<f64>, nu: &DVector<f64>, dict_nu: &KernelDictionary, dict_eta: &KernelDictionary) {
        self.accumulate(delta, nu, -1.0, dict_nu, dict_eta);
        self.count -= 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaSolverConfig {
    pub max_iters: usize,
    /// Tolerance on the projected-gradient norm.
    pub tol: f64,
    /// Use the shared-eigenbasis fast path when the dictionary has one.
    pub use_shared_basis: bool,
    /// Filter/θ alternations per slot.
    pub alternations: usize,
}

impl Default for ThetaSolverConfig {
    fn default() -> Self {
        ThetaSolverConfig {
            max_iters: 5_000,
            tol: 1e-6,
            use_shared_basis: true,
            alternations: 1,
        }
    }
}

/// Result of one θ subproblem solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaFit {
    pub theta: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub projected_gradient_norm: f64,
    pub converged: bool,
    /// Objective after every accepted iterate, starting with the initial one.
    pub objective_trace: Vec<f64>,
}

/// `J(θ) = tr(K(θ)⁻¹ C) + w‖θ‖²` where `C` is the averaged second moment.
struct ThetaObjective<'a> {
    dict: &'a KernelDictionary,
    second_moment: DMatrix<f64>,
    spectral: Option<(DVector<f64>, &'a [DVector<f64>])>,
    weight: f64,
    empty: bool,
}

impl ThetaObjective<'_> {
    fn factor(&self, theta: &DVector<f64>) -> Option<Cholesky<f64, Dyn>> {
        let k = combine(self.dict, theta.as_slice()).ok()?.into_matrix();
        if let Some(ch) = Cholesky::new(k.clone()) {
            return Some(ch);
        }
        let n = k.nrows();
        let jitter = COMBINATION_JITTER * k.trace() / n as f64;
        if !(jitter > 0.0) {
            return None;
        }
        Cholesky::new(k + DMatrix::identity(n, n) * jitter)
    }

    fn spectral_diag(theta: &DVector<f64>, spectra: &[DVector<f64>]) -> DVector<f64> {
        let mut d = DVector::zeros(spectra[0].len());
        for (s, &t) in spectra.iter().zip(theta.iter()) {
            d.axpy(t, s, 1.0);
        }
        let n = d.len() as f64;
        if d.iter().any(|v| *v <= 0.0) {
            let jitter = COMBINATION_JITTER * d.sum() / n;
            d.add_scalar_mut(jitter);
        }
        d
    }

    /// Objective and gradient; `None` when `K(θ)` is singular on the data.
    fn eval(&self, theta: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        let m = theta.len();
        let reg = self.weight * theta.norm_squared();
        let mut grad = theta * (2.0 * self.weight);
        if self.empty {
            return Some((reg, grad));
        }
        if let Some((c, spectra)) = &self.spectral {
            let d = Self::spectral_diag(theta, spectra);
            let mut data = 0.0;
            for i in 0..d.len() {
                if c[i] == 0.0 {
                    continue;
                }
                if d[i] <= 0.0 {
                    return None;
                }
                data += c[i] / d[i];
            }
            for j in 0..m {
                let mut g = 0.0;
                for i in 0..d.len() {
                    if c[i] != 0.0 {
                        g += c[i] * spectra[j][i] / (d[i] * d[i]);
                    }
                }
                grad[j] -= g;
            }
            return Some((data + reg, grad));
        }
        let ch = self.factor(theta)?;
        // tr(K⁻¹C) and ∂/∂θ_j = −tr(K⁻¹ K_j K⁻¹ C).
        let kinv_c = ch.solve(&self.second_moment);
        let data = kinv_c.trace();
        let x = ch.solve(&kinv_c.transpose());
        for (j, member) in self.dict.members().iter().enumerate() {
            grad[j] -= member.matrix().component_mul(&x).sum();
        }
        Some((data + reg, grad))
    }
}

fn project(theta: &DVector<f64>) -> DVector<f64> {
    theta.map(|v| v.max(0.0))
}

/// Projected gradient descent over `θ >= 0` with Armijo backtracking. The
/// first trial step is 1.0; later trial steps use the Barzilai-Borwein
/// estimate. Accepted iterates strictly decrease the objective.
fn theta_pgd(obj: &ThetaObjective, start: &DVector<f64>, cfg: &ThetaSolverConfig) -> Result<ThetaFit> {
    let mut theta = project(start);
    let (mut f, mut g) = match obj.eval(&theta) {
        Some(v) => v,
        None => {
            // Singular starting point: restart from the uniform combination.
            theta = DVector::from_element(theta.len(), 1.0 / theta.len() as f64);
            obj.eval(&theta).ok_or(Error::SingularCombination)?
        }
    };
    let pg_norm = |theta: &DVector<f64>, g: &DVector<f64>| (theta - project(&(theta - g))).norm();
    let mut trace = vec![f];
    let mut pg = pg_norm(&theta, &g);
    let mut step = 1.0;
    let mut iterations = 0;
    while pg >= cfg.tol && iterations < cfg.max_iters {
        iterations += 1;
        let mut trial = step;
        let mut accepted = None;
        for _ in 0..200 {
            let cand = project(&(&theta - &g * trial));
            let d = &cand - &theta;
            if d.norm() == 0.0 {
                break;
            }
            if let Some((fc, gc)) = obj.eval(&cand) {
                if fc <= f + 1e-4 * g.dot(&d) && fc < f {
                    accepted = Some((cand, fc, gc));
                    break;
                }
            }
            trial *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else { break };
        let s = &cand - &theta;
        let yv = &gc - &g;
        let sy = s.dot(&yv);
        step = if sy > 0.0 { (s.norm_squared() / sy).clamp(1e-12, 1e12) } else { 1.0 };
        theta = cand;
        f = fc;
        g = gc;
        trace.push(f);
        pg = pg_norm(&theta, &g);
    }
    Ok(ThetaFit {
        theta,
        objective: f,
        iterations,
        projected_gradient_norm: pg,
        converged: pg < cfg.tol,
        objective_trace: trace,
    })
}

fn theta_update(
    dict: &KernelDictionary,
    outer: &DMatrix<f64>,
    spectral: Option<&DVector<f64>>,
    count: usize,
    weight: f64,
    start: &DVector<f64>,
    cfg: &ThetaSolverConfig,
) -> Result<ThetaFit> {
    if start.len() != dict.len() {
        return Err(Error::dim("kernel coefficients", dict.len(), start.len()));
    }
    let scale = if count == 0 { 0.0 } else { 1.0 / count as f64 };
    let spectral = match (cfg.use_shared_basis, spectral, dict.member_spectra()) {
        (true, Some(c), Some(spectra)) => Some((c * scale, spectra)),
        _ => None,
    };
    let second_moment = outer * scale;
    let empty = second_moment.amax() == 0.0;
    let obj = ThetaObjective {
        dict,
        second_moment,
        spectral,
        weight,
        empty,
    };
    theta_pgd(&obj, start, cfg)
}

fn check_weights(rho: f64, mu: f64) -> Result<f64> {
    if !(rho > 0.0) || !(mu > 0.0) || !rho.is_finite() || !mu.is_finite() {
        return Err(Error::InvalidParameter(format!("rho and mu must be finite and > 0, got {rho}, {mu}")));
    }
    Ok(rho / mu)
}

/// `argmin_{θ>=0} (1/t)Σ_τ ‖δ(τ)‖²_{K⁽ᵑ⁾(θ)} + (ρ_η/μ₁)‖θ‖²`, warm-started
/// from the current coefficients.
pub fn theta_eta_update(
    stats: &ThetaState,
    dict_eta: &KernelDictionary,
    rho_eta: f64,
    mu1: f64,
    cfg: &ThetaSolverConfig,
) -> Result<ThetaFit> {
    let w = check_weights(rho_eta, mu1)?;
    theta_update(
        dict_eta,
        &stats.eta_outer,
        stats.eta_spectral.as_ref(),
        stats.count,
        w,
        &stats.theta_eta,
        cfg,
    )
}

/// `argmin_{θ>=0} (1/t)Σ_τ ‖f̂⁽ᵛ⁾(τ|τ)‖²_{K⁽ᵛ⁾(θ)} + (ρ_ν/μ₂)‖θ‖²`.
pub fn theta_nu_update(
    stats: &ThetaState,
    dict_nu: &KernelDictionary,
    rho_nu: f64,
    mu2: f64,
    cfg: &ThetaSolverConfig,
) -> Result<ThetaFit> {
    let w = check_weights(rho_nu, mu2)?;
    theta_update(
        dict_nu,
        &stats.nu_outer,
        stats.nu_spectral.as_ref(),
        stats.count,
        w,
        &stats.theta_nu,
        cfg,
    )
}

/// Regularization weights of the multi-kernel filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MkrikfWeights {
    pub mu1: f64,
    pub mu2: f64,
    pub rho_nu: f64,
    pub rho_eta: f64,
}

/// Filter state and coefficients after one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct MkrikfSlot {
    pub state: KrigedState,
    /// Coefficients used by the filter at this slot.
    pub theta_nu_used: DVector<f64>,
    pub theta_eta_used: DVector<f64>,
    /// Coefficients after this slot's update.
    pub theta_nu: DVector<f64>,
    pub theta_eta: DVector<f64>,
}

/// Online multi-kernel kriged Kalman filter. Each slot runs KeKriKF with
/// `K⁽ᵛ⁾ = K(θ⁽ᵛ⁾)`, `K⁽ᵑ⁾ = K(θ⁽ᵑ⁾)`, records the new innovation and
/// fluctuation in running sums, and re-solves both θ subproblems. The
/// sampling set must be the same at every slot.
pub fn mkrikf_run(
    series: &TimeSeriesObservations,
    dict_nu: &KernelDictionary,
    dict_eta: &KernelDictionary,
    transition: &DMatrix<f64>,
    weights: &MkrikfWeights,
    cfg: &ThetaSolverConfig,
) -> Result<Vec<MkrikfSlot>> {
    let n = series.n();
    if dict_nu.n() != n || dict_eta.n() != n {
        return Err(Error::dim("dictionary size", n, dict_nu.n().max(dict_eta.n())));
    }
    let first = series.slot(0).mask();
    if series.slots().iter().any(|o| o.mask() != first) {
        return Err(Error::InvalidParameter(
            "the multi-kernel filter needs the same sampling set at every slot".into(),
        ));
    }
    if cfg.alternations == 0 {
        return Err(Error::InvalidParameter("alternations must be positive".into()));
    }
    let mut stats = ThetaState::new(dict_nu, dict_eta);
    let base = SpatioTemporalModel::new(
        transition.clone(),
        None,
        KernelMatrix::identity(n),
        KernelMatrix::identity(n),
        weights.mu1,
        weights.mu2,
    )?;
    let mut state = KrigedState::zero(n);
    let mut out = Vec::with_capacity(series.t_len());
    for obs in series.slots() {
        let mut recorded: Option<(DVector<f64>, DVector<f64>)> = None;
        let mut slot = None;
        for _ in 0..cfg.alternations {
            if let Some((d, v)) = recorded.take() {
                stats.retract(&d, &v, dict_nu, dict_eta);
            }
            let theta_nu_used = stats.theta_nu.clone();
            let theta_eta_used = stats.theta_eta.clone();
            let model = base.with_kernels(
                combine(dict_nu, theta_nu_used.as_slice())?,
                combine(dict_eta, theta_eta_used.as_slice())?,
            );
            let next = kekrikf_step(&state, &model, obs)?;
            let delta = &next.f_chi - transition * &state.f_chi;
            stats.record(&delta, &next.f_nu, dict_nu, dict_eta);
            recorded = Some((delta, next.f_nu.clone()));
            stats.theta_eta = theta_eta_update(&stats, dict_eta, weights.rho_eta, weights.mu1, cfg)?.theta;
            stats.theta_nu = theta_nu_update(&stats, dict_nu, weights.rho_nu, weights.mu2, cfg)?.theta;
            slot = Some(MkrikfSlot {
                state: next,
                theta_nu_used,
                theta_eta_used,
                theta_nu: stats.theta_nu.clone(),
                theta_eta: stats.theta_eta.clone(),
            });
        }
        let slot = slot.expect("at least one alternation");
        state = slot.state.clone();
        out.push(slot);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::static_estimators::SamplingMask;

    #[test]
    fn svarm_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.0, 0.7]);
        assert_eq!(svarm_to_varm(&DMatrix::zeros(2, 2), &a).unwrap(), a);
        let out = svarm_to_varm(&(DMatrix::identity(2, 2) * 0.5), &DMatrix::identity(2, 2)).unwrap();
        assert!((out - DMatrix::identity(2, 2) * 2.0).amax() < 1e-15);
        assert!(matches!(
            svarm_to_varm(&DMatrix::identity(2, 2), &a),
            Err(Error::SingularInstantaneous)
        ));
    }

    #[test]
    fn empty_slot_predicts_only() {
        let n = 3;
        let model = SpatioTemporalModel::new(
            DMatrix::identity(n, n) * 0.9,
            None,
            KernelMatrix::identity(n),
            KernelMatrix::identity(n),
            1.0,
            1.0,
        )
        .unwrap();
        let mut state = KrigedState::zero(n);
        state.f_chi = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let obs = Observation::new(SamplingMask::empty(), DVector::zeros(0)).unwrap();
        let next = kekrikf_step(&state, &model, &obs).unwrap();
        assert!((next.f_chi - DVector::from_vec(vec![0.9, 1.8, 2.7])).amax() < 1e-15);
        assert_eq!(next.f_nu.amax(), 0.0);
        assert!((next.m - DMatrix::identity(n, n)).amax() < 1e-15);
    }

    #[test]
    fn transition_spec_json() {
        let t: TransitionSpec = serde_json::from_str(r#"{"kind":"scaled_adjacency","alpha":0.5}"#).unwrap();
        assert_eq!(t, TransitionSpec::ScaledAdjacency { alpha: 0.5 });
    }

    #[test]
    fn zero_history_gives_zero_theta() {
        let dict = KernelDictionary::new(vec![KernelMatrix::identity(2), KernelMatrix::identity(2).scaled(2.0)]).unwrap();
        let stats = ThetaState::new(&dict, &dict);
        let fit = theta_eta_update(&stats, &dict, 0.1, 1.0, &ThetaSolverConfig::default()).unwrap();
        assert!(fit.theta.amax() < 1e-6);
    }
}
