//! Reconstruction of time-evolving graph signals on extended graphs: the
//! per-slot instantaneous estimator, batch space-time KRR, the online KRR
//! oracle and the kernel Kalman filter (KKF).

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{BlockTridiagonalMatrix, KernelMatrix};
use crate::linalg;
use crate::static_estimators::{krr_fit, Observation};

/// Per-slot sampled observations `y(t) = Φ(t) f(t) + e(t)`, `t = 1..T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesObservations {
    n: usize,
    slots: Vec<Observation>,
}

impl TimeSeriesObservations {
    pub fn new(n: usize, slots: Vec<Observation>) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::InvalidParameter("a time series needs at least one slot".into()));
        }
        for obs in &slots {
            if let Some(&last) = obs.mask().indices().last() {
                if last >= n {
                    return Err(Error::dim("sampled vertex range", n, last + 1));
                }
            }
        }
        Ok(TimeSeriesObservations { n, slots })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t_len(&self) -> usize {
        self.slots.len()
    }

    /// Slot `t` (0-based).
    pub fn slot(&self, t: usize) -> &Observation {
        &self.slots[t]
    }

    pub fn slots(&self) -> &[Observation] {
        &self.slots
    }

    /// `σ_t² = μ S_t`.
    pub fn kkf_noise_variances(&self, mu: f64) -> Vec<f64> {
        self.slots.iter().map(|o| mu * o.len() as f64).collect()
    }

    /// Global indices `t·n + i` and values of every sample in slots `< upto`,
    /// plus the per-sample weight `S_t`.
    fn stacked(&self, upto: usize) -> (Vec<usize>, DVector<f64>, Vec<f64>) {
        let mut idx = Vec::new();
        let mut vals = Vec::new();
        let mut weights = Vec::new();
        for (t, obs) in self.slots.iter().take(upto).enumerate() {
            let st = obs.len() as f64;
            for (&i, &v) in obs.mask().indices().iter().zip(obs.y().iter()) {
                idx.push(t * self.n + i);
                vals.push(v);
                weights.push(st);
            }
        }
        (idx, DVector::from_vec(vals), weights)
    }
}

/// Splits a length-`nT` vector into `T` blocks of length `n`.
pub fn split_blocks(v: &DVector<f64>, n: usize) -> Vec<DVector<f64>> {
    v.as_slice().chunks(n).map(DVector::from_column_slice).collect()
}

/// Kernel ridge regression at a single slot. `EmptySlot(0)` when the slot
/// has no samples; [`instantaneous_series`] reports the actual slot.
pub fn instantaneous_estimate(k_t: &KernelMatrix, obs_t: &Observation, mu: f64) -> Result<DVector<f64>> {
    if obs_t.is_empty() {
        return Err(Error::EmptySlot(0));
    }
    Ok(krr_fit(k_t, obs_t, mu)?.f_hat)
}

/// Instantaneous estimates for every slot with a time-invariant kernel.
pub fn instantaneous_series(k: &KernelMatrix, series: &TimeSeriesObservations, mu: f64) -> Vec<Result<DVector<f64>>> {
    series
        .slots
        .iter()
        .enumerate()
        .map(|(t, obs)| instantaneous_estimate(k, obs, mu).map_err(|e| match e {
            Error::EmptySlot(_) => Error::EmptySlot(t),
            other => other,
        }))
        .collect()
}

fn check_ext(k_ext: &KernelMatrix, series: &TimeSeriesObservations) -> Result<()> {
    let expected = series.n * series.t_len();
    if k_ext.n() != expected {
        return Err(Error::dim("space-time kernel size", expected, k_ext.n()));
    }
    Ok(())
}

fn space_time_solve(k_ext: &KernelMatrix, series: &TimeSeriesObservations, upto: usize, mu: f64) -> Result<DVector<f64>> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidParameter(format!("mu must be finite and > 0, got {mu}")));
    }
    check_ext(k_ext, series)?;
    let (idx, y, weights) = series.stacked(upto);
    if idx.is_empty() {
        return Ok(DVector::zeros(k_ext.n()));
    }
    let mut system = k_ext.sampled(&idx);
    for (i, w) in weights.iter().enumerate() {
        system[(i, i)] += mu * w;
    }
    let coeffs = linalg::spd_solve_vec(&system, &y)?;
    Ok(k_ext.sampled_columns(&idx) * coeffs)
}

/// `f̂ = K̃Φ̃ᵀ(Φ̃K̃Φ̃ᵀ + μΣ̄)⁻¹ỹ` with `Σ̄ = bdiag(S_1 I, …, S_T I)`.
pub fn batch_space_time_fit(k_ext: &KernelMatrix, series: &TimeSeriesObservations, mu: f64) -> Result<DVector<f64>> {
    space_time_solve(k_ext, series, series.t_len(), mu)
}

/// Online KRR using only the slots `1..=t`: returns `f̂(τ|t)` for every
/// `τ = 1..T`. Cost grows with `t` (cubic in the number of samples so far);
/// intended as a reference for the filter.
pub fn online_krr_oracle(
    k_ext: &KernelMatrix,
    series: &TimeSeriesObservations,
    t: usize,
    mu: f64,
) -> Result<Vec<DVector<f64>>> {
    if t == 0 || t > series.t_len() {
        return Err(Error::InvalidParameter(format!(
            "slot count must lie in 1..={}, got {t}",
            series.t_len()
        )));
    }
    Ok(split_blocks(&space_time_solve(k_ext, series, t, mu)?, series.n))
}

/// Transition matrices `P(2..T)` and state-noise kernels `Q(1..T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KkfParameters {
    n: usize,
    transitions: Vec<DMatrix<f64>>,
    noise: Vec<DMatrix<f64>>,
}

impl KkfParameters {
    pub fn new(n: usize, transitions: Vec<DMatrix<f64>>, noise: Vec<DMatrix<f64>>) -> Result<Self> {
        if noise.is_empty() || transitions.len() + 1 != noise.len() {
            return Err(Error::dim("transition count", noise.len().saturating_sub(1), transitions.len()));
        }
        for m in transitions.iter().chain(&noise) {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::dim("parameter block size", n, m.nrows().max(m.ncols())));
            }
        }
        for q in &noise {
            if linalg::max_asymmetry(q) > 1e-10 * q.amax().max(1.0) {
                return Err(Error::NotSymmetric);
            }
        }
        Ok(KkfParameters { n, transitions, noise })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t_len(&self) -> usize {
        self.noise.len()
    }

    /// `P(t)` for 1-based `t >= 2`; index `t − 2`.
    pub fn transitions(&self) -> &[DMatrix<f64>] {
        &self.transitions
    }

    /// `Q(t)`; index `t − 1`.
    pub fn noise(&self) -> &[DMatrix<f64>] {
        &self.noise
    }

    /// `P(t)` at 0-based slot `t` (zero for the first slot).
    fn transition_at(&self, t: usize) -> Option<&DMatrix<f64>> {
        if t == 0 {
            None
        } else {
            Some(&self.transitions[t - 1])
        }
    }
}

fn strict_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let ch = Cholesky::new(linalg::symmetrize(m)).ok_or(Error::NotPositiveDefinite(what))?;
    Ok(linalg::symmetrize(&ch.inverse()))
}

/// Backward recursion turning the blocks of `K̃⁻¹` into KKF parameters:
/// `Q(T)⁻¹ = D(T)`, then for `t = T..2`: `P(t) = −Q(t)E(t)`,
/// `Q(t−1)⁻¹ = D(t−1) − P(t)ᵀQ(t)⁻¹P(t)`.
pub fn kkf_parameters(inv: &BlockTridiagonalMatrix) -> Result<KkfParameters> {
    let t_len = inv.t_len();
    let d = inv.diag_blocks();
    let e = inv.off_blocks();
    let mut noise = vec![DMatrix::zeros(0, 0); t_len];
    let mut transitions = vec![DMatrix::zeros(0, 0); t_len - 1];
    let mut q_inv = linalg::symmetrize(&d[t_len - 1]);
    noise[t_len - 1] = strict_inverse(&q_inv, "state-noise kernel Q(T)")?;
    for t in (1..t_len).rev() {
        let p = -(&noise[t] * &e[t - 1]);
        q_inv = linalg::symmetrize(&(&d[t - 1] - p.tr_mul(&q_inv) * &p));
        noise[t - 1] = strict_inverse(&q_inv, "state-noise kernel Q(t)")?;
        transitions[t - 1] = p;
    }
    KkfParameters::new(inv.n(), transitions, noise)
}

/// Filter output at one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct KkfState {
    /// 0-based slot index.
    pub t: usize,
    pub f_hat: DVector<f64>,
    pub m: DMatrix<f64>,
}

/// Step-by-step kernel Kalman filter; every step costs the same regardless
/// of how many slots came before.
#[derive(Debug, Clone)]
pub struct KkfFilter<'a> {
    params: &'a KkfParameters,
    f_hat: DVector<f64>,
    m: DMatrix<f64>,
    t: usize,
}

impl<'a> KkfFilter<'a> {
    pub fn new(params: &'a KkfParameters) -> Self {
        let n = params.n;
        KkfFilter {
            params,
            f_hat: DVector::zeros(n),
            m: DMatrix::zeros(n, n),
            t: 0,
        }
    }

    /// Predict with `P(t)`, `Q(t)`, then correct with the slot's samples.
    pub fn step(&mut self, obs: &Observation, sigma2: f64) -> Result<KkfState> {
        let t = self.t;
        if t >= self.params.t_len() {
            return Err(Error::InvalidParameter(format!(
                "filter parameters cover {} slots",
                self.params.t_len()
            )));
        }
        let n = self.params.n;
        if let Some(&last) = obs.mask().indices().last() {
            if last >= n {
                return Err(Error::dim("sampled vertex range", n, last + 1));
            }
        }
        let q = &self.params.noise[t];
        let (mut f_pred, mut m_pred) = match self.params.transition_at(t) {
            Some(p) => (p * &self.f_hat, p * &self.m * p.transpose() + q),
            None => (DVector::zeros(n), q.clone()),
        };
        if !obs.is_empty() {
            if !(sigma2 > 0.0) || !sigma2.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "noise variance at slot {t} must be > 0, got {sigma2}"
                )));
            }
            let idx = obs.mask().indices();
            let m_phi_t = m_pred.select_columns(idx);
            let mut innov = m_phi_t.select_rows(idx);
            for i in 0..innov.nrows() {
                innov[(i, i)] += sigma2;
            }
            let chol = linalg::spd_factor(&innov).map_err(|_| Error::SingularInnovation(t))?;
            // Gᵀ = innov⁻¹ Φ M(t|t−1)
            let gain_t = chol.solve(&m_phi_t.transpose());
            let resid = obs.y() - obs.mask().sample(&f_pred);
            f_pred += gain_t.tr_mul(&resid);
            m_pred -= gain_t.tr_mul(&m_phi_t.transpose());
        }
        self.f_hat = f_pred;
        self.m = linalg::symmetrize(&m_pred);
        self.t += 1;
        Ok(KkfState {
            t,
            f_hat: self.f_hat.clone(),
            m: self.m.clone(),
        })
    }
}

/// Runs the filter over every slot. `sigma2[t]` is the noise variance at
/// slot `t` (ignored for empty slots); use
/// [`TimeSeriesObservations::kkf_noise_variances`] for `σ_t² = μ S_t`.
pub fn kkf_run(params: &KkfParameters, series: &TimeSeriesObservations, sigma2: &[f64]) -> Result<Vec<KkfState>> {
    if series.n != params.n {
        return Err(Error::dim("vertex count", params.n, series.n));
    }
    if series.t_len() != params.t_len() {
        return Err(Error::dim("slot count", params.t_len(), series.t_len()));
    }
    if sigma2.len() != series.t_len() {
        return Err(Error::dim("noise variance count", series.t_len(), sigma2.len()));
    }
    let mut filter = KkfFilter::new(params);
    series
        .slots
        .iter()
        .zip(sigma2)
        .map(|(obs, &s2)| filter.step(obs, s2))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::static_estimators::SamplingMask;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_recursion() {
        let c = 0.5;
        let inv = BlockTridiagonalMatrix::new(1, vec![scalar(1.0), scalar(1.0)], vec![scalar(-c)]).unwrap();
        let p = kkf_parameters(&inv).unwrap();
        assert!((p.transitions()[0][(0, 0)] - c).abs() < 1e-15);
        assert!((p.noise()[1][(0, 0)] - 1.0).abs() < 1e-15);
        assert!((p.noise()[0][(0, 0)] - 1.0 / (1.0 - c * c)).abs() < 1e-14);
    }

    #[test]
    fn decoupled_slots() {
        let d = vec![DMatrix::identity(2, 2) * 2.0, DMatrix::identity(2, 2) * 4.0];
        let inv = BlockTridiagonalMatrix::new(2, d, vec![DMatrix::zeros(2, 2)]).unwrap();
        let p = kkf_parameters(&inv).unwrap();
        assert_eq!(p.transitions()[0].amax(), 0.0);
        assert!((&p.noise()[0] - DMatrix::identity(2, 2) * 0.5).amax() < 1e-15);
        assert!((&p.noise()[1] - DMatrix::identity(2, 2) * 0.25).amax() < 1e-15);
    }

    #[test]
    fn scalar_kalman_step() {
        let params = KkfParameters::new(1, vec![], vec![scalar(1.0)]).unwrap();
        let obs = Observation::new(SamplingMask::new(vec![0], 1).unwrap(), DVector::from_vec(vec![2.0])).unwrap();
        let series = TimeSeriesObservations::new(1, vec![obs]).unwrap();
        let states = kkf_run(&params, &series, &[1.0]).unwrap();
        assert!((states[0].f_hat[0] - 1.0).abs() < 1e-15);
        assert!((states[0].m[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unobserved_series_stays_zero() {
        let inv = BlockTridiagonalMatrix::new(
            2,
            vec![DMatrix::identity(2, 2) * 2.0; 3],
            vec![DMatrix::identity(2, 2) * -0.5; 2],
        )
        .unwrap();
        let params = kkf_parameters(&inv).unwrap();
        let empty = || Observation::new(SamplingMask::empty(), DVector::zeros(0)).unwrap();
        let series = TimeSeriesObservations::new(2, vec![empty(), empty(), empty()]).unwrap();
        let states = kkf_run(&params, &series, &series.kkf_noise_variances(0.1)).unwrap();
        assert!(states.iter().all(|s| s.f_hat.amax() == 0.0));
    }

    #[test]
    fn empty_slot_errors() {
        let obs = Observation::new(SamplingMask::empty(), DVector::zeros(0)).unwrap();
        assert!(matches!(
            instantaneous_estimate(&KernelMatrix::identity(3), &obs, 0.1),
            Err(Error::EmptySlot(_))
        ));
        let series = TimeSeriesObservations::new(3, vec![obs.clone(), obs]).unwrap();
        let out = instantaneous_series(&KernelMatrix::identity(3), &series, 0.1);
        assert!(matches!(out[1], Err(Error::EmptySlot(1))));
    }

    #[test]
    fn identity_space_time_kernel_shrinks_per_slot() {
        let n = 3;
        let mu = 0.2;
        let mk = |vals: &[f64]| Observation::new(SamplingMask::full(n), DVector::from_row_slice(vals)).unwrap();
        let series = TimeSeriesObservations::new(n, vec![mk(&[1.0, 2.0, 3.0]), mk(&[-1.0, 0.5, 4.0])]).unwrap();
        let f = batch_space_time_fit(&KernelMatrix::identity(2 * n), &series, mu).unwrap();
        let blocks = split_blocks(&f, n);
        for (b, obs) in blocks.iter().zip(series.slots()) {
            assert!((b - obs.y() / (1.0 + mu * n as f64)).amax() < 1e-14);
        }
    }
}
