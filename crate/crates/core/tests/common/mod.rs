//! Random instance generators and dense reference solvers shared by the
//! integration tests.

#![allow(dead_code)]

use graphkernel::{
    BlockTridiagonalMatrix, Graph, KernelMatrix, Observation, SamplingMask, TimeSeriesObservations,
};
use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `GGᵀ/n + shift·I`.
pub fn random_spd<R: Rng>(n: usize, shift: f64, rng: &mut R) -> DMatrix<f64> {
    let g = gaussian_matrix(n, n, rng);
    let mut a = &g * g.transpose() / n as f64;
    for i in 0..n {
        a[(i, i)] += shift;
    }
    (&a + a.transpose()) * 0.5
}

pub fn random_kernel<R: Rng>(n: usize, rng: &mut R) -> KernelMatrix {
    KernelMatrix::new(random_spd(n, 0.1, rng)).unwrap()
}

pub fn random_graph<R: Rng>(n: usize, p: f64, rng: &mut R) -> Graph {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                let w = rng.random_range(0.1..2.0);
                a[(i, j)] = w;
                a[(j, i)] = w;
            }
        }
    }
    graphkernel::validate_graph(a).unwrap()
}

pub fn random_mask<R: Rng>(n: usize, s: usize, rng: &mut R) -> SamplingMask {
    let mut idx = index::sample(rng, n, s).into_vec();
    idx.sort_unstable();
    SamplingMask::new(idx, n).unwrap()
}

pub fn random_observation<R: Rng>(n: usize, s: usize, rng: &mut R) -> Observation {
    let mask = random_mask(n, s, rng);
    let y = gaussian_vector(s, rng);
    Observation::new(mask, y).unwrap()
}

/// Series with `S_t` drawn uniformly from `0..=max_s` (capped at `n`).
pub fn random_series<R: Rng>(n: usize, t_len: usize, max_s: usize, rng: &mut R) -> TimeSeriesObservations {
    let slots = (0..t_len)
        .map(|_| {
            let s = rng.random_range(0..=max_s.min(n));
            random_observation(n, s, rng)
        })
        .collect();
    TimeSeriesObservations::new(n, slots).unwrap()
}

/// Block tridiagonal PD matrix: diagonal blocks dominate the `n × n`
/// off-diagonal blocks with entries in `[-1, 1]`.
pub fn random_block_tridiagonal<R: Rng>(n: usize, t_len: usize, rng: &mut R) -> BlockTridiagonalMatrix {
    let diag = (0..t_len).map(|_| random_spd(n, 2.0 * n as f64 + 0.5, rng)).collect();
    let off = (1..t_len)
        .map(|_| DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)))
        .collect();
    BlockTridiagonalMatrix::new(n, diag, off).unwrap()
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / (1.0 + b.norm())
}

/// Dense minimizer of the trend/fluctuation criterion over slots `1..=t`:
/// `Σ (1/S_τ)‖y(τ) − Φ(τ)(χ(τ)+ν(τ))‖² + μ₁Σ‖χ(τ) − Aχ(τ−1)‖²_{K_η}
///  + μ₂Σ‖ν(τ)‖²_{K_ν}` with `χ(0) = 0` and `‖x‖²_K = xᵀK⁻¹x`.
/// Returns `(χ(t), ν(t))`.
pub fn kriged_batch_oracle(
    series: &TimeSeriesObservations,
    t: usize,
    a: &DMatrix<f64>,
    k_nu: &DMatrix<f64>,
    k_eta: &DMatrix<f64>,
    mu1: f64,
    mu2: f64,
) -> (DVector<f64>, DVector<f64>) {
    let n = series.n();
    let dim = 2 * n * t;
    let chi = |tau: usize| tau * n;
    let nu = |tau: usize| n * t + tau * n;
    let k_eta_inv = k_eta.clone().try_inverse().unwrap();
    let k_nu_inv = k_nu.clone().try_inverse().unwrap();
    let mut h = DMatrix::zeros(dim, dim);
    let mut g = DVector::zeros(dim);
    for tau in 0..t {
        let obs = series.slot(tau);
        if !obs.is_empty() {
            let s = obs.len() as f64;
            let mut c = DMatrix::zeros(obs.len(), dim);
            for (r, &i) in obs.mask().indices().iter().enumerate() {
                c[(r, chi(tau) + i)] = 1.0;
                c[(r, nu(tau) + i)] = 1.0;
            }
            h += c.transpose() * &c / s;
            g += c.transpose() * obs.y() / s;
        }
        let mut d = DMatrix::zeros(n, dim);
        for i in 0..n {
            d[(i, chi(tau) + i)] = 1.0;
        }
        if tau > 0 {
            for i in 0..n {
                for j in 0..n {
                    d[(i, chi(tau - 1) + j)] -= a[(i, j)];
                }
            }
        }
        h += d.transpose() * &k_eta_inv * &d * mu1;
        let mut e = DMatrix::zeros(n, dim);
        for i in 0..n {
            e[(i, nu(tau) + i)] = 1.0;
        }
        h += e.transpose() * &k_nu_inv * &e * mu2;
    }
    let x = h.lu().solve(&g).unwrap();
    (
        x.rows(chi(t - 1), n).into_owned(),
        x.rows(nu(t - 1), n).into_owned(),
    )
}

/// `(1/S)‖y − Σ R_m z_m‖² + μΣ‖z_m‖` minimized by accelerated proximal
/// gradient with adaptive restart, run to stagnation.
pub fn group_lasso_oracle(roots: &[DMatrix<f64>], y: &DVector<f64>, mu: f64) -> (Vec<DVector<f64>>, f64) {
    let s = y.len();
    let m = roots.len();
    let big_r = DMatrix::from_fn(s, s * m, |i, j| roots[j / s][(i, j % s)]);
    let lip = 2.0 / s as f64 * (&big_r * big_r.transpose()).symmetric_eigenvalues().max();
    let step = 1.0 / lip;
    let objective = |z: &DVector<f64>| {
        let r = y - &big_r * z;
        r.norm_squared() / s as f64 + mu * (0..m).map(|k| z.rows(k * s, s).norm()).sum::<f64>()
    };
    let prox = |v: DVector<f64>| {
        let mut out = v;
        for k in 0..m {
            let mut blk = out.rows_mut(k * s, s);
            let nrm = blk.norm();
            let scale = if nrm > step * mu { 1.0 - step * mu / nrm } else { 0.0 };
            blk *= scale;
        }
        out
    };
    let mut x = DVector::zeros(s * m);
    let mut z = x.clone();
    let mut tk = 1.0f64;
    let mut fx = objective(&x);
    for _ in 0..400_000 {
        let grad = big_r.tr_mul(&(&big_r * &z - y)) * (2.0 / s as f64);
        let next = prox(&z - grad * step);
        let f_next = objective(&next);
        let t_next = (1.0 + (1.0 + 4.0 * tk * tk).sqrt()) / 2.0;
        if f_next > fx {
            // Adaptive restart.
            z = x.clone();
            tk = 1.0;
            continue;
        }
        z = &next + (&next - &x) * ((tk - 1.0) / t_next);
        let moved = (&next - &x).norm();
        x = next;
        fx = f_next;
        tk = t_next;
        if moved < 1e-15 * (1.0 + x.norm()) {
            break;
        }
    }
    let blocks = (0..m).map(|k| x.rows(k * s, s).into_owned()).collect();
    (blocks, fx)
}
