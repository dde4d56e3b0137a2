mod common;

use std::time::Instant;

use common::*;
use graphkernel::dynamic::split_blocks;
use graphkernel::{
    batch_space_time_fit, build_extended_adjacency, instantaneous_series, kkf_parameters, kkf_run, krr_fit,
    online_krr_oracle, space_time_kernel_from_inverse, CouplingSpec, Error, KkfFilter, KernelMatrix,
    TimeSeriesObservations,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Online KRR from the assembled inverse kernel:
/// `(Σ_{τ<=t} C_τᵀC_τ/S_τ + μK̃⁻¹) f̃ = Σ_{τ<=t} C_τᵀy(τ)/S_τ`.
fn online_from_inverse(inv: &DMatrix<f64>, series: &TimeSeriesObservations, t: usize, mu: f64) -> Vec<DVector<f64>> {
    let n = series.n();
    let dim = inv.nrows();
    let mut h = inv * mu;
    let mut g = DVector::zeros(dim);
    for tau in 0..t {
        let obs = series.slot(tau);
        let s = obs.len() as f64;
        for (&i, &y) in obs.mask().indices().iter().zip(obs.y().iter()) {
            h[(tau * n + i, tau * n + i)] += 1.0 / s;
            g[tau * n + i] += y / s;
        }
    }
    split_blocks(&h.lu().solve(&g).unwrap(), n)
}

#[test]
fn kkf_reproduces_online_krr() {
    let mut r = rng(1);
    for case in 0..30 {
        let n = [4, 8][case % 2];
        let t_len = [10, 30][(case / 2) % 2];
        let inv = random_block_tridiagonal(n, t_len, &mut r);
        let k = space_time_kernel_from_inverse(&inv).unwrap();
        let series = random_series(n, t_len, 5, &mut r);
        let mu = 10f64.powf(r.random_range(-3.0..0.0));
        let params = kkf_parameters(&inv).unwrap();
        let states = kkf_run(&params, &series, &series.kkf_noise_variances(mu)).unwrap();
        let dense = inv.assemble();
        for t in 1..=t_len {
            let oracle = online_krr_oracle(&k, &series, t, mu).unwrap();
            let est = &states[t - 1];
            assert!(rel_err(&est.f_hat, &oracle[t - 1]) < 1e-6, "case {case} t {t}");
            if t % 7 == 0 || t == t_len {
                let second = online_from_inverse(&dense, &series, t, mu);
                assert!(rel_err(&oracle[t - 1], &second[t - 1]) < 1e-8, "case {case} t {t}");
            }
            let m = &est.m;
            assert!((m - m.transpose()).amax() == 0.0);
            assert!(m.clone().symmetric_eigenvalues().min() > -1e-9 * m.amax().max(1.0));
        }
    }
}

#[test]
fn kkf_last_slot_equals_batch() {
    let mut r = rng(2);
    for _ in 0..5 {
        let n = 6;
        let t_len = 12;
        let graphs: Vec<_> = (0..t_len).map(|_| random_graph(n, 0.5, &mut r)).collect();
        let ext = build_extended_adjacency(&graphs, &CouplingSpec::Diagonal(0.4)).unwrap();
        let inv = ext.regularized_laplacian_inverse(0.8).unwrap();
        let k = space_time_kernel_from_inverse(&inv).unwrap();
        let series = random_series(n, t_len, 4, &mut r);
        let mu = 0.05;
        let batch = split_blocks(&batch_space_time_fit(&k, &series, mu).unwrap(), n);
        let params = kkf_parameters(&inv).unwrap();
        let states = kkf_run(&params, &series, &series.kkf_noise_variances(mu)).unwrap();
        assert!(rel_err(&states[t_len - 1].f_hat, &batch[t_len - 1]) < 1e-8);
    }
}

#[test]
fn single_slot_batch_is_krr() {
    let mut r = rng(3);
    for _ in 0..20 {
        let n = r.random_range(2..=12);
        let k = random_kernel(n, &mut r);
        let obs = random_observation(n, r.random_range(1..=n), &mut r);
        let series = TimeSeriesObservations::new(n, vec![obs.clone()]).unwrap();
        let batch = batch_space_time_fit(&k, &series, 0.1).unwrap();
        let krr = krr_fit(&k, &obs, 0.1).unwrap().f_hat;
        assert!((batch - krr).amax() < 1e-12);
    }
}

#[test]
fn instantaneous_series_reports_empty_slot_index() {
    let mut r = rng(4);
    let n = 5;
    let slots = vec![random_observation(n, 3, &mut r), random_observation(n, 0, &mut r), random_observation(n, 2, &mut r)];
    let series = TimeSeriesObservations::new(n, slots).unwrap();
    let out = instantaneous_series(&KernelMatrix::identity(n), &series, 0.1);
    assert!(out[0].is_ok() && out[2].is_ok());
    assert!(matches!(out[1], Err(Error::EmptySlot(1))));
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn kkf_step_cost_is_flat_in_t() {
    let mut r = rng(5);
    let (n, t_len) = (8, 600);
    let inv = random_block_tridiagonal(n, t_len, &mut r);
    let params = kkf_parameters(&inv).unwrap();
    let series = random_series(n, t_len, 5, &mut r);
    let sigma2 = series.kkf_noise_variances(0.1);
    let mut filter = KkfFilter::new(&params);
    let mut times = Vec::with_capacity(t_len);
    for (obs, &s2) in series.slots().iter().zip(&sigma2) {
        let start = Instant::now();
        filter.step(obs, s2).unwrap();
        times.push(start.elapsed().as_secs_f64());
    }
    let early = median(times[20..170].to_vec());
    let late = median(times[t_len - 150..].to_vec());
    assert!(late < 3.0 * early + 2e-6, "early {early:e}, late {late:e}");
}
