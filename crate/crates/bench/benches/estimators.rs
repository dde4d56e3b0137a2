use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use graphkernel::harness::generate_synthetic_signal;
use graphkernel::kriged::{KrigedState, ThetaSolverConfig};
use graphkernel::{
    eigendecompose, kekrikf_step, kkf_run, krr_fit, mkrikf_run, rkhs_superposition_fit, semiparametric_fit_eps,
    semiparametric_fit_square, EpsSolverConfig, KernelDictionary, KkfFilter, MklSolverConfig, MkrikfWeights,
    SpatioTemporalModel, SpectralMapSpec, TimeSeriesObservations,
};
use graphkernel_bench::{series_fixture, static_fixture, DIFFUSION};
use nalgebra::DMatrix;

fn static_estimators(c: &mut Criterion) {
    let mut group = c.benchmark_group("static");
    for n in [50, 200] {
        let f = static_fixture(n, n / 4, 11);
        group.bench_with_input(BenchmarkId::new("eigendecompose", n), &f, |b, f| {
            b.iter(|| eigendecompose(&f.graph.laplacian()).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("krr_fit", n), &f, |b, f| {
            b.iter(|| krr_fit(&f.kernel, &f.obs, 1e-2).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sp_square", n), &f, |b, f| {
            b.iter(|| semiparametric_fit_square(&f.kernel, &f.basis, &f.obs, 1e-2).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sp_eps", n), &f, |b, f| {
            b.iter(|| semiparametric_fit_eps(&f.kernel, &f.basis, &f.obs, 1e-2, 1e-3, &EpsSolverConfig::default()).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("mkl_admm", n), &f, |b, f| {
            b.iter(|| rkhs_superposition_fit(&f.dictionary, &f.obs, 1e-2, &MklSolverConfig::default()).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("synthetic_signal", n), &f, |b, f| {
            b.iter(|| generate_synthetic_signal(&f.decomp, 10, 6, 5).unwrap())
        });
    }
    group.finish();
}

fn filters(c: &mut Criterion) {
    let mut group = c.benchmark_group("dynamic");
    for n in [20, 60] {
        let f = series_fixture(n, 20, n / 3, 21);
        let sigma2 = f.series.kkf_noise_variances(1e-2);
        group.bench_with_input(BenchmarkId::new("kkf_run_20_slots", n), &f, |b, f| {
            b.iter(|| kkf_run(&f.params, &f.series, &sigma2).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("kkf_step", n), &f, |b, f| {
            b.iter(|| {
                let mut filter = KkfFilter::new(&f.params);
                filter.step(f.series.slot(0), sigma2[0]).unwrap()
            })
        });

        let decomp = eigendecompose(&f.graph.laplacian()).unwrap();
        let k = graphkernel::laplacian_kernel(&decomp, &DIFFUSION).unwrap();
        let model = SpatioTemporalModel::new(DMatrix::identity(n, n) * 0.9, None, k.clone(), k, 1.0, 1.0).unwrap();
        group.bench_with_input(BenchmarkId::new("kekrikf_step", n), &f, |b, f| {
            b.iter(|| kekrikf_step(&KrigedState::zero(n), &model, f.series.slot(0)).unwrap())
        });

        let specs = [0.5, 1.0, 2.0].map(|sigma2| SpectralMapSpec::Diffusion { sigma2 });
        let dict = KernelDictionary::laplacian(&decomp, &specs).unwrap();
        // mkrikf needs the same sampling set at every slot.
        let fixed_series = TimeSeriesObservations::new(n, vec![f.series.slot(0).clone(); 20]).unwrap();
        let weights = MkrikfWeights {
            mu1: 1.0,
            mu2: 1.0,
            rho_nu: 0.1,
            rho_eta: 0.1,
        };
        group.bench_function(BenchmarkId::new("mkrikf_run_20_slots", n), |b| {
            b.iter(|| {
                mkrikf_run(&fixed_series, &dict, &dict, &(DMatrix::identity(n, n) * 0.9), &weights, &ThetaSolverConfig::default())
                    .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, static_estimators, filters);
criterion_main!(benches);
