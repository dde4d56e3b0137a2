//! Deterministic fixtures shared by the benchmarks.

use graphkernel::harness::generate_synthetic_signal;
use graphkernel::{
    build_extended_adjacency, eigendecompose, generate_er_graph, kkf_parameters, laplacian_kernel, sample_and_corrupt,
    CouplingSpec, Graph, KernelDictionary, KernelMatrix, KkfParameters, Observation, ParametricBasis, SpectralDecomposition,
    SpectralMapSpec, TimeSeriesObservations,
};

pub const DIFFUSION: SpectralMapSpec = SpectralMapSpec::Diffusion { sigma2: 1.0 };

pub struct StaticFixture {
    pub graph: Graph,
    pub decomp: SpectralDecomposition,
    pub kernel: KernelMatrix,
    pub obs: Observation,
    pub basis: ParametricBasis,
    pub dictionary: KernelDictionary,
}

/// ER graph with `n` vertices, a clustered synthetic signal and `s` noisy
/// samples at 10 dB.
pub fn static_fixture(n: usize, s: usize, seed: u64) -> StaticFixture {
    let graph = generate_er_graph(n, 0.3, seed).unwrap();
    let decomp = eigendecompose(&graph.laplacian()).unwrap();
    let signal = generate_synthetic_signal(&decomp, 5, 1, seed + 1).unwrap();
    let obs = sample_and_corrupt(&signal.signal, s, Some(10.0), None, seed + 2).unwrap();
    let kernel = laplacian_kernel(&decomp, &DIFFUSION).unwrap();
    let basis = ParametricBasis::new(signal.indicator_basis()).unwrap();
    let specs: Vec<SpectralMapSpec> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&sigma2| SpectralMapSpec::Diffusion { sigma2 })
        .collect();
    let dictionary = KernelDictionary::laplacian(&decomp, &specs).unwrap();
    StaticFixture {
        graph,
        decomp,
        kernel,
        obs,
        basis,
        dictionary,
    }
}

pub struct SeriesFixture {
    pub graph: Graph,
    pub params: KkfParameters,
    pub series: TimeSeriesObservations,
}

/// `t_len` slots of `s` samples each over one ER graph replicated in time.
pub fn series_fixture(n: usize, t_len: usize, s: usize, seed: u64) -> SeriesFixture {
    let graph = generate_er_graph(n, 0.3, seed).unwrap();
    let decomp = eigendecompose(&graph.laplacian()).unwrap();
    let signal = generate_synthetic_signal(&decomp, 5, 0, seed + 1).unwrap().signal;
    let slots = (0..t_len as u64)
        .map(|t| sample_and_corrupt(&signal, s, Some(10.0), None, seed + 2 + t).unwrap())
        .collect();
    let series = TimeSeriesObservations::new(n, slots).unwrap();
    let inv = build_extended_adjacency(&vec![graph.clone(); t_len], &CouplingSpec::Diagonal(1.0))
        .unwrap()
        .regularized_laplacian_inverse(1.0)
        .unwrap();
    let params = kkf_parameters(&inv).unwrap();
    SeriesFixture { graph, params, series }
}
