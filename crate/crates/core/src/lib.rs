//! Kernel-based reconstruction of graph signals.

pub mod dynamic;
pub mod error;
pub mod graph;
pub mod harness;
pub mod io;
pub mod kernels;
pub mod kriged;
mod linalg;
pub mod mkl;
pub mod static_estimators;

pub use error::{Error, Result};
pub use graph::{
    build_extended_adjacency, eigendecompose, laplacian, smoothness, validate_graph, CouplingSpec,
    ExtendedGraph, Graph, SpectralDecomposition,
};
pub use kernels::{
    combine, covariance_kernel, laplacian_kernel, rkhs_norm_sq, space_time_kernel_from_inverse,
    spectral_map_eval, BlockTridiagonalMatrix, KernelDictionary, KernelMatrix, SpectralMapSpec,
};
pub use static_estimators::{
    bl_estimate, krr_fit, lmmse_estimate, semiparametric_fit_eps, semiparametric_fit_square, EpsFit,
    EpsSolverConfig, KrrFit, Observation, ParametricBasis, SamplingMask, SemiparametricFit,
};
pub use mkl::{
    kernel_combination_fit, rkhs_superposition_fit, CombinationFit, GroupCoefficients, MklSolverConfig,
    SuperpositionFit,
};
pub use dynamic::{
    batch_space_time_fit, instantaneous_estimate, instantaneous_series, kkf_parameters, kkf_run, online_krr_oracle, KkfFilter,
    KkfParameters, KkfState, TimeSeriesObservations,
};
pub use kriged::{
    kekrikf_run, kekrikf_step, mkrikf_run, svarm_to_varm, theta_eta_update, theta_nu_update, KrigedState,
    MkrikfSlot, MkrikfWeights, SpatioTemporalModel, ThetaFit, ThetaSolverConfig, ThetaState, TransitionSpec,
};
pub use harness::{
    estimate_series, estimate_static, generate_er_graph, generate_synthetic_signal, nmse, run_experiment, sample_and_corrupt, EstimatorSpec,
    EvaluationReport, ExperimentConfig,
};
