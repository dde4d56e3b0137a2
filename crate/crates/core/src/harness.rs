//! Synthetic experiments and Monte Carlo evaluation: random graphs and
//! signals, sampling with noise and outliers, NMSE scoring, and the
//! config-driven experiment runner.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamic::{batch_space_time_fit, instantaneous_series, kkf_parameters, kkf_run, TimeSeriesObservations};
use crate::error::{Error, Result};
use crate::graph::{build_extended_adjacency, eigendecompose, validate_graph, CouplingSpec, Graph, SpectralDecomposition};
use crate::kernels::{laplacian_kernel, space_time_kernel_from_inverse, KernelDictionary, SpectralMapSpec};
use crate::kriged::{kekrikf_run, mkrikf_run, MkrikfWeights, SpatioTemporalModel, ThetaSolverConfig, TransitionSpec};
use crate::mkl::{kernel_combination_fit, rkhs_superposition_fit, MklSolverConfig};
use crate::static_estimators::{
    bl_estimate, krr_fit, lmmse_estimate, semiparametric_fit_eps, semiparametric_fit_square, EpsSolverConfig,
    Observation, ParametricBasis, SamplingMask,
};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "GRAPHKERNEL_THREADS";

/// Restarts of k-means in spectral clustering.
pub const KMEANS_RESTARTS: usize = 100;

fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for trial `trial` of a run with master seed `seed`; independent
/// of scheduling order.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = rng_from(seed);
    rng.set_stream(trial);
    rng
}

/// Erdős–Rényi graph: every unordered pair is an edge of weight 1 with
/// probability `p`.
pub fn generate_er_graph(n: usize, p: f64, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("edge probability must lie in [0, 1], got {p}")));
    }
    let mut rng = rng_from(seed);
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                a[(i, j)] = 1.0;
                a[(j, i)] = 1.0;
            }
        }
    }
    validate_graph(a)
}

/// k-means (Lloyd) on the rows of `points` with `restarts` random
/// initializations; keeps the lowest-inertia run without empty clusters.
pub fn kmeans<R: Rng>(points: &DMatrix<f64>, k: usize, restarts: usize, rng: &mut R) -> Result<Vec<usize>> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("cluster count must lie in 1..={n}, got {k}")));
    }
    let d = points.ncols();
    let rows: Vec<f64> = points.transpose().as_slice().to_vec();
    let row = |i: usize| &rows[i * d..(i + 1) * d];
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut centroids = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for _ in 0..restarts {
        for (c, i) in index::sample(rng, n, k).into_iter().enumerate() {
            centroids[c * d..(c + 1) * d].copy_from_slice(row(i));
        }
        let mut labels = vec![usize::MAX; n];
        let mut valid = true;
        for _ in 0..300 {
            let mut changed = false;
            for (i, label) in labels.iter_mut().enumerate() {
                let mut best_c = 0;
                let mut best_d = f64::INFINITY;
                for c in 0..k {
                    let dc = dist(row(i), &centroids[c * d..(c + 1) * d]);
                    if dc < best_d {
                        best_d = dc;
                        best_c = c;
                    }
                }
                if *label != best_c {
                    *label = best_c;
                    changed = true;
                }
            }
            counts.fill(0);
            centroids.fill(0.0);
            for (i, &l) in labels.iter().enumerate() {
                counts[l] += 1;
                for (acc, x) in centroids[l * d..(l + 1) * d].iter_mut().zip(row(i)) {
                    *acc += x;
                }
            }
            if counts.contains(&0) {
                valid = false;
                break;
            }
            for (c, &count) in counts.iter().enumerate() {
                for v in &mut centroids[c * d..(c + 1) * d] {
                    *v /= count as f64;
                }
            }
            if !changed {
                break;
            }
        }
        if !valid {
            continue;
        }
        let inertia: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| dist(row(i), &centroids[l * d..(l + 1) * d]))
            .sum();
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, labels));
        }
    }
    best.map(|(_, l)| l).ok_or(Error::DisconnectedDegenerate)
}

/// Spectral clustering: k-means on the rows of the first `k` Laplacian
/// eigenvectors.
pub fn spectral_clusters<R: Rng>(decomp: &SpectralDecomposition, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k > decomp.n() {
        return Err(Error::InvalidParameter(format!("cluster count {k} exceeds vertex count {}", decomp.n())));
    }
    let embedding = decomp.eigenvectors().columns(0, k).into_owned();
    kmeans(&embedding, k, KMEANS_RESTARTS, rng)
}

/// Bandlimited-plus-piecewise-constant test signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSignal {
    pub signal: DVector<f64>,
    pub bandlimited: DVector<f64>,
    pub piecewise: DVector<f64>,
    /// Cluster label per vertex (empty when no clusters were requested).
    pub labels: Vec<usize>,
    pub clusters: usize,
}

impl SyntheticSignal {
    /// `n × clusters` matrix of cluster indicator vectors.
    pub fn indicator_basis(&self) -> DMatrix<f64> {
        let n = self.signal.len();
        let mut b = DMatrix::zeros(n, self.clusters);
        for (i, &c) in self.labels.iter().enumerate() {
            b[(i, c)] = 1.0;
        }
        b
    }
}

/// `f = Σ_{i<n_eigs} γ_i u_i + Σ_{c<clusters} δ_c 1_{V_c}` with standard
/// normal `γ`, `δ` and clusters from spectral clustering.
pub fn generate_synthetic_signal(
    decomp: &SpectralDecomposition,
    n_eigs: usize,
    clusters: usize,
    seed: u64,
) -> Result<SyntheticSignal> {
    let n = decomp.n();
    if n_eigs > n {
        return Err(Error::InvalidParameter(format!("n_eigs {n_eigs} exceeds vertex count {n}")));
    }
    let mut rng = rng_from(seed);
    let mut bandlimited = DVector::zeros(n);
    for i in 0..n_eigs {
        let gamma: f64 = rng.sample(StandardNormal);
        bandlimited.axpy(gamma, &decomp.eigenvectors().column(i), 1.0);
    }
    let labels = if clusters == 0 {
        Vec::new()
    } else {
        spectral_clusters(decomp, clusters, &mut rng)?
    };
    let deltas: Vec<f64> = (0..clusters).map(|_| rng.sample(StandardNormal)).collect();
    let piecewise = DVector::from_iterator(n, labels.iter().map(|&c| deltas[c]).chain(std::iter::repeat(0.0)).take(n));
    Ok(SyntheticSignal {
        signal: &bandlimited + &piecewise,
        bandlimited,
        piecewise,
        labels,
        clusters,
    })
}

/// Heavy-tailed contamination: each sample independently receives extra
/// zero-mean Gaussian noise with probability `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierSpec {
    pub p: f64,
    #[serde(flatten)]
    pub level: OutlierLevel,
}

/// Outlier variance, given directly or through `‖f‖² / (N σ_o²)` in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OutlierLevel {
    Variance { variance: f64 },
    SnrDb { snr_db: f64 },
}

impl OutlierSpec {
    pub fn with_variance(p: f64, variance: f64) -> Self {
        OutlierSpec {
            p,
            level: OutlierLevel::Variance { variance },
        }
    }

    pub fn with_snr_db(p: f64, snr_db: f64) -> Self {
        OutlierSpec {
            p,
            level: OutlierLevel::SnrDb { snr_db },
        }
    }

    /// Outlier variance for reference signal energy `energy` over `count`
    /// entries.
    fn variance(&self, energy: f64, count: usize) -> Result<f64> {
        match self.level {
            OutlierLevel::Variance { variance } => Ok(variance),
            OutlierLevel::SnrDb { .. } if energy == 0.0 => Err(Error::UndefinedSnr),
            OutlierLevel::SnrDb { snr_db } => Ok(energy / (count as f64 * 10f64.powf(snr_db / 10.0))),
        }
    }
}

/// Noise and outlier variances resolved against a reference signal.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Corruption {
    noise_var: f64,
    outlier: Option<(f64, f64)>,
}

impl Corruption {
    /// `energy` is `‖f‖²` summed over `count` entries.
    fn resolve(energy: f64, count: usize, snr_db: Option<f64>, outlier: Option<&OutlierSpec>) -> Result<Self> {
        check_outlier(outlier)?;
        let noise_var = match snr_db {
            Some(db) if db == f64::INFINITY => 0.0,
            Some(_) if energy == 0.0 => return Err(Error::UndefinedSnr),
            Some(db) => energy / (count as f64 * 10f64.powf(db / 10.0)),
            None => 0.0,
        };
        let outlier = outlier.map(|o| Ok::<_, Error>((o.p, o.variance(energy, count)?))).transpose()?;
        Ok(Corruption { noise_var, outlier })
    }
}

/// `σ² = ‖f‖² / (N · 10^{snr/10})`.
pub fn noise_variance(f: &DVector<f64>, snr_db: f64) -> Result<f64> {
    Ok(Corruption::resolve(f.norm_squared(), f.len(), Some(snr_db), None)?.noise_var)
}

fn check_outlier(outlier: Option<&OutlierSpec>) -> Result<()> {
    if let Some(o) = outlier {
        let level_ok = match o.level {
            OutlierLevel::Variance { variance } => variance >= 0.0 && variance.is_finite(),
            OutlierLevel::SnrDb { snr_db } => snr_db.is_finite(),
        };
        if !(0.0..=1.0).contains(&o.p) || !level_ok {
            return Err(Error::InvalidParameter(
                "outlier p must lie in [0, 1] with a finite non-negative variance or finite SNR".into(),
            ));
        }
    }
    Ok(())
}

/// Samples `s` vertices uniformly without replacement and adds noise at the
/// given SNR (`None` or `+∞` means noise-free) plus optional outliers.
pub fn sample_and_corrupt(
    f: &DVector<f64>,
    s: usize,
    snr_db: Option<f64>,
    outlier: Option<&OutlierSpec>,
    seed: u64,
) -> Result<Observation> {
    let corruption = Corruption::resolve(f.norm_squared(), f.len(), snr_db, outlier)?;
    sample_and_corrupt_with(f, s, &corruption, &mut rng_from(seed))
}

fn sample_and_corrupt_with<R: Rng>(f: &DVector<f64>, s: usize, c: &Corruption, rng: &mut R) -> Result<Observation> {
    let n = f.len();
    if s == 0 || s > n {
        return Err(Error::InvalidParameter(format!("sample count must lie in 1..={n}, got {s}")));
    }
    let sigma = c.noise_var.sqrt();
    let mut idx = index::sample(rng, n, s).into_vec();
    idx.sort_unstable();
    let y = DVector::from_iterator(
        s,
        idx.iter().map(|&i| {
            let mut v = f[i];
            if sigma > 0.0 {
                v += sigma * rng.sample::<f64, _>(StandardNormal);
            }
            if let Some((p, var)) = c.outlier {
                if rng.random::<f64>() < p {
                    v += var.sqrt() * rng.sample::<f64, _>(StandardNormal);
                }
            }
            v
        }),
    );
    Observation::new(SamplingMask::new(idx, n)?, y)
}

/// `‖f̂ − f‖² / ‖f‖²`.
pub fn nmse(f_hat: &DVector<f64>, f: &DVector<f64>) -> Result<f64> {
    if f_hat.len() != f.len() {
        return Err(Error::dim("estimate length", f.len(), f_hat.len()));
    }
    let energy = f.norm_squared();
    if energy == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((f_hat - f).norm_squared() / energy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    ErdosRenyi { n: usize, p: f64 },
    /// Edge-list CSV or graph JSON.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSource {
    /// Bandlimited part on the first `n_eigs` eigenvectors plus cluster
    /// indicators.
    Synthetic { n_eigs: usize, clusters: usize },
    /// Trend `χ(t) = A χ(t−1) + η(t)` plus fluctuation `ν(t)`, with
    /// `η ~ N(0, eta_scale·K_η)` and `ν ~ N(0, nu_scale·K_ν)`.
    TimeVarying {
        t_len: usize,
        transition: TransitionSpec,
        kernel_eta: SpectralMapSpec,
        kernel_nu: SpectralMapSpec,
        eta_scale: f64,
        nu_scale: f64,
    },
    /// Dense `n × T` matrix CSV (one column per slot; `T = 1` is static).
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisSpec {
    /// Indicators of the synthetic signal's clusters.
    ClusterIndicators,
    LaplacianEigenvectors { count: usize },
    /// Dense `n × M` matrix CSV.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorSpec {
    Krr { kernel: SpectralMapSpec, mu: f64 },
    Bl { bandwidth: usize },
    /// LMMSE with the kernel as covariance; the noise variance defaults to
    /// the one implied by the configured SNR.
    Lmmse {
        kernel: SpectralMapSpec,
        #[serde(default)]
        noise_var: Option<f64>,
    },
    SpSquare { kernel: SpectralMapSpec, mu: f64, basis: BasisSpec },
    SpEps {
        kernel: SpectralMapSpec,
        mu: f64,
        eps: f64,
        basis: BasisSpec,
        #[serde(default)]
        solver: EpsSolverConfig,
    },
    MklRs {
        kernels: Vec<SpectralMapSpec>,
        mu: f64,
        #[serde(default)]
        solver: MklSolverConfig,
    },
    MklKc {
        kernels: Vec<SpectralMapSpec>,
        mu: f64,
        #[serde(default)]
        solver: MklSolverConfig,
    },
    /// Per-slot kernel ridge regression.
    Ie { kernel: SpectralMapSpec, mu: f64 },
    /// Kernel Kalman filter on the extended graph with diagonal coupling
    /// `coupling · I` and space-time kernel `(I + σ² L̃)⁻¹`.
    Kkf { sigma2: f64, coupling: f64, mu: f64 },
    /// Batch space-time KRR with the same extended-graph kernel as `kkf`.
    Batch { sigma2: f64, coupling: f64, mu: f64 },
    Kekrikf {
        kernel_nu: SpectralMapSpec,
        kernel_eta: SpectralMapSpec,
        transition: TransitionSpec,
        mu1: f64,
        mu2: f64,
    },
    Mkrikf {
        kernels_nu: Vec<SpectralMapSpec>,
        kernels_eta: Vec<SpectralMapSpec>,
        transition: TransitionSpec,
        mu1: f64,
        mu2: f64,
        rho_nu: f64,
        rho_eta: f64,
        #[serde(default)]
        solver: ThetaSolverConfig,
    },
}

impl EstimatorSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            EstimatorSpec::Krr { .. } => "krr",
            EstimatorSpec::Bl { .. } => "bl",
            EstimatorSpec::Lmmse { .. } => "lmmse",
            EstimatorSpec::SpSquare { .. } => "sp_square",
            EstimatorSpec::SpEps { .. } => "sp_eps",
            EstimatorSpec::MklRs { .. } => "mkl_rs",
            EstimatorSpec::MklKc { .. } => "mkl_kc",
            EstimatorSpec::Ie { .. } => "ie",
            EstimatorSpec::Kkf { .. } => "kkf",
            EstimatorSpec::Batch { .. } => "batch",
            EstimatorSpec::Kekrikf { .. } => "kekrikf",
            EstimatorSpec::Mkrikf { .. } => "mkrikf",
        }
    }

    pub fn is_dynamic(&self) -> bool {
        matches!(
            self,
            EstimatorSpec::Ie { .. }
                | EstimatorSpec::Kkf { .. }
                | EstimatorSpec::Batch { .. }
                | EstimatorSpec::Kekrikf { .. }
                | EstimatorSpec::Mkrikf { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(flatten)]
    pub spec: EstimatorSpec,
}

impl EstimatorEntry {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.spec.kind().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSpec {
    /// Sample counts to sweep (per slot for time-varying signals).
    pub sizes: Vec<usize>,
    /// Draw a fresh sampling set at every slot instead of a fixed one.
    #[serde(default)]
    pub resample_each_slot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// `null` for noise-free samples.
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub outlier: Option<OutlierSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSource,
    pub signal: SignalSource,
    pub estimators: Vec<EstimatorEntry>,
    pub sampling: SamplingSpec,
    pub noise: NoiseSpec,
    pub trials: usize,
    pub seed: u64,
    /// Directory for report files (used by the CLI).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.estimators.is_empty() {
            return bad("at least one estimator is required".into());
        }
        if self.sampling.sizes.is_empty() {
            return bad("at least one sample count is required".into());
        }
        if let GraphSource::ErdosRenyi { n, p } = self.graph {
            if n == 0 || !(0.0..=1.0).contains(&p) {
                return bad(format!("invalid Erdős–Rényi parameters n={n}, p={p}"));
            }
        }
        if self.noise.snr_db.is_some_and(f64::is_nan) {
            return bad("snr_db must not be NaN".into());
        }
        check_outlier(self.noise.outlier.as_ref())?;
        let dynamic_signal = match &self.signal {
            SignalSource::TimeVarying { t_len, .. } => {
                if *t_len == 0 {
                    return bad("t_len must be >= 1".into());
                }
                Some(true)
            }
            SignalSource::Synthetic { .. } => Some(false),
            SignalSource::File { .. } => None,
        };
        for e in &self.estimators {
            if let Some(dynamic) = dynamic_signal {
                if e.spec.is_dynamic() != dynamic {
                    return bad(format!(
                        "estimator {} does not apply to a {} signal",
                        e.label(),
                        if dynamic { "time-varying" } else { "static" }
                    ));
                }
            }
            if let EstimatorSpec::SpSquare { basis: BasisSpec::ClusterIndicators, .. }
            | EstimatorSpec::SpEps { basis: BasisSpec::ClusterIndicators, .. } = &e.spec
            {
                if !matches!(self.signal, SignalSource::Synthetic { clusters, .. } if clusters > 0) {
                    return bad("cluster-indicator bases need a synthetic signal with clusters".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub message: String,
}

/// Aggregate over trials at one sample count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub sample_count: usize,
    /// Mean over the trials that succeeded.
    pub mean_nmse: Option<f64>,
    pub trial_nmse: Vec<Option<f64>>,
    pub failures: Vec<TrialFailure>,
    /// Mean per-slot NMSE curve (time-varying signals).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot_mean_nmse: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub label: String,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub results: Vec<EstimatorResult>,
    /// Baselines referenced in the literature but not implemented here.
    pub unavailable_comparisons: Vec<String>,
    pub runtime_seconds: f64,
}

impl EvaluationReport {
    /// True when no trial of any estimator produced an estimate.
    pub fn all_failed(&self) -> bool {
        self.results
            .iter()
            .flat_map(|r| &r.points)
            .all(|p| p.trial_nmse.iter().all(Option::is_none))
    }

    pub fn result(&self, label: &str) -> Option<&EstimatorResult> {
        self.results.iter().find(|r| r.label == label)
    }

    pub fn mean_nmse(&self, label: &str, sample_count: usize) -> Option<f64> {
        self.result(label)?
            .points
            .iter()
            .find(|p| p.sample_count == sample_count)?
            .mean_nmse
    }

    /// Rows `estimator,sample_count,mean_nmse,failures` for CSV output.
    pub fn table(&self) -> Vec<NmseRow> {
        self.results
            .iter()
            .flat_map(|r| {
                r.points.iter().map(move |p| NmseRow {
                    estimator: r.label.clone(),
                    sample_count: p.sample_count,
                    mean_nmse: p.mean_nmse,
                    failures: p.failures.len(),
                })
            })
            .collect()
    }

    /// Rows `estimator,sample_count,t,mean_nmse` for time-varying runs.
    pub fn slot_table(&self) -> Vec<SlotNmseRow> {
        let mut rows = Vec::new();
        for r in &self.results {
            for p in &r.points {
                if let Some(curve) = &p.slot_mean_nmse {
                    for (t, &v) in curve.iter().enumerate() {
                        rows.push(SlotNmseRow {
                            estimator: r.label.clone(),
                            sample_count: p.sample_count,
                            t,
                            mean_nmse: v,
                        });
                    }
                }
            }
        }
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NmseRow {
    pub estimator: String,
    pub sample_count: usize,
    pub mean_nmse: Option<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotNmseRow {
    pub estimator: String,
    pub sample_count: usize,
    pub t: usize,
    pub mean_nmse: f64,
}

/// Worker count from `GRAPHKERNEL_THREADS`, defaulting to the available
/// parallelism.
pub fn worker_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

enum TrialSignal {
    Static(SyntheticOrLoaded),
    Dynamic(Vec<DVector<f64>>),
}

struct SyntheticOrLoaded {
    signal: DVector<f64>,
    basis: Option<DMatrix<f64>>,
}

/// Per-estimator outcome of one trial at one sample count.
type Outcome = std::result::Result<(f64, Option<Vec<f64>>), String>;

struct Loaded {
    graph: Option<Graph>,
    signal: Option<DMatrix<f64>>,
}

fn load_inputs(cfg: &ExperimentConfig) -> Result<Loaded> {
    let graph = match &cfg.graph {
        GraphSource::File { path } => Some(crate::io::load_graph(path)?),
        GraphSource::ErdosRenyi { .. } => None,
    };
    let signal = match &cfg.signal {
        SignalSource::File { path } => Some(crate::io::read_matrix_csv(std::fs::File::open(path)?)?),
        _ => None,
    };
    if let (Some(g), Some(s)) = (&graph, &signal) {
        if s.nrows() != g.n() {
            return Err(Error::dim("signal rows", g.n(), s.nrows()));
        }
    }
    if let Some(s) = &signal {
        let dynamic = s.ncols() > 1;
        if let Some(e) = cfg.estimators.iter().find(|e| e.spec.is_dynamic() != dynamic) {
            return Err(Error::InvalidParameter(format!(
                "estimator {} does not match the loaded signal",
                e.label()
            )));
        }
    }
    Ok(Loaded { graph, signal })
}

fn gaussian_with_kernel<R: Rng>(root: &DMatrix<f64>, scale: f64, rng: &mut R) -> DVector<f64> {
    let z = DVector::from_iterator(root.nrows(), (0..root.nrows()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    root * z * scale.sqrt()
}

fn time_varying_signal<R: Rng>(
    g: &Graph,
    decomp: &SpectralDecomposition,
    source: &SignalSource,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let SignalSource::TimeVarying {
        t_len,
        transition,
        kernel_eta,
        kernel_nu,
        eta_scale,
        nu_scale,
    } = source
    else {
        unreachable!("caller matched the variant");
    };
    let a = transition.matrix(g);
    let root_eta = crate::linalg::psd_sqrt(laplacian_kernel(decomp, kernel_eta)?.matrix());
    let root_nu = crate::linalg::psd_sqrt(laplacian_kernel(decomp, kernel_nu)?.matrix());
    let mut chi = DVector::zeros(g.n());
    let mut out = Vec::with_capacity(*t_len);
    for _ in 0..*t_len {
        chi = &a * chi + gaussian_with_kernel(&root_eta, *eta_scale, rng);
        out.push(&chi + gaussian_with_kernel(&root_nu, *nu_scale, rng));
    }
    Ok(out)
}

fn basis_matrix(spec: &BasisSpec, decomp: &SpectralDecomposition, signal_basis: Option<&DMatrix<f64>>) -> Result<DMatrix<f64>> {
    match spec {
        BasisSpec::ClusterIndicators => signal_basis
            .cloned()
            .ok_or_else(|| Error::InvalidParameter("no cluster indicators available".into())),
        BasisSpec::LaplacianEigenvectors { count } => {
            if *count == 0 || *count > decomp.n() {
                return Err(Error::InvalidParameter(format!("eigenvector count {count} out of range")));
            }
            Ok(decomp.eigenvectors().columns(0, *count).into_owned())
        }
        BasisSpec::File { path } => crate::io::read_matrix_csv(std::fs::File::open(path)?),
    }
}

/// Keeps only basis columns that are non-zero on the sampled vertices; the
/// coefficients of the others are not identifiable from the data.
fn sampled_support(b: &DMatrix<f64>, mask: &SamplingMask) -> Result<ParametricBasis> {
    let keep: Vec<usize> = (0..b.ncols())
        .filter(|&j| mask.indices().iter().any(|&i| b[(i, j)] != 0.0))
        .collect();
    ParametricBasis::new(b.select_columns(&keep))
}

/// Runs a static estimator on one observation. `cluster_basis` backs
/// [`BasisSpec::ClusterIndicators`]; `noise_var` is the LMMSE fallback when
/// the estimator leaves it unset.
pub fn estimate_static(
    spec: &EstimatorSpec,
    decomp: &SpectralDecomposition,
    obs: &Observation,
    cluster_basis: Option<&DMatrix<f64>>,
    noise_var: Option<f64>,
) -> Result<DVector<f64>> {
    let kernel = |s: &SpectralMapSpec| laplacian_kernel(decomp, s);
    match spec {
        EstimatorSpec::Krr { kernel: k, mu } => Ok(krr_fit(&kernel(k)?, obs, *mu)?.f_hat),
        EstimatorSpec::Bl { bandwidth } => bl_estimate(decomp, obs, *bandwidth),
        EstimatorSpec::Lmmse { kernel: k, noise_var: nv } => {
            let nv = nv
                .or(noise_var)
                .ok_or_else(|| Error::InvalidParameter("lmmse needs a noise variance".into()))?;
            lmmse_estimate(&kernel(k)?, obs, nv)
        }
        EstimatorSpec::SpSquare { kernel: k, mu, basis } => {
            let b = sampled_support(&basis_matrix(basis, decomp, cluster_basis)?, obs.mask())?;
            Ok(semiparametric_fit_square(&kernel(k)?, &b, obs, *mu)?.f_hat)
        }
        EstimatorSpec::SpEps {
            kernel: k,
            mu,
            eps,
            basis,
            solver,
        } => {
            let b = sampled_support(&basis_matrix(basis, decomp, cluster_basis)?, obs.mask())?;
            Ok(semiparametric_fit_eps(&kernel(k)?, &b, obs, *mu, *eps, solver)?.f_hat)
        }
        EstimatorSpec::MklRs { kernels, mu, solver } => {
            let dict = KernelDictionary::laplacian(decomp, kernels)?;
            Ok(rkhs_superposition_fit(&dict, obs, *mu, solver)?.ensure_converged()?.f_hat)
        }
        EstimatorSpec::MklKc { kernels, mu, solver } => {
            let dict = KernelDictionary::laplacian(decomp, kernels)?;
            Ok(kernel_combination_fit(&dict, obs, *mu, solver)?.f_hat)
        }
        _ => Err(Error::InvalidParameter(format!("{} needs a time-varying signal", spec.kind()))),
    }
}

fn extended_inverse(g: &Graph, t_len: usize, sigma2: f64, coupling: f64) -> Result<crate::kernels::BlockTridiagonalMatrix> {
    let graphs = vec![g.clone(); t_len];
    build_extended_adjacency(&graphs, &CouplingSpec::Diagonal(coupling))?.regularized_laplacian_inverse(sigma2)
}

/// Runs a time-varying estimator over a whole series and returns one
/// estimate per slot. `ie` maps empty slots to a zero estimate.
pub fn estimate_series(
    spec: &EstimatorSpec,
    g: &Graph,
    decomp: &SpectralDecomposition,
    series: &TimeSeriesObservations,
) -> Result<Vec<DVector<f64>>> {
    let t_len = series.t_len();
    let n = g.n();
    match spec {
        EstimatorSpec::Ie { kernel, mu } => {
            let k = laplacian_kernel(decomp, kernel)?;
            instantaneous_series(&k, series, *mu)
                .into_iter()
                .map(|r| match r {
                    Err(Error::EmptySlot(_)) => Ok(DVector::zeros(n)),
                    other => other,
                })
                .collect()
        }
        EstimatorSpec::Kkf { sigma2, coupling, mu } => {
            let params = kkf_parameters(&extended_inverse(g, t_len, *sigma2, *coupling)?)?;
            let states = kkf_run(&params, series, &series.kkf_noise_variances(*mu))?;
            Ok(states.into_iter().map(|s| s.f_hat).collect())
        }
        EstimatorSpec::Batch { sigma2, coupling, mu } => {
            let k = space_time_kernel_from_inverse(&extended_inverse(g, t_len, *sigma2, *coupling)?)?;
            Ok(crate::dynamic::split_blocks(&batch_space_time_fit(&k, series, *mu)?, n))
        }
        EstimatorSpec::Kekrikf {
            kernel_nu,
            kernel_eta,
            transition,
            mu1,
            mu2,
        } => {
            let model = SpatioTemporalModel::new(
                transition.matrix(g),
                None,
                laplacian_kernel(decomp, kernel_nu)?,
                laplacian_kernel(decomp, kernel_eta)?,
                *mu1,
                *mu2,
            )?;
            Ok(kekrikf_run(&model, series)?.iter().map(|s| s.estimate()).collect())
        }
        EstimatorSpec::Mkrikf {
            kernels_nu,
            kernels_eta,
            transition,
            mu1,
            mu2,
            rho_nu,
            rho_eta,
            solver,
        } => {
            let dict_nu = KernelDictionary::laplacian(decomp, kernels_nu)?;
            let dict_eta = KernelDictionary::laplacian(decomp, kernels_eta)?;
            let weights = MkrikfWeights {
                mu1: *mu1,
                mu2: *mu2,
                rho_nu: *rho_nu,
                rho_eta: *rho_eta,
            };
            let out = mkrikf_run(series, &dict_nu, &dict_eta, &transition.matrix(g), &weights, solver)?;
            Ok(out.iter().map(|s| s.state.estimate()).collect())
        }
        _ => Err(Error::InvalidParameter(format!("{} needs a static signal", spec.kind()))),
    }
}

fn series_nmse(est: &[DVector<f64>], truth: &[DVector<f64>]) -> Result<(f64, Vec<f64>)> {
    let mut err = 0.0;
    let mut energy = 0.0;
    let mut per_slot = Vec::with_capacity(truth.len());
    for (e, f) in est.iter().zip(truth) {
        let se = (e - f).norm_squared();
        let fe = f.norm_squared();
        err += se;
        energy += fe;
        per_slot.push(if fe > 0.0 { se / fe } else { f64::NAN });
    }
    if energy == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((err / energy, per_slot))
}

/// Runs one trial: returns `outcomes[sample_index][estimator_index]`.
fn run_trial(cfg: &ExperimentConfig, loaded: &Loaded, trial: usize) -> Result<Vec<Vec<Outcome>>> {
    let mut rng = trial_rng(cfg.seed, trial as u64);
    let graph_seed: u64 = rng.random();
    let signal_seed: u64 = rng.random();
    let sample_seeds: Vec<u64> = cfg.sampling.sizes.iter().map(|_| rng.random()).collect();

    let g = match (&cfg.graph, &loaded.graph) {
        (_, Some(g)) => g.clone(),
        (GraphSource::ErdosRenyi { n, p }, None) => generate_er_graph(*n, *p, graph_seed)?,
        (GraphSource::File { .. }, None) => unreachable!("file graphs are loaded up front"),
    };
    let decomp = eigendecompose(&g.laplacian())?;

    let signal = match (&cfg.signal, &loaded.signal) {
        (_, Some(m)) if m.ncols() == 1 => TrialSignal::Static(SyntheticOrLoaded {
            signal: m.column(0).into_owned(),
            basis: None,
        }),
        (_, Some(m)) => TrialSignal::Dynamic(m.column_iter().map(|c| c.into_owned()).collect()),
        (SignalSource::Synthetic { n_eigs, clusters }, None) => {
            let s = generate_synthetic_signal(&decomp, *n_eigs, *clusters, signal_seed)?;
            let basis = (s.clusters > 0).then(|| s.indicator_basis());
            TrialSignal::Static(SyntheticOrLoaded { signal: s.signal, basis })
        }
        (src @ SignalSource::TimeVarying { .. }, None) => {
            let mut srng = rng_from(signal_seed);
            TrialSignal::Dynamic(time_varying_signal(&g, &decomp, src, &mut srng)?)
        }
        (SignalSource::File { .. }, None) => unreachable!("file signals are loaded up front"),
    };

    let mut out = Vec::with_capacity(cfg.sampling.sizes.len());
    for (&s, &seed) in cfg.sampling.sizes.iter().zip(&sample_seeds) {
        let mut srng = rng_from(seed);
        let outcomes = match &signal {
            TrialSignal::Static(truth) => {
                let c = Corruption::resolve(
                    truth.signal.norm_squared(),
                    truth.signal.len(),
                    cfg.noise.snr_db,
                    cfg.noise.outlier.as_ref(),
                )?;
                let obs = sample_and_corrupt_with(&truth.signal, s, &c, &mut srng)?;
                cfg.estimators
                    .iter()
                    .map(|e| {
                        estimate_static(&e.spec, &decomp, &obs, truth.basis.as_ref(), Some(c.noise_var))
                            .and_then(|f_hat| nmse(&f_hat, &truth.signal))
                            .map(|v| (v, None))
                            .map_err(|err| err.to_string())
                    })
                    .collect()
            }
            TrialSignal::Dynamic(truth) => {
                let n = g.n();
                let total: f64 = truth.iter().map(|f| f.norm_squared()).sum();
                let c = Corruption::resolve(total, n * truth.len(), cfg.noise.snr_db, cfg.noise.outlier.as_ref())?;
                let mut fixed: Option<Vec<usize>> = None;
                let mut slots = Vec::with_capacity(truth.len());
                for f in truth {
                    let obs = sample_and_corrupt_with(f, s, &c, &mut srng)?;
                    let obs = match (&fixed, cfg.sampling.resample_each_slot) {
                        (Some(idx), false) => {
                            let clean = DVector::from_iterator(idx.len(), idx.iter().map(|&i| f[i]));
                            let noisy = obs.y() - obs.mask().sample(f) + clean;
                            Observation::new(SamplingMask::new(idx.clone(), n)?, noisy)?
                        }
                        _ => obs,
                    };
                    if fixed.is_none() {
                        fixed = Some(obs.mask().indices().to_vec());
                    }
                    slots.push(obs);
                }
                let series = TimeSeriesObservations::new(n, slots)?;
                cfg.estimators
                    .iter()
                    .map(|e| {
                        estimate_series(&e.spec, &g, &decomp, &series)
                            .and_then(|est| series_nmse(&est, truth))
                            .map(|(v, curve)| (v, Some(curve)))
                            .map_err(|err| err.to_string())
                    })
                    .collect()
            }
        };
        out.push(outcomes);
    }
    Ok(out)
}

/// Monte Carlo evaluation. Trials run in parallel on up to
/// [`worker_threads`] workers; every trial draws from its own stream of the
/// master seed, so results do not depend on scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EvaluationReport> {
    run_experiment_with_threads(cfg, worker_threads())
}

pub fn run_experiment_with_threads(cfg: &ExperimentConfig, threads: usize) -> Result<EvaluationReport> {
    cfg.validate()?;
    let start = Instant::now();
    let loaded = load_inputs(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let trials: Vec<Result<Vec<Vec<Outcome>>>> =
        pool.install(|| (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, &loaded, t)).collect());

    let n_est = cfg.estimators.len();
    let mut results: Vec<EstimatorResult> = cfg
        .estimators
        .iter()
        .map(|e| EstimatorResult {
            label: e.label(),
            points: cfg
                .sampling
                .sizes
                .iter()
                .map(|&s| SweepPoint {
                    sample_count: s,
                    mean_nmse: None,
                    trial_nmse: Vec::with_capacity(cfg.trials),
                    failures: Vec::new(),
                    slot_mean_nmse: None,
                })
                .collect(),
        })
        .collect();
    let mut curves: Vec<Vec<Option<(Vec<f64>, usize)>>> = vec![vec![None; cfg.sampling.sizes.len()]; n_est];

    for (trial, outcome) in trials.into_iter().enumerate() {
        match outcome {
            Err(e) => {
                for r in results.iter_mut() {
                    for p in r.points.iter_mut() {
                        p.trial_nmse.push(None);
                        p.failures.push(TrialFailure {
                            trial,
                            message: e.to_string(),
                        });
                    }
                }
            }
            Ok(per_size) => {
                for (si, per_est) in per_size.into_iter().enumerate() {
                    for (ei, o) in per_est.into_iter().enumerate() {
                        let p = &mut results[ei].points[si];
                        match o {
                            Ok((v, curve)) => {
                                p.trial_nmse.push(Some(v));
                                if let Some(c) = curve {
                                    let acc = curves[ei][si].get_or_insert_with(|| (vec![0.0; c.len()], 0));
                                    for (a, x) in acc.0.iter_mut().zip(&c) {
                                        *a += x;
                                    }
                                    acc.1 += 1;
                                }
                            }
                            Err(message) => {
                                p.trial_nmse.push(None);
                                p.failures.push(TrialFailure { trial, message });
                            }
                        }
                    }
                }
            }
        }
    }
    for (ei, r) in results.iter_mut().enumerate() {
        for (si, p) in r.points.iter_mut().enumerate() {
            let ok: Vec<f64> = p.trial_nmse.iter().flatten().copied().collect();
            if !ok.is_empty() {
                p.mean_nmse = Some(ok.iter().sum::<f64>() / ok.len() as f64);
            }
            if let Some((sum, count)) = &curves[ei][si] {
                p.slot_mean_nmse = Some(sum.iter().map(|v| v / *count as f64).collect());
            }
        }
    }
    Ok(EvaluationReport {
        config: cfg.clone(),
        seed: cfg.seed,
        results,
        unavailable_comparisons: vec!["dlsr".into(), "lms".into()],
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}
