//! Kernels on graphs.
//!
//! Laplacian kernels apply a spectral weight map `r` to the Laplacian
//! eigenvalues and take the pseudo-inverse, `K = U r†(Λ) Uᵀ`. Large `r(λ)`
//! means the corresponding frequency component is heavily penalized by the
//! RKHS norm `fᵀ K† f = Σ r(λ_i) |f̂_i|²`.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, SpectralDecomposition};
use crate::linalg::{self, PINV_TOL};

/// Symmetry tolerance for kernel matrices, relative to `max(1, max|K|)`.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// PSD tolerance: smallest eigenvalue must be `>= -PSD_TOL · λ_max`.
pub const PSD_TOL: f64 = 1e-8;

/// Spectral weight map `r(λ)` and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralMapSpec {
    /// `exp(σ² λ / 2)`
    Diffusion { sigma2: f64 },
    /// `(a − λ)^(−p)`
    PStepRandomWalk { a: f64, p: f64 },
    /// `1 + σ² λ`
    RegularizedLaplacian { sigma2: f64 },
    /// `1/β` for `λ <= λ_max`, `β` otherwise.
    Bandlimited { beta: f64, lambda_max: f64 },
    /// Rank based: `β` for 1-based ranks `k <= i <= N − l`, `1/β` otherwise.
    BandReject { k: usize, l: usize, beta: f64 },
}

/// Position of an eigenvalue in the ascending spectrum (0-based `index` out
/// of `n`). Only rank-based maps consult it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpectralRank {
    pub index: usize,
    pub n: usize,
}

impl SpectralMapSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            SpectralMapSpec::Diffusion { sigma2 } | SpectralMapSpec::RegularizedLaplacian { sigma2 } => {
                if !(sigma2 >= 0.0) || !sigma2.is_finite() {
                    return bad(format!("sigma2 must be finite and >= 0, got {sigma2}"));
                }
            }
            SpectralMapSpec::PStepRandomWalk { a, p } => {
                if !(a >= 2.0) || !(p >= 0.0) {
                    return bad(format!("p-step random walk needs a >= 2 and p >= 0, got a={a}, p={p}"));
                }
            }
            SpectralMapSpec::Bandlimited { beta, .. } | SpectralMapSpec::BandReject { beta, .. } => {
                if !(beta > 0.0) || !beta.is_finite() {
                    return bad(format!("beta must be finite and > 0, got {beta}"));
                }
            }
        }
        Ok(())
    }

    pub fn is_rank_based(&self) -> bool {
        matches!(self, SpectralMapSpec::BandReject { .. })
    }
}

/// Evaluates `r(λ)`.
pub fn spectral_map_eval(
    spec: &SpectralMapSpec,
    lambda: f64,
    rank: Option<SpectralRank>,
) -> Result<f64> {
    spec.validate()?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("eigenvalue must be >= 0, got {lambda}")));
    }
    let r = match *spec {
        SpectralMapSpec::Diffusion { sigma2 } => (sigma2 * lambda / 2.0).exp(),
        SpectralMapSpec::PStepRandomWalk { a, p } => {
            if lambda == a {
                return Err(Error::PoleAtEigenvalue(lambda));
            }
            if lambda > a {
                return Err(Error::InvalidParameter(format!(
                    "eigenvalue {lambda} lies beyond the pole a={a}"
                )));
            }
            (a - lambda).powf(-p)
        }
        SpectralMapSpec::RegularizedLaplacian { sigma2 } => 1.0 + sigma2 * lambda,
        SpectralMapSpec::Bandlimited { beta, lambda_max } => {
            if lambda <= lambda_max {
                1.0 / beta
            } else {
                beta
            }
        }
        SpectralMapSpec::BandReject { k, l, beta } => {
            let rank = rank.ok_or_else(|| {
                Error::InvalidParameter("band-reject map needs the eigenvalue rank".into())
            })?;
            let one_based = rank.index + 1;
            if k <= one_based && one_based + l <= rank.n {
                beta
            } else {
                1.0 / beta
            }
        }
    };
    Ok(r)
}

/// Where a kernel matrix came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Laplacian { spec: SpectralMapSpec, graph_hash: u64 },
    Covariance { samples: usize },
    Combination { coefficients: Vec<f64> },
    SpaceTime,
    Explicit,
}

/// Symmetric PSD similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    k: DMatrix<f64>,
    provenance: Provenance,
}

impl KernelMatrix {
    /// Validates symmetry and positive semi-definiteness; stores the
    /// symmetrized matrix.
    pub fn new(k: DMatrix<f64>) -> Result<Self> {
        Self::with_provenance(k, Provenance::Explicit)
    }

    pub fn with_provenance(k: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        linalg::ensure_square(&k)?;
        let scale = k.amax().max(1.0);
        if linalg::max_asymmetry(&k) > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric);
        }
        let k = linalg::symmetrize(&k);
        if k.nrows() > 0 {
            let eig = k.clone().symmetric_eigen();
            let max = eig.eigenvalues.max();
            let min = eig.eigenvalues.min();
            if min < -PSD_TOL * max.max(0.0) - f64::EPSILON * scale {
                return Err(Error::NotPositiveDefinite("kernel has a negative eigenvalue"));
            }
        }
        Ok(KernelMatrix { k, provenance })
    }

    pub(crate) fn from_parts_unchecked(k: DMatrix<f64>, provenance: Provenance) -> Self {
        KernelMatrix { k, provenance }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_parts_unchecked(DMatrix::identity(n, n), Provenance::Explicit)
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.k
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// `ΦKΦᵀ` for the given sample indices.
    pub fn sampled(&self, indices: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(indices.len(), indices.len(), |i, j| self.k[(indices[i], indices[j])])
    }

    /// `KΦᵀ` (columns of `K` at the sample indices).
    pub fn sampled_columns(&self, indices: &[usize]) -> DMatrix<f64> {
        self.k.select_columns(indices)
    }

    pub fn scaled(&self, factor: f64) -> KernelMatrix {
        KernelMatrix::from_parts_unchecked(&self.k * factor, self.provenance.clone())
    }
}

pub(crate) fn graph_hash(g: &Graph) -> u64 {
    let mut h = DefaultHasher::new();
    g.n().hash(&mut h);
    for w in g.adjacency().iter() {
        w.to_bits().hash(&mut h);
    }
    h.finish()
}

/// `r(λ_i)` for every eigenvalue of `decomp`.
pub fn spectral_weights(decomp: &SpectralDecomposition, spec: &SpectralMapSpec) -> Result<DVector<f64>> {
    let n = decomp.n();
    let mut r = DVector::zeros(n);
    for (i, &lambda) in decomp.eigenvalues().iter().enumerate() {
        r[i] = spectral_map_eval(spec, lambda.max(0.0), Some(SpectralRank { index: i, n }))?;
    }
    Ok(r)
}

/// Eigenvalues of the Laplacian kernel, `r†(λ_i)`.
pub fn kernel_spectrum(decomp: &SpectralDecomposition, spec: &SpectralMapSpec) -> Result<DVector<f64>> {
    let r = spectral_weights(decomp, spec)?;
    let top = r.iter().fold(0.0f64, |a, &v| a.max(v));
    Ok(r.map(|v| if v > PINV_TOL * top { 1.0 / v } else { 0.0 }))
}

/// `K = U r†(Λ) Uᵀ`.
pub fn laplacian_kernel(decomp: &SpectralDecomposition, spec: &SpectralMapSpec) -> Result<KernelMatrix> {
    let diag = kernel_spectrum(decomp, spec)?;
    Ok(KernelMatrix::from_parts_unchecked(
        decomp.synthesize(&diag),
        Provenance::Laplacian {
            spec: *spec,
            graph_hash: 0,
        },
    ))
}

/// Laplacian kernel tagged with the hash of the graph it was built on.
pub fn laplacian_kernel_for(
    g: &Graph,
    decomp: &SpectralDecomposition,
    spec: &SpectralMapSpec,
) -> Result<KernelMatrix> {
    let mut k = laplacian_kernel(decomp, spec)?;
    k.provenance = Provenance::Laplacian {
        spec: *spec,
        graph_hash: graph_hash(g),
    };
    Ok(k)
}

/// Sample covariance of historical signals (rows), normalized by the row
/// count, with negative eigenvalues clipped to zero.
pub fn covariance_kernel(samples: &DMatrix<f64>) -> Result<KernelMatrix> {
    let m = samples.nrows();
    if m == 0 {
        return Err(Error::EmptyHistory);
    }
    let mean = samples.row_mean();
    let mut centered = samples.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let cov = linalg::symmetrize(&(centered.tr_mul(&centered) / m as f64));
    let (vals, vecs) = linalg::sorted_symmetric_eigen(&cov);
    let k = if vals.iter().any(|v| *v < 0.0) {
        linalg::reconstruct(&vecs, &vals.map(|v| v.max(0.0)))
    } else {
        cov
    };
    Ok(KernelMatrix::from_parts_unchecked(k, Provenance::Covariance { samples: m }))
}

/// Ordered list of same-size kernels, optionally diagonal in one shared
/// eigenbasis.
#[derive(Debug, Clone)]
pub struct KernelDictionary {
    members: Vec<KernelMatrix>,
    shared: Option<SharedBasis>,
}

#[derive(Debug, Clone)]
struct SharedBasis {
    decomp: SpectralDecomposition,
    /// Member eigenvalues in the shared basis, one vector per member.
    spectra: Vec<DVector<f64>>,
}

impl KernelDictionary {
    pub fn new(members: Vec<KernelMatrix>) -> Result<Self> {
        let n = members
            .first()
            .ok_or_else(|| Error::InvalidParameter("kernel dictionary is empty".into()))?
            .n();
        for k in &members {
            if k.n() != n {
                return Err(Error::dim("dictionary member size", n, k.n()));
            }
        }
        Ok(KernelDictionary { members, shared: None })
    }

    /// Laplacian kernels of one graph; records the shared eigenbasis.
    pub fn laplacian(decomp: &SpectralDecomposition, specs: &[SpectralMapSpec]) -> Result<Self> {
        let mut members = Vec::with_capacity(specs.len());
        let mut spectra = Vec::with_capacity(specs.len());
        for spec in specs {
            let diag = kernel_spectrum(decomp, spec)?;
            members.push(KernelMatrix::from_parts_unchecked(
                decomp.synthesize(&diag),
                Provenance::Laplacian {
                    spec: *spec,
                    graph_hash: 0,
                },
            ));
            spectra.push(diag);
        }
        let mut dict = Self::new(members)?;
        dict.shared = Some(SharedBasis {
            decomp: decomp.clone(),
            spectra,
        });
        Ok(dict)
    }

    /// Attaches an eigenbasis after checking every member is diagonal in it.
    pub fn with_shared_eigenbasis(members: Vec<KernelMatrix>, decomp: &SpectralDecomposition) -> Result<Self> {
        let mut dict = Self::new(members)?;
        if decomp.n() != dict.n() {
            return Err(Error::dim("shared eigenbasis", dict.n(), decomp.n()));
        }
        let u = decomp.eigenvectors();
        let mut spectra = Vec::with_capacity(dict.members.len());
        for k in &dict.members {
            let proj = u.tr_mul(k.matrix()) * u;
            let diag = proj.diagonal();
            let err = (decomp.synthesize(&diag) - k.matrix()).amax();
            if err >= 1e-8 * k.matrix().amax().max(1.0) {
                return Err(Error::InvalidParameter(format!(
                    "dictionary member does not commute with the eigenbasis (error {err:.3e})"
                )));
            }
            spectra.push(diag);
        }
        dict.shared = Some(SharedBasis {
            decomp: decomp.clone(),
            spectra,
        });
        Ok(dict)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn n(&self) -> usize {
        self.members[0].n()
    }

    pub fn members(&self) -> &[KernelMatrix] {
        &self.members
    }

    pub fn shared_eigenbasis(&self) -> Option<&SpectralDecomposition> {
        self.shared.as_ref().map(|s| &s.decomp)
    }

    /// Member eigenvalues in the shared basis, when one is attached.
    pub fn member_spectra(&self) -> Option<&[DVector<f64>]> {
        self.shared.as_ref().map(|s| s.spectra.as_slice())
    }

    /// Same members with the shared-basis metadata dropped.
    pub fn without_shared_basis(&self) -> Self {
        KernelDictionary {
            members: self.members.clone(),
            shared: None,
        }
    }
}

/// `K(θ) = Σ θ_m K_m` with `θ >= 0`.
pub fn combine(dict: &KernelDictionary, theta: &[f64]) -> Result<KernelMatrix> {
    if theta.len() != dict.len() {
        return Err(Error::dim("combination coefficients", dict.len(), theta.len()));
    }
    if let Some(i) = theta.iter().position(|t| !(*t >= 0.0)) {
        return Err(Error::NegativeCoefficient(i));
    }
    let n = dict.n();
    let k = match dict.member_spectra() {
        Some(spectra) => {
            let mut diag = DVector::zeros(n);
            for (s, &t) in spectra.iter().zip(theta) {
                diag.axpy(t, s, 1.0);
            }
            dict.shared_eigenbasis().unwrap().synthesize(&diag)
        }
        None => {
            let mut acc = DMatrix::zeros(n, n);
            for (km, &t) in dict.members.iter().zip(theta) {
                if t != 0.0 {
                    acc += km.matrix() * t;
                }
            }
            acc
        }
    };
    Ok(KernelMatrix::from_parts_unchecked(
        k,
        Provenance::Combination {
            coefficients: theta.to_vec(),
        },
    ))
}

/// RKHS norm `fᵀ K† f`; `f` must lie in the range of `K`.
pub fn rkhs_norm_sq(k: &KernelMatrix, f: &DVector<f64>) -> Result<f64> {
    if f.len() != k.n() {
        return Err(Error::dim("rkhs signal", k.n(), f.len()));
    }
    let (vals, vecs) = linalg::sorted_symmetric_eigen(k.matrix());
    let cutoff = PINV_TOL * vals.iter().fold(0.0f64, |a, &v| a.max(v));
    let coeffs = vecs.tr_mul(f);
    let mut norm = 0.0;
    let mut outside = 0.0;
    for (c, &v) in coeffs.iter().zip(vals.iter()) {
        if v > cutoff {
            norm += c * c / v;
        } else {
            outside += c * c;
        }
    }
    let fnorm = f.norm();
    if outside.sqrt() > 1e-6 * fnorm {
        return Err(Error::OutOfRange(outside.sqrt() / fnorm));
    }
    Ok(norm)
}

/// Symmetric block-tridiagonal matrix with diagonal blocks `D(1..T)` and
/// sub-diagonal blocks `E(2..T)` (block `(t, t−1)`; block `(t−1, t)` is
/// `E(t)ᵀ`).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiagonalMatrix {
    n: usize,
    diag: Vec<DMatrix<f64>>,
    off: Vec<DMatrix<f64>>,
}

impl BlockTridiagonalMatrix {
    pub fn new(n: usize, diag: Vec<DMatrix<f64>>, off: Vec<DMatrix<f64>>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidParameter("at least one diagonal block is required".into()));
        }
        if off.len() + 1 != diag.len() {
            return Err(Error::dim("off-diagonal block count", diag.len() - 1, off.len()));
        }
        for d in &diag {
            if d.nrows() != n || d.ncols() != n {
                return Err(Error::dim("diagonal block size", n, d.nrows().max(d.ncols())));
            }
            if linalg::max_asymmetry(d) > SYMMETRY_TOL * d.amax().max(1.0) {
                return Err(Error::NotSymmetric);
            }
        }
        for e in &off {
            if e.nrows() != n || e.ncols() != n {
                return Err(Error::dim("off-diagonal block size", n, e.nrows().max(e.ncols())));
            }
        }
        Ok(Self::new_unchecked(n, diag, off))
    }

    pub(crate) fn new_unchecked(n: usize, diag: Vec<DMatrix<f64>>, off: Vec<DMatrix<f64>>) -> Self {
        BlockTridiagonalMatrix { n, diag, off }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t_len(&self) -> usize {
        self.diag.len()
    }

    pub fn diag_blocks(&self) -> &[DMatrix<f64>] {
        &self.diag
    }

    /// `E(2..T)`; index `t − 2` holds `E(t)`.
    pub fn off_blocks(&self) -> &[DMatrix<f64>] {
        &self.off
    }

    pub fn assemble(&self) -> DMatrix<f64> {
        let n = self.n;
        let size = n * self.t_len();
        let mut full = DMatrix::zeros(size, size);
        for (t, d) in self.diag.iter().enumerate() {
            full.view_mut((t * n, t * n), (n, n)).copy_from(d);
        }
        for (k, e) in self.off.iter().enumerate() {
            let t = k + 1;
            full.view_mut((t * n, (t - 1) * n), (n, n)).copy_from(e);
            full.view_mut(((t - 1) * n, t * n), (n, n)).copy_from(&e.transpose());
        }
        full
    }
}

/// Dense space-time kernel `K̃` whose inverse is the given block-tridiagonal
/// matrix.
pub fn space_time_kernel_from_inverse(inv: &BlockTridiagonalMatrix) -> Result<KernelMatrix> {
    let full = inv.assemble();
    let chol = nalgebra::Cholesky::new(linalg::symmetrize(&full))
        .ok_or(Error::NotPositiveDefinite("block-tridiagonal inverse kernel"))?;
    Ok(KernelMatrix::from_parts_unchecked(
        linalg::symmetrize(&chol.inverse()),
        Provenance::SpaceTime,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{eigendecompose, laplacian, validate_graph};

    fn path2_decomp() -> SpectralDecomposition {
        let g = validate_graph(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        eigendecompose(&laplacian(&g)).unwrap()
    }

    #[test]
    fn spectral_map_examples() {
        let r = spectral_map_eval(&SpectralMapSpec::Diffusion { sigma2: 0.0 }, 5.0, None).unwrap();
        assert_eq!(r, 1.0);
        let r = spectral_map_eval(&SpectralMapSpec::RegularizedLaplacian { sigma2: 2.0 }, 3.0, None)
            .unwrap();
        assert_eq!(r, 7.0);
        let bl = SpectralMapSpec::Bandlimited {
            beta: 15.0,
            lambda_max: 1.0,
        };
        assert_eq!(spectral_map_eval(&bl, 2.0, None).unwrap(), 15.0);
        assert_eq!(spectral_map_eval(&bl, 0.5, None).unwrap(), 1.0 / 15.0);
        let rw = SpectralMapSpec::PStepRandomWalk { a: 2.0, p: 1.0 };
        assert!(matches!(spectral_map_eval(&rw, 2.0, None), Err(Error::PoleAtEigenvalue(_))));
        assert_eq!(spectral_map_eval(&rw, 1.5, None).unwrap(), 2.0);
    }

    #[test]
    fn band_reject_is_rank_based() {
        let spec = SpectralMapSpec::BandReject { k: 3, l: 6, beta: 15.0 };
        let at = |index| spectral_map_eval(&spec, 0.0, Some(SpectralRank { index, n: 20 })).unwrap();
        // 1-based ranks 3..=14 are rejected.
        assert_eq!(at(1), 1.0 / 15.0);
        assert_eq!(at(2), 15.0);
        assert_eq!(at(13), 15.0);
        assert_eq!(at(14), 1.0 / 15.0);
        assert!(spectral_map_eval(&spec, 0.0, None).is_err());
    }

    #[test]
    fn invalid_parameters_rejected() {
        for spec in [
            SpectralMapSpec::Diffusion { sigma2: -1.0 },
            SpectralMapSpec::PStepRandomWalk { a: 1.0, p: 1.0 },
            SpectralMapSpec::PStepRandomWalk { a: 3.0, p: -1.0 },
            SpectralMapSpec::Bandlimited { beta: 0.0, lambda_max: 1.0 },
        ] {
            assert!(spec.validate().is_err(), "{spec:?}");
        }
    }

    #[test]
    fn spec_json_shape() {
        let spec: SpectralMapSpec = serde_json::from_str(r#"{ "kind": "diffusion", "sigma2": 1.2 }"#).unwrap();
        assert_eq!(spec, SpectralMapSpec::Diffusion { sigma2: 1.2 });
        let s = serde_json::to_string(&SpectralMapSpec::BandReject { k: 3, l: 6, beta: 15.0 }).unwrap();
        assert_eq!(s, r#"{"kind":"band_reject","k":3,"l":6,"beta":15.0}"#);
    }

    #[test]
    fn laplacian_kernel_examples() {
        let single = eigendecompose(&DMatrix::zeros(1, 1)).unwrap();
        let k = laplacian_kernel(&single, &SpectralMapSpec::Diffusion { sigma2: 3.0 }).unwrap();
        assert_eq!(k.matrix()[(0, 0)], 1.0);

        let d = path2_decomp();
        let k = laplacian_kernel(&d, &SpectralMapSpec::Diffusion { sigma2: 0.0 }).unwrap();
        assert!((k.matrix() - DMatrix::identity(2, 2)).amax() < 1e-14);

        let k = laplacian_kernel(&d, &SpectralMapSpec::Diffusion { sigma2: 2.0 * 2f64.ln() }).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.625, 0.375, 0.375, 0.625]);
        assert!((k.matrix() - expected).amax() < 1e-12);
    }

    #[test]
    fn covariance_examples() {
        let rep = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert_eq!(covariance_kernel(&rep).unwrap().into_matrix(), DMatrix::zeros(2, 2));
        let two = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        let c = covariance_kernel(&two).unwrap();
        assert!((c.matrix() - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).amax() < 1e-15);
        assert!(matches!(covariance_kernel(&DMatrix::zeros(0, 3)), Err(Error::EmptyHistory)));
    }

    #[test]
    fn combine_examples() {
        let d = path2_decomp();
        let dict = KernelDictionary::laplacian(
            &d,
            &[SpectralMapSpec::Diffusion { sigma2: 1.0 }, SpectralMapSpec::Diffusion { sigma2: 0.0 }],
        )
        .unwrap();
        let k1 = combine(&dict, &[1.0, 0.0]).unwrap();
        assert!((k1.matrix() - dict.members()[0].matrix()).amax() < 1e-14);
        assert_eq!(combine(&dict, &[0.0, 0.0]).unwrap().into_matrix(), DMatrix::zeros(2, 2));
        assert!(matches!(combine(&dict, &[1.0, -1.0]), Err(Error::NegativeCoefficient(1))));
        assert!(matches!(combine(&dict, &[1.0]), Err(Error::DimensionMismatch { .. })));

        let ids = KernelDictionary::new(vec![KernelMatrix::identity(2), KernelMatrix::identity(2)]).unwrap();
        let half = combine(&ids, &[0.5, 0.5]).unwrap();
        assert_eq!(half.into_matrix(), DMatrix::identity(2, 2));
    }

    #[test]
    fn rkhs_norm_examples() {
        let f = DVector::from_vec(vec![3.0, -4.0]);
        assert!((rkhs_norm_sq(&KernelMatrix::identity(2), &f).unwrap() - 25.0).abs() < 1e-12);
        let two = KernelMatrix::new(DMatrix::identity(2, 2) * 2.0).unwrap();
        let v = rkhs_norm_sq(&two, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        let rank_one = KernelMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(matches!(
            rkhs_norm_sq(&rank_one, &DVector::from_vec(vec![0.0, 1.0])),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn kernel_validation() {
        assert!(matches!(
            KernelMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0])),
            Err(Error::NotSymmetric)
        ));
        assert!(matches!(
            KernelMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn space_time_examples() {
        let id = BlockTridiagonalMatrix::new(
            2,
            vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)],
            vec![DMatrix::zeros(2, 2)],
        )
        .unwrap();
        let k = space_time_kernel_from_inverse(&id).unwrap();
        assert_eq!(k.into_matrix(), DMatrix::identity(4, 4));

        let scalar = BlockTridiagonalMatrix::new(1, vec![DMatrix::from_element(1, 1, 2.0)], vec![]).unwrap();
        assert!((space_time_kernel_from_inverse(&scalar).unwrap().matrix()[(0, 0)] - 0.5).abs() < 1e-15);

        let indefinite = BlockTridiagonalMatrix::new(
            1,
            vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)],
            vec![DMatrix::from_element(1, 1, 2.0)],
        )
        .unwrap();
        assert!(matches!(
            space_time_kernel_from_inverse(&indefinite),
            Err(Error::NotPositiveDefinite(_))
        ));
    }
}
