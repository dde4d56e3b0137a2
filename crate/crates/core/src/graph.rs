//! Undirected weighted graphs, their Laplacians and spectra, and extended
//! (time-replicated) graphs.
//!
//! A [`Graph`] is only constructed through [`validate_graph`], so every value
//! of the type is symmetric, non-negative and free of self-loops.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::BlockTridiagonalMatrix;
use crate::linalg;

/// Eigenvalues within this distance below zero are clipped to zero.
pub const EIGEN_CLIP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: DMatrix<f64>,
}

impl Graph {
    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn into_adjacency(self) -> DMatrix<f64> {
        self.adjacency
    }

    /// Unordered edges `(i, j, w)` with `i < j` and `w != 0`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let w = self.adjacency[(i, j)];
                if w != 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        laplacian(self)
    }
}

/// Checks symmetry, non-negativity and the zero diagonal, reporting the
/// first offending entry in row-major order.
pub fn validate_graph(adjacency: DMatrix<f64>) -> Result<Graph> {
    let n = linalg::ensure_square(&adjacency)?;
    for i in 0..n {
        if adjacency[(i, i)] != 0.0 {
            return Err(Error::SelfLoop(i));
        }
        for j in 0..n {
            let w = adjacency[(i, j)];
            if !w.is_finite() {
                return Err(Error::Parse(format!("non-finite weight at ({i}, {j})")));
            }
            if w < 0.0 {
                return Err(Error::NegativeWeight(i, j));
            }
            if j > i && w != adjacency[(j, i)] {
                return Err(Error::AsymmetricAdjacency(i, j));
            }
        }
    }
    Ok(Graph { adjacency })
}

/// `L = diag(A·1) − A`.
pub fn laplacian(g: &Graph) -> DMatrix<f64> {
    let a = g.adjacency();
    let degrees = a.column_sum();
    DMatrix::from_diagonal(&degrees) - a
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Ascending.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Orthonormal columns, matched to [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// `U diag(d) Uᵀ`.
    pub fn synthesize(&self, diag: &DVector<f64>) -> DMatrix<f64> {
        linalg::reconstruct(&self.eigenvectors, diag)
    }

    /// Graph Fourier transform `Uᵀ f`.
    pub fn gft(&self, f: &DVector<f64>) -> Result<DVector<f64>> {
        if f.len() != self.n() {
            return Err(Error::dim("graph Fourier transform", self.n(), f.len()));
        }
        Ok(self.eigenvectors.tr_mul(f))
    }
}

/// Symmetric eigendecomposition in ascending order.
pub fn eigendecompose(l: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    let n = linalg::ensure_square(l)?;
    let scale = l.amax().max(1.0);
    if linalg::max_asymmetry(l) > 1e-12 * scale {
        return Err(Error::NotSymmetric);
    }
    let (mut eigenvalues, eigenvectors) = linalg::sorted_symmetric_eigen(l);
    for v in eigenvalues.iter_mut() {
        if *v < 0.0 && *v >= -EIGEN_CLIP_TOL * scale {
            *v = 0.0;
        }
    }
    debug_assert_eq!(eigenvalues.len(), n);
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Quadratic variation `fᵀ L f`.
pub fn smoothness(g: &Graph, f: &DVector<f64>) -> Result<f64> {
    if f.len() != g.n() {
        return Err(Error::dim("smoothness signal", g.n(), f.len()));
    }
    let lf = laplacian(g) * f;
    Ok(f.dot(&lf).max(0.0))
}

/// How consecutive snapshots are wired together in an extended graph.
#[derive(Debug, Clone, PartialEq)]
pub enum CouplingSpec {
    /// Each vertex linked to its own replica at the previous slot with
    /// weight `α`: `B(t) = α I`.
    Diagonal(f64),
    /// Each vertex linked to its neighbours at the previous slot:
    /// `B(t) = A(t−1)`.
    PreviousAdjacency,
    /// `B(2), …, B(T)` given explicitly.
    Explicit(Vec<DMatrix<f64>>),
}

/// `T` stacked snapshots with coupling blocks; the `NT × NT` adjacency is
/// block tridiagonal with `A(t)` on the diagonal, `B(t)` below and `B(t)ᵀ`
/// above it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedGraph {
    n: usize,
    diagonal_blocks: Vec<DMatrix<f64>>,
    coupling_blocks: Vec<DMatrix<f64>>,
}

impl ExtendedGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t_len(&self) -> usize {
        self.diagonal_blocks.len()
    }

    pub fn diagonal_blocks(&self) -> &[DMatrix<f64>] {
        &self.diagonal_blocks
    }

    /// `B(2), …, B(T)`; index `t − 2` holds `B(t)`.
    pub fn coupling_blocks(&self) -> &[DMatrix<f64>] {
        &self.coupling_blocks
    }

    /// Dense `NT × NT` adjacency.
    pub fn assemble(&self) -> DMatrix<f64> {
        let n = self.n;
        let t_len = self.t_len();
        let mut full = DMatrix::zeros(n * t_len, n * t_len);
        for (t, a) in self.diagonal_blocks.iter().enumerate() {
            full.view_mut((t * n, t * n), (n, n)).copy_from(a);
        }
        for (k, b) in self.coupling_blocks.iter().enumerate() {
            let t = k + 1;
            full.view_mut((t * n, (t - 1) * n), (n, n)).copy_from(b);
            full.view_mut(((t - 1) * n, t * n), (n, n))
                .copy_from(&b.transpose());
        }
        full
    }

    /// Laplacian of the assembled adjacency, kept in block form.
    pub fn laplacian_blocks(&self) -> BlockTridiagonalMatrix {
        let n = self.n;
        let t_len = self.t_len();
        let mut diag = Vec::with_capacity(t_len);
        for t in 0..t_len {
            // nalgebra's `column_sum` adds the columns together, i.e. yields row sums.
            let mut degree = self.diagonal_blocks[t].column_sum();
            if t > 0 {
                // Block (t, t−1) is B(t).
                degree += self.coupling_blocks[t - 1].column_sum();
            }
            if t + 1 < t_len {
                // Block (t, t+1) is B(t+1)ᵀ, whose row sums are B(t+1)'s column sums.
                degree += self.coupling_blocks[t].row_sum().transpose();
            }
            diag.push(DMatrix::from_diagonal(&degree) - &self.diagonal_blocks[t]);
        }
        let off = self.coupling_blocks.iter().map(|b| -b).collect();
        BlockTridiagonalMatrix::new_unchecked(n, diag, off)
    }

    /// Inverse kernel `I + σ² L̃` of the regularized-Laplacian map on the
    /// extended graph. Block tridiagonal, so it drives the Kalman recursion
    /// directly.
    pub fn regularized_laplacian_inverse(&self, sigma2: f64) -> Result<BlockTridiagonalMatrix> {
        if !(sigma2 >= 0.0) {
            return Err(Error::InvalidParameter(format!("sigma2 must be >= 0, got {sigma2}")));
        }
        let l = self.laplacian_blocks();
        let n = self.n;
        let diag = l
            .diag_blocks()
            .iter()
            .map(|d| DMatrix::identity(n, n) + d * sigma2)
            .collect();
        let off = l.off_blocks().iter().map(|e| e * sigma2).collect();
        Ok(BlockTridiagonalMatrix::new_unchecked(n, diag, off))
    }
}

/// Builds the extended graph from snapshot graphs sharing one vertex set.
pub fn build_extended_adjacency(
    snapshots: &[Graph],
    couplings: &CouplingSpec,
) -> Result<ExtendedGraph> {
    let first = snapshots
        .first()
        .ok_or_else(|| Error::InvalidParameter("at least one snapshot is required".into()))?;
    let n = first.n();
    for g in snapshots {
        if g.n() != n {
            return Err(Error::dim("snapshot vertex count", n, g.n()));
        }
    }
    let t_len = snapshots.len();
    let coupling_blocks = match couplings {
        CouplingSpec::Diagonal(alpha) => {
            if *alpha < 0.0 || !alpha.is_finite() {
                return Err(Error::NegativeCoupling(*alpha));
            }
            (1..t_len)
                .map(|_| DMatrix::identity(n, n) * *alpha)
                .collect()
        }
        CouplingSpec::PreviousAdjacency => snapshots[..t_len - 1]
            .iter()
            .map(|g| g.adjacency().clone())
            .collect(),
        CouplingSpec::Explicit(blocks) => {
            if blocks.len() != t_len - 1 {
                return Err(Error::dim("coupling block count", t_len - 1, blocks.len()));
            }
            for b in blocks {
                if b.nrows() != n || b.ncols() != n {
                    return Err(Error::dim("coupling block size", n, b.nrows().max(b.ncols())));
                }
                if let Some(w) = b.iter().find(|w| **w < 0.0) {
                    return Err(Error::NegativeCoupling(*w));
                }
            }
            blocks.clone()
        }
    };
    Ok(ExtendedGraph {
        n,
        diagonal_blocks: snapshots.iter().map(|g| g.adjacency().clone()).collect(),
        coupling_blocks,
    })
}

/// On-disk graph representation (`{ "n": .., "adjacency": [[..], ..] }`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphJson {
    pub n: usize,
    pub adjacency: Vec<Vec<f64>>,
}

impl From<&Graph> for GraphJson {
    fn from(g: &Graph) -> Self {
        GraphJson {
            n: g.n(),
            adjacency: g
                .adjacency()
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
        }
    }
}

impl TryFrom<GraphJson> for Graph {
    type Error = Error;

    fn try_from(value: GraphJson) -> Result<Self> {
        if value.adjacency.len() != value.n {
            return Err(Error::dim("adjacency rows", value.n, value.adjacency.len()));
        }
        let mut a = DMatrix::zeros(value.n, value.n);
        for (i, row) in value.adjacency.iter().enumerate() {
            if row.len() != value.n {
                return Err(Error::dim("adjacency columns", value.n, row.len()));
            }
            for (j, w) in row.iter().enumerate() {
                a[(i, j)] = *w;
            }
        }
        validate_graph(a)
    }
}
