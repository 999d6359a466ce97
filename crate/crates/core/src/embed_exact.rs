//! Closed-form embeddings: classical MDS and (scaled) spectral embeddings of
//! the chain Laplacian, plus distance-preservation error measures.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::chain::ChainLaplacian;
use crate::linalg::{self, LinalgError, SymmetricEigen};

/// Relative threshold below which a Laplacian eigenvalue counts as the zero mode.
pub const ZERO_EIGENVALUE_RELATIVE: f64 = 1e-10;
/// Absolute gap under which two Laplacian eigenvalues are considered equal.
pub const DEGENERACY_TOLERANCE: f64 = 1e-10;
/// Relative size of a negative Gram eigenvalue that marks non-Euclidean input.
pub const NON_EUCLIDEAN_RELATIVE: f64 = 1e-8;
/// Gram eigenvalues at or below this fraction of the largest are treated as zero.
pub const GRAM_NOISE_RELATIVE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("invalid squared-distance matrix: {0}")]
    InvalidDistances(String),
    #[error("embedding dimension {dim} is outside 1..={max}")]
    InvalidDimension { dim: usize, max: usize },
    #[error("embedding contains non-finite coordinates")]
    NonFinite,
    #[error("Laplacian has {0} zero eigenvalues; the graph is disconnected")]
    Disconnected(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// One real vector per state; row `i` is the embedding of state `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    coords: DMatrix<f64>,
}

impl EmbeddingTable {
    pub fn new(coords: DMatrix<f64>) -> Result<Self, EmbedError> {
        if coords.ncols() == 0 {
            return Err(EmbedError::InvalidDimension { dim: 0, max: coords.nrows() });
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(Self { coords })
    }

    pub fn n_states(&self) -> usize {
        self.coords.nrows()
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }

    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.coords
    }

    /// Euclidean distance between rows `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.squared_distance(i, j).sqrt()
    }

    pub fn squared_distance(&self, i: usize, j: usize) -> f64 {
        (0..self.dim()).map(|k| (self.coords[(i, k)] - self.coords[(j, k)]).powi(2)).sum()
    }

    pub fn pairwise_distances(&self) -> DMatrix<f64> {
        let n = self.n_states();
        DMatrix::from_fn(n, n, |i, j| self.distance(i, j))
    }

    /// Keeps the first `dim` columns.
    pub fn truncated(&self, dim: usize) -> Result<Self, EmbedError> {
        if dim == 0 || dim > self.dim() {
            return Err(EmbedError::InvalidDimension { dim, max: self.dim() });
        }
        Ok(Self { coords: self.coords.columns(0, dim).into_owned() })
    }
}

/// Symmetric, zero-diagonal, non-negative matrix of squared dissimilarities.
#[derive(Debug, Clone)]
pub struct SquaredDistanceMatrix(DMatrix<f64>);

impl SquaredDistanceMatrix {
    pub fn new(d2: DMatrix<f64>) -> Result<Self, EmbedError> {
        if d2.nrows() != d2.ncols() || d2.nrows() == 0 {
            return Err(EmbedError::InvalidDistances(format!("shape {}x{}", d2.nrows(), d2.ncols())));
        }
        let scale = linalg::max_abs(&d2).max(1.0);
        if d2.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::InvalidDistances("non-finite entry".into()));
        }
        let asym = linalg::asymmetry(&d2);
        if asym > 1e-9 * scale {
            return Err(EmbedError::InvalidDistances(format!("asymmetry {asym:e}")));
        }
        if d2.diagonal().iter().any(|v| *v != 0.0) {
            return Err(EmbedError::InvalidDistances("non-zero diagonal".into()));
        }
        if d2.iter().any(|v| *v < 0.0) {
            return Err(EmbedError::InvalidDistances("negative entry".into()));
        }
        Ok(Self(d2))
    }

    /// Squared Euclidean distances between the rows of `points`.
    pub fn from_points(points: &DMatrix<f64>) -> Self {
        let n = points.nrows();
        let d2 = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else {
                (points.row(i) - points.row(j)).norm_squared()
            }
        });
        Self(d2)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }
}

/// `J A J` with `J = I - 11^T / n`.
pub fn center_matrix(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let nf = n as f64;
    let row_means: Vec<f64> = a.row_iter().map(|r| r.sum() / nf).collect();
    let col_means: Vec<f64> = a.column_iter().map(|c| c.sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    DMatrix::from_fn(n, n, |i, j| a[(i, j)] - row_means[i] - col_means[j] + grand)
}

/// `B = -1/2 J D2 J`.
pub fn double_center(d2: &SquaredDistanceMatrix) -> DMatrix<f64> {
    center_matrix(d2.matrix()) * -0.5
}

/// Raised when the Gram matrix has a significantly negative eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonEuclideanInput {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

#[derive(Debug, Clone)]
pub struct MdsEmbedding {
    pub table: EmbeddingTable,
    /// All Gram eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub warning: Option<NonEuclideanInput>,
}

/// Classical MDS: `X = Q_+ Lambda_+^{1/2}` truncated to the `dim` largest eigenvalues.
pub fn classical_mds(d2: &SquaredDistanceMatrix, dim: usize) -> Result<MdsEmbedding, EmbedError> {
    let n = d2.n();
    if dim == 0 || dim > n {
        return Err(EmbedError::InvalidDimension { dim, max: n });
    }
    let b = double_center(d2);
    let eig = SymmetricEigen::new(&b)?;
    let eigenvalues: Vec<f64> = eig.values.iter().rev().copied().collect();
    let max = eigenvalues[0].max(0.0);
    let min = *eigenvalues.last().unwrap();
    let warning = (min < -NON_EUCLIDEAN_RELATIVE * max)
        .then_some(NonEuclideanInput { min_eigenvalue: min, max_eigenvalue: max });
    let mut coords = DMatrix::zeros(n, dim);
    for c in 0..dim {
        let k = n - 1 - c;
        let lambda = eig.values[k];
        if lambda <= GRAM_NOISE_RELATIVE * max {
            continue;
        }
        let s = lambda.sqrt();
        for r in 0..n {
            coords[(r, c)] = eig.vectors[(r, k)] * s;
        }
    }
    Ok(MdsEmbedding { table: EmbeddingTable::new(coords)?, eigenvalues, warning })
}

#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    pub table: EmbeddingTable,
    /// The non-zero Laplacian eigenvalues used, ascending.
    pub eigenvalues: Vec<f64>,
    /// True when the cut between kept and dropped eigenvalues splits a
    /// degenerate eigenspace, so the embedding is not unique.
    pub degenerate: bool,
}

/// Unit eigenvectors of `L` for its `dim` smallest non-zero eigenvalues.
pub fn spectral_embedding(lap: &ChainLaplacian, dim: usize) -> Result<SpectralEmbedding, EmbedError> {
    let n = lap.n_states();
    if dim == 0 || dim + 1 > n {
        return Err(EmbedError::InvalidDimension { dim, max: n.saturating_sub(1) });
    }
    let eig = SymmetricEigen::new(&lap.laplacian)?;
    let lambda_max = eig.values[n - 1];
    let zeros = eig.values.iter().filter(|&&v| v < ZERO_EIGENVALUE_RELATIVE * lambda_max).count();
    if zeros != 1 {
        return Err(EmbedError::Disconnected(zeros));
    }
    let cols: Vec<usize> = (zeros..zeros + dim).collect();
    let eigenvalues: Vec<f64> = cols.iter().map(|&k| eig.values[k]).collect();
    let degenerate = zeros + dim < n && (eig.values[zeros + dim] - eig.values[zeros + dim - 1]).abs() <= DEGENERACY_TOLERANCE;
    let coords = DMatrix::from_fn(n, dim, |r, c| eig.vectors[(r, cols[c])]);
    Ok(SpectralEmbedding { table: EmbeddingTable::new(coords)?, eigenvalues, degenerate })
}

/// Spectral embedding with column `k` scaled by `sqrt(V_G / lambda_k)`; at
/// full rank pairwise distances equal `sqrt(n(i, j))`.
pub fn scaled_spectral_embedding(lap: &ChainLaplacian, dim: usize) -> Result<SpectralEmbedding, EmbedError> {
    let mut emb = spectral_embedding(lap, dim)?;
    let coords = emb.table.coords_mut();
    for (c, lambda) in emb.eigenvalues.iter().enumerate() {
        let s = (lap.volume / lambda).sqrt();
        coords.column_mut(c).scale_mut(s);
    }
    Ok(emb)
}

/// Embedding distance and target for every unordered pair `i < j`, with the
/// embedding distances optionally rescaled by `max target / max distance`.
pub fn pair_distances(table: &EmbeddingTable, targets: &DMatrix<f64>, rescale: bool) -> Result<Vec<(f64, f64)>, EmbedError> {
    let n = table.n_states();
    if targets.nrows() != n || targets.ncols() != n {
        return Err(EmbedError::Shape(format!("{n} states vs {}x{} targets", targets.nrows(), targets.ncols())));
    }
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push((targets[(i, j)], table.distance(i, j)));
        }
    }
    if rescale {
        let max_t = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
        let max_d = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
        if max_d > 0.0 {
            let s = max_t / max_d;
            pairs.iter_mut().for_each(|p| p.1 *= s);
        }
    }
    Ok(pairs)
}

/// Root-mean-square error between embedding distances and targets over unordered pairs.
pub fn embedding_rmse(table: &EmbeddingTable, targets: &DMatrix<f64>, rescale: bool) -> Result<f64, EmbedError> {
    let pairs = pair_distances(table, targets, rescale)?;
    Ok(rmse(&pairs))
}

pub fn rmse(pairs: &[(f64, f64)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    (pairs.iter().map(|(t, d)| (t - d).powi(2)).sum::<f64>() / pairs.len() as f64).sqrt()
}
