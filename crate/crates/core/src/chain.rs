//! Exact quantities of a finite ergodic Markov chain.
//!
//! `P[(i, j)]` is the probability of moving from state `i` to state `j`.
//! First-passage tables follow the same orientation: `M[(i, j)] = m(j|i)`,
//! the expected number of steps to first reach `j` when starting in `i`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{self, LinalgError};

/// Row-sum tolerance for transition matrices.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("transition matrix must be square and non-empty, got {rows}x{cols}")]
    Shape { rows: usize, cols: usize },
    #[error("row {row} is not a probability distribution (sum {sum}, min {min})")]
    NotStochastic { row: usize, sum: f64, min: f64 },
    #[error("chain is reducible: state {0} cannot reach every other state")]
    Reducible(usize),
    #[error("stationary system is singular; the chain has no unique stationary distribution")]
    SingularChain,
    #[error("linear solve failed: {0}")]
    SingularSolve(#[from] LinalgError),
}

/// A validated irreducible chain together with its stationary distribution.
#[derive(Debug, Clone)]
pub struct MarkovChain {
    transition: DMatrix<f64>,
    stationary: DVector<f64>,
}

impl MarkovChain {
    /// Validates `transition` (row-stochastic, strongly connected support) and
    /// caches its stationary distribution.
    pub fn new(transition: DMatrix<f64>) -> Result<Self, ChainError> {
        let (rows, cols) = transition.shape();
        if rows == 0 || rows != cols {
            return Err(ChainError::Shape { rows, cols });
        }
        for i in 0..rows {
            let row = transition.row(i);
            let sum: f64 = row.iter().sum();
            let min = row.iter().copied().fold(f64::INFINITY, f64::min);
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE || min < 0.0 || !sum.is_finite() {
                return Err(ChainError::NotStochastic { row: i, sum, min });
            }
        }
        if let Some(bad) = unreachable_state(&transition) {
            return Err(ChainError::Reducible(bad));
        }
        let stationary = stationary_distribution(&transition)?;
        Ok(Self { transition, stationary })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ChainError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(ChainError::Shape { rows: n, cols: rows.first().map_or(0, Vec::len) });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(n, n, &flat))
    }

    pub fn n_states(&self) -> usize {
        self.transition.nrows()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn stationary(&self) -> &DVector<f64> {
        &self.stationary
    }

    /// Largest detailed-balance violation `|rho_i P_ij - rho_j P_ji|`.
    pub fn detailed_balance_gap(&self) -> f64 {
        let n = self.n_states();
        let (p, rho) = (&self.transition, &self.stationary);
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((rho[i] * p[(i, j)] - rho[j] * p[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_reversible(&self, tol: f64) -> bool {
        self.detailed_balance_gap() <= tol
    }
}

/// Returns a state from which some other state is unreachable, or that is
/// unreachable from state 0, when the support digraph is not strongly connected.
fn unreachable_state(p: &DMatrix<f64>) -> Option<usize> {
    let n = p.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let w = if forward { p[(u, v)] } else { p[(v, u)] };
                if w > 0.0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    };
    let fwd = reach(true);
    let bwd = reach(false);
    (0..n).find(|&s| !fwd[s] || !bwd[s])
}

/// Solves `(P^T - I) rho = 0` with the last equation replaced by `sum(rho) = 1`.
///
/// A direct solve handles periodic chains, where power iteration oscillates.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<DVector<f64>, ChainError> {
    let n = p.nrows();
    if n == 0 || n != p.ncols() {
        return Err(ChainError::Shape { rows: n, cols: p.ncols() });
    }
    let mut a = p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let rho = linalg::solve_vector(&a, &b).map_err(|_| ChainError::SingularChain)?;
    // A unique solution with negative entries would mean a transient class.
    if rho.iter().any(|&x| x <= 0.0) {
        return Err(ChainError::SingularChain);
    }
    Ok(rho)
}

/// `Z = (I - P + 1 rho^T)^{-1}`.
pub fn fundamental_matrix(chain: &MarkovChain) -> Result<DMatrix<f64>, ChainError> {
    let n = chain.n_states();
    let rho = chain.stationary();
    let ones = DVector::from_element(n, 1.0);
    let a = DMatrix::identity(n, n) - chain.transition() + ones * rho.transpose();
    Ok(linalg::inverse(&a)?)
}

/// `M[(i, j)] = (Z_jj - Z_ij) / rho_j`, with an exact zero diagonal.
pub fn first_passage_matrix(chain: &MarkovChain, z: &DMatrix<f64>) -> DMatrix<f64> {
    let n = chain.n_states();
    let rho = chain.stationary();
    DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { (z[(j, j)] - z[(i, j)]) / rho[j] })
}

/// `N = M + M^T`.
pub fn commute_matrix(m: &DMatrix<f64>) -> DMatrix<f64> {
    m + m.transpose()
}

/// Largest residual of `m(j|i) = 1 + sum_k P(k|i) m(j|k)` over all `i != j`.
pub fn recursion_residual(chain: &MarkovChain, m: &DMatrix<f64>) -> f64 {
    let n = chain.n_states();
    let p = chain.transition();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let expected: f64 = 1.0 + (0..n).filter(|&k| k != j).map(|k| p[(i, k)] * m[(k, j)]).sum::<f64>();
            worst = worst.max((m[(i, j)] - expected).abs());
        }
    }
    worst
}

/// Largest violation of `N_ik <= N_ij + N_jk` over all ordered triples.
pub fn max_triangle_violation(d: &DMatrix<f64>) -> f64 {
    let n = d.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                worst = worst.max(d[(i, k)] - d[(i, j)] - d[(j, k)]);
            }
        }
    }
    worst
}

/// First-passage, commute and fundamental matrices of one chain.
#[derive(Debug, Clone)]
pub struct PassageTables {
    pub first_passage: DMatrix<f64>,
    pub commute: DMatrix<f64>,
    pub fundamental: DMatrix<f64>,
}

impl PassageTables {
    pub fn compute(chain: &MarkovChain) -> Result<Self, ChainError> {
        let fundamental = fundamental_matrix(chain)?;
        let first_passage = first_passage_matrix(chain, &fundamental);
        let commute = commute_matrix(&first_passage);
        Ok(Self { first_passage, commute, fundamental })
    }

    /// Action distance `n(i, j) / 2`.
    pub fn action_distance(&self) -> DMatrix<f64> {
        &self.commute * 0.5
    }
}

/// Laplacian of the symmetrised policy graph
/// `W_uv = rho_u P(v|u) / 2 + rho_v P(u|v) / 2`.
#[derive(Debug, Clone)]
pub struct ChainLaplacian {
    pub weights: DMatrix<f64>,
    pub degree: DVector<f64>,
    pub laplacian: DMatrix<f64>,
    pub pseudo_inverse: DMatrix<f64>,
    pub volume: f64,
}

impl ChainLaplacian {
    pub fn n_states(&self) -> usize {
        self.degree.len()
    }

    /// `n(i, j) = V_G (l+_ii + l+_jj - 2 l+_ij)` for every pair.
    pub fn commute_times(&self) -> DMatrix<f64> {
        let lp = &self.pseudo_inverse;
        let n = self.n_states();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else {
                self.volume * (lp[(i, i)] + lp[(j, j)] - 2.0 * lp[(i, j)])
            }
        })
    }

    pub fn first_passage(&self) -> DMatrix<f64> {
        first_passage_from_pinv(&self.pseudo_inverse, &self.degree)
    }
}

pub fn build_laplacian(chain: &MarkovChain) -> Result<ChainLaplacian, ChainError> {
    let n = chain.n_states();
    let p = chain.transition();
    let rho = chain.stationary();
    let weights = DMatrix::from_fn(n, n, |u, v| 0.5 * rho[u] * p[(u, v)] + 0.5 * rho[v] * p[(v, u)]);
    let degree = DVector::from_iterator(n, weights.row_iter().map(|r| r.sum()));
    let laplacian = DMatrix::from_diagonal(&degree) - &weights;
    let volume = degree.sum();
    debug_assert!((volume - 1.0).abs() < 1e-10, "graph volume {volume}");
    let pseudo_inverse = laplacian_pseudo_inverse(&laplacian)?;
    Ok(ChainLaplacian { weights, degree, laplacian, pseudo_inverse, volume })
}

/// `L+ = (L + 11^T/n)^{-1} - 11^T/n` for the Laplacian of a connected graph.
pub fn laplacian_pseudo_inverse(l: &DMatrix<f64>) -> Result<DMatrix<f64>, ChainError> {
    let n = l.nrows();
    let avg = DMatrix::from_element(n, n, 1.0 / n as f64);
    let inv = linalg::inverse(&(l + &avg))?;
    Ok(inv - avg)
}

/// `m(j|i) = sum_k (l+_ik - l+_ij - l+_jk + l+_jj) d_kk`.
pub fn first_passage_from_pinv(l_pinv: &DMatrix<f64>, degree: &DVector<f64>) -> DMatrix<f64> {
    let n = l_pinv.nrows();
    // sum_k l+_ik d_k, shared by both i and j terms.
    let weighted = l_pinv * degree;
    let total = degree.sum();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            weighted[i] - weighted[j] + (l_pinv[(j, j)] - l_pinv[(i, j)]) * total
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(rows: &[&[f64]]) -> MarkovChain {
        MarkovChain::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn swap() -> MarkovChain {
        chain(&[&[0.0, 1.0], &[1.0, 0.0]])
    }

    fn lazy() -> MarkovChain {
        chain(&[&[0.5, 0.5], &[0.5, 0.5]])
    }

    fn ring() -> MarkovChain {
        chain(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]])
    }

    fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
        (a - b).iter().all(|x| x.abs() < tol)
    }

    #[test]
    fn stationary_of_two_state_chains() {
        for c in [swap(), lazy()] {
            assert!((c.stationary()[0] - 0.5).abs() < 1e-15);
            assert!((c.stationary()[1] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_chain_is_reducible() {
        let p = DMatrix::identity(2, 2);
        assert!(matches!(stationary_distribution(&p), Err(ChainError::SingularChain)));
        assert!(matches!(MarkovChain::new(p), Err(ChainError::Reducible(_))));
    }

    #[test]
    fn transient_state_is_rejected() {
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.0, 1.0]);
        assert!(matches!(MarkovChain::new(p), Err(ChainError::Reducible(_))));
    }

    #[test]
    fn non_stochastic_row_is_rejected() {
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.6, 1.0, 0.0]);
        assert!(matches!(MarkovChain::new(p), Err(ChainError::NotStochastic { row: 0, .. })));
        let p = DMatrix::from_row_slice(2, 2, &[1.5, -0.5, 1.0, 0.0]);
        assert!(matches!(MarkovChain::new(p), Err(ChainError::NotStochastic { row: 0, .. })));
    }

    #[test]
    fn lazy_chain_fundamental_is_identity() {
        let z = fundamental_matrix(&lazy()).unwrap();
        assert!(close(&z, &DMatrix::identity(2, 2), 1e-14));
    }

    #[test]
    fn first_passage_examples() {
        let t = PassageTables::compute(&swap()).unwrap();
        assert!(close(&t.first_passage, &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), 1e-12));
        assert!(close(&t.commute, &DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]), 1e-12));

        // geometric waiting time with success probability 1/2
        let t = PassageTables::compute(&lazy()).unwrap();
        assert!((t.first_passage[(0, 1)] - 2.0).abs() < 1e-12);
        assert!((t.first_passage[(1, 0)] - 2.0).abs() < 1e-12);

        let t = PassageTables::compute(&ring()).unwrap();
        assert!((t.first_passage[(0, 1)] - 1.0).abs() < 1e-12);
        assert!((t.first_passage[(0, 2)] - 2.0).abs() < 1e-12);
        assert!((t.first_passage[(1, 0)] - 2.0).abs() < 1e-12);
        for (i, j) in [(0, 1), (1, 2), (0, 2)] {
            assert!((t.commute[(i, j)] - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn recursion_holds_on_small_chains() {
        for c in [swap(), lazy(), ring()] {
            let t = PassageTables::compute(&c).unwrap();
            assert!(recursion_residual(&c, &t.first_passage) < 1e-8);
        }
    }

    #[test]
    fn swap_chain_laplacian() {
        let lap = build_laplacian(&swap()).unwrap();
        assert!(close(&lap.weights, &DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]), 1e-15));
        assert!((lap.degree[0] - 0.5).abs() < 1e-15 && (lap.degree[1] - 0.5).abs() < 1e-15);
        assert!((lap.volume - 1.0).abs() < 1e-15);
        let expected = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert!(close(&lap.laplacian, &expected, 1e-15));
        // L is (1/2)(2 J) with J idempotent, so L+ = J / 1 = L here.
        assert!(close(&lap.pseudo_inverse, &expected, 1e-12));
        let lll = &lap.laplacian * &lap.pseudo_inverse * &lap.laplacian;
        assert!(close(&lll, &lap.laplacian, 1e-12));
        assert!(close(&lap.first_passage(), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), 1e-12));
    }

    #[test]
    fn pinv_annihilates_ones() {
        for c in [swap(), lazy(), ring()] {
            let lap = build_laplacian(&c).unwrap();
            let ones = DVector::from_element(c.n_states(), 1.0);
            assert!((&lap.pseudo_inverse * &ones).norm() < 1e-12);
            assert!((&lap.laplacian * &ones).norm() < 1e-15);
        }
    }

    #[test]
    fn disconnected_laplacian_is_singular() {
        let l = DMatrix::from_row_slice(4, 4, &[
            1.0, -1.0, 0.0, 0.0, //
            -1.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, -1.0, //
            0.0, 0.0, -1.0, 1.0,
        ]);
        assert!(matches!(laplacian_pseudo_inverse(&l), Err(ChainError::SingularSolve(_))));
    }

    #[test]
    fn ring_is_not_reversible_and_routes_disagree() {
        // The symmetrised Laplacian describes the reversibilised chain, whose
        // walk on the triangle needs 2 steps on average for every ordered pair.
        let c = ring();
        assert!(!c.is_reversible(1e-9));
        let lap = build_laplacian(&c).unwrap();
        let m = lap.first_passage();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!((m[(i, j)] - 2.0).abs() < 1e-12);
                }
            }
        }
        assert!((lap.commute_times()[(0, 1)] - 4.0).abs() < 1e-12);
    }
}
