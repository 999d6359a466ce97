//! Exact-oracle identity suite shared by `ectd verify` and the acceptance tests.

use ectd_core::chain::{
    build_laplacian, max_triangle_violation, recursion_residual, ChainLaplacian, MarkovChain, PassageTables,
};
use ectd_core::embed_exact::{center_matrix, classical_mds, scaled_spectral_embedding, SquaredDistanceMatrix};
use ectd_core::gridworld::{build_biased_maze, build_u_maze, build_uniform_maze};
use ectd_core::linalg::{asymmetry, max_abs, SymmetricEigen};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Detailed-balance gap below which a chain counts as reversible.
pub const REVERSIBLE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// The identity presumes a reversible chain and this one is not.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub chain: String,
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub status: Status,
}

impl Check {
    fn new(chain: &str, name: &'static str, value: f64, tolerance: f64) -> Self {
        let status = if value <= tolerance { Status::Pass } else { Status::Fail };
        Check { chain: chain.to_string(), name, value, tolerance, status }
    }
}

pub struct NamedChain {
    pub label: String,
    pub chain: MarkovChain,
}

/// The chains every verification run covers.
pub fn standard_chains() -> Vec<NamedChain> {
    let rows = |r: &[&[f64]]| MarkovChain::from_rows(&r.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).expect("valid chain");
    let u = build_u_maze(9).expect("default size").random_walk_chain().expect("connected");
    vec![
        NamedChain { label: "swap".into(), chain: rows(&[&[0.0, 1.0], &[1.0, 0.0]]) },
        NamedChain { label: "lazy".into(), chain: rows(&[&[0.5, 0.5], &[0.5, 0.5]]) },
        NamedChain { label: "ring3".into(), chain: rows(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]]) },
        NamedChain { label: "uniform5x5".into(), chain: build_uniform_maze().1 },
        NamedChain { label: "biased5x5".into(), chain: build_biased_maze().1 },
        NamedChain { label: "umaze9".into(), chain: u },
    ]
}

/// Runs every identity on one chain. With `gate_reversible`, identities that
/// presume detailed balance are reported as skipped on non-reversible chains.
pub fn identity_checks(label: &str, chain: &MarkovChain, lap: &ChainLaplacian, gate_reversible: bool) -> Vec<Check> {
    let tables = PassageTables::compute(chain).expect("chain was validated");
    let n = chain.n_states();
    let rho = chain.stationary();
    let mut out = Vec::new();

    let drift = chain.transition().transpose() * rho - rho;
    out.push(Check::new(label, "stationary_residual", drift.amax(), 1e-10));
    out.push(Check::new(label, "passage_recursion", recursion_residual(chain, &tables.first_passage), 1e-8));
    let diag = (0..n).map(|i| tables.commute[(i, i)].abs()).fold(0.0, f64::max);
    let metric = asymmetry(&tables.commute).max(diag).max(max_triangle_violation(&tables.commute));
    out.push(Check::new(label, "commute_metric", metric, 1e-8));

    let row_sums = DVector::from_iterator(n, lap.weights.row_iter().map(|r| r.sum()));
    out.push(Check::new(label, "weight_row_sums", (row_sums - rho).amax(), 1e-12));
    out.push(Check::new(label, "graph_volume", (lap.volume - 1.0).abs(), 1e-12));
    let l = &lap.laplacian;
    out.push(Check::new(label, "pinv_generalized_inverse", max_abs(&(l * &lap.pseudo_inverse * l - l)), 1e-8));
    let ones = DVector::from_element(n, 1.0);
    out.push(Check::new(label, "pinv_annihilates_ones", (&lap.pseudo_inverse * ones).amax(), 1e-9));
    let eig = SymmetricEigen::new(l).expect("laplacian is symmetric");
    out.push(Check::new(label, "laplacian_eigen_residual", eig.max_residual(l), 1e-9));

    let mut gated = Vec::new();
    gated.push(Check::new(label, "first_passage_from_pinv", max_abs(&(lap.first_passage() - &tables.first_passage)), 1e-7));
    gated.push(Check::new(label, "commute_from_pinv", max_abs(&(lap.commute_times() - &tables.commute)), 1e-8));
    let b = center_matrix(&tables.commute) * -0.5;
    gated.push(Check::new(label, "double_centered_commute", max_abs(&(b - &lap.pseudo_inverse * lap.volume)), 1e-8));
    let sqrt_n = tables.commute.map(f64::sqrt);
    let scaled = scaled_spectral_embedding(lap, n - 1).map(|e| max_abs(&(e.table.pairwise_distances() - &sqrt_n)));
    gated.push(Check::new(label, "scaled_spectral_full_rank", scaled.unwrap_or(f64::INFINITY), 1e-7));
    let mds = SquaredDistanceMatrix::new(tables.commute.clone())
        .ok()
        .and_then(|d2| classical_mds(&d2, n - 1).ok())
        .map(|m| max_abs(&(m.table.pairwise_distances().map(|v| v * v) - &tables.commute)));
    gated.push(Check::new(label, "cmds_full_rank", mds.unwrap_or(f64::INFINITY), 1e-7));

    if gate_reversible && !chain.is_reversible(REVERSIBLE_TOLERANCE) {
        for c in &mut gated {
            c.status = Status::Skipped;
        }
    }
    out.extend(gated);
    out
}

/// The full verification suite; `inject_fault` perturbs `L+[0][1]` (and its mirror) on every chain.
pub fn verify_suite(inject_fault: bool) -> Vec<Check> {
    let mut out = Vec::new();
    for nc in standard_chains() {
        let mut lap = build_laplacian(&nc.chain).expect("standard chains are connected");
        if inject_fault {
            perturb(&mut lap.pseudo_inverse, 1e-3);
        }
        out.extend(identity_checks(&nc.label, &nc.chain, &lap, true));
    }
    out
}

fn perturb(m: &mut DMatrix<f64>, by: f64) {
    m[(0, 1)] += by;
    m[(1, 0)] += by;
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.status != Status::Fail)
}

/// Fixed-width table for terminal output.
pub fn render_table(checks: &[Check]) -> String {
    let mut s = format!("{:<12} {:<28} {:>12} {:>9}  {}\n", "chain", "check", "value", "tol", "status");
    for c in checks {
        let status = match c.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "skipped (non-reversible)",
        };
        s.push_str(&format!("{:<12} {:<28} {:>12.3e} {:>9.0e}  {}\n", c.chain, c.name, c.value, c.tolerance, status));
    }
    s
}
