//! Trajectory-based first-passage targets and stochastic stress minimisation.
//!
//! Pairs `(i, j, k)` are drawn from within single episodes: two time indices
//! `t < t2` give `i = s_t` and `j = s_t2`, and `k` is the number of steps from
//! `t` to the first visit of `j` at or after `t`. Sampling anchors uniformly
//! over time realises the visitation-weighted mixture of `m(j|i)` and
//! `m(i|j)`, so plain SGD on `(||x_i - x_j||_p^q - k)^2` fits the action
//! distance without explicit pair weights.

use nalgebra::DMatrix;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::MarkovChain;
use crate::embed_exact::{EmbedError, EmbeddingTable};
use crate::stats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OnlineError {
    #[error("trajectory batch has no episode with at least two steps")]
    EmptyBatch,
    #[error("invalid stress configuration: {0}")]
    InvalidConfig(String),
    #[error("loss became non-finite at step {step}; lower the learning rate (currently {learning_rate})")]
    NonFiniteLoss { step: usize, learning_rate: f64 },
    #[error("invalid start distribution: {0}")]
    InvalidStart(String),
    #[error("state {state} out of range for {n_states} states")]
    StateOutOfRange { state: usize, n_states: usize },
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectorySource {
    OnPolicy,
    OffPolicyRandom,
}

/// Episodes of state indices; pairs never span two episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub episodes: Vec<Vec<usize>>,
    pub source: TrajectorySource,
}

impl TrajectoryBatch {
    pub fn new(episodes: Vec<Vec<usize>>, source: TrajectorySource) -> Self {
        Self { episodes, source }
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.iter().all(|e| e.len() < 2)
    }

    pub fn total_steps(&self) -> usize {
        self.episodes.iter().map(Vec::len).sum()
    }

    pub fn validate(&self, n_states: usize) -> Result<(), OnlineError> {
        for &s in self.episodes.iter().flatten() {
            if s >= n_states {
                return Err(OnlineError::StateOutOfRange { state: s, n_states });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StartDistribution {
    State(usize),
    Weights(Vec<f64>),
}

/// Simulates `n_episodes` walks of `horizon` states each under the chain.
pub fn sample_trajectories(
    chain: &MarkovChain,
    n_episodes: usize,
    horizon: usize,
    start: &StartDistribution,
    seed: u64,
) -> Result<TrajectoryBatch, OnlineError> {
    let n = chain.n_states();
    if horizon < 2 {
        return Err(OnlineError::InvalidConfig(format!("horizon {horizon} < 2")));
    }
    let start_dist = match start {
        StartDistribution::State(s) if *s < n => None,
        StartDistribution::State(s) => return Err(OnlineError::StateOutOfRange { state: *s, n_states: n }),
        StartDistribution::Weights(w) if w.len() == n => {
            Some(WeightedIndex::new(w).map_err(|e| OnlineError::InvalidStart(e.to_string()))?)
        }
        StartDistribution::Weights(w) => {
            return Err(OnlineError::InvalidStart(format!("{} weights for {n} states", w.len())))
        }
    };
    let rows: Vec<WeightedIndex<f64>> = (0..n)
        .map(|i| WeightedIndex::new(chain.transition().row(i).iter().copied()).expect("validated stochastic row"))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let episodes = (0..n_episodes)
        .map(|_| {
            let mut s = match (&start_dist, start) {
                (Some(d), _) => d.sample(&mut rng),
                (None, StartDistribution::State(s)) => *s,
                (None, _) => unreachable!(),
            };
            let mut ep = Vec::with_capacity(horizon);
            ep.push(s);
            for _ in 1..horizon {
                s = rows[s].sample(&mut rng);
                ep.push(s);
            }
            ep
        })
        .collect();
    Ok(TrajectoryBatch::new(episodes, TrajectorySource::OnPolicy))
}

/// A first-passage sample: `k` steps from `i` to the first visit of `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PassagePair {
    pub i: usize,
    pub j: usize,
    pub k: u32,
}

/// Draws `n_pairs` within-episode first-passage samples.
///
/// Episodes are chosen with probability proportional to their length; the
/// two time indices are drawn uniformly without replacement and ordered.
pub fn extract_passage_pairs(batch: &TrajectoryBatch, n_pairs: usize, seed: u64) -> Result<Vec<PassagePair>, OnlineError> {
    let weights: Vec<f64> = batch.episodes.iter().map(|e| if e.len() >= 2 { e.len() as f64 } else { 0.0 }).collect();
    let pick = WeightedIndex::new(&weights).map_err(|_| OnlineError::EmptyBatch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let ep = &batch.episodes[pick.sample(&mut rng)];
        let a = rng.gen_range(0..ep.len());
        let mut b = rng.gen_range(0..ep.len() - 1);
        if b >= a {
            b += 1;
        }
        let (t, t2) = if a < b { (a, b) } else { (b, a) };
        let (i, j) = (ep[t], ep[t2]);
        let first = t + ep[t..=t2].iter().position(|&s| s == j).expect("j occurs at t2");
        pairs.push(PassagePair { i, j, k: (first - t) as u32 });
    }
    Ok(pairs)
}

/// Per-pair mean of the extracted `k` and the number of samples behind it.
pub fn mean_targets(pairs: &[PassagePair], n_states: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut sum = DMatrix::<f64>::zeros(n_states, n_states);
    let mut count = DMatrix::<f64>::zeros(n_states, n_states);
    for p in pairs {
        sum[(p.i, p.j)] += f64::from(p.k);
        count[(p.i, p.j)] += 1.0;
    }
    let mean = sum.zip_map(&count, |s, c| if c > 0.0 { s / c } else { f64::NAN });
    (mean, count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    #[serde(rename = "1")]
    L1,
    #[serde(rename = "2")]
    L2,
}

/// Exponents supported for `||x_i - x_j||_p^q`.
pub const SUPPORTED_Q: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressConfig {
    pub dim: usize,
    pub p: Norm,
    pub q: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub init_scale: f64,
    /// Loss-curve resolution: one point per this many steps.
    #[serde(default = "default_log_every")]
    pub log_every: usize,
}

fn default_log_every() -> usize {
    100
}

impl Default for StressConfig {
    fn default() -> Self {
        Self {
            dim: 20,
            p: Norm::L2,
            q: 2.0,
            learning_rate: 1e-5,
            batch_size: 32,
            steps: 10_000,
            seed: 0,
            init_scale: 0.1,
            log_every: default_log_every(),
        }
    }
}

impl StressConfig {
    pub fn validate(&self) -> Result<(), OnlineError> {
        let bad = |m: String| Err(OnlineError::InvalidConfig(m));
        if self.dim == 0 || self.batch_size == 0 || self.log_every == 0 {
            return bad("dim, batch_size and log_every must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !(self.init_scale > 0.0) {
            return bad("learning_rate and init_scale must be positive".into());
        }
        if !SUPPORTED_Q.contains(&self.q) {
            return bad(format!("q = {} not in {{0.5, 1, 2, 4}}", self.q));
        }
        if self.p == Norm::L1 && self.q != 1.0 {
            return bad("the 1-norm is only supported with q = 1".into());
        }
        Ok(())
    }
}

/// `||x_i - x_j||_p^q`.
pub fn predicted_distance(table: &EmbeddingTable, i: usize, j: usize, p: Norm, q: f64) -> f64 {
    let x = table.coords();
    let r = match p {
        Norm::L2 => table.distance(i, j),
        Norm::L1 => (0..table.dim()).map(|k| (x[(i, k)] - x[(j, k)]).abs()).sum(),
    };
    power(r, q)
}

fn power(r: f64, q: f64) -> f64 {
    match q {
        x if x == 1.0 => r,
        x if x == 2.0 => r * r,
        x if x == 0.5 => r.sqrt(),
        x if x == 4.0 => (r * r) * (r * r),
        _ => r.powf(q),
    }
}

/// Pair distance below which the `r^(q-2)` factor is treated as zero for `q < 2`.
pub const ZERO_DISTANCE_GUARD: f64 = 1e-12;

/// Loss `(r^q - k)^2` for one pair and its gradient with respect to `x_i`
/// (the gradient with respect to `x_j` is the negation).
pub fn pair_loss_and_grad(xi: &[f64], xj: &[f64], target: f64, p: Norm, q: f64, grad: &mut [f64]) -> f64 {
    match p {
        Norm::L2 => {
            let r2: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
            let r = r2.sqrt();
            let resid = power(r, q) - target;
            let coef = if r < ZERO_DISTANCE_GUARD && q < 2.0 { 0.0 } else { 2.0 * resid * q * power(r, q - 2.0) };
            for ((g, a), b) in grad.iter_mut().zip(xi).zip(xj) {
                *g = coef * (a - b);
            }
            resid * resid
        }
        Norm::L1 => {
            let r: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b).abs()).sum();
            let resid = r - target;
            for ((g, a), b) in grad.iter_mut().zip(xi).zip(xj) {
                let d = a - b;
                let sign = if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 };
                *g = 2.0 * resid * sign;
            }
            resid * resid
        }
    }
}

/// Stateful minibatch SGD on the stress of a per-state embedding table.
#[derive(Debug, Clone)]
pub struct StressTrainer {
    table: EmbeddingTable,
    cfg: StressConfig,
    rng: ChaCha8Rng,
    steps_done: usize,
}

impl StressTrainer {
    /// Initialises coordinates i.i.d. uniform in `[-init_scale, init_scale]`.
    pub fn new(n_states: usize, cfg: StressConfig) -> Result<Self, OnlineError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let s = cfg.init_scale;
        let coords = DMatrix::from_fn(n_states, cfg.dim, |_, _| rng.gen_range(-s..=s));
        Ok(Self { table: EmbeddingTable::new(coords)?, cfg, rng, steps_done: 0 })
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn config(&self) -> &StressConfig {
        &self.cfg
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.cfg.learning_rate = lr;
    }

    pub fn predicted_distance(&self, i: usize, j: usize) -> f64 {
        predicted_distance(&self.table, i, j, self.cfg.p, self.cfg.q)
    }

    /// One SGD step on a minibatch of `(i, j, target)` triples; returns the mean loss.
    pub fn step<I>(&mut self, batch: I) -> Result<f64, OnlineError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let dim = self.cfg.dim;
        let (p, q) = (self.cfg.p, self.cfg.q);
        let coords = self.table.coords_mut();
        let mut update = DMatrix::zeros(coords.nrows(), dim);
        let mut grad = vec![0.0; dim];
        let (mut xi, mut xj) = (vec![0.0; dim], vec![0.0; dim]);
        let mut total = 0.0;
        let mut count = 0usize;
        for (i, j, target) in batch {
            for k in 0..dim {
                xi[k] = coords[(i, k)];
                xj[k] = coords[(j, k)];
            }
            total += pair_loss_and_grad(&xi, &xj, target, p, q, &mut grad);
            count += 1;
            for k in 0..dim {
                update[(i, k)] += grad[k];
                update[(j, k)] -= grad[k];
            }
        }
        self.steps_done += 1;
        let mean = if count > 0 { total / count as f64 } else { 0.0 };
        if !mean.is_finite() {
            return Err(OnlineError::NonFiniteLoss { step: self.steps_done, learning_rate: self.cfg.learning_rate });
        }
        if count > 0 {
            let lr = self.cfg.learning_rate / count as f64;
            *coords -= update * lr;
            if coords.iter().any(|v| !v.is_finite()) {
                return Err(OnlineError::NonFiniteLoss { step: self.steps_done, learning_rate: self.cfg.learning_rate });
            }
        }
        Ok(mean)
    }

    /// Runs `steps` minibatch steps drawing pairs uniformly with replacement.
    /// Returns the loss curve (mean minibatch loss per `log_every` window).
    pub fn train(&mut self, pairs: &[PassagePair], steps: usize) -> Result<Vec<f64>, OnlineError> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let mut curve = Vec::new();
        let mut window = 0.0;
        let mut in_window = 0;
        for _ in 0..steps {
            let idx: Vec<usize> = (0..self.cfg.batch_size).map(|_| self.rng.gen_range(0..pairs.len())).collect();
            let loss = self.step(idx.into_iter().map(|n| {
                let p = pairs[n];
                (p.i, p.j, f64::from(p.k))
            }))?;
            window += loss;
            in_window += 1;
            if in_window == self.cfg.log_every {
                curve.push(window / in_window as f64);
                window = 0.0;
                in_window = 0;
            }
        }
        if in_window > 0 {
            curve.push(window / in_window as f64);
        }
        Ok(curve)
    }

    pub fn into_table(self) -> EmbeddingTable {
        self.table
    }
}

#[derive(Debug, Clone)]
pub struct TrainedEmbedding {
    pub table: EmbeddingTable,
    pub loss_curve: Vec<f64>,
}

/// Trains a fresh table on `pairs` for `cfg.steps` minibatch steps.
pub fn train_embedding(pairs: &[PassagePair], n_states: usize, cfg: &StressConfig) -> Result<TrainedEmbedding, OnlineError> {
    let mut trainer = StressTrainer::new(n_states, cfg.clone())?;
    let loss_curve = trainer.train(pairs, cfg.steps)?;
    Ok(TrainedEmbedding { table: trainer.into_table(), loss_curve })
}

/// Full-batch stress over explicit targets `(i, j, value)`.
pub fn total_stress(table: &EmbeddingTable, targets: &[(usize, usize, f64)], p: Norm, q: f64) -> f64 {
    targets.iter().map(|&(i, j, t)| (predicted_distance(table, i, j, p, q) - t).powi(2)).sum()
}

/// Error of a trained table against the exact action distance, split into
/// deciles of the true distance.
#[derive(Debug, Clone, PartialEq)]
pub struct DecileError {
    pub decile: usize,
    pub pairs: usize,
    pub mean_abs_error: f64,
    pub mean_rel_error: f64,
}

/// Compares `c * sqrt(predicted_distance)` with `sqrt(action_distance)` per
/// decile of the true distance, where `c` is the least-squares scale over all
/// unordered pairs.
pub fn decile_errors(table: &EmbeddingTable, p: Norm, q: f64, action_distance: &DMatrix<f64>) -> Vec<DecileError> {
    let n = table.n_states();
    let mut truth = Vec::new();
    let mut est = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            truth.push(action_distance[(i, j)].sqrt());
            est.push(predicted_distance(table, i, j, p, q).sqrt());
        }
    }
    let num: f64 = truth.iter().zip(&est).map(|(t, e)| t * e).sum();
    let den: f64 = est.iter().map(|e| e * e).sum();
    let c = if den > 0.0 { num / den } else { 0.0 };
    let bins = stats::quantile_bins(&truth, 10);
    (0..10)
        .map(|d| {
            let idx: Vec<usize> = (0..truth.len()).filter(|&k| bins[k] == d).collect();
            let abs: Vec<f64> = idx.iter().map(|&k| (c * est[k] - truth[k]).abs()).collect();
            let rel: Vec<f64> = idx.iter().map(|&k| (c * est[k] - truth[k]).abs() / truth[k]).collect();
            DecileError { decile: d, pairs: idx.len(), mean_abs_error: stats::mean(&abs), mean_rel_error: stats::mean(&rel) }
        })
        .collect()
}

/// Spearman correlation between predicted distances and a reference matrix over unordered pairs.
pub fn spearman_vs(table: &EmbeddingTable, p: Norm, q: f64, reference: &DMatrix<f64>) -> f64 {
    let n = table.n_states();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            a.push(predicted_distance(table, i, j, p, q));
            b.push(reference[(i, j)]);
        }
    }
    stats::spearman(&a, &b)
}

/// Settings shared by every `q` in a q-effect study.
#[derive(Debug, Clone, PartialEq)]
pub struct QEffectSettings {
    pub base: StressConfig,
    pub qs: Vec<f64>,
    /// Learning rate per entry of `qs`; gradients scale very differently with `q`.
    pub learning_rates: Vec<f64>,
    /// Uniform init half-width per entry of `qs`.
    pub init_scales: Vec<f64>,
    pub seeds: Vec<u64>,
    pub n_episodes: usize,
    pub horizon: usize,
    pub n_pairs: usize,
}

impl QEffectSettings {
    /// Pilot-tuned grid for the 5x5 uniform maze: q in {0.5, 1, 2, 4}, 30k steps per run.
    pub fn uniform_maze(seeds: Vec<u64>) -> Self {
        let qs = vec![0.5, 1.0, 2.0, 4.0];
        let init_scales = qs.iter().map(|q: &f64| 30f64.powf(1.0 / q) / 3.65).collect();
        QEffectSettings {
            base: StressConfig { steps: 30_000, ..StressConfig::default() },
            qs,
            learning_rates: vec![100.0, 1e-2, 1e-4, 3e-6],
            init_scales,
            seeds,
            n_episodes: 200,
            horizon: 1000,
            n_pairs: 200_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QEffectRun {
    pub q: f64,
    pub seed: u64,
    pub deciles: Vec<DecileError>,
    pub loss_curve: Vec<f64>,
    pub spearman: f64,
    pub table: EmbeddingTable,
}

/// Trains one table per `(q, seed)` on identical pair samples (same budget for every `q`).
pub fn q_effect_report(chain: &MarkovChain, action_distance: &DMatrix<f64>, settings: &QEffectSettings) -> Result<Vec<QEffectRun>, OnlineError> {
    if settings.qs.len() != settings.learning_rates.len() || settings.qs.len() != settings.init_scales.len() {
        return Err(OnlineError::InvalidConfig("one learning rate and init scale per q is required".into()));
    }
    let n = chain.n_states();
    let mut runs = Vec::new();
    for &seed in &settings.seeds {
        let weights = vec![1.0; n];
        let batch = sample_trajectories(chain, settings.n_episodes, settings.horizon, &StartDistribution::Weights(weights), seed)?;
        let pairs = extract_passage_pairs(&batch, settings.n_pairs, seed.wrapping_add(1))?;
        for ((&q, &lr), &init) in settings.qs.iter().zip(&settings.learning_rates).zip(&settings.init_scales) {
            let cfg = StressConfig { q, learning_rate: lr, init_scale: init, seed: seed.wrapping_add(2), ..settings.base.clone() };
            let trained = train_embedding(&pairs, n, &cfg)?;
            runs.push(QEffectRun {
                q,
                seed,
                deciles: decile_errors(&trained.table, cfg.p, q, action_distance),
                spearman: spearman_vs(&trained.table, cfg.p, q, action_distance),
                loss_curve: trained.loss_curve,
                table: trained.table,
            });
        }
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(episodes: Vec<Vec<usize>>) -> TrajectoryBatch {
        TrajectoryBatch::new(episodes, TrajectorySource::OnPolicy)
    }

    #[test]
    fn deterministic_swap_episodes() {
        let chain = MarkovChain::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let b = sample_trajectories(&chain, 10, 2, &StartDistribution::State(0), 3).unwrap();
        assert!(b.episodes.iter().all(|e| e == &vec![0, 1]));
        assert!(sample_trajectories(&chain, 1, 1, &StartDistribution::State(0), 3).is_err());
        assert!(sample_trajectories(&chain, 1, 4, &StartDistribution::State(2), 3).is_err());
    }

    #[test]
    fn first_occurrence_shortens_gap() {
        // Only the episode [0,1,0,1] exists; check every extracted pair by hand.
        let b = batch(vec![vec![0, 1, 0, 1]]);
        let pairs = extract_passage_pairs(&b, 500, 9).unwrap();
        for p in &pairs {
            if p.i == p.j {
                assert_eq!(p.k, 0);
            } else {
                assert_eq!(p.k, 1);
            }
        }
        assert!(pairs.iter().any(|p| p.i == 0 && p.j == 1));
        assert!(pairs.iter().any(|p| p.i == 0 && p.j == 0));
    }

    #[test]
    fn empty_batch_errors() {
        assert_eq!(extract_passage_pairs(&batch(vec![vec![3]]), 4, 0).unwrap_err(), OnlineError::EmptyBatch);
        assert_eq!(extract_passage_pairs(&batch(vec![]), 4, 0).unwrap_err(), OnlineError::EmptyBatch);
    }

    #[test]
    fn config_validation() {
        let ok = StressConfig::default();
        assert!(ok.validate().is_ok());
        assert!(StressConfig { q: 3.0, ..ok.clone() }.validate().is_err());
        assert!(StressConfig { p: Norm::L1, q: 2.0, ..ok.clone() }.validate().is_err());
        assert!(StressConfig { p: Norm::L1, q: 1.0, ..ok.clone() }.validate().is_ok());
        assert!(StressConfig { learning_rate: 0.0, ..ok.clone() }.validate().is_err());
        assert!(StressConfig { dim: 0, ..ok }.validate().is_err());
    }

    #[test]
    fn single_pair_fixed_point() {
        let cfg = StressConfig { dim: 1, learning_rate: 1e-2, batch_size: 1, steps: 5000, seed: 1, init_scale: 0.5, ..Default::default() };
        let pairs = [PassagePair { i: 0, j: 1, k: 4 }];
        let t = train_embedding(&pairs, 2, &cfg).unwrap();
        assert!((t.table.squared_distance(0, 1) - 4.0).abs() < 1e-3);
        assert!(t.loss_curve.last().unwrap() < &1e-6);
    }

    #[test]
    fn divergent_learning_rate_reports_non_finite() {
        let cfg = StressConfig { dim: 2, q: 4.0, learning_rate: 10.0, batch_size: 1, steps: 200, seed: 1, init_scale: 1.0, ..Default::default() };
        let pairs = [PassagePair { i: 0, j: 1, k: 50 }];
        assert!(matches!(train_embedding(&pairs, 2, &cfg), Err(OnlineError::NonFiniteLoss { .. })));
    }

    #[test]
    fn zero_distance_guard() {
        let mut g = [1.0; 3];
        let x = [0.2, -0.1, 0.3];
        let loss = pair_loss_and_grad(&x, &x, 2.0, Norm::L2, 0.5, &mut g);
        assert_eq!(loss, 4.0);
        assert!(g.iter().all(|&v| v == 0.0));
        pair_loss_and_grad(&x, &x, 2.0, Norm::L2, 1.0, &mut g);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn predicted_distance_basic_properties() {
        let table = EmbeddingTable::new(DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 3.0, 4.0, -1.0, 2.0])).unwrap();
        assert_eq!(predicted_distance(&table, 1, 1, Norm::L2, 2.0), 0.0);
        assert_eq!(predicted_distance(&table, 0, 1, Norm::L2, 1.0), 5.0);
        assert_eq!(predicted_distance(&table, 0, 1, Norm::L2, 2.0), 25.0);
        assert_eq!(predicted_distance(&table, 0, 1, Norm::L1, 1.0), 7.0);
        for q in SUPPORTED_Q {
            assert_eq!(predicted_distance(&table, 0, 2, Norm::L2, q), predicted_distance(&table, 2, 0, Norm::L2, q));
        }
    }
}
