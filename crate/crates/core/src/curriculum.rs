//! Goal-conditioned tabular learning driven by a distance model.
//!
//! An episode ends once `d(s, g) < epsilon` for the run's distance `d`. Goals
//! come from a FIFO buffer filled with states visited by short random-policy
//! tails appended to successful episodes, and are filtered to those of
//! intermediate difficulty before training on them.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainError, PassageTables};
use crate::embed_online::{
    extract_passage_pairs, predicted_distance, OnlineError, StressConfig, StressTrainer, TrajectoryBatch,
    TrajectorySource,
};
use crate::gridworld::{Direction, GridMaze, MazeError};

pub const N_ACTIONS: usize = 4;

#[derive(Debug, Error)]
pub enum CurriculumError {
    #[error("invalid curriculum configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Maze(#[from] MazeError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Online(#[from] OnlineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub step_size: f64,
    pub discount: f64,
    pub exploration: f64,
    /// Initial value of every Q entry.
    #[serde(default)]
    pub initial_q: f64,
    /// Back up every goal from each policy transition, not only the episode's goal.
    #[serde(default = "default_true")]
    pub relabel_all_goals: bool,
}

fn default_true() -> bool {
    true
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self { step_size: 0.1, discount: 0.98, exploration: 0.2, initial_q: 1.0, relabel_all_goals: true }
    }
}

impl AgentConfig {
    fn validate(&self) -> Result<(), CurriculumError> {
        let ok = self.step_size > 0.0
            && self.step_size <= 1.0
            && self.discount > 0.0
            && self.discount <= 1.0
            && (0.0..=1.0).contains(&self.exploration)
            && self.initial_q.is_finite();
        if ok {
            Ok(())
        } else {
            Err(CurriculumError::InvalidConfig(format!("agent parameters out of range: {self:?}")))
        }
    }
}

/// Tabular `Q(state, goal, action)` with epsilon-greedy behaviour.
#[derive(Debug, Clone)]
pub struct GoalConditionedAgent {
    n_states: usize,
    q: Vec<f64>,
    cfg: AgentConfig,
}

impl GoalConditionedAgent {
    pub fn new(n_states: usize, cfg: AgentConfig) -> Self {
        Self { n_states, q: vec![cfg.initial_q; n_states * n_states * N_ACTIONS], cfg }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    fn offset(&self, s: usize, g: usize) -> usize {
        (s * self.n_states + g) * N_ACTIONS
    }

    pub fn values(&self, s: usize, g: usize) -> &[f64] {
        let o = self.offset(s, g);
        &self.q[o..o + N_ACTIONS]
    }

    pub fn values_mut(&mut self, s: usize, g: usize) -> &mut [f64] {
        let o = self.offset(s, g);
        &mut self.q[o..o + N_ACTIONS]
    }

    /// Highest-valued action, lowest index on ties.
    pub fn greedy(&self, s: usize, g: usize) -> usize {
        let v = self.values(s, g);
        let mut best = 0;
        for a in 1..N_ACTIONS {
            if v[a] > v[best] {
                best = a;
            }
        }
        best
    }

    pub fn act<R: Rng>(&self, s: usize, g: usize, rng: &mut R) -> usize {
        if rng.gen::<f64>() < self.cfg.exploration {
            rng.gen_range(0..N_ACTIONS)
        } else {
            self.greedy(s, g)
        }
    }

    /// One-step Q-learning backup; `next = None` marks a terminal transition.
    pub fn update(&mut self, s: usize, g: usize, a: usize, reward: f64, next: Option<usize>) {
        let bootstrap = match next {
            Some(s2) => self.cfg.discount * self.values(s2, g).iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            None => 0.0,
        };
        let o = self.offset(s, g) + a;
        self.q[o] += self.cfg.step_size * (reward + bootstrap - self.q[o]);
    }
}

/// Deterministic four-action dynamics over a maze's free cells.
#[derive(Debug, Clone)]
pub struct GoalEnv {
    maze: GridMaze,
}

impl GoalEnv {
    pub fn new(maze: GridMaze) -> Self {
        Self { maze }
    }

    pub fn maze(&self) -> &GridMaze {
        &self.maze
    }

    pub fn n_states(&self) -> usize {
        self.maze.n_states()
    }

    pub fn start(&self) -> usize {
        self.maze.start()
    }

    pub fn step(&self, s: usize, action: usize) -> usize {
        self.maze.step(s, Direction::ALL[action])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Policy,
    RandomTail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Visit {
    pub state: usize,
    pub provenance: Provenance,
    /// Whether a Q backup was made from this state.
    pub q_updated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EpisodeOptions {
    pub learn: bool,
    /// Random-policy steps appended after a success.
    pub random_tail: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub goal: usize,
    pub success: bool,
    /// Policy steps taken before termination or the horizon.
    pub steps: usize,
    pub visits: Vec<Visit>,
}

impl EpisodeRecord {
    pub fn policy_states(&self) -> Vec<usize> {
        self.visits.iter().filter(|v| v.provenance == Provenance::Policy).map(|v| v.state).collect()
    }

    /// Tail states, preceded by the state the tail started from.
    pub fn tail_states(&self) -> Vec<usize> {
        let first_tail = self.visits.iter().position(|v| v.provenance == Provenance::RandomTail);
        match first_tail {
            Some(t) => self.visits[t - 1..].iter().map(|v| v.state).collect(),
            None => Vec::new(),
        }
    }
}

fn backup<F: Fn(usize, usize) -> bool>(agent: &mut GoalConditionedAgent, s: usize, g: usize, a: usize, s2: usize, reached: &F) {
    if reached(s2, g) {
        agent.update(s, g, a, 1.0, None);
    } else {
        agent.update(s, g, a, 0.0, Some(s2));
    }
}

/// Epsilon-greedy rollout from the start state towards `goal`.
pub fn run_episode<R, F>(
    env: &GoalEnv,
    agent: &mut GoalConditionedAgent,
    goal: usize,
    max_steps: usize,
    reached: F,
    opts: EpisodeOptions,
    rng: &mut R,
) -> EpisodeRecord
where
    R: Rng,
    F: Fn(usize, usize) -> bool,
{
    let mut s = env.start();
    let mut visits = vec![Visit { state: s, provenance: Provenance::Policy, q_updated: false }];
    let mut success = reached(s, goal);
    let mut steps = 0;
    while !success && steps < max_steps {
        let a = agent.act(s, goal, rng);
        let s2 = env.step(s, a);
        success = reached(s2, goal);
        if opts.learn {
            if agent.cfg.relabel_all_goals {
                for g in 0..agent.n_states {
                    if g == goal || !reached(s, g) {
                        backup(agent, s, g, a, s2, &reached);
                    }
                }
            } else {
                backup(agent, s, goal, a, s2, &reached);
            }
            visits.last_mut().expect("non-empty").q_updated = true;
        }
        visits.push(Visit { state: s2, provenance: Provenance::Policy, q_updated: false });
        s = s2;
        steps += 1;
    }
    if let (true, Some(len)) = (success, opts.random_tail) {
        for _ in 0..len {
            s = env.step(s, rng.gen_range(0..N_ACTIONS));
            visits.push(Visit { state: s, provenance: Provenance::RandomTail, q_updated: false });
        }
    }
    EpisodeRecord { goal, success, steps, visits }
}

/// Keeps goals whose empirical success rate over `n_eval` trials lies strictly in `(r_min, r_max)`.
pub fn goid_filter<F>(goals: &[usize], r_min: f64, r_max: f64, n_eval: usize, mut success: F) -> Vec<usize>
where
    F: FnMut(usize) -> bool,
{
    goals
        .iter()
        .copied()
        .filter(|&g| {
            let hits = (0..n_eval).filter(|_| success(g)).count();
            let rate = hits as f64 / n_eval as f64;
            rate > r_min && rate < r_max
        })
        .collect()
}

/// Mean success rate over `goals`, `n_eval` trials each.
pub fn coverage<F>(goals: &[usize], n_eval: usize, mut success: F) -> f64
where
    F: FnMut(usize) -> bool,
{
    if goals.is_empty() || n_eval == 0 {
        return 0.0;
    }
    let hits: usize = goals.iter().map(|&g| (0..n_eval).filter(|_| success(g)).count()).sum();
    hits as f64 / (goals.len() * n_eval) as f64
}

/// Fixed-capacity FIFO of unique goal states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoalBuffer {
    queue: VecDeque<usize>,
    capacity: usize,
    replace_per_iter: usize,
}

impl GoalBuffer {
    pub fn new(capacity: usize, replace_per_iter: usize) -> Self {
        assert!(capacity > 0, "goal buffer capacity must be positive");
        Self { queue: VecDeque::with_capacity(capacity), capacity, replace_per_iter }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn replace_per_iter(&self) -> usize {
        self.replace_per_iter
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn contains(&self, g: usize) -> bool {
        self.queue.contains(&g)
    }

    /// Oldest first.
    pub fn goals(&self) -> Vec<usize> {
        self.queue.iter().copied().collect()
    }

    /// Initial fill: appends unseen goals until full, ignoring the replacement limit.
    pub fn fill(&mut self, goals: &[usize]) {
        for &g in goals {
            if self.queue.len() == self.capacity {
                break;
            }
            if !self.contains(g) {
                self.queue.push_back(g);
            }
        }
    }

    /// Inserts up to `replace_per_iter` candidates not already present,
    /// evicting the oldest entries once full. Returns the inserted goals.
    pub fn insert_candidates(&mut self, candidates: &[usize]) -> Vec<usize> {
        let before = self.goals();
        let mut inserted = Vec::new();
        for &c in candidates {
            if inserted.len() == self.replace_per_iter {
                break;
            }
            if before.contains(&c) || inserted.contains(&c) {
                continue;
            }
            if self.queue.len() == self.capacity {
                self.queue.pop_front();
            }
            self.queue.push_back(c);
            inserted.push(c);
        }
        inserted
    }
}

/// Feeds the deduplicated, shuffled random-tail states of successful episodes into the buffer.
pub fn generate_goals_action_noise<R: Rng>(episodes: &[EpisodeRecord], buffer: &mut GoalBuffer, rng: &mut R) -> Vec<usize> {
    let mut candidates: Vec<usize> = Vec::new();
    for ep in episodes.iter().filter(|e| e.success) {
        for v in ep.visits.iter().filter(|v| v.provenance == Provenance::RandomTail) {
            if !candidates.contains(&v.state) {
                candidates.push(v.state);
            }
        }
    }
    candidates.shuffle(rng);
    buffer.insert_candidates(&candidates)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceSource {
    /// Half the commute time of the maze's random walk.
    Oracle,
    /// Euclidean distance between cell centres.
    GridL2,
    /// Embedding trained on behaviour episodes (tails excluded).
    OnPolicy,
    /// Embedding trained on random tails only.
    OffPolicy,
}

impl DistanceSource {
    pub fn is_learned(self) -> bool {
        matches!(self, DistanceSource::OnPolicy | DistanceSource::OffPolicy)
    }
}

/// Distance-model training data for one iteration.
pub fn distance_training_schedule(episodes: &[EpisodeRecord], source: TrajectorySource) -> TrajectoryBatch {
    let eps = match source {
        TrajectorySource::OnPolicy => episodes.iter().map(EpisodeRecord::policy_states).collect(),
        TrajectorySource::OffPolicyRandom => {
            episodes.iter().map(EpisodeRecord::tail_states).filter(|t| !t.is_empty()).collect()
        }
    };
    TrajectoryBatch::new(eps, source)
}

/// The distance an agent terminates on.
#[derive(Debug, Clone)]
pub enum DistanceModel {
    Matrix(DMatrix<f64>),
    GridL2(GridMaze),
    Learned(Box<StressTrainer>),
}

impl DistanceModel {
    pub fn distance(&self, s: usize, g: usize) -> f64 {
        match self {
            DistanceModel::Matrix(m) => m[(s, g)],
            DistanceModel::GridL2(maze) => maze.grid_l2(s, g),
            DistanceModel::Learned(t) => {
                let c = t.config();
                predicted_distance(t.table(), s, g, c.p, c.q)
            }
        }
    }
}

/// Number of states strictly inside the `epsilon`-sphere around `goal`.
pub fn sphere_volume(model: &DistanceModel, n_states: usize, goal: usize, epsilon: f64) -> usize {
    (0..n_states).filter(|&s| model.distance(s, goal) < epsilon).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceConfig {
    pub source: DistanceSource,
    /// Termination radius for the run's distance.
    pub epsilon: f64,
    pub stress: StressConfig,
    /// Random-policy episodes from the start used before iteration 0.
    pub warmup_episodes: usize,
    pub warmup_steps: usize,
    /// Gradient steps per iteration.
    pub steps_per_iter: usize,
    /// Pairs extracted per update.
    pub pairs_per_update: usize,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self {
            source: DistanceSource::Oracle,
            epsilon: 1.0,
            stress: StressConfig {
                dim: 20,
                p: crate::embed_online::Norm::L1,
                q: 1.0,
                learning_rate: 1e-2,
                init_scale: 1.0,
                ..StressConfig::default()
            },
            warmup_episodes: 50,
            warmup_steps: 2000,
            steps_per_iter: 200,
            pairs_per_update: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumConfig {
    pub agent: AgentConfig,
    pub distance: DistanceConfig,
    pub horizon: usize,
    pub tail_length: usize,
    pub buffer_capacity: usize,
    pub replace_per_iter: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub goid_evals: usize,
    pub iterations: usize,
    pub episodes_per_iter: usize,
    pub coverage_evals: usize,
    /// Success radius for coverage, applied to the oracle distance.
    pub eval_epsilon: f64,
    pub seed: u64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            agent: AgentConfig::default(),
            distance: DistanceConfig::default(),
            horizon: 50,
            tail_length: 10,
            buffer_capacity: 500,
            replace_per_iter: 30,
            r_min: 0.1,
            r_max: 0.9,
            goid_evals: 10,
            iterations: 50,
            episodes_per_iter: 100,
            coverage_evals: 10,
            eval_epsilon: 1.0,
            seed: 0,
        }
    }
}

impl CurriculumConfig {
    /// Settings for the tabular U-maze: buffer scaled to 50 entries with 5
    /// replacements, termination radius 3 (exact match under the oracle).
    pub fn u_maze(source: DistanceSource, seed: u64) -> Self {
        let mut cfg = Self { buffer_capacity: 50, replace_per_iter: 5, seed, ..Self::default() };
        cfg.distance.source = source;
        cfg.distance.epsilon = 3.0;
        cfg
    }

    pub fn validate(&self) -> Result<(), CurriculumError> {
        self.agent.validate()?;
        let bad = |m: &str| Err(CurriculumError::InvalidConfig(m.into()));
        if !(0.0 < self.r_min && self.r_min < self.r_max && self.r_max < 1.0) {
            return bad("need 0 < r_min < r_max < 1");
        }
        if self.buffer_capacity == 0 || self.horizon == 0 || self.episodes_per_iter == 0 {
            return bad("buffer_capacity, horizon and episodes_per_iter must be positive");
        }
        if self.goid_evals == 0 || self.coverage_evals == 0 {
            return bad("evaluation counts must be positive");
        }
        if !(self.distance.epsilon > 0.0) || !(self.eval_epsilon > 0.0) {
            return bad("epsilon values must be positive");
        }
        if self.distance.source.is_learned() {
            self.distance.stress.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub selected_goals: usize,
    /// True when no goal passed the difficulty filter and the whole buffer was used.
    pub goid_fallback: bool,
    pub successes: usize,
    pub inserted_goals: Vec<usize>,
    pub distance_batch_steps: usize,
    pub coverage: f64,
    /// One entry per tracked goal.
    pub sphere_volumes: Vec<usize>,
    pub buffer: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurriculumReport {
    pub source: DistanceSource,
    pub seed: u64,
    pub tracked_goals: Vec<usize>,
    pub baseline_coverage: f64,
    pub warmup_volumes: Vec<usize>,
    pub initial_buffer: Vec<usize>,
    pub iterations: Vec<IterationLog>,
}

impl CurriculumReport {
    pub fn coverage_history(&self) -> Vec<f64> {
        self.iterations.iter().map(|it| it.coverage).collect()
    }

    pub fn final_coverage(&self) -> f64 {
        self.iterations.last().map_or(self.baseline_coverage, |it| it.coverage)
    }

    pub fn final_volumes(&self) -> Vec<usize> {
        self.iterations.last().map_or_else(|| self.warmup_volumes.clone(), |it| it.sphere_volumes.clone())
    }
}

/// One sequential curriculum run.
pub struct Curriculum {
    env: GoalEnv,
    cfg: CurriculumConfig,
    agent: GoalConditionedAgent,
    buffer: GoalBuffer,
    oracle: DMatrix<f64>,
    model: DistanceModel,
    rng: ChaCha8Rng,
}

impl Curriculum {
    pub fn new(maze: GridMaze, cfg: CurriculumConfig) -> Result<Self, CurriculumError> {
        cfg.validate()?;
        let chain = maze.random_walk_chain()?;
        let oracle = PassageTables::compute(&chain)?.action_distance();
        let n = maze.n_states();
        let model = match cfg.distance.source {
            DistanceSource::Oracle => DistanceModel::Matrix(oracle.clone()),
            DistanceSource::GridL2 => DistanceModel::GridL2(maze.clone()),
            DistanceSource::OnPolicy | DistanceSource::OffPolicy => {
                let stress = StressConfig { seed: cfg.seed.wrapping_add(1), ..cfg.distance.stress.clone() };
                DistanceModel::Learned(Box::new(StressTrainer::new(n, stress)?))
            }
        };
        Ok(Self {
            agent: GoalConditionedAgent::new(n, cfg.agent),
            buffer: GoalBuffer::new(cfg.buffer_capacity, cfg.replace_per_iter),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            env: GoalEnv::new(maze),
            oracle,
            model,
            cfg,
        })
    }

    pub fn oracle(&self) -> &DMatrix<f64> {
        &self.oracle
    }

    pub fn agent(&self) -> &GoalConditionedAgent {
        &self.agent
    }

    pub fn model(&self) -> &DistanceModel {
        &self.model
    }

    fn volumes(&self) -> Vec<usize> {
        let n = self.env.n_states();
        let eps = self.cfg.distance.epsilon;
        self.env.maze().tracked_goals().iter().map(|&g| sphere_volume(&self.model, n, g, eps)).collect()
    }

    fn train_distance(&mut self, batch: &TrajectoryBatch, steps: usize) -> Result<usize, CurriculumError> {
        let DistanceModel::Learned(trainer) = &mut self.model else {
            return Ok(0);
        };
        if batch.episodes.iter().all(|e| e.len() < 2) || steps == 0 {
            return Ok(0);
        }
        let pairs = extract_passage_pairs(batch, self.cfg.distance.pairs_per_update, self.rng.gen())?;
        trainer.train(&pairs, steps)?;
        Ok(batch.total_steps())
    }

    fn random_walk(&mut self, len: usize) -> Vec<usize> {
        let mut s = self.env.start();
        let mut out = vec![s];
        for _ in 0..len {
            s = self.env.step(s, self.rng.gen_range(0..N_ACTIONS));
            out.push(s);
        }
        out
    }

    fn evaluate(&mut self, goals: &[usize], n_eval: usize, oracle_eval: bool) -> Vec<f64> {
        let (horizon, eval_eps, eps) = (self.cfg.horizon, self.cfg.eval_epsilon, self.cfg.distance.epsilon);
        let (env, agent, rng, oracle, model) = (&self.env, &mut self.agent, &mut self.rng, &self.oracle, &self.model);
        goals
            .iter()
            .map(|&g| {
                let hits = (0..n_eval)
                    .filter(|_| {
                        let reached = |s: usize, g: usize| {
                            if oracle_eval {
                                oracle[(s, g)] < eval_eps
                            } else {
                                model.distance(s, g) < eps
                            }
                        };
                        run_episode(env, agent, g, horizon, reached, EpisodeOptions::default(), rng).success
                    })
                    .count();
                hits as f64 / n_eval as f64
            })
            .collect()
    }

    pub fn run(mut self) -> Result<CurriculumReport, CurriculumError> {
        let n = self.env.n_states();
        let all_goals: Vec<usize> = (0..n).collect();
        let baseline = self.evaluate(&all_goals, self.cfg.coverage_evals, true);
        let baseline_coverage = baseline.iter().sum::<f64>() / n as f64;

        if self.cfg.distance.source.is_learned() {
            let episodes: Vec<Vec<usize>> =
                (0..self.cfg.distance.warmup_episodes).map(|_| self.random_walk(self.cfg.horizon)).collect();
            let batch = TrajectoryBatch::new(episodes, TrajectorySource::OffPolicyRandom);
            self.train_distance(&batch, self.cfg.distance.warmup_steps)?;
        }
        let warmup_volumes = self.volumes();

        let walk = self.random_walk(self.cfg.tail_length);
        self.buffer.fill(&walk);
        let initial_buffer = self.buffer.goals();

        let mut iterations = Vec::with_capacity(self.cfg.iterations);
        for it in 0..self.cfg.iterations {
            let buffered = self.buffer.goals();
            let rates = self.evaluate(&buffered, self.cfg.goid_evals, false);
            let (r_min, r_max) = (self.cfg.r_min, self.cfg.r_max);
            let mut selected: Vec<usize> =
                buffered.iter().zip(&rates).filter(|(_, &r)| r > r_min && r < r_max).map(|(&g, _)| g).collect();
            let goid_fallback = selected.is_empty();
            if goid_fallback {
                selected = buffered;
            }

            let opts = EpisodeOptions { learn: true, random_tail: Some(self.cfg.tail_length) };
            let mut records = Vec::with_capacity(self.cfg.episodes_per_iter);
            for _ in 0..self.cfg.episodes_per_iter {
                let g = selected[self.rng.gen_range(0..selected.len())];
                let (env, agent, rng, model) = (&self.env, &mut self.agent, &mut self.rng, &self.model);
                let eps = self.cfg.distance.epsilon;
                let reached = |s: usize, g: usize| model.distance(s, g) < eps;
                records.push(run_episode(env, agent, g, self.cfg.horizon, reached, opts, rng));
            }
            let successes = records.iter().filter(|r| r.success).count();
            let inserted_goals = generate_goals_action_noise(&records, &mut self.buffer, &mut self.rng);

            let distance_batch_steps = match self.cfg.distance.source {
                DistanceSource::OnPolicy => {
                    let batch = distance_training_schedule(&records, TrajectorySource::OnPolicy);
                    self.train_distance(&batch, self.cfg.distance.steps_per_iter)?
                }
                DistanceSource::OffPolicy => {
                    let batch = distance_training_schedule(&records, TrajectorySource::OffPolicyRandom);
                    self.train_distance(&batch, self.cfg.distance.steps_per_iter)?
                }
                DistanceSource::Oracle | DistanceSource::GridL2 => 0,
            };

            let rates = self.evaluate(&all_goals, self.cfg.coverage_evals, true);
            iterations.push(IterationLog {
                iteration: it,
                selected_goals: selected.len(),
                goid_fallback,
                successes,
                inserted_goals,
                distance_batch_steps,
                coverage: rates.iter().sum::<f64>() / n as f64,
                sphere_volumes: self.volumes(),
                buffer: self.buffer.goals(),
            });
        }

        Ok(CurriculumReport {
            source: self.cfg.distance.source,
            seed: self.cfg.seed,
            tracked_goals: self.env.maze().tracked_goals().to_vec(),
            baseline_coverage,
            warmup_volumes,
            initial_buffer,
            iterations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{build_u_maze, MazeSpec, MoveProbs};
    use rand::Rng;
    use proptest::prelude::*;

    fn corridor() -> GoalEnv {
        let spec = MazeSpec { width: 4, height: 1, walls: Vec::new(), move_probs: MoveProbs::UNIFORM };
        GoalEnv::new(GridMaze::from_spec(&spec).unwrap())
    }

    fn exact(s: usize, g: usize) -> bool {
        s == g
    }

    fn greedy_agent(n: usize) -> GoalConditionedAgent {
        GoalConditionedAgent::new(n, AgentConfig { exploration: 0.0, initial_q: 0.0, ..AgentConfig::default() })
    }

    #[test]
    fn goal_at_start_succeeds_immediately() {
        let env = corridor();
        let mut agent = greedy_agent(4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rec = run_episode(&env, &mut agent, env.start(), 10, |s, g| s == g, EpisodeOptions::default(), &mut rng);
        assert!(rec.success);
        assert_eq!(rec.steps, 0);
        assert_eq!(rec.visits.len(), 1);
    }

    #[test]
    fn greedy_corridor_takes_three_steps() {
        let env = corridor();
        let mut agent = greedy_agent(4);
        let east = Direction::East.index();
        for s in 0..3 {
            agent.values_mut(s, 3)[east] = 1.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rec = run_episode(&env, &mut agent, 3, 10, exact, EpisodeOptions::default(), &mut rng);
        assert!(rec.success);
        assert_eq!(rec.steps, 3);
        assert_eq!(rec.policy_states(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn ties_break_to_lowest_action() {
        let mut agent = greedy_agent(2);
        assert_eq!(agent.greedy(0, 1), 0);
        agent.values_mut(0, 1).copy_from_slice(&[0.0, 0.5, 0.5, 0.1]);
        assert_eq!(agent.greedy(0, 1), 1);
    }

    #[test]
    fn q_learning_solves_corridor() {
        let env = corridor();
        let cfg = AgentConfig { relabel_all_goals: false, ..AgentConfig::default() };
        let mut agent = GoalConditionedAgent::new(4, cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let opts = EpisodeOptions { learn: true, random_tail: None };
        for _ in 0..300 {
            run_episode(&env, &mut agent, 3, 20, exact, opts, &mut rng);
        }
        let east = Direction::East.index();
        for s in 0..3 {
            assert_eq!(agent.greedy(s, 3), east);
        }
        // Value of the optimal first move is discount^2.
        assert!((agent.values(0, 3)[east] - 0.98f64.powi(2)).abs() < 1e-2);
    }

    #[test]
    fn oracle_sphere_below_min_distance_is_exact_match() {
        let maze = build_u_maze(9).unwrap();
        let chain = maze.random_walk_chain().unwrap();
        let oracle = PassageTables::compute(&chain).unwrap().action_distance();
        let n = maze.n_states();
        let min_pos = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| oracle[(i, j)]).fold(f64::INFINITY, f64::min);
        let eps = 0.5 * min_pos;
        let model = DistanceModel::Matrix(oracle);
        for s in 0..n {
            for g in 0..n {
                assert_eq!(model.distance(s, g) < eps, s == g);
            }
        }
    }

    #[test]
    fn tails_never_update_q() {
        let env = GoalEnv::new(build_u_maze(9).unwrap());
        let mut agent = GoalConditionedAgent::new(env.n_states(), AgentConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let goal = env.maze().tracked_goals()[0];
        let opts = EpisodeOptions { learn: true, random_tail: Some(10) };
        let mut tails = 0;
        for _ in 0..50 {
            let rec = run_episode(&env, &mut agent, goal, 50, exact, opts, &mut rng);
            for v in &rec.visits {
                if v.provenance == Provenance::RandomTail {
                    assert!(!v.q_updated);
                    tails += 1;
                }
            }
            let last_policy = rec.visits.iter().rposition(|v| v.provenance == Provenance::Policy).unwrap();
            assert!(rec.visits[..last_policy].iter().all(|v| v.q_updated));
        }
        assert!(tails > 0);
    }

    #[test]
    fn goid_excludes_extremes() {
        assert!(goid_filter(&[1, 2], 0.1, 0.9, 20, |_| true).is_empty());
        assert!(goid_filter(&[1, 2], 0.1, 0.9, 20, |_| false).is_empty());
    }

    #[test]
    fn goid_keeps_coin_flip_goals() {
        // P(Bin(20, 0.5) in {0,1,2} or {18,19,20}) = 422 / 2^20, so at least 99% of trials keep the goal.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let kept = (0..1000).filter(|_| !goid_filter(&[7], 0.1, 0.9, 20, |_| rng.gen_bool(0.5)).is_empty()).count();
        assert!(kept >= 990, "kept {kept}");
    }

    #[test]
    fn coverage_of_perfect_agent_is_one() {
        assert_eq!(coverage(&[0, 1, 2], 5, |_| true), 1.0);
        assert_eq!(coverage(&[0, 1], 4, |g| g == 0), 0.5);
    }

    fn record(success: bool, policy: &[usize], tail: &[usize]) -> EpisodeRecord {
        let mut visits: Vec<Visit> = policy.iter().map(|&s| Visit { state: s, provenance: Provenance::Policy, q_updated: true }).collect();
        visits.extend(tail.iter().map(|&s| Visit { state: s, provenance: Provenance::RandomTail, q_updated: false }));
        EpisodeRecord { goal: *policy.last().unwrap(), success, steps: policy.len() - 1, visits }
    }

    #[test]
    fn empty_tails_leave_buffer_unchanged() {
        let mut buf = GoalBuffer::new(3, 2);
        buf.fill(&[4, 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let inserted = generate_goals_action_noise(&[record(false, &[0, 1], &[])], &mut buf, &mut rng);
        assert!(inserted.is_empty());
        assert_eq!(buf.goals(), vec![4, 5]);
    }

    #[test]
    fn duplicates_do_not_consume_replacements() {
        let mut buf = GoalBuffer::new(3, 2);
        buf.fill(&[1, 2, 3]);
        assert_eq!(buf.insert_candidates(&[2, 2, 9, 3, 8, 7]), vec![9, 8]);
        assert_eq!(buf.goals(), vec![3, 9, 8]);
    }

    #[test]
    fn schedules_split_policy_and_tail() {
        let recs = vec![record(true, &[0, 1, 2], &[3, 2]), record(false, &[0, 4], &[])];
        let on = distance_training_schedule(&recs, TrajectorySource::OnPolicy);
        assert_eq!(on.episodes, vec![vec![0, 1, 2], vec![0, 4]]);
        let off = distance_training_schedule(&recs, TrajectorySource::OffPolicyRandom);
        assert_eq!(off.episodes, vec![vec![2, 3, 2]]);
        let none = distance_training_schedule(&recs[1..], TrajectorySource::OffPolicyRandom);
        assert!(none.is_empty());
    }

    #[test]
    fn sphere_volume_limits() {
        let maze = build_u_maze(7).unwrap();
        let n = maze.n_states();
        let model = DistanceModel::GridL2(maze);
        assert_eq!(sphere_volume(&model, n, 0, 0.0), 0);
        assert_eq!(sphere_volume(&model, n, 0, 1e6), n);
        assert_eq!(sphere_volume(&model, n, 0, 0.5), 1);
    }

    #[test]
    fn config_validation() {
        assert!(CurriculumConfig::default().validate().is_ok());
        let bad = CurriculumConfig { r_min: 0.9, r_max: 0.1, ..CurriculumConfig::default() };
        assert!(bad.validate().is_err());
        let mut bad = CurriculumConfig::u_maze(DistanceSource::OnPolicy, 0);
        bad.distance.stress.q = 3.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn run_is_deterministic() {
        let mut cfg = CurriculumConfig::u_maze(DistanceSource::OffPolicy, 5);
        cfg.iterations = 4;
        cfg.episodes_per_iter = 20;
        let a = Curriculum::new(build_u_maze(7).unwrap(), cfg.clone()).unwrap().run().unwrap();
        let b = Curriculum::new(build_u_maze(7).unwrap(), cfg).unwrap().run().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iterations.len(), 4);
        assert!(a.coverage_history().iter().all(|c| (0.0..=1.0).contains(c)));
    }

    proptest! {
        #[test]
        fn buffer_is_unique_bounded_fifo(
            capacity in 1usize..12,
            replace in 0usize..6,
            rounds in prop::collection::vec(prop::collection::vec(0usize..20, 0..15), 1..20),
        ) {
            let mut buf = GoalBuffer::new(capacity, replace);
            let mut order: Vec<usize> = Vec::new();
            for cands in rounds {
                let before = buf.goals();
                let inserted = buf.insert_candidates(&cands);
                let fresh: Vec<usize> = {
                    let mut seen = Vec::new();
                    for c in cands.iter().copied().filter(|c| !before.contains(c)) {
                        if !seen.contains(&c) {
                            seen.push(c);
                        }
                    }
                    seen
                };
                prop_assert_eq!(inserted.len(), replace.min(fresh.len()));
                prop_assert!(buf.len() <= capacity);
                let goals = buf.goals();
                let mut dedup = goals.clone();
                dedup.sort_unstable();
                dedup.dedup();
                prop_assert_eq!(dedup.len(), goals.len());
                order.extend(&inserted);
                let expected: Vec<usize> = order[order.len().saturating_sub(capacity)..].to_vec();
                prop_assert_eq!(goals, expected);
            }
        }
    }
}
