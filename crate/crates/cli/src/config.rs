//! JSON run configurations. Unknown keys are rejected everywhere.

use ectd_core::chain::MarkovChain;
use ectd_core::curriculum::{CurriculumConfig, DistanceSource};
use ectd_core::embed_online::{QEffectSettings, StressConfig};
use ectd_core::gridworld::{build_biased_maze, build_u_maze, build_uniform_maze, GridMaze, MazeSpec};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedMaze {
    Uniform,
    Biased,
}

/// Where a chain comes from: `{"named": "uniform"}`, `{"u_maze": 9}`,
/// `{"spec": {width, height, walls, move_probs}}` or `{"transition": [[...]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ChainSource {
    Named(NamedMaze),
    UMaze(usize),
    Spec(MazeSpec),
    Transition(Vec<Vec<f64>>),
}

impl Default for ChainSource {
    fn default() -> Self {
        ChainSource::Named(NamedMaze::Uniform)
    }
}

impl ChainSource {
    /// The chain and, for grid sources, its maze.
    pub fn resolve(&self) -> Result<(Option<GridMaze>, MarkovChain), CliError> {
        match self {
            ChainSource::Named(NamedMaze::Uniform) => {
                let (m, c) = build_uniform_maze();
                Ok((Some(m), c))
            }
            ChainSource::Named(NamedMaze::Biased) => {
                let (m, c) = build_biased_maze();
                Ok((Some(m), c))
            }
            ChainSource::UMaze(size) => {
                let m = build_u_maze(*size).map_err(|e| CliError::Config(e.to_string()))?;
                let c = m.random_walk_chain().map_err(|e| CliError::Config(e.to_string()))?;
                Ok((Some(m), c))
            }
            ChainSource::Spec(spec) => {
                let m = GridMaze::from_spec(spec).map_err(|e| CliError::Config(e.to_string()))?;
                let c = m.random_walk_chain().map_err(|e| CliError::Config(e.to_string()))?;
                Ok((Some(m), c))
            }
            ChainSource::Transition(rows) => {
                let n = rows.len();
                if n == 0 || rows.iter().any(|r| r.len() != n) {
                    return Err(CliError::Config("transition matrix must be square and non-empty".into()));
                }
                let p = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
                let c = MarkovChain::new(p).map_err(|e| CliError::Config(e.to_string()))?;
                Ok((None, c))
            }
        }
    }
}

fn default_reference() -> [usize; 2] {
    [2, 2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactConfig {
    #[serde(default)]
    pub chain: ChainSource,
    /// Empty means every odd dimension up to `n - 1`.
    #[serde(default)]
    pub dims: Vec<usize>,
    /// `[row, col]` of the heatmap reference cell.
    #[serde(default = "default_reference")]
    pub reference: [usize; 2],
    #[serde(default = "default_cell_px")]
    pub cell_px: usize,
}

fn default_cell_px() -> usize {
    24
}

impl Default for ExactConfig {
    fn default() -> Self {
        Self { chain: ChainSource::default(), dims: Vec::new(), reference: default_reference(), cell_px: default_cell_px() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub chain: ChainSource,
    pub stress: StressConfig,
    pub qs: Vec<f64>,
    pub learning_rates: Vec<f64>,
    pub init_scales: Vec<f64>,
    pub seeds: Vec<u64>,
    pub n_episodes: usize,
    pub horizon: usize,
    pub n_pairs: usize,
    #[serde(default = "default_reference")]
    pub reference: [usize; 2],
    #[serde(default = "default_cell_px")]
    pub cell_px: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let s = QEffectSettings::uniform_maze((0..5).collect());
        Self {
            chain: ChainSource::default(),
            stress: s.base,
            qs: s.qs,
            learning_rates: s.learning_rates,
            init_scales: s.init_scales,
            seeds: s.seeds,
            n_episodes: s.n_episodes,
            horizon: s.horizon,
            n_pairs: s.n_pairs,
            reference: default_reference(),
            cell_px: default_cell_px(),
        }
    }
}

impl TrainConfig {
    pub fn settings(&self) -> QEffectSettings {
        QEffectSettings {
            base: self.stress.clone(),
            qs: self.qs.clone(),
            learning_rates: self.learning_rates.clone(),
            init_scales: self.init_scales.clone(),
            seeds: self.seeds.clone(),
            n_episodes: self.n_episodes,
            horizon: self.horizon,
            n_pairs: self.n_pairs,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.qs.is_empty() || self.seeds.is_empty() {
            return Err(CliError::Config("qs and seeds must be non-empty".into()));
        }
        if self.learning_rates.len() != self.qs.len() || self.init_scales.len() != self.qs.len() {
            return Err(CliError::Config("learning_rates and init_scales need one entry per q".into()));
        }
        if self.horizon < 2 || self.n_episodes == 0 || self.n_pairs == 0 {
            return Err(CliError::Config("horizon must be at least 2; n_episodes and n_pairs positive".into()));
        }
        for ((&q, &lr), &init) in self.qs.iter().zip(&self.learning_rates).zip(&self.init_scales) {
            StressConfig { q, learning_rate: lr, init_scale: init, ..self.stress.clone() }
                .validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumRunConfig {
    #[serde(default = "default_u_maze")]
    pub maze: ChainSource,
    pub sources: Vec<DistanceSource>,
    pub seeds: Vec<u64>,
    /// Per-run settings; its `seed` and `distance.source` are overridden per run.
    pub run: CurriculumConfig,
}

fn default_u_maze() -> ChainSource {
    ChainSource::UMaze(9)
}

impl Default for CurriculumRunConfig {
    fn default() -> Self {
        Self {
            maze: default_u_maze(),
            sources: vec![DistanceSource::Oracle, DistanceSource::OnPolicy, DistanceSource::OffPolicy],
            seeds: (0..5).collect(),
            run: CurriculumConfig::u_maze(DistanceSource::Oracle, 0),
        }
    }
}

impl CurriculumRunConfig {
    /// Settings for one `(source, seed)` cell.
    pub fn cell(&self, source: DistanceSource, seed: u64) -> CurriculumConfig {
        let mut cfg = self.run.clone();
        cfg.seed = seed;
        cfg.distance.source = source;
        cfg
    }

    pub fn maze(&self) -> Result<GridMaze, CliError> {
        match self.maze.resolve()? {
            (Some(m), _) => Ok(m),
            (None, _) => Err(CliError::Config("curriculum needs a grid maze, not a bare transition matrix".into())),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.sources.is_empty() || self.seeds.is_empty() {
            return Err(CliError::Config("sources and seeds must be non-empty".into()));
        }
        for &s in &self.sources {
            self.cell(s, 0).validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Perturb one entry of every pseudo-inverse before checking.
    #[serde(default)]
    pub inject_fault: bool,
}

/// Parses a config file, or the default when `text` is `None`.
pub fn parse<T>(text: Option<&str>) -> Result<T, CliError>
where
    T: for<'de> Deserialize<'de> + Default,
{
    match text {
        Some(t) => serde_json::from_str(t).map_err(|e| CliError::Config(e.to_string())),
        None => Ok(T::default()),
    }
}

/// Hex SHA-256 of the canonical JSON serialisation.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let json = serde_json::to_vec(cfg).expect("config serialises");
    hex::encode(Sha256::digest(&json))
}

/// `seed, seed + 1, ...` with the same length as `seeds`.
pub fn reseed(seeds: &[u64], seed: u64) -> Vec<u64> {
    (0..seeds.len() as u64).map(|k| seed.wrapping_add(k)).collect()
}
