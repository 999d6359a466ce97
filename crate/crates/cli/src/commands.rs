//! The four subcommands. Each returns the directory it wrote.

use std::path::{Path, PathBuf};

use ectd_core::chain::{build_laplacian, PassageTables};
use ectd_core::curriculum::{Curriculum, CurriculumReport, DistanceSource};
use ectd_core::embed_exact::{pair_distances, rmse, scaled_spectral_embedding, spectral_embedding, EmbeddingTable};
use ectd_core::embed_online::{predicted_distance, q_effect_report, QEffectRun, QEffectSettings};
use ectd_core::gridworld::{reference_state_heatmap, GridMaze};
use ectd_core::stats::{median, quantile_bins};
use rayon::prelude::*;
use serde::Serialize;

use crate::checks::{all_pass, render_table, verify_suite, Check, Status};
use crate::config::{config_hash, parse, reseed, CurriculumRunConfig, ExactConfig, TrainConfig, VerifyConfig};
use crate::error::CliError;
use crate::output::{num, ArtifactWriter};

/// Flags shared by every command.
#[derive(Debug, Clone, Default)]
pub struct CommonArgs {
    pub out: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl CommonArgs {
    fn config_text(&self) -> Result<Option<String>, CliError> {
        match &self.config {
            Some(p) => std::fs::read_to_string(p).map(Some).map_err(|e| CliError::io(p, e)),
            None => Ok(None),
        }
    }

    /// `--out`, else `$ECTD_OUT/<command>`, else `ectd_out/<command>`.
    pub fn out_dir(&self, command: &str) -> PathBuf {
        if let Some(o) = &self.out {
            return o.clone();
        }
        match std::env::var_os("ECTD_OUT") {
            Some(root) if !root.is_empty() => Path::new(&root).join(command),
            _ => Path::new("ectd_out").join(command),
        }
    }
}

fn reference_state(maze: &GridMaze, rc: [usize; 2]) -> Result<usize, CliError> {
    if rc[0] >= maze.height() || rc[1] >= maze.width() {
        return Err(CliError::Config(format!("reference cell {rc:?} lies outside the grid")));
    }
    maze.state_at(rc[0], rc[1]).ok_or_else(|| CliError::Config(format!("reference cell {rc:?} is a wall")))
}

fn write_heatmap(w: &mut ArtifactWriter, maze: &GridMaze, stem: &str, values: &[f64], cell_px: usize) -> Result<(), CliError> {
    let h = reference_state_heatmap(maze, values).map_err(|e| CliError::Invariant(e.to_string()))?;
    w.write_text(&format!("{stem}.pgm"), &h.to_pgm())?;
    w.write_text(&format!("{stem}.svg"), &h.to_svg(cell_px))
}

fn row_of(table: &EmbeddingTable, from: usize) -> Vec<f64> {
    (0..table.n_states()).map(|s| table.distance(from, s)).collect()
}

/// RMSE restricted to the nearest and the farthest decile of target distances.
pub fn split_decile_rmse(pairs: &[(f64, f64)]) -> (f64, f64) {
    let targets: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let bins = quantile_bins(&targets, 10);
    let pick = |b: usize| -> Vec<(f64, f64)> { pairs.iter().zip(&bins).filter(|(_, &k)| k == b).map(|(p, _)| *p).collect() };
    (rmse(&pick(0)), rmse(&pick(9)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RmseRow {
    pub dim: usize,
    /// Rescaled so the largest embedded distance matches the largest target.
    pub spectral: f64,
    pub scaled_spectral: f64,
    pub spectral_near: f64,
    pub spectral_far: f64,
}

/// Embedding error against `sqrt(n)` for each requested dimension.
pub fn rmse_curve(cfg: &ExactConfig) -> Result<Vec<RmseRow>, CliError> {
    let (_, chain) = cfg.chain.resolve()?;
    let tables = PassageTables::compute(&chain).map_err(|e| CliError::Config(e.to_string()))?;
    let lap = build_laplacian(&chain).map_err(|e| CliError::Config(e.to_string()))?;
    let dims = exact_dims(cfg, chain.n_states())?;
    let target = tables.commute.map(f64::sqrt);
    let inv = |e: ectd_core::embed_exact::EmbedError| CliError::Invariant(e.to_string());
    dims.into_par_iter()
        .map(|d| {
            let spec = spectral_embedding(&lap, d).map_err(inv)?;
            let scaled = scaled_spectral_embedding(&lap, d).map_err(inv)?;
            let ps = pair_distances(&spec.table, &target, true).map_err(inv)?;
            let (near, far) = split_decile_rmse(&ps);
            let sc = rmse(&pair_distances(&scaled.table, &target, false).map_err(inv)?);
            Ok(RmseRow { dim: d, spectral: rmse(&ps), scaled_spectral: sc, spectral_near: near, spectral_far: far })
        })
        .collect()
}

fn exact_dims(cfg: &ExactConfig, n: usize) -> Result<Vec<usize>, CliError> {
    if n < 2 {
        return Err(CliError::Config("chain needs at least two states".into()));
    }
    if cfg.dims.is_empty() {
        return Ok((1..n).step_by(2).collect());
    }
    if let Some(&d) = cfg.dims.iter().find(|&&d| d == 0 || d >= n) {
        return Err(CliError::Config(format!("dim {d} outside 1..={}", n - 1)));
    }
    Ok(cfg.dims.clone())
}

pub fn exact(args: &CommonArgs) -> Result<PathBuf, CliError> {
    let cfg: ExactConfig = parse(args.config_text()?.as_deref())?;
    let (maze, chain) = cfg.chain.resolve()?;
    let n = chain.n_states();
    let dims = exact_dims(&cfg, n)?;
    let reference = maze.as_ref().map(|m| reference_state(m, cfg.reference)).transpose()?;
    let tables = PassageTables::compute(&chain).map_err(|e| CliError::Config(e.to_string()))?;
    let lap = build_laplacian(&chain).map_err(|e| CliError::Config(e.to_string()))?;
    let curve = rmse_curve(&cfg)?;

    let mut w = ArtifactWriter::create(args.out_dir("exact"))?;
    w.write_matrix("M.csv", &tables.first_passage)?;
    w.write_matrix("N.csv", &tables.commute)?;
    w.write_matrix("Lpinv.csv", &lap.pseudo_inverse)?;
    let rows: Vec<Vec<String>> = curve
        .iter()
        .map(|r| vec![r.dim.to_string(), num(r.spectral), num(r.scaled_spectral), num(r.spectral_near), num(r.spectral_far)])
        .collect();
    w.write_csv("rmse_curve.csv", &["dim", "spectral_rmse", "scaled_spectral_rmse", "spectral_near_decile_rmse", "spectral_far_decile_rmse"], &rows)?;

    if let (Some(maze), Some(r)) = (&maze, reference) {
        let mut values = Vec::new();
        let truth: Vec<f64> = (0..n).map(|s| tables.commute[(r, s)].sqrt()).collect();
        write_heatmap(&mut w, maze, "heatmaps/truth", &truth, cfg.cell_px)?;
        values.push(("truth".to_string(), 0, truth));
        for &d in &dims {
            let spec = spectral_embedding(&lap, d).map_err(|e| CliError::Invariant(e.to_string()))?;
            let scaled = scaled_spectral_embedding(&lap, d).map_err(|e| CliError::Invariant(e.to_string()))?;
            for (kind, table) in [("spectral", &spec.table), ("scaled_spectral", &scaled.table)] {
                let v = row_of(table, r);
                write_heatmap(&mut w, maze, &format!("heatmaps/{kind}_dim{d:02}"), &v, cfg.cell_px)?;
                values.push((kind.to_string(), d, v));
            }
        }
        let mut rows = Vec::new();
        for (kind, d, v) in &values {
            for (s, x) in v.iter().enumerate() {
                let (row, col) = maze.cell(s);
                rows.push(vec![kind.clone(), d.to_string(), s.to_string(), row.to_string(), col.to_string(), num(*x)]);
            }
        }
        w.write_csv("heatmap_values.csv", &["kind", "dim", "state", "row", "col", "distance"], &rows)?;
    }
    w.finish("exact", &config_hash(&cfg), &[])
}

pub fn train(args: &CommonArgs) -> Result<PathBuf, CliError> {
    let mut cfg: TrainConfig = parse(args.config_text()?.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seeds = reseed(&cfg.seeds, s);
    }
    cfg.validate()?;
    let (maze, chain) = cfg.chain.resolve()?;
    let reference = maze.as_ref().map(|m| reference_state(m, cfg.reference)).transpose()?;
    let ad = PassageTables::compute(&chain).map_err(|e| CliError::Config(e.to_string()))?.action_distance();
    let base = cfg.settings();
    let per_seed: Vec<Vec<QEffectRun>> = cfg
        .seeds
        .par_iter()
        .map(|&s| {
            let settings = QEffectSettings { seeds: vec![s], ..base.clone() };
            q_effect_report(&chain, &ad, &settings).map_err(|e| CliError::Config(e.to_string()))
        })
        .collect::<Result<_, _>>()?;
    let runs: Vec<QEffectRun> = per_seed.into_iter().flatten().collect();

    let mut w = ArtifactWriter::create(args.out_dir("train"))?;
    let log_every = cfg.stress.log_every;
    let mut loss = Vec::new();
    let mut dec = Vec::new();
    let mut summary = Vec::new();
    for r in &runs {
        for (k, v) in r.loss_curve.iter().enumerate() {
            let step = ((k + 1) * log_every).min(cfg.stress.steps);
            loss.push(vec![num(r.q), r.seed.to_string(), step.to_string(), num(*v)]);
        }
        for d in &r.deciles {
            dec.push(vec![num(r.q), r.seed.to_string(), d.decile.to_string(), d.pairs.to_string(), num(d.mean_abs_error), num(d.mean_rel_error)]);
        }
        summary.push(vec![num(r.q), r.seed.to_string(), num(r.spearman), num(r.loss_curve.last().copied().unwrap_or(f64::NAN))]);
    }
    w.write_csv("loss_curve.csv", &["q", "seed", "step", "loss"], &loss)?;
    w.write_csv("decile_error.csv", &["q", "seed", "decile", "pairs", "mean_abs_error", "mean_rel_error"], &dec)?;
    w.write_csv("summary.csv", &["q", "seed", "spearman", "final_loss"], &summary)?;

    let mut meds = Vec::new();
    for &q in &cfg.qs {
        let of_q: Vec<&QEffectRun> = runs.iter().filter(|r| r.q == q).collect();
        for d in 0..10 {
            let v: Vec<f64> = of_q.iter().filter_map(|r| r.deciles.get(d)).map(|e| e.mean_rel_error).collect();
            meds.push(vec![num(q), d.to_string(), num(median(&v))]);
        }
    }
    w.write_csv("decile_error_median.csv", &["q", "decile", "median_rel_error"], &meds)?;

    if let (Some(maze), Some(r)) = (&maze, reference) {
        let first = cfg.seeds[0];
        let mut rows = Vec::new();
        for run in runs.iter().filter(|x| x.seed == first) {
            let v: Vec<f64> = (0..maze.n_states()).map(|s| predicted_distance(&run.table, r, s, cfg.stress.p, run.q)).collect();
            write_heatmap(&mut w, maze, &format!("heatmaps/learned_q{}_seed{first}", q_label(run.q)), &v, cfg.cell_px)?;
            for (s, x) in v.iter().enumerate() {
                rows.push(vec![num(run.q), first.to_string(), s.to_string(), num(*x)]);
            }
        }
        let truth: Vec<f64> = (0..maze.n_states()).map(|s| ad[(r, s)]).collect();
        write_heatmap(&mut w, maze, "heatmaps/truth", &truth, cfg.cell_px)?;
        w.write_csv("heatmap_values.csv", &["q", "seed", "state", "predicted_distance"], &rows)?;
    }
    w.finish("train", &config_hash(&cfg), &cfg.seeds)
}

fn q_label(q: f64) -> String {
    format!("{q}").replace('.', "p")
}

#[derive(Debug, Serialize)]
struct CellSummary {
    source: DistanceSource,
    seed: u64,
    baseline_coverage: f64,
    final_coverage: f64,
    goid_fallback_iterations: usize,
    warmup_volumes: Vec<usize>,
    final_volumes: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct SourceSummary {
    source: DistanceSource,
    median_final_coverage: f64,
    /// Per tracked goal.
    median_warmup_volumes: Vec<f64>,
    median_final_volumes: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct CurriculumSummary {
    config_hash: String,
    tracked_goals: Vec<usize>,
    sources: Vec<SourceSummary>,
    runs: Vec<CellSummary>,
}

/// Runs every `(source, seed)` cell; the result is ordered source-major.
pub fn run_curriculum_cells(cfg: &CurriculumRunConfig) -> Result<Vec<CurriculumReport>, CliError> {
    let maze = cfg.maze()?;
    let cells: Vec<(DistanceSource, u64)> = cfg.sources.iter().flat_map(|&s| cfg.seeds.iter().map(move |&k| (s, k))).collect();
    cells
        .par_iter()
        .map(|&(src, seed)| {
            let c = Curriculum::new(maze.clone(), cfg.cell(src, seed)).map_err(|e| CliError::Config(e.to_string()))?;
            c.run().map_err(|e| CliError::Invariant(e.to_string()))
        })
        .collect()
}

fn source_name(s: DistanceSource) -> String {
    serde_json::to_value(s).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn median_by<F: Fn(&CurriculumReport) -> f64>(reps: &[&CurriculumReport], f: F) -> f64 {
    median(&reps.iter().map(|r| f(r)).collect::<Vec<_>>())
}

pub fn curriculum(args: &CommonArgs) -> Result<PathBuf, CliError> {
    let mut cfg: CurriculumRunConfig = parse(args.config_text()?.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seeds = reseed(&cfg.seeds, s);
    }
    cfg.validate()?;
    let maze = cfg.maze()?;
    let reports = run_curriculum_cells(&cfg)?;

    let mut cov = Vec::new();
    let mut vol = Vec::new();
    let mut buf = Vec::new();
    for r in &reports {
        let name = source_name(r.source);
        cov.push(vec![name.clone(), r.seed.to_string(), "0".into(), num(r.baseline_coverage)]);
        for (g, v) in r.tracked_goals.iter().zip(&r.warmup_volumes) {
            vol.push(vec![name.clone(), r.seed.to_string(), g.to_string(), "0".into(), v.to_string()]);
        }
        for (pos, s) in r.initial_buffer.iter().enumerate() {
            let (row, col) = maze.cell(*s);
            buf.push(vec![name.clone(), r.seed.to_string(), "0".into(), pos.to_string(), s.to_string(), row.to_string(), col.to_string()]);
        }
        for it in &r.iterations {
            let k = (it.iteration + 1).to_string();
            cov.push(vec![name.clone(), r.seed.to_string(), k.clone(), num(it.coverage)]);
            for (g, v) in r.tracked_goals.iter().zip(&it.sphere_volumes) {
                vol.push(vec![name.clone(), r.seed.to_string(), g.to_string(), k.clone(), v.to_string()]);
            }
            for (pos, s) in it.buffer.iter().enumerate() {
                let (row, col) = maze.cell(*s);
                buf.push(vec![name.clone(), r.seed.to_string(), k.clone(), pos.to_string(), s.to_string(), row.to_string(), col.to_string()]);
            }
        }
    }

    let mut sources = Vec::new();
    for &src in &cfg.sources {
        let reps: Vec<&CurriculumReport> = reports.iter().filter(|r| r.source == src).collect();
        let name = source_name(src);
        let n_iter = reps[0].iterations.len();
        cov.push(vec![name.clone(), "median".into(), "0".into(), num(median_by(&reps, |r| r.baseline_coverage))]);
        for k in 0..n_iter {
            cov.push(vec![name.clone(), "median".into(), (k + 1).to_string(), num(median_by(&reps, |r| r.iterations[k].coverage))]);
        }
        let goals = reps[0].tracked_goals.clone();
        let mut warm = Vec::new();
        let mut fin = Vec::new();
        for (gi, g) in goals.iter().enumerate() {
            let w0 = median_by(&reps, |r| r.warmup_volumes[gi] as f64);
            vol.push(vec![name.clone(), "median".into(), g.to_string(), "0".into(), num(w0)]);
            for k in 0..n_iter {
                let m = median_by(&reps, |r| r.iterations[k].sphere_volumes[gi] as f64);
                vol.push(vec![name.clone(), "median".into(), g.to_string(), (k + 1).to_string(), num(m)]);
            }
            warm.push(w0);
            fin.push(median_by(&reps, |r| r.final_volumes()[gi] as f64));
        }
        sources.push(SourceSummary {
            source: src,
            median_final_coverage: median_by(&reps, |r| r.final_coverage()),
            median_warmup_volumes: warm,
            median_final_volumes: fin,
        });
    }

    let hash = config_hash(&cfg);
    let summary = CurriculumSummary {
        config_hash: hash.clone(),
        tracked_goals: maze.tracked_goals().to_vec(),
        sources,
        runs: reports
            .iter()
            .map(|r| CellSummary {
                source: r.source,
                seed: r.seed,
                baseline_coverage: r.baseline_coverage,
                final_coverage: r.final_coverage(),
                goid_fallback_iterations: r.iterations.iter().filter(|it| it.goid_fallback).count(),
                warmup_volumes: r.warmup_volumes.clone(),
                final_volumes: r.final_volumes(),
            })
            .collect(),
    };

    let mut w = ArtifactWriter::create(args.out_dir("curriculum"))?;
    w.write_csv("coverage.csv", &["source", "seed", "iteration", "coverage"], &cov)?;
    w.write_csv("sphere_volume.csv", &["source", "seed", "goal", "iteration", "volume"], &vol)?;
    w.write_csv("buffer_evolution.csv", &["source", "seed", "iteration", "position", "state", "row", "col"], &buf)?;
    w.write_json("summary.json", &summary)?;
    w.finish("curriculum", &hash, &cfg.seeds)
}

/// Runs the identity suite and writes `verify.csv`; failing checks are returned, not raised.
pub fn verify_report(args: &CommonArgs, inject_fault: bool) -> Result<(PathBuf, Vec<Check>), CliError> {
    let mut cfg: VerifyConfig = parse(args.config_text()?.as_deref())?;
    cfg.inject_fault |= inject_fault;
    let checks = verify_suite(cfg.inject_fault);
    let mut w = ArtifactWriter::create(args.out_dir("verify"))?;
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| {
            let status = serde_json::to_value(c.status).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
            vec![c.chain.clone(), c.name.to_string(), num(c.value), num(c.tolerance), status]
        })
        .collect();
    w.write_csv("verify.csv", &["chain", "check", "value", "tolerance", "status"], &rows)?;
    let dir = w.finish("verify", &config_hash(&cfg), &[])?;
    Ok((dir, checks))
}

/// Prints the check table; any failing check becomes an invariant error.
pub fn verify(args: &CommonArgs, inject_fault: bool) -> Result<PathBuf, CliError> {
    let (dir, checks) = verify_report(args, inject_fault)?;
    print!("{}", render_table(&checks));
    if !all_pass(&checks) {
        let failed: Vec<String> = checks.iter().filter(|c| c.status == Status::Fail).map(|c| format!("{}/{}", c.chain, c.name)).collect();
        return Err(CliError::Invariant(format!("failed: {}", failed.join(", "))));
    }
    Ok(dir)
}
