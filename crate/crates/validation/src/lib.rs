//! Acceptance criteria, each returning a pass flag and the measured values.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use ectd::checks::{identity_checks, standard_chains, Check, Status};
use ectd::commands::{self, exact, run_curriculum_cells, CommonArgs};
use ectd::config::CurriculumRunConfig;
use ectd_core::chain::{build_laplacian, MarkovChain, PassageTables};
use ectd_core::curriculum::{CurriculumReport, DistanceSource};
use ectd_core::embed_exact::{classical_mds, EmbeddingTable, SquaredDistanceMatrix};
use ectd_core::embed_online::*;
use ectd_core::gridworld::build_uniform_maze;
use ectd_core::linalg::max_abs;
use ectd_core::stats::{median, spearman};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

pub fn criterion_1() -> Outcome {
    let wanted = [
        ("first_passage_from_pinv", "a"),
        ("commute_from_pinv", "b"),
        ("double_centered_commute", "c"),
        ("weight_row_sums", "d"),
        ("graph_volume", "d"),
    ];
    let start = Instant::now();
    let mut failed = Vec::new();
    for nc in standard_chains().into_iter().filter(|c| c.label != "umaze9") {
        let lap = build_laplacian(&nc.chain).expect("connected chain");
        let checks: Vec<Check> = identity_checks(&nc.label, &nc.chain, &lap, false);
        for (name, tag) in wanted {
            let c = checks.iter().find(|c| c.name == name).expect("check present");
            if c.status != Status::Pass {
                failed.push(format!("{}({tag}) {}={:.3e}>{:.0e}", nc.label, name, c.value, c.tolerance));
            }
        }
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(10) {
        failed.push(format!("runtime {elapsed:?}"));
    }
    let detail = if failed.is_empty() { format!("all identities hold ({elapsed:.2?})") } else { failed.join("; ") };
    outcome(failed.is_empty(), detail)
}

pub fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..300 {
        let n = rng.gen_range(2..=20);
        let dim = rng.gen_range(1..=5);
        let pts = DMatrix::from_fn(n, dim, |_, _| rng.gen_range(-10.0..10.0));
        let mds = classical_mds(&SquaredDistanceMatrix::from_points(&pts), dim.min(n)).expect("euclidean input");
        let orig = EmbeddingTable::new(pts).expect("finite").pairwise_distances();
        worst = worst.max(max_abs(&(mds.table.pairwise_distances() - orig)));
    }
    let mut commute_err = 0.0f64;
    for (_, chain) in [build_uniform_maze(), ectd_core::gridworld::build_biased_maze()] {
        let nmat = PassageTables::compute(&chain).unwrap().commute;
        let n = chain.n_states();
        let mds = classical_mds(&SquaredDistanceMatrix::new(nmat.clone()).unwrap(), n - 1).unwrap();
        commute_err = commute_err.max(max_abs(&(mds.table.pairwise_distances() - nmat.map(f64::sqrt))));
    }
    outcome(worst < 1e-8 && commute_err < 1e-7, format!("round trip {worst:.2e} (<1e-8), full-rank N {commute_err:.2e} (<1e-7)"))
}

fn read_curve(path: &Path) -> BTreeMap<String, Vec<f64>> {
    let text = std::fs::read_to_string(path).expect("curve written");
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(str::to_string).collect();
    let mut cols: BTreeMap<String, Vec<f64>> = header.iter().map(|h| (h.clone(), Vec::new())).collect();
    for l in lines {
        for (h, v) in header.iter().zip(l.split(',')) {
            cols.get_mut(h).unwrap().push(v.parse().unwrap());
        }
    }
    cols
}

fn argmin(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, k| if v[k] < v[b] { k } else { b })
}

pub fn criterion_3(tmp: &Path) -> Outcome {
    let mut dims: Vec<usize> = (1..=23).step_by(2).collect();
    dims.push(24);
    let mut curves = BTreeMap::new();
    for name in ["uniform", "biased"] {
        let cfg = tmp.join(format!("exact_{name}.json"));
        std::fs::write(&cfg, format!(r#"{{"chain": {{"named": "{name}"}}, "dims": {dims:?}}}"#)).unwrap();
        let out = tmp.join(format!("exact_{name}"));
        exact(&CommonArgs { out: Some(out.clone()), config: Some(cfg), seed: None }).expect("exact command");
        curves.insert(name, read_curve(&out.join("rmse_curve.csv")));
    }
    let mut notes = Vec::new();
    let mut pass = true;
    for (name, c) in &curves {
        let sc = &c["scaled_spectral_rmse"];
        let mono = sc.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        pass &= mono;
        notes.push(format!("{name} scaled non-increasing={mono}"));
    }
    let spec = &curves["uniform"]["spectral_rmse"];
    let best = argmin(spec);
    let worsens = spec[best + 1..].iter().any(|&v| v > spec[best]);
    pass &= worsens;
    notes.push(format!("uniform spectral best at dim {} then rises to {:.3} at dim 24: {worsens}", dims[best], spec.last().unwrap()));
    let b = &curves["biased"];
    let (near, far) = (argmin(&b["spectral_near_decile_rmse"]), argmin(&b["spectral_far_decile_rmse"]));
    pass &= near != far;
    notes.push(format!("biased near-decile best dim {}, far-decile best dim {}", dims[near], dims[far]));
    outcome(pass, notes.join("; "))
}

pub fn criterion_4() -> Outcome {
    let lazy = MarkovChain::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
    let m = PassageTables::compute(&lazy).unwrap().first_passage;
    let batch = sample_trajectories(&lazy, 50, 2000, &StartDistribution::State(0), 4).unwrap();
    let pairs = extract_passage_pairs(&batch, 100_000, 5).unwrap();
    let mut notes = Vec::new();
    let mut pass = true;
    for i in 0..2 {
        for j in 0..2 {
            let ks: Vec<f64> = pairs.iter().filter(|p| p.i == i && p.j == j).map(|p| f64::from(p.k)).collect();
            let mean = ks.iter().sum::<f64>() / ks.len() as f64;
            let var = ks.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / (ks.len() as f64 - 1.0);
            let se = (var / ks.len() as f64).sqrt();
            let ok = (mean - m[(i, j)]).abs() <= 3.0 * se;
            pass &= ok;
            notes.push(format!("m({j}|{i}) {mean:.4} vs {:.1} (se {se:.4})", m[(i, j)]));
        }
    }
    let (_, chain) = build_uniform_maze();
    let n = chain.n_states();
    let m = PassageTables::compute(&chain).unwrap().first_passage;
    let batch = sample_trajectories(&chain, 200, 1000, &StartDistribution::Weights(vec![1.0; n]), 6).unwrap();
    let (means, counts) = mean_targets(&extract_passage_pairs(&batch, 200_000, 7).unwrap(), n);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for i in 0..n {
        for j in 0..n {
            if i != j && counts[(i, j)] > 0.0 {
                a.push(means[(i, j)]);
                b.push(m[(i, j)]);
            }
        }
    }
    let rho = spearman(&a, &b);
    pass &= rho > 0.95;
    notes.push(format!("maze Spearman {rho:.4} over {} pairs (>0.95)", a.len()));
    outcome(pass, notes.join("; "))
}

pub fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let combos = [(Norm::L2, 0.5), (Norm::L2, 1.0), (Norm::L2, 2.0), (Norm::L2, 4.0), (Norm::L1, 1.0)];
    for _ in 0..200 {
        for (p, q) in combos {
            let dim = rng.gen_range(1..6);
            let xi: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let xj: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if xi.iter().zip(&xj).any(|(a, b)| (a - b).abs() < 1e-2) {
                continue;
            }
            let k = rng.gen_range(0.0..5.0);
            let mut g = vec![0.0; dim];
            pair_loss_and_grad(&xi, &xj, k, p, q, &mut g);
            let scale = g.iter().fold(1e-3f64, |m, v| m.max(v.abs()));
            for d in 0..dim {
                let h = 1e-5;
                let mut scratch = vec![0.0; dim];
                let (mut a, mut b) = (xi.clone(), xi.clone());
                a[d] += h;
                b[d] -= h;
                let fd = (pair_loss_and_grad(&a, &xj, k, p, q, &mut scratch) - pair_loss_and_grad(&b, &xj, k, p, q, &mut scratch)) / (2.0 * h);
                worst = worst.max((fd - g[d]).abs() / scale);
            }
        }
    }
    let start = Instant::now();
    let (_, chain) = build_uniform_maze();
    let ad = PassageTables::compute(&chain).unwrap().action_distance();
    let batch = sample_trajectories(&chain, 200, 1000, &StartDistribution::Weights(vec![1.0; 25]), 0).unwrap();
    let pairs = extract_passage_pairs(&batch, 200_000, 1).unwrap();
    let cfg = StressConfig { dim: 20, learning_rate: 1e-4, init_scale: 1.0, steps: 30_000, seed: 2, ..StressConfig::default() };
    let trained = train_embedding(&pairs, 25, &cfg).unwrap();
    let rho = spearman_vs(&trained.table, cfg.p, cfg.q, &ad);
    let elapsed = start.elapsed();
    let pass = worst < 1e-5 && rho > 0.9 && elapsed < Duration::from_secs(300);
    outcome(pass, format!("max FD rel err {worst:.2e} (<1e-5); 20-dim Spearman {rho:.4} (>0.9) in {elapsed:.1?} (<300 s)"))
}

pub fn criterion_6() -> Outcome {
    let (_, chain) = build_uniform_maze();
    let ad = PassageTables::compute(&chain).unwrap().action_distance();
    let settings = QEffectSettings::uniform_maze((0..5).collect());
    let runs = q_effect_report(&chain, &ad, &settings).unwrap();
    let meds: Vec<f64> = settings
        .qs
        .iter()
        .map(|&q| median(&runs.iter().filter(|r| r.q == q).map(|r| r.deciles[0].mean_rel_error).collect::<Vec<_>>()))
        .collect();
    let strict = meds.windows(2).all(|w| w[1] > w[0]);
    let listed: Vec<String> = settings.qs.iter().zip(&meds).map(|(q, m)| format!("q={q}: {m:.4}")).collect();
    let endpoints = meds.last().unwrap() > &meds[0];
    outcome(strict, format!("median lowest-decile rel err {}; q=0.5 < q=4 alone: {endpoints}", listed.join(", ")))
}

fn by_source(reports: &[CurriculumReport], s: DistanceSource) -> Vec<&CurriculumReport> {
    reports.iter().filter(|r| r.source == s).collect()
}

pub fn criterion_7(reports: &[CurriculumReport], elapsed: Duration) -> Outcome {
    let vol = |rs: &[&CurriculumReport], f: &dyn Fn(&CurriculumReport) -> usize| median(&rs.iter().map(|r| f(r) as f64).collect::<Vec<_>>());
    let on = by_source(reports, DistanceSource::OnPolicy);
    let off = by_source(reports, DistanceSource::OffPolicy);
    let on_warm = vol(&on, &|r| r.warmup_volumes[0]);
    let on_final = vol(&on, &|r| r.final_volumes()[0]);
    let off_final = vol(&off, &|r| r.final_volumes()[0]);
    let pass = on_final > on_warm && on_final > off_final && elapsed < Duration::from_secs(900);
    outcome(pass, format!("near-start goal: on-policy warm-up {on_warm} -> final {on_final}, off-policy final {off_final}; {elapsed:.1?} (<900 s)"))
}

fn buffer_violations(r: &CurriculumReport, capacity: usize, replace: usize) -> usize {
    let mut bad = 0;
    let mut prev = r.initial_buffer.clone();
    for it in &r.iterations {
        let mut sorted = it.buffer.clone();
        sorted.sort_unstable();
        sorted.dedup();
        let survivors: Vec<usize> = prev.iter().copied().filter(|g| it.buffer.contains(g)).collect();
        let fifo = it.buffer[..survivors.len()] == survivors[..] && it.buffer[survivors.len()..] == it.inserted_goals[..];
        if it.buffer.len() > capacity || it.inserted_goals.len() > replace || sorted.len() != it.buffer.len() || !fifo {
            bad += 1;
        }
        prev = it.buffer.clone();
    }
    bad
}

pub fn criterion_8(reports: &[CurriculumReport], cfg: &CurriculumRunConfig) -> Outcome {
    let cov = |s| median(&by_source(reports, s).iter().map(|r| r.final_coverage()).collect::<Vec<_>>());
    let oracle = cov(DistanceSource::Oracle);
    let off = cov(DistanceSource::OffPolicy);
    let capacity = cfg.run.buffer_capacity;
    let replace = cfg.run.replace_per_iter;
    let violations: usize = reports.iter().map(|r| buffer_violations(r, capacity, replace)).sum();
    let pass = oracle >= 0.9 && off >= 0.8 * oracle && violations == 0 && capacity == 50 && replace == 5;
    outcome(
        pass,
        format!("oracle coverage {oracle:.4} (>=0.9), off-policy {off:.4} (>= {:.4}); buffer C={capacity} R={replace}, violations {violations}", 0.8 * oracle),
    )
}

fn csv_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

pub fn criterion_9(tmp: &Path) -> Outcome {
    let train_cfg = tmp.join("train_small.json");
    let mut t = ectd::config::TrainConfig::default();
    t.stress.steps = 2000;
    t.seeds = vec![0, 1];
    t.n_episodes = 40;
    t.n_pairs = 20_000;
    std::fs::write(&train_cfg, serde_json::to_string(&t).unwrap()).unwrap();
    let cur_cfg = tmp.join("curriculum_small.json");
    let mut c = CurriculumRunConfig::default();
    c.seeds = vec![0, 1];
    c.run.iterations = 5;
    c.run.episodes_per_iter = 30;
    std::fs::write(&cur_cfg, serde_json::to_string(&c).unwrap()).unwrap();

    let mut notes = Vec::new();
    let mut pass = true;
    type Cmd = fn(&CommonArgs) -> Result<std::path::PathBuf, ectd::error::CliError>;
    let verify: Cmd = |a| match commands::verify_report(a, false)? {
        (dir, checks) if ectd::checks::all_pass(&checks) => Ok(dir),
        _ => Err(ectd::error::CliError::Invariant("verify failed".into())),
    };
    let jobs: [(&str, Cmd, Option<&Path>); 4] =
        [("verify", verify, None), ("exact", exact, None), ("train", commands::train, Some(&train_cfg)), ("curriculum", commands::curriculum, Some(&cur_cfg))];
    for (name, cmd, cfg) in jobs {
        let mut dirs = Vec::new();
        for run in 0..2 {
            let out = tmp.join(format!("det_{name}_{run}"));
            let args = CommonArgs { out: Some(out.clone()), config: cfg.map(Path::to_path_buf), seed: Some(7) };
            pass &= cmd(&args).is_ok();
            dirs.push(csv_bytes(&out));
        }
        let same = !dirs[0].is_empty() && dirs[0] == dirs[1];
        pass &= same;
        notes.push(format!("{name}: {} CSVs identical={same}", dirs[0].len()));
    }
    outcome(pass, notes.join("; "))
}

/// Every default curriculum cell, plus the wall-clock time they took.
pub fn curriculum_runs() -> (CurriculumRunConfig, Vec<CurriculumReport>, Duration) {
    let cfg = CurriculumRunConfig::default();
    let start = Instant::now();
    let reports = run_curriculum_cells(&cfg).expect("curriculum runs");
    (cfg, reports, start.elapsed())
}
