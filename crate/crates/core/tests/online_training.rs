use ectd_core::chain::*;
use ectd_core::embed_exact::EmbeddingTable;
use ectd_core::embed_online::*;
use ectd_core::gridworld::*;
use ectd_core::stats::spearman;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const COMBOS: [(Norm, f64); 5] = [(Norm::L2, 0.5), (Norm::L2, 1.0), (Norm::L2, 2.0), (Norm::L2, 4.0), (Norm::L1, 1.0)];

fn loss_at(xi: &[f64], xj: &[f64], k: f64, p: Norm, q: f64) -> f64 {
    let mut g = vec![0.0; xi.len()];
    pair_loss_and_grad(xi, xj, k, p, q, &mut g)
}

fn exact_pairs(chain: &MarkovChain) -> Vec<(usize, usize, f64)> {
    let ad = PassageTables::compute(chain).unwrap().action_distance();
    let n = chain.n_states();
    (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).map(|(i, j)| (i, j, ad[(i, j)])).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn gradients_match_central_differences(seed in any::<u64>(), dim in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (p, q) in COMBOS {
            let xi: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let xj: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let k = rng.gen_range(0.0..5.0);
            if xi.iter().zip(&xj).any(|(a, b)| (a - b).abs() < 1e-2) {
                continue;
            }
            let mut g = vec![0.0; dim];
            pair_loss_and_grad(&xi, &xj, k, p, q, &mut g);
            let h = 1e-5;
            let mut err = 0.0f64;
            let mut scale = 0.0f64;
            for d in 0..dim {
                let mut a = xi.clone();
                let mut b = xi.clone();
                a[d] += h;
                b[d] -= h;
                let fd = (loss_at(&a, &xj, k, p, q) - loss_at(&b, &xj, k, p, q)) / (2.0 * h);
                err = err.max((fd - g[d]).abs());
                scale = scale.max(g[d].abs());
            }
            prop_assert!(err <= 1e-5 * scale.max(1e-3), "p {:?} q {} err {} scale {}", p, q, err, scale);
        }
    }

    #[test]
    fn translation_leaves_predictions_unchanged(seed in any::<u64>(), shift in prop::collection::vec(-50.0f64..50.0, 3)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords = DMatrix::from_fn(6, 3, |_, _| rng.gen_range(-2.0..2.0));
        let moved = DMatrix::from_fn(6, 3, |r, c| coords[(r, c)] + shift[c]);
        let a = EmbeddingTable::new(coords).unwrap();
        let b = EmbeddingTable::new(moved).unwrap();
        for (p, q) in COMBOS {
            for i in 0..6 {
                for j in 0..6 {
                    let (x, y) = (predicted_distance(&a, i, j, p, q), predicted_distance(&b, i, j, p, q));
                    prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
                }
            }
        }
    }
}

#[test]
fn full_batch_descent_is_monotone_on_small_chains() {
    let chains = [
        MarkovChain::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap(),
        MarkovChain::from_rows(&[vec![0.2, 0.5, 0.3], vec![0.4, 0.2, 0.4], vec![0.3, 0.3, 0.4]]).unwrap(),
        GridMaze::from_spec(&MazeSpec { width: 5, height: 1, walls: vec![], move_probs: MoveProbs::UNIFORM })
            .unwrap()
            .random_walk_chain()
            .unwrap(),
    ];
    for chain in &chains {
        let pairs = exact_pairs(chain);
        for (p, q) in [(Norm::L2, 0.5), (Norm::L2, 1.0), (Norm::L2, 2.0), (Norm::L1, 1.0)] {
            let cfg = StressConfig { dim: 3, p, q, learning_rate: 1e-3, init_scale: 1.0, seed: 3, ..StressConfig::default() };
            let mut tr = StressTrainer::new(chain.n_states(), cfg).unwrap();
            let mut prev = f64::INFINITY;
            for _ in 0..1000 {
                let loss = tr.step(pairs.iter().copied()).unwrap();
                assert!(loss <= prev + 1e-12, "q {q}: {loss} > {prev}");
                prev = loss;
            }
        }
    }
}

#[test]
fn q1_and_q2_fit_three_state_chain_exactly() {
    let chain = MarkovChain::from_rows(&[vec![0.2, 0.5, 0.3], vec![0.4, 0.2, 0.4], vec![0.3, 0.3, 0.4]]).unwrap();
    let pairs = exact_pairs(&chain);
    for (q, lr) in [(1.0, 0.05), (2.0, 0.01)] {
        let cfg = StressConfig { dim: 2, q, learning_rate: lr, init_scale: 1.0, seed: 5, ..StressConfig::default() };
        let mut tr = StressTrainer::new(3, cfg).unwrap();
        let mut loss = f64::INFINITY;
        for _ in 0..20_000 {
            loss = tr.step(pairs.iter().copied()).unwrap();
        }
        assert!(loss < 1e-3, "q {q}: {loss}");
    }
}

#[test]
fn transition_frequencies_converge() {
    let (_, chain) = build_uniform_maze();
    let batch = sample_trajectories(&chain, 100, 10_000, &StartDistribution::State(12), 8).unwrap();
    let n = chain.n_states();
    let mut counts = DMatrix::<f64>::zeros(n, n);
    for ep in &batch.episodes {
        for w in ep.windows(2) {
            counts[(w[0], w[1])] += 1.0;
        }
    }
    let p = chain.transition();
    for i in 0..n {
        let row = counts.row(i).sum();
        for j in 0..n {
            assert!((counts[(i, j)] / row - p[(i, j)]).abs() < 0.01);
        }
    }
}

#[test]
fn sampling_is_deterministic() {
    let (_, chain) = build_uniform_maze();
    let start = StartDistribution::Weights(vec![1.0; 25]);
    let a = sample_trajectories(&chain, 5, 50, &start, 42).unwrap();
    let b = sample_trajectories(&chain, 5, 50, &start, 42).unwrap();
    assert_eq!(a, b);
    assert_eq!(extract_passage_pairs(&a, 100, 1).unwrap(), extract_passage_pairs(&b, 100, 1).unwrap());
}

#[test]
fn lazy_chain_estimator_recovers_two() {
    let chain = MarkovChain::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
    let batch = sample_trajectories(&chain, 50, 2000, &StartDistribution::State(0), 1).unwrap();
    let pairs = extract_passage_pairs(&batch, 100_000, 2).unwrap();
    assert!(pairs.iter().all(|p| (p.k == 0) == (p.i == p.j)));
    let ks: Vec<f64> = pairs.iter().filter(|p| p.i == 0 && p.j == 1).map(|p| f64::from(p.k)).collect();
    let mean = ks.iter().sum::<f64>() / ks.len() as f64;
    assert!((mean - 2.0).abs() < 0.05, "{mean}");
}

#[test]
fn trained_maze_table_tracks_action_distance() {
    let (_, chain) = build_uniform_maze();
    let ad = PassageTables::compute(&chain).unwrap().action_distance();
    let batch = sample_trajectories(&chain, 200, 1000, &StartDistribution::Weights(vec![1.0; 25]), 0).unwrap();
    let pairs = extract_passage_pairs(&batch, 200_000, 1).unwrap();
    let cfg = StressConfig { learning_rate: 1e-4, init_scale: 1.0, steps: 30_000, seed: 2, ..StressConfig::default() };
    let trained = train_embedding(&pairs, 25, &cfg).unwrap();
    assert!(spearman_vs(&trained.table, cfg.p, cfg.q, &ad) > 0.9);

    // Squared-distance fit vs half commute time on the nearer half of the pairs.
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for i in 0..25 {
        for j in (i + 1)..25 {
            rows.push((ad[(i, j)], predicted_distance(&trained.table, i, j, cfg.p, cfg.q)));
        }
    }
    let truths: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let med = ectd_core::stats::median(&truths);
    let near: Vec<&(f64, f64)> = rows.iter().filter(|r| r.0 <= med).collect();
    let rel_rmse = (near.iter().map(|(t, p)| ((p - t) / t).powi(2)).sum::<f64>() / near.len() as f64).sqrt();
    assert!(rel_rmse < 0.15, "{rel_rmse}");

    let targets: Vec<f64> = rows.iter().map(|r| r.1).collect();
    assert!(spearman(&truths, &targets) > 0.9);
}

#[test]
fn q_effect_runs_are_deterministic() {
    let (_, chain) = build_uniform_maze();
    let ad = PassageTables::compute(&chain).unwrap().action_distance();
    let mut s = QEffectSettings::uniform_maze(vec![3]);
    s.base.steps = 500;
    s.n_pairs = 5000;
    s.n_episodes = 20;
    let a = q_effect_report(&chain, &ad, &s).unwrap();
    let b = q_effect_report(&chain, &ad, &s).unwrap();
    assert_eq!(a.len(), 4);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.deciles, y.deciles);
        assert_eq!(x.loss_curve, y.loss_curve);
    }
}
