use minds_core::gibbs::{initial_state, resume_chain, run_chain_with, Chain, Checkpoint};
use minds_core::model::Initialization;
use minds_core::rng::StreamFactory;
use minds_core::sim::{generate_dataset, generate_truth, SimulationDesign};
use minds_core::{run_chain, MixedDataset, ModelConfig, ParameterState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_design(n_clusters: usize) -> SimulationDesign {
    SimulationDesign {
        n_binary_items: 6,
        n_continuous: 4,
        n_traits: 2,
        n_clusters,
        weights: vec![1.0 / n_clusters as f64; n_clusters],
        ..SimulationDesign::default()
    }
}

fn dataset(n_clusters: usize, n: usize, seed: u64) -> (ParameterState, MixedDataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = generate_truth(&small_design(n_clusters), &mut rng).unwrap();
    let sim = generate_dataset(&truth, n, &mut rng);
    (sim.truth, sim.data)
}

fn config(n_clusters: usize, iterations: usize, burn_in: usize) -> ModelConfig {
    ModelConfig {
        n_iterations: iterations,
        burn_in,
        thin: 2,
        seed: 77,
        initialization: Initialization::KMeansWarmStart,
        ..ModelConfig::new(n_clusters, 2)
    }
}

#[test]
fn fixed_seed_gives_identical_results() {
    let (_, data) = dataset(2, 60, 1);
    let cfg = config(2, 40, 20);
    let a = run_chain(&data, &cfg).unwrap();
    let b = run_chain(&data, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn thread_count_does_not_change_draws() {
    let (_, data) = dataset(2, 60, 2);
    let cfg = config(2, 30, 10);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| run_chain(&data, &cfg).unwrap());
    let b = four.install(|| run_chain(&data, &cfg).unwrap());
    assert_eq!(a, b);
}

#[test]
fn resumed_chain_is_bit_identical() {
    let (_, data) = dataset(3, 50, 3);
    let cfg = ModelConfig {
        checkpoint_interval: 7,
        ..config(3, 40, 15)
    };
    let full = run_chain(&data, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.ckpt");
    let mut chain = Chain::new(&data, &cfg).unwrap();
    for _ in 0..21 {
        chain.step().unwrap();
    }
    chain.checkpoint().save(&path).unwrap();
    drop(chain);
    let resumed = resume_chain(&data, Checkpoint::load(&path).unwrap(), &mut |_| Ok(())).unwrap();
    assert_eq!(full, resumed);
}

#[test]
fn checkpoints_arrive_at_the_interval() {
    let (_, data) = dataset(2, 30, 4);
    let cfg = ModelConfig {
        checkpoint_interval: 5,
        ..config(2, 23, 10)
    };
    let mut seen = Vec::new();
    run_chain_with(&data, &cfg, &mut |c| {
        seen.push(c.completed_iterations);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, vec![5, 10, 15, 20]);
}

#[test]
fn retention_keeps_the_last_iteration_and_thins() {
    let (_, data) = dataset(2, 30, 5);
    let cfg = ModelConfig {
        thin: 3,
        ..config(2, 20, 10)
    };
    let r = run_chain(&data, &cfg).unwrap();
    assert_eq!(r.draw_iterations, vec![11, 14, 17, 20]);
    assert_eq!(r.log_likelihoods.len(), 20);
    assert_eq!(r.retained_log_likelihoods.len(), 4);
    assert_eq!(r.trace.last().unwrap().iteration, 20);
}

#[test]
fn single_cluster_never_moves_memberships() {
    let (_, data) = dataset(1, 80, 6);
    let cfg = ModelConfig {
        initialization: Initialization::Prior,
        ..config(1, 300, 150)
    };
    let r = run_chain(&data, &cfg).unwrap();
    assert!(r.draws.iter().all(|d| d.memberships.iter().all(|&z| z == 0)));
    assert!(r.draws.iter().all(|d| d.mixture_weights[0] == 1.0));
    assert!(r.retained_log_likelihoods.iter().all(|l| l.is_finite()));
    assert!(r.membership_probabilities.iter().all(|&p| p == 1.0));
}

#[test]
fn well_specified_chain_from_the_truth_has_no_trend() {
    let (truth, data) = dataset(2, 300, 7);
    let cfg = ModelConfig {
        thin: 1,
        ..config(2, 600, 100)
    };
    let r = Chain::from_state(&data, &cfg, truth)
        .unwrap()
        .run(&mut |_| Ok(()))
        .unwrap();
    assert!(r.trend.trend_free(0.01), "Mann-Kendall p = {}", r.trend.p_value);
}

#[test]
fn relabeling_is_consistent_with_argmax() {
    let (_, data) = dataset(3, 120, 8);
    let r = run_chain(&data, &config(3, 120, 60)).unwrap();
    for (draw, perm) in r.draws.iter().zip(&r.relabelings) {
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2]);
        assert_eq!(draw.n_clusters(), 3);
    }
    let argmax = minds_core::model::hard_labels(&r.membership_probabilities);
    assert_eq!(argmax, r.point_estimate.memberships);
}

#[test]
fn warm_start_memberships_come_from_kmeans() {
    let (_, data) = dataset(3, 90, 9);
    let cfg = config(3, 20, 10);
    let s = initial_state(&data, &cfg, &StreamFactory::new(cfg.seed)).unwrap();
    assert!(s.subject_traits.iter().all(|&b| b == 0.0));
    assert!((s.mixture_weights.sum() - 1.0).abs() < 1e-12);
    let mut counts = [0usize; 3];
    for &z in &s.memberships {
        counts[z] += 1;
    }
    assert!(counts.iter().all(|&c| c > 0));
}

#[test]
fn burn_in_must_be_below_iterations() {
    let (_, data) = dataset(2, 20, 10);
    assert!(run_chain(&data, &config(2, 10, 10)).is_err());
}
