use minds_core::model::Initialization;
use minds_core::selection::{information_criterion, select_k};
use minds_core::sim::{generate_dataset, generate_truth, SimulationDesign};
use minds_core::{run_chain, MixedDataset, ModelConfig};
use ndarray::array;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn separated(n: usize, seed: u64) -> MixedDataset {
    let design = SimulationDesign {
        n_binary_items: 8,
        n_continuous: 6,
        n_traits: 2,
        n_clusters: 3,
        weights: vec![0.4, 0.3, 0.3],
        trait_variance: 0.05,
        noise_variance: 0.25,
        ..SimulationDesign::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth = generate_truth(&design, &mut rng).unwrap();
    truth.cluster_centers = array![[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]];
    generate_dataset(&truth, n, &mut rng).data
}

fn template() -> ModelConfig {
    ModelConfig {
        n_iterations: 800,
        burn_in: 400,
        thin: 2,
        seed: 5,
        initialization: Initialization::KMeansWarmStart,
        ..ModelConfig::new(3, 2)
    }
}

#[test]
fn single_candidate_is_returned() {
    let data = separated(120, 1);
    let cfg = ModelConfig {
        n_iterations: 60,
        burn_in: 30,
        ..template()
    };
    let s = select_k(&data, &cfg, &[3]).unwrap();
    assert_eq!(s.best_k, Some(3));
    assert_eq!(s.rows.len(), 1);
}

#[test]
fn identical_seeds_identical_tables() {
    let data = separated(80, 2);
    let cfg = ModelConfig {
        n_iterations: 40,
        burn_in: 20,
        ..template()
    };
    let a = select_k(&data, &cfg, &[2, 3]).unwrap();
    let b = select_k(&data, &cfg, &[3, 2]).unwrap();
    assert_eq!(a.rows[0], b.rows[1]);
    assert_eq!(a.rows[1], b.rows[0]);
    assert_eq!(a.best_k, b.best_k);
}

#[test]
fn too_few_clusters_raise_the_ic() {
    let data = separated(400, 3);
    let s = select_k(&data, &template(), &[2, 3, 4]).unwrap();
    let ic = |k: usize| s.rows.iter().find(|r| r.k == k).unwrap().report.unwrap().ic;
    assert!(ic(2) > ic(3) + 100.0, "{:?}", s.rows);
    assert!(s.best_k.unwrap() >= 3);
}

#[test]
fn ic_is_computed_from_retained_draws() {
    let data = separated(60, 4);
    let cfg = ModelConfig {
        n_iterations: 50,
        burn_in: 20,
        ..template()
    };
    let chain = run_chain(&data, &cfg).unwrap();
    let r = information_criterion(&chain, &data).unwrap();
    let mean = chain.retained_log_likelihoods.iter().sum::<f64>() / chain.retained_log_likelihoods.len() as f64;
    assert!((r.mean_log_likelihood - mean).abs() < 1e-9 * mean.abs());
    let plugin = chain.point_estimate.joint_log_likelihood(&data).unwrap();
    assert_eq!(r.plugin_log_likelihood, plugin);
    assert!((r.ic - (-2.0 * mean + 2.0 * (2.0 * plugin - 2.0 * mean))).abs() < 1e-9 * r.ic.abs());
}
