//! Synthetic data from the joint model and replicate experiments.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use std::time::Instant;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::{assign_to_clusters, gower_hclust, kmeans, standardize, KMeansOptions, Linkage};
use crate::error::{MindsError, Result};
use crate::gibbs::updates::sample_categorical;
use crate::gibbs::{canonicalize, run_chain};
use crate::io::format_float;
use crate::metrics::{
    align_labels, align_to_truth, bayes_error, classification_error, jaccard_distance, one_hot, recovery_table,
    RecoveryTable,
};
use crate::model::{MixedDataset, ModelConfig, ParameterState};
use crate::predict::{predict_memberships, PredictConfig};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationDesign {
    pub n_binary_items: usize,
    pub n_continuous: usize,
    pub n_traits: usize,
    pub n_clusters: usize,
    pub weights: Vec<f64>,
    pub training_sizes: Vec<usize>,
    pub test_size: usize,
    pub n_replicates: usize,
    pub seed: u64,
    /// Variance of the subject traits.
    pub trait_variance: f64,
    /// Noise variance of every continuous measure.
    pub noise_variance: f64,
    pub center_range: (f64, f64),
    pub loading_range: (f64, f64),
    pub binary_threshold_range: (f64, f64),
    pub continuous_threshold_range: (f64, f64),
}

impl Default for SimulationDesign {
    fn default() -> Self {
        Self {
            n_binary_items: 10,
            n_continuous: 10,
            n_traits: 3,
            n_clusters: 5,
            weights: vec![0.3, 0.15, 0.15, 0.2, 0.2],
            training_sizes: vec![1000, 2000],
            test_size: 10_000,
            n_replicates: 20,
            seed: 2024,
            trait_variance: 0.2,
            noise_variance: 1.0,
            center_range: (0.0, 2.0),
            loading_range: (0.0, 2.0),
            binary_threshold_range: (-0.5, 0.5),
            continuous_threshold_range: (-5.0, 5.0),
        }
    }
}

impl SimulationDesign {
    pub fn validate(&self) -> Result<()> {
        if self.n_binary_items == 0 || self.n_continuous == 0 || self.n_traits == 0 {
            return Err(MindsError::Config(
                "item, measure and trait counts must be positive".into(),
            ));
        }
        if self.weights.len() != self.n_clusters || self.n_clusters == 0 {
            return Err(MindsError::Config(format!(
                "{} weights given for {} clusters",
                self.weights.len(),
                self.n_clusters
            )));
        }
        let total: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|&w| !(w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(MindsError::Config(format!(
                "weights must be a probability vector (sum {total})"
            )));
        }
        if self.training_sizes.contains(&0) || self.test_size == 0 {
            return Err(MindsError::Config("sample sizes must be positive".into()));
        }
        if !(self.trait_variance > 0.0) || !(self.noise_variance > 0.0) {
            return Err(MindsError::Config("variances must be positive".into()));
        }
        for (name, (lo, hi)) in [
            ("center_range", self.center_range),
            ("loading_range", self.loading_range),
            ("binary_threshold_range", self.binary_threshold_range),
            ("continuous_threshold_range", self.continuous_threshold_range),
        ] {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(MindsError::Config(format!("{name} must be a finite interval")));
            }
        }
        Ok(())
    }
}

fn uniform_fill<R: Rng + ?Sized>(shape: (usize, usize), (lo, hi): (f64, f64), rng: &mut R) -> Array2<f64> {
    let u = Uniform::new(lo, hi).expect("valid interval");
    Array2::from_shape_simple_fn(shape, || u.sample(rng))
}

/// Population parameters (no subjects) drawn from the design distributions.
pub fn generate_truth<R: Rng + ?Sized>(design: &SimulationDesign, rng: &mut R) -> Result<ParameterState> {
    design.validate()?;
    let (nc, nt) = (design.n_clusters, design.n_traits);
    let (d1, d2) = (design.n_binary_items, design.n_continuous);
    let mut s = ParameterState::zeros(0, nc, nt, d1, d2);
    s.cluster_centers = uniform_fill((nc, nt), design.center_range, rng);
    s.binary_loadings = uniform_fill((nt, d1), design.loading_range, rng);
    s.continuous_loadings = uniform_fill((nt, d2), design.loading_range, rng);
    s.binary_thresholds = uniform_fill((1, d1), design.binary_threshold_range, rng)
        .row(0)
        .to_owned();
    s.continuous_thresholds = uniform_fill((1, d2), design.continuous_threshold_range, rng)
        .row(0)
        .to_owned();
    s.mixture_weights = Array1::from(design.weights.clone());
    s.trait_variance = design.trait_variance;
    s.noise_variances = Array1::from_elem(d2, design.noise_variance);
    Ok(s)
}

/// Fresh subjects (memberships and traits) from the population in `truth`.
pub fn draw_subjects<R: Rng + ?Sized>(truth: &ParameterState, n: usize, rng: &mut R) -> ParameterState {
    let mut s = truth.without_augmentation();
    let weights = truth.mixture_weights.to_vec();
    s.memberships = (0..n).map(|_| sample_categorical(&weights, rng)).collect();
    let b = Normal::new(0.0, truth.trait_variance.sqrt()).expect("positive variance");
    s.subject_traits = Array2::from_shape_simple_fn((n, truth.n_traits()), || b.sample(rng));
    s.augmentation = Array2::zeros((0, 0));
    s
}

/// A simulated dataset together with the subject-level truth that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedData {
    pub data: MixedDataset,
    pub truth: ParameterState,
}

impl SimulatedData {
    pub fn labels(&self) -> &[usize] {
        &self.truth.memberships
    }
}

/// `n` new subjects and their responses.
pub fn generate_dataset<R: Rng + ?Sized>(truth: &ParameterState, n: usize, rng: &mut R) -> SimulatedData {
    let subjects = draw_subjects(truth, n, rng);
    let data = subjects.simulate_data(rng);
    SimulatedData { data, truth: subjects }
}

/// Mean and sample standard deviation, the `mean(sd)` cells of the tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                sd: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, sd, n }
    }
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3}({:.3})", self.mean, self.sd)
    }
}

/// Run `job` for every replicate index in parallel; results come back in index order.
pub fn par_replicates<T: Send>(n: usize, job: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).into_par_iter().map(job).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Minds,
    Kmeans,
    GowerHclust,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Minds, Method::Kmeans, Method::GowerHclust];

    pub fn name(self) -> &'static str {
        match self {
            Method::Minds => "minds",
            Method::Kmeans => "kmeans",
            Method::GowerHclust => "gower_hclust",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = MindsError;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| MindsError::Config(format!("unknown method '{s}' (expected minds, kmeans or gower_hclust)")))
    }
}

/// Everything a replicate experiment needs besides the design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub design: SimulationDesign,
    /// Template for MINDS fits; cluster and trait counts are taken from the design.
    pub model: ModelConfig,
    pub predict: PredictConfig,
    pub methods: Vec<Method>,
    pub linkage: Linkage,
    /// Skip the test-set stage.
    pub training_only: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            design: SimulationDesign::default(),
            model: ModelConfig::default(),
            predict: PredictConfig::default(),
            methods: Method::ALL.to_vec(),
            linkage: Linkage::Average,
            training_only: false,
        }
    }
}

/// Errors of one method on one split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitErrors {
    pub bayes_error: f64,
    pub classification_error: f64,
    pub jaccard_distance: f64,
}

impl SplitErrors {
    pub fn compute(true_labels: &[usize], probabilities: &Array2<f64>, hard: &[usize]) -> Result<Self> {
        let map = align_labels(true_labels, probabilities)?;
        Ok(Self {
            bayes_error: bayes_error(true_labels, probabilities, &map)?,
            classification_error: classification_error(true_labels, hard, &map)?,
            jaccard_distance: jaccard_distance(true_labels, hard)?,
        })
    }

    pub fn from_hard(true_labels: &[usize], hard: &[usize], n_clusters: usize) -> Result<Self> {
        Self::compute(true_labels, &one_hot(hard, n_clusters)?, hard)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub method: Method,
    pub n_train: usize,
    pub train: Option<SplitErrors>,
    pub test: Option<SplitErrors>,
    /// MINDS population estimate aligned to the truth.
    pub estimate: Option<ParameterState>,
    pub seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub truths: Vec<ParameterState>,
    pub outcomes: Vec<ReplicateOutcome>,
}

/// One row of the aggregate table: `mean(sd)` per metric for one method and size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: Method,
    pub n_train: usize,
    pub n_ok: usize,
    pub n_failed: usize,
    pub train_bayes: Summary,
    pub train_classification: Summary,
    pub train_jaccard: Summary,
    pub test_bayes: Summary,
    pub test_classification: Summary,
    pub test_jaccard: Summary,
}

impl Experiment {
    pub fn outcomes_for(&self, method: Method, n_train: usize) -> impl Iterator<Item = &ReplicateOutcome> {
        self.outcomes
            .iter()
            .filter(move |o| o.method == method && o.n_train == n_train)
    }

    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut keys: Vec<(Method, usize)> = Vec::new();
        for o in &self.outcomes {
            if !keys.contains(&(o.method, o.n_train)) {
                keys.push((o.method, o.n_train));
            }
        }
        keys.into_iter()
            .map(|(method, n_train)| {
                let rows: Vec<&ReplicateOutcome> = self.outcomes_for(method, n_train).collect();
                let pick = |f: &dyn Fn(&ReplicateOutcome) -> Option<f64>| {
                    Summary::of(&rows.iter().filter_map(|o| f(o)).collect::<Vec<_>>())
                };
                AggregateRow {
                    method,
                    n_train,
                    n_ok: rows.iter().filter(|o| o.error.is_none()).count(),
                    n_failed: rows.iter().filter(|o| o.error.is_some()).count(),
                    train_bayes: pick(&|o| o.train.map(|e| e.bayes_error)),
                    train_classification: pick(&|o| o.train.map(|e| e.classification_error)),
                    train_jaccard: pick(&|o| o.train.map(|e| e.jaccard_distance)),
                    test_bayes: pick(&|o| o.test.map(|e| e.bayes_error)),
                    test_classification: pick(&|o| o.test.map(|e| e.classification_error)),
                    test_jaccard: pick(&|o| o.test.map(|e| e.jaccard_distance)),
                }
            })
            .collect()
    }

    /// Per-block recovery of the MINDS estimates at one training size.
    pub fn recovery(&self, n_train: usize) -> Result<RecoveryTable> {
        let mut all = Vec::new();
        for o in self.outcomes_for(Method::Minds, n_train) {
            if let Some(e) = &o.estimate {
                all.push((o.replicate, e.clone()));
            }
        }
        if all.is_empty() {
            return Err(MindsError::EmptyChain(0));
        }
        // each replicate has its own truth: stack the deviations
        let mut truths = Vec::new();
        let mut estimates = Vec::new();
        for (r, e) in all {
            truths.push(self.truths[r].clone());
            estimates.push(e);
        }
        recovery_over_truths(&truths, &estimates)
    }
}

/// Recovery table when every replicate has its own truth.
pub fn recovery_over_truths(truths: &[ParameterState], estimates: &[ParameterState]) -> Result<RecoveryTable> {
    if truths.len() != estimates.len() || truths.is_empty() {
        return Err(MindsError::Dimension("one truth per estimate is required".into()));
    }
    // deviations are taken against a zero truth so replicates can be pooled
    let zero = ParameterState::zeros(
        0,
        truths[0].n_clusters(),
        truths[0].n_traits(),
        truths[0].n_items(),
        truths[0].n_measures(),
    );
    let deviations: Vec<ParameterState> = truths
        .iter()
        .zip(estimates)
        .map(|(t, e)| {
            let mut d = e.clone();
            d.cluster_centers = &e.cluster_centers - &t.cluster_centers;
            d.binary_loadings = &e.binary_loadings - &t.binary_loadings;
            d.continuous_loadings = &e.continuous_loadings - &t.continuous_loadings;
            d.binary_thresholds = &e.binary_thresholds - &t.binary_thresholds;
            d.continuous_thresholds = &e.continuous_thresholds - &t.continuous_thresholds;
            d.mixture_weights = &e.mixture_weights - &t.mixture_weights;
            d
        })
        .collect();
    let mut zero = zero;
    zero.mixture_weights.fill(0.0);
    recovery_table(&zero, &deviations)
}

fn fit_minds(
    config: &ExperimentConfig,
    truth: &ParameterState,
    train: &SimulatedData,
    test: Option<&SimulatedData>,
    seed: u64,
) -> Result<(SplitErrors, Option<SplitErrors>, ParameterState)> {
    let model = ModelConfig {
        n_clusters: truth.n_clusters(),
        n_traits: truth.n_traits(),
        seed,
        ..config.model.clone()
    };
    let chain = run_chain(&train.data, &model)?;
    let train_err = SplitErrors::compute(train.labels(), &chain.membership_probabilities, chain.hard_labels())?;
    let fitted = canonicalize(&chain.point_estimate, &model).state;
    let test_err = match test {
        Some(t) => {
            let predict = PredictConfig {
                seed: derive_seed(seed, "predict", 0),
                ..config.predict.clone()
            };
            let p = predict_memberships(&t.data, &fitted, &predict)?;
            Some(SplitErrors::compute(
                t.labels(),
                &p.membership_probabilities,
                &p.hard_labels,
            )?)
        }
        None => None,
    };
    let estimate = align_to_truth(&fitted.without_augmentation(), truth)?;
    Ok((train_err, test_err, estimate))
}

fn fit_kmeans(
    k: usize,
    train: &SimulatedData,
    test: Option<&SimulatedData>,
    seed: u64,
) -> Result<(SplitErrors, Option<SplitErrors>)> {
    let (features, scaler) = standardize(&train.data.feature_matrix());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fit = kmeans(&features, k, &KMeansOptions::default(), &mut rng)?;
    let train_err = SplitErrors::from_hard(train.labels(), &fit.labels, k)?;
    let test_err = match test {
        Some(t) => {
            let labels = fit.predict(&scaler.apply(&t.data.feature_matrix()));
            Some(SplitErrors::from_hard(t.labels(), &labels, k)?)
        }
        None => None,
    };
    Ok((train_err, test_err))
}

fn fit_hclust(
    k: usize,
    linkage: Linkage,
    train: &SimulatedData,
    test: Option<&SimulatedData>,
) -> Result<(SplitErrors, Option<SplitErrors>)> {
    let labels = gower_hclust(&train.data, k, linkage)?;
    let train_err = SplitErrors::from_hard(train.labels(), &labels, k)?;
    let test_err = match test {
        Some(t) => {
            let pred = assign_to_clusters(&train.data, &labels, &t.data)?;
            Some(SplitErrors::from_hard(t.labels(), &pred, k)?)
        }
        None => None,
    };
    Ok((train_err, test_err))
}

/// Replicate experiment: truth, training and test data per replicate, every
/// method fitted on the same data. Failures are kept as rows with an error.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment> {
    let design = &config.design;
    design.validate()?;
    config.model.validate()?;
    config.predict.validate()?;
    if config.methods.is_empty() {
        return Err(MindsError::Config("no methods requested".into()));
    }
    let truths: Vec<ParameterState> = (0..design.n_replicates)
        .map(|r| {
            generate_truth(
                design,
                &mut ChaCha8Rng::seed_from_u64(derive_seed(design.seed, "truth", r as u64)),
            )
        })
        .collect::<Result<_>>()?;
    let mut jobs = Vec::new();
    for r in 0..design.n_replicates {
        for &n in &design.training_sizes {
            jobs.push((r, n));
        }
    }
    let nested: Vec<Vec<ReplicateOutcome>> = jobs
        .into_par_iter()
        .map(|(r, n)| {
            let truth = &truths[r];
            let key = (r as u64) << 32 | n as u64;
            let train = generate_dataset(
                truth,
                n,
                &mut ChaCha8Rng::seed_from_u64(derive_seed(design.seed, "train", key)),
            );
            let test = (!config.training_only).then(|| {
                generate_dataset(
                    truth,
                    design.test_size,
                    &mut ChaCha8Rng::seed_from_u64(derive_seed(design.seed, "test", r as u64)),
                )
            });
            config
                .methods
                .par_iter()
                .map(|&method| {
                    let started = Instant::now();
                    let seed = derive_seed(design.seed, method.name(), key);
                    let k = design.n_clusters;
                    let result = match method {
                        Method::Minds => {
                            fit_minds(config, truth, &train, test.as_ref(), seed).map(|(a, b, e)| (a, b, Some(e)))
                        }
                        Method::Kmeans => fit_kmeans(k, &train, test.as_ref(), seed).map(|(a, b)| (a, b, None)),
                        Method::GowerHclust => {
                            fit_hclust(k, config.linkage, &train, test.as_ref()).map(|(a, b)| (a, b, None))
                        }
                    };
                    let seconds = started.elapsed().as_secs_f64();
                    match result {
                        Ok((train_err, test_err, estimate)) => ReplicateOutcome {
                            replicate: r,
                            method,
                            n_train: n,
                            train: Some(train_err),
                            test: test_err,
                            estimate,
                            seconds,
                            error: None,
                        },
                        Err(e) => {
                            warn!("replicate {r}, {}, N = {n}: {e}", method.name());
                            ReplicateOutcome {
                                replicate: r,
                                method,
                                n_train: n,
                                train: None,
                                test: None,
                                estimate: None,
                                seconds,
                                error: Some(e.to_string()),
                            }
                        }
                    }
                })
                .collect()
        })
        .collect();
    Ok(Experiment {
        truths,
        outcomes: nested.into_iter().flatten().collect(),
    })
}

/// Per-replicate CSV.
pub fn write_replicates_csv<W: std::io::Write>(out: W, experiment: &Experiment) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "replicate",
        "method",
        "n_train",
        "train_bayes_error",
        "train_classification_error",
        "train_jaccard_distance",
        "test_bayes_error",
        "test_classification_error",
        "test_jaccard_distance",
        "seconds",
        "error",
    ])?;
    let cells = |e: Option<SplitErrors>| match e {
        Some(e) => [e.bayes_error, e.classification_error, e.jaccard_distance].map(format_float),
        None => [String::new(), String::new(), String::new()],
    };
    for o in &experiment.outcomes {
        let mut rec = vec![
            o.replicate.to_string(),
            o.method.name().to_string(),
            o.n_train.to_string(),
        ];
        rec.extend(cells(o.train));
        rec.extend(cells(o.test));
        rec.push(format_float(o.seconds));
        rec.push(o.error.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Aggregate CSV with `mean(sd)` cells, one row per method and training size.
pub fn write_aggregate_csv<W: std::io::Write>(out: W, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "n_train",
        "replicates",
        "failed",
        "train_bayes_error",
        "train_classification_error",
        "train_jaccard_distance",
        "test_bayes_error",
        "test_classification_error",
        "test_jaccard_distance",
    ])?;
    for r in rows {
        w.write_record([
            r.method.name().to_string(),
            r.n_train.to_string(),
            r.n_ok.to_string(),
            r.n_failed.to_string(),
            r.train_bayes.to_string(),
            r.train_classification.to_string(),
            r.train_jaccard.to_string(),
            r.test_bayes.to_string(),
            r.test_classification.to_string(),
            r.test_jaccard.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
