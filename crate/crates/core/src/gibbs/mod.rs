//! The Gibbs sampler for the joint binary/continuous latent mixture model.

mod checkpoint;
mod identify;
mod relabel;
pub mod updates;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use identify::{canonicalize, is_canonical, resolve_identifiability, Canonicalization};
pub use relabel::{posterior_summary, relabel_draws, relabel_permutation};
pub use updates::{
    sample_dirichlet, sweep, InverseGammaConditional, NormalConditional, Step, StepContext, OMEGA_FLOOR,
};

use crate::baselines::kmeans::{kmeans, standardize, KMeansOptions};
use crate::diagnostics::{mann_kendall, MannKendall};
use crate::error::{MindsError, Result};
use crate::model::{Initialization, MixedDataset, ModelConfig, ParameterState};
use crate::rng::StreamFactory;
use updates::{sample_categorical, INIT_STREAM};

/// Fixed update order plus the storage schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerSchedule {
    pub order: Vec<Step>,
    pub thin: usize,
    pub checkpoint_interval: usize,
}

impl SamplerSchedule {
    pub fn from_config(config: &ModelConfig) -> Self {
        Self {
            order: Step::SCHEDULE.to_vec(),
            thin: config.thin,
            checkpoint_interval: config.checkpoint_interval,
        }
    }
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub log_likelihood: f64,
    pub center_norm: f64,
    pub loading_norm: f64,
    pub threshold_norm: f64,
    pub trait_variance: f64,
    pub mean_noise_variance: f64,
}

impl TraceRow {
    fn of(iteration: usize, log_likelihood: f64, s: &ParameterState) -> Self {
        let frob = |it: &mut dyn Iterator<Item = &f64>| it.map(|x| x * x).sum::<f64>().sqrt();
        Self {
            iteration,
            log_likelihood,
            center_norm: frob(&mut s.cluster_centers.iter()),
            loading_norm: frob(&mut s.binary_loadings.iter().chain(s.continuous_loadings.iter())),
            threshold_norm: frob(&mut s.binary_thresholds.iter().chain(s.continuous_thresholds.iter())),
            trait_variance: s.trait_variance,
            mean_noise_variance: s.noise_variances.mean().unwrap_or(f64::NAN),
        }
    }
}

/// Everything accumulated by a running chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainProgress {
    pub state: ParameterState,
    pub trace: Vec<TraceRow>,
    /// State at the end of burn-in; draws are aligned to it.
    pub reference: Option<ParameterState>,
    pub draws: Vec<ParameterState>,
    pub draw_iterations: Vec<usize>,
    pub retained_log_likelihoods: Vec<f64>,
    pub augmentation_sum: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainResult {
    pub config: ModelConfig,
    /// Retained post-burn-in draws, relabeled.
    pub draws: Vec<ParameterState>,
    /// 1-based sweep index of each retained draw.
    pub draw_iterations: Vec<usize>,
    /// Joint log-likelihood after every sweep, burn-in included.
    pub log_likelihoods: Vec<f64>,
    pub retained_log_likelihoods: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub point_estimate: ParameterState,
    pub membership_probabilities: Array2<f64>,
    /// Permutation applied to each retained draw.
    pub relabelings: Vec<Vec<usize>>,
    pub reference: ParameterState,
    /// Mann-Kendall test on the retained log-likelihoods.
    pub trend: MannKendall,
    pub identifiable: bool,
}

impl ChainResult {
    pub fn hard_labels(&self) -> &[usize] {
        &self.point_estimate.memberships
    }

    /// Retained log-likelihood trace shows no trend at level `alpha`.
    pub fn converged(&self, alpha: f64) -> bool {
        self.trend.trend_free(alpha)
    }
}

/// Draw every block from its prior: the marginal-conditional simulator's parameter step.
pub fn sample_prior<R: Rng + ?Sized>(
    n_subjects: usize,
    n_items: usize,
    n_measures: usize,
    config: &ModelConfig,
    rng: &mut R,
) -> ParameterState {
    let p = &config.priors;
    let (nc, nt) = (config.n_clusters, config.n_traits);
    let mut s = ParameterState::zeros(n_subjects, nc, nt, n_items, n_measures);
    let normal = |m: f64, v: f64| Normal::new(m, v.sqrt()).expect("finite prior");
    let fill = |a: &mut Array2<f64>, d: Normal<f64>, rng: &mut R| a.iter_mut().for_each(|x| *x = d.sample(rng));
    fill(&mut s.cluster_centers, normal(p.mean_x, p.var_x), rng);
    fill(&mut s.binary_loadings, normal(p.mean_v, p.var_v), rng);
    fill(&mut s.continuous_loadings, normal(p.mean_u, p.var_u), rng);
    let thr = normal(0.0, p.var_a);
    s.binary_thresholds = Array1::from_shape_fn(n_items, |_| thr.sample(rng));
    s.continuous_thresholds = Array1::from_shape_fn(n_measures, |_| thr.sample(rng));
    s.mixture_weights = sample_dirichlet(&vec![config.dirichlet_weight(); nc], rng);
    let weights = s.mixture_weights.to_vec();
    for z in s.memberships.iter_mut() {
        *z = sample_categorical(&weights, rng);
    }
    s.trait_variance = inverse_gamma(p.trait_shape, p.trait_scale, rng);
    s.noise_variances = Array1::from_shape_fn(n_measures, |_| inverse_gamma(p.noise_shape, p.noise_scale, rng));
    let bd = normal(0.0, s.trait_variance);
    fill(&mut s.subject_traits, bd, rng);
    s
}

fn inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    InverseGammaConditional { shape, scale }.sample(rng)
}

const WARM_START_RESTARTS: usize = 10;

/// Starting state of a chain.
///
/// Location blocks and weights come from the prior. Variances start at 1 and
/// traits at `N(0, 1)`: inverse-gamma priors with tiny shape put most of their
/// mass at numerically extreme values.
pub fn initial_state(data: &MixedDataset, config: &ModelConfig, streams: &StreamFactory) -> Result<ParameterState> {
    let mut rng = streams.stream(0, INIT_STREAM, 0);
    let mut s = sample_prior(data.n_subjects(), data.n_items(), data.n_measures(), config, &mut rng);
    s.trait_variance = 1.0;
    s.noise_variances.fill(1.0);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    s.subject_traits.mapv_inplace(|_| unit.sample(&mut rng));
    if config.initialization == Initialization::KMeansWarmStart && config.n_clusters > 1 {
        let (features, _) = standardize(&data.feature_matrix());
        let options = KMeansOptions {
            n_init: WARM_START_RESTARTS,
            ..KMeansOptions::default()
        };
        let fit = kmeans(&features, config.n_clusters, &options, &mut rng)?;
        s.memberships = fit.labels;
        s.subject_traits.fill(0.0);
        s.cluster_centers.mapv_inplace(|_| unit.sample(&mut rng));
        s.binary_loadings.mapv_inplace(|_| unit.sample(&mut rng));
        s.continuous_loadings.mapv_inplace(|_| unit.sample(&mut rng));
        s.binary_thresholds.fill(0.0);
        s.continuous_thresholds.fill(0.0);
        let mut alpha = vec![config.dirichlet_weight(); config.n_clusters];
        for &z in &s.memberships {
            alpha[z] += 1.0;
        }
        let total: f64 = alpha.iter().sum();
        s.mixture_weights = alpha.iter().map(|a| a / total).collect();
    }
    Ok(s)
}

/// A chain in progress; supports stepping, checkpointing and resuming.
pub struct Chain<'a> {
    data: &'a MixedDataset,
    config: ModelConfig,
    streams: StreamFactory,
    identifiable: bool,
    progress: ChainProgress,
}

impl<'a> Chain<'a> {
    pub fn new(data: &'a MixedDataset, config: &ModelConfig) -> Result<Self> {
        data.validate()?;
        let identifiable = config.check_against(data)?;
        let streams = StreamFactory::new(config.seed);
        let state = initial_state(data, config, &streams)?;
        let reference = (config.burn_in == 0).then(|| state.without_augmentation());
        Ok(Self {
            data,
            config: config.clone(),
            streams,
            identifiable,
            progress: ChainProgress {
                augmentation_sum: Array2::zeros((data.n_subjects(), data.n_items())),
                state,
                trace: Vec::with_capacity(config.n_iterations),
                reference,
                draws: Vec::new(),
                draw_iterations: Vec::new(),
                retained_log_likelihoods: Vec::new(),
            },
        })
    }

    /// Start from a given state instead of the prior.
    pub fn from_state(data: &'a MixedDataset, config: &ModelConfig, mut state: ParameterState) -> Result<Self> {
        let mut chain = Self::new(data, config)?;
        state.check_data(data)?;
        if !state.has_augmentation() {
            state.augmentation = Array2::from_elem((data.n_subjects(), data.n_items()), 0.25);
        }
        state.validate()?;
        chain.progress.reference = (config.burn_in == 0).then(|| state.without_augmentation());
        chain.progress.state = state;
        Ok(chain)
    }

    pub fn resume(data: &'a MixedDataset, checkpoint: Checkpoint) -> Result<Self> {
        data.validate()?;
        let identifiable = checkpoint.config.check_against(data)?;
        checkpoint.progress.state.check_data(data)?;
        Ok(Self {
            data,
            streams: StreamFactory::new(checkpoint.seed),
            config: checkpoint.config,
            identifiable,
            progress: checkpoint.progress,
        })
    }

    pub fn completed(&self) -> usize {
        self.progress.trace.len()
    }

    pub fn is_done(&self) -> bool {
        self.completed() >= self.config.n_iterations
    }

    pub fn state(&self) -> &ParameterState {
        &self.progress.state
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            seed: self.streams.seed(),
            completed_iterations: self.completed(),
            config: self.config.clone(),
            progress: self.progress.clone(),
        }
    }

    /// One sweep plus bookkeeping.
    pub fn step(&mut self) -> Result<()> {
        let iteration = self.completed() + 1;
        let ctx = StepContext {
            priors: &self.config.priors,
            streams: &self.streams,
            iteration: iteration as u64,
        };
        let frozen = self.config.initialization == Initialization::KMeansWarmStart
            && iteration <= self.config.warm_start_sweeps.min(self.config.burn_in);
        let p = &mut self.progress;
        for step in Step::SCHEDULE {
            if frozen && step == Step::Memberships {
                continue;
            }
            updates::run_step(step, &mut p.state, self.data, &ctx)?;
        }
        let ll = p.state.joint_log_likelihood(self.data)?;
        if !ll.is_finite() {
            return Err(MindsError::Numerical {
                iteration,
                step: "log_likelihood",
                message: format!("joint log-likelihood is {ll}"),
            });
        }
        p.trace.push(TraceRow::of(iteration, ll, &p.state));
        let cfg = &self.config;
        if iteration == cfg.burn_in {
            p.reference = Some(p.state.without_augmentation());
        }
        if iteration > cfg.burn_in && (cfg.n_iterations - iteration).is_multiple_of(cfg.thin) {
            p.augmentation_sum += &p.state.augmentation;
            p.draws.push(if cfg.keep_augmentation {
                p.state.clone()
            } else {
                p.state.without_augmentation()
            });
            p.draw_iterations.push(iteration);
            p.retained_log_likelihoods.push(ll);
        }
        Ok(())
    }

    /// Run to completion, handing a checkpoint to `sink` every checkpoint interval.
    pub fn run(mut self, sink: &mut dyn FnMut(&Checkpoint) -> Result<()>) -> Result<ChainResult> {
        let interval = self.config.checkpoint_interval;
        while !self.is_done() {
            self.step()?;
            if interval > 0 && self.completed().is_multiple_of(interval) && !self.is_done() {
                sink(&self.checkpoint())?;
            }
        }
        self.finish()
    }

    pub fn finish(self) -> Result<ChainResult> {
        if !self.is_done() {
            return Err(MindsError::Config(format!(
                "chain stopped after {} of {} iterations",
                self.completed(),
                self.config.n_iterations
            )));
        }
        let ChainProgress {
            trace,
            reference,
            mut draws,
            draw_iterations,
            retained_log_likelihoods,
            augmentation_sum,
            ..
        } = self.progress;
        let reference = reference.ok_or(MindsError::EmptyChain(0))?;
        if draws.is_empty() {
            return Err(MindsError::EmptyChain(0));
        }
        let relabelings = relabel_draws(&mut draws, &reference);
        let omega_mean = augmentation_sum / draws.len() as f64;
        let (point_estimate, membership_probabilities) = posterior_summary(&draws, omega_mean)?;
        let trend = mann_kendall(&retained_log_likelihoods);
        Ok(ChainResult {
            config: self.config,
            log_likelihoods: trace.iter().map(|r| r.log_likelihood).collect(),
            draws,
            draw_iterations,
            retained_log_likelihoods,
            trace,
            point_estimate,
            membership_probabilities,
            relabelings,
            reference,
            trend,
            identifiable: self.identifiable,
        })
    }
}

pub fn run_chain(data: &MixedDataset, config: &ModelConfig) -> Result<ChainResult> {
    Chain::new(data, config)?.run(&mut |_| Ok(()))
}

/// As `run_chain`, handing periodic checkpoints to `sink`.
pub fn run_chain_with(
    data: &MixedDataset,
    config: &ModelConfig,
    sink: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<ChainResult> {
    Chain::new(data, config)?.run(sink)
}

/// Continue a chain from a checkpoint to completion.
pub fn resume_chain(
    data: &MixedDataset,
    checkpoint: Checkpoint,
    sink: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<ChainResult> {
    Chain::resume(data, checkpoint)?.run(sink)
}
