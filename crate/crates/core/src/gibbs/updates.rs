//! Full-conditional updates of the joint sampler.
//!
//! Binary evidence enters through the Pólya-Gamma augmentation: given
//! `omega_ij`, the working response `kappa_ij / omega_ij` (with
//! `kappa_ij = y_ij - 1/2`) is Gaussian around `psi_ij` with variance
//! `1 / omega_ij`. All weighted sums are written as `omega * (kappa / omega)`
//! = `kappa`, so no division by `omega` is needed. Continuous evidence enters
//! with weights `1 / sigma_j^2`.
//!
//! Every scalar block is drawn one coordinate at a time; the cached linear
//! predictors are updated incrementally after each draw.

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MindsError, Result};
use crate::model::{Fitted, MixedDataset, ParameterState, Priors};
use crate::pg::sample_pg1;
use crate::rng::{StreamFactory, StreamRng};

/// Lower bound applied to every Pólya-Gamma draw.
pub const OMEGA_FLOOR: f64 = 1e-12;

/// Stream ids outside the sweep schedule.
pub(crate) const INIT_STREAM: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Omega,
    ClusterCenters,
    Memberships,
    BinaryLoadings,
    ContinuousLoadings,
    SubjectTraits,
    BinaryThresholds,
    ContinuousThresholds,
    Weights,
    TraitVariance,
    NoiseVariances,
}

impl Step {
    /// Update order of one sweep.
    pub const SCHEDULE: [Step; 11] = [
        Step::Omega,
        Step::ClusterCenters,
        Step::Memberships,
        Step::BinaryLoadings,
        Step::ContinuousLoadings,
        Step::SubjectTraits,
        Step::BinaryThresholds,
        Step::ContinuousThresholds,
        Step::Weights,
        Step::TraitVariance,
        Step::NoiseVariances,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Step::Omega => "omega",
            Step::ClusterCenters => "cluster_centers",
            Step::Memberships => "memberships",
            Step::BinaryLoadings => "binary_loadings",
            Step::ContinuousLoadings => "continuous_loadings",
            Step::SubjectTraits => "subject_traits",
            Step::BinaryThresholds => "binary_thresholds",
            Step::ContinuousThresholds => "continuous_thresholds",
            Step::Weights => "weights",
            Step::TraitVariance => "trait_variance",
            Step::NoiseVariances => "noise_variances",
        }
    }

    fn stream_id(self) -> u64 {
        self as u64
    }
}

/// Everything an update needs besides the state and the data.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub priors: &'a Priors,
    pub streams: &'a StreamFactory,
    pub iteration: u64,
}

impl StepContext<'_> {
    pub fn rng(&self, step: Step, entity: usize) -> StreamRng {
        self.streams.stream(self.iteration, step.stream_id(), entity as u64)
    }

    fn numerical(&self, step: Step, message: String) -> MindsError {
        MindsError::Numerical {
            iteration: self.iteration as usize,
            step: step.name(),
            message,
        }
    }
}

/// A univariate normal full conditional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalConditional {
    pub mean: f64,
    pub variance: f64,
}

impl NormalConditional {
    /// From the posterior precision and the precision-weighted mean.
    pub fn from_precision(precision: f64, numerator: f64) -> Option<Self> {
        if !(precision > 0.0) || !precision.is_finite() || !numerator.is_finite() {
            return None;
        }
        let variance = 1.0 / precision;
        Some(Self {
            mean: numerator * variance,
            variance,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let e: f64 = StandardNormal.sample(rng);
        self.mean + self.variance.sqrt() * e
    }
}

/// An inverse-gamma full conditional, `IG(shape, scale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseGammaConditional {
    pub shape: f64,
    pub scale: f64,
}

impl InverseGammaConditional {
    pub fn mean(&self) -> Option<f64> {
        (self.shape > 1.0).then(|| self.scale / (self.shape - 1.0))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g = Gamma::new(self.shape, 1.0).expect("positive shape").sample(rng);
        self.scale / g
    }
}

#[inline]
fn kappa(y: u8) -> f64 {
    f64::from(y) - 0.5
}

fn require_augmentation(state: &ParameterState, ctx: &StepContext, step: Step) -> Result<()> {
    if state.has_augmentation() {
        Ok(())
    } else {
        Err(ctx.numerical(step, "augmentation block missing".into()))
    }
}

/// Draw every `omega_ij ~ PG(1, psi_ij)`.
pub fn update_omega(state: &mut ParameterState, data: &MixedDataset, ctx: &StepContext) -> Result<()> {
    let fit = state.fitted();
    if let Some(((i, j), psi)) = fit.binary.indexed_iter().find(|(_, p)| !p.is_finite()) {
        return Err(ctx.numerical(
            Step::Omega,
            format!("non-finite predictor {psi} at subject {i}, item {j}"),
        ));
    }
    let _ = data;
    if !state.has_augmentation() {
        state.augmentation = Array2::zeros((state.n_subjects(), state.n_items()));
    }
    Zip::indexed(state.augmentation.rows_mut())
        .and(fit.binary.rows())
        .par_for_each(|i, mut omega, psi| {
            let mut rng = ctx.rng(Step::Omega, i);
            for (w, &p) in omega.iter_mut().zip(psi.iter()) {
                *w = sample_pg1(p, &mut rng).max(OMEGA_FLOOR);
            }
        });
    Ok(())
}

/// Conditionals of `X_kt` for every cluster `k`, other coordinates fixed.
pub fn cluster_center_conditionals(
    state: &ParameterState,
    data: &MixedDataset,
    fit: &Fitted,
    trait_index: usize,
    priors: &Priors,
) -> Vec<Option<NormalConditional>> {
    let t = trait_index;
    let nc = state.n_clusters();
    let mut precision = vec![1.0 / priors.var_x; nc];
    let mut numerator = vec![priors.mean_x / priors.var_x; nc];
    let v = state.binary_loadings.row(t);
    let u = state.continuous_loadings.row(t);
    let inv_noise = state.noise_variances.mapv(|s| 1.0 / s);
    for i in 0..state.n_subjects() {
        let k = state.memberships[i];
        let x = state.cluster_centers[[k, t]];
        let (mut p, mut m) = (0.0, 0.0);
        for j in 0..state.n_items() {
            let w = state.augmentation[[i, j]];
            p += w * v[j] * v[j];
            m += v[j] * (kappa(data.binary[[i, j]]) - w * (fit.binary[[i, j]] - x * v[j]));
        }
        for j in 0..state.n_measures() {
            let s = inv_noise[j];
            p += s * u[j] * u[j];
            m += s * u[j] * (data.continuous[[i, j]] - fit.continuous[[i, j]] + x * u[j]);
        }
        precision[k] += p;
        numerator[k] += m;
    }
    precision
        .into_iter()
        .zip(numerator)
        .map(|(p, m)| NormalConditional::from_precision(p, m))
        .collect()
}

/// Draw the cluster-center matrix one trait column at a time.
pub fn update_cluster_centers(state: &mut ParameterState, data: &MixedDataset, ctx: &StepContext) -> Result<()> {
    require_augmentation(state, ctx, Step::ClusterCenters)?;
    let mut fit = state.fitted();
    let nc = state.n_clusters();
    for t in 0..state.n_traits() {
        let conds = cluster_center_conditionals(state, data, &fit, t, ctx.priors);
        let mut delta = vec![0.0; nc];
        for (k, cond) in conds.into_iter().enumerate() {
            let cond = cond.ok_or_else(|| {
                ctx.numerical(
                    Step::ClusterCenters,
                    format!("precision of cluster {k}, trait {t} is not positive definite"),
                )
            })?;
            let new = cond.sample(&mut ctx.rng(Step::ClusterCenters, t * nc + k));
            delta[k] = new - state.cluster_centers[[k, t]];
            state.cluster_centers[[k, t]] = new;
        }
        shift_trait(state, &mut fit, t, |i| delta[state.memberships[i]]);
    }
    Ok(())
}

/// Add `shift(i)` to trait `t` of subject `i` in the cached predictors.
fn shift_trait(state: &ParameterState, fit: &mut Fitted, t: usize, shift: impl Fn(usize) -> f64) {
    let v = state.binary_loadings.row(t);
    let u = state.continuous_loadings.row(t);
    for i in 0..state.n_subjects() {
        let d = shift(i);
        if d == 0.0 {
            continue;
        }
        fit.traits[[i, t]] += d;
        fit.binary.row_mut(i).scaled_add(d, &v);
        fit.continuous.row_mut(i).scaled_add(d, &u);
    }
}

/// Unnormalized log membership weights of one subject, written into `out`.
///
/// The binary factor uses `kappa psi - omega psi^2 / 2`, which differs from
/// `-omega/2 (psi - kappa/omega)^2` only by a term constant across clusters.
#[allow(clippy::too_many_arguments)]
pub(crate) fn subject_log_weights(
    pop: &ParameterState,
    traits: ArrayView1<f64>,
    omega: ArrayView1<f64>,
    y_bin: ArrayView1<u8>,
    y_cont: ArrayView1<f64>,
    out: &mut [f64],
) {
    let nt = pop.n_traits();
    let mut a = vec![0.0; nt];
    for (k, slot) in out.iter_mut().enumerate() {
        for t in 0..nt {
            a[t] = pop.cluster_centers[[k, t]] + traits[t];
        }
        let mut lw = pop.mixture_weights[k].ln();
        for j in 0..pop.n_items() {
            let mut psi = -pop.binary_thresholds[j];
            for t in 0..nt {
                psi += a[t] * pop.binary_loadings[[t, j]];
            }
            lw += kappa(y_bin[j]) * psi - 0.5 * omega[j] * psi * psi;
        }
        for j in 0..pop.n_measures() {
            let mut mean = -pop.continuous_thresholds[j];
            for t in 0..nt {
                mean += a[t] * pop.continuous_loadings[[t, j]];
            }
            let r = y_cont[j] - mean;
            lw -= 0.5 * r * r / pop.noise_variances[j];
        }
        *slot = lw;
    }
}

/// Normalize log weights in place into probabilities. `None` if nothing is finite.
pub(crate) fn normalize_log_weights(lw: &mut [f64]) -> Option<()> {
    let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let mut total = 0.0;
    for w in lw.iter_mut() {
        *w = (*w - max).exp();
        total += *w;
    }
    for w in lw.iter_mut() {
        *w /= total;
    }
    Some(())
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// `pi_i`, the membership conditional of subject `i`.
pub fn membership_probabilities(state: &ParameterState, data: &MixedDataset, subject: usize) -> Option<Vec<f64>> {
    let mut lw = vec![0.0; state.n_clusters()];
    subject_log_weights(
        state,
        state.subject_traits.row(subject),
        state.augmentation.row(subject),
        data.binary.row(subject),
        data.continuous.row(subject),
        &mut lw,
    );
    normalize_log_weights(&mut lw).map(|_| lw)
}

pub fn update_memberships(state: &mut ParameterState, data: &MixedDataset, ctx: &StepContext) -> Result<()> {
    require_augmentation(state, ctx, Step::Memberships)?;
    let snapshot: &ParameterState = state;
    let draws: Vec<Option<usize>> = (0..snapshot.n_subjects())
        .into_par_iter()
        .map(|i| {
            let probs = membership_probabilities(snapshot, data, i)?;
            Some(sample_categorical(&probs, &mut ctx.rng(Step::Memberships, i)))
        })
        .collect();
    for (i, z) in draws.into_iter().enumerate() {
        state.memberships[i] = z.ok_or_else(|| {
            ctx.numerical(
                Step::Memberships,
                format!("membership weights of subject {i} all vanish"),
            )
        })?;
    }
    Ok(())
}

/// Conditional of `V_tj`.
pub fn binary_loading_conditional(
    state: &ParameterState,
    data: &MixedDataset,
    fit: &Fitted,
    t: usize,
    j: usize,
    priors: &Priors,
) -> Option<NormalConditional> {
    let v = state.binary_loadings[[t, j]];
    let mut precision = 1.0 / priors.var_v;
    let mut numerator = priors.mean_v / priors.var_v;
    for i in 0..state.n_subjects() {
        let a = fit.traits[[i, t]];
        let w = state.augmentation[[i, j]];
        precision += w * a * a;
        numerator += a * (kappa(data.binary[[i, j]]) - w * (fit.binary[[i, j]] - a * v));
    }
    NormalConditional::from_precision(precision, numerator)
}

pub fn update_binary_loadings(state: &mut ParameterState, data: &MixedDataset, ctx: &StepContext) -> Result<()> {
    require_augmentation(state, ctx, Step::BinaryLoadings)?;
    let mut fit = state.fitted();
    let nt = state.n_traits();
    for j in 0..state.n_items() {
        let mut rng = ctx.rng(Step::BinaryLoadings, j);
        for t in 0..nt {
            let cond = binary_loading_conditional(state, data, &fit, t, j, ctx.priors)
                .ok_or_else(|| ctx.numerical(Step::BinaryLoadings, format!("degenerate conditional for V[{t},{j}]")))?;
            let new = cond.sample(&mut rng);
            let d = new - state.binary_loadings[[t, j]];
            state.binary_loadings[[t, j]] = new;
            let a = fit.traits.column(t);
            fit.binary.column_mut(j).scaled_add(d, &a);
        }
    }
    Ok(())
}

/// Conditional of `U_tj`.
pub fn continuous_loading_conditional(
    state: &ParameterState,
    data: &MixedDataset,
    fit: &Fitted,
    t: usize,
    j: usize,
    priors: &Priors,
) -> Option<NormalConditional> {
    let u = state.continuous_loadings[[t, j]];
    let s = 1.0 / state.noise_variances[j];
    let mut precision = 1.0 / priors.var_u;
    let mut numerator = priors.mean_u / priors.var_u;
    for i in 0..state.n_subjects() {
        let a = fit.traits[[i, t]];
        precision += s * a * a;
        numerator += s * a * (data.continuous[[i, j]] - fit.continuous[[i, j]] + a * u);
    }
    NormalConditional::from_precision(precision, numerator)
}

pub fn update_continuous_loadings(state: &mut ParameterState, data: &MixedDataset, ctx: &StepContext) -> Result<()> {
    let mut fit = state.fitted();
    let nt = state.n_traits();
    for j in 0..state.n_measures() {
        let mut rng = ctx.rng(Step::ContinuousLoadings, j);
        for t in 0..nt {
            let cond = continuous_loading_conditional(state, data, &fit, t, j, ctx.priors).ok_or_else(|| {
                ctx.numerical(
                    Step::ContinuousLoadings,
                    format!("degenerate conditional for U[{t},{j}]"),
                )
            })?;
            let new = cond.sample(&mut rng);
            let d = new - state.continuous_loadings[[t, j]];
            state.continuous_loadings[[t, j]] = new;
            let a = fit.traits.column(t);
            fit.continuous.column_mut(j).scaled_add(d, &a);
        }
    }
    Ok(())
}

/// Conditional of `b_it` given the subject's current predictors.
#[allow(clippy::too_many_arguments)]
pub(crate) fn subject_trait_conditional(
    pop: &ParameterState,
    t: usize,
    b_it: f64,
    psi: &[f64],
    mean: &[f64],
    omega: ArrayView1<f64>,
    y_bin: ArrayView1<u8>,
    y_cont: ArrayView1<f64>,
) -> Option<NormalConditional> {
    let mut precision = 1.0 / pop.trait_variance;
    let mut numerator = 0.0;
    for j in 0..pop.n_items() {
        let v = pop.binary_loadings[[t, j]];
        let w = omega[j];
        precision += w * v * v;
        numerator += v * (kappa(y_bin[j]) - w * (psi[j] - b_it * v));
    }
    for j in 0..pop.n_measures() {
        let u = pop.continuous_loadings[[t, j]];
        let s = 1.0 / pop.noise_variances[j];
        precision += s * u * u;
        numerator += s * u * (y_cont[j] - mean[j] + b_it * u);
    }
    NormalConditional::from_precision(precision, numerator)
}

/// Gibbs pass over the traits of one subject in cluster `k`; `traits` is updated in place.
#[allow(clippy::too_many_arguments)]
pub(crate) fn draw_subject_traits<R: Rng + ?Sized>(
    pop: &ParameterState,
    k: usize,
    traits: &mut [f64],
    omega: ArrayView1<f64>,
    y_bin: ArrayView1<u8>,
    y_cont: ArrayView1<f64>,
    rng: &mut R,
) -> Option<()> {
    let nt = pop.n_traits();
    let position: Vec<f64> = (0..nt).map(|t| pop.cluster_centers[[k, t]] + traits[t]).collect();
    let mut psi: Vec<f64> = (0..pop.n_items())
        .map(|j| (0..nt).map(|t| position[t] * pop.binary_loadings[[t, j]]).sum::<f64>() - pop.binary_thresholds[j])
        .collect();
    let mut mean: Vec<f64> = (0..pop.n_measures())
        .map(|j| {
            (0..nt)
                .map(|t| position[t] * pop.continuous_loadings[[t, j]])
                .sum::<f64>()
                - pop.continuous_thresholds[j]
        })
        .collect();
    for t in 0..nt {
        let cond = subject_trait_conditional(pop, t, traits[t], &psi, &mean, omega, y_bin, y_cont)?;
        let new = cond.sample(rng);
        let d = new - traits[t];
        traits[t] = new;
        for (j, p) in psi.iter_mut().enumerate() {
            *p += d * pop.binary_loadings[[t, j]];
        }
        for (j, m) in mean.iter_mut().enumerate() {
            *m += d * pop.continuous_loadings[[t, j]];
        }
    }
    Some(())
}

pub fn update_subject_traits(state: &mut ParameterState, data: &MixedDataset, ctx: &StepContext) -> Result<()> {
    require_augmentation(state, ctx, Step::SubjectTraits)?;
    let snapshot: &ParameterState = state;
    let rows: Vec<Option<Vec<f64>>> = (0..snapshot.n_subjects())
        .into_par_iter()
        .map(|i| {
            let mut b = snapshot.subject_traits.row(i).to_vec();
            draw_subject_traits(
                snapshot,
                snapshot.memberships[i],
                &mut b,
                snapshot.augmentation.row(i),
                data.binary.row(i),
                data.continuous.row(i),
                &mut ctx.rng(Step::SubjectTraits, i),
            )?;
            Some(b)
        })
        .collect();
    for (i, row) in rows.into_iter().enumerate() {
        let row = row.ok_or_else(|| {
            ctx.numerical(
                Step::SubjectTraits,
                format!("degenerate trait conditional for subject {i}"),
            )
        })?;
        state.subject_traits.row_mut(i).assign(&Array1::from(row));
    }
    Ok(())
}

/// Conditional of `a1_j`; weights are the augmentation variables.
pub fn binary_threshold_conditional(
    state: &ParameterState,
    data: &MixedDataset,
    fit: &Fitted,
    j: usize,
    priors: &Priors,
) -> Option<NormalConditional> {
    let a = state.binary_thresholds[j];
    let mut precision = 1.0 / priors.var_a;
    let mut numerator = 0.0;
    for i in 0..state.n_subjects() {
        let w = state.augmentation[[i, j]];
        precision += w;
        // omega * r with r = (psi + a) - kappa / omega
        numerator += w * (fit.binary[[i, j]] + a) - kappa(data.binary[[i, j]]);
    }
    NormalConditional::from_precision(precision, numerator)
}

/// Conditional of `a2_j`; weights are the inverse noise variances.
pub fn continuous_threshold_conditional(
    state: &ParameterState,
    data: &MixedDataset,
    fit: &Fitted,
    j: usize,
    priors: &Priors,
) -> Option<NormalConditional> {
    let a = state.continuous_thresholds[j];
    let s = 1.0 / state.noise_variances[j];
    let precision = 1.0 / priors.var_a + state.n_subjects() as f64 * s;
    let numerator: f64 = (0..state.n_subjects())
        .map(|i| s * (fit.continuous[[i, j]] + a - data.continuous[[i, j]]))
        .sum();
    NormalConditional::from_precision(precision, numerator)
}

pub fn update_binary_thresholds(state: &mut ParameterState, data: &MixedDataset, ctx: &StepContext) -> Result<()> {
    require_augmentation(state, ctx, Step::BinaryThresholds)?;
    let fit = state.fitted();
    for j in 0..state.n_items() {
        let cond = binary_threshold_conditional(state, data, &fit, j, ctx.priors)
            .ok_or_else(|| ctx.numerical(Step::BinaryThresholds, format!("degenerate conditional for a1[{j}]")))?;
        state.binary_thresholds[j] = cond.sample(&mut ctx.rng(Step::BinaryThresholds, j));
    }
    Ok(())
}

pub fn update_continuous_thresholds(state: &mut ParameterState, data: &MixedDataset, ctx: &StepContext) -> Result<()> {
    let fit = state.fitted();
    for j in 0..state.n_measures() {
        let cond = continuous_threshold_conditional(state, data, &fit, j, ctx.priors).ok_or_else(|| {
            ctx.numerical(
                Step::ContinuousThresholds,
                format!("degenerate conditional for a2[{j}]"),
            )
        })?;
        state.continuous_thresholds[j] = cond.sample(&mut ctx.rng(Step::ContinuousThresholds, j));
    }
    Ok(())
}

/// Both threshold blocks, binary first.
pub fn update_thresholds(state: &mut ParameterState, data: &MixedDataset, ctx: &StepContext) -> Result<()> {
    update_binary_thresholds(state, data, ctx)?;
    update_continuous_thresholds(state, data, ctx)
}

/// Dirichlet parameters of the weight conditional: cluster counts plus `1 / N_c`.
pub fn weight_conditional(state: &ParameterState) -> Vec<f64> {
    let nc = state.n_clusters();
    let mut alpha = vec![1.0 / nc as f64; nc];
    for &z in &state.memberships {
        alpha[z] += 1.0;
    }
    alpha
}

pub fn update_weights(state: &mut ParameterState, ctx: &StepContext) -> Result<()> {
    let alpha = weight_conditional(state);
    state.mixture_weights = sample_dirichlet(&alpha, &mut ctx.rng(Step::Weights, 0));
    Ok(())
}

/// Dirichlet draw through log-gammas so that tiny concentrations do not underflow.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Array1<f64> {
    let logs: Vec<f64> = alpha.iter().map(|&a| log_gamma_variate(a, rng)).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Array1<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total = w.sum();
    w /= total;
    w
}

fn log_gamma_variate<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        Gamma::new(shape, 1.0).expect("positive shape").sample(rng).ln()
    } else {
        // G(a) = G(a + 1) * U^(1/a)
        let g = Gamma::new(shape + 1.0, 1.0).expect("positive shape").sample(rng).ln();
        let u: f64 = 1.0 - rng.random::<f64>();
        g + u.ln() / shape
    }
}

/// `sigma_b^2 | b ~ IG(N_b N_t / 2 + alpha_b, sum(b^2) / 2 + beta_b)`, summing every subject-trait entry.
pub fn trait_variance_conditional(state: &ParameterState, priors: &Priors) -> InverseGammaConditional {
    let ss: f64 = state.subject_traits.iter().map(|b| b * b).sum();
    InverseGammaConditional {
        shape: 0.5 * state.subject_traits.len() as f64 + priors.trait_shape,
        scale: 0.5 * ss + priors.trait_scale,
    }
}

/// `sigma_j^2 | rest ~ IG(N_b / 2 + alpha_j, sum_i M_ij^2 / 2 + beta_j)`, `M` the residual.
pub fn noise_variance_conditionals(
    state: &ParameterState,
    data: &MixedDataset,
    fit: &Fitted,
    priors: &Priors,
) -> Vec<InverseGammaConditional> {
    let resid = &data.continuous - &fit.continuous;
    resid
        .axis_iter(Axis(1))
        .map(|col| InverseGammaConditional {
            shape: 0.5 * state.n_subjects() as f64 + priors.noise_shape,
            scale: 0.5 * col.iter().map(|r| r * r).sum::<f64>() + priors.noise_scale,
        })
        .collect()
}

pub fn update_trait_variance(state: &mut ParameterState, ctx: &StepContext) -> Result<()> {
    let cond = trait_variance_conditional(state, ctx.priors);
    let v = cond.sample(&mut ctx.rng(Step::TraitVariance, 0));
    if !(v > 0.0 && v.is_finite()) {
        return Err(ctx.numerical(Step::TraitVariance, format!("trait variance draw {v}")));
    }
    state.trait_variance = v;
    Ok(())
}

pub fn update_noise_variances(state: &mut ParameterState, data: &MixedDataset, ctx: &StepContext) -> Result<()> {
    let fit = state.fitted();
    let conds = noise_variance_conditionals(state, data, &fit, ctx.priors);
    for (j, cond) in conds.iter().enumerate() {
        let v = cond.sample(&mut ctx.rng(Step::NoiseVariances, j));
        if !(v > 0.0 && v.is_finite()) {
            return Err(ctx.numerical(Step::NoiseVariances, format!("noise variance {j} draw {v}")));
        }
        state.noise_variances[j] = v;
    }
    Ok(())
}

/// Both variance blocks.
pub fn update_variances(state: &mut ParameterState, data: &MixedDataset, ctx: &StepContext) -> Result<()> {
    update_trait_variance(state, ctx)?;
    update_noise_variances(state, data, ctx)
}

pub fn run_step(step: Step, state: &mut ParameterState, data: &MixedDataset, ctx: &StepContext) -> Result<()> {
    match step {
        Step::Omega => update_omega(state, data, ctx),
        Step::ClusterCenters => update_cluster_centers(state, data, ctx),
        Step::Memberships => update_memberships(state, data, ctx),
        Step::BinaryLoadings => update_binary_loadings(state, data, ctx),
        Step::ContinuousLoadings => update_continuous_loadings(state, data, ctx),
        Step::SubjectTraits => update_subject_traits(state, data, ctx),
        Step::BinaryThresholds => update_binary_thresholds(state, data, ctx),
        Step::ContinuousThresholds => update_continuous_thresholds(state, data, ctx),
        Step::Weights => update_weights(state, ctx),
        Step::TraitVariance => update_trait_variance(state, ctx),
        Step::NoiseVariances => update_noise_variances(state, data, ctx),
    }
}

/// One full sweep in schedule order.
pub fn sweep(state: &mut ParameterState, data: &MixedDataset, ctx: &StepContext) -> Result<()> {
    for step in Step::SCHEDULE {
        run_step(step, state, data, ctx)?;
    }
    Ok(())
}
