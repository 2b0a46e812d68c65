//! Datasets, configuration and the full parameter state of the joint model.
//!
//! Binary items follow `Bernoulli(logistic((X_z + b_i) V_j - a1_j))` and
//! continuous measures follow `Normal((X_z + b_i) U_j - a2_j, sigma_j^2)`,
//! where `z` is the subject's cluster. Cluster indices are 0-based in memory
//! and 1-based in every file the crate writes.

use std::f64::consts::PI;

use log::warn;
use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{MindsError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedDataset {
    /// `N_b x N_d1`, entries in {0, 1}.
    pub binary: Array2<u8>,
    /// `N_b x N_d2`.
    pub continuous: Array2<f64>,
    pub item_names: Vec<String>,
    pub measure_names: Vec<String>,
    pub subject_ids: Vec<String>,
}

impl MixedDataset {
    pub fn new(binary: Array2<u8>, continuous: Array2<f64>) -> Result<Self> {
        let item_names = (1..=binary.ncols()).map(|j| format!("item{j}")).collect();
        let measure_names = (1..=continuous.ncols()).map(|j| format!("measure{j}")).collect();
        let subject_ids = (1..=binary.nrows()).map(|i| i.to_string()).collect();
        Self::with_names(binary, continuous, item_names, measure_names, subject_ids)
    }

    pub fn with_names(
        binary: Array2<u8>,
        continuous: Array2<f64>,
        item_names: Vec<String>,
        measure_names: Vec<String>,
        subject_ids: Vec<String>,
    ) -> Result<Self> {
        let d = Self {
            binary,
            continuous,
            item_names,
            measure_names,
            subject_ids,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.binary.nrows() != self.continuous.nrows() {
            return Err(MindsError::Dimension(format!(
                "binary block has {} subjects, continuous block has {}",
                self.binary.nrows(),
                self.continuous.nrows()
            )));
        }
        if self.binary.ncols() == 0 || self.continuous.ncols() == 0 {
            return Err(MindsError::Dimension("both modalities need at least one column".into()));
        }
        if self.item_names.len() != self.binary.ncols()
            || self.measure_names.len() != self.continuous.ncols()
            || self.subject_ids.len() != self.binary.nrows()
        {
            return Err(MindsError::Dimension("name lists do not match the matrices".into()));
        }
        if let Some(((i, j), v)) = self.binary.indexed_iter().find(|(_, &v)| v > 1) {
            return Err(MindsError::Ingest {
                row: i + 1,
                column: self.item_names[j].clone(),
                message: format!("binary item value {v} is not 0 or 1"),
            });
        }
        if let Some(((i, j), _)) = self.continuous.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(MindsError::Ingest {
                row: i + 1,
                column: self.measure_names[j].clone(),
                message: "continuous value is missing or not finite".into(),
            });
        }
        Ok(())
    }

    pub fn n_subjects(&self) -> usize {
        self.binary.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.binary.ncols()
    }

    pub fn n_measures(&self) -> usize {
        self.continuous.ncols()
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            binary: self.binary.select(Axis(0), rows),
            continuous: self.continuous.select(Axis(0), rows),
            item_names: self.item_names.clone(),
            measure_names: self.measure_names.clone(),
            subject_ids: rows.iter().map(|&i| self.subject_ids[i].clone()).collect(),
        }
    }

    /// All columns as floats (binary first), for the distance-based baselines.
    pub fn feature_matrix(&self) -> Array2<f64> {
        let n = self.n_subjects();
        let mut out = Array2::zeros((n, self.n_items() + self.n_measures()));
        for i in 0..n {
            for j in 0..self.n_items() {
                out[[i, j]] = f64::from(self.binary[[i, j]]);
            }
            for j in 0..self.n_measures() {
                out[[i, self.n_items() + j]] = self.continuous[[i, j]];
            }
        }
        out
    }
}

/// Prior hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Priors {
    pub mean_x: f64,
    pub mean_v: f64,
    pub mean_u: f64,
    pub var_x: f64,
    pub var_v: f64,
    pub var_u: f64,
    pub var_a: f64,
    /// Inverse-gamma shape and scale for the subject-trait variance.
    pub trait_shape: f64,
    pub trait_scale: f64,
    /// Inverse-gamma shape and scale for each continuous noise variance.
    pub noise_shape: f64,
    pub noise_scale: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            mean_x: 0.0,
            mean_v: 0.0,
            mean_u: 0.0,
            var_x: 100.0,
            var_v: 100.0,
            var_u: 100.0,
            var_a: 100.0,
            trait_shape: 0.01,
            trait_scale: 0.01,
            noise_shape: 0.01,
            noise_scale: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initialization {
    /// Every block drawn from its prior (variances start at 1).
    #[default]
    Prior,
    /// As `Prior`, but memberships start from K-means on all standardized columns
    /// and are held there for the first `warm_start_sweeps` sweeps.
    KMeansWarmStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub n_clusters: usize,
    pub n_traits: usize,
    pub priors: Priors,
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Write a checkpoint every this many iterations (0 disables).
    pub checkpoint_interval: usize,
    pub seed: u64,
    pub initialization: Initialization,
    /// Sweeps with memberships frozen at the warm start (capped at `burn_in`).
    pub warm_start_sweeps: usize,
    /// Keep the augmentation block in stored draws (large).
    pub keep_augmentation: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_clusters: 2,
            n_traits: 1,
            priors: Priors::default(),
            n_iterations: 5000,
            burn_in: 2000,
            thin: 5,
            checkpoint_interval: 0,
            seed: 1,
            initialization: Initialization::Prior,
            warm_start_sweeps: 100,
            keep_augmentation: false,
        }
    }
}

impl ModelConfig {
    pub fn new(n_clusters: usize, n_traits: usize) -> Self {
        Self {
            n_clusters,
            n_traits,
            ..Self::default()
        }
    }

    /// Symmetric Dirichlet concentration, `1 / N_c`.
    pub fn dirichlet_weight(&self) -> f64 {
        1.0 / self.n_clusters as f64
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.priors;
        if self.n_clusters == 0 {
            return Err(MindsError::Config("n_clusters must be at least 1".into()));
        }
        if self.n_traits == 0 {
            return Err(MindsError::Config("n_traits must be at least 1".into()));
        }
        if self.burn_in >= self.n_iterations {
            return Err(MindsError::Config(format!(
                "burn_in ({}) must be smaller than n_iterations ({})",
                self.burn_in, self.n_iterations
            )));
        }
        if self.thin == 0 {
            return Err(MindsError::Config("thin must be at least 1".into()));
        }
        let positive = [
            ("var_x", p.var_x),
            ("var_v", p.var_v),
            ("var_u", p.var_u),
            ("var_a", p.var_a),
            ("trait_shape", p.trait_shape),
            ("trait_scale", p.trait_scale),
            ("noise_shape", p.noise_shape),
            ("noise_scale", p.noise_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MindsError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("mean_x", p.mean_x), ("mean_v", p.mean_v), ("mean_u", p.mean_u)] {
            if !v.is_finite() {
                return Err(MindsError::Config(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    /// `N_c N_t + 2 <= (N_c - N_t - 1)(N_d1 + N_d2)`: parameter count of the
    /// canonical equation system does not exceed its equation count.
    pub fn identifiable(&self, n_items: usize, n_measures: usize) -> bool {
        let nc = self.n_clusters as i64;
        let nt = self.n_traits as i64;
        let d = (n_items + n_measures) as i64;
        nc * nt + 2 <= (nc - nt - 1) * d
    }

    /// Validate against a dataset; an identifiability violation is only a warning.
    pub fn check_against(&self, data: &MixedDataset) -> Result<bool> {
        self.validate()?;
        let ok = self.identifiable(data.n_items(), data.n_measures());
        if !ok {
            warn!(
                "identifiability count condition violated: N_c={} N_t={} N_d1={} N_d2={}",
                self.n_clusters,
                self.n_traits,
                data.n_items(),
                data.n_measures()
            );
        }
        Ok(ok)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Binary,
    Continuous,
}

/// One complete draw of every unknown in the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    /// `X`, `N_c x N_t`.
    pub cluster_centers: Array2<f64>,
    /// `Z`, cluster index per subject (0-based).
    pub memberships: Vec<usize>,
    /// `b`, `N_b x N_t`.
    pub subject_traits: Array2<f64>,
    /// `V`, `N_t x N_d1`.
    pub binary_loadings: Array2<f64>,
    /// `U`, `N_t x N_d2`.
    pub continuous_loadings: Array2<f64>,
    pub binary_thresholds: Array1<f64>,
    pub continuous_thresholds: Array1<f64>,
    /// `theta`, on the simplex.
    pub mixture_weights: Array1<f64>,
    pub trait_variance: f64,
    pub noise_variances: Array1<f64>,
    /// `omega`, `N_b x N_d1`. Empty in stored draws unless requested.
    pub augmentation: Array2<f64>,
}

/// Cached linear predictors of a state.
#[derive(Debug, Clone)]
pub struct Fitted {
    /// `X_z + b_i`, `N_b x N_t`.
    pub traits: Array2<f64>,
    /// `psi`, `N_b x N_d1`.
    pub binary: Array2<f64>,
    /// Continuous means, `N_b x N_d2`.
    pub continuous: Array2<f64>,
}

impl ParameterState {
    /// All-zero state with unit variances, uniform weights and `omega = 1/4`.
    pub fn zeros(n_subjects: usize, n_clusters: usize, n_traits: usize, n_items: usize, n_measures: usize) -> Self {
        Self {
            cluster_centers: Array2::zeros((n_clusters, n_traits)),
            memberships: vec![0; n_subjects],
            subject_traits: Array2::zeros((n_subjects, n_traits)),
            binary_loadings: Array2::zeros((n_traits, n_items)),
            continuous_loadings: Array2::zeros((n_traits, n_measures)),
            binary_thresholds: Array1::zeros(n_items),
            continuous_thresholds: Array1::zeros(n_measures),
            mixture_weights: Array1::from_elem(n_clusters, 1.0 / n_clusters as f64),
            trait_variance: 1.0,
            noise_variances: Array1::ones(n_measures),
            augmentation: Array2::from_elem((n_subjects, n_items), 0.25),
        }
    }

    pub fn n_subjects(&self) -> usize {
        self.memberships.len()
    }
    pub fn n_clusters(&self) -> usize {
        self.cluster_centers.nrows()
    }
    pub fn n_traits(&self) -> usize {
        self.cluster_centers.ncols()
    }
    pub fn n_items(&self) -> usize {
        self.binary_loadings.ncols()
    }
    pub fn n_measures(&self) -> usize {
        self.continuous_loadings.ncols()
    }

    pub fn has_augmentation(&self) -> bool {
        self.augmentation.dim() == (self.n_subjects(), self.n_items())
    }

    /// Check internal shapes and the simplex / positivity invariants.
    pub fn validate(&self) -> Result<()> {
        let (nc, nt) = self.cluster_centers.dim();
        let n = self.n_subjects();
        let (d1, d2) = (self.n_items(), self.n_measures());
        let shapes_ok = self.subject_traits.dim() == (n, nt)
            && self.binary_loadings.nrows() == nt
            && self.continuous_loadings.nrows() == nt
            && self.binary_thresholds.len() == d1
            && self.continuous_thresholds.len() == d2
            && self.mixture_weights.len() == nc
            && self.noise_variances.len() == d2
            && (self.augmentation.is_empty() || self.augmentation.dim() == (n, d1));
        if !shapes_ok {
            return Err(MindsError::Dimension(
                "parameter blocks have inconsistent shapes".into(),
            ));
        }
        if let Some(&z) = self.memberships.iter().find(|&&z| z >= nc) {
            return Err(MindsError::Index {
                what: "cluster",
                index: z,
                len: nc,
            });
        }
        let total: f64 = self.mixture_weights.sum();
        if self.mixture_weights.iter().any(|&w| !(w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(MindsError::Domain(format!(
                "mixture weights not on the simplex (sum {total})"
            )));
        }
        if !(self.trait_variance > 0.0) || self.noise_variances.iter().any(|&v| !(v > 0.0)) {
            return Err(MindsError::Domain("variances must be positive".into()));
        }
        if self.augmentation.iter().any(|&w| !(w > 0.0)) {
            return Err(MindsError::Domain("augmentation variables must be positive".into()));
        }
        Ok(())
    }

    /// Shapes must agree with the dataset (subject count included).
    pub fn check_data(&self, data: &MixedDataset) -> Result<()> {
        if self.n_subjects() != data.n_subjects()
            || self.n_items() != data.n_items()
            || self.n_measures() != data.n_measures()
        {
            return Err(MindsError::Dimension(format!(
                "state is {}x({} binary, {} continuous), data is {}x({}, {})",
                self.n_subjects(),
                self.n_items(),
                self.n_measures(),
                data.n_subjects(),
                data.n_items(),
                data.n_measures()
            )));
        }
        Ok(())
    }

    /// `(X_z + b_i) V_j - a1_j` or `(X_z + b_i) U_j - a2_j`.
    pub fn linear_predictor(&self, subject: usize, item: usize, modality: Modality) -> Result<f64> {
        let n = self.n_subjects();
        if subject >= n {
            return Err(MindsError::Index {
                what: "subject",
                index: subject,
                len: n,
            });
        }
        let (loadings, thresholds) = match modality {
            Modality::Binary => (&self.binary_loadings, &self.binary_thresholds),
            Modality::Continuous => (&self.continuous_loadings, &self.continuous_thresholds),
        };
        if item >= thresholds.len() {
            return Err(MindsError::Index {
                what: "item",
                index: item,
                len: thresholds.len(),
            });
        }
        let k = self.memberships[subject];
        let mut eta = -thresholds[item];
        for t in 0..self.n_traits() {
            eta += (self.cluster_centers[[k, t]] + self.subject_traits[[subject, t]]) * loadings[[t, item]];
        }
        Ok(eta)
    }

    /// `X_z + b_i` for every subject.
    pub fn trait_positions(&self) -> Array2<f64> {
        let mut a = self.subject_traits.clone();
        for (i, mut row) in a.axis_iter_mut(Axis(0)).enumerate() {
            row += &self.cluster_centers.row(self.memberships[i]);
        }
        a
    }

    pub fn fitted(&self) -> Fitted {
        let traits = self.trait_positions();
        let binary = traits.dot(&self.binary_loadings) - &self.binary_thresholds;
        let continuous = traits.dot(&self.continuous_loadings) - &self.continuous_thresholds;
        Fitted {
            traits,
            binary,
            continuous,
        }
    }

    /// Log-likelihood of both modalities given every parameter; `omega` does not enter.
    pub fn joint_log_likelihood(&self, data: &MixedDataset) -> Result<f64> {
        self.check_data(data)?;
        let fit = self.fitted();
        Ok(log_likelihood_from(&fit, self, data))
    }

    /// Apply a cluster relabeling: new cluster `perm[k]` takes the role of old cluster `k`.
    pub fn permute_clusters(&mut self, perm: &[usize]) {
        let nc = self.n_clusters();
        debug_assert_eq!(perm.len(), nc);
        let old_x = self.cluster_centers.clone();
        let old_w = self.mixture_weights.clone();
        for k in 0..nc {
            self.cluster_centers.row_mut(perm[k]).assign(&old_x.row(k));
            self.mixture_weights[perm[k]] = old_w[k];
        }
        for z in self.memberships.iter_mut() {
            *z = perm[*z];
        }
    }

    /// Forward-simulate both modalities from this state.
    pub fn simulate_data<R: Rng + ?Sized>(&self, rng: &mut R) -> MixedDataset {
        let fit = self.fitted();
        let n = self.n_subjects();
        let mut binary = Array2::zeros((n, self.n_items()));
        let mut continuous = Array2::zeros((n, self.n_measures()));
        for i in 0..n {
            for j in 0..self.n_items() {
                let p = logistic(fit.binary[[i, j]]);
                binary[[i, j]] = u8::from(rng.random::<f64>() < p);
            }
            for j in 0..self.n_measures() {
                let e: f64 = StandardNormal.sample(rng);
                continuous[[i, j]] = fit.continuous[[i, j]] + self.noise_variances[j].sqrt() * e;
            }
        }
        MixedDataset::new(binary, continuous).expect("simulated data is well formed")
    }

    /// Drop the augmentation block (for compact storage).
    pub fn without_augmentation(&self) -> Self {
        let mut s = self.clone();
        s.augmentation = Array2::zeros((0, 0));
        s
    }
}

pub(crate) fn log_likelihood_from(fit: &Fitted, state: &ParameterState, data: &MixedDataset) -> f64 {
    let mut ll = 0.0;
    for (psi, &y) in fit.binary.iter().zip(data.binary.iter()) {
        ll += f64::from(y) * psi - softplus(*psi);
    }
    let log_norm: Vec<f64> = state
        .noise_variances
        .iter()
        .map(|&v| -0.5 * (2.0 * PI * v).ln())
        .collect();
    for ((i, j), &mean) in fit.continuous.indexed_iter() {
        let r = data.continuous[[i, j]] - mean;
        ll += log_norm[j] - 0.5 * r * r / state.noise_variances[j];
    }
    ll
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Membership frequencies of stored draws, `N_b x N_c`.
pub fn membership_frequencies(memberships: &[&[usize]], n_subjects: usize, n_clusters: usize) -> Array2<f64> {
    let mut p = Array2::zeros((n_subjects, n_clusters));
    for z in memberships {
        for (i, &k) in z.iter().enumerate() {
            p[[i, k]] += 1.0;
        }
    }
    let m = memberships.len().max(1) as f64;
    p.mapv_inplace(|c| c / m);
    p
}

/// Row-wise argmax; ties go to the lower index.
pub fn hard_labels(probabilities: &Array2<f64>) -> Vec<usize> {
    probabilities
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (k, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng, n: usize, nc: usize, nt: usize, d1: usize, d2: usize) -> ParameterState {
        let mut s = ParameterState::zeros(n, nc, nt, d1, d2);
        let mut g = || rng.random::<f64>() * 2.0 - 1.0;
        s.cluster_centers.mapv_inplace(|_| g());
        s.subject_traits.mapv_inplace(|_| g());
        s.binary_loadings.mapv_inplace(|_| g());
        s.continuous_loadings.mapv_inplace(|_| g());
        s.binary_thresholds.mapv_inplace(|_| g());
        s.continuous_thresholds.mapv_inplace(|_| g());
        s.noise_variances.mapv_inplace(|_| 0.5 + g().abs());
        for (i, z) in s.memberships.iter_mut().enumerate() {
            *z = i % nc;
        }
        s
    }

    #[test]
    fn predictor_zero_state() {
        let s = ParameterState::zeros(3, 2, 2, 4, 3);
        for i in 0..3 {
            for j in 0..4 {
                assert_eq!(s.linear_predictor(i, j, Modality::Binary).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn predictor_scalar_example() {
        let mut s = ParameterState::zeros(1, 1, 1, 1, 1);
        s.cluster_centers[[0, 0]] = 2.0;
        s.subject_traits[[0, 0]] = 0.5;
        s.binary_loadings[[0, 0]] = 1.0;
        s.binary_thresholds[0] = 0.5;
        assert_eq!(s.linear_predictor(0, 0, Modality::Binary).unwrap(), 2.0);
    }

    #[test]
    fn predictor_matches_elementwise_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_state(&mut rng, 5, 3, 2, 4, 3);
        let fit = s.fitted();
        for i in 0..5 {
            let k = s.memberships[i];
            for j in 0..4 {
                let mut e = -s.binary_thresholds[j];
                for t in 0..2 {
                    e += (s.cluster_centers[[k, t]] + s.subject_traits[[i, t]]) * s.binary_loadings[[t, j]];
                }
                assert!((e - s.linear_predictor(i, j, Modality::Binary).unwrap()).abs() < 1e-14);
                assert!((e - fit.binary[[i, j]]).abs() < 1e-14);
            }
            for j in 0..3 {
                let mut e = -s.continuous_thresholds[j];
                for t in 0..2 {
                    e += (s.cluster_centers[[k, t]] + s.subject_traits[[i, t]]) * s.continuous_loadings[[t, j]];
                }
                assert!((e - fit.continuous[[i, j]]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn predictor_index_errors() {
        let s = ParameterState::zeros(2, 2, 1, 3, 1);
        assert!(matches!(
            s.linear_predictor(2, 0, Modality::Binary),
            Err(MindsError::Index { what: "subject", .. })
        ));
        assert!(matches!(
            s.linear_predictor(0, 1, Modality::Continuous),
            Err(MindsError::Index { what: "item", .. })
        ));
    }

    #[test]
    fn likelihood_single_binary_cell() {
        let mut s = ParameterState::zeros(1, 1, 1, 1, 1);
        let data = MixedDataset::new(array![[1u8]], array![[0.0]]).unwrap();
        s.noise_variances[0] = 1.0;
        let ll = s.joint_log_likelihood(&data).unwrap();
        let gauss = -0.5 * (2.0 * PI).ln();
        assert!((ll - (0.5f64.ln() + gauss)).abs() < 1e-14);
    }

    #[test]
    fn likelihood_matches_per_cell_densities() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = random_state(&mut rng, 3, 2, 2, 2, 2);
        let data = s.simulate_data(&mut rng);
        let mut oracle = 0.0;
        for i in 0..3 {
            for j in 0..2 {
                let psi = s.linear_predictor(i, j, Modality::Binary).unwrap();
                let p = 1.0 / (1.0 + (-psi).exp());
                oracle += if data.binary[[i, j]] == 1 {
                    p.ln()
                } else {
                    (1.0 - p).ln()
                };
                let m = s.linear_predictor(i, j, Modality::Continuous).unwrap();
                let v = s.noise_variances[j];
                let y = data.continuous[[i, j]];
                oracle += (-(y - m).powi(2) / (2.0 * v)).exp().ln() - 0.5 * (2.0 * PI * v).ln();
            }
        }
        assert!((oracle - s.joint_log_likelihood(&data).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn likelihood_label_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = random_state(&mut rng, 6, 3, 2, 3, 2);
        let data = s.simulate_data(&mut rng);
        let mut p = s.clone();
        p.permute_clusters(&[2, 0, 1]);
        assert_ne!(p.cluster_centers, s.cluster_centers);
        let (a, b) = (
            s.joint_log_likelihood(&data).unwrap(),
            p.joint_log_likelihood(&data).unwrap(),
        );
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn likelihood_dimension_mismatch() {
        let s = ParameterState::zeros(2, 1, 1, 1, 1);
        let data = MixedDataset::new(array![[1u8, 0]], array![[0.0]]).unwrap();
        assert!(matches!(s.joint_log_likelihood(&data), Err(MindsError::Dimension(_))));
    }

    #[test]
    fn state_serialization_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut s = random_state(&mut rng, 4, 2, 2, 3, 2);
        s.mixture_weights = array![0.1 + 1e-17, 0.9];
        s.trait_variance = std::f64::consts::E / 3.0;
        let back: ParameterState = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn dataset_validation() {
        assert!(MixedDataset::new(array![[2u8]], array![[0.0]]).is_err());
        assert!(MixedDataset::new(array![[1u8]], array![[f64::NAN]]).is_err());
        assert!(MixedDataset::new(array![[1u8], [0]], array![[0.0]]).is_err());
        assert!(MixedDataset::new(Array2::zeros((1, 0)), array![[0.0]]).is_err());
    }

    #[test]
    fn config_checks() {
        assert!(ModelConfig::default().validate().is_ok());
        let mut c = ModelConfig::default();
        c.burn_in = c.n_iterations;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.priors.var_a = 0.0;
        assert!(c.validate().is_err());
        // 5*3 + 2 <= (5-3-1)*20
        assert!(ModelConfig::new(5, 3).identifiable(10, 10));
        assert!(!ModelConfig::new(2, 1).identifiable(2, 2));
    }

    #[test]
    fn hard_labels_ties_go_low() {
        let p = array![[0.5, 0.5], [0.2, 0.8], [0.4, 0.4]];
        assert_eq!(hard_labels(&p), vec![0, 1, 0]);
    }
}
