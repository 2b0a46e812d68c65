//! Membership prediction for new subjects with population parameters held fixed.

use std::io::Write;

use log::warn;
use ndarray::{Array1, Array2};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MindsError, Result};
use crate::gibbs::is_canonical;
use crate::gibbs::updates::{
    draw_subject_traits, normalize_log_weights, sample_categorical, subject_log_weights, OMEGA_FLOOR,
};
use crate::model::{hard_labels, MixedDataset, ParameterState};
use crate::pg::sample_pg1;
use crate::rng::{content_hash, derive_seed, StreamFactory};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictConfig {
    pub n_iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            n_iterations: 1000,
            burn_in: 500,
            seed: 1,
        }
    }
}

impl PredictConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iterations {
            return Err(MindsError::Config(format!(
                "burn_in ({}) must be smaller than n_iterations ({})",
                self.burn_in, self.n_iterations
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Posterior cluster frequencies, one row per test subject.
    pub membership_probabilities: Array2<f64>,
    pub hard_labels: Vec<usize>,
}

/// Stream key of one subject: a hash of its response row.
fn row_key(data: &MixedDataset, i: usize) -> u64 {
    let mut bytes = Vec::with_capacity(data.n_items() + 8 * data.n_measures());
    bytes.extend(data.binary.row(i).iter());
    for x in data.continuous.row(i) {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    content_hash(&bytes)
}

/// Reduced Gibbs loop over `omega`, `Z` and `b` for every test subject.
///
/// Each subject draws from a stream keyed by its own responses, so results do
/// not depend on row order.
pub fn predict_memberships(test: &MixedDataset, fitted: &ParameterState, config: &PredictConfig) -> Result<Prediction> {
    config.validate()?;
    test.validate()?;
    if test.n_items() != fitted.n_items() || test.n_measures() != fitted.n_measures() {
        return Err(MindsError::Dimension(format!(
            "test data has {} binary and {} continuous columns, fitted state expects {} and {}",
            test.n_items(),
            test.n_measures(),
            fitted.n_items(),
            fitted.n_measures()
        )));
    }
    let mut pop = fitted.without_augmentation();
    pop.memberships.clear();
    pop.subject_traits = Array2::zeros((0, fitted.n_traits()));
    pop.validate()?;
    if !is_canonical(&pop) {
        warn!("fitted state is not in canonical form; predictions are unaffected but parameters are not identified");
    }
    let streams = StreamFactory::new(derive_seed(config.seed, "predict", 0));
    let nc = pop.n_clusters();
    let rows: Vec<Result<Vec<f64>>> = (0..test.n_subjects())
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.keyed(row_key(test, i));
            predict_subject(&pop, test, i, config, &mut rng)
        })
        .collect();
    let mut probs = Array2::zeros((test.n_subjects(), nc));
    for (i, r) in rows.into_iter().enumerate() {
        probs.row_mut(i).assign(&Array1::from(r?));
    }
    let hard = hard_labels(&probs);
    Ok(Prediction {
        membership_probabilities: probs,
        hard_labels: hard,
    })
}

fn predict_subject(
    pop: &ParameterState,
    test: &MixedDataset,
    i: usize,
    config: &PredictConfig,
    rng: &mut crate::rng::StreamRng,
) -> Result<Vec<f64>> {
    let (nc, nt) = (pop.n_clusters(), pop.n_traits());
    let y_bin = test.binary.row(i);
    let y_cont = test.continuous.row(i);
    let numerical = |iteration: usize, step: &'static str| MindsError::Numerical {
        iteration,
        step,
        message: format!("test subject {i}"),
    };
    let b_prior = Normal::new(0.0, pop.trait_variance.sqrt()).map_err(|e| MindsError::Domain(e.to_string()))?;
    let mut traits: Vec<f64> = (0..nt).map(|_| b_prior.sample(rng)).collect();
    let mut z = sample_categorical(&pop.mixture_weights.to_vec(), rng);
    let mut omega = Array1::zeros(pop.n_items());
    let mut weights = vec![0.0; nc];
    let mut counts = vec![0.0; nc];
    for it in 0..config.n_iterations {
        for j in 0..pop.n_items() {
            let mut psi = -pop.binary_thresholds[j];
            for t in 0..nt {
                psi += (pop.cluster_centers[[z, t]] + traits[t]) * pop.binary_loadings[[t, j]];
            }
            omega[j] = sample_pg1(psi, rng).max(OMEGA_FLOOR);
        }
        subject_log_weights(
            pop,
            Array1::from(traits.clone()).view(),
            omega.view(),
            y_bin,
            y_cont,
            &mut weights,
        );
        normalize_log_weights(&mut weights).ok_or_else(|| numerical(it + 1, "memberships"))?;
        z = sample_categorical(&weights, rng);
        draw_subject_traits(pop, z, &mut traits, omega.view(), y_bin, y_cont, rng)
            .ok_or_else(|| numerical(it + 1, "subject_traits"))?;
        if it >= config.burn_in {
            counts[z] += 1.0;
        }
    }
    let kept = (config.n_iterations - config.burn_in) as f64;
    Ok(counts.into_iter().map(|c| c / kept).collect())
}

/// CSV with subject id, hard label (1-based) and one probability column per cluster.
pub fn write_prediction_csv<W: Write>(out: W, subject_ids: &[String], prediction: &Prediction) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let nc = prediction.membership_probabilities.ncols();
    let mut header = vec!["subject".to_string(), "label".to_string()];
    header.extend((1..=nc).map(|k| format!("p{k}")));
    w.write_record(&header)?;
    for (i, row) in prediction.membership_probabilities.rows().into_iter().enumerate() {
        let id = subject_ids.get(i).cloned().unwrap_or_else(|| (i + 1).to_string());
        let mut rec = vec![id, (prediction.hard_labels[i] + 1).to_string()];
        rec.extend(row.iter().map(|p| crate::io::format_float(*p)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn population() -> ParameterState {
        let mut s = ParameterState::zeros(0, 2, 1, 3, 2);
        s.cluster_centers = array![[-0.6], [0.9]];
        s.binary_loadings = array![[1.2, 0.7, -0.9]];
        s.continuous_loadings = array![[1.5, 0.8]];
        s.binary_thresholds = array![0.1, -0.3, 0.2];
        s.continuous_thresholds = array![0.4, -0.2];
        s.mixture_weights = array![0.4, 0.6];
        s.trait_variance = 0.5;
        s.noise_variances = array![1.2, 0.6];
        s
    }

    /// `P(Z = k | y)` by integrating the trait out on a grid.
    fn quadrature_posterior(pop: &ParameterState, y_bin: &[u8], y_cont: &[f64]) -> Vec<f64> {
        let (lo, hi, n) = (-8.0, 8.0, 16_001);
        let h = (hi - lo) / (n - 1) as f64;
        let mut mass = [0.0; 2];
        for (k, m) in mass.iter_mut().enumerate() {
            for g in 0..n {
                let b = lo + g as f64 * h;
                let x = pop.cluster_centers[[k, 0]] + b;
                let mut l = -0.5 * b * b / pop.trait_variance;
                for j in 0..3 {
                    let psi = x * pop.binary_loadings[[0, j]] - pop.binary_thresholds[j];
                    let p = 1.0 / (1.0 + (-psi).exp());
                    l += if y_bin[j] == 1 { p.ln() } else { (1.0 - p).ln() };
                }
                for j in 0..2 {
                    let mu = x * pop.continuous_loadings[[0, j]] - pop.continuous_thresholds[j];
                    l -= 0.5 * (y_cont[j] - mu).powi(2) / pop.noise_variances[j];
                }
                *m += pop.mixture_weights[k] * l.exp() * h;
            }
        }
        let z: f64 = mass.iter().sum();
        mass.iter().map(|m| m / z).collect()
    }

    #[test]
    fn frequencies_match_quadrature_of_the_exact_posterior() {
        let pop = population();
        let test = MixedDataset::new(
            array![[1, 0, 1], [0, 1, 0], [1, 1, 0]],
            array![[0.3, -0.5], [1.6, 0.9], [-1.0, 0.2]],
        )
        .unwrap();
        let config = PredictConfig {
            n_iterations: 41_000,
            burn_in: 1_000,
            seed: 17,
        };
        let pred = predict_memberships(&test, &pop, &config).unwrap();
        for i in 0..3 {
            let yb: Vec<u8> = test.binary.row(i).to_vec();
            let yc: Vec<f64> = test.continuous.row(i).to_vec();
            let exact = quadrature_posterior(&pop, &yb, &yc);
            let got = pred.membership_probabilities[[i, 0]];
            // 40000 autocorrelated draws; 0.015 is several effective standard errors
            assert!((got - exact[0]).abs() < 0.015, "subject {i}: {got} vs {}", exact[0]);
        }
    }

    #[test]
    fn degenerate_weights_force_the_first_cluster() {
        let mut pop = population();
        pop.mixture_weights = array![1.0, 0.0];
        let test = MixedDataset::new(array![[1, 1, 1], [0, 0, 0]], array![[5.0, 5.0], [-5.0, -5.0]]).unwrap();
        let pred = predict_memberships(&test, &pop, &PredictConfig::default()).unwrap();
        assert_eq!(pred.hard_labels, vec![0, 0]);
        assert!(pred.membership_probabilities.column(0).iter().all(|&p| p == 1.0));
    }

    #[test]
    fn training_duplicate_keeps_its_training_label() {
        let mut pop = population();
        pop.cluster_centers = array![[-6.0], [6.0]];
        pop.trait_variance = 0.05;
        pop.noise_variances.fill(0.1);
        let mut truth = pop.clone();
        truth.memberships = vec![0, 1, 1, 0];
        truth.subject_traits = Array2::zeros((4, 1));
        let train = truth.simulate_data(&mut crate::rng::StreamFactory::new(3).stream(0, 0, 0));
        let pred = predict_memberships(&train.select_rows(&[2, 3]), &pop, &PredictConfig::default()).unwrap();
        assert_eq!(pred.hard_labels, vec![1, 0]);
    }

    #[test]
    fn test_order_does_not_change_predictions() {
        let pop = population();
        let test = MixedDataset::new(
            array![[1, 0, 1], [0, 1, 0], [1, 1, 0], [0, 0, 1]],
            array![[0.3, -0.5], [1.6, 0.9], [-1.0, 0.2], [0.0, 0.0]],
        )
        .unwrap();
        let config = PredictConfig {
            n_iterations: 300,
            burn_in: 100,
            seed: 4,
        };
        let a = predict_memberships(&test, &pop, &config).unwrap();
        let order = [2, 0, 3, 1];
        let b = predict_memberships(&test.select_rows(&order), &pop, &config).unwrap();
        for (r, &i) in order.iter().enumerate() {
            assert_eq!(a.membership_probabilities.row(i), b.membership_probabilities.row(r));
        }
    }

    #[test]
    fn fitted_blocks_are_untouched() {
        let mut pop = population();
        pop.memberships = vec![1];
        pop.subject_traits = array![[0.3]];
        pop.augmentation = array![[0.2, 0.1, 0.3]];
        let before = pop.clone();
        let test = MixedDataset::new(array![[1, 0, 1]], array![[0.3, -0.5]]).unwrap();
        predict_memberships(&test, &pop, &PredictConfig::default()).unwrap();
        assert_eq!(pop, before);
    }

    #[test]
    fn column_mismatch_is_rejected() {
        let pop = population();
        let test = MixedDataset::new(array![[1, 0]], array![[0.3, -0.5]]).unwrap();
        assert!(matches!(
            predict_memberships(&test, &pop, &PredictConfig::default()),
            Err(MindsError::Dimension(_))
        ));
        let bad = PredictConfig {
            n_iterations: 10,
            burn_in: 10,
            seed: 1,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn prediction_csv_layout() {
        let p = Prediction {
            membership_probabilities: array![[0.25, 0.75]],
            hard_labels: vec![1],
        };
        let mut out = Vec::new();
        write_prediction_csv(&mut out, &["s1".into()], &p).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("subject,label,p1,p2"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(&row[..2], &["s1", "2"]);
        assert_eq!(row[3].parse::<f64>().unwrap(), 0.75);
    }
}
