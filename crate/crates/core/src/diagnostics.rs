//! Trace diagnostics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannKendall {
    pub statistic: f64,
    pub z: f64,
    pub p_value: f64,
    pub n: usize,
}

impl MannKendall {
    pub fn trend_free(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

/// Two-sided Mann-Kendall trend test with the tie-corrected variance.
pub fn mann_kendall(series: &[f64]) -> MannKendall {
    let n = series.len();
    if n < 3 {
        return MannKendall {
            statistic: 0.0,
            z: 0.0,
            p_value: 1.0,
            n,
        };
    }
    let mut s = 0i64;
    for i in 0..n - 1 {
        let xi = series[i];
        for &xj in &series[i + 1..] {
            s += match xj.partial_cmp(&xi) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    let mut sorted = series.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut tie_term = 0.0;
    let mut run = 1usize;
    for w in 1..=n {
        if w < n && sorted[w] == sorted[w - 1] {
            run += 1;
        } else {
            if run > 1 {
                let t = run as f64;
                tie_term += t * (t - 1.0) * (2.0 * t + 5.0);
            }
            run = 1;
        }
    }
    let nf = n as f64;
    let var = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - tie_term) / 18.0;
    let sf = s as f64;
    let z = if var <= 0.0 {
        0.0
    } else if sf > 0.0 {
        (sf - 1.0) / var.sqrt()
    } else if sf < 0.0 {
        (sf + 1.0) / var.sqrt()
    } else {
        0.0
    };
    let p_value = 2.0 * (1.0 - Normal::standard().cdf(z.abs()));
    MannKendall {
        statistic: sf,
        z,
        p_value,
        n,
    }
}

/// Standard error of a sample mean via non-overlapping batch means.
pub fn batch_means_se(series: &[f64], n_batches: usize) -> f64 {
    let n_batches = n_batches.max(2).min(series.len().max(2));
    let size = series.len() / n_batches;
    if size == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..n_batches)
        .map(|b| series[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / n_batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (n_batches - 1) as f64;
    (var / n_batches as f64).sqrt()
}
