//! Information criterion and choice of the cluster count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MindsError, Result};
use crate::gibbs::{run_chain, ChainResult};
use crate::model::{MixedDataset, ModelConfig};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcReport {
    /// Mean log-likelihood over retained draws.
    pub mean_log_likelihood: f64,
    /// Log-likelihood at the point estimate.
    pub plugin_log_likelihood: f64,
    /// Effective complexity `2 L_hat - 2 E`.
    pub complexity: f64,
    pub ic: f64,
}

pub fn ic_from_parts(log_likelihoods: &[f64], plugin_log_likelihood: f64) -> Result<IcReport> {
    if log_likelihoods.len() < 2 {
        return Err(MindsError::EmptyChain(log_likelihoods.len()));
    }
    let mean = log_likelihoods.iter().sum::<f64>() / log_likelihoods.len() as f64;
    let complexity = 2.0 * plugin_log_likelihood - 2.0 * mean;
    Ok(IcReport {
        mean_log_likelihood: mean,
        plugin_log_likelihood,
        complexity,
        ic: -2.0 * mean + 2.0 * complexity,
    })
}

/// IC of a fitted chain, with the deviance plug-in at the relabeled posterior
/// mean and modal memberships.
pub fn information_criterion(chain: &ChainResult, data: &MixedDataset) -> Result<IcReport> {
    let plugin = chain.point_estimate.joint_log_likelihood(data)?;
    ic_from_parts(&chain.retained_log_likelihoods, plugin)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub k: usize,
    pub seed: u64,
    pub report: Option<IcReport>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub rows: Vec<SelectionRow>,
    pub best_k: Option<usize>,
}

impl Selection {
    /// Smallest IC among successful fits; ties go to the smaller k.
    fn argmin(rows: &[SelectionRow]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for row in rows {
            if let Some(r) = row.report.filter(|r| r.ic.is_finite()) {
                if best.is_none_or(|(k, ic)| r.ic < ic || (r.ic == ic && row.k < k)) {
                    best = Some((row.k, r.ic));
                }
            }
        }
        best.map(|(k, _)| k)
    }
}

/// Fit one chain per `k` (in parallel) and tabulate the IC.
///
/// Each chain's seed is derived from the template seed and `k`, so the table
/// does not depend on the order of `k_range`.
pub fn select_k(data: &MixedDataset, template: &ModelConfig, k_range: &[usize]) -> Result<Selection> {
    if k_range.is_empty() {
        return Err(MindsError::Config("k range is empty".into()));
    }
    template.validate()?;
    let rows: Vec<SelectionRow> = k_range
        .par_iter()
        .map(|&k| {
            let seed = derive_seed(template.seed, "select_k", k as u64);
            let config = ModelConfig {
                n_clusters: k,
                seed,
                ..template.clone()
            };
            let fitted =
                run_chain(data, &config).and_then(|c| Ok((information_criterion(&c, data)?, c.converged(0.01))));
            match fitted {
                Ok((report, converged)) => SelectionRow {
                    k,
                    seed,
                    report: Some(report),
                    converged: Some(converged),
                    error: None,
                },
                Err(e) => SelectionRow {
                    k,
                    seed,
                    report: None,
                    converged: None,
                    error: Some(format!("k = {k}: {e}")),
                },
            }
        })
        .collect();
    let best_k = Selection::argmin(&rows);
    Ok(Selection { rows, best_k })
}
