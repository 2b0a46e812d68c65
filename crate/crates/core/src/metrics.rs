//! Clustering and parameter-recovery metrics.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::assignment::min_cost_assignment;
use crate::error::{MindsError, Result};
use crate::model::ParameterState;

/// Map from estimated cluster index to true cluster index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMap {
    pub permutation: Vec<usize>,
    /// Total membership mass on matched pairs (the negated matching cost).
    pub matched_mass: f64,
}

impl AlignmentMap {
    pub fn identity(n_clusters: usize) -> Self {
        Self {
            permutation: (0..n_clusters).collect(),
            matched_mass: f64::NAN,
        }
    }

    pub fn map(&self, estimated: usize) -> usize {
        self.permutation[estimated]
    }
}

fn check_labels(labels: &[usize], n_clusters: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= n_clusters) {
        Some(&l) => Err(MindsError::Index {
            what: "cluster label",
            index: l,
            len: n_clusters,
        }),
        None => Ok(()),
    }
}

/// Bijection maximizing the membership mass that lands on the true labels.
pub fn align_labels(true_labels: &[usize], probabilities: &Array2<f64>) -> Result<AlignmentMap> {
    let nc = probabilities.ncols();
    if true_labels.len() != probabilities.nrows() {
        return Err(MindsError::Dimension(format!(
            "{} labels for {} probability rows",
            true_labels.len(),
            probabilities.nrows()
        )));
    }
    check_labels(true_labels, nc)?;
    let mut cost = Array2::zeros((nc, nc));
    for (row, &t) in probabilities.axis_iter(Axis(0)).zip(true_labels) {
        for k in 0..nc {
            cost[[k, t]] -= row[k];
        }
    }
    let permutation = min_cost_assignment(&cost);
    let matched_mass = -permutation.iter().enumerate().map(|(k, &t)| cost[[k, t]]).sum::<f64>();
    Ok(AlignmentMap {
        permutation,
        matched_mass,
    })
}

/// One-hot membership matrix of hard labels.
pub fn one_hot(labels: &[usize], n_clusters: usize) -> Result<Array2<f64>> {
    check_labels(labels, n_clusters)?;
    let mut p = Array2::zeros((labels.len(), n_clusters));
    for (i, &l) in labels.iter().enumerate() {
        p[[i, l]] = 1.0;
    }
    Ok(p)
}

/// Average posterior mass not on the (aligned) true cluster.
pub fn bayes_error(true_labels: &[usize], probabilities: &Array2<f64>, map: &AlignmentMap) -> Result<f64> {
    let nc = probabilities.ncols();
    if true_labels.len() != probabilities.nrows() || map.permutation.len() != nc {
        return Err(MindsError::Dimension(
            "labels, probabilities and alignment disagree".into(),
        ));
    }
    check_labels(true_labels, nc)?;
    if true_labels.is_empty() {
        return Ok(0.0);
    }
    let correct: f64 = probabilities
        .axis_iter(Axis(0))
        .zip(true_labels)
        .map(|(row, &t)| (0..nc).filter(|&k| map.map(k) == t).map(|k| row[k]).sum::<f64>())
        .sum();
    Ok((1.0 - correct / true_labels.len() as f64).clamp(0.0, 1.0))
}

pub fn classification_error(true_labels: &[usize], hard_labels: &[usize], map: &AlignmentMap) -> Result<f64> {
    if true_labels.len() != hard_labels.len() {
        return Err(MindsError::Dimension("label vectors differ in length".into()));
    }
    let nc = map.permutation.len();
    check_labels(hard_labels, nc)?;
    if true_labels.is_empty() {
        return Ok(0.0);
    }
    let wrong = hard_labels
        .iter()
        .zip(true_labels)
        .filter(|(&h, &t)| map.map(h) != t)
        .count();
    Ok(wrong as f64 / true_labels.len() as f64)
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Pairwise Jaccard distance between two partitions, from their contingency table.
pub fn jaccard_distance(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(MindsError::Dimension("partitions differ in length".into()));
    }
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![0u64; ka * kb];
    let (mut ra, mut rb) = (vec![0u64; ka], vec![0u64; kb]);
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
        ra[x] += 1;
        rb[y] += 1;
    }
    let both: u64 = table.iter().map(|&c| pairs(c)).sum();
    let in_a: u64 = ra.iter().map(|&c| pairs(c)).sum();
    let in_b: u64 = rb.iter().map(|&c| pairs(c)).sum();
    let union = in_a + in_b - both;
    if union == 0 {
        return Ok(0.0);
    }
    Ok(1.0 - both as f64 / union as f64)
}

/// Calinski-Harabasz index `(B / W) (N - K) / (K - 1)`.
pub fn calinski_harabasz(features: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    let n = features.nrows();
    if labels.len() != n {
        return Err(MindsError::Dimension(format!("{} labels for {n} rows", labels.len())));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    if counts.contains(&0) {
        return Err(MindsError::Degenerate(
            "every cluster label in 0..K must be used".into(),
        ));
    }
    if k < 2 {
        return Err(MindsError::Degenerate("at least two clusters are required".into()));
    }
    let grand = features.mean_axis(Axis(0)).expect("non-empty");
    let mut means = Array2::zeros((k, features.ncols()));
    for (row, &l) in features.axis_iter(Axis(0)).zip(labels) {
        means.row_mut(l).scaled_add(1.0, &row);
    }
    for (mut m, &c) in means.axis_iter_mut(Axis(0)).zip(&counts) {
        m /= c as f64;
    }
    let between: f64 = means
        .axis_iter(Axis(0))
        .zip(&counts)
        .map(|(m, &c)| c as f64 * (&m - &grand).mapv(|d| d * d).sum())
        .sum();
    let within: f64 = features
        .axis_iter(Axis(0))
        .zip(labels)
        .map(|(row, &l)| (&row - &means.row(l)).mapv(|d| d * d).sum())
        .sum();
    if within <= 0.0 {
        return Err(MindsError::Degenerate("within-cluster dispersion is zero".into()));
    }
    Ok(between / within * (n - k) as f64 / (k - 1) as f64)
}

/// Bias and RMSE of one parameter block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockError {
    pub bias: f64,
    pub rmse: f64,
    pub count: usize,
}

impl BlockError {
    pub fn of(truth: &[f64], estimates: &[&[f64]]) -> Result<Self> {
        let mut sum = 0.0;
        let mut sq = 0.0;
        let mut count = 0;
        for est in estimates {
            if est.len() != truth.len() {
                return Err(MindsError::Dimension("estimate and truth blocks differ in size".into()));
            }
            for (e, t) in est.iter().zip(truth) {
                let d = e - t;
                sum += d;
                sq += d * d;
                count += 1;
            }
        }
        if count == 0 {
            return Err(MindsError::EmptyChain(0));
        }
        Ok(Self {
            bias: sum / count as f64,
            rmse: (sq / count as f64).sqrt(),
            count,
        })
    }
}

/// Recovery of the population blocks over replicates: centers, binary and
/// continuous loadings, thresholds (both modalities) and weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryTable {
    pub centers: BlockError,
    pub binary_loadings: BlockError,
    pub continuous_loadings: BlockError,
    pub thresholds: BlockError,
    pub weights: BlockError,
}

fn flat(a: &Array2<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}

fn thresholds(s: &ParameterState) -> Vec<f64> {
    s.binary_thresholds
        .iter()
        .chain(s.continuous_thresholds.iter())
        .copied()
        .collect()
}

/// Per-block bias and RMSE of estimates already aligned to the truth.
pub fn recovery_table(truth: &ParameterState, estimates: &[ParameterState]) -> Result<RecoveryTable> {
    let block = |get: &dyn Fn(&ParameterState) -> Vec<f64>| {
        let t = get(truth);
        let e: Vec<Vec<f64>> = estimates.iter().map(get).collect();
        let refs: Vec<&[f64]> = e.iter().map(Vec::as_slice).collect();
        BlockError::of(&t, &refs)
    };
    Ok(RecoveryTable {
        centers: block(&|s| flat(&s.cluster_centers))?,
        binary_loadings: block(&|s| flat(&s.binary_loadings))?,
        continuous_loadings: block(&|s| flat(&s.continuous_loadings))?,
        thresholds: block(&thresholds)?,
        weights: block(&|s| s.mixture_weights.to_vec())?,
    })
}

/// Solve `a x = b` for a small dense system by Gaussian elimination with partial pivoting.
fn solve(mut a: Array2<f64>, mut b: Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[[i, c]].abs().total_cmp(&a[[j, c]].abs()))?;
        if a[[p, c]].abs() < 1e-12 {
            return None;
        }
        for j in 0..n {
            a.swap([c, j], [p, j]);
        }
        for j in 0..b.ncols() {
            b.swap([c, j], [p, j]);
        }
        for r in 0..n {
            if r == c {
                continue;
            }
            let f = a[[r, c]] / a[[c, c]];
            if f == 0.0 {
                continue;
            }
            for j in c..n {
                a[[r, j]] -= f * a[[c, j]];
            }
            for j in 0..b.ncols() {
                b[[r, j]] -= f * b[[c, j]];
            }
        }
    }
    for r in 0..n {
        let d = a[[r, r]];
        b.row_mut(r).mapv_inplace(|v| v / d);
    }
    Some(b)
}

/// Express `estimate` in the trait coordinates of `truth` and match cluster labels.
///
/// The trait-space transform `M` and shift `m` are fitted by least squares on
/// the loadings and thresholds; the linear predictors of `estimate` are left
/// unchanged. Clusters are then matched on squared center distance.
pub fn align_to_truth(estimate: &ParameterState, truth: &ParameterState) -> Result<ParameterState> {
    let nt = estimate.n_traits();
    if truth.n_traits() != nt
        || truth.n_clusters() != estimate.n_clusters()
        || truth.n_items() != estimate.n_items()
        || truth.n_measures() != estimate.n_measures()
    {
        return Err(MindsError::Dimension("estimate and truth have different shapes".into()));
    }
    let cat = |s: &ParameterState| {
        ndarray::concatenate(Axis(1), &[s.binary_loadings.view(), s.continuous_loadings.view()]).expect("same rows")
    };
    let (w_hat, w_true) = (cat(estimate), cat(truth));
    // G W_hat ~ W_true, i.e. G = W_true W_hat' (W_hat W_hat')^-1
    let gram = w_hat.dot(&w_hat.t());
    let cross = w_true.dot(&w_hat.t());
    let g = solve(gram.clone(), cross.t().to_owned())
        .map(|x| x.t().to_owned())
        .ok_or_else(|| MindsError::Degenerate("estimated loadings are rank deficient".into()))?;
    let w_new = g.dot(&w_hat);
    // a_true - a_hat ~ W_new' m
    let a_hat: Array1<f64> = thresholds(estimate).into();
    let a_true: Array1<f64> = thresholds(truth).into();
    let resid = (&a_true - &a_hat).insert_axis(Axis(1));
    let m = solve(w_new.dot(&w_new.t()), w_new.dot(&resid))
        .ok_or_else(|| MindsError::Degenerate("aligned loadings are rank deficient".into()))?
        .column(0)
        .to_owned();
    let g_inv = solve(g.clone(), Array2::eye(nt))
        .ok_or_else(|| MindsError::Degenerate("trait transform is singular".into()))?;

    let mut out = estimate.clone();
    out.cluster_centers = estimate.cluster_centers.dot(&g_inv) + &m;
    out.subject_traits = estimate.subject_traits.dot(&g_inv);
    out.binary_loadings = w_new.slice(ndarray::s![.., ..estimate.n_items()]).to_owned();
    out.continuous_loadings = w_new.slice(ndarray::s![.., estimate.n_items()..]).to_owned();
    out.binary_thresholds = &estimate.binary_thresholds + &out.binary_loadings.t().dot(&m);
    out.continuous_thresholds = &estimate.continuous_thresholds + &out.continuous_loadings.t().dot(&m);

    let nc = out.n_clusters();
    let cost = Array2::from_shape_fn((nc, nc), |(k, r)| {
        (&out.cluster_centers.row(k) - &truth.cluster_centers.row(r))
            .mapv(|d| d * d)
            .sum()
    });
    let perm = min_cost_assignment(&cost);
    out.permute_clusters(&perm);
    Ok(out)
}
