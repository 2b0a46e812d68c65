//! Lloyd's K-means with k-means++ seeding.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MindsError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansOptions {
    pub max_iterations: usize,
    /// Stop when the relative inertia change falls below this.
    pub tolerance: f64,
    /// Independent restarts; the lowest inertia wins.
    pub n_init: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            max_iterations: 300,
            tolerance: 1e-6,
            n_init: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
    /// Inertia after every assignment step of the winning run.
    pub inertia_trace: Vec<f64>,
}

impl KMeansFit {
    /// Index of the nearest centroid; ties go to the lower index.
    pub fn assign(&self, point: ArrayView1<f64>) -> usize {
        nearest(&self.centroids, point).0
    }

    pub fn predict(&self, features: &Array2<f64>) -> Vec<usize> {
        features.axis_iter(Axis(0)).map(|row| self.assign(row)).collect()
    }
}

/// Column means and standard deviations used to standardize features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Array1<f64>,
    pub scales: Array1<f64>,
}

impl Standardizer {
    pub fn apply(&self, features: &Array2<f64>) -> Array2<f64> {
        (features - &self.means) / &self.scales
    }
}

/// Center and scale each column; constant columns keep scale 1.
pub fn standardize(features: &Array2<f64>) -> (Array2<f64>, Standardizer) {
    let n = features.nrows().max(1) as f64;
    let means = features
        .mean_axis(Axis(0))
        .unwrap_or_else(|| Array1::zeros(features.ncols()));
    let scales = features
        .axis_iter(Axis(1))
        .zip(means.iter())
        .map(|(col, m)| {
            let sd = (col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let s = Standardizer { means, scales };
    (s.apply(features), s)
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &Array2<f64>, point: ArrayView1<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.axis_iter(Axis(0)).enumerate() {
        let d = sq_dist(c, point);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn plus_plus<R: Rng + ?Sized>(x: &Array2<f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = x.nrows();
    let mut centroids = Array2::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = x.axis_iter(Axis(0)).map(|r| sq_dist(r, x.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            d2.iter()
                .position(|&d| {
                    acc += d;
                    u < acc
                })
                .unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap_or(n - 1))
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for (i, r) in x.axis_iter(Axis(0)).enumerate() {
            d2[i] = d2[i].min(sq_dist(r, x.row(pick)));
        }
    }
    centroids
}

fn lloyd(x: &Array2<f64>, mut centroids: Array2<f64>, opts: &KMeansOptions) -> KMeansFit {
    let (n, k) = (x.nrows(), centroids.nrows());
    let mut labels = vec![0usize; n];
    let mut trace = Vec::new();
    let mut previous = f64::INFINITY;
    for _ in 0..opts.max_iterations.max(1) {
        let mut inertia = 0.0;
        let mut dist = vec![0.0; n];
        for (i, row) in x.axis_iter(Axis(0)).enumerate() {
            let (k_best, d) = nearest(&centroids, row);
            labels[i] = k_best;
            dist[i] = d;
            inertia += d;
        }
        trace.push(inertia);
        let converged = previous.is_finite()
            && (previous - inertia).abs() <= opts.tolerance * previous.abs().max(f64::MIN_POSITIVE);
        previous = inertia;
        if converged || inertia == 0.0 {
            break;
        }
        let mut sums = Array2::<f64>::zeros(centroids.dim());
        let mut counts = vec![0usize; k];
        for (i, row) in x.axis_iter(Axis(0)).enumerate() {
            sums.row_mut(labels[i]).scaled_add(1.0, &row);
            counts[labels[i]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids.row_mut(c).assign(&(&sums.row(c) / counts[c] as f64));
            } else {
                // reseed an empty cluster at the point farthest from its centroid
                let far = (0..n).fold(0, |b, i| if dist[i] > dist[b] { i } else { b });
                centroids.row_mut(c).assign(&x.row(far));
                dist[far] = 0.0;
            }
        }
    }
    KMeansFit {
        labels,
        centroids,
        inertia: previous,
        inertia_trace: trace,
    }
}

pub fn kmeans<R: Rng + ?Sized>(
    features: &Array2<f64>,
    k: usize,
    opts: &KMeansOptions,
    rng: &mut R,
) -> Result<KMeansFit> {
    let n = features.nrows();
    if k == 0 || k > n {
        return Err(MindsError::Config(format!("k = {k} is not in 1..={n}")));
    }
    if features.iter().any(|x| !x.is_finite()) {
        return Err(MindsError::Domain("features must be finite".into()));
    }
    let mut best: Option<KMeansFit> = None;
    for _ in 0..opts.n_init.max(1) {
        let fit = lloyd(features, plus_plus(features, k, rng), opts);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(9)
    }

    #[test]
    fn k_equal_n_has_zero_inertia() {
        let x = array![[0.0], [1.0], [5.0], [7.5]];
        let fit = kmeans(&x, 4, &KMeansOptions::default(), &mut rng()).unwrap();
        assert_eq!(fit.inertia, 0.0);
        let mut l = fit.labels.clone();
        l.sort_unstable();
        assert_eq!(l, vec![0, 1, 2, 3]);
    }

    #[test]
    fn separated_blobs_split_perfectly() {
        let x = array![[0.0], [0.1], [0.2], [10.0], [10.1], [10.3]];
        let fit = kmeans(&x, 2, &KMeansOptions::default(), &mut rng()).unwrap();
        assert_eq!(fit.labels[0], fit.labels[1]);
        assert_eq!(fit.labels[1], fit.labels[2]);
        assert_eq!(fit.labels[3], fit.labels[4]);
        assert_eq!(fit.labels[4], fit.labels[5]);
        assert_ne!(fit.labels[0], fit.labels[3]);
    }

    fn partition_inertia(x: &Array2<f64>, labels: &[usize], k: usize) -> f64 {
        let mut total = 0.0;
        for c in 0..k {
            let members: Vec<usize> = (0..x.nrows()).filter(|&i| labels[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            let mean = members.iter().fold(Array1::zeros(x.ncols()), |a, &i| a + &x.row(i)) / members.len() as f64;
            total += members.iter().map(|&i| sq_dist(x.row(i), mean.view())).sum::<f64>();
        }
        total
    }

    #[test]
    fn tiny_instance_reaches_exhaustive_optimum() {
        let x = array![[0.0, 1.0], [0.5, 0.2], [3.0, 3.1], [2.5, 4.0], [0.3, 2.2], [4.1, 3.3]];
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << 6) {
            let labels: Vec<usize> = (0..6).map(|i| ((mask >> i) & 1) as usize).collect();
            best = best.min(partition_inertia(&x, &labels, 2));
        }
        let opts = KMeansOptions {
            n_init: 10,
            ..KMeansOptions::default()
        };
        let fit = kmeans(&x, 2, &opts, &mut rng()).unwrap();
        assert!((fit.inertia - best).abs() < 1e-12, "{} vs {best}", fit.inertia);
    }

    #[test]
    fn inertia_never_increases() {
        let mut r = rng();
        let x = Array2::from_shape_fn((200, 3), |_| r.random::<f64>() * 10.0);
        let fit = kmeans(&x, 6, &KMeansOptions::default(), &mut r).unwrap();
        for w in fit.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn standardized_columns_have_unit_scale() {
        let x = array![[1.0, 5.0], [3.0, 5.0], [5.0, 5.0]];
        let (z, s) = standardize(&x);
        assert_eq!(s.scales[1], 1.0);
        assert!((z.column(0).mapv(|v| v * v).sum() / 3.0 - 1.0).abs() < 1e-12);
        assert!(z.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_k() {
        let x = array![[0.0], [1.0]];
        assert!(kmeans(&x, 3, &KMeansOptions::default(), &mut rng()).is_err());
        assert!(kmeans(&x, 0, &KMeansOptions::default(), &mut rng()).is_err());
    }
}
