//! Gower dissimilarity and agglomerative clustering (nearest-neighbour chain).

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MindsError, Result};
use crate::model::MixedDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Single,
    Complete,
    #[default]
    Average,
}

impl std::str::FromStr for Linkage {
    type Err = MindsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            other => Err(MindsError::Config(format!("unknown linkage '{other}'"))),
        }
    }
}

/// Ranges of the continuous columns, taken from a reference (training) set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GowerScale {
    pub ranges: Array1<f64>,
}

impl GowerScale {
    pub fn fit(data: &MixedDataset) -> Self {
        let ranges = data
            .continuous
            .columns()
            .into_iter()
            .map(|c| {
                let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if hi > lo {
                    hi - lo
                } else {
                    0.0
                }
            })
            .collect();
        Self { ranges }
    }

    /// Gower distance between row `i` of `a` and row `j` of `b`.
    pub fn distance(&self, a: &MixedDataset, i: usize, b: &MixedDataset, j: usize) -> f64 {
        let m = (a.n_items() + a.n_measures()) as f64;
        let mismatches = a
            .binary
            .row(i)
            .iter()
            .zip(b.binary.row(j))
            .filter(|(x, y)| x != y)
            .count() as f64;
        let cont: f64 = a
            .continuous
            .row(i)
            .iter()
            .zip(b.continuous.row(j))
            .zip(self.ranges.iter())
            .map(|((x, y), &r)| if r > 0.0 { ((x - y).abs() / r).min(1.0) } else { 0.0 })
            .sum();
        (mismatches + cont) / m
    }
}

/// Full symmetric Gower distance matrix of a dataset.
pub fn gower_distance_matrix(data: &MixedDataset) -> Array2<f64> {
    let scale = GowerScale::fit(data);
    let n = data.n_subjects();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { scale.distance(data, i, data, j) })
                .collect()
        })
        .collect();
    let mut d = Array2::zeros((n, n));
    for (i, r) in rows.into_iter().enumerate() {
        d.row_mut(i).assign(&Array1::from(r));
    }
    d
}

/// One merge of the dendrogram: clusters represented by points `a` and `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
}

/// Agglomerative clustering on a distance matrix; merges sorted by height.
pub fn agglomerate(distances: &Array2<f64>, linkage: Linkage) -> Vec<Merge> {
    let n = distances.nrows();
    let mut d = distances.clone();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut chain: Vec<usize> = Vec::new();
    let mut remaining = n;
    while remaining > 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("an active cluster"));
        }
        let (a, b) = loop {
            let top = *chain.last().expect("non-empty chain");
            let prev = chain.len().checked_sub(2).map(|i| chain[i]);
            // prefer the previous chain element on ties so the chain terminates
            let mut best = prev.unwrap_or(usize::MAX);
            let mut best_d = prev.map_or(f64::INFINITY, |p| d[[top, p]]);
            for c in 0..n {
                if active[c] && c != top && d[[top, c]] < best_d {
                    best = c;
                    best_d = d[[top, c]];
                }
            }
            if Some(best) == prev {
                chain.pop();
                chain.pop();
                break (top, best);
            }
            chain.push(best);
        };
        let (keep, gone) = (a.min(b), a.max(b));
        let height = d[[a, b]];
        let (na, nb) = (size[keep] as f64, size[gone] as f64);
        for c in 0..n {
            if !active[c] || c == keep || c == gone {
                continue;
            }
            let (da, db) = (d[[keep, c]], d[[gone, c]]);
            let nd = match linkage {
                Linkage::Single => da.min(db),
                Linkage::Complete => da.max(db),
                Linkage::Average => (na * da + nb * db) / (na + nb),
            };
            d[[keep, c]] = nd;
            d[[c, keep]] = nd;
        }
        size[keep] += size[gone];
        active[gone] = false;
        remaining -= 1;
        merges.push(Merge {
            a: keep,
            b: gone,
            height,
        });
    }
    merges.sort_by(|x, y| x.height.total_cmp(&y.height));
    merges
}

/// Labels from cutting the dendrogram at `k` clusters, numbered by first appearance.
pub fn cut_tree(merges: &[Merge], n: usize, k: usize) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for m in merges.iter().take(n.saturating_sub(k)) {
        let (ra, rb) = (find(&mut parent, m.a), find(&mut parent, m.b));
        parent[rb.max(ra)] = ra.min(rb);
    }
    let mut label_of_root = vec![usize::MAX; n];
    let mut next = 0;
    (0..n)
        .map(|i| {
            let r = find(&mut parent, i);
            if label_of_root[r] == usize::MAX {
                label_of_root[r] = next;
                next += 1;
            }
            label_of_root[r]
        })
        .collect()
}

pub fn gower_hclust(data: &MixedDataset, k: usize, linkage: Linkage) -> Result<Vec<usize>> {
    let n = data.n_subjects();
    if k == 0 || k > n {
        return Err(MindsError::Config(format!("k = {k} is not in 1..={n}")));
    }
    let d = gower_distance_matrix(data);
    Ok(cut_tree(&agglomerate(&d, linkage), n, k))
}

/// Assign new subjects to the training cluster with the smallest average Gower distance.
pub fn assign_to_clusters(train: &MixedDataset, labels: &[usize], test: &MixedDataset) -> Result<Vec<usize>> {
    if train.n_items() != test.n_items() || train.n_measures() != test.n_measures() {
        return Err(MindsError::Dimension("train and test columns differ".into()));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    let scale = GowerScale::fit(train);
    Ok((0..test.n_subjects())
        .into_par_iter()
        .map(|t| {
            let mut sums = vec![0.0; k];
            for (i, &l) in labels.iter().enumerate() {
                sums[l] += scale.distance(test, t, train, i);
            }
            let mut best = (0, f64::INFINITY);
            for c in 0..k {
                if counts[c] > 0 && sums[c] / (counts[c] as f64) < best.1 {
                    best = (c, sums[c] / counts[c] as f64);
                }
            }
            best.0
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn data() -> MixedDataset {
        MixedDataset::new(
            array![[1, 0], [1, 0], [0, 1], [1, 1], [0, 0]],
            array![[0.0, 1.0], [0.0, 1.0], [2.0, 3.0], [4.0, 2.0], [1.0, 1.5]],
        )
        .unwrap()
    }

    #[test]
    fn identical_rows_are_at_zero() {
        let d = gower_distance_matrix(&data());
        assert_eq!(d[[0, 1]], 0.0);
    }

    #[test]
    fn single_binary_mismatch_is_one_over_m() {
        let x = MixedDataset::new(array![[1, 0], [0, 0]], array![[1.0, 2.0], [1.0, 2.0]]).unwrap();
        assert_eq!(gower_distance_matrix(&x)[[0, 1]], 0.25);
    }

    #[test]
    fn matrix_matches_loop_oracle() {
        let x = data();
        let d = gower_distance_matrix(&x);
        let r = [4.0, 2.0];
        for i in 0..5 {
            for j in 0..5 {
                let mut s = 0.0;
                for c in 0..2 {
                    if x.binary[[i, c]] != x.binary[[j, c]] {
                        s += 1.0;
                    }
                    s += (x.continuous[[i, c]] - x.continuous[[j, c]]).abs() / r[c];
                }
                assert!((d[[i, j]] - s / 4.0).abs() < 1e-15);
                assert_eq!(d[[i, j]], d[[j, i]]);
                assert!((0.0..=1.0).contains(&d[[i, j]]));
            }
        }
    }

    fn naive_average_linkage(d: &Array2<f64>, k: usize) -> Vec<Vec<usize>> {
        let mut clusters: Vec<Vec<usize>> = (0..d.nrows()).map(|i| vec![i]).collect();
        while clusters.len() > k {
            let mut best = (0, 1, f64::INFINITY);
            for a in 0..clusters.len() {
                for b in a + 1..clusters.len() {
                    let mut s = 0.0;
                    for &i in &clusters[a] {
                        for &j in &clusters[b] {
                            s += d[[i, j]];
                        }
                    }
                    let avg = s / (clusters[a].len() * clusters[b].len()) as f64;
                    if avg < best.2 {
                        best = (a, b, avg);
                    }
                }
            }
            let moved = clusters.remove(best.1);
            clusters[best.0].extend(moved);
        }
        for c in clusters.iter_mut() {
            c.sort_unstable();
        }
        clusters.sort();
        clusters
    }

    #[test]
    fn nn_chain_matches_naive_average_linkage() {
        let pts: [f64; 8] = [0.0, 0.3, 1.1, 4.0, 4.6, 9.0, 9.4, 12.5];
        let d = Array2::from_shape_fn((8, 8), |(i, j)| (pts[i] - pts[j]).abs());
        let merges = agglomerate(&d, Linkage::Average);
        for k in 1..=8 {
            let labels = cut_tree(&merges, 8, k);
            let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
            for (i, &l) in labels.iter().enumerate() {
                groups[l].push(i);
            }
            groups.sort();
            assert_eq!(groups, naive_average_linkage(&d, k), "k = {k}");
        }
    }

    #[test]
    fn test_subjects_follow_nearest_cluster() {
        let train = data();
        let labels = vec![0, 0, 1, 1, 0];
        let pred = assign_to_clusters(&train, &labels, &train.select_rows(&[0, 3])).unwrap();
        assert_eq!(pred, vec![0, 1]);
    }
}
