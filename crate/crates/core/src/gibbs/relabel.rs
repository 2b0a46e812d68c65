//! Label alignment of stored draws and posterior summaries.

use ndarray::{Array1, Array2};

use crate::assignment::min_cost_assignment;
use crate::error::{MindsError, Result};
use crate::model::{hard_labels, membership_frequencies, ParameterState};

/// Permutation `perm` with `perm[k]` = reference cluster matched to cluster `k` of `draw`.
///
/// The matching maximizes the number of subjects sharing a cluster with the
/// reference; the summed Euclidean distance between center rows breaks ties
/// (and decides alone when the draw has no subjects).
pub fn relabel_permutation(draw: &ParameterState, reference: &ParameterState) -> Vec<usize> {
    let nc = draw.n_clusters();
    let distance = Array2::from_shape_fn((nc, nc), |(k, r)| {
        draw.cluster_centers
            .row(k)
            .iter()
            .zip(reference.cluster_centers.row(r))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    });
    let mut overlap = Array2::<f64>::zeros((nc, nc));
    if draw.memberships.len() == reference.memberships.len() {
        for (&k, &r) in draw.memberships.iter().zip(&reference.memberships) {
            overlap[[k, r]] += 1.0;
        }
    }
    let scale = 1.0 + distance.iter().filter(|d| d.is_finite()).sum::<f64>();
    let cost = distance - overlap * scale;
    min_cost_assignment(&cost)
}

/// Relabel every draw in place; returns the permutation applied to each.
pub fn relabel_draws(draws: &mut [ParameterState], reference: &ParameterState) -> Vec<Vec<usize>> {
    draws
        .iter_mut()
        .map(|d| {
            let perm = relabel_permutation(d, reference);
            d.permute_clusters(&perm);
            perm
        })
        .collect()
}

/// Posterior means of the continuous blocks, modal memberships and membership frequencies.
///
/// `augmentation` is stored as given (typically the running mean over retained draws).
pub fn posterior_summary(draws: &[ParameterState], augmentation: Array2<f64>) -> Result<(ParameterState, Array2<f64>)> {
    let first = draws.first().ok_or(MindsError::EmptyChain(0))?;
    let m = draws.len() as f64;
    let mut est = first.without_augmentation();
    let n = first.n_subjects();
    let nc = first.n_clusters();
    macro_rules! average {
        ($field:ident) => {{
            let mut acc = first.$field.clone();
            for d in &draws[1..] {
                acc += &d.$field;
            }
            acc / m
        }};
    }
    est.cluster_centers = average!(cluster_centers);
    est.subject_traits = average!(subject_traits);
    est.binary_loadings = average!(binary_loadings);
    est.continuous_loadings = average!(continuous_loadings);
    est.binary_thresholds = average!(binary_thresholds);
    est.continuous_thresholds = average!(continuous_thresholds);
    est.noise_variances = average!(noise_variances);
    let weights: Array1<f64> = average!(mixture_weights);
    est.mixture_weights = &weights / weights.sum();
    est.trait_variance = draws.iter().map(|d| d.trait_variance).sum::<f64>() / m;

    let zs: Vec<&[usize]> = draws.iter().map(|d| d.memberships.as_slice()).collect();
    let probs = membership_frequencies(&zs, n, nc);
    est.memberships = hard_labels(&probs);
    est.augmentation = augmentation;
    Ok((est, probs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn two_cluster(centers: Array2<f64>, z: Vec<usize>) -> ParameterState {
        let mut s = ParameterState::zeros(z.len(), centers.nrows(), centers.ncols(), 1, 1);
        s.cluster_centers = centers;
        s.memberships = z;
        s
    }

    #[test]
    fn swapped_draw_is_swapped_back() {
        let reference = two_cluster(array![[0.0], [5.0]], vec![0, 1, 1]);
        let mut draws = vec![two_cluster(array![[5.1], [0.2]], vec![1, 0, 0])];
        draws[0].mixture_weights = array![0.7, 0.3];
        let perms = relabel_draws(&mut draws, &reference);
        assert_eq!(perms[0], vec![1, 0]);
        assert_eq!(draws[0].cluster_centers, array![[0.2], [5.1]]);
        assert_eq!(draws[0].memberships, vec![0, 1, 1]);
        assert_eq!(draws[0].mixture_weights, array![0.3, 0.7]);
    }

    #[test]
    fn consistent_relabeling_permutes_the_argmax() {
        let reference = two_cluster(array![[0.0], [3.0], [9.0]], vec![0, 1, 2, 2]);
        let draws: Vec<ParameterState> = [vec![0, 1, 2, 2], vec![0, 1, 1, 2], vec![0, 0, 2, 2]]
            .into_iter()
            .map(|z| two_cluster(array![[0.1], [3.2], [8.9]], z))
            .collect();
        let aug = Array2::zeros((0, 0));
        let (base, _) = posterior_summary(&draws, aug.clone()).unwrap();
        let perm = [2, 0, 1];
        let mut moved = draws.clone();
        for d in &mut moved {
            d.permute_clusters(&perm);
        }
        let (shifted, _) = posterior_summary(&moved, aug.clone()).unwrap();
        let expect: Vec<usize> = base.memberships.iter().map(|&k| perm[k]).collect();
        assert_eq!(shifted.memberships, expect);
        relabel_draws(&mut moved, &reference);
        let (back, _) = posterior_summary(&moved, aug).unwrap();
        assert_eq!(back.memberships, base.memberships);
    }

    #[test]
    fn drifting_empty_cluster_keeps_its_label() {
        // cluster 2 is empty in both; its center wandered across the origin
        let reference = two_cluster(array![[0.0, 0.0], [3.0, 0.0], [9.0, 30.0]], vec![0, 0, 1, 1]);
        let draw = two_cluster(array![[0.1, 0.0], [3.1, 0.1], [-20.0, -25.0]], vec![0, 0, 1, 1]);
        assert_eq!(relabel_permutation(&draw, &reference), vec![0, 1, 2]);
    }

    #[test]
    fn shared_members_outweigh_center_distance() {
        let reference = two_cluster(array![[0.0], [1.0]], vec![0, 0, 0, 1]);
        let draw = two_cluster(array![[1.0], [0.0]], vec![0, 0, 0, 1]);
        assert_eq!(relabel_permutation(&draw, &reference), vec![0, 1]);
    }

    #[test]
    fn summary_means_and_modes() {
        let a = two_cluster(array![[0.0], [2.0]], vec![0, 1]);
        let b = two_cluster(array![[1.0], [4.0]], vec![1, 1]);
        let (est, probs) = posterior_summary(&[a, b], Array2::zeros((0, 0))).unwrap();
        assert_eq!(est.cluster_centers, array![[0.5], [3.0]]);
        assert_eq!(probs, array![[0.5, 0.5], [0.0, 1.0]]);
        // tie goes to the lower index
        assert_eq!(est.memberships, vec![0, 1]);
    }

    #[test]
    fn empty_draws_are_rejected() {
        assert!(matches!(
            posterior_summary(&[], Array2::zeros((0, 0))),
            Err(MindsError::EmptyChain(_))
        ));
    }
}
