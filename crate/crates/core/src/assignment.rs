//! Minimum-cost perfect matching on a square cost matrix (Hungarian method,
//! shortest augmenting path form with row/column potentials), `O(n^3)`.

use ndarray::Array2;

/// Returns `assign` with `assign[row] = column`, minimizing the summed cost.
pub fn min_cost_assignment(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "cost matrix must be square");
    if n == 0 {
        return Vec::new();
    }

    // 1-based arrays; index 0 is the virtual column used to start each augmentation.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if owner[j] > 0 {
            assign[owner[j] - 1] = j - 1;
        }
    }
    assign
}

pub fn assignment_cost(cost: &Array2<f64>, assign: &[usize]) -> f64 {
    assign.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum()
}

/// Every permutation of `0..n` (Heap's algorithm). Test and oracle helper.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn heap(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        for i in 0..k - 1 {
            heap(k - 1, a, out);
            if k.is_multiple_of(2) {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
        }
        heap(k - 1, a, out);
    }
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    heap(n, &mut a, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_known_instance() {
        let cost = ndarray::array![[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]];
        let a = min_cost_assignment(&cost);
        assert_eq!(assignment_cost(&cost, &a), 5.0);
    }

    #[test]
    fn heap_enumerates_all() {
        let p = permutations(4);
        assert_eq!(p.len(), 24);
        let set: std::collections::HashSet<_> = p.into_iter().collect();
        assert_eq!(set.len(), 24);
    }

    proptest! {
        #[test]
        fn matches_exhaustive_search(n in 1usize..6, vals in proptest::collection::vec(-10.0f64..10.0, 36)) {
            let cost = Array2::from_shape_fn((n, n), |(i, j)| vals[i * 6 + j]);
            let a = min_cost_assignment(&cost);
            let mut seen = a.clone();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
            let best = permutations(n)
                .iter()
                .map(|p| assignment_cost(&cost, p))
                .fold(f64::INFINITY, f64::min);
            prop_assert!((assignment_cost(&cost, &a) - best).abs() < 1e-9);
        }
    }
}
