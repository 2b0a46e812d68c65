//! Canonical form of a fitted state.
//!
//! The predictors `(X_k + b_i) W_j - a_j` are unchanged by any affine change
//! of the trait coordinates, `X -> X M + 1 m^T`, `b -> b M`, `W -> M^-1 W`,
//! `a -> a + m^T M^-1 W`. Pinning `X_11 = 1` and `a1_1 = 0` is done with
//! `M = diag(s, 1, ..., 1)` and `m = (m_1, 0, ..., 0)`, which solves the
//! constraint equations exactly.

use log::warn;

use super::ChainResult;
use crate::model::{ModelConfig, ParameterState};

const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Canonicalization {
    pub state: ParameterState,
    /// `false` when the raw state was returned unchanged.
    pub canonical: bool,
    pub warning: Option<String>,
}

pub fn resolve_identifiability(chain: &ChainResult, config: &ModelConfig) -> Canonicalization {
    canonicalize(&chain.point_estimate, config)
}

/// Rescale and shift trait 1 so that `X_11 = 1` and `a1_1 = 0`.
pub fn canonicalize(state: &ParameterState, config: &ModelConfig) -> Canonicalization {
    let raw = |warning: String| {
        warn!("{warning}");
        Canonicalization {
            state: state.clone(),
            canonical: false,
            warning: Some(warning),
        }
    };
    if !config.identifiable(state.n_items(), state.n_measures()) {
        return raw(format!(
            "parameter count exceeds equation count (N_c={}, N_t={}, N_d1={}, N_d2={}); returning the raw estimate",
            state.n_clusters(),
            state.n_traits(),
            state.n_items(),
            state.n_measures()
        ));
    }
    if state.n_items() == 0 || state.n_clusters() == 0 {
        return raw("no binary item or no cluster to anchor the constraints".into());
    }
    let v11 = state.binary_loadings[[0, 0]];
    let x11 = state.cluster_centers[[0, 0]];
    let a11 = state.binary_thresholds[0];
    let denom = x11 * v11 - a11;
    let scale = v11.abs().max(x11.abs() * v11.abs()).max(a11.abs()).max(1.0);
    if v11.abs() <= DEGENERACY_TOL || denom.abs() <= DEGENERACY_TOL * scale {
        return raw(format!(
            "degenerate anchor (V_11 = {v11}, X_11 V_11 - a1_1 = {denom}); returning the raw estimate"
        ));
    }
    let s = v11 / denom;
    let m1 = -a11 * s / v11;

    let mut out = state.clone();
    out.cluster_centers.column_mut(0).mapv_inplace(|x| s * x + m1);
    out.subject_traits.column_mut(0).mapv_inplace(|b| s * b);
    out.binary_loadings.row_mut(0).mapv_inplace(|v| v / s);
    out.continuous_loadings.row_mut(0).mapv_inplace(|u| u / s);
    let shift_bin = out.binary_loadings.row(0).mapv(|v| m1 * v);
    let shift_cont = out.continuous_loadings.row(0).mapv(|u| m1 * u);
    out.binary_thresholds += &shift_bin;
    out.continuous_thresholds += &shift_cont;
    // the anchors are exact by construction; remove rounding residue
    out.cluster_centers[[0, 0]] = 1.0;
    out.binary_thresholds[0] = 0.0;
    Canonicalization {
        state: out,
        canonical: true,
        warning: None,
    }
}

/// `true` when the anchors already hold.
pub fn is_canonical(state: &ParameterState) -> bool {
    state.n_items() > 0
        && state.n_clusters() > 0
        && state.cluster_centers[[0, 0]] == 1.0
        && state.binary_thresholds[0] == 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(seed: u64) -> ParameterState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParameterState::zeros(6, 3, 1, 4, 3);
        let mut g = |_: f64| rng.random::<f64>() * 4.0 - 2.0;
        s.cluster_centers.mapv_inplace(&mut g);
        s.subject_traits.mapv_inplace(&mut g);
        s.binary_loadings.mapv_inplace(&mut g);
        s.continuous_loadings.mapv_inplace(&mut g);
        s.binary_thresholds.mapv_inplace(&mut g);
        s.continuous_thresholds.mapv_inplace(&mut g);
        s.memberships = vec![0, 1, 2, 2, 1, 0];
        s
    }

    fn max_predictor_gap(a: &ParameterState, b: &ParameterState) -> f64 {
        let (fa, fb) = (a.fitted(), b.fitted());
        let gap = |x: &Array2<f64>, y: &Array2<f64>| x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        gap(&fa.binary, &fb.binary).max(gap(&fa.continuous, &fb.continuous))
    }

    fn config() -> ModelConfig {
        ModelConfig::new(3, 1)
    }

    #[test]
    fn anchors_hold_and_predictors_survive() {
        for seed in 0..20 {
            let s = random_state(seed);
            let c = canonicalize(&s, &config());
            assert!(c.canonical);
            assert!(is_canonical(&c.state));
            assert!(max_predictor_gap(&s, &c.state) < 1e-8);
        }
    }

    #[test]
    fn canonical_state_is_a_fixed_point() {
        let c = canonicalize(&random_state(3), &config()).state;
        assert_eq!(canonicalize(&c, &config()).state, c);
    }

    #[test]
    fn metric_rescaling_is_undone() {
        let base = canonicalize(&random_state(5), &config()).state;
        let mut scaled = base.clone();
        scaled.cluster_centers *= 2.0;
        scaled.subject_traits *= 2.0;
        scaled.binary_loadings *= 0.5;
        scaled.continuous_loadings *= 0.5;
        assert!(max_predictor_gap(&base, &scaled) < 1e-12);
        let back = canonicalize(&scaled, &config()).state;
        assert!(max_predictor_gap(&base, &back) < 1e-8);
        for (x, y) in back.cluster_centers.iter().zip(base.cluster_centers.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn unidentifiable_configuration_returns_raw() {
        let s = random_state(1);
        let c = canonicalize(&s, &ModelConfig::new(3, 3));
        assert!(!c.canonical);
        assert!(c.warning.is_some());
        assert_eq!(c.state, s);
    }

    #[test]
    fn degenerate_anchor_returns_raw() {
        let mut s = random_state(2);
        s.binary_loadings[[0, 0]] = 0.0;
        let c = canonicalize(&s, &config());
        assert!(!c.canonical);
        assert_eq!(c.state, s);
    }
}
