//! Pólya-Gamma sampling.
//!
//! `PG(1, c)` draws come from the exact alternating-series rejection sampler
//! for the Jacobi distribution `J*(1, c/2)`, using `PG(1, c) = J*(1, c/2) / 4`.
//! The proposal mixes a truncated inverse-Gaussian on `(0, t]` with an
//! exponential tail on `(t, inf)`, with `t = 0.64`.
//!
//! A truncated sum-of-gammas sampler is kept as a slow oracle.

use std::f64::consts::{FRAC_2_PI, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{MindsError, Result};

const TRUNCATION: f64 = 0.64;
const PI_SQ: f64 = PI * PI;

/// Below this `|c|` the `c -> 0` limit is used for the closed-form moments.
pub const SMALL_TILT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyaGammaParams {
    pub shape_b: f64,
    pub tilt_c: f64,
}

impl PolyaGammaParams {
    pub fn new(shape_b: f64, tilt_c: f64) -> Result<Self> {
        let p = Self { shape_b, tilt_c };
        p.validate()?;
        Ok(p)
    }

    /// The only shape the Bernoulli likelihood needs.
    pub fn unit(tilt_c: f64) -> Self {
        Self { shape_b: 1.0, tilt_c }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shape_b > 0.0 && self.shape_b.is_finite()) {
            return Err(MindsError::Domain(format!(
                "Pólya-Gamma shape must be positive and finite, got {}",
                self.shape_b
            )));
        }
        if !self.tilt_c.is_finite() {
            return Err(MindsError::Domain(format!(
                "Pólya-Gamma tilt must be finite, got {}",
                self.tilt_c
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PgMethod {
    /// Exact rejection sampler. Integer shapes are handled as sums of `PG(1, c)`.
    #[default]
    Exact,
    /// Sum of the first `terms` gamma variables of the series representation,
    /// plus the expected value of the remainder.
    TruncatedSeries { terms: usize },
}

/// One draw from `PG(b, c)` using the exact sampler.
pub fn sample_pg<R: Rng + ?Sized>(params: PolyaGammaParams, rng: &mut R) -> Result<f64> {
    sample_pg_with(params, PgMethod::Exact, rng)
}

pub fn sample_pg_with<R: Rng + ?Sized>(params: PolyaGammaParams, method: PgMethod, rng: &mut R) -> Result<f64> {
    params.validate()?;
    match method {
        PgMethod::Exact => {
            let b = params.shape_b;
            if b.fract() != 0.0 {
                return Err(MindsError::Domain(format!(
                    "exact Pólya-Gamma sampler supports integer shapes only, got {b}"
                )));
            }
            let n = b as usize;
            Ok((0..n).map(|_| sample_pg1(params.tilt_c, rng)).sum())
        }
        PgMethod::TruncatedSeries { terms } => Ok(sample_pg_series(params, terms.max(1), rng)),
    }
}

/// Draw from `PG(1, c)`. `c` must be finite.
pub fn sample_pg1<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    debug_assert!(c.is_finite());
    0.25 * sample_jacobi_star(0.5 * c.abs(), rng)
}

/// `J*(1, z)` via the alternating-series rejection method.
fn sample_jacobi_star<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let k = 0.125 * PI_SQ + 0.5 * z * z;
    let p = 0.5 * PI / k * (-k * TRUNCATION).exp();
    let q = 2.0 * left_mass(z);
    let tail_prob = p / (p + q);

    loop {
        let u: f64 = rng.random();
        let x = if u < tail_prob {
            let e: f64 = Exp1.sample(rng);
            TRUNCATION + e / k
        } else {
            truncated_inverse_gaussian(z, rng)
        };

        let mut s = series_term(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0usize;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_term(n, x);
                if y <= s {
                    return x;
                }
            } else {
                s += series_term(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// `exp(-z) * P(IG(1/z, 1) < t)`, computed without overflow for large `z`.
fn left_mass(z: f64) -> f64 {
    let std = Normal::standard();
    let rt = TRUNCATION.sqrt();
    let a = (z * TRUNCATION - 1.0) / rt;
    let b = -(z * TRUNCATION + 1.0) / rt;
    let lower = std.cdf(b);
    let reflected = if lower > 0.0 { (z + lower.ln()).exp() } else { 0.0 };
    (-z).exp() * std.cdf(a) + reflected
}

/// Coefficient `a_n(x)` of the alternating series for the `J*(1, 0)` density.
fn series_term(n: usize, x: f64) -> f64 {
    let kn = n as f64 + 0.5;
    if x <= TRUNCATION {
        PI * kn * (FRAC_2_PI / x).powf(1.5) * (-2.0 * kn * kn / x).exp()
    } else {
        PI * kn * (-0.5 * kn * kn * PI_SQ * x).exp()
    }
}

/// Inverse Gaussian `IG(1/z, 1)` truncated to `(0, t]`.
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let t = TRUNCATION;
    if z < 1.0 / t {
        // mean beyond the truncation point: truncated Lévy proposal, tilted by exp(-z^2 x / 2)
        loop {
            let e = loop {
                let e1: f64 = Exp1.sample(rng);
                let e2: f64 = Exp1.sample(rng);
                if e1 * e1 <= 2.0 * e2 / t {
                    break e1;
                }
            };
            let denom = 1.0 + e * t;
            let x = t / (denom * denom);
            if rng.random::<f64>() <= (-0.5 * z * z * x).exp() {
                return x;
            }
        }
    } else {
        let mu = 1.0 / z;
        loop {
            let n: f64 = StandardNormal.sample(rng);
            let y = n * n;
            let my = mu * y;
            let mut x = mu + 0.5 * mu * my - 0.5 * mu * (4.0 * my + my * my).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x <= t {
                return x;
            }
        }
    }
}

/// Truncated sum-of-gammas sampler; the first `terms` gammas are drawn and
/// the remainder is replaced by its expectation.
pub fn sample_pg_series<R: Rng + ?Sized>(params: PolyaGammaParams, terms: usize, rng: &mut R) -> f64 {
    let b = params.shape_b;
    let c2 = params.tilt_c * params.tilt_c / (4.0 * PI_SQ);
    let gamma = Gamma::new(b, 1.0).expect("shape validated positive");
    let mut sum = 0.0;
    for k in 1..=terms {
        let d = (k as f64 - 0.5).powi(2) + c2;
        sum += gamma.sample(rng) / d;
    }
    // Expected remainder, sum_{k > K} 1/d_k, approximated by the integral tail.
    let kk = terms as f64;
    let tail = if c2 > 0.0 {
        let s = c2.sqrt();
        (0.5 * PI - (kk / s).atan()) / s
    } else {
        1.0 / kk
    };
    (sum + b * tail) / (2.0 * PI_SQ)
}

/// Mean of `PG(b, c)`: `b * tanh(c/2) / (2c)`, with limit `b/4` at `c = 0`.
pub fn pg_mean(params: PolyaGammaParams) -> f64 {
    let c = params.tilt_c.abs();
    if c < SMALL_TILT {
        return 0.25 * params.shape_b;
    }
    params.shape_b * (0.5 * c).tanh() / (2.0 * c)
}

/// Variance of `PG(b, c)`: `b (sinh c - c) / (4 c^3 cosh^2(c/2))`, limit `b/24`.
pub fn pg_variance(params: PolyaGammaParams) -> f64 {
    let c = params.tilt_c.abs();
    if c < 1e-3 {
        // series: 1/24 - c^2/120 + 17 c^4/13440 + O(c^6)
        let c2 = c * c;
        return params.shape_b * (1.0 / 24.0 - c2 / 120.0 + 17.0 * c2 * c2 / 13440.0);
    }
    let ch = (0.5 * c).cosh();
    params.shape_b * (c.sinh() - c) / (4.0 * c.powi(3) * ch * ch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Mean of the series representation with unit-rate gammas, truncated at `terms`.
    fn series_mean_oracle(c: f64, terms: usize) -> f64 {
        let c2 = c * c / (4.0 * PI_SQ);
        (1..=terms).map(|k| 1.0 / ((k as f64 - 0.5).powi(2) + c2)).sum::<f64>() / (2.0 * PI_SQ)
    }

    #[test]
    fn closed_form_mean_matches_series_oracle() {
        // frozen from the 10^4-term series; truncation error is ~1/(2 pi^2 10^4)
        assert!((series_mean_oracle(2.0, 10_000) - 0.190_393_472_93).abs() < 1e-10);
        for c in [0.0, 0.5, 1.0, 2.0, 4.0, -3.0] {
            let oracle = series_mean_oracle(c, 10_000);
            let closed = pg_mean(PolyaGammaParams::unit(c));
            assert!((oracle - closed).abs() < 1e-5, "c={c}: {oracle} vs {closed}");
        }
        assert!((pg_mean(PolyaGammaParams::unit(2.0)) - 0.190_399).abs() < 1e-6);
    }

    #[test]
    fn mean_limits_and_symmetry() {
        assert_eq!(pg_mean(PolyaGammaParams::unit(0.0)), 0.25);
        assert_eq!(pg_mean(PolyaGammaParams::unit(1e-9)), 0.25);
        for c in [0.3, 1.7, 9.0] {
            assert_eq!(pg_mean(PolyaGammaParams::unit(c)), pg_mean(PolyaGammaParams::unit(-c)));
        }
        assert!((pg_variance(PolyaGammaParams::unit(0.0)) - 1.0 / 24.0).abs() < 1e-15);
        let near = pg_variance(PolyaGammaParams::unit(1.001e-3));
        let below = pg_variance(PolyaGammaParams::unit(0.999e-3));
        assert!((near - below).abs() < 1e-9);
        assert!((pg_variance(PolyaGammaParams::unit(0.999e-3)) - 0.041_666_658_349_993).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_pg(PolyaGammaParams::unit(f64::NAN), &mut rng).is_err());
        assert!(sample_pg(PolyaGammaParams::unit(f64::INFINITY), &mut rng).is_err());
        assert!(PolyaGammaParams::new(0.0, 1.0).is_err());
        assert!(sample_pg(
            PolyaGammaParams {
                shape_b: 1.5,
                tilt_c: 0.0
            },
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn draws_positive_and_reproducible() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..500)
                .map(|i| sample_pg1(i as f64 * 0.1 - 25.0, &mut rng))
                .collect::<Vec<_>>()
        };
        let a = draw(3);
        assert!(a.iter().all(|&w| w > 0.0 && w.is_finite()));
        assert_eq!(a, draw(3));
        assert_ne!(a, draw(4));
    }

    fn moments(c: f64, n: usize, seed: u64, method: PgMethod) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = PolyaGammaParams::unit(c);
        let mut s = 0.0;
        let mut s2 = 0.0;
        for _ in 0..n {
            let w = sample_pg_with(p, method, &mut rng).unwrap();
            s += w;
            s2 += w * w;
        }
        let m = s / n as f64;
        (m, s2 / n as f64 - m * m)
    }

    #[test]
    fn exact_sampler_moments() {
        let n = 200_000;
        for c in [0.0, 0.7, 2.0, 6.0, 30.0] {
            let p = PolyaGammaParams::unit(c);
            let (m, v) = moments(c, n, 11, PgMethod::Exact);
            let se = (pg_variance(p) / n as f64).sqrt();
            assert!((m - pg_mean(p)).abs() < 4.0 * se, "c={c}: mean {m} vs {}", pg_mean(p));
            assert!((v / pg_variance(p) - 1.0).abs() < 0.05, "c={c}: var {v}");
        }
    }

    #[test]
    fn sign_of_tilt_does_not_matter() {
        let (mp, vp) = moments(1.3, 100_000, 5, PgMethod::Exact);
        let (mn, vn) = moments(-1.3, 100_000, 5, PgMethod::Exact);
        assert_eq!(mp, mn);
        assert_eq!(vp, vn);
    }

    #[test]
    fn series_sampler_agrees_with_exact() {
        let n = 50_000;
        for c in [0.0, 2.0] {
            let p = PolyaGammaParams::unit(c);
            let (ms, _) = moments(c, n, 2, PgMethod::TruncatedSeries { terms: 200 });
            let (me, _) = moments(c, n, 3, PgMethod::Exact);
            let se = (2.0 * pg_variance(p) / n as f64).sqrt();
            assert!((ms - me).abs() < 4.0 * se, "c={c}: {ms} vs {me}");
        }
    }

    #[test]
    fn integer_shape_is_sum_of_unit_draws() {
        let p = PolyaGammaParams::new(3.0, 1.0).unwrap();
        let n = 50_000;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = (0..n).map(|_| sample_pg(p, &mut rng).unwrap()).sum::<f64>() / n as f64;
        let se = (pg_variance(p) / n as f64).sqrt();
        assert!((m - pg_mean(p)).abs() < 4.0 * se);
    }
}
