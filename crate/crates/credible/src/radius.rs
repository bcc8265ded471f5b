//! The deterministic credible-ball radius `r_{n,gamma}(alpha)` — the
//! `(1-gamma)`-quantile of `sum_i sigma_i^2 chi^2_1` with
//! `sigma_i^2 = 1/(i^{1+2a}+n)` — and its analytic envelope.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Gamma, Normal};

use crate::conjugate::index_power;
use crate::error::{Error, Result};
use crate::stream::StreamTag;

pub const DEFAULT_MC_DRAWS: usize = 20_000;
const MC_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadiusMethod {
    MonteCarlo,
    CumulantApprox,
}

#[derive(Debug, Clone)]
pub struct RadiusQuery {
    pub alpha: f64,
    pub n: f64,
    pub gamma: f64,
    pub trunc: usize,
    pub method: RadiusMethod,
    pub mc_draws: usize,
    pub tag: StreamTag,
}

impl RadiusQuery {
    pub fn new(alpha: f64, n: f64, gamma: f64, trunc: usize, tag: StreamTag) -> Self {
        RadiusQuery {
            alpha,
            n,
            gamma,
            trunc,
            method: RadiusMethod::MonteCarlo,
            mc_draws: DEFAULT_MC_DRAWS,
            tag,
        }
    }

    pub fn with_method(mut self, method: RadiusMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_mc_draws(mut self, mc_draws: usize) -> Self {
        self.mc_draws = mc_draws;
        self
    }
}

fn posterior_weights(alpha: f64, n: f64, trunc: usize) -> Vec<f64> {
    (1..=trunc)
        .map(|i| 1.0 / (index_power(i, alpha) + n))
        .collect()
}

/// `r` with `P(sum_i sigma_i^2 W_i <= r^2) = 1 - gamma`, `W_i` iid
/// chi-square(1). The Monte-Carlo stream depends only on the tag, not on
/// `alpha`, so a shared tag gives common random numbers across an alpha
/// sweep.
pub fn credible_radius(q: &RadiusQuery) -> Result<f64> {
    if !(q.gamma > 0.0 && q.gamma < 1.0) {
        return Err(Error::Domain(format!("gamma must be in (0,1), got {}", q.gamma)));
    }
    if q.alpha <= 0.0 || q.n <= 0.0 {
        return Err(Error::Domain(format!(
            "alpha and n must be positive, got alpha={}, n={}",
            q.alpha, q.n
        )));
    }
    if q.trunc == 0 {
        return Ok(0.0);
    }
    let weights = posterior_weights(q.alpha, q.n, q.trunc);
    match q.method {
        RadiusMethod::MonteCarlo => {
            if q.mc_draws < 1000 {
                return Err(Error::Domain(format!(
                    "monte_carlo needs mc_draws >= 1000, got {}",
                    q.mc_draws
                )));
            }
            let chunks = q.mc_draws.div_ceil(MC_CHUNK);
            let mut sums: Vec<f64> = (0..chunks)
                .into_par_iter()
                .flat_map_iter(|chunk| {
                    let lo = chunk * MC_CHUNK;
                    let count = MC_CHUNK.min(q.mc_draws - lo);
                    let mut rng = q.tag.clone().with_replicate(chunk as u64).rng();
                    let weights = &weights;
                    (0..count)
                        .map(|_| {
                            weights
                                .iter()
                                .map(|&w| {
                                    let z: f64 = rng.sample(StandardNormal);
                                    w * z * z
                                })
                                .sum::<f64>()
                        })
                        .collect::<Vec<f64>>()
                })
                .collect();
            sums.sort_by(|a, b| a.total_cmp(b));
            let idx = ((1.0 - q.gamma) * q.mc_draws as f64).ceil() as usize;
            Ok(sums[idx.clamp(1, q.mc_draws) - 1].sqrt())
        }
        RadiusMethod::CumulantApprox => {
            let k1: f64 = weights.iter().sum();
            let k2: f64 = 2.0 * weights.iter().map(|w| w * w).sum::<f64>();
            let k3: f64 = 8.0 * weights.iter().map(|w| w * w * w).sum::<f64>();
            if k2 <= 0.0 {
                return Ok(0.0);
            }
            // Shifted gamma matching the first three cumulants.
            let theta = k3 / (2.0 * k2);
            let shape = k2 / (theta * theta);
            let shift = k1 - shape * theta;
            let quantile = if shape < 1e5 {
                let g = Gamma::new(shape, 1.0 / theta).map_err(|e| {
                    Error::Precision(format!("cumulant gamma fit failed: {e}"))
                })?;
                g.inverse_cdf(1.0 - q.gamma)
            } else {
                f64::NAN
            };
            let r2 = if quantile.is_finite() {
                shift + quantile
            } else {
                // Nearly Gaussian regime where the gamma inversion is
                // numerically fragile; Cornish-Fisher with the same three
                // cumulants agrees to O(skewness^2).
                let z = Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(1.0 - q.gamma);
                let skew = k3 / k2.powf(1.5);
                k1 + k2.sqrt() * (z + skew * (z * z - 1.0) / 6.0)
            };
            if r2 < 0.0 {
                return Err(Error::Precision("negative squared radius from cumulant fit".into()));
            }
            Ok(r2.sqrt())
        }
    }
}

/// Analytic envelope for `r_{n,gamma}` on a compact interval
/// `[alpha1, alpha2]`: `lower = (1+3^{1+2a2})^{-1/2}/sqrt(2) *
/// n^{-a2/(1+2a2)}`, `upper = sqrt(3+2/a1) * n^{-a1/(1+2a1)}`, guaranteed
/// for `n >= n_min = (10(1+3^{1+2a2})/(1-gamma))^{1+2a2}`.
pub fn radius_bounds(alpha1: f64, alpha2: f64, n: f64, gamma: f64) -> Result<(f64, f64, f64)> {
    if !(alpha1 > 0.0 && alpha2 >= alpha1) {
        return Err(Error::Domain(format!(
            "need 0 < alpha1 <= alpha2, got {alpha1}, {alpha2}"
        )));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma must be in (0,1), got {gamma}")));
    }
    let pow2 = 1.0 + 3f64.powf(1.0 + 2.0 * alpha2);
    let lower = pow2.powf(-0.5) / 2f64.sqrt() * n.powf(-alpha2 / (1.0 + 2.0 * alpha2));
    let upper = (3.0 + 2.0 / alpha1).sqrt() * n.powf(-alpha1 / (1.0 + 2.0 * alpha1));
    let n_min = (10.0 * pow2 / (1.0 - gamma)).powf(1.0 + 2.0 * alpha2);
    Ok((lower, upper, n_min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::distribution::ChiSquared;

    fn q(alpha: f64, n: f64, trunc: usize, seed: u64) -> RadiusQuery {
        RadiusQuery::new(alpha, n, 0.05, trunc, StreamTag::new(seed, "radius-test"))
    }

    #[test]
    fn degenerate_truncation_is_zero() {
        assert_eq!(credible_radius(&q(1.0, 10.0, 0, 1)).unwrap(), 0.0);
    }

    #[test]
    fn single_weight_matches_chisq_quantile() {
        // sigma_1^2 = 1 needs i^{1+2a}+n = 1; take n tiny and alpha tiny is
        // not reachable exactly, so test the law directly: with n -> 0 and
        // trunc = 1, sigma_1^2 = 1/(1+n) ~ 1 and r^2 -> chi2(1) 95% point.
        let n = 1e-9;
        let r = credible_radius(&q(1.0, n, 1, 2).with_mc_draws(400_000)).unwrap();
        let oracle = ChiSquared::new(1.0).unwrap().inverse_cdf(0.95);
        assert_relative_eq!(oracle, 3.8415, max_relative = 1e-4);
        assert_relative_eq!(r * r, oracle, max_relative = 0.02);
        let rc = credible_radius(
            &q(1.0, n, 1, 2).with_method(RadiusMethod::CumulantApprox),
        )
        .unwrap();
        assert_relative_eq!(rc * rc, oracle, max_relative = 0.02);
    }

    #[test]
    fn within_eq_510_bracket() {
        let n = 1e4;
        for alpha in [1.0, 1.5, 2.0] {
            let (lo, up, n_min) = radius_bounds(alpha, alpha, n, 0.05).unwrap();
            // The bracket is only guaranteed beyond n_min, but it holds at
            // these grid points regardless; record that n < n_min here.
            assert!(n_min > 0.0);
            let r = credible_radius(&q(alpha, n, 2048, 3)).unwrap();
            assert!(lo < r && r < up, "alpha={alpha}: {lo} < {r} < {up} fails");
        }
    }

    #[test]
    fn bounds_constants_hand_arithmetic() {
        let (lo, up, n_min) = radius_bounds(1.0, 1.0, 1.0, 0.05).unwrap();
        // c = (1+3^3)^{-1/2}/sqrt 2 = 1/sqrt 56, C = sqrt 5.
        assert_relative_eq!(lo, 1.0 / 56f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(up, 5f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(n_min, (10.0f64 * 28.0 / 0.95).powf(3.0), max_relative = 1e-12);
        assert!(lo < up);
    }

    #[test]
    fn monotone_in_alpha_common_random_numbers() {
        // Same tag across alphas -> identical chi-square draws -> pathwise
        // monotone.
        let tag = StreamTag::new(4, "radius-crn");
        let mut prev = f64::INFINITY;
        for alpha in [1.0, 1.25, 1.5, 1.75, 2.0] {
            let r = credible_radius(&RadiusQuery::new(alpha, 1e4, 0.05, 1024, tag.clone()))
                .unwrap();
            assert!(r <= prev, "radius increased at alpha={alpha}");
            prev = r;
        }
    }

    #[test]
    fn monotone_in_gamma() {
        let tag = StreamTag::new(5, "radius-gamma");
        let mut prev = f64::INFINITY;
        for gamma in [0.01, 0.05, 0.2, 0.5] {
            let mut query = RadiusQuery::new(1.0, 1e4, gamma, 1024, tag.clone());
            query.gamma = gamma;
            let r = credible_radius(&query).unwrap();
            assert!(r <= prev);
            prev = r;
        }
    }

    #[test]
    fn methods_agree() {
        for n in [1e2, 1e4, 1e6] {
            for alpha in [1.0, 1.5, 2.0] {
                let mc = credible_radius(&q(alpha, n, 2048, 6).with_mc_draws(100_000)).unwrap();
                let cu = credible_radius(
                    &q(alpha, n, 2048, 6).with_method(RadiusMethod::CumulantApprox),
                )
                .unwrap();
                assert_relative_eq!(mc, cu, max_relative = 0.02);
            }
        }
    }

    #[test]
    fn deterministic_given_tag() {
        let a = credible_radius(&q(1.3, 1e4, 512, 7)).unwrap();
        let b = credible_radius(&q(1.3, 1e4, 512, 7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn domain_errors() {
        let mut bad = q(1.0, 10.0, 8, 8);
        bad.gamma = 1.0;
        assert!(credible_radius(&bad).is_err());
        assert!(credible_radius(&q(1.0, 10.0, 8, 8).with_mc_draws(10)).is_err());
        assert!(radius_bounds(2.0, 1.0, 10.0, 0.05).is_err());
    }
}
