//! Assembly of the three credible balls and containment queries against a
//! truth.

use std::io::Write;

use crate::error::Result;
use crate::estimators::{mle_alpha, risk_alpha, EstimatorConfig};
use crate::hierarchical::{hier_posterior_mean, hier_radius, HierChain};
use crate::radius::{credible_radius, RadiusMethod, RadiusQuery};
use crate::sequence_model::{Observation, TruthSequence};
use crate::stream::StreamTag;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BallMethod {
    EbMle,
    Hierarchical,
    EbRisk,
    FixedAlpha,
}

impl BallMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            BallMethod::EbMle => "eb_mle",
            BallMethod::Hierarchical => "hierarchical",
            BallMethod::EbRisk => "eb_risk",
            BallMethod::FixedAlpha => "fixed_alpha",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CredibleBall {
    pub center: Vec<f64>,
    pub radius: f64,
    /// Inflation multiplier; the set is `{theta: ||theta - center|| <= L *
    /// radius}`.
    pub l: f64,
    pub method: BallMethod,
    pub alpha_used: Option<f64>,
    pub gamma: f64,
    pub n: f64,
}

impl CredibleBall {
    pub fn effective_radius(&self) -> f64 {
        self.l * self.radius
    }
}

/// How the deterministic radius is evaluated when assembling a ball.
#[derive(Debug, Clone)]
pub struct RadiusSettings {
    pub method: RadiusMethod,
    pub mc_draws: usize,
    pub tag: StreamTag,
}

impl RadiusSettings {
    pub fn monte_carlo(tag: StreamTag) -> Self {
        RadiusSettings {
            method: RadiusMethod::MonteCarlo,
            mc_draws: crate::radius::DEFAULT_MC_DRAWS,
            tag,
        }
    }

    pub fn cumulant() -> Self {
        RadiusSettings {
            method: RadiusMethod::CumulantApprox,
            mc_draws: crate::radius::DEFAULT_MC_DRAWS,
            tag: StreamTag::new(0, "radius-unused"),
        }
    }

    fn query(&self, alpha: f64, n: f64, gamma: f64, trunc: usize) -> RadiusQuery {
        RadiusQuery {
            alpha,
            n,
            gamma,
            trunc,
            method: self.method,
            mc_draws: self.mc_draws,
            tag: self.tag.clone(),
        }
    }
}

fn conjugate_ball(
    x: &Observation,
    alpha: f64,
    gamma: f64,
    l: f64,
    rs: &RadiusSettings,
    method: BallMethod,
) -> Result<CredibleBall> {
    let post = crate::conjugate::posterior_params(x, alpha)?;
    let radius = credible_radius(&rs.query(alpha, x.n, gamma, x.values.len()))?;
    Ok(CredibleBall {
        center: post.means,
        radius,
        l,
        method,
        alpha_used: Some(alpha),
        gamma,
        n: x.n,
    })
}

/// Empirical-Bayes ball: center at the posterior mean for the
/// marginal-likelihood MLE, radius `r_{n,gamma}(alpha-hat)`.
pub fn eb_credible_ball(
    x: &Observation,
    cfg: &EstimatorConfig,
    gamma: f64,
    l: f64,
    rs: &RadiusSettings,
) -> Result<CredibleBall> {
    let sel = mle_alpha(x, cfg)?;
    conjugate_ball(x, sel.alpha, gamma, l, rs, BallMethod::EbMle)
}

/// Risk-based ball: same assembly with the risk selector.
pub fn risk_credible_ball(
    x: &Observation,
    cfg: &EstimatorConfig,
    gamma: f64,
    l: f64,
    rs: &RadiusSettings,
) -> Result<CredibleBall> {
    let sel = risk_alpha(x, cfg)?;
    conjugate_ball(x, sel.alpha, gamma, l, rs, BallMethod::EbRisk)
}

/// Fixed-alpha conjugate ball (oracle/sanity method).
pub fn fixed_alpha_ball(
    x: &Observation,
    alpha: f64,
    gamma: f64,
    l: f64,
    rs: &RadiusSettings,
) -> Result<CredibleBall> {
    conjugate_ball(x, alpha, gamma, l, rs, BallMethod::FixedAlpha)
}

/// Hierarchical ball around the draw-based posterior mean with the
/// draw-based radius.
pub fn hier_credible_ball(chain: &HierChain, gamma: f64, l: f64, n: f64) -> Result<CredibleBall> {
    let center = hier_posterior_mean(chain);
    let radius = if chain.theta_draws.len() == 1 {
        0.0
    } else {
        hier_radius(chain, gamma)?
    };
    let m = chain.alpha_draws.len() as f64;
    let alpha_mean = chain.alpha_draws.iter().sum::<f64>() / m;
    Ok(CredibleBall {
        center,
        radius,
        l,
        method: BallMethod::Hierarchical,
        alpha_used: Some(alpha_mean),
        gamma,
        n,
    })
}

/// Distance from the truth to the center, with the truth tail beyond the
/// center's truncation counted exactly; `hit` iff it is within the effective
/// radius.
pub fn contains(ball: &CredibleBall, theta: &TruthSequence) -> (bool, f64) {
    let nc = ball.center.len();
    let mut d2 = 0.0;
    for (k, &c) in ball.center.iter().enumerate() {
        let diff = c - theta.coefficient(k + 1);
        d2 += diff * diff;
    }
    d2 += theta.tail_norm_sq(nc);
    let distance = d2.sqrt();
    (distance <= ball.effective_radius(), distance)
}

/// Ball summary CSV row under the header
/// `method,n,gamma,L,alpha_used,radius,effective_radius`.
pub fn write_summary_csv<W: Write>(balls: &[CredibleBall], mut w: W) -> Result<()> {
    writeln!(w, "method,n,gamma,L,alpha_used,radius,effective_radius")?;
    for b in balls {
        let alpha = b
            .alpha_used
            .map_or_else(|| "".to_owned(), |a| format!("{a}"));
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            b.method.as_str(),
            b.n,
            b.gamma,
            b.l,
            alpha,
            b.radius,
            b.effective_radius()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radius::radius_bounds;
    use approx::assert_relative_eq;

    fn cfg() -> EstimatorConfig {
        EstimatorConfig::new(1.0, 1.0 / 3.0, 0.05).unwrap()
    }

    fn zero_obs(n: f64, len: usize) -> Observation {
        Observation {
            values: vec![0.0; len],
            n,
            seed_info: "test".into(),
        }
    }

    fn rs(seed: u64) -> RadiusSettings {
        RadiusSettings::monte_carlo(StreamTag::new(seed, "ball-radius"))
    }

    #[test]
    fn eb_ball_zero_data() {
        let c = cfg();
        let x = zero_obs(100.0, 64);
        let ball = eb_credible_ball(&x, &c, 0.05, 1.0, &rs(1)).unwrap();
        assert!(ball.center.iter().all(|&v| v == 0.0));
        assert_relative_eq!(ball.alpha_used.unwrap(), 2.0, max_relative = 1e-6);
        let direct = credible_radius(&rs(1).query(ball.alpha_used.unwrap(), 100.0, 0.05, 64))
            .unwrap();
        assert_relative_eq!(ball.radius, direct);
    }

    #[test]
    fn l_scales_effective_radius_only() {
        let c = cfg();
        let x = zero_obs(100.0, 64);
        let b1 = eb_credible_ball(&x, &c, 0.05, 1.0, &rs(2)).unwrap();
        let b2 = eb_credible_ball(&x, &c, 0.05, 2.0, &rs(2)).unwrap();
        assert_eq!(b1.center, b2.center);
        assert_relative_eq!(b2.effective_radius(), 2.0 * b1.effective_radius());
    }

    #[test]
    fn eb_center_is_posterior_mean_at_alpha_hat() {
        let c = cfg();
        let th = crate::sequence_model::polynomial_truth(1.2, 1.0, 32).unwrap();
        let x = crate::sequence_model::sample_observation(
            &th,
            500.0,
            64,
            &StreamTag::new(3, "ball-obs"),
        )
        .unwrap();
        let ball = eb_credible_ball(&x, &c, 0.05, 1.0, &rs(3)).unwrap();
        let post = crate::conjugate::posterior_params(&x, ball.alpha_used.unwrap()).unwrap();
        assert_eq!(ball.center, post.means);
    }

    #[test]
    fn risk_ball_zero_data_clamps() {
        let c = cfg();
        let n = 1e4;
        let x = zero_obs(n, c.k_n(n).max(64));
        let ball = risk_credible_ball(&x, &c, 0.05, 1.0, &rs(4)).unwrap();
        assert_relative_eq!(
            ball.alpha_used.unwrap(),
            crate::estimators::risk_cap(&c, n)
        );
        assert!(ball.center.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn risk_radius_below_eq_510_upper() {
        let c = cfg();
        let n = 1e4;
        let x = zero_obs(n, c.k_n(n).max(2048));
        let ball = risk_credible_ball(&x, &c, 0.05, 1.0, &rs(5)).unwrap();
        let a = ball.alpha_used.unwrap();
        let (_, upper, _) = radius_bounds(a, a, n, 0.05).unwrap();
        assert!(ball.radius <= upper);
    }

    #[test]
    fn hier_ball_single_draw() {
        let chain = crate::hierarchical::HierChain {
            alpha_draws: vec![1.3],
            theta_draws: vec![vec![0.5, -0.1]],
            acceptance_rate: 1.0,
        };
        let ball = hier_credible_ball(&chain, 0.05, 1.0, 100.0).unwrap();
        assert_eq!(ball.center, vec![0.5, -0.1]);
        assert_eq!(ball.radius, 0.0);
    }

    #[test]
    fn contains_trivial_cases() {
        let theta = crate::sequence_model::TruthSequence::new(vec![0.3, -0.2], "t", None).unwrap();
        let ball = CredibleBall {
            center: vec![0.3, -0.2],
            radius: 0.0,
            l: 1.0,
            method: BallMethod::FixedAlpha,
            alpha_used: None,
            gamma: 0.05,
            n: 1.0,
        };
        let (hit, dist) = contains(&ball, &theta);
        assert!(hit);
        assert_eq!(dist, 0.0);

        let zero = crate::sequence_model::TruthSequence::zero("z");
        let zball = CredibleBall {
            center: vec![],
            radius: 0.0,
            ..ball.clone()
        };
        assert!(contains(&zball, &zero).0);
    }

    #[test]
    fn contains_tail_miss() {
        // A single coefficient beyond the center truncation of magnitude m.
        let mut coeffs = vec![0.0; 10];
        coeffs[9] = 0.7;
        let theta = crate::sequence_model::TruthSequence::new(coeffs, "t", None).unwrap();
        let ball = CredibleBall {
            center: vec![0.0; 4],
            radius: 0.5,
            l: 1.0,
            method: BallMethod::FixedAlpha,
            alpha_used: None,
            gamma: 0.05,
            n: 1.0,
        };
        let (hit, dist) = contains(&ball, &theta);
        assert!(!hit);
        assert_relative_eq!(dist, 0.7);
    }

    #[test]
    fn hit_monotone_in_l() {
        let theta = crate::sequence_model::TruthSequence::new(vec![1.0], "t", None).unwrap();
        let base = CredibleBall {
            center: vec![0.0],
            radius: 0.6,
            l: 1.0,
            method: BallMethod::FixedAlpha,
            alpha_used: None,
            gamma: 0.05,
            n: 1.0,
        };
        assert!(!contains(&base, &theta).0);
        let mut wide = base.clone();
        wide.l = 2.0;
        assert!(contains(&wide, &theta).0);
    }

    #[test]
    fn distance_symmetric_when_truth_fits() {
        let theta = crate::sequence_model::TruthSequence::new(vec![0.4, 0.1], "t", None).unwrap();
        let ball = CredibleBall {
            center: vec![-0.2, 0.3],
            radius: 1.0,
            l: 1.0,
            method: BallMethod::FixedAlpha,
            alpha_used: None,
            gamma: 0.05,
            n: 1.0,
        };
        let (_, d1) = contains(&ball, &theta);
        let swapped = CredibleBall {
            center: vec![0.4, 0.1],
            ..ball
        };
        let theta2 =
            crate::sequence_model::TruthSequence::new(vec![-0.2, 0.3], "t2", None).unwrap();
        let (_, d2) = contains(&swapped, &theta2);
        assert_relative_eq!(d1, d2);
    }

    #[test]
    fn summary_csv_header() {
        let ball = CredibleBall {
            center: vec![0.0],
            radius: 0.25,
            l: 2.0,
            method: BallMethod::EbRisk,
            alpha_used: Some(1.5),
            gamma: 0.05,
            n: 100.0,
        };
        let mut buf = Vec::new();
        write_summary_csv(&[ball], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("method,n,gamma,L,alpha_used,radius,effective_radius\n"));
        assert!(s.contains("eb_risk,100,0.05,2,1.5,0.25,0.5"));
    }
}
