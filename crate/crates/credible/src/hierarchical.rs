//! Hierarchical Bayes: hyperprior on the regularity, Metropolis-within-Gibbs
//! sampling of `(alpha, theta^N)`, and the draw-based posterior mean and
//! radius.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::sequence_model::Observation;
use crate::stream::StreamTag;

pub const DEFAULT_BURN_IN: usize = 3200;
pub const DEFAULT_DRAWS: usize = 800;

#[derive(Debug, Clone, PartialEq)]
pub enum HyperPrior {
    /// Uniform on `[D, 2D]`.
    Uniform,
    PointMass(f64),
    /// Density tabulated on an increasing grid covering `[D, 2D]`;
    /// interpolated linearly, must integrate to 1 (trapezoid, 1e-6).
    CustomDensity { alphas: Vec<f64>, densities: Vec<f64> },
}

impl HyperPrior {
    pub fn validate(&self, d: f64) -> Result<()> {
        match self {
            HyperPrior::Uniform => Ok(()),
            HyperPrior::PointMass(a) => {
                if !(d..=2.0 * d).contains(a) {
                    return Err(Error::Config(format!(
                        "point mass {a} outside [D, 2D] = [{d}, {}]",
                        2.0 * d
                    )));
                }
                Ok(())
            }
            HyperPrior::CustomDensity { alphas, densities } => {
                if alphas.len() != densities.len() || alphas.len() < 2 {
                    return Err(Error::Config("custom density needs matching grids of length >= 2".into()));
                }
                if alphas.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Config("custom density grid must be increasing".into()));
                }
                if alphas[0] < d - 1e-12 || *alphas.last().unwrap() > 2.0 * d + 1e-12 {
                    return Err(Error::Config("custom density support must lie in [D, 2D]".into()));
                }
                if densities.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                    return Err(Error::Config("custom density must be nonnegative and finite".into()));
                }
                let mut integral = 0.0;
                for j in 1..alphas.len() {
                    integral += 0.5 * (densities[j] + densities[j - 1]) * (alphas[j] - alphas[j - 1]);
                }
                if (integral - 1.0).abs() > 1e-6 {
                    return Err(Error::Config(format!(
                        "custom density integrates to {integral}, expected 1"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Log density at `alpha` up to an additive constant; `-inf` outside the
    /// tabulated support.
    fn log_density(&self, alpha: f64) -> f64 {
        match self {
            HyperPrior::Uniform => 0.0,
            HyperPrior::PointMass(_) => 0.0,
            HyperPrior::CustomDensity { alphas, densities } => {
                if alpha < alphas[0] || alpha > *alphas.last().unwrap() {
                    return f64::NEG_INFINITY;
                }
                let j = alphas.partition_point(|&a| a < alpha).min(alphas.len() - 1).max(1);
                let t = (alpha - alphas[j - 1]) / (alphas[j] - alphas[j - 1]);
                let v = densities[j - 1] + t * (densities[j] - densities[j - 1]);
                v.ln()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct McmcConfig {
    pub d: f64,
    pub burn_in: usize,
    pub draws: usize,
    /// Truncation of the theta block; `ceil(n^{2/(1+4D)})` in the experiments.
    pub n_theta: usize,
    pub tag: StreamTag,
}

impl McmcConfig {
    pub fn new(d: f64, n: f64, tag: StreamTag) -> Self {
        McmcConfig {
            d,
            burn_in: DEFAULT_BURN_IN,
            draws: DEFAULT_DRAWS,
            n_theta: n.powf(2.0 / (1.0 + 4.0 * d)).ceil() as usize,
            tag,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HierChain {
    pub alpha_draws: Vec<f64>,
    pub theta_draws: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
}

/// Per-coordinate posterior factors at `alpha`: `(mean_i, sd_i)` and the
/// prior precision `i^{1+2a}`.
struct AlphaState {
    means: Vec<f64>,
    sds: Vec<f64>,
    precisions: Vec<f64>,
}

fn alpha_state(x: &Observation, alpha: f64, n_theta: usize, log_i: &[f64]) -> AlphaState {
    let n = x.n;
    let mut means = Vec::with_capacity(n_theta);
    let mut sds = Vec::with_capacity(n_theta);
    let mut precisions = Vec::with_capacity(n_theta);
    for i in 0..n_theta {
        let p = ((1.0 + 2.0 * alpha) * log_i[i]).exp();
        means.push(n * x.values[i] / (p + n));
        sds.push(1.0 / (p + n).sqrt());
        precisions.push(p);
    }
    AlphaState {
        means,
        sds,
        precisions,
    }
}

/// Alternates exact Gaussian draws of `theta^N | alpha, X` with a
/// Metropolis-Hastings step for `alpha | theta^N` using a uniform
/// independence proposal on `[D, 2D]`; given `theta`, `X` carries no extra
/// information about `alpha`, so the acceptance ratio is the prior-density
/// ratio of the two conjugate priors at `theta` times the hyperprior ratio.
pub fn run_mcmc(x: &Observation, hp: &HyperPrior, cfg: &McmcConfig) -> Result<HierChain> {
    hp.validate(cfg.d)?;
    if cfg.n_theta > x.values.len() {
        return Err(Error::Truncation(format!(
            "MCMC needs N_theta={} coefficients, observation has {}",
            cfg.n_theta,
            x.values.len()
        )));
    }
    if cfg.draws == 0 {
        return Err(Error::InvalidInput("need at least one retained draw".into()));
    }
    let d = cfg.d;
    let log_i: Vec<f64> = (1..=cfg.n_theta).map(|i| (i as f64).ln()).collect();
    let mut rng = cfg.tag.rng();

    let mut alpha = match hp {
        HyperPrior::PointMass(a) => *a,
        _ => 1.5 * d,
    };
    let mut state = alpha_state(x, alpha, cfg.n_theta, &log_i);
    let mut theta = vec![0.0f64; cfg.n_theta];

    let total = cfg.burn_in + cfg.draws;
    let mut alpha_draws = Vec::with_capacity(cfg.draws);
    let mut theta_draws = Vec::with_capacity(cfg.draws);
    let mut accepted = 0usize;
    let mut proposals = 0usize;

    for it in 0..total {
        // Gibbs step 1: theta | alpha, X.
        for i in 0..cfg.n_theta {
            let z: f64 = rng.sample(StandardNormal);
            theta[i] = state.means[i] + state.sds[i] * z;
        }
        // Gibbs step 2: alpha | theta (skipped for a point mass).
        if !matches!(hp, HyperPrior::PointMass(_)) {
            let proposal = d + d * rng.gen::<f64>();
            proposals += 1;
            let mut log_ratio = hp.log_density(proposal) - hp.log_density(alpha);
            for i in 0..cfg.n_theta {
                let p_new = ((1.0 + 2.0 * proposal) * log_i[i]).exp();
                log_ratio += (proposal - alpha) * log_i[i]
                    + (state.precisions[i] - p_new) * theta[i] * theta[i] / 2.0;
            }
            if log_ratio >= 0.0 || rng.gen::<f64>().ln() < log_ratio {
                alpha = proposal;
                state = alpha_state(x, alpha, cfg.n_theta, &log_i);
                accepted += 1;
            }
        }
        if it >= cfg.burn_in {
            alpha_draws.push(alpha);
            theta_draws.push(theta.clone());
        }
    }
    Ok(HierChain {
        alpha_draws,
        theta_draws,
        acceptance_rate: if proposals == 0 {
            1.0
        } else {
            accepted as f64 / proposals as f64
        },
    })
}

/// Coordinate-wise average of the retained theta draws.
pub fn hier_posterior_mean(chain: &HierChain) -> Vec<f64> {
    let m = chain.theta_draws.len();
    let dim = chain.theta_draws.first().map_or(0, |d| d.len());
    let mut mean = vec![0.0f64; dim];
    for draw in &chain.theta_draws {
        for (s, v) in mean.iter_mut().zip(draw) {
            *s += v;
        }
    }
    for s in &mut mean {
        *s /= m as f64;
    }
    mean
}

/// The `ceil((1-gamma) * draws)`-th smallest distance from the retained
/// draws to their mean — the draw-based radius.
pub fn hier_radius(chain: &HierChain, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma must be in (0,1), got {gamma}")));
    }
    let m = chain.theta_draws.len();
    if m < (1.0 / gamma).ceil() as usize {
        return Err(Error::Precision(format!(
            "need at least ceil(1/gamma)={} draws, have {m}",
            (1.0 / gamma).ceil()
        )));
    }
    let mean = hier_posterior_mean(chain);
    let mut dists: Vec<f64> = chain
        .theta_draws
        .iter()
        .map(|d| {
            d.iter()
                .zip(&mean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    dists.sort_by(|a, b| a.total_cmp(b));
    let idx = ((1.0 - gamma) * m as f64).ceil() as usize;
    Ok(dists[idx.clamp(1, m) - 1])
}

/// Chain export: `iter,alpha` rows for the retained draws.
pub fn write_alpha_csv<W: Write>(chain: &HierChain, mut w: W) -> Result<()> {
    writeln!(w, "iter,alpha")?;
    for (it, a) in chain.alpha_draws.iter().enumerate() {
        writeln!(w, "{it},{a}")?;
    }
    Ok(())
}
