//! Fixed-alpha conjugate computations: posterior law, marginal log-likelihood
//! and the deterministic squared bias of the posterior mean.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::sequence_model::{Observation, TruthSequence};
use crate::stream::StreamTag;

/// Per-coordinate Gaussian posterior for a fixed prior regularity `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedAlphaPosterior {
    pub alpha: f64,
    pub n: f64,
    /// `n X_i / (i^{1+2a} + n)`.
    pub means: Vec<f64>,
    /// `1 / (i^{1+2a} + n)`.
    pub variances: Vec<f64>,
}

impl FixedAlphaPosterior {
    pub fn truncation(&self) -> usize {
        self.means.len()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
    }
    Ok(())
}

/// `i^{1+2a}` via the log to keep large indices exact enough.
#[inline]
pub fn index_power(i: usize, alpha: f64) -> f64 {
    ((1.0 + 2.0 * alpha) * (i as f64).ln()).exp()
}

pub fn posterior_params(x: &Observation, alpha: f64) -> Result<FixedAlphaPosterior> {
    check_alpha(alpha)?;
    let n = x.n;
    let mut means = Vec::with_capacity(x.values.len());
    let mut variances = Vec::with_capacity(x.values.len());
    for (k, &xi) in x.values.iter().enumerate() {
        let denom = index_power(k + 1, alpha) + n;
        means.push(n * xi / denom);
        variances.push(1.0 / denom);
    }
    Ok(FixedAlphaPosterior {
        alpha,
        n,
        means,
        variances,
    })
}

/// Marginal log-likelihood of `alpha` relative to the infinite product of
/// `N(0, 1/n)` laws, truncated at the observation length. The second return
/// value bounds the neglected tail: `sum_{i>N} log(1 + n/i^{1+2a}) <= n
/// N^{-2a} / (2a)`.
pub fn log_marginal_likelihood(x: &Observation, alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    let n = x.n;
    let mut total = 0.0;
    for (k, &xi) in x.values.iter().enumerate() {
        let p = index_power(k + 1, alpha);
        total += (1.0 + n / p).ln() - n * n * xi * xi / (p + n);
    }
    let nn = x.values.len() as f64;
    let tail_bound = n * nn.powf(-2.0 * alpha) / (2.0 * alpha);
    Ok((-0.5 * total, tail_bound))
}

/// Deterministic squared bias of the posterior mean at `alpha`:
/// `sum_{i<=N} i^{2+4a} theta_i^2 / (i^{1+2a}+n)^2` plus the exact truth tail
/// beyond `trunc` (the truncated center is zero there, so the tail bias is
/// `theta_i^2`). Returns the total and the per-index terms up to `trunc`.
pub fn posterior_mean_bias(
    theta: &TruthSequence,
    alpha: f64,
    n: f64,
    trunc: usize,
) -> Result<(f64, Vec<f64>)> {
    check_alpha(alpha)?;
    if n <= 0.0 || !n.is_finite() {
        return Err(Error::Domain(format!("n must be positive, got {n}")));
    }
    let mut per_index = Vec::with_capacity(trunc.min(theta.support()));
    let mut total = 0.0;
    for i in 1..=trunc.min(theta.support()) {
        let th = theta.coefficient(i);
        let p = index_power(i, alpha);
        // i^{2+4a}/(i^{1+2a}+n)^2 = (p/(p+n))^2.
        let w = p / (p + n);
        let term = w * w * th * th;
        per_index.push(term);
        total += term;
    }
    total += theta.tail_norm_sq(trunc);
    Ok((total, per_index))
}

/// Independent Gaussian draws from the stored posterior; `m` vectors of
/// length `truncation()`.
pub fn sample_posterior(
    post: &FixedAlphaPosterior,
    m: usize,
    tag: &StreamTag,
) -> Result<Vec<Vec<f64>>> {
    if m == 0 {
        return Err(Error::InvalidInput("need at least one draw".into()));
    }
    let mut rng = tag.rng();
    let sds: Vec<f64> = post.variances.iter().map(|v| v.sqrt()).collect();
    Ok((0..m)
        .map(|_| {
            post.means
                .iter()
                .zip(&sds)
                .map(|(mu, sd)| mu + sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect())
}
