//! Truths, Sobolev norms and observation sampling for the sequence model
//! `X_i = theta_{0,i} + Z_i / sqrt(n)`.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::stream::StreamTag;

/// A coefficient sequence with finite support; entries beyond the stored
/// vector are implicitly zero. Index convention is 1-based: `coefficient(1)`
/// is the first coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthSequence {
    coefficients: Vec<f64>,
    pub label: String,
    pub beta_nominal: Option<f64>,
}

impl TruthSequence {
    pub fn new(coefficients: Vec<f64>, label: &str, beta_nominal: Option<f64>) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "truth '{label}' has a non-finite coefficient"
            )));
        }
        Ok(TruthSequence {
            coefficients,
            label: label.to_owned(),
            beta_nominal,
        })
    }

    pub fn zero(label: &str) -> Self {
        TruthSequence {
            coefficients: Vec::new(),
            label: label.to_owned(),
            beta_nominal: None,
        }
    }

    /// 1-based coefficient lookup; zero beyond the stored support.
    pub fn coefficient(&self, i: usize) -> f64 {
        assert!(i >= 1, "coefficient index is 1-based");
        self.coefficients.get(i - 1).copied().unwrap_or(0.0)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Largest index with a nonzero coefficient (0 for the zero sequence).
    pub fn support(&self) -> usize {
        self.coefficients
            .iter()
            .rposition(|&c| c != 0.0)
            .map_or(0, |p| p + 1)
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.coefficients.iter().map(|c| c * c).sum()
    }

    /// Exact squared-tail mass beyond index `trunc`.
    pub fn tail_norm_sq(&self, trunc: usize) -> f64 {
        self.coefficients
            .iter()
            .skip(trunc)
            .map(|c| c * c)
            .sum()
    }

    /// Text serialization: header `# label beta_nominal`, then one
    /// `index value` line per nonzero coefficient.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let beta = self
            .beta_nominal
            .map_or_else(|| "-".to_owned(), |b| format!("{b}"));
        writeln!(w, "# {} {}", self.label, beta)?;
        for (i, c) in self.coefficients.iter().enumerate() {
            if *c != 0.0 {
                writeln!(w, "{} {:e}", i + 1, c)?;
            }
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("empty truth file".into()))??;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("#") {
            return Err(Error::InvalidInput("truth file must start with '# label beta'".into()));
        }
        let label = parts
            .next()
            .ok_or_else(|| Error::InvalidInput("missing label in truth header".into()))?
            .to_owned();
        let beta_nominal = match parts.next() {
            Some("-") | None => None,
            Some(b) => Some(b.parse::<f64>().map_err(|e| {
                Error::InvalidInput(format!("bad beta_nominal in truth header: {e}"))
            })?),
        };
        let mut coefficients = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut f = line.split_whitespace();
            let idx: usize = f
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::InvalidInput(format!("bad index line: {line}")))?;
            let val: f64 = f
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::InvalidInput(format!("bad value line: {line}")))?;
            if idx == 0 {
                return Err(Error::InvalidInput("truth indices are 1-based".into()));
            }
            if coefficients.len() < idx {
                coefficients.resize(idx, 0.0);
            }
            coefficients[idx - 1] = val;
        }
        TruthSequence::new(coefficients, &label, beta_nominal)
    }
}

/// Sobolev seminorm `sum_i theta_i^2 i^{2 beta}` over the finite support;
/// membership in `S^beta(M)` holds iff the result is at most `M`.
pub fn sobolev_norm_sq(theta: &TruthSequence, beta: f64) -> Result<f64> {
    if beta <= 0.0 || !beta.is_finite() {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    Ok(theta
        .coefficients()
        .iter()
        .enumerate()
        .map(|(k, c)| c * c * ((k + 1) as f64).powf(2.0 * beta))
        .sum())
}

/// Sobolev-ball parameters `S^beta(M)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolevBallSpec {
    pub beta: f64,
    pub m: f64,
}

impl SobolevBallSpec {
    pub fn new(beta: f64, m: f64) -> Result<Self> {
        if beta <= 0.0 || m <= 0.0 {
            return Err(Error::Domain(format!(
                "Sobolev ball needs beta > 0 and M > 0, got beta={beta}, M={m}"
            )));
        }
        Ok(SobolevBallSpec { beta, m })
    }

    pub fn contains(&self, theta: &TruthSequence) -> Result<bool> {
        Ok(sobolev_norm_sq(theta, self.beta)? <= self.m)
    }
}

/// Noisy coefficients at noise level `n` (variance `1/n` per coordinate).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub values: Vec<f64>,
    pub n: f64,
    pub seed_info: String,
}

impl Observation {
    pub fn truncation(&self) -> usize {
        self.values.len()
    }
}

/// Draw `X_i = theta_i + Z_i / sqrt(n)` for `i = 1..=trunc`.
pub fn sample_observation(
    theta: &TruthSequence,
    n: f64,
    trunc: usize,
    tag: &StreamTag,
) -> Result<Observation> {
    if n <= 0.0 || !n.is_finite() {
        return Err(Error::Domain(format!("noise level n must be positive, got {n}")));
    }
    if trunc < theta.support() {
        return Err(Error::Truncation(format!(
            "truncation {} is below the truth support {}",
            trunc,
            theta.support()
        )));
    }
    let mut rng = tag.rng();
    let scale = 1.0 / n.sqrt();
    let values = (1..=trunc)
        .map(|i| theta.coefficient(i) + scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(Observation {
        values,
        n,
        seed_info: tag.label(),
    })
}

/// The block-sparse sequence of the empirical-Bayes counterexample, together
/// with the noise-level schedule it was built for.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub truth: TruthSequence,
    /// Noise levels `n_1 = 2`, `n_j = ceil(c_grow * n_{j-1}^{1+4D})`.
    pub schedule: Vec<u64>,
    /// The block amplitude actually used after optional Sobolev calibration.
    pub k_effective: f64,
}

/// Blocks `n_j^{1/(1+2 beta)} <= i < 2 n_j^{1/(1+2 beta)}` carry
/// `theta_i^2 = K i^{-1-2 beta}`; everything else is zero. When `target`
/// `(beta', M)` is supplied, K is scaled down to the largest value with
/// `sobolev_norm_sq(theta, beta') <= M`.
pub fn make_counterexample(
    beta: f64,
    k: f64,
    d: f64,
    blocks: usize,
    trunc: usize,
    c_grow: f64,
    target: Option<(f64, f64)>,
) -> Result<Counterexample> {
    if d <= 0.0 || beta < d || beta >= 2.0 * d {
        return Err(Error::Domain(format!(
            "counterexample needs beta in [D, 2D), got beta={beta}, D={d}"
        )));
    }
    if k < 0.0 {
        return Err(Error::Domain(format!("K must be nonnegative, got {k}")));
    }
    if blocks == 0 {
        return Err(Error::Domain("at least one block required".into()));
    }

    let mut schedule: Vec<u64> = Vec::with_capacity(blocks);
    let mut n_prev = 2.0f64;
    schedule.push(2);
    for _ in 1..blocks {
        let next = (c_grow * n_prev.powf(1.0 + 4.0 * d)).ceil();
        if next > 2.0f64.powi(62) {
            return Err(Error::Truncation(
                "counterexample schedule exceeds representable range".into(),
            ));
        }
        schedule.push(next as u64);
        n_prev = next;
    }

    // Block extents in index space.
    let exponent = 1.0 / (1.0 + 2.0 * beta);
    let last_hi = block_range(*schedule.last().unwrap(), exponent).1;
    if last_hi > trunc {
        return Err(Error::Truncation(format!(
            "block {} ends at index {} beyond truncation {}",
            blocks, last_hi, trunc
        )));
    }

    let mut coefficients = vec![0.0f64; last_hi];
    for &nj in &schedule {
        let (lo, hi) = block_range(nj, exponent);
        for i in lo..=hi {
            coefficients[i - 1] = (i as f64).powf(-0.5 - beta);
        }
    }

    let mut k_eff = k;
    let unit = TruthSequence::new(coefficients.clone(), "counterexample-unit", None)?;
    if let Some((beta_target, m)) = target {
        let unit_norm = sobolev_norm_sq(&unit, beta_target)?;
        if k_eff * unit_norm > m {
            k_eff = m / unit_norm;
        }
    }
    let scale = k_eff.sqrt();
    for c in &mut coefficients {
        *c *= scale;
    }
    let truth = TruthSequence::new(coefficients, "counterexample", Some(beta))?;
    Ok(Counterexample {
        truth,
        schedule,
        k_effective: k_eff,
    })
}

/// Index block `[ceil(n^e), 2 n^e)` as an inclusive `(lo, hi)` pair.
fn block_range(nj: u64, exponent: f64) -> (usize, usize) {
    let x = (nj as f64).powf(exponent);
    let lo = x.ceil() as usize;
    let hi = (2.0 * x).ceil() as usize - 1; // i < 2 n^e
    (lo.max(1), hi)
}

pub const SIM_TRUTH_DEFAULT_CAP: usize = 1_000_000;

/// The simulation-study truth: `sin(i) 10^{-1.7}` on 10..=20,
/// `3 sin(i) 100^{-1.7}` on 100..=150, `i^{-1.2}` on sparse blocks
/// `4^{4^j}..2*4^{4^j}` for `j >= 2`, zero elsewhere. The first sparse block
/// starts at `4^16 ~ 4.3e9`, so the default cap excludes it.
pub fn make_sim_truth() -> TruthSequence {
    make_sim_truth_capped(SIM_TRUTH_DEFAULT_CAP)
}

pub fn make_sim_truth_capped(cap: usize) -> TruthSequence {
    let mut coefficients = vec![0.0f64; cap.min(150).max(if cap >= 10 { 150.min(cap) } else { 0 })];
    coefficients.resize(cap.min(150), 0.0);
    for i in 10..=20usize.min(cap) {
        coefficients[i - 1] = (i as f64).sin() * 10f64.powf(-1.7);
    }
    if cap >= 100 {
        for i in 100..=150.min(cap) {
            coefficients[i - 1] = 3.0 * (i as f64).sin() * 100f64.powf(-1.7);
        }
    }
    // Sparse blocks 4^{4^j}..2*4^{4^j}, j >= 2; 4^16 = 4294967296.
    let mut j = 2u32;
    loop {
        let start = 4f64.powf(4f64.powi(j as i32));
        if start > cap as f64 {
            break;
        }
        let start = start as usize;
        let end = (2 * start).min(cap);
        if coefficients.len() < end {
            coefficients.resize(end, 0.0);
        }
        for i in start..=end {
            coefficients[i - 1] = (i as f64).powf(-1.2);
        }
        j += 1;
    }
    TruthSequence::new(coefficients, "sim-truth", Some(1.2)).expect("finite by construction")
}

/// `theta_i = c i^{-1/2 - beta - 0.01}` with `c` chosen so that the Sobolev
/// norm at `beta` equals `sobolev_m` exactly over the stored support.
pub fn polynomial_truth(beta: f64, sobolev_m: f64, support: usize) -> Result<TruthSequence> {
    if beta <= 0.0 || sobolev_m <= 0.0 || support == 0 {
        return Err(Error::Domain("polynomial truth needs beta, M, support > 0".into()));
    }
    let decay = -0.5 - beta - 0.01;
    let coeffs: Vec<f64> = (1..=support).map(|i| (i as f64).powf(decay)).collect();
    let unit = TruthSequence::new(coeffs.clone(), "poly-unit", None)?;
    let norm = sobolev_norm_sq(&unit, beta)?;
    let scale = (sobolev_m / norm).sqrt();
    TruthSequence::new(
        coeffs.into_iter().map(|c| c * scale).collect(),
        &format!("poly-beta{beta}"),
        Some(beta),
    )
}

/// Single block `start..2*start` with `theta_i = c i^{-1/2 - beta}`, scaled so
/// the Sobolev norm at `beta` equals `sobolev_m`.
pub fn block_truth(beta: f64, sobolev_m: f64, start: usize) -> Result<TruthSequence> {
    if beta <= 0.0 || sobolev_m <= 0.0 || start == 0 {
        return Err(Error::Domain("block truth needs beta, M, start > 0".into()));
    }
    let end = 2 * start - 1;
    let mut coeffs = vec![0.0f64; end];
    for i in start..=end {
        coeffs[i - 1] = (i as f64).powf(-0.5 - beta);
    }
    let unit = TruthSequence::new(coeffs.clone(), "block-unit", None)?;
    let norm = sobolev_norm_sq(&unit, beta)?;
    let scale = (sobolev_m / norm).sqrt();
    TruthSequence::new(
        coeffs.into_iter().map(|c| c * scale).collect(),
        &format!("block-beta{beta}"),
        Some(beta),
    )
}

/// Reconstruction `f(t) = sum_i theta_i sqrt(2) cos((i - 1/2) pi t)` on a grid.
pub fn truth_function_values(theta: &TruthSequence, t_grid: &[f64]) -> Vec<f64> {
    coefficient_function_values(theta.coefficients(), t_grid)
}

/// Basis expansion for a raw coefficient slice (1-based index convention).
pub fn coefficient_function_values(coeffs: &[f64], t_grid: &[f64]) -> Vec<f64> {
    let sqrt2 = std::f64::consts::SQRT_2;
    t_grid
        .iter()
        .map(|&t| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    c * sqrt2 * ((k as f64 + 0.5) * std::f64::consts::PI * t).cos()
                })
                .sum()
        })
        .collect()
}
