//! Data-driven regularity selectors: the marginal-likelihood MLE and the
//! risk-based selector built on the bias estimator, plus the constants they
//! carry.

use crate::conjugate::{index_power, log_marginal_likelihood};
use crate::error::{Error, Result};
use crate::sequence_model::Observation;

pub const DEFAULT_GRID_SIZE: usize = 512;
/// Bisection tolerance in alpha for the risk selector.
const BISECT_TOL: f64 = 1e-6;
const GOLDEN_TOL: f64 = 1e-9;

/// Shared configuration: regularity interval `[D, 2D]`, threshold constants
/// and grid resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub d: f64,
    pub c1: f64,
    pub gamma: f64,
    pub c0_override: Option<f64>,
    pub grid_size: usize,
    pub k_n_override: Option<usize>,
}

impl EstimatorConfig {
    pub fn new(d: f64, c1: f64, gamma: f64) -> Result<Self> {
        let cfg = EstimatorConfig {
            d,
            c1,
            gamma,
            c0_override: None,
            grid_size: DEFAULT_GRID_SIZE,
            k_n_override: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d <= 0.0 || self.c1 <= 0.0 {
            return Err(Error::Config(format!(
                "need D > 0 and C1 > 0, got D={}, C1={}",
                self.d, self.c1
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must be in (0,1), got {}", self.gamma)));
        }
        if self.grid_size < 64 {
            return Err(Error::Config(format!(
                "grid_size must be at least 64, got {}",
                self.grid_size
            )));
        }
        Ok(())
    }

    /// Truncation of the bias estimator: `ceil(n^{2/(1+4D)})`.
    pub fn k_n(&self, n: f64) -> usize {
        self.k_n_override
            .unwrap_or_else(|| n.powf(2.0 / (1.0 + 4.0 * self.d)).ceil() as usize)
    }

    /// Uniform alpha grid on `[D, 2D]`, endpoints included.
    pub fn alpha_grid(&self) -> Vec<f64> {
        let g = self.grid_size;
        (0..g)
            .map(|j| self.d + self.d * j as f64 / (g - 1) as f64)
            .collect()
    }

    pub fn c0(&self) -> f64 {
        self.c0_override.unwrap_or_else(|| compute_c0(self))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMethod {
    Mle,
    Risk,
}

/// One diagnostics row: the criterion value at a grid alpha and, for the
/// risk selector, the threshold it is compared against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub alpha: f64,
    pub value: f64,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AlphaSelection {
    pub alpha: f64,
    pub method: SelectionMethod,
    pub diagnostics: Vec<GridPoint>,
}

/// `C0 = (1+4D)^2 log(25 C1^{-2} gamma^{-1}) / 2, clamped at 0`.
pub fn compute_c0(cfg: &EstimatorConfig) -> f64 {
    let arg = 25.0 / (cfg.c1 * cfg.c1) / cfg.gamma;
    ((1.0 + 4.0 * cfg.d).powi(2) * arg.ln() / 2.0).max(0.0)
}

/// Golden-section refinement of a maximum bracketed by `[a, b]`.
fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_TOL {
        if fc >= fd {
            // Tie goes left: keep the smaller-alpha half.
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Maximizer of the marginal log-likelihood over `[D, 2D]`: global grid
/// search (the likelihood need not be unimodal) followed by golden-section
/// refinement of the bracketing cell; ties break toward smaller alpha.
pub fn mle_alpha(x: &Observation, cfg: &EstimatorConfig) -> Result<AlphaSelection> {
    cfg.validate()?;
    let grid = cfg.alpha_grid();
    let ell = |a: f64| log_marginal_likelihood(x, a).map(|(l, _)| l);
    let mut diagnostics = Vec::with_capacity(grid.len());
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for (j, &a) in grid.iter().enumerate() {
        let l = ell(a)?;
        diagnostics.push(GridPoint {
            alpha: a,
            value: l,
            threshold: None,
        });
        if l > best_val {
            best_val = l;
            best = j;
        }
    }
    let lo = if best == 0 { grid[0] } else { grid[best - 1] };
    let hi = if best + 1 == grid.len() { grid[best] } else { grid[best + 1] };
    let f = |a: f64| ell(a).unwrap_or(f64::NEG_INFINITY);
    let mut alpha = golden_max(&f, lo, hi);
    // Refinement must never do worse than the grid winner.
    if f(alpha) < best_val {
        alpha = grid[best];
    }
    Ok(AlphaSelection {
        alpha,
        method: SelectionMethod::Mle,
        diagnostics,
    })
}

/// `B-hat^2_{n,k_n}(alpha) = sum_{i<=k_n} (i^{1+2a}/(i^{1+2a}+n))^2 (X_i^2 -
/// 1/n)`; signed, may be negative.
pub fn bias_estimator(x: &Observation, alpha: f64, cfg: &EstimatorConfig) -> Result<f64> {
    let k_n = cfg.k_n(x.n);
    if k_n > x.values.len() {
        return Err(Error::Truncation(format!(
            "bias estimator needs k_n={} coefficients, observation has {}",
            k_n,
            x.values.len()
        )));
    }
    let n = x.n;
    let mut total = 0.0;
    for i in 1..=k_n {
        let p = index_power(i, alpha);
        let w = p / (p + n);
        total += w * w * (x.values[i - 1] * x.values[i - 1] - 1.0 / n);
    }
    Ok(total)
}

/// Risk threshold `C1^2 n^{-2a/(1+2a)}`.
fn risk_threshold(cfg: &EstimatorConfig, n: f64, alpha: f64) -> f64 {
    cfg.c1 * cfg.c1 * n.powf(-2.0 * alpha / (1.0 + 2.0 * alpha))
}

/// The cap `(2D - C0/log n) v D`.
pub fn risk_cap(cfg: &EstimatorConfig, n: f64) -> f64 {
    (2.0 * cfg.d - cfg.c0() / n.ln()).max(cfg.d)
}

/// Risk-based selector: `inf{a >= D : B-hat^2(a) >= C1^2 n^{-2a/(1+2a)}}`
/// capped at `(2D - C0/log n) v D`; the empty set clamps to the cap. The
/// comparison is on the squared scale, so negative estimates never trigger.
pub fn risk_alpha(x: &Observation, cfg: &EstimatorConfig) -> Result<AlphaSelection> {
    cfg.validate()?;
    let grid = cfg.alpha_grid();
    let n = x.n;
    let mut diagnostics = Vec::with_capacity(grid.len());
    let mut first_hit: Option<usize> = None;
    for (j, &a) in grid.iter().enumerate() {
        let b = bias_estimator(x, a, cfg)?;
        let t = risk_threshold(cfg, n, a);
        diagnostics.push(GridPoint {
            alpha: a,
            value: b,
            threshold: Some(t),
        });
        if first_hit.is_none() && b >= t {
            first_hit = Some(j);
        }
    }
    let cap = risk_cap(cfg, n);
    let alpha = match first_hit {
        None => cap,
        Some(0) => cfg.d.min(cap),
        Some(j) => {
            // Bisect the first sign-change cell.
            let (mut lo, mut hi) = (grid[j - 1], grid[j]);
            while hi - lo > BISECT_TOL {
                let mid = (lo + hi) / 2.0;
                if bias_estimator(x, mid, cfg)? >= risk_threshold(cfg, n, mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi.min(cap)
        }
    };
    Ok(AlphaSelection {
        alpha: alpha.clamp(cfg.d, 2.0 * cfg.d),
        method: SelectionMethod::Risk,
        diagnostics,
    })
}

/// Honesty inflation threshold of the risk-based ball:
/// `sqrt(8(1+3^{1+4D})) (sqrt 6 + sqrt(2(C1^2+M)))`.
pub fn honesty_l_threshold(d: f64, c1: f64, m: f64) -> f64 {
    (8.0 * (1.0 + 3f64.powf(1.0 + 4.0 * d))).sqrt()
        * (6f64.sqrt() + (2.0 * (c1 * c1 + m)).sqrt())
}

/// Adaptivity constant
/// `K = sqrt(3+2/D) exp(2[(1/2+beta) log(2M/C1^2) v C0] / (1/2+2D)^2)`.
pub fn adaptivity_k_constant(d: f64, beta: f64, c1: f64, m: f64, c0: f64) -> f64 {
    let num = ((0.5 + beta) * (2.0 * m / (c1 * c1)).ln()).max(c0);
    (3.0 + 2.0 / d).sqrt() * (2.0 * num / (0.5 + 2.0 * d).powi(2)).exp()
}
