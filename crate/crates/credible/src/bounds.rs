//! Deterministic theory-check oracles: the bracket around the risk-based
//! selector, the `h_n` diagnostic, the variance of the bias estimator, and
//! the analytic tail-sum / rate-shift inequalities. These back property
//! tests and the `check-bounds` CLI sweep; the estimators never call them.

use statrs::function::gamma::{gamma, gamma_ur};

use crate::conjugate::index_power;
use crate::error::{Error, Result};
use crate::estimators::{risk_cap, EstimatorConfig};
use crate::sequence_model::TruthSequence;

/// Deterministic bracket `[alpha_lower, alpha_upper]` containing the
/// risk-based selector with high probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketResult {
    pub alpha_lower: f64,
    pub alpha_upper: f64,
}

/// Deterministic `B^2_{n,k_n}(alpha; theta) = sum_{i<=k_n}
/// (i^{1+2a}/(i^{1+2a}+n))^2 theta_i^2` (no truth tail — this is the
/// population value of the bias estimator).
pub fn deterministic_bias_sq(theta: &TruthSequence, alpha: f64, n: f64, k_n: usize) -> f64 {
    let mut total = 0.0;
    for i in 1..=k_n.min(theta.support()) {
        let p = index_power(i, alpha);
        let w = p / (p + n);
        total += w * w * theta.coefficient(i).powi(2);
    }
    total
}

fn scan_inf(
    theta: &TruthSequence,
    n: f64,
    cfg: &EstimatorConfig,
    threshold_scale: f64,
) -> f64 {
    let k_n = cfg.k_n(n);
    let grid = cfg.alpha_grid();
    let thr = |a: f64| threshold_scale * cfg.c1 * cfg.c1 * n.powf(-2.0 * a / (1.0 + 2.0 * a));
    let cap = risk_cap(cfg, n);
    let mut hit = None;
    for (j, &a) in grid.iter().enumerate() {
        if deterministic_bias_sq(theta, a, n, k_n) >= thr(a) {
            hit = Some(j);
            break;
        }
    }
    match hit {
        None => cap,
        Some(0) => cfg.d.min(cap),
        Some(j) => {
            let (mut lo, mut hi) = (grid[j - 1], grid[j]);
            while hi - lo > 1e-6 {
                let mid = (lo + hi) / 2.0;
                if deterministic_bias_sq(theta, mid, n, k_n) >= thr(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi.min(cap)
        }
    }
}

/// Locates `alpha_lower` / `alpha_upper` with thresholds `C1^2/2` and
/// `2 C1^2` on the deterministic bias, using the same grid+bisection scheme
/// as the risk selector.
pub fn alpha_bracket(theta: &TruthSequence, n: f64, cfg: &EstimatorConfig) -> Result<BracketResult> {
    cfg.validate()?;
    let alpha_lower = scan_inf(theta, n, cfg, 0.5);
    let alpha_upper = scan_inf(theta, n, cfg, 2.0);
    Ok(BracketResult {
        alpha_lower,
        alpha_upper,
    })
}

/// `h_n(alpha; theta) = ((1+2a)/(n^{1/(1+2a)} log n)) sum_i n^2 i^{1+2a}
/// log(i) theta_i^2 / (i^{1+2a}+n)^2`.
pub fn h_n_diagnostic(theta: &TruthSequence, alpha: f64, n: f64) -> Result<f64> {
    if alpha <= 0.0 {
        return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
    }
    if n <= std::f64::consts::E {
        return Err(Error::Domain(format!("h_n needs n > e, got {n}")));
    }
    let mut sum = 0.0;
    for i in 2..=theta.support() {
        let p = index_power(i, alpha);
        let th = theta.coefficient(i);
        sum += n * n * p * (i as f64).ln() * th * th / ((p + n) * (p + n));
    }
    Ok((1.0 + 2.0 * alpha) / (n.powf(1.0 / (1.0 + 2.0 * alpha)) * n.ln()) * sum)
}

/// `Var(B-hat^2) = sum_{i<=k_n} (i^{1+2a}/(i^{1+2a}+n))^4 (4 theta_i^2/n +
/// 2/n^2)`, using the Gaussian identity for `Var(X_i^2)`.
pub fn bias_estimator_variance(theta: &TruthSequence, alpha: f64, n: f64, k_n: usize) -> f64 {
    let mut total = 0.0;
    for i in 1..=k_n {
        let p = index_power(i, alpha);
        let w = (p / (p + n)).powi(4);
        let th = theta.coefficient(i);
        total += w * (4.0 * th * th / n + 2.0 / (n * n));
    }
    total
}

const TAIL_TERM_CAP: usize = 10_000_000;

/// `exact = sum_{i>N} i^{-1-k} (log i)^m` (summed to relative threshold
/// 1e-16 or the term cap, with the remainder bounded by the integral test
/// and added in), and `bound = (1/N + 2/k)(log N)^m N^{-k}`; `exact <=
/// bound` for `N >= e^{2m/k}`.
pub fn tail_sum_bound(n_start: usize, k: f64, m: f64) -> Result<(f64, f64)> {
    if k <= 0.0 || m < 0.0 {
        return Err(Error::Domain(format!("need k > 0 and m >= 0, got k={k}, m={m}")));
    }
    if (n_start as f64) < (2.0 * m / k).exp() {
        return Err(Error::Domain(format!(
            "need N >= e^(2m/k); N={n_start}, e^(2m/k)={}",
            (2.0 * m / k).exp()
        )));
    }
    let term = |i: f64| i.powf(-1.0 - k) * i.ln().powf(m);
    let mut exact = 0.0;
    let mut i = n_start + 1;
    let mut stopped_at = None;
    while i <= n_start + TAIL_TERM_CAP {
        let t = term(i as f64);
        exact += t;
        if t < 1e-16 * exact {
            stopped_at = Some(i);
            break;
        }
        i += 1;
    }
    let last = stopped_at.unwrap_or(n_start + TAIL_TERM_CAP);
    // Integral-test remainder: sum_{i>last} <= int_last^inf x^{-1-k}(log
    // x)^m dx = Gamma(m+1, k log last) / k^{m+1} (upper incomplete gamma).
    let a = m + 1.0;
    let x = k * (last as f64).ln();
    exact += gamma(a) * gamma_ur(a, x) / k.powf(a);
    let nf = n_start as f64;
    let bound = (1.0 / nf + 2.0 / k) * nf.ln().powf(m) * nf.powf(-k);
    Ok((exact, bound))
}

/// Checks the four rate-shift inequalities for `f_n(a) = n^{-2a/(1+2a)}`:
/// `e^{2K/(1+4D)^2} f_n(a) <= f_n(a - K/log n) <= e^{2K/(1/2+2D)^2} f_n(a)`
/// and `e^{-2K/(1+2D)^2} f_n(a) <= f_n(a + K/log n) <= e^{-2K/(1+4D)^2}
/// f_n(a)`. The function's stated domain is `[D, 2D]`, so each pair is
/// checked only when the shifted point stays inside it; the upper bound of
/// the second pair is provably false for `a + K/log n > 2D` (the derivative
/// of `log f_n` is too small beyond `2D`), so the domain restriction is the
/// only consistent reading.
pub fn f_n_shift_bounds(alpha: f64, n: f64, big_k: f64, d: f64) -> Result<bool> {
    if big_k <= 0.0 || d <= 0.0 {
        return Err(Error::Domain("need K > 0 and D > 0".into()));
    }
    if !(d..=2.0 * d).contains(&alpha) {
        return Err(Error::Domain(format!("alpha={alpha} outside [D, 2D]=[{d}, {}]", 2.0 * d)));
    }
    if n < (big_k / 4.0).exp() {
        return Err(Error::Domain(format!(
            "need n >= e^(K/4); n={n}, e^(K/4)={}",
            (big_k / 4.0).exp()
        )));
    }
    let f = |a: f64| n.powf(-2.0 * a / (1.0 + 2.0 * a));
    let shift = big_k / n.ln();
    let fa = f(alpha);
    let tol = 1.0 + 1e-12;
    let left_ok = alpha - shift < d
        || ((2.0 * big_k / (1.0 + 4.0 * d).powi(2)).exp() * fa <= f(alpha - shift) * tol
            && f(alpha - shift) <= (2.0 * big_k / (0.5 + 2.0 * d).powi(2)).exp() * fa * tol);
    let right_ok = alpha + shift > 2.0 * d
        || ((-2.0 * big_k / (1.0 + 2.0 * d).powi(2)).exp() * fa <= f(alpha + shift) * tol
            && f(alpha + shift) <= (-2.0 * big_k / (1.0 + 4.0 * d).powi(2)).exp() * fa * tol);
    Ok(left_ok && right_ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence_model::{polynomial_truth, TruthSequence};
    use approx::assert_relative_eq;

    fn cfg() -> EstimatorConfig {
        EstimatorConfig::new(1.0, 1.0 / 3.0, 0.05).unwrap()
    }

    #[test]
    fn bracket_zero_truth_clamps() {
        let c = cfg();
        let n = 1e4;
        let z = TruthSequence::zero("z");
        let b = alpha_bracket(&z, n, &c).unwrap();
        let cap = risk_cap(&c, n);
        assert_relative_eq!(b.alpha_lower, cap);
        assert_relative_eq!(b.alpha_upper, cap);
    }

    #[test]
    fn bracket_ordered_on_truth_suite() {
        let mut c = cfg();
        c.c0_override = Some(0.0);
        for beta in [1.0, 1.5, 2.0] {
            let th = polynomial_truth(beta, 1.0, 512).unwrap();
            for n in [1e3, 1e4, 1e6] {
                let b = alpha_bracket(&th, n, &c).unwrap();
                assert!(b.alpha_lower <= b.alpha_upper + 1e-9, "beta={beta}, n={n}");
                assert!(b.alpha_lower >= c.d && b.alpha_upper <= 2.0 * c.d);
            }
        }
    }

    #[test]
    fn bracket_lower_bound_eq_53() {
        // alpha_lower > beta - [(1/2+beta) log(2M/C1^2) v C0] / log n.
        let mut c = cfg();
        c.c0_override = Some(0.0);
        let m = 1.0;
        for beta in [1.0f64, 1.5] {
            let th = polynomial_truth(beta, m, 512).unwrap();
            for n in [1e4f64, 1e6] {
                let b = alpha_bracket(&th, n, &c).unwrap();
                let slack = ((0.5 + beta) * (2.0 * m / (c.c1 * c.c1)).ln()).max(0.0) / n.ln();
                assert!(
                    b.alpha_lower > beta - slack,
                    "beta={beta}, n={n}: {} <= {}",
                    b.alpha_lower,
                    beta - slack
                );
            }
        }
    }

    #[test]
    fn h_n_trivial_cases() {
        let n = 100.0;
        assert_eq!(h_n_diagnostic(&TruthSequence::zero("z"), 1.0, n).unwrap(), 0.0);
        let e1 = TruthSequence::new(vec![1.0], "e1", None).unwrap();
        assert_eq!(h_n_diagnostic(&e1, 1.0, n).unwrap(), 0.0);
        assert!(h_n_diagnostic(&e1, 1.0, 2.0).is_err());
    }

    #[test]
    fn h_n_small_k_counterexample_below_sixteenth() {
        // With K shrunk enough, sup_{alpha <= 2D} h_{n_j} < 1/16 on the
        // schedule.
        let ce = crate::sequence_model::make_counterexample(
            1.2, 1e-3, 1.0, 2, 4096, 2.0, None,
        )
        .unwrap();
        for &nj in &ce.schedule {
            if (nj as f64) <= std::f64::consts::E {
                continue;
            }
            for j in 0..=40 {
                let alpha = 1.0 + j as f64 / 40.0;
                let h = h_n_diagnostic(&ce.truth, alpha, nj as f64).unwrap();
                assert!(h < 1.0 / 16.0, "n={nj}, alpha={alpha}: h={h}");
            }
        }
    }

    #[test]
    fn variance_single_term_hand_value() {
        // theta=0, k_n=1, n=1: weight (1/2)^4 = 1/16, v = 2 -> 1/8.
        let v = bias_estimator_variance(&TruthSequence::zero("z"), 1.0, 1.0, 1);
        assert_relative_eq!(v, 0.125, max_relative = 1e-12);
        assert!(v >= 0.0);
    }

    #[test]
    fn variance_matches_monte_carlo() {
        use crate::sequence_model::sample_observation;
        use crate::stream::StreamTag;
        let mut c = cfg();
        c.k_n_override = Some(16);
        let th = polynomial_truth(1.0, 1.0, 16).unwrap();
        let (n, alpha) = (20.0, 1.2);
        let reps = 100_000u64;
        let mut vals = Vec::with_capacity(reps as usize);
        for r in 0..reps {
            let x =
                sample_observation(&th, n, 16, &StreamTag::new(21, "bvar").with_replicate(r))
                    .unwrap();
            vals.push(crate::estimators::bias_estimator(&x, alpha, &c).unwrap());
        }
        let mean = vals.iter().sum::<f64>() / reps as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / reps as f64;
        let expect = bias_estimator_variance(&th, alpha, n, 16);
        assert_relative_eq!(var, expect, max_relative = 0.05);
    }

    #[test]
    fn tail_sum_pinned_values() {
        let (exact, bound) = tail_sum_bound(10, 1.0, 0.0).unwrap();
        // sum_{i>10} i^-2 = pi^2/6 - sum_{i<=10} i^-2 ~ 0.09516.
        assert_relative_eq!(exact, 0.09516, max_relative = 1e-3);
        assert_relative_eq!(bound, 0.21, max_relative = 1e-12);
        assert!(exact <= bound);

        let (_, bound) = tail_sum_bound(100, 2.0, 0.0).unwrap();
        assert_relative_eq!(bound, 1.01e-4, max_relative = 1e-12);
    }

    #[test]
    fn tail_sum_property_sweep() {
        for k in [0.5f64, 1.0, 2.0, 4.0] {
            for m in [0.0f64, 1.0, 2.0] {
                for n in [64usize, 256, 4096] {
                    if (n as f64) < (2.0 * m / k).exp() {
                        continue;
                    }
                    let (exact, bound) = tail_sum_bound(n, k, m).unwrap();
                    assert!(exact <= bound, "k={k}, m={m}, N={n}: {exact} > {bound}");
                }
            }
        }
    }

    #[test]
    fn tail_sum_domain_error() {
        assert!(tail_sum_bound(2, 0.5, 3.0).is_err());
        assert!(tail_sum_bound(10, 0.0, 0.0).is_err());
    }

    #[test]
    fn f_n_shift_examples() {
        assert!(f_n_shift_bounds(1.5, 1e4, 1.0, 1.0).unwrap());
        // K -> 0 limit: all factors -> 1.
        assert!(f_n_shift_bounds(1.2, 100.0, 1e-9, 1.0).unwrap());
        assert!(f_n_shift_bounds(1.0, 1.1, 40.0, 1.0).is_err());
    }

    #[test]
    fn f_n_shift_sweep() {
        for d in [0.5, 1.0] {
            for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let alpha = d + d * frac;
                for big_k in [0.1, 0.5, 1.0, 2.0] {
                    for n in [1e4, 1e6, 1e8] {
                        assert!(
                            f_n_shift_bounds(alpha, n, big_k, d).unwrap(),
                            "alpha={alpha}, K={big_k}, n={n}, D={d}"
                        );
                    }
                }
            }
        }
    }
}
