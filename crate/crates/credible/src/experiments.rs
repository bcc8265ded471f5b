//! Monte-Carlo coverage/size harness and figure reproduction: the
//! operational surface behind the CLI.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::credible_sets::{
    contains, eb_credible_ball, fixed_alpha_ball, hier_credible_ball, risk_credible_ball,
    CredibleBall, RadiusSettings,
};
use crate::error::{Error, Result};
use crate::estimators::EstimatorConfig;
use crate::hierarchical::{run_mcmc, HyperPrior, McmcConfig};
use crate::radius::RadiusMethod;
use crate::sequence_model::{
    coefficient_function_values, make_counterexample, make_sim_truth_capped, sample_observation,
    truth_function_values, Observation, TruthSequence, SIM_TRUTH_DEFAULT_CAP,
};
use crate::stream::StreamTag;

/// Hard cap on per-observation coefficients; beyond this the run is refused
/// rather than thrashing.
const TRUNCATION_BUDGET: usize = 50_000_000;

/// Named truth builders mirrored in the JSON config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum TruthSpec {
    Zero,
    SimTruth {
        #[serde(default)]
        cap: Option<usize>,
    },
    Counterexample {
        beta: f64,
        k: f64,
        blocks: usize,
        #[serde(default)]
        c_grow: Option<f64>,
        /// `(beta', M)`: scale K down until the truth fits in `S^{beta'}(M)`.
        #[serde(default)]
        sobolev_target: Option<(f64, f64)>,
    },
    Polynomial {
        beta: f64,
        m: f64,
        support: usize,
    },
    Block {
        beta: f64,
        m: f64,
        start: usize,
    },
}

impl TruthSpec {
    pub fn build(&self, d: f64) -> Result<TruthSequence> {
        match self {
            TruthSpec::Zero => Ok(TruthSequence::zero("zero")),
            TruthSpec::SimTruth { cap } => {
                Ok(make_sim_truth_capped(cap.unwrap_or(SIM_TRUTH_DEFAULT_CAP)))
            }
            TruthSpec::Counterexample {
                beta,
                k,
                blocks,
                c_grow,
                sobolev_target,
            } => {
                let ce = make_counterexample(
                    *beta,
                    *k,
                    d,
                    *blocks,
                    TRUNCATION_BUDGET,
                    c_grow.unwrap_or(2.0),
                    *sobolev_target,
                )?;
                Ok(ce.truth)
            }
            TruthSpec::Polynomial { beta, m, support } => {
                crate::sequence_model::polynomial_truth(*beta, *m, *support)
            }
            TruthSpec::Block { beta, m, start } => {
                crate::sequence_model::block_truth(*beta, *m, *start)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum MethodSpec {
    EbMle,
    Hierarchical,
    EbRisk,
    FixedAlpha { alpha: f64 },
}

impl MethodSpec {
    pub fn label(&self) -> &'static str {
        match self {
            MethodSpec::EbMle => "eb_mle",
            MethodSpec::Hierarchical => "hierarchical",
            MethodSpec::EbRisk => "eb_risk",
            MethodSpec::FixedAlpha { .. } => "fixed_alpha",
        }
    }
}

fn default_gamma() -> f64 {
    0.05
}
fn default_l() -> f64 {
    1.0
}
fn default_d() -> f64 {
    1.0
}
fn default_c1() -> f64 {
    1.0 / 3.0
}
fn default_m() -> f64 {
    1.0
}
fn default_replicates() -> usize {
    200
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub truth_spec: TruthSpec,
    pub method: MethodSpec,
    pub n_list: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_l")]
    pub l: f64,
    #[serde(default = "default_d")]
    pub d: f64,
    #[serde(default = "default_c1")]
    pub c1: f64,
    #[serde(default)]
    pub c0_override: Option<f64>,
    #[serde(default = "default_m")]
    pub m: f64,
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.n_list.is_empty() {
            return Err(Error::Config("n_list must be nonempty".into()));
        }
        if self.n_list.iter().any(|&n| n <= 0.0 || !n.is_finite()) {
            return Err(Error::Config("all n must be positive and finite".into()));
        }
        self.estimator_config()?;
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must be in (0,1), got {}", self.gamma)));
        }
        if self.l <= 0.0 || self.m <= 0.0 {
            return Err(Error::Config("L and M must be positive".into()));
        }
        Ok(())
    }

    pub fn estimator_config(&self) -> Result<EstimatorConfig> {
        let mut cfg = EstimatorConfig::new(self.d, self.c1, self.gamma)?;
        cfg.c0_override = self.c0_override;
        Ok(cfg)
    }
}

/// Observation truncation for a noise level: covers `k_n`, the posterior's
/// effective dimension, and the truth's represented support.
pub fn observation_truncation(n: f64, d: f64, truth_support: usize) -> Result<usize> {
    let dim = 4.0 * (n.powf(1.0 / (1.0 + 2.0 * d))).ceil();
    let k_n = n.powf(2.0 / (1.0 + 4.0 * d)).ceil();
    let trunc = 4096usize
        .max(dim as usize)
        .max(k_n as usize)
        .max(truth_support);
    if trunc > TRUNCATION_BUDGET {
        return Err(Error::Resource(format!(
            "n={n} needs truncation {trunc} beyond the budget {TRUNCATION_BUDGET}"
        )));
    }
    Ok(trunc)
}

#[derive(Debug, Clone)]
pub struct CoverageRow {
    pub n: f64,
    pub replicate: u64,
    pub hit: bool,
    pub distance: f64,
    pub effective_radius: f64,
    pub alpha_used: f64,
    pub seed_tag: String,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone)]
pub struct CoverageAggregate {
    pub n: f64,
    pub replicates: usize,
    pub coverage: f64,
    /// Exact binomial standard error `sqrt(p(1-p)/R)`.
    pub coverage_se: f64,
    pub mean_radius: f64,
    pub median_radius: f64,
}

#[derive(Debug, Clone)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
    pub aggregates: Vec<CoverageAggregate>,
}

fn build_ball(
    cfg: &ExperimentConfig,
    est: &EstimatorConfig,
    x: &Observation,
    radius_tag: StreamTag,
) -> Result<CredibleBall> {
    // The fast deterministic radius; the Monte-Carlo path is exercised by
    // the `radius` CLI and the test suite.
    let replicate = radius_tag.replicate;
    let rs = RadiusSettings {
        method: RadiusMethod::CumulantApprox,
        mc_draws: crate::radius::DEFAULT_MC_DRAWS,
        tag: radius_tag,
    };
    match &cfg.method {
        MethodSpec::EbMle => eb_credible_ball(x, est, cfg.gamma, cfg.l, &rs),
        MethodSpec::EbRisk => risk_credible_ball(x, est, cfg.gamma, cfg.l, &rs),
        MethodSpec::FixedAlpha { alpha } => fixed_alpha_ball(x, *alpha, cfg.gamma, cfg.l, &rs),
        MethodSpec::Hierarchical => {
            let mcfg = McmcConfig::new(
                cfg.d,
                x.n,
                StreamTag::new(cfg.master_seed, "mcmc")
                    .with_n(x.n)
                    .with_replicate(replicate),
            );
            let chain = run_mcmc(x, &HyperPrior::Uniform, &mcfg)?;
            hier_credible_ball(&chain, cfg.gamma, cfg.l, x.n)
        }
    }
}

/// Runs the configured method against the configured truth over
/// `n_list x replicates`; rows are derived from per-replicate streams, so
/// the result is a pure function of the config and master seed.
pub fn coverage_experiment(cfg: &ExperimentConfig) -> Result<CoverageReport> {
    cfg.validate()?;
    let est = cfg.estimator_config()?;
    let truth = cfg.truth_spec.build(cfg.d)?;
    let mut rows: Vec<CoverageRow> = Vec::with_capacity(cfg.n_list.len() * cfg.replicates);
    for &n in &cfg.n_list {
        let trunc = observation_truncation(n, cfg.d, truth.support())?;
        let mut batch: Vec<CoverageRow> = (0..cfg.replicates as u64)
            .into_par_iter()
            .map(|r| -> Result<CoverageRow> {
                let started = std::time::Instant::now();
                let obs_tag = StreamTag::new(cfg.master_seed, "obs")
                    .with_n(n)
                    .with_replicate(r);
                let x = sample_observation(&truth, n, trunc, &obs_tag)?;
                let radius_tag = StreamTag::new(cfg.master_seed, "radius")
                    .with_n(n)
                    .with_replicate(r);
                let ball = build_ball(cfg, &est, &x, radius_tag)?;
                let (hit, distance) = contains(&ball, &truth);
                Ok(CoverageRow {
                    n,
                    replicate: r,
                    hit,
                    distance,
                    effective_radius: ball.effective_radius(),
                    alpha_used: ball.alpha_used.unwrap_or(f64::NAN),
                    seed_tag: obs_tag.label(),
                    wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        batch.sort_by_key(|row| row.replicate);
        rows.extend(batch);
    }
    let aggregates = aggregate(&rows, &cfg.n_list);
    Ok(CoverageReport { rows, aggregates })
}

/// Order-independent reduction of rows into per-n aggregates.
pub fn aggregate(rows: &[CoverageRow], n_list: &[f64]) -> Vec<CoverageAggregate> {
    n_list
        .iter()
        .map(|&n| {
            let sub: Vec<&CoverageRow> = rows.iter().filter(|r| r.n == n).collect();
            let reps = sub.len();
            let hits = sub.iter().filter(|r| r.hit).count();
            let p = if reps == 0 { 0.0 } else { hits as f64 / reps as f64 };
            let mut radii: Vec<f64> = sub.iter().map(|r| r.effective_radius).collect();
            radii.sort_by(|a, b| a.total_cmp(b));
            let mean_radius = if reps == 0 {
                0.0
            } else {
                radii.iter().sum::<f64>() / reps as f64
            };
            let median_radius = if reps == 0 { 0.0 } else { radii[reps / 2] };
            CoverageAggregate {
                n,
                replicates: reps,
                coverage: p,
                coverage_se: if reps == 0 {
                    0.0
                } else {
                    (p * (1.0 - p) / reps as f64).sqrt()
                },
                mean_radius,
                median_radius,
            }
        })
        .collect()
}

pub fn write_coverage_csv<W: Write>(report: &CoverageReport, mut w: W) -> Result<()> {
    writeln!(w, "n,replicate,hit,distance,effective_radius,alpha_used,seed_tag")?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.n,
            r.replicate,
            if r.hit { 1 } else { 0 },
            r.distance,
            r.effective_radius,
            r.alpha_used,
            r.seed_tag
        )?;
    }
    Ok(())
}

/// Estimator diagnostics CSV under the header `alpha,value,threshold`.
pub fn write_diagnostics_csv<W: Write>(
    points: &[crate::estimators::GridPoint],
    mut w: W,
) -> Result<()> {
    writeln!(w, "alpha,value,threshold")?;
    for p in points {
        let thr = p.threshold.map_or_else(String::new, |t| format!("{t}"));
        writeln!(w, "{},{},{}", p.alpha, p.value, thr)?;
    }
    Ok(())
}

/// One reconstructed panel: truth, center and draw envelope on a t-grid.
#[derive(Debug, Clone)]
pub struct FigurePanel {
    pub method: String,
    pub n: f64,
    pub t: Vec<f64>,
    pub truth: Vec<f64>,
    pub center: Vec<f64>,
    pub env_lo: Vec<f64>,
    pub env_hi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureConfig {
    #[serde(default = "default_fig_n_list")]
    pub n_list: Vec<f64>,
    #[serde(default = "default_fig_methods")]
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_window")]
    pub t_window: (f64, f64),
    #[serde(default = "default_t_points")]
    pub t_points: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_l")]
    pub l: f64,
    #[serde(default = "default_d")]
    pub d: f64,
    #[serde(default = "default_c1")]
    pub c1: f64,
    /// The simulation study forces C0 to zero.
    #[serde(default = "default_fig_c0")]
    pub c0_override: Option<f64>,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_fig_draws")]
    pub draws: usize,
}

fn default_fig_n_list() -> Vec<f64> {
    vec![1e2, 1e4, 1e5, 1e6, 5e6]
}
fn default_fig_methods() -> Vec<MethodSpec> {
    vec![MethodSpec::EbMle, MethodSpec::Hierarchical, MethodSpec::EbRisk]
}
fn default_window() -> (f64, f64) {
    (0.3, 0.35)
}
fn default_t_points() -> usize {
    512
}
fn default_fig_c0() -> Option<f64> {
    Some(0.0)
}
fn default_fig_draws() -> usize {
    800
}

/// Retains the `(1-gamma)` fraction of draws closest to the center and maps
/// them through the cosine basis; the envelope is the pointwise min/max.
fn envelope(
    draws: &[Vec<f64>],
    center: &[f64],
    gamma: f64,
    t_grid: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut order: Vec<(f64, usize)> = draws
        .iter()
        .enumerate()
        .map(|(j, d)| {
            let dist2: f64 = d
                .iter()
                .zip(center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (dist2, j)
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let keep = (((1.0 - gamma) * draws.len() as f64).ceil() as usize).clamp(1, draws.len());
    let mut lo = vec![f64::INFINITY; t_grid.len()];
    let mut hi = vec![f64::NEG_INFINITY; t_grid.len()];
    for &(_, j) in order.iter().take(keep) {
        let vals = coefficient_function_values(&draws[j], t_grid);
        for (k, v) in vals.into_iter().enumerate() {
            lo[k] = lo[k].min(v);
            hi[k] = hi[k].max(v);
        }
    }
    (lo, hi)
}

pub fn figure_panel(cfg: &FigureConfig, method: &MethodSpec, n: f64) -> Result<FigurePanel> {
    let truth = make_sim_truth_capped(SIM_TRUTH_DEFAULT_CAP);
    let mut est = EstimatorConfig::new(cfg.d, cfg.c1, cfg.gamma)?;
    est.c0_override = cfg.c0_override;
    let trunc = observation_truncation(n, cfg.d, truth.support())?;
    let x = sample_observation(
        &truth,
        n,
        trunc,
        &StreamTag::new(cfg.master_seed, "fig-obs").with_n(n),
    )?;
    let t_grid: Vec<f64> = (0..cfg.t_points)
        .map(|j| {
            cfg.t_window.0
                + (cfg.t_window.1 - cfg.t_window.0) * j as f64 / (cfg.t_points - 1) as f64
        })
        .collect();

    let (center_coeffs, draws) = match method {
        MethodSpec::Hierarchical => {
            let mcfg = McmcConfig::new(
                cfg.d,
                n,
                StreamTag::new(cfg.master_seed, "fig-mcmc").with_n(n),
            );
            let chain = run_mcmc(&x, &HyperPrior::Uniform, &mcfg)?;
            let center = crate::hierarchical::hier_posterior_mean(&chain);
            (center, chain.theta_draws)
        }
        other => {
            let alpha = match other {
                MethodSpec::EbMle => crate::estimators::mle_alpha(&x, &est)?.alpha,
                MethodSpec::EbRisk => crate::estimators::risk_alpha(&x, &est)?.alpha,
                MethodSpec::FixedAlpha { alpha } => *alpha,
                MethodSpec::Hierarchical => unreachable!(),
            };
            let post = crate::conjugate::posterior_params(&x, alpha)?;
            let draws = crate::conjugate::sample_posterior(
                &post,
                cfg.draws,
                &StreamTag::new(cfg.master_seed, "fig-draws").with_n(n),
            )?;
            (post.means, draws)
        }
    };
    let (env_lo, env_hi) = envelope(&draws, &center_coeffs[..draws[0].len().min(center_coeffs.len())], cfg.gamma, &t_grid);
    Ok(FigurePanel {
        method: method.label().to_owned(),
        n,
        truth: truth_function_values(&truth, &t_grid),
        center: coefficient_function_values(&center_coeffs, &t_grid),
        env_lo,
        env_hi,
        t: t_grid,
    })
}

pub fn write_panel_csv<W: Write>(panel: &FigurePanel, mut w: W) -> Result<()> {
    writeln!(w, "t,truth,center,env_lo,env_hi")?;
    for k in 0..panel.t.len() {
        writeln!(
            w,
            "{},{},{},{},{}",
            panel.t[k], panel.truth[k], panel.center[k], panel.env_lo[k], panel.env_hi[k]
        )?;
    }
    Ok(())
}

/// Minimal hand-rolled SVG: one strip per panel, truth in black, center
/// dashed, envelope as a grey band.
pub fn write_figure_svg<W: Write>(panels: &[FigurePanel], mut w: W) -> Result<()> {
    let (pw, ph, pad) = (640.0, 160.0, 20.0);
    let height = panels.len() as f64 * (ph + pad) + pad;
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}">"#,
        pw + 2.0 * pad,
        height
    )?;
    for (pi, p) in panels.iter().enumerate() {
        let y0 = pad + pi as f64 * (ph + pad);
        let (tmin, tmax) = (p.t[0], *p.t.last().unwrap());
        let vmin = p
            .env_lo
            .iter()
            .chain(&p.truth)
            .fold(f64::INFINITY, |a, &b| a.min(b));
        let vmax = p
            .env_hi
            .iter()
            .chain(&p.truth)
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let span = (vmax - vmin).max(1e-12);
        let sx = |t: f64| pad + (t - tmin) / (tmax - tmin) * pw;
        let sy = |v: f64| y0 + ph - (v - vmin) / span * ph;
        let path = |vals: &[f64]| {
            let mut s = String::new();
            for (k, &v) in vals.iter().enumerate() {
                s.push(if k == 0 { 'M' } else { 'L' });
                s.push_str(&format!("{:.2} {:.2} ", sx(p.t[k]), sy(v)));
            }
            s
        };
        // Envelope band: upper path forward, lower path reversed.
        let mut band = path(&p.env_hi);
        for k in (0..p.t.len()).rev() {
            band.push_str(&format!("L{:.2} {:.2} ", sx(p.t[k]), sy(p.env_lo[k])));
        }
        band.push('Z');
        writeln!(w, r##"<path d="{band}" fill="#cccccc" stroke="none"/>"##)?;
        writeln!(
            w,
            r##"<path d="{}" fill="none" stroke="#000000" stroke-width="1"/>"##,
            path(&p.truth)
        )?;
        writeln!(
            w,
            r##"<path d="{}" fill="none" stroke="#cc0000" stroke-width="1" stroke-dasharray="4 2"/>"##,
            path(&p.center)
        )?;
        writeln!(
            w,
            r#"<text x="{}" y="{}" font-size="12">{} n={}</text>"#,
            pad + 4.0,
            y0 + 14.0,
            p.method,
            p.n
        )?;
    }
    writeln!(w, "</svg>")?;
    Ok(())
}

/// Runs every (method, n) panel, writing one CSV per panel and one SVG per
/// method; returns the written paths.
pub fn reproduce_figures(cfg: &FigureConfig) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let mut written = Vec::new();
    for method in &cfg.methods {
        let mut panels = Vec::new();
        for &n in &cfg.n_list {
            let panel = figure_panel(cfg, method, n)?;
            let csv_path = cfg
                .output_dir
                .join(format!("fig_{}_n{}.csv", panel.method, n));
            let mut f = std::fs::File::create(&csv_path)?;
            write_panel_csv(&panel, &mut f)?;
            written.push(csv_path);
            panels.push(panel);
        }
        let svg_path = cfg.output_dir.join(format!("fig_{}.svg", method.label()));
        let mut f = std::fs::File::create(&svg_path)?;
        write_figure_svg(&panels, &mut f)?;
        written.push(svg_path);
    }
    Ok(written)
}

pub fn load_experiment_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{path:?}: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_figure_config(path: &Path) -> Result<FigureConfig> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{path:?}: {e}")))
}

/// Applies the `HONEST_CREDIBLE_THREADS` cap; call once at process start.
pub fn init_thread_pool() {
    if let Ok(v) = std::env::var("HONEST_CREDIBLE_THREADS") {
        if let Ok(threads) = v.parse::<usize>() {
            if threads >= 1 {
                // Ignore the error if a pool already exists.
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}
