//! Config-driven experiment runs.
//!
//! A config names a problem, its input files, and a list of solver variants.
//! Running it solves the problem once per variant (once per frame for image
//! stacks), then writes traces, metrics and a summary under `output_dir`.
//! Relative paths are resolved against the directory holding the config.
//! Output files depend only on the config and inputs, not on the worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::data::{self, write_text, Localization, Rating, RatingsData};
use crate::bench::metrics::{match_sources, matcomp_rmse, predict_rating, sysid_score};
use crate::loss::SquaredLoss;
use crate::measure::{apply_forward, AtomicMeasure, Observation};
use crate::models::lti::LtiOracleParams;
use crate::models::superres::SuperresParams;
use crate::models::{LtiModel, MatCompModel, SuperresModel};
use crate::solver::{run_with_observer, SolveResult, SolverConfig, Variant};
use crate::{Error, Result};

/// Environment variable overriding the configured worker count.
pub const WORKERS_ENV: &str = "ADCG_WORKERS";

/// Default radii (nm) at which localizations are scored.
pub const DEFAULT_RADII_NM: [f64; 10] = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0];

/// Default stagewise threshold for image stacks, relative to the loss of the empty measure.
pub const DEFAULT_STAGEWISE_RELATIVE: f64 = 1e-4;

/// Mass bound multiplier for image stacks without an explicit `tau`.
pub const DEFAULT_TAU_FACTOR: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub solver: SolverSection,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Problem {
    Superres(SuperresProblem),
    Matcomp(MatcompProblem),
    Sysid(SysidProblem),
}

impl Problem {
    pub fn kind(&self) -> &'static str {
        match self {
            Problem::Superres(_) => "superres",
            Problem::Matcomp(_) => "matcomp",
            Problem::Sysid(_) => "sysid",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuperresProblem {
    pub frames: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    pub pixel_size: f64,
    pub sigma: f64,
    #[serde(default = "one")]
    pub lmo_grid_factor: usize,
    #[serde(default = "hundred")]
    pub lmo_polish_steps: usize,
    #[serde(default = "default_radii")]
    pub radii_nm: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatcompProblem {
    pub train: PathBuf,
    pub test: PathBuf,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SysidProblem {
    pub io: PathBuf,
    pub t_train: usize,
    #[serde(default)]
    pub oracle: LtiOracleParams,
}

fn one() -> usize {
    1
}

fn hundred() -> usize {
    100
}

fn default_radii() -> Vec<f64> {
    DEFAULT_RADII_NM.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub variants: Vec<Variant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default = "defaults::max_outer_iters")]
    pub max_outer_iters: usize,
    #[serde(default = "defaults::gap_tolerance")]
    pub gap_tolerance: f64,
    #[serde(default = "defaults::max_inner_passes")]
    pub max_inner_passes: usize,
    #[serde(default = "defaults::local_descent_steps")]
    pub local_descent_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stagewise_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stagewise_relative: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prune_tolerance: Option<f64>,
}

mod defaults {
    use crate::solver::SolverConfig;
    use crate::solver::Variant;

    fn base() -> SolverConfig {
        SolverConfig::new(Variant::Adcg, 1.0)
    }
    pub fn max_outer_iters() -> usize {
        base().max_outer_iters
    }
    pub fn gap_tolerance() -> f64 {
        base().gap_tolerance
    }
    pub fn max_inner_passes() -> usize {
        base().max_inner_passes
    }
    pub fn local_descent_steps() -> usize {
        base().local_descent_steps
    }
}

impl SolverSection {
    pub fn new(variants: Vec<Variant>) -> Self {
        SolverSection {
            variants,
            tau: None,
            max_outer_iters: defaults::max_outer_iters(),
            gap_tolerance: defaults::gap_tolerance(),
            max_inner_passes: defaults::max_inner_passes(),
            local_descent_steps: defaults::local_descent_steps(),
            stagewise_threshold: None,
            stagewise_relative: None,
            prune_tolerance: None,
        }
    }

    /// Solver settings for one run; `f0` is the loss of the empty measure.
    fn config_for(&self, variant: Variant, tau: f64, f0: f64) -> SolverConfig {
        let stagewise = match (self.stagewise_threshold, self.stagewise_relative) {
            (Some(a), Some(r)) => Some(a.max(r * f0)),
            (Some(a), None) => Some(a),
            (None, Some(r)) => Some(r * f0),
            (None, None) => None,
        };
        SolverConfig {
            variant,
            tau,
            max_outer_iters: self.max_outer_iters,
            gap_tolerance: self.gap_tolerance,
            max_inner_passes: self.max_inner_passes,
            local_descent_steps: self.local_descent_steps,
            stagewise_threshold: stagewise,
            prune_tolerance: self.prune_tolerance,
        }
    }
}

impl ExperimentConfig {
    /// Parses a JSON or TOML config, chosen by file extension (`.toml` or anything else).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: ExperimentConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.solver.variants.is_empty() {
            return Err(Error::Config("solver.variants must list at least one variant".into()));
        }
        let mut seen = Vec::new();
        for v in &self.solver.variants {
            if seen.contains(v) {
                return Err(Error::Config(format!("variant {v} listed twice")));
            }
            seen.push(*v);
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if let Some(r) = self.solver.stagewise_relative {
            if !(r >= 0.0) {
                return Err(Error::Config("stagewise_relative must be nonnegative".into()));
            }
        }
        match &self.problem {
            Problem::Superres(p) => {
                if p.radii_nm.iter().any(|r| !(*r >= 0.0)) {
                    return Err(Error::Config("radii_nm must be nonnegative".into()));
                }
            }
            Problem::Matcomp(_) | Problem::Sysid(_) => {
                if self.solver.tau.is_none() {
                    return Err(Error::Config(format!("solver.tau is required for {} problems", self.problem.kind())));
                }
            }
        }
        // Placeholder tau only exercises the shared checks.
        self.solver.config_for(Variant::Adcg, self.solver.tau.unwrap_or(1.0), 1.0).validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Per-variant outcome of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub runs: usize,
    pub mean_final_objective: f64,
    pub mean_final_gap: f64,
    pub mean_support: f64,
    pub total_iterations: usize,
    pub weight_solver_warning: bool,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub problem: String,
    pub output_dir: PathBuf,
    pub variants: Vec<VariantSummary>,
}

impl ExperimentSummary {
    /// Whether any run reported an ill-conditioned weight or support subproblem.
    pub fn has_warning(&self) -> bool {
        self.variants.iter().any(|v| v.weight_solver_warning)
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Worker count: the environment override, then the config, then the machine.
pub fn resolve_workers(config: &ExperimentConfig) -> Result<usize> {
    if let Ok(raw) = std::env::var(WORKERS_ENV) {
        return match raw.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {raw:?}"))),
        };
    }
    Ok(config
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())))
}

/// Loads and runs the config at `path`.
pub fn run_experiment(path: impl AsRef<Path>) -> Result<ExperimentSummary> {
    let path = path.as_ref();
    let config = ExperimentConfig::load(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let workers = resolve_workers(&config)?;
    run_config(&config, &base, workers)
}

/// Runs an already parsed config with paths relative to `base`.
pub fn run_config(config: &ExperimentConfig, base: &Path, workers: usize) -> Result<ExperimentSummary> {
    config.validate()?;
    let out = resolve(base, &config.output_dir);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    let variants = pool.install(|| match &config.problem {
        Problem::Superres(p) => run_superres(p, &config.solver, base, &out),
        Problem::Matcomp(p) => run_matcomp(p, &config.solver, config.seed, base, &out),
        Problem::Sysid(p) => run_sysid(p, &config.solver, base, &out),
    })?;

    let summary = ExperimentSummary { problem: config.problem.kind().into(), output_dir: out.clone(), variants };
    let mut metrics = String::from("variant,metric,value\n");
    for v in &summary.variants {
        for (name, value) in &v.metrics {
            let _ = writeln!(metrics, "{},{name},{value}", v.variant);
        }
    }
    write_text(&out.join("metrics.csv"), &metrics)?;
    let stored = ExperimentSummary { output_dir: config.output_dir.clone(), ..summary.clone() };
    write_text(&out.join("summary.json"), &(serde_json::to_string_pretty(&stored).expect("summary serializes") + "\n"))?;
    Ok(summary)
}

fn result_json(result: &SolveResult) -> String {
    serde_json::to_string_pretty(result).expect("result serializes") + "\n"
}

fn summarize(variant: Variant, results: &[&SolveResult], metrics: BTreeMap<String, f64>) -> VariantSummary {
    let n = results.len().max(1) as f64;
    VariantSummary {
        variant,
        runs: results.len(),
        mean_final_objective: results.iter().map(|r| r.final_objective()).sum::<f64>() / n,
        mean_final_gap: results.iter().map(|r| r.final_gap()).sum::<f64>() / n,
        mean_support: results.iter().map(|r| r.measure.len() as f64).sum::<f64>() / n,
        total_iterations: results.iter().map(|r| r.iterations).sum(),
        weight_solver_warning: results.iter().any(|r| r.weight_solver_warning),
        metrics,
    }
}

fn trace_rows(out: &mut String, prefix: &str, r: &SolveResult, extra: &[f64]) {
    for j in 0..r.objective_trace.len() {
        let _ = write!(out, "{prefix}{j},{},{},{}", r.objective_trace[j], r.gap_trace[j], r.support_trace[j]);
        if let Some(x) = extra.get(j) {
            let _ = write!(out, ",{x}");
        }
        out.push('\n');
    }
}

fn run_superres(p: &SuperresProblem, solver: &SolverSection, base: &Path, out: &Path) -> Result<Vec<VariantSummary>> {
    let stack = data::load_frames(resolve(base, &p.frames))?;
    let truth = match &p.truth {
        Some(t) => Some(data::load_localizations(resolve(base, t), Some(stack.frames.len()))?),
        None => None,
    };
    let model = SuperresModel::from_params(SuperresParams {
        grid_w: stack.grid_w,
        grid_h: stack.grid_h,
        pixel_size: p.pixel_size,
        sigma: p.sigma,
        lmo_grid_factor: p.lmo_grid_factor,
        lmo_polish_steps: p.lmo_polish_steps,
    })?;
    let stagewise_default = solver.tau.is_none() && solver.stagewise_threshold.is_none() && solver.stagewise_relative.is_none();

    let mut summaries = Vec::new();
    for &variant in &solver.variants {
        let results: Vec<SolveResult> = stack
            .frames
            .par_iter()
            .map(|image| {
                let obs = Observation::new(image.clone());
                let f0 = 0.5 * image.iter().map(|y| y * y).sum::<f64>();
                let tau = solver.tau.unwrap_or_else(|| DEFAULT_TAU_FACTOR * image.iter().map(|y| y.abs()).sum::<f64>());
                let mut cfg = solver.config_for(variant, tau.max(f64::MIN_POSITIVE), f0);
                if stagewise_default {
                    cfg.stagewise_threshold = Some(DEFAULT_STAGEWISE_RELATIVE * f0);
                }
                run_with_observer(&model, &obs, &SquaredLoss, &cfg, &mut |_, _| {})
            })
            .collect::<Result<_>>()?;

        let dir = out.join(variant.name());
        let estimates: Vec<Vec<Localization>> = results
            .iter()
            .map(|r| {
                r.measure
                    .atoms
                    .iter()
                    .map(|a| Localization { x: a.theta[0], y: a.theta[1], intensity: a.w })
                    .collect()
            })
            .collect();
        data::write_localizations(dir.join("estimates.csv"), &estimates)?;
        let mut traces = String::from("frame,iteration,objective,gap,support\n");
        for (f, r) in results.iter().enumerate() {
            write_text(&dir.join("runs").join(format!("frame_{f:04}.json")), &result_json(r))?;
            trace_rows(&mut traces, &format!("{f},"), r, &[]);
        }
        write_text(&dir.join("traces.csv"), &traces)?;

        let mut metrics = BTreeMap::new();
        if let Some(truth) = &truth {
            let mut table = String::from("radius_nm,precision,recall,f1\n");
            for &radius in &p.radii_nm {
                let scores: Vec<_> =
                    estimates.iter().zip(truth).map(|(e, t)| match_sources(e, t, radius)).collect();
                let n = scores.len().max(1) as f64;
                let precision = scores.iter().map(|s| s.precision).sum::<f64>() / n;
                let recall = scores.iter().map(|s| s.recall).sum::<f64>() / n;
                let f1 = scores.iter().map(|s| s.f1).sum::<f64>() / n;
                let _ = writeln!(table, "{radius},{precision},{recall},{f1}");
                metrics.insert(format!("f1@{radius}nm"), f1);
            }
            write_text(&dir.join("metrics.csv"), &table)?;
        }
        let refs: Vec<&SolveResult> = results.iter().collect();
        summaries.push(summarize(variant, &refs, metrics));
    }
    Ok(summaries)
}

fn run_matcomp(
    p: &MatcompProblem,
    solver: &SolverSection,
    seed: u64,
    base: &Path,
    out: &Path,
) -> Result<Vec<VariantSummary>> {
    let train = data::load_ratings(resolve(base, &p.train))?;
    let test = data::load_ratings(resolve(base, &p.test))?;
    let ratings = RatingsData::new(p.rows, p.cols, train, test)?;
    let model = MatCompModel::new(p.rows, p.cols, ratings.omega(), seed)?;
    let y = ratings.centered();
    let f0 = 0.5 * y.iter().map(|v| v * v).sum::<f64>();
    let obs = Observation::new(y);
    let tau = solver.tau.expect("validated");

    let results: Vec<(SolveResult, Vec<f64>)> = solver
        .variants
        .par_iter()
        .map(|&variant| {
            let mut rmse_trace = Vec::new();
            let mut observe = |_: usize, mu: &AtomicMeasure| {
                rmse_trace.push(matcomp_rmse(mu, p.rows, &ratings.test, ratings.train_mean).unwrap_or(f64::NAN));
            };
            let r = run_with_observer(&model, &obs, &SquaredLoss, &solver.config_for(variant, tau, f0), &mut observe)?;
            Ok((r, rmse_trace))
        })
        .collect::<Result<_>>()?;

    let mut summaries = Vec::new();
    for (r, rmse_trace) in &results {
        let dir = out.join(r.variant.name());
        write_text(&dir.join("result.json"), &result_json(r))?;
        let mut traces = String::from("iteration,objective,gap,support,rmse\n");
        trace_rows(&mut traces, "", r, rmse_trace);
        write_text(&dir.join("traces.csv"), &traces)?;
        let predictions: Vec<Rating> = ratings
            .test
            .iter()
            .map(|t| Rating { rating: predict_rating(&r.measure, p.rows, ratings.train_mean, t.user, t.item), ..*t })
            .collect();
        data::write_ratings(dir.join("predictions.csv"), &predictions)?;
        let mut metrics = BTreeMap::new();
        if !ratings.test.is_empty() {
            metrics.insert("rmse".into(), matcomp_rmse(&r.measure, p.rows, &ratings.test, ratings.train_mean)?);
        }
        summaries.push(summarize(r.variant, &[r], metrics));
    }
    Ok(summaries)
}

fn run_sysid(p: &SysidProblem, solver: &SolverSection, base: &Path, out: &Path) -> Result<Vec<VariantSummary>> {
    let io = data::load_io(resolve(base, &p.io), p.t_train)?;
    let model = LtiModel::with_oracle(io.train_input().to_vec(), p.oracle.clone())?;
    let full = model.with_input(io.u.clone())?;
    let obs = Observation::new(io.train_output().to_vec());
    let f0 = 0.5 * obs.y.iter().map(|v| v * v).sum::<f64>();
    let tau = solver.tau.expect("validated");
    let predict = |mu: &AtomicMeasure| -> Result<Vec<f64>> { Ok(apply_forward(&full, mu)?[io.t_train..].to_vec()) };

    let results: Vec<(SolveResult, Vec<f64>)> = solver
        .variants
        .par_iter()
        .map(|&variant| {
            let mut score_trace = Vec::new();
            let mut observe = |_: usize, mu: &AtomicMeasure| {
                let s = predict(mu).and_then(|pred| sysid_score(&pred, io.test_output()));
                score_trace.push(s.unwrap_or(f64::NAN));
            };
            let r = run_with_observer(&model, &obs, &SquaredLoss, &solver.config_for(variant, tau, f0), &mut observe)?;
            Ok((r, score_trace))
        })
        .collect::<Result<_>>()?;

    let mut summaries = Vec::new();
    for (r, score_trace) in &results {
        let dir = out.join(r.variant.name());
        write_text(&dir.join("result.json"), &result_json(r))?;
        let mut traces = String::from("iteration,objective,gap,support,score\n");
        trace_rows(&mut traces, "", r, score_trace);
        write_text(&dir.join("traces.csv"), &traces)?;
        let pred = predict(&r.measure)?;
        let mut table = String::from("t,y_pred,y\n");
        for (k, (a, b)) in pred.iter().zip(io.test_output()).enumerate() {
            let _ = writeln!(table, "{},{a},{b}", io.t_train + k);
        }
        write_text(&dir.join("predictions.csv"), &table)?;
        let mut metrics = BTreeMap::new();
        metrics.insert("score".into(), sysid_score(&pred, io.test_output())?);
        summaries.push(summarize(r.variant, &[r], metrics));
    }
    Ok(summaries)
}
