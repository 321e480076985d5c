//! Outer loops over atomic measures: the fully-corrective conditional
//! gradient method (CGM-M), alternating descent CGM (ADCG) and a
//! gradient-flow baseline (GF).
//!
//! Every outer iteration computes the loss gradient at the current
//! residual, asks the model's linear minimization oracle for the next
//! source, records the Frank-Wolfe gap of the current iterate and then
//! improves the iterate with the variant-specific step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::fcstep::{solve_weights, WeightProblem};
use crate::loss::Loss;
use crate::measure::{
    apply_forward, caratheodory_prune, forward_matrix, merge_duplicates, normalized_distance, prune_zero_weights,
    AtomicMeasure, Observation, ParameterPoint,
};
use crate::util::{dot, norm2};
use crate::{Error, Result};

/// Merge radius in box-normalized coordinates.
pub const MERGE_TOLERANCE: f64 = 1e-12;
/// ADCG inner loop stops once a pass improves the objective by less than this, relatively.
pub const INNER_RELATIVE_DECREASE: f64 = 1e-6;

const ARMIJO_SLOPE: f64 = 1e-4;
const ARMIJO_SHRINK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;

/// A differentiable measurement model with a linear minimization oracle.
///
/// Implementations must be safe to call concurrently.
pub trait ForwardModel: Send + Sync {
    /// Length `d` of a measurement.
    fn output_dim(&self) -> usize;

    /// Length `p` of a parameter point.
    fn param_dim(&self) -> usize;

    /// Closed interval per parameter coordinate.
    fn bounds(&self) -> &[(f64, f64)];

    fn psi(&self, theta: &[f64]) -> Vec<f64>;

    /// d x p matrix of partial derivatives of `psi`.
    fn jacobian(&self, theta: &[f64]) -> DMatrix<f64>;

    /// Whether `jvp` and `vjp` are much cheaper than forming the Jacobian.
    fn sparse_jacobian(&self) -> bool {
        false
    }

    /// `J(theta) dtheta`. Override when the Jacobian is sparse or structured.
    fn jvp(&self, theta: &[f64], dtheta: &[f64]) -> Vec<f64> {
        (self.jacobian(theta) * DVector::from_column_slice(dtheta)).as_slice().to_vec()
    }

    /// `J(theta)^T u`, the gradient of `theta -> <psi(theta), u>`.
    fn vjp(&self, theta: &[f64], u: &[f64]) -> Vec<f64> {
        self.jacobian(theta).tr_mul(&DVector::from_column_slice(u)).as_slice().to_vec()
    }

    /// Approximate minimizer of `<psi(theta), v>` over the parameter space.
    fn lmo(&self, v: &[f64]) -> ParameterPoint;

    /// Whether `lmo` returns a global minimizer.
    fn lmo_is_exact(&self) -> bool {
        false
    }

    /// Validates length and feasibility of a parameter point.
    fn check_point(&self, theta: &[f64]) -> Result<()> {
        check_in_box(self.bounds(), theta)
    }

    /// Search direction for a descent step from `theta` given the Euclidean
    /// gradient. Box models use the gradient itself.
    fn descent_direction(&self, _theta: &[f64], grad: &[f64]) -> Vec<f64> {
        grad.to_vec()
    }

    /// Maps a trial point back onto the parameter space.
    fn retract(&self, theta: &[f64]) -> Vec<f64> {
        project_box(self.bounds(), theta)
    }
}

pub fn check_in_box(bounds: &[(f64, f64)], theta: &[f64]) -> Result<()> {
    if theta.len() != bounds.len() {
        return Err(Error::DimensionMismatch { expected: bounds.len(), got: theta.len() });
    }
    for (index, (&value, &(lo, hi))) in theta.iter().zip(bounds).enumerate() {
        let slack = 1e-9 * (1.0 + (hi - lo).abs());
        if !(value >= lo - slack && value <= hi + slack) {
            return Err(Error::OutOfBounds { index, value, lo, hi });
        }
    }
    Ok(())
}

pub fn project_box(bounds: &[(f64, f64)], theta: &[f64]) -> Vec<f64> {
    theta.iter().zip(bounds).map(|(x, (lo, hi))| x.clamp(*lo, *hi)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "CGM_M", alias = "cgm_m", alias = "CGM-M")]
    CgmM,
    #[serde(rename = "ADCG", alias = "adcg")]
    Adcg,
    #[serde(rename = "GF", alias = "gf")]
    Gf,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::CgmM => "CGM_M",
            Variant::Adcg => "ADCG",
            Variant::Gf => "GF",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "CGM_M" => Ok(Variant::CgmM),
            "ADCG" => Ok(Variant::Adcg),
            "GF" => Ok(Variant::Gf),
            other => Err(Error::InvalidInput(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub variant: Variant,
    pub tau: f64,
    #[serde(default = "defaults::max_outer_iters")]
    pub max_outer_iters: usize,
    #[serde(default = "defaults::gap_tolerance")]
    pub gap_tolerance: f64,
    #[serde(default = "defaults::max_inner_passes")]
    pub max_inner_passes: usize,
    #[serde(default = "defaults::local_descent_steps")]
    pub local_descent_steps: usize,
    /// Stop once adding a source lowers the objective by less than this.
    #[serde(default)]
    pub stagewise_threshold: Option<f64>,
    /// Weights at or below this are pruned; defaults to `1e-7 * tau`.
    #[serde(default)]
    pub prune_tolerance: Option<f64>,
}

mod defaults {
    pub fn max_outer_iters() -> usize {
        50
    }
    pub fn gap_tolerance() -> f64 {
        1e-6
    }
    pub fn max_inner_passes() -> usize {
        50
    }
    pub fn local_descent_steps() -> usize {
        20
    }
}

impl SolverConfig {
    pub fn new(variant: Variant, tau: f64) -> Self {
        SolverConfig {
            variant,
            tau,
            max_outer_iters: defaults::max_outer_iters(),
            gap_tolerance: defaults::gap_tolerance(),
            max_inner_passes: defaults::max_inner_passes(),
            local_descent_steps: defaults::local_descent_steps(),
            stagewise_threshold: None,
            prune_tolerance: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if self.max_outer_iters < 1 || self.max_inner_passes < 1 || self.local_descent_steps < 1 {
            return Err(Error::Config("iteration caps must be at least 1".into()));
        }
        if !(self.gap_tolerance >= 0.0) {
            return Err(Error::Config("gap_tolerance must be nonnegative".into()));
        }
        if let Some(t) = self.stagewise_threshold {
            if !(t >= 0.0) {
                return Err(Error::Config("stagewise_threshold must be nonnegative".into()));
            }
        }
        if let Some(t) = self.prune_tolerance {
            if !(t >= 0.0) {
                return Err(Error::Config("prune_tolerance must be nonnegative".into()));
            }
        }
        Ok(())
    }

    pub fn prune_tol(&self) -> f64 {
        self.prune_tolerance.unwrap_or(1e-7 * self.tau)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GapMet,
    MaxIters,
    StagewiseStop,
}

/// Outcome of [`run`].
///
/// The traces are indexed by iterate: entry `j` describes `mu_j`, with
/// `mu_0` the empty measure and the last entry the returned measure.
/// `gap_trace[j]` certifies `objective_trace[j] - l_* <= gap_trace[j]`
/// whenever the oracle is exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub variant: Variant,
    pub measure: AtomicMeasure,
    pub objective_trace: Vec<f64>,
    pub gap_trace: Vec<f64>,
    pub support_trace: Vec<usize>,
    /// Best certified lower bound on the optimal value.
    pub lower_bound: f64,
    pub termination: Termination,
    /// Number of oracle calls.
    pub iterations: usize,
    /// Set when some weight solve hit its iteration cap.
    pub weight_solver_warning: bool,
}

impl SolveResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }

    pub fn final_gap(&self) -> f64 {
        *self.gap_trace.last().expect("trace is never empty")
    }
}

/// Frank-Wolfe gap `<Phi mu, g> - tau * min(0, <psi(theta_new), g>)`.
pub fn frank_wolfe_gap(
    model: &dyn ForwardModel,
    mu: &AtomicMeasure,
    g: &[f64],
    theta_new: &[f64],
    tau: f64,
) -> Result<f64> {
    if g.len() != model.output_dim() {
        return Err(Error::DimensionMismatch { expected: model.output_dim(), got: g.len() });
    }
    let phi = apply_forward(model, mu)?;
    Ok(gap_from_parts(&phi, g, &model.psi(theta_new), tau))
}

fn gap_from_parts(phi_mu: &[f64], g: &[f64], psi_new: &[f64], tau: f64) -> f64 {
    dot(phi_mu, g) - tau * dot(psi_new, g).min(0.0)
}

/// Descent on a function of a list of parameter blocks. Each step moves
/// along `model.descent_direction`, maps back with `model.retract` and
/// backtracks until the Armijo condition holds.
pub(crate) fn armijo_descent(
    model: &dyn ForwardModel,
    mut blocks: Vec<Vec<f64>>,
    steps: usize,
    initial_step: f64,
    value: &dyn Fn(&[Vec<f64>]) -> f64,
    value_and_grad: &dyn Fn(&[Vec<f64>]) -> (f64, Vec<Vec<f64>>),
) -> Vec<Vec<f64>> {
    if blocks.is_empty() || steps == 0 || !(initial_step > 0.0) || !initial_step.is_finite() {
        return blocks;
    }
    let (mut f, mut grad) = value_and_grad(&blocks);
    let mut t = initial_step;
    let max_step = initial_step * 1e6;

    for _ in 0..steps {
        let dirs: Vec<Vec<f64>> =
            blocks.iter().zip(&grad).map(|(theta, g)| model.descent_direction(theta, g)).collect();
        if dirs.iter().all(|d| d.iter().all(|x| *x == 0.0)) {
            break;
        }
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let cand: Vec<Vec<f64>> = blocks
                .iter()
                .zip(&dirs)
                .map(|(theta, d)| {
                    let trial: Vec<f64> = theta.iter().zip(d).map(|(x, di)| x - t * di).collect();
                    model.retract(&trial)
                })
                .collect();
            let slope: f64 = cand
                .iter()
                .zip(&blocks)
                .zip(&grad)
                .map(|((c, x), g)| c.iter().zip(x).zip(g).map(|((ci, xi), gi)| gi * (ci - xi)).sum::<f64>())
                .sum();
            if slope < 0.0 {
                let f_cand = value(&cand);
                if f_cand <= f + ARMIJO_SLOPE * slope {
                    accepted = Some(cand);
                    break;
                }
            }
            t *= ARMIJO_SHRINK;
        }
        match accepted {
            Some(cand) => {
                blocks = cand;
                let (f_new, g_new) = value_and_grad(&blocks);
                f = f_new;
                grad = g_new;
                t = (2.0 * t).min(max_step);
            }
            None => break,
        }
    }
    blocks
}

fn weighted_forward(model: &dyn ForwardModel, blocks: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; model.output_dim()];
    for (theta, w) in blocks.iter().zip(weights) {
        if *w == 0.0 {
            continue;
        }
        for (o, p) in out.iter_mut().zip(model.psi(theta)) {
            *o += w * p;
        }
    }
    out
}

/// Largest eigenvalue of the Gauss-Newton block Hessian
/// `J^T H_l J` with `J = [w_1 J_1, ..., w_m J_m]`, by power iteration.
fn block_hessian_norm(model: &dyn ForwardModel, loss: &dyn Loss, r: &[f64], blocks: &[Vec<f64>], weights: &[f64]) -> f64 {
    let p = model.param_dim();
    let n = p * blocks.len();
    let dense: Option<Vec<DMatrix<f64>>> =
        (!model.sparse_jacobian()).then(|| blocks.iter().map(|theta| model.jacobian(theta)).collect());
    let jvp = |i: usize, dtheta: &[f64]| match &dense {
        Some(j) => (&j[i] * DVector::from_column_slice(dtheta)).as_slice().to_vec(),
        None => model.jvp(&blocks[i], dtheta),
    };
    let vjp = |i: usize, u: &[f64]| match &dense {
        Some(j) => j[i].tr_mul(&DVector::from_column_slice(u)).as_slice().to_vec(),
        None => model.vjp(&blocks[i], u),
    };
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = 0.0;
    for _ in 0..30 {
        let mut jv = vec![0.0; model.output_dim()];
        for (i, w) in weights.iter().enumerate() {
            for (acc, x) in jv.iter_mut().zip(jvp(i, &v[i * p..(i + 1) * p])) {
                *acc += w * x;
            }
        }
        let hjv = loss.hessian_vec(r, &jv);
        let mut next = Vec::with_capacity(n);
        for (i, w) in weights.iter().enumerate() {
            next.extend(vjp(i, &hjv).into_iter().map(|x| w * x));
        }
        let norm = norm2(&next);
        if !(norm > 0.0) {
            return 0.0;
        }
        let converged = (norm - lambda).abs() <= 1e-6 * norm;
        lambda = norm;
        v = next.into_iter().map(|x| x / norm).collect();
        if converged {
            break;
        }
    }
    lambda
}

/// Moves the support to reduce `l(sum_i w_i psi(theta_i) - y)` with the
/// weights held fixed. The objective never increases and points stay in
/// the parameter space.
pub fn local_descent(
    model: &dyn ForwardModel,
    loss: &dyn Loss,
    obs: &Observation,
    support: &[ParameterPoint],
    weights: &[f64],
    steps: usize,
) -> Vec<ParameterPoint> {
    if steps == 0 || support.is_empty() || weights.iter().all(|w| *w == 0.0) {
        return support.to_vec();
    }
    let blocks: Vec<Vec<f64>> = support.iter().map(|p| p.0.clone()).collect();
    let residual_of = |blocks: &[Vec<f64>]| -> Vec<f64> {
        let mut r = weighted_forward(model, blocks, weights);
        for (ri, yi) in r.iter_mut().zip(&obs.y) {
            *ri -= yi;
        }
        r
    };
    let value = |blocks: &[Vec<f64>]| loss.value(&residual_of(blocks));
    let value_and_grad = |blocks: &[Vec<f64>]| {
        let r = residual_of(blocks);
        let lg = loss.gradient(&r);
        let grads = blocks
            .iter()
            .zip(weights)
            .map(|(theta, w)| model.vjp(theta, &lg).into_iter().map(|x| w * x).collect())
            .collect();
        (loss.value(&r), grads)
    };
    let r0 = residual_of(&blocks);
    let curvature = block_hessian_norm(model, loss, &r0, &blocks, weights);
    if !(curvature > 0.0) {
        return support.to_vec();
    }
    let out = armijo_descent(model, blocks, steps, 1.0 / curvature, &value, &value_and_grad);
    out.into_iter().map(ParameterPoint).collect()
}

/// Polishes an oracle candidate by descending `theta -> <psi(theta), v>`.
/// The returned point is never worse than `start`.
pub fn polish_linear(model: &dyn ForwardModel, v: &[f64], start: Vec<f64>, steps: usize) -> Vec<f64> {
    let value = |b: &[Vec<f64>]| dot(&model.psi(&b[0]), v);
    let value_and_grad = |b: &[Vec<f64>]| {
        (dot(&model.psi(&b[0]), v), vec![model.vjp(&b[0], v)])
    };
    let (_, g) = value_and_grad(std::slice::from_ref(&start));
    let gnorm = norm2(&g[0]);
    if !(gnorm > 0.0) {
        return start;
    }
    let width = model.bounds().iter().map(|(lo, hi)| (hi - lo).powi(2)).sum::<f64>().sqrt();
    let t0 = 0.05 * width / gnorm;
    let mut out = armijo_descent(model, vec![start], steps, t0, &value, &value_and_grad);
    out.pop().expect("one block")
}

struct State<'a> {
    model: &'a dyn ForwardModel,
    loss: &'a dyn Loss,
    obs: &'a Observation,
    config: &'a SolverConfig,
    warning: bool,
}

impl State<'_> {
    fn objective(&self, mu: &AtomicMeasure) -> Result<f64> {
        let r = crate::measure::residual(self.model, mu, self.obs)?;
        Ok(self.loss.value(&r))
    }

    /// Fully-corrective weight update on the current support, then pruning.
    fn correct_weights(&mut self, mu: &AtomicMeasure) -> Result<AtomicMeasure> {
        if mu.is_empty() {
            return Ok(mu.clone());
        }
        let points = mu.points();
        let a = forward_matrix(self.model, &points);
        let prob = WeightProblem::new(a, &self.obs.y, self.config.tau, self.loss)?;
        let sol = solve_weights(&prob, Some(&mu.weights()))?;
        self.warning |= !sol.converged;
        let solved = AtomicMeasure::from_parts(&sol.w, &points)?;

        let pruned = prune_zero_weights(&solved, self.config.prune_tol());
        if pruned.len() == solved.len() {
            return Ok(solved);
        }
        let repaired = if pruned.is_empty() {
            pruned
        } else {
            let points = pruned.points();
            let a = forward_matrix(self.model, &points);
            let prob = WeightProblem::new(a, &self.obs.y, self.config.tau, self.loss)?;
            let sol = solve_weights(&prob, Some(&pruned.weights()))?;
            self.warning |= !sol.converged;
            AtomicMeasure::from_parts(&sol.w, &points)?
        };
        // Keep the objective monotone: fall back to dropping exact zeros only.
        if self.objective(&repaired)? <= sol.objective {
            Ok(repaired)
        } else {
            Ok(prune_zero_weights(&solved, 0.0))
        }
    }

    fn descend(&self, mu: &AtomicMeasure, steps: usize) -> AtomicMeasure {
        let moved = local_descent(self.model, self.loss, self.obs, &mu.points(), &mu.weights(), steps);
        let moved = AtomicMeasure::from_parts(&mu.weights(), &moved).expect("weights already validated");
        merge_duplicates(self.model, &moved, MERGE_TOLERANCE)
    }

    fn bound_support(&mut self, mu: AtomicMeasure) -> Result<AtomicMeasure> {
        if mu.len() <= self.model.output_dim() + 1 {
            return Ok(mu);
        }
        match caratheodory_prune(self.model, &mu) {
            // Reduction preserves Phi mu; the re-solve can only help.
            Ok(reduced) => self.correct_weights(&reduced),
            Err(Error::NullSpace(_)) => {
                self.warning = true;
                Ok(mu)
            }
            Err(e) => Err(e),
        }
    }
}

/// Runs the configured variant from the empty measure.
pub fn run(model: &dyn ForwardModel, obs: &Observation, loss: &dyn Loss, config: &SolverConfig) -> Result<SolveResult> {
    run_with_observer(model, obs, loss, config, &mut |_, _| {})
}

/// [`run`], calling `observer(j, mu_j)` for every iterate recorded in the traces.
pub fn run_with_observer(
    model: &dyn ForwardModel,
    obs: &Observation,
    loss: &dyn Loss,
    config: &SolverConfig,
    observer: &mut dyn FnMut(usize, &AtomicMeasure),
) -> Result<SolveResult> {
    config.validate()?;
    let d = model.output_dim();
    if obs.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: obs.dim() });
    }
    let mut state = State { model, loss, obs, config, warning: false };
    let tau = config.tau;

    let mut mu = AtomicMeasure::new();
    let mut objective_trace = Vec::new();
    let mut gap_trace = Vec::new();
    let mut support_trace = Vec::new();
    let mut lower_bound = f64::NEG_INFINITY;
    let mut termination = Termination::MaxIters;
    let mut iterations = 0;

    // Returns (objective, gap, new point, its measurement, loss gradient).
    let certify = |mu: &AtomicMeasure| -> Result<(f64, f64, ParameterPoint, Vec<f64>, Vec<f64>)> {
        let phi = apply_forward(model, mu)?;
        let r: Vec<f64> = phi.iter().zip(&obs.y).map(|(a, b)| a - b).collect();
        let f = loss.value(&r);
        let g = loss.gradient(&r);
        let theta = model.lmo(&g);
        model.check_point(&theta)?;
        let psi_new = model.psi(&theta);
        let gap = gap_from_parts(&phi, &g, &psi_new, tau);
        Ok((f, gap, theta, psi_new, g))
    };

    for _ in 0..config.max_outer_iters {
        let (f, gap, theta, psi_new, g) = certify(&mu)?;
        iterations += 1;
        observer(objective_trace.len(), &mu);
        objective_trace.push(f);
        gap_trace.push(gap);
        support_trace.push(mu.len());
        lower_bound = lower_bound.max(f - gap.max(0.0));

        if gap < config.gap_tolerance && (gap >= 0.0 || model.lmo_is_exact()) {
            termination = Termination::GapMet;
            break;
        }

        let previous = mu.clone();
        let is_new = mu.atoms.iter().all(|a| normalized_distance(model, &a.theta, &theta) >= MERGE_TOLERANCE);
        if dot(&psi_new, &g) < 0.0 && is_new {
            mu.push(0.0, theta);
        }

        mu = match config.variant {
            Variant::CgmM => state.correct_weights(&mu)?,
            Variant::Gf => {
                let corrected = state.correct_weights(&mu)?;
                state.descend(&corrected, 1)
            }
            Variant::Adcg => {
                let mut current = mu;
                let mut f_before = state.objective(&current)?;
                for _ in 0..config.max_inner_passes {
                    let corrected = state.correct_weights(&current)?;
                    current = state.descend(&corrected, config.local_descent_steps);
                    let f_after = state.objective(&current)?;
                    let done = f_before - f_after <= INNER_RELATIVE_DECREASE * f_before.abs();
                    f_before = f_after;
                    if done {
                        break;
                    }
                }
                current
            }
        };
        mu = state.bound_support(mu)?;

        if let Some(threshold) = config.stagewise_threshold {
            let f_new = state.objective(&mu)?;
            if f - f_new < threshold {
                mu = previous;
                termination = Termination::StagewiseStop;
                break;
            }
        }
    }

    if termination == Termination::MaxIters {
        let (f, gap, _, _, _) = certify(&mu)?;
        iterations += 1;
        observer(objective_trace.len(), &mu);
        objective_trace.push(f);
        gap_trace.push(gap);
        support_trace.push(mu.len());
        lower_bound = lower_bound.max(f - gap.max(0.0));
    }
    let best = objective_trace.iter().copied().fold(f64::INFINITY, f64::min);
    lower_bound = lower_bound.min(best);

    Ok(SolveResult {
        variant: config.variant,
        measure: mu,
        objective_trace,
        gap_trace,
        support_trace,
        lower_bound,
        termination,
        iterations,
        weight_solver_warning: state.warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::SquaredLoss;
    use crate::measure::residual;
    use crate::models::{MomentCurve, SuperresModel};

    /// `psi(theta) = theta` on the unit square.
    struct Identity {
        bounds: Vec<(f64, f64)>,
    }

    impl Identity {
        fn new() -> Self {
            Identity { bounds: vec![(0.0, 1.0), (0.0, 1.0)] }
        }
    }

    impl ForwardModel for Identity {
        fn output_dim(&self) -> usize {
            2
        }
        fn param_dim(&self) -> usize {
            2
        }
        fn bounds(&self) -> &[(f64, f64)] {
            &self.bounds
        }
        fn psi(&self, theta: &[f64]) -> Vec<f64> {
            theta.to_vec()
        }
        fn jacobian(&self, _theta: &[f64]) -> DMatrix<f64> {
            DMatrix::identity(2, 2)
        }
        fn lmo(&self, v: &[f64]) -> ParameterPoint {
            ParameterPoint(v.iter().map(|x| if *x < 0.0 { 1.0 } else { 0.0 }).collect())
        }
    }

    fn point(t: f64) -> ParameterPoint {
        ParameterPoint(vec![t])
    }

    #[test]
    fn gap_vanishes_for_empty_measure_and_nonnegative_products() {
        let line = MomentCurve::new(1, 0.0, 1.0);
        let gap = frank_wolfe_gap(&line, &AtomicMeasure::new(), &[2.0], &[0.0], 1.0).unwrap();
        assert_eq!(gap, 0.0);
    }

    #[test]
    fn gap_of_single_atom_against_zero_target() {
        let line = MomentCurve::new(1, -1.0, 1.0);
        let mu = AtomicMeasure::from_parts(&[1.0], &[point(1.0)]).unwrap();
        // g = Phi mu - y = 1, the oracle picks theta = -1.
        let theta = line.lmo(&[1.0]);
        assert_eq!(theta.0, vec![-1.0]);
        let gap = frank_wolfe_gap(&line, &mu, &[1.0], &theta.0, 1.0).unwrap();
        assert_eq!(gap, 2.0);
        assert!(0.5 <= gap);
    }

    #[test]
    fn gap_rejects_wrong_gradient_length() {
        let line = MomentCurve::new(1, -1.0, 1.0);
        assert!(frank_wolfe_gap(&line, &AtomicMeasure::new(), &[1.0, 2.0], &[0.0], 1.0).is_err());
    }

    #[test]
    fn gap_is_small_at_an_optimum() {
        // Optimum on the parabola: weights 0.65 at +1 and 0.35 at -1 reach (0.3, 1).
        let parabola = MomentCurve::new(2, -1.0, 1.0);
        let mu = AtomicMeasure::from_parts(&[0.65, 0.35], &[point(1.0), point(-1.0)]).unwrap();
        let obs = Observation::new(vec![0.3, 1.5]);
        let g = SquaredLoss.gradient(&residual(&parabola, &mu, &obs).unwrap());
        let theta = parabola.lmo(&g);
        let gap = frank_wolfe_gap(&parabola, &mu, &g, &theta.0, 1.0).unwrap();
        assert!(gap.abs() <= 1e-6, "gap {gap}");
    }

    #[test]
    fn local_descent_with_zero_weights_is_identity() {
        let line = MomentCurve::new(1, -1.0, 1.0);
        let obs = Observation::new(vec![0.5]);
        let support = vec![point(-0.2), point(0.7)];
        let out = local_descent(&line, &SquaredLoss, &obs, &support, &[0.0, 0.0], 20);
        assert_eq!(out, support);
    }

    #[test]
    fn local_descent_moves_toward_isolated_source() {
        let model = SuperresModel::new(16, 16, 100.0, 100.0).unwrap();
        let truth = [810.0, 790.0];
        let obs = Observation::new(model.psi(&truth));
        let start = vec![ParameterPoint(vec![truth[0] + 30.0, truth[1]])];
        let objective = |p: &[f64]| {
            let r: Vec<f64> = model.psi(p).iter().zip(&obs.y).map(|(a, b)| a - b).collect();
            SquaredLoss.value(&r)
        };
        // Dense grid over a 1-pixel window: the one-atom objective is smallest at the source.
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        for i in 0..=40 {
            for j in 0..=40 {
                let p = [760.0 + 2.5 * i as f64, 740.0 + 2.5 * j as f64];
                let f = objective(&p);
                if f < best.0 {
                    best = (f, p);
                }
            }
        }
        assert_eq!(best.1, truth);

        let out = local_descent(&model, &SquaredLoss, &obs, &start, &[1.0], 20);
        let dist = |p: &[f64]| ((p[0] - truth[0]).powi(2) + (p[1] - truth[1]).powi(2)).sqrt();
        assert!(dist(&out[0].0) < dist(&start[0].0), "moved to {:?}", out[0].0);
        assert!(objective(&out[0].0) <= objective(&start[0].0));
    }

    #[test]
    fn local_descent_clamps_blocked_coordinate() {
        let model = Identity::new();
        let obs = Observation::new(vec![-1.0, 0.5]);
        let start = vec![ParameterPoint(vec![0.0, 0.0])];
        let out = local_descent(&model, &SquaredLoss, &obs, &start, &[1.0], 5);
        assert_eq!(out[0].0[0], 0.0);
        assert!((out[0].0[1] - 0.5).abs() < 1e-6, "{:?}", out[0].0);
    }

    #[test]
    fn zero_observation_stops_immediately() {
        let line = MomentCurve::new(1, -1.0, 1.0);
        for variant in [Variant::Adcg, Variant::CgmM, Variant::Gf] {
            let res = run(&line, &Observation::new(vec![0.0]), &SquaredLoss, &SolverConfig::new(variant, 1.0)).unwrap();
            assert_eq!(res.termination, Termination::GapMet);
            assert_eq!(res.iterations, 1);
            assert!(res.measure.is_empty());
            assert_eq!(res.objective_trace, vec![0.0]);
            assert_eq!(res.gap_trace, vec![0.0]);
        }
    }

    #[test]
    fn interior_target_on_a_line() {
        let line = MomentCurve::new(1, -1.0, 1.0);
        let res = run(&line, &Observation::new(vec![0.5]), &SquaredLoss, &SolverConfig::new(Variant::Adcg, 1.0)).unwrap();
        assert_eq!(res.termination, Termination::GapMet);
        assert!(res.iterations <= 3);
        assert!(res.final_objective() <= 1e-12);
        assert!(res.final_gap() < 1e-6);
        let image = apply_forward(&line, &res.measure).unwrap();
        assert!((image[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn config_validation() {
        let mut c = SolverConfig::new(Variant::Adcg, 1.0);
        assert!(c.validate().is_ok());
        c.tau = 0.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.tau = 1.0;
        c.max_inner_passes = 0;
        assert!(c.validate().is_err());
        c.max_inner_passes = 1;
        c.stagewise_threshold = Some(-1.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let line = MomentCurve::new(1, -1.0, 1.0);
        let err = run(&line, &Observation::new(vec![0.0, 1.0]), &SquaredLoss, &SolverConfig::new(Variant::Gf, 1.0));
        assert!(matches!(err, Err(Error::DimensionMismatch { expected: 1, got: 2 })));
    }

    #[test]
    fn variant_names_round_trip() {
        for v in [Variant::Adcg, Variant::CgmM, Variant::Gf] {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("cgm-m".parse::<Variant>().unwrap(), Variant::CgmM);
        assert!("fista".parse::<Variant>().is_err());
    }
}
