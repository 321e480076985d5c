//! The weight subproblem solved at every outer iteration:
//!
//! ```text
//! minimize  l(A w - y)   subject to  w >= 0,  sum(w) <= tau
//! ```
//!
//! where the columns of `A` are the measurements of the current support.
//! The solver is accelerated projected gradient with backtracking and
//! function-value restarts, interleaved with a Newton step restricted to the
//! face identified by the current iterate. It exits on the prox-gradient
//! (KKT) residual.

use nalgebra::{DMatrix, DVector};

use crate::loss::Loss;
use crate::util::{dot, norm_inf};
use crate::{Error, Result};

pub const KKT_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 10_000;

const CHUNK: usize = 200;
const CHECK_EVERY: usize = 10;

/// Euclidean projection onto the capped simplex `{w >= 0, sum(w) <= tau}`.
pub fn project_capped_simplex(w: &[f64], tau: f64) -> Vec<f64> {
    let clipped: Vec<f64> = w.iter().map(|x| x.max(0.0)).collect();
    let mass: f64 = clipped.iter().sum();
    if mass <= tau {
        return clipped;
    }
    // Sorted-threshold projection onto {w >= 0, sum(w) = tau}.
    let mut sorted = clipped.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut threshold = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - tau) / (k + 1) as f64;
        if u - t > 0.0 {
            threshold = t;
        } else {
            break;
        }
    }
    clipped.iter().map(|x| (x - threshold).max(0.0)).collect()
}

pub struct WeightProblem<'a> {
    /// d x m, column i is `psi(theta_i)`.
    pub a: DMatrix<f64>,
    pub y: &'a [f64],
    pub tau: f64,
    pub loss: &'a dyn Loss,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightSolution {
    pub w: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl<'a> WeightProblem<'a> {
    pub fn new(a: DMatrix<f64>, y: &'a [f64], tau: f64, loss: &'a dyn Loss) -> Result<Self> {
        if a.nrows() != y.len() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), got: y.len() });
        }
        if a.ncols() == 0 {
            return Err(Error::InvalidInput("weight problem needs at least one column".into()));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite column entry".into()));
        }
        Ok(WeightProblem { a, y, tau, loss })
    }

    pub fn num_weights(&self) -> usize {
        self.a.ncols()
    }

    fn residual(&self, w: &[f64]) -> Vec<f64> {
        let mut r = &self.a * DVector::from_column_slice(w);
        for (ri, yi) in r.iter_mut().zip(self.y) {
            *ri -= yi;
        }
        r.as_slice().to_vec()
    }

    pub fn objective(&self, w: &[f64]) -> f64 {
        self.loss.value(&self.residual(w))
    }

    /// Objective and its gradient `A^T grad l(A w - y)`.
    pub fn value_and_gradient(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let r = self.residual(w);
        let g = DVector::from_vec(self.loss.gradient(&r));
        let grad = self.a.tr_mul(&g);
        (self.loss.value(&r), grad.as_slice().to_vec())
    }

    /// `||w - P(w - grad f(w))||_inf`, zero exactly at a minimizer.
    pub fn kkt_residual(&self, w: &[f64]) -> (f64, f64) {
        let (_, g) = self.value_and_gradient(w);
        let step: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - b).collect();
        let p = project_capped_simplex(&step, self.tau);
        let res = w.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        (res, norm_inf(&g))
    }

    fn kkt_met(&self, w: &[f64]) -> (bool, f64) {
        let (res, gnorm) = self.kkt_residual(w);
        (res <= KKT_TOLERANCE * (1.0 + gnorm), res)
    }
}

/// Solves the weight subproblem, warm-started from `w0` when given.
///
/// The returned objective is never worse than the objective at the
/// projection of `w0`, up to floating-point rounding. Hitting the iteration cap returns the best iterate
/// with `converged = false`.
pub fn solve_weights(prob: &WeightProblem<'_>, w0: Option<&[f64]>) -> Result<WeightSolution> {
    let m = prob.num_weights();
    let start = match w0 {
        Some(w) if w.len() != m => return Err(Error::DimensionMismatch { expected: m, got: w.len() }),
        Some(w) => project_capped_simplex(w, prob.tau),
        None => vec![0.0; m],
    };
    let mut best = start;
    let mut best_f = prob.objective(&best);

    let col_norm_sq = (0..m).map(|j| prob.a.column(j).norm_squared()).fold(0.0, f64::max);
    let mut lipschitz = (col_norm_sq * m as f64).max(1e-300);
    let mut iterations = 0;

    loop {
        let (ok, res) = prob.kkt_met(&best);
        if ok {
            return Ok(polished(prob, best, best_f, res, iterations));
        }
        if let Some(cand) = face_newton(prob, &best) {
            let f = prob.objective(&cand);
            let (ok_cand, res_cand) = prob.kkt_met(&cand);
            if f <= best_f || (res_cand < res && f <= best_f + rounding_slack(best_f)) {
                best = cand;
                best_f = f;
                if ok_cand {
                    return Ok(polished(prob, best, best_f, res_cand, iterations));
                }
            }
        }
        if iterations >= MAX_ITERATIONS {
            let (_, res) = prob.kkt_residual(&best);
            return Ok(WeightSolution { w: best, objective: best_f, kkt_residual: res, converged: false, iterations });
        }
        let budget = CHUNK.min(MAX_ITERATIONS - iterations);
        let (w, f, used) = fista(prob, &best, best_f, &mut lipschitz, budget);
        iterations += used;
        if f <= best_f {
            best = w;
            best_f = f;
        }
    }
}

/// Objective differences below this are floating-point noise.
fn rounding_slack(f: f64) -> f64 {
    64.0 * f64::EPSILON * f.abs()
}

/// One more face-Newton step from a KKT point, kept only if it stays a KKT
/// point and does not increase the objective. This snaps tiny weights onto
/// the boundary.
fn polished(prob: &WeightProblem<'_>, w: Vec<f64>, f: f64, res: f64, iterations: usize) -> WeightSolution {
    if let Some(cand) = face_newton(prob, &w) {
        let f_cand = prob.objective(&cand);
        let (ok, res_cand) = prob.kkt_met(&cand);
        if ok && f_cand <= f + rounding_slack(f) {
            return WeightSolution { w: cand, objective: f_cand, kkt_residual: res_cand, converged: true, iterations };
        }
    }
    WeightSolution { w, objective: f, kkt_residual: res, converged: true, iterations }
}

/// Accelerated projected gradient with backtracking and restarts. Returns
/// the best iterate seen, its objective and the iterations spent.
fn fista(prob: &WeightProblem<'_>, w0: &[f64], f0: f64, lipschitz: &mut f64, budget: usize) -> (Vec<f64>, f64, usize) {
    let tau = prob.tau;
    let mut x = w0.to_vec();
    let mut fx = f0;
    let mut z = x.clone();
    let mut t = 1.0_f64;

    for it in 0..budget {
        let (fz, gz) = prob.value_and_gradient(&z);
        let (next, f_next) = loop {
            let step: Vec<f64> = z.iter().zip(&gz).map(|(a, b)| a - b / *lipschitz).collect();
            let cand = project_capped_simplex(&step, tau);
            let f_cand = prob.objective(&cand);
            let diff: Vec<f64> = cand.iter().zip(&z).map(|(a, b)| a - b).collect();
            let model = fz + dot(&gz, &diff) + 0.5 * *lipschitz * dot(&diff, &diff);
            if f_cand <= model + 1e-14 * fz.abs().max(1.0) || *lipschitz > 1e300 {
                break (cand, f_cand);
            }
            *lipschitz *= 2.0;
        };

        if f_next > fx {
            // Restart momentum from the last accepted point.
            z = x.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        z = next.iter().zip(&x).map(|(n, o)| n + beta * (n - o)).collect();
        x = next;
        fx = f_next;
        t = t_next;

        if (it + 1) % CHECK_EVERY == 0 && prob.kkt_met(&x).0 {
            return (x, fx, it + 1);
        }
    }
    (x, fx, budget)
}

/// Newton iteration restricted to the face `{w_i = 0, i not in F}` (and
/// `sum(w) = tau` when the mass constraint is active), with a ratio test
/// that drops blocking coordinates.
fn face_newton(prob: &WeightProblem<'_>, w: &[f64]) -> Option<Vec<f64>> {
    let m = prob.num_weights();
    let tau = prob.tau;
    let mut w = w.to_vec();
    let mut mass_active = w.iter().sum::<f64>() >= tau * (1.0 - 1e-12);

    for _ in 0..(2 * m + 4) {
        let free: Vec<usize> = (0..m).filter(|&i| w[i] > 0.0).collect();
        if free.is_empty() {
            return Some(w);
        }
        let k = free.len();
        let r = prob.residual(&w);
        let lg = DVector::from_vec(prob.loss.gradient(&r));
        let g = prob.a.tr_mul(&lg);

        let mut h = DMatrix::<f64>::zeros(k, k);
        for (b, &j) in free.iter().enumerate() {
            let col: Vec<f64> = prob.a.column(j).iter().copied().collect();
            let hv = DVector::from_vec(prob.loss.hessian_vec(&r, &col));
            for (a_idx, &i) in free.iter().enumerate() {
                h[(a_idx, b)] = prob.a.column(i).dot(&hv);
            }
        }

        let delta: Vec<f64> = if mass_active {
            let mut kkt = DMatrix::<f64>::zeros(k + 1, k + 1);
            kkt.view_mut((0, 0), (k, k)).copy_from(&h);
            for i in 0..k {
                kkt[(i, k)] = 1.0;
                kkt[(k, i)] = 1.0;
            }
            let mut rhs = DVector::<f64>::zeros(k + 1);
            for (a_idx, &i) in free.iter().enumerate() {
                rhs[a_idx] = -g[i];
            }
            let sol = pinv_solve(kkt, rhs)?;
            sol.iter().take(k).copied().collect()
        } else {
            let rhs = DVector::from_iterator(k, free.iter().map(|&i| -g[i]));
            pinv_solve(h, rhs)?.as_slice().to_vec()
        };
        if delta.iter().any(|v| !v.is_finite()) {
            return None;
        }

        let mut alpha = 1.0;
        let mut blocker: Option<usize> = None;
        let mut mass_blocks = false;
        for (a_idx, &i) in free.iter().enumerate() {
            if delta[a_idx] < 0.0 {
                let ratio = w[i] / -delta[a_idx];
                if ratio < alpha {
                    alpha = ratio;
                    blocker = Some(i);
                }
            }
        }
        let dmass: f64 = delta.iter().sum();
        if !mass_active && dmass > 0.0 {
            let slack = (tau - w.iter().sum::<f64>()).max(0.0);
            let ratio = slack / dmass;
            if ratio < alpha {
                alpha = ratio;
                blocker = None;
                mass_blocks = true;
            }
        }

        for (a_idx, &i) in free.iter().enumerate() {
            w[i] = (w[i] + alpha * delta[a_idx]).max(0.0);
        }
        if let Some(i) = blocker {
            w[i] = 0.0;
        }
        if mass_blocks {
            mass_active = true;
        }
        let step_norm = norm_inf(&delta) * alpha;
        if blocker.is_none() && !mass_blocks && step_norm <= 1e-15 * (1.0 + norm_inf(&w)) {
            break;
        }
        // Another pass only pays off for non-quadratic losses.
        if blocker.is_none() && !mass_blocks && alpha == 1.0 && face_gradient_flat(prob, &w) {
            break;
        }
    }
    Some(project_capped_simplex(&w, tau))
}

/// Gradient restricted to the free coordinates is constant (zero when the
/// mass constraint is slack), i.e. the face is optimal.
fn face_gradient_flat(prob: &WeightProblem<'_>, w: &[f64]) -> bool {
    let (_, g) = prob.value_and_gradient(w);
    let free: Vec<f64> = w.iter().zip(&g).filter(|(wi, _)| **wi > 0.0).map(|(_, gi)| *gi).collect();
    if free.is_empty() {
        return true;
    }
    let mean = free.iter().sum::<f64>() / free.len() as f64;
    let spread = free.iter().map(|gi| (gi - mean).abs()).fold(0.0, f64::max);
    spread <= 1e-12 * (1.0 + norm_inf(&g))
}

fn pinv_solve(mat: DMatrix<f64>, rhs: DVector<f64>) -> Option<DVector<f64>> {
    let svd = mat.svd(true, true);
    let smax = svd.singular_values.max();
    if !smax.is_finite() {
        return None;
    }
    svd.solve(&rhs, 1e-12 * smax.max(f64::MIN_POSITIVE)).ok()
}
