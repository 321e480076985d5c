//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};

use adcg_core::{ForwardModel, ParameterPoint};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Central-difference Jacobian with per-coordinate step `h * (1 + |theta_j|)`.
pub fn fd_jacobian(model: &dyn ForwardModel, theta: &[f64], h: f64) -> DMatrix<f64> {
    let d = model.output_dim();
    let mut jac = DMatrix::zeros(d, theta.len());
    for j in 0..theta.len() {
        let step = h * (1.0 + theta[j].abs());
        let mut plus = theta.to_vec();
        let mut minus = theta.to_vec();
        plus[j] += step;
        minus[j] -= step;
        let (fp, fm) = (model.psi(&plus), model.psi(&minus));
        for i in 0..d {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    jac
}

/// Largest entrywise deviation relative to the largest finite-difference entry.
pub fn jacobian_relative_error(model: &dyn ForwardModel, theta: &[f64], h: f64) -> f64 {
    let analytic = model.jacobian(theta);
    let numeric = fd_jacobian(model, theta, h);
    let scale = numeric.amax().max(1e-300);
    (analytic - numeric).amax() / scale
}

/// Uniform point strictly inside the box, keeping `margin` of each side's width clear.
pub fn interior_point(bounds: &[(f64, f64)], margin: f64, rng: &mut impl Rng) -> Vec<f64> {
    bounds
        .iter()
        .map(|&(lo, hi)| {
            let w = hi - lo;
            lo + margin * w + rng.random::<f64>() * (1.0 - 2.0 * margin) * w
        })
        .collect()
}

/// Unit vector with independent uniform(-1, 1) entries before normalization.
pub fn random_unit(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

pub fn half_squared_residual(a: &DMatrix<f64>, w: &[f64], y: &[f64]) -> f64 {
    let r = a * DVector::from_column_slice(w) - DVector::from_column_slice(y);
    0.5 * r.norm_squared()
}

/// Exact minimizer of `0.5 |A w - y|^2` over `w >= 0, sum w <= tau` by
/// enumerating every support and both states of the mass constraint.
///
/// Some optimal point is a vertex of the optimal face, and there the
/// restricted system has full column rank, so its face solution is
/// unique and appears among the feasible candidates.
pub fn enumerate_weights(a: &DMatrix<f64>, y: &[f64], tau: f64) -> (Vec<f64>, f64) {
    let m = a.ncols();
    let yv = DVector::from_column_slice(y);
    let mut best = (vec![0.0; m], 0.5 * yv.norm_squared());
    for mask in 1u32..(1 << m) {
        let support: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let k = support.len();
        let sub = DMatrix::from_fn(a.nrows(), k, |r, c| a[(r, support[c])]);
        let gram = sub.transpose() * &sub;
        let rhs = sub.transpose() * &yv;

        let mut candidates = Vec::new();
        if let Ok(free) = gram.clone().pseudo_inverse(1e-12).map(|p| p * &rhs) {
            candidates.push(free);
        }
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        kkt.view_mut((0, 0), (k, k)).copy_from(&gram);
        let mut kkt_rhs = DVector::zeros(k + 1);
        for i in 0..k {
            kkt[(i, k)] = 1.0;
            kkt[(k, i)] = 1.0;
            kkt_rhs[i] = rhs[i];
        }
        kkt_rhs[k] = tau;
        if let Ok(p) = kkt.pseudo_inverse(1e-12) {
            candidates.push((p * kkt_rhs).rows(0, k).into_owned());
        }

        for c in candidates {
            let feasible = c.iter().all(|x| *x >= -1e-12) && c.sum() <= tau * (1.0 + 1e-12);
            if !feasible {
                continue;
            }
            let mut w = vec![0.0; m];
            for (slot, &i) in support.iter().enumerate() {
                w[i] = c[slot].max(0.0);
            }
            let f = half_squared_residual(a, &w, y);
            if f < best.1 {
                best = (w, f);
            }
        }
    }
    best
}

/// Squared diameter of `tau * conv(psi(grid) ∪ {0})`, from all sampled pairs.
pub fn sampled_curvature(model: &dyn ForwardModel, grid: &[Vec<f64>], tau: f64) -> f64 {
    let mut points: Vec<Vec<f64>> = grid.iter().map(|t| model.psi(t)).collect();
    points.push(vec![0.0; model.output_dim()]);
    let mut diam2 = 0.0_f64;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            diam2 = diam2.max(d2);
        }
    }
    tau * tau * diam2
}

/// Wraps a model with an oracle that deliberately returns the worst grid
/// point whose linear value is within `delta_k = c_hat * zeta / (k + 2)`
/// of the exact minimum, where `k` counts oracle calls.
pub struct PerturbedOracle<'a> {
    pub inner: &'a dyn ForwardModel,
    pub grid: Vec<Vec<f64>>,
    pub tau: f64,
    pub c_hat: f64,
    pub zeta: f64,
    pub calls: AtomicUsize,
}

impl<'a> PerturbedOracle<'a> {
    pub fn new(inner: &'a dyn ForwardModel, grid: Vec<Vec<f64>>, tau: f64, c_hat: f64, zeta: f64) -> Self {
        PerturbedOracle { inner, grid, tau, c_hat, zeta, calls: AtomicUsize::new(0) }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ForwardModel for PerturbedOracle<'_> {
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }

    fn bounds(&self) -> &[(f64, f64)] {
        self.inner.bounds()
    }

    fn psi(&self, theta: &[f64]) -> Vec<f64> {
        self.inner.psi(theta)
    }

    fn jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        self.inner.jacobian(theta)
    }

    fn lmo(&self, v: &[f64]) -> ParameterPoint {
        let k = self.calls.fetch_add(1, Ordering::SeqCst);
        let delta = self.c_hat * self.zeta / (k as f64 + 2.0);
        let exact = self.inner.lmo(v);
        let best = self.tau * dot(&self.inner.psi(&exact.0), v);
        let mut chosen = exact;
        let mut worst = best;
        for t in &self.grid {
            let value = self.tau * dot(&self.inner.psi(t), v);
            if value <= best + delta && value > worst {
                worst = value;
                chosen = ParameterPoint(t.clone());
            }
        }
        chosen
    }
}

/// Euclidean distance from `p` to the segment `[a, b]` in the plane.
pub fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 { 0.0 } else { ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0) };
    let q = [a[0] + t * ab[0] - p[0], a[1] + t * ab[1] - p[1]];
    (q[0] * q[0] + q[1] * q[1]).sqrt()
}

/// Optimal value of the toy problem `psi(theta) = (theta, theta^2)` on
/// `[-1, 1]` with `tau = 1`, for `y` outside the feasible set, by the
/// distance to every segment between grid atoms (the set is the convex
/// hull of the curve, which passes through the origin).
pub fn parabola_optimum(y: [f64; 2], n: usize) -> f64 {
    let pts: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let t = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            [t, t * t]
        })
        .collect();
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            best = best.min(segment_distance(y, pts[i], pts[j]));
        }
    }
    0.5 * best * best
}
