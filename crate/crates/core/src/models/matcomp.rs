//! Rank-one atoms for matrix completion.
//!
//! `theta = (u, v)` with `u` on the unit sphere of R^n and `v` on the unit
//! sphere of R^m; `psi(theta)` lists the entries of `u v^T` at the observed
//! positions. The parameter space is a product of spheres, so descent steps
//! are projected onto tangent spaces and renormalized.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::loss::Loss;
use crate::measure::{Observation, ParameterPoint};
use crate::solver::{local_descent, ForwardModel};
use crate::util::{dot, norm2};
use crate::{Error, Result};

pub const POWER_MAX_ITERS: usize = 300;
pub const POWER_TOLERANCE: f64 = 1e-9;
const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct MatCompModel {
    rows: usize,
    cols: usize,
    omega: Vec<(usize, usize)>,
    seed: u64,
    bounds: Vec<(f64, f64)>,
}

/// Top singular triple of the sparse matrix `M^* v`.
#[derive(Clone, Debug, PartialEq)]
pub struct SingularTriple {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub sigma: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl MatCompModel {
    /// `seed` fixes the power-iteration start vector.
    pub fn new(rows: usize, cols: usize, omega: Vec<(usize, usize)>, seed: u64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput("matrix dimensions must be positive".into()));
        }
        let mut seen = std::collections::HashSet::with_capacity(omega.len());
        for &(i, j) in &omega {
            if i >= rows || j >= cols {
                return Err(Error::InvalidInput(format!("observed index ({i}, {j}) outside {rows}x{cols}")));
            }
            if !seen.insert((i, j)) {
                return Err(Error::InvalidInput(format!("duplicate observed index ({i}, {j})")));
            }
        }
        let bounds = vec![(-1.0, 1.0); rows + cols];
        Ok(MatCompModel { rows, cols, omega, seed, bounds })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn omega(&self) -> &[(usize, usize)] {
        &self.omega
    }

    /// Splits a parameter point into its row and column factors.
    pub fn split<'a>(&self, theta: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        theta.split_at(self.rows)
    }

    /// `psi` with the unit-norm precondition enforced.
    pub fn psi_checked(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_point(theta)?;
        Ok(self.psi(theta))
    }

    /// Power iteration on alternating products with the sparse `M^* v`.
    pub fn top_singular_triple(&self, v: &[f64]) -> SingularTriple {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut right: Vec<f64> = (0..self.cols).map(|_| rng.random::<f64>() - 0.5).collect();
        let n = norm2(&right);
        right.iter_mut().for_each(|x| *x /= n);
        let mut left = vec![0.0; self.rows];
        let mut sigma = 0.0;
        let mut converged = false;
        let mut iterations = 0;

        for it in 0..POWER_MAX_ITERS {
            iterations = it + 1;
            left.iter_mut().for_each(|x| *x = 0.0);
            for (&(i, j), &val) in self.omega.iter().zip(v) {
                left[i] += val * right[j];
            }
            let ln = norm2(&left);
            if ln == 0.0 {
                sigma = 0.0;
                converged = true;
                break;
            }
            left.iter_mut().for_each(|x| *x /= ln);
            let mut next = vec![0.0; self.cols];
            for (&(i, j), &val) in self.omega.iter().zip(v) {
                next[j] += val * left[i];
            }
            let s = norm2(&next);
            next.iter_mut().for_each(|x| *x /= s);
            right = next;
            let done = (s - sigma).abs() <= POWER_TOLERANCE * s;
            sigma = s;
            if done {
                converged = true;
                break;
            }
        }

        if sigma == 0.0 {
            let mut left = vec![0.0; self.rows];
            let mut right = vec![0.0; self.cols];
            left[0] = 1.0;
            right[0] = 1.0;
            return SingularTriple { left, right, sigma: 0.0, iterations, converged };
        }
        // Deterministic signs: largest-magnitude entry of the left vector positive.
        let lead = left.iter().copied().fold(0.0_f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if lead < 0.0 {
            left.iter_mut().for_each(|x| *x = -*x);
            right.iter_mut().for_each(|x| *x = -*x);
        }
        // Exact Rayleigh value for the final pair.
        let sigma = self.omega.iter().zip(v).map(|(&(i, j), val)| val * left[i] * right[j]).sum();
        SingularTriple { left, right, sigma, iterations, converged }
    }

    /// One Riemannian gradient step with Armijo line search on the support.
    pub fn local_descent_step(
        &self,
        loss: &dyn Loss,
        obs: &Observation,
        support: &[ParameterPoint],
        weights: &[f64],
    ) -> Vec<ParameterPoint> {
        local_descent(self, loss, obs, support, weights, 1)
    }

    fn unit_blocks(&self, theta: &[f64]) -> Result<()> {
        let (u, v) = self.split(theta);
        for block in [u, v] {
            let norm = norm2(block);
            if (norm - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::NotUnitNorm { norm });
            }
        }
        Ok(())
    }
}

fn normalize(block: &[f64]) -> Vec<f64> {
    let n = norm2(block);
    if n > 0.0 {
        block.iter().map(|x| x / n).collect()
    } else {
        block.to_vec()
    }
}

fn tangent(point: &[f64], grad: &[f64]) -> Vec<f64> {
    let c = dot(point, grad);
    grad.iter().zip(point).map(|(g, p)| g - c * p).collect()
}

impl ForwardModel for MatCompModel {
    fn output_dim(&self) -> usize {
        self.omega.len()
    }

    fn param_dim(&self) -> usize {
        self.rows + self.cols
    }

    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn psi(&self, theta: &[f64]) -> Vec<f64> {
        let (u, v) = self.split(theta);
        self.omega.iter().map(|&(i, j)| u[i] * v[j]).collect()
    }

    fn jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        let (u, v) = self.split(theta);
        let mut jac = DMatrix::zeros(self.omega.len(), self.rows + self.cols);
        for (k, &(i, j)) in self.omega.iter().enumerate() {
            jac[(k, i)] = v[j];
            jac[(k, self.rows + j)] = u[i];
        }
        jac
    }

    fn sparse_jacobian(&self) -> bool {
        true
    }

    fn jvp(&self, theta: &[f64], dtheta: &[f64]) -> Vec<f64> {
        let (u, v) = self.split(theta);
        let (du, dv) = dtheta.split_at(self.rows);
        self.omega.iter().map(|&(i, j)| du[i] * v[j] + u[i] * dv[j]).collect()
    }

    fn vjp(&self, theta: &[f64], r: &[f64]) -> Vec<f64> {
        let (u, v) = self.split(theta);
        let mut out = vec![0.0; self.rows + self.cols];
        for (&(i, j), rk) in self.omega.iter().zip(r) {
            out[i] += rk * v[j];
            out[self.rows + j] += rk * u[i];
        }
        out
    }

    /// `(-u_1, v_1)` from the top singular pair, so the value is `-sigma_max`.
    fn lmo(&self, v: &[f64]) -> ParameterPoint {
        let triple = self.top_singular_triple(v);
        let mut theta: Vec<f64> = triple.left.iter().map(|x| -x).collect();
        theta.extend_from_slice(&triple.right);
        ParameterPoint(theta)
    }

    fn check_point(&self, theta: &[f64]) -> Result<()> {
        crate::solver::check_in_box(&self.bounds, theta)?;
        self.unit_blocks(theta)
    }

    fn descent_direction(&self, theta: &[f64], grad: &[f64]) -> Vec<f64> {
        let (u, v) = self.split(theta);
        let (gu, gv) = grad.split_at(self.rows);
        let mut out = tangent(u, gu);
        out.extend(tangent(v, gv));
        out
    }

    fn retract(&self, theta: &[f64]) -> Vec<f64> {
        let (u, v) = self.split(theta);
        let mut out = normalize(u);
        out.extend(normalize(v));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::SquaredLoss;
    use crate::measure::{apply_forward, AtomicMeasure};

    fn unit(n: usize, k: usize) -> Vec<f64> {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        e
    }

    fn theta(u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut t = u.to_vec();
        t.extend_from_slice(v);
        t
    }

    #[test]
    fn psi_examples() {
        let m = MatCompModel::new(3, 3, vec![(0, 0)], 0).unwrap();
        assert_eq!(m.psi_checked(&theta(&unit(3, 0), &unit(3, 0))).unwrap(), vec![1.0]);
        let m = MatCompModel::new(3, 3, vec![(1, 1)], 0).unwrap();
        assert_eq!(m.psi_checked(&theta(&unit(3, 0), &unit(3, 0))).unwrap(), vec![0.0]);
    }

    #[test]
    fn psi_rejects_non_unit() {
        let m = MatCompModel::new(2, 2, vec![(0, 0)], 0).unwrap();
        assert!(matches!(m.psi_checked(&[0.5, 0.0, 1.0, 0.0]), Err(Error::NotUnitNorm { .. })));
    }

    #[test]
    fn constructor_rejects_bad_masks() {
        assert!(MatCompModel::new(2, 2, vec![(2, 0)], 0).is_err());
        assert!(MatCompModel::new(2, 2, vec![(0, 1), (0, 1)], 0).is_err());
    }

    #[test]
    fn diagonal_oracle() {
        let m = MatCompModel::new(2, 2, vec![(0, 0), (1, 1)], 3).unwrap();
        let v = [3.0, 1.0];
        let t = m.lmo(&v);
        assert!((dot(&m.psi(&t), &v) + 3.0).abs() < 1e-9);
        let (u, w) = m.split(&t);
        assert!((u[0].abs() - 1.0).abs() < 1e-6 && (w[0].abs() - 1.0).abs() < 1e-6);
        assert!(u[0] * w[0] < 0.0);
    }

    #[test]
    fn zero_vector_oracle() {
        let m = MatCompModel::new(3, 2, vec![(0, 0), (2, 1)], 3).unwrap();
        let t = m.lmo(&[0.0, 0.0]);
        assert!(m.check_point(&t).is_ok());
        assert_eq!(dot(&m.psi(&t), &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn zero_gradient_leaves_support() {
        // The residual vanishes, so the gradient does too.
        let m = MatCompModel::new(3, 3, vec![(0, 0), (1, 2), (2, 1)], 1).unwrap();
        let t = ParameterPoint(theta(&[0.6, 0.8, 0.0], &[0.0, 0.6, 0.8]));
        let mu = AtomicMeasure::from_parts(&[2.0], std::slice::from_ref(&t)).unwrap();
        let obs = Observation::new(apply_forward(&m, &mu).unwrap());
        let out = m.local_descent_step(&SquaredLoss, &obs, std::slice::from_ref(&t), &[2.0]);
        assert_eq!(out, vec![t]);
    }
}
