//! Single-input single-output LTI systems with a 2-dimensional state.
//!
//! An atom `theta = (x0_1, x0_2, r, alpha, B_1, B_2)` describes
//!
//! ```text
//! x_{t+1} = A x_t + B u_t,   y_t = C x_t,
//! A = r [[cos alpha, -sin alpha], [sin alpha, cos alpha]],   C = [1, 0]
//! ```
//!
//! driven by the inputs `u_0, ..., u_{T-1}`. The measurement is
//! `(y_1, ..., y_T)`, so output entry `t` sees inputs up to `u_t`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::measure::ParameterPoint;
use crate::solver::{polish_linear, ForwardModel};
use crate::util::linspace;
use crate::{Error, Result};

pub const X0_1: usize = 0;
pub const X0_2: usize = 1;
pub const RADIUS: usize = 2;
pub const ANGLE: usize = 3;
pub const B_1: usize = 4;
pub const B_2: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LtiOracleParams {
    #[serde(default = "default_grid")]
    pub radius_grid: usize,
    #[serde(default = "default_grid")]
    pub angle_grid: usize,
    #[serde(default = "default_polish")]
    pub polish_steps: usize,
}

fn default_grid() -> usize {
    50
}

fn default_polish() -> usize {
    100
}

impl Default for LtiOracleParams {
    fn default() -> Self {
        LtiOracleParams { radius_grid: default_grid(), angle_grid: default_grid(), polish_steps: default_polish() }
    }
}

#[derive(Clone, Debug)]
pub struct LtiModel {
    u: Vec<f64>,
    oracle: LtiOracleParams,
    bounds: Vec<(f64, f64)>,
}

fn rotation(r: f64, alpha: f64) -> [[f64; 2]; 2] {
    let (s, c) = alpha.sin_cos();
    [[r * c, -r * s], [r * s, r * c]]
}

fn apply(a: &[[f64; 2]; 2], x: [f64; 2]) -> [f64; 2] {
    [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]]
}

impl LtiModel {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        Self::with_oracle(u, LtiOracleParams::default())
    }

    pub fn with_oracle(u: Vec<f64>, oracle: LtiOracleParams) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::InvalidInput("input sequence is empty".into()));
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("input sequence has non-finite entries".into()));
        }
        if oracle.radius_grid == 0 || oracle.angle_grid == 0 {
            return Err(Error::InvalidInput("oracle grids must be nonempty".into()));
        }
        let pi = std::f64::consts::PI;
        let bounds = vec![(-1.0, 1.0), (-1.0, 1.0), (0.0, 1.0), (0.0, pi), (-1.0, 1.0), (-1.0, 1.0)];
        Ok(LtiModel { u, oracle, bounds })
    }

    pub fn horizon(&self) -> usize {
        self.u.len()
    }

    pub fn input(&self) -> &[f64] {
        &self.u
    }

    /// The same system driven by a different input sequence.
    pub fn with_input(&self, u: Vec<f64>) -> Result<Self> {
        Self::with_oracle(u, self.oracle.clone())
    }

    /// T x 4 matrix `G(r, alpha)` with `psi(theta) = G (x0_1, x0_2, B_1, B_2)`.
    pub fn linear_basis(&self, r: f64, alpha: f64) -> DMatrix<f64> {
        let t_len = self.u.len();
        let a = rotation(r, alpha);
        let mut g = DMatrix::zeros(t_len, 4);
        let mut sx = [[1.0, 0.0], [0.0, 1.0]];
        let mut sb = [[0.0, 0.0], [0.0, 0.0]];
        for (t, &ut) in self.u.iter().enumerate() {
            for k in 0..2 {
                sx[k] = apply(&a, sx[k]);
                let next = apply(&a, sb[k]);
                sb[k] = [next[0] + if k == 0 { ut } else { 0.0 }, next[1] + if k == 1 { ut } else { 0.0 }];
            }
            g[(t, 0)] = sx[0][0];
            g[(t, 1)] = sx[1][0];
            g[(t, 2)] = sb[0][0];
            g[(t, 3)] = sb[1][0];
        }
        g
    }
}

impl ForwardModel for LtiModel {
    fn output_dim(&self) -> usize {
        self.u.len()
    }

    fn param_dim(&self) -> usize {
        6
    }

    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn psi(&self, theta: &[f64]) -> Vec<f64> {
        let a = rotation(theta[RADIUS], theta[ANGLE]);
        let b = [theta[B_1], theta[B_2]];
        let mut x = [theta[X0_1], theta[X0_2]];
        self.u
            .iter()
            .map(|&ut| {
                let ax = apply(&a, x);
                x = [ax[0] + b[0] * ut, ax[1] + b[1] * ut];
                x[0]
            })
            .collect()
    }

    /// Forward sensitivities `S_{t+1} = A S_t + (dA) x_t + (dB) u_t`.
    fn jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        let (r, alpha) = (theta[RADIUS], theta[ANGLE]);
        let a = rotation(r, alpha);
        let (s, c) = alpha.sin_cos();
        let da_dr = [[c, -s], [s, c]];
        let da_dalpha = [[-r * s, -r * c], [r * c, -r * s]];
        let b = [theta[B_1], theta[B_2]];

        let mut x = [theta[X0_1], theta[X0_2]];
        let mut sens = [[0.0; 2]; 6];
        sens[X0_1] = [1.0, 0.0];
        sens[X0_2] = [0.0, 1.0];
        let mut jac = DMatrix::zeros(self.u.len(), 6);
        for (t, &ut) in self.u.iter().enumerate() {
            let mut next = [[0.0; 2]; 6];
            for (k, s_k) in sens.iter().enumerate() {
                next[k] = apply(&a, *s_k);
            }
            let dr = apply(&da_dr, x);
            let dalpha = apply(&da_dalpha, x);
            next[RADIUS][0] += dr[0];
            next[RADIUS][1] += dr[1];
            next[ANGLE][0] += dalpha[0];
            next[ANGLE][1] += dalpha[1];
            next[B_1][0] += ut;
            next[B_2][1] += ut;
            sens = next;

            let ax = apply(&a, x);
            x = [ax[0] + b[0] * ut, ax[1] + b[1] * ut];
            for k in 0..6 {
                jac[(t, k)] = sens[k][0];
            }
        }
        jac
    }

    /// Grids `(r, alpha)`; for fixed `(r, alpha)` the optimal `(x0, B)` is
    /// the box vertex `-sign(G^T v)` with zero mapped to `+1`. The best grid
    /// atom is then polished in all six coordinates.
    fn lmo(&self, v: &[f64]) -> ParameterPoint {
        let vv = nalgebra::DVector::from_column_slice(v);
        let radii = linspace(0.0, 1.0, self.oracle.radius_grid);
        let angles = linspace(0.0, std::f64::consts::PI, self.oracle.angle_grid);
        let mut best: Option<(f64, Vec<f64>)> = None;
        for &r in &radii {
            for &alpha in &angles {
                let c = self.linear_basis(r, alpha).tr_mul(&vv);
                let z: Vec<f64> = c.iter().map(|ci| if *ci > 0.0 { -1.0 } else { 1.0 }).collect();
                let value: f64 = c.iter().zip(&z).map(|(ci, zi)| ci * zi).sum();
                if best.as_ref().is_none_or(|(b, _)| value < *b) {
                    best = Some((value, vec![z[0], z[1], r, alpha, z[2], z[3]]));
                }
            }
        }
        let (_, start) = best.expect("grid is nonempty");
        ParameterPoint(polish_linear(self, v, start, self.oracle.polish_steps))
    }
}
