//! Pixelated 2-D superresolution with an integrated Gaussian point spread
//! function.
//!
//! A source at `(x, y)` nm contributes to pixel `(a, b)` (column `a`, row
//! `b`) the Gaussian mass of the pixel square:
//!
//! ```text
//! [G((a+1)s - x) - G(a s - x)] * [G((b+1)s - y) - G(b s - y)]
//! ```
//!
//! with `G` the Gaussian CDF of scale `sigma` and `s` the pixel size.
//! Images are stored row-major: pixel `(a, b)` is entry `b * grid_w + a`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::measure::ParameterPoint;
use crate::solver::{polish_linear, ForwardModel};
use crate::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperresParams {
    pub grid_w: usize,
    pub grid_h: usize,
    /// nm per pixel.
    pub pixel_size: f64,
    /// PSF standard deviation in nm.
    pub sigma: f64,
    /// Oracle grid candidates per pixel along each axis.
    #[serde(default = "default_grid_factor")]
    pub lmo_grid_factor: usize,
    #[serde(default = "default_polish_steps")]
    pub lmo_polish_steps: usize,
}

fn default_grid_factor() -> usize {
    1
}

fn default_polish_steps() -> usize {
    100
}

#[derive(Clone, Debug)]
pub struct SuperresModel {
    params: SuperresParams,
    bounds: Vec<(f64, f64)>,
}

impl SuperresModel {
    pub fn new(grid_w: usize, grid_h: usize, pixel_size: f64, sigma: f64) -> Result<Self> {
        Self::from_params(SuperresParams {
            grid_w,
            grid_h,
            pixel_size,
            sigma,
            lmo_grid_factor: default_grid_factor(),
            lmo_polish_steps: default_polish_steps(),
        })
    }

    pub fn from_params(params: SuperresParams) -> Result<Self> {
        if params.grid_w == 0 || params.grid_h == 0 {
            return Err(Error::InvalidInput("image grid must be nonempty".into()));
        }
        if !(params.pixel_size > 0.0) || !(params.sigma > 0.0) {
            return Err(Error::InvalidInput("pixel_size and sigma must be positive".into()));
        }
        if params.lmo_grid_factor == 0 {
            return Err(Error::InvalidInput("lmo_grid_factor must be at least 1".into()));
        }
        let bounds = vec![
            (0.0, params.grid_w as f64 * params.pixel_size),
            (0.0, params.grid_h as f64 * params.pixel_size),
        ];
        Ok(SuperresModel { params, bounds })
    }

    pub fn params(&self) -> &SuperresParams {
        &self.params
    }

    pub fn grid_w(&self) -> usize {
        self.params.grid_w
    }

    pub fn grid_h(&self) -> usize {
        self.params.grid_h
    }

    pub fn pixel_size(&self) -> f64 {
        self.params.pixel_size
    }

    /// Gaussian mass of `[lo, hi]` around `center`, computed from whichever
    /// tail keeps the difference well conditioned.
    fn interval_mass(&self, lo: f64, hi: f64, center: f64) -> f64 {
        let scale = self.params.sigma * SQRT_2;
        let (a, b) = ((lo - center) / scale, (hi - center) / scale);
        if a >= 0.0 {
            0.5 * (erfc(a) - erfc(b))
        } else if b <= 0.0 {
            0.5 * (erfc(-b) - erfc(-a))
        } else {
            1.0 - 0.5 * (erfc(-a) + erfc(b))
        }
    }

    fn density(&self, t: f64) -> f64 {
        let s = self.params.sigma;
        (-0.5 * (t / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
    }

    /// Per-pixel mass along one axis for a source at `center`.
    pub fn axis_profile(&self, n: usize, center: f64) -> Vec<f64> {
        let s = self.params.pixel_size;
        (0..n).map(|a| self.interval_mass(a as f64 * s, (a + 1) as f64 * s, center)).collect()
    }

    /// Derivative of [`axis_profile`](Self::axis_profile) with respect to `center`.
    pub fn axis_profile_derivative(&self, n: usize, center: f64) -> Vec<f64> {
        let s = self.params.pixel_size;
        (0..n)
            .map(|a| -(self.density((a + 1) as f64 * s - center) - self.density(a as f64 * s - center)))
            .collect()
    }

    fn candidates(&self, n: usize) -> Vec<f64> {
        let k = self.params.lmo_grid_factor;
        let step = self.params.pixel_size / k as f64;
        (0..n * k).map(|i| (i as f64 + 0.5) * step).collect()
    }
}

impl ForwardModel for SuperresModel {
    fn output_dim(&self) -> usize {
        self.params.grid_w * self.params.grid_h
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn psi(&self, theta: &[f64]) -> Vec<f64> {
        let (w, h) = (self.params.grid_w, self.params.grid_h);
        let ex = self.axis_profile(w, theta[0]);
        let ey = self.axis_profile(h, theta[1]);
        let mut out = Vec::with_capacity(w * h);
        for eyb in &ey {
            out.extend(ex.iter().map(|exa| exa * eyb));
        }
        out
    }

    fn jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        let (w, h) = (self.params.grid_w, self.params.grid_h);
        let ex = self.axis_profile(w, theta[0]);
        let ey = self.axis_profile(h, theta[1]);
        let dx = self.axis_profile_derivative(w, theta[0]);
        let dy = self.axis_profile_derivative(h, theta[1]);
        let mut jac = DMatrix::zeros(w * h, 2);
        for b in 0..h {
            for a in 0..w {
                jac[(b * w + a, 0)] = dx[a] * ey[b];
                jac[(b * w + a, 1)] = ex[a] * dy[b];
            }
        }
        jac
    }

    /// Scores every grid candidate through the separable structure
    /// `<psi(x, y), v> = ey(y)^T V ex(x)`, then polishes the best one.
    fn lmo(&self, v: &[f64]) -> ParameterPoint {
        let (w, h) = (self.params.grid_w, self.params.grid_h);
        let cx = self.candidates(w);
        let cy = self.candidates(h);
        let ex: Vec<Vec<f64>> = cx.iter().map(|&x| self.axis_profile(w, x)).collect();
        let ey: Vec<Vec<f64>> = cy.iter().map(|&y| self.axis_profile(h, y)).collect();

        // t[b][i] = sum_a V[b][a] ex_i[a]
        let mut t = vec![vec![0.0; cx.len()]; h];
        for (b, row) in t.iter_mut().enumerate() {
            let vrow = &v[b * w..(b + 1) * w];
            for (i, exi) in ex.iter().enumerate() {
                row[i] = crate::util::dot(vrow, exi);
            }
        }
        let mut best = (0usize, 0usize, f64::INFINITY);
        for (j, eyj) in ey.iter().enumerate() {
            for i in 0..cx.len() {
                let score: f64 = eyj.iter().zip(&t).map(|(e, row)| e * row[i]).sum();
                if score < best.2 {
                    best = (i, j, score);
                }
            }
        }
        let start = vec![cx[best.0], cy[best.1]];
        ParameterPoint(polish_linear(self, v, start, self.params.lmo_polish_steps))
    }
}
