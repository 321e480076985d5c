//! Small models with closed-form oracles, handy for checking solver
//! guarantees.

use nalgebra::DMatrix;

use crate::measure::ParameterPoint;
use crate::solver::ForwardModel;

/// `psi(theta) = (theta, theta^2, ..., theta^degree)` on `[lo, hi]`.
///
/// The oracle is exact for `degree <= 3` (stationary points of a quadratic
/// or linear derivative plus endpoints); higher degrees fall back to a grid
/// with local polishing.
#[derive(Clone, Debug)]
pub struct MomentCurve {
    degree: usize,
    bounds: Vec<(f64, f64)>,
}

impl MomentCurve {
    pub fn new(degree: usize, lo: f64, hi: f64) -> Self {
        assert!(degree >= 1, "degree must be positive");
        assert!(lo < hi, "empty interval");
        MomentCurve { degree, bounds: vec![(lo, hi)] }
    }

    fn candidates(&self, v: &[f64]) -> Vec<f64> {
        let (lo, hi) = self.bounds[0];
        let mut out = vec![lo, hi];
        match self.degree {
            1 => {}
            2 => {
                // v1 + 2 v2 t = 0
                if v[1] != 0.0 {
                    out.push(-v[0] / (2.0 * v[1]));
                }
            }
            3 => {
                // v1 + 2 v2 t + 3 v3 t^2 = 0
                let (a, b, c) = (3.0 * v[2], 2.0 * v[1], v[0]);
                if a == 0.0 {
                    if b != 0.0 {
                        out.push(-c / b);
                    }
                } else {
                    let disc = b * b - 4.0 * a * c;
                    if disc >= 0.0 {
                        let s = disc.sqrt();
                        // Numerically stable pair of roots.
                        let q = -0.5 * (b + b.signum() * s);
                        if q != 0.0 {
                            out.push(q / a);
                            out.push(c / q);
                        } else {
                            out.push(0.0);
                        }
                    }
                }
            }
            _ => out.extend(crate::util::linspace(lo, hi, 2001)),
        }
        out.retain(|t| *t >= lo && *t <= hi);
        out
    }

    pub fn value(&self, theta: f64, v: &[f64]) -> f64 {
        crate::util::dot(&self.psi(&[theta]), v)
    }
}

impl ForwardModel for MomentCurve {
    fn output_dim(&self) -> usize {
        self.degree
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn psi(&self, theta: &[f64]) -> Vec<f64> {
        let t = theta[0];
        let mut out = Vec::with_capacity(self.degree);
        let mut p = 1.0;
        for _ in 0..self.degree {
            p *= t;
            out.push(p);
        }
        out
    }

    fn jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        let t = theta[0];
        DMatrix::from_fn(self.degree, 1, |k, _| (k + 1) as f64 * t.powi(k as i32))
    }

    fn lmo(&self, v: &[f64]) -> ParameterPoint {
        let mut best = (self.bounds[0].0, self.value(self.bounds[0].0, v));
        for t in self.candidates(v) {
            let val = self.value(t, v);
            if val < best.1 {
                best = (t, val);
            }
        }
        let theta = if self.degree > 3 {
            crate::solver::polish_linear(self, v, vec![best.0], 50)
        } else {
            vec![best.0]
        };
        ParameterPoint(theta)
    }

    fn lmo_is_exact(&self) -> bool {
        self.degree <= 3
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_oracle_beats_dense_grid() {
        let model = MomentCurve::new(3, -1.0, 1.0);
        let vs = [[0.3, -1.0, 0.2], [-0.5, 0.1, 0.9], [0.0, 0.0, 0.0], [1.0, 2.0, -3.0], [0.0, 1.0, 0.0]];
        for v in vs {
            let t = model.lmo(&v)[0];
            let got = model.value(t, &v);
            let grid_best = crate::util::linspace(-1.0, 1.0, 20001)
                .into_iter()
                .map(|s| model.value(s, &v))
                .fold(f64::INFINITY, f64::min);
            assert!(got <= grid_best + 1e-12, "v={v:?}: {got} vs {grid_best}");
        }
    }
}
