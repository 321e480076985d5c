//! Smooth convex losses of the residual `Phi mu - y`.

/// A differentiable convex loss on residual vectors.
pub trait Loss: Send + Sync {
    fn value(&self, r: &[f64]) -> f64;

    fn gradient(&self, r: &[f64]) -> Vec<f64>;

    /// Hessian-vector product at `r`. The default is a central difference of
    /// the gradient, exact for quadratic losses up to rounding.
    fn hessian_vec(&self, r: &[f64], v: &[f64]) -> Vec<f64> {
        let scale = crate::util::norm_inf(v).max(f64::MIN_POSITIVE);
        let h = 1e-6 * (1.0 + crate::util::norm_inf(r)) / scale;
        let plus: Vec<f64> = r.iter().zip(v).map(|(a, b)| a + h * b).collect();
        let minus: Vec<f64> = r.iter().zip(v).map(|(a, b)| a - h * b).collect();
        let gp = self.gradient(&plus);
        let gm = self.gradient(&minus);
        gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    }
}

/// `l(r) = 0.5 * ||r||^2`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SquaredLoss;

impl Loss for SquaredLoss {
    fn value(&self, r: &[f64]) -> f64 {
        squared_loss_value(r)
    }

    fn gradient(&self, r: &[f64]) -> Vec<f64> {
        squared_loss_gradient(r)
    }

    fn hessian_vec(&self, _r: &[f64], v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }
}

pub fn squared_loss_value(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|x| x * x).sum::<f64>()
}

pub fn squared_loss_gradient(r: &[f64]) -> Vec<f64> {
    r.to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn value_examples() {
        assert_eq!(squared_loss_value(&[0.0, 0.0]), 0.0);
        assert_eq!(squared_loss_value(&[3.0, 4.0]), 12.5);
        assert_eq!(squared_loss_value(&[1.0; 4]), 2.0);
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(squared_loss_gradient(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(squared_loss_gradient(&[3.0, 4.0]), vec![3.0, 4.0]);
    }

    fn central_difference(r: &[f64], i: usize, h: f64) -> f64 {
        let mut p = r.to_vec();
        let mut m = r.to_vec();
        p[i] += h;
        m[i] -= h;
        (squared_loss_value(&p) - squared_loss_value(&m)) / (2.0 * h)
    }

    #[test]
    fn default_hessian_vec_matches_identity_for_squared_loss() {
        struct NoHessian;
        impl Loss for NoHessian {
            fn value(&self, r: &[f64]) -> f64 {
                squared_loss_value(r)
            }
            fn gradient(&self, r: &[f64]) -> Vec<f64> {
                squared_loss_gradient(r)
            }
        }
        let hv = NoHessian.hessian_vec(&[1.0, -2.0, 0.5], &[0.3, 0.1, -4.0]);
        for (a, b) in hv.iter().zip([0.3, 0.1, -4.0]) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn gradient_matches_finite_differences(r in prop::collection::vec(-10.0f64..10.0, 1..50)) {
            let g = squared_loss_gradient(&r);
            for i in 0..r.len() {
                let fd = central_difference(&r, i, 1e-5);
                let rel = (fd - g[i]).abs() / (1.0 + g[i].abs());
                prop_assert!(rel <= 1e-6, "coord {}: fd {} vs {}", i, fd, g[i]);
            }
        }

        #[test]
        fn midpoint_convexity(
            pair in (1usize..20).prop_flat_map(|n| (
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
            ))
        ) {
            let (a, b) = pair;
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let lhs = squared_loss_value(&mid);
            let rhs = 0.5 * squared_loss_value(&a) + 0.5 * squared_loss_value(&b);
            prop_assert!(lhs <= rhs + 1e-12 * (1.0 + rhs));
        }
    }
}
