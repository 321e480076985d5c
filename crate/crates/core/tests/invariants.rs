mod common;

use adcg_core::measure::caratheodory_prune;
use adcg_core::models::{MomentCurve, SuperresModel};
use adcg_core::{
    apply_forward, project_capped_simplex, run, solve_weights, Atom, AtomicMeasure, ForwardModel, Observation,
    ParameterPoint, SolverConfig, SquaredLoss, Variant, WeightProblem,
};
use common::{enumerate_weights, half_squared_residual};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn measure_strategy(max_atoms: usize) -> impl Strategy<Value = AtomicMeasure> {
    prop::collection::vec((0.0..2.0f64, -1.0..1.0f64), 0..max_atoms).prop_map(|pairs| AtomicMeasure {
        atoms: pairs.into_iter().map(|(w, t)| Atom { w, theta: ParameterPoint(vec![t]) }).collect(),
    })
}

fn variant_strategy() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::Adcg), Just(Variant::CgmM), Just(Variant::Gf)]
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_operator_is_linear(a in measure_strategy(6), b in measure_strategy(6), c in 0.0..3.0f64) {
        let model = MomentCurve::new(3, -1.0, 1.0);
        let fa = apply_forward(&model, &a).unwrap();
        let fb = apply_forward(&model, &b).unwrap();
        let sum: Vec<f64> = fa.iter().zip(&fb).map(|(x, y)| x + y).collect();
        prop_assert!(close(&apply_forward(&model, &a.union(&b)).unwrap(), &sum, 1e-12));
        let scaled: Vec<f64> = fa.iter().map(|x| c * x).collect();
        prop_assert!(close(&apply_forward(&model, &a.scaled(c)).unwrap(), &scaled, 1e-12));
    }

    #[test]
    fn superres_forward_is_linear(
        atoms in prop::collection::vec((0.0..5.0f64, 0.0..800.0f64, 0.0..800.0f64), 1..5),
        c in 0.0..3.0f64,
    ) {
        let model = SuperresModel::new(8, 8, 100.0, 100.0).unwrap();
        let mu = AtomicMeasure {
            atoms: atoms.iter().map(|&(w, x, y)| Atom { w, theta: ParameterPoint(vec![x, y]) }).collect(),
        };
        let mut direct = vec![0.0; 64];
        for a in &mu.atoms {
            for (d, p) in direct.iter_mut().zip(model.psi(&a.theta.0)) {
                *d += c * a.w * p;
            }
        }
        prop_assert!(close(&apply_forward(&model, &mu.scaled(c)).unwrap(), &direct, 1e-12));
    }

    #[test]
    fn caratheodory_preserves_image_and_mass(mu in measure_strategy(14), degree in 1usize..4) {
        let model = MomentCurve::new(degree, -1.0, 1.0);
        let reduced = caratheodory_prune(&model, &mu).unwrap();
        prop_assert!(reduced.len() <= degree + 1);
        let before = apply_forward(&model, &mu).unwrap();
        let after = apply_forward(&model, &reduced).unwrap();
        prop_assert!(close(&before, &after, 1e-8), "{before:?} vs {after:?}");
        prop_assert!((mu.total_mass() - reduced.total_mass()).abs() <= 1e-8 * (1.0 + mu.total_mass()));
        prop_assert!(reduced.atoms.iter().all(|a| a.w > 0.0));
        // The result reweights a subset of the input atoms.
        prop_assert!(reduced.atoms.iter().all(|r| mu.atoms.iter().any(|a| a.theta == r.theta)));
    }

    #[test]
    fn weight_solver_matches_enumeration(
        d in 1usize..7,
        m in 1usize..6,
        entries in prop::collection::vec(-1.0..1.0f64, 36),
        y in prop::collection::vec(-2.0..2.0f64, 6),
        tau in 0.05..3.0f64,
    ) {
        let a = DMatrix::from_fn(d, m, |i, j| entries[i * 6 + j]);
        let y = &y[..d];
        let (_, best) = enumerate_weights(&a, y, tau);
        let prob = WeightProblem::new(a.clone(), y, tau, &SquaredLoss).unwrap();
        let sol = solve_weights(&prob, None).unwrap();
        prop_assert!(sol.converged);
        prop_assert!(sol.w.iter().all(|w| *w >= 0.0));
        prop_assert!(sol.w.iter().sum::<f64>() <= tau * (1.0 + 1e-12));
        prop_assert!((half_squared_residual(&a, &sol.w, y) - best).abs() <= 1e-6);
    }

    #[test]
    fn projection_is_feasible_and_idempotent(w in prop::collection::vec(-3.0..3.0f64, 1..8), tau in 0.01..4.0f64) {
        let p = project_capped_simplex(&w, tau);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
        prop_assert!(p.iter().sum::<f64>() <= tau * (1.0 + 1e-12));
        prop_assert!(close(&project_capped_simplex(&p, tau), &p, 1e-12));
        // Obtuse-angle property of the projection onto a convex set.
        let q = project_capped_simplex(&vec![0.0; w.len()], tau);
        let inner: f64 = w.iter().zip(&p).zip(&q).map(|((wi, pi), qi)| (wi - pi) * (qi - pi)).sum();
        prop_assert!(inner <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn solver_traces_are_consistent(
        y0 in -1.5..1.5f64,
        y1 in -0.5..2.0f64,
        tau in 0.2..2.0f64,
        variant in variant_strategy(),
    ) {
        let model = MomentCurve::new(2, -1.0, 1.0);
        let obs = Observation::new(vec![y0, y1]);
        let mut config = SolverConfig::new(variant, tau);
        config.max_outer_iters = 15;
        let res = run(&model, &obs, &SquaredLoss, &config).unwrap();

        let n = res.objective_trace.len();
        prop_assert_eq!(res.gap_trace.len(), n);
        prop_assert_eq!(res.support_trace.len(), n);
        for pair in res.objective_trace.windows(2) {
            prop_assert!(pair[1] <= pair[0] * (1.0 + 1e-12) + 1e-15, "objective rose: {:?}", pair);
        }
        prop_assert!(res.support_trace.iter().all(|s| *s <= 3));
        let best = res.objective_trace.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(res.lower_bound <= best);
        // Exact oracle: every gap is nonnegative and certifies the final value's optimality up to it.
        prop_assert!(res.gap_trace.iter().all(|g| *g >= -1e-12));
        prop_assert!(res.measure.total_mass() <= tau * (1.0 + 1e-9));
        for atom in &res.measure.atoms {
            prop_assert!(model.check_point(&atom.theta.0).is_ok());
        }
    }

    #[test]
    fn lower_bound_never_exceeds_enumerated_optimum(
        y0 in -1.5..1.5f64,
        y1 in -0.5..2.0f64,
        tau in 0.2..2.0f64,
    ) {
        // A fine atom grid gives an upper bound on the optimum over all measures.
        let model = MomentCurve::new(2, -1.0, 1.0);
        let res = run(&model, &Observation::new(vec![y0, y1]), &SquaredLoss, &SolverConfig::new(Variant::Adcg, tau)).unwrap();
        let grid: Vec<f64> = (0..=400).map(|i| -1.0 + i as f64 / 200.0).collect();
        let a = DMatrix::from_fn(2, grid.len(), |i, j| model.psi(&[grid[j]])[i]);
        let y = [y0, y1];
        let prob = WeightProblem::new(a, &y, tau, &SquaredLoss).unwrap();
        let grid_value = solve_weights(&prob, None).unwrap().objective;
        prop_assert!(res.lower_bound <= grid_value + 1e-9);
        prop_assert!(res.final_objective() <= grid_value + 1e-9);
    }
}
