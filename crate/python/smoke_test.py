"""Smoke test for the adcg Python extension.

Build and install the extension first, e.g.

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/adcg-*.whl

then run ``python python/smoke_test.py``.
"""

import json
import math
import tempfile

import adcg


def check_weights():
    w = adcg.project_capped_simplex([2.0, 2.0], 1.0)
    assert w == [0.5, 0.5], w
    w, objective, converged = adcg.solve_weights([[1.0, 1.0], [0.0, 1.0]], [1.0, 1.0], 10.0)
    assert converged and abs(w[0]) < 1e-10 and abs(w[1] - 1.0) < 1e-10, w
    assert objective < 1e-20


def check_toy_solve():
    model = adcg.MomentCurve(2, -1.0, 1.0)
    result = adcg.solve(model, [0.3, 1.5], 1.0, variant="ADCG", max_outer_iters=10)
    assert abs(result.objective_trace[-1] - 0.125) < 1e-6, result
    assert result.gap_trace[-1] < 1e-6
    assert sum(result.weights) <= 1.0 + 1e-12
    assert json.loads(result.json)["variant"] == "ADCG"


def check_superres():
    model = adcg.SuperresModel(16, 16, 100.0, 100.0)
    truth = [[720.0, 810.0]]
    y = adcg.apply_forward(model, [500.0], truth)
    result = adcg.solve(model, y, 5000.0, variant="ADCG", max_outer_iters=5)
    (x, yy), = result.points
    assert math.hypot(x - 720.0, yy - 810.0) < 1.0, result.points
    precision, recall, f1 = adcg.match_sources([(x, yy)], [tuple(truth[0])], 50.0)
    assert f1 == 1.0
    jac = model.jacobian([720.0, 810.0])
    assert len(jac) == model.output_dim and len(jac[0]) == model.param_dim


def check_errors():
    model = adcg.MatCompModel(2, 2, [(0, 0)])
    try:
        model.psi([0.5, 0.0, 1.0, 0.0])
    except ValueError:
        pass
    else:
        raise AssertionError("non-unit factor accepted")
    try:
        adcg.run_experiment("/nonexistent/config.json")
    except OSError as e:
        assert "/nonexistent/config.json" in str(e)
    else:
        raise AssertionError("missing config accepted")


def check_experiment():
    with tempfile.TemporaryDirectory() as tmp:
        config = adcg.generate("lowrank", tmp, 5)
        summary = json.loads(adcg.run_experiment(config))
        adcg_run = next(v for v in summary["variants"] if v["variant"] == "ADCG")
        assert adcg_run["metrics"]["rmse"] <= 1e-2, adcg_run
    assert adcg.sysid_score([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 100.0


if __name__ == "__main__":
    for check in (check_weights, check_toy_solve, check_superres, check_errors, check_experiment):
        check()
        print(f"ok  {check.__name__}")
