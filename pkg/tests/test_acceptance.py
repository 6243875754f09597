"""Acceptance criteria, each at its stated tolerance.

One PASS/FAIL line per criterion is printed in the pytest terminal summary.
"""
import sys
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, random_hurwitz, random_spd
from neural_l1 import numlin, signals as sg
from neural_l1.certify import certify_design
from neural_l1.controllers import ControllerKind as K, design_gains
from neural_l1.harness import config, io as hio, sim
from neural_l1.plant import build_plant
from test_neural import gradient_check

ZETA = [0.5314, 0.16918, -0.6245, 0.1095]


def record(cid, title, ok, detail):
    ACCEPTANCE[cid] = (title, bool(ok), detail)
    print(f"[{'PASS' if ok else 'FAIL'}] {cid}. {title}: {detail}")
    assert ok, detail


def circle_scenario(controllers, duration=60.0):
    doc = {
        "schema": 1,
        "defaults": {
            "duration": duration,
            "seed": 0,
            "controllers": controllers,
            "track": {"kind": "circle", "radius": 10.0},
            "vehicle": {"Vx": 10.0},
            "uncertainty": {"zeta": ZETA, "noise": [-0.1, 0.1]},
        },
        "scenarios": [{"name": "circle"}],
    }
    return config.parse_config(doc)[0]


@pytest.fixture(scope="module")
def neural_run():
    sc = circle_scenario(["neural-l1"])
    t0 = time.perf_counter()
    res = sim.run_scenario(sc)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def baseline_runs():
    return sim.run_scenario(circle_scenario(["lf", "deep-mrac", "l1"]))


def test_01_lyapunov_residual():
    rng = np.random.default_rng(1)
    cases = []
    for i in range(50):
        n = int(rng.integers(1, 5))
        cases.append((random_hurwitz(rng, n, shift=rng.uniform(0.05, 2.0)), random_spd(rng, n)))
    t0 = time.perf_counter()
    worst = 0.0
    for A, Q in cases:
        P = numlin.solve_lyapunov(A, Q)
        worst = max(worst, np.linalg.norm(A.T @ P + P @ A + Q) / np.linalg.norm(Q))
    elapsed = time.perf_counter() - t0
    record(1, "Lyapunov residual", worst < 1e-10 and elapsed < 1.0,
           f"max relative residual {worst:.2e} (< 1e-10), {elapsed:.3f} s (< 1 s)")


def test_02_l1_norm_oracle_and_monotone_lambda():
    errs = [abs(numlin.l1_norm(numlin.tf_to_lti([1.0], [1.0, a])) * a - 1.0) for a in (0.5, 1.0, 2.0, 10.0)]
    p = build_plant(config.default_vehicle())
    g = design_gains(p)
    grid = np.logspace(1, 5, 10)
    lam = [certify_design(p, g, w, sg.ProjectionSet(2.0), sg.ProjectionSet(1.0), 100.0, 1000.0,
                          raise_on_fail=False).lambda1 for w in grid]
    mono = all(b <= a for a, b in zip(lam, lam[1:]))
    record(2, "L1-norm oracle", max(errs) < 1e-3 and mono,
           f"max relative error {max(errs):.2e} (< 1e-3); lambda1 non-increasing over "
           f"{grid[0]:g}..{grid[-1]:g} rad/s: {mono}")


def test_03_projection_containment():
    p = build_plant(config.default_vehicle())
    g = design_gains(p)
    cfg = sg.AdaptationConfig(100.0, 1000.0, numlin.solve_lyapunov(g.A_m, np.eye(4)), p.B1)
    violations = 0
    rollouts = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        for pset in (sg.ProjectionSet(1.0, 0.1), sg.ProjectionSet(2.0, 0.1), sg.ProjectionSet(0.5, 0.02)):
            W = np.zeros(16)
            z = sg.ParametricEstimate.zeros()
            scale = 10.0 ** rng.uniform(-3, 2)
            for _ in range(1000):
                xt = rng.normal(scale=scale, size=4)
                W = sg.adapt_W(W, cfg, xt, rng.uniform(-1, 1, 16), pset, 1e-3)
                z = sg.adapt_zeta(z, cfg, xt, rng.normal(scale=2.0, size=4), pset, 1e-3)
                violations += np.linalg.norm(W) > pset.hard_radius
                violations += np.linalg.norm(z.zeta_hat) > pset.hard_radius
            rollouts += 1
    record(3, "Projection containment", violations == 0,
           f"{violations} violations over {rollouts} rollouts x 1000 steps (W and zeta_hat)")


def test_04_gradient_check():
    worst = max(gradient_check(seed) for seed in range(20))
    record(4, "Gradient check", worst < 1e-5, f"max relative error {worst:.2e} over 20 nets (< 1e-5)")


def test_05_prediction_error_bound(neural_run):
    res, elapsed = neural_run
    tr = res.traces[K.NEURAL_L1]
    xt = tr["xhat"] - tr["x"]
    sup_inf = float(np.abs(xt).max())
    sup_2 = float(np.linalg.norm(xt, axis=1).max())
    bound = res.report.x_tilde_bound
    ok = (not tr.diverged and len(tr) == 60000 and sup_inf <= bound and sup_2 <= bound and elapsed < 10.0)
    record(5, "Prediction-error bound", ok,
           f"sup|x_tilde| = {sup_inf:.4f} (2-norm {sup_2:.4f}) <= {bound:.4f}; run {elapsed:.2f} s (< 10 s)")


def test_06_reference_tracking_bounds(neural_run):
    res, _ = neural_run
    a = res.audits[K.NEURAL_L1]
    record(6, "Reference-system bounds", a.pass_gamma1 and a.pass_gamma2,
           f"||x_ref - x|| = {a.xref_diff_sup:.4f} <= gamma1 = {a.gamma1:.4f}; "
           f"||u_ref - u|| = {a.uref_diff_sup:.4f} <= gamma2 = {a.gamma2:.4f}")


def test_07_controller_ordering(neural_run, baseline_runs):
    nl1 = neural_run[0].metrics[K.NEURAL_L1]
    m = baseline_runs.metrics
    l1, dm, lf = m[K.L1], m[K.DEEP_MRAC], m[K.LF]
    ref = nl1.max_abs_e1
    parts = {
        "neural-l1 completes, max|e1| < 0.5": nl1.completion == 1.0 and not nl1.diverged and ref < 0.5,
        "l1 completes, max|e1| < 0.5": l1.completion == 1.0 and not l1.diverged and l1.max_abs_e1 < 0.5,
        "deep-mrac >= 2x or diverges": dm.diverged or dm.max_abs_e1 >= 2 * ref,
        "lf >= 2x or diverges": lf.diverged or lf.max_abs_e1 >= 2 * ref,
    }
    detail = (f"max|e1|: neural-l1 {ref:.4f}, l1 {l1.max_abs_e1:.4f}, deep-mrac {dm.max_abs_e1:.4f}"
              f"{' (diverged)' if dm.diverged else ''}, lf {lf.max_abs_e1:.4g}{' (diverged)' if lf.diverged else ''}; "
              + "; ".join(f"{k}: {'ok' if v else 'NOT MET'}" for k, v in parts.items()))
    record(7, "Controller ordering", all(parts.values()), detail)


def test_08_uncertainty_learning(neural_run):
    res, _ = neural_run
    mae = res.metrics[K.NEURAL_L1].ss_mae
    record(8, "Uncertainty learning", mae < 0.05, f"steady-state MAE {mae:.4f} rad (< 0.05)")


def test_09_null_case_equivalence():
    doc = {"schema": 1, "defaults": {"duration": 30.0, "controllers": ["lf", "l1"]},
           "scenarios": [{"name": "null"}]}
    res = sim.run_scenario(config.parse_config(doc)[0])
    gap = float(np.abs(res.traces[K.L1]["x"] - res.traces[K.LF]["x"]).max())
    record(9, "Null-case equivalence", gap <= 1e-6, f"sup |x_l1 - x_lf| = {gap:.2e} over 30 s (<= 1e-6)")


def test_10_determinism(tmp_path):
    sc = circle_scenario(["lf", "deep-mrac", "l1", "neural-l1"], duration=5.0)
    a = hio.write_result(sim.run_scenario(sc), tmp_path / "a")
    b = hio.write_result(sim.run_scenario(sc), tmp_path / "b")
    names = sorted(p.name for p in a.iterdir())
    same = all((a / n).read_bytes() == (b / n).read_bytes() for n in names)
    record(10, "Determinism", same and len(names) == 6, f"{len(names)} files byte-identical: {same}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
