import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from neural_l1 import signals as sg
from neural_l1.controllers import design_gains
from neural_l1.errors import DimensionMismatch, InvalidCutoff, InvalidParams
from neural_l1.harness.config import default_vehicle
from neural_l1.numlin import solve_lyapunov
from neural_l1.plant import build_plant

vec4 = arrays(np.float64, 4, elements=st.floats(-3, 3))


def test_projection_interior_passthrough():
    ps = sg.ProjectionSet(2.0, 0.1)
    y = np.array([1.0, -2.0, 0.5])
    assert np.array_equal(sg.projection(np.array([0.1, 0.2, 0.3]), y, ps), y)


def test_projection_on_outer_boundary_removes_outward_component():
    ps = sg.ProjectionSet(1.0, 0.1)
    theta = np.array([math.sqrt(1.1), 0.0])  # f = 1
    out = sg.projection(theta, np.array([2.0, 3.0]), ps)
    assert out == pytest.approx([0.0, 3.0])
    # inward drives pass unchanged
    assert sg.projection(theta, np.array([-2.0, 3.0]), ps) == pytest.approx([-2.0, 3.0])


@settings(max_examples=200, deadline=None)
@given(vec4, vec4, vec4)
def test_projection_never_moves_away_from_admissible_points(theta, y, star):
    # (theta - theta*)' (proj(theta, y) - y) <= 0 for ||theta*|| <= theta_max
    ps = sg.ProjectionSet(1.5, 0.2)
    if np.linalg.norm(theta) > ps.hard_radius:
        theta = theta * (ps.hard_radius / np.linalg.norm(theta))
    n = np.linalg.norm(star)
    if n > ps.theta_max:
        star = star * (ps.theta_max / n)
    d = sg.projection(theta, y, ps) - y
    assert float((theta - star) @ d) <= 1e-9 * (1 + np.abs(y).sum())


@settings(max_examples=200, deadline=None)
@given(vec4, vec4)
def test_projection_does_not_grow_norm_in_boundary_layer(theta, y):
    ps = sg.ProjectionSet(1.0, 0.5)
    n = np.linalg.norm(theta)
    if n < 1e-6:
        return
    theta = theta / n * 1.4  # within the layer: f in (0, 1)
    out = sg.projection(theta, y, ps)
    f = (theta @ theta - 1.0) / 0.5
    # outward speed is scaled by (1 - f)
    assert float(theta @ out) <= max(0.0, float(theta @ y)) * (1 - f) + 1e-12


def test_projection_set_validation():
    with pytest.raises(InvalidParams):
        sg.ProjectionSet(0.0)
    with pytest.raises(InvalidParams):
        sg.ProjectionSet(1.0, 0.0)
    assert sg.ProjectionSet(2.0, 0.1).hard_radius == pytest.approx(2.2)


def test_clip_to_ball():
    v = np.array([3.0, 4.0])
    assert sg.clip_to_ball(v, 10.0) is v
    assert np.linalg.norm(sg.clip_to_ball(v, 1.0)) == pytest.approx(1.0)


def test_filter_matches_exact_step_response():
    st_ = sg.FilterState(5.0)
    dt = 1e-3
    for _ in range(200):
        st_ = sg.filter_step(st_, 1.0, dt)
    assert st_.y == pytest.approx(1.0 - math.exp(-5.0 * 0.2), rel=1e-12)


def test_filter_validation():
    with pytest.raises(InvalidCutoff):
        sg.FilterState(0.0)
    with pytest.raises(InvalidCutoff):
        sg.filter_alpha(float("inf"), 1e-3)
    with pytest.raises(InvalidParams):
        sg.FilterState(1.0, order=2)
    with pytest.raises(InvalidParams):
        sg.filter_alpha(1.0, 0.0)


@pytest.fixture(scope="module")
def loop():
    p = build_plant(default_vehicle())
    g = design_gains(p)
    return p, g


def test_predictor_forms_agree(loop):
    p, g = loop
    dt = 1e-3
    prop = sg.PredictorPropagator(p.A, p.B1, p.B2, g.k_m, dt)
    pred = sg.PredictorState.start([0.1, 0.0, -0.05, 0.2])
    x_meas = np.array([0.09, 0.01, -0.04, 0.19])
    nxt = sg.predictor_step(pred, g.A_m, p.B1, p.B2, 0.3, -0.1, 1.0, x_meas, dt, k_m=g.k_m, A=p.A)
    ref = prop.step(pred.x_hat, 0.2, 1.0)
    assert np.allclose(nxt.x_hat, ref, rtol=1e-13, atol=1e-15)
    assert np.allclose(nxt.x_tilde, nxt.x_hat - x_meas)
    # the continuous A_m form differs only by the sample-and-hold of -k_m x_hat
    cont = sg.predictor_step(pred, g.A_m, p.B1, p.B2, 0.3, -0.1, 1.0, x_meas, dt)
    assert np.allclose(cont.x_hat, nxt.x_hat, atol=1e-3)


def _cfg(loop):
    p, g = loop
    return sg.AdaptationConfig(100.0, 1000.0, solve_lyapunov(g.A_m, np.eye(4)), p.B1)


def test_adapt_W_interior_step_sign(loop):
    # W+ = W - dt G1 (x~' P B1) phi inside the set
    cfg = _cfg(loop)
    xt = np.array([1e-3, 0.0, 0.0, 0.0])
    phi = np.linspace(-1, 1, 16)
    W = np.zeros(16)
    nxt = sg.adapt_W(W, cfg, xt, phi, sg.ProjectionSet(1.0), 1e-3)
    e = float(xt @ cfg.P @ cfg.B1)
    assert np.allclose(nxt, W - 1e-3 * 100.0 * e * phi)


def test_adapt_zeta_interior_step_sign(loop):
    cfg = _cfg(loop)
    xt = np.array([0.0, 1e-3, 0.0, -1e-3])
    x = np.array([0.2, -0.1, 0.05, 0.3])
    est = sg.adapt_zeta(sg.ParametricEstimate.zeros(), cfg, xt, x, sg.ProjectionSet(2.0), 1e-3)
    e = float(xt @ cfg.PB1)
    assert np.allclose(est.zeta_hat, -1e-3 * 1000.0 * e * x)


def test_adapt_dimension_checks(loop):
    cfg = _cfg(loop)
    with pytest.raises(DimensionMismatch):
        sg.adapt_W(np.zeros(3), cfg, np.zeros(4), np.zeros(4), sg.ProjectionSet(1.0), 1e-3)
    with pytest.raises(DimensionMismatch):
        sg.adapt_zeta(sg.ParametricEstimate.zeros(), cfg, np.zeros(3), np.zeros(4), sg.ProjectionSet(1.0), 1e-3)
    with pytest.raises(DimensionMismatch):
        sg.AdaptationConfig(1.0, 1.0, np.eye(3), np.ones(4))
    with pytest.raises(InvalidParams):
        sg.AdaptationConfig(0.0, 1.0, np.eye(4), np.ones(4))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.5, 1.0, 2.0]), st.sampled_from([0.01, 0.1, 0.5]))
def test_random_drive_rollouts_stay_in_hard_ball(loop, seed, theta_max, eps):
    rng = np.random.default_rng(seed)
    cfg = _cfg(loop)
    ps = sg.ProjectionSet(theta_max, eps)
    W = np.zeros(16)
    z = sg.ParametricEstimate.zeros()
    for _ in range(300):
        xt = rng.normal(scale=rng.choice([1e-3, 1.0, 100.0]), size=4)
        W = sg.adapt_W(W, cfg, xt, rng.normal(size=16), ps, 1e-3)
        z = sg.adapt_zeta(z, cfg, xt, rng.normal(size=4) * 5, ps, 1e-3)
        assert np.linalg.norm(W) <= ps.hard_radius
        assert np.linalg.norm(z.zeta_hat) <= ps.hard_radius
