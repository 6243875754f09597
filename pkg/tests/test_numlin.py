import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st
from scipy import integrate

from neural_l1 import numlin
from neural_l1.errors import NonSquare, NotHurwitz, NotSPD, NotSymmetric
from conftest import random_hurwitz, random_spd


def _freq(sys, w):
    n = sys.A.shape[0]
    return np.array([(sys.C @ np.linalg.solve(1j * wk * np.eye(n) - sys.A, sys.B) + sys.D)[0, 0] for wk in w])


def _match(a, b):
    """Max distance after greedy nearest pairing of two eigenvalue sets."""
    b = list(b)
    worst = 0.0
    for v in a:
        j = int(np.argmin([abs(v - w) for w in b]))
        worst = max(worst, abs(v - b.pop(j)))
    return worst


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_eigvals_agree_with_lapack(n, seed):
    A = np.random.default_rng(seed).normal(size=(n, n))
    ours = numlin.eigvals(A)
    ref = np.linalg.eigvals(A)
    assert _match(ours, ref) < 1e-8 * max(1.0, np.abs(ref).max())


def test_hessenberg_is_similar():
    A = np.random.default_rng(3).normal(size=(5, 5))
    H = numlin.hessenberg(A)
    assert np.allclose(np.tril(H, -2), 0.0)
    assert _match(np.linalg.eigvals(H), np.linalg.eigvals(A)) < 1e-10


def test_is_hurwitz_boundary():
    assert numlin.is_hurwitz(np.diag([-1.0, -2.0]))
    assert not numlin.is_hurwitz(np.diag([-1.0, 0.0]))
    # marginal by less than the tolerance counts as not Hurwitz
    assert not numlin.is_hurwitz(np.diag([-1.0, -1e-12]))
    rot = np.array([[0.0, 1.0], [-1.0, 0.0]])
    assert not numlin.is_hurwitz(rot)


def test_eig_extremes_requires_symmetry():
    with pytest.raises(NotSymmetric):
        numlin.eig_extremes(np.array([[1.0, 2.0], [0.0, 1.0]]))
    lo, hi = numlin.eig_extremes(np.diag([3.0, 0.5, 2.0]))
    assert (lo, hi) == pytest.approx((0.5, 3.0))


def test_lyapunov_scalar():
    P = numlin.solve_lyapunov([[-1.0]], [[1.0]])
    assert P[0, 0] == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_lyapunov_matches_scipy(rng, n):
    for _ in range(10):
        A = random_hurwitz(rng, n)
        Q = random_spd(rng, n)
        P = numlin.solve_lyapunov(A, Q)
        ref = sla.solve_continuous_lyapunov(A.T, -Q)
        assert np.allclose(P, ref, rtol=1e-8, atol=1e-10)
        assert np.allclose(P, P.T)
        assert np.linalg.eigvalsh(P).min() > 0


def test_lyapunov_errors():
    with pytest.raises(NotHurwitz):
        numlin.solve_lyapunov(np.diag([-1.0, 0.5]), np.eye(2))
    with pytest.raises(NotSPD):
        numlin.solve_lyapunov(-np.eye(2), np.diag([1.0, -1.0]))
    with pytest.raises(NotSPD):
        numlin.solve_lyapunov(-np.eye(2), np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(NonSquare):
        numlin.solve_lyapunov(np.ones((2, 3)), np.eye(2))
    with pytest.raises(NonSquare):
        numlin.solve_lyapunov(-np.eye(2), np.eye(3))


def test_rk4_exponential():
    x = np.array([1.0])
    for _ in range(1000):
        x = numlin.rk4_step(lambda z: -z, x, 1e-3)
    assert x[0] == pytest.approx(math.exp(-1.0), rel=1e-12)


def test_affine_rk4_matches_stepper(rng):
    A = random_hurwitz(rng, 4)
    b = rng.normal(size=4)
    x = rng.normal(size=4)
    Phi, Gam = numlin.affine_rk4(A, 0.01)
    step = numlin.rk4_step(lambda z: A @ z + b, x, 0.01)
    assert np.allclose(Phi @ x + Gam @ b, step, rtol=1e-13, atol=1e-14)
    assert np.allclose(Phi, sla.expm(0.01 * A), atol=1e-9)


def test_lti_is_read_only():
    sys = numlin.state_space([[-1.0]], [[1.0]])
    assert sys.shape == (1, 1)
    with pytest.raises(ValueError):
        sys.A[0, 0] = 2.0


def test_series_matches_product():
    first = numlin.first_order_lowpass(3.0)
    second = numlin.tf_to_lti([1.0], [1.0, 2.0])
    sys = numlin.series(first, second)
    w = np.logspace(-2, 2, 20)
    h = _freq(sys, w)
    expect = 3.0 / (1j * w + 3.0) / (1j * w + 2.0)
    assert np.allclose(h, expect, rtol=1e-10)


def test_one_minus_lowpass_frequency_response():
    sys = numlin.one_minus_lowpass(5.0)
    w = np.logspace(-2, 3, 15)
    h = _freq(sys, w)
    assert np.allclose(h, 1j * w / (1j * w + 5.0), rtol=1e-12)


def test_tf_to_lti_with_feedthrough():
    sys = numlin.tf_to_lti([2.0, 3.0, 1.0], [1.0, 4.0, 5.0])
    w = np.logspace(-1, 2, 10)
    h = _freq(sys, w)
    s = 1j * w
    assert np.allclose(h, (2 * s**2 + 3 * s + 1) / (s**2 + 4 * s + 5), rtol=1e-12)


def test_char_poly():
    A = np.array([[0.0, 1.0], [-2.0, -3.0]])
    assert np.allclose(numlin.char_poly(A), [1.0, 3.0, 2.0])


# --------------------------------------------------------------------------- L1 norm


def _quad_l1(sys, T, breaks=()):
    A, B, C = sys.A, sys.B, sys.C
    f = lambda t: np.abs(C @ sla.expm(A * t) @ B).sum()
    edges = [0.0, *[b for b in breaks if 0 < b < T], T]
    val = sum(integrate.quad(f, a, b, limit=200, epsabs=1e-13, epsrel=1e-10)[0]
              for a, b in zip(edges[:-1], edges[1:]))
    return val + np.abs(sys.D).sum()


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0, 10.0])
def test_l1_first_order(a):
    assert numlin.l1_norm(numlin.tf_to_lti([1.0], [1.0, a])) == pytest.approx(1.0 / a, rel=1e-3)


def test_l1_oscillatory_against_quadrature():
    # lightly damped pair: |h| has many sign changes
    sys = numlin.tf_to_lti([1.0], [1.0, 0.4, 4.0])
    wd = math.sqrt(4.0 - 0.04)
    zeros = np.arange(1, 60) * math.pi / wd
    assert numlin.l1_norm(sys) == pytest.approx(_quad_l1(sys, 80.0, zeros), rel=1e-3)


def test_l1_scalar_filtered_plant_against_quadrature():
    # (1 - C(s)) (s + 1)^-1 with C(s) = 1/(s + 1)
    G = numlin.series(numlin.one_minus_lowpass(1.0), numlin.state_space([[-1.0]], [[1.0]]))
    assert numlin.l1_norm(G) == pytest.approx(_quad_l1(G, 60.0), rel=1e-3)


def test_l1_stiff_system_against_quadrature():
    # fast and slow modes together exercise the grid coarsening
    sys = numlin.series(numlin.one_minus_lowpass(2000.0), numlin.tf_to_lti([1.0, 1.0], [1.0, 3.0, 2.0]))
    f = lambda t: np.abs(sys.C @ sla.expm(sys.A * t) @ sys.B).sum()
    ref = sum(integrate.quad(f, a, b, limit=500, epsabs=1e-14, epsrel=1e-10)[0]
              for a, b in [(0.0, 5e-3), (5e-3, 1.0), (1.0, 40.0)])
    assert numlin.l1_norm(sys) == pytest.approx(ref, rel=1e-3)


def test_l1_repeated_poles():
    sys = numlin.tf_to_lti([1.0], [1.0, 4.0, 6.0, 4.0, 1.0])  # (s + 1)^4, nonnegative response
    assert numlin.l1_norm(sys) == pytest.approx(1.0, rel=1e-3)


def test_l1_per_row_and_feedthrough():
    sys = numlin.state_space(np.diag([-1.0, -4.0]), np.eye(2), np.eye(2), [[0.5, 0.0], [0.0, -2.0]])
    rows = numlin.l1_norm(sys, per_row=True)
    assert rows == pytest.approx([1.5, 2.25], rel=1e-3)
    assert numlin.l1_norm(sys) == pytest.approx(2.25, rel=1e-3)


def test_l1_requires_hurwitz():
    with pytest.raises(NotHurwitz):
        numlin.l1_norm(numlin.state_space([[0.1]], [[1.0]]))
