"""Small dense linear algebra, Lyapunov/Hurwitz checks and L1 norms of LTI systems.

Matrices are plain ``numpy`` arrays. Everything here is a pure function of its
inputs; ``LtiSystem`` is frozen.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonConvergent, NonFinite, NonSquare, NotHurwitz, NotSPD, NotSymmetric

TOL_HURWITZ = 1e-9
_EPS = np.finfo(float).eps


def _square(A, name="A") -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NonSquare(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NonFinite(f"{name} has non-finite entries")
    return A


# --------------------------------------------------------------------------- eigenvalues


def hessenberg(A) -> np.ndarray:
    """Householder reduction to upper Hessenberg form (complex copy)."""
    H = np.array(_square(A), dtype=complex)
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1 :, k]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        v = x.copy()
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        v[0] += phase * alpha
        v /= np.linalg.norm(v)
        H[k + 1 :, :] -= 2.0 * np.outer(v, v.conj() @ H[k + 1 :, :])
        H[:, k + 1 :] -= 2.0 * np.outer(H[:, k + 1 :] @ v, v.conj())
    return H


def eigvals(A, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues by shifted QR iteration on the Hessenberg form.

    Uses Wilkinson shifts, Givens rotations and deflation of negligible
    subdiagonal entries. Intended for the n <= 8 matrices used here.
    """
    H = hessenberg(A)
    n = H.shape[0]
    scale = max(np.abs(H).sum(axis=0).max(), 1e-300)
    out: list[complex] = []
    hi = n - 1
    it = 0
    while hi >= 0:
        lo = hi
        while lo > 0:
            s = abs(H[lo, lo]) + abs(H[lo - 1, lo - 1])
            if s == 0.0:
                s = scale
            if abs(H[lo, lo - 1]) <= _EPS * s:
                H[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            out.append(complex(H[hi, hi]))
            hi -= 1
            it = 0
            continue
        it += 1
        if it > max_sweeps * n:
            raise NonConvergent("QR iteration did not converge")
        a, b = H[hi - 1, hi - 1], H[hi - 1, hi]
        c, d = H[hi, hi - 1], H[hi, hi]
        disc = np.sqrt((a - d) ** 2 / 4.0 + b * c)
        mu1 = (a + d) / 2.0 + disc
        mu2 = (a + d) / 2.0 - disc
        mu = mu1 if abs(mu1 - d) < abs(mu2 - d) else mu2
        if it % 11 == 0:
            # exceptional shift breaks rare symmetric cycles
            mu = d + 0.75 * abs(c)
        B = H[lo : hi + 1, lo : hi + 1]
        m = B.shape[0]
        B[np.diag_indices(m)] -= mu
        rots = []
        for k in range(m - 1):
            x, y = B[k, k], B[k + 1, k]
            r = math.hypot(abs(x), abs(y))
            if r == 0.0:
                G = np.eye(2, dtype=complex)
            else:
                cs, sn = x / r, y / r
                G = np.array([[cs.conjugate(), sn.conjugate()], [-sn, cs]])
            B[k : k + 2, k:] = G @ B[k : k + 2, k:]
            rots.append(G)
        for k, G in enumerate(rots):
            B[:, k : k + 2] = B[:, k : k + 2] @ G.conj().T
        B[np.diag_indices(m)] += mu
    return np.array(out[::-1])


def is_hurwitz(A, tol: float = TOL_HURWITZ) -> bool:
    """True iff every eigenvalue of ``A`` has real part below ``-tol``."""
    lam = eigvals(A)
    return bool(np.max(lam.real) < -tol)


def _check_symmetric(M, name="M") -> np.ndarray:
    M = _square(M, name)
    if np.max(np.abs(M - M.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(M))):
        raise NotSymmetric(f"{name} is not symmetric")
    return M


def eig_extremes(M) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric matrix."""
    M = _check_symmetric(M)
    lam = eigvals(0.5 * (M + M.T)).real
    return float(lam.min()), float(lam.max())


# --------------------------------------------------------------------------- Lyapunov


def solve_lyapunov(A_m, Q) -> np.ndarray:
    """Solve ``A_m^T P + P A_m = -Q`` by Kronecker vectorisation.

    Raises
    ------
    NotHurwitz
        if ``A_m`` has an eigenvalue with real part >= -1e-9.
    NotSPD
        if ``Q`` is not symmetric positive definite.
    """
    A = _square(A_m, "A_m")
    Q = _square(Q, "Q")
    if Q.shape != A.shape:
        raise NonSquare(f"Q shape {Q.shape} does not match A_m {A.shape}")
    try:
        qmin, _ = eig_extremes(Q)
    except NotSymmetric as exc:
        raise NotSPD("Q is not symmetric") from exc
    if qmin <= 0.0:
        raise NotSPD(f"Q is not positive definite (min eigenvalue {qmin:g})")
    if not is_hurwitz(A):
        raise NotHurwitz("A_m is not Hurwitz")
    n = A.shape[0]
    eye = np.eye(n)
    K = np.kron(eye, A.T) + np.kron(A.T, eye)
    P = np.linalg.solve(K, -Q.reshape(-1, order="F")).reshape(n, n, order="F")
    # one refinement sweep keeps the residual at round-off level
    R = A.T @ P + P @ A + Q
    P = P + np.linalg.solve(K, -R.reshape(-1, order="F")).reshape(n, n, order="F")
    P = 0.5 * (P + P.T)
    pmin, _ = eig_extremes(P)
    if pmin <= 0.0:
        raise NotHurwitz("Lyapunov solution is not positive definite")
    return P


def lyapunov_residual(A_m, P, Q) -> float:
    A_m, P, Q = map(np.asarray, (A_m, P, Q))
    return float(np.linalg.norm(A_m.T @ P + P @ A_m + Q, "fro"))


# --------------------------------------------------------------------------- integration


def rk4_step(f: Callable[..., np.ndarray], x, dt: float, *args) -> np.ndarray:
    """Classical fourth-order Runge-Kutta step of ``x' = f(x, *args)``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    k1 = np.asarray(f(x, *args), dtype=float)
    k2 = np.asarray(f(x + 0.5 * dt * k1, *args), dtype=float)
    k3 = np.asarray(f(x + 0.5 * dt * k2, *args), dtype=float)
    k4 = np.asarray(f(x + dt * k3, *args), dtype=float)
    for k in (k1, k2, k3, k4):
        if not np.all(np.isfinite(k)):
            raise NonFinite("non-finite vector field evaluation in rk4_step")
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def affine_rk4(M, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact one-step RK4 map for ``x' = M x + b`` with ``b`` held constant.

    Returns ``(Phi, Gam)`` with ``rk4_step(...) == Phi @ x + Gam @ b``.
    """
    M = _square(M, "M")
    n = M.shape[0]
    h = M * dt
    h2 = h @ h
    h3 = h2 @ h
    eye = np.eye(n)
    Phi = eye + h + h2 / 2.0 + h3 / 6.0 + (h3 @ h) / 24.0
    Gam = dt * (eye + h / 2.0 + h2 / 6.0 + h3 / 24.0)
    return Phi, Gam


# --------------------------------------------------------------------------- LTI systems


@dataclass(frozen=True, eq=False)
class LtiSystem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0] if A.size else 0
        A = A.reshape(n, n)
        B = np.asarray(self.B, dtype=float).reshape(n, -1) if n else np.asarray(self.B, dtype=float)
        C = np.asarray(self.C, dtype=float)
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        m = D.shape[1]
        p = D.shape[0]
        B = B.reshape(n, m)
        C = C.reshape(p, n)
        for name, arr in (("A", A), ("B", B), ("C", C), ("D", D)):
            if not np.all(np.isfinite(arr)):
                raise NonFinite(f"LtiSystem.{name} has non-finite entries")
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.D.shape


def state_space(A, B, C=None, D=None) -> LtiSystem:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    if C is None:
        C = np.eye(A.shape[0])
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if D is None:
        D = np.zeros((C.shape[0], B.shape[1]))
    return LtiSystem(A, B, C, D)


def series(first: LtiSystem, second: LtiSystem) -> LtiSystem:
    """Cascade: the output of ``first`` drives ``second``."""
    n1, n2 = first.n_states, second.n_states
    A = np.zeros((n1 + n2, n1 + n2))
    A[:n1, :n1] = first.A
    A[n1:, :n1] = second.B @ first.C
    A[n1:, n1:] = second.A
    B = np.vstack([first.B, second.B @ first.D])
    C = np.hstack([second.D @ first.C, second.C])
    D = second.D @ first.D
    return LtiSystem(A, B, C, D)


def first_order_lowpass(omega_c: float) -> LtiSystem:
    """``omega_c / (s + omega_c)``."""
    return LtiSystem([[-omega_c]], [[omega_c]], [[1.0]], [[0.0]])


def one_minus_lowpass(omega_c: float) -> LtiSystem:
    """``1 - omega_c / (s + omega_c)``."""
    return LtiSystem([[-omega_c]], [[omega_c]], [[-1.0]], [[1.0]])


def tf_to_lti(num, den) -> LtiSystem:
    """Controllable canonical realisation of a proper SISO transfer function."""
    num = np.trim_zeros(np.atleast_1d(np.asarray(num, dtype=float)), "f")
    den = np.trim_zeros(np.atleast_1d(np.asarray(den, dtype=float)), "f")
    if den.size == 0:
        raise ValueError("zero denominator")
    if num.size > den.size:
        raise ValueError("transfer function is improper")
    num = num / den[0]
    den = den / den[0]
    n = den.size - 1
    num = np.concatenate([np.zeros(n + 1 - num.size), num])
    d0 = num[0]
    if n == 0:
        return LtiSystem(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[d0]])
    rem = num[1:] - d0 * den[1:]
    A = np.zeros((n, n))
    A[0, :] = -den[1:]
    A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = rem.reshape(1, n)
    return LtiSystem(A, B, C, [[d0]])


def char_poly(A) -> np.ndarray:
    """Monic characteristic polynomial coefficients (highest power first)."""
    return np.real(np.poly(eigvals(A)))


def l1_norm(
    sys: LtiSystem,
    dt: float | None = None,
    horizon: float | None = None,
    per_row: bool = False,
):
    """L1 norm (max over output rows of summed integrals of |impulse response|).

    The impulse response ``C exp(At) B`` is propagated with RK4; the integrand
    is accumulated with the trapezoidal rule. The state is stepped at a fine
    ``dt`` while fast modes are alive, and the evaluation grid is coarsened by
    powers of two (re-using squared propagators) once only slow modes remain.
    Direct feedthrough contributes ``sum |D_ij|``.
    """
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    direct = np.abs(D).sum(axis=1)
    if sys.n_states == 0:
        rows = direct
        return rows if per_row else float(rows.max())
    lam = eigvals(A)
    if not np.all(lam.real < -TOL_HURWITZ):
        raise NotHurwitz("l1_norm requires a Hurwitz state matrix")
    rates = -lam.real
    mags = np.abs(lam)
    slow = rates.min()
    if dt is None:
        dt = 1e-4 / rates.max()
    if horizon is None:
        horizon = math.log(1e9) / slow
    t_cap = 10.0 * horizon

    level_phi = [affine_rk4(A, dt)[0]]
    level = 0
    X = B.copy()
    prev = np.abs(C @ X)
    acc = np.zeros_like(prev)
    peak = np.abs(X).max()
    t = 0.0
    while True:
        # the slowest mode always counts as alive: it sets the tail resolution
        alive = mags[(rates * t < 30.0) | (rates <= slow)]
        allowed = 0.01 / alive.max()
        while dt * 2 ** (level + 1) <= allowed:
            level += 1
            if level == len(level_phi):
                level_phi.append(level_phi[-1] @ level_phi[-1])
        h = dt * 2**level
        X = level_phi[level] @ X
        cur = np.abs(C @ X)
        acc += 0.5 * h * (prev + cur)
        prev = cur
        t += h
        size = np.abs(X).max()
        if not math.isfinite(size):
            raise NonFinite("impulse response blew up; dt too large")
        peak = max(peak, size)
        if t >= horizon and size <= 1e-9 * peak:
            break
        if t > t_cap:
            raise NonConvergent("impulse response did not decay within 10x horizon")
    rows = acc.sum(axis=1) + direct
    return rows if per_row else float(rows.max())
