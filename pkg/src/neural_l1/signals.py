"""Adaptive building blocks: projection, low-pass filter, state predictor, adaptive laws."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidCutoff, InvalidParams, NonFinite
from .numlin import affine_rk4, rk4_step


@dataclass(frozen=True)
class ProjectionSet:
    theta_max: float
    eps_proj: float = 0.1

    def __post_init__(self):
        if not self.theta_max > 0:
            raise InvalidParams("theta_max must be positive")
        if not 0 < self.eps_proj <= 1:
            raise InvalidParams("eps_proj must lie in (0, 1]")

    @property
    def hard_radius(self) -> float:
        return (1.0 + self.eps_proj) * self.theta_max


def projection(theta, y, pset: ProjectionSet) -> np.ndarray:
    """Smooth projection of drive ``y`` at parameter ``theta``.

    Inside the ball (f < 0) or for inward drives the drive passes unchanged;
    in the boundary layer the outward component is scaled back by ``f``.
    """
    theta = np.asarray(theta, dtype=float)
    y = np.asarray(y, dtype=float)
    tm2 = pset.theta_max**2
    f = (float(theta @ theta) - tm2) / (pset.eps_proj * tm2)
    if f < 0:
        return y
    grad = 2.0 * theta / (pset.eps_proj * tm2)
    gy = grad @ y
    if gy <= 0:
        return y
    return y - grad * (gy / (grad @ grad)) * f


def clip_to_ball(theta: np.ndarray, radius: float) -> np.ndarray:
    """Radial clip with ``||out|| <= radius`` exact in floating point."""
    n = math.sqrt(float(theta @ theta))
    if n <= radius * (1.0 - 1e-12):
        return theta
    n = float(np.linalg.norm(theta))
    if n <= radius:
        return theta
    out = theta * (radius / n)
    while np.linalg.norm(out) > radius:
        out = out * (1.0 - 2.0**-52)
    return out


# --------------------------------------------------------------------------- filter


def filter_alpha(omega_c: float, dt: float) -> float:
    if not (omega_c > 0 and math.isfinite(omega_c)):
        raise InvalidCutoff(f"cutoff must be positive and finite, got {omega_c!r}")
    if dt <= 0:
        raise InvalidParams("dt must be positive")
    return math.exp(-omega_c * dt)


@dataclass(frozen=True)
class FilterState:
    omega_c: float
    y: float = 0.0
    order: int = 1

    def __post_init__(self):
        if not (self.omega_c > 0):
            raise InvalidCutoff(f"cutoff must be positive, got {self.omega_c!r}")
        if self.order != 1:
            raise InvalidParams("only first-order filters are supported")


def filter_step(state: FilterState, value: float, dt: float) -> FilterState:
    """Zero-order-hold discretisation of ``omega_c / (s + omega_c)``."""
    a = filter_alpha(state.omega_c, dt)
    return FilterState(state.omega_c, a * state.y + (1.0 - a) * value)


# --------------------------------------------------------------------------- predictor


@dataclass(frozen=True, eq=False)
class PredictorState:
    x_hat: np.ndarray
    x_tilde: np.ndarray

    @classmethod
    def start(cls, x0) -> "PredictorState":
        x0 = np.array(x0, dtype=float)
        return cls(x0.copy(), np.zeros_like(x0))


def predictor_step(pred: PredictorState, A_m, B1, B2, delta_hat_total: float, u_ad: float,
                   psi_dot_des: float, x_measured, dt: float, k_m=None, A=None) -> PredictorState:
    """Advance the state predictor by one step and refresh ``x_tilde``.

    With ``k_m`` and ``A`` given, the ``A_m`` feedback is realised as the sampled
    law ``A x_hat - B1 k_m x_hat_k`` held over the step, which is exactly how the
    plant sees ``u_m``; otherwise ``A_m`` is integrated continuously.
    """
    A_m = np.asarray(A_m, dtype=float)
    B1 = np.asarray(B1, dtype=float)
    B2 = np.asarray(B2, dtype=float)
    xh = pred.x_hat
    if k_m is None:
        drive = B1 * (delta_hat_total + u_ad) + B2 * psi_dot_des
        nxt = rk4_step(lambda z: A_m @ z + drive, xh, dt)
    else:
        if A is None:
            A = A_m + np.outer(B1, k_m)
        A = np.asarray(A, dtype=float)
        drive = B1 * (-float(np.dot(k_m, xh)) + delta_hat_total + u_ad) + B2 * psi_dot_des
        nxt = rk4_step(lambda z: A @ z + drive, xh, dt)
    if not np.all(np.isfinite(nxt)):
        raise NonFinite("predictor state is non-finite")
    return PredictorState(nxt, nxt - np.asarray(x_measured, dtype=float))


class PredictorPropagator:
    """Closed-form RK4 map of the sampled predictor for fixed ``dt`` (same arithmetic
    as the plant propagator, so zero-estimate runs reproduce the plant bit for bit)."""

    def __init__(self, A, B1, B2, k_m, dt: float):
        self.Phi, Gam = affine_rk4(A, dt)
        self.g1 = Gam @ np.asarray(B1, dtype=float)
        self.g2 = Gam @ np.asarray(B2, dtype=float)
        self.k_m = np.asarray(k_m, dtype=float)

    def step(self, x_hat, sigma_plus_uad: float, psi: float) -> np.ndarray:
        w = -float(self.k_m @ x_hat) + sigma_plus_uad
        return self.Phi @ x_hat + self.g1 * w + self.g2 * psi


# --------------------------------------------------------------------------- adaptive laws


@dataclass(frozen=True, eq=False)
class AdaptationConfig:
    gamma1: float
    gamma2: float
    P: np.ndarray
    B1: np.ndarray
    PB1: np.ndarray = field(init=False)

    def __post_init__(self):
        if not (self.gamma1 > 0 and self.gamma2 > 0):
            raise InvalidParams("adaptation gains must be positive")
        P = np.asarray(self.P, dtype=float)
        B1 = np.asarray(self.B1, dtype=float).reshape(-1)
        if P.shape != (B1.size, B1.size):
            raise DimensionMismatch("P and B1 dimensions disagree")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "B1", B1)
        object.__setattr__(self, "PB1", P @ B1)


@dataclass(frozen=True, eq=False)
class ParametricEstimate:
    zeta_hat: np.ndarray

    @classmethod
    def zeros(cls, n: int = 4) -> "ParametricEstimate":
        return cls(np.zeros(n))


def _drive_scalar(cfg: AdaptationConfig, x_tilde) -> float:
    x_tilde = np.asarray(x_tilde, dtype=float)
    if x_tilde.shape != cfg.PB1.shape:
        raise DimensionMismatch("x_tilde has the wrong length")
    return float(x_tilde @ cfg.PB1)


def _adapt(theta, gain, e, regressor, pset, dt):
    # gradient direction that makes V-dot negative for x_tilde = x_hat - x
    step = theta + dt * gain * projection(theta, -e * regressor, pset)
    return clip_to_ball(step, pset.hard_radius)


def adapt_W(W, cfg: AdaptationConfig, x_tilde, phi, pset: ProjectionSet, dt: float) -> np.ndarray:
    """One Euler step of the last-layer law ``W' = G1 proj(W, -(x~' P B1) phi)``."""
    W = np.asarray(W, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if W.shape != phi.shape:
        raise DimensionMismatch(f"W {W.shape} and phi {phi.shape} disagree")
    return _adapt(W, cfg.gamma1, _drive_scalar(cfg, x_tilde), phi, pset, dt)


def adapt_zeta(est: ParametricEstimate, cfg: AdaptationConfig, x_tilde, x, pset: ProjectionSet,
               dt: float) -> ParametricEstimate:
    """One Euler step of ``zeta_hat' = G2 proj(zeta_hat, -(x~' P B1) x)``."""
    x = np.asarray(x, dtype=float)
    if x.shape != est.zeta_hat.shape:
        raise DimensionMismatch("x and zeta_hat disagree")
    return ParametricEstimate(_adapt(est.zeta_hat, cfg.gamma2, _drive_scalar(cfg, x_tilde), x, pset, dt))
