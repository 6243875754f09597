"""The four steering laws and the closed-loop reference system.

All controllers share ``u = u_m + u_ad`` with ``u_m = -k_m x``. They differ in
how ``u_ad`` is formed:

* LF: ``u_ad = k_g r`` (no adaptation);
* L1: filtered parametric estimate;
* NeuralL1: filtered parametric plus network estimate;
* DeepMRAC: NeuralL1's estimates applied without the filter.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import neural as nn
from .errors import DimensionMismatch, InvalidParams, NotHurwitz, SingularKg, Uncontrollable
from .numlin import is_hurwitz, solve_lyapunov
from .plant import PlantModel, PlantPropagator, plant_step
from .signals import (AdaptationConfig, FilterState, PredictorPropagator, ProjectionSet,
                      clip_to_ball, filter_alpha, filter_step, projection)


class ControllerKind(enum.IntEnum):
    LF = 0
    DEEP_MRAC = 1
    L1 = 2
    NEURAL_L1 = 3

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def from_label(cls, text: str) -> "ControllerKind":
        key = text.strip().lower().replace("_", "-")
        for k, v in _LABELS.items():
            if v == key:
                return k
        raise InvalidParams(f"unknown controller {text!r}; expected one of {sorted(_LABELS.values())}")

    @property
    def adaptive(self) -> bool:
        return self is not ControllerKind.LF

    @property
    def uses_net(self) -> bool:
        return self in (ControllerKind.NEURAL_L1, ControllerKind.DEEP_MRAC)

    @property
    def filtered(self) -> bool:
        return self in (ControllerKind.L1, ControllerKind.NEURAL_L1)


_LABELS = {
    ControllerKind.LF: "lf",
    ControllerKind.DEEP_MRAC: "deep-mrac",
    ControllerKind.L1: "l1",
    ControllerKind.NEURAL_L1: "neural-l1",
}


# --------------------------------------------------------------------------- gains


@dataclass(frozen=True, eq=False)
class GainSet:
    k_m: np.ndarray
    k_g: float
    A_m: np.ndarray


def default_poles(Vx: float) -> tuple:
    """Real poles in [-10, -1] that scale with speed."""
    base = np.array([0.5, 0.6, 0.7, 0.8])
    return tuple(-np.clip(abs(Vx) * base, 1.0, 10.0))


def ackermann(A, B, poles) -> np.ndarray:
    """Single-input pole placement ``k`` with ``eig(A - B k) = poles``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(-1)
    n = A.shape[0]
    if len(poles) != n:
        raise DimensionMismatch(f"need {n} poles, got {len(poles)}")
    cols = [B]
    for _ in range(n - 1):
        cols.append(A @ cols[-1])
    Cm = np.column_stack(cols)
    if np.linalg.matrix_rank(Cm) < n:
        raise Uncontrollable("(A, B1) is not controllable")
    coeffs = np.real(np.poly(np.asarray(poles, dtype=complex)))
    phi = np.zeros_like(A)
    Ak = np.eye(n)
    for c in coeffs[::-1]:
        phi += c * Ak
        Ak = Ak @ A
    en = np.zeros(n)
    en[-1] = 1.0
    return np.linalg.solve(Cm.T, en) @ phi


def design_gains_matrices(A, B1, c, poles) -> GainSet:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B1 = np.asarray(B1, dtype=float).reshape(-1)
    c = np.asarray(c, dtype=float).reshape(-1)
    k = ackermann(A, B1, poles)
    A_m = A - np.outer(B1, k)
    if not is_hurwitz(A_m):
        raise NotHurwitz("placed A_m is not Hurwitz; check the requested poles")
    den = float(c @ np.linalg.solve(A_m, B1))
    if not math.isfinite(den) or abs(den) < 1e-12 * max(1.0, np.abs(B1).max()):
        raise SingularKg("c' A_m^-1 B1 vanishes; reference gain undefined")
    return GainSet(k, -1.0 / den, A_m)


def design_gains(plant: PlantModel, poles=None) -> GainSet:
    if poles is None:
        poles = default_poles(plant.params.Vx)
    return design_gains_matrices(plant.A, plant.B1, plant.c, poles)


# --------------------------------------------------------------------------- controllers


@dataclass(frozen=True)
class ControllerConfig:
    omega_c: float = 2000.0
    gamma1: float = 100.0
    gamma2: float = 1000.0
    Q: tuple | None = None
    zeta_set: ProjectionSet = field(default_factory=lambda: ProjectionSet(2.0, 0.1))
    W_set: ProjectionSet = field(default_factory=lambda: ProjectionSet(1.0, 0.1))
    hidden: tuple = (16, 16)
    net_seed: int = 0
    trainer: nn.TrainerConfig = field(default_factory=nn.TrainerConfig)
    trainer_mode: str = "inline"
    swap_delay: int = 1
    train: bool = True

    def Q_matrix(self) -> np.ndarray:
        if self.Q is None:
            return np.eye(4)
        return np.array(self.Q, dtype=float)


class Diagnostics(NamedTuple):
    u_m: float
    u_ad: float
    delta_hat: float
    zeta_hat_x: float
    x_tilde: np.ndarray


class Controller:
    """Stateful controller; ``step`` consumes one measured state per control period."""

    def __init__(self, kind: ControllerKind, plant: PlantModel, gains: GainSet,
                 cfg: ControllerConfig, dt: float, x0=None, net: nn.NeuralNet | None = None):
        if dt <= 0:
            raise InvalidParams("dt must be positive")
        self.kind = ControllerKind(kind)
        self.plant = plant
        self.gains = gains
        self.cfg = cfg
        self.dt = dt
        self.k_m = np.asarray(gains.k_m, dtype=float)
        self.k_g = float(gains.k_g)
        self.step_index = 0
        x0 = np.zeros(4) if x0 is None else np.array(x0, dtype=float)
        self.x_hat = x0.copy()
        self.zeta_hat = np.zeros(4)
        self.y = 0.0
        self.net = None
        self.W = None
        self.buffer = None
        self.trainer = None
        # enum properties are cached as plain bools; step() runs once per control period
        self._adaptive = self.kind.adaptive
        self._uses_net = self.kind.uses_net
        self._filtered = self.kind.filtered
        if not self._adaptive:
            return
        self.P = solve_lyapunov(gains.A_m, cfg.Q_matrix())
        self.adapt = AdaptationConfig(cfg.gamma1, cfg.gamma2, self.P, plant.B1)
        self.PB1 = self.adapt.PB1
        self.pred = PredictorPropagator(plant.A, plant.B1, plant.B2, self.k_m, dt)
        self.alpha = filter_alpha(cfg.omega_c, dt)
        if self.kind.uses_net:
            self.net = net if net is not None else nn.init_net(cfg.net_seed, 4, cfg.hidden)
            self.W = np.zeros(self.net.feature_dim)
            self.buffer = nn.ReplayBuffer(cfg.trainer.pmax)
            self.trainer = nn.InnerTrainer(cfg.trainer, cfg.net_seed, cfg.trainer_mode, cfg.swap_delay)

    def close(self) -> None:
        if self.trainer is not None:
            self.trainer.close()

    def step(self, x_meas, r: float = 0.0, psi_dot_des: float = 0.0) -> tuple[float, Diagnostics]:
        x = np.asarray(x_meas, dtype=float)
        u_m = -float(self.k_m @ x)
        if not self._adaptive:
            u_ad = self.k_g * r
            self.step_index += 1
            return u_m + u_ad, Diagnostics(u_m, u_ad, 0.0, 0.0, np.zeros(4))
        cfg = self.cfg
        dt = self.dt
        x_tilde = self.x_hat - x
        e = float(x_tilde @ self.PB1)
        self.zeta_hat = _adapt_step(self.zeta_hat, cfg.gamma2 * dt, -e, x, cfg.zeta_set)
        eta = 0.0
        if self._uses_net:
            self.net = self.trainer.swap(self.step_index, self.net)
            phi = nn.features(self.net, x)
            self.W = _adapt_step(self.W, cfg.gamma1 * dt, -e, phi, cfg.W_set)
            eta = float(self.W @ phi)
        zx = float(self.zeta_hat @ x)
        sigma = eta + zx
        v = -(sigma - self.k_g * r)
        if self._filtered:
            self.y = self.alpha * self.y + (1.0 - self.alpha) * v
            u_ad = self.y
        else:
            u_ad = v
        self.x_hat = self.pred.step(self.x_hat, sigma + u_ad, psi_dot_des)
        if self._uses_net:
            nn.record(self.buffer, x, eta)
            if cfg.train and self.trainer.due(self.step_index):
                self.trainer.start(self.step_index, self.net, nn.LastLayer(self.W), self.buffer)
        self.step_index += 1
        return u_m + u_ad, Diagnostics(u_m, u_ad, eta, zx, x_tilde)


def _adapt_step(theta, gain_dt, e, regressor, pset: ProjectionSet):
    """Euler step of ``theta' = gain proj(theta, e * regressor)`` with hard clipping.

    Same arithmetic as ``signals.projection`` followed by ``clip_to_ball``, inlined
    because it runs twice per control step.
    """
    tm2 = pset.theta_max * pset.theta_max
    tt = float(theta @ theta)
    if tt < tm2:
        nxt = theta + (gain_dt * e) * regressor
    else:
        y = e * regressor
        scale = pset.eps_proj * tm2
        grad = 2.0 * theta / scale
        gy = float(grad @ y)
        if gy > 0:
            y = y - grad * (gy / float(grad @ grad)) * ((tt - tm2) / scale)
        nxt = theta + gain_dt * y
    hard = pset.hard_radius
    # any vector strictly inside the hard ball passes through clip_to_ball unchanged
    if float(nxt @ nxt) < hard * hard * (1.0 - 1e-9):
        return nxt
    return clip_to_ball(nxt, hard)


def controller_step(state: Controller, x_meas, r: float, psi_dot_des: float, dt: float):
    if dt != state.dt:
        raise InvalidParams("controller was built for a different dt")
    return state.step(x_meas, r, psi_dot_des)


# --------------------------------------------------------------------------- reference system


@dataclass(frozen=True, eq=False)
class ReferenceSystemState:
    x_ref: np.ndarray
    u_ref: float
    filter_ref: FilterState


def reference_system_step(ref: ReferenceSystemState, plant: PlantModel, gains: GainSet, true_zeta,
                          true_delta_of: Callable[[np.ndarray], float], r: float, psi_dot_des: float,
                          dt: float) -> ReferenceSystemState:
    """Advance the non-adaptive reference loop that knows the true uncertainty.

    ``u_ref = -k_m x_ref - C(s)(Delta(x_ref) + zeta' x_ref - k_g r)``.
    """
    x = ref.x_ref
    sigma = float(true_delta_of(x)) + float(np.dot(true_zeta, x))
    filt = filter_step(ref.filter_ref, -(sigma - gains.k_g * r), dt)
    u_ref = -float(gains.k_m @ x) + filt.y
    nxt = plant_step(plant, x, u_ref, sigma, psi_dot_des, dt)
    return ReferenceSystemState(nxt, u_ref, filt)


class ReferenceSystem:
    """Propagator form of ``reference_system_step`` for the simulation loop."""

    def __init__(self, plant: PlantModel, gains: GainSet, omega_c: float, dt: float, true_zeta, x0=None):
        self.prop = PlantPropagator(plant, dt)
        self.k_m = np.asarray(gains.k_m, dtype=float)
        self.k_g = float(gains.k_g)
        self.zeta = np.asarray(true_zeta, dtype=float)
        self.alpha = filter_alpha(omega_c, dt)
        self.x_ref = np.zeros(4) if x0 is None else np.array(x0, dtype=float)
        self.y = 0.0

    def step(self, delta_at_ref: float, r: float, psi_dot_des: float) -> float:
        x = self.x_ref
        sigma = delta_at_ref + float(self.zeta @ x)
        self.y = self.alpha * self.y + (1.0 - self.alpha) * (-(sigma - self.k_g * r))
        u_ref = -float(self.k_m @ x) + self.y
        self.x_ref = self.prop.step(x, u_ref + sigma, psi_dot_des)
        return u_ref
