"""Lateral error dynamics of a front-steered vehicle, tracks, and the disturbance channel.

State ordering is ``x = [e1, e1_dot, e2, e2_dot]`` (lateral offset, its rate,
yaw error, its rate). Steering ``u`` and the matched disturbance enter through
``B1``; the desired yaw rate enters through ``B2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidParams, Singular
from .numlin import affine_rk4, rk4_step

N_STATES = 4


@dataclass(frozen=True)
class VehicleParams:
    """Bicycle-model parameters. Shipped defaults live in ``harness/defaults.yaml``."""

    m: float
    Iz: float
    lf: float
    lr: float
    Caf: float
    Car: float
    Vx: float

    def validate(self) -> None:
        if abs(self.Vx) < 1e-6:
            raise Singular("Vx must be nonzero (model has 1/Vx terms)")
        for name in ("m", "Iz", "lf", "lr", "Caf", "Car", "Vx"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidParams(f"{name} must be a positive finite number, got {v!r}")


@dataclass(frozen=True, eq=False)
class PlantModel:
    params: VehicleParams
    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    c: np.ndarray

    def controllability_matrix(self) -> np.ndarray:
        cols = [self.B1]
        for _ in range(N_STATES - 1):
            cols.append(self.A @ cols[-1])
        return np.column_stack(cols)

    def is_controllable(self) -> bool:
        Cm = self.controllability_matrix()
        return int(np.linalg.matrix_rank(Cm)) == N_STATES


def build_plant(params: VehicleParams) -> PlantModel:
    """Assemble ``A, B1, B2, c`` from vehicle parameters."""
    params.validate()
    m, Iz, lf, lr = params.m, params.Iz, params.lf, params.lr
    Caf, Car, Vx = params.Caf, params.Car, params.Vx
    lat = 2 * Caf + 2 * Car
    mom = 2 * Caf * lf - 2 * Car * lr
    rot = 2 * Caf * lf**2 + 2 * Car * lr**2
    A = np.zeros((4, 4))
    A[0, 1] = 1.0
    A[1, 1] = -lat / (m * Vx)
    A[1, 2] = lat / m
    A[1, 3] = -mom / (m * Vx)
    A[2, 3] = 1.0
    A[3, 1] = -mom / (Iz * Vx)
    A[3, 2] = mom / Iz
    A[3, 3] = -rot / (Iz * Vx)
    B1 = np.array([0.0, 2 * Caf / m, 0.0, 2 * Caf * lf / Iz])
    B2 = np.array([0.0, -Vx - mom / (m * Vx), 0.0, -rot / (Iz * Vx)])
    c = np.array([1.0, 0.0, 0.0, 0.0])
    for arr in (A, B1, B2, c):
        arr.setflags(write=False)
    return PlantModel(params, A, B1, B2, c)


# --------------------------------------------------------------------------- tracks


@dataclass(frozen=True)
class TrackSpec:
    """Either a constant-radius loop or a piecewise-constant curvature schedule.

    ``segments`` is a tuple of ``(length_m, curvature_1_per_m)``. Closed tracks
    wrap arc-length modulo ``length``.
    """

    kind: str = "circle"
    radius: float = 10.0
    segments: tuple = ()
    closed: bool = True

    def __post_init__(self):
        if self.kind == "circle":
            if not (self.radius > 0 and math.isfinite(self.radius)):
                raise InvalidParams("circle radius must be positive")
        elif self.kind == "piecewise":
            if not self.segments:
                raise InvalidParams("piecewise track needs at least one segment")
            segs = tuple((float(L), float(k)) for L, k in self.segments)
            for L, k in segs:
                if not (L > 0 and math.isfinite(L) and math.isfinite(k)):
                    raise InvalidParams(f"bad segment ({L}, {k})")
            object.__setattr__(self, "segments", segs)
        else:
            raise InvalidParams(f"unknown track kind {self.kind!r}")

    @classmethod
    def circle(cls, radius: float) -> "TrackSpec":
        return cls(kind="circle", radius=radius)

    @classmethod
    def piecewise(cls, segments, closed: bool = True) -> "TrackSpec":
        return cls(kind="piecewise", segments=tuple(segments), closed=closed)

    @property
    def length(self) -> float:
        if self.kind == "circle":
            return 2.0 * math.pi * self.radius
        return float(sum(L for L, _ in self.segments))

    def wrap(self, s: float) -> float:
        if self.closed:
            return s % self.length
        return s

    def curvature(self, s: float) -> float:
        if self.kind == "circle":
            return 1.0 / self.radius
        s = self.wrap(s)
        acc = 0.0
        for L, k in self.segments:
            acc += L
            if s < acc:
                return k
        # past the end of an open track: hold the last segment
        return self.segments[-1][1]

    def max_abs_curvature(self) -> float:
        if self.kind == "circle":
            return 1.0 / self.radius
        return max(abs(k) for _, k in self.segments)


def desired_yaw_rate(track: TrackSpec, s: float, Vx: float) -> float:
    return Vx * track.curvature(s)


# --------------------------------------------------------------------------- uncertainty


@dataclass(frozen=True)
class Pulse:
    """Obstacle encounter: on ``[s_start, s_end)`` adds ``dzeta . x + bias``."""

    s_start: float
    s_end: float
    dzeta: tuple = (0.0, 0.0, 0.0, 0.0)
    bias: float = 0.0

    def __post_init__(self):
        dz = tuple(float(v) for v in self.dzeta)
        if len(dz) != N_STATES:
            raise DimensionMismatch("pulse dzeta must have 4 entries")
        vals = (self.s_start, self.s_end, self.bias) + dz
        if not all(math.isfinite(v) for v in vals):
            raise InvalidParams("pulse entries must be finite")
        if self.s_end < self.s_start:
            raise InvalidParams("pulse s_end < s_start")
        object.__setattr__(self, "dzeta", dz)

    def active(self, s: float) -> bool:
        return self.s_start <= s < self.s_end


@dataclass(frozen=True)
class UncertaintyModel:
    zeta: tuple = (0.0, 0.0, 0.0, 0.0)
    noise_lo: float = 0.0
    noise_hi: float = 0.0
    sensor_noise_lo: float = 0.0
    sensor_noise_hi: float = 0.0
    pulses: tuple = ()
    seed: int = 0

    def __post_init__(self):
        z = tuple(float(v) for v in self.zeta)
        if len(z) != N_STATES:
            raise DimensionMismatch("zeta must have 4 entries")
        object.__setattr__(self, "zeta", z)
        if self.noise_lo > self.noise_hi:
            raise InvalidParams("noise_lo > noise_hi")
        if self.sensor_noise_lo > self.sensor_noise_hi:
            raise InvalidParams("sensor_noise_lo > sensor_noise_hi")
        object.__setattr__(self, "pulses", tuple(self.pulses))

    @property
    def zeta_array(self) -> np.ndarray:
        return np.array(self.zeta)

    @property
    def has_sensor_noise(self) -> bool:
        return self.sensor_noise_hi > self.sensor_noise_lo or self.sensor_noise_lo != 0.0


# stream ids for the counter-based generator
STREAM_CONTROL = 0
STREAM_SENSOR = 1
STREAM_INIT = 2
STREAM_TRAIN = 3
_CHUNK = 4096


def philox(seed: int, stream: int, block: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``seed``; ``stream``/``block`` pick the counter window."""
    seed = int(seed) & (2**64 - 1)
    bitgen = np.random.Philox(key=np.array([seed, 0x9E3779B97F4A7C15], dtype=np.uint64),
                              counter=np.array([0, 0, block, stream], dtype=np.uint64))
    return np.random.Generator(bitgen)


@dataclass
class DisturbanceStream:
    """Reproducible per-step noise: the sample for step ``k`` depends only on (seed, k)."""

    model: UncertaintyModel
    _cache: dict = field(default_factory=dict, repr=False)

    def _block(self, stream: int, block: int, width: int) -> np.ndarray:
        key = (stream, block)
        arr = self._cache.get(key)
        if arr is None:
            arr = philox(self.model.seed, stream, block).random((_CHUNK, width))
            self._cache = {k: v for k, v in self._cache.items() if k[0] != stream}
            self._cache[key] = arr
        return arr

    def control_noise(self, step: int) -> float:
        lo, hi = self.model.noise_lo, self.model.noise_hi
        if lo == hi:
            return float(lo)
        b, i = divmod(step, _CHUNK)
        return float(lo + (hi - lo) * self._block(STREAM_CONTROL, b, 1)[i, 0])

    def sensor_noise(self, step: int) -> np.ndarray:
        lo, hi = self.model.sensor_noise_lo, self.model.sensor_noise_hi
        if lo == hi:
            return np.full(N_STATES, float(lo))
        b, i = divmod(step, _CHUNK)
        return lo + (hi - lo) * self._block(STREAM_SENSOR, b, N_STATES)[i]

    def control_noise_block(self, n_steps: int) -> np.ndarray:
        return self._bulk(STREAM_CONTROL, n_steps, 1, self.model.noise_lo, self.model.noise_hi)[:, 0]

    def sensor_noise_block(self, n_steps: int) -> np.ndarray:
        return self._bulk(STREAM_SENSOR, n_steps, N_STATES,
                          self.model.sensor_noise_lo, self.model.sensor_noise_hi)

    def _bulk(self, stream, n_steps, width, lo, hi) -> np.ndarray:
        if lo == hi:
            return np.full((n_steps, width), float(lo))
        nblk = -(-n_steps // _CHUNK)
        raw = np.concatenate([philox(self.model.seed, stream, b).random((_CHUNK, width))
                              for b in range(nblk)])[:n_steps]
        return lo + (hi - lo) * raw


def pulse_term(model: UncertaintyModel, x, s: float) -> float:
    total = 0.0
    for p in model.pulses:
        if p.active(s):
            total += float(np.dot(p.dzeta, x)) + p.bias
    return total


def true_uncertainty(model: UncertaintyModel, x, s: float, stream: DisturbanceStream, step: int):
    """Total matched disturbance and its decomposition at one control step."""
    x = np.asarray(x, dtype=float)
    parametric = float(model.zeta_array @ x)
    noise = stream.control_noise(step)
    pulse = pulse_term(model, x, s)
    return parametric + noise + pulse, {"parametric": parametric, "noise": noise, "pulse": pulse}


# --------------------------------------------------------------------------- integration


def plant_vector_field(plant: PlantModel, x, u: float, disturbance: float, psi_dot_des: float):
    return plant.A @ x + plant.B1 * (u + disturbance) + plant.B2 * psi_dot_des


def plant_step(plant: PlantModel, x, u: float, disturbance: float, psi_dot_des: float, dt: float):
    """RK4 advance with inputs held over the step."""
    return rk4_step(lambda z: plant_vector_field(plant, z, u, disturbance, psi_dot_des), x, dt)


class PlantPropagator:
    """Precomputed RK4 map for fixed ``dt``: ``x+ = Phi x + g1 (u + d) + g2 psi``.

    Same arithmetic as ``plant_step`` in closed form; used by the simulation loop.
    """

    def __init__(self, plant: PlantModel, dt: float):
        if dt <= 0:
            raise InvalidParams("dt must be positive")
        self.dt = dt
        self.Phi, Gam = affine_rk4(plant.A, dt)
        self.g1 = Gam @ plant.B1
        self.g2 = Gam @ plant.B2

    def step(self, x: np.ndarray, w: float, psi: float) -> np.ndarray:
        return self.Phi @ x + self.g1 * w + self.g2 * psi


@dataclass
class SimClock:
    dt: float
    step_index: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise InvalidParams("dt must be positive")

    @property
    def t(self) -> float:
        return self.step_index * self.dt

    def tick(self) -> None:
        self.step_index += 1
