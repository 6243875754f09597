"""Scenario configuration: YAML files merged over the packaged defaults.

File layout::

    schema: 1
    defaults: {...}          # optional, merged over the packaged defaults
    scenarios:
      - name: circle
        track: {kind: circle, radius: 10.0}
        ...

Every scenario entry is merged over ``defaults``. Unknown keys are rejected
with the dotted path of the offending field.
"""
from __future__ import annotations

import copy
import math
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import yaml

from ..controllers import ControllerConfig, ControllerKind
from ..errors import ConfigError, NeuralL1Error
from ..neural import TrainerConfig
from ..plant import Pulse, TrackSpec, UncertaintyModel, VehicleParams
from ..signals import ProjectionSet

SCHEMA_VERSION = 1
_NAME_RE = re.compile(r"^[A-Za-z0-9_.-]+$")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    vehicle: VehicleParams
    track: TrackSpec
    uncertainty: UncertaintyModel
    controllers: tuple
    controller: ControllerConfig
    poles: tuple | None = None
    dt: float = 1e-3
    duration: float = 60.0
    seed: int = 0
    x0: tuple = (0.0, 0.0, 0.0, 0.0)
    r: float = 0.0
    override_certification: bool = False
    eps_bar: float | None = None
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def with_seed(self, seed: int) -> "ScenarioConfig":
        unc = replace(self.uncertainty, seed=seed)
        ctl = self.controller
        if self.raw.get("neural", {}).get("seed") is None:
            ctl = replace(ctl, net_seed=seed)
        return replace(self, seed=seed, uncertainty=unc, controller=ctl)

    def with_controllers(self, kinds) -> "ScenarioConfig":
        return replace(self, controllers=tuple(sorted(set(kinds))))


def packaged_defaults() -> dict:
    text = resources.files("neural_l1.harness").joinpath("defaults.yaml").read_text()
    return yaml.safe_load(text)


def deep_merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        p = f"{path}.{k}" if path else str(k)
        if k not in base:
            raise ConfigError(p, "unknown key")
        if k == "track" and isinstance(v, dict) and "kind" in v:
            # a new track kind replaces the whole block; _track checks its keys
            out[k] = copy.deepcopy(v)
        elif isinstance(base[k], dict) and isinstance(v, dict):
            out[k] = deep_merge(base[k], v, p)
        else:
            out[k] = copy.deepcopy(v)
    return out


# --------------------------------------------------------------------------- field parsing


def _num(d, key, path, positive=False, nonneg=False, allow_none=False):
    v = d.get(key)
    p = f"{path}.{key}"
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(p, f"expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(p, "must be finite")
    if positive and v <= 0:
        raise ConfigError(p, "must be positive")
    if nonneg and v < 0:
        raise ConfigError(p, "must be non-negative")
    return v


def _int(d, key, path, positive=True, allow_none=False):
    v = d.get(key)
    p = f"{path}.{key}"
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(p, f"expected an integer, got {v!r}")
    if positive and v <= 0:
        raise ConfigError(p, "must be positive")
    return v


def _vec(v, n, path, allow_none=False):
    if v is None and allow_none:
        return None
    if not isinstance(v, (list, tuple)) or len(v) != n:
        raise ConfigError(path, f"expected a list of {n} numbers")
    out = []
    for i, e in enumerate(v):
        if isinstance(e, bool) or not isinstance(e, (int, float)) or not math.isfinite(float(e)):
            raise ConfigError(f"{path}[{i}]", f"expected a finite number, got {e!r}")
        out.append(float(e))
    return tuple(out)


def _bounds(v, path):
    lo, hi = _vec(v, 2, path)
    if lo > hi:
        raise ConfigError(path, "lower bound exceeds upper bound")
    return lo, hi


def _bool(d, key, path):
    v = d.get(key)
    if not isinstance(v, bool):
        raise ConfigError(f"{path}.{key}", f"expected true/false, got {v!r}")
    return v


def _pset(d, path):
    if not isinstance(d, dict):
        raise ConfigError(path, "expected a mapping")
    tm = _num(d, "theta_max", path, positive=True)
    eps = _num(d, "eps_proj", path, positive=True)
    if eps > 1:
        raise ConfigError(f"{path}.eps_proj", "must lie in (0, 1]")
    return ProjectionSet(tm, eps)


def _track(d, path):
    kind = d.get("kind")
    if kind == "circle":
        extra = set(d) - {"kind", "radius"}
        if extra:
            raise ConfigError(f"{path}.{sorted(extra)[0]}", "unknown key for a circle track")
        return TrackSpec.circle(_num(d, "radius", path, positive=True))
    if kind == "piecewise":
        extra = set(d) - {"kind", "segments", "closed"}
        if extra:
            raise ConfigError(f"{path}.{sorted(extra)[0]}", "unknown key for a piecewise track")
        segs = d.get("segments")
        if not isinstance(segs, list) or not segs:
            raise ConfigError(f"{path}.segments", "expected a non-empty list of [length, curvature]")
        parsed = []
        for i, s in enumerate(segs):
            L, k = _vec(s, 2, f"{path}.segments[{i}]")
            if L <= 0:
                raise ConfigError(f"{path}.segments[{i}]", "segment length must be positive")
            parsed.append((L, k))
        closed = d.get("closed", True)
        if not isinstance(closed, bool):
            raise ConfigError(f"{path}.closed", "expected true/false")
        return TrackSpec.piecewise(parsed, closed=closed)
    raise ConfigError(f"{path}.kind", f"expected 'circle' or 'piecewise', got {kind!r}")


def _pulses(v, path):
    if not isinstance(v, list):
        raise ConfigError(path, "expected a list")
    out = []
    for i, p in enumerate(v):
        pp = f"{path}[{i}]"
        if not isinstance(p, dict):
            raise ConfigError(pp, "expected a mapping")
        extra = set(p) - {"s", "dzeta", "bias"}
        if extra:
            raise ConfigError(f"{pp}.{sorted(extra)[0]}", "unknown key")
        s0, s1 = _bounds(p.get("s"), f"{pp}.s")
        dz = _vec(p.get("dzeta", [0, 0, 0, 0]), 4, f"{pp}.dzeta")
        bias = _num({"bias": p.get("bias", 0.0)}, "bias", pp)
        out.append(Pulse(s0, s1, dz, bias))
    return tuple(out)


def _controllers(v, path):
    if not isinstance(v, list) or not v:
        raise ConfigError(path, "expected a non-empty list of controller names")
    kinds = []
    for i, name in enumerate(v):
        try:
            kinds.append(ControllerKind.from_label(str(name)))
        except NeuralL1Error as exc:
            raise ConfigError(f"{path}[{i}]", str(exc)) from None
    return tuple(sorted(set(kinds)))


def parse_scenario(d: dict, path: str) -> ScenarioConfig:
    name = d.get("name")
    if not isinstance(name, str) or not _NAME_RE.match(name):
        raise ConfigError(f"{path}.name", "expected a name of letters, digits, '.', '_' or '-'")
    if d.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"{path}.schema", f"unsupported schema {d.get('schema')!r}")
    dt = _num(d, "dt", path, positive=True)
    duration = _num(d, "duration", path, positive=True)
    if duration < dt:
        raise ConfigError(f"{path}.duration", "shorter than one step")
    seed = _int(d, "seed", path, positive=False)
    if seed < 0:
        raise ConfigError(f"{path}.seed", "must be non-negative")

    vp = f"{path}.vehicle"
    veh = d["vehicle"]
    vehicle = VehicleParams(**{k: _num(veh, k, vp, positive=True)
                               for k in ("m", "Iz", "lf", "lr", "Caf", "Car", "Vx")})

    up = f"{path}.uncertainty"
    u = d["uncertainty"]
    nlo, nhi = _bounds(u.get("noise"), f"{up}.noise")
    slo, shi = _bounds(u.get("sensor_noise"), f"{up}.sensor_noise")
    unc = UncertaintyModel(_vec(u.get("zeta"), 4, f"{up}.zeta"), nlo, nhi, slo, shi,
                           _pulses(u.get("pulses", []), f"{up}.pulses"), seed)

    dp = f"{path}.design"
    des = d["design"]
    poles = des.get("poles")
    if poles is not None:
        poles = _vec(poles, 4, f"{dp}.poles")
        if any(p >= 0 for p in poles):
            raise ConfigError(f"{dp}.poles", "poles must be negative")
    Q = des.get("Q")
    if Q is not None:
        if isinstance(Q, list) and len(Q) == 4 and all(not isinstance(r, list) for r in Q):
            q = _vec(Q, 4, f"{dp}.Q")
            Q = tuple(tuple(q[i] if i == j else 0.0 for j in range(4)) for i in range(4))
        elif isinstance(Q, list) and len(Q) == 4:
            Q = tuple(_vec(row, 4, f"{dp}.Q[{i}]") for i, row in enumerate(Q))
        else:
            raise ConfigError(f"{dp}.Q", "expected 4 diagonal entries or a 4x4 matrix")

    np_ = f"{path}.neural"
    neu = d["neural"]
    hidden = neu.get("hidden")
    if not isinstance(hidden, list) or not hidden or not all(isinstance(h, int) and h > 0 for h in hidden):
        raise ConfigError(f"{np_}.hidden", "expected a list of positive layer widths")
    mode = neu.get("mode")
    if mode not in ("inline", "thread"):
        raise ConfigError(f"{np_}.mode", "expected 'inline' or 'thread'")
    net_seed = _int(neu, "seed", np_, positive=False, allow_none=True)
    trainer = TrainerConfig(
        batch_size=_int(neu, "batch_size", np_),
        learning_rate=_num(neu, "learning_rate", np_, positive=True),
        inner_update_period=_int(neu, "inner_update_period", np_),
        epochs_per_update=_int(neu, "epochs_per_update", np_),
        grad_clip=_num(neu, "grad_clip", np_, positive=True),
        pmax=_int(neu, "pmax", np_),
    )
    ctl = ControllerConfig(
        omega_c=_num(des, "omega_c", dp, positive=True),
        gamma1=_num(des, "gamma1", dp, positive=True),
        gamma2=_num(des, "gamma2", dp, positive=True),
        Q=Q,
        zeta_set=_pset(des.get("zeta_set"), f"{dp}.zeta_set"),
        W_set=_pset(des.get("W_set"), f"{dp}.W_set"),
        hidden=tuple(hidden),
        net_seed=seed if net_seed is None else net_seed,
        trainer=trainer,
        trainer_mode=mode,
        swap_delay=_int(neu, "swap_delay", np_),
        train=_bool(neu, "train", np_),
    )
    cp = f"{path}.certify"
    cer = d["certify"]
    return ScenarioConfig(
        name=name,
        vehicle=vehicle,
        track=_track(d["track"], f"{path}.track"),
        uncertainty=unc,
        controllers=_controllers(d.get("controllers"), f"{path}.controllers"),
        controller=ctl,
        poles=poles,
        dt=dt,
        duration=duration,
        seed=seed,
        x0=_vec(d.get("x0"), 4, f"{path}.x0"),
        r=_num(d, "r", path),
        override_certification=_bool(cer, "override", cp),
        eps_bar=_num(cer, "eps_bar", cp, nonneg=True, allow_none=True),
        raw=d,
    )


def parse_config(doc, source: str = "<config>") -> list:
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "expected a mapping at the top level")
    extra = set(doc) - {"schema", "defaults", "scenarios"}
    if extra:
        raise ConfigError(sorted(extra)[0], "unknown top-level key")
    if doc.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError("schema", f"unsupported schema {doc.get('schema')!r}")
    base = packaged_defaults()
    defaults = doc.get("defaults") or {}
    if not isinstance(defaults, dict):
        raise ConfigError("defaults", "expected a mapping")
    base = deep_merge(base, defaults, "defaults")
    scen = doc.get("scenarios")
    if not isinstance(scen, list) or not scen:
        raise ConfigError("scenarios", "expected a non-empty list")
    out = []
    seen = set()
    for i, entry in enumerate(scen):
        path = f"scenarios[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(path, "expected a mapping")
        entry = dict(entry)
        name = entry.pop("name", None)
        merged = deep_merge(base, entry, path)
        merged["name"] = name
        sc = parse_scenario(merged, path)
        if sc.name in seen:
            raise ConfigError(f"{path}.name", f"duplicate scenario name {sc.name!r}")
        seen.add(sc.name)
        out.append(sc)
    return out


def load_config(path) -> list:
    """Parse a YAML config file into a list of ``ScenarioConfig``."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {p}: {exc.strerror}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"invalid YAML: {exc}") from None
    return parse_config(doc, str(p))


def default_vehicle() -> VehicleParams:
    return VehicleParams(**{k: float(v) for k, v in packaged_defaults()["vehicle"].items()})
