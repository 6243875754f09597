"""Closed-loop simulation of one scenario across controllers, plus metrics and ranking."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..certify import BoundAudit, CertificateReport, certify_design, check_run
from ..controllers import Controller, ControllerKind, design_gains, ReferenceSystem
from ..errors import CertificationFailed, MismatchedScenarios, NonFinite
from ..plant import DisturbanceStream, PlantPropagator, TrackSpec, build_plant
from .config import ScenarioConfig

DIVERGENCE_NORM = 1e3
WORKERS_ENV = "NEURAL_L1_WORKERS"

# fixed column order of a trace; vector fields expand to name0..name3
COLUMNS = (
    ("t", 1), ("s", 1), ("x", 4), ("xhat", 4), ("xref", 4),
    ("u", 1), ("u_m", 1), ("u_ad", 1), ("u_ref", 1),
    ("zeta_hat", 4), ("delta_hat", 1), ("zeta_hat_x", 1),
    ("parametric", 1), ("noise", 1), ("pulse", 1), ("delta_true", 1), ("delta_ref", 1),
    ("disturbance", 1), ("psi_dot_des", 1), ("diverged", 1),
)


def column_names() -> list:
    out = []
    for name, width in COLUMNS:
        out.extend([name] if width == 1 else [f"{name}{i}" for i in range(width)])
    return out


@dataclass(eq=False)
class RunTrace:
    scenario: str
    controller: ControllerKind
    seed: int
    dt: float
    Vx: float
    track_length: float
    data: np.ndarray  # (n_rows, n_columns) in ``column_names()`` order
    diverged: bool = False

    def __post_init__(self):
        self._index = {}
        col = 0
        for name, width in COLUMNS:
            self._index[name] = slice(col, col + width) if width > 1 else col
            col += width

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[:, self._index[name]]

    def audit_view(self) -> dict:
        """Columns under the names expected by ``certify.check_run``."""
        return {
            "x": self["x"], "x_hat": self["xhat"], "x_ref": self["xref"],
            "u": self["u"], "u_ref": self["u_ref"], "delta_hat": self["delta_hat"],
            "zeta_hat_x": self["zeta_hat_x"], "parametric": self["parametric"],
            "delta_true": self["delta_true"], "delta_ref": self["delta_ref"],
        }


@dataclass(frozen=True)
class MetricsSummary:
    scenario: str
    controller: ControllerKind
    seed: int
    rms_e1: float
    max_abs_e1: float
    rms_e2: float
    completion: float
    diverged: bool
    ss_mae: float
    n_steps: int

    FIELDS = ("scenario", "controller", "seed", "rms_e1", "max_abs_e1", "rms_e2", "completion",
              "diverged", "ss_mae", "n_steps")


@dataclass(eq=False)
class ScenarioResult:
    config: ScenarioConfig
    report: CertificateReport
    traces: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    audits: dict = field(default_factory=dict)


def compute_metrics(trace: RunTrace) -> MetricsSummary:
    e1 = trace["x"][:, 0]
    e2 = trace["x"][:, 2]
    n = len(trace)
    tail = slice(n // 2, n)
    err = trace["delta_hat"][tail] + trace["zeta_hat_x"][tail] - trace["parametric"][tail]
    t_end = trace["t"][-1] + trace.dt
    return MetricsSummary(
        scenario=trace.scenario, controller=trace.controller, seed=trace.seed,
        rms_e1=float(np.sqrt(np.mean(e1 * e1))),
        max_abs_e1=float(np.max(np.abs(e1))),
        rms_e2=float(np.sqrt(np.mean(e2 * e2))),
        completion=float(min(1.0, abs(trace.Vx) * t_end / trace.track_length)),
        diverged=bool(trace.diverged),
        ss_mae=float(np.mean(np.abs(err))),
        n_steps=n,
    )


def compare(metrics) -> list:
    """Rank controllers run on one scenario and seed.

    Non-diverged runs come first, then by ``max_abs_e1``, ``rms_e1`` and enum order.
    """
    metrics = list(metrics)
    if len(metrics) < 2:
        raise MismatchedScenarios("need at least two controllers to compare")
    keys = {(m.scenario, m.seed) for m in metrics}
    if len(keys) != 1:
        raise MismatchedScenarios(f"metrics span several scenario/seed pairs: {sorted(keys)}")
    kinds = [m.controller for m in metrics]
    if len(set(kinds)) != len(kinds):
        raise MismatchedScenarios("a controller appears more than once")
    return sorted(metrics, key=lambda m: (m.diverged, m.max_abs_e1, m.rms_e1, int(m.controller)))


def format_ranking(ranked) -> str:
    lines = [f"{'rank':>4}  {'controller':<10} {'max|e1|':>12} {'rms e1':>12} {'completion':>10} diverged"]
    for i, m in enumerate(ranked, 1):
        lines.append(f"{i:>4}  {m.controller.label:<10} {m.max_abs_e1:12.6g} {m.rms_e1:12.6g} "
                     f"{m.completion:10.4f} {'yes' if m.diverged else 'no'}")
    return "\n".join(lines)


# --------------------------------------------------------------------------- exogenous signals


def _curvature_schedule(track: TrackSpec, s: np.ndarray) -> np.ndarray:
    if track.kind == "circle":
        return np.full(s.shape, 1.0 / track.radius)
    ends = np.cumsum([L for L, _ in track.segments])
    k = np.array([c for _, c in track.segments])
    sw = np.mod(s, track.length) if track.closed else s
    idx = np.minimum(np.searchsorted(ends, sw, side="right"), len(k) - 1)
    return k[idx]


@dataclass(frozen=True, eq=False)
class Exogenous:
    """Everything a run sees that does not depend on the controller."""

    t: np.ndarray
    s: np.ndarray
    s_wrapped: np.ndarray
    psi: np.ndarray
    noise: np.ndarray
    sensor: np.ndarray | None


def exogenous_signals(cfg: ScenarioConfig) -> Exogenous:
    n = cfg.n_steps
    t = np.arange(n) * cfg.dt
    s = cfg.vehicle.Vx * t
    sw = np.array([cfg.track.wrap(float(v)) for v in s]) if cfg.track.closed else s.copy()
    psi = cfg.vehicle.Vx * _curvature_schedule(cfg.track, s)
    stream = DisturbanceStream(cfg.uncertainty)
    noise = stream.control_noise_block(n)
    sensor = stream.sensor_noise_block(n) if cfg.uncertainty.has_sensor_noise else None
    return Exogenous(t, s, sw, psi, noise, sensor)


def _pulse_fn(cfg: ScenarioConfig):
    pulses = [(p.s_start, p.s_end, np.array(p.dzeta), p.bias) for p in cfg.uncertainty.pulses]
    if not pulses:
        return None

    def pulse(x, s):
        total = 0.0
        for a, b, dz, bias in pulses:
            if a <= s < b:
                total += float(dz @ x) + bias
        return total
    return pulse


def reference_trajectory(cfg: ScenarioConfig, plant, gains, ex: Exogenous):
    """Reference loop driven by the true uncertainty on the shared realisation."""
    n = cfg.n_steps
    ref = ReferenceSystem(plant, gains, cfg.controller.omega_c, cfg.dt, cfg.uncertainty.zeta, cfg.x0)
    pulse = _pulse_fn(cfg)
    xs = np.empty((n, 4))
    us = np.empty(n)
    ds = np.empty(n)
    r = cfg.r
    for k in range(n):
        x = ref.x_ref
        d = ex.noise[k]
        if pulse is not None:
            d += pulse(x, ex.s_wrapped[k])
        xs[k] = x
        ds[k] = d
        us[k] = ref.step(d, r, ex.psi[k])
        if not (math.isfinite(us[k]) and math.isfinite(float(ref.x_ref.sum()))):
            # keep shapes complete; the audit will reject the non-finite rows
            xs[k + 1:] = np.nan
            us[k + 1:] = np.nan
            ds[k + 1:] = np.nan
            break
    return xs, us, ds


# --------------------------------------------------------------------------- closed loop


def simulate(cfg: ScenarioConfig, kind: ControllerKind, plant, gains, ex: Exogenous, ref) -> RunTrace:
    n = cfg.n_steps
    xs_ref, us_ref, ds_ref = ref
    ctrl = Controller(kind, plant, gains, cfg.controller, cfg.dt, x0=cfg.x0)
    prop = PlantPropagator(plant, cfg.dt)
    zeta = np.array(cfg.uncertainty.zeta)
    pulse = _pulse_fn(cfg)
    sensor = ex.sensor
    r = cfg.r
    ncol = len(column_names())
    data = np.zeros((n, ncol))
    x = np.array(cfg.x0, dtype=float)
    rows = n
    diverged = False
    try:
        for k in range(n):
            psi = ex.psi[k]
            x_meas = x if sensor is None else x + sensor[k]
            x_hat = ctrl.x_hat
            u, dg = ctrl.step(x_meas, r, psi)
            par = float(zeta @ x)
            pl = pulse(x, ex.s_wrapped[k]) if pulse is not None else 0.0
            d = ex.noise[k] + pl
            row = data[k]
            row[2:6] = x
            row[6:10] = x_hat
            row[14:17] = (u, dg.u_m, dg.u_ad)
            row[18:22] = ctrl.zeta_hat
            row[22:25] = (dg.delta_hat, dg.zeta_hat_x, par)
            row[26:28] = (pl, d)
            row[29] = par + d
            x = prop.step(x, u + par + d, psi)
            nx = float(x @ x)
            if not (nx <= DIVERGENCE_NORM * DIVERGENCE_NORM):
                diverged = True
                rows = k + 1
                break
    except (NonFinite, FloatingPointError):
        diverged = True
        rows = k
    finally:
        ctrl.close()
    # exogenous and reference columns do not depend on the loop
    data[:, 0] = ex.t[:n]
    data[:, 1] = ex.s[:n]
    data[:, 10:14] = xs_ref[:n]
    data[:, 17] = us_ref[:n]
    data[:, 25] = ex.noise[:n]
    data[:, 28] = ds_ref[:n]
    data[:, 30] = ex.psi[:n]
    data = data[:max(rows, 1)]
    if diverged:
        data[-1, -1] = 1.0
    return RunTrace(cfg.name, ControllerKind(kind), cfg.seed, cfg.dt, cfg.vehicle.Vx,
                    cfg.track.length, data, diverged)


def certify_scenario(cfg: ScenarioConfig, override: bool = False):
    plant = build_plant(cfg.vehicle)
    gains = design_gains(plant, cfg.poles)
    c = cfg.controller
    report = certify_design(
        plant, gains, c.omega_c, c.zeta_set, c.W_set, c.gamma1, c.gamma2, Q=c.Q,
        feature_dim=c.hidden[-1], true_zeta=cfg.uncertainty.zeta, eps_bar=cfg.eps_bar,
        raise_on_fail=not (override or cfg.override_certification),
        use_net=any(k.uses_net for k in cfg.controllers),
    )
    return plant, gains, report


AUDITED = (ControllerKind.L1, ControllerKind.NEURAL_L1)


def run_scenario(cfg: ScenarioConfig, override: bool = False, strict: bool = False,
                 workers: int | None = None) -> ScenarioResult:
    """Certify, co-simulate every requested controller, compute metrics and audits.

    Raises ``CertificationFailed`` when the design is not certified and no
    override is set.
    """
    plant, gains, report = certify_scenario(cfg, override)
    ex = exogenous_signals(cfg)
    ref = reference_trajectory(cfg, plant, gains, ex)
    kinds = list(cfg.controllers)
    workers = resolve_workers(workers)
    if workers > 1 and len(kinds) > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(kinds))) as pool:
            traces = list(pool.map(lambda k: simulate(cfg, k, plant, gains, ex, ref), kinds))
    else:
        traces = [simulate(cfg, k, plant, gains, ex, ref) for k in kinds]
    res = ScenarioResult(cfg, report)
    for k, tr in zip(kinds, traces):
        res.traces[k] = tr
        res.metrics[k] = compute_metrics(tr)
        if report.passed and k in AUDITED and not tr.diverged and np.all(np.isfinite(ref[0])):
            res.audits[k] = check_run(report, tr.audit_view(), strict=strict)
    return res


def resolve_workers(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_grid(configs, override: bool = False, strict: bool = False, workers: int | None = None) -> list:
    """Run several scenarios; results come back sorted by scenario name."""
    workers = resolve_workers(workers)
    configs = list(configs)
    if workers > 1 and len(configs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(lambda c: run_scenario(c, override, strict, workers=1), configs))
    else:
        out = [run_scenario(c, override, strict, workers=1) for c in configs]
    return sorted(out, key=lambda r: r.config.name)


__all__ = [
    "BoundAudit", "CertificationFailed", "COLUMNS", "MetricsSummary", "RunTrace", "ScenarioResult",
    "column_names", "compare", "compute_metrics", "format_ranking", "run_grid", "run_scenario",
    "simulate", "certify_scenario", "exogenous_signals", "reference_trajectory",
]
