"""Design certificates (L1-norm conditions, Lyapunov data, transient bounds) and
run audits that compare simulated traces against those bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .controllers import GainSet
from .errors import CertificationFailed, IncompleteTrace
from .numlin import (LtiSystem, eig_extremes, eigvals, first_order_lowpass, l1_norm,
                     one_minus_lowpass, series, solve_lyapunov, state_space, tf_to_lti)
from .plant import PlantModel
from .signals import ProjectionSet

SCHEMA = "neural-l1-certificate/1"


@dataclass(frozen=True, eq=False)
class CertificateReport:
    omega_c: float
    norm_G: float
    norm_H: float
    norm_C: float
    norm_H1: float
    norm_HC: float
    L1_bound: float
    L2_bound: float
    lambda1: float
    lambda2: float
    P: np.ndarray
    eig_P_min: float
    eig_P_max: float
    eig_Q_min: float
    eig_Q_max: float
    norm_PB1: float
    W_max: float
    zeta_max: float
    x_tilde_bound: float
    norm_Czk: float
    norm_CHinv: float
    k_g: float
    zeta_1norm: float
    eps_bar: float | None = None
    flags: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def failing(self) -> list:
        return [k for k, v in self.flags.items() if not v]

    @property
    def LB(self) -> float | None:
        """Ultimate bound on the prediction error for a given approximation error level."""
        if self.eps_bar is None:
            return None
        return lower_bound(self, self.eps_bar)

    def gamma1(self, delta_diff_sup: float = 0.0) -> float:
        den = 1.0 - self.lambda1
        return (self.norm_C * self.x_tilde_bound + self.norm_G * delta_diff_sup) / den

    def gamma2(self, delta_diff_sup: float = 0.0) -> float:
        return self.norm_Czk * self.gamma1(delta_diff_sup) + self.norm_CHinv * self.x_tilde_bound

    def eps_G_bound(self, x_tilde_norm, strict: bool = False):
        """Per-step admissible generalisation error for a given ``||x_tilde||``."""
        coef = self.eig_Q_min / (2.0 * self.norm_PB1) if strict else self.eig_Q_max / self.eig_P_min
        return coef * np.asarray(x_tilde_norm)

    def xref_bound(self, eta_sup: float, psi_sup: float, r_sup: float = 0.0, x_in_sup: float = 0.0) -> float:
        """Uniform bound on ``||x_ref||`` from the L1-norm small-gain argument."""
        den = 1.0 - self.norm_G * self.zeta_1norm
        if den <= 0:
            return math.inf
        num = self.norm_G * eta_sup + self.norm_H1 * psi_sup + abs(self.k_g) * self.norm_HC * r_sup + x_in_sup
        return num / den


def lower_bound(report: CertificateReport, eps_bar: float) -> float:
    return 2.0 * report.eig_P_max * eps_bar / report.eig_Q_min


def x_tilde_bound(W_max: float, zeta_max: float, eig_P_min: float, gamma1: float, gamma2: float) -> float:
    return math.sqrt(W_max / (eig_P_min * gamma1) + zeta_max / (eig_P_min * gamma2))


def filtered_inverse_norm(A_m, B1, c0, omega_c: float) -> float:
    """L1 norm of ``C(s) H(s)^-1`` realised as ``C(s) / (c0' H(s)) c0'``.

    ``c0' H(s) = N(s) / det(sI - A_m)`` with ``N = det(sI - A_m + B1 c0') - det(sI - A_m)``.
    Returns ``inf`` when ``N`` is not Hurwitz (non-minimum-phase choice of ``c0``).
    """
    A_m = np.asarray(A_m, dtype=float)
    B1 = np.asarray(B1, dtype=float)
    c0 = np.asarray(c0, dtype=float)
    d = np.real(np.poly(eigvals(A_m)))
    dc = np.real(np.poly(eigvals(A_m - np.outer(B1, c0))))
    N = np.trim_zeros(dc - d, "f")
    if N.size < 2 or np.max(np.real(np.roots(N))) >= 0:
        return math.inf
    num = omega_c * d
    den = np.polymul([1.0, omega_c], N)
    sys = tf_to_lti(num, den)
    return l1_norm(sys) * float(np.abs(c0).sum())


def certify_design(plant: PlantModel, gains: GainSet, omega_c: float, zeta_set: ProjectionSet,
                   W_set: ProjectionSet, gamma1: float, gamma2: float, Q=None, feature_dim: int = 16,
                   true_zeta=None, eps_bar: float | None = None, raise_on_fail: bool = True,
                   use_net: bool = True) -> CertificateReport:
    """Evaluate the L1-norm conditions and assemble every certified quantity.

    When ``use_net`` is false the network set is dropped from the bounds
    (plain L1 design).
    """
    n = plant.A.shape[0]
    Q = np.eye(n) if Q is None else np.asarray(Q, dtype=float)
    A_m, B1, B2 = gains.A_m, plant.B1, plant.B2
    H = state_space(A_m, B1.reshape(-1, 1))
    G = series(one_minus_lowpass(omega_c), H)
    norm_G = l1_norm(G)
    norm_H = l1_norm(H)
    norm_C = l1_norm(first_order_lowpass(omega_c))
    norm_H1 = l1_norm(state_space(A_m, B2.reshape(-1, 1)))
    norm_HC = l1_norm(series(first_order_lowpass(omega_c), H))
    L1b = math.sqrt(n) * zeta_set.theta_max
    L2b = math.sqrt(feature_dim) * W_set.theta_max if use_net else 0.0
    lam1 = norm_G * L1b
    lam2 = norm_G * L2b
    P = solve_lyapunov(A_m, Q)
    pmin, pmax = eig_extremes(P)
    qmin, qmax = eig_extremes(Q)
    W_max = 4.0 * W_set.theta_max**2 if use_net else 0.0
    z_max = 4.0 * zeta_set.theta_max**2
    xtb = x_tilde_bound(W_max, z_max, pmin, gamma1, gamma2)
    if true_zeta is None:
        norm_Czk = norm_C * L1b + float(np.abs(gains.k_m).sum())
        z1 = L1b
    else:
        tz = np.asarray(true_zeta, dtype=float).reshape(1, -1)
        Czk = LtiSystem([[-omega_c]], omega_c * tz, [[1.0]], np.asarray(gains.k_m, dtype=float).reshape(1, -1))
        norm_Czk = l1_norm(Czk)
        z1 = float(np.abs(tz).sum())
    PB1 = P @ B1
    norm_CHinv = filtered_inverse_norm(A_m, B1, PB1, omega_c)
    flags = {
        "lambda1": lam1 < 1.0,
        "lambda2": lam2 < 1.0,
        "lyapunov": pmin > 0.0,
        "inverse_min_phase": math.isfinite(norm_CHinv),
    }
    rep = CertificateReport(
        omega_c=float(omega_c), norm_G=norm_G, norm_H=norm_H, norm_C=norm_C, norm_H1=norm_H1,
        norm_HC=norm_HC, L1_bound=L1b, L2_bound=L2b, lambda1=lam1, lambda2=lam2, P=P,
        eig_P_min=pmin, eig_P_max=pmax, eig_Q_min=qmin, eig_Q_max=qmax,
        norm_PB1=float(np.linalg.norm(PB1)), W_max=W_max, zeta_max=z_max, x_tilde_bound=xtb,
        norm_Czk=norm_Czk, norm_CHinv=norm_CHinv, k_g=float(gains.k_g), zeta_1norm=z1,
        eps_bar=eps_bar, flags=flags,
    )
    if raise_on_fail and not rep.passed:
        bad = rep.failing()[0]
        detail = {"lambda1": f"lambda1 = {lam1:.6g} >= 1", "lambda2": f"lambda2 = {lam2:.6g} >= 1"}.get(bad, "")
        raise CertificationFailed(bad, detail)
    return rep


def minimal_cutoff(plant: PlantModel, gains: GainSet, zeta_set: ProjectionSet, W_set: ProjectionSet,
                   feature_dim: int = 16, margin: float = 0.9, lo: float = 1.0, hi: float = 1e6,
                   use_net: bool = True) -> float:
    """Smallest cutoff (bisection on a log scale) with ``max(lambda1, lambda2) <= margin``."""
    H = state_space(gains.A_m, plant.B1.reshape(-1, 1))
    L = max(math.sqrt(4) * zeta_set.theta_max,
            math.sqrt(feature_dim) * W_set.theta_max if use_net else 0.0)

    def lam(w):
        return l1_norm(series(one_minus_lowpass(w), H)) * L

    if lam(hi) > margin:
        raise CertificationFailed("lambda1", f"no cutoff below {hi:g} satisfies the condition")
    for _ in range(40):
        mid = math.sqrt(lo * hi)
        if lam(mid) <= margin:
            hi = mid
        else:
            lo = mid
        if hi / lo < 1.001:
            break
    return hi


# --------------------------------------------------------------------------- run audits

TRACE_FIELDS = ("x", "x_hat", "x_ref", "u", "u_ref", "delta_hat", "zeta_hat_x",
                "parametric", "delta_true", "delta_ref")


@dataclass(frozen=True)
class BoundAudit:
    x_tilde_sup: float
    x_tilde_bound: float
    pass_x_tilde: bool
    tail_mean_x_tilde: float
    LB: float
    pass_tail: bool
    xref_diff_sup: float
    gamma1: float
    pass_gamma1: bool
    uref_diff_sup: float
    gamma2: float
    pass_gamma2: bool
    delta_diff_sup: float
    eps_rate: float
    eps_rate_strict: float
    strict: bool

    @property
    def passed(self) -> bool:
        ok = self.pass_x_tilde and self.pass_gamma1 and self.pass_gamma2
        if self.strict:
            ok = ok and self.eps_rate_strict >= 0.95
        return ok


def _validate_trace(trace) -> dict:
    out = {}
    n = None
    for name in TRACE_FIELDS:
        if name not in trace:
            raise IncompleteTrace(f"trace lacks column {name!r}")
        arr = np.asarray(trace[name], dtype=float)
        if n is None:
            n = arr.shape[0]
        if arr.shape[0] != n:
            raise IncompleteTrace(f"column {name!r} has {arr.shape[0]} rows, expected {n}")
        if not np.all(np.isfinite(arr)):
            raise IncompleteTrace(f"column {name!r} has non-finite values")
        out[name] = arr
    if not n:
        raise IncompleteTrace("empty trace")
    return out


def check_run(report: CertificateReport, trace, strict: bool = False, tail_fraction: float = 0.1,
              tol: float = 1e-9) -> BoundAudit:
    """Audit a closed-loop trace against the certified bounds.

    Hard checks: ``||x_tilde|| <= x_tilde_bound`` at every step, and the two
    reference-tracking bounds. The tail convergence check is advisory. The
    generalisation-error check reports the fraction of steps whose total
    estimation error lies below the admissible level.
    """
    if not report.passed:
        raise CertificationFailed(report.failing()[0], "design is not certified; refusing to audit")
    tr = _validate_trace(trace)
    x, x_hat = tr["x"], tr["x_hat"]
    x_tilde = np.linalg.norm(x_hat - x, axis=1)
    xt_sup = float(x_tilde.max())
    N = x_tilde.size
    tail = x_tilde[N - max(1, int(round(tail_fraction * N))):]
    sigma_hat = tr["delta_hat"] + tr["zeta_hat_x"]
    sigma_true = tr["parametric"] + tr["delta_true"]
    err = np.abs(sigma_hat - sigma_true)
    eps_bar = report.eps_bar
    if eps_bar is None:
        eps_bar = float(np.percentile(np.abs(tr["delta_hat"] - tr["delta_true"]), 95))
    LB = lower_bound(report, eps_bar)
    dd = float(np.max(np.abs(tr["delta_ref"] - tr["delta_true"])))
    g1 = report.gamma1(dd)
    g2 = report.gamma2(dd)
    xr = float(np.max(np.abs(tr["x_ref"] - x)))
    ur = float(np.max(np.abs(tr["u_ref"] - tr["u"])))
    rate = float(np.mean(err < report.eps_G_bound(x_tilde)))
    rate_s = float(np.mean(err < report.eps_G_bound(x_tilde, strict=True)))
    return BoundAudit(
        x_tilde_sup=xt_sup, x_tilde_bound=report.x_tilde_bound,
        pass_x_tilde=xt_sup <= report.x_tilde_bound + tol,
        tail_mean_x_tilde=float(tail.mean()), LB=LB, pass_tail=float(tail.mean()) <= LB + tol,
        xref_diff_sup=xr, gamma1=g1, pass_gamma1=xr <= g1 + tol,
        uref_diff_sup=ur, gamma2=g2, pass_gamma2=ur <= g2 + tol,
        delta_diff_sup=dd, eps_rate=rate, eps_rate_strict=rate_s, strict=strict,
    )


# --------------------------------------------------------------------------- report file


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_report(report: CertificateReport, audits: dict | None = None) -> str:
    """Structured text: ``key = value`` lines, sections in brackets."""
    lines = [f"#schema={SCHEMA}", "[design]"]
    for key in ("omega_c", "norm_G", "norm_H", "norm_C", "norm_H1", "norm_HC", "L1_bound", "L2_bound",
                "lambda1", "lambda2", "eig_P_min", "eig_P_max", "eig_Q_min", "eig_Q_max", "norm_PB1",
                "W_max", "zeta_max", "x_tilde_bound", "norm_Czk", "norm_CHinv", "k_g", "eps_bar"):
        lines.append(f"{key} = {_fmt(getattr(report, key))}")
    lines.append(f"gamma1_nominal = {_fmt(report.gamma1(0.0))}")
    lines.append(f"gamma2_nominal = {_fmt(report.gamma2(0.0))}")
    lines.append("P = " + " ".join(repr(float(v)) for v in report.P.reshape(-1)))
    for k, v in report.flags.items():
        lines.append(f"pass_{k} = {_fmt(bool(v))}")
    lines.append(f"certified = {_fmt(report.passed)}")
    for name in sorted(audits or {}):
        a = audits[name]
        lines.append(f"[audit {name}]")
        for key in BoundAudit.__dataclass_fields__:
            lines.append(f"{key} = {_fmt(getattr(a, key))}")
        lines.append(f"passed = {_fmt(a.passed)}")
    return "\n".join(lines) + "\n"
