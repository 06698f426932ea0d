"""File storage: client files backed up to a central unit.

Agent 0 counts files not yet copied, agent 1 files in central storage and,
with failures, agent 2 files lost.  Files are created at rate ``lam``; a backup
(rate ``gamma``) moves every uncopied file to storage.  With a faulty link the
background chain alternates between up (state 0, left at rate ``q_up``) and
down (state 1, left at rate ``q_down``), and backups only happen while up.  A
storage failure (rate ``gamma_fail``, any link state) loses every stored file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..kernels import Deterministic
from ..model import ArrivalClass, BackgroundChain, ModelSpec, ShockStream

__all__ = [
    "StorageScenario",
    "StorageMoments",
    "storage_transient_closed_form",
    "link_state_probabilities",
    "backup_cost",
    "backup_cost_derivative",
    "BackupOptimum",
    "optimize_backup_rate",
    "build_storage_spec",
]

VARIANTS = ("basic", "faulty_link", "with_failures")


@dataclass(frozen=True)
class StorageScenario:
    lam: float
    gamma: float = 0.0
    horizon: float = 1.0
    q_up: Optional[float] = None
    q_down: Optional[float] = None
    gamma_fail: Optional[float] = None
    kappa_backup: Optional[float] = None
    kappa_uncopied: Optional[float] = None

    def violations(self) -> list[str]:
        out = []
        for name in ("lam", "gamma", "horizon", "q_up", "q_down", "gamma_fail",
                     "kappa_backup", "kappa_uncopied"):
            val = getattr(self, name)
            if val is not None and (not math.isfinite(val) or val < 0):
                out.append(f"{name} must be finite and non-negative")
        return out


@dataclass(frozen=True)
class StorageMoments:
    m1: float
    m2: float
    v11: float
    v12: float
    v22: float
    var1: float
    var2: float


def storage_transient_closed_form(sc: StorageScenario, t: float) -> StorageMoments:
    """Means, factorial/mixed second moments and variances of the basic variant."""
    lam, g = sc.lam, sc.gamma
    if not g > 0:
        raise ValueError("closed forms need gamma > 0")
    if t < 0:
        raise ValueError("t must be non-negative")
    e = math.exp(-g * t)
    em1 = -math.expm1(-g * t)  # 1 - e^{-gamma t}
    r = lam / g
    gt = g * t
    m1 = r * em1
    m2 = lam * t - r * em1
    v11 = r * r * (2 * em1 - 2 * gt * e)
    v12 = r * r * (gt * (1 + e) - 2 * em1)
    v22 = r * r * (2 * em1 + gt * gt - 2 * gt)
    c = g / lam if lam > 0 else math.inf
    if lam > 0:
        var1 = r * r * (-2 * gt * e - e * e - c * e + 1 + c)
        var2 = r * r * (-2 * gt * e - e * e + c * e + c * g * t + 1 - c)
    else:
        var1 = var2 = 0.0
    return StorageMoments(m1, m2, v11, v12, v22, var1, var2)


def link_state_probabilities(q_up: float, q_down: float, t: float, initial=(1.0, 0.0)) -> np.ndarray:
    """``(P(up), P(down))`` at time ``t`` from the two-state closed form."""
    q = q_up + q_down
    if q == 0:
        return np.asarray(initial, dtype=float)
    f = -math.expm1(-q * t)
    p_ud = q_up / q * f
    p_du = q_down / q * f
    pu0, pd0 = initial
    return np.array([pu0 * (1 - p_ud) + pd0 * p_du, pu0 * p_ud + pd0 * (1 - p_du)])


def _check_costs(sc: StorageScenario):
    for name in ("kappa_backup", "kappa_uncopied"):
        val = getattr(sc, name)
        if val is None or not math.isfinite(val) or val <= 0:
            raise ValueError(f"{name} must be positive")
    if not (sc.lam > 0 and sc.horizon > 0):
        raise ValueError("lam and horizon must be positive")


def backup_cost(sc: StorageScenario, gamma: float) -> float:
    """``F(gamma) = gamma t kappa_B + (lam / gamma)(1 - e^{-gamma t}) kappa_NC``."""
    t, lam = sc.horizon, sc.lam
    if gamma == 0:
        return lam * t * sc.kappa_uncopied
    return gamma * t * sc.kappa_backup + lam / gamma * (-math.expm1(-gamma * t)) * sc.kappa_uncopied


def backup_cost_derivative(sc: StorageScenario, gamma: float) -> float:
    t, lam = sc.horizon, sc.lam
    if gamma == 0:
        return t * sc.kappa_backup - lam * t * t * sc.kappa_uncopied / 2
    x = gamma * t
    if x < 1e-4:
        # series of (x e^{-x} - (1 - e^{-x})) / x^2 = -1/2 + x/3 - x^2/8 + ...
        inner = t * t * (-0.5 + x / 3 - x * x / 8)
    else:
        inner = (x * math.exp(-x) + math.expm1(-x)) / (gamma * gamma)
    return t * sc.kappa_backup + lam * sc.kappa_uncopied * inner


@dataclass(frozen=True)
class BackupOptimum:
    gamma_star: float
    cost: float
    boundary: bool
    bracket: float


def optimize_backup_rate(sc: StorageScenario, tol: float = 1e-8) -> BackupOptimum:
    """Minimize the convex backup cost over ``gamma >= 0``.

    The minimizer is ``0`` exactly when ``2 kappa_B >= lam t kappa_NC``.
    Otherwise the bracket ``[0, gamma_hi]`` is doubled until ``F'(gamma_hi) > 0``,
    narrowed by golden-section search and finished by bisection on ``F'`` so
    that the result is within ``tol * gamma_hi`` of the minimizer.
    """
    _check_costs(sc)
    if 2 * sc.kappa_backup >= sc.lam * sc.horizon * sc.kappa_uncopied:
        return BackupOptimum(0.0, backup_cost(sc, 0.0), True, 0.0)
    hi = 1.0 / sc.horizon
    for _ in range(60):
        if backup_cost_derivative(sc, hi) > 0:
            break
        hi *= 2.0
    else:
        raise ArithmeticError("could not bracket the minimizer")
    if not math.isfinite(backup_cost(sc, hi)):
        raise ArithmeticError("cost is not finite on the bracket")
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = 0.0, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = backup_cost(sc, c), backup_cost(sc, d)
    # golden section down to where cost differences drown in rounding
    while b - a > 1e-5 * hi:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = backup_cost(sc, c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = backup_cost(sc, d)
    # F' is increasing: bisect its sign change for the final digits
    if backup_cost_derivative(sc, a) > 0:
        a = 0.0
    if backup_cost_derivative(sc, b) < 0:
        b = hi
    while b - a > 0.25 * tol * hi:
        mid = 0.5 * (a + b)
        if backup_cost_derivative(sc, mid) > 0:
            b = mid
        else:
            a = mid
    g = 0.5 * (a + b)
    return BackupOptimum(g, backup_cost(sc, g), False, hi)


def build_storage_spec(sc: StorageScenario, variant: str = "basic") -> ModelSpec:
    """Storage model as a dissemination model.

    ``basic``: two agents, no modulation.  ``faulty_link``: up/down link chain
    started up, backups only while up.  ``with_failures``: a third agent
    collecting lost files and a separate failure stream; the link chain is
    used when ``q_up`` and ``q_down`` are given.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    bad = sc.violations()
    if bad:
        raise ValueError("; ".join(bad))
    link = variant == "faulty_link" or (variant == "with_failures" and sc.q_up is not None)
    if link and (sc.q_up is None or sc.q_down is None):
        raise ValueError(f"variant {variant!r} needs q_up and q_down")
    if variant == "with_failures" and sc.gamma_fail is None:
        raise ValueError("variant 'with_failures' needs gamma_fail")
    n = 3 if variant == "with_failures" else 2
    if link:
        chain = BackgroundChain(np.array([[-sc.q_up, sc.q_up], [sc.q_down, -sc.q_down]]), 0)
    else:
        chain = BackgroundChain.trivial()
    d = chain.d

    def unit(i):
        v = np.zeros(n, dtype=np.int64)
        v[i] = 1
        return Deterministic(v)

    backup_rates = np.array([sc.gamma] + [0.0] * (d - 1))
    backup = [[unit(1)] * d, [unit(1)] * d] + ([[unit(2)] * d] if n == 3 else [])
    streams = [ShockStream(backup_rates, backup, name="backup")]
    if n == 3:
        fail = [[unit(0)] * d, [unit(2)] * d, [unit(2)] * d]
        streams.append(ShockStream(np.full(d, sc.gamma_fail), fail, name="failure"))
    arrivals = [ArrivalClass([0], np.full(d, sc.lam))]
    return ModelSpec(n, chain, tuple(arrivals), tuple(streams))
