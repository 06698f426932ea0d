"""Leader/follower wealth redistribution and poverty-trap approximations.

Agent 0 is the leader and the only agent with external income.  At a shock
each leader unit stays with probability ``p_k``, moves to a given follower with
probability ``r_k`` and is lost otherwise; each follower unit moves to a given
follower (itself included) with probability ``s_k`` and is lost otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import numerics
from ..kernels import UnitMultinomialWithLeak
from ..model import ArrivalClass, BackgroundChain, ModelSpec, make_spec, stationary_distribution
from ..moments import reduce_exchangeable
from .subpopulations import leader_follower_system

__all__ = [
    "WealthScenario",
    "build_wealth_spec",
    "transient_preset",
    "poverty_preset",
    "leader_follower_groups",
    "leader_follower_matrices",
    "FollowerMoments",
    "follower_moments",
    "poverty_threshold_prob",
    "poverty_pair_prob",
    "PovertyCount",
    "poverty_count_distribution",
]


@dataclass(frozen=True)
class WealthScenario:
    n_agents: int
    q12: float
    q21: float
    lam: tuple
    gamma: tuple
    p: tuple
    r: tuple
    s: tuple

    @classmethod
    def from_leaks(cls, n_agents, q12, q21, lam, gamma, p, leader_leak, follower_leak):
        """Recover ``r_k`` and ``s_k`` from the leak probabilities.

        ``leader_leak[k] = 1 - p_k - (I-1) r_k`` and ``follower_leak[k] = 1 - (I-1) s_k``.
        """
        m = n_agents - 1
        r = tuple((1.0 - pk - lk) / m for pk, lk in zip(p, leader_leak))
        s = tuple((1.0 - lk) / m for lk in follower_leak)
        return cls(n_agents, q12, q21, tuple(lam), tuple(gamma), tuple(p), r, s)

    @property
    def leader_leak(self) -> np.ndarray:
        return 1.0 - np.asarray(self.p) - (self.n_agents - 1) * np.asarray(self.r)

    @property
    def follower_leak(self) -> np.ndarray:
        return 1.0 - (self.n_agents - 1) * np.asarray(self.s)

    def violations(self) -> list[str]:
        out = []
        if self.n_agents < 2:
            out.append("need a leader and at least one follower")
        for name in ("lam", "gamma", "p", "r", "s"):
            if len(getattr(self, name)) != 2:
                out.append(f"{name} needs one value per background state")
        for name in ("p", "r", "s"):
            vals = np.asarray(getattr(self, name), float)
            if np.any(vals < 0) or np.any(vals > 1):
                out.append(f"{name} outside [0, 1]")
        tol = 1e-12
        if np.any(self.leader_leak < -tol):
            out.append("r_k exceeds (1 - p_k) / (I - 1)")
        if np.any(self.follower_leak < -tol):
            out.append("s_k exceeds 1 / (I - 1)")
        if min(self.q12, self.q21) < 0 or min(self.lam) < 0 or min(self.gamma) < 0:
            out.append("rates must be non-negative")
        return out


def transient_preset(n_agents: int = 30) -> WealthScenario:
    """Moderate-income scenario used for transient mean curves."""
    return WealthScenario.from_leaks(n_agents, 0.01, 0.05, (3.0, 1.0), (2.0, 1.0), (0.3, 0.6),
                                     (0.05, 0.01), (0.05, 0.10))


def poverty_preset(n_agents: int = 30) -> WealthScenario:
    """High-income scenario used for the poverty-trap approximations."""
    return WealthScenario.from_leaks(n_agents, 0.01, 0.05, (10.0, 6.0), (4.0, 2.0), (0.2, 0.4),
                                     (0.05, 0.01), (0.03, 0.07))


def build_wealth_spec(sc: WealthScenario) -> ModelSpec:
    """Leader-and-followers model, chain started stationary, everyone broke."""
    bad = sc.violations()
    if bad:
        raise ValueError("; ".join(bad))
    n = sc.n_agents
    leader = [UnitMultinomialWithLeak([sc.p[k]] + [sc.r[k]] * (n - 1)) for k in range(2)]
    follower = [UnitMultinomialWithLeak([0.0] + [sc.s[k]] * (n - 1)) for k in range(2)]
    kernels = [leader] + [follower] * (n - 1)
    chain = BackgroundChain.two_state(sc.q12, sc.q21, initial="stationary")
    return make_spec(n, chain, [ArrivalClass([0], sc.lam)], sc.gamma, kernels)


def leader_follower_groups(n_agents: int):
    return [[0], list(range(1, n_agents))]


def leader_follower_matrices(sc: WealthScenario):
    """Hand-reduced ``(A, Lambda)`` in layout ``(L_1, L_2, F_1, F_2)``."""
    Q = np.array([[-sc.q12, sc.q12], [sc.q21, -sc.q21]])
    zero = np.zeros(2)
    return leader_follower_system(Q, sc.lam, zero, sc.gamma, sc.p, sc.r, zero, sc.s, sc.n_agents)


@dataclass(frozen=True)
class FollowerMoments:
    """Moments of the leader and of followers, aggregated over the background state.

    ``var_f`` is the follower variance and ``cov_ff`` the covariance of two
    distinct followers.
    """

    m_leader: float
    m_follower: float
    v_ff: float
    v_ffp: float
    var_f: float
    cov_ff: float


def follower_moments(sc: WealthScenario, t: float = None, h: float = 1e-2) -> FollowerMoments:
    """Stationary moments (``t=None``) or transient ones at time ``t``."""
    spec = build_wealth_spec(sc)
    red = reduce_exchangeable(spec, leader_follower_groups(sc.n_agents))
    if t is None:
        m, v = red.stationary(stationary_distribution(spec.chain))
    else:
        _, ms, vs = red.transient(t, h)
        m, v = ms[-1], vs[-1]
    first = {c: m[i] for i, c in enumerate(red.first_classes)}
    second = {c: v[i] for i, c in enumerate(red.second_classes)}
    mL = first[(0, 0)] + first[(0, 1)]
    mF = first[(1, 0)] + first[(1, 1)]
    vFF = second[(1, 1, True, 0)] + second[(1, 1, True, 1)]
    vFFp = second.get((1, 1, False, 0), np.nan) + second.get((1, 1, False, 1), np.nan)
    return FollowerMoments(mL, mF, vFF, vFFp, vFF + mF - mF ** 2, vFFp - mF ** 2)


def poverty_threshold_prob(m_f: float, var_f: float, c: float) -> float:
    """Continuity-corrected normal approximation of ``P(M_F <= c)``."""
    if not var_f > 0:
        raise ValueError("variance must be positive")
    return float(numerics.std_normal_cdf((c + 0.5 - m_f) / np.sqrt(var_f)))


def poverty_pair_prob(m_f: float, var_f: float, cov_ff: float, c: float) -> float:
    """Bivariate normal approximation of ``P(M_F <= c, M_F' <= c)``."""
    if not var_f > 0 or abs(cov_ff) >= var_f:
        raise ValueError("covariance matrix is not positive definite")
    z = (c + 0.5 - m_f) / np.sqrt(var_f)
    return float(numerics.bivariate_normal_cdf(z, z, cov_ff / var_f))


@dataclass(frozen=True)
class PovertyCount:
    mu: float
    sigma: float
    pmf: np.ndarray


def poverty_count_distribution(n_agents: int, f: float, f_pair: float) -> PovertyCount:
    """Normal approximation of the number of poor followers.

    ``pmf[k]`` for ``k = 0..I-1`` is the continuity-corrected normal mass of
    ``[k - 1/2, k + 1/2]``; a zero variance gives a point mass at ``mu``.
    """
    if not (0 <= f <= 1 and 0 <= f_pair <= 1):
        raise ValueError("probabilities outside [0, 1]")
    m = n_agents - 1
    mu = m * f
    var = m * f * (1 - f) + m * (m - 1) * (f_pair - f * f)
    k = np.arange(m + 1)
    if var < -1e-12:
        raise ValueError("negative variance of the poor count")
    if var <= 1e-12:
        # f in {0, 1} with matching f_pair: the count is certain
        pmf = (k == int(round(mu))).astype(float)
        return PovertyCount(float(mu), 0.0, pmf)
    sigma = float(np.sqrt(var))
    pmf = numerics.std_normal_cdf((k + 0.5 - mu) / sigma) - numerics.std_normal_cdf((k - 0.5 - mu) / sigma)
    return PovertyCount(float(mu), sigma, np.asarray(pmf, dtype=float))
