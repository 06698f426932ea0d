"""Two-group opinion dynamics with a normal and an adapted background mode.

Agents ``0..I_A-1`` form group A, the rest group B.  In the normal mode (state
0) every opinion unit is placed by a unit multinomial across both groups with
no leak.  In the adapted mode (state 1) the groups separate: B units stay in
B, and each A unit becomes two units with probability ``alpha`` before being
placed within A.  Group A may also gain opinion from outside at rate
``lam_a2`` in the adapted mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..kernels import Amplified, UnitMultinomialWithLeak
from ..model import ArrivalClass, BackgroundChain, ModelSpec, make_spec

__all__ = [
    "OpinionScenario",
    "base_preset",
    "build_opinion_spec",
    "opinion_groups",
    "opinion_mean_matrix",
    "opinion_steady_state",
    "relative_normalize",
]


@dataclass(frozen=True)
class OpinionScenario:
    n_a: int
    n_b: int
    q12: float
    q21: float
    gamma: float
    p_aa1: float
    p_ab1: float
    p_ba1: float
    p_bb1: float
    p_aa2: float
    p_bb2: float
    alpha: float = 0.0
    lam_a2: float = 0.0
    m0_a: int = 1
    m0_b: int = 5

    @classmethod
    def from_ratios(cls, n_a, n_b, q12, q21, gamma, ratio_a, ratio_b, alpha=0.0, lam_a2=0.0,
                    m0_a=1, m0_b=5):
        """Placement probabilities from within/across attention ratios.

        ``ratio_a = I_A p_AA1 / (I_B p_AB1)`` and ``ratio_b = I_A p_BA1 / (I_B p_BB1)``,
        with no leak in the normal mode and ``I_A p_AA2 = I_B p_BB2 = 1``.
        """
        p_ab1 = 1.0 / (n_b * (1.0 + ratio_a))
        p_aa1 = ratio_a / (n_a * (1.0 + ratio_a))
        p_bb1 = 1.0 / (n_b * (1.0 + ratio_b))
        p_ba1 = ratio_b / (n_a * (1.0 + ratio_b))
        return cls(n_a, n_b, q12, q21, gamma, p_aa1, p_ab1, p_ba1, p_bb1, 1.0 / n_a, 1.0 / n_b,
                   alpha, lam_a2, m0_a, m0_b)

    @property
    def total_mass(self) -> float:
        return self.n_a * self.m0_a + self.n_b * self.m0_b

    def violations(self) -> list[str]:
        out = []
        tol = 1e-12
        if abs(self.n_a * self.p_aa1 + self.n_b * self.p_ab1 - 1) > tol:
            out.append("group A placements in the normal mode must sum to one")
        if abs(self.n_a * self.p_ba1 + self.n_b * self.p_bb1 - 1) > tol:
            out.append("group B placements in the normal mode must sum to one")
        if abs(self.n_a * self.p_aa2 - 1) > tol:
            out.append("group A placements in the adapted mode must sum to one")
        if abs(self.n_b * self.p_bb2 - 1) > tol:
            out.append("group B placements in the adapted mode must sum to one")
        if not 0 <= self.alpha <= 1:
            out.append("alpha outside [0, 1]")
        if min(self.q12, self.q21, self.gamma, self.lam_a2) < 0:
            out.append("rates must be non-negative")
        return out


def base_preset(**overrides) -> OpinionScenario:
    """Ten A agents holding 1 unit each, thirty B agents holding 5, unequal attentiveness."""
    base = dict(n_a=10, n_b=30, q12=0.3, q21=0.2, gamma=5 / 8, ratio_a=2.0, ratio_b=0.8)
    base.update(overrides)
    return OpinionScenario.from_ratios(**base)


def opinion_groups(sc: OpinionScenario):
    return [list(range(sc.n_a)), list(range(sc.n_a, sc.n_a + sc.n_b))]


def build_opinion_spec(sc: OpinionScenario) -> ModelSpec:
    bad = sc.violations()
    if bad:
        raise ValueError("; ".join(bad))
    na, nb = sc.n_a, sc.n_b
    a_normal = UnitMultinomialWithLeak([sc.p_aa1] * na + [sc.p_ab1] * nb)
    b_normal = UnitMultinomialWithLeak([sc.p_ba1] * na + [sc.p_bb1] * nb)
    a_adapted = Amplified(sc.alpha, UnitMultinomialWithLeak([sc.p_aa2] * na + [0.0] * nb))
    b_adapted = UnitMultinomialWithLeak([0.0] * na + [sc.p_bb2] * nb)
    kernels = [[a_normal, a_adapted]] * na + [[b_normal, b_adapted]] * nb
    arrivals = []
    if sc.lam_a2 > 0:
        arrivals = [ArrivalClass([i], [0.0, sc.lam_a2]) for i in range(na)]
    chain = BackgroundChain.two_state(sc.q12, sc.q21, initial="stationary")
    m0 = [sc.m0_a] * na + [sc.m0_b] * nb
    return make_spec(na + nb, chain, arrivals, [sc.gamma, sc.gamma], kernels, initial_wealth=m0)


def opinion_mean_matrix(sc: OpinionScenario):
    """Hand-reduced ``(A, Lambda)`` for ``(m_A1, m_A2, m_B1, m_B2)``."""
    g, q1, q2 = sc.gamma, sc.q12, sc.q21
    A = np.array([
        [-q1 + g * (sc.n_a * sc.p_aa1 - 1), q2, g * sc.n_b * sc.p_ba1, 0.0],
        [q1, -q2 + g * sc.alpha, 0.0, 0.0],
        [g * sc.n_a * sc.p_ab1, 0.0, -q1 + g * (sc.n_b * sc.p_bb1 - 1), q2],
        [0.0, 0.0, q1, -q2],
    ])
    return A, np.diag([0.0, sc.lam_a2, 0.0, 0.0])


def opinion_steady_state(sc: OpinionScenario, total_mass: float = None) -> np.ndarray:
    """Limit of ``(m_A1, m_A2, m_B1, m_B2)`` without amplification or inflow.

    Normalized so that ``I_A (m_A1 + m_A2) + I_B (m_B1 + m_B2)`` equals
    ``total_mass`` (default: the initial mass).
    """
    if sc.alpha != 0 or sc.lam_a2 != 0:
        raise ValueError("a steady state requires alpha = 0 and lam_a2 = 0")
    mass = sc.total_mass if total_mass is None else total_mass
    ratio = sc.p_ab1 / sc.p_ba1
    u = np.array([1.0, sc.q12 / sc.q21, ratio, ratio * sc.q12 / sc.q21])
    weights = np.array([sc.n_a, sc.n_a, sc.n_b, sc.n_b])
    return u * mass / (weights @ u)


def relative_normalize(means, multiplicity=None) -> np.ndarray:
    """Divide each row of ``means`` by its (multiplicity-weighted) total.

    ``multiplicity[c]`` is the number of agents column ``c`` stands for, so
    that ``(normalized * multiplicity).sum(axis=-1) == 1``.
    """
    x = np.asarray(means, dtype=float)
    w = np.ones(x.shape[-1]) if multiplicity is None else np.asarray(multiplicity, dtype=float)
    total = x @ w
    if np.any(total <= 0):
        raise ValueError("total mass must be positive")
    return x / np.expand_dims(total, -1)
