"""First- and second-moment ODE systems of the dissemination model.

Layouts
-------
First moments ``m[i*d + k] = E[M_i 1{X = k}]`` (agent-major, state-minor).

Reduced second moments are stored for unordered agent pairs ``i <= i'``,
enumerated lexicographically, with the background state fastest:
``v[p*d + k]`` where ``p`` is the position of ``(i, i')`` in :func:`agent_pairs`.
The diagonal pairs hold the factorial moment ``E[M_i (M_i - 1) 1{X = k}]``.

All systems are integrated as one autonomous linear ODE in the augmented
state ``y = (pi, m[, v])``, where ``pi`` is the law of the background chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import numerics
from .model import ModelSpec, stationary_distribution

__all__ = [
    "FirstMomentSystem",
    "SecondMomentSystem",
    "MomentPath",
    "Stability",
    "StationaryMoments",
    "agent_pairs",
    "build_first_moment_system",
    "build_second_moment_system",
    "transient_means",
    "transient_means_quadrature",
    "transient_second_moments",
    "stationary_means",
    "stationary_second_moments",
    "stability",
    "central_moments",
    "ExchangeableReduction",
    "reduce_exchangeable",
]

STABILITY_CUSHION = 1e-10


def agent_pairs(n_agents: int) -> np.ndarray:
    """``(P, 2)`` array of pairs ``(i, i')`` with ``i <= i'`` in lexicographic order."""
    i, j = np.triu_indices(n_agents)
    return np.column_stack([i, j])


def _pair_lookup(n_agents: int) -> np.ndarray:
    pairs = agent_pairs(n_agents)
    lookup = np.empty((n_agents, n_agents), dtype=np.int64)
    lookup[pairs[:, 0], pairs[:, 1]] = np.arange(len(pairs))
    lookup[pairs[:, 1], pairs[:, 0]] = np.arange(len(pairs))
    return lookup


@dataclass(frozen=True, eq=False)
class FirstMomentSystem:
    """``m' = A m + Lambda pi_stacked``."""

    A: np.ndarray
    Lambda: np.ndarray
    Qt: np.ndarray
    n_agents: int
    d: int

    def index(self, agent: int, state: int) -> int:
        return agent * self.d + state

    def forcing_matrix(self) -> np.ndarray:
        """``Lambda @ L`` where ``L`` stacks ``pi`` once per agent."""
        stack = np.kron(np.ones((self.n_agents, 1)), np.eye(self.d))
        return self.Lambda @ stack

    def generator(self) -> np.ndarray:
        d, n = self.d, self.A.shape[0]
        out = np.zeros((d + n, d + n))
        out[:d, :d] = self.Qt
        out[d:, :d] = self.forcing_matrix()
        out[d:, d:] = self.A
        return out


@dataclass(frozen=True, eq=False)
class SecondMomentSystem:
    """``v' = B v + C m + D pi`` on the pair-reduced layout."""

    first: FirstMomentSystem
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    pairs: np.ndarray

    @property
    def n_agents(self) -> int:
        return self.first.n_agents

    @property
    def d(self) -> int:
        return self.first.d

    def index(self, i: int, i2: int, state: int) -> int:
        lookup = _pair_lookup(self.n_agents)
        return int(lookup[i, i2]) * self.d + state

    def generator(self) -> np.ndarray:
        g1 = self.first.generator()
        n1 = g1.shape[0]
        d = self.d
        nv = self.B.shape[0]
        out = np.zeros((n1 + nv, n1 + nv))
        out[:n1, :n1] = g1
        out[n1:, :d] = self.D
        out[n1:, d:n1] = self.C
        out[n1:, n1:] = self.B
        return out


def build_first_moment_system(spec: ModelSpec) -> FirstMomentSystem:
    n, d = spec.n_agents, spec.d
    Qt = spec.chain.Q.T.copy()
    A = np.kron(np.eye(n), Qt)
    for stream in spec.shocks:
        W = stream.mean_matrices()
        for k in range(d):
            gamma = stream.rates[k]
            if gamma == 0:
                continue
            idx = np.arange(n) * d + k
            A[np.ix_(idx, idx)] += gamma * (W[k].T - np.eye(n))
    Lambda = np.diag(spec.agent_arrival_rates().ravel())
    return FirstMomentSystem(A, Lambda, Qt, n, d)


def build_second_moment_system(spec: ModelSpec) -> SecondMomentSystem:
    first = build_first_moment_system(spec)
    n, d = spec.n_agents, spec.d
    pairs = agent_pairs(n)
    P = len(pairs)
    pi_, pj_ = pairs[:, 0], pairs[:, 1]
    diag_pair = pi_ == pj_
    B = np.kron(np.eye(P), first.Qt)
    C = np.zeros((P * d, n * d))
    D = np.zeros((P * d, d))
    for stream in spec.shocks:
        W = stream.mean_matrices()
        W2 = stream.second_moment_tensors()
        for k in range(d):
            gamma = stream.rates[k]
            if gamma == 0:
                continue
            Wt = W[k].T  # Wt[i, j] = mean units source j sends to i
            # F[p, j, j'] = w_{j i k} w_{j' i' k} for pair p = (i, i')
            F = Wt[pi_][:, :, None] * Wt[pj_][:, None, :]
            G = F + F.transpose(0, 2, 1)
            Bk = G[:, pi_, pj_]
            Bk[:, diag_pair] = F[:, pi_[diag_pair], pi_[diag_pair]]
            rows = np.arange(P) * d + k
            B[np.ix_(rows, rows)] += gamma * (Bk - np.eye(P))
            cols = np.arange(n) * d + k
            # W2[k, j, i, i'] -> C[(i, i'), j]
            C[np.ix_(rows, cols)] += gamma * W2[k][:, pi_, pj_].T
    lam_bar = spec.agent_arrival_rates()
    S = spec.arrival_matrix()
    R = spec.arrival_rates()
    for k in range(d):
        rows = np.arange(P) * d + k
        C[rows, pj_ * d + k] += lam_bar[pi_, k]
        C[rows, pi_ * d + k] += lam_bar[pj_, k]
        joint = S.T @ (R[:, k][:, None] * S)
        D[rows, k] = np.where(diag_pair, 0.0, joint[pi_, pj_])
    return SecondMomentSystem(first, B, C, D, pairs)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MomentPath:
    """Moment trajectories on a time grid."""

    times: np.ndarray
    pi: np.ndarray
    m: np.ndarray
    v: Optional[np.ndarray]
    n_agents: int
    d: int

    def agent_means(self) -> np.ndarray:
        """``(T, I)`` means aggregated over the background state."""
        return self.m.reshape(len(self.times), self.n_agents, self.d).sum(axis=2)

    def covariances(self) -> np.ndarray:
        """``(T, I, I)`` covariance matrices (variances on the diagonal)."""
        if self.v is None:
            raise ValueError("second moments were not computed")
        return np.stack([central_moments(m, v, self.n_agents, self.d) for m, v in zip(self.m, self.v)])

    def variances(self) -> np.ndarray:
        cov = self.covariances()
        return np.diagonal(cov, axis1=1, axis2=2).copy()


def _initial_state(spec: ModelSpec, second: bool) -> np.ndarray:
    pi0 = spec.chain.initial_distribution
    m0 = spec.initial_wealth.astype(float)
    parts = [pi0, np.kron(m0, pi0)]
    if second:
        pairs = agent_pairs(spec.n_agents)
        a, b = m0[pairs[:, 0]], m0[pairs[:, 1]]
        prod = np.where(pairs[:, 0] == pairs[:, 1], a * (a - 1.0), a * b)
        parts.append(np.kron(prod, pi0))
    return np.concatenate(parts)


def transient_means(spec: ModelSpec, t_end: float, h: float, stride: int = 1) -> MomentPath:
    """Integrate ``m' = A m + Lambda pi(t)`` jointly with ``pi' = Q^T pi`` by RK4.

    The initial condition is ``m_ik(0) = m0_i * P(X(0) = k)``.
    """
    system = build_first_moment_system(spec)
    d = spec.d
    times, y = numerics.integrate_linear_ode(
        system.generator(), None, _initial_state(spec, False), t_end, h, stride
    )
    return MomentPath(times, y[:, :d], y[:, d:], None, spec.n_agents, d)


def transient_second_moments(spec: ModelSpec, t_end: float, h: float, stride: int = 1) -> MomentPath:
    """Integrate pi, first and reduced second moments as one linear system."""
    system = build_second_moment_system(spec)
    d, n1 = spec.d, spec.d + spec.n_agents * spec.d
    times, y = numerics.integrate_linear_ode(
        system.generator(), None, _initial_state(spec, True), t_end, h, stride
    )
    return MomentPath(times, y[:, :d], y[:, d:n1], y[:, n1:], spec.n_agents, d)


def transient_means_quadrature(spec: ModelSpec, t: float, nodes: int = 40) -> np.ndarray:
    """Stacked ``m(t)`` from the matrix-exponential representation.

    ``m(t) = e^{At} m(0) + int_0^t e^{A(t-s)} Lambda pi_stacked(s) ds`` with the
    integral evaluated by composite Gauss-Legendre quadrature (``nodes`` points
    per panel; enough panels that each spans at most unit ``||A||_inf * s``).
    """
    system = build_first_moment_system(spec)
    y0 = _initial_state(spec, False)
    d = spec.d
    pi0, m0 = y0[:d], y0[d:]
    if t == 0:
        return m0.copy()
    A = system.A
    F = system.forcing_matrix()
    Qt = system.Qt
    out = numerics.expm(A * t) @ m0
    scale = max(np.abs(A).sum(axis=1).max(), np.abs(Qt).sum(axis=1).max(), 1e-300)
    panels = max(1, int(np.ceil(scale * t / 4.0)))
    x, w = numerics.gauss_legendre(nodes)
    edges = np.linspace(0.0, t, panels + 1)
    for a, b in zip(edges[:-1], edges[1:]):
        half = 0.5 * (b - a)
        for xi, wi in zip(x, w):
            s = a + half * (xi + 1.0)
            pis = numerics.expm(Qt * s) @ pi0
            out += half * wi * (numerics.expm(A * (t - s)) @ (F @ pis))
    return out


# ---------------------------------------------------------------------------
# stationarity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Stability:
    omega: float
    ergodic_sufficient: bool


@dataclass(frozen=True, eq=False)
class StationaryMoments:
    """Steady-state moments, or ``means is None`` when the sufficient condition fails."""

    omega: float
    ergodic_sufficient: bool
    pi: np.ndarray
    means: Optional[np.ndarray]
    seconds: Optional[np.ndarray] = None
    n_agents: int = 0
    d: int = 0

    def agent_means(self) -> np.ndarray:
        return self.means.reshape(self.n_agents, self.d).sum(axis=1)

    def covariance(self) -> np.ndarray:
        return central_moments(self.means, self.seconds, self.n_agents, self.d)


def stability(spec: ModelSpec) -> Stability:
    """Spectral abscissa of ``A`` and whether it certifies ergodicity (``omega < 0``)."""
    omega = numerics.spectral_abscissa(build_first_moment_system(spec).A)
    return Stability(omega, omega < -STABILITY_CUSHION)


def stationary_means(spec: ModelSpec) -> StationaryMoments:
    """``m = -A^{-1} Lambda pi`` when ``omega < 0``; otherwise only the verdict."""
    system = build_first_moment_system(spec)
    st = stability(spec)
    pi = stationary_distribution(spec.chain)
    if not st.ergodic_sufficient:
        return StationaryMoments(st.omega, False, pi, None, None, spec.n_agents, spec.d)
    rhs = -(system.forcing_matrix() @ pi)
    means = numerics.solve_linear(system.A, rhs)
    return StationaryMoments(st.omega, True, pi, means, None, spec.n_agents, spec.d)


def _stationary_augmented(gen: np.ndarray, d: int, pi: np.ndarray) -> np.ndarray:
    K = gen[d:, d:]
    rhs = -(gen[d:, :d] @ pi)
    return numerics.solve_linear(K, rhs)


def stationary_second_moments(spec: ModelSpec) -> StationaryMoments:
    """Stationary first and reduced second moments (requires ``omega < 0``)."""
    st = stability(spec)
    pi = stationary_distribution(spec.chain)
    if not st.ergodic_sufficient:
        return StationaryMoments(st.omega, False, pi, None, None, spec.n_agents, spec.d)
    system = build_second_moment_system(spec)
    x = _stationary_augmented(system.generator(), spec.d, pi)
    nm = spec.n_agents * spec.d
    return StationaryMoments(st.omega, True, pi, x[:nm], x[nm:], spec.n_agents, spec.d)


def central_moments(m, v, n_agents: int, d: int) -> np.ndarray:
    """Covariance matrix of ``M`` (aggregated over states) from stacked m and v.

    ``Var_i = sum_k v_iik + m_i - m_i^2`` and ``Cov_ii' = sum_k v_ii'k - m_i m_i'``.
    """
    mi = np.asarray(m).reshape(n_agents, d).sum(axis=1)
    pairs = agent_pairs(n_agents)
    vp = np.asarray(v).reshape(len(pairs), d).sum(axis=1)
    second = np.zeros((n_agents, n_agents))
    second[pairs[:, 0], pairs[:, 1]] = vp
    second[pairs[:, 1], pairs[:, 0]] = vp
    cov = second - np.outer(mi, mi)
    cov[np.diag_indices(n_agents)] += mi
    return cov


# ---------------------------------------------------------------------------
# exchangeable reduction
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExchangeableReduction:
    """Moment system restricted to data symmetric within agent groups.

    ``first_classes[c] = (group, state)``; ``second_classes[c] = (g, h, same, state)``
    where ``same`` marks the factorial moment of a single agent and
    ``g <= h`` otherwise (``g == h`` meaning two distinct agents of one group).
    """

    generator: np.ndarray
    initial: np.ndarray
    d: int
    groups: tuple
    first_classes: list
    second_classes: list

    @property
    def n_first(self) -> int:
        return len(self.first_classes)

    def transient(self, t_end: float, h: float, stride: int = 1):
        times, y = numerics.integrate_linear_ode(self.generator, None, self.initial, t_end, h, stride)
        return times, y[:, self.d:self.d + self.n_first], y[:, self.d + self.n_first:]

    def stationary(self, pi: np.ndarray):
        x = _stationary_augmented(self.generator, self.d, pi)
        return x[:self.n_first], x[self.n_first:]

    def first_block(self) -> np.ndarray:
        d, n = self.d, self.n_first
        return self.generator[d:d + n, d:d + n]

    def second_blocks(self):
        """``(B, C, D)`` of the reduced second-moment equations."""
        d, n = self.d, self.n_first
        rows = slice(d + n, None)
        return self.generator[rows, d + n:], self.generator[rows, d:d + n], self.generator[rows, :d]


def reduce_exchangeable(spec: ModelSpec, groups: Sequence[Sequence[int]], second: bool = True,
                        tol: float = 1e-9) -> ExchangeableReduction:
    """Lump the moment equations over groups of mutually exchangeable agents.

    Raises ``ValueError`` if the full system does not leave the symmetric
    subspace invariant (the grouping is not a genuine symmetry of the model)
    or the initial data are not symmetric.
    """
    n, d = spec.n_agents, spec.d
    groups = tuple(tuple(int(i) for i in g) for g in groups)
    member = np.full(n, -1)
    for g, agents in enumerate(groups):
        member[list(agents)] = g
    if np.any(member < 0) or sum(len(g) for g in groups) != n:
        raise ValueError("groups must partition the agents")
    first_classes = [(g, k) for g in range(len(groups)) for k in range(d)]
    fc_index = {c: i for i, c in enumerate(first_classes)}
    n1 = n * d
    U1 = np.zeros((n1, len(first_classes)))
    for i in range(n):
        for k in range(d):
            U1[i * d + k, fc_index[(member[i], k)]] = 1.0
    rep1 = [groups[g][0] * d + k for g, k in first_classes]
    blocks = [np.eye(d), U1]
    reps = list(range(d)) + [d + r for r in rep1]
    second_classes = []
    if second:
        system = build_second_moment_system(spec)
        full = system.generator()
        pairs = system.pairs
        keys = []
        for a, b in pairs:
            ga, gb = member[a], member[b]
            if a == b:
                keys.append((ga, ga, True))
            else:
                keys.append((min(ga, gb), max(ga, gb), False))
        uniq = sorted(set(keys))
        second_classes = [(*key, k) for key in uniq for k in range(d)]
        sc_index = {c: i for i, c in enumerate(second_classes)}
        U2 = np.zeros((len(pairs) * d, len(second_classes)))
        rep2 = {}
        for p, key in enumerate(keys):
            for k in range(d):
                U2[p * d + k, sc_index[(*key, k)]] = 1.0
                rep2.setdefault((*key, k), p * d + k)
        blocks.append(U2)
        reps += [d + n1 + rep2[c] for c in second_classes]
    else:
        full = build_first_moment_system(spec).generator()
    rows = sum(b.shape[0] for b in blocks)
    colsz = sum(b.shape[1] for b in blocks)
    U = np.zeros((rows, colsz))
    r0 = c0 = 0
    for b in blocks:
        U[r0:r0 + b.shape[0], c0:c0 + b.shape[1]] = b
        r0 += b.shape[0]
        c0 += b.shape[1]
    MU = full @ U
    reduced = MU[reps]
    scale = max(1.0, np.abs(full).max())
    if np.abs(MU - U @ reduced).max() > tol * scale:
        raise ValueError("agent groups are not exchangeable under the model dynamics")
    y0 = _initial_state(spec, second)
    y0r = y0[reps]
    if np.abs(U @ y0r - y0).max() > tol * max(1.0, np.abs(y0).max()):
        raise ValueError("initial wealth is not symmetric within groups")
    return ExchangeableReduction(reduced, y0r, d, groups, first_classes, second_classes)
