"""Model description: background chain, arrival classes, shock streams.

Agents and background states are 0-indexed throughout the package.  A model
may carry several independent shock streams; each has its own per-state rate
and its own table of offspring laws (one per agent and state).  The plain
single-stream model is the common case and is built with :func:`make_spec`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import numerics
from .kernels import validate_kernel

__all__ = [
    "BackgroundChain",
    "ArrivalClass",
    "ShockStream",
    "ModelSpec",
    "Violation",
    "make_spec",
    "validate",
    "is_irreducible",
    "stationary_distribution",
    "transient_distribution",
]

TOL = 1e-12


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class BackgroundChain:
    """Continuous-time Markov chain on ``d`` states with generator ``Q``.

    ``initial`` is either a state index or a probability vector.
    """

    Q: np.ndarray
    initial: Union[int, np.ndarray] = 0

    def __post_init__(self):
        object.__setattr__(self, "Q", _frozen(np.atleast_2d(self.Q)))
        if not isinstance(self.initial, (int, np.integer)):
            object.__setattr__(self, "initial", _frozen(self.initial))

    @property
    def d(self) -> int:
        return self.Q.shape[0]

    @property
    def initial_distribution(self) -> np.ndarray:
        if isinstance(self.initial, (int, np.integer)):
            p = np.zeros(self.d)
            p[int(self.initial)] = 1.0
            return p
        return np.array(self.initial, dtype=float)

    @classmethod
    def two_state(cls, q12: float, q21: float, initial="stationary") -> "BackgroundChain":
        """Two-state chain leaving state 0 at rate ``q12`` and state 1 at ``q21``."""
        Q = np.array([[-q12, q12], [q21, -q21]], dtype=float)
        if isinstance(initial, str) and initial == "stationary":
            total = q12 + q21
            initial = np.array([q21 / total, q12 / total]) if total > 0 else np.array([1.0, 0.0])
        return cls(Q, initial)

    @classmethod
    def trivial(cls) -> "BackgroundChain":
        return cls(np.zeros((1, 1)), 0)


@dataclass(frozen=True, eq=False)
class ArrivalClass:
    """External Poisson stream adding one unit to every agent in ``targets``."""

    targets: tuple
    rates: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(i) for i in self.targets))
        object.__setattr__(self, "rates", _frozen(np.atleast_1d(self.rates)))


@dataclass(frozen=True, eq=False)
class ShockStream:
    """Poisson shocks at per-state ``rates``; ``kernels[i][k]`` is agent i's law in state k."""

    rates: np.ndarray
    kernels: tuple
    name: str = "shock"

    def __post_init__(self):
        object.__setattr__(self, "rates", _frozen(np.atleast_1d(self.rates)))
        object.__setattr__(self, "kernels", tuple(tuple(row) for row in self.kernels))

    def mean_matrices(self) -> np.ndarray:
        """``W[k, j, i] = E[W_{j i k}]`` (source j, destination i)."""
        n_agents = len(self.kernels)
        d = self.rates.size
        out = np.zeros((d, n_agents, n_agents))
        for j, row in enumerate(self.kernels):
            for k, dist in enumerate(row):
                out[k, j] = dist.mean()
        return out

    def second_moment_tensors(self) -> np.ndarray:
        """``W2[k, j, i, i']``: factorial second moments of source j's offspring."""
        n_agents = len(self.kernels)
        d = self.rates.size
        out = np.zeros((d, n_agents, n_agents, n_agents))
        for j, row in enumerate(self.kernels):
            for k, dist in enumerate(row):
                out[k, j] = dist.second_moments()
        return out


@dataclass(frozen=True, eq=False)
class ModelSpec:
    n_agents: int
    chain: BackgroundChain
    arrivals: tuple = ()
    shocks: tuple = ()
    initial_wealth: np.ndarray = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "arrivals", tuple(self.arrivals))
        object.__setattr__(self, "shocks", tuple(self.shocks))
        m0 = np.zeros(self.n_agents) if self.initial_wealth is None else self.initial_wealth
        object.__setattr__(self, "initial_wealth", _frozen(m0, dtype=np.int64))

    @property
    def d(self) -> int:
        return self.chain.d

    def arrival_matrix(self) -> np.ndarray:
        """``(J, I)`` 0/1 incidence of arrival classes on agents."""
        out = np.zeros((len(self.arrivals), self.n_agents))
        for j, cls in enumerate(self.arrivals):
            out[j, list(cls.targets)] = 1.0
        return out

    def arrival_rates(self) -> np.ndarray:
        """``(J, d)`` rates of the arrival classes."""
        if not self.arrivals:
            return np.zeros((0, self.d))
        return np.vstack([cls.rates for cls in self.arrivals])

    def agent_arrival_rates(self) -> np.ndarray:
        """``lam_bar[i, k]``: total rate of classes that hit agent i in state k."""
        return self.arrival_matrix().T @ self.arrival_rates()

    def total_shock_rates(self) -> np.ndarray:
        if not self.shocks:
            return np.zeros(self.d)
        return np.sum([s.rates for s in self.shocks], axis=0)


def make_spec(
    n_agents: int,
    chain: BackgroundChain,
    arrivals: Sequence[ArrivalClass],
    shock_rates,
    kernels,
    initial_wealth=None,
) -> ModelSpec:
    """Single-shock-stream model; ``kernels[i][k]`` is the law for agent i in state k."""
    stream = ShockStream(np.atleast_1d(np.asarray(shock_rates, dtype=float)), kernels)
    return ModelSpec(n_agents, chain, tuple(arrivals), (stream,), initial_wealth)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


def is_irreducible(Q: np.ndarray) -> bool:
    """Strong connectivity of the graph of positive off-diagonal rates."""
    d = Q.shape[0]
    adj = (Q > 0) & ~np.eye(d, dtype=bool)

    def reach(adjacency):
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in np.flatnonzero(adjacency[u]):
                if v not in seen:
                    seen.add(int(v))
                    stack.append(int(v))
        return len(seen) == d

    return reach(adj) and reach(adj.T)


def _validate_chain(chain: BackgroundChain) -> list[Violation]:
    out = []
    Q = chain.Q
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] < 1:
        return [Violation("chain.Q", f"must be a non-empty square matrix, got shape {Q.shape}")]
    if not np.all(np.isfinite(Q)):
        out.append(Violation("chain.Q", "non-finite entries"))
        return out
    d = Q.shape[0]
    off = Q[~np.eye(d, dtype=bool)]
    if np.any(off < 0):
        out.append(Violation("chain.Q", "negative off-diagonal rate"))
    rows = np.abs(Q.sum(axis=1))
    for k in np.flatnonzero(rows > TOL):
        out.append(Violation(f"chain.Q[{k}]", f"row sums to {Q[k].sum():.3e}, not 0"))
    if not is_irreducible(Q):
        out.append(Violation("chain.Q", "chain not irreducible"))
    if isinstance(chain.initial, (int, np.integer)):
        if not 0 <= int(chain.initial) < d:
            out.append(Violation("chain.initial", f"state {chain.initial} out of range"))
    else:
        p = np.asarray(chain.initial)
        if p.shape != (d,):
            out.append(Violation("chain.initial", f"expected length {d}, got shape {p.shape}"))
        elif np.any(p < 0) or abs(p.sum() - 1.0) > TOL:
            out.append(Violation("chain.initial", "not a probability vector"))
    return out


def validate(spec: ModelSpec) -> list[Violation]:
    """Every violated model invariant, each with a path-like locator."""
    out = _validate_chain(spec.chain)
    n, d = spec.n_agents, spec.d
    if n < 1:
        out.append(Violation("n_agents", "must be positive"))
    for j, cls in enumerate(spec.arrivals):
        loc = f"arrivals[{j}]"
        if not cls.targets:
            out.append(Violation(f"{loc}.targets", "empty target set"))
        if any(not 0 <= i < n for i in cls.targets):
            out.append(Violation(f"{loc}.targets", "agent index out of range"))
        if len(set(cls.targets)) != len(cls.targets):
            out.append(Violation(f"{loc}.targets", "duplicate agent"))
        if cls.rates.shape != (d,):
            out.append(Violation(f"{loc}.rates", f"expected {d} rates, got {cls.rates.size}"))
        elif np.any(cls.rates < 0) or not np.all(np.isfinite(cls.rates)):
            out.append(Violation(f"{loc}.rates", "rates must be finite and non-negative"))
    for s, stream in enumerate(spec.shocks):
        loc = f"shocks[{s}]"
        if stream.rates.shape != (d,):
            out.append(Violation(f"{loc}.rates", f"expected {d} rates, got {stream.rates.size}"))
        elif np.any(stream.rates < 0) or not np.all(np.isfinite(stream.rates)):
            out.append(Violation(f"{loc}.rates", "rates must be finite and non-negative"))
        if len(stream.kernels) != n:
            out.append(Violation(f"{loc}.kernels", f"expected {n} agents, got {len(stream.kernels)}"))
            continue
        for i, row in enumerate(stream.kernels):
            if len(row) != d:
                out.append(Violation(f"{loc}.kernels[{i}]", f"expected {d} states, got {len(row)}"))
                continue
            for k, dist in enumerate(row):
                kl = f"{loc}.kernels[{i}][{k}]"
                if dist.dim != n:
                    out.append(Violation(kl, f"kernel dimension {dist.dim} != {n} agents"))
                for msg in validate_kernel(dist):
                    out.append(Violation(kl, msg))
    m0 = spec.initial_wealth
    if m0.shape != (n,):
        out.append(Violation("initial_wealth", f"expected {n} entries, got shape {m0.shape}"))
    elif np.any(m0 < 0):
        out.append(Violation("initial_wealth", "negative wealth"))
    return out


# ---------------------------------------------------------------------------
# background chain laws
# ---------------------------------------------------------------------------

def stationary_distribution(chain: BackgroundChain) -> np.ndarray:
    """Unique ``pi`` with ``pi Q = 0`` and ``sum(pi) = 1``.

    Solved as a square system: the last balance equation is replaced by the
    normalization.
    """
    Q = chain.Q
    d = Q.shape[0]
    if d == 1:
        return np.ones(1)
    a = Q.T.copy()
    a[-1, :] = 1.0
    b = np.zeros(d)
    b[-1] = 1.0
    pi = numerics.solve_linear(a, b)
    return pi


def transient_distribution(chain: BackgroundChain, t: float, initial=None) -> np.ndarray:
    """``pi(t) = pi(0) e^{Qt}``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    p0 = chain.initial_distribution if initial is None else np.asarray(initial, dtype=float)
    if t == 0:
        return p0.copy()
    return p0 @ numerics.expm(chain.Q * t)
