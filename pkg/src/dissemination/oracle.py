"""Exact joint law of holdings and background state on a truncated box.

The state space is ``{M : 0 <= M_i <= cap_i} x {0..d-1}`` plus one absorbing
overflow cell collecting every transition that would leave the box.  Since
overflow is absorbing, its mass bounds the truncation error of any quantity
computed from the table.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .kernels import convolution_powers
from .model import ModelSpec
from .moments import agent_pairs

__all__ = [
    "BudgetExceededError",
    "TruncatedDistribution",
    "OracleGenerator",
    "build_generator",
    "generator_apply",
    "point_mass",
    "evolve",
    "Evolution",
    "oracle_moments",
]

DEFAULT_BUDGET = 5_000_000
OVERFLOW_THRESHOLD = 1e-6


class BudgetExceededError(MemoryError):
    pass


@dataclass(frozen=True, eq=False)
class TruncatedDistribution:
    """``table[M_1, ..., M_I, k]`` plus the mass that left the box."""

    cap: tuple
    table: np.ndarray
    overflow: float
    overflow_flag: bool = False

    def total(self) -> float:
        return float(self.table.sum()) + self.overflow

    def state_marginal(self) -> np.ndarray:
        return self.table.reshape(-1, self.table.shape[-1]).sum(axis=0)


@dataclass(frozen=True, eq=False)
class OracleGenerator:
    """Sparse generator acting on ``(flattened table, overflow)`` column vectors."""

    matrix: sp.csr_matrix
    shape: tuple
    cap: tuple

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def _box_shape(spec: ModelSpec, cap) -> tuple:
    cap = tuple(int(c) for c in cap)
    if len(cap) != spec.n_agents:
        raise ValueError(f"cap needs {spec.n_agents} entries")
    if any(c < 0 for c in cap):
        raise ValueError("cap must be non-negative")
    return cap, tuple(c + 1 for c in cap) + (spec.d,)


def _check_budget(shape, budget):
    size = int(np.prod(shape, dtype=np.int64))
    if size > budget:
        raise BudgetExceededError(f"table of {size} entries exceeds budget {budget}")
    return size


class _ShockLaws:
    """Joint shock image of every configuration via cached FFTs of convolution powers.

    Zero-padding to twice the box keeps the truncated part free of wrap-around;
    round-off below ``1e-17`` is dropped so that the generator stays sparse.
    """

    def __init__(self, kernels_k, cap):
        self.box = tuple(c + 1 for c in cap)
        self.fft_shape = tuple(2 * b for b in self.box)
        self.axes = tuple(range(len(self.box)))
        self.spectra = []
        for i, dist in enumerate(kernels_k):
            powers = convolution_powers(dist, cap[i], cap)
            self.spectra.append([np.fft.rfftn(p.table, s=self.fft_shape, axes=self.axes) for p in powers])

    def law(self, M) -> np.ndarray:
        spec = self.spectra[0][M[0]]
        for i in range(1, len(M)):
            spec = spec * self.spectra[i][M[i]]
        full = np.fft.irfftn(spec, s=self.fft_shape, axes=self.axes)
        law = full[tuple(slice(0, b) for b in self.box)]
        law[law < 1e-17] = 0.0
        return law


def build_generator(spec: ModelSpec, cap: Sequence[int], budget: int = DEFAULT_BUDGET) -> OracleGenerator:
    """Assemble the truncated master-equation generator."""
    cap, shape = _box_shape(spec, cap)
    size = _check_budget(shape, budget)
    d = spec.d
    n_box = size // d
    ovf = size
    box = shape[:-1]
    configs = np.array(np.unravel_index(np.arange(n_box), box)).T  # (n_box, I)
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(np.asarray(r, dtype=np.int64).ravel())
        cols.append(np.asarray(c, dtype=np.int64).ravel())
        vals.append(np.broadcast_to(np.asarray(v, dtype=float), np.shape(r)).ravel())

    base = np.arange(n_box) * d
    Q = spec.chain.Q
    for k in range(d):
        for ell in range(d):
            if ell != k and Q[k, ell] > 0:
                add(base + ell, base + k, Q[k, ell])
                add(base + k, base + k, -Q[k, ell])
    incidence = spec.arrival_matrix().astype(np.int64)
    rates = spec.arrival_rates()
    cap_arr = np.array(cap)
    for j in range(incidence.shape[0]):
        target = configs + incidence[j]
        inside = np.all(target <= cap_arr, axis=1)
        tgt = np.ravel_multi_index(tuple(np.minimum(target, cap_arr).T), box)
        for k in range(d):
            lam = rates[j, k]
            if lam <= 0:
                continue
            add(base + k, base + k, -lam)
            add(np.where(inside, tgt * d + k, ovf), base + k, lam)
    for stream in spec.shocks:
        for k in range(d):
            gamma = stream.rates[k]
            if gamma <= 0:
                continue
            laws = _ShockLaws([row[k] for row in stream.kernels], cap)
            for s, M in enumerate(configs):
                law = laws.law(M)
                flat = law.ravel()
                nz = np.flatnonzero(flat)
                src = s * d + k
                add(nz * d + k, np.full(nz.size, src), gamma * flat[nz])
                add([src], [src], -gamma)
                lost = max(0.0, 1.0 - flat.sum())
                if lost > 0:
                    add([ovf], [src], gamma * lost)
    n = size + 1
    if not vals:
        return OracleGenerator(sp.csr_matrix((n, n)), shape, cap)
    mat = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(n, n)).tocsr()
    mat.sum_duplicates()
    return OracleGenerator(mat, shape, cap)


def _to_vector(dist: TruncatedDistribution) -> np.ndarray:
    return np.concatenate([dist.table.ravel(), [dist.overflow]])


def _from_vector(x: np.ndarray, gen: OracleGenerator, threshold: float) -> TruncatedDistribution:
    ov = float(x[-1])
    return TruncatedDistribution(gen.cap, x[:-1].reshape(gen.shape).copy(), ov, ov > threshold)


def generator_apply(spec: ModelSpec, dist: TruncatedDistribution,
                    generator: OracleGenerator = None) -> TruncatedDistribution:
    """Time derivative of ``dist``; its ``overflow`` field is the overflow inflow rate."""
    gen = generator if generator is not None else build_generator(spec, dist.cap)
    dx = gen.matrix @ _to_vector(dist)
    return TruncatedDistribution(gen.cap, dx[:-1].reshape(gen.shape), float(dx[-1]))


def point_mass(spec: ModelSpec, cap: Sequence[int]) -> TruncatedDistribution:
    """Initial law: ``M(0) = m0`` and ``X(0)`` from the chain's initial distribution."""
    cap, shape = _box_shape(spec, cap)
    m0 = spec.initial_wealth
    if np.any(m0 > np.array(cap)):
        raise ValueError("initial wealth exceeds the cap")
    table = np.zeros(shape)
    table[tuple(m0)] = spec.chain.initial_distribution
    return TruncatedDistribution(cap, table, 0.0)


@dataclass(frozen=True, eq=False)
class Evolution:
    times: np.ndarray
    distributions: list

    @property
    def final(self) -> TruncatedDistribution:
        return self.distributions[-1]

    def overflow(self) -> np.ndarray:
        return np.array([dist.overflow for dist in self.distributions])


def evolve(spec: ModelSpec, cap: Sequence[int], t_end: float, h: float,
           record_times: Sequence[float] = None, budget: int = DEFAULT_BUDGET,
           threshold: float = OVERFLOW_THRESHOLD) -> Evolution:
    """RK4 on the truncated master equation from the point-mass initial law.

    Distributions are recorded at ``record_times`` (default: ``t_end`` only),
    each snapped to the nearest grid time.  ``overflow_flag`` is set when the
    overflow mass exceeds ``threshold``.
    """
    if t_end < 0 or h <= 0:
        raise ValueError("need t_end >= 0 and h > 0")
    gen = build_generator(spec, cap, budget)
    x = _to_vector(point_mass(spec, cap))
    n = max(1, int(np.ceil(t_end / h - 1e-9))) if t_end > 0 else 0
    step = t_end / n if n else 0.0
    record = np.array([t_end] if record_times is None else record_times, dtype=float)
    marks = {}
    for r, t in enumerate(record):
        idx = int(round(t / step)) if n else 0
        marks.setdefault(min(max(idx, 0), n), []).append(r)
    out = [None] * len(record)
    L = gen.matrix
    for s in range(n + 1):
        if s in marks:
            snap = _from_vector(x, gen, threshold)
            for r in marks[s]:
                out[r] = snap
        if s == n:
            break
        k1 = L @ x
        k2 = L @ (x + 0.5 * step * k1)
        k3 = L @ (x + 0.5 * step * k2)
        k4 = L @ (x + step * k3)
        x = x + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    times = np.array([min(max(int(round(t / step)), 0), n) * step if n else 0.0 for t in record])
    return Evolution(times, out)


def oracle_moments(dist: TruncatedDistribution):
    """Stacked first moments and pair-reduced second moments of the table.

    Returns ``(m, v)`` in the layouts of :mod:`dissemination.moments`.
    """
    table = dist.table
    n = table.ndim - 1
    d = table.shape[-1]
    grids = np.meshgrid(*[np.arange(s) for s in table.shape[:-1]], indexing="ij")
    flat = table.reshape(-1, d)
    vals = np.stack([g.ravel() for g in grids], axis=1).astype(float)  # (box, I)
    m = (vals.T @ flat).ravel()  # agent-major, state-minor
    pairs = agent_pairs(n)
    a, b = vals[:, pairs[:, 0]], vals[:, pairs[:, 1]]
    prod = np.where(pairs[:, 0] == pairs[:, 1], a * (a - 1.0), a * b)
    v = (prod.T @ flat).ravel()
    return m, v
