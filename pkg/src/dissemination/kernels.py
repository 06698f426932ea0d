"""Offspring (redistribution) laws for a single wealth unit.

A unit owned by some agent is, at a shock, replaced by a random vector of
non-negative integers ``W`` -- one entry per destination agent.  Entries of
``W`` may be dependent; every law here has finite support, which the oracle
and the simulator exploit.

Four variants are provided:

``Deterministic``
    ``W = v`` almost surely.
``UnitMultinomialWithLeak``
    one unit lands on agent ``j`` with probability ``p[j]`` and disappears
    with probability ``1 - sum(p)``.
``Amplified``
    with probability ``alpha`` the unit first splits in two, each copy then
    placed independently by an inner ``UnitMultinomialWithLeak``.
``FiniteTable``
    an arbitrary finite joint law.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "Deterministic",
    "UnitMultinomialWithLeak",
    "Amplified",
    "FiniteTable",
    "OffspringDistribution",
    "CappedLaw",
    "sample",
    "sample_sum",
    "mean_vector",
    "second_moment_table",
    "pgf_eval",
    "offspring_convolution",
    "mixture",
    "kernel_to_dict",
    "kernel_from_dict",
]

_TOL = 1e-12


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Deterministic:
    vector: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vector", _frozen(self.vector, dtype=np.int64))

    @property
    def dim(self) -> int:
        return self.vector.size

    def support(self):
        return self.vector[None, :].copy(), np.ones(1)

    def mean(self) -> np.ndarray:
        return self.vector.astype(float)

    def second_moments(self) -> np.ndarray:
        v = self.vector.astype(float)
        table = np.outer(v, v)
        np.fill_diagonal(table, v * (v - 1.0))
        return table

    def pgf(self, z) -> complex:
        return np.prod(np.asarray(z) ** self.vector)


@dataclass(frozen=True, eq=False)
class UnitMultinomialWithLeak:
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _frozen(self.probs))

    @property
    def dim(self) -> int:
        return self.probs.size

    @property
    def leak(self) -> float:
        return max(0.0, 1.0 - float(self.probs.sum()))

    def support(self):
        n = self.dim
        vectors = np.vstack([np.eye(n, dtype=np.int64), np.zeros((1, n), dtype=np.int64)])
        return vectors, np.append(self.probs, self.leak)

    def mean(self) -> np.ndarray:
        return self.probs.astype(float).copy()

    def second_moments(self) -> np.ndarray:
        # at most one unit in total, so every product vanishes
        return np.zeros((self.dim, self.dim))

    def pgf(self, z) -> complex:
        return self.leak + np.dot(self.probs, np.asarray(z))


@dataclass(frozen=True, eq=False)
class Amplified:
    alpha: float
    inner: UnitMultinomialWithLeak

    @property
    def dim(self) -> int:
        return self.inner.dim

    def support(self):
        v1, p1 = self.inner.support()
        n = len(p1)
        pairs = (v1[:, None, :] + v1[None, :, :]).reshape(n * n, -1)
        vectors = np.vstack([v1, pairs])
        probs = np.concatenate([(1.0 - self.alpha) * p1, self.alpha * np.outer(p1, p1).ravel()])
        return _merge_support(vectors, probs)

    def mean(self) -> np.ndarray:
        return (1.0 + self.alpha) * self.inner.probs

    def second_moments(self) -> np.ndarray:
        p = self.inner.probs
        # two independent placements: E[W_j W_j'] = 2 p_j p_j' and
        # E[W_j (W_j - 1)] = 2 p_j^2, both only when the split happens
        return 2.0 * self.alpha * np.outer(p, p)

    def pgf(self, z) -> complex:
        g = self.inner.pgf(z)
        return (1.0 - self.alpha) * g + self.alpha * g * g


@dataclass(frozen=True, eq=False)
class FiniteTable:
    vectors: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.int64)
        if vectors.ndim != 2:
            raise ValueError("FiniteTable vectors must be a 2-D array (points x agents)")
        object.__setattr__(self, "vectors", _frozen(vectors, dtype=np.int64))
        object.__setattr__(self, "probs", _frozen(self.probs))

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def support(self):
        return self.vectors.copy(), self.probs.copy()

    def mean(self) -> np.ndarray:
        return self.probs @ self.vectors

    def second_moments(self) -> np.ndarray:
        v = self.vectors.astype(float)
        table = np.einsum("n,ni,nj->ij", self.probs, v, v)
        table[np.diag_indices_from(table)] -= self.mean()
        return table

    def pgf(self, z) -> complex:
        z = np.asarray(z)
        return np.sum(self.probs * np.prod(z[None, :] ** self.vectors, axis=1))


OffspringDistribution = Union[Deterministic, UnitMultinomialWithLeak, Amplified, FiniteTable]


def _merge_support(vectors: np.ndarray, probs: np.ndarray):
    keys, inverse = np.unique(vectors, axis=0, return_inverse=True)
    merged = np.zeros(len(keys))
    np.add.at(merged, inverse.ravel(), probs)
    keep = merged > 0
    return keys[keep], merged[keep]


def validate_kernel(dist: OffspringDistribution) -> list[str]:
    """Return human-readable problems with ``dist`` (empty when valid)."""
    problems = []
    if isinstance(dist, Deterministic):
        if np.any(dist.vector < 0):
            problems.append("deterministic vector has negative entries")
    elif isinstance(dist, UnitMultinomialWithLeak):
        p = dist.probs
        if np.any(p < 0) or np.any(p > 1):
            problems.append("placement probabilities outside [0, 1]")
        if p.sum() > 1 + _TOL:
            problems.append(f"placement probabilities sum to {p.sum():.15g} > 1")
    elif isinstance(dist, Amplified):
        if not 0.0 <= dist.alpha <= 1.0:
            problems.append(f"amplification probability {dist.alpha} outside [0, 1]")
        problems.extend(validate_kernel(dist.inner))
    elif isinstance(dist, FiniteTable):
        if dist.vectors.shape[0] != dist.probs.size:
            problems.append("support size does not match number of probabilities")
        if np.any(dist.vectors < 0):
            problems.append("support vectors have negative entries")
        if np.any(dist.probs < 0) or np.any(dist.probs > 1):
            problems.append("probabilities outside [0, 1]")
        if abs(dist.probs.sum() - 1.0) > _TOL:
            problems.append(f"probabilities sum to {dist.probs.sum():.15g}, not 1")
    else:
        problems.append(f"unknown offspring distribution type {type(dist).__name__}")
    return problems


# ---------------------------------------------------------------------------
# functional interface
# ---------------------------------------------------------------------------

def mean_vector(dist: OffspringDistribution) -> np.ndarray:
    """Exact mean ``E[W]`` of the offspring vector."""
    return dist.mean()


def second_moment_table(dist: OffspringDistribution) -> np.ndarray:
    """Factorial second moments of ``W``.

    Entry ``(j, j')`` is ``E[W_j W_j']`` off the diagonal and
    ``E[W_j (W_j - 1)]`` on it.
    """
    return dist.second_moments()


def pgf_eval(dist: OffspringDistribution, z) -> complex:
    """Probability generating function ``E[prod_j z_j ** W_j]``."""
    z = np.asarray(z)
    if z.shape != (dist.dim,):
        raise ValueError(f"expected a vector of length {dist.dim}, got shape {z.shape}")
    if np.any(np.abs(z) > 1.0 + 1e-15):
        raise ValueError("pgf argument must satisfy max |z_i| <= 1")
    value = dist.pgf(z)
    return value.real if np.isrealobj(z) else value


def sample(dist: OffspringDistribution, rng: np.random.Generator) -> np.ndarray:
    """One draw of the offspring vector."""
    return sample_sum(dist, 1, rng)


def sample_sum(dist: OffspringDistribution, count: int, rng: np.random.Generator) -> np.ndarray:
    """Sum of ``count`` independent draws of ``dist``."""
    n = dist.dim
    if count == 0:
        return np.zeros(n, dtype=np.int64)
    if isinstance(dist, Deterministic):
        return count * dist.vector
    if isinstance(dist, UnitMultinomialWithLeak):
        return _multinomial_with_leak(count, dist.probs, rng)
    if isinstance(dist, Amplified):
        doubled = rng.binomial(count, dist.alpha)
        return _multinomial_with_leak(count + doubled, dist.inner.probs, rng)
    vectors, probs = dist.support()
    counts = rng.multinomial(count, probs / probs.sum())
    return counts @ vectors


def _multinomial_with_leak(count: int, probs: np.ndarray, rng) -> np.ndarray:
    if count == 1:
        u = rng.random()
        j = int(np.searchsorted(np.cumsum(probs), u, side="right"))
        out = np.zeros(probs.size, dtype=np.int64)
        if j < probs.size:
            out[j] = 1
        return out
    # sequential conditional binomials
    out = np.zeros(probs.size, dtype=np.int64)
    remaining = count
    rest = 1.0
    for j, p in enumerate(probs):
        if remaining == 0 or rest <= 0:
            break
        x = rng.binomial(remaining, min(1.0, p / rest))
        out[j] = x
        remaining -= x
        rest -= p
    return out


def mixture(components, weights) -> FiniteTable:
    """Finite mixture of offspring laws as a ``FiniteTable``."""
    vecs, probs = [], []
    for dist, w in zip(components, weights):
        v, p = dist.support()
        vecs.append(v)
        probs.append(w * p)
    vectors, merged = _merge_support(np.vstack(vecs), np.concatenate(probs))
    return FiniteTable(vectors, merged)


# ---------------------------------------------------------------------------
# convolution powers
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CappedLaw:
    """Law on the box ``{0..cap_1} x ... x {0..cap_I}`` plus an overflow cell.

    ``overflow`` is the total mass of outcomes exceeding the cap in at least
    one coordinate.
    """

    table: np.ndarray
    overflow: float = 0.0
    cap: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "cap", tuple(s - 1 for s in self.table.shape))

    def mean(self) -> np.ndarray:
        out = np.empty(self.table.ndim)
        for axis in range(self.table.ndim):
            marg = self.table.sum(axis=tuple(a for a in range(self.table.ndim) if a != axis))
            out[axis] = marg @ np.arange(marg.size)
        return out


def _shift_add(out: np.ndarray, src: np.ndarray, shift, weight: float) -> None:
    # out[x + shift] += weight * src[x], clipped to the box
    dst, srcs = [], []
    for s, size in zip(shift, out.shape):
        if s >= size:
            return
        dst.append(slice(s, size))
        srcs.append(slice(0, size - s))
    out[tuple(dst)] += weight * src[tuple(srcs)]


def convolve_support(law: np.ndarray, vectors: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Add one i.i.d. copy (given by its support) to a law on a box, truncating."""
    out = np.zeros_like(law)
    for v, p in zip(vectors, probs):
        if p > 0:
            _shift_add(out, law, v, p)
    return out


def convolution_powers(dist: OffspringDistribution, max_count: int, cap) -> list[CappedLaw]:
    """``[law of sum of m copies of dist for m in 0..max_count]``, each capped."""
    cap = tuple(int(c) for c in cap)
    if len(cap) != dist.dim:
        raise ValueError(f"cap has {len(cap)} entries, kernel dimension is {dist.dim}")
    vectors, probs = dist.support()
    law = np.zeros(tuple(c + 1 for c in cap))
    law[(0,) * len(cap)] = 1.0
    out = [CappedLaw(law.copy(), 0.0)]
    for _ in range(max_count):
        law = convolve_support(law, vectors, probs)
        out.append(CappedLaw(law.copy(), max(0.0, 1.0 - law.sum())))
    return out


def offspring_convolution(dist: OffspringDistribution, count: int, cap) -> CappedLaw:
    """Exact law of the sum of ``count`` i.i.d. copies of ``dist``.

    Computed by iterated convolution over the support; outcomes exceeding
    ``cap`` in any coordinate are accumulated in ``overflow``.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    return convolution_powers(dist, count, cap)[count]


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def kernel_to_dict(dist: OffspringDistribution) -> dict:
    if isinstance(dist, Deterministic):
        return {"type": "deterministic", "vector": dist.vector.tolist()}
    if isinstance(dist, UnitMultinomialWithLeak):
        return {"type": "multinomial_leak", "probs": dist.probs.tolist()}
    if isinstance(dist, Amplified):
        return {"type": "amplified", "alpha": dist.alpha, "inner": kernel_to_dict(dist.inner)}
    if isinstance(dist, FiniteTable):
        return {
            "type": "table",
            "support": [[v.tolist(), float(p)] for v, p in zip(dist.vectors, dist.probs)],
        }
    raise TypeError(f"cannot serialize {type(dist).__name__}")


def kernel_from_dict(data: dict) -> OffspringDistribution:
    kind = data["type"]
    if kind == "deterministic":
        return Deterministic(data["vector"])
    if kind == "multinomial_leak":
        return UnitMultinomialWithLeak(data["probs"])
    if kind == "amplified":
        inner = kernel_from_dict(data["inner"])
        if not isinstance(inner, UnitMultinomialWithLeak):
            raise ValueError("amplified kernel needs a multinomial_leak inner kernel")
        return Amplified(float(data["alpha"]), inner)
    if kind == "table":
        vectors = [row[0] for row in data["support"]]
        probs = [row[1] for row in data["support"]]
        return FiniteTable(vectors, probs)
    raise ValueError(f"unknown kernel type {kind!r}")
