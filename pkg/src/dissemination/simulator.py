"""Monte Carlo simulation of agent holdings and the background chain.

Background transitions and shocks race as competing exponential clocks, redrawn
after every such event.  Between two of these events the background state is
fixed, so the arrival classes are independent Poisson processes on the gap;
their counts are drawn per gap (split at the sampling grid) and, when events
are recorded, their times are placed as sorted uniforms.  This is the same
law as racing every arrival clock individually.

A shock redistributes each unit independently: every unit picks a support
point of its owner's offspring law by inverse CDF, and the picked vectors are
summed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .model import ModelSpec

__all__ = [
    "Trajectory",
    "EnsembleStats",
    "make_rng",
    "simulate_path",
    "simulate_ensemble",
    "write_trajectory",
]

SeedLike = Union[int, np.random.SeedSequence]


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Counter-based Philox stream from an integer or a :class:`SeedSequence`."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(ss))


class _ShockSampler:
    """Flattened inverse-CDF tables for one (stream, state)."""

    def __init__(self, kernels_k: Sequence, n_agents: int):
        cdfs, vecs, offsets = [], [], [0]
        for dist in kernels_k:
            v, p = dist.support()
            keep = p > 0
            v, p = v[keep], p[keep]
            c = np.cumsum(p)
            c[-1] = 1.0
            cdfs.append(c)
            vecs.append(v)
            offsets.append(offsets[-1] + len(p))
        agent = np.repeat(np.arange(n_agents), np.diff(offsets))
        self.flat_cdf = agent + np.concatenate(cdfs)
        # agent i's CDF occupies (i, i + 1]; a draw i + u with u in [0, 1) lands in its block
        self.vectors = np.concatenate(vecs).astype(np.int64)
        totals = self.vectors.sum(axis=1)
        self.unit = bool(np.all(totals <= 1) and np.all(self.vectors >= 0))
        if self.unit:
            dest = np.where(totals == 1, self.vectors.argmax(axis=1), n_agents)
            self.dest = dest.astype(np.int64)
        self.offsets = np.asarray(offsets[:-1])
        self.n = n_agents
        self.agents = np.arange(n_agents)

    def apply(self, M: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        total = int(M.sum())
        if total == 0:
            return M
        owner = self.agents.repeat(M)
        pos = self.flat_cdf.searchsorted(owner + rng.random(total), side="right")
        if self.unit:
            return np.bincount(self.dest[pos], minlength=self.n + 1)[: self.n]
        return self.vectors[pos].sum(axis=0)


@dataclass(eq=False)
class Trajectory:
    """One simulated path.

    ``events`` holds ``(time, kind, M, X)`` tuples with the post-event state
    when events are recorded (kinds: ``"background"``, ``"arrival:j"``,
    ``"shock"`` or ``"shock:<name>"``).  ``snapshots[t]`` and ``states[t]`` are
    the carried-forward values at ``sample_times[t]``.
    """

    sample_times: np.ndarray
    snapshots: np.ndarray
    states: np.ndarray
    final_wealth: np.ndarray
    final_state: int
    n_events: int
    events: Optional[list] = None


def _sample_state(dist: np.ndarray, rng) -> int:
    if dist.size == 1:
        return 0
    c = np.cumsum(dist)
    return int(min(np.searchsorted(c, rng.random() * c[-1], side="right"), dist.size - 1))


class _PathEngine:
    def __init__(self, spec: ModelSpec):
        self.spec = spec
        n, d = spec.n_agents, spec.d
        Q = np.asarray(spec.chain.Q, dtype=float)
        self.q_out = -np.diag(Q).copy()
        self.jump = []
        for k in range(d):
            row = Q[k].copy()
            row[k] = 0.0
            s = row.sum()
            self.jump.append(np.cumsum(row / s) if s > 0 else None)
        self.incidence = spec.arrival_matrix().astype(np.int64)
        self.arr_rates = spec.arrival_rates()
        # per state: classes with positive rate and their target index arrays
        self.active, self.active_ids = [], []
        for k in range(d):
            ids = [j for j in range(len(spec.arrivals)) if self.arr_rates[j, k] > 0]
            self.active_ids.append(ids)
            self.active.append([(float(self.arr_rates[j, k]), np.array(spec.arrivals[j].targets))
                                for j in ids])
        self.streams = []
        for stream in spec.shocks:
            samplers = [_ShockSampler([row[k] for row in stream.kernels], n) for k in range(d)]
            self.streams.append((stream.rates, samplers, stream.name))
        self.shock_total = spec.total_shock_rates()
        self.n, self.d = n, d

    def _add_arrivals(self, M, k, dt, rng, t0, events, X):
        if dt <= 0:
            return M
        if events is None:
            for rate, targets in self.active[k]:
                c = rng.poisson(rate * dt)
                if c:
                    M[targets] += c
            return M
        times, cls = [], []
        for j, (rate, targets) in zip(self.active_ids[k], self.active[k]):
            c = rng.poisson(rate * dt)
            times.extend(t0 + dt * rng.random(c))
            cls.extend([j] * c)
        for idx in np.argsort(np.asarray(times), kind="stable"):
            M = M + self.incidence[cls[idx]]
            events.append((float(times[idx]), f"arrival:{cls[idx]}", M.copy(), X))
        return M

    def run(self, t_end: float, rng: np.random.Generator, sample_times: np.ndarray,
            record_events: bool) -> Trajectory:
        n = self.n
        M = np.asarray(self.spec.initial_wealth, dtype=np.int64).copy()
        X = _sample_state(self.spec.chain.initial_distribution, rng)
        events = [] if record_events else None
        snaps = np.zeros((len(sample_times), n), dtype=np.int64)
        states = np.zeros(len(sample_times), dtype=np.int64)
        si = 0
        n_events = 0
        t = 0.0
        while True:
            rate = self.q_out[X] + self.shock_total[X]
            t_next = t + rng.exponential(1.0 / rate) if rate > 0 else np.inf
            stop = min(t_next, t_end)
            # arrivals on [t, stop), split at grid points to fill snapshots
            while si < len(sample_times) and sample_times[si] <= stop:
                if sample_times[si] == t_next and t_next <= t_end:
                    break
                M = self._add_arrivals(M, X, sample_times[si] - t, rng, t, events, X)
                t = sample_times[si]
                snaps[si] = M
                states[si] = X
                si += 1
            M = self._add_arrivals(M, X, stop - t, rng, t, events, X)
            t = stop
            if t_next > t_end:
                break
            # which clock rang: background or one of the shock streams
            u = rng.random() * rate
            n_events += 1
            if u < self.q_out[X]:
                X = int(min(np.searchsorted(self.jump[X], u / self.q_out[X], side="right"), self.d - 1))
                if events is not None:
                    events.append((t, "background", M.copy(), X))
            else:
                u -= self.q_out[X]
                for rates, samplers, name in self.streams:
                    if u < rates[X] or (rates is self.streams[-1][0]):
                        M = samplers[X].apply(M, rng)
                        if events is not None:
                            kind = "shock" if len(self.streams) == 1 else f"shock:{name}"
                            events.append((t, kind, M.copy(), X))
                        break
                    u -= rates[X]
            # a sample point coinciding with the event time sees the post-event state
        while si < len(sample_times):
            snaps[si] = M
            states[si] = X
            si += 1
        if events is not None:
            n_events = len(events)
        return Trajectory(sample_times, snaps, states, M, X, n_events, events)


def simulate_path(spec: ModelSpec, t_end: float, seed: SeedLike,
                  sample_times: Optional[Sequence[float]] = None,
                  record_events: bool = False) -> Trajectory:
    """Simulate one path of ``(M(t), X(t))`` on ``[0, t_end]``.

    Identical ``(spec, t_end, seed, sample_times)`` give identical paths.
    ``sample_times`` default to ``[t_end]``.
    """
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    grid = np.array([t_end] if sample_times is None else sample_times, dtype=float)
    if np.any(np.diff(grid) < 0) or np.any(grid < 0) or np.any(grid > t_end):
        raise ValueError("sample_times must be sorted and inside [0, t_end]")
    return _PathEngine(spec).run(float(t_end), make_rng(seed), grid, record_events)


@dataclass(eq=False)
class EnsembleStats:
    """Running sums over runs; merging is exact and order-independent in value.

    ``snapshots[r, t]`` and ``states[r, t]`` keep every run's values for
    empirical distributions.
    """

    sample_times: np.ndarray
    count: int
    total: np.ndarray
    total_outer: np.ndarray
    snapshots: np.ndarray = field(repr=False)
    states: np.ndarray = field(repr=False)

    @classmethod
    def from_snapshots(cls, sample_times, snapshots: np.ndarray, states: np.ndarray) -> "EnsembleStats":
        x = snapshots.astype(float)
        return cls(np.asarray(sample_times, dtype=float), x.shape[0], x.sum(axis=0),
                   np.einsum("rti,rtj->tij", x, x), snapshots, states)

    def merge(self, other: "EnsembleStats") -> "EnsembleStats":
        if not np.array_equal(self.sample_times, other.sample_times):
            raise ValueError("sample grids differ")
        return EnsembleStats(self.sample_times, self.count + other.count, self.total + other.total,
                             self.total_outer + other.total_outer,
                             np.concatenate([self.snapshots, other.snapshots]),
                             np.concatenate([self.states, other.states]))

    def mean(self) -> np.ndarray:
        """``(T, I)`` sample means."""
        return self.total / self.count

    def covariance(self) -> np.ndarray:
        """``(T, I, I)`` unbiased sample covariances (zero for a single run)."""
        mu = self.mean()
        if self.count < 2:
            return np.zeros_like(self.total_outer)
        raw = self.total_outer - self.count * np.einsum("ti,tj->tij", mu, mu)
        return raw / (self.count - 1)

    def variance(self) -> np.ndarray:
        return np.diagonal(self.covariance(), axis1=1, axis2=2).copy()

    def stderr(self) -> np.ndarray:
        """Standard error of the means."""
        return np.sqrt(self.variance() / self.count)

    def variance_stderr(self) -> np.ndarray:
        """Standard error of the sample variances from the fourth central moment."""
        x = self.snapshots.astype(float)
        dev = x - x.mean(axis=0)
        m4 = (dev ** 4).mean(axis=0)
        var = (dev ** 2).mean(axis=0)
        n = self.count
        return np.sqrt(np.maximum(m4 - var ** 2 * (n - 3) / (n - 1), 0.0) / n)


def simulate_ensemble(spec: ModelSpec, t_end: float, runs: int, master_seed: int,
                      sample_times: Optional[Sequence[float]] = None) -> EnsembleStats:
    """Independent paths seeded by ``SeedSequence(master_seed, spawn_key=(r,))``."""
    if runs < 1:
        raise ValueError("runs must be at least 1")
    grid = np.array([t_end] if sample_times is None else sample_times, dtype=float)
    engine = _PathEngine(spec)
    snaps = np.empty((runs, len(grid), spec.n_agents), dtype=np.int64)
    states = np.empty((runs, len(grid)), dtype=np.int64)
    for r in range(runs):
        rng = make_rng(np.random.SeedSequence(int(master_seed), spawn_key=(r,)))
        traj = engine.run(float(t_end), rng, grid, False)
        snaps[r] = traj.snapshots
        states[r] = traj.states
    return EnsembleStats.from_snapshots(grid, snaps, states)


def write_trajectory(traj: Trajectory, path) -> None:
    """One event per line: time, kind, holdings (comma separated), background state."""
    if traj.events is None:
        raise ValueError("trajectory was simulated without record_events")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("time\tkind\tstate\tbackground\n")
        for t, kind, M, X in traj.events:
            fh.write(f"{t:.17g}\t{kind}\t{','.join(str(int(v)) for v in M)}\t{X}\n")
