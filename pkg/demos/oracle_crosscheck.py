"""Three independent answers to the same question on a tiny model.

The exact master equation on a truncated box, the moment ODE and a Monte
Carlo ensemble should agree on means and variances; the oracle also reports
how much probability escaped the box.
"""

import numpy as np

from dissemination import (
    Amplified,
    ArrivalClass,
    BackgroundChain,
    FiniteTable,
    UnitMultinomialWithLeak,
    make_spec,
    transient_second_moments,
)
from dissemination.moments import central_moments
from dissemination.oracle import evolve, oracle_moments
from dissemination.simulator import simulate_ensemble

chain = BackgroundChain(np.array([[-0.5, 0.5], [0.3, -0.3]]), 0)
table = FiniteTable([[0, 0], [1, 0], [0, 1], [1, 1]], [0.3, 0.3, 0.3, 0.1])
kernels = [[UnitMultinomialWithLeak([0.5, 0.3]), Amplified(0.3, UnitMultinomialWithLeak([0.3, 0.3]))],
           [table, UnitMultinomialWithLeak([0.2, 0.6])]]
spec = make_spec(2, chain, [ArrivalClass([0], [1.0, 0.4]), ArrivalClass([0, 1], [0.2, 0.5])],
                 [0.8, 0.6], kernels, initial_wealth=[1, 0])

t = 2.0
dist = evolve(spec, (25, 25), t, 1e-3).final
om, ov = oracle_moments(dist)
path = transient_second_moments(spec, t, 1e-3)
stats = simulate_ensemble(spec, t, 10_000, 3)
print(f"overflow mass {dist.overflow:.2e}")
for name, (m, v) in {"oracle": (om, ov), "moment ODE": (path.m[-1], path.v[-1])}.items():
    cov = central_moments(m, v, 2, 2)
    print(f"{name:>10}: means {m.reshape(2, 2).sum(1).round(6)}, variances {np.diag(cov).round(6)}")
print(f"{'ensemble':>10}: means {stats.mean()[-1].round(4)} +- {stats.stderr()[-1].round(4)}, "
      f"variances {stats.variance()[-1].round(4)}")
