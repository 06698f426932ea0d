"""A leader with outside income and followers who live off the leader.

Mean wealth curves from the moment ODE are checked against simulated paths,
then the stationary follower moments feed the normal approximations of the
poverty probability and of the number of poor followers.
"""

import numpy as np

from dissemination import transient_means
from dissemination.simulator import simulate_ensemble
from dissemination.applications.wealth import (
    build_wealth_spec,
    follower_moments,
    poverty_count_distribution,
    poverty_pair_prob,
    poverty_threshold_prob,
    poverty_preset,
    transient_preset,
)

spec = build_wealth_spec(transient_preset(30))
grid = np.array([1.0, 5.0, 20.0])
ode = transient_means(spec, 20.0, 1e-2).agent_means()[[100, 500, 2000]]
sim = simulate_ensemble(spec, 20.0, 2000, 1, grid)
print("  t  leader ODE  leader sim (SE)     follower ODE  follower sim")
for s, t in enumerate(grid):
    print(f"{t:4.0f} {ode[s, 0]:10.4f} {sim.mean()[s, 0]:10.4f} ({sim.stderr()[s, 0]:.3f})   "
          f"{ode[s, 1]:11.4f} {sim.mean()[s, 1:].mean():11.4f}")

sc = poverty_preset(30)
fm = follower_moments(sc)
print(f"\nstationary follower mean {fm.m_follower:.4f}, variance {fm.var_f:.4f}, "
      f"covariance of two followers {fm.cov_ff:.4f}")
wealth = simulate_ensemble(build_wealth_spec(sc), 150.0, 500, 2).snapshots[:, -1, 1:].ravel()
print(" c  normal approx  simulated")
for c in range(6):
    print(f"{c:2d}  {poverty_threshold_prob(fm.m_follower, fm.var_f, c):12.4f} {np.mean(wealth <= c):10.4f}")

f = poverty_threshold_prob(fm.m_follower, fm.var_f, 1)
f2 = poverty_pair_prob(fm.m_follower, fm.var_f, fm.cov_ff, 1)
count = poverty_count_distribution(sc.n_agents, f, f2)
print(f"\npoor followers (wealth <= 1): mean {count.mu:.2f}, sd {count.sigma:.2f} "
      f"(binomial sd would be {np.sqrt(count.mu * (1 - f)):.2f})")
