"""Two opinion groups whose interaction pattern switches with a background mode.

Without amplification the total opinion mass is conserved and the means settle
on a fixed direction.  With amplification in the adapted mode the mass grows
exponentially at the spectral abscissa, yet relative opinions still converge.
"""

import numpy as np

from dissemination import stability, transient_means
from dissemination.applications.opinion import (
    base_preset,
    build_opinion_spec,
    opinion_steady_state,
    relative_normalize,
)

sc = base_preset()
spec = build_opinion_spec(sc)
path = transient_means(spec, 300.0, 1e-2, stride=5000)
k = path.m.reshape(len(path.times), spec.n_agents, spec.d)
print("  t   total   m_A1    m_A2    m_B1    m_B2")
for t, row, tot in zip(path.times, k, path.agent_means().sum(axis=1)):
    print(f"{t:5.0f} {tot:7.3f} " + " ".join(f"{x:7.4f}" for x in (*row[0], *row[sc.n_a])))
print("limit:", np.round(opinion_steady_state(sc), 4), " omega:", f"{stability(spec).omega:.1e}")

amp = base_preset(alpha=0.1)
spec = build_opinion_spec(amp)
omega = stability(spec).omega
path = transient_means(spec, 200.0, 1e-2, stride=5000)
mass = path.agent_means().sum(axis=1)
rel = relative_normalize(path.agent_means())
print(f"\namplified: omega = {omega:.5f}")
for t, tot, r in zip(path.times, mass, rel):
    print(f"{t:5.0f} mass {tot:12.2f}  share of an A agent {r[0]:.5f}, of a B agent {r[-1]:.5f}")
