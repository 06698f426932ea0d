"""Backing up client files: how often should the central unit copy?

Files appear at rate ``lam`` and a backup moves all uncopied files to storage.
The script compares the moment ODE with the closed forms, then trades backup
cost against the expected number of uncopied files over a horizon.
"""

import numpy as np

from dissemination import transient_second_moments
from dissemination.applications.storage import (
    StorageScenario,
    backup_cost,
    build_storage_spec,
    optimize_backup_rate,
    storage_transient_closed_form,
)
from dissemination.moments import central_moments

sc = StorageScenario(lam=3.0, gamma=0.8)
path = transient_second_moments(build_storage_spec(sc), 5.0, 1e-3, stride=1000)
print("  t   E[uncopied]  closed   Var[uncopied]  closed")
for t, m, v in zip(path.times, path.m, path.v):
    ref = storage_transient_closed_form(sc, t)
    cov = central_moments(m, v, 2, 1)
    print(f"{t:4.1f}  {m[0]:10.6f} {ref.m1:9.6f}  {cov[0, 0]:12.6f} {ref.var1:9.6f}")

# backups cost kappa_B each; every uncopied file at the horizon costs kappa_NC
for kb in (0.5, 1.5, 2.0, 3.0):
    opt = optimize_backup_rate(StorageScenario(lam=1.0, horizon=1.0, kappa_backup=kb, kappa_uncopied=4.0))
    where = "never back up" if opt.boundary else f"gamma* = {opt.gamma_star:.4f}"
    print(f"kappa_B = {kb}: {where}, cost {opt.cost:.4f}")

sc = StorageScenario(lam=1.0, horizon=1.0, kappa_backup=0.5, kappa_uncopied=4.0)
grid = np.linspace(0, 10, 6)
print("F on a coarse grid:", np.round([backup_cost(sc, g) for g in grid], 4))
