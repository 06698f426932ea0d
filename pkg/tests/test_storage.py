import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dissemination import numerics, stability, transient_means
from dissemination.applications.storage import (
    StorageScenario,
    backup_cost,
    backup_cost_derivative,
    build_storage_spec,
    link_state_probabilities,
    optimize_backup_rate,
    storage_transient_closed_form,
)
from dissemination.moments import build_first_moment_system


def test_closed_form_at_zero():
    r = storage_transient_closed_form(StorageScenario(lam=2.0, gamma=1.0), 0.0)
    assert (r.m1, r.m2, r.v11, r.v12, r.v22, r.var1, r.var2) == (0, 0, 0, 0, 0, 0, 0)


def test_closed_form_limit():
    r = storage_transient_closed_form(StorageScenario(lam=2.0, gamma=0.5), 200.0)
    assert r.m1 == pytest.approx(4.0, rel=1e-14)


def test_closed_form_value():
    r = storage_transient_closed_form(StorageScenario(lam=3.0, gamma=2.0), 1.0)
    assert r.m1 == pytest.approx(1.5 * (1 - math.exp(-2.0)), rel=1e-15)
    assert r.m2 == pytest.approx(3.0 - 1.5 * (1 - math.exp(-2.0)), rel=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.0, 5.0))
def test_variances_consistent_with_factorial_moments(lam, g, t):
    r = storage_transient_closed_form(StorageScenario(lam=lam, gamma=g), t)
    scale = max(1.0, (lam / g) ** 2, lam * t)
    assert abs(r.var1 - (r.v11 + r.m1 - r.m1 ** 2)) <= 1e-9 * scale
    assert abs(r.var2 - (r.v22 + r.m2 - r.m2 ** 2)) <= 1e-9 * scale * max(1.0, g * t) ** 2
    assert r.var1 >= -1e-12 * scale and r.var2 >= -1e-12 * scale * max(1.0, g * t) ** 2


def test_closed_form_needs_gamma():
    with pytest.raises(ValueError):
        storage_transient_closed_form(StorageScenario(lam=1.0, gamma=0.0), 1.0)


# cost optimization

def cost_scenario(kappa_b, lam=1.0, t=1.0, kappa_nc=4.0):
    return StorageScenario(lam=lam, horizon=t, kappa_backup=kappa_b, kappa_uncopied=kappa_nc)


def test_exact_threshold_is_boundary():
    opt = optimize_backup_rate(cost_scenario(2.0))
    assert opt.boundary and opt.gamma_star == 0.0
    assert opt.cost == pytest.approx(4.0)


def test_expensive_backups():
    assert optimize_backup_rate(cost_scenario(1e6)).gamma_star == 0.0


def test_interior_optimum_against_grid():
    sc = cost_scenario(0.3)
    opt = optimize_backup_rate(sc)
    assert not opt.boundary
    assert abs(backup_cost_derivative(sc, opt.gamma_star)) <= 1e-6
    grid = np.arange(0.0, 20.0, 1e-4)
    costs = np.array([backup_cost(sc, g) for g in grid])
    best = grid[np.argmin(costs)]
    assert abs(best - opt.gamma_star) <= 1e-4
    assert opt.cost <= costs.min() + 1e-12


def test_derivative_matches_mpmath():
    sc = cost_scenario(0.7, lam=2.3, t=1.7, kappa_nc=3.1)
    mpmath.mp.dps = 40
    for g in (0.0, 1e-9, 3e-5, 2e-4, 0.01, 0.5, 3.0, 40.0):
        def f(x):
            x = mpmath.mpf(x)
            if x == 0:
                return sc.lam * sc.horizon * sc.kappa_uncopied
            return x * sc.horizon * sc.kappa_backup + sc.lam / x * (1 - mpmath.exp(-x * sc.horizon)) * sc.kappa_uncopied
        ref = float(mpmath.diff(f, max(g, mpmath.mpf("1e-30"))))
        assert backup_cost_derivative(sc, g) == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_cost_validation():
    with pytest.raises(ValueError):
        optimize_backup_rate(StorageScenario(lam=1.0, kappa_backup=None, kappa_uncopied=1.0))


# storage variants

def test_basic_mean_equations():
    lam, g = 1.4, 0.9
    sys1 = build_first_moment_system(build_storage_spec(StorageScenario(lam=lam, gamma=g)))
    np.testing.assert_array_equal(sys1.A, [[-g, 0.0], [g, 0.0]])
    np.testing.assert_array_equal(sys1.Lambda, np.diag([lam, 0.0]))
    assert abs(stability(build_storage_spec(StorageScenario(lam=lam, gamma=g))).omega) <= 1e-12


def test_faulty_link_equations():
    lam, g, qu, qd = 1.4, 0.9, 0.3, 0.8
    sc = StorageScenario(lam=lam, gamma=g, q_up=qu, q_down=qd)
    sys1 = build_first_moment_system(build_storage_spec(sc, "faulty_link"))
    # order (1U, 1D, 2U, 2D)
    A = np.array([
        [-qu - g, qd, 0, 0],
        [qu, -qd, 0, 0],
        [g, 0, -qu, qd],
        [0, 0, qu, -qd],
    ])
    np.testing.assert_allclose(sys1.A, A, atol=1e-15)
    np.testing.assert_allclose(sys1.forcing_matrix(), [[lam, 0], [0, lam], [0, 0], [0, 0]])


def test_with_failures_equations():
    lam, g, qu, qd, gf = 1.4, 0.9, 0.3, 0.8, 0.05
    sc = StorageScenario(lam=lam, gamma=g, q_up=qu, q_down=qd, gamma_fail=gf)
    sys1 = build_first_moment_system(build_storage_spec(sc, "with_failures"))
    A = np.array([
        [-qu - g, qd, 0, 0, 0, 0],
        [qu, -qd, 0, 0, 0, 0],
        [g, 0, -qu - gf, qd, 0, 0],
        [0, 0, qu, -qd - gf, 0, 0],
        [0, 0, gf, 0, -qu, qd],
        [0, 0, 0, gf, qu, -qd],
    ])
    np.testing.assert_allclose(sys1.A, A, atol=1e-15)


def test_link_probabilities():
    qu, qd = 0.3, 0.8
    Q = np.array([[-qu, qu], [qd, -qd]])
    for t in (0.0, 0.4, 5.0):
        for init in ((1.0, 0.0), (0.0, 1.0), (0.3, 0.7)):
            ref = np.asarray(init) @ numerics.expm(Q * t)
            np.testing.assert_allclose(link_state_probabilities(qu, qd, t, init), ref, atol=1e-14)


def test_faulty_link_mean_against_closed_link_law():
    lam, g, qu, qd = 2.0, 1.0, 0.3, 0.8
    spec = build_storage_spec(StorageScenario(lam=lam, gamma=g, q_up=qu, q_down=qd), "faulty_link")
    path = transient_means(spec, 3.0, 1e-3, stride=1000)
    for t, m in zip(path.times, path.m):
        total = m[0] + m[1] + m[2] + m[3]
        assert total == pytest.approx(lam * t, abs=1e-9)
        np.testing.assert_allclose(path.pi[list(path.times).index(t)],
                                   link_state_probabilities(qu, qd, t), atol=1e-12)


def test_variant_requirements():
    with pytest.raises(ValueError):
        build_storage_spec(StorageScenario(lam=1.0, gamma=1.0), "faulty_link")
    with pytest.raises(ValueError):
        build_storage_spec(StorageScenario(lam=1.0, gamma=1.0), "with_failures")
    with pytest.raises(ValueError):
        build_storage_spec(StorageScenario(lam=1.0, gamma=1.0), "replicated")
