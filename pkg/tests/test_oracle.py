import math

import numpy as np
import pytest
import scipy.stats

from conftest import mini_spec
from dissemination import (
    ArrivalClass,
    BackgroundChain,
    Deterministic,
    UnitMultinomialWithLeak,
    make_spec,
    transient_means,
    transient_distribution,
    transient_second_moments,
)
from dissemination.kernels import offspring_convolution
from dissemination.oracle import (
    BudgetExceededError,
    TruncatedDistribution,
    build_generator,
    evolve,
    generator_apply,
    oracle_moments,
    point_mass,
)


def poisson_spec(lam):
    return make_spec(1, BackgroundChain.trivial(), [ArrivalClass([0], [lam])], [0.0],
                     [[Deterministic([1])]])


def test_no_events_zero_derivative():
    spec = make_spec(2, BackgroundChain.trivial(), [], [0.0], [[Deterministic([1, 0])], [Deterministic([0, 1])]],
                     initial_wealth=[2, 1])
    dist = point_mass(spec, (4, 4))
    der = generator_apply(spec, dist)
    assert np.all(der.table == 0) and der.overflow == 0


def test_poisson_birth_row():
    lam = 1.7
    spec = poisson_spec(lam)
    table = np.zeros((6, 1))
    table[2, 0] = 1.0
    der = generator_apply(spec, TruncatedDistribution((5,), table, 0.0))
    expect = np.zeros(6)
    expect[2], expect[3] = -lam, lam
    np.testing.assert_allclose(der.table[:, 0], expect, atol=1e-15)


def test_single_unit_shock_image_is_kernel_law():
    gamma = 1.3
    k0 = UnitMultinomialWithLeak([0.25, 0.45])
    spec = make_spec(2, BackgroundChain.trivial(), [], [gamma], [[k0], [UnitMultinomialWithLeak([0.5, 0.5])]],
                     initial_wealth=[1, 0])
    cap = (3, 3)
    der = generator_apply(spec, point_mass(spec, cap))
    law = offspring_convolution(k0, 1, cap).table
    start = np.zeros((4, 4))
    start[1, 0] = 1.0
    np.testing.assert_allclose(der.table[..., 0], gamma * (law - start), atol=1e-15)


def test_zero_horizon_is_point_mass():
    spec = mini_spec()
    evo = evolve(spec, (10, 10), 0.0, 0.01)
    final = evo.final
    assert final.table[1, 0, 0] == 1.0 and final.table.sum() == 1.0


def test_pure_death():
    spec = make_spec(1, BackgroundChain.trivial(), [], [1.0], [[UnitMultinomialWithLeak([0.0])]],
                     initial_wealth=[1])
    evo = evolve(spec, (3,), 2.0, 0.01, record_times=[0.5, 1.0, 2.0])
    for t, dist in zip(evo.times, evo.distributions):
        assert abs(dist.table[1, 0] - math.exp(-t)) <= 1e-8


def test_poisson_law():
    spec = poisson_spec(2.0)
    dist = evolve(spec, (30,), 1.5, 0.005).final
    ref = scipy.stats.poisson.pmf(np.arange(31), 3.0)
    np.testing.assert_allclose(dist.table[:, 0], ref, atol=1e-10)
    assert dist.overflow == pytest.approx(scipy.stats.poisson.sf(30, 3.0), abs=1e-10)


def test_mass_conservation_and_monotone_overflow():
    spec = mini_spec()
    evo = evolve(spec, (8, 8), 4.0, 0.01, record_times=np.linspace(0, 4, 9))
    for dist in evo.distributions:
        assert dist.total() == pytest.approx(1.0, abs=1e-12)
    ov = evo.overflow()
    assert np.all(np.diff(ov) >= -1e-15)
    assert ov[-1] > 0


def test_background_marginal_matches_chain():
    spec = mini_spec()
    dist = evolve(spec, (20, 20), 3.0, 0.01).final
    np.testing.assert_allclose(dist.state_marginal(), transient_distribution(spec.chain, 3.0),
                               atol=dist.overflow + 1e-10)


def test_means_match_ode():
    spec = mini_spec()
    t = 2.0
    dist = evolve(spec, (20, 20), t, 0.01).final
    m, _ = oracle_moments(dist)
    ode = transient_means(spec, t, 0.01).m[-1]
    assert np.abs(m - ode).max() <= dist.overflow + 1e-7


def test_second_moments_match_ode():
    spec = mini_spec()
    t = 2.0
    dist = evolve(spec, (25, 25), t, 0.01).final
    m, v = oracle_moments(dist)
    ode = transient_second_moments(spec, t, 0.01)
    assert np.abs(v - ode.v[-1]).max() <= dist.overflow + 1e-6


def test_oracle_moments_point_mass():
    spec = make_spec(2, BackgroundChain.two_state(1.0, 1.0, initial=1), [], [0.0, 0.0],
                     [[Deterministic([1, 0])] * 2, [Deterministic([0, 1])] * 2], initial_wealth=[3, 2])
    m, v = oracle_moments(point_mass(spec, (5, 5)))
    np.testing.assert_array_equal(m, [0, 3, 0, 2])
    # pairs (0,0), (0,1), (1,1): 3*2, 3*2, 2*1 in state 1
    np.testing.assert_array_equal(v, [0, 6, 0, 6, 0, 2])


def test_oracle_moments_two_point():
    table = np.zeros((3, 3, 1))
    table[2, 0, 0] = 0.25
    table[1, 1, 0] = 0.75
    m, v = oracle_moments(TruncatedDistribution((2, 2), table, 0.0))
    np.testing.assert_allclose(m, [0.25 * 2 + 0.75, 0.75])
    np.testing.assert_allclose(v, [0.25 * 2, 0.75, 0.0])


def test_budget():
    spec = mini_spec()
    with pytest.raises(BudgetExceededError):
        build_generator(spec, (200, 200), budget=1000)
