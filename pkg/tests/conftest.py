import numpy as np
import pytest

from dissemination import (
    Amplified,
    ArrivalClass,
    BackgroundChain,
    FiniteTable,
    UnitMultinomialWithLeak,
    make_spec,
)


def random_probs(rng, n, leak=0.2):
    p = rng.dirichlet(np.ones(n + 1))
    p[-1] += leak
    return p[:n] / p.sum()


def random_spec(seed, n_agents=3, d=2, amplified=True, initial_wealth=None):
    """Small irreducible model with mixed kernels, used across engines."""
    rng = np.random.default_rng(seed)
    Q = rng.uniform(0.2, 1.5, (d, d))
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    chain = BackgroundChain(Q, rng.dirichlet(np.ones(d)))
    kernels = []
    for i in range(n_agents):
        row = []
        for k in range(d):
            inner = UnitMultinomialWithLeak(random_probs(rng, n_agents))
            if amplified and (i + k) % 2 == 0:
                row.append(Amplified(float(rng.uniform(0.1, 0.5)), inner))
            else:
                row.append(inner)
        kernels.append(row)
    arrivals = [ArrivalClass([0], rng.uniform(0.2, 1.0, d)),
                ArrivalClass(list(range(n_agents)), rng.uniform(0.1, 0.5, d))]
    rates = rng.uniform(0.3, 1.2, d)
    return make_spec(n_agents, chain, arrivals, rates, kernels, initial_wealth)


def mini_spec():
    """Two agents, two states, small rates: the three-engine comparison model."""
    chain = BackgroundChain(np.array([[-0.5, 0.5], [0.3, -0.3]]), 0)
    k0 = UnitMultinomialWithLeak([0.5, 0.3])
    k1 = UnitMultinomialWithLeak([0.2, 0.6])
    amp = Amplified(0.3, UnitMultinomialWithLeak([0.3, 0.3]))
    table = FiniteTable([[0, 0], [1, 0], [0, 1], [1, 1]], [0.3, 0.3, 0.3, 0.1])
    kernels = [[k0, amp], [table, k1]]
    arrivals = [ArrivalClass([0], [1.0, 0.4]), ArrivalClass([0, 1], [0.2, 0.5])]
    return make_spec(2, chain, arrivals, [0.8, 0.6], kernels, initial_wealth=[1, 0])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
