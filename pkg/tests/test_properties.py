"""Property-based checks of the invariants every engine must respect."""

import numpy as np
import scipy.stats
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import mini_spec, random_spec
from dissemination import (
    BackgroundChain,
    Deterministic,
    ModelSpec,
    ShockStream,
    UnitMultinomialWithLeak,
    make_spec,
    numerics,
    stationary_distribution,
    transient_distribution,
    transient_means,
    transient_second_moments,
    validate,
)
from dissemination.applications.opinion import base_preset, build_opinion_spec
from dissemination.applications.storage import (
    StorageScenario,
    backup_cost_derivative,
    build_storage_spec,
    optimize_backup_rate,
    storage_transient_closed_form,
)
from dissemination.applications.wealth import build_wealth_spec, poverty_preset, transient_preset
from dissemination.kernels import mixture
from dissemination.moments import build_first_moment_system, transient_means_quadrature
from dissemination.oracle import evolve
from dissemination.simulator import simulate_ensemble, simulate_path

SLOW = settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@st.composite
def generators(draw, max_d=4):
    d = draw(st.integers(2, max_d))
    off = draw(arrays(float, (d, d), elements=st.floats(0.05, 3.0)))
    np.fill_diagonal(off, 0.0)
    np.fill_diagonal(off, -off.sum(axis=1))
    return off


@st.composite
def conservative_specs(draw):
    """Unit kernels without leak and no arrivals: total mass is invariant."""
    n = draw(st.integers(1, 4))
    d = draw(st.integers(1, 3))
    rng = np.random.default_rng(draw(st.integers(0, 2 ** 32 - 1)))
    if d == 1:
        chain = BackgroundChain.trivial()
    else:
        Q = rng.uniform(0.1, 2.0, (d, d))
        np.fill_diagonal(Q, 0)
        np.fill_diagonal(Q, -Q.sum(axis=1))
        chain = BackgroundChain(Q, rng.dirichlet(np.ones(d)))
    kern = [[UnitMultinomialWithLeak(rng.dirichlet(np.ones(n))) for _ in range(d)] for _ in range(n)]
    m0 = rng.integers(0, 6, n)
    return make_spec(n, chain, [], rng.uniform(0.0, 3.0, d), kern, initial_wealth=m0)


# background chain

@settings(max_examples=40, deadline=None)
@given(generators(), st.floats(0.01, 100.0))
def test_stationary_scale_invariant(Q, c):
    a = stationary_distribution(BackgroundChain(Q))
    b = stationary_distribution(BackgroundChain(Q * c))
    assert np.abs(a - b).max() <= 1e-12


@settings(max_examples=40, deadline=None)
@given(generators(), st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_transient_semigroup(Q, s, t):
    chain = BackgroundChain(Q, 0)
    direct = transient_distribution(chain, s + t)
    stepped = transient_distribution(chain, t, transient_distribution(chain, s))
    assert np.abs(direct - stepped).max() <= 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_validate_pure(seed):
    spec = random_spec(seed)
    assert validate(spec) == validate(spec) == []


# numerics

@st.composite
def metzler(draw, n=5):
    """Irreducible Metzler matrices: the Perron abscissa is a simple eigenvalue."""
    a = draw(arrays(float, (n, n), elements=st.floats(0.01, 2.0)))
    diag = draw(arrays(float, n, elements=st.floats(-5.0, 2.0)))
    a[np.diag_indices(n)] = diag
    return a


@settings(max_examples=40, deadline=None)
@given(metzler(), st.floats(-5, 5))
def test_abscissa_shift(a, c):
    assert abs(numerics.spectral_abscissa(a + c * np.eye(5)) - numerics.spectral_abscissa(a) - c) <= 1e-8


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(-5, 5))
def test_abscissa_shift_moment_matrices(seed, c):
    a = build_first_moment_system(random_spec(seed)).A
    shifted = numerics.spectral_abscissa(a + c * np.eye(len(a)))
    assert abs(shifted - numerics.spectral_abscissa(a) - c) <= 1e-8


@settings(max_examples=30, deadline=None)
@given(arrays(float, (4, 4), elements=st.floats(-2.5, 2.5)))
def test_expm_inverse_bounded_norm(a):
    prod = numerics.expm(a) @ numerics.expm(-a)
    assert np.abs(prod - np.eye(4)).max() <= 1e-8 * max(1.0, np.linalg.cond(numerics.expm(a)))


@SLOW
@given(st.integers(0, 10 ** 6))
def test_rk4_order_on_moment_systems(seed):
    spec = random_spec(seed, initial_wealth=[2, 1, 0])
    # successive differences shrink by 2^4 once h is in the asymptotic range
    ends = [transient_means(spec, 1.0, h).m[-1] for h in (0.04, 0.02, 0.01)]
    e1 = np.abs(ends[0] - ends[1]).max()
    e2 = np.abs(ends[1] - ends[2]).max()
    if e2 > 1e-13:
        assert 12 <= e1 / e2 <= 20


# moment engines

@SLOW
@given(conservative_specs())
def test_mean_mass_conserved(spec):
    path = transient_means(spec, 5.0, 0.01)
    total = path.agent_means().sum(axis=1)
    assert np.abs(total - spec.initial_wealth.sum()).max() <= 1e-8
    assert np.abs(path.pi.sum(axis=1) - 1.0).max() <= 1e-9


@SLOW
@given(st.integers(0, 10 ** 6), st.integers(1, 4), st.integers(1, 3))
def test_quadrature_agrees_on_random_specs(seed, n, d):
    spec = random_spec(seed, n_agents=n, d=d)
    t = 1.0
    quad = transient_means_quadrature(spec, t)
    rk = transient_means(spec, t, 1e-3).m[-1]
    assert np.max(np.abs(rk - quad) / np.maximum(np.abs(quad), 1e-12)) <= 1e-6


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0, 10))
def test_storage_nothing_lost(lam, g, t):
    r = storage_transient_closed_form(StorageScenario(lam=lam, gamma=g), t)
    assert abs(r.m1 + r.m2 - lam * t) <= 1e-12 * max(1.0, lam * t)


def test_storage_nothing_lost_ode():
    spec = build_storage_spec(StorageScenario(lam=2.3, gamma=0.7))
    path = transient_means(spec, 5.0, 1e-3)
    assert np.abs(path.m.sum(axis=1) - 2.3 * path.times).max() <= 1e-8


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 10), st.floats(0.01, 10), st.floats(0.01, 10), st.floats(0.01, 10))
def test_boundary_iff_nonnegative_slope(lam, t, kb, knc):
    sc = StorageScenario(lam=lam, horizon=t, kappa_backup=kb, kappa_uncopied=knc)
    opt = optimize_backup_rate(sc)
    assert opt.boundary == (backup_cost_derivative(sc, 0.0) >= 0)
    if not opt.boundary:
        assert abs(backup_cost_derivative(sc, opt.gamma_star)) <= 1e-6 * max(1.0, t * kb)


def test_presets_validate():
    for spec in (build_wealth_spec(transient_preset(30)), build_wealth_spec(poverty_preset(30)),
                 build_wealth_spec(poverty_preset(50)), build_opinion_spec(base_preset()),
                 build_opinion_spec(base_preset(alpha=0.1, lam_a2=0.2))):
        assert validate(spec) == []
    for variant in ("basic", "faulty_link", "with_failures"):
        sc = StorageScenario(lam=1.0, gamma=1.0, q_up=0.2, q_down=0.5, gamma_fail=0.1)
        assert validate(build_storage_spec(sc, variant)) == []


def test_amplified_opinion_mass_increases():
    path = transient_means(build_opinion_spec(base_preset(alpha=0.1)), 50.0, 0.01, stride=100)
    assert np.all(np.diff(path.agent_means().sum(axis=1)) > 0)


# simulator

@SLOW
@given(conservative_specs(), st.integers(0, 2 ** 63))
def test_paths_conserve_mass(spec, seed):
    traj = simulate_path(spec, 5.0, seed, sample_times=np.linspace(0, 5, 6), record_events=True)
    total = spec.initial_wealth.sum()
    assert np.all(traj.snapshots.sum(axis=1) == total)
    assert all(M.sum() == total and np.all(M >= 0) for _, _, M, _ in traj.events)


@SLOW
@given(st.integers(0, 10 ** 6), st.integers(0, 2 ** 63))
def test_paths_nonnegative(seed, path_seed):
    traj = simulate_path(random_spec(seed), 3.0, path_seed, record_events=True)
    assert all(np.all(M >= 0) for _, _, M, _ in traj.events)


def _thinned(spec):
    """Double every shock rate; each shock is the identity move with probability 1/2."""
    n = spec.n_agents
    streams = []
    for stream in spec.shocks:
        stay = [[Deterministic(np.eye(n, dtype=int)[i])] * spec.d for i in range(n)]
        streams += [stream, ShockStream(stream.rates, stay)]
    return ModelSpec(n, spec.chain, spec.arrivals, tuple(streams), spec.initial_wealth)


def test_thinning_consistency():
    spec = random_spec(42, initial_wealth=[3, 1, 2])
    grid = np.array([0.5, 1.0, 2.0])
    a = simulate_ensemble(spec, 2.0, 1000, 1, grid).snapshots
    b = simulate_ensemble(_thinned(spec), 2.0, 1000, 2, grid).snapshots
    for s in range(len(grid)):
        for i in range(spec.n_agents):
            assert scipy.stats.ks_2samp(a[:, s, i], b[:, s, i]).pvalue > 0.01
        assert scipy.stats.ks_2samp(a[:, s].sum(axis=1), b[:, s].sum(axis=1)).pvalue > 0.01


def test_per_unit_laziness_keeps_means_only():
    """Making each unit lazy on its own at doubled rate preserves means, not second moments."""
    spec = random_spec(42, initial_wealth=[3, 1, 2])
    n = spec.n_agents
    stream = spec.shocks[0]
    lazy = [[mixture([Deterministic(np.eye(n, dtype=int)[i]), k], [0.5, 0.5]) for k in row]
            for i, row in enumerate(stream.kernels)]
    lazy_spec = ModelSpec(n, spec.chain, spec.arrivals, (ShockStream(2 * stream.rates, lazy),),
                          spec.initial_wealth)
    a, b = transient_second_moments(spec, 2.0, 1e-3), transient_second_moments(lazy_spec, 2.0, 1e-3)
    assert np.abs(a.m[-1] - b.m[-1]).max() <= 1e-10
    assert np.abs(a.v[-1] - b.v[-1]).max() > 1e-3
    thin = transient_second_moments(_thinned(spec), 2.0, 1e-3)
    assert np.abs(a.v[-1] - thin.v[-1]).max() <= 1e-10


# oracle

def test_oracle_mass_and_overflow():
    spec = mini_spec()
    evo = evolve(spec, (6, 6), 3.0, 0.01, record_times=np.linspace(0, 3, 31))
    totals = np.array([dist.total() for dist in evo.distributions])
    assert np.abs(totals - 1.0).max() <= 1e-9
    assert np.all(np.diff(evo.overflow()) >= 0)


def test_oracle_state_frequencies_match_ensemble():
    spec = mini_spec()
    t, runs = 1.0, 4000
    dist = evolve(spec, (20, 20), t, 0.01).final
    snaps = simulate_ensemble(spec, t, runs, 5).snapshots[:, 0]
    for x in [(0, 0), (1, 0), (2, 0), (1, 1), (0, 1), (2, 1), (3, 0)]:
        p = dist.table[x].sum()
        freq = np.mean(np.all(snaps == x, axis=1))
        assert abs(freq - p) <= 4 * np.sqrt(p * (1 - p) / runs)
