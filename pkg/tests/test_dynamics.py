import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import field_of
from sqgda.dynamics import (
    ForcingSpec,
    PhysicalParams,
    SQGModel,
    StepperConfig,
    l2_apriori_bound,
    nonlinear_term,
    run,
)
from sqgda.errors import CFLError, ConfigurationError, DivergenceError, InvalidInputError
from sqgda.observation import RoughModal
from sqgda.spectral import GridSpec, SpectralField, from_modes, l2_norm, random_field

G = GridSpec(32, 32)


def model(kappa=0.1, gamma=1.5, mu=0.0, forcing=ForcingSpec(), dt=0.01, linear_only=False, obs=None, grid=G):
    return SQGModel(grid, PhysicalParams(kappa, gamma, mu, forcing), StepperConfig(dt, linear_only=linear_only), obs)


def amp(field, k1, k2):
    return 2 * field.coeffs[field.grid.index_of(k1, k2)].real


def test_params_validation():
    with pytest.raises(ConfigurationError, match=r"\(0, 2\]"):
        PhysicalParams(0.1, 3.0)
    with pytest.raises(ConfigurationError):
        PhysicalParams(0.0, 1.5)
    with pytest.raises(ConfigurationError):
        PhysicalParams(0.1, 1.5, mu=-1)
    with pytest.warns(UserWarning, match="subcritical"):
        PhysicalParams(0.1, 0.8)


def test_forcing_validation():
    with pytest.raises(InvalidInputError):
        ForcingSpec((((0, 0), 1.0, 0.0),))
    with pytest.raises(ConfigurationError):
        ForcingSpec.shell(1.0, (20, 1)).to_field(GridSpec(32, 32))


def test_shell_forcing_shape():
    f = ForcingSpec.shell(0.3, (1, 2)).to_field(G)
    X, Y = G.mesh()
    np.testing.assert_allclose(f.physical(), 0.3 * (np.cos(X + 2 * Y) + np.sin(-2 * X + Y)), atol=1e-14)
    assert f.mean_zero


def test_stepper_guards():
    with pytest.raises(ConfigurationError):
        StepperConfig(0.0)
    with pytest.raises(ConfigurationError):
        StepperConfig(0.1, scheme="rk4")
    with pytest.raises(ConfigurationError, match="dt \\* mu"):
        model(mu=60, dt=0.01, obs=RoughModal(4))
    with pytest.raises(ConfigurationError):
        model(mu=1.0)  # nudging without an observation operator


def test_nonlinear_term_examples():
    g = GridSpec(32, 32)
    out = nonlinear_term(field_of(g, lambda X, Y: np.cos(X) + np.cos(2 * Y)))
    X, Y = g.mesh()
    assert np.abs(out.physical() - np.sin(X) * np.sin(2 * Y)).max() <= 1e-10
    assert np.abs(nonlinear_term(field_of(g, lambda X, Y: np.cos(2 * X))).physical()).max() <= 1e-12
    assert not np.any(nonlinear_term(SpectralField.zeros(g)).coeffs)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k1=st.integers(-8, 8), k2=st.integers(-8, 8))
def test_plane_waves_are_steady_for_advection(seed, k1, k2):
    if k1 == 0 and k2 == 0:
        return
    a, ph = np.random.default_rng(seed).uniform(0.1, 2), np.random.default_rng(seed + 1).uniform(0, 6)
    out = nonlinear_term(from_modes(G, [(k1, k2, a, ph)]))
    assert np.abs(out.coeffs).max() <= 1e-12 * a


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_nonlinear_term_is_mean_zero(seed):
    out = nonlinear_term(random_field(G, np.random.default_rng(seed), kmax=10))
    assert out.coeffs[0, 0] == 0


def test_single_mode_linear_decay():
    th0 = from_modes(G, [(2, 0, 1.0, 0.0)])
    for dt in (0.1, 0.05, 0.01):
        m = model(dt=dt, linear_only=True)
        tr = run(m, m.initial_state(theta=th0), 1.0)
        assert abs(amp(tr.state.theta, 2, 0) - math.exp(-0.1 * 2**1.5)) <= 1e-10
    assert abs(math.exp(-0.1 * 2**1.5) - 0.753638) < 1e-6


def test_single_mode_nonlinear_matches_linear():
    th0 = from_modes(G, [(2, 0, 1.0, 0.0)])
    lin, non = model(linear_only=True), model()
    a = run(lin, lin.initial_state(theta=th0), 1.0).state.theta
    b = run(non, non.initial_state(theta=th0), 1.0).state.theta
    assert np.abs(a.coeffs - b.coeffs).max() <= 1e-10


@settings(max_examples=30, deadline=None)
@given(dt=st.floats(1e-3, 0.5), seed=st.integers(0, 1000))
def test_exact_linear_factor_every_mode(dt, seed):
    m = model(dt=dt, linear_only=True, kappa=0.05, gamma=1.2)
    th = random_field(G, np.random.default_rng(seed), kmax=10)
    out = m.step(m.initial_state(theta=th)).theta
    expected = th.coeffs * np.exp(-0.05 * G.kabs**1.2 * dt)
    assert np.abs(out.coeffs - expected).max() <= 1e-15


def test_linear_nudged_decay_second_order():
    th = SpectralField.zeros(G)
    eta0 = from_modes(G, [(2, 0, 1.0, 0.0)])
    exact = math.exp(-(0.1 * 2**1.5 + 3) * 1.0)
    errs = []
    for dt in (0.02, 0.01, 0.005):
        m = model(mu=3.0, dt=dt, linear_only=True, obs=RoughModal(2))
        final = run(m, m.initial_state(theta=th, eta=eta0), 1.0).state.eta
        errs.append(abs(amp(final, 2, 0) - exact))
    assert 3.5 < errs[0] / errs[1] < 4.5 and 3.5 < errs[1] / errs[2] < 4.5


def test_zero_data_stays_zero():
    m = model()
    tr = run(m, m.initial_state(theta=SpectralField.zeros(G)), 0.5)
    assert not np.any(tr.state.theta.coeffs)


def test_unforced_l2_monotone():
    m = model(kappa=0.02)
    th = random_field(G, np.random.default_rng(4), kmax=8, l2=3.0)
    tr = run(m, m.initial_state(theta=th), 3.0, monitors={"l2": lambda s: l2_norm(s.theta)}, every=5)
    assert np.all(np.diff(tr.series["l2"]) <= 1e-13)


def test_forced_run_invariants():
    f = ForcingSpec.shell(0.1, (2, 1))
    m = model(kappa=0.02, forcing=f, dt=0.01)
    th0 = random_field(G, np.random.default_rng(0), kmax=6, l2=0.5)
    s = m.initial_state(theta=th0)
    bound = l2_apriori_bound(m.params, th0, G)
    for _ in range(300):
        s = m.step(s)
        assert abs(s.theta.coeffs[0, 0]) <= 1e-12
        assert s.theta.conjugate_symmetry_error() <= 1e-12
        assert np.abs(s.theta.coeffs[~G.dealias_mask]).max() == 0
        assert l2_norm(s.theta) <= bound


def test_run_hits_t_end_with_partial_step():
    m = model(dt=0.03, linear_only=True)
    th0 = from_modes(G, [(1, 1, 1.0, 0.0)])
    tr = run(m, m.initial_state(theta=th0), 1.0, monitors={"a": lambda s: amp(s.theta, 1, 1)}, every=1000)
    assert tr.state.time == 1.0 and tr.times[-1] == 1.0
    assert abs(tr.series["a"][-1] - math.exp(-0.1 * 2**0.75)) <= 1e-12


def test_run_rejects_past_end():
    m = model()
    with pytest.raises(InvalidInputError):
        run(m, m.initial_state(theta=SpectralField.zeros(G)), 0.0)


def test_cfl_failure_keeps_partial_record():
    m = model(kappa=0.01, dt=0.2)
    th = random_field(G, np.random.default_rng(0), kmax=10, l2=20.0)
    with pytest.raises(CFLError) as info:
        run(m, m.initial_state(theta=th), 5.0, monitors={"l2": lambda s: l2_norm(s.theta)})
    assert info.value.partial.failed and len(info.value.partial.times) >= 1
    tr = run(m, m.initial_state(theta=th), 5.0, raise_on_failure=False)
    assert tr.failed and isinstance(tr.error, CFLError)


@pytest.mark.filterwarnings("ignore:invalid value encountered:RuntimeWarning")
def test_nonfinite_state_raises_divergence():
    m = model(linear_only=True)
    c = np.zeros(G.shape, complex)
    c[G.index_of(1, 0)] = np.inf
    bad = SpectralField(G, c, True)
    with pytest.raises(DivergenceError) as info:
        m.step(m.initial_state(theta=bad, time=2.5))
    assert info.value.last_good_time == 2.5


def test_initial_state_projects_onto_dealiased_mean_zero():
    m = model()
    th = SpectralField.from_physical(G, np.random.default_rng(0).standard_normal(G.shape))
    s = m.initial_state(theta=th)
    assert s.theta.coeffs[0, 0] == 0 and np.abs(s.theta.coeffs[~G.dealias_mask]).max() == 0
