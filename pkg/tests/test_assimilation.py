import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sqgda.assimilation import (
    CAVEAT,
    TwinExperimentConfig,
    check_conditions,
    fit_decay_rate,
    parameter_sweep,
    prepare_reference,
    rho,
    richardson,
    run_twin,
    spin_up,
    theory_bounds,
)
from sqgda.dynamics import ForcingSpec, PhysicalParams
from sqgda.errors import ConfigurationError, FitError, InvalidInputError
from sqgda.io import write_csv
from sqgda.observation import RoughModal, make_operator
from sqgda.spectral import GridSpec, SpectralField, from_modes, hdot_norm, lambda_inv_pairing

G32 = GridSpec(32, 32)


# ------------------------------------------------------------------ fits


def test_fit_exact_exponential():
    t = np.round(np.arange(21) * 0.1, 12)
    f = fit_decay_rate(t, 3 * np.exp(-5 * t), window=(0, 2))
    assert abs(f.rate - 5.0) <= 1e-9 and abs(f.r_squared - 1) <= 1e-12 and not f.degenerate


def test_fit_constant_is_degenerate():
    f = fit_decay_rate(np.arange(20.0), np.full(20, 2.5))
    assert f.degenerate and f.rate == 0.0 and math.isnan(f.r_squared)


def test_fit_oscillating_exponential():
    t = np.linspace(0, 10, 401)
    f = fit_decay_rate(t, np.exp(-t) * (2 + np.cos(10 * t)), window=(0, 10))
    assert abs(f.rate - 1.0) <= 0.15 and f.r_squared < 1


def test_fit_default_window_uses_value_bounds():
    t = np.linspace(0, 30, 301)
    f = fit_decay_rate(t, np.exp(-t))
    assert 10 * math.log(10) * 0.2 - 0.2 <= f.t_start and f.t_end <= 10 * math.log(10) + 0.2
    assert abs(f.rate - 1) < 1e-9


def test_fit_errors():
    t = np.linspace(0, 1, 5)
    with pytest.raises(FitError):
        fit_decay_rate(t, np.exp(-t), window=(0, 1))
    with pytest.raises(FitError):
        fit_decay_rate(np.linspace(0, 1, 20), -np.exp(-np.linspace(0, 1, 20)), window=(0, 1))
    with pytest.raises(FitError):
        fit_decay_rate(np.arange(3.0), np.arange(4.0))


@settings(max_examples=40, deadline=None)
@given(rate=st.floats(0.05, 20), amp=st.floats(1e-3, 1e3))
def test_fit_recovers_any_rate(rate, amp):
    t = np.linspace(0, 5 / rate, 50)
    f = fit_decay_rate(t, amp * np.exp(-rate * t), window=(0, t[-1]))
    assert abs(f.rate / rate - 1) <= 1e-8


def test_richardson_cancels_quadratic_error():
    assert abs(richardson(1 + 0.1**2, 1 + 0.05**2) - 1) <= 1e-15


# ------------------------------------------------------------ conditions


def _bounds(mu=10.0, h=0.1, gamma=1.5, kappa=1.0, sigma=0.9, lp=(4.0, 8.0, math.inf)):
    p = PhysicalParams(kappa, gamma, mu, ForcingSpec.shell(0.05, (1, 0)))
    return theory_bounds(p, G32, h, 1.0, {q: 2.0 for q in lp}, sigma)


def test_r1_example():
    rep = check_conditions(_bounds())
    e = rep.get("r1")
    assert abs(e.value - 0.31623) < 1e-5 and e.satisfied
    assert "C = 1" in CAVEAT


def test_rho_piecewise():
    assert rho(0.1, 0.6, 1.5) == pytest.approx(0.1**1.2, rel=1e-14)
    assert rho(0.1, 0.8, 1.5) == pytest.approx(0.1**1.5, rel=1e-14)


def test_mu_zero_flags():
    b = _bounds(mu=0.0)
    rep = check_conditions(b)
    assert rep.get("r1").value == 0 and math.isinf(rep.get("r2(p=8)").value)


def test_inapplicable_p_is_marked():
    rep = check_conditions(_bounds(sigma=0.9, gamma=1.5))
    # 1 - 0.9 < 2/p < 0.5 admits p = 8 only
    assert rep.get("r2(p=4)").satisfied is None and math.isnan(rep.get("r2(p=4)").value)
    assert rep.get("r2(p=inf)").satisfied is None
    assert rep.get("r2(p=8)").satisfied is not None


def test_sigma_hypothesis_flagged():
    rep = check_conditions(_bounds(sigma=0.4, gamma=1.5))
    assert rep.get("sigma").satisfied is False


@settings(max_examples=40, deadline=None)
@given(mu=st.floats(0.1, 100), h=st.floats(0.01, 1), gamma=st.floats(1.05, 2))
def test_ratios_nonnegative(mu, h, gamma):
    b = _bounds(mu=mu, h=h, gamma=gamma, sigma=1.0)
    assert b.r1 >= 0 and b.mu_rho_ratio >= 0
    for p in b.theta_lp:
        r = b.r2(p)
        assert math.isnan(r) or r >= 0


# --------------------------------------------------------------- spin-up


def test_unforced_spin_up_decays():
    p = PhysicalParams(0.5, 1.5, 0.0, ForcingSpec())  # slowest mode decays like exp(-0.5 t)
    s = spin_up(p, G32, 20.0, dt=0.05)
    assert s.theta_l2 < 1e-3 * s.l2_series[0] and all(v < 1e-3 for v in s.theta_lp.values())


def test_linear_steady_state():
    kappa, gamma, A = 0.5, 1.5, 0.2
    p = PhysicalParams(kappa, gamma, 0.0, ForcingSpec((((2, 0), A, 0.0),)))
    s = spin_up(p, G32, 40.0, dt=0.05, theta0=SpectralField.zeros(G32), linear_only=True)
    amp = 2 * s.theta.coeffs[G32.index_of(2, 0)].real
    assert abs(amp - A / (kappa * 2**gamma)) <= 1e-10 * A
    assert s.stationary


def test_spin_up_rejects_bad_arguments():
    p = PhysicalParams(0.1, 1.5)
    with pytest.raises(InvalidInputError):
        spin_up(p, G32, 0.0)
    with pytest.raises(InvalidInputError):
        spin_up(p, G32, 1.0, tail_fraction=0.0)


# ----------------------------------------------------------------- twins


def _linear_cfg(mu, **kw):
    p = PhysicalParams(0.1, 1.5, mu, ForcingSpec())
    base = dict(
        grid=G32,
        params=p,
        observation=RoughModal(8),
        spin_up_time=0.0,
        assimilation_time=4.0,
        dt=0.005,
        eta0=from_modes(G32, [(2, 0, 1.0, 0.0)]),
        theta0=SpectralField.zeros(G32),
        linear_only=True,
        record_cadence=0.05,
    )
    base.update(kw)
    return TwinExperimentConfig(**base)


def test_twin_config_validation():
    with pytest.raises(ConfigurationError):
        _linear_cfg(1.0, assimilation_time=0.0)
    with pytest.raises(ConfigurationError):
        _linear_cfg(1.0, norms=())
    with pytest.raises(ConfigurationError):
        _linear_cfg(1.0, norms=("l2", "h7"))


def test_linear_nudged_rate_monotone_in_mu():
    rates = []
    for mu in (0.5, 1.0, 2.0, 3.0):
        d = run_twin(_linear_cfg(mu))
        fit = fit_decay_rate(d.times, d.series["err_l2"], window=(0.5, 3.0))
        assert abs(fit.rate - (0.1 * 2**1.5 + mu)) <= 1e-4 * fit.rate
        rates.append(fit.rate)
    assert np.all(np.diff(rates) > 0)


@pytest.fixture(scope="module")
def turbulent():
    p = PhysicalParams(0.01, 1.5, 10.0, ForcingSpec.shell(0.05, (3, 4)))
    grid = GridSpec(64, 64)
    cfg = TwinExperimentConfig(grid, p, RoughModal(16), spin_up_time=20.0, assimilation_time=10.0, seed=3)
    return cfg, prepare_reference(cfg)


def test_perfect_initialization_fixed_point(turbulent):
    cfg, ref = turbulent
    d = run_twin(replace(cfg, eta0=ref.theta, assimilation_time=3.0), ref)
    assert np.max(d.series["err_l2"]) <= 1e-10 * np.max(d.series["theta_l2"])


def test_norm_ordering_and_stream_identity(turbulent):
    cfg, ref = turbulent
    d = run_twin(cfg, ref)
    s = d.series
    assert len({len(v) for v in s.values()} | {len(d.times)}) == 1
    assert np.all(s["err_hminushalf"] <= s["err_l2"] * (1 + 1e-12))
    np.testing.assert_allclose(s["err_streamgrad"], s["err_hminushalf"], rtol=1e-12, atol=0)
    f = d.fits["err_l2"]
    assert d.times[0] <= f.t_start <= f.t_end <= d.times[-1] and 0 <= f.r_squared <= 1
    assert f.rate > 0
    z = d.final_state.eta - d.final_state.theta
    assert abs(math.sqrt(lambda_inv_pairing(z)) - hdot_norm(z, -0.5)) <= 1e-12 * hdot_norm(z, -0.5)


def test_unnudged_twin_does_not_synchronize(turbulent):
    cfg, ref = turbulent
    sw = parameter_sweep(cfg, [0.0], [16], reference=ref)
    row = sw.rows[0]
    assert not row.synchronized and row.final_relative_error > 1e-2
    assert sw.minimal_resolution() is None


def test_sweep_reproducible_and_parallel_consistent(turbulent, tmp_path):
    cfg, ref = turbulent
    short = replace(cfg, assimilation_time=3.0)
    a = parameter_sweep(short, [5.0, 10.0], [4, 16], reference=ref)
    b = parameter_sweep(short, [5.0, 10.0], [4, 16], reference=ref, threads=2)
    cols = list(a.rows[0].as_dict())
    pa = write_csv(tmp_path / "a.csv", cols, [r.as_dict() for r in a.rows])
    pb = write_csv(tmp_path / "b.csv", cols, [r.as_dict() for r in b.rows])
    assert pa.read_bytes() == pb.read_bytes()


def test_sweep_records_cell_failures(turbulent):
    cfg, ref = turbulent
    # dt * mu = 1 violates the nudging step guard; the sweep keeps going
    sw = parameter_sweep(replace(cfg, assimilation_time=1.0), [100.0], [16], reference=ref)
    assert "ConfigurationError" in sw.rows[0].failure and not sw.rows[0].synchronized


def test_sweep_rejects_empty_grids(turbulent):
    cfg, ref = turbulent
    with pytest.raises(InvalidInputError):
        parameter_sweep(cfg, [], [4], reference=ref)
