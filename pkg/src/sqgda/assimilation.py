"""Twin experiments: spin up a reference, nudge a second copy toward it, measure.

A reference theta is integrated until it has (heuristically) reached its
attractor.  The nudged field eta then starts from arbitrary data, typically
zero, and is driven by the coarse observations J_h theta.  The harness
records the error zeta = eta - theta in several norms, fits exponential
decay rates, and evaluates the sufficient conditions on (mu, h) with all
unspecified constants set to 1.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .dynamics import PhysicalParams, SimState, SQGModel, StepperConfig, run
from .errors import CFLError, ConfigurationError, DivergenceError, FitError, InvalidInputError
from .observation import ObservationOperator, make_operator
from .spectral import GridSpec, SpectralField, hdot_norm, l2_norm, lp_norm, random_field
from .streamfunction import gradient_error_exact

SYNC_THRESHOLD = 1e-6
STATIONARITY_TOL = 0.05
DEFAULT_LP = (4.0, 8.0, math.inf)
NORMS = ("l2", "hsigma", "hminushalf", "streamgrad")
SERIES_COLUMNS = ("err_l2", "err_hsigma", "err_hminushalf", "err_streamgrad", "theta_l2", "eta_l2")


def default_seed(grid: GridSpec, seed: int = 0, l2: float = 0.5) -> SpectralField:
    """Band-limited random initial condition used when none is supplied."""
    rng = np.random.default_rng(seed)
    return random_field(grid, rng, kmax=min(8, grid.kmax_dealiased), l2=l2)


# ------------------------------------------------------------------ fits


@dataclass(frozen=True)
class DecayFit:
    rate: float
    r_squared: float
    t_start: float
    t_end: float
    n_samples: int
    degenerate: bool = False


def fit_decay_rate(
    t,
    values,
    window: tuple[float, float] | None = None,
    rel_bounds: tuple[float, float] = (1e-10, 1e-2),
    min_samples: int = 10,
) -> DecayFit:
    """Least-squares fit of log(value) against t; the rate is minus the slope.

    By default the window is the set of samples whose value lies in
    ``rel_bounds`` times the initial value; an explicit ``window=(t0, t1)``
    selects by time instead.  A constant series returns rate 0 with the
    ``degenerate`` flag and an undefined (nan) R^2.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape or t.ndim != 1 or t.size == 0:
        raise FitError("time and value arrays must be 1-D and of equal length")
    if np.all(y == y[0]) or np.ptp(y) <= 1e-14 * abs(y[0]):
        return DecayFit(0.0, math.nan, float(t[0]), float(t[-1]), int(t.size), degenerate=True)
    if window is None:
        lo, hi = rel_bounds[0] * y[0], rel_bounds[1] * y[0]
        sel = (y >= lo) & (y <= hi)
    else:
        sel = (t >= window[0]) & (t <= window[1])
    if sel.sum() < min_samples:
        raise FitError(f"fit window holds {int(sel.sum())} samples, need >= {min_samples}")
    ts, ys = t[sel], y[sel]
    if np.any(ys <= 0):
        raise FitError("non-positive values inside the fit window")
    ly = np.log(ys)
    slope, icpt = np.polyfit(ts, ly, 1)
    resid = ly - (slope * ts + icpt)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else math.nan
    return DecayFit(float(-slope), float(min(max(r2, 0.0), 1.0)), float(ts[0]), float(ts[-1]), int(ts.size))


def richardson(coarse: float, fine: float, order: int = 2, ratio: float = 2.0) -> float:
    """Extrapolate two estimates at step sizes h and h / ratio."""
    f = ratio**order
    return (f * fine - coarse) / (f - 1.0)


# -------------------------------------------------------------- spin-up


@dataclass
class SpinUpResult:
    state: SimState
    times: np.ndarray
    l2_series: np.ndarray
    theta_l2: float  # sup of ||theta||_{L^2} over the tail
    theta_lp: dict  # p -> sup of ||theta||_{L^p} over the tail
    tail_start: float
    drift: float
    stationary: bool

    @property
    def theta(self) -> SpectralField:
        return self.state.theta


def spin_up(
    params: PhysicalParams,
    grid: GridSpec,
    t_spin: float,
    tail_fraction: float = 0.2,
    dt: float = 0.01,
    theta0: SpectralField | None = None,
    seed: int = 0,
    cadence: float = 0.25,
    lp_exponents: Sequence[float] = DEFAULT_LP,
    linear_only: bool = False,
) -> SpinUpResult:
    """Integrate the unnudged reference for ``t_spin`` time units.

    Theta_{L^2} and Theta_{L^p} are suprema over the trailing ``tail_fraction``
    of the run.  The run counts as stationary when the mean L^2 norm of the
    two halves of the tail differs by at most 5% of the tail mean.
    """
    if not t_spin > 0:
        raise InvalidInputError(f"spin-up time must be > 0, got {t_spin}")
    if not 0 < tail_fraction <= 1:
        raise InvalidInputError(f"tail_fraction must lie in (0, 1], got {tail_fraction}")
    ref_params = replace(params, mu=0.0)
    model = SQGModel(grid, ref_params, StepperConfig(dt, linear_only=linear_only))
    theta0 = default_seed(grid, seed) if theta0 is None else theta0
    state = model.initial_state(theta=theta0)

    tail_start = t_spin * (1.0 - tail_fraction)
    lp_sup = {float(p): 0.0 for p in lp_exponents}

    def track(s, _i):
        if s.time >= tail_start - 1e-12:
            for p in lp_sup:
                lp_sup[p] = max(lp_sup[p], lp_norm(s.theta, p))

    every = max(1, round(cadence / dt))
    sample = {"l2": lambda s: l2_norm(s.theta)}
    # L^p suprema are taken on the same cadence as the L^2 samples
    cb = lambda s, i: track(s, i) if i % every == 0 or s.time >= t_spin else None
    traj = run(model, state, t_spin, monitors=sample, every=every, callbacks=(cb,))
    t, l2 = traj.times, traj.series["l2"]
    tail = l2[t >= tail_start - 1e-12]
    half = len(tail) // 2
    mean = float(tail.mean())
    drift = abs(float(tail[half:].mean() - tail[:half].mean())) / mean if half > 0 and mean > 0 else 0.0
    return SpinUpResult(
        state=traj.state,
        times=t,
        l2_series=l2,
        theta_l2=float(tail.max()),
        theta_lp=lp_sup,
        tail_start=tail_start,
        drift=drift,
        stationary=drift <= STATIONARITY_TOL,
    )


# ------------------------------------------------------ theory / conditions


def rho(h: float, sigma: float, gamma: float) -> float:
    return h ** (2 * sigma) if sigma <= gamma / 2 else h**gamma


def lp_admissible(p: float, sigma: float, gamma: float) -> bool:
    """1 - sigma < 2/p < gamma - 1."""
    q = 0.0 if math.isinf(p) else 2.0 / p
    return 1.0 - sigma < q < gamma - 1.0


@dataclass
class TheoryBounds:
    kappa: float
    gamma: float
    mu: float
    h: float
    sigma: float
    F_H: float  # ||f||_{H^{-gamma/2}} / kappa
    F_Lp: dict
    theta_l2: float
    theta_lp: dict
    p_monitor: float = 8.0

    @property
    def rho(self) -> float:
        return rho(self.h, self.sigma, self.gamma)

    @property
    def r1(self) -> float:
        return self.mu * self.h**self.gamma / self.kappa

    @property
    def mu_rho_ratio(self) -> float:
        return self.mu * self.rho / self.kappa

    def applicable(self, p: float) -> bool:
        return lp_admissible(p, self.sigma, self.gamma)

    def xi(self, p: float) -> float:
        """(Theta_{L^p} / kappa)^{gamma / (gamma - 1 - 2/p)}, constant 1."""
        q = 0.0 if math.isinf(p) else 2.0 / p
        return (self.theta_lp[p] / self.kappa) ** (self.gamma / (self.gamma - 1.0 - q))

    def r2(self, p: float | None = None) -> float:
        """(kappa / mu) Xi; nan when p violates 1 - sigma < 2/p < gamma - 1."""
        p = self.p_monitor if p is None else p
        if p not in self.theta_lp or not self.applicable(p):
            return math.nan
        if self.mu == 0:
            return math.inf
        return self.kappa / self.mu * self.xi(p)


def theory_bounds(
    params: PhysicalParams,
    grid: GridSpec,
    h: float,
    theta_l2: float,
    theta_lp: Mapping[float, float],
    sigma: float,
    p_monitor: float = 8.0,
) -> TheoryBounds:
    f = params.forcing.to_field(grid)
    k = params.kappa
    return TheoryBounds(
        kappa=k,
        gamma=params.gamma,
        mu=params.mu,
        h=h,
        sigma=sigma,
        F_H=hdot_norm(f, -params.gamma / 2) / k,
        F_Lp={p: lp_norm(f, p) / k for p in theta_lp},
        theta_l2=theta_l2,
        theta_lp=dict(theta_lp),
        p_monitor=p_monitor,
    )


CAVEAT = (
    "thresholds use reference constant C = 1; the sufficient conditions hold "
    "for unspecified absolute constants, so a flag is indicative only"
)


@dataclass(frozen=True)
class ConditionEntry:
    name: str
    value: float
    satisfied: bool | None  # None when the condition does not apply
    note: str = ""


@dataclass
class ConditionReport:
    entries: list
    caveat: str = CAVEAT

    def get(self, name: str) -> ConditionEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {e.name: {"value": e.value, "satisfied": e.satisfied, "note": e.note} for e in self.entries}


def check_conditions(bounds: TheoryBounds) -> ConditionReport:
    """Evaluate mu h^gamma / kappa, mu rho / kappa and r2 against threshold 1."""
    b = bounds
    entries = [
        ConditionEntry("r1", b.r1, b.r1 <= 1.0, "mu h^gamma / kappa <= 1"),
        ConditionEntry("mu_rho", b.mu_rho_ratio, b.mu_rho_ratio <= 1.0, "mu rho(h, sigma, gamma) / kappa <= 1"),
    ]
    if b.sigma <= 2 - b.gamma:
        entries.append(ConditionEntry("sigma", b.sigma, False, f"sigma must exceed 2 - gamma = {2 - b.gamma:g}"))
    for p in b.theta_lp:
        name = f"r2(p={p:g})"
        if not b.applicable(p):
            entries.append(ConditionEntry(name, math.nan, None, "inapplicable: needs 1 - sigma < 2/p < gamma - 1"))
            continue
        v = b.r2(p)
        entries.append(ConditionEntry(name, v, bool(v <= 1.0), "(kappa/mu)(Theta_Lp/kappa)^(gamma/(gamma-1-2/p)) <= 1"))
    return ConditionReport(entries)


# ------------------------------------------------------------ twin runs


@dataclass
class TwinExperimentConfig:
    grid: GridSpec
    params: PhysicalParams
    observation: ObservationOperator
    spin_up_time: float = 50.0
    assimilation_time: float = 30.0
    dt: float = 0.01
    eta0: object = "zero"  # "zero" | "random" | SpectralField
    record_cadence: float = 0.1
    norms: tuple = NORMS
    sigma: float = 0.9
    seed: int = 0
    tail_fraction: float = 0.2
    linear_only: bool = False
    theta0: SpectralField | None = None  # spin-up seed; used as-is when spin_up_time == 0
    p_monitor: float = 8.0

    def __post_init__(self):
        if not self.assimilation_time > 0:
            raise ConfigurationError(f"assimilation time must be > 0, got {self.assimilation_time}")
        if not self.spin_up_time >= 0:
            raise ConfigurationError(f"spin-up time must be >= 0, got {self.spin_up_time}")
        if not self.norms:
            raise ConfigurationError("norm list must be non-empty")
        bad = set(self.norms) - set(NORMS)
        if bad:
            raise ConfigurationError(f"unknown norms {sorted(bad)}; expected a subset of {NORMS}")
        if not self.record_cadence > 0:
            raise ConfigurationError("record cadence must be > 0")
        if isinstance(self.eta0, str) and self.eta0 not in ("zero", "random"):
            raise ConfigurationError(f"eta0 policy must be 'zero', 'random' or a field, got {self.eta0!r}")

    @property
    def sigma_admissible(self) -> bool:
        return self.sigma > 2 - self.params.gamma


@dataclass
class SyncDiagnostics:
    times: np.ndarray
    series: dict  # SERIES_COLUMNS -> arrays (requested norms only, plus theta_l2 / eta_l2)
    fits: dict  # norm column -> DecayFit or None
    bounds: TheoryBounds
    conditions: ConditionReport
    final_relative_error: float
    synchronized: bool
    spin: SpinUpResult | None = None
    failed: bool = False
    failure: str = ""
    final_state: SimState | None = None

    @property
    def relative_error(self) -> np.ndarray:
        return self.series["err_l2"] / self.series["theta_l2"]

    def columns(self) -> list[str]:
        return ["t"] + [c for c in SERIES_COLUMNS if c in self.series]


def prepare_reference(cfg: TwinExperimentConfig) -> SpinUpResult:
    """Spin-up for ``cfg`` or, when its spin-up time is 0, wrap the supplied seed."""
    if cfg.spin_up_time > 0:
        return spin_up(
            cfg.params,
            cfg.grid,
            cfg.spin_up_time,
            tail_fraction=cfg.tail_fraction,
            dt=cfg.dt,
            theta0=cfg.theta0,
            seed=cfg.seed,
            linear_only=cfg.linear_only,
        )
    theta = default_seed(cfg.grid, cfg.seed) if cfg.theta0 is None else cfg.theta0
    model = SQGModel(cfg.grid, replace(cfg.params, mu=0.0), StepperConfig(cfg.dt))
    state = model.initial_state(theta=theta)
    n2 = l2_norm(state.theta)
    return SpinUpResult(
        state=state,
        times=np.array([0.0]),
        l2_series=np.array([n2]),
        theta_l2=n2,
        theta_lp={p: lp_norm(state.theta, p) for p in DEFAULT_LP},
        tail_start=0.0,
        drift=0.0,
        stationary=True,
    )


def _initial_eta(cfg: TwinExperimentConfig, theta: SpectralField) -> SpectralField:
    if isinstance(cfg.eta0, SpectralField):
        return cfg.eta0
    if cfg.eta0 == "zero":
        return SpectralField.zeros(cfg.grid)
    rng = np.random.default_rng(cfg.seed + 1)
    return random_field(cfg.grid, rng, kmax=min(8, cfg.grid.kmax_dealiased), l2=max(l2_norm(theta), 1e-12))


def _monitors(cfg: TwinExperimentConfig) -> dict:
    def err(s):
        return s.eta - s.theta

    mons = {}
    for name in cfg.norms:
        if name == "l2":
            mons["err_l2"] = lambda s: l2_norm(err(s))
        elif name == "hsigma":
            mons["err_hsigma"] = lambda s: hdot_norm(err(s), cfg.sigma)
        elif name == "hminushalf":
            mons["err_hminushalf"] = lambda s: hdot_norm(err(s), -0.5)
        elif name == "streamgrad":
            mons["err_streamgrad"] = lambda s: math.sqrt(gradient_error_exact(err(s)))
    mons.setdefault("err_l2", lambda s: l2_norm(err(s)))
    mons["theta_l2"] = lambda s: l2_norm(s.theta)
    mons["eta_l2"] = lambda s: l2_norm(s.eta)
    return mons


def run_twin(cfg: TwinExperimentConfig, reference: SpinUpResult | None = None) -> SyncDiagnostics:
    """Co-integrate reference and nudged fields and summarize synchronization.

    CFL or divergence failures do not raise: the diagnostics then cover the
    recorded part of the run and carry ``failed=True``.
    """
    spin = reference if reference is not None else prepare_reference(cfg)
    theta = spin.state.theta
    model = SQGModel(cfg.grid, cfg.params, StepperConfig(cfg.dt, linear_only=cfg.linear_only), cfg.observation)
    state = model.initial_state(theta=theta, eta=_initial_eta(cfg, theta), time=0.0)
    every = max(1, round(cfg.record_cadence / cfg.dt))
    traj = run(model, state, cfg.assimilation_time, monitors=_monitors(cfg), every=every, raise_on_failure=False)

    fits = {}
    for col, vals in traj.series.items():
        if not col.startswith("err_"):
            continue
        try:
            fits[col] = fit_decay_rate(traj.times, vals)
        except FitError:
            fits[col] = None
    rel = traj.series["err_l2"] / np.maximum(traj.series["theta_l2"], 1e-300)
    final = float(rel[-1])
    bounds = theory_bounds(cfg.params, cfg.grid, cfg.observation.h, spin.theta_l2, spin.theta_lp, cfg.sigma, cfg.p_monitor)
    return SyncDiagnostics(
        times=traj.times,
        series=traj.series,
        fits=fits,
        bounds=bounds,
        conditions=check_conditions(bounds),
        final_relative_error=final,
        synchronized=(not traj.failed) and final < SYNC_THRESHOLD,
        spin=spin,
        failed=traj.failed,
        failure="" if traj.error is None else f"{type(traj.error).__name__}: {traj.error}",
        final_state=traj.state,
    )


# ---------------------------------------------------------------- sweeps

SWEEP_COLUMNS = ("mu", "resolution", "h", "rho", "r1", "r2", "fitted_rate", "r_squared", "synchronized")


@dataclass(frozen=True)
class SweepRow:
    mu: float
    resolution: int
    h: float
    rho: float
    r1: float
    r2: float
    fitted_rate: float
    r_squared: float
    synchronized: bool
    final_relative_error: float = math.nan
    failure: str = ""

    def as_dict(self) -> dict:
        return {c: getattr(self, c) for c in SWEEP_COLUMNS}


@dataclass
class SweepResult:
    gamma: float
    rows: list
    theta_inf: float
    kappa: float

    def minimal_resolution(self, mu: float | None = None) -> int | None:
        """Smallest synchronizing resolution for ``mu`` (default: the largest mu swept)."""
        mu = max(r.mu for r in self.rows) if mu is None else mu
        ok = sorted(r.resolution for r in self.rows if r.mu == mu and r.synchronized)
        return ok[0] if ok else None

    @property
    def scaling_reference(self) -> float:
        """(Theta_inf / kappa)^{1 / (gamma - 1)}, reported alongside the measured minimum."""
        return (self.theta_inf / self.kappa) ** (1.0 / (self.gamma - 1.0))


def _sweep_cell(args) -> SweepRow:
    cfg, spin, mu, n, kind = args
    op = make_operator(kind, n, cfg.grid)
    params = replace(cfg.params, mu=mu)
    cell = replace(cfg, params=params, observation=op)
    rate, r2 = math.nan, math.nan
    try:
        d = run_twin(cell, spin)
    except (ConfigurationError, InvalidInputError, CFLError, DivergenceError) as err:
        b = theory_bounds(params, cfg.grid, op.h, spin.theta_l2, spin.theta_lp, cfg.sigma, cfg.p_monitor)
        return SweepRow(mu, n, op.h, b.rho, b.r1, b.r2(), rate, r2, False, math.nan, f"{type(err).__name__}: {err}")
    fit = d.fits.get("err_l2")
    if fit is not None:
        rate, r2 = fit.rate, fit.r_squared
    b = d.bounds
    return SweepRow(mu, n, op.h, b.rho, b.r1, b.r2(), rate, r2, d.synchronized, d.final_relative_error, d.failure)


def parameter_sweep(
    base: TwinExperimentConfig,
    mus: Sequence[float],
    resolutions: Sequence[int],
    kind: str = "rough_modal",
    threads: int = 1,
    reference: SpinUpResult | None = None,
) -> SweepResult:
    """Run one twin per (mu, resolution) cell against a shared reference."""
    if not mus or not resolutions:
        raise InvalidInputError("sweep grids must be non-empty")
    spin = reference if reference is not None else prepare_reference(base)
    cells = [(base, spin, float(m), int(n), kind) for m in mus for n in sorted(resolutions)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=min(threads, os.cpu_count() or 1)) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    theta_inf = spin.theta_lp.get(math.inf, max(spin.theta_lp.values(), default=math.nan))
    return SweepResult(base.params.gamma, rows, float(theta_inf), base.params.kappa)


def gamma_sweep(
    base: TwinExperimentConfig,
    gammas: Sequence[float],
    mus: Sequence[float],
    resolutions: Sequence[int],
    kind: str = "rough_modal",
    threads: int = 1,
) -> dict:
    """One spin-up and one parameter sweep per dissipation exponent."""
    out = {}
    for gamma in gammas:
        cfg = replace(base, params=replace(base.params, gamma=float(gamma)))
        out[float(gamma)] = parameter_sweep(cfg, mus, resolutions, kind, threads)
    return out
