"""Time integration of the forced dissipative SQG equation and its nudged twin.

    d_t theta + kappa Lambda^gamma theta + u . grad theta = f,              u = R^perp theta
    d_t eta   + kappa Lambda^gamma eta   + v . grad eta   = f - mu J_h(eta - theta)

The stiff term kappa |k|^gamma is integrated exactly by the factor
exp(-kappa |k|^gamma dt), and so is the time-independent forcing, so a linear
forced run sits exactly on its fixed point f / (kappa |k|^gamma).  Advection
and nudging enter a two-stage (Heun) integrating-factor scheme.  Reference and nudged fields are advanced
together so the observation J_h theta is available at both stage times.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import CFLError, ConfigurationError, DivergenceError, InvalidInputError
from .observation import ObservationOperator
from .spectral import GridSpec, SpectralField, from_modes


@dataclass(frozen=True)
class ForcingSpec:
    """Time-independent forcing ``sum amp * cos(k.x + phase)``."""

    modes: tuple = ()  # ((k1, k2), amp, phase) triples

    def __post_init__(self):
        for (k1, k2), _, _ in self.modes:
            if k1 == 0 and k2 == 0:
                raise InvalidInputError("forcing may not contain the k = 0 mode")

    @classmethod
    def shell(cls, amplitude: float, kf: tuple[int, int] = (1, 2)) -> "ForcingSpec":
        """f = A [cos(kf.x) + sin(kf_perp.x)] with kf_perp = (-kf2, kf1)."""
        k1, k2 = kf
        return cls((((k1, k2), amplitude, 0.0), ((-k2, k1), amplitude, -np.pi / 2)))

    @property
    def is_zero(self) -> bool:
        return all(a == 0 for _, a, _ in self.modes)

    def to_field(self, grid: GridSpec) -> SpectralField:
        for (k1, k2), _, _ in self.modes:
            if abs(k1) > grid.nx / 3 or abs(k2) > grid.ny / 3:
                raise ConfigurationError(f"forcing mode ({k1}, {k2}) lies outside the dealiased band")
        f = from_modes(grid, [(k1, k2, a, ph) for (k1, k2), a, ph in self.modes])
        return SpectralField(grid, f.coeffs, True)


@dataclass(frozen=True)
class PhysicalParams:
    kappa: float
    gamma: float
    mu: float = 0.0
    forcing: ForcingSpec = field(default_factory=ForcingSpec)

    def __post_init__(self):
        if not self.kappa > 0:
            raise ConfigurationError(f"kappa must be > 0, got {self.kappa}")
        if not 0 < self.gamma <= 2:
            raise ConfigurationError(f"gamma must lie in the admissible range (0, 2], got {self.gamma}")
        if not self.mu >= 0:
            raise ConfigurationError(f"mu must be >= 0, got {self.mu}")
        if self.gamma <= 1:
            warnings.warn(f"gamma = {self.gamma} is not subcritical (gamma <= 1)", stacklevel=2)

    @property
    def subcritical(self) -> bool:
        return self.gamma > 1


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    scheme: str = "ifrk2"
    linear_only: bool = False
    cfl_max: float = 0.5

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        if self.scheme != "ifrk2":
            raise ConfigurationError(f"unknown scheme {self.scheme!r} (only 'ifrk2')")


@dataclass(frozen=True, eq=False)
class SimState:
    time: float
    theta: SpectralField | None
    eta: SpectralField | None
    params: PhysicalParams
    stepper: StepperConfig


class SQGModel:
    """Precomputed operators for stepping one parameter set on one grid."""

    def __init__(
        self,
        grid: GridSpec,
        params: PhysicalParams,
        stepper: StepperConfig,
        observation: ObservationOperator | None = None,
    ):
        if params.mu * stepper.dt > 0.5:
            raise ConfigurationError(
                f"explicit nudging needs dt * mu <= 0.5 (dt = {stepper.dt}, mu = {params.mu})"
            )
        if params.mu > 0 and observation is None:
            raise ConfigurationError("mu > 0 requires an observation operator")
        self.grid = grid
        self.params = params
        self.stepper = stepper
        self.observation = observation
        g = grid
        self.linear = params.kappa * g.kabs**params.gamma
        self._factors = {}
        self.forcing = params.forcing.to_field(g).coeffs
        self.mask = g.dealias_mask.astype(float)
        self.mask[0, 0] = 0.0
        scale = (g._phase * g.npoints)[:, : g.nxh]
        # u1, u2, d/dx, d/dy multipliers on the half-plane, grid phase folded in
        self._adv_mult = np.stack(
            (-g.ik2 * g.kabs_inv, g.ik1 * g.kabs_inv, g.ik1, g.ik2)
        )[:, :, : g.nxh] * scale
        self.kmax = g.kmax_dealiased
        self.last_cfl = 0.0

    def factor(self, dt: float) -> np.ndarray:
        return self._step_operators(dt)[0]

    def _step_operators(self, dt: float) -> tuple[np.ndarray, np.ndarray]:
        """exp(-L dt) and the exact forcing increment (1 - exp(-L dt)) f / L."""
        ops = self._factors.get(dt)
        if ops is None:
            e = np.exp(-self.linear * dt)
            safe = np.where(self.linear > 0, self.linear, 1.0)
            phi = np.where(self.linear > 0, -np.expm1(-self.linear * dt) / safe, dt)
            ops = (e, phi * self.forcing)
            self._factors[dt] = ops
        return ops

    def initial_state(self, theta=None, eta=None, time: float = 0.0) -> SimState:
        clean = lambda f: None if f is None else SpectralField(self.grid, f.coeffs * self.mask, True)
        return SimState(time, clean(theta), clean(eta), self.params, self.stepper)

    # -- right-hand sides -------------------------------------------------

    def advection(self, c: np.ndarray) -> tuple[np.ndarray, float]:
        """Dealiased u . grad(phi) for coefficients c, plus max |u| on the grid."""
        g = self.grid
        phys = g.inverse_half(self._adv_mult * c[None, :, : g.nxh])
        prod = phys[0] * phys[2] + phys[1] * phys[3]
        umax = float(np.sqrt(np.max(phys[0] ** 2 + phys[1] ** 2)))
        return g.forward_real(prod) * self.mask, umax

    def _rhs(self, c: np.ndarray) -> tuple[np.ndarray, float]:
        # the time-independent forcing is integrated exactly in ``step``
        if self.stepper.linear_only:
            return np.zeros_like(c), 0.0
        adv, umax = self.advection(c)
        return -adv, umax

    def _nudge(self, eta: np.ndarray, theta: np.ndarray) -> np.ndarray:
        jz = self.observation.apply_coeffs(eta - theta, self.grid)
        return -self.params.mu * (jz * self.mask)

    def _rhs_pair(self, th, et):
        rt, ut = (None, 0.0) if th is None else self._rhs(th)
        if et is None:
            return rt, None, ut
        re, ue = self._rhs(et)
        if self.params.mu > 0:
            re = re + self._nudge(et, th)
        return rt, re, max(ut, ue)

    # -- stepping -----------------------------------------------------------

    def step(self, state: SimState, dt: float | None = None) -> SimState:
        """One integrating-factor Heun step; returns a new state.

        Dissipation and the constant forcing are integrated exactly; Heun's
        rule handles advection and nudging.
        """
        dt = self.stepper.dt if dt is None else dt
        th = None if state.theta is None else state.theta.coeffs
        et = None if state.eta is None else state.eta.coeffs
        if th is None and et is None:
            raise InvalidInputError("state carries no field to advance")
        if et is not None and th is None and self.params.mu > 0:
            raise InvalidInputError("nudged run needs the reference field")
        e, ff = self._step_operators(dt)

        r1t, r1e, umax = self._rhs_pair(th, et)
        cfl = dt * umax * self.kmax
        self.last_cfl = cfl
        if cfl > self.stepper.cfl_max:
            raise CFLError(
                f"CFL {cfl:.3f} > {self.stepper.cfl_max} at t = {state.time:.6g} (max|u| = {umax:.4g})",
                state.time,
                cfl,
            )
        pt = None if th is None else e * (th + dt * r1t) + ff
        pe = None if et is None else e * (et + dt * r1e) + ff
        r2t, r2e, _ = self._rhs_pair(pt, pe)
        nt = None if th is None else (e * (th + 0.5 * dt * r1t) + 0.5 * dt * r2t + ff) * self.mask
        ne = None if et is None else (e * (et + 0.5 * dt * r1e) + 0.5 * dt * r2e + ff) * self.mask

        for c in (nt, ne):
            if c is not None and not np.all(np.isfinite(c)):
                raise DivergenceError(f"non-finite coefficients after t = {state.time:.6g}", state.time)
        wrap = lambda c: None if c is None else SpectralField(self.grid, c, True)
        return replace(state, time=state.time + dt, theta=wrap(nt), eta=wrap(ne))


def l2_apriori_bound(params: PhysicalParams, theta0: SpectralField, grid: GridSpec, slack: float = 0.05) -> float:
    """max(||theta0||_{L^2}, ||f||_{H^{-gamma/2}} / kappa) * (1 + slack), constant taken as 1."""
    from .spectral import hdot_norm, l2_norm

    f = params.forcing.to_field(grid)
    return max(l2_norm(theta0), hdot_norm(f, -params.gamma / 2) / params.kappa) * (1 + slack)


def nonlinear_term(theta: SpectralField) -> SpectralField:
    """Dealiased pseudo-spectral u . grad(theta) with u = R^perp theta."""
    from .spectral import _require_mean_zero

    _require_mean_zero(theta, "nonlinear_term")
    model = SQGModel(theta.grid, PhysicalParams(1.0, 2.0), StepperConfig(1.0))
    adv, _ = model.advection(theta.coeffs * model.mask)
    return SpectralField(theta.grid, adv, True)


@dataclass
class Trajectory:
    """Recorded monitor series and the final state of a run."""

    times: np.ndarray
    series: dict
    state: SimState
    steps: int
    failed: bool = False
    error: Exception | None = None


Monitor = Callable[[SimState], float]


def run(
    model: SQGModel,
    state: SimState,
    t_end: float,
    monitors: Mapping[str, Monitor] | None = None,
    every: int = 1,
    callbacks: Sequence[Callable[[SimState, int], None]] = (),
    raise_on_failure: bool = True,
) -> Trajectory:
    """Step from ``state.time`` to ``t_end``, sampling monitors every ``every`` steps.

    On CFL or divergence failure the partial trajectory is attached to the
    exception (``err.partial``) or, with ``raise_on_failure=False``, returned
    with ``failed=True``.
    """
    if not t_end > state.time:
        raise InvalidInputError(f"t_end = {t_end} must exceed the current time {state.time}")
    monitors = dict(monitors or {})
    dt = model.stepper.dt
    t0 = state.time
    span = t_end - t0
    n_full = math.floor(span / dt + 1e-9)
    rem = span - n_full * dt
    if rem <= 1e-9 * max(span, 1.0):
        rem = 0.0
    n_total = n_full + (1 if rem > 0 else 0)

    times, values = [], {k: [] for k in monitors}

    def record(s):
        times.append(s.time)
        for k, fn in monitors.items():
            values[k].append(fn(s))

    def pack(s, i, failed=False, err=None):
        return Trajectory(
            times=np.array(times),
            series={k: np.array(v) for k, v in values.items()},
            state=s,
            steps=i,
            failed=failed,
            error=err,
        )

    record(state)
    for cb in callbacks:
        cb(state, 0)
    i = 0
    try:
        for i in range(1, n_total + 1):
            if i <= n_full:
                state = model.step(state)
                state = replace(state, time=t0 + i * dt)
            else:
                state = model.step(state, dt=rem)
                state = replace(state, time=t_end)
            if i % every == 0 or i == n_total:
                record(state)
            for cb in callbacks:
                cb(state, i)
    except (CFLError, DivergenceError) as err:
        traj = pack(state, i - 1, True, err)
        if raise_on_failure:
            err.partial = traj
            raise
        return traj
    return pack(state, n_total)
