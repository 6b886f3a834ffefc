"""Empirical check of the approximation properties of an interpolant family.

For a family of operators J_h at several resolutions h, every property is
turned into a ratio curve r(h) = lhs / rhs, taken as the supremum over the
supplied test fields together with a few resolution-scale probe fields
(oscillations at the scale h and concentrated kernels, which saturate the
bounds so that the fitted exponents are not flattered by overly smooth data).
A least-squares fit of log r against log h gives the exponent.

Property ids:

    0.1        ||J phi||_{L^2}            <= C ||phi||_{L^2}           (C stable across h)
    0.2(p)     ||J phi||_{L^p}            <= C h^{2/p-1} ||phi||_{L^2}
    0.3(b)     ||J phi||_{H^b}            <= C h^{-b} ||phi||_{L^2}
    1.1(b)     ||phi - J phi||_{L^2}      <= C h^b ||phi||_{H^b}
    1.2(b)     ||phi - J phi||_{H^-b}     <= C h^b ||phi||_{L^2}
    2.1(a,b)   ||phi - J phi||_{H^a}      <= C h^(b-a) ||phi||_{H^b}   (modal only)
    2.2(b)     ||Lambda^b J phi - J Lambda^b phi||_{L^2} <= 1e-10   (modal only)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .observation import (
    ObservationOperator,
    PartitionOfUnity,
    RoughModal,
    SmoothModal,
    VolumeAverage,
    make_operator,
)
from .spectral import (
    GridSpec,
    SpectralField,
    from_modes,
    fractional_power,
    hdot_norm,
    is_mean_zero,
    l2_norm,
    lp_norm,
    project_mean_zero,
)

COMMUTATOR_TOL = 1e-10


@dataclass(frozen=True)
class PropertySuiteConfig:
    tol: float = 0.15
    lp_exponents: tuple = (4.0,)
    betas_base: tuple = (0.5, 1.0, 1.5)  # orders for 0.3 and 2.2
    betas_type1: tuple = (0.5, 1.0)
    alpha_beta: tuple = ((0.0, 1.0), (0.5, 1.5))
    use_probes: bool = True
    constant_variation: float = 2.0


@dataclass
class PropertyRecord:
    property_id: str
    h: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    ratio: np.ndarray
    fitted_slope: float
    fitted_constant: float
    passed: bool
    criterion: str

    def rows(self) -> list[dict]:
        return [
            dict(
                property_id=self.property_id,
                h=float(h),
                lhs=float(a),
                rhs=float(b),
                ratio=float(r),
                fitted_slope=self.fitted_slope,
                fitted_constant=self.fitted_constant,
                passed=self.passed,
            )
            for h, a, b, r in zip(self.h, self.lhs, self.rhs, self.ratio)
        ]


@dataclass
class PropertyReport:
    kind: str
    records: list = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.records)

    def get(self, property_id: str) -> PropertyRecord:
        for r in self.records:
            if r.property_id == property_id:
                return r
        raise KeyError(property_id)

    def ids(self) -> list[str]:
        return [r.property_id for r in self.records]

    def rows(self) -> list[dict]:
        return [row for r in self.records for row in r.rows()]

    def summary(self) -> str:
        lines = [f"property suite for {self.kind}:"]
        for r in self.records:
            lines.append(
                f"  {r.property_id:<14} slope {r.fitted_slope:+.3f}  C {r.fitted_constant:.3g}  "
                f"{'pass' if r.passed else 'FAIL'}  ({r.criterion})"
            )
        return "\n".join(lines)


def fit_power_law(h: np.ndarray, ratio: np.ndarray) -> tuple[float, float]:
    """Least-squares fit ratio ~ C h^s; returns (s, C)."""
    h = np.asarray(h, dtype=float)
    r = np.asarray(ratio, dtype=float)
    if np.any(r <= 0):
        # exact zeros (e.g. a field fully resolved at every h) carry no slope information
        r = np.maximum(r, np.finfo(float).tiny)
    s, c = np.polyfit(np.log(h), np.log(r), 1)
    return float(s), float(math.exp(c))


# ---------------------------------------------------------------- probes


def _volume_probes(pou: PartitionOfUnity) -> list[SpectralField]:
    g = pou.grid
    s = math.isqrt(pou.n)  # oscillation with half-period h, zeros on the square edges
    ph = s * np.pi - np.pi / 2
    fields = [
        from_modes(g, [(s, 0, 1.0, ph)]),
        from_modes(g, [(s, s, 0.5, 2 * ph), (s, -s, -0.5, 0.0)]),
        project_mean_zero(pou.psi_tilde(0)),
    ]
    return fields


def _modal_probes(op, g: GridSpec) -> list[SpectralField]:
    kmax = g.kmax_dealiased
    mult = op.multiplier(g)
    if isinstance(op, RoughModal):
        beyond, inside = op.n + 1, op.n
    else:
        beyond, inside = 2**op.n, 2 ** (op.n - 1)
    fields = []
    if beyond <= kmax:
        fields.append(from_modes(g, [(beyond, 0, 1.0, 0.0)]))
    if inside <= kmax:
        fields.append(from_modes(g, [(inside, inside if isinstance(op, RoughModal) else 0, 1.0, 0.0)]))
    kernel = mult * g.dealias_mask
    kernel[0, 0] = 0.0
    if np.any(kernel):
        fields.append(SpectralField(g, kernel.astype(complex), True))
    return fields


def resolution_probes(op: ObservationOperator, grid: GridSpec) -> list[SpectralField]:
    """Mean-zero fields that saturate the property bounds at the operator's scale."""
    if isinstance(op, VolumeAverage):
        return _volume_probes(op.partition)
    if isinstance(op, (RoughModal, SmoothModal)):
        return _modal_probes(op, grid)
    return []


# ------------------------------------------------------------ evaluation


def _validate_fields(fields: Sequence[SpectralField], grid: GridSpec):
    if not fields:
        raise InvalidInputError("at least one test field is required")
    for f in fields:
        if f.grid != grid:
            raise InvalidInputError("test fields must live on the operators' grid")
        if not is_mean_zero(f):
            raise InvalidInputError("test fields must be mean-zero")
        amp = np.abs(f.coeffs)
        if np.any(amp[~grid.dealias_mask] > 1e-12 * max(amp.max(), 1e-300)):
            raise InvalidInputError("test fields must be band-limited inside the dealiasing cutoff")


def _quantities(op: ObservationOperator, phi: SpectralField, cfg: PropertySuiteConfig, modal: bool) -> dict:
    """lhs / rhs pairs of every property for one operator and one field."""
    jphi = op.apply(phi)
    res = project_mean_zero(phi - jphi)  # mean of phi - J phi vanishes up to rounding
    n2 = l2_norm(phi)
    q = {"0.1": (l2_norm(jphi), n2)}
    for p in cfg.lp_exponents:
        q[f"0.2(p={p:g})"] = (lp_norm(jphi, p), n2)
    for b in cfg.betas_base:
        q[f"0.3(beta={b:g})"] = (hdot_norm(jphi, b), n2)
    for b in cfg.betas_type1:
        q[f"1.1(beta={b:g})"] = (l2_norm(res), hdot_norm(phi, b))
        q[f"1.2(beta={b:g})"] = (hdot_norm(res, -b), n2)
    if modal:
        for a, b in cfg.alpha_beta:
            q[f"2.1(alpha={a:g},beta={b:g})"] = (hdot_norm(res, a), hdot_norm(phi, b))
        for b in cfg.betas_base:
            lhs = op.apply(fractional_power(phi, b)) - fractional_power(jphi, b)
            q[f"2.2(beta={b:g})"] = (l2_norm(lhs), n2)
    return q


def _expected(pid: str, cfg: PropertySuiteConfig) -> tuple[str, float | None]:
    """(rule, exponent) for the pass criterion of a property id."""
    head, _, arg = pid.partition("(")
    params = dict(kv.split("=") for kv in arg.rstrip(")").split(",")) if arg else {}
    params = {k: float(v) for k, v in params.items()}
    if head == "0.1":
        return "stable", None
    if head == "0.2":
        return "slope>=", 2.0 / params["p"] - 1.0
    if head == "0.3":
        return "slope>=", -params["beta"]
    if head in ("1.1", "1.2"):
        return "slope>=", params["beta"]
    if head == "2.1":
        return "slope>=", params["beta"] - params["alpha"]
    if head == "2.2":
        return "exact", None
    raise KeyError(pid)


def verify_properties(
    ops: Sequence[ObservationOperator],
    fields: Sequence[SpectralField],
    config: PropertySuiteConfig | None = None,
) -> PropertyReport:
    """Run the property suite over a family of operators of one kind.

    ``ops`` must contain at least 4 distinct resolutions; ``fields`` are
    mean-zero, band-limited test fields on the operators' grid.
    """
    cfg = config or PropertySuiteConfig()
    ops = list(ops)
    hs = np.array([op.h for op in ops], dtype=float)
    if len(np.unique(hs)) < 4:
        raise InvalidInputError(f"need at least 4 distinct resolutions, got h = {sorted(set(hs))}")
    kinds = {op.kind for op in ops}
    if len(kinds) != 1:
        raise InvalidInputError(f"operators must share one kind, got {sorted(kinds)}")
    kind = kinds.pop()
    grid = fields[0].grid if fields else None
    _validate_fields(fields, grid)
    modal = all(op.is_diagonal() for op in ops)

    order = np.argsort(hs)
    table: dict[str, list] = {}
    for i in order:
        op = ops[i]
        probe = resolution_probes(op, grid) if cfg.use_probes else []
        best: dict[str, tuple] = {}
        for phi in list(fields) + probe:
            for pid, (lhs, rhs) in _quantities(op, phi, cfg, modal).items():
                # 2.2 is an absolute commutator bound; everything else is a ratio
                r = lhs if pid.startswith("2.2") else (lhs / rhs if rhs > 0 else 0.0)
                if pid not in best or r > best[pid][2]:
                    best[pid] = (lhs, rhs, r)
        for pid, v in best.items():
            table.setdefault(pid, []).append((hs[i],) + v)

    report = PropertyReport(kind)
    for pid, rows in table.items():
        h, lhs, rhs, ratio = (np.array(c) for c in zip(*rows))
        slope, const = fit_power_law(h, ratio)
        rule, expo = _expected(pid, cfg)
        if rule == "stable":
            var = ratio.max() / ratio.min() if ratio.min() > 0 else np.inf
            passed = bool(np.isfinite(const) and var < cfg.constant_variation)
            crit = f"max/min of C = {var:.3g} < {cfg.constant_variation:g}"
        elif rule == "exact":
            passed = bool(ratio.max() <= COMMUTATOR_TOL)
            crit = f"max commutator {ratio.max():.2e} <= {COMMUTATOR_TOL:g}"
            slope, const = float("nan"), float(ratio.max())
        else:
            passed = bool(np.isfinite(const) and slope >= expo - cfg.tol)
            crit = f"slope >= {expo:g} - {cfg.tol:g}"
        report.records.append(PropertyRecord(pid, h, lhs, rhs, ratio, slope, const, passed, crit))
    return report


def operator_family(kind: str, resolutions: Sequence[int], grid: GridSpec) -> list[ObservationOperator]:
    return [make_operator(kind, n, grid) for n in resolutions]


def partition_diagnostics(pou: PartitionOfUnity) -> dict:
    """Worst-case deviations of the partition-of-unity identities."""
    g = pou.grid
    total = pou.sum_physical()
    means = pou.a_tilde / (2 * np.pi) ** 2
    target = (pou.h / (2 * np.pi)) ** 2
    l2 = np.sqrt(np.sum(pou.patches**2, axis=(1, 2)) * g.cell_area)
    return {
        "n": pou.n,
        "squares": pou.size,
        "h": pou.h,
        "sum_error": float(np.max(np.abs(total - 1.0))),
        "psi_min": float(pou.patches.min()),
        "psi_max": float(pou.patches.max()),
        "mean_rel_error": float(np.max(np.abs(means / target - 1.0))),
        "l2_over_h_min": float(l2.min() / pou.h),
        "l2_over_h_max": float(l2.max() / pou.h),
    }
