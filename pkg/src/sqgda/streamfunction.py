"""Half-space streamfunction reconstructed from surface data.

With zero potential vorticity the 3D streamfunction solves Laplace's equation
in z > 0 with Neumann data d_z Psi(., 0) = theta and decay as z -> infinity.
Mode by mode

    Psi_hat(k, z) = -theta_hat(k) exp(-|k| z) / |k|,

so slices are generated on demand and never stored volumetrically.  The
gradient energy of the extension of an error field zeta equals the pairing
of zeta with Lambda^{-1} zeta.  ``gradient_error_quadrature`` integrates the
slice energies in z directly and serves as an independent check on that
identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import InvalidInputError, ResolutionError
from .spectral import DOMAIN_AREA, SpectralField, _require_mean_zero, lambda_inv_pairing

# tolerated relative error of the z quadrature before ResolutionError is raised
QUAD_RTOL = 1e-6
# relative tail e^{-2 |k_min| Z_max} discarded by truncating at Z_max (|k_min| = 1)
TAIL_TOL = 1e-8
_CHUNK = 256


@dataclass(frozen=True)
class StreamExtensionSpec:
    """Heights at which slices are sampled for the z quadrature.

    ``z_levels`` must start at 0 and increase strictly.  The top level is the
    truncation height; the slice energies decay like exp(-2 |k| z) with
    |k| >= 1, so it must satisfy exp(-2 Z_max) <= 1e-8.
    """

    z_levels: tuple

    def __post_init__(self):
        z = np.asarray(self.z_levels, dtype=float)
        if z.ndim != 1 or z.size < 5:
            raise InvalidInputError("need at least 5 z levels")
        if z[0] != 0.0:
            raise InvalidInputError(f"z levels must start at 0, got {z[0]}")
        if not np.all(np.diff(z) > 0):
            raise InvalidInputError("z levels must be strictly increasing")
        if math.exp(-2.0 * z[-1]) > TAIL_TOL:
            raise InvalidInputError(
                f"Z_max = {z[-1]:.4g} truncates too early: exp(-2 Z_max) = {math.exp(-2 * z[-1]):.2e} > {TAIL_TOL:g}"
            )
        object.__setattr__(self, "z_levels", tuple(float(v) for v in z))

    @classmethod
    def uniform(cls, z_max: float = 10.0, n_levels: int = 2001) -> "StreamExtensionSpec":
        return cls(tuple(np.linspace(0.0, z_max, n_levels)))

    @classmethod
    def stretched(cls, z_max: float = 10.0, n_levels: int = 1001, z_first: float = 0.01) -> "StreamExtensionSpec":
        """Geometrically stretched levels, fine near the surface where the integrand varies fastest."""
        r = (z_max / z_first + 1.0) ** (1.0 / (n_levels - 1))
        z = z_first * (r ** np.arange(n_levels) - 1.0)
        z[-1] = z_max
        return cls(tuple(z))

    @property
    def z(self) -> np.ndarray:
        return np.asarray(self.z_levels)

    @property
    def z_max(self) -> float:
        return self.z_levels[-1]

    @property
    def trapezoid_weights(self) -> np.ndarray:
        return _trapezoid_weights(self.z)

    @property
    def truncation_bound(self) -> float:
        """Relative size of the discarded tail for the slowest-decaying mode."""
        return math.exp(-2.0 * self.z_max)


def _trapezoid_weights(z: np.ndarray) -> np.ndarray:
    d = np.diff(z)
    w = np.zeros_like(z)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def _subsample(n: int, step: int) -> np.ndarray:
    idx = np.arange(0, n, step)
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    return idx


def harmonic_extension(theta: SpectralField, z: float) -> SpectralField:
    """Slice Psi(., z) of the decaying harmonic function with d_z Psi(., 0) = theta."""
    _require_mean_zero(theta, "harmonic_extension")
    if not z >= 0:
        raise InvalidInputError(f"height z must be >= 0, got {z}")
    g = theta.grid
    return SpectralField(g, -theta.coeffs * g.kabs_inv * np.exp(-g.kabs * z), True)


def vertical_derivative(theta: SpectralField, z: float) -> SpectralField:
    """d_z Psi(., z), which is theta filtered by exp(-|k| z)."""
    _require_mean_zero(theta, "vertical_derivative")
    if not z >= 0:
        raise InvalidInputError(f"height z must be >= 0, got {z}")
    g = theta.grid
    c = theta.coeffs * np.exp(-g.kabs * z)
    c[0, 0] = 0.0
    return SpectralField(g, c, True)


def slices(theta: SpectralField, z_levels) -> Iterator[tuple[float, SpectralField]]:
    for z in z_levels:
        yield float(z), harmonic_extension(theta, z)


def export_slices(theta: SpectralField, z_levels, directory, kappa: float, gamma: float, prefix: str = "slice") -> list:
    """Write Psi(., z) slices as SQGF files; the header's time field holds z."""
    from pathlib import Path

    from .io import write_snapshot

    directory = Path(directory)
    return [
        write_snapshot(directory / f"{prefix}_{i:04d}.sqgf", psi.physical(), z, kappa, gamma)
        for i, (z, psi) in enumerate(slices(theta, z_levels))
    ]


def gradient_error_exact(zeta: SpectralField) -> float:
    """Squared gradient norm of the extension of zeta over the whole half-space."""
    return lambda_inv_pairing(zeta)


def slice_gradient_energy(zeta: SpectralField, z_levels) -> np.ndarray:
    """The L^2(torus) norm squared of the 3D gradient of Psi_zeta at each height."""
    _require_mean_zero(zeta, "slice_gradient_energy")
    g = zeta.grid
    nz = (np.abs(zeta.coeffs) > 0) & (g.ksq > 0)
    kk = g.kabs[nz]
    horiz = g.k1[nz] ** 2 + g.k2[nz] ** 2
    amp = zeta.coeffs[nz]
    z = np.asarray(z_levels, dtype=float)
    out = np.empty(z.size)
    for s in range(0, z.size, _CHUNK):
        zc = z[s : s + _CHUNK, None]
        psi = -amp / kk * np.exp(-kk * zc)  # closed-form slice coefficients
        dz_psi = -kk * psi
        out[s : s + _CHUNK] = DOMAIN_AREA * np.sum(horiz * np.abs(psi) ** 2 + np.abs(dz_psi) ** 2, axis=1)
    return out


@dataclass(frozen=True)
class QuadratureResult:
    value: float  # Richardson-extrapolated trapezoid value on [0, Z_max]
    trapezoid: float  # plain trapezoid value on the given levels
    error_estimate: float  # estimated absolute quadrature error of ``value``
    truncation_bound: float  # relative bound on the discarded tail beyond Z_max

    @property
    def relative_error_estimate(self) -> float:
        return self.error_estimate / self.value if self.value > 0 else 0.0


def quadrature_report(zeta: SpectralField, spec: StreamExtensionSpec) -> QuadratureResult:
    """Integrate slice gradient energies in z and estimate the quadrature error.

    The trapezoid sums on the given levels and on every second and fourth
    level are combined by Richardson extrapolation; the difference of the
    two extrapolants estimates the remaining error.
    """
    z = spec.z
    e = slice_gradient_energy(zeta, z)

    def trap(step):
        idx = _subsample(z.size, step)
        return float(np.dot(_trapezoid_weights(z[idx]), e[idx]))

    t1, t2, t4 = trap(1), trap(2), trap(4)
    r1 = t1 + (t1 - t2) / 3.0
    r2 = t2 + (t2 - t4) / 3.0
    return QuadratureResult(value=r1, trapezoid=t1, error_estimate=abs(r1 - r2) / 15.0, truncation_bound=spec.truncation_bound)


def gradient_error_quadrature(zeta: SpectralField, spec: StreamExtensionSpec | None = None) -> float:
    """Direct z-quadrature of the squared 3D gradient of the extension of zeta.

    Raises ResolutionError when the estimated relative quadrature error
    exceeds 1e-6.
    """
    spec = StreamExtensionSpec.uniform() if spec is None else spec
    res = quadrature_report(zeta, spec)
    if res.relative_error_estimate > QUAD_RTOL:
        raise ResolutionError(
            f"z quadrature error estimate {res.relative_error_estimate:.2e} exceeds {QUAD_RTOL:g}; "
            f"add levels below z = 1 (currently {len(spec.z_levels)} levels up to {spec.z_max:g})"
        )
    return res.value
