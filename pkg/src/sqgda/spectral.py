"""Fourier representation of real scalar fields on the 2π-periodic torus.

Fields are stored as complex amplitudes on the integer lattice with the
convention ``phi(x) = sum_k phi_hat(k) exp(i k.x)``; physical samples live
on the uniform grid ``x_j = -pi + 2 pi j / n``.  Coefficient arrays have shape
``(ny, nx)`` in FFT ordering (``numpy.fft.fftfreq``), physical arrays have
shape ``(ny, nx)`` with x varying fastest.

Norms use the Plancherel-consistent scaling

    ||phi||_{H^s}^2 = (2 pi)^2 sum_{k != 0} |k|^{2s} |phi_hat(k)|^2,

so that the s = 0 case matches the L^2 quadrature of a mean-zero field.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, InvalidInputError

TWO_PI = 2.0 * np.pi
DOMAIN_AREA = TWO_PI**2

# relative size of the k = 0 coefficient below which a field counts as mean-zero
MEAN_TOL = 1e-12


@dataclass(frozen=True)
class GridSpec:
    """Collocation grid on [-pi, pi]^2 and its wavenumber lattice."""

    nx: int
    ny: int

    def __post_init__(self):
        for name in ("nx", "ny"):
            n = getattr(self, name)
            if not isinstance(n, (int, np.integer)) or n < 8 or n % 2:
                raise ConfigurationError(f"{name} must be an even integer >= 8, got {n!r}")

    @classmethod
    def square(cls, n: int) -> "GridSpec":
        return cls(n, n)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def npoints(self) -> int:
        return self.nx * self.ny

    @property
    def dx(self) -> float:
        return TWO_PI / self.nx

    @property
    def dy(self) -> float:
        return TWO_PI / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @cached_property
    def x(self) -> np.ndarray:
        return -np.pi + self.dx * np.arange(self.nx)

    @cached_property
    def y(self) -> np.ndarray:
        return -np.pi + self.dy * np.arange(self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Physical coordinates ``(X, Y)``, each of shape ``(ny, nx)``."""
        return np.meshgrid(self.x, self.y, indexing="xy")

    @cached_property
    def k1(self) -> np.ndarray:
        return np.broadcast_to(np.fft.fftfreq(self.nx, 1.0 / self.nx)[None, :], self.shape)

    @cached_property
    def k2(self) -> np.ndarray:
        return np.broadcast_to(np.fft.fftfreq(self.ny, 1.0 / self.ny)[:, None], self.shape)

    @cached_property
    def ksq(self) -> np.ndarray:
        return self.k1**2 + self.k2**2

    @cached_property
    def kabs(self) -> np.ndarray:
        return np.sqrt(self.ksq)

    @cached_property
    def kabs_inv(self) -> np.ndarray:
        """1/|k| with the k = 0 entry defined as 0."""
        out = np.zeros(self.shape)
        nz = self.ksq > 0
        out[nz] = 1.0 / self.kabs[nz]
        return out

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        return (np.abs(self.k1) <= self.nx / 3) & (np.abs(self.k2) <= self.ny / 3)

    @property
    def kmax_dealiased(self) -> int:
        """Largest retained wavenumber component under the 2/3 rule."""
        return min(self.nx // 3, self.ny // 3)

    @cached_property
    def ik1(self) -> np.ndarray:
        """Spectral d/dx with the Nyquist column removed (odd derivative)."""
        k = np.where(np.abs(self.k1) == self.nx // 2, 0.0, self.k1)
        return 1j * k

    @cached_property
    def ik2(self) -> np.ndarray:
        k = np.where(np.abs(self.k2) == self.ny // 2, 0.0, self.k2)
        return 1j * k

    @cached_property
    def _phase(self) -> np.ndarray:
        # exp(i k.pi) = (-1)^(k1+k2): the grid starts at -pi, not 0
        return np.where((self.k1 + self.k2) % 2 == 0, 1.0, -1.0)

    def forward(self, values: np.ndarray) -> np.ndarray:
        """Physical samples -> lattice coefficients (raw arrays)."""
        return sfft.fft2(values) * (self._phase / self.npoints)

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        """Lattice coefficients -> physical samples (raw arrays)."""
        return sfft.ifft2(coeffs * (self._phase * self.npoints)).real

    @cached_property
    def nxh(self) -> int:
        return self.nx // 2 + 1

    @cached_property
    def _half_phase(self) -> np.ndarray:
        return self._phase[:, : self.nxh]

    @cached_property
    def _mirror(self) -> tuple[np.ndarray, np.ndarray]:
        rows = (-np.arange(self.ny)) % self.ny
        cols = self.nx - np.arange(self.nxh, self.nx)
        return rows[:, None], cols[None, :]

    def forward_real(self, values: np.ndarray) -> np.ndarray:
        """Same as ``forward`` for real input, via a real FFT and a conjugate fill."""
        half = sfft.rfft2(values) * (self._half_phase / self.npoints)
        out = np.empty(self.shape, dtype=complex)
        out[:, : self.nxh] = half
        rows, cols = self._mirror
        out[:, self.nxh :] = np.conj(half[rows, cols])
        return out

    def inverse_half(self, half: np.ndarray) -> np.ndarray:
        """Physical samples from the first ``nx//2 + 1`` columns of coefficients that
        already include the grid phase and the factor ``nx*ny`` (see ``inverse``)."""
        return sfft.irfft2(half, s=self.shape)

    def index_of(self, k1: int, k2: int) -> tuple[int, int]:
        """Array index ``(row, col)`` of lattice wavenumber ``(k1, k2)``."""
        if abs(k1) > self.nx // 2 or abs(k2) > self.ny // 2:
            raise InvalidInputError(f"wavenumber ({k1}, {k2}) not representable on {self.nx}x{self.ny}")
        return (k2 % self.ny, k1 % self.nx)

    def describe(self) -> dict:
        return {
            "nx": self.nx,
            "ny": self.ny,
            "dx": self.dx,
            # the Nyquist row/column is labelled +n/2 (aliased with -n/2 on the grid)
            "k1_range": (-self.nx // 2 + 1, self.nx // 2),
            "k2_range": (-self.ny // 2 + 1, self.ny // 2),
            "dealias_k1_max": self.nx // 3,
            "dealias_k2_max": self.ny // 3,
            "retained_modes": int(self.dealias_mask.sum()),
        }


@dataclass(frozen=True, eq=False)
class SpectralField:
    """A real scalar field held by its Fourier coefficients."""

    grid: GridSpec
    coeffs: np.ndarray
    mean_zero: bool = False

    def __post_init__(self):
        if self.coeffs.shape != self.grid.shape:
            raise ConfigurationError(
                f"coefficient array {self.coeffs.shape} does not match grid {self.grid.shape}"
            )
        if self.mean_zero and self.coeffs[0, 0] != 0:
            raise InvalidInputError("mean_zero flag set but the k=0 coefficient is nonzero")

    @classmethod
    def from_physical(cls, grid: GridSpec, values, mean_zero: bool = False) -> "SpectralField":
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise ConfigurationError(f"sample array {values.shape} does not match grid {grid.shape}")
        c = grid.forward(values)
        if mean_zero:
            c[0, 0] = 0.0
        return cls(grid, c, mean_zero)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "SpectralField":
        return cls(grid, np.zeros(grid.shape, dtype=complex), True)

    def physical(self) -> np.ndarray:
        return self.grid.inverse(self.coeffs)

    @property
    def mean(self) -> float:
        """Global average <phi> (the k = 0 coefficient)."""
        return float(self.coeffs[0, 0].real)

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy(), self.mean_zero)

    def _check_grid(self, other: "SpectralField"):
        if other.grid != self.grid:
            raise ConfigurationError("fields live on different grids")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check_grid(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs, self.mean_zero and other.mean_zero)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check_grid(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs, self.mean_zero and other.mean_zero)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * scalar, self.mean_zero)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs, self.mean_zero)

    def conjugate_symmetry_error(self) -> float:
        """max_k |phi_hat(-k) - conj(phi_hat(k))| (zero for a real field)."""
        c = self.coeffs
        flipped = np.roll(c[::-1, ::-1], 1, axis=(0, 1))
        return float(np.max(np.abs(flipped - np.conj(c))))


def transform_pair(values_or_field, grid: GridSpec | None = None):
    """Physical samples -> SpectralField, or SpectralField -> physical samples."""
    if isinstance(values_or_field, SpectralField):
        return values_or_field.physical()
    if grid is None:
        raise ConfigurationError("a grid is required to transform physical samples")
    return SpectralField.from_physical(grid, values_or_field)


def is_mean_zero(phi: SpectralField) -> bool:
    if phi.mean_zero:
        return True
    scale = np.sqrt(np.sum(np.abs(phi.coeffs) ** 2))
    return abs(phi.coeffs[0, 0]) <= MEAN_TOL * max(scale, 1e-300) or phi.coeffs[0, 0] == 0


def _require_mean_zero(phi: SpectralField, who: str):
    if not is_mean_zero(phi):
        raise InvalidInputError(f"{who} requires a mean-zero field (mean = {phi.mean:.3e})")


def fractional_power(phi: SpectralField, beta: float) -> SpectralField:
    """Apply Lambda^beta = (-Laplacian)^(beta/2); the mean is annihilated."""
    if beta < 0:
        _require_mean_zero(phi, f"Lambda^{beta}")
    g = phi.grid
    mult = np.zeros(g.shape)
    nz = g.ksq > 0
    mult[nz] = g.kabs[nz] ** beta
    return SpectralField(g, phi.coeffs * mult, True)


def riesz_perp_velocity(theta: SpectralField) -> tuple[SpectralField, SpectralField]:
    """Velocity u = R^perp theta = (-R2 theta, R1 theta)."""
    _require_mean_zero(theta, "riesz_perp_velocity")
    g = theta.grid
    u1 = -g.ik2 * g.kabs_inv * theta.coeffs
    u2 = g.ik1 * g.kabs_inv * theta.coeffs
    return SpectralField(g, u1, True), SpectralField(g, u2, True)


def gradient(phi: SpectralField) -> tuple[SpectralField, SpectralField]:
    g = phi.grid
    return SpectralField(g, g.ik1 * phi.coeffs, True), SpectralField(g, g.ik2 * phi.coeffs, True)


def l2_norm(phi: SpectralField) -> float:
    return TWO_PI * float(np.sqrt(np.sum(np.abs(phi.coeffs) ** 2)))


def hdot_norm(phi: SpectralField, s: float) -> float:
    """Homogeneous Sobolev norm of order s (s < 0 needs a mean-zero field)."""
    if s < 0:
        _require_mean_zero(phi, f"the H^{s} norm")
    g = phi.grid
    nz = g.ksq > 0
    w = np.abs(phi.coeffs[nz]) ** 2 * g.ksq[nz] ** s
    return TWO_PI * float(np.sqrt(np.sum(w)))


def lp_norm(phi: SpectralField, p: float) -> float:
    """L^p norm by the rectangle rule on the collocation grid; p = inf gives the grid max."""
    if not p >= 1:
        raise InvalidInputError(f"L^p norm needs p >= 1, got {p}")
    v = np.abs(phi.physical())
    if np.isinf(p):
        return float(v.max())
    vmax = v.max()
    if vmax == 0:
        return 0.0
    # scaled to avoid overflow for large p
    return float(vmax * (np.sum((v / vmax) ** p) * phi.grid.cell_area) ** (1.0 / p))


def norm(phi: SpectralField, kind: str, param: float | None = None) -> float:
    """Dispatch over ``"L2"``, ``"Lp"`` (param p), ``"Hdot"`` (param s) and
    ``"Hdot_neg"`` (param sigma > 0, i.e. the H^{-sigma} dual norm)."""
    if kind == "L2":
        return l2_norm(phi)
    if kind == "Lp":
        if param is None:
            raise InvalidInputError("Lp norm needs the exponent p")
        return lp_norm(phi, param)
    if kind == "Hdot":
        if param is None:
            raise InvalidInputError("Hdot norm needs the order s")
        return hdot_norm(phi, param)
    if kind == "Hdot_neg":
        if param is None or param < 0:
            raise InvalidInputError("Hdot_neg norm needs sigma >= 0")
        return hdot_norm(phi, -param)
    raise InvalidInputError(f"unsupported norm kind {kind!r}")


def inner(phi: SpectralField, g: SpectralField) -> complex:
    """L^2 pairing (2 pi)^2 sum_k phi_hat(k) conj(g_hat(k))."""
    phi._check_grid(g)
    return complex(DOMAIN_AREA * np.sum(phi.coeffs * np.conj(g.coeffs)))


def lambda_inv_pairing(zeta: SpectralField) -> float:
    """The integral of zeta * Lambda^{-1} zeta over the torus."""
    _require_mean_zero(zeta, "lambda_inv_pairing")
    g = zeta.grid
    return float(DOMAIN_AREA * np.sum(np.abs(zeta.coeffs) ** 2 * g.kabs_inv))


def dealias(phi: SpectralField) -> SpectralField:
    return SpectralField(phi.grid, phi.coeffs * phi.grid.dealias_mask, phi.mean_zero)


def project_mean_zero(phi: SpectralField) -> SpectralField:
    c = phi.coeffs.copy()
    c[0, 0] = 0.0
    return SpectralField(phi.grid, c, True)


def from_modes(grid: GridSpec, modes) -> SpectralField:
    """Synthesize ``sum amp * cos(k.x + phase)`` from ``(k1, k2, amp, phase)`` tuples."""
    c = np.zeros(grid.shape, dtype=complex)
    for k1, k2, amp, phase in modes:
        if k1 == 0 and k2 == 0:
            c[0, 0] += amp * np.cos(phase)
            continue
        c[grid.index_of(k1, k2)] += 0.5 * amp * np.exp(1j * phase)
        c[grid.index_of(-k1, -k2)] += 0.5 * amp * np.exp(-1j * phase)
    return SpectralField(grid, c, c[0, 0] == 0)


def random_field(
    grid: GridSpec,
    rng: np.random.Generator,
    kmax: float | None = None,
    slope: float = 0.0,
    l2: float = 1.0,
) -> SpectralField:
    """Random real, mean-zero field band-limited to ``|k_i| <= kmax``.

    Amplitudes are white noise shaped by ``|k|^-slope`` and the result is
    rescaled to the requested L^2 norm.
    """
    if kmax is None:
        kmax = grid.kmax_dealiased
    c = grid.forward(rng.standard_normal(grid.shape))
    keep = (np.abs(grid.k1) <= kmax) & (np.abs(grid.k2) <= kmax) & (grid.ksq > 0)
    c = np.where(keep, c * np.where(keep, grid.kabs, 1.0) ** (-slope), 0.0)
    f = SpectralField(grid, c, True)
    n = l2_norm(f)
    return f * (l2 / n) if n > 0 else f
