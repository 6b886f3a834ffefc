"""Interpolant observables J_h: mollified local averages and modal projections.

Four variants are provided:

* ``VolumeAverage``        sum_a phi~_a psi~_a over a mollified partition of unity
* ``ShiftedVolumeAverage`` the same minus its global mean (mean-zero output)
* ``RoughModal``           square truncation |k1|, |k2| <= N   (h = 2 pi / N)
* ``SmoothModal``          low-pass multiplier psi0(|k| 2^-(N+1)) (h = 2^-N)

Each exposes ``apply(field)`` on SpectralFields and ``apply_coeffs(coeffs)`` on
raw coefficient arrays for use inside the time stepper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.signal import convolve2d

from .errors import ConfigurationError, InvalidInputError, ResolutionError
from .spectral import GridSpec, SpectralField

# mollifier radius must span at least this many grid cells
MIN_CELLS_PER_EPS = 3.0


def bump(r: np.ndarray) -> np.ndarray:
    """exp(-1 / (1 - r^2)) on |r| < 1, zero outside (unnormalized)."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def mollifier_kernel(eps: float, dx: float, dy: float) -> np.ndarray:
    """Grid samples of rho_eps times the cell area, renormalized to sum to 1."""
    rx, ry = math.ceil(eps / dx), math.ceil(eps / dy)
    ox = dx * np.arange(-rx, rx + 1)
    oy = dy * np.arange(-ry, ry + 1)
    r = np.hypot(ox[None, :], oy[:, None]) / eps
    w = bump(r)
    return w / w.sum()


def _cell_overlap(n_cells: int, start: int, d: float, a: float, b: float) -> np.ndarray:
    """Fraction of each cell [j d - d/2, j d + d/2) lying in [a, b), j = start..start+n_cells-1."""
    j = start + np.arange(n_cells)
    lo = np.maximum(j * d - 0.5 * d, a)
    hi = np.minimum(j * d + 0.5 * d, b)
    return np.clip(hi - lo, 0.0, None) / d


@dataclass(frozen=True, eq=False)
class PartitionOfUnity:
    """Mollified indicators psi~_a of the 4N squares of side h = pi / sqrt(N).

    Each psi~_a is stored as a dense patch around its square (its support is
    the square grown by eps = h/10), together with the flat grid indices the
    patch covers.  ``psi_tilde(a)`` embeds a patch into a full SpectralField.
    """

    grid: GridSpec
    n: int
    h: float
    epsilon: float
    squares: np.ndarray  # (M, 2) integer labels (i, j), square = [ih,(i+1)h) x [jh,(j+1)h)
    patches: np.ndarray  # (M, wy, wx)
    flat_index: np.ndarray  # (M, wy, wx) indices into the raveled grid
    a_tilde: np.ndarray  # (M,) integral of psi~_a

    @property
    def n_squares_per_side(self) -> int:
        return 2 * math.isqrt(self.n)

    @property
    def size(self) -> int:
        return len(self.squares)

    def psi_tilde_physical(self, a: int) -> np.ndarray:
        out = np.zeros(self.grid.npoints)
        out[self.flat_index[a].ravel()] = self.patches[a].ravel()
        return out.reshape(self.grid.shape)

    def psi_tilde(self, a: int) -> SpectralField:
        return SpectralField.from_physical(self.grid, self.psi_tilde_physical(a))

    def sum_physical(self) -> np.ndarray:
        """Pointwise sum of all psi~_a on the grid."""
        s = np.bincount(self.flat_index.ravel(), weights=self.patches.ravel(), minlength=self.grid.npoints)
        return s.reshape(self.grid.shape)

    def local_averages(self, values: np.ndarray) -> np.ndarray:
        """phi~_{Q_a} = (1 / a~(Q_a)) * integral of phi psi~_a."""
        v = values.ravel()[self.flat_index]
        return np.einsum("mij,mij->m", v, self.patches) * self.grid.cell_area / self.a_tilde

    def synthesize(self, weights: np.ndarray) -> np.ndarray:
        """Physical samples of sum_a weights[a] * psi~_a."""
        s = np.bincount(
            self.flat_index.ravel(),
            weights=(weights[:, None, None] * self.patches).ravel(),
            minlength=self.grid.npoints,
        )
        return s.reshape(self.grid.shape)


def build_partition(n: int, grid: GridSpec) -> PartitionOfUnity:
    """Construct the mollified partition of unity for a perfect square n >= 9."""
    s = math.isqrt(n) if isinstance(n, (int, np.integer)) and n > 0 else -1
    if s < 0 or s * s != n or n < 9:
        raise InvalidInputError(f"partition needs a perfect square N >= 9, got {n!r}")
    h = np.pi / s
    eps = h / 10.0
    dx, dy = grid.dx, grid.dy
    if eps < MIN_CELLS_PER_EPS * max(dx, dy):
        raise ResolutionError(
            f"mollifier radius h/10 = {eps:.4g} spans fewer than {MIN_CELLS_PER_EPS:g} cells "
            f"(dx = {max(dx, dy):.4g}); refine the grid beyond {grid.nx}x{grid.ny} or lower N"
        )
    kernel = mollifier_kernel(eps, dx, dy)
    ry, rx = (kernel.shape[0] - 1) // 2, (kernel.shape[1] - 1) // 2
    wx = math.ceil(h / dx) + 3 + 2 * rx
    wy = math.ceil(h / dy) + 3 + 2 * ry
    if wx > grid.nx or wy > grid.ny:
        raise ResolutionError("partition patches wider than the grid")

    labels, patches, flats = [], [], []
    # coordinates shifted by +pi so that grid points sit at j*dx
    for i in range(-s, s):
        ax = i * h + np.pi
        jx0 = math.floor(ax / dx) - 1 - rx
        wgt_x = _cell_overlap(wx, jx0, dx, ax, ax + h)
        ix = (jx0 + np.arange(wx)) % grid.nx
        for j in range(-s, s):
            ay = j * h + np.pi
            jy0 = math.floor(ay / dy) - 1 - ry
            wgt_y = _cell_overlap(wy, jy0, dy, ay, ay + h)
            iy = (jy0 + np.arange(wy)) % grid.ny
            patch = convolve2d(np.outer(wgt_y, wgt_x), kernel, mode="same")
            labels.append((i, j))
            patches.append(patch)
            flats.append(iy[:, None] * grid.nx + ix[None, :])
    patches = np.array(patches)
    return PartitionOfUnity(
        grid=grid,
        n=n,
        h=h,
        epsilon=eps,
        squares=np.array(labels),
        patches=patches,
        flat_index=np.array(flats),
        a_tilde=patches.sum(axis=(1, 2)) * grid.cell_area,
    )


def lp_profile(r: np.ndarray) -> np.ndarray:
    """Smooth radial low-pass profile: 1 on r <= 1/4, 0 on r >= 1/2, C-infinity between."""
    t = (np.asarray(r, dtype=float) - 0.25) / 0.25
    t = np.clip(t, 0.0, 1.0)

    def g(u):
        out = np.zeros_like(u)
        pos = u > 0
        out[pos] = np.exp(-1.0 / u[pos])
        return out

    a, b = g(1.0 - t), g(t)
    return a / (a + b)


class ObservationOperator:
    """Common interface of the interpolant observables."""

    kind: str

    @property
    def h(self) -> float:
        raise NotImplementedError

    def apply_coeffs(self, coeffs: np.ndarray, grid: GridSpec) -> np.ndarray:
        raise NotImplementedError

    def apply(self, phi: SpectralField) -> SpectralField:
        return SpectralField(phi.grid, self.apply_coeffs(phi.coeffs, phi.grid), self.output_mean_zero(phi))

    def output_mean_zero(self, phi: SpectralField) -> bool:
        return False

    def is_diagonal(self) -> bool:
        """True when the operator is a Fourier multiplier."""
        return False

    def __call__(self, phi: SpectralField) -> SpectralField:
        return self.apply(phi)


@dataclass(frozen=True, eq=False)
class VolumeAverage(ObservationOperator):
    partition: PartitionOfUnity
    kind = "volume"

    @property
    def h(self) -> float:
        return self.partition.h

    def _check(self, grid: GridSpec):
        if grid != self.partition.grid:
            raise ConfigurationError(
                f"partition built on {self.partition.grid.nx}x{self.partition.grid.ny}, "
                f"field lives on {grid.nx}x{grid.ny}"
            )

    def apply_physical(self, values: np.ndarray) -> np.ndarray:
        pou = self.partition
        return pou.synthesize(pou.local_averages(values))

    def apply_coeffs(self, coeffs: np.ndarray, grid: GridSpec) -> np.ndarray:
        self._check(grid)
        return grid.forward(self.apply_physical(grid.inverse(coeffs)))


@dataclass(frozen=True, eq=False)
class ShiftedVolumeAverage(VolumeAverage):
    kind = "shifted_volume"

    def apply_coeffs(self, coeffs: np.ndarray, grid: GridSpec) -> np.ndarray:
        c = super().apply_coeffs(coeffs, grid)
        c[0, 0] = 0.0
        return c

    def output_mean_zero(self, phi):
        return True


@dataclass(frozen=True, eq=False)
class _ModalOperator(ObservationOperator):
    n: int
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise InvalidInputError(f"modal operator needs a positive integer N, got {self.n!r}")

    def multiplier(self, grid: GridSpec) -> np.ndarray:
        m = self._cache.get(grid)
        if m is None:
            m = self._build_multiplier(grid)
            self._cache[grid] = m
        return m

    def _build_multiplier(self, grid: GridSpec) -> np.ndarray:
        raise NotImplementedError

    def apply_coeffs(self, coeffs, grid):
        return coeffs * self.multiplier(grid)

    def output_mean_zero(self, phi):
        return phi.mean_zero

    def is_diagonal(self):
        return True


@dataclass(frozen=True, eq=False)
class RoughModal(_ModalOperator):
    kind = "rough_modal"

    @property
    def h(self):
        return 2 * np.pi / self.n

    def _build_multiplier(self, grid):
        return ((np.abs(grid.k1) <= self.n) & (np.abs(grid.k2) <= self.n)).astype(float)


@dataclass(frozen=True, eq=False)
class SmoothModal(_ModalOperator):
    profile: Callable[[np.ndarray], np.ndarray] = lp_profile
    kind = "smooth_modal"

    @property
    def h(self):
        return 2.0 ** (-self.n)

    def _build_multiplier(self, grid):
        return self.profile(grid.kabs * 2.0 ** (-self.n - 1))


OPERATOR_KINDS = ("volume", "shifted_volume", "rough_modal", "smooth_modal")


def make_operator(kind: str, n: int, grid: GridSpec) -> ObservationOperator:
    """Build an observation operator from its config name and resolution parameter."""
    if kind == "volume":
        return VolumeAverage(build_partition(n, grid))
    if kind == "shifted_volume":
        return ShiftedVolumeAverage(build_partition(n, grid))
    if kind == "rough_modal":
        return RoughModal(n)
    if kind == "smooth_modal":
        return SmoothModal(n)
    raise ConfigurationError(f"unknown observation kind {kind!r}; expected one of {OPERATOR_KINDS}")


def apply(op: ObservationOperator, phi: SpectralField) -> SpectralField:
    return op.apply(phi)
