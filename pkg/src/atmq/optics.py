"""Complex fields, Gaussian sources and split-step propagation."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import fft

from .errors import ConfigError, NumericalError
from .screens import GridSpec, dump_array

# fraction of the initial power the absorbing boundary may remove before
# the run is declared under-resolved
MASK_LOSS_BUDGET = 0.2


@dataclass(frozen=True)
class BeamSpec:
    """Gaussian source: spot radius ``W0`` and wave-front radius ``F0`` (m).

    ``F0 = inf`` is a collimated beam, finite positive ``F0`` converges
    towards a focus at distance ``F0``.
    """

    W0: float
    F0: float = math.inf

    def __post_init__(self):
        if not self.W0 > 0:
            raise ConfigError(f"beam radius W0 must be positive, got {self.W0}")
        if not self.F0 > 0:
            raise ConfigError(f"wave-front radius F0 must be positive or inf, got {self.F0}")

    def rayleigh_length(self, wavenumber: float) -> float:
        return 0.5 * wavenumber * self.W0**2

    def vacuum_width(self, z, wavenumber: float):
        """Analytic spot radius after free-space propagation over ``z``."""
        z = np.asarray(z, dtype=float)
        focus = 0.0 if math.isinf(self.F0) else 1.0 / self.F0
        return self.W0 * np.sqrt((1.0 - z * focus) ** 2 + (z / self.rayleigh_length(wavenumber)) ** 2)


@dataclass
class ComplexField:
    """Complex amplitude sampled on ``grid``, indexed ``[y, x]``, at distance ``z``."""

    amplitude: np.ndarray
    grid: GridSpec
    wavenumber: float
    z: float = 0.0

    def __post_init__(self):
        n = self.grid.points_per_axis
        if self.amplitude.shape != (n, n):
            raise ConfigError(f"field shape {self.amplitude.shape} does not match grid {n}x{n}")

    @property
    def intensity(self) -> np.ndarray:
        return self.amplitude.real**2 + self.amplitude.imag**2

    @property
    def power(self) -> float:
        return float(np.sum(self.intensity)) * self.grid.step**2


def make_gaussian_beam(beam: BeamSpec, optics, grid: GridSpec) -> ComplexField:
    """Unit-power Gaussian beam at the transmitter plane."""
    if grid.width < 6.0 * beam.W0:
        raise ConfigError(
            f"grid width {grid.width:.4g} m is too small for W0={beam.W0:.4g} m (need >= 6 W0)"
        )
    if grid.step > beam.W0 / 4.0:
        raise ConfigError(f"grid step {grid.step:.4g} m does not resolve W0={beam.W0:.4g} m")
    c = grid.coords
    r2 = c[None, :] ** 2 + c[:, None] ** 2
    k = optics.k
    phase = 0.0 if math.isinf(beam.F0) else -0.5 * k * r2 / beam.F0
    u = math.sqrt(2.0 / (math.pi * beam.W0**2)) * np.exp(-r2 / beam.W0**2 + 1j * phase)
    return ComplexField(u.astype(np.complex128), grid, k, 0.0)


@lru_cache(maxsize=4)
def _vacuum_kernel(n: int, step: float, wavenumber: float, dz: float) -> np.ndarray:
    k = 2.0 * math.pi * np.fft.fftfreq(n, step)
    k2 = k[:, None] ** 2 + k[None, :] ** 2
    kernel = np.exp(-1j * dz * k2 / (2.0 * wavenumber))
    kernel.setflags(write=False)
    return kernel


def _propagate_array(u, grid, wavenumber, dz):
    if dz == 0.0:
        return u.copy()
    kernel = _vacuum_kernel(grid.points_per_axis, grid.step, wavenumber, float(dz))
    spectrum = fft.fft2(u, norm="ortho")
    spectrum *= kernel
    return fft.ifft2(spectrum, norm="ortho", overwrite_x=True)


def vacuum_propagate(field: ComplexField, dz: float) -> ComplexField:
    """Angular-spectrum propagation over ``dz`` (negative values run backwards)."""
    u = _propagate_array(field.amplitude, field.grid, field.wavenumber, dz)
    return replace(field, amplitude=u, z=field.z + dz)


def apply_phase(field: ComplexField, phase: np.ndarray) -> ComplexField:
    """Multiply by ``exp(-i phase)``."""
    phase = np.asarray(phase)
    if phase.shape != field.amplitude.shape:
        raise ValueError(f"phase shape {phase.shape} does not match field {field.amplitude.shape}")
    return replace(field, amplitude=field.amplitude * np.exp(-1j * phase))


def absorbing_mask(grid: GridSpec) -> np.ndarray:
    """Super-Gaussian edge absorber ``exp[-(r / 0.45 width)^16]``."""
    c = grid.coords
    r2 = (c[None, :] ** 2 + c[:, None] ** 2) / (0.45 * grid.width) ** 2
    return np.exp(-(r2**8))


def propagate_through(field: ComplexField, phases, slab_length: float, mask=None) -> ComplexField:
    """Split-step propagation through consecutive slabs.

    ``phases`` yields one screen per slab; each slab is half a vacuum step,
    the screen, then another half step.  Without a mask consecutive half
    steps are merged.  With a mask it is applied after every slab, and
    losing more than ``MASK_LOSS_BUDGET`` of the power raises
    :class:`NumericalError`.
    """
    u = field.amplitude
    grid, k = field.grid, field.wavenumber
    half = 0.5 * slab_length
    start_power = field.power
    z = field.z
    pending = 0.0
    count = 0
    for phi in phases:
        if phi.shape != u.shape:
            raise ValueError(f"phase shape {phi.shape} does not match field {u.shape}")
        u = _propagate_array(u, grid, k, pending + half)
        u = u * np.exp(-1j * phi)
        count += 1
        if mask is None:
            pending = half
        else:
            u = _propagate_array(u, grid, k, half)
            u *= mask
            pending = 0.0
            lost = 1.0 - float(np.sum(u.real**2 + u.imag**2)) * grid.step**2 / start_power
            if lost > MASK_LOSS_BUDGET:
                raise NumericalError(
                    f"absorbing boundary removed {lost:.1%} of the beam power after slab {count}; "
                    "use a wider grid"
                )
    if pending:
        u = _propagate_array(u, grid, k, pending)
    return ComplexField(u, grid, k, z + count * slab_length)


def dump_field(path, field: ComplexField, seed=None):
    """Debug snapshot in the same raw format as screen dumps."""
    return dump_array(path, field.amplitude, field.grid, seed)
