"""Random phase screens.

The production generator is the sparse-spectrum one: a screen is a sum of
``N`` plane waves whose wave vectors are drawn inside logarithmically spaced
rings of the wave-number axis.  Plain FFT screens and FFT screens with
subharmonic patches are kept for comparison against theory only.

Arrays produced here are indexed ``[row, column] = [y, x]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .special import gauss_legendre
from .turbulence import OpticalParams, TurbulenceParams, phase_psd


@dataclass(frozen=True)
class GridSpec:
    """Uniform square grid; node ``j`` sits at ``(j - n//2) * step``."""

    points_per_axis: int
    step: float

    def __post_init__(self):
        n = self.points_per_axis
        if not isinstance(n, (int, np.integer)) or n < 64 or n & (n - 1):
            raise ConfigError(f"points_per_axis must be a power of two >= 64, got {n}")
        if not self.step > 0:
            raise ConfigError(f"grid step must be positive, got {self.step}")

    @property
    def width(self) -> float:
        return self.points_per_axis * self.step

    @property
    def half_width(self) -> float:
        return 0.5 * self.width

    @property
    def coords(self) -> np.ndarray:
        n = self.points_per_axis
        return (np.arange(n) - n // 2) * self.step

    def wavenumbers(self) -> np.ndarray:
        """Angular wave numbers in FFT order."""
        return 2.0 * math.pi * np.fft.fftfreq(self.points_per_axis, self.step)


@dataclass(frozen=True)
class SpectralRings:
    boundaries: np.ndarray  # K_0 .. K_N
    weights: np.ndarray  # s_1 .. s_N, rad^2

    @property
    def count(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class SparseScreen:
    amplitudes: np.ndarray  # complex, rad
    kx: np.ndarray
    ky: np.ndarray

    def __len__(self):
        return len(self.amplitudes)

    @property
    def harmonics(self):
        return [
            {"a": complex(a), "kvec": (float(x), float(y))}
            for a, x, y in zip(self.amplitudes, self.kx, self.ky)
        ]


def build_rings(
    params: TurbulenceParams,
    optics: OpticalParams,
    slab_length: float,
    count: int,
    k_min: float,
    k_max: float,
) -> SpectralRings:
    """Log-spaced rings and the phase variance carried by each.

    Ring ``n`` receives ``s_n = 4 pi int kappa Phi_phi dkappa`` over its
    extent.  This is the weight for which ``phi = Re sum a_n exp(i k_n r)``
    with ``<|a_n|^2> = s_n`` reproduces the band-limited screen variance
    ``2 pi int kappa Phi_phi dkappa``: taking the real part halves the power.
    """
    if count < 1:
        raise ConfigError(f"ring count must be >= 1, got {count}")
    if not 0.0 < k_min < k_max or not math.isfinite(k_max):
        raise ConfigError(f"need 0 < K_min < K_max, got {k_min}, {k_max}")
    if not slab_length > 0:
        raise ConfigError("slab length must be positive")
    log_span = math.log(k_max / k_min)
    bounds = k_min * np.exp(np.arange(count + 1) / count * log_span)
    bounds[-1] = k_max
    # Gauss-Legendre in ln(kappa), enough sub-panels for 1e-10 accuracy
    sub = max(1, int(math.ceil(log_span / count / 0.05)))
    t, w = gauss_legendre(16)
    ln_edges = np.log(k_min) + np.arange(count * sub + 1) * (log_span / (count * sub))
    h = log_span / (count * sub)
    nodes = np.exp(ln_edges[:-1, None] + h * t)
    vals = nodes**2 * phase_psd(nodes, params, optics, slab_length)
    panel = (vals * w).sum(axis=1) * h
    weights = 4.0 * math.pi * panel.reshape(count, sub).sum(axis=1)
    return SpectralRings(bounds, weights)


def sample_sparse_screen(rings: SpectralRings, rng: np.random.Generator) -> SparseScreen:
    """Draw amplitudes and wave vectors for every ring.

    The order of draws is fixed (radius, angle, real parts, imaginary parts)
    so that a given generator state always yields the same screen.
    """
    n = rings.count
    lo = rings.boundaries[:-1]
    hi = rings.boundaries[1:]
    xi = rng.random(n)
    kmag = np.sqrt(lo**2 + xi * (hi**2 - lo**2))
    kmag = np.clip(kmag, lo, hi)
    angle = 2.0 * math.pi * rng.random(n)
    scale = np.sqrt(0.5 * rings.weights)
    amp = scale * rng.standard_normal(n) + 1j * scale * rng.standard_normal(n)
    return SparseScreen(amp, kmag * np.cos(angle), kmag * np.sin(angle))


def evaluate_screen(screen: SparseScreen, grid: GridSpec) -> np.ndarray:
    """Screen values on every grid node.

    ``phi[y, x] = Re sum_n a_n e^{i ky_n y} e^{i kx_n x}`` is a single real
    matrix product once the ``y`` phasor has been folded into the amplitudes.
    """
    m = len(screen.amplitudes)
    by = _grid_phasors(screen.ky, grid).T * screen.amplitudes
    ex = _grid_phasors(screen.kx, grid)
    left = np.empty((by.shape[0], 2 * m))
    left[:, :m] = by.real
    left[:, m:] = by.imag
    right = np.empty((2 * m, ex.shape[1]))
    right[:m] = ex.real
    np.negative(ex.imag, out=right[m:])
    return left @ right


def _grid_phasors(k, grid):
    """``exp(i k_m x_j)`` for all wave numbers ``k_m`` and grid nodes ``x_j``, shape (m, j).

    The node index is split as ``j = q a + b`` so only ``n/q + q``
    exponentials per wave number are needed.
    """
    n = grid.points_per_axis
    q = 1 << ((n.bit_length() - 1) // 2)
    coarse = np.exp(1j * np.outer(k, (np.arange(n // q) * q - n // 2) * grid.step))
    fine = np.exp(1j * np.outer(k, np.arange(q) * grid.step))
    return (coarse[:, :, None] * fine[:, None, :]).reshape(len(k), n)


def evaluate_points(screen: SparseScreen, x, y) -> np.ndarray:
    """Screen values at arbitrary points by direct summation."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    arg = np.multiply.outer(x, screen.kx) + np.multiply.outer(y, screen.ky)
    return np.real(np.exp(1j * arg) @ screen.amplitudes)


def _fft_coefficients(params, optics, slab_length, n, step, rng):
    dk = 2.0 * math.pi / (n * step)
    k = 2.0 * math.pi * np.fft.fftfreq(n, step)
    kk = np.hypot(k[:, None], k[None, :])
    psd = phase_psd(kk, params, optics, slab_length)
    psd[0, 0] = 0.0
    noise = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return noise * np.sqrt(psd) * dk


def sample_fft_screen(params, optics, slab_length, grid: GridSpec, rng) -> np.ndarray:
    """Spectrally filtered white noise on the discrete frequency lattice.

    Wave numbers below ``2 pi / width`` are absent, which is why these
    screens underestimate large-separation phase differences.
    """
    n = grid.points_per_axis
    coeff = _fft_coefficients(params, optics, slab_length, n, grid.step, rng)
    return np.real(np.fft.ifft2(coeff)) * n * n


def sample_subharmonic_screen(
    params, optics, slab_length, grid: GridSpec, n_subharmonics: int, rng
) -> np.ndarray:
    """FFT screen plus ``n_subharmonics`` levels of 3x3 low-frequency patches.

    Level ``p`` uses spacing ``dk / 3**p`` and the eight patches around the
    origin, each carrying ``Phi_phi(k) dk_p^2`` of variance.  The spatial mean
    of the low-frequency part is removed.
    """
    if n_subharmonics < 0:
        raise ConfigError("number of subharmonic levels must be >= 0")
    phi = sample_fft_screen(params, optics, slab_length, grid, rng)
    if n_subharmonics == 0:
        return phi
    c = grid.coords
    dk = 2.0 * math.pi / grid.width
    low = np.zeros_like(phi)
    offsets = [(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1) if (i, j) != (0, 0)]
    for p in range(1, n_subharmonics + 1):
        dkp = dk / 3.0**p
        for i, j in offsets:
            kx, ky = i * dkp, j * dkp
            amp = math.sqrt(float(phase_psd(math.hypot(kx, ky), params, optics, slab_length))) * dkp
            coef = amp * complex(rng.standard_normal(), rng.standard_normal())
            low += np.real(coef * np.outer(np.exp(1j * ky * c), np.exp(1j * kx * c)))
    return phi + (low - low.mean())


def _shifts(separations, grid):
    shifts = []
    for s in separations:
        m = abs(float(s)) / grid.step
        r = int(round(m))
        if abs(m - r) > 1e-6 * max(1.0, m):
            raise ValueError(f"separation {s} is not a multiple of the grid step {grid.step}")
        if r >= grid.points_per_axis:
            raise ValueError(f"separation {s} exceeds the grid")
        shifts.append(r)
    return shifts


def empirical_structure_function(screens, grid: GridSpec, separations) -> np.ndarray:
    """Mean squared phase difference at on-axis separations.

    Averages over all node pairs along ``x`` and along ``y`` and over the
    supplied screens.
    """
    shifts = _shifts(separations, grid)
    acc = np.zeros(len(shifts))
    count = 0
    for phi in screens:
        phi = np.asarray(phi, dtype=float)
        for i, s in enumerate(shifts):
            if s == 0:
                continue
            dx = phi[:, s:] - phi[:, :-s]
            dy = phi[s:, :] - phi[:-s, :]
            acc[i] += 0.5 * (np.mean(dx * dx) + np.mean(dy * dy))
        count += 1
    if count == 0:
        raise ValueError("no screens supplied")
    return acc / count


def point_pair_structure_function(screens, separations, base_points) -> np.ndarray:
    """Mean squared phase difference of sparse screens at arbitrary separations.

    Each screen is evaluated at ``base_points`` (shape ``(p, 2)``) and at the
    same points shifted by every separation along ``x`` and along ``y``.
    A shift only multiplies each harmonic by ``exp(i k s)``, so one phasor
    block per screen serves all separations.
    """
    seps = np.asarray(separations, dtype=float)
    base = np.asarray(base_points, dtype=float)
    acc = np.zeros(len(seps))
    count = 0
    for screen in screens:
        phasor = np.exp(1j * (np.multiply.outer(base[:, 0], screen.kx) + np.multiply.outer(base[:, 1], screen.ky)))
        a = screen.amplitudes
        ref = np.real(phasor @ a)[:, None]
        shift_x = np.real(phasor @ (a[:, None] * np.exp(1j * np.multiply.outer(screen.kx, seps)))) - ref
        shift_y = np.real(phasor @ (a[:, None] * np.exp(1j * np.multiply.outer(screen.ky, seps)))) - ref
        acc += 0.5 * (np.mean(shift_x**2, axis=0) + np.mean(shift_y**2, axis=0))
        count += 1
    if count == 0:
        raise ValueError("no screens supplied")
    return acc / count


def dump_array(path, values, grid: GridSpec, seed=None) -> Path:
    """Write ``values`` as raw little-endian float64 plus a ``.hdr`` text sidecar.

    Complex arrays are stored as interleaved real/imaginary pairs.
    """
    path = Path(path)
    values = np.asarray(values)
    kind = "complex" if np.iscomplexobj(values) else "real"
    flat = values.astype(np.complex128).view(np.float64) if kind == "complex" else values
    np.ascontiguousarray(flat, dtype="<f8").tofile(path)
    header = path.with_name(path.name + ".hdr")
    header.write_text(
        f"points_per_axis={grid.points_per_axis}\n"
        f"step={grid.step!r}\n"
        f"seed={seed}\n"
        f"values={kind}\n"
        "dtype=<f8\norder=row-major\n"
    )
    return path


def load_array(path) -> np.ndarray:
    path = Path(path)
    meta = dict(
        line.split("=", 1) for line in path.with_name(path.name + ".hdr").read_text().splitlines()
    )
    n = int(meta["points_per_axis"])
    raw = np.fromfile(path, dtype="<f8")
    if meta["values"] == "complex":
        return raw.view(np.complex128).reshape(n, n)
    return raw.reshape(n, n)
