"""Monte Carlo sampling of channel realizations and per-sample observables.

Every realization ``i`` draws its screens from its own random stream,
derived from ``(seed, kind, i)``, so the outcome of a run does not depend on
how realizations are scheduled.  Realizations are processed in fixed
chunks and the chunk accumulators are merged in a fixed pairwise order,
which makes the output bit-identical for any number of worker threads.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import ChannelConfig
from .errors import ConfigError, ModelInapplicableError, NumericalError
from .optics import ComplexField, absorbing_mask, make_gaussian_beam, propagate_through, vacuum_propagate
from .screens import GridSpec, build_rings, evaluate_screen, sample_sparse_screen

CHUNK = 16
SAMPLE_STREAM = 0
PILOT_STREAM = 1
THREADS_ENV = "ATMQ_THREADS"
_SHAPE_COLUMNS = ("x0", "y0", "Sxx", "Sxy", "Syy")


def record_stream(seed: int, kind: int, index: int) -> np.random.Generator:
    """Independent generator for realization ``index`` of stream family ``kind``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(kind, index))))


# aperture integrals ---------------------------------------------------------


class DiscIntegrator:
    """Intensity integrals over circular apertures.

    The aperture indicator is evaluated on a 4x4 sub-lattice of every grid
    cell.  Sub-rows are summed with per-row prefix sums, so the cost of one
    disc is proportional to its diameter rather than its area.
    """

    SUB = 4

    def __init__(self, intensity: np.ndarray, grid: GridSpec):
        n = grid.points_per_axis
        self.grid = grid
        self.edge = -(n // 2) * grid.step - 0.5 * grid.step
        self.far_edge = self.edge + n * grid.step
        self.h = grid.step / self.SUB
        self.prefix = np.zeros((n, n + 1))
        np.cumsum(intensity, axis=1, out=self.prefix[:, 1:])
        self.padded = np.zeros((n, n + 1))
        self.padded[:, :n] = intensity

    def fits(self, radius, cx, cy) -> np.ndarray:
        radius, cx, cy = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (radius, cx, cy)))
        return (
            (cx - radius >= self.edge)
            & (cx + radius <= self.far_edge)
            & (cy - radius >= self.edge)
            & (cy + radius <= self.far_edge)
        )

    def integrate(self, radius, cx, cy) -> np.ndarray:
        """Power inside discs of ``radius`` centred at ``(cx, cy)``; all must fit."""
        radius, cx, cy = (a.ravel() for a in np.broadcast_arrays(
            *(np.asarray(v, dtype=float) for v in (radius, cx, cy))
        ))
        if not np.all(self.fits(radius, cx, cy)):
            raise ValueError("aperture extends beyond the simulation grid")
        if np.any(radius < 0):
            raise ValueError("aperture radius must be non-negative")
        h, e = self.h, self.edge
        m_lo = np.ceil((cy - radius - e) / h - 0.5).astype(np.int64)
        m_hi = np.floor((cy + radius - e) / h - 0.5).astype(np.int64)
        count = np.maximum(m_hi - m_lo + 1, 0)
        total = int(count.sum())
        out = np.zeros(len(radius))
        if total == 0:
            return out
        disc = np.repeat(np.arange(len(radius)), count)
        start = np.cumsum(count) - count
        m = m_lo[disc] + (np.arange(total) - start[disc])
        dy = e + (m + 0.5) * h - cy[disc]
        half = np.sqrt(np.maximum(radius[disc] ** 2 - dy * dy, 0.0))
        xc = cx[disc]
        last = self.SUB * self.grid.points_per_axis - 1
        c_lo = np.clip(np.ceil((xc - half - e) / h - 0.5).astype(np.int64), 0, last + 1)
        c_hi = np.clip(np.floor((xc + half - e) / h - 0.5).astype(np.int64), -1, last)
        row = np.clip(m, 0, last) // self.SUB
        vals = self._cumulative(row, c_hi + 1) - self._cumulative(row, c_lo)
        vals = np.where(c_hi >= c_lo, vals, 0.0)
        out = np.bincount(disc, weights=vals, minlength=len(radius))
        return out * (self.grid.step**2 / self.SUB**2)

    def _cumulative(self, row, c):
        # sum of the first c sub-cells of the row, in units of cell intensity
        q, r = np.divmod(c, self.SUB)
        return self.SUB * self.prefix[row, q] + r * self.padded[row, q]


def transmittance(field: ComplexField, aperture_radius: float, center=(0.0, 0.0)) -> float:
    """Fraction of power collected by a circular aperture, clamped to ``[0, 1]``."""
    if aperture_radius < 0:
        raise ValueError("aperture radius must be non-negative")
    integ = DiscIntegrator(field.intensity, field.grid)
    if not integ.fits(aperture_radius, center[0], center[1]):
        raise ValueError("aperture extends beyond the simulation grid")
    val = integ.integrate(aperture_radius, center[0], center[1])[0]
    return float(min(max(val, 0.0), 1.0))


# beam moments ---------------------------------------------------------------


def _moments(intensity, grid):
    c = grid.coords
    col = intensity.sum(axis=0)
    row = intensity.sum(axis=1)
    total = col.sum()
    if not total > 0:
        raise NumericalError("field has no power")
    x0 = float(col @ c / total)
    y0 = float(row @ c / total)
    dx = c - x0
    dy = c - y0
    sxx = 4.0 * float(col @ (dx * dx)) / total
    syy = 4.0 * float(row @ (dy * dy)) / total
    sxy = 4.0 * float(dy @ intensity @ dx) / total
    return total * grid.step**2, x0, y0, sxx, sxy, syy


def centroid(field: ComplexField):
    """Intensity-weighted mean position ``(x0, y0)``."""
    _, x0, y0, *_ = _moments(field.intensity, field.grid)
    return x0, y0


def spot_matrix(field: ComplexField, r0=None) -> np.ndarray:
    """``S = 4 <(r - r0)(r - r0)^T>`` over the normalized intensity."""
    intensity = field.intensity
    if r0 is None:
        _, x0, y0, sxx, sxy, syy = _moments(intensity, field.grid)
        return np.array([[sxx, sxy], [sxy, syy]])
    c = field.grid.coords
    total = intensity.sum()
    if not total > 0:
        raise NumericalError("field has no power")
    dx = c - r0[0]
    dy = c - r0[1]
    sxx = 4.0 * intensity.sum(axis=0) @ (dx * dx) / total
    syy = 4.0 * intensity.sum(axis=1) @ (dy * dy) / total
    sxy = 4.0 * (dy @ intensity @ dx) / total
    return np.array([[sxx, sxy], [sxy, syy]])


def semiaxes(S):
    """Squared semi-axes ``(W1^2, W2^2)`` of spot matrices ``S`` (shape ``(..., 2, 2)``).

    ``W1^2`` takes the larger eigenvalue when ``Sxy >= 0`` and the smaller one
    otherwise, which keeps the ``W1`` axis in the first quadrant.
    """
    S = np.asarray(S, dtype=float)
    sxx, sxy, syy = S[..., 0, 0], S[..., 0, 1], S[..., 1, 1]
    return _semiaxes(sxx, sxy, syy)


def _semiaxes(sxx, sxy, syy):
    tr = sxx + syy
    det = sxx * syy - sxy * sxy
    if np.any(det <= 0) or np.any(tr <= 0):
        raise ValueError("spot matrix is not positive definite")
    big = 0.5 * (tr + np.sqrt((sxx - syy) ** 2 + 4.0 * sxy * sxy))
    small = det / big
    pos = sxy >= 0
    return np.where(pos, big, small), np.where(pos, small, big)


def semiaxis_angle(sxx, sxy, syy):
    """Angle in ``[0, pi/2]`` between the ``x`` axis and the ``W1`` eigenvector.

    The branch rule of :func:`semiaxes` keeps this eigenvector in the first
    quadrant for either sign of ``Sxy``.
    """
    sxx, sxy, syy = (np.asarray(v, dtype=float) for v in (sxx, sxy, syy))
    w1, _ = _semiaxes(sxx, sxy, syy)
    # two algebraically equivalent eigenvector forms; use the better conditioned one
    ax, ay = sxy, w1 - sxx
    bx, by = w1 - syy, sxy
    use_a = ax * ax + ay * ay >= bx * bx + by * by
    ang = np.arctan2(np.where(use_a, ay, by), np.where(use_a, ax, bx))
    ang = np.mod(ang, np.pi)
    return np.clip(ang, 0.0, 0.5 * np.pi)


# sample sets ----------------------------------------------------------------


@dataclass(frozen=True)
class SampleRecord:
    index: int
    eta: tuple
    x0: float
    y0: float
    Sxx: float
    Sxy: float
    Syy: float
    eta_tracked: tuple
    W1sq: float
    W2sq: float


def record_columns(n_apertures: int):
    return (
        ["index"]
        + [f"eta_R{i}" for i in range(n_apertures)]
        + list(_SHAPE_COLUMNS)
        + [f"etaT_R{i}" for i in range(n_apertures)]
        + ["W1sq", "W2sq"]
    )


@dataclass
class SampleSet:
    """Per-realization observables and ensemble accumulators.

    ``mean_intensity`` is the ensemble mean of ``|u|^2`` at the receiver and
    ``centroid_intensity`` the same average taken after shifting each
    realization so its centroid falls on the central node (to the nearest
    node).  ``cond_sum[a, d]`` holds sums of ``eta`` and ``eta^2`` over records
    and directions for aperture ``a`` displaced by ``offsets[d]`` from the
    centroid; ``cond_count`` counts the terms that fit inside the grid.
    """

    config: ChannelConfig
    radii: np.ndarray
    offsets: np.ndarray
    records: np.ndarray
    mean_intensity: np.ndarray
    centroid_intensity: np.ndarray
    cond_sum: np.ndarray
    cond_count: np.ndarray
    pilot: dict | None = None
    columns: list = field(default_factory=list)

    def __post_init__(self):
        if not self.columns:
            self.columns = record_columns(len(self.radii))
        self._index = {name: i for i, name in enumerate(self.columns)}

    def __len__(self):
        return self.records.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.records[:, self._index[name]]

    def eta(self, aperture: int) -> np.ndarray:
        return self.column(f"eta_R{aperture}")

    def eta_tracked(self, aperture: int) -> np.ndarray:
        return self.column(f"etaT_R{aperture}")

    def spot(self):
        return self.column("Sxx"), self.column("Sxy"), self.column("Syy")

    @property
    def x0(self):
        return self.column("x0")

    @property
    def y0(self):
        return self.column("y0")

    @property
    def grid(self) -> GridSpec:
        return self.config.grid

    def record(self, i: int) -> SampleRecord:
        row = self.records[i]
        n = len(self.radii)
        get = lambda name: float(row[self._index[name]])
        return SampleRecord(
            index=int(row[0]),
            eta=tuple(float(v) for v in row[1 : 1 + n]),
            x0=get("x0"),
            y0=get("y0"),
            Sxx=get("Sxx"),
            Sxy=get("Sxy"),
            Syy=get("Syy"),
            eta_tracked=tuple(float(row[self._index[f"etaT_R{a}"]]) for a in range(n)),
            W1sq=get("W1sq"),
            W2sq=get("W2sq"),
        )

    def __iter__(self):
        return (self.record(i) for i in range(len(self)))


# widths ---------------------------------------------------------------------


def _grid_width_sq(intensity, grid):
    c = grid.coords
    col = intensity.sum(axis=0)
    row = intensity.sum(axis=1)
    total = col.sum()
    if not total > 0:
        raise NumericalError("mean intensity has no power")
    out = []
    for marg in (col, row):
        mean = marg @ c / total
        out.append(4.0 * marg @ (c - mean) ** 2 / total)
    return 0.5 * (out[0] + out[1])


def long_term_width(sample_set: SampleSet) -> float:
    """``W_LT`` from the second moment of the ensemble-mean intensity."""
    return math.sqrt(_grid_width_sq(sample_set.mean_intensity, sample_set.grid))


def wandering_variance(sample_set: SampleSet) -> float:
    """Unbiased variance of one centroid coordinate, averaged over ``x`` and ``y``."""
    if len(sample_set) < 2:
        raise ValueError("need at least two records")
    return 0.5 * (np.var(sample_set.x0, ddof=1) + np.var(sample_set.y0, ddof=1))


def short_term_width(sample_set: SampleSet) -> float:
    """``W_ST = sqrt(W_LT^2 - 4 sigma_bw^2)``."""
    w2 = long_term_width(sample_set) ** 2 - 4.0 * wandering_variance(sample_set)
    if not w2 > 0:
        raise ModelInapplicableError(
            f"W_LT^2 - 4 sigma_bw^2 = {w2:.4g} m^2 is not positive; short-term width undefined"
        )
    return math.sqrt(w2)


# simulation -----------------------------------------------------------------


@dataclass
class _Context:
    config: ChannelConfig
    initial: ComplexField
    rings: object
    mask: np.ndarray | None
    radii: np.ndarray
    offsets: np.ndarray
    directions: np.ndarray  # (K, 2) unit vectors
    observables: bool  # False for pilot runs: intensity and centroid only

    @property
    def grid(self):
        return self.config.grid


def _make_context(config, radii, offsets, observables):
    grid = config.grid
    initial = make_gaussian_beam(config.beam, config.optics, grid)
    initial.amplitude.setflags(write=False)
    rings = None
    if config.turbulence.cn2 > 0:
        lo, hi = config.spectral_bounds
        rings = build_rings(config.turbulence, config.optics, config.slab_length, config.screens.rings, lo, hi)
    mask = absorbing_mask(grid) if config.screens.absorbing_mask else None
    k = config.conditional.directions
    ang = 2.0 * math.pi * np.arange(k) / k
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return _Context(config, initial, rings, mask, np.asarray(radii, float), np.asarray(offsets, float), dirs, observables)


def _propagate(ctx: _Context, rng) -> ComplexField:
    cfg = ctx.config
    if ctx.rings is None and ctx.mask is None:
        return vacuum_propagate(ctx.initial, cfg.z_ap)
    grid = ctx.grid
    if ctx.rings is None:
        zero = np.zeros(ctx.initial.amplitude.shape)
        phases = (zero for _ in range(cfg.n_screens))
    else:
        phases = (evaluate_screen(sample_sparse_screen(ctx.rings, rng), grid) for _ in range(cfg.n_screens))
    return propagate_through(ctx.initial, phases, cfg.slab_length, ctx.mask)


class _Partial:
    """Accumulated sums over a contiguous range of realizations."""

    __slots__ = ("intensity", "centred", "cond", "count")

    def __init__(self, intensity, centred, cond, count):
        self.intensity = intensity
        self.centred = centred
        self.cond = cond
        self.count = count

    def merge(self, later: "_Partial") -> "_Partial":
        return _Partial(
            self.intensity + later.intensity,
            None if self.centred is None else self.centred + later.centred,
            None if self.cond is None else self.cond + later.cond,
            None if self.count is None else self.count + later.count,
        )


def _run_chunk(ctx: _Context, kind: int, start: int, stop: int):
    grid = ctx.grid
    step = grid.step
    n_ap = len(ctx.radii)
    n_off = len(ctx.offsets)
    rows = []
    acc = None
    centred = None
    cond = np.zeros((n_ap, n_off, 2)) if ctx.observables else None
    count = np.zeros((n_ap, n_off)) if ctx.observables else None
    for i in range(start, stop):
        rng = record_stream(ctx.config.seed, kind, i)
        try:
            out = _propagate(ctx, rng)
            intensity = out.intensity
            _, x0, y0, sxx, sxy, syy = _moments(intensity, grid)
        except NumericalError as exc:
            raise NumericalError(f"sample {i}: {exc}") from exc
        acc = intensity.copy() if acc is None else acc + intensity
        if not ctx.observables:
            rows.append((x0, y0))
            continue
        shift = (-int(round(y0 / step)), -int(round(x0 / step)))
        rolled = np.roll(intensity, shift, axis=(0, 1))
        centred = rolled if centred is None else centred + rolled
        rows.append(_observables(ctx, intensity, i, x0, y0, sxx, sxy, syy, cond, count))
    return np.asarray(rows, dtype=float), _Partial(acc, centred, cond, count)


def _observables(ctx, intensity, index, x0, y0, sxx, sxy, syy, cond, count):
    integ = DiscIntegrator(intensity, ctx.grid)
    radii = ctx.radii
    n_ap = len(radii)
    eta = np.clip(integ.integrate(radii, 0.0, 0.0), 0.0, 1.0)
    if ctx.config.tracked:
        tracked = np.clip(integ.integrate(radii, x0, y0), 0.0, 1.0)
    else:
        tracked = np.full(n_ap, np.nan)
    # displaced apertures: (aperture, offset, direction)
    d = ctx.offsets[None, :, None]
    cx = x0 + d * ctx.directions[None, None, :, 0]
    cy = y0 + d * ctx.directions[None, None, :, 1]
    rr = np.broadcast_to(radii[:, None, None], (n_ap, len(ctx.offsets), len(ctx.directions)))
    cx = np.broadcast_to(cx, rr.shape)
    cy = np.broadcast_to(cy, rr.shape)
    ok = integ.fits(rr, cx, cy)
    vals = np.zeros(rr.shape)
    if np.any(ok):
        vals[ok] = np.clip(integ.integrate(rr[ok], cx[ok], cy[ok]), 0.0, 1.0)
    cond[..., 0] += vals.sum(axis=2)
    cond[..., 1] += (vals * vals).sum(axis=2)
    count += ok.sum(axis=2)
    w1, w2 = _semiaxes(np.float64(sxx), np.float64(sxy), np.float64(syy))
    return np.concatenate([[index], eta, [x0, y0, sxx, sxy, syy], tracked, [float(w1), float(w2)]])


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError(f"{THREADS_ENV} must be >= 1")
        return n
    return 1


def _run(ctx, kind, total, threads, progress):
    """Run ``total`` realizations; returns (rows, merged partial)."""
    bounds = [(s, min(s + CHUNK, total)) for s in range(0, total, CHUNK)]
    rows = []
    stack: list[tuple[int, _Partial]] = []
    done = 0

    def absorb(chunk_rows, part):
        nonlocal done
        rows.append(chunk_rows)
        level = 0
        while stack and stack[-1][0] == level:
            _, older = stack.pop()
            part = older.merge(part)
            level += 1
        stack.append((level, part))
        done += len(chunk_rows)
        if progress is not None:
            progress(done, total)

    if threads <= 1:
        for s, e in bounds:
            absorb(*_run_chunk(ctx, kind, s, e))
    else:
        window = 2 * threads
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pending = []
            it = iter(bounds)
            for s, e in it:
                pending.append(pool.submit(_run_chunk, ctx, kind, s, e))
                if len(pending) >= window:
                    break
            while pending:
                fut = pending.pop(0)
                absorb(*fut.result())
                nxt = next(it, None)
                if nxt is not None:
                    pending.append(pool.submit(_run_chunk, ctx, kind, *nxt))
    # fold the remaining partial sums, oldest first
    result = stack[0][1]
    for _, part in stack[1:]:
        result = result.merge(part)
    return np.concatenate(rows, axis=0), result


def pilot_statistics(config: ChannelConfig, threads: int = 1) -> dict:
    """Long-term width and centroid spread from a short run on separate streams."""
    n = min(config.apertures.pilot_samples, max(config.samples, 2))
    ctx = _make_context(config, [], [], observables=False)
    rows, part = _run(ctx, PILOT_STREAM, n, threads, None)
    w_lt = math.sqrt(_grid_width_sq(part.intensity / n, config.grid))
    sigma = math.sqrt(0.5 * (np.var(rows[:, 0], ddof=1) + np.var(rows[:, 1], ddof=1)))
    return {"samples": n, "long_term_width": w_lt, "wandering_std": sigma}


def resolve_geometry(config: ChannelConfig, threads: int = 1):
    """Absolute aperture radii and conditional offsets, running a pilot if needed."""
    need_pilot = config.apertures.relative or config.conditional.offsets is None
    pilot = pilot_statistics(config, threads) if need_pilot else None
    radii = np.asarray(config.apertures.radii, dtype=float)
    if config.apertures.relative:
        radii = radii * pilot["long_term_width"]
    if np.any(radii >= config.grid.half_width):
        raise ConfigError(
            f"aperture radius {radii.max():.4g} m does not fit in the grid half-width {config.grid.half_width:.4g} m"
        )
    c = config.conditional
    if c.offsets is not None:
        offsets = np.asarray(c.offsets, dtype=float)
    else:
        span = c.span * pilot["wandering_std"]
        if not span > 0:
            # no wandering: spread offsets over one beam width instead
            span = pilot["long_term_width"]
        offsets = np.linspace(0.0, span, c.count)
    return radii, offsets, pilot


def run_simulation(
    config: ChannelConfig,
    threads: int | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> SampleSet:
    """Propagate ``config.samples`` realizations and collect their observables."""
    threads = default_threads() if threads is None else int(threads)
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    radii, offsets, pilot = resolve_geometry(config, threads)
    ctx = _make_context(config, radii, offsets, observables=True)
    rows, part = _run(ctx, SAMPLE_STREAM, config.samples, threads, progress)
    m = config.samples
    return SampleSet(
        config=config,
        radii=radii,
        offsets=offsets,
        records=rows,
        mean_intensity=part.intensity / m,
        centroid_intensity=part.centred / m,
        cond_sum=part.cond,
        cond_count=part.count,
        pilot=pilot,
    )
