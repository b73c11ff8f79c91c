"""Model comparison and statistical characterization of sampled channels."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pdt import EmpiricalPdt, PdtModel
from .sampling import SampleRecord


@dataclass(frozen=True)
class KsResult:
    d: float
    n_samples: int
    kind: str  # "empirical-vs-model" or "empirical-vs-empirical"


def ks_statistic(samples, model: PdtModel) -> KsResult:
    """Kolmogorov-Smirnov distance between the sample ECDF and ``model``.

    Empirical models are compared with the two-sample statistic.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    m = x.size
    if m == 0:
        raise ValueError("KS statistic needs at least one sample")
    if isinstance(model, EmpiricalPdt):
        return KsResult(_two_sample(x, model.samples), m, "empirical-vs-empirical")
    f = np.asarray(model.cdf(x), dtype=float)
    i = np.arange(1, m + 1)
    d = max(float(np.max(i / m - f)), float(np.max(f - (i - 1) / m)))
    return KsResult(min(max(d, 0.0), 1.0), m, "empirical-vs-model")


def _two_sample(a, b):
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def pearson(xs, ys) -> float:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("pearson needs two equal-length inputs with at least two entries")
    dx = x - x.mean()
    dy = y - y.mean()
    vx, vy = float(dx @ dx), float(dy @ dy)
    if vx == 0 or vy == 0:
        raise ValueError("pearson is undefined for a constant input")
    return float(np.clip((dx @ dy) / math.sqrt(vx * vy), -1.0, 1.0))


@dataclass(frozen=True)
class MomentSummary:
    """Sample moments; skewness and kurtosis use biased central moments ``m_k = mean((x - xbar)^k)``."""

    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float


def moment_summary(xs) -> MomentSummary:
    x = np.asarray(xs, dtype=float).ravel()
    if x.size < 4:
        raise ValueError("moment summary needs at least four values")
    d = x - x.mean()
    m2 = float(np.mean(d * d))
    if m2 == 0:
        raise ValueError("moment summary is undefined for constant input")
    m3 = float(np.mean(d**3))
    m4 = float(np.mean(d**4))
    return MomentSummary(float(x.mean()), float(np.var(x, ddof=1)), m3 / m2**1.5, m4 / m2**2 - 3.0)


def theta_rotation(theta1, theta2):
    """45-degree rotation ``(Theta_c, Theta_s) = ((T1 + T2), (T1 - T2)) / sqrt(2)``."""
    t1 = np.asarray(theta1, dtype=float)
    t2 = np.asarray(theta2, dtype=float)
    if t1.shape != t2.shape:
        raise ValueError("theta arrays must have equal shapes")
    return (t1 + t2) / math.sqrt(2.0), (t1 - t2) / math.sqrt(2.0)


@dataclass(frozen=True)
class CovarianceEllipse:
    """Level set ``(v - center)^T inverse (v - center) = level``."""

    center: np.ndarray
    covariance: np.ndarray
    inverse: np.ndarray
    level: float
    semi_axes: np.ndarray  # lengths along the principal directions
    angle: float  # of the first principal direction, radians from the first axis

    def contains(self, a, b) -> np.ndarray:
        d = np.stack([np.asarray(a, float) - self.center[0], np.asarray(b, float) - self.center[1]])
        q = np.einsum("i...,ij,j...->...", d, self.inverse, d)
        return q <= self.level

    def contour(self, points: int = 181) -> np.ndarray:
        t = np.linspace(0.0, 2.0 * math.pi, points)
        c, s = math.cos(self.angle), math.sin(self.angle)
        u = self.semi_axes[0] * np.cos(t)
        v = self.semi_axes[1] * np.sin(t)
        return np.column_stack([self.center[0] + c * u - s * v, self.center[1] + s * u + c * v])


def covariance_ellipse(theta1, theta2, level: float = 4.0) -> CovarianceEllipse:
    v = np.stack([np.asarray(theta1, float), np.asarray(theta2, float)])
    cov = np.cov(v)
    evals, evecs = np.linalg.eigh(cov)
    if not evals[0] > 1e-14 * max(evals[1], 1e-300):
        raise ValueError("covariance of the two series is singular")
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    return CovarianceEllipse(
        center=v.mean(axis=1),
        covariance=cov,
        inverse=np.linalg.inv(cov),
        level=float(level),
        semi_axes=np.sqrt(level * evals),
        angle=float(math.atan2(evecs[1, 0], evecs[0, 0])),
    )


def tangential_width(record: SampleRecord, convention: str = "printed"):
    """Spot width along the rotated axis ``x_r = x cos(chi) + y sin(chi)``; returns ``(W_r, r0)``.

    ``convention="printed"`` takes ``tan(chi) = x0 / y0``; ``"radial"`` takes
    ``tan(chi) = y0 / x0`` so that ``x_r`` points along the centroid.
    """
    x0, y0 = record.x0, record.y0
    r0 = math.hypot(x0, y0)
    if r0 == 0:
        raise ValueError("direction is undefined for a centroid at the origin")
    if convention == "printed":
        chi = math.atan2(x0, y0)
    elif convention == "radial":
        chi = math.atan2(y0, x0)
    else:
        raise ValueError(f"unknown convention {convention!r}")
    c, s = math.cos(chi), math.sin(chi)
    srr = c * c * record.Sxx + 2.0 * c * s * record.Sxy + s * s * record.Syy
    return math.sqrt(srr), r0


def write_table(path, columns, rows, schema: str) -> Path:
    """CSV with a leading ``# schema`` comment line, then a header row."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# {schema}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return "NA" if not np.isfinite(v) else repr(float(v))
    return str(v)


__all__ = [
    "KsResult",
    "ks_statistic",
    "pearson",
    "MomentSummary",
    "moment_summary",
    "theta_rotation",
    "CovarianceEllipse",
    "covariance_ellipse",
    "tangential_width",
    "write_table",
]
