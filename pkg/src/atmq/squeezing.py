"""Quadrature-squeezing transfer through a fluctuating-loss channel with postselection.

Conventions: the vacuum quadrature variance is 0.5 and variances below are
normal-ordered, so vacuum input has variance 0.  With ``T = sqrt(eta)``::

    var_out = <eta> var_in + <dT^2> <x>_in^2
    squeezing_db = 10 log10((0.5 + var_out) / 0.5)

Constant losses scale every sampled ``eta`` by ``10^(-L/10)`` before the
threshold is applied.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pdt import PdtModel

VACUUM_VARIANCE = 0.5


@dataclass(frozen=True)
class SqueezingInput:
    normal_ordered_variance_in: float
    mean_quadrature_in: float = 0.0
    constant_loss_db: float = 0.0

    def __post_init__(self):
        if not self.normal_ordered_variance_in >= -VACUUM_VARIANCE:
            raise ValueError("normal-ordered variance below -0.5 is unphysical")
        if not self.constant_loss_db >= 0:
            raise ValueError("constant loss must be non-negative (dB)")

    @classmethod
    def from_db(cls, squeezing_db: float, mean_quadrature_in: float = 0.0, constant_loss_db: float = 0.0):
        """Input state with quadrature variance ``0.5 * 10^(dB/10)``."""
        var = VACUUM_VARIANCE * (10.0 ** (squeezing_db / 10.0) - 1.0)
        return cls(var, mean_quadrature_in, constant_loss_db)

    @property
    def loss_factor(self) -> float:
        return 10.0 ** (-self.constant_loss_db / 10.0)


@dataclass(frozen=True)
class PostselectionReport:
    eta_min: float
    exceedance: float
    mean_eta: float
    mean_T_sq_fluct: float
    variance_out: float
    squeezing_out_db: float
    note: str = ""


def _retained(samples, eta_min, loss_db=0.0):
    eta = np.asarray(samples, dtype=float).ravel() * 10.0 ** (-loss_db / 10.0)
    if eta.size == 0:
        raise ValueError("no samples")
    kept = eta[eta >= eta_min]
    if kept.size == 0:
        raise ValueError(f"no sample reaches the threshold eta_min={eta_min}")
    return kept, kept.size / eta.size


def postselected_mean_eta(samples, eta_min: float, constant_loss_db: float = 0.0):
    """``(mean, exceedance)`` of the loss-scaled samples at or above ``eta_min``."""
    kept, frac = _retained(samples, eta_min, constant_loss_db)
    return float(kept.mean()), float(frac)


def _report(eta_min, exceedance, mean_eta, mean_t, inp: SqueezingInput, note=""):
    var_t = max(mean_eta - mean_t * mean_t, 0.0)
    out = mean_eta * inp.normal_ordered_variance_in + var_t * inp.mean_quadrature_in**2
    variance = VACUUM_VARIANCE + out
    return PostselectionReport(
        eta_min=float(eta_min),
        exceedance=float(exceedance),
        mean_eta=float(mean_eta),
        mean_T_sq_fluct=float(var_t),
        variance_out=float(out),
        squeezing_out_db=10.0 * math.log10(variance / VACUUM_VARIANCE),
        note=note,
    )


def squeezing_out(samples, eta_min: float, inp: SqueezingInput) -> PostselectionReport:
    kept, frac = _retained(samples, eta_min, inp.constant_loss_db)
    return _report(eta_min, frac, kept.mean(), np.sqrt(kept).mean(), inp)


def _flagged(eta_min, reason):
    nan = float("nan")
    return PostselectionReport(float(eta_min), 0.0, nan, nan, nan, nan, reason)


def squeezing_vs_threshold(samples, thresholds, inp: SqueezingInput) -> list[PostselectionReport]:
    """One report per threshold; thresholds above every sample are flagged, not raised."""
    eta = np.sort(np.asarray(samples, dtype=float).ravel() * inp.loss_factor)
    if eta.size == 0:
        raise ValueError("no samples")
    csum = np.concatenate([[0.0], np.cumsum(eta[::-1])])[::-1]
    croot = np.concatenate([[0.0], np.cumsum(np.sqrt(eta)[::-1])])[::-1]
    rows = []
    for t in np.asarray(thresholds, dtype=float):
        start = int(np.searchsorted(eta, t, side="left"))
        n = eta.size - start
        if n == 0:
            rows.append(_flagged(t, "threshold above every sample"))
            continue
        rows.append(_report(t, n / eta.size, csum[start] / n, croot[start] / n, inp))
    return rows


def squeezing_vs_threshold_model(model: PdtModel, thresholds, inp: SqueezingInput) -> list[PostselectionReport]:
    """Same scan with the postselected moments taken from a PDT model by quadrature."""
    c = inp.loss_factor
    rows = []
    for t in np.asarray(thresholds, dtype=float):
        cut = t / c  # threshold on the loss-free transmittance
        mass = model.integrate(lambda e: np.where(e >= cut, 1.0, 0.0))
        if not mass > 0:
            rows.append(_flagged(t, "threshold above the model support"))
            continue
        mean = c * model.integrate(lambda e: np.where(e >= cut, e, 0.0)) / mass
        root = math.sqrt(c) * model.integrate(lambda e: np.where(e >= cut, np.sqrt(e), 0.0)) / mass
        rows.append(_report(t, mass, mean, root, inp))
    return rows


THRESHOLD_COLUMNS = ("eta_min", "exceedance", "mean_eta", "var_T", "squeezing_db")


def write_threshold_csv(path, reports) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(THRESHOLD_COLUMNS)
        for r in reports:
            vals = (r.eta_min, r.exceedance, r.mean_eta, r.mean_T_sq_fluct, r.squeezing_out_db)
            w.writerow(["NA" if not np.isfinite(v) else repr(float(v)) for v in vals])
    return path


__all__ = [
    "SqueezingInput",
    "PostselectionReport",
    "postselected_mean_eta",
    "squeezing_out",
    "squeezing_vs_threshold",
    "squeezing_vs_threshold_model",
    "write_threshold_csv",
]
