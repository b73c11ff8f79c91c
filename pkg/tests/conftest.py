import math
from dataclasses import replace

import numpy as np
import pytest

from atmq.config import ApertureSettings, ConditionalSettings, ScreenSettings, desk_scale, preset
from atmq.screens import GridSpec
from atmq.turbulence import TurbulenceParams


def small_config(samples=24, cn2=None, seed=3, points=128, step=1.2e-3, **kw):
    """Weak channel on a coarse grid; seconds per run."""
    cfg = preset("weak-collimated")
    turb = cfg.turbulence if cn2 is None else TurbulenceParams(cn2, 1e-3, 80.0)
    return replace(
        cfg,
        turbulence=turb,
        grid=GridSpec(points, step),
        screens=ScreenSettings(count=5, rings=256),
        apertures=ApertureSettings(radii=(0.5, 1.0, 1.5), relative=True, pilot_samples=16),
        conditional=ConditionalSettings(count=9),
        samples=samples,
        seed=seed,
        **kw,
    )


@pytest.fixture(scope="session")
def small_set():
    from atmq.sampling import run_simulation

    return run_simulation(small_config(), threads=1)


@pytest.fixture(scope="session")
def vacuum_set():
    from atmq.sampling import run_simulation

    return run_simulation(small_config(samples=4, cn2=0.0), threads=1)


def weak_desk_config(samples=2000, seed=11):
    cfg = desk_scale(preset("weak-collimated"))
    return replace(
        cfg,
        apertures=ApertureSettings(radii=(0.5, 1.0, 1.5), relative=True, pilot_samples=200),
        samples=samples,
        seed=seed,
    )


@pytest.fixture(scope="session")
def weak_desk_set():
    """The desk-scale weak channel (256^2, M=2000); about ten minutes on one core.

    Set ``ATMQ_DESK_CACHE`` to a sample file path to reuse a previous run of
    the same configuration.
    """
    import os

    from atmq.samplefile import load_samples, save_samples
    from atmq.sampling import run_simulation

    cfg = weak_desk_config()
    cache = os.environ.get("ATMQ_DESK_CACHE")
    if cache and os.path.exists(cache):
        cached = load_samples(cache)
        if cached.config == cfg:
            return cached
    result = run_simulation(cfg, threads=1)
    if cache:
        save_samples(result, cache)
    return result


def close(a, b, rel=0.0, abs_=0.0):
    return math.isclose(a, b, rel_tol=rel, abs_tol=abs_)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
