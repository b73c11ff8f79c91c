"""Command-line entry point: ``atmq simulate | analyze | verify | squeeze``.

Exit codes: 0 success, 1 I/O error, 2 configuration error, 3 numerical
failure (including a failed ``verify`` check).
"""
from __future__ import annotations

import argparse
import json
import math
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import PRESETS, apply_overrides, desk_scale, load_config, preset
from .errors import ConfigError, ModelInapplicableError, NumericalError, SampleFileError
from .optics import BeamSpec, make_gaussian_beam, vacuum_propagate
from .pdt import (
    BeamGeometry,
    MomentPair,
    beta_from_moments,
    conditional_moments,
    elliptic_params_from_samples,
    elliptic_pdt_analytic,
    elliptic_pdt_semianalytic,
    empirical_pdt,
    lognormal_from_moments,
    total_probability_pdt,
    total_probability_weak_wandering,
    wandering_pdt,
)
from .samplefile import export_csv, load_samples, save_samples
from .sampling import (
    SampleSet,
    long_term_width,
    run_simulation,
    short_term_width,
    transmittance,
    wandering_variance,
)
from .screens import (
    GridSpec,
    build_rings,
    empirical_structure_function,
    point_pair_structure_function,
    sample_fft_screen,
    sample_sparse_screen,
    sample_subharmonic_screen,
)
from .squeezing import SqueezingInput, squeezing_vs_threshold, squeezing_vs_threshold_model, write_threshold_csv
from .stats import covariance_ellipse, ks_statistic, moment_summary, pearson, tangential_width, theta_rotation, write_table
from .turbulence import OpticalParams, TurbulenceParams, default_spectral_bounds, structure_function_theory

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

MODELS = ("beta", "lognormal", "wandering", "elliptic", "elliptic-semianalytic", "total-LN", "total-Beta")
OPTIONAL_MODELS = ("weak-LN", "weak-Beta")
LABELS = {"elliptic-semianalytic": "semi-analytical"}
ELLIPTIC_DRAWS = 100_000
ANALYSIS_STREAM = 2


# analysis -----------------------------------------------------------------------


def build_model(name: str, sample_set: SampleSet, aperture: int):
    """PDT model ``name`` for aperture ``aperture`` of ``sample_set``; may raise ModelInapplicableError."""
    eta = sample_set.eta(aperture)
    radius = float(sample_set.radii[aperture])
    if name == "beta":
        return beta_from_moments(MomentPair.from_samples(eta))
    if name == "lognormal":
        return lognormal_from_moments(MomentPair.from_samples(eta))
    sigma = math.sqrt(wandering_variance(sample_set))
    if name == "wandering":
        return wandering_pdt(BeamGeometry(radius, short_term_width(sample_set), sigma))
    if name == "elliptic":
        params = elliptic_params_from_samples(sample_set, aperture)
        rng = np.random.default_rng(np.random.SeedSequence(sample_set.config.seed, spawn_key=(ANALYSIS_STREAM, aperture)))
        return elliptic_pdt_analytic(params, ELLIPTIC_DRAWS, rng)
    if name == "elliptic-semianalytic":
        return elliptic_pdt_semianalytic(sample_set, aperture)
    if name in ("total-LN", "total-Beta"):
        family = "lognormal" if name == "total-LN" else "beta"
        return total_probability_pdt(conditional_moments(sample_set, aperture), sigma, family)
    if name in ("weak-LN", "weak-Beta"):
        family = "lognormal" if name == "weak-LN" else "beta"
        g = BeamGeometry(radius, short_term_width(sample_set), sigma)
        return total_probability_weak_wandering(MomentPair.from_samples(eta), g, family)
    raise ConfigError(f"unknown model {name!r}; choose from {', '.join(MODELS + OPTIONAL_MODELS)}")


def ks_table(sample_set: SampleSet, models, apertures=None):
    """Rows ``(aperture, R_ap, R_ap/W_LT, KS per model)``; inapplicable models give NaN plus a reason."""
    w_lt = long_term_width(sample_set)
    apertures = range(len(sample_set.radii)) if apertures is None else apertures
    rows, reasons, fitted = [], [], {}
    for a in apertures:
        eta = sample_set.eta(a)
        row = [a, float(sample_set.radii[a]), float(sample_set.radii[a]) / w_lt]
        for name in models:
            try:
                model = build_model(name, sample_set, a)
                row.append(ks_statistic(eta, model).d)
                fitted[(a, name)] = model
            except (ModelInapplicableError, NumericalError) as exc:
                row.append(float("nan"))
                reasons.append((a, name, str(exc)))
        rows.append(row)
    return rows, reasons, fitted


def statistics_rows(sample_set: SampleSet):
    """Scalar characteristics of the sample set as ``(quantity, value)`` pairs."""
    out = []
    x0, y0 = sample_set.x0, sample_set.y0
    for axis, v in (("x0", x0), ("y0", y0)):
        s = moment_summary(v)
        out += [(f"{axis}.mean", s.mean), (f"{axis}.variance", s.variance)]
        out += [(f"{axis}.skewness", s.skewness), (f"{axis}.excess_kurtosis", s.excess_kurtosis)]
    r0 = np.hypot(x0, y0)
    out.append(("W_LT", long_term_width(sample_set)))
    out.append(("sigma_bw", math.sqrt(wandering_variance(sample_set))))
    try:
        out.append(("W_ST", short_term_width(sample_set)))
    except ModelInapplicableError:
        out.append(("W_ST", float("nan")))
    for a in range(len(sample_set.radii)):
        out.append((f"pearson.r0_eta.R{a}", pearson(r0, sample_set.eta(a))))
    widths = np.array([tangential_width(rec)[0] for rec in sample_set if rec.x0 or rec.y0])
    if widths.size == r0.size and np.ptp(widths) > 0 and np.ptp(r0) > 0:
        out.append(("pearson.r0_Wr", pearson(r0, widths)))
    w0 = sample_set.config.beam.W0
    t1 = np.log(sample_set.column("W1sq") / w0**2)
    t2 = np.log(sample_set.column("W2sq") / w0**2)
    tc, ts = theta_rotation(t1, t2)
    for name, v in (("theta_c", tc), ("theta_s", ts)):
        if np.ptp(v) > 0:
            s = moment_summary(v)
            out += [(f"{name}.mean", s.mean), (f"{name}.variance", s.variance)]
            out += [(f"{name}.skewness", s.skewness), (f"{name}.excess_kurtosis", s.excess_kurtosis)]
    return out


def pdt_curves(sample_set: SampleSet, aperture: int, fitted: dict, models, points: int = 201):
    eta = sample_set.eta(aperture)
    grid = np.linspace(0.0, 1.0, points)
    emp = empirical_pdt(eta)
    cols = [grid, emp.pdf(grid), emp.cdf(grid)]
    names = ["eta", "empirical_pdf", "empirical_cdf"]
    for name in models:
        model = fitted.get((aperture, name))
        if model is None:
            continue
        label = LABELS.get(name, name)
        cols += [model.pdf(grid), model.cdf(grid)]
        names += [f"{label}_pdf", f"{label}_cdf"]
    return names, np.column_stack(cols)


def analyze(sample_set: SampleSet, out_dir: Path, models=MODELS, apertures=None) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, reasons, fitted = ks_table(sample_set, models, apertures)
    names = [LABELS.get(m, m) for m in models]
    paths = {}
    paths["ks"] = write_table(
        out_dir / "ks_vs_aperture.csv",
        ["aperture", "R_ap", "R_ap_over_W_LT"] + [f"ks_{n}" for n in names],
        rows,
        "KS distance between the sampled PDT and each model; NA = model inapplicable",
    )
    paths["na"] = write_table(out_dir / "inapplicable.csv", ["aperture", "model", "reason"], reasons, "reasons for NA cells")
    paths["stats"] = write_table(
        out_dir / "statistics.csv", ["quantity", "value"], statistics_rows(sample_set), "sample statistics"
    )
    for row in rows:
        a = row[0]
        cols, data = pdt_curves(sample_set, a, fitted, models)
        paths[f"pdt_R{a}"] = write_table(out_dir / f"pdt_R{a}.csv", cols, data.tolist(), f"PDT curves, aperture {a}")
    w0 = sample_set.config.beam.W0
    t1 = np.log(sample_set.column("W1sq") / w0**2)
    t2 = np.log(sample_set.column("W2sq") / w0**2)
    try:
        ell = covariance_ellipse(t1, t2)
        paths["theta"] = write_table(
            out_dir / "theta_ellipse.csv", ["theta1", "theta2"], ell.contour().tolist(), "level-4 covariance ellipse of (Theta1, Theta2)"
        )
    except ValueError as exc:
        reasons.append(("-", "theta_ellipse", str(exc)))
    return {"rows": rows, "reasons": reasons, "paths": paths}


# verification -------------------------------------------------------------------


def verify_vacuum():
    """Collimated weak-channel beam over 1 km against the analytic width law."""
    beam, optics = BeamSpec(0.02), OpticalParams(809e-9)
    grid = GridSpec(512, 0.3e-3)
    field = vacuum_propagate(make_gaussian_beam(beam, optics, grid), 1000.0)
    width = math.sqrt(_second_moment(field.intensity, grid))
    expect = float(beam.vacuum_width(1000.0, optics.k))
    err = abs(width / expect - 1.0)
    return [("vacuum width at 1 km", err, 0.01)]


def _second_moment(intensity, grid):
    c = grid.coords
    col, row = intensity.sum(axis=0), intensity.sum(axis=1)
    tot = col.sum()
    return 2.0 * (col @ c**2 + row @ c**2) / tot


def verify_aperture():
    beam, optics = BeamSpec(0.02), OpticalParams(809e-9)
    grid = GridSpec(512, 0.3e-3)
    field = vacuum_propagate(make_gaussian_beam(beam, optics, grid), 1000.0)
    w = float(beam.vacuum_width(1000.0, optics.k))
    out = []
    for ratio in (0.25, 0.5, 1.0, 2.0):
        got = transmittance(field, ratio * w)
        out.append((f"aperture law R/W={ratio}", abs(got - (1.0 - math.exp(-2.0 * ratio**2))), 1e-3))
    return out


SCREEN_CHECK = dict(cn2=1e-14, l0=1e-3, L0=80.0, wavelength=808e-9, slab=100.0)


def screen_comparison(n_screens: int, points: int = 512, step: float = 2e-3, seed: int = 0, rings: int = 1024):
    """Structure functions of sparse, FFT and subharmonic screens against theory.

    Separations span ``[5 l0, L0/8]``.  Sparse screens are evaluated at
    point pairs, so they cover the whole band; lattice screens only reach
    separations inside the grid, the rest of their entries are NaN.
    Returns ``(separations, theory, {generator: structure function})``.
    """
    c = SCREEN_CHECK
    params = TurbulenceParams(c["cn2"], c["l0"], c["L0"])
    optics = OpticalParams(c["wavelength"])
    slab = c["slab"]
    grid = GridSpec(points, step)
    lo, hi = 5.0 * params.l0, params.L0 / 8.0
    seps = np.unique(np.round(np.geomspace(lo, hi, 16) / step)) * step
    theory = structure_function_theory(seps, params, optics, slab)
    rng_sparse, rng_base, rng_fft, rng_sub = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4))
    ring_set = build_rings(params, optics, slab, rings, *default_spectral_bounds(params))
    base = rng_base.uniform(-0.5 * grid.width, 0.5 * grid.width, size=(256, 2))
    sparse = point_pair_structure_function(
        (sample_sparse_screen(ring_set, rng_sparse) for _ in range(n_screens)), seps, base
    )
    on_grid = seps < grid.half_width
    lattice = {}
    for name, draw in (
        ("fft", lambda: sample_fft_screen(params, optics, slab, grid, rng_fft)),
        ("subharmonic", lambda: sample_subharmonic_screen(params, optics, slab, grid, 3, rng_sub)),
    ):
        vals = np.full(len(seps), np.nan)
        vals[on_grid] = empirical_structure_function((draw() for _ in range(n_screens)), grid, seps[on_grid])
        lattice[name] = vals
    return seps, theory, {"sparse": sparse, **lattice}


def verify_screens(n_screens: int = 200, points: int = 512):
    seps, theory, res = screen_comparison(n_screens, points)
    for name, emp in res.items():
        err = np.abs(emp / theory - 1.0)
        ok = np.isfinite(err)
        print(f"  {name:12s} max |relative error| {np.max(err[ok]):.3f} over {seps[ok][0]:.3g}..{seps[ok][-1]:.3g} m")
    sparse_err = float(np.max(np.abs(res["sparse"] / theory - 1.0)))
    fft_err = float(np.nanmax(np.abs(res["fft"] / theory - 1.0)))
    # the plain FFT generator must visibly miss large-scale power
    return [("sparse-spectrum structure function", sparse_err, 0.10), ("FFT deficit (0.10 / max error)", 0.10 / fft_err, 1.0)]


VERIFY = {"vacuum": verify_vacuum, "aperture": verify_aperture, "screens": verify_screens}


# commands -----------------------------------------------------------------------


def _resolve_config(args):
    if bool(args.preset) == bool(args.config):
        raise ConfigError("give exactly one of --preset or --config")
    config = preset(args.preset) if args.preset else load_config(args.config)
    config = apply_overrides(config, args.set)
    if args.seed is not None:
        config = replace(config, seed=int(args.seed))
    if args.samples is not None:
        config = apply_overrides(config, [f"samples={int(args.samples)}"])
    if args.desk_scale:
        config = desk_scale(config)
    return config


def cmd_simulate(args) -> int:
    config = _resolve_config(args)
    run_dir = Path(args.out) / config.hash()[:16]
    run_dir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    total = config.samples

    def progress(done, _total):
        if not args.quiet:
            print(f"\r{done}/{total} realizations", end="", file=sys.stderr, flush=True)

    sample_set = run_simulation(config, threads=args.threads, progress=progress)
    if not args.quiet:
        print(file=sys.stderr)
    (run_dir / "config.json").write_text(config.canonical_json() + "\n")
    sample_path = save_samples(sample_set, run_dir / "samples.atmq")
    outputs = {"samples": str(sample_path), "config": str(run_dir / "config.json")}
    if args.csv:
        outputs["csv"] = str(export_csv(sample_set, run_dir / "samples.csv"))
    manifest = {
        "config_hash": config.hash(),
        "seed": config.seed,
        "code_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "started": started,
        "finished": time.time(),
        "outputs": outputs,
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for a, r in enumerate(sample_set.radii):
        print(f"R{a} = {r:.5g} m  <eta> = {sample_set.eta(a).mean():.6f}")
    print(run_dir)
    return EXIT_OK


def cmd_analyze(args) -> int:
    sample_set = load_samples(args.samples)
    models = tuple(m.strip() for m in args.models.split(",") if m.strip())
    for m in models:
        if m not in MODELS + OPTIONAL_MODELS:
            raise ConfigError(f"unknown model {m!r}; choose from {', '.join(MODELS + OPTIONAL_MODELS)}")
    apertures = None if args.aperture is None else [args.aperture]
    if args.aperture is not None and not 0 <= args.aperture < len(sample_set.radii):
        raise ConfigError(f"aperture index {args.aperture} out of range 0..{len(sample_set.radii) - 1}")
    out = Path(args.out) if args.out else Path(args.samples).parent / "analysis"
    result = analyze(sample_set, out, models, apertures)
    print("aperture  R_ap/W_LT  " + "  ".join(f"{LABELS.get(m, m):>15s}" for m in models))
    for row in result["rows"]:
        cells = "  ".join("             NA" if not np.isfinite(v) else f"{v:15.4f}" for v in row[3:])
        print(f"{row[0]:8d}  {row[2]:9.3f}  {cells}")
    for a, name, why in result["reasons"]:
        print(f"NA aperture {a} {name}: {why}")
    print(out)
    return EXIT_OK


def cmd_verify(args) -> int:
    kinds = list(VERIFY) if args.kind == "all" else [args.kind]
    ok = True
    for kind in kinds:
        fn = VERIFY[kind]
        checks = fn(args.screens) if kind == "screens" else fn()
        for name, value, bound in checks:
            passed = value <= bound
            ok &= passed
            print(f"{'PASS' if passed else 'FAIL'}  {name}: {value:.3g} (bound {bound:.3g}, margin {bound - value:+.3g})")
    return EXIT_OK if ok else EXIT_NUMERICAL


def _thresholds(text):
    if ":" in text:
        lo, hi, step = (float(v) for v in text.split(":"))
        return np.round(np.arange(lo, hi + 0.5 * step, step), 12)
    return np.array([float(v) for v in text.split(",")])


def cmd_squeeze(args) -> int:
    sample_set = load_samples(args.samples)
    if not 0 <= args.aperture < len(sample_set.radii):
        raise ConfigError(f"aperture index {args.aperture} out of range 0..{len(sample_set.radii) - 1}")
    eta = sample_set.eta_tracked(args.aperture) if args.tracked else sample_set.eta(args.aperture)
    inp = SqueezingInput.from_db(args.input_db, args.mean_quadrature, args.loss_db)
    thresholds = _thresholds(args.thresholds)
    out = Path(args.out) if args.out else Path(args.samples).parent / f"squeezing_R{args.aperture}.csv"
    reports = squeezing_vs_threshold(eta, thresholds, inp)
    write_threshold_csv(out, reports)
    for r in reports:
        tail = f"  ({r.note})" if r.note else ""
        print(f"eta_min={r.eta_min:.3f}  exceedance={r.exceedance:.4f}  squeezing={r.squeezing_out_db:.4f} dB{tail}")
    for name in args.model or ():
        try:
            model = build_model(name, sample_set, args.aperture)
        except (ModelInapplicableError, NumericalError) as exc:
            print(f"model {name}: NA ({exc})")
            continue
        path = out.with_name(out.stem + f"_{name}.csv")
        write_threshold_csv(path, squeezing_vs_threshold_model(model, thresholds, inp))
        print(path)
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="atmq", description="Turbulent-channel transmittance simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="sample the channel transmittance")
    s.add_argument("--preset", choices=None, help=f"one of {', '.join(PRESETS)}")
    s.add_argument("--config", help="JSON configuration file")
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override, e.g. grid.points_per_axis=256")
    s.add_argument("--desk-scale", action="store_true", help="halve the grid resolution and cap the sample count")
    s.add_argument("--seed", type=int)
    s.add_argument("--samples", type=int)
    s.add_argument("--threads", type=int, default=None, help="worker threads (default: $ATMQ_THREADS or 1)")
    s.add_argument("--out", default="runs", help="parent of the run directory")
    s.add_argument("--csv", action="store_true", help="also export the records as CSV")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="fit PDT models and compute statistics")
    a.add_argument("samples")
    a.add_argument("--models", default=",".join(MODELS))
    a.add_argument("--aperture", type=int)
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)

    v = sub.add_parser("verify", help="self-checks against analytic results")
    v.add_argument("kind", choices=("screens", "vacuum", "aperture", "all"))
    v.add_argument("--screens", type=int, default=200, help="screens per generator for 'screens'")
    v.set_defaults(func=cmd_verify)

    q = sub.add_parser("squeeze", help="squeezing transfer versus postselection threshold")
    q.add_argument("samples")
    q.add_argument("--aperture", type=int, default=0)
    q.add_argument("--tracked", action="store_true", help="use the centroid-tracked transmittance")
    q.add_argument("--input-db", type=float, default=-3.0)
    q.add_argument("--loss-db", type=float, default=0.38)
    q.add_argument("--mean-quadrature", type=float, default=0.0)
    q.add_argument("--thresholds", default="0:0.95:0.05", help="lo:hi:step or a comma list")
    q.add_argument("--model", action="append", help="also scan a PDT model (repeatable)")
    q.add_argument("--out")
    q.set_defaults(func=cmd_squeeze)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SampleFileError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, ModelInapplicableError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
