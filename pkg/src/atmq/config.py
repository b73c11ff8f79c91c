"""Channel configuration: typed records, presets and canonical JSON."""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError
from .optics import BeamSpec
from .screens import GridSpec
from .turbulence import OpticalParams, TurbulenceParams, default_spectral_bounds, rytov_parameter

# per-slab Rytov variance that the automatic screen count must not exceed
MAX_SLAB_RYTOV = 0.1
DESK_SAMPLE_CAP = 5000


@dataclass(frozen=True)
class ScreenSettings:
    count: int | None = None  # None: smallest count meeting MAX_SLAB_RYTOV
    rings: int = 1024
    k_min: float | None = None  # None: 1/(15 L0)
    k_max: float | None = None  # None: 2/l0
    absorbing_mask: bool = False


@dataclass(frozen=True)
class ApertureSettings:
    """Receiver aperture radii.

    With ``relative`` set the radii are multiples of the long-term beam
    width, which is estimated from a pilot run of ``pilot_samples``
    realizations drawn from streams disjoint from the main run.
    """

    radii: tuple = (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0)
    relative: bool = True
    pilot_samples: int = 200


@dataclass(frozen=True)
class ConditionalSettings:
    """Aperture offsets (from the beam centroid) for conditional moments.

    ``offsets=None`` spreads ``count`` offsets over ``[0, span * sigma]``
    with ``sigma`` the pilot estimate of the centroid spread.
    """

    offsets: tuple | None = None
    count: int = 25
    span: float = 7.0
    directions: int = 8


@dataclass(frozen=True)
class ChannelConfig:
    beam: BeamSpec
    turbulence: TurbulenceParams
    optics: OpticalParams
    z_ap: float
    grid: GridSpec
    screens: ScreenSettings = field(default_factory=ScreenSettings)
    apertures: ApertureSettings = field(default_factory=ApertureSettings)
    conditional: ConditionalSettings = field(default_factory=ConditionalSettings)
    samples: int = 100_000
    seed: int = 1
    tracked: bool = True
    desk_scale: bool = False
    label: str = ""

    def __post_init__(self):
        if not self.z_ap > 0:
            raise ConfigError(f"z_ap must be positive, got {self.z_ap}")
        if self.samples < 1:
            raise ConfigError(f"samples must be >= 1, got {self.samples}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if not self.apertures.radii:
            raise ConfigError("apertures.radii must not be empty")
        if any(not r > 0 for r in self.apertures.radii):
            raise ConfigError("apertures.radii must all be positive")
        if not self.apertures.relative and max(self.apertures.radii) >= self.grid.half_width:
            raise ConfigError("apertures.radii must be smaller than the grid half-width")
        if self.apertures.pilot_samples < 2:
            raise ConfigError("apertures.pilot_samples must be >= 2")
        if self.screens.count is not None and self.screens.count < 1:
            raise ConfigError("screens.count must be >= 1")
        if self.screens.rings < 1:
            raise ConfigError("screens.rings must be >= 1")
        lo, hi = self.spectral_bounds
        if not 0 < lo < hi:
            raise ConfigError(f"need 0 < screens.k_min < screens.k_max, got {lo}, {hi}")
        c = self.conditional
        if c.directions < 1 or c.count < 1 or not c.span > 0:
            raise ConfigError("conditional.count, directions and span must be positive")
        if c.offsets is not None and (not c.offsets or min(c.offsets) < 0):
            raise ConfigError("conditional.offsets must be non-empty and non-negative")

    @property
    def n_screens(self) -> int:
        if self.screens.count is not None:
            return self.screens.count
        return screen_count_rule(self.turbulence, self.optics, self.z_ap)

    @property
    def slab_length(self) -> float:
        return self.z_ap / self.n_screens

    @property
    def spectral_bounds(self):
        lo, hi = default_spectral_bounds(self.turbulence)
        return (
            lo if self.screens.k_min is None else self.screens.k_min,
            hi if self.screens.k_max is None else self.screens.k_max,
        )

    @property
    def rytov(self) -> float:
        return rytov_parameter(self.turbulence, self.optics, self.z_ap)

    # serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        s, a, c = self.screens, self.apertures, self.conditional
        return {
            "label": self.label,
            "beam": {"W0": self.beam.W0, "F0": _enc(self.beam.F0)},
            "turbulence": {
                "cn2": self.turbulence.cn2,
                "l0": self.turbulence.l0,
                "L0": self.turbulence.L0,
            },
            "wavelength": self.optics.wavelength,
            "z_ap": self.z_ap,
            "grid": {"points": self.grid.points_per_axis, "step": self.grid.step},
            "screens": {
                "count": s.count,
                "rings": s.rings,
                "k_min": s.k_min,
                "k_max": s.k_max,
                "absorbing_mask": s.absorbing_mask,
            },
            "apertures": {
                "radii": list(a.radii),
                "relative": a.relative,
                "pilot_samples": a.pilot_samples,
            },
            "conditional": {
                "offsets": None if c.offsets is None else list(c.offsets),
                "count": c.count,
                "span": c.span,
                "directions": c.directions,
            },
            "samples": self.samples,
            "seed": self.seed,
            "tracked": self.tracked,
            "desk_scale": self.desk_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelConfig":
        d = copy.deepcopy(d)
        try:
            beam = _take(d, "beam")
            turb = _take(d, "turbulence")
            grid = _take(d, "grid")
            screens = _take(d, "screens", {})
            apert = _take(d, "apertures", {})
            cond = _take(d, "conditional", {})
            cfg = cls(
                beam=_build(BeamSpec, beam, "beam", F0=_dec),
                turbulence=_build(TurbulenceParams, turb, "turbulence"),
                optics=OpticalParams(float(_take(d, "wavelength"))),
                z_ap=float(_take(d, "z_ap")),
                grid=GridSpec(int(_take(grid, "points", path="grid")), float(_take(grid, "step", path="grid"))),
                screens=_build(ScreenSettings, screens, "screens"),
                apertures=_build(ApertureSettings, apert, "apertures", radii=_floats),
                conditional=_build(ConditionalSettings, cond, "conditional", offsets=_floats),
                samples=int(d.pop("samples", 100_000)),
                seed=int(d.pop("seed", 1)),
                tracked=bool(d.pop("tracked", True)),
                desk_scale=bool(d.pop("desk_scale", False)),
                label=str(d.pop("label", "")),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
        if grid:
            raise ConfigError(f"unknown key(s) in grid: {sorted(grid)}")
        if d:
            raise ConfigError(f"unknown top-level key(s): {sorted(d)}")
        return cfg

    def canonical_json(self, indent: int | None = 2) -> str:
        if indent is None:
            return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), allow_nan=False)
        return json.dumps(self.to_dict(), sort_keys=True, indent=indent, allow_nan=False) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json(indent=None).encode()).hexdigest()


def _enc(x):
    return "inf" if math.isinf(x) else x


def _dec(x):
    if isinstance(x, str):
        if x.strip().lower() in ("inf", "+inf", "infinity"):
            return math.inf
        raise ConfigError(f"expected a number or 'inf', got {x!r}")
    return float(x)


def _floats(x):
    return None if x is None else tuple(float(v) for v in x)


_MISSING = object()


def _take(d, key, default=_MISSING, path=""):
    if key in d:
        return d.pop(key)
    if default is _MISSING:
        raise ConfigError(f"missing required key: {path + '.' if path else ''}{key}")
    return default


def _build(cls, d, path, **converters):
    names = set(cls.__dataclass_fields__)
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in {path}: {sorted(unknown)}")
    kwargs = {}
    for k, v in d.items():
        conv = converters.get(k)
        kwargs[k] = conv(v) if conv else v
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def screen_count_rule(turbulence, optics, z_ap, max_slab_rytov=MAX_SLAB_RYTOV) -> int:
    """Smallest slab count whose per-slab Rytov variance is at most ``max_slab_rytov``."""
    if turbulence.cn2 == 0:
        return 1
    total = rytov_parameter(turbulence, optics, z_ap)
    # Rytov variance scales as length^(11/6)
    m = max(1, math.ceil((total / max_slab_rytov) ** (6.0 / 11.0) - 1e-12))
    while rytov_parameter(turbulence, optics, z_ap / m) > max_slab_rytov:
        m += 1
    return m


# presets -----------------------------------------------------------------

_CHANNELS = {
    "weak": dict(cn2=5e-15, z_ap=1000.0, W0=0.02, wavelength=809e-9, points=512, step=0.3e-3, screens=10, mask=False),
    "moderate": dict(cn2=1.5e-14, z_ap=1600.0, W0=0.02, wavelength=809e-9, points=512, step=0.4e-3, screens=10, mask=False),
    "strong": dict(cn2=6e-16, z_ap=50_000.0, W0=0.06, wavelength=808e-9, points=4096, step=1e-3, screens=30, mask=True),
}

PRESETS = (
    "weak-collimated",
    "weak-focused",
    "moderate-collimated",
    "moderate-focused",
    "strong",
    "strong-collimated",
)


def preset(name: str) -> ChannelConfig:
    """Built-in channel; ``<channel>-collimated`` has ``F0 = inf``, ``-focused`` has ``F0 = z_ap``."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    channel, _, mode = name.partition("-")
    p = _CHANNELS[channel]
    focus = p["z_ap"] if mode == "focused" else math.inf
    return ChannelConfig(
        beam=BeamSpec(p["W0"], focus),
        turbulence=TurbulenceParams(p["cn2"], 1e-3, 80.0),
        optics=OpticalParams(p["wavelength"]),
        z_ap=p["z_ap"],
        grid=GridSpec(p["points"], p["step"]),
        screens=ScreenSettings(count=p["screens"], absorbing_mask=p["mask"]),
        label=name if mode else f"{name}-collimated",
    )


def desk_scale(config: ChannelConfig) -> ChannelConfig:
    """Half the grid points at twice the step, at most ``DESK_SAMPLE_CAP`` samples."""
    if config.desk_scale:
        return config
    g = config.grid
    return replace(
        config,
        grid=GridSpec(g.points_per_axis // 2, g.step * 2.0),
        samples=min(config.samples, DESK_SAMPLE_CAP),
        desk_scale=True,
    )


def load_config(path) -> ChannelConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return ChannelConfig.from_dict(data)


def apply_overrides(config: ChannelConfig, overrides) -> ChannelConfig:
    """Apply ``key.path=value`` strings; values are parsed as JSON when possible."""
    if not overrides:
        return config
    d = config.to_dict()
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key.path=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = d
        parts = key.split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError(f"override {key!r}: {p!r} is not a section")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(f"override {key!r}: unknown key {parts[-1]!r}")
        node[parts[-1]] = value
    return ChannelConfig.from_dict(d)
