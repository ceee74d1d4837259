"""Domain-randomization registry, sampling distributions, schedules, presets.

A randomization specification is a mapping from registry keys to
``DRParameter`` entries.  Starred keys are multiplicative ratios on the base
vehicle value; the rest are absolute quantities.  Samples are drawn from an
explicit ``numpy.random.Generator`` so callers control the stream (the
engine hands each environment its own counter-based substream).

Keys are always sampled in sorted order so a spec built in any order yields
the same draw sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

RATIO = "ratio"
ABSOLUTE = "absolute"

# key -> (mode, samples one 3-vector instead of a scalar)
REGISTRY = {
    "mass*": (RATIO, False),
    "volume*": (RATIO, False),
    "cobm": (RATIO, False),
    "inertia*": (RATIO, False),
    "added_mass*": (RATIO, False),
    "damping*": (RATIO, False),
    "current_velocity": (ABSOLUTE, False),
    "current_direction": (ABSOLUTE, False),
    "payload_mass*": (RATIO, False),
    "payload_position": (ABSOLUTE, True),
    "time_constant*": (RATIO, False),
    "thrust_coeff*": (RATIO, False),
    "mount_position_jitter": (ABSOLUTE, True),
}

CURRENT_KEYS = ("current_velocity", "current_direction")


class DRSpecError(ValueError):
    pass


@dataclass
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise DRSpecError(f"uniform: lo {self.lo} > hi {self.hi}")

    def support(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.uniform(self.lo, self.hi, size=size)


@dataclass
class Gaussian:
    mu: float
    sigma: float
    clip: tuple[float, float]

    def __post_init__(self):
        if self.sigma < 0:
            raise DRSpecError(f"gaussian: sigma must be >= 0, got {self.sigma}")
        lo, hi = self.clip
        if not lo <= hi:
            raise DRSpecError(f"gaussian: clip lo {lo} > hi {hi}")

    def support(self) -> tuple[float, float]:
        return tuple(self.clip)

    def sample(self, rng: np.random.Generator, size=None):
        return np.clip(rng.normal(self.mu, self.sigma, size=size), *self.clip)


@dataclass
class Piecewise:
    """Piecewise-constant density over contiguous bins."""

    breakpoints: list[float]  # K+1 ascending edges
    densities: list[float]  # K nonnegative weights

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        dens = np.asarray(self.densities, dtype=float)
        if bp.ndim != 1 or bp.size < 2 or np.any(np.diff(bp) <= 0):
            raise DRSpecError("piecewise: breakpoints must be >= 2 strictly ascending values")
        if dens.shape != (bp.size - 1,):
            raise DRSpecError("piecewise: need one density per bin")
        if np.any(dens < 0) or not np.any(dens > 0):
            raise DRSpecError("piecewise: densities must be nonnegative with positive mass")
        self.breakpoints = bp
        self.densities = dens
        mass = dens * np.diff(bp)
        self._cdf = np.cumsum(mass) / mass.sum()

    def support(self) -> tuple[float, float]:
        live = np.nonzero(self.densities > 0)[0]
        return (float(self.breakpoints[live[0]]), float(self.breakpoints[live[-1] + 1]))

    def sample(self, rng: np.random.Generator, size=None):
        u = rng.uniform(0.0, 1.0, size=size)
        idx = np.searchsorted(self._cdf, u, side="left")
        idx = np.minimum(idx, self.densities.size - 1)
        lo_cdf = np.where(idx > 0, self._cdf[np.maximum(idx - 1, 0)], 0.0)
        span = self._cdf[idx] - lo_cdf
        frac = np.where(span > 0, (u - lo_cdf) / np.where(span > 0, span, 1.0), 0.0)
        left = self.breakpoints[idx]
        width = self.breakpoints[idx + 1] - left
        return left + frac * width


@dataclass
class DRParameter:
    key: str
    distribution: Uniform | Gaussian | Piecewise
    mode: str | None = None  # defaults from the registry

    def __post_init__(self):
        if self.key not in REGISTRY:
            raise DRSpecError(f"unknown randomization key '{self.key}'")
        default_mode, _ = REGISTRY[self.key]
        if self.mode is None:
            self.mode = default_mode
        if self.mode not in (RATIO, ABSOLUTE):
            raise DRSpecError(f"{self.key}: mode must be ratio or absolute")
        lo, _ = self.distribution.support()
        if self.mode == RATIO:
            # payload mass may vanish (no payload); every other ratio scales
            # a physical quantity that must stay positive definite.
            if self.key == "payload_mass*":
                if lo < 0:
                    raise DRSpecError(f"{self.key}: ratio support must be >= 0")
            elif lo <= 0:
                raise DRSpecError(f"{self.key}: ratio support must be > 0")

    @property
    def vector_valued(self) -> bool:
        return REGISTRY[self.key][1]


DRSpec = dict[str, DRParameter]


def make_spec(entries: list[DRParameter]) -> DRSpec:
    spec: DRSpec = {}
    for p in entries:
        if p.key in spec:
            raise DRSpecError(f"duplicate randomization key '{p.key}'")
        spec[p.key] = p
    return spec


def _uniform_entry(key: str, lo: float, hi: float) -> DRParameter:
    return DRParameter(key=key, distribution=Uniform(lo, hi))


def preset(name: str) -> DRSpec:
    """Named randomization bundles.

    ``train`` draws each parameter from its training range; ``test_env1``
    and ``test_env2`` are the two held-out point settings (env2 lies outside
    the training support on every axis).
    """
    if name == "train":
        rows = [
            ("mass*", 0.8, 1.2),
            ("volume*", 0.8, 1.2),
            ("cobm", 0.5, 3.0),
            ("inertia*", 0.8, 1.2),
            ("added_mass*", 0.8, 1.2),
            ("damping*", 0.8, 1.2),
            ("current_velocity", 0.0, 0.5),
            ("payload_mass*", 0.0, 0.3),
        ]
    elif name == "test_env1":
        rows = [
            ("mass*", 1.1, 1.1),
            ("volume*", 1.1, 1.1),
            ("cobm", 2.0, 2.0),
            ("inertia*", 1.1, 1.1),
            ("added_mass*", 1.1, 1.1),
            ("damping*", 1.1, 1.1),
            ("current_velocity", 0.2, 0.2),
            ("payload_mass*", 0.2, 0.2),
        ]
    elif name == "test_env2":
        rows = [
            ("mass*", 1.4, 1.4),
            ("volume*", 1.4, 1.4),
            ("cobm", 4.0, 4.0),
            ("inertia*", 1.4, 1.4),
            ("added_mass*", 1.4, 1.4),
            ("damping*", 1.4, 1.4),
            ("current_velocity", 0.8, 0.8),
            ("payload_mass*", 0.4, 0.4),
        ]
    else:
        raise DRSpecError(f"unknown preset '{name}' (train, test_env1, test_env2)")
    return make_spec([_uniform_entry(k, lo, hi) for k, lo, hi in rows])


PRESET_NAMES = ("train", "test_env1", "test_env2")


def sample_overlay(spec: DRSpec, rng: np.random.Generator) -> dict:
    """One draw per parameter, in sorted key order."""
    overlay = {}
    for key in sorted(spec):
        p = spec[key]
        if p.vector_valued:
            overlay[key] = p.distribution.sample(rng, size=3)
        else:
            overlay[key] = float(p.distribution.sample(rng))
    return overlay


def sample_current(spec: DRSpec, rng: np.random.Generator) -> np.ndarray:
    """NED current vector: sampled speed, horizontal direction, zero vertical."""
    if "current_velocity" not in spec:
        return np.zeros(3)
    speed = float(spec["current_velocity"].distribution.sample(rng))
    if "current_direction" in spec:
        heading = float(spec["current_direction"].distribution.sample(rng))
    else:
        heading = rng.uniform(0.0, 2.0 * math.pi)
    return speed * np.array([math.cos(heading), math.sin(heading), 0.0])


@dataclass
class BoundsSchedule:
    """Piecewise-linear evolution of one parameter's uniform bounds."""

    key: str
    waypoints: list[tuple[float, float, float]]  # (progress, lo, hi), ascending

    def __post_init__(self):
        if not self.waypoints:
            raise DRSpecError(f"{self.key}: schedule needs at least one waypoint")
        prog = [w[0] for w in self.waypoints]
        if any(not 0.0 <= t <= 1.0 for t in prog) or sorted(prog) != prog:
            raise DRSpecError(f"{self.key}: waypoint progress must ascend within [0, 1]")
        for t, lo, hi in self.waypoints:
            if not lo <= hi:
                raise DRSpecError(f"{self.key}: lo > hi at progress {t}")

    def bounds_at(self, progress: float) -> tuple[float, float]:
        prog = np.array([w[0] for w in self.waypoints])
        los = np.array([w[1] for w in self.waypoints])
        his = np.array([w[2] for w in self.waypoints])
        return (float(np.interp(progress, prog, los)), float(np.interp(progress, prog, his)))


@dataclass
class DRSchedule:
    """A base spec plus bound schedules for a subset of its keys."""

    base: DRSpec
    schedules: list[BoundsSchedule] = field(default_factory=list)

    def __post_init__(self):
        for s in self.schedules:
            if s.key not in self.base:
                raise DRSpecError(f"schedule key '{s.key}' not in base spec")
            # every waypoint must itself define a valid parameter
            for t, lo, hi in s.waypoints:
                DRParameter(key=s.key, distribution=Uniform(lo, hi),
                            mode=self.base[s.key].mode)


def set_progress(schedule: DRSchedule, progress: float) -> DRSpec:
    """The active parameter set at a training progress in [0, 1]."""
    if not 0.0 <= progress <= 1.0:
        raise DRSpecError(f"progress must be in [0, 1], got {progress}")
    active = dict(schedule.base)
    for s in schedule.schedules:
        lo, hi = s.bounds_at(progress)
        active[s.key] = DRParameter(key=s.key, distribution=Uniform(lo, hi),
                                    mode=schedule.base[s.key].mode)
    return active


@dataclass
class ParameterSummary:
    key: str
    n: int
    min: float
    max: float
    mean: float
    hist_counts: np.ndarray
    hist_edges: np.ndarray


def empirical_check(spec: DRSpec, n_samples: int,
                    rng: np.random.Generator | None = None,
                    bins: int = 20) -> dict[str, ParameterSummary]:
    """Fresh-draw summaries per parameter; backs the dr-check command."""
    if n_samples < 1:
        raise DRSpecError("n_samples must be >= 1")
    if rng is None:
        rng = np.random.default_rng(0)
    out = {}
    for key in sorted(spec):
        p = spec[key]
        size = (n_samples, 3) if p.vector_valued else n_samples
        draws = np.asarray(p.distribution.sample(rng, size=size), dtype=float).ravel()
        lo, hi = p.distribution.support()
        if hi > lo:
            counts, edges = np.histogram(draws, bins=bins, range=(lo, hi))
        else:
            counts, edges = np.histogram(draws, bins=bins)
        out[key] = ParameterSummary(key=key, n=draws.size, min=float(draws.min()),
                                    max=float(draws.max()), mean=float(draws.mean()),
                                    hist_counts=counts, hist_edges=edges)
    return out
