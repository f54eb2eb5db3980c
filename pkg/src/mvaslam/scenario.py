"""Synthetic multipath range scenarios.

A scenario is a set of known anchors, a set of reflective surfaces, and an
agent trajectory.  Each time step yields, per anchor, an unordered batch of
ranges: one per surface via the surface's virtual anchor (detected with
probability p_detect, Gaussian range noise), optionally a direct line-of-
sight range, plus Poisson clutter uniform on [0, clutter_range_max].

Everything is deterministic given the config (including rng_seed): the
trajectory stream and each step's measurement stream are derived from
independent child seeds, so measurement generation is random-access in the
time index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .geometry import Surface, mva_from_surface, reflect_point

SCHEMA_VERSION = 1

_TRAJECTORY_MODES = ("waypoints", "cv")


@dataclass(frozen=True)
class AgentState:
    """Agent kinematic state at one step: position and velocity."""

    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(2)
        v = np.asarray(self.velocity, dtype=float).reshape(2)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "velocity", v)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity])

    @classmethod
    def from_vector(cls, x) -> "AgentState":
        x = np.asarray(x, dtype=float).reshape(4)
        return cls(position=x[:2], velocity=x[2:])


@dataclass(frozen=True)
class MeasurementBatch:
    """Unordered range measurements from one anchor at one time step."""

    anchor_index: int
    time_index: int
    ranges: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.ranges, dtype=float).reshape(-1)
        object.__setattr__(self, "ranges", r)


def propagate_cv(state: AgentState, dt: float, drive) -> AgentState:
    """One constant-velocity step with a piecewise-constant acceleration
    ``drive`` acting over the interval."""
    drive = np.asarray(drive, dtype=float).reshape(2)
    pos = state.position + state.velocity * dt + 0.5 * drive * dt * dt
    vel = state.velocity + drive * dt
    return AgentState(position=pos, velocity=vel)


@dataclass(frozen=True)
class ScenarioConfig:
    """Full description of a synthetic scenario.

    Attributes:
        anchors: (J, 2) known anchor positions.
        surfaces: reflective surfaces (unit normal + positive offset).
        trajectory: dict, either
            {"mode": "waypoints", "waypoints": [[x, y], ...], "laps": int}
            (constant-speed arc-length traversal, closed per lap when
            laps > 1) or
            {"mode": "cv", "start": [x, y, vx, vy]}
            (constant-velocity propagation driven by sigma_drive noise).
        n_steps: number of time steps.
        dt: step duration.
        sigma_range: range measurement noise std.
        p_detect: per-path detection probability.
        mu_clutter: mean clutter count per anchor per step.
        clutter_range_max: clutter is uniform on [0, clutter_range_max].
        include_los: include the direct anchor-agent path.
        sigma_drive: acceleration noise std of the true motion (also the
            value a filter should assume).
        rng_seed: master seed for trajectory and measurement streams.
    """

    anchors: np.ndarray
    surfaces: tuple[Surface, ...]
    trajectory: dict
    n_steps: int
    dt: float = 1.0
    sigma_range: float = 0.1
    p_detect: float = 0.95
    mu_clutter: float = 1.0
    clutter_range_max: float = 30.0
    include_los: bool = True
    sigma_drive: float = 0.0032
    rng_seed: int = 0

    def __post_init__(self):
        anchors = np.asarray(self.anchors, dtype=float)
        if anchors.ndim != 2 or anchors.shape[1] != 2 or len(anchors) == 0:
            raise ConfigError("anchors must be a nonempty (J, 2) array")
        if not np.all(np.isfinite(anchors)):
            raise ConfigError("anchors must be finite")
        surfaces = tuple(self.surfaces)
        if not all(isinstance(s, Surface) for s in surfaces):
            raise ConfigError("surfaces must be Surface instances")
        traj = dict(self.trajectory)
        mode = traj.get("mode")
        if mode not in _TRAJECTORY_MODES:
            raise ConfigError(f"trajectory mode must be one of {_TRAJECTORY_MODES}")
        if mode == "waypoints":
            wps = np.asarray(traj.get("waypoints", []), dtype=float)
            if wps.ndim != 2 or wps.shape[1] != 2 or len(wps) < 2:
                raise ConfigError("waypoints mode needs >= 2 waypoints")
            laps = int(traj.get("laps", 1))
            if laps < 1:
                raise ConfigError("laps must be >= 1")
        else:
            start = np.asarray(traj.get("start", []), dtype=float)
            if start.shape != (4,):
                raise ConfigError("cv mode needs start = [x, y, vx, vy]")
        if self.n_steps < 1:
            raise ConfigError("n_steps must be >= 1")
        for name in ("dt", "sigma_range", "clutter_range_max"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not (0.0 <= self.p_detect <= 1.0):
            raise ConfigError("p_detect must lie in [0, 1]")
        if self.mu_clutter < 0 or self.sigma_drive < 0:
            raise ConfigError("mu_clutter and sigma_drive must be >= 0")
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "surfaces", surfaces)
        object.__setattr__(self, "trajectory", traj)

    @property
    def n_anchors(self) -> int:
        return len(self.anchors)

    def mva_positions(self) -> np.ndarray:
        """(S, 2) true master virtual anchors, one per surface."""
        if not self.surfaces:
            return np.zeros((0, 2))
        return np.stack([mva_from_surface(s) for s in self.surfaces])

    def with_seed(self, rng_seed: int) -> "ScenarioConfig":
        d = self.to_dict()
        d["rng_seed"] = int(rng_seed)
        return ScenarioConfig.from_dict(d)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "anchors": self.anchors.tolist(),
            "surfaces": [{"normal": list(s.normal), "offset": s.offset}
                         for s in self.surfaces],
            "trajectory": _traj_to_jsonable(self.trajectory),
            "n_steps": self.n_steps,
            "dt": self.dt,
            "sigma_range": self.sigma_range,
            "p_detect": self.p_detect,
            "mu_clutter": self.mu_clutter,
            "clutter_range_max": self.clutter_range_max,
            "include_los": self.include_los,
            "sigma_drive": self.sigma_drive,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        version = d.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported scenario schema_version {version}")
        d.pop("notes", None)
        try:
            surfaces = tuple(Surface(normal=tuple(s["normal"]), offset=s["offset"])
                             for s in d.pop("surfaces"))
            return cls(surfaces=surfaces, **d)
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"bad scenario config: {e}") from e

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")


def _traj_to_jsonable(traj: dict) -> dict:
    out = {}
    for k, v in traj.items():
        out[k] = v.tolist() if isinstance(v, np.ndarray) else v
    return out


def _trajectory_rng(config: ScenarioConfig) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((config.rng_seed, 0)))


def _measurement_rng(config: ScenarioConfig, n: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((config.rng_seed, 1, n)))


def _waypoint_path(traj: dict) -> np.ndarray:
    wps = np.asarray(traj["waypoints"], dtype=float)
    laps = int(traj.get("laps", 1))
    if laps == 1:
        return wps
    pts = []
    for _ in range(laps):
        pts.extend(wps)
    pts.append(wps[0])
    return np.asarray(pts)


def generate_trajectory(config: ScenarioConfig) -> list[AgentState]:
    """True agent states for every step, deterministic given the config."""
    n = config.n_steps
    traj = config.trajectory
    if traj["mode"] == "waypoints":
        path = _waypoint_path(traj)
        seg = np.diff(path, axis=0)
        seg_len = np.linalg.norm(seg, axis=1)
        if np.any(seg_len == 0):
            raise ConfigError("repeated consecutive waypoints")
        cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        total = cum[-1]
        s = np.linspace(0.0, total, n) if n > 1 else np.array([0.0])
        idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
        frac = (s - cum[idx]) / seg_len[idx]
        pos = path[idx] + frac[:, None] * seg[idx]
        if n > 1:
            vel = np.diff(pos, axis=0) / config.dt
            vel = np.vstack([vel, vel[-1]])
        else:
            vel = np.zeros((1, 2))
        return [AgentState(position=pos[i], velocity=vel[i]) for i in range(n)]

    rng = _trajectory_rng(config)
    state = AgentState.from_vector(traj["start"])
    states = [state]
    for _ in range(n - 1):
        drive = rng.normal(0.0, config.sigma_drive, size=2)
        state = propagate_cv(state, config.dt, drive)
        states.append(state)
    return states


def measurement_sources(config: ScenarioConfig, anchor_index: int) -> np.ndarray:
    """(S[+1], 2) propagation sources for one anchor: each surface's virtual
    anchor, plus the anchor itself when include_los is set."""
    pa = config.anchors[anchor_index]
    vas = [reflect_point(s, pa) for s in config.surfaces]
    if config.include_los:
        vas.append(pa)
    if not vas:
        return np.zeros((0, 2))
    return np.stack(vas)


def generate_measurements(config: ScenarioConfig, agent: AgentState,
                          n: int) -> list[MeasurementBatch]:
    """Measurement batches for all anchors at step ``n``.

    Per anchor: each source range is detected with probability p_detect and
    perturbed by N(0, sigma_range); Poisson(mu_clutter) clutter ranges are
    uniform on [0, clutter_range_max]; the batch order is shuffled so it
    carries no association information.
    """
    rng = _measurement_rng(config, n)
    batches = []
    for j in range(config.n_anchors):
        sources = measurement_sources(config, j)
        ranges = []
        if len(sources):
            true_r = np.linalg.norm(agent.position - sources, axis=1)
            detected = rng.random(len(sources)) < config.p_detect
            noisy = true_r + rng.normal(0.0, config.sigma_range, size=len(sources))
            ranges.extend(noisy[detected])
        n_clutter = rng.poisson(config.mu_clutter)
        if n_clutter:
            ranges.extend(rng.uniform(0.0, config.clutter_range_max, size=n_clutter))
        ranges = np.asarray(ranges, dtype=float)
        rng.shuffle(ranges)
        batches.append(MeasurementBatch(anchor_index=j, time_index=n, ranges=ranges))
    return batches
