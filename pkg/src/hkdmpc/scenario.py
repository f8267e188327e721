"""Scenario configuration: robot platform, gait/command script, solver and
simulation settings, loaded from YAML.

A scenario is an ordered list of gait segments, each pairing a gait preset
(or raw aperiodic intervals) with a body command. Flight phases get a
parabolic height-reference bump whose apex defaults to the ballistic rise
for the scheduled flight duration ('auto').
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import gait
from .costs import CostWeights
from .gait import ContactSchedule, GaitSpec
from .reference import CommandScript, MotionCommand
from .robot import RobotParams, load_robot_params
from .solver import SolverOptions

_CONFIG_DIR = Path(__file__).parent / "config"
_SCENARIO_DIR = _CONFIG_DIR / "scenarios"

PLAN_DT = 0.01
HORIZON = 0.5


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario configuration."""


@dataclass
class Disturbance:
    time: float
    delta: np.ndarray  # additive 24-entry state impulse


@dataclass
class SimConfig:
    plant_rate: float = 500.0
    mpc_rate: float = 100.0
    noise_std: float = 0.0
    seed: int = 0
    state_bound: float = 1e3
    disturbances: list = field(default_factory=list)

    def __post_init__(self):
        if self.plant_rate < self.mpc_rate:
            raise ScenarioError("plant rate must be at least the MPC rate")
        ratio = self.plant_rate / self.mpc_rate
        if abs(ratio - round(ratio)) > 1e-9:
            raise ScenarioError("plant rate must be an integer multiple of the MPC rate")

    @property
    def ticks_per_plan(self) -> int:
        return int(round(self.plant_rate / self.mpc_rate))


@dataclass
class ControlConfig:
    """Leg-controller settings shared per platform."""

    swing_kp: np.ndarray
    swing_kd: np.ndarray
    swing_apex: float = 0.08
    swing_track_gain: float = 30.0


@dataclass
class Segment:
    gait_name: str
    spec: GaitSpec
    command: MotionCommand
    apex: float | str = "auto"


@dataclass
class Scenario:
    name: str
    params: RobotParams
    weights: CostWeights
    control: ControlConfig
    solver: SolverOptions
    sim: SimConfig
    segments: list
    duration: float
    schedule: ContactSchedule = None
    script: CommandScript = None

    def __post_init__(self):
        if self.schedule is None:
            self.schedule = gait.compose([seg.spec for seg in self.segments], PLAN_DT)
        if self.script is None:
            self.script = build_command_script(self.segments, self.schedule)


def build_command_script(segments: list, schedule: ContactSchedule) -> CommandScript:
    """Per-segment command timeline plus height bumps over scheduled flights."""
    entries = []
    t = schedule.start
    for seg in segments:
        entries.append((t, t + seg.spec.duration, seg.command))
        t += seg.spec.duration
    bumps = []
    g = 9.81
    for t_a, t_b in gait.flight_intervals(schedule):
        seg = _segment_at(segments, schedule.start, t_a)
        apex = seg.apex if seg is not None else "auto"
        if apex == "auto":
            apex = g * (t_b - t_a) ** 2 / 8.0
        if apex > 0:
            bumps.append((t_a, t_b, float(apex)))
    return CommandScript(entries=entries, bumps=bumps)


def _segment_at(segments, start, t):
    acc = start
    for seg in segments:
        if acc - 1e-9 <= t < acc + seg.spec.duration - 1e-9:
            return seg
        acc += seg.spec.duration
    return segments[-1] if segments else None


def _build_gait_spec(raw: dict) -> tuple[str, GaitSpec]:
    duration = float(raw["duration"])
    if "intervals" in raw:
        intervals = tuple(
            tuple((float(a), float(b)) for a, b in leg) for leg in raw["intervals"]
        )
        return "aperiodic", GaitSpec(kind="aperiodic", duration=duration, intervals=intervals)
    name = raw["gait"]
    overrides = dict(raw.get("overrides", {}))
    return name, gait.preset(name, duration, **overrides)


def _weights_from_dict(raw: dict) -> CostWeights:
    return CostWeights.from_diagonals(
        body=raw["body"],
        joint=raw["joint"],
        foot=raw["foot"],
        grf=raw["grf"],
        terminal_scale=raw.get("terminal_scale", 10.0),
    )


def _control_from_dict(raw: dict) -> ControlConfig:
    return ControlConfig(
        swing_kp=np.asarray(raw.get("swing_kp", [40.0, 40.0, 40.0]), dtype=float),
        swing_kd=np.asarray(raw.get("swing_kd", [1.0, 1.0, 1.0]), dtype=float),
        swing_apex=float(raw.get("swing_apex", 0.08)),
        swing_track_gain=float(raw.get("swing_track_gain", 30.0)),
    )


def _parse_disturbance(raw: dict) -> Disturbance:
    delta = np.zeros(24)
    if "delta" in raw:
        delta = np.asarray(raw["delta"], dtype=float)
        if delta.shape != (24,):
            raise ScenarioError("disturbance delta must have 24 entries")
    blocks = {"dtheta": 0, "dp": 3, "domega": 6, "dv": 9}
    for key, off in blocks.items():
        if key in raw:
            delta[off:off + 3] += np.asarray(raw[key], dtype=float)
    return Disturbance(time=float(raw["t"]), delta=delta)


def scenario_path(source: str | Path) -> Path:
    path = Path(source)
    if path.exists():
        return path
    bundled = _SCENARIO_DIR / f"{source}.yaml"
    if bundled.exists():
        return bundled
    raise ScenarioError(f"no scenario at '{source}' and no bundled scenario of that name")


def bundled_scenarios() -> list[str]:
    return sorted(p.stem for p in _SCENARIO_DIR.glob("*.yaml"))


def load_scenario(source: str | Path, seed: int | None = None) -> Scenario:
    """Load a scenario YAML (bundled name or path)."""
    path = scenario_path(source)
    with open(path) as f:
        raw = yaml.safe_load(f)
    try:
        robot_source = raw.get("robot", "a1")
        robot_path = Path(robot_source)
        if not robot_path.exists():
            candidate = path.parent / robot_source
            robot_path = candidate if candidate.exists() else robot_source
        params = load_robot_params(robot_path)

        with open(_platform_file(robot_path)) as f:
            platform_raw = yaml.safe_load(f)
        control_raw = dict(platform_raw.get("control", {}))
        weights_raw = control_raw.pop("weights", None)
        if "weights" in raw:
            weights_raw = raw["weights"]
        if weights_raw is None:
            raise ScenarioError("no cost weights in platform or scenario config")
        weights = _weights_from_dict(weights_raw)
        control = _control_from_dict({**control_raw, **raw.get("control", {})})

        solver = SolverOptions(**raw.get("solver", {}))

        sim_raw = dict(raw.get("sim", {}))
        disturbances = [_parse_disturbance(d) for d in sim_raw.pop("disturbances", [])]
        sim = SimConfig(disturbances=disturbances, **sim_raw)
        if seed is not None:
            sim.seed = seed

        segments = []
        for seg_raw in raw["segments"]:
            name, spec = _build_gait_spec(seg_raw)
            command = MotionCommand(
                height=float(seg_raw["height"]),
                vx=float(seg_raw.get("vx", 0.0)),
                vy=float(seg_raw.get("vy", 0.0)),
                yaw_rate=float(seg_raw.get("yaw_rate", 0.0)),
            )
            segments.append(
                Segment(gait_name=name, spec=spec, command=command,
                        apex=seg_raw.get("apex", "auto"))
            )
        if not segments:
            raise ScenarioError("scenario needs at least one gait segment")

        duration = float(raw.get("duration", sum(s.spec.duration for s in segments)))
    except (KeyError, TypeError, gait.InvalidSpec, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"malformed scenario '{path}': {exc}") from exc

    return Scenario(
        name=raw.get("name", path.stem),
        params=params,
        weights=weights,
        control=control,
        solver=solver,
        sim=sim,
        segments=segments,
        duration=duration,
    )


def _platform_file(robot_source) -> Path:
    path = Path(robot_source)
    if path.exists():
        return path
    return _CONFIG_DIR / f"{robot_source}.yaml"
