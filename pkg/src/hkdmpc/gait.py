"""Gait library, gait composition, and phase segmentation of contact timelines.

Periodic gaits are described by a leg-independent phase variable (period,
per-leg offset, per-leg stance duty); aperiodic gaits (jumps) by explicit
per-leg contact intervals. Composed schedules are stored as a dense 4 x N
boolean matrix at the planner's step resolution so phase boundaries always
align with integration steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .robot import LEGS, LegIndex

TOUCHDOWN = "touchdown"
TAKEOFF = "takeoff"

_TIME_EPS = 1e-9


class InvalidSpec(ValueError):
    """Gait specification violates its invariants."""


@dataclass(frozen=True)
class GaitSpec:
    """One gait segment: periodic (period/offsets/duty) or aperiodic intervals."""

    kind: str                      # "periodic" | "aperiodic"
    duration: float
    period: float = 0.0
    offsets: tuple = (0.0, 0.0, 0.0, 0.0)
    duty: tuple = (1.0, 1.0, 1.0, 1.0)
    # aperiodic: per-leg list of (start, end) contact intervals within the segment
    intervals: tuple = ((), (), (), ())

    def __post_init__(self):
        if self.kind not in ("periodic", "aperiodic"):
            raise InvalidSpec(f"unknown gait kind '{self.kind}'")
        if self.duration <= 0:
            raise InvalidSpec("segment duration must be positive")
        if self.kind == "periodic":
            if self.period <= 0:
                raise InvalidSpec("period must be positive")
            if any(not 0.0 <= o <= 1.0 for o in self.offsets):
                raise InvalidSpec("offsets must lie in [0, 1]")
            if any(not 0.0 <= d <= 1.0 for d in self.duty):
                raise InvalidSpec("duty fractions must lie in [0, 1]")
        else:
            for leg_intervals in self.intervals:
                prev_end = 0.0
                for start, end in sorted(leg_intervals):
                    if start < -_TIME_EPS or end > self.duration + _TIME_EPS:
                        raise InvalidSpec("aperiodic interval outside the segment")
                    if start < prev_end - _TIME_EPS:
                        raise InvalidSpec("aperiodic intervals overlap")
                    if end <= start:
                        raise InvalidSpec("aperiodic interval must have positive length")
                    prev_end = end

    def contact_at(self, t: float, dt: float) -> np.ndarray:
        """Contact flags at local segment time t (evaluated on the step grid)."""
        k = int(round(t / dt)) if abs(t / dt - round(t / dt)) < 1e-6 else int(t / dt)
        return self._flags_for_step(k, dt)

    def _flags_for_step(self, k: int, dt: float) -> np.ndarray:
        flags = np.zeros(4, dtype=bool)
        if self.kind == "periodic":
            steps_per_period = self.period / dt
            n = int(round(steps_per_period))
            exact = abs(steps_per_period - n) < 1e-9 and n > 0
            for j in range(4):
                if exact:
                    off = int(round(self.offsets[j] * n))
                    duty_steps = int(round(self.duty[j] * n))
                    flags[j] = ((k - off) % n) < duty_steps
                else:
                    phase = ((k * dt) / self.period - self.offsets[j]) % 1.0
                    if phase > 1.0 - _TIME_EPS:
                        phase = 0.0
                    flags[j] = phase < self.duty[j] - _TIME_EPS
        else:
            t = k * dt
            for j in range(4):
                for start, end in self.intervals[j]:
                    if start - _TIME_EPS <= t < end - _TIME_EPS:
                        flags[j] = True
                        break
        return flags


@dataclass
class ContactSchedule:
    """Per-leg boolean contact timeline at step resolution.

    Past its last column the schedule continues: a window slice defers to
    its parent schedule (which still has real columns); past the composed
    end, the final gait segment's periodic pattern keeps running (anchored
    at `tail_start`), or the last contact state holds for aperiodic tails.
    """

    dt: float
    contact: np.ndarray            # (4, N) bool
    start: float = 0.0
    tail: GaitSpec | None = None
    tail_start: float = 0.0        # absolute time the tail segment began
    parent: "ContactSchedule | None" = None
    parent_offset: int = 0         # this schedule's step 0 in parent steps

    def __post_init__(self):
        self.contact = np.asarray(self.contact, dtype=bool)
        if self.contact.ndim != 2 or self.contact.shape[0] != 4 or self.contact.shape[1] < 1:
            raise InvalidSpec("contact matrix must be 4 x N with N >= 1")
        if self.dt <= 0:
            raise InvalidSpec("dt must be positive")

    @property
    def n_steps(self) -> int:
        return self.contact.shape[1]

    @property
    def end(self) -> float:
        return self.start + self.n_steps * self.dt

    def flags_at_step(self, k: int) -> np.ndarray:
        """Contact flags at step k, continuing past the end (see class doc)."""
        if k < self.n_steps:
            return self.contact[:, k]
        if self.parent is not None:
            return self.parent.flags_at_step(self.parent_offset + k)
        if self.tail is not None and self.tail.kind == "periodic":
            local = self.start + k * self.dt - self.tail_start
            return self.tail._flags_for_step(int(round(local / self.dt)), self.dt)
        return self.contact[:, -1]

    def flags_at_time(self, t: float) -> np.ndarray:
        k = int(np.floor((t - self.start) / self.dt + _TIME_EPS))
        return self.flags_at_step(max(k, 0))


@dataclass(frozen=True)
class Phase:
    """Maximal run of constant contact flags, with reset events at its end."""

    start: int
    end: int                       # exclusive
    contact: np.ndarray
    events: dict = field(default_factory=dict)   # LegIndex -> "touchdown"|"takeoff"


def _segment_steps(duration: float, dt: float) -> int:
    steps = duration / dt
    if abs(steps - round(steps)) > 1e-6:
        raise InvalidSpec(f"segment duration {duration} is not a multiple of dt {dt}")
    return int(round(steps))


def build_gait(spec: GaitSpec, dt: float) -> ContactSchedule:
    """Sample one gait segment into a contact schedule."""
    n = _segment_steps(spec.duration, dt)
    contact = np.zeros((4, n), dtype=bool)
    for k in range(n):
        contact[:, k] = spec._flags_for_step(k, dt)
    return ContactSchedule(dt=dt, contact=contact, tail=spec, tail_start=0.0)


def compose(specs: list[GaitSpec], dt: float, start: float = 0.0) -> ContactSchedule:
    """Concatenate gait segments into one timeline."""
    if not specs:
        raise InvalidSpec("gait composition needs at least one segment")
    blocks = []
    t = start
    for spec in specs:
        blocks.append(build_gait(spec, dt).contact)
        t += spec.duration
    contact = np.concatenate(blocks, axis=1)
    tail_start = t - specs[-1].duration
    return ContactSchedule(dt=dt, contact=contact, start=start, tail=specs[-1], tail_start=tail_start)


def window(schedule: ContactSchedule, t0: float, horizon: float) -> ContactSchedule:
    """Receding-horizon slice: horizon/dt steps starting at the step holding t0.

    Past the composed schedule's end the tail pattern continues.
    """
    if t0 < schedule.start - _TIME_EPS:
        raise ValueError(f"window start {t0} precedes schedule start {schedule.start}")
    k0 = int(np.floor((t0 - schedule.start) / schedule.dt + _TIME_EPS))
    n = int(round(horizon / schedule.dt))
    contact = np.empty((4, n), dtype=bool)
    for i in range(n):
        contact[:, i] = schedule.flags_at_step(k0 + i)
    return ContactSchedule(
        dt=schedule.dt,
        contact=contact,
        start=schedule.start + k0 * schedule.dt,
        tail=schedule.tail,
        tail_start=schedule.tail_start,
        parent=schedule,
        parent_offset=k0,
    )


def segment_phases(schedule: ContactSchedule) -> list[Phase]:
    """Split a schedule into constant-contact phases with labeled reset events.

    Events at the final boundary use the schedule's tail continuation, so an
    all-stance schedule followed by an all-stance tail has no trailing resets.
    """
    contact = schedule.contact
    n = contact.shape[1]
    phases = []
    start = 0
    for k in range(1, n + 1):
        flags_next = schedule.flags_at_step(k) if k >= n else contact[:, k]
        if k == n or np.any(flags_next != contact[:, start]):
            events = {}
            for leg in LEGS:
                before, after = contact[leg.idx, start], flags_next[leg.idx]
                if not before and after:
                    events[leg] = TOUCHDOWN
                elif before and not after:
                    events[leg] = TAKEOFF
            phases.append(Phase(start=start, end=k, contact=contact[:, start].copy(), events=events))
            start = k
    return phases


def contact_intervals(schedule: ContactSchedule, leg: LegIndex, t_max: float | None = None):
    """Per-leg (t_start, t_end, in_contact) intervals over [start, t_max).

    Extends past the schedule end via the tail pattern, capped at t_max
    (default: schedule end).
    """
    dt = schedule.dt
    n_total = schedule.n_steps
    if t_max is not None:
        n_total = max(n_total, int(np.ceil((t_max - schedule.start) / dt - _TIME_EPS)))
    out = []
    run_start = 0
    current = bool(schedule.flags_at_step(0)[leg.idx])
    for k in range(1, n_total + 1):
        flag = bool(schedule.flags_at_step(k)[leg.idx]) if k < n_total else None
        if flag != current:
            out.append(
                (schedule.start + run_start * dt, schedule.start + k * dt, current)
            )
            run_start = k
            current = flag
    return out


def flight_intervals(schedule: ContactSchedule) -> list[tuple[float, float]]:
    """Absolute-time intervals where all four legs are off the ground."""
    airborne = ~np.any(schedule.contact, axis=0)
    out = []
    k = 0
    n = schedule.n_steps
    while k < n:
        if airborne[k]:
            j = k
            while j < n and airborne[j]:
                j += 1
            out.append((schedule.start + k * schedule.dt, schedule.start + j * schedule.dt))
            k = j
        else:
            k += 1
    return out


# ---------------------------------------------------------------------------
# Named gait presets. Periods and duty cycles are simulation-tuned defaults,
# overridable from scenario files.

def preset(name: str, duration: float, **overrides) -> GaitSpec:
    """Build a named gait preset ('stand', 'trot', 'bound', 'hop_diagonal',
    'hop_four', 'jump', 'flight') of the given duration."""
    name = name.replace("-", "_")
    if name == "stand":
        return GaitSpec(kind="periodic", duration=duration,
                        period=overrides.get("period", 0.5),
                        offsets=(0.0,) * 4, duty=(1.0,) * 4)
    if name == "trot":
        period = overrides.get("period", 0.36)
        duty = overrides.get("duty", 0.5)
        offsets = overrides.get("offsets", (0.0, 0.5, 0.5, 0.0))
        return GaitSpec(kind="periodic", duration=duration, period=period,
                        offsets=tuple(offsets), duty=(duty,) * 4 if np.isscalar(duty) else tuple(duty))
    if name == "bound":
        period = overrides.get("period", 0.3)
        duty = overrides.get("duty", 0.4)
        offsets = overrides.get("offsets", (0.0, 0.0, 0.5, 0.5))
        return GaitSpec(kind="periodic", duration=duration, period=period,
                        offsets=tuple(offsets), duty=(duty,) * 4 if np.isscalar(duty) else tuple(duty))
    if name == "hop_diagonal":
        # alternating diagonal-pair hops: stance, flight, other pair, flight
        period = overrides.get("period", 0.9)
        duty = overrides.get("duty", 1.0 / 3.0)
        return GaitSpec(kind="periodic", duration=duration, period=period,
                        offsets=(0.0, 0.5, 0.5, 0.0), duty=(duty,) * 4)
    if name == "hop_four":
        period = overrides.get("period", 0.45)
        duty = overrides.get("duty", 2.0 / 3.0)
        return GaitSpec(kind="periodic", duration=duration, period=period,
                        offsets=(0.0,) * 4, duty=(duty,) * 4)
    if name == "jump":
        crouch = overrides.get("crouch", 0.3)
        flight = overrides.get("flight", duration - crouch)
        if crouch + flight > duration + _TIME_EPS:
            raise InvalidSpec("jump crouch+flight exceeds the segment duration")
        stance_tail = duration - crouch - flight
        legs = []
        for _ in range(4):
            iv = [(0.0, crouch)]
            if stance_tail > _TIME_EPS:
                iv.append((crouch + flight, duration))
            legs.append(tuple(iv))
        return GaitSpec(kind="aperiodic", duration=duration, intervals=tuple(legs))
    if name == "flight":
        return GaitSpec(kind="aperiodic", duration=duration, intervals=((), (), (), ()))
    raise InvalidSpec(f"unknown gait preset '{name}'")
