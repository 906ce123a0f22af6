"""Discrete-time hybrid automaton with eight modes.

The continuous state is the voltage pair; the discrete state is three
timers (substation LTC, branch LTC, inverters) plus the mode executed on
the previous step. Each step evaluates the guards in a fixed priority
order, applies the affine map of the winning mode and then zeroes any
timer whose violation has cleared.

Two simulators share these semantics. :func:`simulate` steps one initial
condition through :func:`step` and keeps the whole trajectory.
:func:`simulate_many` advances an array of initial conditions at once and
keeps only outcomes and oscillation events, which is what grid scans need.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .geometry import in_d, in_w
from .model import (
    SystemParams,
    VoltagePair,
    _inverter_update,
    deadband_signal,
    inverter_step,
    ltc_tap,
)

# Timers are accumulated floats; a guard "z >= d" is evaluated with this
# slack so that sums of T_s land on the delay instead of just below it.
_GUARD_TOL = 1e-9


class Mode(enum.IntEnum):
    M10 = 1  # substation LTC taps up
    M20 = 2  # substation LTC taps down
    M30 = 3  # branch LTC taps up
    M40 = 4  # branch LTC taps down
    M50 = 5  # inverters act
    M60 = 6  # substation tap overshot: restart branch LTC and inverter timers
    M70 = 7  # branch tap overshot: restart substation LTC and inverter timers
    M80 = 8  # wait

    @property
    def label(self) -> str:
        return f"m{self.value}0"

    @classmethod
    def from_label(cls, label: str) -> "Mode":
        return cls(int(label[1]))


class FullState(NamedTuple):
    """Timers ``z1, z2, z3`` (seconds) and the voltage pair."""

    z1: float
    z2: float
    z3: float
    v1: float
    v2: float

    @property
    def v(self) -> VoltagePair:
        return VoltagePair(self.v1, self.v2)

    @classmethod
    def at_rest(cls, v: VoltagePair) -> "FullState":
        return cls(0.0, 0.0, 0.0, float(v[0]), float(v[1]))


def guard_eval(x: FullState, prev: Mode, p: SystemParams, inverters: bool = True) -> Mode:
    """Pick the mode to execute from state ``x``.

    Priority: overshoot resets, then inverters, then the substation LTC,
    then the branch LTC, otherwise wait. With ``inverters=False`` the
    inverter mode never fires, which gives the LTC-only system.
    """
    f1, f2 = deadband_signal(x.v, p)
    if (prev is Mode.M10 and (f1 > 0 or f2 > 0)) or (prev is Mode.M20 and (f1 < 0 or f2 < 0)):
        return Mode.M60
    if (prev is Mode.M30 and (f1 > 0 or f2 > 0)) or (prev is Mode.M40 and (f1 < 0 or f2 < 0)):
        return Mode.M70
    if inverters and x.z3 >= p.d_inv - _GUARD_TOL and (f1 != 0 or f2 != 0):
        return Mode.M50
    total = f1 + f2
    if x.z1 >= p.d_l1 - _GUARD_TOL:
        if total < 0:
            return Mode.M10
        if total > 0:
            return Mode.M20
    if x.z2 >= p.d_l2 - _GUARD_TOL:
        if total < 0:
            return Mode.M30
        if total > 0:
            return Mode.M40
    return Mode.M80


def apply_mode(x: FullState, mode: Mode, p: SystemParams) -> FullState:
    """Affine map of a single mode, without the violation-clear reset.

    Every timer advances by ``T_s``; the timers a mode restarts are set
    to ``T_s`` instead. The inverter mode acts with the inverters whose
    own node is currently outside the deadband.
    """
    ts = p.t_s
    z1, z2, z3 = x.z1 + ts, x.z2 + ts, x.z3 + ts
    v = x.v
    if mode in (Mode.M10, Mode.M20):
        v = ltc_tap(v, 1 if mode is Mode.M10 else -1, p)
        z1 = ts
    elif mode in (Mode.M30, Mode.M40):
        v = ltc_tap(v, 1 if mode is Mode.M30 else -1, p)
        z2 = ts
    elif mode is Mode.M50:
        f = deadband_signal(v, p)
        v = inverter_step(v, (f.f1 != 0, f.f2 != 0), p)
        z3 = ts
    elif mode is Mode.M60:
        z2 = z3 = ts
    elif mode is Mode.M70:
        z1 = z3 = ts
    return FullState(z1, z2, z3, v[0], v[1])


def _clear_timers(x: FullState, p: SystemParams) -> FullState:
    f1, f2 = deadband_signal(x.v, p)
    return FullState(
        x.z1 if f1 != 0 else 0.0,
        x.z2 if f2 != 0 else 0.0,
        x.z3 if (f1 != 0 or f2 != 0) else 0.0,
        x.v1,
        x.v2,
    )


def step(
    x: FullState, prev: Mode, p: SystemParams, inverters: bool = True
) -> tuple[FullState, Mode]:
    """Advance one sample period. Returns the next state and the mode fired."""
    mode = guard_eval(x, prev, p, inverters)
    return _clear_timers(apply_mode(x, mode, p), p), mode


class Status(enum.Enum):
    LEFT_W = "left_w"
    QUIESCENT = "quiescent"
    HORIZON = "horizon"


@dataclass
class Trajectory:
    """Sampled run of the automaton.

    ``states[k]`` is the state at ``times[k]`` and ``modes[k]`` is the
    mode executed from it, so there is one fewer mode than states.
    """

    params: SystemParams
    times: np.ndarray
    states: np.ndarray  # columns z1, z2, z3, v1, v2
    modes: list[Mode]
    status: Status
    inverters: bool = True

    def __len__(self) -> int:
        return len(self.times)

    def state(self, k: int) -> FullState:
        return FullState(*(float(c) for c in self.states[k]))

    @property
    def voltages(self) -> np.ndarray:
        return self.states[:, 3:5]


def _quiet_limit(p: SystemParams) -> int:
    # Number of consecutive in-band samples after which the run is over.
    return int(np.floor(p.d_l2 / p.t_s + _GUARD_TOL)) + 1


def simulate(
    x0: FullState | VoltagePair | tuple[float, float],
    p: SystemParams,
    horizon: float,
    negate_g_at: float | None = None,
    inverters: bool = True,
) -> Trajectory:
    """Run the automaton from ``x0`` for at most ``horizon`` seconds.

    A bare voltage pair starts with all timers at zero. The run stops
    early when the voltages leave W, or once they have stayed inside
    the deadband for longer than the branch LTC delay. ``negate_g_at``
    flips the sign of the inverter gain from that time on.
    """
    if not isinstance(x0, FullState):
        x0 = FullState.at_rest(VoltagePair(*x0))
    n_steps = int(round(horizon / p.t_s))
    flipped = p.replace(g=-p.g) if negate_g_at is not None else p
    states = [x0]
    modes: list[Mode] = []
    prev = Mode.M80
    x = x0
    status = Status.HORIZON
    quiet = 1 if in_d(x.v, p) else 0
    if not in_w(x.v, p):
        status = Status.LEFT_W
        n_steps = 0
    limit = _quiet_limit(p)
    for k in range(n_steps):
        t = k * p.t_s
        active = flipped if negate_g_at is not None and t >= negate_g_at else p
        x, prev = step(x, prev, active, inverters)
        states.append(x)
        modes.append(prev)
        if not in_w(x.v, p):
            status = Status.LEFT_W
            break
        quiet = quiet + 1 if in_d(x.v, p) else 0
        if quiet > limit:
            status = Status.QUIESCENT
            break
    times = np.arange(len(states)) * p.t_s
    return Trajectory(p, times, np.array(states, dtype=float), modes, status, inverters)


class OutcomeKind(enum.Enum):
    QUIESCENT = "Quiescent"
    LANDED_IN_D = "LandedInD"
    LEFT_W = "LeftW"
    STILL_OSCILLATING = "StillOscillating"


@dataclass(frozen=True)
class Outcome:
    kind: OutcomeKind
    time: float | None = None

    def __str__(self) -> str:
        return self.kind.value if self.time is None else f"{self.kind.value}({self.time:g})"


def classify_outcome(traj: Trajectory) -> Outcome:
    """Summarise how a run ended.

    Quiescent means it started inside the deadband. Otherwise the time
    reported is the first entry into the final in-band stretch, or the
    first sample outside W.
    """
    p = traj.params
    v = traj.voltages
    if in_d(VoltagePair(*v[0]), p):
        return Outcome(OutcomeKind.QUIESCENT)
    if traj.status is Status.LEFT_W:
        return Outcome(OutcomeKind.LEFT_W, float(traj.times[-1]))
    inside = [in_d(VoltagePair(*row), p) for row in v]
    if inside[-1]:
        k = len(inside) - 1
        while k > 0 and inside[k - 1]:
            k -= 1
        return Outcome(OutcomeKind.LANDED_IN_D, float(traj.times[k]))
    return Outcome(OutcomeKind.STILL_OSCILLATING)


# --- oscillation detection -------------------------------------------------

# Compressed token codes. Inverter actions are split by which inverters
# acted, since a period requires exactly one of them in each phase.
_INV1, _INV2, _INV12 = 9, 10, 11

ALPHA_PATTERNS: dict[str, tuple[int, ...]] = {
    # v2 under-voltage: branch LTC taps up, v1 overshoots, substation LTC taps down.
    "alpha1": (_INV2, Mode.M30, Mode.M70, _INV1, Mode.M20, Mode.M60),
    # v2 over-voltage.
    "alpha2": (_INV2, Mode.M40, Mode.M70, _INV1, Mode.M10, Mode.M60),
    # v1 under-voltage: substation LTC taps up, v2 overshoots.
    "alpha3": (_INV1, Mode.M10, Mode.M60, _INV2, Mode.M40, Mode.M70),
    # v1 over-voltage.
    "alpha4": (_INV1, Mode.M20, Mode.M60, _INV2, Mode.M30, Mode.M70),
}

# The mode order listed for the first period type in the source material.
# It is the v1 under-voltage order above, not the v2 one; events whose
# mode order equals it are counted separately in reports.
PRINTED_ALPHA1_MODES = (Mode.M50, Mode.M10, Mode.M60, Mode.M50, Mode.M40, Mode.M70)

_PATTERN_ARRAY = np.array([ALPHA_PATTERNS[k] for k in sorted(ALPHA_PATTERNS)], dtype=np.int16)
_PATTERN_NAMES = sorted(ALPHA_PATTERNS)


def _token_code(mode: int, f1: float, f2: float) -> int:
    if mode != Mode.M50:
        return int(mode)
    if f1 != 0 and f2 != 0:
        return _INV12
    return _INV1 if f1 != 0 else _INV2


def token_modes(code: int) -> Mode:
    return Mode.M50 if code >= _INV1 else Mode(code)


@dataclass(frozen=True)
class OscillationEvent:
    """One completed oscillation period.

    ``start_index`` is the first inverter action of the period and
    ``end_index`` the state right after the closing reset mode.
    """

    kind: str
    start_index: int
    end_index: int
    start_time: float
    end_time: float
    v_start: VoltagePair
    v_end: VoltagePair
    from_start: bool  # the period begins with the first action of the run
    after_reset: bool = False  # entered straight from an overshoot reset
    phase_indices: tuple[int, ...] = field(default=(), compare=False)

    @property
    def vdiff_start(self) -> float:
        return self.v_start.vdiff

    @property
    def vdiff_end(self) -> float:
        return self.v_end.vdiff

    @property
    def matches_printed_alpha1(self) -> bool:
        return tuple(token_modes(c) for c in ALPHA_PATTERNS[self.kind]) == PRINTED_ALPHA1_MODES


def detect_sequences(traj: Trajectory) -> list[OscillationEvent]:
    """Find completed oscillation periods in a trajectory.

    Wait steps are dropped and runs of identical inverter actions are
    collapsed to one token. A period is six consecutive tokens matching
    one of :data:`ALPHA_PATTERNS`. Matches do not share tokens: the back
    half of one period and the front half of the next would otherwise
    read as a period of the mirrored type.
    """
    p = traj.params
    tokens: list[tuple[int, int]] = []  # (code, first step index)
    events: list[OscillationEvent] = []
    consumed = 0  # tokens already used by a match; periods never overlap
    for k, mode in enumerate(traj.modes):
        if mode is Mode.M80:
            continue
        f = deadband_signal(VoltagePair(*traj.states[k, 3:5]), p)
        code = _token_code(mode, f.f1, f.f2)
        if code >= _INV1 and tokens and tokens[-1][0] == code:
            continue
        tokens.append((code, k))
        if len(tokens) - consumed < 6:
            continue
        window = tuple(c for c, _ in tokens[-6:])
        for name, pattern in ALPHA_PATTERNS.items():
            if window == pattern:
                first = tokens[-6][1]
                end = k + 1
                events.append(
                    OscillationEvent(
                        kind=name,
                        start_index=first,
                        end_index=end,
                        start_time=float(traj.times[first]),
                        end_time=float(traj.times[end]),
                        v_start=VoltagePair(*map(float, traj.states[first, 3:5])),
                        v_end=VoltagePair(*map(float, traj.states[end, 3:5])),
                        from_start=len(tokens) == 6,
                        after_reset=len(tokens) > 6 and tokens[-7][0] in (Mode.M60, Mode.M70),
                        phase_indices=tuple(i for _, i in tokens[-6:]),
                    )
                )
                consumed = len(tokens)
                break
    return events


# --- batched simulation ------------------------------------------------------


@dataclass
class BatchResult:
    """Outcome of :func:`simulate_many` for ``n`` initial conditions.

    ``status`` holds 0 for horizon, 1 for left W, 2 for quiescent, and
    ``end_time`` the time the run stopped. Events are listed in flat
    arrays indexed by ``event_ic``.
    """

    v0: np.ndarray
    status: np.ndarray
    end_time: np.ndarray
    event_ic: np.ndarray
    event_kind: np.ndarray  # index into sorted pattern names
    event_start: np.ndarray
    event_end: np.ndarray
    event_v_start: np.ndarray
    event_v_end: np.ndarray
    event_from_start: np.ndarray
    event_after_reset: np.ndarray

    kind_names = _PATTERN_NAMES

    def event_counts(self) -> np.ndarray:
        return np.bincount(self.event_ic, minlength=len(self.v0))

    def oscillates_from_start(self) -> np.ndarray:
        """Initial conditions whose first action opens a completed period."""
        out = np.zeros(len(self.v0), dtype=bool)
        out[self.event_ic[self.event_from_start]] = True
        return out


def simulate_many(
    v0: np.ndarray,
    p: SystemParams,
    horizon: float,
    inverters: bool = True,
) -> BatchResult:
    """Vectorised counterpart of :func:`simulate` plus :func:`detect_sequences`.

    All initial conditions start with zero timers. Only the per-run
    outcome and the detected periods are kept, so memory stays linear
    in the number of initial conditions.
    """
    v0 = np.asarray(v0, dtype=float).reshape(-1, 2)
    n = len(v0)
    lo, hi, ts = p.v_minus, p.v_plus, p.t_s
    n_steps = int(round(horizon / ts))
    limit = _quiet_limit(p)

    idx = np.arange(n)
    v1 = v0[:, 0].copy()
    v2 = v0[:, 1].copy()
    z1 = np.zeros(n)
    z2 = np.zeros(n)
    z3 = np.zeros(n)
    prev = np.full(n, int(Mode.M80), dtype=np.int16)
    # Seven slots: the last six are matched, the oldest tells whether the
    # period was entered through an overshoot reset.
    codes = np.zeros((n, 7), dtype=np.int16)
    starts = np.zeros((n, 7), dtype=np.int64)
    vstart = np.zeros((n, 7, 2))
    ntok = np.zeros(n, dtype=np.int64)
    used = np.zeros(n, dtype=np.int64)

    status = np.zeros(n, dtype=np.int8)
    end_time = np.full(n, n_steps * ts)
    in_w0 = in_w((v1, v2), p)
    status[~in_w0] = 1
    end_time[~in_w0] = 0.0
    quiet = in_d((v1, v2), p).astype(np.int64)

    ev_ic, ev_kind, ev_start, ev_end, ev_vs, ev_ve, ev_k0, ev_reset = [], [], [], [], [], [], [], []

    keep = in_w0
    for k in range(n_steps):
        if not keep.all():
            idx, v1, v2, z1, z2, z3, prev, codes, starts, vstart, ntok, used, quiet = (
                a[keep] for a in (idx, v1, v2, z1, z2, z3, prev, codes, starts, vstart, ntok, used, quiet)
            )
        if len(idx) == 0:
            break
        f1 = np.maximum(v1 - hi, 0.0) - np.maximum(lo - v1, 0.0)
        f2 = np.maximum(v2 - hi, 0.0) - np.maximum(lo - v2, 0.0)
        nz1, nz2 = f1 != 0, f2 != 0
        over = (f1 > 0) | (f2 > 0)
        under = (f1 < 0) | (f2 < 0)
        total = f1 + f2

        # Lowest priority first so that higher ones overwrite.
        mode = np.full(len(idx), int(Mode.M80), dtype=np.int16)
        due2 = z2 >= p.d_l2 - _GUARD_TOL
        mode[due2 & (total < 0)] = Mode.M30
        mode[due2 & (total > 0)] = Mode.M40
        due1 = z1 >= p.d_l1 - _GUARD_TOL
        mode[due1 & (total < 0)] = Mode.M10
        mode[due1 & (total > 0)] = Mode.M20
        if inverters:
            mode[(z3 >= p.d_inv - _GUARD_TOL) & (nz1 | nz2)] = Mode.M50
        mode[((prev == Mode.M30) & over) | ((prev == Mode.M40) & under)] = Mode.M70
        mode[((prev == Mode.M10) & over) | ((prev == Mode.M20) & under)] = Mode.M60

        # Affine maps.
        z1 = z1 + ts
        z2 = z2 + ts
        z3 = z3 + ts
        up = (mode == Mode.M10) | (mode == Mode.M30)
        down = (mode == Mode.M20) | (mode == Mode.M40)
        new_v1 = np.where(up, v1 + p.vbar_l, np.where(down, v1 + (-p.vbar_l), v1))
        new_v2 = np.where(up, v2 + p.vbar_l, np.where(down, v2 + (-p.vbar_l), v2))
        inv = mode == Mode.M50
        if inv.any():
            w1, w2 = _inverter_update(v1[inv], v2[inv], nz1[inv].astype(float), nz2[inv].astype(float), p)
            new_v1[inv] = w1
            new_v2[inv] = w2
        z1[(mode == Mode.M10) | (mode == Mode.M20) | (mode == Mode.M70)] = ts
        z2[(mode == Mode.M30) | (mode == Mode.M40) | (mode == Mode.M60)] = ts
        z3[inv | (mode == Mode.M60) | (mode == Mode.M70)] = ts

        # Tokens for oscillation detection, taken before the state moves.
        code = mode.copy()
        code[inv & nz1 & nz2] = _INV12
        code[inv & nz1 & ~nz2] = _INV1
        code[inv & ~nz1 & nz2] = _INV2
        push = (mode != Mode.M80) & ~((code >= _INV1) & (codes[:, -1] == code))
        if push.any():
            rows = np.nonzero(push)[0]
            codes[rows, :-1] = codes[rows, 1:]
            starts[rows, :-1] = starts[rows, 1:]
            vstart[rows, :-1] = vstart[rows, 1:]
            codes[rows, -1] = code[rows]
            starts[rows, -1] = k
            vstart[rows, -1, 0] = v1[rows]
            vstart[rows, -1, 1] = v2[rows]
            ntok[rows] += 1
            hit = (codes[rows, None, 1:] == _PATTERN_ARRAY[None, :, :]).all(axis=2)
            matched = hit.any(axis=1) & (ntok[rows] - used[rows] >= 6)
            if matched.any():
                mrows = rows[matched]
                ev_ic.append(idx[mrows])
                ev_kind.append(np.argmax(hit[matched], axis=1))
                ev_start.append(starts[mrows, 1])
                ev_end.append(np.full(len(mrows), k + 1))
                ev_vs.append(vstart[mrows, 1, :].copy())
                ev_ve.append(np.column_stack([new_v1[mrows], new_v2[mrows]]))
                ev_k0.append(ntok[mrows] == 6)
                ev_reset.append((codes[mrows, 0] == Mode.M60) | (codes[mrows, 0] == Mode.M70))
                used[mrows] = ntok[mrows]

        v1, v2 = new_v1, new_v2
        f1 = np.maximum(v1 - hi, 0.0) - np.maximum(lo - v1, 0.0)
        f2 = np.maximum(v2 - hi, 0.0) - np.maximum(lo - v2, 0.0)
        z1[f1 == 0] = 0.0
        z2[f2 == 0] = 0.0
        z3[(f1 == 0) & (f2 == 0)] = 0.0
        prev = mode

        t_next = (k + 1) * ts
        left = ~in_w((v1, v2), p)
        status[idx[left]] = 1
        end_time[idx[left]] = t_next
        quiet = np.where((f1 == 0) & (f2 == 0), quiet + 1, 0)
        done = (quiet > limit) & ~left
        status[idx[done]] = 2
        end_time[idx[done]] = t_next
        keep = ~(left | done)

    def cat(parts, shape, dtype):
        return np.concatenate(parts) if parts else np.zeros(shape, dtype=dtype)

    return BatchResult(
        v0=v0,
        status=status,
        end_time=end_time,
        event_ic=cat(ev_ic, (0,), np.int64),
        event_kind=cat(ev_kind, (0,), np.int64),
        event_start=cat(ev_start, (0,), np.int64),
        event_end=cat(ev_end, (0,), np.int64),
        event_v_start=cat(ev_vs, (0, 2), float),
        event_v_end=cat(ev_ve, (0, 2), float),
        event_from_start=cat(ev_k0, (0,), bool),
        event_after_reset=cat(ev_reset, (0,), bool),
    )


# --- export --------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """One row per sample; the last row has no mode since nothing fired from it."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["time", "z1", "z2", "z3", "v1", "v2", "mode"])
        for k, (t, row) in enumerate(zip(traj.times, traj.states)):
            mode = traj.modes[k].label if k < len(traj.modes) else ""
            out.writerow([_fmt(t), *(_fmt(c) for c in row), mode])


def write_events_csv(events: list[OscillationEvent], path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["seq", "start", "end", "vdiff_start", "vdiff_end"])
        for e in events:
            out.writerow([e.kind, _fmt(e.start_time), _fmt(e.end_time), _fmt(e.vdiff_start), _fmt(e.vdiff_end)])
