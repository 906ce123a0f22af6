"""Closed-form conditions for hunting and their comparison with simulation.

An oscillation period starts with one node outside the deadband and
the other inside. The first inverter drives its node further out for
one LTC delay, that node's LTC taps, the other node overshoots, and the
roles swap. Four such period types exist, one per side of the deadband
square. All four are handled in a canonical frame where the node that
acts first (``u``) is under-voltage and the other node (``w``) is in
band; the frame is reached by swapping the nodes and/or reflecting
voltages about the reference.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .automaton import (
    Mode,
    OscillationEvent,
    Trajectory,
    classify_outcome,
    detect_sequences,
    simulate,
    simulate_many,
)
from .geometry import HalfPlane, RegionSet, in_d, in_w, intersect_halfplanes, p_bounds, partition_two_ltc
from .model import SystemParams, VoltagePair, inverter_gain_factor


@dataclass(frozen=True)
class Quadrant:
    name: str
    first: int  # index of the node whose inverter acts first
    reflect: bool  # over-voltage side, mapped to under-voltage by reflection

    @property
    def sign(self) -> int:
        """Sign relating the canonical spread ``w - u`` to ``v1 - v2``."""
        return 1 if (self.first == 1) != self.reflect else -1


QUADRANTS = {
    "alpha1": Quadrant("alpha1", first=1, reflect=False),
    "alpha2": Quadrant("alpha2", first=1, reflect=True),
    "alpha3": Quadrant("alpha3", first=0, reflect=False),
    "alpha4": Quadrant("alpha4", first=0, reflect=True),
}


def _canonical(q: Quadrant, v1, v2, p: SystemParams):
    if q.reflect:
        v1, v2 = 2 * p.v_ref - v1, 2 * p.v_ref - v2
    return (v1, v2) if q.first == 1 else (v2, v1)


def _from_canonical(q: Quadrant, w, u, p: SystemParams):
    v1, v2 = (w, u) if q.first == 1 else (u, w)
    if q.reflect:
        v1, v2 = 2 * p.v_ref - v1, 2 * p.v_ref - v2
    return v1, v2


def _counts(q: Quadrant, p: SystemParams, n1: float | None, n2: float | None) -> tuple[float, float]:
    n1 = p.n1 if n1 is None else n1
    n2 = p.n2 if n2 is None else n2
    return (n2, n1) if q.first == 1 else (n1, n2)


def quadrant_of(v: VoltagePair, p: SystemParams) -> Quadrant | None:
    """Period type whose starting condition ``v`` meets, if any."""
    for q in QUADRANTS.values():
        w, u = _canonical(q, v[0], v[1], p)
        if p.v_minus <= w <= p.v_plus and u < p.v_minus:
            return q
    return None


class Variant(enum.Enum):
    # Second-phase drift evaluated at the overshooting node after its tap.
    PROOF = "proof"
    # As printed: evaluated at the first node's post-tap voltage.
    PRINTED = "printed"


def _slacks(w, u, a_f, a_s, p: SystemParams, variant: Variant = Variant.PROOF, tight: bool = False):
    """Slacks of the period conditions in the canonical frame; all must be > 0.

    The four base conditions keep each node on the correct side of the
    band at each milestone. ``tight`` adds the remaining requirements for
    the period to actually happen: the opposite band limits, which only
    bind when the inverters damp (``g > 0``), and persistence of each
    violation until its LTC acts, including the overshoot itself.
    """
    r, lo, hi, t, eta = p.v_ref, p.v_minus, p.v_plus, p.vbar_l, p.eta
    du = a_f * (u - r)
    t1 = u + du + t  # first node after its LTC tap
    t2 = w + eta * du + t  # other node after the same tap
    dw = a_s * ((t2 if variant is Variant.PROOF else t1) - r)
    out = {
        "cond1": w + eta * du - lo,
        "cond2": t1 - lo,
        "cond3": hi - (t1 + eta * dw),
        "cond4": hi - (t2 + dw - t),
    }
    if tight:
        out["cond1_upper"] = hi - (w + eta * du)
        out["cond3_lower"] = t1 + eta * dw - lo
        out["persist1"] = lo - (u + du)
        out["persist2"] = t2 + dw - hi
    return out


@dataclass(frozen=True)
class BasisConditionReport:
    quadrant: str
    slacks: dict[str, float]
    variant: Variant

    @property
    def satisfied(self) -> bool:
        return all(s > 0 for s in self.slacks.values())


def basis_conditions(
    v0: VoltagePair,
    quadrant: str,
    p: SystemParams,
    variant: Variant = Variant.PROOF,
    n1: float | None = None,
    n2: float | None = None,
    tight: bool = False,
) -> BasisConditionReport:
    """Evaluate the conditions for one full period from ``v0``.

    ``n1`` and ``n2`` override the actuation counts derived from the
    delays; the sweep uses that to step through counts directly. Raises
    ``ValueError`` when ``v0`` does not meet the period type's starting
    condition (first node outside the band, the other inside).
    """
    q = QUADRANTS[quadrant]
    if not _precondition(q, float(v0[0]), float(v0[1]), p):
        raise ValueError(f"{tuple(v0)} does not meet the starting condition of {quadrant}")
    w, u = _canonical(q, float(v0[0]), float(v0[1]), p)
    nf, ns = _counts(q, p, n1, n2)
    slacks = _slacks(w, u, inverter_gain_factor(nf, p), inverter_gain_factor(ns, p), p, variant, tight)
    return BasisConditionReport(quadrant, {k: float(v) for k, v in slacks.items()}, variant)


def _precondition(q: Quadrant, v1, v2, p: SystemParams):
    w, u = _canonical(q, v1, v2, p)
    return (p.v_minus <= w) & (w <= p.v_plus) & (u < p.v_minus)


def in_s(
    v,
    p: SystemParams,
    n1: float | None = None,
    n2: float | None = None,
    variant: Variant = Variant.PROOF,
    tight: bool = False,
):
    """Exact membership in S for scalars or arrays.

    S is the set of starting voltages in W from which the four base
    conditions for a complete period hold. The inequalities are strict,
    so boundary points are outside.
    """
    v1, v2 = v[0], v[1]
    out = np.zeros(np.shape(v1), dtype=bool) if np.ndim(v1) else False
    for q in QUADRANTS.values():
        w, u = _canonical(q, v1, v2, p)
        nf, ns = _counts(q, p, n1, n2)
        slacks = _slacks(w, u, inverter_gain_factor(nf, p), inverter_gain_factor(ns, p), p, variant, tight)
        ok = _precondition(q, v1, v2, p)
        for s in slacks.values():
            ok = ok & (s > 0)
        out = out | ok
    return out & in_w((v1, v2), p)


def quadrant_piece(
    q: Quadrant,
    p: SystemParams,
    n1: float | None = None,
    n2: float | None = None,
    variant: Variant = Variant.PROOF,
    tight: bool = False,
):
    """Closed polygon of S restricted to one period type."""
    nf, ns = _counts(q, p, n1, n2)
    a_f, a_s = inverter_gain_factor(nf, p), inverter_gain_factor(ns, p)
    hs = []
    for key in _slacks(0.0, 0.0, a_f, a_s, p, variant, tight):

        def slack(x, y, key=key):
            w, u = _canonical(q, x, y, p)
            return _slacks(w, u, a_f, a_s, p, variant, tight)[key]

        hs.append(HalfPlane.from_affine(slack))
    for bound in ("w_lo", "w_hi", "u_hi"):

        def pre(x, y, bound=bound):
            w, u = _canonical(q, x, y, p)
            return {"w_lo": w - p.v_minus, "w_hi": p.v_plus - w, "u_hi": p.v_minus - u}[bound]

        hs.append(HalfPlane.from_affine(pre))
    return intersect_halfplanes(hs, p_bounds(p))


def build_set_S(
    p: SystemParams,
    n1: float | None = None,
    n2: float | None = None,
    variant: Variant = Variant.PROOF,
    tight: bool = False,
) -> RegionSet:
    """Polygonal S as the union of its four period-type pieces."""
    return RegionSet([quadrant_piece(q, p, n1, n2, variant, tight) for q in QUADRANTS.values()])


def s_pieces(p: SystemParams, **kw) -> dict[str, RegionSet]:
    return {name: RegionSet.of(quadrant_piece(q, p, **kw)) for name, q in QUADRANTS.items()}


def period_landmarks(v0: VoltagePair, p: SystemParams) -> dict[str, VoltagePair]:
    """Predicted voltages at the milestones of one period from ``v0``.

    Keys: ``before_tap1`` (after the first inverter phase), ``after_tap1``,
    ``before_tap2`` and ``after_tap2`` (the period's end state).
    """
    q = quadrant_of(v0, p)
    if q is None:
        raise ValueError(f"{tuple(v0)} does not start an oscillation period")
    w, u = _canonical(q, float(v0[0]), float(v0[1]), p)
    nf, ns = _counts(q, p, None, None)
    du = inverter_gain_factor(nf, p) * (u - p.v_ref)
    t = p.vbar_l
    w1, u1 = w + p.eta * du, u + du
    w2, u2 = w1 + t, u1 + t
    dw = inverter_gain_factor(ns, p) * (w2 - p.v_ref)
    w3, u3 = w2 + dw, u2 + p.eta * dw
    w4, u4 = w3 - t, u3 - t
    return {
        name: VoltagePair(*_from_canonical(q, a, b, p))
        for name, (a, b) in {
            "before_tap1": (w1, u1),
            "after_tap1": (w2, u2),
            "before_tap2": (w3, u3),
            "after_tap2": (w4, u4),
        }.items()
    }


def growth_delta(v0: VoltagePair, p: SystemParams, tap_sign: int = 1) -> float:
    """Predicted change of ``v1 - v2`` over one period starting at ``v0``.

    In the canonical frame the spread ``w - u`` grows by
    ``(eta - 1) * (du - dw)``, where ``dw`` is the second inverter's
    drift evaluated after the first tap. ``tap_sign=-1`` evaluates that
    drift with the tap subtracted instead of added, kept for comparison
    only.
    """
    q = quadrant_of(v0, p)
    if q is None:
        raise ValueError(f"{tuple(v0)} does not start an oscillation period")
    w, u = _canonical(q, float(v0[0]), float(v0[1]), p)
    nf, ns = _counts(q, p, None, None)
    du = inverter_gain_factor(nf, p) * (u - p.v_ref)
    c = w + p.eta * du + tap_sign * p.vbar_l
    dw = inverter_gain_factor(ns, p) * (c - p.v_ref)
    return q.sign * (p.eta - 1.0) * (du - dw)


def _w_node(q: Quadrant, traj: Trajectory, k: int) -> float:
    v1, v2 = traj.states[k, 3], traj.states[k, 4]
    return float(_canonical(q, v1, v2, traj.params)[0])


def induction_terms(traj: Trajectory, event: OscillationEvent) -> tuple[float, float]:
    """Drift of the overshooting node in the next first phase and in this second phase.

    Both are in the canonical frame. When the trajectory stops before
    the next period's first LTC tap, the next-phase term comes from the
    closed form at the period's end state.
    """
    q = QUADRANTS[event.kind]
    p = traj.params
    if len(event.phase_indices) != 6:
        raise ValueError("event does not carry its phase indices")
    k2, k3 = event.phase_indices[3], event.phase_indices[4]
    second = _w_node(q, traj, k3) - _w_node(q, traj, k2)

    k4 = k5 = None
    for k in range(event.end_index, len(traj.modes)):
        mode = traj.modes[k]
        if mode is Mode.M50 and k4 is None:
            k4 = k
        elif mode not in (Mode.M50, Mode.M80):
            k5 = k
            break
    if k4 is not None and k5 is not None and k4 < k5:
        nxt = _w_node(q, traj, k5) - _w_node(q, traj, k4)
    else:
        _, u = _canonical(q, event.v_end[0], event.v_end[1], p)
        nf, _ = _counts(q, p, None, None)
        nxt = p.eta * inverter_gain_factor(nf, p) * (u - p.v_ref)
    return nxt, second


def induction_condition(traj: Trajectory, event: OscillationEvent) -> bool:
    """Sufficient test that the next first-phase tap overshoots again.

    The overshooting node ends the period ``second`` above where it
    overshot to, less one tap; the next period moves it by ``nxt`` and
    adds the tap back. A positive sum keeps it beyond the limit.
    """
    nxt, second = induction_terms(traj, event)
    return nxt + second > 0


def constant_amplitude_margin(p: SystemParams) -> float | None:
    """Excess of the tap size over the deadband width, if any.

    When a tap is larger than the deadband, an LTC-only system started
    within this distance of D can never land inside it.
    """
    c = p.vbar_l - 2.0 * p.eps
    return c if c > 0 else None


@dataclass(frozen=True)
class StripResult:
    in_w_o: bool
    vdiff: float
    threshold: float
    literal: bool  # vdiff below the threshold, as stated
    symmetric: bool  # |vdiff| below the threshold
    overshoot: bool  # the single tap pushes the in-band node out

    @property
    def predicts_oscillation(self) -> bool:
        return self.overshoot


def strip_check(v: VoltagePair, p: SystemParams) -> StripResult:
    """Evaluate the LTC-only oscillation test near the deadband.

    From a side strip one tap fixes the violating node; the LTC-only
    system then oscillates exactly when that tap pushes the other node
    out. That requires ``|vdiff| > 2 eps - vbar``, so ``|vdiff|`` below
    the threshold guarantees landing in D. The literal one-sided form is
    reported too.
    """
    part = partition_two_ltc(p)
    strip = part.classify(v) == "W_o"
    vdiff = float(v[0] - v[1])
    threshold = 2.0 * p.eps - p.vbar_l
    overshoot = False
    if strip:
        f_first = (v[0] < p.v_minus or v[0] > p.v_plus)
        i, j = (0, 1) if f_first else (1, 0)
        direction = 1 if v[i] < p.v_minus else -1
        other = v[j] + direction * p.vbar_l
        overshoot = other < p.v_minus or other > p.v_plus
    return StripResult(
        in_w_o=strip,
        vdiff=vdiff,
        threshold=threshold,
        literal=strip and vdiff < threshold,
        symmetric=strip and abs(vdiff) < threshold,
        overshoot=overshoot,
    )


@dataclass(frozen=True)
class AnalysisReport:
    ic: VoltagePair
    in_s: bool
    predicted: str
    simulated: str
    periods: int
    from_start: bool
    agreement: bool

    def to_dict(self) -> dict:
        return {
            "ic": list(self.ic),
            "in_s": self.in_s,
            "predicted": self.predicted,
            "simulated": self.simulated,
            "periods": self.periods,
            "from_start": self.from_start,
            "agreement": self.agreement,
        }


def classify_ic(v0: VoltagePair, p: SystemParams, horizon: float = 600.0) -> AnalysisReport:
    """Compare the S prediction for ``v0`` with a simulation from it.

    Only a period that starts with the run's first action tests the
    prediction; a run can drift into S later and oscillate from there.
    Landing in S without oscillating is allowed, since S is necessary
    but not sufficient.
    """
    v0 = VoltagePair(float(v0[0]), float(v0[1]))
    member = bool(in_s(v0, p))
    traj = simulate(v0, p, horizon)
    events = detect_sequences(traj)
    from_start = bool(events) and events[0].from_start
    return AnalysisReport(
        ic=v0,
        in_s=member,
        predicted="OscillationPossible" if member else "NoOscillation",
        simulated=str(classify_outcome(traj)),
        periods=len(events),
        from_start=from_start,
        agreement=member or not from_start,
    )


@dataclass
class GridScan:
    params: SystemParams
    v1: np.ndarray
    v2: np.ndarray
    in_s: np.ndarray
    status: np.ndarray
    end_time: np.ndarray
    from_start: np.ndarray
    periods: np.ndarray
    event_v_start: np.ndarray
    event_in_s: np.ndarray
    event_aligned: np.ndarray  # period starts with timers in step: at the first action or after a reset

    @property
    def violations(self) -> np.ndarray:
        """Grid indices that oscillate from their first action but lie outside S."""
        return np.nonzero(self.from_start & ~self.in_s)[0]

    def outcome_labels(self) -> np.ndarray:
        labels = np.array(["StillOscillating", "LeftW", "LandedInD"], dtype=object)[self.status]
        labels[in_d((self.v1, self.v2), self.params)] = "Quiescent"
        return labels


def grid_points(p: SystemParams, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Cell-centred grid over P, keeping only points in W."""
    x0, x1, _, _ = p_bounds(p)
    axis = np.arange(x0 + step / 2, x1, step)
    g1, g2 = np.meshgrid(axis, axis, indexing="ij")
    v1, v2 = g1.ravel(), g2.ravel()
    keep = in_w((v1, v2), p)
    return v1[keep], v2[keep]


def scan_grid(
    p: SystemParams, step: float, horizon: float = 600.0, chunk: int = 50_000, tight: bool = False
) -> GridScan:
    """Simulate every grid point of W and record S membership and periods."""
    v1, v2 = grid_points(p, step)
    parts = []
    for i in range(0, len(v1), chunk):
        parts.append(simulate_many(np.column_stack([v1[i : i + chunk], v2[i : i + chunk]]), p, horizon))
    status = np.concatenate([b.status for b in parts]) if parts else np.zeros(0, dtype=np.int8)
    end_time = np.concatenate([b.end_time for b in parts]) if parts else np.zeros(0)
    from_start = np.concatenate([b.oscillates_from_start() for b in parts]) if parts else np.zeros(0, bool)
    periods = np.concatenate([b.event_counts() for b in parts]) if parts else np.zeros(0, int)
    ev = np.concatenate([b.event_v_start for b in parts]) if parts else np.zeros((0, 2))
    aligned = (
        np.concatenate([b.event_from_start | b.event_after_reset for b in parts]) if parts else np.zeros(0, bool)
    )
    return GridScan(
        params=p,
        v1=v1,
        v2=v2,
        in_s=in_s((v1, v2), p, tight=tight),
        status=status,
        end_time=end_time,
        from_start=from_start,
        periods=periods,
        event_v_start=ev,
        event_in_s=in_s((ev[:, 0], ev[:, 1]), p, tight=tight) if len(ev) else np.zeros(0, bool),
        event_aligned=aligned,
    )


def write_grid_csv(scan: GridScan, path: str | Path) -> None:
    labels = scan.outcome_labels()
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["v1", "v2", "in_s", "outcome"])
        for a, b, s, o in zip(scan.v1, scan.v2, scan.in_s, labels):
            out.writerow([f"{a:.12g}", f"{b:.12g}", int(bool(s)), o])
