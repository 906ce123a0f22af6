"""Parameter studies over the hunting set S.

The delay sweep walks the substation-LTC actuation count ``N1`` (the
number of inverter actions that fit into one substation-LTC delay) and
records where S becomes empty, which turns into a minimum LTC delay for
a given inverter delay. The region report tabulates S, or its damped
counterpart for ``g > 0``, for plotting. The branch check composes
single-branch verdicts for a substation feeding several branches.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

from .analysis import build_set_S, s_pieces
from .geometry import RegionSet, strip_width
from .model import RegimeError, SystemParams


def round_half_up(x: float) -> int:
    return int(Decimal(repr(x)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def _same_regions(a: RegionSet, b: RegionSet, tol: float = 1e-12) -> bool:
    if len(a) != len(b):
        return False
    return all(
        pa.vertices.shape == pb.vertices.shape and np.allclose(pa.vertices, pb.vertices, rtol=0, atol=tol)
        for pa, pb in zip(a.parts, b.parts)
    )


@dataclass(frozen=True)
class SweepResult:
    n1: int
    n2: int
    n2_exact: float
    s_empty: bool
    s_area: float
    s_empty_exact: bool  # S built with the unrounded count ratio * n1
    d_l1_example: float
    d_inv_example: float
    line_invariant: bool  # a second delay pair with the same counts gave the same S


def _line_pair(n1: int, n2: int, p: SystemParams) -> tuple[SystemParams, SystemParams]:
    """Two delay settings that share the actuation counts ``(n1, n2)``."""
    d_inv = p.d_inv
    a = p.replace(d_l1=n1 * d_inv, d_l2=n2 * d_inv)
    # Same counts with a different inverter delay and non-integer ratios.
    d_inv_b = 0.75 * d_inv
    b = p.replace(d_inv=d_inv_b, d_l1=(n1 + 0.5) * d_inv_b, d_l2=(n2 + 0.5) * d_inv_b)
    return a, b


def delay_sweep(p: SystemParams, n1_values, g: float | None = None) -> list[SweepResult]:
    """Emptiness and area of S for each substation-LTC actuation count.

    ``n2`` follows from ``n1`` through the branch/substation delay ratio
    of ``p``, rounded half up; the unrounded variant is recorded too.
    """
    n1_values = sorted(set(int(n) for n in n1_values))
    if not n1_values:
        raise ValueError("empty N1 range")
    if n1_values[0] < 1 or n1_values[-1] > 200:
        raise ValueError("N1 values must lie in [1, 200]")
    if g is not None:
        p = p.replace(g=g)
    if p.g >= 0:
        raise RegimeError("the delay sweep is defined for g < 0")
    ratio = p.d_l2 / p.d_l1
    out = []
    for n1 in n1_values:
        n2_exact = ratio * n1
        n2 = round_half_up(n2_exact)
        s = build_set_S(p, n1=n1, n2=n2)
        s_exact = build_set_S(p, n1=n1, n2=n2_exact)
        pa, pb = _line_pair(n1, n2, p)
        sa, sb = build_set_S(pa), build_set_S(pb)
        out.append(
            SweepResult(
                n1=n1,
                n2=n2,
                n2_exact=n2_exact,
                s_empty=s.is_empty,
                s_area=s.area(),
                s_empty_exact=s_exact.is_empty,
                d_l1_example=pa.d_l1,
                d_inv_example=pa.d_inv,
                line_invariant=(pa.n1, pa.n2) == (pb.n1, pb.n2) == (n1, n2)
                and _same_regions(sa, sb)
                and _same_regions(sa, s),
            )
        )
    return out


def emptiness_threshold(results: list[SweepResult]) -> int | None:
    """Smallest N1 from which S stays empty for the rest of the sweep."""
    threshold = None
    for r in sorted(results, key=lambda r: r.n1, reverse=True):
        if not r.s_empty:
            break
        threshold = r.n1
    return threshold


def is_monotone(results: list[SweepResult]) -> bool:
    """True when emptiness, once reached, persists for every larger N1."""
    flags = [r.s_empty for r in sorted(results, key=lambda r: r.n1)]
    return all(b or not a for a, b in zip(flags, flags[1:]))


def min_ltc_delay(n1_star: int, d_inv: float) -> float:
    """Smallest substation-LTC delay keeping at least ``n1_star`` inverter actions per LTC delay."""
    return n1_star * d_inv


def write_sweep_csv(results: list[SweepResult], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["n1", "n2", "s_empty", "s_area", "d_l1_example", "d_inv_example"])
        for r in sorted(results, key=lambda r: r.n1):
            out.writerow([r.n1, r.n2, int(r.s_empty), f"{r.s_area:.12g}", f"{r.d_l1_example:.12g}", f"{r.d_inv_example:.12g}"])


@dataclass
class SRegionReport:
    """S (``g < 0``) or the damped oscillation region (``g > 0``) with strip widths.

    ``pieces`` come from the four base conditions, ``tight_pieces`` from
    the full set of requirements for a period to complete.
    """

    params: SystemParams
    regime: str
    pieces: dict[str, RegionSet]
    tight_pieces: dict[str, RegionSet]
    strip_widths: dict[str, float] = field(default_factory=dict)

    @property
    def region(self) -> RegionSet:
        parts = []
        for piece in self.pieces.values():
            parts += piece.parts
        return RegionSet(parts)

    @property
    def area(self) -> float:
        return self.region.area()

    @property
    def tight_area(self) -> float:
        return float(sum(piece.area() for piece in self.tight_pieces.values()))

    def to_dict(self) -> dict:
        return {
            "g": self.params.g,
            "regime": self.regime,
            "area": self.area,
            "tight_area": self.tight_area,
            "empty": self.region.is_empty,
            "pieces": {
                name: {
                    "area": piece.area(),
                    "width_v1": piece.width(0),
                    "width_v2": piece.width(1),
                    "empty": piece.is_empty,
                }
                for name, piece in self.pieces.items()
            },
            "strip_widths": self.strip_widths,
        }


def s_region_report(p: SystemParams) -> SRegionReport:
    """Regions where one oscillation period can complete, with strip widths.

    The strip width beside D is clamped at zero, so a non-positive value
    means the strip is empty. With ``g = 0`` the inverters do nothing and
    only the LTC-only strips remain.
    """
    if p.g < 0:
        regime = "amplifying"
    elif p.g > 0:
        regime = "damped"
    else:
        regime = "ltc_only"
    pieces = s_pieces(p) if p.g != 0 else {}
    tight = s_pieces(p, tight=True) if p.g != 0 else {}
    widths = {
        "v1_strips": max(strip_width(p.n1, p), 0.0),
        "v2_strips": max(strip_width(p.n2, p), 0.0),
    }
    return SRegionReport(p, regime, pieces, tight, widths)


# --- several branches on one substation ------------------------------------------

# Settings of the substation LTC and the common deadband that every branch
# model must agree on.
SHARED_FIELDS = ("v_ref", "eps", "d_l1", "vbar_l", "t_s")
# Symbolic per-branch unknowns (inverter delay, branch LTC delay, gain)
# and the one shared unknown (substation LTC delay).
BRANCH_SYMBOLS = ("d_inv", "d_l2", "g")
SHARED_SYMBOLS = ("d_l1",)


@dataclass(frozen=True)
class BranchSpec:
    branch_id: str
    params: SystemParams


@dataclass
class BranchReport:
    verdicts: dict[str, bool]  # branch id -> S empty
    areas: dict[str, float]

    @property
    def joint_safe(self) -> bool:
        return all(self.verdicts.values())

    @property
    def variable_count(self) -> int:
        return len(BRANCH_SYMBOLS) * len(self.verdicts) + len(SHARED_SYMBOLS)

    def to_dict(self) -> dict:
        return {
            "branches": [
                {"branch": b, "s_empty": empty, "s_area": self.areas[b], "verdict": "safe" if empty else "hunting_possible"}
                for b, empty in self.verdicts.items()
            ],
            "joint_verdict": "safe" if self.joint_safe else "hunting_possible",
            "variable_count": self.variable_count,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def multi_branch_check(branches: list[BranchSpec]) -> BranchReport:
    """Check every branch of a star feeder; safe only if all are safe."""
    if not branches:
        raise ValueError("need at least one branch")
    ref = branches[0].params
    for b in branches[1:]:
        for name in SHARED_FIELDS:
            if not math.isclose(getattr(b.params, name), getattr(ref, name), rel_tol=0, abs_tol=1e-12):
                raise ValueError(f"branch {b.branch_id} disagrees on shared field {name}")
    ids = [b.branch_id for b in branches]
    if len(set(ids)) != len(ids):
        raise ValueError("branch ids must be unique")
    verdicts, areas = {}, {}
    for b in branches:
        s = build_set_S(b.params)
        verdicts[b.branch_id] = s.is_empty
        areas[b.branch_id] = s.area()
    return BranchReport(verdicts, areas)
