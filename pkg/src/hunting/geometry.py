"""Planar regions over the voltage pair ``(v1, v2)``.

Membership in the named sets (deadband D, safe set H, box P and their
intersection W) is decided by exact predicates that accept scalars or
numpy arrays. Polygons are kept alongside for areas, widths and export:
each region is a union of convex polygons with disjoint interiors,
obtained by clipping a bounding box against half-planes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .model import RegimeError, SystemParams, inverter_gain_factor

# Incidence tolerance for vertices and half-plane tests, in per unit.
TOL = 1e-9
# Clipping starts from this box; a vertex left on it means the half-planes
# did not bound the region.
_FAR = 1e6


# --- exact set predicates ------------------------------------------------------


def _pair(v):
    return v[0], v[1]


def in_d(v, p: SystemParams):
    """Closed deadband square."""
    v1, v2 = _pair(v)
    lo, hi = p.v_minus, p.v_plus
    return (lo <= v1) & (v1 <= hi) & (lo <= v2) & (v2 <= hi)


def in_h(v, p: SystemParams):
    """Neither LTC tap direction is ambiguous: not one node over while the other is under."""
    v1, v2 = _pair(v)
    lo, hi = p.v_minus, p.v_plus
    return ((v1 > lo) & (v2 > lo)) | ((v1 < hi) & (v2 < hi))


def in_p(v, p: SystemParams):
    """Open box of half-width three deadband widths around the reference."""
    v1, v2 = _pair(v)
    r = 3.0 * p.eps
    return (abs(v1 - p.v_ref) < r) & (abs(v2 - p.v_ref) < r)


def in_w(v, p: SystemParams):
    return in_h(v, p) & in_p(v, p)


# --- polygons ----------------------------------------------------------------


@dataclass(frozen=True)
class HalfPlane:
    """The closed half-plane ``a1 * v1 + a2 * v2 <= b``."""

    a1: float
    a2: float
    b: float

    def value(self, v1, v2):
        """Signed slack, positive inside."""
        return self.b - (self.a1 * v1 + self.a2 * v2)

    def complement(self) -> "HalfPlane":
        return HalfPlane(-self.a1, -self.a2, -self.b)

    @classmethod
    def from_affine(cls, slack: Callable[[float, float], float]) -> "HalfPlane":
        """Turn an affine slack function ``s(v1, v2) >= 0`` into a half-plane."""
        s0 = slack(0.0, 0.0)
        return cls(-(slack(1.0, 0.0) - s0), -(slack(0.0, 1.0) - s0), s0)


def box_halfplanes(x0: float, x1: float, y0: float, y1: float) -> list[HalfPlane]:
    return [HalfPlane(-1, 0, -x0), HalfPlane(1, 0, x1), HalfPlane(0, -1, -y0), HalfPlane(0, 1, y1)]


class ConvexPolygon:
    """Convex polygon with vertices in counter-clockwise order."""

    def __init__(self, vertices: Iterable[Sequence[float]]):
        pts = np.asarray(list(vertices), dtype=float).reshape(-1, 2)
        self.vertices = _dedupe(pts)

    def __repr__(self) -> str:
        return f"ConvexPolygon({len(self.vertices)} vertices, area={self.area():.6g})"

    def area(self) -> float:
        if len(self.vertices) < 3:
            return 0.0
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    @property
    def is_empty(self) -> bool:
        return len(self.vertices) < 3 or self.area() <= TOL * TOL

    def bounds(self) -> tuple[float, float, float, float]:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])

    def width(self, axis: int) -> float:
        """Extent along ``v1`` (axis 0) or ``v2`` (axis 1)."""
        if self.is_empty:
            return 0.0
        col = self.vertices[:, axis]
        return float(col.max() - col.min())

    def halfplanes(self) -> list[HalfPlane]:
        out = []
        n = len(self.vertices)
        for i in range(n):
            (x0, y0), (x1, y1) = self.vertices[i], self.vertices[(i + 1) % n]
            # Interior lies to the left of each CCW edge.
            a1, a2 = y1 - y0, -(x1 - x0)
            out.append(HalfPlane(a1, a2, a1 * x0 + a2 * y0))
        return out

    def contains(self, v, tol: float = TOL):
        v1, v2 = _pair(v)
        if self.is_empty:
            return np.zeros_like(np.asarray(v1, dtype=float), dtype=bool) if np.ndim(v1) else False
        inside = True
        for h in self.halfplanes():
            norm = math.hypot(h.a1, h.a2)
            inside = inside & (h.value(v1, v2) >= -tol * norm)
        return inside

    def clip(self, h: HalfPlane) -> "ConvexPolygon":
        """Sutherland-Hodgman clip against one half-plane."""
        pts = self.vertices
        if len(pts) == 0:
            return self
        vals = h.value(pts[:, 0], pts[:, 1])
        scale = max(math.hypot(h.a1, h.a2), 1e-300)
        keep = vals >= -TOL * scale * 1e-3
        out = []
        n = len(pts)
        for i in range(n):
            j = (i + 1) % n
            if keep[i]:
                out.append(pts[i])
            if keep[i] != keep[j]:
                t = vals[i] / (vals[i] - vals[j])
                out.append(pts[i] + t * (pts[j] - pts[i]))
        return ConvexPolygon(out)


def _dedupe(pts: np.ndarray) -> np.ndarray:
    if len(pts) == 0:
        return pts
    kept = [pts[0]]
    for q in pts[1:]:
        if np.max(np.abs(q - kept[-1])) > TOL * 1e-3:
            kept.append(q)
    if len(kept) > 1 and np.max(np.abs(kept[0] - kept[-1])) <= TOL * 1e-3:
        kept.pop()
    return np.array(kept)


def rectangle(x0: float, x1: float, y0: float, y1: float) -> ConvexPolygon:
    if x1 <= x0 or y1 <= y0:
        return ConvexPolygon([])
    return ConvexPolygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])


def intersect_halfplanes(
    hs: Iterable[HalfPlane], bounds: tuple[float, float, float, float] | None = None
) -> ConvexPolygon:
    """Intersection of closed half-planes as a convex polygon.

    ``bounds`` optionally adds a box ``(v1_lo, v1_hi, v2_lo, v2_hi)``.
    Raises ``ValueError`` if the result is unbounded.
    """
    poly = rectangle(-_FAR, _FAR, -_FAR, _FAR)
    hs = list(hs)
    if bounds is not None:
        hs = box_halfplanes(*bounds) + hs
    for h in hs:
        poly = poly.clip(h)
        if len(poly.vertices) == 0:
            return poly
    if len(poly.vertices) and np.max(np.abs(poly.vertices)) >= _FAR * (1 - 1e-12):
        raise ValueError("half-planes do not bound a finite region")
    return poly


# --- unions of convex pieces ---------------------------------------------------


@dataclass
class RegionSet:
    """Finite union of convex polygons with pairwise disjoint interiors."""

    parts: list[ConvexPolygon] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.parts = [q for q in self.parts if not q.is_empty]

    def __iter__(self):
        return iter(self.parts)

    def __len__(self) -> int:
        return len(self.parts)

    @property
    def is_empty(self) -> bool:
        return not self.parts

    def area(self) -> float:
        return float(sum(q.area() for q in self.parts))

    def width(self, axis: int) -> float:
        if self.is_empty:
            return 0.0
        lo = min(q.vertices[:, axis].min() for q in self.parts)
        hi = max(q.vertices[:, axis].max() for q in self.parts)
        return float(hi - lo)

    def contains(self, v, tol: float = TOL):
        v1, v2 = _pair(v)
        out = np.zeros(np.shape(v1), dtype=bool) if np.ndim(v1) else False
        for q in self.parts:
            out = out | q.contains((v1, v2), tol)
        return out

    def union(self, other: "RegionSet") -> "RegionSet":
        """Union, assuming the two sets already have disjoint interiors."""
        return RegionSet(self.parts + other.parts)

    def intersect(self, other: "RegionSet") -> "RegionSet":
        out = []
        for a in self.parts:
            for b in other.parts:
                q = a
                for h in b.halfplanes():
                    q = q.clip(h)
                out.append(q)
        return RegionSet(out)

    def difference(self, other: "RegionSet") -> "RegionSet":
        """Set difference as disjoint convex pieces.

        Removing a convex polygon with edges ``h_1..h_m`` from a convex
        piece leaves the pieces ``piece & h_1 & .. & h_{i-1} & not h_i``.
        """
        pieces = list(self.parts)
        for hole in other.parts:
            edges = hole.halfplanes()
            nxt = []
            for piece in pieces:
                rest = piece
                for h in edges:
                    nxt.append(rest.clip(h.complement()))
                    rest = rest.clip(h)
                    if rest.is_empty:
                        break
            pieces = [q for q in nxt if not q.is_empty]
        return RegionSet(pieces)

    @classmethod
    def of(cls, *polys: ConvexPolygon) -> "RegionSet":
        return cls(list(polys))


class MarginRegion(RegionSet):
    """Points within distance ``d`` of a union of rectangles, but outside it.

    Membership uses the exact Euclidean distance. The polygon parts are
    an outer approximation in which each rounded corner is replaced by
    its bounding square; :meth:`area` is exact.
    """

    def __init__(self, rects: list[tuple[float, float, float, float]], d: float):
        self.rects = rects
        self.d = d
        parts = []
        for x0, x1, y0, y1 in rects:
            parts += [
                rectangle(x0, x1, y0 - d, y0),
                rectangle(x0, x1, y1, y1 + d),
                rectangle(x0 - d, x0, y0, y1),
                rectangle(x1, x1 + d, y0, y1),
                rectangle(x0 - d, x0, y0 - d, y0),
                rectangle(x1, x1 + d, y0 - d, y0),
                rectangle(x0 - d, x0, y1, y1 + d),
                rectangle(x1, x1 + d, y1, y1 + d),
            ]
        super().__init__(parts)

    def distance(self, v):
        v1, v2 = _pair(v)
        best = None
        for x0, x1, y0, y1 in self.rects:
            dx = np.maximum(np.maximum(x0 - v1, v1 - x1), 0.0)
            dy = np.maximum(np.maximum(y0 - v2, v2 - y1), 0.0)
            dist = np.hypot(dx, dy)
            best = dist if best is None else np.minimum(best, dist)
        return best

    def contains(self, v, tol: float = 0.0):
        dist = self.distance(v)
        return (dist > 0) & (dist <= self.d + tol)

    def area(self) -> float:
        return float(sum(2 * self.d * ((x1 - x0) + (y1 - y0)) for x0, x1, y0, y1 in self.rects)) + len(
            self.rects
        ) * math.pi * self.d**2


def _as_rectangle(q: ConvexPolygon) -> tuple[float, float, float, float]:
    x0, x1, y0, y1 = q.bounds()
    if len(q.vertices) != 4 or abs(q.area() - (x1 - x0) * (y1 - y0)) > TOL:
        raise ValueError("margin is only defined for axis-aligned rectangles")
    return x0, x1, y0, y1


def margin(region: RegionSet, d: float) -> MarginRegion:
    """Ring of points within distance ``d`` of a union of rectangles.

    The rectangles' rings must not overlap each other, so that the
    analytic area stays exact.
    """
    if d < 0:
        raise ValueError(f"margin distance must be non-negative, got {d}")
    rects = [_as_rectangle(q) for q in region.parts]
    for i, a in enumerate(rects):
        for b in rects[i + 1 :]:
            if a[0] - d < b[1] + d and b[0] - d < a[1] + d and a[2] - d < b[3] + d and b[2] - d < a[3] + d:
                raise ValueError("margins of the given rectangles overlap")
    return MarginRegion(rects, d)


def sample_points(region: RegionSet, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples from a union of convex polygons, by rejection from each bounding box."""
    if region.is_empty:
        return np.zeros((0, 2))
    areas = np.array([q.area() for q in region.parts])
    which = rng.choice(len(region.parts), size=n, p=areas / areas.sum())
    out = np.empty((n, 2))
    for i, k in enumerate(which):
        q = region.parts[k]
        x0, x1, y0, y1 = q.bounds()
        while True:
            v = (rng.uniform(x0, x1), rng.uniform(y0, y1))
            if q.contains(v, tol=0.0):
                out[i] = v
                break
    return out


# --- named regions and partitions ------------------------------------------------


def p_bounds(p: SystemParams) -> tuple[float, float, float, float]:
    r = 3.0 * p.eps
    return p.v_ref - r, p.v_ref + r, p.v_ref - r, p.v_ref + r


@dataclass
class NamedRegions:
    D: RegionSet
    H: RegionSet
    P: RegionSet
    W: RegionSet


def named_regions(p: SystemParams) -> NamedRegions:
    """Polygons for D, H (clipped to P's box), P and W.

    H is non-convex; inside the box it is the union of three disjoint
    rectangles: the quadrant above both lower limits, the column left
    of it below the upper limit, and the slab under it.
    """
    lo, hi = p.v_minus, p.v_plus
    x0, x1, y0, y1 = p_bounds(p)
    h = RegionSet.of(
        rectangle(lo, x1, lo, y1),
        rectangle(x0, lo, y0, hi),
        rectangle(lo, hi, y0, lo),
    )
    box = RegionSet.of(rectangle(x0, x1, y0, y1))
    return NamedRegions(
        D=RegionSet.of(rectangle(lo, hi, lo, hi)),
        H=h,
        P=box,
        W=h.intersect(box),
    )


LABELS = ("D", "W_o", "W_b", "W_g", "W_prime")


@dataclass
class Partition:
    """Labelled split of W; :meth:`classify` is the exact point test."""

    name: str
    params: SystemParams
    regions: dict[str, RegionSet]
    strip_width: tuple[float, float]  # for v1 strips, v2 strips
    _bad: Callable = field(repr=False, default=None)

    def classify(self, v) -> str:
        p = self.params
        if in_d(v, p):
            return "D"
        if not in_w(v, p):
            return "W_prime"
        if _in_strips(v, p, self.strip_width):
            return "W_o"
        if self._bad(v):
            return "W_b"
        return "W_g"

    def classify_many(self, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
        p = self.params
        out = np.full(np.shape(v1), "W_g", dtype=object)
        out[self._bad((v1, v2))] = "W_b"
        out[_in_strips((v1, v2), p, self.strip_width)] = "W_o"
        out[~in_w((v1, v2), p)] = "W_prime"
        out[in_d((v1, v2), p)] = "D"
        return out


def _in_strips(v, p: SystemParams, widths: tuple[float, float]):
    """One voltage in band, the other within its strip width outside it."""
    v1, v2 = _pair(v)
    lo, hi = p.v_minus, p.v_plus
    w1, w2 = widths
    band1 = (lo <= v1) & (v1 <= hi)
    band2 = (lo <= v2) & (v2 <= hi)
    near1 = ((v1 > hi) & (v1 <= hi + w1)) | ((v1 < lo) & (v1 >= lo - w1))
    near2 = ((v2 > hi) & (v2 <= hi + w2)) | ((v2 < lo) & (v2 >= lo - w2))
    return (band2 & near1) | (band1 & near2)


def _strip_polys(p: SystemParams, widths: tuple[float, float]) -> RegionSet:
    lo, hi = p.v_minus, p.v_plus
    w1, w2 = (max(w, 0.0) for w in widths)
    return RegionSet.of(
        rectangle(lo, hi, lo - w2, lo),
        rectangle(lo, hi, hi, hi + w2),
        rectangle(lo - w1, lo, lo, hi),
        rectangle(hi, hi + w1, lo, hi),
    )


def _finish(name, p, widths, bad_polys, bad_pred) -> Partition:
    named = named_regions(p)
    w_o = _strip_polys(p, widths).intersect(named.W)
    w_b = bad_polys.intersect(named.W)
    w_g = named.W.difference(named.D).difference(w_o).difference(w_b)
    regions = {"D": named.D, "W_o": w_o, "W_b": w_b, "W_g": w_g}
    return Partition(name, p, regions, widths, bad_pred)


def partition_two_ltc(p: SystemParams) -> Partition:
    """Partition of W for the LTC-only system.

    W_o are the side strips one tap wide, W_b the two corner squares
    where both voltages sit within one tap beyond the same limit, and
    W_g the rest of W.
    """
    lo, hi, t = p.v_minus, p.v_plus, p.vbar_l

    def bad(v):
        v1, v2 = _pair(v)
        over = (v1 > hi) & (v1 <= hi + t) & (v2 > hi) & (v2 <= hi + t)
        under = (v1 < lo) & (v1 >= lo - t) & (v2 < lo) & (v2 >= lo - t)
        return over | under

    polys = RegionSet.of(rectangle(hi, hi + t, hi, hi + t), rectangle(lo - t, lo, lo - t, lo))
    return _finish("two_ltc", p, (t, t), polys, bad)


def strip_width(n: float, p: SystemParams) -> float:
    """Width of the band beside D from which one tap lands back inside,
    after ``n`` amplifying inverter actions have pushed the voltage out."""
    a = inverter_gain_factor(n, p)
    return (p.vbar_l - a * p.eps) / (1.0 + a)


def partition_four_device(p: SystemParams) -> Partition:
    """Partition of W with both inverters active; needs ``g < 0``.

    The strips shrink to account for the inverter drift during one LTC
    delay. W_b keeps the corners where the voltage furthest out is
    brought back by one tap after both inverters have acted for the
    substation LTC delay.
    """
    if p.g >= 0:
        raise RegimeError("the four-device partition is defined for g < 0")
    lo, hi, t, r, eta = p.v_minus, p.v_plus, p.vbar_l, p.v_ref, p.eta
    a = inverter_gain_factor(p.n1, p)
    widths = (strip_width(p.n1, p), strip_width(p.n2, p))

    def r1(v1, v2):
        return a * (v1 - r) + eta * a * (v2 - r)

    def r2(v1, v2):
        return eta * a * (v1 - r) + a * (v2 - r)

    def bad(v):
        v1, v2 = _pair(v)
        both_over = (v1 > hi) & (v2 > hi)
        both_under = (v1 < lo) & (v2 < lo)
        return (
            (both_over & (v2 <= v1) & (v1 + r1(v1, v2) - t < hi))
            | (both_over & (v2 > v1) & (v2 + r2(v1, v2) - t < hi))
            | (both_under & (v2 > v1) & (v1 + r1(v1, v2) + t > lo))
            | (both_under & (v2 <= v1) & (v2 + r2(v1, v2) + t > lo))
        )

    box = p_bounds(p)
    polys = RegionSet.of(
        intersect_halfplanes(
            [HalfPlane(-1, 0, -hi), HalfPlane(0, -1, -hi), HalfPlane(-1, 1, 0),
             HalfPlane.from_affine(lambda x, y: hi - (x + r1(x, y) - t))],
            box,
        ),
        intersect_halfplanes(
            [HalfPlane(-1, 0, -hi), HalfPlane(0, -1, -hi), HalfPlane(1, -1, 0),
             HalfPlane.from_affine(lambda x, y: hi - (y + r2(x, y) - t))],
            box,
        ),
        intersect_halfplanes(
            [HalfPlane(1, 0, lo), HalfPlane(0, 1, lo), HalfPlane(1, -1, 0),
             HalfPlane.from_affine(lambda x, y: x + r1(x, y) + t - lo)],
            box,
        ),
        intersect_halfplanes(
            [HalfPlane(1, 0, lo), HalfPlane(0, 1, lo), HalfPlane(-1, 1, 0),
             HalfPlane.from_affine(lambda x, y: y + r2(x, y) + t - lo)],
            box,
        ),
    )
    return _finish("four_device", p, widths, polys, bad)


def classify_point(v, part: Partition) -> str:
    return part.classify(v)


# --- export ------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_regions_csv(regions: dict[str, RegionSet], path: str | Path) -> None:
    """One row per polygon vertex: ``region,part_index,vertex_index,v1,v2``."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["region", "part_index", "vertex_index", "v1", "v2"])
        for name, region in regions.items():
            for i, part in enumerate(region.parts):
                for j, (x, y) in enumerate(part.vertices):
                    out.writerow([name, i, j, _fmt(x), _fmt(y)])


def read_regions_csv(path: str | Path) -> dict[str, RegionSet]:
    polys: dict[str, dict[int, list[tuple[int, float, float]]]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            part = polys.setdefault(row["region"], {}).setdefault(int(row["part_index"]), [])
            part.append((int(row["vertex_index"]), float(row["v1"]), float(row["v2"])))
    return {
        name: RegionSet([ConvexPolygon([(x, y) for _, x, y in sorted(pts)]) for _, pts in sorted(parts.items())])
        for name, parts in polys.items()
    }
