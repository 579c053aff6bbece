"""Grid machinery: the xi orbit of the boundary composition, per-cell
refinements driven by the fairway, weighted median points, and the
three-way classification of partition intervals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    NonTerminationError,
    WindowExhaustedError,
    ZeroMassError,
)
from .fairway import FairwayMap
from .funcs import BoundaryPair, CumulativeIntegral, integrate_power, invert_monotone

__all__ = [
    "GridCell",
    "GridSystem",
    "Partition",
    "xi_sequence",
    "x_refinement",
    "build_grid",
    "median_point",
    "classify_intervals",
    "CLASS_SEPARATED",
    "CLASS_STRADDLING",
    "CLASS_CONTAINED",
]

# Interval classes: boundary images separated / crossing a segment edge /
# contained in one segment.
CLASS_SEPARATED = "I1"
CLASS_STRADDLING = "I2,1"
CLASS_CONTAINED = "I2,2"

_OVERLAP_EPS = 1e-12
_STEP_CAP = 10_000
_ITER_CAP = 500_000


def xi_sequence(boundaries: BoundaryPair, window: tuple[float, float],
                anchor: float = 1.0, max_steps: int = _STEP_CAP
                ) -> tuple[np.ndarray, int]:
    """All orbit points xi_k of a^{-1} o b through `anchor` whose cells
    [xi_k, xi_{k+1}] intersect the window.

    Returns (points ascending, k_min) with points[i] = xi_{k_min + i}.
    Forward iteration applies a^{-1} o b, backward b^{-1} o a.
    """
    t_lo, t_hi = window
    if not 0 < t_lo < t_hi < math.inf:
        raise ValueError(f"window must satisfy 0 < lo < hi, got {window}")
    a, b = boundaries.a, boundaries.b

    fwd = [float(anchor)]
    for _ in range(max_steps):
        if fwd[-1] >= t_hi:
            break
        nxt = float(a.inverse(b(fwd[-1])))
        if not math.isfinite(nxt) or nxt <= fwd[-1]:
            raise WindowExhaustedError(
                f"forward xi iteration stalled at {fwd[-1]}"
            )
        fwd.append(nxt)
    else:
        raise WindowExhaustedError(f"forward xi iteration exceeded {max_steps} steps")

    bwd = []
    cur = float(anchor)
    for _ in range(max_steps):
        if cur <= t_lo:
            break
        prv = float(b.inverse(a(cur)))
        if not math.isfinite(prv) or prv <= 0.0 or prv >= cur:
            raise WindowExhaustedError(f"backward xi iteration stalled at {cur}")
        bwd.append(prv)
        cur = prv
    else:
        raise WindowExhaustedError(f"backward xi iteration exceeded {max_steps} steps")

    pts = np.array(bwd[::-1] + fwd)
    k_min = -len(bwd)
    # trim to cells intersecting the window
    keep_lo = 0
    while keep_lo + 1 < pts.size and pts[keep_lo + 1] <= t_lo:
        keep_lo += 1
    keep_hi = pts.size - 1
    while keep_hi - 1 > keep_lo and pts[keep_hi - 1] >= t_hi:
        keep_hi -= 1
    return pts[keep_lo:keep_hi + 1], k_min + keep_lo


@dataclass(frozen=True)
class GridCell:
    """One cell [xi_k, xi_{k+1}] with its fairway-driven refinement.

    points[0] = xi_k, points[-1] = xi_{k+1}; points[j_a] is the pivot
    x_0 = sigma^{-1}(b(xi_k)); j_a and j_b count refinement steps on each
    side, so local index j of points[i] is i - j_a.
    """

    k: int
    points: np.ndarray
    j_a: int
    j_b: int

    @property
    def xi_lo(self) -> float:
        return float(self.points[0])

    @property
    def xi_hi(self) -> float:
        return float(self.points[-1])

    @property
    def x0(self) -> float:
        return float(self.points[self.j_a])


def x_refinement(fairway: FairwayMap, xi_lo: float, xi_hi: float, k: int = 0,
                 step_cap: int = _STEP_CAP) -> GridCell:
    """Refine one cell by iterating sigma^{-1} o b forward and sigma^{-1} o a
    backward from the pivot x_0 = sigma^{-1}(b(xi_lo)) until each direction
    exits the cell, then clamp the final points to the cell ends.
    """
    b = fairway.boundaries.b
    a = fairway.boundaries.a
    x0 = fairway.sigma_inverse(float(b(xi_lo)), bracket=(xi_lo, xi_hi))

    forward = [x0]
    for _ in range(step_cap):
        nxt = fairway.sigma_inverse(float(b(forward[-1])))
        if nxt >= xi_hi:
            break
        if nxt <= forward[-1]:
            raise NonTerminationError(
                f"forward refinement stalled at {forward[-1]} in cell {k}"
            )
        forward.append(nxt)
    else:
        raise NonTerminationError(f"forward refinement exceeded {step_cap} steps")

    backward = []
    cur = x0
    for _ in range(step_cap):
        prv = fairway.sigma_inverse(float(a(cur)))
        if prv <= xi_lo:
            break
        if prv >= cur:
            raise NonTerminationError(
                f"backward refinement stalled at {cur} in cell {k}"
            )
        backward.append(prv)
        cur = prv
    else:
        raise NonTerminationError(f"backward refinement exceeded {step_cap} steps")

    pts = np.array([xi_lo] + backward[::-1] + forward + [xi_hi])
    j_a = len(backward) + 1
    j_b = len(forward)
    return GridCell(k=k, points=pts, j_a=j_a, j_b=j_b)


@dataclass
class GridSystem:
    """xi points, per-cell refinements and the induced flattened sequence."""

    xi: np.ndarray
    k_min: int
    cells: list[GridCell]
    window: tuple[float, float]
    anchor: float = 1.0
    _flat: np.ndarray | None = field(default=None, repr=False)

    @property
    def k_max(self) -> int:
        return self.k_min + len(self.cells) - 1

    @property
    def hull(self) -> tuple[float, float]:
        """Cell-aligned closure of the window."""
        return float(self.xi[0]), float(self.xi[-1])

    def cell(self, k: int) -> GridCell:
        return self.cells[k - self.k_min]

    def flattened(self) -> tuple[np.ndarray, list[tuple[int, int]]]:
        """All refinement points merged lexicographically by (k, j); the
        second element maps each flattened segment to its (k, j) origin."""
        pts = [self.cells[0].points[0]]
        origin: list[tuple[int, int]] = []
        for c in self.cells:
            for i in range(1, c.points.size):
                pts.append(c.points[i])
                origin.append((c.k, i - 1 - c.j_a))
        return np.array(pts), origin

    def segments(self) -> np.ndarray:
        """The half-open segment edges [xi_k, xi_{k+1}); alias for xi."""
        return self.xi


def build_grid(boundaries: BoundaryPair, fairway: FairwayMap,
               window: tuple[float, float], anchor: float = 1.0) -> GridSystem:
    xi, k_min = xi_sequence(boundaries, window, anchor=anchor)
    cells = [
        x_refinement(fairway, float(xi[i]), float(xi[i + 1]), k=k_min + i)
        for i in range(xi.size - 1)
    ]
    return GridSystem(xi=xi, k_min=k_min, cells=cells, window=window, anchor=anchor)


def median_point(w_mass, d: float, e: float, rtol: float = 1e-10) -> float:
    """The c in (d, e) splitting the w**p mass of [d, e] in half.

    `w_mass` is either a CumulativeIntegral of w**p or a pair (w, p).
    """
    if isinstance(w_mass, CumulativeIntegral):
        mass = w_mass.between
    else:
        w, p = w_mass
        def mass(y1, y2):
            return integrate_power(w, p, y1, y2)
    total = mass(d, e)
    if total <= 0.0:
        raise ZeroMassError(f"no w**p mass on [{d}, {e}]")
    c = invert_monotone(lambda t: mass(d, t), 0.5 * total, d, e, tol=rtol * 0.01)
    return c


@dataclass
class Partition:
    """Consecutive intervals (points[n], points[n+1]) with class tags and
    optional per-interval oscillation norms."""

    points: np.ndarray
    classes: list[str] | None = None
    kappas: np.ndarray | None = None

    def intervals(self) -> list[tuple[float, float]]:
        return [(float(self.points[i]), float(self.points[i + 1]))
                for i in range(self.points.size - 1)]


def classify_intervals(partition: Partition, boundaries: BoundaryPair,
                       anchor: float | None = None,
                       segment_edges: np.ndarray | None = None) -> Partition:
    """Tag every interval as separated (b(c_n) <= a(c_{n+1})), straddling
    (meets two neighbour segments with positive measure) or contained.

    Segments are the orbit cells of a^{-1} o b anchored either at an explicit
    abscissa (`anchor`; the lower-bound verification path re-anchors at the
    first non-separated interval) or given directly via `segment_edges`.
    """
    pts = partition.points
    if segment_edges is None:
        if anchor is None:
            # default: anchor at the first interval with b(c_n) > a(c_{n+1})
            anchor = None
            for i in range(pts.size - 1):
                if float(boundaries.b(pts[i])) > float(boundaries.a(pts[i + 1])):
                    anchor = float(pts[i])
                    break
            if anchor is None:
                anchor = 1.0
        edges, _ = xi_sequence(boundaries, (float(pts[0]), float(pts[-1])),
                               anchor=anchor)
    else:
        edges = np.asarray(segment_edges, dtype=float)

    classes = []
    for i in range(pts.size - 1):
        lo, hi = float(pts[i]), float(pts[i + 1])
        if float(boundaries.b(lo)) <= float(boundaries.a(hi)):
            classes.append(CLASS_SEPARATED)
            continue
        # count segments met with positive measure
        tol = _OVERLAP_EPS * (hi - lo)
        met = 0
        for j in range(edges.size - 1):
            s_lo, s_hi = float(edges[j]), float(edges[j + 1])
            if min(hi, s_hi) - max(lo, s_lo) > tol:
                met += 1
        # portions sticking out beyond the covered edge range also count
        if pts[0] < edges[0] and edges[0] - lo > tol:
            met += 1
        if pts[-1] > edges[-1] and hi - edges[-1] > tol:
            met += 1
        classes.append(CLASS_STRADDLING if met >= 2 else CLASS_CONTAINED)
    return Partition(points=pts, classes=classes, kappas=partition.kappas)
