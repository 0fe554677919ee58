"""Disjoint sub-selections of rectangle and translate families with inflation covers.

Two constructions:

* ``partition_and_select``: axis-parallel rectangles in dimension 1 or 2 are
  split by their dominant axis; inside each class a greedy pass in descending
  order of the other semi-axis keeps a rectangle iff it misses all kept ones.
  Every rejected rectangle then lies inside ``M`` times its blocker, with
  ``M = 3 sup||R|| / inf||R||``.
* ``select_translates``: images of a cube under affine maps sharing one linear
  part. Two images meet iff ``||T^{-1}(b_i - b_j)||_inf <= 2h`` (``h`` the cube's
  half side), and then each lies inside the other's image of the concentric
  cube scaled by 3. Scaling by 2 is not enough in general.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "AxisRectangle",
    "SelectionResult",
    "TranslateSelection",
    "partition_and_select",
    "certify_selection",
    "select_translates",
    "certify_translates",
]

LATTICE = 1000
TRANSLATE_LATTICE = 1000


@dataclass(frozen=True)
class AxisRectangle:
    """``prod [c_i - a_i, c_i + a_i]``."""

    center: tuple
    semi_axes: tuple

    def __post_init__(self):
        c = tuple(float(x) for x in np.atleast_1d(self.center))
        a = tuple(float(x) for x in np.atleast_1d(self.semi_axes))
        if len(c) != len(a) or not c:
            raise ValueError("center and semi-axes must have the same positive length")
        if not all(x > 0 and math.isfinite(x) for x in a):
            raise ValueError("semi-axes must be positive and finite")
        if not all(math.isfinite(x) for x in c):
            raise ValueError("center must be finite")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "semi_axes", a)

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def norm(self) -> float:
        return max(self.semi_axes)

    def inflate(self, t: float) -> "AxisRectangle":
        return AxisRectangle(self.center, tuple(t * a for a in self.semi_axes))

    def intersects(self, other: "AxisRectangle") -> bool:
        """Closed rectangles meet (touching counts)."""
        return all(abs(c1 - c2) <= a1 + a2 for c1, c2, a1, a2 in
                   zip(self.center, other.center, self.semi_axes, other.semi_axes))

    def contains(self, other: "AxisRectangle") -> bool:
        return all(abs(c1 - c2) + a2 <= a1 for c1, c2, a1, a2 in
                   zip(self.center, other.center, self.semi_axes, other.semi_axes))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        c, a = np.array(self.center), np.array(self.semi_axes)
        return c - a, c + a


@dataclass
class SelectionResult:
    rects: list
    classes: np.ndarray
    selected: dict
    blockers: dict
    bands: np.ndarray
    M: float
    certified: bool | None = None
    certificate: dict = field(default_factory=dict)

    def selected_rects(self, cls: int) -> list:
        return [self.rects[j] for j in self.selected[cls]]


def _as_rects(rects) -> list:
    out = []
    for r in rects:
        if isinstance(r, AxisRectangle):
            out.append(r)
        else:
            c, a = r
            out.append(AxisRectangle(c, a))
    return out


def partition_and_select(rects: Sequence, d: int | None = None, *, certify: bool = True,
                         lattice: int = LATTICE) -> SelectionResult:
    """Partition by dominant axis and greedily select disjoint rectangles in each class.

    Class 1 holds rectangles with ``a_1 = ||R||``, class 2 the rest (``d = 2`` only).
    The banding axis is the non-dominant one (axis 2 for class 1, axis 1 for
    class 2; in ``d = 1`` the only axis). Candidates are visited by decreasing
    banding semi-axis, ties broken by lexicographic center. ``bands`` records
    the dyadic band ``a/2^(k+1) < a_band <= a/2^k`` of each rectangle.
    """
    rects = _as_rects(rects)
    if not rects:
        raise ValueError("empty rectangle family")
    dims = {r.d for r in rects}
    if len(dims) != 1:
        raise ValueError("rectangles of mixed dimension")
    dd = dims.pop()
    if d is not None and d != dd:
        raise ValueError(f"rectangles are {dd}-dimensional, expected {d}")
    if dd > 2:
        raise ValueError("the rectangle selection is only available for d <= 2")
    norms = np.array([r.norm for r in rects])
    M = 3.0 * norms.max() / norms.min()
    n = len(rects)
    if dd == 1:
        classes = np.ones(n, dtype=int)
    else:
        classes = np.array([1 if r.semi_axes[0] == r.norm else 2 for r in rects])
    bands = np.zeros(n, dtype=int)
    selected, blockers = {1: [], 2: []}, {}
    for cls in (1, 2):
        idx = [j for j in range(n) if classes[j] == cls]
        if not idx:
            continue
        axis = 0 if dd == 1 else (1 if cls == 1 else 0)
        size = {j: rects[j].semi_axes[axis] for j in idx}
        top = max(size.values())
        for j in idx:
            bands[j] = int(math.floor(math.log2(top / size[j]))) if size[j] < top else 0
        order = sorted(idx, key=lambda j: (-size[j], rects[j].center))
        kept = []
        for j in order:
            hit = next((i for i in kept if rects[i].intersects(rects[j])), None)
            if hit is None:
                kept.append(j)
            else:
                blockers[j] = hit
        selected[cls] = kept
    res = SelectionResult(rects, classes, selected, blockers, bands, M)
    if certify:
        certify_selection(res, lattice=lattice)
    return res


def _raster(lo: np.ndarray, hi: np.ndarray, boxes, grid) -> np.ndarray:
    """Boolean lattice mask of the union of closed boxes (``d = 2``)."""
    gx, gy = grid
    mask = np.zeros((gx.size, gy.size), dtype=bool)
    for blo, bhi in boxes:
        i0, i1 = np.searchsorted(gx, blo[0], "left"), np.searchsorted(gx, bhi[0], "right")
        j0, j1 = np.searchsorted(gy, blo[1], "left"), np.searchsorted(gy, bhi[1], "right")
        mask[i0:i1, j0:j1] = True
    return mask


def _merge_intervals(iv):
    iv = sorted(iv)
    out = [list(iv[0])]
    for a, b in iv[1:]:
        if a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return out


def certify_selection(res: SelectionResult, lattice: int = LATTICE) -> bool:
    """Check disjointness and the ``M``-inflation cover for both classes.

    * disjointness: exact pairwise closed-intersection tests;
    * cover (exact): each rejected rectangle lies in ``M`` times its blocker;
    * cover (``d = 1``): exact interval-union containment;
    * cover (``d = 2``): lattice of ``lattice`` points per axis over the bounding
      box of each class, every lattice point of the input union must lie in the
      inflated union.
    """
    rects, M = res.rects, res.M
    failures = []
    for cls, kept in res.selected.items():
        for a in range(len(kept)):
            for b in range(a + 1, len(kept)):
                if rects[kept[a]].intersects(rects[kept[b]]):
                    failures.append(("overlap", cls, kept[a], kept[b]))
    exact_ok = True
    for j, b in res.blockers.items():
        if not rects[b].inflate(M).contains(rects[j]):
            exact_ok = False
            failures.append(("containment", int(res.classes[j]), j, b))
    lattice_ok = True
    for cls, kept in res.selected.items():
        members = [j for j in range(len(rects)) if res.classes[j] == cls]
        if not members:
            continue
        inputs = [rects[j].bounds() for j in members]
        covers = [rects[j].inflate(M).bounds() for j in kept]
        if rects[0].d == 1:
            merged = _merge_intervals([(lo[0], hi[0]) for lo, hi in covers])
            for j, (lo, hi) in zip(members, inputs):
                if not any(a <= lo[0] and hi[0] <= b for a, b in merged):
                    lattice_ok = False
                    failures.append(("interval-cover", cls, j, None))
            continue
        lo = np.min([b[0] for b in inputs], axis=0)
        hi = np.max([b[1] for b in inputs], axis=0)
        grid = (np.linspace(lo[0], hi[0], lattice), np.linspace(lo[1], hi[1], lattice))
        need = _raster(lo, hi, inputs, grid)
        have = _raster(lo, hi, covers, grid)
        miss = int(np.count_nonzero(need & ~have))
        if miss:
            lattice_ok = False
            failures.append(("lattice-cover", cls, miss, None))
    res.certificate = {"disjoint": not any(f[0] == "overlap" for f in failures),
                       "exact_containment": exact_ok, "lattice_cover": lattice_ok,
                       "failures": failures}
    res.certified = not failures
    return res.certified


# ---------------------------------------------------------------------------
# translates of a cube
# ---------------------------------------------------------------------------

@dataclass
class TranslateSelection:
    linear: np.ndarray
    offsets: np.ndarray
    cube_center: np.ndarray
    half_side: float
    selected: list
    blockers: dict
    factor: float
    certified: bool | None = None
    certificate: dict = field(default_factory=dict)


def select_translates(cube_center, half_side: float, maps: Sequence, *, factor: float = 3.0,
                      certify: bool = True, lattice: int = TRANSLATE_LATTICE) -> TranslateSelection:
    """Maximal disjoint subfamily of the images ``T x + b_j`` of a cube.

    ``maps`` is a sequence of ``(T, b)`` pairs sharing the same ``T``. Members
    are visited in the given order. The certificate checks that every image
    lies in the image of the concentric cube scaled by ``factor`` around some
    selected member.
    """
    c = np.atleast_1d(np.asarray(cube_center, dtype=float))
    if not half_side > 0:
        raise ValueError("half side must be positive")
    if not maps:
        raise ValueError("empty map family")
    T0 = np.atleast_2d(np.asarray(maps[0][0], dtype=float))
    offs = []
    for k, (T, b) in enumerate(maps):
        T = np.atleast_2d(np.asarray(T, dtype=float))
        if T.shape != T0.shape or not np.array_equal(T, T0):
            raise ValueError(f"map {k} has a different linear part")
        offs.append(np.atleast_1d(np.asarray(b, dtype=float)))
    offs = np.array(offs)
    if T0.shape != (c.size, c.size) or offs.shape[1] != c.size:
        raise ValueError("dimension mismatch between cube and maps")
    Tinv = np.linalg.inv(T0)
    pulled = offs @ Tinv.T
    kept, blockers = [], {}
    for j in range(len(offs)):
        hit = next((i for i in kept if np.max(np.abs(pulled[i] - pulled[j])) <= 2 * half_side), None)
        if hit is None:
            kept.append(j)
        else:
            blockers[j] = hit
    res = TranslateSelection(T0, offs, c, float(half_side), kept, blockers, float(factor))
    if certify:
        certify_translates(res, lattice=lattice)
    return res


def certify_translates(res: TranslateSelection, lattice: int = TRANSLATE_LATTICE) -> bool:
    """Disjointness, per-member containment and (``d <= 2``) a lattice cover check."""
    h, lam = res.half_side, res.factor
    pulled = res.offsets @ np.linalg.inv(res.linear).T
    failures = []
    K = res.selected
    for a in range(len(K)):
        for b in range(a + 1, len(K)):
            if np.max(np.abs(pulled[K[a]] - pulled[K[b]])) <= 2 * h:
                failures.append(("overlap", K[a], K[b]))
    for j, b in res.blockers.items():
        if np.max(np.abs(pulled[j] - pulled[b])) + h > lam * h:
            failures.append(("containment", j, b))
    d = res.cube_center.size
    if d <= 2:
        # T is a bijection, so the check runs on a lattice in pulled-back
        # coordinates where every image is an axis-parallel cube
        inputs = [(v - h, v + h) for v in pulled]
        covers = [(pulled[i] - lam * h, pulled[i] + lam * h) for i in K]
        lo = pulled.min(axis=0) - h
        hi = pulled.max(axis=0) + h
        if d == 1:
            x = np.linspace(lo[0], hi[0], lattice * lattice)
            need = np.zeros(x.size, dtype=bool)
            have = np.zeros(x.size, dtype=bool)
            for mask, boxes in ((need, inputs), (have, covers)):
                for blo, bhi in boxes:
                    mask[np.searchsorted(x, blo[0], "left"):np.searchsorted(x, bhi[0], "right")] = True
        else:
            grid = tuple(np.linspace(lo[k], hi[k], lattice) for k in range(2))
            need = _raster(lo, hi, inputs, grid)
            have = _raster(lo, hi, covers, grid)
        miss = int(np.count_nonzero(need & ~have))
        if miss:
            failures.append(("lattice-cover", miss, None))
    res.certificate = {"failures": failures}
    res.certified = not failures
    return res.certified
