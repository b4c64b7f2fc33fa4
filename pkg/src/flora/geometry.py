"""Cell-grid geometry shared by every stage.

Coordinates are integer cells with the origin at the lower-left of the
canvas; cell ``(x, y)`` covers ``[x, x+1) x [y, y+1)`` and its center sits at
``(x + 0.5, y + 0.5)``. Numpy masks are indexed ``mask[y, x]``.
Connectivity is 4-adjacency everywhere.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from flora.errors import GeometryError

Cell = tuple[int, int]

_NEIGHBORS = ((1, 0), (-1, 0), (0, 1), (0, -1))


@dataclass(frozen=True, order=True)
class Rect:
    """Axis-aligned cell rectangle anchored at its lower-left cell."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise GeometryError(f"rect dims must be >= 1, got {self.w}x{self.h}")

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def x1(self) -> int:
        """Exclusive right edge."""
        return self.x + self.w

    @property
    def y1(self) -> int:
        """Exclusive top edge."""
        return self.y + self.h

    @property
    def aspect_ratio(self) -> float:
        return max(self.w, self.h) / min(self.w, self.h)

    def cells(self) -> Iterable[Cell]:
        for y in range(self.y, self.y1):
            for x in range(self.x, self.x1):
                yield (x, y)

    def overlaps(self, other: Rect) -> bool:
        return (
            self.x < other.x1 and other.x < self.x1
            and self.y < other.y1 and other.y < self.y1
        )

    def contains(self, other: Rect) -> bool:
        return (
            self.x <= other.x and other.x1 <= self.x1
            and self.y <= other.y and other.y1 <= self.y1
        )

    def within(self, width: int, height: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.x1 <= width and self.y1 <= height

    def moved_to(self, x: int, y: int) -> Rect:
        return Rect(x, y, self.w, self.h)

    def rotated(self) -> Rect:
        return Rect(self.x, self.y, self.h, self.w)


class Region:
    """Immutable, non-empty, 4-connected set of cells.

    Args:
        cells: iterable of ``(x, y)`` cells.
        check_connected: set to False to skip the connectivity check, e.g.
            for transient free space that may legitimately be split.
    """

    __slots__ = ("cells",)

    def __init__(self, cells: Iterable[Cell], check_connected: bool = True):
        cells = frozenset((int(x), int(y)) for x, y in cells)
        if not cells:
            raise GeometryError("region must be non-empty")
        object.__setattr__(self, "cells", cells)
        if check_connected and not is_connected(cells):
            raise GeometryError("region is not 4-connected")

    def __setattr__(self, name, value):
        raise AttributeError("Region is immutable")

    def __len__(self):
        return len(self.cells)

    def __iter__(self):
        return iter(self.cells)

    def __contains__(self, cell):
        return cell in self.cells

    def __eq__(self, other):
        if isinstance(other, Region):
            return self.cells == other.cells
        return NotImplemented

    def __hash__(self):
        return hash(self.cells)

    def __repr__(self):
        r = bounding_rect(self.cells)
        return f"Region({len(self.cells)} cells in {r.w}x{r.h}@({r.x},{r.y}))"

    @classmethod
    def from_rect(cls, rect: Rect) -> Region:
        return cls(rect.cells(), check_connected=False)

    @classmethod
    def from_mask(cls, mask: np.ndarray, x0: int = 0, y0: int = 0,
                  check_connected: bool = True) -> Region:
        ys, xs = np.nonzero(mask)
        return cls(zip((xs + x0).tolist(), (ys + y0).tolist()),
                   check_connected=check_connected)

    def to_mask(self, width: int, height: int) -> np.ndarray:
        mask = np.zeros((height, width), dtype=bool)
        xs, ys = _cell_arrays(self.cells)
        mask[ys, xs] = True
        return mask

    def translated(self, dx: int, dy: int) -> Region:
        return Region(((x + dx, y + dy) for x, y in self.cells), check_connected=False)


def _as_cells(region) -> frozenset:
    if isinstance(region, Region):
        return region.cells
    return frozenset(region)


def _cell_arrays(cells) -> tuple[np.ndarray, np.ndarray]:
    arr = np.fromiter((c for cell in cells for c in cell), dtype=np.int64)
    arr = arr.reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def is_connected(region) -> bool:
    cells = _as_cells(region)
    if not cells:
        return False
    start = next(iter(cells))
    seen = {start}
    queue = deque([start])
    while queue:
        x, y = queue.popleft()
        for dx, dy in _NEIGHBORS:
            n = (x + dx, y + dy)
            if n in cells and n not in seen:
                seen.add(n)
                queue.append(n)
    return len(seen) == len(cells)


def bounding_rect(region) -> Rect:
    cells = _as_cells(region)
    if not cells:
        raise GeometryError("bounding_rect of empty region")
    xs, ys = _cell_arrays(cells)
    x0, y0 = int(xs.min()), int(ys.min())
    return Rect(x0, y0, int(xs.max()) - x0 + 1, int(ys.max()) - y0 + 1)


def common_edge_length(a, b) -> int:
    """Number of unit edges shared by a cell of ``a`` and a cell of ``b``."""
    a, b = _as_cells(a), _as_cells(b)
    if len(a) > len(b):
        a, b = b, a
    if not a.isdisjoint(b):
        raise GeometryError("common_edge_length requires disjoint regions")
    return sum((x + dx, y + dy) in b for x, y in a for dx, dy in _NEIGHBORS)


def vertex_count(mask: np.ndarray) -> int:
    """Count outline vertices of the True cells of a boolean mask.

    Looks at the 2x2 block of cells around every lattice point: one or three
    set cells make a convex or concave vertex, two diagonal cells make a
    pinch point that counts twice.
    """
    m = np.pad(np.asarray(mask, dtype=np.int8), 1)
    a = m[:-1, :-1]
    b = m[:-1, 1:]
    c = m[1:, :-1]
    d = m[1:, 1:]
    s = a + b + c + d
    odd = (s == 1) | (s == 3)
    diagonal = (s == 2) & (a == d)
    return int(odd.sum() + 2 * diagonal.sum())


def region_mask(region) -> tuple[np.ndarray, int, int]:
    """Boolean mask over the region's bounding rect plus its offset."""
    cells = _as_cells(region)
    r = bounding_rect(cells)
    xs, ys = _cell_arrays(cells)
    mask = np.zeros((r.h, r.w), dtype=bool)
    mask[ys - r.y, xs - r.x] = True
    return mask, r.x, r.y


def corner_count(region) -> int:
    mask, _, _ = region_mask(region)
    return vertex_count(mask)


def is_rectangular(region) -> bool:
    cells = _as_cells(region)
    return len(cells) == bounding_rect(cells).area


def centroid(region) -> tuple[float, float]:
    cells = _as_cells(region)
    if not cells:
        raise GeometryError("centroid of empty region")
    xs, ys = _cell_arrays(cells)
    return float(xs.mean() + 0.5), float(ys.mean() + 0.5)


def has_holes(region) -> bool:
    """True if some non-member cell is enclosed by the region (4-connected sense)."""
    mask, _, _ = region_mask(region)
    outside = ~np.pad(mask, 1)
    seen = np.zeros_like(outside)
    seen[0, 0] = True
    queue = deque([(0, 0)])
    h, w = outside.shape
    while queue:
        y, x = queue.popleft()
        for dx, dy in _NEIGHBORS:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and outside[ny, nx] and not seen[ny, nx]:
                seen[ny, nx] = True
                queue.append((ny, nx))
    return bool((outside & ~seen).any())


def outline_loops(region) -> list[list[tuple[int, int]]]:
    """Trace the region outline into closed vertex loops.

    Boundary edges are oriented with the region on their left, chained
    into loops, and collinear points are dropped. At pinch points the
    tracer turns left, so every loop is simple. Holes come back as
    separate (clockwise) loops.
    """
    cells = _as_cells(region)
    if not cells:
        raise GeometryError("outline of empty region")
    # directed unit edges keyed by start point
    nxt: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def add(p, q):
        nxt.setdefault(p, []).append(q)

    for x, y in cells:
        if (x, y - 1) not in cells:
            add((x, y), (x + 1, y))
        if (x + 1, y) not in cells:
            add((x + 1, y), (x + 1, y + 1))
        if (x, y + 1) not in cells:
            add((x + 1, y + 1), (x, y + 1))
        if (x - 1, y) not in cells:
            add((x, y + 1), (x, y))

    loops = []
    while nxt:
        start = min(nxt)
        prev = start
        cur = nxt[start].pop()
        if not nxt[start]:
            del nxt[start]
        path = [start]
        while cur != start:
            path.append(cur)
            options = nxt[cur]
            if len(options) == 1:
                q = options.pop()
            else:
                # pinch point: prefer the left turn
                dx, dy = cur[0] - prev[0], cur[1] - prev[1]
                left = (cur[0] - dy, cur[1] + dx)
                q = left if left in options else options[0]
                options.remove(q)
            if not options:
                del nxt[cur]
            prev, cur = cur, q
        loops.append(_drop_collinear(path))
    return loops


def _drop_collinear(path):
    out = []
    n = len(path)
    for i in range(n):
        p0, p1, p2 = path[i - 1], path[i], path[(i + 1) % n]
        cross = (p1[0] - p0[0]) * (p2[1] - p1[1]) - (p1[1] - p0[1]) * (p2[0] - p1[0])
        if cross != 0:
            out.append(p1)
    return out
