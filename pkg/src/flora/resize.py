"""Stage 2: hand whitespace to modules until the canvas is fully owned.

First every module grows as a rectangle by absorbing fully blank strips
along its sides (modules that are tightest on component area go first).
The remaining whitespace is then cut into largest blank rectangles, each
given to the adjacent module whose pin feedthrough grows least.
"""

from __future__ import annotations

import numpy as np

from flora.errors import FloraError, GeometryError
from flora.geometry import Rect
from flora.layout import BLANK, Layout
from flora.metrics import FeedthroughParams, common_edge_matrix, ftpin_value

# tie order when several sides give the same gain
SIDES = ("left", "right", "bottom", "top")


def area_ratios(layout: Layout) -> np.ndarray:
    counts = layout.cell_counts()
    return np.array([layout.area_ratio(i, int(counts[i])) for i in range(layout.n_modules)])


def _strip(owner: np.ndarray, r: Rect, side: str):
    """Cells just outside ``r`` on ``side`` (None when off-canvas)."""
    H, W = owner.shape
    if side == "left":
        return None if r.x == 0 else owner[r.y:r.y1, r.x - 1]
    if side == "right":
        return None if r.x1 == W else owner[r.y:r.y1, r.x1]
    if side == "bottom":
        return None if r.y == 0 else owner[r.y - 1, r.x:r.x1]
    return None if r.y1 == H else owner[r.y1, r.x:r.x1]


def grown(r: Rect, side: str) -> Rect:
    if side == "left":
        return Rect(r.x - 1, r.y, r.w + 1, r.h)
    if side == "right":
        return Rect(r.x, r.y, r.w + 1, r.h)
    if side == "bottom":
        return Rect(r.x, r.y - 1, r.w, r.h + 1)
    return Rect(r.x, r.y, r.w, r.h + 1)


def _grow_module(layout: Layout, i: int):
    r = layout.module_rect(i)
    while True:
        best = None
        for side in SIDES:
            strip = _strip(layout.owner, r, side)
            if strip is None or not (strip == BLANK).all():
                continue
            if best is None or len(strip) > best[0]:
                best = (len(strip), side)
        if best is None:
            return
        r = grown(r, best[1])
        layout.owner[r.y:r.y1, r.x:r.x1] = i


def expand_rectangular(layout: Layout) -> Layout:
    """Grow rectangular modules by whole blank strips, largest ratio first."""
    out = layout.copy()
    for i in range(out.n_modules):
        if not out.is_module_rectangular(i):
            raise GeometryError(f"module {out.names[i]} is not rectangular")
    pending = set(range(out.n_modules))
    while pending:
        ratios = area_ratios(out)
        i = max(pending, key=lambda k: (ratios[k], -k))
        _grow_module(out, i)
        pending.discard(i)
    return out


def largest_blank_rectangle(layout: Layout, cell) -> Rect:
    """Largest all-blank rect containing ``cell``.

    Ties prefer the wider rect, then the lowest ``(y, x)`` anchor.
    """
    x, y = cell
    blank = layout.owner == BLANK
    return largest_free_rect_containing(blank, x, y)


def largest_free_rect_containing(free: np.ndarray, x: int, y: int) -> Rect:
    H, W = free.shape
    if not (0 <= x < W and 0 <= y < H) or not free[y, x]:
        raise GeometryError(f"cell {(x, y)} is not free")
    col = free[:, x]
    ya = y
    while ya > 0 and col[ya - 1]:
        ya -= 1
    yb = y
    while yb < H - 1 and col[yb + 1]:
        yb += 1
    rows = free[ya:yb + 1]
    # per row, the blank run through column x
    left_part = rows[:, :x + 1][:, ::-1]
    stop = np.where(left_part.all(axis=1), x + 1, np.argmin(left_part, axis=1))
    left = x - stop + 1
    right_part = rows[:, x:]
    stop = np.where(right_part.all(axis=1), W - x, np.argmin(right_part, axis=1))
    right = x + stop - 1

    k = y - ya
    lo_l = np.maximum.accumulate(left[k::-1])[::-1]     # rows y0..y, y0 <= y
    lo_r = np.minimum.accumulate(right[k::-1])[::-1]
    hi_l = np.maximum.accumulate(left[k:])              # rows y..y1
    hi_r = np.minimum.accumulate(right[k:])
    L = np.maximum(lo_l[:, None], hi_l[None, :])
    R = np.minimum(lo_r[:, None], hi_r[None, :])
    widths = R - L + 1
    heights = (np.arange(len(hi_l))[None, :] + k - np.arange(k + 1)[:, None]) + 1
    areas = widths * heights
    y0s = np.broadcast_to(np.arange(k + 1)[:, None] + ya, areas.shape)
    order = np.lexsort((L.ravel(), y0s.ravel(), -widths.ravel(), -areas.ravel()))
    a, b = divmod(int(order[0]), areas.shape[1])
    return Rect(int(L[a, b]), int(y0s[a, b]), int(widths[a, b]), int(heights[a, b]))


def _rect_neighbors(owner: np.ndarray, r: Rect) -> np.ndarray:
    """Owners of all cells bordering ``r`` (one entry per shared unit edge)."""
    parts = [s for s in (_strip(owner, r, side) for side in SIDES) if s is not None]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=owner.dtype)


def adjacent_modules(layout: Layout, r: Rect) -> list[int]:
    nb = _rect_neighbors(layout.owner, r)
    return sorted(int(v) for v in np.unique(nb[nb != BLANK]))


def delta_ftpin(layout: Layout, r: Rect, module: int, params: FeedthroughParams,
                ce=None) -> int:
    """Change in total FTpin if the blank cells of ``r`` went to ``module``.

    Only pairs ``(module, j)`` with ``j`` bordering ``r`` can change: the
    new cells add their shared edges with ``j`` to ``CE[module, j]``.
    """
    view = layout.owner[r.y:r.y1, r.x:r.x1]
    if not (view == BLANK).all():
        raise GeometryError(f"{r} is not blank")
    nb = _rect_neighbors(layout.owner, r)
    if not (nb == module).any():
        raise GeometryError(f"module {module} is not adjacent to {r}")
    if ce is None:
        ce = common_edge_matrix(layout)
    gained = np.bincount(nb[nb >= 0], minlength=layout.n_modules)
    total = 0
    for j in np.flatnonzero(gained):
        j = int(j)
        if j == module:
            continue
        y = params.demand.get((min(module, j), max(module, j)), 0)
        if y == 0:
            continue
        before = int(ce[module, j])
        total += ftpin_value(y, before + int(gained[j]), params.u) \
            - ftpin_value(y, before, params.u)
    return total


def remove_whitespace(layout: Layout, params: FeedthroughParams, trace=None) -> Layout:
    """Assign every blank cell, one largest blank rectangle at a time.

    ``trace``, if a list, receives ``(rect, chosen, {module: delta})`` per step.
    """
    out = layout.copy()
    if out.blank_count() and out.n_modules == 0:
        raise FloraError("whitespace with no module to absorb it")
    ce = common_edge_matrix(out)
    counts = out.cell_counts().astype(np.int64)
    comp_area = np.array([out.component_area(i) for i in range(out.n_modules)])
    blank = out.owner == BLANK
    while blank.any():
        k = int(np.argmax(blank.ravel()))
        y, x = divmod(k, out.width)
        r = largest_free_rect_containing(blank, x, y)
        cands = adjacent_modules(out, r)
        if not cands:
            raise FloraError(f"blank rect {r} touches no module")
        deltas = {m: delta_ftpin(out, r, m, params, ce) for m in cands}
        ratio = comp_area / np.maximum(counts, 1)
        best = min(cands, key=lambda m: (deltas[m], -ratio[m], m))
        nb = _rect_neighbors(out.owner, r)
        gained = np.bincount(nb[nb >= 0], minlength=out.n_modules)
        gained[best] = 0
        ce[best] += gained
        ce[:, best] += gained
        out.owner[r.y:r.y1, r.x:r.x1] = best
        blank[r.y:r.y1, r.x:r.x1] = False
        counts[best] += r.area
        if trace is not None:
            trace.append((r, best, deltas))
    return out


def run_stage2(layout: Layout, params: FeedthroughParams) -> Layout:
    """Expansion then allocation; raises LayoutValidationError if a region encloses a hole."""
    out = remove_whitespace(expand_rectangular(layout), params)
    out.stage = "stage2"
    out.validate(check_holes=True)
    return out
