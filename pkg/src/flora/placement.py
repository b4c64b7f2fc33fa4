"""Stage 3: place each module's components inside its region, then fix stragglers.

Components go flush into convex corners of the module's free space. A
best-first tree search commits one component per level, scoring every
child by a greedy rollout that always picks the corner leaving the fewest
outline corners behind. Components that still do not fit get room by
pulling strips of cells from neighbouring modules that can spare them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from flora.geometry import Rect
from flora.layout import Layout
from flora.masks import summed_area, window_sums
from flora.metrics import pd
from flora.resize import SIDES, area_ratios, grown

DEFAULT_EXPAND_CAP = 64


def _vertices(block: np.ndarray) -> int:
    """Outline vertices at the interior lattice points of a padded boolean block."""
    m = block.astype(np.int8)
    a, b, c, d = m[:-1, :-1], m[:-1, 1:], m[1:, :-1], m[1:, 1:]
    s = a + b + c + d
    return int(((s == 1) | (s == 3)).sum() + 2 * ((s == 2) & (a == d)).sum())


def corner_delta(free: np.ndarray, r: Rect) -> int:
    """Change in the free region's outline vertex count if ``r`` is filled."""
    padded = np.pad(free, 1)
    window = padded[r.y:r.y1 + 2, r.x:r.x1 + 2]
    after = window.copy()
    after[1:-1, 1:-1] = False
    return _vertices(after) - _vertices(window)


def _orientations(w: int, h: int, rotate: bool):
    dims = [(w, h)]
    if rotate and w != h:
        dims.append((h, w))
    # wider orientation first
    return sorted(dims, key=lambda d: (-d[0], d[1]))


def enumerate_corner_placements(free: np.ndarray, w: int, h: int,
                                rotate: bool = True) -> list[Rect]:
    """Rects inside ``free`` whose corner sits in a convex corner of ``free``.

    A cell is a convex corner in one of four directions when its two
    neighbours on those sides are outside the free mask. The rect must
    share that corner cell and lie entirely inside ``free``. Results are
    distinct and sorted by ``(y, x)`` with the wider orientation first.
    """
    free = np.asarray(free, dtype=bool)
    H, W = free.shape
    p = np.pad(free, 1)
    inner = p[1:-1, 1:-1]
    open_l, open_r = ~p[1:-1, :-2], ~p[1:-1, 2:]
    open_b, open_t = ~p[:-2, 1:-1], ~p[2:, 1:-1]
    corners = {
        "bl": inner & open_l & open_b,
        "br": inner & open_r & open_b,
        "tl": inner & open_l & open_t,
        "tr": inner & open_r & open_t,
    }
    sat = summed_area(free)
    out = []
    seen = set()
    for rank, (mw, mh) in enumerate(_orientations(w, h, rotate)):
        if mw > W or mh > H:
            continue
        fit = window_sums(sat, mw, mh) == mw * mh
        ay, ax = fit.shape
        hit = (corners["bl"][:ay, :ax] | corners["br"][:ay, mw - 1:mw - 1 + ax]
               | corners["tl"][mh - 1:mh - 1 + ay, :ax]
               | corners["tr"][mh - 1:mh - 1 + ay, mw - 1:mw - 1 + ax]) & fit
        for y, x in zip(*np.nonzero(hit)):
            key = (int(x), int(y), mw, mh)
            if key not in seen:
                seen.add(key)
                out.append((int(y), int(x), rank, Rect(int(x), int(y), mw, mh)))
    out.sort(key=lambda t: t[:3])
    return [t[3] for t in out]


@dataclass
class SearchNode:
    """Partial placement: committed ``(component, rect)`` pairs and the free mask."""

    placed: list = field(default_factory=list)
    free: np.ndarray = None
    value: float = 0.0
    rollout: list = field(default_factory=list)

    def child(self, k: int, r: Rect) -> SearchNode:
        free = self.free.copy()
        free[r.y:r.y1, r.x:r.x1] = False
        return SearchNode(self.placed + [(k, r)], free)


class ModulePacker:
    """Corner-based packing of one module's components in local coordinates."""

    def __init__(self, region: np.ndarray, dims, rotate: bool = True,
                 expand_cap: int = DEFAULT_EXPAND_CAP):
        self.region = np.asarray(region, dtype=bool)
        self.dims = [tuple(d) for d in dims]
        self.areas = [w * h for w, h in self.dims]
        self.total = sum(self.areas)
        self.rotate = rotate
        self.expand_cap = expand_cap
        # largest first, index breaks ties
        self.order = sorted(range(len(self.dims)), key=lambda k: (-self.areas[k], k))

    def root(self) -> SearchNode:
        return SearchNode([], self.region.copy())

    def pd(self, placed) -> float:
        if self.total == 0:
            return 1.0
        return sum(self.areas[k] for k, _ in placed) / self.total

    def _remaining(self, node: SearchNode):
        done = {k for k, _ in node.placed}
        return [k for k in self.order if k not in done]

    def simulate(self, node: SearchNode) -> float:
        """Greedy rollout; stores the full placement in ``node.rollout``."""
        free = node.free.copy()
        placed = list(node.placed)
        for k in self._remaining(node):
            cands = enumerate_corner_placements(free, *self.dims[k], self.rotate)
            if not cands:
                continue
            best = min(cands, key=lambda r: corner_delta(free, r))
            free[best.y:best.y1, best.x:best.x1] = False
            placed.append((k, best))
        node.rollout = placed
        node.value = self.pd(placed)
        return node.value

    def children(self, node: SearchNode) -> list[SearchNode]:
        out = []
        for k in self._remaining(node):
            for r in enumerate_corner_placements(node.free, *self.dims[k], self.rotate):
                out.append(node.child(k, r))
                if len(out) >= self.expand_cap:
                    return out
        return out

    def search(self) -> SearchNode:
        """Best-first descent; returns the node whose rollout is committed."""
        node = self.root()
        if self.total == 0:
            node.value = 1.0
            return node
        best = node
        self.simulate(node)
        while True:
            kids = self.children(node)
            if not kids:
                break
            top = None
            for kid in kids:
                v = self.simulate(kid)
                if v == 1.0:
                    return kid
                if top is None or v > top.value:
                    top = kid
            if top.value > best.value:
                best = top
            node = top
        return best


def _local_region(layout: Layout, i: int):
    ys, xs = np.nonzero(layout.owner == i)
    x0, y0 = int(xs.min()), int(ys.min())
    mask = np.zeros((int(ys.max()) - y0 + 1, int(xs.max()) - x0 + 1), dtype=bool)
    mask[ys - y0, xs - x0] = True
    return mask, x0, y0


def place_components(layout: Layout, i: int, rotate: bool = True,
                     expand_cap: int = DEFAULT_EXPAND_CAP) -> tuple[dict, float]:
    """Placement ``{component: global Rect}`` for module ``i`` and its PD."""
    comps = layout.components[i]
    if not comps:
        return {}, 1.0
    if not (layout.owner == i).any():
        return {}, 0.0
    mask, x0, y0 = _local_region(layout, i)
    packer = ModulePacker(mask, [(c.w, c.h) for c in comps], rotate, expand_cap)
    node = packer.search()
    placed = {k: Rect(r.x + x0, r.y + y0, r.w, r.h) for k, r in node.rollout}
    return placed, node.value


def place_all(layout: Layout, rotate: bool = True,
              expand_cap: int = DEFAULT_EXPAND_CAP) -> Layout:
    """Copy of ``layout`` with every module's components freshly placed."""
    out = layout.copy()
    for i in range(out.n_modules):
        out.placements[i] = place_components(out, i, rotate, expand_cap)[0]
    return out


def all_rects(free: np.ndarray):
    """Every all-free rect as arrays ``(x, y, w, h)``, one entry per (x, y, h)."""
    H, W = free.shape
    run = np.zeros((H, W + 1), dtype=np.int64)
    for x in range(W - 1, -1, -1):
        run[:, x] = np.where(free[:, x], run[:, x + 1] + 1, 0)
    run = run[:, :W]
    xs_, ys_, ws_, hs_ = [], [], [], []
    cols = np.arange(W)
    for y0 in range(H):
        cur = run[y0].copy()
        for y1 in range(y0, H):
            if y1 > y0:
                np.minimum(cur, run[y1], out=cur)
            nz = np.flatnonzero(cur)
            if len(nz) == 0:
                break
            xs_.append(cols[nz])
            ys_.append(np.full(len(nz), y0))
            ws_.append(cur[nz])
            hs_.append(np.full(len(nz), y1 - y0 + 1))
    if not xs_:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty, empty
    return tuple(np.concatenate(a) for a in (xs_, ys_, ws_, hs_))


def candidate_rects(free: np.ndarray, macro_area: int) -> tuple[Rect | None, Rect | None]:
    """Largest-area free rect and highest-aspect free rect.

    The high-aspect pick considers only rects at least ``macro_area`` big
    when any exist. Ties go to larger area, then lowest ``(y, x)``.
    """
    x, y, w, h = all_rects(free)
    if len(x) == 0:
        return None, None
    area = w * h
    ar = np.maximum(w, h) / np.minimum(w, h)
    k = np.lexsort((x, y, -w, -area))[0]
    r_a = Rect(int(x[k]), int(y[k]), int(w[k]), int(h[k]))
    pool = area >= macro_area
    if not pool.any():
        pool = np.ones_like(pool)
    idx = np.flatnonzero(pool)
    k = idx[np.lexsort((x[idx], y[idx], -area[idx], -ar[idx]))[0]]
    r_r = Rect(int(x[k]), int(y[k]), int(w[k]), int(h[k]))
    return r_a, r_r


def _mask_connected(mask: np.ndarray) -> bool:
    _, n = ndimage.label(mask)
    return n == 1


def _strip_cells(r: Rect, side: str) -> tuple[slice, slice]:
    g = grown(r, side)
    if side == "left":
        return slice(g.y, g.y1), slice(g.x, g.x + 1)
    if side == "right":
        return slice(g.y, g.y1), slice(g.x1 - 1, g.x1)
    if side == "bottom":
        return slice(g.y, g.y + 1), slice(g.x, g.x1)
    return slice(g.y1 - 1, g.y1), slice(g.x, g.x1)


class Refiner:
    """Boundary refinement for modules whose components did not all fit."""

    def __init__(self, layout: Layout, rotate: bool = True,
                 expand_cap: int = DEFAULT_EXPAND_CAP):
        self.layout = layout
        self.rotate = rotate
        self.expand_cap = expand_cap

    def _free(self, lay: Layout, i: int) -> np.ndarray:
        free = lay.owner == i
        for r in lay.placements[i].values():
            free[r.y:r.y1, r.x:r.x1] = False
        return free

    def _fits(self, r: Rect, w: int, h: int) -> tuple[int, int] | None:
        for mw, mh in _orientations(w, h, self.rotate):
            if r.w >= mw and r.h >= mh:
                return mw, mh
        return None

    def _target_dims(self, r: Rect, w: int, h: int) -> tuple[int, int]:
        """Macro orientation that lines its long side up with the rect's."""
        if not self.rotate or (r.w >= r.h) == (w >= h):
            return w, h
        return h, w

    def _donor_ok(self, lay: Layout, j: int, cells) -> dict | None:
        """New placement for donor ``j`` after losing ``cells``, or None if it would suffer."""
        ys, xs = cells
        mask = lay.owner == j
        mask[ys, xs] = False
        if not mask.any() or not _mask_connected(mask):
            return None
        keep = all(not ((r.x <= xs) & (xs < r.x1) & (r.y <= ys) & (ys < r.y1)).any()
                   for r in lay.placements[j].values())
        if keep:
            return dict(lay.placements[j])
        trial = lay.copy()
        trial.owner[ys, xs] = -1
        placed, value = place_components(trial, j, self.rotate, self.expand_cap)
        return placed if value == 1.0 else None

    def _grow_for(self, lay: Layout, i: int, k: int) -> bool:
        """Try to make room for component ``k`` of module ``i`` on ``lay`` in place."""
        comp = lay.components[i][k]
        free = self._free(lay, i)
        if not free.any():
            return False
        r_a, r_r = candidate_rects(free, comp.area)
        ar = comp.aspect_ratio
        rect = r_a if abs(r_a.aspect_ratio - ar) <= abs(r_r.aspect_ratio - ar) else r_r
        tw, th = self._target_dims(rect, comp.w, comp.h)
        ratios = area_ratios(lay)
        H, W = lay.owner.shape
        while self._fits(rect, comp.w, comp.h) is None:
            options = []
            for rank, side in enumerate(SIDES):
                horizontal = side in ("left", "right")
                if (horizontal and rect.w >= tw) or (not horizontal and rect.h >= th):
                    continue
                g = grown(rect, side)
                if g.x < 0 or g.y < 0 or g.x1 > W or g.y1 > H:
                    continue
                sy, sx = _strip_cells(rect, side)
                own = lay.owner[sy, sx].ravel()
                # own cells under a placed component cannot be absorbed
                if ((own == i) & ~free[sy, sx].ravel()).any():
                    continue
                donors = sorted(set(own[own != i].tolist()))
                if any(d < 0 for d in donors):
                    continue
                key = max((ratios[d] for d in donors), default=-np.inf)
                options.append((key, rank, side, donors))
            options.sort(key=lambda t: t[:2])
            for _, _, side, donors in options:
                sy, sx = _strip_cells(rect, side)
                grid_y, grid_x = np.mgrid[sy, sx]
                grid_y, grid_x = grid_y.ravel(), grid_x.ravel()
                new_place = {}
                ok = True
                for d in donors:
                    if pd(lay, d) < 1.0:
                        ok = False
                        break
                    sel = lay.owner[grid_y, grid_x] == d
                    placed = self._donor_ok(lay, d, (grid_y[sel], grid_x[sel]))
                    if placed is None:
                        ok = False
                        break
                    new_place[d] = placed
                if not ok:
                    continue
                lay.owner[grid_y, grid_x] = i
                for d, placed in new_place.items():
                    lay.placements[d] = placed
                free[grid_y, grid_x] = True
                rect = grown(rect, side)
                ratios = area_ratios(lay)
                break
            else:
                return False
        mw, mh = self._fits(rect, comp.w, comp.h)
        lay.placements[i][k] = Rect(rect.x, rect.y, mw, mh)
        return True

    def run(self) -> Layout:
        for i in range(self.layout.n_modules):
            if pd(self.layout, i) >= 1.0:
                continue
            comps = self.layout.components[i]
            pending = sorted((k for k in range(len(comps)) if k not in self.layout.placements[i]),
                             key=lambda k: (-comps[k].area, k))
            for k in pending:
                trial = self.layout.copy()
                if self._grow_for(trial, i, k):
                    self.layout = trial
        return self.layout


def refine_boundaries(layout: Layout, rotate: bool = True,
                      expand_cap: int = DEFAULT_EXPAND_CAP) -> Layout:
    """Enlarge modules with unplaced components at the expense of neighbours.

    Each unplaced component picks the free rect (largest-area or
    highest-aspect) whose aspect ratio is closest to its own, then grows it
    one strip at a time toward the neighbour with the smallest component
    area ratio. Only neighbours that keep every component placed may give
    cells. Growth for one component is all or nothing.
    """
    return Refiner(layout.copy(), rotate, expand_cap).run()


def run_stage3(layout: Layout, rotate: bool = True,
               expand_cap: int = DEFAULT_EXPAND_CAP) -> Layout:
    out = refine_boundaries(place_all(layout, rotate, expand_cap), rotate, expand_cap)
    out.stage = "stage3"
    return out
