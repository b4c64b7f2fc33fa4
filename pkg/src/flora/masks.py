"""Position mask and wiremask for placing one rectangular module on the grid.

Anchors are lower-left cells. Both masks are full canvas-sized arrays
indexed ``[y, x]``; anchors where the module would leave the canvas are
illegal.
"""

from __future__ import annotations

import numpy as np

from flora.errors import NoRoomError
from flora.layout import BLANK, Layout
from flora.metrics import centroids


def summed_area(mask: np.ndarray) -> np.ndarray:
    """Integral image with a zero first row/column."""
    h, w = mask.shape
    s = np.zeros((h + 1, w + 1), dtype=np.int64)
    np.cumsum(np.cumsum(mask, axis=0, dtype=np.int64), axis=1, out=s[1:, 1:])
    return s


def window_sums(sat: np.ndarray, w: int, h: int) -> np.ndarray:
    """Sum of the underlying mask over every w x h window, indexed by anchor."""
    return sat[h:, w:] - sat[:-h, w:] - sat[h:, :-w] + sat[:-h, :-w]


def occupancy(layout: Layout, moving: int | None = None) -> np.ndarray:
    occ = layout.owner != BLANK
    if moving is not None:
        occ &= layout.owner != moving
    return occ


def legal_anchors(occ: np.ndarray, w: int, h: int) -> np.ndarray:
    """Anchors where a w x h rect fits in-canvas without touching ``occ``."""
    H, W = occ.shape
    legal = np.zeros((H, W), dtype=bool)
    if w > W or h > H:
        return legal
    legal[:H - h + 1, :W - w + 1] = window_sums(summed_area(occ), w, h) == 0
    return legal


def legal_anchors_from_rects(rects, w: int, h: int, width: int, height: int) -> np.ndarray:
    """Same as :func:`legal_anchors` when every obstacle is a rectangle.

    The anchors at which a w x h rect would hit obstacle ``(x, y, rw, rh)``
    form the anchor-space rectangle ``(x-w, x+rw) x (y-h, y+rh)`` (open), so
    obstacles are painted directly instead of integrating the grid.
    """
    legal = np.zeros((height, width), dtype=bool)
    if w > width or h > height:
        return legal
    ax, ay = width - w + 1, height - h + 1
    view = legal[:ay, :ax]
    view[...] = True
    for x, y, rw, rh in rects:
        view[max(0, y - h + 1):max(0, y + rh), max(0, x - w + 1):max(0, x + rw)] = False
    return legal


def position_mask(layout: Layout, w: int, h: int, moving: int | None = None) -> np.ndarray:
    """Legal anchor cells for a w x h module; ``moving``'s own cells count as blank."""
    return legal_anchors(occupancy(layout, moving), w, h)


def hpwl_increment(layout_w: int, layout_h: int, nets, moving: int, w: int, h: int,
                   cx, cy) -> np.ndarray:
    """HPWL increase for every anchor, ignoring legality.

    Each net touching ``moving`` contributes, per axis, the distance from the
    module centroid to the box of the net's other points; x and y separate,
    so the grid is the outer sum of two 1-D profiles.
    """
    xs = np.arange(layout_w) + w / 2.0
    ys = np.arange(layout_h) + h / 2.0
    lo_x, hi_x, lo_y, hi_y = [], [], [], []
    for net in nets:
        if moving not in net.members:
            continue
        px = [cx[m] for m in net.members if m != moving and not np.isnan(cx[m])]
        py = [cy[m] for m in net.members if m != moving and not np.isnan(cy[m])]
        px += [t[0] for t in net.terminals]
        py += [t[1] for t in net.terminals]
        if not px:
            continue
        lo_x.append(min(px))
        hi_x.append(max(px))
        lo_y.append(min(py))
        hi_y.append(max(py))
    if not lo_x:
        return np.zeros((layout_h, layout_w))
    lo_x, hi_x = np.array(lo_x)[:, None], np.array(hi_x)[:, None]
    lo_y, hi_y = np.array(lo_y)[:, None], np.array(hi_y)[:, None]
    dx = (np.maximum(0.0, lo_x - xs) + np.maximum(0.0, xs - hi_x)).sum(axis=0)
    dy = (np.maximum(0.0, lo_y - ys) + np.maximum(0.0, ys - hi_y)).sum(axis=0)
    return dy[:, None] + dx[None, :]


def wiremask(layout: Layout, nets, moving: int, w: int, h: int,
             cents=None, legal=None) -> np.ndarray:
    """HPWL increment per legal anchor (``inf`` where illegal).

    ``moving`` is taken off the canvas first; the other modules keep their
    current centroids.
    """
    if cents is None:
        lifted = layout.copy()
        lifted.clear(moving)
        cents = centroids(lifted)
    cx, cy = cents[0], cents[1]
    if legal is None:
        legal = position_mask(layout, w, h, moving)
    delta = hpwl_increment(layout.width, layout.height, nets, moving, w, h, cx, cy)
    return np.where(legal, delta, np.inf)


def pick_anchor(mask: np.ndarray) -> tuple[int, int]:
    """Smallest positive increment, else smallest zero; first in row-major order."""
    legal = np.isfinite(mask)
    if not legal.any():
        raise NoRoomError("no legal anchor")
    positive = legal & (mask > 0)
    pool = positive if positive.any() else legal
    flat = np.where(pool, mask, np.inf).ravel()
    k = int(np.argmin(flat))
    y, x = divmod(k, mask.shape[1])
    return x, y


def pick_separable(dx: np.ndarray, dy: np.ndarray, legal: np.ndarray) -> tuple[int, int]:
    """Same choice as :func:`pick_anchor` on ``where(legal, dy[:, None] + dx, inf)``.

    ``dx`` and ``dy`` are non-negative, so the zero-increment anchors are
    the product of the zero entries of each profile.
    """
    delta = np.add.outer(dy, dx)
    np.putmask(delta, ~legal, np.inf)
    zx = np.flatnonzero(dx == 0)
    zy = np.flatnonzero(dy == 0)
    zero_legal = None
    if len(zx) and len(zy):
        block = np.ix_(zy, zx)
        zero_legal = np.isfinite(delta[block])
        delta[block] = np.inf
    k = int(np.argmin(delta))
    y, x = divmod(k, delta.shape[1])
    if np.isfinite(delta[y, x]):
        return x, y
    if zero_legal is None or not zero_legal.any():
        raise NoRoomError("no legal anchor")
    r, c = divmod(int(np.argmax(zero_legal)), zero_legal.shape[1])
    return int(zx[c]), int(zy[r])


def greedy_place(layout: Layout, moving: int, nets, w: int, h: int,
                 cents=None) -> tuple[int, int]:
    """Anchor with the smallest positive HPWL increment (row-major ties)."""
    return pick_anchor(wiremask(layout, nets, moving, w, h, cents))
