"""Compiled inner loops for the Stage-1 annealer.

Each kernel mirrors a numpy reference elsewhere in the package
(:func:`flora.masks.pick_separable`, :mod:`flora.metrics`) and is tested
against it. Modules are rectangles given as anchor/dim arrays; nets are a
CSR list of member indices plus a terminal bounding box per net.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


_ONE = np.uint64(1)
_ALL = np.uint64(0xFFFFFFFFFFFFFFFF)


@njit(cache=True)
def _blocked_bits(xs, ys, ws, hs, i, active, ax, ay):
    """Per anchor row, a bitset of anchors where module ``i`` would hit an active module."""
    nw = (ax + 63) // 64
    blocked = np.zeros((ay, nw), dtype=np.uint64)
    masks = np.zeros(nw, dtype=np.uint64)
    w, h = ws[i], hs[i]
    for j in range(xs.shape[0]):
        if j == i or not active[j]:
            continue
        x0 = max(0, xs[j] - w + 1)
        x1 = min(ax, xs[j] + ws[j])
        y0 = max(0, ys[j] - h + 1)
        y1 = min(ay, ys[j] + hs[j])
        if x0 >= x1 or y0 >= y1:
            continue
        k0, k1 = x0 // 64, (x1 - 1) // 64
        for k in range(k0, k1 + 1):
            lo = max(x0 - 64 * k, 0)
            n_bits = min(x1 - 64 * k, 64) - lo
            m = _ALL if n_bits == 64 else (_ONE << np.uint64(n_bits)) - _ONE
            masks[k] = m << np.uint64(lo)
        for y in range(y0, y1):
            for k in range(k0, k1 + 1):
                blocked[y, k] |= masks[k]
    return blocked


@njit(cache=True)
def relocate(xs, ys, ws, hs, i, active, net_ptr, net_mods, nets_of_i,
             t_lo_x, t_hi_x, t_lo_y, t_hi_y, width, height):
    """Anchor for module ``i`` with the smallest positive HPWL increment.

    Obstacles are the modules flagged in ``active`` (``i`` excluded). Ties go
    to the first anchor in row-major order. Falls back to the first legal
    (zero-increment) anchor; returns (-1, -1) if none fits.
    """
    w, h = ws[i], hs[i]
    ax, ay = width - w + 1, height - h + 1
    if ax < 1 or ay < 1:
        return -1, -1
    blocked = _blocked_bits(xs, ys, ws, hs, i, active, ax, ay)
    dx = np.zeros(ax)
    dy = np.zeros(ay)
    for r in nets_of_i:
        lo_x, hi_x = t_lo_x[r], t_hi_x[r]
        lo_y, hi_y = t_lo_y[r], t_hi_y[r]
        for p in range(net_ptr[r], net_ptr[r + 1]):
            m = net_mods[p]
            if m == i or not active[m]:
                continue
            cx = xs[m] + ws[m] / 2.0
            cy = ys[m] + hs[m] / 2.0
            lo_x = min(lo_x, cx)
            hi_x = max(hi_x, cx)
            lo_y = min(lo_y, cy)
            hi_y = max(hi_y, cy)
        if not math.isfinite(lo_x):
            continue
        for x in range(ax):
            px = x + w / 2.0
            dx[x] += max(0.0, lo_x - px) + max(0.0, px - hi_x)
        for y in range(ay):
            py = y + h / 2.0
            dy[y] += max(0.0, lo_y - py) + max(0.0, py - hi_y)
    dx_min = dx.min()
    dx_pos = np.inf
    for x in range(ax):
        if 0.0 < dx[x] < dx_pos:
            dx_pos = dx[x]
    # rows in ascending dy; a row is skipped once its lower bound exceeds the best
    best = np.inf
    bx, by = -1, -1
    for y in np.argsort(dy, kind="mergesort"):
        base = dy[y]
        bound = base + dx_min if base > 0.0 else dx_pos
        if bound > best:
            if base > 0.0:
                break
            continue
        for x in range(ax):
            if (blocked[y, x >> 6] >> np.uint64(x & 63)) & _ONE:
                continue
            v = base + dx[x]
            if v > 0.0 and (v < best or (v == best and (y < by or (y == by and x < bx)))):
                best = v
                bx, by = x, y
    if bx >= 0:
        return bx, by
    for y in range(ay):
        for x in range(ax):
            if not (blocked[y, x >> 6] >> np.uint64(x & 63)) & _ONE:
                return x, y
    return -1, -1


@njit(cache=True)
def fits(xs, ys, ws, hs, i, active, width, height):
    """True if module ``i`` is in-canvas and clear of every active module."""
    if xs[i] < 0 or ys[i] < 0 or xs[i] + ws[i] > width or ys[i] + hs[i] > height:
        return False
    for j in range(xs.shape[0]):
        if j == i or not active[j]:
            continue
        if (xs[i] < xs[j] + ws[j] and xs[j] < xs[i] + ws[i]
                and ys[i] < ys[j] + hs[j] and ys[j] < ys[i] + hs[i]):
            return False
    return True


@njit(cache=True)
def _net_terms(xs, ys, ws, hs, net_ptr, net_mods, member, t_lo_x, t_hi_x, t_lo_y, t_hi_y,
               width, height, r, span):
    """HPWL term and feedthrough hits of net ``r``; writes its cell-span box to ``span[r]``."""
    lo_x, hi_x = t_lo_x[r], t_hi_x[r]
    lo_y, hi_y = t_lo_y[r], t_hi_y[r]
    for p in range(net_ptr[r], net_ptr[r + 1]):
        m = net_mods[p]
        cx = xs[m] + ws[m] / 2.0
        cy = ys[m] + hs[m] / 2.0
        lo_x = min(lo_x, cx)
        hi_x = max(hi_x, cx)
        lo_y = min(lo_y, cy)
        hi_y = max(hi_y, cy)
    a_x = math.floor(lo_x)
    b_x = max(a_x, math.ceil(hi_x) - 1)
    a_y = math.floor(lo_y)
    b_y = max(a_y, math.ceil(hi_y) - 1)
    span[r, 0] = min(max(a_x, 0), width - 1)
    span[r, 1] = min(max(b_x, 0), width - 1)
    span[r, 2] = min(max(a_y, 0), height - 1)
    span[r, 3] = min(max(b_y, 0), height - 1)
    hits = 0
    for j in range(xs.shape[0]):
        if not member[r, j] and _hit(xs[j], ys[j], ws[j], hs[j], span, r):
            hits += 1
    return (hi_x - lo_x) + (hi_y - lo_y), hits


@njit(cache=True)
def _hit(x, y, w, h, span, r):
    return x <= span[r, 1] and x + w - 1 >= span[r, 0] and y <= span[r, 3] \
        and y + h - 1 >= span[r, 2]


@njit(cache=True)
def _pair_pins(xs, ys, ws, hs, i, j, y_ij, u):
    ce = 0
    if xs[i] + ws[i] == xs[j] or xs[j] + ws[j] == xs[i]:
        ce += max(0, min(ys[i] + hs[i], ys[j] + hs[j]) - max(ys[i], ys[j]))
    if ys[i] + hs[i] == ys[j] or ys[j] + hs[j] == ys[i]:
        ce += max(0, min(xs[i] + ws[i], xs[j] + ws[j]) - max(xs[i], xs[j]))
    need = y_ij * u - ce
    return (need + u - 1) // u if need > 0 else 0


@njit(cache=True)
def _totals(net_hpwl, net_hits, pair_pins):
    hpwl = 0.0
    for r in range(net_hpwl.shape[0]):
        hpwl += net_hpwl[r]
    return 0.5 * net_hits.sum(), pair_pins.sum(), hpwl


@njit(cache=True)
def evaluate_terms(xs, ys, ws, hs, net_ptr, net_mods, member, t_lo_x, t_hi_x, t_lo_y, t_hi_y,
                   pi, pj, py, u, width, height):
    """Per-net HPWL terms, hits and spans plus per-pair pins of a rectangle layout."""
    k = net_ptr.shape[0] - 1
    net_hpwl = np.zeros(k)
    net_hits = np.zeros(k, dtype=np.int64)
    span = np.zeros((k, 4), dtype=np.int64)
    for r in range(k):
        net_hpwl[r], net_hits[r] = _net_terms(xs, ys, ws, hs, net_ptr, net_mods, member,
                                              t_lo_x, t_hi_x, t_lo_y, t_hi_y, width, height,
                                              r, span)
    pair_pins = np.zeros(py.shape[0], dtype=np.int64)
    for q in range(py.shape[0]):
        pair_pins[q] = _pair_pins(xs, ys, ws, hs, pi[q], pj[q], py[q], u)
    return net_hpwl, net_hits, span, pair_pins


@njit(cache=True)
def evaluate(xs, ys, ws, hs, net_ptr, net_mods, member, t_lo_x, t_hi_x, t_lo_y, t_hi_y,
             pi, pj, py, u, width, height):
    """(FTmod, FTpin, HPWL) of a rectangle layout."""
    net_hpwl, net_hits, _, pair_pins = evaluate_terms(
        xs, ys, ws, hs, net_ptr, net_mods, member, t_lo_x, t_hi_x, t_lo_y, t_hi_y,
        pi, pj, py, u, width, height)
    return _totals(net_hpwl, net_hits, pair_pins)


@njit(cache=True)
def evaluate_moved(xs, ys, ws, hs, old_xs, old_ys, moved, net_ptr, net_mods, member,
                   t_lo_x, t_hi_x, t_lo_y, t_hi_y, pi, pj, py, u, width, height,
                   net_hpwl, net_hits, span, pair_pins):
    """Update the terms of :func:`evaluate_terms` after the modules in ``moved`` moved.

    Nets with a moved member are recomputed; every other net keeps its box
    and only re-tests the moved modules against it. Returns fresh term arrays
    and the totals, which equal a full evaluation exactly.
    """
    k = net_ptr.shape[0] - 1
    n = xs.shape[0]
    is_moved = np.zeros(n, dtype=np.bool_)
    for m in moved:
        is_moved[m] = True
    net_hpwl = net_hpwl.copy()
    net_hits = net_hits.copy()
    span = span.copy()
    pair_pins = pair_pins.copy()
    for r in range(k):
        touched = False
        for p in range(net_ptr[r], net_ptr[r + 1]):
            if is_moved[net_mods[p]]:
                touched = True
                break
        if touched:
            net_hpwl[r], net_hits[r] = _net_terms(xs, ys, ws, hs, net_ptr, net_mods, member,
                                                  t_lo_x, t_hi_x, t_lo_y, t_hi_y, width,
                                                  height, r, span)
            continue
        for m in moved:
            net_hits[r] += (_hit(xs[m], ys[m], ws[m], hs[m], span, r)
                            - _hit(old_xs[m], old_ys[m], ws[m], hs[m], span, r))
    for q in range(py.shape[0]):
        if is_moved[pi[q]] or is_moved[pj[q]]:
            pair_pins[q] = _pair_pins(xs, ys, ws, hs, pi[q], pj[q], py[q], u)
    fm, fp, hp = _totals(net_hpwl, net_hits, pair_pins)
    return fm, fp, hp, net_hpwl, net_hits, span, pair_pins
