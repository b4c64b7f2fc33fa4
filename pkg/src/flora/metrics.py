"""Evaluation metrics: HPWL, feedthrough (FTmod, FTpin), whitespace, placement density.

Module reference points are region centroids (mean of cell centers). A
net's bounding box spans the centroids of its members plus any fixed
terminal points; for feedthrough counting it is widened to the cells it
covers (see :func:`cell_span`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from flora.errors import GeometryError
from flora.layout import BLANK, Layout


@dataclass
class FeedthroughParams:
    """Minimum pin spacing ``u`` (cells) and pin demand per module pair."""

    u: int = 1
    demand: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.u < 1:
            raise ValueError("pin spacing u must be >= 1")
        demand = {}
        for (i, j), y in self.demand.items():
            if y < 0:
                raise ValueError("pin demand must be non-negative")
            if i == j:
                raise ValueError("pin demand needs two distinct modules")
            key = (min(i, j), max(i, j))
            demand[key] = demand.get(key, 0) + y
        self.demand = demand

    @classmethod
    def from_nets(cls, nets, u: int = 1) -> FeedthroughParams:
        from flora.bench import pair_demand

        return cls(u, pair_demand(nets))

    def pairs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Arrays (i, j, Y) over pairs with positive demand, sorted by (i, j)."""
        items = sorted((k, y) for k, y in self.demand.items() if y > 0)
        if not items:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, empty
        i = np.array([k[0] for k, _ in items], dtype=np.int64)
        j = np.array([k[1] for k, _ in items], dtype=np.int64)
        y = np.array([v for _, v in items], dtype=np.int64)
        return i, j, y


@dataclass
class MetricRow:
    hpwl: float
    ftpin: int
    ftmod: float
    ws_pct: float
    pd_pct: float
    rt_s: float = 0.0


def centroids(layout: Layout) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-module centroid x, y and cell count (NaN centroid for empty modules)."""
    n = layout.n_modules
    ys, xs = np.nonzero(layout.owner >= 0)
    ids = layout.owner[ys, xs]
    counts = np.bincount(ids, minlength=n).astype(float)
    sx = np.bincount(ids, weights=xs + 0.5, minlength=n)
    sy = np.bincount(ids, weights=ys + 0.5, minlength=n)
    with np.errstate(invalid="ignore", divide="ignore"):
        return sx / counts, sy / counts, counts


def net_bbox(net, cx, cy) -> tuple[float, float, float, float]:
    """(xmin, xmax, ymin, ymax) over member centroids and terminal points."""
    px = [cx[m] for m in net.members] + [t[0] for t in net.terminals]
    py = [cy[m] for m in net.members] + [t[1] for t in net.terminals]
    if not px:
        raise GeometryError("net has no members")
    if any(math.isnan(v) for v in px):
        raise GeometryError("net references a module with an empty region")
    return min(px), max(px), min(py), max(py)


def hpwl(layout: Layout, nets, cents=None) -> float:
    cx, cy, _ = cents if cents is not None else centroids(layout)
    total = 0.0
    for net in nets:
        x0, x1, y0, y1 = net_bbox(net, cx, cy)
        total += (x1 - x0) + (y1 - y0)
    return total


def cell_span(lo: float, hi: float) -> tuple[int, int]:
    """Inclusive range of cells whose interior meets ``[lo, hi]``.

    A degenerate interval sitting exactly on a grid line maps to the cell on
    its upper side so that every box covers at least one cell.
    """
    a = math.floor(lo)
    b = math.ceil(hi) - 1
    return a, max(a, b)


def _span_box(net, cx, cy, width, height):
    x0, x1, y0, y1 = net_bbox(net, cx, cy)
    ax, bx = cell_span(x0, x1)
    ay, by = cell_span(y0, y1)
    ax, ay = max(ax, 0), max(ay, 0)
    bx, by = min(bx, width - 1), min(by, height - 1)
    return ax, bx, ay, by


def ftmod(layout: Layout, net, cents=None) -> float:
    """Half the number of non-member modules with a cell inside the net's box."""
    cx, cy, _ = cents if cents is not None else centroids(layout)
    ax, bx, ay, by = _span_box(net, cx, cy, layout.width, layout.height)
    window = layout.owner[ay:by + 1, ax:bx + 1]
    present = np.bincount(window[window != BLANK].ravel(), minlength=layout.n_modules) > 0
    present[list(net.members)] = False
    return 0.5 * int(present.sum())


def ftmod_total(layout: Layout, nets, cents=None) -> float:
    cents = cents if cents is not None else centroids(layout)
    return float(sum(ftmod(layout, net, cents) for net in nets))


def common_edge_matrix(layout: Layout) -> np.ndarray:
    """Symmetric matrix of shared unit-edge counts between module regions."""
    n = layout.n_modules
    own = layout.owner.astype(np.int64)
    counts = np.zeros(n * n, dtype=np.int64)
    for a, b in ((own[:, :-1], own[:, 1:]), (own[:-1, :], own[1:, :])):
        sel = (a >= 0) & (b >= 0) & (a != b)
        counts += np.bincount((a[sel] * n + b[sel]), minlength=n * n)
    m = counts.reshape(n, n)
    return m + m.T


def ftpin_value(demand, common_edge, u: int = 1):
    """``max(0, ceil((u*Y - CE) / u))``, elementwise for arrays."""
    need = np.asarray(demand) * u - np.asarray(common_edge)
    out = np.maximum(0, -((-need) // u))
    return int(out) if np.ndim(out) == 0 else out


def ftpin(layout: Layout, i: int, j: int, params: FeedthroughParams, ce=None) -> int:
    if i == j:
        raise ValueError("ftpin needs two distinct modules")
    y = params.demand.get((min(i, j), max(i, j)), 0)
    if ce is None:
        ce = common_edge_matrix(layout)
    return ftpin_value(y, int(ce[i, j]), params.u)


def ftpin_total(layout: Layout, params: FeedthroughParams, ce=None) -> int:
    i, j, y = params.pairs()
    if len(y) == 0:
        return 0
    if ce is None:
        ce = common_edge_matrix(layout)
    return int(ftpin_value(y, ce[i, j], params.u).sum())


def whitespace_pct(layout: Layout) -> float:
    return 100.0 * layout.blank_count() / (layout.width * layout.height)


def pd(layout: Layout, i: int) -> float:
    """Placed component area over total component area (1.0 with no components)."""
    total = layout.component_area(i)
    if total == 0:
        return 1.0
    placed = sum(layout.components[i][k].area for k in layout.placements[i])
    return placed / total


def pd_total(layout: Layout) -> float:
    """Component-area weighted PD over all modules, in percent."""
    total = sum(layout.component_area(i) for i in range(layout.n_modules))
    if total == 0:
        return 100.0
    placed = sum(layout.components[i][k].area
                 for i in range(layout.n_modules) for k in layout.placements[i])
    return 100.0 * placed / total


def objective_refs(layout: Layout, nets, params: FeedthroughParams) -> tuple[float, float]:
    """Normalizers for :func:`sa_objective`: the layout's own totals, 1 when zero."""
    fm = ftmod_total(layout, nets)
    fp = ftpin_total(layout, params)
    return (fm or 1.0, float(fp) or 1.0)


def combine_objective(fm: float, fp: float, weights, refs) -> float:
    w_mod, w_pin = weights
    return w_mod * (fm / refs[0]) + w_pin * (fp / refs[1])


def sa_objective(layout: Layout, nets, params: FeedthroughParams,
                 weights=(0.5, 0.5), refs=None) -> float:
    """Weighted average of normalized FTmod and FTpin totals."""
    w_mod, w_pin = weights
    if w_mod < 0 or w_pin < 0 or not math.isclose(w_mod + w_pin, 1.0):
        raise ValueError("weights must be non-negative and sum to 1")
    if refs is None:
        refs = objective_refs(layout, nets, params)
    return combine_objective(ftmod_total(layout, nets), ftpin_total(layout, params),
                             weights, refs)


def evaluate(layout: Layout, nets, params: FeedthroughParams, rt_s: float = 0.0) -> MetricRow:
    cents = centroids(layout)
    return MetricRow(
        hpwl=hpwl(layout, nets, cents),
        ftpin=ftpin_total(layout, params),
        ftmod=ftmod_total(layout, nets, cents),
        ws_pct=whitespace_pct(layout),
        pd_pct=pd_total(layout),
        rt_s=rt_s,
    )
