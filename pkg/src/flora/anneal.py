"""Stage 1: feedthrough-aware simulated annealing over rectangular modules.

A move swaps the anchors of two random modules. Swapped modules that no
longer fit are re-placed, larger first, at the anchor with the smallest
positive HPWL increment (wiremask times position mask). The move is then
accepted by the Metropolis rule on the normalized FTmod/FTpin objective.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from flora import _kernels
from flora.bench import Netlist
from flora.errors import InitFailure, LayoutValidationError, NoRoomError
from flora.geometry import Rect
from flora.layout import BLANK, Layout
from flora.masks import legal_anchors, legal_anchors_from_rects, pick_separable
from flora.metrics import FeedthroughParams, ftpin_value

log = logging.getLogger(__name__)


@dataclass
class SaConfig:
    t_init: float = 2000.0
    t_end: float = 1e-3
    cooling: float = 0.99
    steps_per_temp: int | None = None  # None: one step per module
    weights: tuple = (0.5, 0.5)
    seed: int = 0
    max_init_attempts: int = 200
    check_legality: bool = False

    def __post_init__(self):
        if not 0 < self.cooling < 1:
            raise ValueError("cooling must be in (0, 1)")
        if not 0 < self.t_end < self.t_init:
            raise ValueError("need 0 < t_end < t_init")
        w_mod, w_pin = self.weights
        if w_mod < 0 or w_pin < 0 or not math.isclose(w_mod + w_pin, 1.0):
            raise ValueError("weights must be non-negative and sum to 1")
        if self.steps_per_temp is not None and self.steps_per_temp < 0:
            raise ValueError("steps_per_temp must be >= 0")

    def temperatures(self):
        t = self.t_init
        while t > self.t_end:
            yield t
            t *= self.cooling


class RectEvaluator:
    """FTmod, FTpin and HPWL for layouts made only of rectangles.

    Same definitions as :mod:`flora.metrics`, computed from anchor/dim arrays
    instead of the cell grid.
    """

    def __init__(self, nets, params: FeedthroughParams, n_modules: int,
                 width: int, height: int):
        self.width, self.height = width, height
        k = len(nets)
        self.inc = np.zeros((k, n_modules), dtype=bool)
        self.t_lo_x = np.full(k, np.inf)
        self.t_hi_x = np.full(k, -np.inf)
        self.t_lo_y = np.full(k, np.inf)
        self.t_hi_y = np.full(k, -np.inf)
        for r, net in enumerate(nets):
            self.inc[r, list(net.members)] = True
            if net.terminals:
                tx = [t[0] for t in net.terminals]
                ty = [t[1] for t in net.terminals]
                self.t_lo_x[r], self.t_hi_x[r] = min(tx), max(tx)
                self.t_lo_y[r], self.t_hi_y[r] = min(ty), max(ty)
        self.pi, self.pj, self.py = params.pairs()
        self.u = params.u

    def bboxes(self, xs, ys, ws, hs):
        cx = xs + ws / 2.0
        cy = ys + hs / 2.0
        inc = self.inc
        lo_x = np.minimum(np.where(inc, cx, np.inf).min(axis=1), self.t_lo_x)
        hi_x = np.maximum(np.where(inc, cx, -np.inf).max(axis=1), self.t_hi_x)
        lo_y = np.minimum(np.where(inc, cy, np.inf).min(axis=1), self.t_lo_y)
        hi_y = np.maximum(np.where(inc, cy, -np.inf).max(axis=1), self.t_hi_y)
        return lo_x, hi_x, lo_y, hi_y

    def ftmod(self, xs, ys, ws, hs, boxes=None) -> float:
        if len(self.inc) == 0:
            return 0.0
        lo_x, hi_x, lo_y, hi_y = boxes if boxes is not None else self.bboxes(xs, ys, ws, hs)
        ax = np.clip(np.floor(lo_x), 0, self.width - 1)
        bx = np.clip(np.maximum(np.floor(lo_x), np.ceil(hi_x) - 1), 0, self.width - 1)
        ay = np.clip(np.floor(lo_y), 0, self.height - 1)
        by = np.clip(np.maximum(np.floor(lo_y), np.ceil(hi_y) - 1), 0, self.height - 1)
        hit = ((xs[None, :] <= bx[:, None]) & ((xs + ws - 1)[None, :] >= ax[:, None])
               & (ys[None, :] <= by[:, None]) & ((ys + hs - 1)[None, :] >= ay[:, None]))
        hit &= ~self.inc
        return 0.5 * int(hit.sum())

    def ftpin(self, xs, ys, ws, hs) -> int:
        if len(self.py) == 0:
            return 0
        i, j = self.pi, self.pj
        xi, yi, wi, hi = xs[i], ys[i], ws[i], hs[i]
        xj, yj, wj, hj = xs[j], ys[j], ws[j], hs[j]
        touch_x = (xi + wi == xj) | (xj + wj == xi)
        touch_y = (yi + hi == yj) | (yj + hj == yi)
        ov_y = np.maximum(0, np.minimum(yi + hi, yj + hj) - np.maximum(yi, yj))
        ov_x = np.maximum(0, np.minimum(xi + wi, xj + wj) - np.maximum(xi, xj))
        ce = touch_x * ov_y + touch_y * ov_x
        return int(ftpin_value(self.py, ce, self.u).sum())

    def hpwl(self, xs, ys, ws, hs, boxes=None) -> float:
        if len(self.inc) == 0:
            return 0.0
        lo_x, hi_x, lo_y, hi_y = boxes if boxes is not None else self.bboxes(xs, ys, ws, hs)
        return float(((hi_x - lo_x) + (hi_y - lo_y)).sum())

    def evaluate(self, xs, ys, ws, hs) -> tuple[float, int, float]:
        boxes = self.bboxes(xs, ys, ws, hs) if len(self.inc) else None
        return (self.ftmod(xs, ys, ws, hs, boxes), self.ftpin(xs, ys, ws, hs),
                self.hpwl(xs, ys, ws, hs, boxes))


class RectState:
    """Mutable Stage-1 state: module anchors/dims, optionally mirrored on an owner grid.

    With ``layout=None`` only the arrays are kept and overlap checks go
    through the compiled kernels; :meth:`to_layout` rebuilds the grid.
    """

    def __init__(self, layout: Layout | None, xs, ys, ws, hs):
        self.layout = layout
        self.xs, self.ys = np.asarray(xs, dtype=np.int64), np.asarray(ys, dtype=np.int64)
        self.ws, self.hs = np.asarray(ws, dtype=np.int64), np.asarray(hs, dtype=np.int64)

    @classmethod
    def from_layout(cls, layout: Layout) -> RectState:
        rects = []
        for i in range(layout.n_modules):
            if not layout.is_module_rectangular(i):
                raise LayoutValidationError(
                    f"module {layout.names[i]} is not rectangular; Stage 1 needs rectangles")
            rects.append(layout.module_rect(i))
        return cls(layout, [r.x for r in rects], [r.y for r in rects],
                   [r.w for r in rects], [r.h for r in rects])

    def copy(self) -> RectState:
        layout = self.layout.copy() if self.layout is not None else None
        return RectState(layout, self.xs.copy(), self.ys.copy(), self.ws.copy(), self.hs.copy())

    def detached(self) -> RectState:
        return RectState(None, self.xs.copy(), self.ys.copy(), self.ws.copy(), self.hs.copy())

    def to_layout(self, template: Layout) -> Layout:
        layout = template.copy()
        layout.owner[:] = BLANK
        for i in range(len(self.xs)):
            layout.paint_rect(i, self.rect(i))
        return layout

    def rect(self, i: int) -> Rect:
        return Rect(int(self.xs[i]), int(self.ys[i]), int(self.ws[i]), int(self.hs[i]))

    def lift(self, i: int):
        r = self.rect(i)
        view = self.layout.owner[r.y:r.y1, r.x:r.x1]
        view[view == i] = BLANK

    def fits(self, i: int) -> bool:
        r = self.rect(i)
        if not r.within(self.layout.width, self.layout.height):
            return False
        return bool((self.layout.owner[r.y:r.y1, r.x:r.x1] == BLANK).all())

    def paint(self, i: int):
        r = self.rect(i)
        self.layout.owner[r.y:r.y1, r.x:r.x1] = i


def metropolis_accept(delta: float, temp: float, rng: np.random.Generator) -> bool:
    """Always accept improvements; accept a worsening with prob exp(-delta/temp)."""
    if delta <= 0:
        return True
    return bool(rng.random() < math.exp(-delta / temp))


def init_layout(netlist: Netlist, mode: str = "random", seed: int = 0,
                external: Layout | None = None, max_attempts: int = 200) -> Layout:
    """Initial Stage-1 layout.

    ``random`` drops modules largest-first at uniformly random legal anchors,
    retrying with fresh streams derived from ``seed``. ``external`` checks a
    loaded layout against the netlist and attaches its components.
    """
    W, H = netlist.width, netlist.height
    names = netlist.names
    comps = netlist.components()
    if mode == "external":
        if external is None:
            raise ValueError("external mode needs a layout")
        if external.names != names or (external.width, external.height) != (W, H):
            raise LayoutValidationError("external layout does not match the netlist")
        layout = external.copy()
        layout.components = comps
        layout.placements = [{} for _ in names]
        layout.validate(check_connected=True)
        RectState.from_layout(layout)
        layout.stage = "init"
        return layout
    if mode != "random":
        raise ValueError(f"unknown init mode {mode!r}")
    order = sorted(range(len(names)), key=lambda i: (-netlist.modules[i].cells, i))
    for attempt in range(max_attempts):
        rng = np.random.default_rng([seed, attempt])
        layout = Layout(W, H, list(names), components=comps, stage="init")
        occ = np.zeros((H, W), dtype=bool)
        for i in order:
            m = netlist.modules[i]
            legal = legal_anchors(occ, m.w, m.h)
            ys, xs = np.nonzero(legal)
            if len(xs) == 0:
                break
            k = int(rng.integers(len(xs)))
            r = Rect(int(xs[k]), int(ys[k]), m.w, m.h)
            layout.paint_rect(i, r)
            occ[r.y:r.y1, r.x:r.x1] = True
        else:
            return layout
        log.debug("random init attempt %d failed", attempt)
    raise InitFailure(f"could not place all modules after {max_attempts} attempts")


@dataclass
class Stage1Result:
    layout: Layout  # best-so-far
    final: Layout  # layout at the last temperature
    best_trace: list = field(default_factory=list)
    accepted: int = 0
    rejected: int = 0
    no_room: int = 0


class Annealer:
    """One seeded annealing chain over a rectangular layout."""

    def __init__(self, netlist: Netlist, layout: Layout, config: SaConfig,
                 params: FeedthroughParams, compiled: bool = True):
        self.netlist = netlist
        self.nets = netlist.nets
        self.config = config
        self.params = params
        self.template = layout
        self.compiled = compiled
        self.state = RectState.from_layout(layout)
        if compiled:
            self.state = self.state.detached()
        self.areas = np.array([m.cells for m in netlist.modules])
        self.evaluator = RectEvaluator(self.nets, params, layout.n_modules,
                                       layout.width, layout.height)
        self.net_index = [[r for r, net in enumerate(self.nets) if i in net.members]
                          for i in range(layout.n_modules)]
        if compiled:
            self._csr()
            self._terms = self._kernel_args(_kernels.evaluate_terms, self.state)
        fm, fp, hp = self._evaluate(self.state)
        self.refs = (fm or 1.0, float(fp) or 1.0)
        self.current = (self._objective(fm, fp), hp)

    def _csr(self):
        """Flat net membership arrays for the kernels."""
        members = [sorted(net.members) for net in self.nets]
        self.net_ptr = np.cumsum([0] + [len(m) for m in members]).astype(np.int64)
        self.net_mods = np.array([m for ms in members for m in ms], dtype=np.int64)
        self.nets_of = [np.array(rows, dtype=np.int64) for rows in self.net_index]
        self.width, self.height = self.template.width, self.template.height

    def _kernel_args(self, kernel, s: RectState, *extra, tail=()):
        ev = self.evaluator
        return kernel(s.xs, s.ys, s.ws, s.hs, *extra, self.net_ptr, self.net_mods, ev.inc,
                      ev.t_lo_x, ev.t_hi_x, ev.t_lo_y, ev.t_hi_y, ev.pi, ev.pj, ev.py, ev.u,
                      self.width, self.height, *tail)

    def _evaluate(self, s: RectState):
        if self.compiled:
            fm, fp, hp = self._kernel_args(_kernels.evaluate, s)
            return float(fm), int(fp), float(hp)
        return self.evaluator.evaluate(s.xs, s.ys, s.ws, s.hs)

    def _evaluate_candidate(self, cand: RectState):
        """Metrics of ``cand``; compiled runs update only what the move touched."""
        if not self.compiled:
            return (*self._evaluate(cand), None)
        cur = self.state
        moved = np.flatnonzero((cand.xs != cur.xs) | (cand.ys != cur.ys))
        fm, fp, hp, *terms = self._kernel_args(_kernels.evaluate_moved, cand, cur.xs, cur.ys,
                                               moved, tail=self._terms)
        return float(fm), int(fp), float(hp), tuple(terms)

    def _objective(self, fm, fp) -> float:
        w_mod, w_pin = self.config.weights
        return w_mod * (fm / self.refs[0]) + w_pin * (fp / self.refs[1])

    def _relocate(self, s: RectState, i: int, pending):
        W, H = s.layout.width, s.layout.height
        w, h = int(s.ws[i]), int(s.hs[i])
        others = [j for j in range(len(s.xs)) if j != i and j not in pending]
        rects = zip(s.xs[others].tolist(), s.ys[others].tolist(),
                    s.ws[others].tolist(), s.hs[others].tolist())
        legal = legal_anchors_from_rects(rects, w, h, W, H)
        ax, ay = W - w + 1, H - h + 1
        if ax < 1 or ay < 1:
            raise NoRoomError("module larger than canvas")
        ev = self.evaluator
        rows = self.net_index[i]
        if rows:
            inc = ev.inc[rows].copy()
            inc[:, i] = False
            for p in pending:
                inc[:, p] = False
            cx = s.xs + s.ws / 2.0
            cy = s.ys + s.hs / 2.0
            lo_x = np.minimum(np.where(inc, cx, np.inf).min(axis=1), ev.t_lo_x[rows])
            hi_x = np.maximum(np.where(inc, cx, -np.inf).max(axis=1), ev.t_hi_x[rows])
            lo_y = np.minimum(np.where(inc, cy, np.inf).min(axis=1), ev.t_lo_y[rows])
            hi_y = np.maximum(np.where(inc, cy, -np.inf).max(axis=1), ev.t_hi_y[rows])
            keep = np.isfinite(lo_x)
            px = np.arange(ax) + w / 2.0
            py = np.arange(ay) + h / 2.0
            lo_x, hi_x = lo_x[keep, None], hi_x[keep, None]
            lo_y, hi_y = lo_y[keep, None], hi_y[keep, None]
            dx = (np.maximum(0.0, lo_x - px) + np.maximum(0.0, px - hi_x)).sum(axis=0)
            dy = (np.maximum(0.0, lo_y - py) + np.maximum(0.0, py - hi_y)).sum(axis=0)
        else:
            dx, dy = np.zeros(ax), np.zeros(ay)
        x, y = pick_separable(dx, dy, legal[:ay, :ax])
        s.xs[i], s.ys[i] = x, y

    def _propose_compiled(self, a: int, b: int) -> RectState:
        s = self.state.copy()
        s.xs[a], s.xs[b] = s.xs[b], s.xs[a]
        s.ys[a], s.ys[b] = s.ys[b], s.ys[a]
        order = sorted((a, b), key=lambda i: (-self.areas[i], i))
        active = np.ones(len(s.xs), dtype=np.bool_)
        active[[a, b]] = False
        ev = self.evaluator
        for i in order:
            if not _kernels.fits(s.xs, s.ys, s.ws, s.hs, i, active, self.width, self.height):
                x, y = _kernels.relocate(s.xs, s.ys, s.ws, s.hs, i, active, self.net_ptr,
                                         self.net_mods, self.nets_of[i], ev.t_lo_x, ev.t_hi_x,
                                         ev.t_lo_y, ev.t_hi_y, self.width, self.height)
                if x < 0:
                    raise NoRoomError(f"no legal anchor for module {i}")
                s.xs[i], s.ys[i] = x, y
            active[i] = True
        return s

    def propose(self, rng: np.random.Generator) -> RectState:
        """Swap two modules and legalize; raises NoRoomError if stuck."""
        n = len(self.state.xs)
        a, b = (int(v) for v in rng.choice(n, size=2, replace=False))
        if self.compiled:
            return self._propose_compiled(a, b)
        s = self.state.copy()
        s.lift(a)
        s.lift(b)
        s.xs[a], s.xs[b] = s.xs[b], s.xs[a]
        s.ys[a], s.ys[b] = s.ys[b], s.ys[a]
        order = sorted((a, b), key=lambda i: (-self.areas[i], i))
        pending = set(order)
        for i in order:
            pending.discard(i)
            if not s.fits(i):
                self._relocate(s, i, pending)
            s.paint(i)
        return s

    def step(self, rng: np.random.Generator, temp: float) -> str:
        try:
            cand = self.propose(rng)
        except NoRoomError:
            return "no_room"
        fm, fp, hp, terms = self._evaluate_candidate(cand)
        obj = self._objective(fm, fp)
        if metropolis_accept(obj - self.current[0], temp, rng):
            self.state = cand
            if terms is not None:
                self._terms = terms
            self.current = (obj, hp)
            if self.config.check_legality:
                check_rect_layout(cand if cand.layout is not None
                                  else RectState(cand.to_layout(self.template), cand.xs,
                                                 cand.ys, cand.ws, cand.hs))
            return "accepted"
        return "rejected"

    def run(self) -> Stage1Result:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        steps = cfg.steps_per_temp
        if steps is None:
            steps = len(self.state.xs)
        best = (self.current, self.state.copy())
        result = Stage1Result(None, None, [best[0][0]])
        if len(self.state.xs) >= 2 and steps > 0:
            for temp in cfg.temperatures():
                for _ in range(steps):
                    outcome = self.step(rng, temp)
                    if outcome == "accepted":
                        result.accepted += 1
                        if self.current < best[0]:
                            best = (self.current, self.state.copy())
                    elif outcome == "rejected":
                        result.rejected += 1
                    else:
                        result.no_room += 1
                result.best_trace.append(best[0][0])
        result.layout = self._materialize(best[1])
        result.layout.stage = "stage1"
        result.final = self._materialize(self.state)
        result.final.stage = "stage1-final"
        return result


    def _materialize(self, s: RectState) -> Layout:
        return s.layout.copy() if s.layout is not None else s.to_layout(self.template)


def check_rect_layout(s: RectState):
    """Owner grid must equal the painted rectangles, with no overlaps."""
    expected = np.full_like(s.layout.owner, BLANK)
    for i in range(len(s.xs)):
        r = s.rect(i)
        if not r.within(s.layout.width, s.layout.height):
            raise LayoutValidationError(f"module {i} leaves the canvas")
        if (expected[r.y:r.y1, r.x:r.x1] != BLANK).any():
            raise LayoutValidationError(f"module {i} overlaps another module")
        expected[r.y:r.y1, r.x:r.x1] = i
    if not np.array_equal(expected, s.layout.owner):
        raise LayoutValidationError("owner grid out of sync with module rects")


def run_stage1(netlist: Netlist, config: SaConfig, params: FeedthroughParams | None = None,
               initial: Layout | None = None, compiled: bool = True) -> Stage1Result:
    """Anneal from ``initial`` (or a random init) and keep the best layout seen.

    "Best" is the lowest objective, ties broken by lower HPWL.
    """
    if params is None:
        params = FeedthroughParams.from_nets(netlist.nets)
    if initial is None:
        initial = init_layout(netlist, "random", config.seed, max_attempts=config.max_init_attempts)
    return Annealer(netlist, initial, config, params, compiled).run()
