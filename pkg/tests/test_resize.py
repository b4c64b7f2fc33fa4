import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import grown_layout, random_rect_layout
from flora.bench import Net
from flora.errors import GeometryError
from flora.geometry import Rect, is_connected
from flora.layout import BLANK, Component, Layout
from flora.metrics import FeedthroughParams, ftpin_total
from flora.resize import (adjacent_modules, area_ratios, delta_ftpin, expand_rectangular,
                          largest_blank_rectangle, remove_whitespace, run_stage2)


def _comps(*areas):
    return [[Component(f"c{i}", a, 1)] if a else [] for i, a in enumerate(areas)]


def test_expand_hand_simulated():
    lay = Layout.from_rects(10, 10, ["A", "B"], [Rect(0, 0, 3, 3), Rect(6, 6, 2, 2)],
                            components=_comps(8, 1))
    out = expand_rectangular(lay)
    assert out.module_rect(0) == Rect(0, 0, 10, 6)
    assert out.module_rect(1) == Rect(0, 6, 10, 4)
    assert out.blank_count() == 0


def test_expand_absorbs_private_strip():
    # the blank column only touches A
    lay = Layout.from_rects(5, 2, ["A", "B"], [Rect(0, 0, 2, 2), Rect(3, 0, 2, 2)],
                            components=_comps(3, 1))
    out = expand_rectangular(lay)
    assert out.module_rect(0) == Rect(0, 0, 3, 2)
    assert out.module_rect(1) == Rect(3, 0, 2, 2)


def test_expand_zero_whitespace_identity():
    lay = Layout.from_rects(4, 2, ["A", "B"], [Rect(0, 0, 2, 2), Rect(2, 0, 2, 2)])
    assert expand_rectangular(lay) == lay


def test_expand_requires_rectangles():
    lay = Layout.from_rects(4, 4, ["A"], [Rect(0, 0, 2, 1)])
    lay.owner[1, 0] = 0
    with pytest.raises(GeometryError):
        expand_rectangular(lay)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_expand_keeps_rectangles(seed):
    rng = np.random.default_rng(seed)
    lay = random_rect_layout(rng, 14, 14, 5)
    out = expand_rectangular(lay)
    before = lay.owner != BLANK
    assert np.array_equal(out.owner[before], lay.owner[before])
    for i in range(out.n_modules):
        assert out.is_module_rectangular(i)
        assert out.module_rect(i).contains(lay.module_rect(i))


def test_lbr_examples():
    lay = Layout.from_rects(3, 3, ["a"], [Rect(0, 0, 3, 3)])
    lay.owner[1, 1] = BLANK
    assert largest_blank_rectangle(lay, (1, 1)) == Rect(1, 1, 1, 1)
    empty = Layout(7, 5, ["a"])
    assert largest_blank_rectangle(empty, (3, 2)) == Rect(0, 0, 7, 5)
    with pytest.raises(GeometryError):
        largest_blank_rectangle(lay, (0, 0))


def test_lbr_prefers_wider_on_tie():
    # a 2x1 and a 1x2 both contain (0, 0)
    lay = Layout.from_rects(2, 2, ["a"], [Rect(1, 1, 1, 1)])
    assert largest_blank_rectangle(lay, (0, 0)) == Rect(0, 0, 2, 1)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 12), st.integers(1, 12))
def test_lbr_matches_exhaustive(seed, w, h):
    rng = np.random.default_rng(seed)
    blank = rng.random((h, w)) < rng.uniform(0.3, 0.95)
    ys, xs = np.nonzero(blank)
    if len(xs) == 0:
        return
    lay = Layout(w, h, ["a"], np.where(blank, BLANK, 0))
    k = int(rng.integers(len(xs)))
    got = largest_blank_rectangle(lay, (int(xs[k]), int(ys[k])))
    assert (got.x, got.y, got.w, got.h) == oracles.largest_blank_rect(blank, int(xs[k]),
                                                                        int(ys[k]))


def test_delta_ftpin_no_demand_is_zero():
    lay = Layout.from_rects(4, 2, ["a", "b"], [Rect(0, 0, 1, 2), Rect(3, 0, 1, 2)])
    assert delta_ftpin(lay, Rect(1, 0, 2, 2), 0, FeedthroughParams()) == 0


def test_delta_ftpin_saturated_pair_negative():
    lay = Layout.from_rects(4, 4, ["a", "b"], [Rect(0, 0, 2, 2), Rect(2, 0, 2, 4)])
    params = FeedthroughParams(1, {(0, 1): 4})
    assert delta_ftpin(lay, Rect(0, 2, 2, 2), 0, params) == -2


def test_delta_ftpin_errors():
    lay = Layout.from_rects(5, 2, ["a", "b"], [Rect(0, 0, 1, 2), Rect(4, 0, 1, 2)])
    with pytest.raises(GeometryError):
        delta_ftpin(lay, Rect(1, 0, 1, 2), 1, FeedthroughParams())
    with pytest.raises(GeometryError):
        delta_ftpin(lay, Rect(0, 0, 2, 2), 0, FeedthroughParams())


def check_delta_ftpin(lay, params, rng):
    blank = lay.owner == BLANK
    ys, xs = np.nonzero(blank)
    if len(xs) == 0:
        return False
    k = int(rng.integers(len(xs)))
    r = largest_blank_rectangle(lay, (int(xs[k]), int(ys[k])))
    adj = adjacent_modules(lay, r)
    if not adj:
        return False
    before = oracles.ftpin_total(lay.owner, params.demand, params.u)
    for m in adj:
        after = lay.owner.copy()
        after[r.y:r.y1, r.x:r.x1] = m
        full = oracles.ftpin_total(after, params.demand, params.u) - before
        assert delta_ftpin(lay, r, m, params) == full
    return True


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_delta_ftpin_matches_recompute(seed):
    rng = np.random.default_rng(seed)
    lay = grown_layout(rng, 10, 10, 5, fill=0.6)
    n = lay.n_modules
    demand = {(i, j): int(rng.integers(0, 6)) for i in range(n) for j in range(i + 1, n)}
    check_delta_ftpin(lay, FeedthroughParams(int(rng.integers(1, 3)), demand), rng)


def test_allocation_to_net_partner_removes_feedthrough():
    # WS1 sits between M1 and M4, which share a net; M2 caps it from above
    comps = [[Component("x", 4, 1)], [], []]
    lay = Layout.from_rects(6, 3, ["M1", "M2", "M4"],
                            [Rect(0, 0, 2, 3), Rect(2, 2, 2, 1), Rect(4, 0, 2, 3)],
                            components=comps)
    params = FeedthroughParams.from_nets([Net((0, 2))])
    assert ftpin_total(lay, params) == 1
    trace = []
    out = remove_whitespace(lay, params, trace)
    rect, chosen, deltas = trace[0]
    assert rect == Rect(2, 0, 2, 2)
    assert deltas == {0: -1, 1: 0, 2: -1}
    # M1 and M4 tie; M1 has the higher component area ratio
    assert chosen == 0
    assert ftpin_total(out, params) == 0


def test_remove_whitespace_identity_when_full():
    lay = Layout.from_rects(4, 2, ["a", "b"], [Rect(0, 0, 2, 2), Rect(2, 0, 2, 2)])
    assert remove_whitespace(lay, FeedthroughParams()) == lay


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_stage2_invariants(seed):
    rng = np.random.default_rng(seed)
    lay = random_rect_layout(rng, 16, 16, 6, max_side=6)
    n = lay.n_modules
    lay.components = [[Component(f"c{i}", 1, int(rng.integers(1, 5)))] for i in range(n)]
    nets = [Net(tuple(sorted(rng.choice(n, 2, replace=False).tolist()))) for _ in range(6)]
    params = FeedthroughParams.from_nets(nets)
    trace = []
    mid = expand_rectangular(lay)
    out = remove_whitespace(mid, params, trace)
    assert out.blank_count() == 0
    assert int(out.cell_counts().sum()) == 16 * 16
    owned = lay.owner != BLANK
    assert np.array_equal(out.owner[owned], lay.owner[owned])
    for i in range(n):
        assert is_connected(out.region(i))
    for rect, chosen, deltas in trace:
        assert deltas[chosen] == min(deltas.values())
    assert run_stage2(lay, params).stage == "stage2"


def test_ties_prefer_higher_ratio_then_lower_id():
    lay = Layout.from_rects(5, 2, ["a", "b"], [Rect(0, 0, 2, 2), Rect(3, 0, 2, 2)],
                            components=[[Component("x", 1, 1)], [Component("y", 3, 1)]])
    trace = []
    remove_whitespace(lay, FeedthroughParams(), trace)
    assert trace[0][1] == 1
    lay.components = [[], []]
    trace = []
    remove_whitespace(lay, FeedthroughParams(), trace)
    assert trace[0][1] == 0
    assert area_ratios(lay).tolist() == [0.0, 0.0]


def test_stage2_rejects_holes(monkeypatch):
    import flora.resize as rz
    from flora.errors import LayoutValidationError

    owner = np.zeros((3, 3), dtype=np.int32)
    owner[1, 1] = 1
    ring = Layout(3, 3, ["a", "b"], owner)
    monkeypatch.setattr(rz, "remove_whitespace", lambda lay, params: ring.copy())
    monkeypatch.setattr(rz, "expand_rectangular", lambda lay: lay)
    with pytest.raises(LayoutValidationError):
        rz.run_stage2(ring, FeedthroughParams())
