import numpy as np
import pytest

from flora.bench import Net
from flora.geometry import Rect
from flora.layout import BLANK, Component, Layout


def random_rect_layout(rng, width, height, n, max_side=None, tries=200):
    """Non-overlapping random rectangles; fewer than ``n`` if space runs out."""
    max_side = max_side or max(1, min(width, height) // 2)
    rects = []
    occ = np.zeros((height, width), dtype=bool)
    for _ in range(tries):
        if len(rects) == n:
            break
        w = int(rng.integers(1, max_side + 1))
        h = int(rng.integers(1, max_side + 1))
        if w > width or h > height:
            continue
        x = int(rng.integers(0, width - w + 1))
        y = int(rng.integers(0, height - h + 1))
        if occ[y:y + h, x:x + w].any():
            continue
        occ[y:y + h, x:x + w] = True
        rects.append(Rect(x, y, w, h))
    names = [f"m{i}" for i in range(len(rects))]
    return Layout.from_rects(width, height, names, rects)


def random_owner_layout(rng, width, height, n, blank_p=0.2):
    """Arbitrary (possibly disconnected) regions; every module owns a cell."""
    if n > width * height:
        raise ValueError("more modules than cells")
    owner = rng.integers(0, n, size=(height, width)).astype(np.int32)
    owner[rng.random((height, width)) < blank_p] = BLANK
    cells = rng.permutation(width * height)[:n]
    for i, c in enumerate(cells):
        owner[c // width, c % width] = i
    return Layout(width, height, [f"m{i}" for i in range(n)], owner)


def grown_layout(rng, width, height, n, fill=0.7):
    """Connected regions grown from random seeds until ``fill`` of the canvas is owned."""
    owner = np.full((height, width), BLANK, dtype=np.int32)
    seeds = rng.permutation(width * height)[:n]
    frontier = []
    for i, c in enumerate(seeds):
        owner[c // width, c % width] = i
        frontier.append((int(c % width), int(c // width), i))
    target = int(fill * width * height)
    owned = n
    while owned < target and frontier:
        k = int(rng.integers(len(frontier)))
        x, y, i = frontier[k]
        dx, dy = ((1, 0), (-1, 0), (0, 1), (0, -1))[int(rng.integers(4))]
        xx, yy = x + dx, y + dy
        if 0 <= xx < width and 0 <= yy < height and owner[yy, xx] == BLANK:
            owner[yy, xx] = i
            frontier.append((xx, yy, i))
            owned += 1
        elif rng.random() < 0.1:
            frontier.pop(k)
    return Layout(width, height, [f"m{i}" for i in range(n)], owner)


def random_nets(rng, n_modules, n_nets, width, height, terminals=True):
    nets = []
    for _ in range(n_nets):
        k = int(rng.integers(1, min(4, n_modules) + 1))
        members = tuple(sorted(rng.choice(n_modules, size=k, replace=False).tolist()))
        pts = ()
        if terminals and rng.random() < 0.3:
            # half-integral points keep every coordinate exact in binary
            pts = ((int(rng.integers(0, 2 * width + 1)) / 2,
                    int(rng.integers(0, 2 * height + 1)) / 2),)
        nets.append(Net(members, pts))
    return nets


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_by_two():
    comps = [[Component("a0", 1, 1)], []]
    return Layout.from_rects(4, 4, ["a", "b"], [Rect(0, 0, 2, 2), Rect(2, 0, 2, 2)],
                             components=comps)
