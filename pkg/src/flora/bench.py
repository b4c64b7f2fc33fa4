"""GSRC/MCNC benchmark ingestion, grid mapping and component synthesis.

The ``.blocks`` / ``.nets`` / ``.pl`` grammars follow the UCSC/UCLA text
formats used by the GSRC floorplanning suite (MCNC designs are distributed
in the same schema)::

    UCSC blocks 1.0
    NumSoftRectangularBlocks : 2
    NumHardRectilinearBlocks : 1
    NumTerminals : 1
    sb0 softrectangular 1500 0.333 3.000
    sb1 softrectangular 900 0.333 3.000
    bk2 hardrectilinear 4 (0, 0) (0, 20) (30, 20) (30, 0)
    p1 terminal

    UCLA nets 1.0
    NumNets : 1
    NumPins : 2
    NetDegree : 2
    sb0 B
    p1 B
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from flora.errors import ParseError
from flora.layout import Component


@dataclass(frozen=True)
class Block:
    name: str
    kind: str  # "soft" | "hard"
    area: float
    width: float | None = None
    height: float | None = None


@dataclass
class BlockList:
    modules: list[Block]
    terminals: list[str]


@dataclass(frozen=True)
class NetSpec:
    """A parsed net: names of member blocks and terminals."""

    modules: frozenset
    terminals: frozenset = frozenset()


@dataclass(frozen=True)
class Net:
    """Grid-level net: sorted module indices plus fixed terminal points."""

    members: tuple
    terminals: tuple = ()


@dataclass
class ModuleSpec:
    name: str
    cells: int
    w: int
    h: int
    components: list = field(default_factory=list)

    @property
    def component_area(self) -> int:
        return sum(c.area for c in self.components)


@dataclass
class Netlist:
    """A benchmark mapped onto the cell grid."""

    name: str
    width: int
    height: int
    modules: list[ModuleSpec]
    nets: list[Net]

    @property
    def names(self) -> list[str]:
        return [m.name for m in self.modules]

    def components(self) -> list[list[Component]]:
        return [list(m.components) for m in self.modules]


_HEADER_RE = re.compile(r"^(\w+)\s*:\s*(\S+)$")
_VERTEX_RE = re.compile(r"\(\s*(-?[\d.eE+-]+)\s*,\s*(-?[\d.eE+-]+)\s*\)")


def _content_lines(path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line


def _shoelace(vertices) -> float:
    s = 0.0
    n = len(vertices)
    for k in range(n):
        x0, y0 = vertices[k]
        x1, y1 = vertices[(k + 1) % n]
        s += x0 * y1 - x1 * y0
    return abs(s) / 2.0


def parse_blocks(path) -> BlockList:
    """Parse a ``.blocks`` file into modules (with areas) and terminal names."""
    modules, terminals = [], []
    declared = {}
    for lineno, line in _content_lines(path):
        if line.startswith(("UCSC", "UCLA")):
            continue
        m = _HEADER_RE.match(line)
        if m:
            try:
                declared[m.group(1)] = int(m.group(2))
            except ValueError:
                raise ParseError(f"bad header value {m.group(2)!r}", path, lineno)
            continue
        tok = line.split()
        if len(tok) < 2:
            raise ParseError(f"malformed block line {line!r}", path, lineno)
        name, kind = tok[0], tok[1]
        if kind == "terminal":
            terminals.append(name)
        elif kind == "softrectangular":
            try:
                area = float(tok[2])
            except (IndexError, ValueError):
                raise ParseError(f"soft block {name} needs a numeric area", path, lineno)
            if area <= 0:
                raise ParseError(f"soft block {name} has non-positive area", path, lineno)
            modules.append(Block(name, "soft", area))
        elif kind == "hardrectilinear":
            try:
                nverts = int(tok[2])
            except (IndexError, ValueError):
                raise ParseError(f"hard block {name} needs a vertex count", path, lineno)
            verts = [(float(a), float(b)) for a, b in _VERTEX_RE.findall(line)]
            if len(verts) != nverts or nverts < 4:
                raise ParseError(f"hard block {name}: expected {nverts} vertices, "
                                 f"found {len(verts)}", path, lineno)
            xs = [v[0] for v in verts]
            ys = [v[1] for v in verts]
            area = _shoelace(verts)
            if area <= 0:
                raise ParseError(f"hard block {name} is degenerate", path, lineno)
            modules.append(Block(name, "hard", area, max(xs) - min(xs), max(ys) - min(ys)))
        else:
            raise ParseError(f"unknown block type {kind!r}", path, lineno)
    n_soft = sum(b.kind == "soft" for b in modules)
    n_hard = len(modules) - n_soft
    for key, count in (("NumSoftRectangularBlocks", n_soft),
                       ("NumHardRectilinearBlocks", n_hard),
                       ("NumTerminals", len(terminals))):
        if key in declared and declared[key] != count:
            raise ParseError(f"{key} declares {declared[key]} but file has {count}", path)
    return BlockList(modules, terminals)


def parse_nets(path, blocks: BlockList) -> list[NetSpec]:
    """Parse a ``.nets`` file; every pin must name a declared block or terminal."""
    module_names = {b.name for b in blocks.modules}
    terminal_names = set(blocks.terminals)
    nets = []
    declared = {}
    pending = 0
    mods, terms = set(), set()

    def close(lineno):
        if pending:
            raise ParseError(f"net ended with {pending} pins missing", path, lineno)

    for lineno, line in _content_lines(path):
        if line.startswith(("UCSC", "UCLA")):
            continue
        if line.startswith("NetDegree"):
            close(lineno)
            m = _HEADER_RE.match(line)
            if not m:
                raise ParseError(f"malformed NetDegree line {line!r}", path, lineno)
            try:
                pending = int(m.group(2))
            except ValueError:
                raise ParseError(f"bad net degree {m.group(2)!r}", path, lineno)
            if pending < 1:
                raise ParseError("net degree must be >= 1", path, lineno)
            mods, terms = set(), set()
            continue
        m = _HEADER_RE.match(line)
        if m and not pending:
            declared[m.group(1)] = int(m.group(2))
            continue
        if not pending:
            raise ParseError(f"pin line outside of a net: {line!r}", path, lineno)
        name = line.split()[0]
        if name in module_names:
            mods.add(name)
        elif name in terminal_names:
            terms.add(name)
        else:
            raise ParseError(f"net references undeclared block {name!r}", path, lineno)
        pending -= 1
        if pending == 0:
            nets.append(NetSpec(frozenset(mods), frozenset(terms)))
    close(None)
    if "NumNets" in declared and declared["NumNets"] != len(nets):
        raise ParseError(f"NumNets declares {declared['NumNets']} but file has {len(nets)}", path)
    return nets


def parse_pl(path) -> dict[str, tuple[float, float]]:
    """Parse a ``.pl`` placement file into ``name -> (x, y)``."""
    out = {}
    for lineno, line in _content_lines(path):
        if line.startswith(("UCSC", "UCLA")):
            continue
        tok = line.split()
        if len(tok) < 3:
            raise ParseError(f"malformed placement line {line!r}", path, lineno)
        try:
            out[tok[0]] = (float(tok[1]), float(tok[2]))
        except ValueError:
            raise ParseError(f"non-numeric coordinates in {line!r}", path, lineno)
    return out


def largest_remainder(weights, total: int, minimum: int = 0) -> np.ndarray:
    """Apportion ``total`` integer units proportionally to ``weights``."""
    w = np.asarray(weights, dtype=float)
    n = len(w)
    if total < minimum * n:
        raise ValueError("total too small for the per-item minimum")
    spare = total - minimum * n
    quota = w / w.sum() * spare
    base = np.floor(quota).astype(np.int64)
    left = spare - int(base.sum())
    if left:
        # stable: earlier items win ties
        order = np.argsort(-(quota - base), kind="stable")
        base[order[:left]] += 1
    return base + minimum


def rect_dims(cells: int, aspect: float = 1.0) -> tuple[int, int]:
    """Grid dims (w, h) for a ``cells``-sized rectangle of width/height ``aspect``."""
    w = max(1, int(round(math.sqrt(cells * aspect))))
    h = max(1, int(round(cells / w)))
    return w, h


def build_netlist(blocks: BlockList, nets: list[NetSpec], grid: int = 224,
                  util: float = 0.7, terminal_coords=None, name: str = "") -> Netlist:
    """Map a parsed benchmark onto a ``grid x grid`` canvas.

    The canvas stands for a square outline of area ``sum(a_i) / util``.
    Module cell budgets are apportioned by largest remainder so that they sum
    to ``round(util * grid**2)``; Stage-1 rectangles are near-square for soft
    blocks and keep the bounding-box aspect ratio for hard blocks.
    Terminals with known coordinates become fixed net points; others are
    dropped from bounding boxes.
    """
    if not 0 < util <= 1:
        raise ValueError("util must be in (0, 1]")
    if not blocks.modules:
        raise ValueError("benchmark has no modules")
    areas = [b.area for b in blocks.modules]
    cells = largest_remainder(areas, int(round(util * grid * grid)), minimum=1)
    side = math.sqrt(sum(areas) / util)
    scale = grid / side
    modules = []
    for b, c in zip(blocks.modules, cells.tolist()):
        aspect = b.width / b.height if b.kind == "hard" else 1.0
        w, h = rect_dims(c, aspect)
        w, h = min(w, grid), min(h, grid)
        modules.append(ModuleSpec(b.name, c, w, h))
    index = {m.name: i for i, m in enumerate(modules)}
    coords = terminal_coords or {}
    grid_nets = []
    for net in nets:
        members = tuple(sorted(index[n] for n in net.modules))
        pts = tuple(sorted(
            (min(grid, coords[t][0] * scale), min(grid, coords[t][1] * scale))
            for t in net.terminals if t in coords
        ))
        if members or pts:
            grid_nets.append(Net(members, pts))
    return Netlist(name, grid, grid, modules, grid_nets)


def load_benchmark(blocks_path, nets_path, pl_path=None, grid: int = 224,
                   util: float = 0.7, name: str | None = None) -> Netlist:
    blocks = parse_blocks(blocks_path)
    nets = parse_nets(nets_path, blocks)
    coords = parse_pl(pl_path) if pl_path else None
    return build_netlist(blocks, nets, grid, util, coords,
                         name or Path(blocks_path).stem)


def draw_component_count(rng: np.random.Generator, macro_range=(2, 6)) -> int:
    lo, hi = macro_range
    return int(rng.integers(lo, hi + 1))


def _component_dims(area: int, ratio: float) -> tuple[int, int]:
    """Integer dims with aspect (w/h) near ``ratio``; the product is within w/2 of ``area``."""
    w = max(1, int(round(math.sqrt(area * ratio))))
    h = max(1, int(round(area / w)))
    return w, h


def _dim_options(area: int, ratio: float, slack: float = 1.25) -> list[tuple[int, int]]:
    """Dims near ``area`` whose aspect is within a factor ``slack`` of ``ratio``."""
    w0 = math.sqrt(max(area, 1) * ratio)
    out = {_component_dims(area, ratio)}
    for w in range(max(1, math.floor(w0 / slack)), math.ceil(w0 * slack) + 1):
        base = max(1, int(round(area / w)))
        for h in (base - 1, base, base + 1):
            if h >= 1 and abs(math.log((w / h) / ratio)) <= math.log(slack):
                out.add((w, h))
    return sorted(out)


def _fit_pair(total: int, target: int, ratios) -> list[tuple[int, int]]:
    """Dims for two components whose areas add up to ``total`` as closely as possible.

    The first aims at ``target`` cells and the second at the rest; among
    pairs with the smallest sum error the one closest to both aspect
    targets wins. The aspect band widens only if the tight band cannot get
    within one cell.
    """
    ra, rb = ratios
    best = None
    for slack in (1.25, 1.6, 2.0):
        opts_a = _dim_options(max(1, target), ra, slack)
        opts_b = {}
        for w, h in _dim_options(max(1, total - target), rb, slack):
            miss = abs(math.log((w / h) / rb))
            if w * h not in opts_b or miss < opts_b[w * h][0]:
                opts_b[w * h] = (miss, (w, h))
        for w, h in opts_a:
            need = total - w * h
            miss_a = abs(math.log((w / h) / ra))
            for area in (need, need - 1, need + 1):
                if area in opts_b:
                    score = (abs(area - need), miss_a + opts_b[area][0])
                    if best is None or score < best[0]:
                        best = (score, [(w, h), opts_b[area][1]])
        if best is not None and best[0][0] <= 1:
            return best[1]
    if best is None:
        return [_component_dims(max(1, target), ra), _component_dims(max(1, total - target), rb)]
    return best[1]


def synthesize_components(netlist: Netlist, seed: int, fill_ratio: float = 0.80,
                          macro_range=(2, 6)) -> Netlist:
    """Give every module 2-6 rectangular components filling ``fill_ratio`` of it.

    Areas are a random split of ``round(fill_ratio * cells)``; each component
    gets a Uniform[1, 3] aspect ratio with a random orientation. Dims are
    snapped to the grid with the rounding error carried forward, and the
    last two components are fitted jointly so the module total lands within
    one cell of the target whenever the aspect bands allow it.
    One component per module is tagged ``"cluster"``.
    """
    rng = np.random.default_rng(seed)
    modules = []
    for m in netlist.modules:
        total = int(round(fill_ratio * m.cells))
        if total < macro_range[0] or m.cells < 2:
            raise ValueError(f"module {m.name} ({m.cells} cells) is too small "
                             f"to host {macro_range[0]} components")
        k = min(draw_component_count(rng, macro_range), total)
        shares = largest_remainder(rng.dirichlet(np.full(k, 2.0)), total, minimum=1)
        cluster = int(rng.integers(k))
        ratios = []
        for _ in range(k):
            ratio = float(rng.uniform(1.0, 3.0))
            ratios.append(1.0 / ratio if rng.random() < 0.5 else ratio)
        dims = []
        allotted = spent = 0
        for j in range(k - 2):
            allotted += int(shares[j])
            w, h = _component_dims(max(1, allotted - spent), ratios[j])
            spent += w * h
            dims.append((w, h))
        allotted += int(shares[k - 2])
        dims += _fit_pair(total - spent, allotted - spent, ratios[k - 2:])
        comps = [Component(f"{m.name}_c{j}", w, h, "cluster" if j == cluster else "macro")
                 for j, (w, h) in enumerate(dims)]
        modules.append(replace(m, components=comps))
    return replace(netlist, modules=modules)


def pair_demand(nets) -> dict[tuple[int, int], int]:
    """Pins required per unordered module pair: nets containing both."""
    demand: dict[tuple[int, int], int] = {}
    for net in nets:
        mem = net.members
        for a in range(len(mem)):
            for b in range(a + 1, len(mem)):
                key = (mem[a], mem[b])
                demand[key] = demand.get(key, 0) + 1
    return demand
