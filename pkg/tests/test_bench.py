import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flora.bench import (Net, build_netlist, draw_component_count, largest_remainder,
                         load_benchmark, pair_demand, parse_blocks, parse_nets, parse_pl,
                         synthesize_components)
from flora.benchmarks import DESIGNS, design_paths, generate_design
from flora.errors import LayoutValidationError, ParseError
from flora.geometry import Rect
from flora.layout import Component, Layout
from flora.layout_io import (dumps_layout, emit_report, load_layout, loads_layout,
                             read_report, region_runs, render_svg, report_row, save_layout)
from flora.metrics import MetricRow, whitespace_pct

from conftest import grown_layout


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


BLOCKS = """UCSC blocks 1.0
NumSoftRectangularBlocks : 2
NumHardRectilinearBlocks : 1
NumTerminals : 2

a softrectangular 100 0.5 2.0
b softrectangular 50 0.5 2.0
h hardrectilinear 4 (0, 0) (0, 3) (4, 3) (4, 0)
p1 terminal
p2 terminal
"""

NETS = """UCLA nets 1.0
NumNets : 3
NumPins : 6
NetDegree : 2
a B
b B
NetDegree : 3
a B
a B
h B
NetDegree : 1
p1 B
"""


def test_parse_blocks(tmp_path):
    bl = parse_blocks(_write(tmp_path, "x.blocks", BLOCKS))
    assert [b.name for b in bl.modules] == ["a", "b", "h"]
    assert bl.terminals == ["p1", "p2"]
    hard = bl.modules[2]
    assert hard.area == 12.0 and (hard.width, hard.height) == (4.0, 3.0)


def test_parse_blocks_terminals_only(tmp_path):
    bl = parse_blocks(_write(tmp_path, "t.blocks", "p1 terminal\np2 terminal\np3 terminal\n"))
    assert bl.modules == [] and len(bl.terminals) == 3


def test_parse_blocks_error_has_line_number(tmp_path):
    p = _write(tmp_path, "bad.blocks", "a softrectangular 10\nb squiggle 3\n")
    with pytest.raises(ParseError) as exc:
        parse_blocks(p)
    assert exc.value.line == 2


def test_parse_blocks_count_mismatch(tmp_path):
    p = _write(tmp_path, "bad.blocks", "NumSoftRectangularBlocks : 2\na softrectangular 10\n")
    with pytest.raises(ParseError):
        parse_blocks(p)


def test_parse_nets(tmp_path):
    bl = parse_blocks(_write(tmp_path, "x.blocks", BLOCKS))
    nets = parse_nets(_write(tmp_path, "x.nets", NETS), bl)
    assert nets[0].modules == {"a", "b"}
    # duplicate pin collapses to a set
    assert nets[1].modules == {"a", "h"}
    assert nets[2].modules == frozenset() and nets[2].terminals == {"p1"}


def test_parse_nets_undeclared(tmp_path):
    bl = parse_blocks(_write(tmp_path, "x.blocks", BLOCKS))
    p = _write(tmp_path, "bad.nets", "NetDegree : 2\na B\nzz B\n")
    with pytest.raises(ParseError) as exc:
        parse_nets(p, bl)
    assert exc.value.line == 3


def test_parse_nets_header_count(tmp_path):
    bl = parse_blocks(_write(tmp_path, "x.blocks", BLOCKS))
    p = _write(tmp_path, "bad.nets", "NumNets : 2\nNetDegree : 2\na B\nb B\n")
    with pytest.raises(ParseError):
        parse_nets(p, bl)


def test_parse_pl(tmp_path):
    p = _write(tmp_path, "x.pl", "UCLA pl 1.0\np1 0 10\np2 3.5 0 : N\n")
    assert parse_pl(p) == {"p1": (0.0, 10.0), "p2": (3.5, 0.0)}


@pytest.mark.parametrize("name", sorted(DESIGNS))
def test_bundled_designs_parse(name):
    blocks, nets, pl = design_paths(name)
    n_mod, n_term, n_nets, _, _ = DESIGNS[name]
    bl = parse_blocks(blocks)
    assert len(bl.modules) == n_mod and len(bl.terminals) == n_term
    assert len(parse_nets(nets, bl)) == n_nets
    assert set(parse_pl(pl)) == set(bl.terminals)


def test_bundled_files_match_generator():
    for name in ("n10", "ami33"):
        texts = generate_design(name)
        for path, text in zip(design_paths(name), texts):
            assert path.read_text() == text


def test_n10_has_ten_modules():
    net = load_benchmark(*design_paths("n10"))
    assert len(net.modules) == 10


def test_largest_remainder_sums():
    out = largest_remainder([1, 1, 1], 10)
    assert out.sum() == 10 and sorted(out.tolist()) == [3, 3, 4]
    assert largest_remainder([5, 0.001], 4, minimum=1).tolist() == [3, 1]


def test_build_netlist_cell_budget(tmp_path):
    bl = parse_blocks(_write(tmp_path, "x.blocks", BLOCKS))
    nets = parse_nets(_write(tmp_path, "x.nets", NETS), bl)
    net = build_netlist(bl, nets, grid=40, util=0.7)
    assert sum(m.cells for m in net.modules) == round(0.7 * 40 * 40)
    # terminal-only net has no coordinates here, so it is dropped
    assert len(net.nets) == 2
    hard = net.modules[2]
    assert hard.w > hard.h


def test_synthesis_examples():
    from flora.bench import ModuleSpec, Netlist
    net = Netlist("t", 20, 20, [ModuleSpec("m", 100, 10, 10)], [])
    for seed in range(50):
        comps = synthesize_components(net, seed).modules[0].components
        assert 2 <= len(comps) <= 6
        assert abs(sum(c.area for c in comps) - 80) <= 1
        assert sum(c.kind == "cluster" for c in comps) == 1
    a = synthesize_components(net, 7).modules[0].components
    b = synthesize_components(net, 7).modules[0].components
    assert a == b


def test_synthesis_too_small():
    from flora.bench import ModuleSpec, Netlist
    net = Netlist("t", 4, 4, [ModuleSpec("m", 1, 1, 1)], [])
    with pytest.raises(ValueError):
        synthesize_components(net, 0)


def test_synthesis_on_bundled_designs():
    """Totals within one cell of 80% and aspect ratios in a sane band."""
    misses = total = 0
    for name in ("n10", "n30", "n50"):
        base = load_benchmark(*design_paths(name))
        for seed in range(5):
            net = synthesize_components(base, seed)
            for m in net.modules:
                total += 1
                target = round(0.8 * m.cells)
                got = sum(c.area for c in m.components)
                assert got <= m.cells
                misses += abs(got - target) > 1
                for c in m.components:
                    assert c.aspect_ratio <= 6
    assert misses <= 0.01 * total


def test_component_count_uniform():
    """10^4 draws: each k in 2..6 within 3 sigma of 1/5."""
    rng = np.random.default_rng(99)
    n = 10_000
    counts = np.bincount([draw_component_count(rng) for _ in range(n)], minlength=7)[2:]
    sigma = math.sqrt(n * 0.2 * 0.8)
    assert counts.sum() == n
    assert np.all(np.abs(counts - n / 5) <= 3 * sigma)


def test_pair_demand():
    nets = [Net((0, 1, 2)), Net((0, 1)), Net((3,))]
    assert pair_demand(nets) == {(0, 1): 2, (0, 2): 1, (1, 2): 1}


def _placed_layout(rng):
    lay = grown_layout(rng, 12, 10, 4)
    lay.components = [[Component(f"c{i}", 1, 1, "cluster"), Component(f"d{i}", 2, 1)]
                      for i in range(4)]
    for i in range(4):
        ys, xs = np.nonzero(lay.owner == i)
        lay.placements[i] = {0: Rect(int(xs[0]), int(ys[0]), 1, 1)}
    lay.stage = "stage2"
    return lay


def test_layout_round_trip(rng, tmp_path):
    for _ in range(10):
        lay = _placed_layout(rng)
        save_layout(lay, tmp_path / "x.layout")
        assert load_layout(tmp_path / "x.layout") == lay
        assert loads_layout(dumps_layout(lay)) == lay


def test_layout_rejects_overlap():
    text = ("flora-layout 1\ncanvas 4 4\nstage -\nmodules 2\n"
            "module a 1 0\nrun 0 0 3\nmodule b 1 0\nrun 0 2 2\nend\n")
    with pytest.raises(LayoutValidationError) as exc:
        loads_layout(text)
    assert exc.value.pairs == (("a", "b"),)


def test_layout_parse_error_line():
    text = "flora-layout 1\ncanvas 4 4\nstage -\nmodules 1\nmodule a 1 0\nrun 0 0 x\nend\n"
    with pytest.raises(ParseError) as exc:
        loads_layout(text)
    assert exc.value.line == 6


def test_external_layout_whitespace():
    # 13.59% of a 100x100 canvas left blank, the rest split among rectangles
    rects = [Rect(0, 0, 50, 100), Rect(50, 0, 50, 50), Rect(50, 50, 50, 22)]
    lay = Layout.from_rects(100, 100, ["a", "b", "c"], rects)
    lay.owner[72, 50:91] = 2
    assert lay.blank_count() == 1359
    back = loads_layout(dumps_layout(lay))
    assert whitespace_pct(back) == pytest.approx(13.59)


def test_region_runs():
    m = np.array([[1, 1, 0, 1], [0, 0, 0, 0], [0, 1, 1, 1]], dtype=bool)
    assert region_runs(m) == [(0, 0, 2), (0, 3, 1), (2, 1, 3)]


def test_svg_styles(rng):
    lay = _placed_layout(rng)
    svg = render_svg(lay, title="t")
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert svg.count("data-module=") == 4
    assert 'fill="#d62728"' in svg  # clusters
    assert "<title>t</title>" in svg


def test_svg_macro_color():
    lay = Layout.from_rects(4, 4, ["a"], [Rect(0, 0, 4, 4)],
                            components=[[Component("m", 2, 2)]])
    lay.placements[0] = {0: Rect(0, 0, 2, 2)}
    svg = render_svg(lay)
    assert 'fill="#8e44ad"' in svg and 'fill="#fdf3c4"' in svg


def test_report_round_trip(tmp_path):
    rows = [report_row("n10", 0, "stage1", MetricRow(10.5, 3, 2.5, 30.0, 90.0, 1.25), 1.25)]
    emit_report(rows, tmp_path / "r.csv")
    back = read_report(tmp_path / "r.csv")
    assert back[0]["HPWL"] == 10.5 and back[0]["FTmod"] == 2.5 and back[0]["seed"] == 0
    head = (tmp_path / "r.csv").read_text().splitlines()[0].split(",")
    assert head[:3] == ["design", "seed", "stage"]
    for col in ("HPWL", "FTpin", "FTmod", "WS_pct", "PD_pct", "RT_s"):
        assert col in head


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_synthesis_deterministic(seed):
    base = load_benchmark(*design_paths("n10"))
    a = synthesize_components(base, seed)
    b = synthesize_components(base, seed)
    assert [m.components for m in a.modules] == [m.components for m in b.modules]
