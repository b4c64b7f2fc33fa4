"""Layout snapshot files, SVG rendering and CSV metric reports.

Snapshot grammar (one record per line, ``#`` starts a comment)::

    flora-layout 1
    canvas <W> <H>
    stage <tag>                      # "-" when empty
    modules <N>
    module <name> <n_runs> <n_components>
    run <y> <x> <length>             # n_runs lines, horizontal runs of cells
    comp <name> <kind> <w> <h> <x> <y> <pw> <ph>   # placed component
    comp <name> <kind> <w> <h> -                   # unplaced component
    end

Modules are numbered in file order. Runs may appear in any order but
may not overlap each other or another module's runs.
"""

from __future__ import annotations

import csv
from dataclasses import asdict
from pathlib import Path

import numpy as np

from flora.errors import LayoutValidationError, ParseError
from flora.geometry import Rect, outline_loops
from flora.layout import BLANK, Component, Layout
from flora.metrics import MetricRow

FORMAT = "flora-layout"
VERSION = 1

REPORT_COLUMNS = ["design", "seed", "stage", "HPWL", "FTpin", "FTmod",
                  "WS_pct", "PD_pct", "RT_s", "RT_cum_s"]
TIME_COLUMNS = ("RT_s", "RT_cum_s")


def region_runs(mask: np.ndarray) -> list[tuple[int, int, int]]:
    """Horizontal runs ``(y, x, length)`` of a boolean mask, row-major."""
    runs = []
    for y in np.flatnonzero(mask.any(axis=1)):
        row = np.concatenate(([0], mask[y].view(np.int8), [0]))
        edges = np.flatnonzero(np.diff(row))
        for a, b in zip(edges[::2], edges[1::2]):
            runs.append((int(y), int(a), int(b - a)))
    return runs


def _token(name: str) -> str:
    if not name or any(ch.isspace() for ch in name):
        raise ValueError(f"name {name!r} must be non-empty without whitespace")
    return name


def dumps_layout(layout: Layout) -> str:
    lines = [f"{FORMAT} {VERSION}", f"canvas {layout.width} {layout.height}",
             f"stage {_token(layout.stage) if layout.stage else '-'}",
             f"modules {layout.n_modules}"]
    for i, name in enumerate(layout.names):
        runs = region_runs(layout.owner == i)
        comps = layout.components[i]
        lines.append(f"module {_token(name)} {len(runs)} {len(comps)}")
        lines.extend(f"run {y} {x} {n}" for y, x, n in runs)
        for k, c in enumerate(comps):
            head = f"comp {_token(c.name)} {_token(c.kind)} {c.w} {c.h}"
            r = layout.placements[i].get(k)
            lines.append(f"{head} {r.x} {r.y} {r.w} {r.h}" if r else f"{head} -")
    lines.append("end")
    return "\n".join(lines) + "\n"


def save_layout(layout: Layout, path):
    Path(path).write_text(dumps_layout(layout))


class _Reader:
    def __init__(self, text: str, path):
        self.path = path
        self.lines = []
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                self.lines.append((n, line.split()))
        self.pos = 0

    def next(self, keyword: str, nargs: int | None = None):
        if self.pos >= len(self.lines):
            raise ParseError(f"unexpected end of file, wanted {keyword!r}", self.path, None)
        n, tok = self.lines[self.pos]
        self.pos += 1
        if tok[0] != keyword:
            raise ParseError(f"expected {keyword!r}, got {tok[0]!r}", self.path, n)
        if nargs is not None and len(tok) - 1 != nargs:
            raise ParseError(f"{keyword!r} takes {nargs} fields, got {len(tok) - 1}",
                             self.path, n)
        return n, tok[1:]

    def ints(self, n, fields):
        try:
            return [int(f) for f in fields]
        except ValueError:
            raise ParseError(f"expected integers, got {' '.join(fields)!r}", self.path, n)


def loads_layout(text: str, path="<string>", validate: bool = True) -> Layout:
    """Parse a snapshot; overlapping regions raise LayoutValidationError."""
    rd = _Reader(text, path)
    n, head = rd.next(FORMAT, 1)
    if rd.ints(n, head)[0] != VERSION:
        raise ParseError(f"unsupported version {head[0]}", path, n)
    n, dims = rd.next("canvas", 2)
    W, H = rd.ints(n, dims)
    if W < 1 or H < 1:
        raise ParseError("canvas dims must be >= 1", path, n)
    _, (stage,) = rd.next("stage", 1)
    n, count = rd.next("modules", 1)
    n_mod = rd.ints(n, count)[0]
    names, comps, places = [], [], []
    owner = np.full((H, W), BLANK, dtype=np.int32)
    overlaps: set[tuple[str, str]] = set()
    for i in range(n_mod):
        n, tok = rd.next("module", 3)
        names.append(tok[0])
        n_runs, n_comp = rd.ints(n, tok[1:])
        for _ in range(n_runs):
            n, f = rd.next("run", 3)
            y, x, length = rd.ints(n, f)
            if length < 1 or not (0 <= y < H and 0 <= x and x + length <= W):
                raise ParseError(f"run ({y}, {x}, {length}) leaves the canvas", path, n)
            view = owner[y, x:x + length]
            for j in np.unique(view[view != BLANK]).tolist():
                a, b = sorted((names[j], names[i]))
                overlaps.add((a, b) if j != i else (a, a))
            view[view == BLANK] = i
        cl, pl = [], {}
        for k in range(n_comp):
            n, tok = rd.next("comp")
            if len(tok) not in (5, 8):
                raise ParseError("'comp' takes 5 or 8 fields", path, n)
            w, h = rd.ints(n, tok[2:4])
            if w < 1 or h < 1:
                raise ParseError("component dims must be >= 1", path, n)
            cl.append(Component(tok[0], w, h, tok[1]))
            if len(tok) == 8:
                x, y, pw, ph = rd.ints(n, tok[4:])
                if pw < 1 or ph < 1:
                    raise ParseError("placement dims must be >= 1", path, n)
                pl[k] = Rect(x, y, pw, ph)
            elif tok[4] != "-":
                raise ParseError("unplaced component must end with '-'", path, n)
        comps.append(cl)
        places.append(pl)
    rd.next("end", 0)
    if rd.pos != len(rd.lines):
        raise ParseError("content after 'end'", path, rd.lines[rd.pos][0])
    if overlaps:
        pairs = sorted(overlaps)
        desc = ", ".join(f"{a}/{b}" if a != b else f"{a} (self)" for a, b in pairs)
        raise LayoutValidationError(f"overlapping regions: {desc}", pairs)
    layout = Layout(W, H, names, owner, comps, places, "" if stage == "-" else stage)
    if validate:
        layout.validate()
    return layout


def load_layout(path, validate: bool = True) -> Layout:
    return loads_layout(Path(path).read_text(), str(path), validate)


# module fill, component fills by kind
SVG_STYLE = {
    "module": "#fdf3c4",
    "module_stroke": "#7a6a2a",
    "macro": "#8e44ad",
    "cluster": "#d62728",
}


def _flip(p, height, scale):
    return p[0] * scale, (height - p[1]) * scale


def render_svg(layout: Layout, scale: float = 4.0, title: str | None = None) -> str:
    """SVG with y pointing up: modules light, macros purple, clusters red."""
    W, H = layout.width * scale, layout.height * scale
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:g}" height="{H:g}" '
           f'viewBox="0 0 {W:g} {H:g}">']
    if title:
        out.append(f"<title>{title}</title>")
    out.append(f'<rect x="0" y="0" width="{W:g}" height="{H:g}" fill="white" stroke="black"/>')
    for i, name in enumerate(layout.names):
        mask = layout.owner == i
        if not mask.any():
            continue
        ys, xs = np.nonzero(mask)
        loops = outline_loops(set(zip(xs.tolist(), ys.tolist())))
        d = " ".join("M " + " L ".join(f"{x:g} {y:g}" for x, y in
                                        (_flip(p, layout.height, scale) for p in loop)) + " Z"
                     for loop in loops)
        out.append(f'<path d="{d}" fill="{SVG_STYLE["module"]}" fill-rule="evenodd" '
                   f'stroke="{SVG_STYLE["module_stroke"]}" stroke-width="1" data-module="{name}"/>')
    for i in range(layout.n_modules):
        for k, r in sorted(layout.placements[i].items()):
            c = layout.components[i][k]
            fill = SVG_STYLE.get(c.kind, SVG_STYLE["macro"])
            x, y = _flip((r.x, r.y1), layout.height, scale)
            out.append(f'<rect x="{x:g}" y="{y:g}" width="{r.w * scale:g}" '
                       f'height="{r.h * scale:g}" fill="{fill}" fill-opacity="0.8" '
                       f'data-component="{c.name}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(layout: Layout, path, scale: float = 4.0, title: str | None = None):
    Path(path).write_text(render_svg(layout, scale, title))


def report_row(design: str, seed: int, stage: str, row: MetricRow, rt_cum: float) -> dict:
    m = asdict(row)
    return {
        "design": design, "seed": seed, "stage": stage,
        "HPWL": float(m["hpwl"]), "FTpin": int(m["ftpin"]), "FTmod": float(m["ftmod"]),
        "WS_pct": float(m["ws_pct"]), "PD_pct": float(m["pd_pct"]),
        "RT_s": round(float(m["rt_s"]), 4), "RT_cum_s": round(float(rt_cum), 4),
    }


def emit_report(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_report(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != REPORT_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        rows = []
        for r in reader:
            for key in REPORT_COLUMNS[3:]:
                r[key] = float(r[key])
            r["seed"] = int(r["seed"])
            rows.append(r)
    return rows
