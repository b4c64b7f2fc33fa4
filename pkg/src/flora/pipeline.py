"""End-to-end runs: ingest, Stage 1-3, per-stage snapshots, SVGs and CSV reports."""

from __future__ import annotations

import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path

from flora.anneal import SaConfig, init_layout, run_stage1
from flora.bench import Netlist, load_benchmark, synthesize_components
from flora.benchmarks import design_paths
from flora.errors import FloraError
from flora.layout import Layout
from flora.layout_io import (emit_report, emit_svg, load_layout, read_report, report_row,
                             save_layout)
from flora.metrics import FeedthroughParams, evaluate
from flora.placement import DEFAULT_EXPAND_CAP, place_all, run_stage3
from flora.resize import run_stage2

log = logging.getLogger(__name__)

STAGE_NAMES = {0: "stage0", 1: "stage1", 2: "stage2", 3: "stage3"}


class ConfigError(FloraError, ValueError):
    """Invalid run configuration or unreadable input."""


class StageFailure(FloraError):
    """A pipeline stage raised; artifacts written so far are kept."""


@dataclass
class RunConfig:
    design: str | None = None
    blocks: Path | None = None
    nets: Path | None = None
    pl: Path | None = None
    grid: int = 224
    util: float = 0.7
    mode: str = "scratch"
    layout: Path | None = None
    stages: tuple = (1, 2, 3)
    seeds: tuple = (0,)
    sa: SaConfig = field(default_factory=SaConfig)
    u: int = 1
    fill_ratio: float = 0.8
    rotate: bool = True
    expand_cap: int = DEFAULT_EXPAND_CAP
    out_dir: Path = Path("flora_out")

    def __post_init__(self):
        stages = tuple(sorted(set(self.stages)))
        if not stages or not set(stages) <= {1, 2, 3}:
            raise ConfigError("stages must be a non-empty subset of 1,2,3")
        if self.mode not in ("scratch", "post"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode == "scratch" and stages != tuple(range(1, len(stages) + 1)):
            raise ConfigError("scratch mode runs a prefix of stages 1,2,3")
        if stages != tuple(range(stages[0], stages[-1] + 1)):
            raise ConfigError("stages must be contiguous")
        if self.mode == "post" and self.layout is None:
            raise ConfigError("post mode needs an input layout")
        if (self.design is None) == (self.blocks is None):
            raise ConfigError("give either a bundled design or a blocks file")
        if self.blocks is not None and self.nets is None:
            raise ConfigError("a blocks file needs a nets file")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.grid < 1 or not 0 < self.util <= 1 or not 0 < self.fill_ratio <= 1:
            raise ConfigError("grid, util or fill ratio out of range")
        if self.u < 1 or self.expand_cap < 1:
            raise ConfigError("u and expand cap must be >= 1")
        self.stages = stages

    @property
    def name(self) -> str:
        return self.design or Path(self.blocks).stem


@dataclass
class SeedResult:
    seed: int
    layouts: dict = field(default_factory=dict)  # stage name -> Layout
    rows: list = field(default_factory=list)  # report rows
    baseline: list = field(default_factory=list)


def load_netlist(cfg: RunConfig) -> Netlist:
    try:
        if cfg.design is not None:
            blocks, nets, pl = design_paths(cfg.design)
        else:
            blocks, nets, pl = cfg.blocks, cfg.nets, cfg.pl
        return load_benchmark(blocks, nets, pl, cfg.grid, cfg.util, cfg.name)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _external(cfg: RunConfig, netlist: Netlist) -> Layout:
    try:
        layout = load_layout(cfg.layout)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load {cfg.layout}: {exc}") from exc
    if layout.names != netlist.names or (layout.width, layout.height) != (netlist.width,
                                                                          netlist.height):
        raise ConfigError("input layout does not match the benchmark (names or canvas)")
    layout.components = netlist.components()
    layout.placements = [{} for _ in netlist.names]
    return layout


def _measure(layout: Layout, netlist: Netlist, params, cfg: RunConfig):
    """Metrics with components placed by the in-module packer, plus that layout."""
    placed = layout if layout.stage == "stage3" else place_all(layout, cfg.rotate, cfg.expand_cap)
    return evaluate(placed, netlist.nets, params), placed


class Pipeline:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.base = load_netlist(cfg)

    def seed_dir(self, seed: int) -> Path:
        return Path(self.cfg.out_dir) / self.cfg.name / f"seed{seed}"

    def run_seed(self, seed: int) -> SeedResult:
        cfg = self.cfg
        netlist = synthesize_components(self.base, seed, cfg.fill_ratio)
        params = FeedthroughParams.from_nets(netlist.nets, cfg.u)
        out = self.seed_dir(seed)
        out.mkdir(parents=True, exist_ok=True)
        res = SeedResult(seed)

        def record_baseline(tag, layout):
            row, placed = _measure(layout, netlist, params, cfg)
            res.baseline.append(report_row(cfg.name, seed, tag, row, 0.0))
            save_layout(placed, out / f"{tag}.layout")

        if cfg.mode == "post":
            current = _external(cfg, netlist)
            current.stage = "input"
        else:
            try:
                current = init_layout(netlist, "random", seed,
                                      max_attempts=cfg.sa.max_init_attempts)
            except FloraError as exc:
                raise StageFailure(f"initialization failed: {exc}") from exc
        record_baseline(STAGE_NAMES[0], current)

        rt_cum = 0.0
        for stage in cfg.stages:
            final = None
            t0 = time.perf_counter()
            try:
                if stage == 1:
                    if cfg.mode == "post":
                        current = init_layout(netlist, "external", external=current)
                    result = run_stage1(netlist, replace(cfg.sa, seed=seed), params, current)
                    current, final = result.layout, result.final
                elif stage == 2:
                    current = run_stage2(current, params)
                else:
                    current = run_stage3(current, cfg.rotate, cfg.expand_cap)
                current.validate()
            except (FloraError, ValueError) as exc:
                emit_report(res.rows, out / "report.csv")
                emit_report(res.baseline, out / "baseline.csv")
                raise StageFailure(f"seed {seed} stage {stage}: {exc}") from exc
            rt = time.perf_counter() - t0
            rt_cum += rt
            if final is not None:
                record_baseline("stage1-final", final)
            row, placed = _measure(current, netlist, params, cfg)
            row.rt_s = rt
            name = STAGE_NAMES[stage]
            res.layouts[name] = placed
            res.rows.append(report_row(cfg.name, seed, name, row, rt_cum))
            save_layout(placed, out / f"{name}.layout")
            emit_svg(placed, out / f"{name}.svg", title=f"{cfg.name} seed {seed} {name}")
            log.info("%s seed %d %s: HPWL %.1f FTpin %d FTmod %.1f WS %.2f%% PD %.2f%% RT %.2fs",
                     cfg.name, seed, name, row.hpwl, row.ftpin, row.ftmod, row.ws_pct,
                     row.pd_pct, rt)
        emit_report(res.rows, out / "report.csv")
        emit_report(res.baseline, out / "baseline.csv")
        return res

    def run(self) -> list[SeedResult]:
        results = []
        rows, baseline = [], []
        out = Path(self.cfg.out_dir) / self.cfg.name
        try:
            for seed in self.cfg.seeds:
                r = self.run_seed(seed)
                results.append(r)
                rows += r.rows
                baseline += r.baseline
        finally:
            if rows:
                emit_report(rows, out / "report.csv")
                emit_report(baseline, out / "baseline.csv")
        return results


def run(cfg: RunConfig) -> list[SeedResult]:
    return Pipeline(cfg).run()


METRICS = ("HPWL", "FTpin", "FTmod", "WS_pct", "PD_pct", "RT_s", "RT_cum_s")


def report_aggregate(paths) -> list[dict]:
    """Per (design, stage) means over seeds, in first-seen order."""
    paths = list(paths)
    if not paths:
        raise ValueError("no report files given")
    groups = defaultdict(list)
    for p in paths:
        for row in read_report(p):
            groups[(row["design"], row["stage"])].append(row)
    if not groups:
        raise ValueError("reports contain no rows")
    out = []
    for (design, stage), rows in groups.items():
        agg = {"design": design, "stage": stage, "runs": len(rows)}
        for m in METRICS:
            agg[m] = sum(r[m] for r in rows) / len(rows)
        out.append(agg)
    return out


def format_table(agg: list[dict]) -> str:
    head = ["design", "stage", "runs", *METRICS]
    lines = ["\t".join(head)]
    for a in agg:
        cells = [a["design"], a["stage"], str(a["runs"])]
        cells += [f"{a[m]:.2f}" for m in METRICS]
        lines.append("\t".join(cells))
    return "\n".join(lines)

