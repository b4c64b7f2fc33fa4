"""Bundled benchmark designs and the generator that produced them.

The bundled files use the GSRC ``.blocks``/``.nets``/``.pl`` grammar with
the same module, terminal and net counts as the public GSRC n10-n300 and
MCNC ami33/ami49 designs. Block areas, net connectivity and terminal
positions are synthetic, generated deterministically by
:func:`generate_design`. Terminals sit on the boundary of a square outline
sized for 70% utilization, which is where the loader's default canvas puts
them.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

# name: (modules, terminals, nets, mean net degree, hard blocks)
DESIGNS = {
    "n10": (10, 69, 118, 2.10, False),
    "n30": (30, 212, 349, 2.76, False),
    "n50": (50, 209, 485, 2.16, False),
    "n100": (100, 334, 885, 2.12, False),
    "n200": (200, 564, 1585, 2.27, False),
    "n300": (300, 569, 1893, 2.30, False),
    "ami33": (33, 42, 123, 3.89, True),
    "ami49": (49, 22, 408, 2.34, True),
}


def data_dir() -> Path:
    return Path(resources.files("flora") / "data")


OUTLINE_UTIL = 0.7


def design_paths(name: str) -> tuple[Path, Path, Path]:
    """``.blocks``, ``.nets`` and ``.pl`` paths of a bundled design."""
    if name not in DESIGNS:
        raise KeyError(f"unknown design {name!r}; bundled: {', '.join(DESIGNS)}")
    d = data_dir()
    return d / f"{name}.blocks", d / f"{name}.nets", d / f"{name}.pl"


def generate_design(name: str, seed: int = 2024) -> tuple[str, str, str]:
    """Text of the ``.blocks``, ``.nets`` and ``.pl`` files for a bundled design."""
    n_mod, n_term, n_nets, mean_deg, hard = DESIGNS[name]
    rng = np.random.default_rng([seed, n_mod, n_term])
    areas = np.round(rng.lognormal(np.log(20000), 0.6, n_mod)).astype(int)
    prefix = "bk" if hard else "sb"
    mods = [f"{prefix}{i}" for i in range(n_mod)]
    terms = [f"p{i + 1}" for i in range(n_term)]

    blocks = ["UCSC blocks 1.0", f"# {name}: synthetic stand-in", ""]
    blocks.append(f"NumSoftRectangularBlocks : {0 if hard else n_mod}")
    blocks.append(f"NumHardRectilinearBlocks : {n_mod if hard else 0}")
    blocks.append(f"NumTerminals : {n_term}")
    blocks.append("")
    for m, a in zip(mods, areas):
        if hard:
            ar = rng.uniform(0.5, 2.0)
            w = max(1, int(round(np.sqrt(a * ar))))
            h = max(1, int(round(a / w)))
            blocks.append(f"{m} hardrectilinear 4 (0, 0) (0, {h}) ({w}, {h}) ({w}, 0)")
        else:
            blocks.append(f"{m} softrectangular {a} 0.333 3.000")
    blocks.append("")
    blocks.extend(f"{t} terminal" for t in terms)

    p = 1.0 / (mean_deg - 1.0)
    term_share = n_term / (n_term + 4.0 * n_mod)
    nets_body = []
    pins = 0
    for _ in range(n_nets):
        deg = int(min(2 + rng.geometric(p) - 1, n_mod))
        n_t = int(rng.binomial(deg - 1, term_share)) if n_term else 0
        n_m = deg - n_t
        members = [mods[k] for k in rng.choice(n_mod, size=n_m, replace=False)]
        members += [terms[k] for k in rng.choice(n_term, size=n_t, replace=False)]
        nets_body.append(f"NetDegree : {deg}")
        nets_body.extend(f"{x} B" for x in members)
        pins += deg
    nets = ["UCLA nets 1.0", f"# {name}: synthetic stand-in", "",
            f"NumNets : {n_nets}", f"NumPins : {pins}", ""] + nets_body
    side = float(np.sqrt(areas.sum() / OUTLINE_UTIL))
    pl = ["UCLA pl 1.0", f"# {name}: synthetic stand-in", ""]
    for t, pos in zip(terms, rng.uniform(0.0, 4.0 * side, n_term)):
        edge, off = divmod(pos, side)
        x, y = [(off, 0.0), (side, off), (side - off, side), (0.0, side - off)][int(edge)]
        pl.append(f"{t} {x:.1f} {y:.1f}")
    return ("\n".join(blocks) + "\n", "\n".join(nets) + "\n",
            "\n".join(pl) + "\n")


def write_designs(out_dir=None, names=None):
    out = Path(out_dir) if out_dir else data_dir()
    out.mkdir(parents=True, exist_ok=True)
    for name in names or DESIGNS:
        blocks, nets, pl = generate_design(name)
        (out / f"{name}.blocks").write_text(blocks)
        (out / f"{name}.nets").write_text(nets)
        (out / f"{name}.pl").write_text(pl)
