"""Layout snapshot: canvas ownership grid, module regions, component placements."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from flora.errors import GeometryError, LayoutValidationError
from flora.geometry import Rect, Region, has_holes, is_connected

BLANK = -1


@dataclass(frozen=True)
class Component:
    """A macro or standard-cell cluster to be placed inside a module."""

    name: str
    w: int
    h: int
    kind: str = "macro"

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def aspect_ratio(self) -> float:
        return max(self.w, self.h) / min(self.w, self.h)


@dataclass
class Layout:
    """W x H grid where each cell is owned by one module index or BLANK.

    ``placements[i]`` maps a component index of module ``i`` to the rect it
    occupies on the canvas; components absent from the dict are unplaced.
    """

    width: int
    height: int
    names: list[str]
    owner: np.ndarray = None
    components: list[list[Component]] = None
    placements: list[dict[int, Rect]] = None
    stage: str = ""

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise GeometryError("canvas dims must be >= 1")
        n = len(self.names)
        if self.owner is None:
            self.owner = np.full((self.height, self.width), BLANK, dtype=np.int32)
        else:
            self.owner = np.asarray(self.owner, dtype=np.int32)
            if self.owner.shape != (self.height, self.width):
                raise GeometryError("owner grid does not match canvas dims")
        if self.components is None:
            self.components = [[] for _ in range(n)]
        if self.placements is None:
            self.placements = [{} for _ in range(n)]

    @property
    def n_modules(self) -> int:
        return len(self.names)

    @classmethod
    def from_rects(cls, width, height, names, rects, components=None, stage=""):
        layout = cls(width, height, list(names), components=components, stage=stage)
        for i, r in enumerate(rects):
            if r is not None:
                layout.paint_rect(i, r)
        return layout

    def copy(self) -> Layout:
        return Layout(
            self.width, self.height, list(self.names), self.owner.copy(),
            [list(c) for c in self.components],
            [dict(p) for p in self.placements],
            self.stage,
        )

    def __eq__(self, other):
        if not isinstance(other, Layout):
            return NotImplemented
        return (
            self.width == other.width and self.height == other.height
            and self.names == other.names and self.stage == other.stage
            and np.array_equal(self.owner, other.owner)
            and self.components == other.components
            and self.placements == other.placements
        )

    def paint_rect(self, i: int, rect: Rect, allow_overwrite: bool = False):
        if not rect.within(self.width, self.height):
            raise GeometryError(f"{rect} outside {self.width}x{self.height} canvas")
        view = self.owner[rect.y:rect.y1, rect.x:rect.x1]
        if not allow_overwrite and ((view != BLANK) & (view != i)).any():
            raise GeometryError(f"{rect} overlaps another module")
        view[...] = i

    def clear(self, i: int):
        self.owner[self.owner == i] = BLANK

    def cell_counts(self) -> np.ndarray:
        """Cells owned by each module."""
        owned = self.owner[self.owner >= 0]
        return np.bincount(owned, minlength=self.n_modules)

    def blank_count(self) -> int:
        return int((self.owner == BLANK).sum())

    def mask(self, i: int) -> np.ndarray:
        return self.owner == i

    def region(self, i: int) -> Region:
        return Region.from_mask(self.owner == i, check_connected=False)

    def module_rect(self, i: int) -> Rect:
        """Bounding rect of module ``i`` (the module itself in Stage 1)."""
        ys, xs = np.nonzero(self.owner == i)
        if len(xs) == 0:
            raise GeometryError(f"module {self.names[i]} has no cells")
        x0, y0 = int(xs.min()), int(ys.min())
        return Rect(x0, y0, int(xs.max()) - x0 + 1, int(ys.max()) - y0 + 1)

    def is_module_rectangular(self, i: int) -> bool:
        r = self.module_rect(i)
        return int((self.owner == i).sum()) == r.area

    def component_area(self, i: int) -> int:
        return sum(c.area for c in self.components[i])

    def area_ratio(self, i: int, cells: int | None = None) -> float:
        """Component area over current module cell count."""
        if cells is None:
            cells = int((self.owner == i).sum())
        if cells == 0:
            return float("inf") if self.components[i] else 0.0
        return self.component_area(i) / cells

    def validate(self, check_connected: bool = True, check_holes: bool = False):
        """Raise LayoutValidationError if any structural invariant fails."""
        counts = self.cell_counts()
        problems = []
        for i in range(self.n_modules):
            if counts[i] == 0:
                problems.append(f"module {self.names[i]} has no cells")
                continue
            if check_connected or check_holes:
                region = self.region(i)
                if check_connected and not is_connected(region):
                    problems.append(f"module {self.names[i]} is not 4-connected")
                if check_holes and has_holes(region):
                    problems.append(f"module {self.names[i]} encloses a hole")
            own = self.owner == i
            placed = list(self.placements[i].items())
            for k, r in placed:
                if k >= len(self.components[i]):
                    problems.append(f"module {self.names[i]}: unknown component {k}")
                    continue
                c = self.components[i][k]
                if {r.w, r.h} != {c.w, c.h}:
                    problems.append(f"component {c.name} placed with wrong dims")
                if not r.within(self.width, self.height) or not own[r.y:r.y1, r.x:r.x1].all():
                    problems.append(f"component {c.name} lies outside module {self.names[i]}")
            for a in range(len(placed)):
                for b in range(a + 1, len(placed)):
                    if placed[a][1].overlaps(placed[b][1]):
                        problems.append(f"components overlap in module {self.names[i]}")
        if problems:
            raise LayoutValidationError("; ".join(problems))
