"""Grid-based rectilinear floorplanning with feedthrough-aware metrics."""

from flora.geometry import Rect, Region
from flora.layout import BLANK, Component, Layout
from flora.metrics import FeedthroughParams, MetricRow, evaluate

__all__ = ["BLANK", "Component", "FeedthroughParams", "Layout", "MetricRow", "Rect",
           "Region", "evaluate"]
__version__ = "0.1.0"
