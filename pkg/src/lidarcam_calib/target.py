"""The square planar target and the edge/corner labels shared by both sensors.

The target is held diamond-wise. In its own frame it is centred at the origin
in the ``z = 0`` plane with corners on the axes; ``-y`` points up so that with
an identity pose the frame coincides with a camera optical frame
(x right, y down, z forward).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EDGE_LABELS = ("TopLeft", "TopRight", "BottomRight", "BottomLeft")
CORNER_LABELS = ("Top", "Right", "Bottom", "Left")

# corner -> the two edges meeting there
CORNER_EDGES = {
    "Top": ("TopLeft", "TopRight"),
    "Right": ("TopRight", "BottomRight"),
    "Bottom": ("BottomRight", "BottomLeft"),
    "Left": ("BottomLeft", "TopLeft"),
}
# edge -> its two end corners
EDGE_CORNERS = {
    "TopLeft": ("Left", "Top"),
    "TopRight": ("Top", "Right"),
    "BottomRight": ("Right", "Bottom"),
    "BottomLeft": ("Bottom", "Left"),
}


@dataclass(frozen=True)
class TargetModel:
    side_length: float = 1.0

    def __post_init__(self):
        if not self.side_length > 0:
            raise ValueError("side_length must be positive")

    @property
    def half_diagonal(self):
        return self.side_length / np.sqrt(2.0)

    def corners(self):
        """Corners in target coordinates, ordered Top, Right, Bottom, Left."""
        a = self.half_diagonal
        return np.array([[0.0, -a, 0.0], [a, 0.0, 0.0], [0.0, a, 0.0], [-a, 0.0, 0.0]])

    def contains(self, xy, scale=1.0):
        """Point-in-diamond test for target-plane coordinates ``(..., 2)``."""
        xy = np.asarray(xy, dtype=float)
        return np.abs(xy[..., 0]) + np.abs(xy[..., 1]) <= self.half_diagonal * scale
