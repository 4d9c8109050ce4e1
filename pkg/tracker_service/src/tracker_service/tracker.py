"""Segmentation-based object tracking over decoded frames.

The tracker grounds a text description to an initial color mask, keeps the
largest connected component as the object, and propagates it frame to frame
by picking the component nearest the previous centroid. Everything is
deterministic numpy/OpenCV work; identical requests produce identical
responses.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import cv2
import numpy as np


class ObjectNotFound(Exception):
    """The description never grounded to any pixels in any frame."""


# Text grounding vocabulary: the first color word in the description selects
# the segmentation target.
COLOR_TABLE: dict[str, tuple[int, int, int]] = {
    "red": (255, 0, 0),
    "green": (0, 255, 0),
    "blue": (0, 0, 255),
    "yellow": (255, 255, 0),
    "cyan": (0, 255, 255),
    "magenta": (255, 0, 255),
    "orange": (255, 128, 0),
    "purple": (128, 0, 255),
    "white": (255, 255, 255),
}

MIN_COMPONENT_AREA = 4  # px; suppresses single-pixel compression noise


@dataclass
class TrackedPoint:
    frame_index: int
    cx: float
    cy: float
    bbox: tuple[float, float, float, float]
    present: bool


class SegmentationTracker:
    """Color-grounded connected-component tracker with centroid continuity."""

    def __init__(self, tolerance: int = 60):
        self.tolerance = tolerance

    def _ground_color(self, description: str) -> tuple[int, int, int] | None:
        for word in re.findall(r"[a-z]+", description.lower()):
            if word in COLOR_TABLE:
                return COLOR_TABLE[word]
        return None

    def _mask(self, frame: np.ndarray, color: tuple[int, int, int]) -> np.ndarray:
        dist = np.abs(frame.astype(np.int16) - np.array(color, dtype=np.int16))
        return (dist.max(axis=2) <= self.tolerance).astype(np.uint8)

    def _components(self, mask: np.ndarray):
        """(area, cx, cy, bbox) per component, background excluded."""
        count, labels, stats, centroids = cv2.connectedComponentsWithStats(mask, connectivity=8)
        out = []
        for label in range(1, count):
            x, y, w, h, area = stats[label]
            if area < MIN_COMPONENT_AREA:
                continue
            cx, cy = centroids[label]
            out.append(
                (float(area), float(cx), float(cy),
                 (float(x), float(y), float(x + w), float(y + h)))
            )
        return out

    def track(self, frames: list[np.ndarray], description: str) -> list[TrackedPoint]:
        """Track the described object across RGB frames.

        Raises:
            ObjectNotFound: the description grounded to nothing in every frame.
        """
        color = self._ground_color(description)
        if color is None:
            raise ObjectNotFound(f"no trackable vocabulary in {description!r}")

        points: list[TrackedPoint] = []
        previous: tuple[float, float] | None = None
        found_any = False
        for i, frame in enumerate(frames):
            components = self._components(self._mask(frame, color))
            if not components:
                points.append(TrackedPoint(i, 0.0, 0.0, (0.0, 0.0, 0.0, 0.0), False))
                continue
            if previous is None:
                # initial grounding: take the largest component
                area, cx, cy, bbox = max(components, key=lambda c: c[0])
            else:
                px, py = previous
                area, cx, cy, bbox = min(
                    components, key=lambda c: (c[1] - px) ** 2 + (c[2] - py) ** 2
                )
            points.append(TrackedPoint(i, cx, cy, bbox, True))
            previous = (cx, cy)
            found_any = True
        if not found_any:
            raise ObjectNotFound(f"object {description!r} not found in any frame")
        return points
