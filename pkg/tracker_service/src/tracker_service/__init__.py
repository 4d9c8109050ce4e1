"""Segmentation-based tracker behind the /track HTTP contract."""

__version__ = "0.1.0"

from .tracker import SegmentationTracker, ObjectNotFound

__all__ = ["SegmentationTracker", "ObjectNotFound", "__version__"]
