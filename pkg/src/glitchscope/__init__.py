"""Agentic glitch detection for gameplay videos with temporal localization."""

__version__ = "0.1.0"

from .config import PipelineConfig
from .pipeline import DetectionPipeline, RunArtifacts

__all__ = ["PipelineConfig", "DetectionPipeline", "RunArtifacts", "__version__"]
