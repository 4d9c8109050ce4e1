"""Pipeline configuration: one serializable snapshot drives a whole run."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict
from pathlib import Path

# Every model-calling role in the pipeline. Parsing, sampling parameters and
# prompt assets are keyed by these names.
ROLES = (
    "scanner",
    "planner",
    "advocate",
    "skeptic",
    "judge",
    "cluster_judge",
    "propagation_judge",
    "summarizer",
    "vqa",
    "eval_judge",
)

# (temperature, max_tokens) per role. Scanner and summarizer run at 512
# output tokens, the planner and the three debate roles at 1024. Roles with
# short judgement-style outputs default to 512.
ROLE_DEFAULTS: dict[str, tuple[float, int]] = {
    "scanner": (0.5, 512),
    "planner": (0.5, 1024),
    "advocate": (0.5, 1024),
    "skeptic": (0.5, 1024),
    "judge": (0.5, 1024),
    "cluster_judge": (0.5, 512),
    "propagation_judge": (0.5, 512),
    "summarizer": (0.5, 512),
    "vqa": (0.5, 512),
    "eval_judge": (0.5, 512),
}

ENV_ENDPOINT = "GLITCHSCOPE_ENDPOINT"
ENV_API_KEY = "GLITCHSCOPE_API_KEY"
ENV_MODEL = "GLITCHSCOPE_MODEL"


@dataclass
class RoleParams:
    temperature: float
    max_tokens: int


@dataclass
class PipelineConfig:
    """All knobs for detection, evaluation and backends.

    Defaults follow the reference configuration: 4 FPS sampling, 8-frame
    windows stitched on a 2x4 grid, a 0.80 judge confidence threshold and at
    most 5 verification iterations per window.
    """

    sample_fps: float = 4.0
    window_k: int = 8
    grid_rows: int = 2
    grid_cols: int = 4
    judge_confidence_threshold: float = 0.80
    max_iterations: int = 5
    zoom_factor: int = 2

    backend_mode: str = "replay"  # live | replay | record
    endpoint_url: str = ""
    api_key: str = ""
    model_name: str = "default-model"
    model_names: dict[str, str] = field(default_factory=dict)  # per-role override
    role_params: dict[str, RoleParams] = field(
        default_factory=lambda: {
            role: RoleParams(*ROLE_DEFAULTS[role]) for role in ROLES
        }
    )
    cassette_path: str = ""

    tracker_mode: str = "stub"  # stub | service
    tracker_url: str = ""

    max_in_flight: int = 4
    jobs: int = 1
    retry_attempts: int = 3
    retry_backoff: float = 1.0
    request_timeout: float = 120.0

    def validate(self) -> None:
        if self.sample_fps <= 0:
            raise ValueError("sample_fps must be > 0")
        if self.window_k < 1:
            raise ValueError("window_k must be >= 1")
        if self.grid_rows * self.grid_cols < self.window_k:
            raise ValueError(
                "grid layout %dx%d has fewer cells than window_k=%d"
                % (self.grid_rows, self.grid_cols, self.window_k)
            )
        if not 0.0 < self.judge_confidence_threshold <= 1.0:
            raise ValueError("judge_confidence_threshold must be in (0, 1]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.zoom_factor < 1:
            raise ValueError("zoom_factor must be >= 1")
        if self.backend_mode not in ("live", "replay", "record"):
            raise ValueError("backend_mode must be live, replay or record")
        if self.tracker_mode not in ("stub", "service"):
            raise ValueError("tracker_mode must be stub or service")

    def params_for(self, role: str) -> RoleParams:
        return self.role_params[role]

    def model_for(self, role: str) -> str:
        return self.model_names.get(role, self.model_name)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["api_key"] = ""  # secrets never serialized
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        data = dict(data)
        raw_params = data.pop("role_params", None)
        cfg = cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})
        if raw_params:
            for role, rp in raw_params.items():
                if isinstance(rp, dict):
                    cfg.role_params[role] = RoleParams(**rp)
                else:
                    cfg.role_params[role] = rp
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def apply_env(self) -> None:
        """Pick up endpoint/credentials from the environment (secrets stay out of files)."""
        if os.environ.get(ENV_ENDPOINT):
            self.endpoint_url = os.environ[ENV_ENDPOINT]
        if os.environ.get(ENV_API_KEY):
            self.api_key = os.environ[ENV_API_KEY]
        if os.environ.get(ENV_MODEL):
            self.model_name = os.environ[ENV_MODEL]
