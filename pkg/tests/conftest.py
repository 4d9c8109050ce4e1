"""Shared fixtures: synthetic videos, scripted backends, tiny pipelines."""

from __future__ import annotations

import json

import cv2
import numpy as np
import pytest

from glitchscope.config import PipelineConfig
from glitchscope.errors import CassetteMissError
from glitchscope.gateway import ModelGateway, ModelRequest, ModelResponse


class ScriptedBackend:
    """In-memory backend driven by a handler(request) -> text function.

    Used both directly and as the inner backend of a RecordingBackend when a
    test needs a real cassette file.
    """

    def __init__(self, handler):
        self.handler = handler
        self.requests: list[ModelRequest] = []

    def complete(self, req: ModelRequest) -> ModelResponse:
        self.requests.append(req)
        text = self.handler(req)
        if text is None:
            raise CassetteMissError(f"scripted backend has no reply for role {req.role_id}")
        return ModelResponse(text=text, latency=0.0, backend_id="scripted")


def scripted_gateway(handler, config: PipelineConfig | None = None) -> ModelGateway:
    return ModelGateway(ScriptedBackend(handler), config or PipelineConfig())


def write_video(
    path,
    duration_s: float,
    native_fps: float = 8.0,
    size: tuple[int, int] = (160, 120),
    moving_square: bool = True,
) -> None:
    """Write a synthetic clip: drifting gray background plus a moving red square."""
    width, height = size
    writer = cv2.VideoWriter(
        str(path), cv2.VideoWriter_fourcc(*"MJPG"), native_fps, (width, height)
    )
    assert writer.isOpened(), "MJPG writer unavailable"
    n_frames = int(round(duration_s * native_fps))
    for i in range(n_frames):
        t = i / native_fps
        frame = np.full((height, width, 3), 70 + (int(t) % 8) * 3, dtype=np.uint8)
        if moving_square:
            x = 10 + int(5 * t) % (width - 40)
            y = height // 2 - 8
            frame[y : y + 16, x : x + 16] = (30, 30, 220)  # BGR red
        writer.write(frame)
    writer.release()


def square_position(t: float, size=(160, 120)) -> tuple[int, int]:
    """Top-left corner of the synthetic red square at time t (matches write_video)."""
    width, height = size
    return 10 + int(5 * t) % (width - 40), height // 2 - 8


@pytest.fixture
def config() -> PipelineConfig:
    return PipelineConfig()


@pytest.fixture(scope="session")
def trace_bundle(tmp_path_factory):
    """Synthetic trace video + recorded cassette + the report from recording."""
    from glitchscope.gateway import ModelGateway, RecordingBackend
    from glitchscope.pipeline import DetectionPipeline, RunArtifacts
    from glitchscope.reporter import serialize_report

    from trace_fixture import TraceScript, trace_config

    root = tmp_path_factory.mktemp("trace")
    video = root / "steep_trace.avi"
    write_video(video, duration_s=16.0, native_fps=8.0)

    cassette = root / "trace_cassette.jsonl"
    config = trace_config()
    backend = RecordingBackend(ScriptedBackend(TraceScript()), cassette)
    pipeline = DetectionPipeline(config, ModelGateway(backend, config))
    artifacts = RunArtifacts()
    report = pipeline.run(video, "Steep", artifacts=artifacts)
    backend.close()
    return {
        "video": video,
        "cassette": cassette,
        "report_bytes": serialize_report(report),
        "artifacts": artifacts,
    }


@pytest.fixture
def tiny_frames():
    """Four 32x24 frames with distinct solid colors."""
    colors = [(200, 40, 40), (40, 200, 40), (40, 40, 200), (180, 180, 60)]
    return [np.full((24, 32, 3), c, dtype=np.uint8) for c in colors]


def yes(reasoning="match"):
    return json.dumps({"reasoning": reasoning, "judgement": "yes"})


def no(reasoning="different"):
    return json.dumps({"reasoning": reasoning, "judgement": "no"})


def make_candidate(k=2, index=0):
    """Tiny window + stitched image + hypothesis + memory for verifier tests."""
    from glitchscope.media import Window, stitch_window
    from glitchscope.scanner import GameMemory, ScanResult

    rng = np.random.default_rng(42 + index)
    frames = tuple(rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8) for _ in range(k))
    window = Window(index=index, frames=frames,
                    global_frame_range=(index * k, index * k + k - 1))
    stitched = stitch_window(window, 1, k)
    hypothesis = ScanResult(
        window_index=index,
        has_glitch=True,
        category="Physics",
        visual_cues="object overlaps a fence",
        reasoning="possible clipping",
        local_frame_range=[0],
        confidence=0.75,
        game_context="snowboarding game on a slope",
        global_frame_range=(index * k, index * k),
    )
    memory = GameMemory(summary="snowy slope, rider in blue", per_window_contexts=["ctx"])
    return window, stitched, hypothesis, memory


class DebateScript:
    """Scripted handler for one verify_window run.

    Judges reply from the verdict list in call order; the planner asks a
    fresh vqa question per step unless a planner override is given.
    """

    def __init__(self, verdicts, planner=None):
        import collections

        self.verdicts = verdicts
        self.planner = planner
        self.judge_calls = 0
        self.counts = collections.Counter()

    @staticmethod
    def step_of(req) -> int:
        import re

        return int(re.search(r"Iteration (\d+) of", req.user_text).group(1))

    def __call__(self, req):
        self.counts[req.role_id] += 1
        if req.role_id == "planner":
            step = self.step_of(req)
            if self.planner is not None:
                return self.planner(step, req)
            return json.dumps(
                {"tool": "vqa", "question": f"scripted question {step}", "reasoning": "r"}
            )
        if req.role_id == "vqa":
            return f"scripted observation #{self.counts['vqa']}"
        if req.role_id == "advocate":
            return json.dumps({"argument": "scripted advocate case"})
        if req.role_id == "skeptic":
            return json.dumps({"argument": "scripted skeptic case"})
        if req.role_id == "judge":
            v = self.verdicts[min(self.judge_calls, len(self.verdicts) - 1)]
            self.judge_calls += 1
            reply = {
                "ruling": v["ruling"],
                "final_confidence": v["confidence"],
                "should_continue": v.get("should_continue", True),
                "reasoning": v.get("reasoning", "scripted ruling"),
                "category": v.get("category"),
                "subtype": v.get("subtype", ""),
            }
            if v.get("description"):
                reply["description"] = v["description"]
            if v.get("malformed"):
                return "### not json ###"
            return json.dumps(reply)
        raise AssertionError(f"unexpected role {req.role_id}")
