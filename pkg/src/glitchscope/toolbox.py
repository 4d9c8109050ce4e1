"""Investigation tools: VQA, zoom-in, and object tracking with physics rules.

Tracking produces a centroid trajectory which is screened by four rule-based
anomaly detectors:

  position_jump   inter-frame displacement > 20% of the frame diagonal
  velocity_spike  inter-frame speed change > 500 px/s
  motion_freeze   displacement < 1 px for >= 4 consecutive steps
  jittering       direction reversals in >= 50% of consecutive step pairs

A reversal is a negative dot product between consecutive displacement
vectors; zero-displacement steps are skipped when pairing. Frames where the
object is absent split the trajectory into segments that are analyzed
independently; the gap itself is reported as a note, not a flag.
"""

from __future__ import annotations

import base64
import logging
import math
import re
import threading
from dataclasses import dataclass, field

import numpy as np
import requests

from . import media
from .errors import (
    BackendUnavailableError,
    EmptyTrackError,
    TooShortError,
    ToolFailureError,
    TrackerUnavailableError,
)
from .prompts import load_prompt

logger = logging.getLogger(__name__)

POSITION_JUMP_DIAG_FRACTION = 0.20
VELOCITY_SPIKE_PX_PER_S = 500.0
FREEZE_DISPLACEMENT_PX = 1.0
FREEZE_MIN_STEPS = 4
JITTER_REVERSAL_FRACTION = 0.50

FLAG_NAMES = ("position_jump", "velocity_spike", "motion_freeze", "jittering")


@dataclass(frozen=True)
class TrackPoint:
    frame_index: int
    cx: float
    cy: float
    bbox: tuple[float, float, float, float]
    present: bool


@dataclass
class Trajectory:
    object_description: str
    points: list[TrackPoint]
    frame_size: tuple[int, int]  # (width, height) px
    fps: float

    def present_points(self) -> list[TrackPoint]:
        return [p for p in self.points if p.present]


@dataclass
class Kinematics:
    speeds: list[float]          # px/s per step
    accelerations: list[float]   # px/s change per step
    displacements: list[float]   # px per step


@dataclass
class PhysicsReport:
    flags: set[str]
    # per flag: (step index, measured value, threshold)
    evidence: dict[str, list[tuple[int, float, float]]]
    kinematics: Kinematics
    notes: list[str] = field(default_factory=list)

    def summary(self) -> str:
        if not self.flags and not self.notes:
            return "No physics anomalies flagged."
        parts = []
        for flag in FLAG_NAMES:
            if flag in self.flags:
                step, value, threshold = self.evidence[flag][0]
                parts.append(f"{flag} at step {step} (measured {value:.2f}, threshold {threshold:.2f})")
        parts.extend(self.notes)
        return "; ".join(parts)


def _segments(points: list[TrackPoint]) -> list[list[tuple[int, TrackPoint]]]:
    """Maximal runs of present points, keeping each point's index in the full list."""
    segs: list[list[tuple[int, TrackPoint]]] = []
    current: list[tuple[int, TrackPoint]] = []
    for i, p in enumerate(points):
        if p.present:
            current.append((i, p))
        elif current:
            segs.append(current)
            current = []
    if current:
        segs.append(current)
    return segs


def analyze_trajectory(traj: Trajectory) -> PhysicsReport:
    """Apply the four rule-based detectors to a centroid trajectory.

    Raises:
        TooShortError: fewer than two present points overall.
    """
    present = traj.present_points()
    if len(present) < 2:
        raise TooShortError("trajectory needs at least 2 present points")

    width, height = traj.frame_size
    diagonal = math.hypot(width, height)
    jump_threshold = POSITION_JUMP_DIAG_FRACTION * diagonal

    flags: set[str] = set()
    evidence: dict[str, list[tuple[int, float, float]]] = {f: [] for f in FLAG_NAMES}
    speeds_all: list[float] = []
    accel_all: list[float] = []
    disp_all: list[float] = []
    notes: list[str] = []

    segments = _segments(traj.points)
    if len(segments) > 1 or len(present) < len(traj.points):
        absent = [p.frame_index for p in traj.points if not p.present]
        notes.append(
            "object absent at frame indices "
            + ", ".join(str(i) for i in absent)
            + "; trajectory analyzed per contiguous segment"
        )

    for seg in segments:
        if len(seg) < 2:
            continue
        steps = []  # (step index, displacement vector)
        for (i0, p0), (_, p1) in zip(seg, seg[1:]):
            vec = (p1.cx - p0.cx, p1.cy - p0.cy)
            steps.append((i0, vec))

        displacements = [math.hypot(vx, vy) for _, vec in steps for vx, vy in [vec]]
        speeds = [d * traj.fps for d in displacements]
        accelerations = [b - a for a, b in zip(speeds, speeds[1:])]
        disp_all.extend(displacements)
        speeds_all.extend(speeds)
        accel_all.extend(accelerations)

        for (step, _), d in zip(steps, displacements):
            if d > jump_threshold:
                flags.add("position_jump")
                evidence["position_jump"].append((step, d, jump_threshold))

        for k, change in enumerate(accelerations):
            if abs(change) > VELOCITY_SPIKE_PX_PER_S:
                flags.add("velocity_spike")
                evidence["velocity_spike"].append(
                    (steps[k + 1][0], abs(change), VELOCITY_SPIKE_PX_PER_S)
                )

        # motion_freeze: a run of >= FREEZE_MIN_STEPS consecutive sub-pixel steps
        run_start = None
        run_len = 0
        for k, d in enumerate(displacements + [math.inf]):
            if d < FREEZE_DISPLACEMENT_PX:
                if run_len == 0:
                    run_start = k
                run_len += 1
            else:
                if run_len >= FREEZE_MIN_STEPS:
                    flags.add("motion_freeze")
                    evidence["motion_freeze"].append(
                        (steps[run_start][0], float(run_len), float(FREEZE_MIN_STEPS))
                    )
                run_len = 0

        # jittering: reversal fraction over consecutive nonzero displacement pairs
        moving = [(step, vec) for (step, vec), d in zip(steps, displacements) if d > 0.0]
        pairs = 0
        reversals = 0
        first_reversal = None
        for (_, v0), (step1, v1) in zip(moving, moving[1:]):
            pairs += 1
            if v0[0] * v1[0] + v0[1] * v1[1] < 0.0:
                reversals += 1
                if first_reversal is None:
                    first_reversal = step1
        if pairs > 0 and reversals / pairs >= JITTER_REVERSAL_FRACTION:
            flags.add("jittering")
            evidence["jittering"].append(
                (first_reversal if first_reversal is not None else seg[0][0],
                 reversals / pairs,
                 JITTER_REVERSAL_FRACTION)
            )

    return PhysicsReport(
        flags=flags,
        evidence={f: ev for f, ev in evidence.items() if ev},
        kinematics=Kinematics(speeds=speeds_all, accelerations=accel_all, displacements=disp_all),
        notes=notes,
    )


# Color vocabulary for the deterministic stub tracker. The stub grounds the
# object description on the first color word it mentions and tracks the
# matching pixel blob; it exists so the primary test suite never needs the
# tracker service.
STUB_COLORS: dict[str, tuple[int, int, int]] = {
    "red": (255, 0, 0),
    "green": (0, 255, 0),
    "blue": (0, 0, 255),
    "yellow": (255, 255, 0),
    "cyan": (0, 255, 255),
    "magenta": (255, 0, 255),
    "orange": (255, 128, 0),
    "white": (255, 255, 255),
}


class StubTracker:
    """Deterministic color-blob tracker for offline tests."""

    def __init__(self, tolerance: int = 60):
        self.tolerance = tolerance

    def _target_color(self, description: str) -> tuple[int, int, int]:
        for word in re.findall(r"[a-z]+", description.lower()):
            if word in STUB_COLORS:
                return STUB_COLORS[word]
        raise EmptyTrackError(
            f"stub tracker found no known color word in {description!r}"
        )

    def track(self, frames: list[np.ndarray], object_description: str, fps: float) -> Trajectory:
        color = np.array(self._target_color(object_description), dtype=np.int16)
        points = []
        found_any = False
        h, w = frames[0].shape[:2]
        for i, frame in enumerate(frames):
            dist = np.abs(frame.astype(np.int16) - color).max(axis=2)
            mask = dist <= self.tolerance
            if mask.any():
                ys, xs = np.nonzero(mask)
                cx = float(xs.mean())
                cy = float(ys.mean())
                bbox = (float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1))
                points.append(TrackPoint(i, cx, cy, bbox, True))
                found_any = True
            else:
                points.append(TrackPoint(i, 0.0, 0.0, (0.0, 0.0, 0.0, 0.0), False))
        if not found_any:
            raise EmptyTrackError(f"object {object_description!r} never found by stub tracker")
        return Trajectory(
            object_description=object_description,
            points=points,
            frame_size=(w, h),
            fps=fps,
        )


class ServiceTracker:
    """Client for the external tracker microservice (POST /track contract)."""

    def __init__(self, base_url: str, timeout: float = 120.0, session=None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.session = session or requests.Session()
        self._lock = threading.Lock()

    def track(self, frames: list[np.ndarray], object_description: str, fps: float) -> Trajectory:
        payload = {
            "frames": [base64.b64encode(media.encode_jpeg(f)).decode("ascii") for f in frames],
            "object_description": object_description,
            "fps": fps,
        }
        # the service holds per-session tracker state; serialize calls
        with self._lock:
            try:
                resp = self.session.post(
                    f"{self.base_url}/track", json=payload, timeout=self.timeout
                )
            except requests.RequestException as exc:
                raise TrackerUnavailableError(f"tracker service unreachable: {exc}") from exc
        if resp.status_code == 422:
            raise EmptyTrackError(f"object {object_description!r} not found by tracker service")
        if resp.status_code != 200:
            raise TrackerUnavailableError(
                f"tracker service error {resp.status_code}: {resp.text[:200]}"
            )
        data = resp.json()
        points = [
            TrackPoint(
                frame_index=int(p["frame_index"]),
                cx=float(p["cx"]),
                cy=float(p["cy"]),
                bbox=tuple(float(v) for v in p["bbox"]),
                present=bool(p["present"]),
            )
            for p in data["points"]
        ]
        return Trajectory(
            object_description=object_description,
            points=points,
            frame_size=(int(data["frame_size"][0]), int(data["frame_size"][1])),
            fps=fps,
        )


class Toolbox:
    """Uniform dispatch surface over the three investigation tools."""

    def __init__(self, gateway, config, tracker=None):
        self.gateway = gateway
        self.config = config
        if tracker is None:
            if config.tracker_mode == "service":
                tracker = ServiceTracker(config.tracker_url)
            else:
                tracker = StubTracker()
        self.tracker = tracker

    def run_vqa(self, image: np.ndarray, question: str) -> str:
        """Ask a free-form visual question about one image."""
        if not question or not question.strip():
            raise ValueError("vqa question must be non-empty")
        try:
            response = self.gateway.call(
                "vqa", load_prompt("vqa_system"), question, (media.encode_jpeg(image),)
            )
        except BackendUnavailableError as exc:
            raise ToolFailureError(f"vqa backend unavailable: {exc}") from exc
        return response.text

    def run_zoom(self, frames: list[np.ndarray], region, question: str) -> str:
        """Crop and magnify a region of the given frames, then run VQA on the strip."""
        crops = [media.crop_region(f, region, self.config.zoom_factor) for f in frames]
        strip = crops[0] if len(crops) == 1 else np.concatenate(crops, axis=1)
        return self.run_vqa(strip, question)

    def run_tracking(self, frames: list[np.ndarray], object_description: str, fps: float) -> Trajectory:
        return self.tracker.track(list(frames), object_description, fps)
