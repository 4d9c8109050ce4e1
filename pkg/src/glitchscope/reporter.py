"""Final report assembly: cluster summaries, time intervals, canonical JSON.

Window runs are mapped to seconds at window granularity (run [a, b] covers
[a*k/fps, (b+1)*k/fps), clamped to the video duration). Serialization is
byte-stable: fixed key order, intervals rounded to at most two decimals with
the decimal point always kept.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field

from .errors import BackendUnavailableError, ParseFailureError
from .grounder import GlitchCluster
from .prompts import load_prompt, render_prompt

logger = logging.getLogger(__name__)

_TIMESTAMP_RE = re.compile(r"\d:\d")


@dataclass(frozen=True)
class TimeInterval:
    start_sec: float
    end_sec: float

    def __post_init__(self):
        if not 0.0 <= self.start_sec < self.end_sec:
            raise ValueError(f"degenerate interval [{self.start_sec}, {self.end_sec}]")


@dataclass
class BugEntry:
    description: str
    category: str
    subtype: str
    intervals: list[TimeInterval]


@dataclass
class GlitchReport:
    video_name: str
    game_name: str
    no_bugs: bool
    bugs: list[BugEntry] = field(default_factory=list)


def frames_to_seconds(run: tuple[int, int], k: int, fps: float, duration: float | None = None) -> TimeInterval:
    """Convert an inclusive window-index run [a, b] to a second-level interval."""
    a, b = run
    if a > b:
        raise ValueError(f"run start {a} after end {b}")
    if k < 1 or fps <= 0:
        raise ValueError("k and fps must be positive")
    start = a * k / fps
    end = (b + 1) * k / fps
    if duration is not None:
        end = min(end, duration)
    return TimeInterval(start_sec=start, end_sec=end)


def _banned_tokens(text: str) -> bool:
    return "#" in text or "frame" in text.lower() or bool(_TIMESTAMP_RE.search(text))


class Reporter:
    def __init__(self, gateway, config):
        self.gateway = gateway
        self.config = config

    def summarize_cluster(self, cluster: GlitchCluster, time_range: str = "") -> str:
        """One summarizer call over the cluster's chronological descriptions.

        The summary must not leak frame numbers or timestamps; a violating
        reply is regenerated once, then the canonical description is used.
        """
        descriptions = [
            cluster.per_window_descriptions[w]
            for w in sorted(cluster.per_window_descriptions)
        ]
        user_text = render_prompt(
            "summarizer_user",
            descriptions=json.dumps(descriptions, ensure_ascii=False),
            category=cluster.category or "Other",
            subtype=cluster.subtype or "unspecified",
            time_range=time_range or "unspecified",
        )
        system = load_prompt("summarizer_system")
        try:
            text = self.gateway.call("summarizer", system, user_text).text.strip()
            if text and not _banned_tokens(text):
                return text
            logger.warning(
                "cluster %d summary empty or contains banned tokens; regenerating",
                cluster.cluster_id,
            )
            retry_text = (
                user_text
                + "\n\nDo not include frame numbers, timestamps, or '#' markers in the summary."
            )
            text = self.gateway.call("summarizer", system, retry_text).text.strip()
            if text and not _banned_tokens(text):
                return text
        except (ParseFailureError, BackendUnavailableError) as exc:
            logger.warning("cluster %d summarization failed: %s", cluster.cluster_id, exc)
        logger.warning("cluster %d falls back to its canonical description", cluster.cluster_id)
        return cluster.canonical_description

    def build_report(
        self,
        clusters: list[GlitchCluster],
        meta: dict,
        descriptions: dict[int, str] | None = None,
    ) -> GlitchReport:
        """Assemble the final report; one bug per cluster, one interval per run."""
        k = self.config.window_k
        fps = self.config.sample_fps
        duration = meta.get("duration")
        bugs = []
        for cluster in clusters:
            desc = (descriptions or {}).get(cluster.cluster_id, cluster.canonical_description)
            intervals = [
                frames_to_seconds(run, k, fps, duration) for run in cluster.occurrences
            ]
            bugs.append(
                BugEntry(
                    description=desc,
                    category=cluster.category or "Other",
                    subtype=cluster.subtype or "",
                    intervals=intervals,
                )
            )
        return GlitchReport(
            video_name=meta["video_name"],
            game_name=meta["game_name"],
            no_bugs=not bugs,
            bugs=bugs,
        )


def _round2(x: float) -> float:
    return round(float(x), 2)


def serialize_report(report: GlitchReport) -> bytes:
    """Canonical UTF-8 JSON bytes, stable across runs for equal reports."""
    payload = {
        "video_name": report.video_name,
        "game_name": report.game_name,
        "no_bugs": report.no_bugs,
        "bugs": [
            {
                "description": bug.description,
                "category": bug.category,
                "subtype": bug.subtype,
                "intervals": [[_round2(iv.start_sec), _round2(iv.end_sec)] for iv in bug.intervals],
            }
            for bug in report.bugs
        ],
    }
    return json.dumps(payload, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def parse_report(data: bytes | str) -> GlitchReport:
    """Inverse of serialize_report; also the evaluator's prediction loader."""
    obj = json.loads(data)
    for key in ("video_name", "game_name", "no_bugs", "bugs"):
        if key not in obj:
            raise ValueError(f"report missing required key {key!r}")
    bugs = []
    for i, raw in enumerate(obj["bugs"]):
        if "description" not in raw or "intervals" not in raw:
            raise ValueError(f"bugs[{i}] missing description or intervals")
        intervals = [
            TimeInterval(start_sec=float(s), end_sec=float(e)) for s, e in raw["intervals"]
        ]
        if not intervals:
            raise ValueError(f"bugs[{i}] has no intervals")
        bugs.append(
            BugEntry(
                description=str(raw["description"]),
                category=str(raw.get("category", "Other")),
                subtype=str(raw.get("subtype", "")),
                intervals=intervals,
            )
        )
    if bool(obj["no_bugs"]) != (not bugs):
        raise ValueError("no_bugs flag inconsistent with bugs list")
    return GlitchReport(
        video_name=str(obj["video_name"]),
        game_name=str(obj["game_name"]),
        no_bugs=bool(obj["no_bugs"]),
        bugs=bugs,
    )
