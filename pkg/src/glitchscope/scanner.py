"""Single-pass rough detection over stitched windows plus game-aware memory."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .errors import BackendUnavailableError, ParseFailureError
from .media import StitchedImage, Window, encode_jpeg
from .prompts import load_prompt, render_prompt

logger = logging.getLogger(__name__)


@dataclass
class ScanResult:
    """One window's screening verdict and its gameplay context note."""

    window_index: int
    has_glitch: bool
    category: str | None
    visual_cues: str
    reasoning: str
    local_frame_range: list[int]
    confidence: float
    game_context: str
    global_frame_range: tuple[int, int] | None = None  # candidate frames, global indices

    def to_dict(self) -> dict:
        return {
            "window_index": self.window_index,
            "has_glitch": self.has_glitch,
            "category": self.category,
            "visual_cues": self.visual_cues,
            "reasoning": self.reasoning,
            "local_frame_range": self.local_frame_range,
            "confidence": self.confidence,
            "game_context": self.game_context,
            "global_frame_range": list(self.global_frame_range)
            if self.global_frame_range
            else None,
        }


@dataclass
class GameMemory:
    summary: str
    per_window_contexts: list[str] = field(default_factory=list)


def scan_user_text(window: Window, window_count: int) -> str:
    a, b = window.global_frame_range
    n = len(window.frames)
    return render_prompt(
        "scanner_user",
        window_index=window.index,
        window_count=window_count,
        frame_start=a,
        frame_end=b,
        n_frames=n,
        max_label=n - 1,
    )


class Scanner:
    def __init__(self, gateway, config):
        self.gateway = gateway
        self.config = config

    def scan_window(self, window: Window, img: StitchedImage, window_count: int) -> ScanResult:
        """Screen one stitched window with a single model call.

        A parse failure (after the one JSON-only retry) degrades to a
        non-candidate result rather than aborting the scan.
        """
        user_text = scan_user_text(window, window_count)
        try:
            parsed = self.gateway.call_parsed(
                "scanner",
                load_prompt("scanner_system"),
                user_text,
                "scanner",
                (encode_jpeg(img.pixels),),
            )
        except ParseFailureError:
            logger.warning("scanner output unparseable for window %d; treating as no glitch",
                           window.index)
            return ScanResult(
                window_index=window.index,
                has_glitch=False,
                category=None,
                visual_cues="",
                reasoning="",
                local_frame_range=[],
                confidence=0.0,
                game_context="(parse failure)",
            )

        k = len(window.frames)
        local = sorted({m for m in parsed["frame_range"] if 0 <= m < k})
        start = window.global_frame_range[0]
        global_range = (start + local[0], start + local[-1]) if local else None
        return ScanResult(
            window_index=window.index,
            has_glitch=parsed["has_glitch"],
            category=parsed["category"],
            visual_cues=parsed["visual_cues"],
            reasoning=parsed["reasoning"],
            local_frame_range=local,
            confidence=parsed["confidence"],
            game_context=parsed["game_context"],
            global_frame_range=global_range,
        )

    def scan_all(self, windows: list[Window], images: list[StitchedImage]) -> list[ScanResult]:
        count = len(windows)
        return [self.scan_window(w, img, count) for w, img in zip(windows, images)]

    def build_memory(self, contexts: list[str]) -> GameMemory:
        """Aggregate the per-window contexts into one game-aware summary.

        One summarizer call over all contexts; a transport failure or an
        empty reply falls back to concatenating the first and last context.
        """
        if not contexts:
            raise ValueError("build_memory needs at least one context")
        joined = "\n".join(f"- {c}" for c in contexts)
        try:
            response = self.gateway.call(
                "summarizer",
                load_prompt("memory_system"),
                render_prompt("memory_user", contexts=joined),
            )
            summary = response.text.strip()
        except (ParseFailureError, BackendUnavailableError) as exc:
            logger.warning("memory summarization failed (%s); using fallback", exc)
            summary = ""
        if not summary:
            summary = contexts[0] if len(contexts) == 1 else f"{contexts[0]} {contexts[-1]}"
        return GameMemory(summary=summary, per_window_contexts=list(contexts))


def select_candidates(results: list[ScanResult]) -> list[int]:
    """Window indices flagged by the scanner, in chronological order.

    The binary flag alone decides; confidence is kept for logging and for
    the verifier's hypothesis context, never for filtering.
    """
    return [r.window_index for r in results if r.has_glitch]
