"""End-to-end detection: ingest, scan, verify, ground, report."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .config import PipelineConfig
from .grounder import Grounder
from .media import partition_windows, sample_frames, stitch_window
from .reporter import Reporter, frames_to_seconds, GlitchReport
from .scanner import Scanner, select_candidates
from .toolbox import Toolbox
from .verifier import Verifier

logger = logging.getLogger(__name__)


@dataclass
class RunArtifacts:
    """Everything worth auditing from one run; dumped even on failure."""

    video_name: str = ""
    game_name: str = ""
    duration: float = 0.0
    scan_results: list = field(default_factory=list)
    memory_summary: str = ""
    candidates: list[int] = field(default_factory=list)
    investigations: list = field(default_factory=list)
    confirmed_windows: list[int] = field(default_factory=list)
    clusters: list = field(default_factory=list)
    report: GlitchReport | None = None


class DetectionPipeline:
    def __init__(self, config: PipelineConfig, gateway, tracker=None):
        config.validate()
        self.config = config
        self.gateway = gateway
        self.scanner = Scanner(gateway, config)
        self.toolbox = Toolbox(gateway, config, tracker=tracker)
        self.verifier = Verifier(gateway, self.toolbox, config)
        self.grounder = Grounder(gateway, config)
        self.reporter = Reporter(gateway, config)

    def run(
        self,
        video_path: str | Path,
        game_name: str,
        artifacts: RunArtifacts | None = None,
    ) -> GlitchReport:
        cfg = self.config
        art = artifacts if artifacts is not None else RunArtifacts()
        art.video_name = Path(video_path).stem
        art.game_name = game_name

        seq = sample_frames(video_path, cfg.sample_fps)
        art.duration = seq.source_duration
        windows = partition_windows(seq, cfg.window_k)
        stitched = [stitch_window(w, cfg.grid_rows, cfg.grid_cols) for w in windows]
        logger.info("decoded %d frames into %d windows", len(seq), len(windows))

        results = self.scanner.scan_all(windows, stitched)
        art.scan_results = results
        memory = self.scanner.build_memory([r.game_context for r in results])
        art.memory_summary = memory.summary
        candidates = select_candidates(results)
        art.candidates = candidates
        logger.info("%d candidate windows: %s", len(candidates), candidates)

        verified = []
        for j in candidates:
            result = self.verifier.verify_window(windows[j], stitched[j], results[j], memory)
            verified.append(result)
            art.investigations.append(result.investigation)
        confirmed = [r for r in verified if r.confirmed]
        art.confirmed_windows = [r.window_index for r in confirmed]
        logger.info("confirmed windows: %s", art.confirmed_windows)

        clusters = self.grounder.cluster_glitches(confirmed)
        clusters = [self.grounder.propagate(c, stitched) for c in clusters]
        art.clusters = clusters

        descriptions = {}
        for cluster in clusters:
            spans = [
                frames_to_seconds(run, cfg.window_k, cfg.sample_fps, seq.source_duration)
                for run in cluster.occurrences
            ]
            time_range = ", ".join(f"{iv.start_sec:g}-{iv.end_sec:g} s" for iv in spans)
            descriptions[cluster.cluster_id] = self.reporter.summarize_cluster(
                cluster, time_range
            )

        meta = {
            "video_name": art.video_name,
            "game_name": game_name,
            "duration": seq.source_duration,
        }
        report = self.reporter.build_report(clusters, meta, descriptions)
        art.report = report
        return report
