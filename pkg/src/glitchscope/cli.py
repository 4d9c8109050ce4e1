"""Operator entry points: detect, evaluate, record.

Exit codes: 0 success, 2 unreadable input or schema violation, 3 backend
unavailable or cassette miss, 1 anything else. stdout carries only artifact
paths; structured error lines go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import evaluator as ev
from .config import PipelineConfig
from .errors import (
    BackendUnavailableError,
    CassetteMissError,
    UnreadableSourceError,
    ZeroLengthError,
)
from .gateway import ModelGateway, build_backend
from .pipeline import DetectionPipeline, RunArtifacts
from .reporter import parse_report, serialize_report

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_BACKEND = 3


def _error(code: str, message: str) -> None:
    print(f"error: {code}: {message}", file=sys.stderr)


def _load_config(args) -> PipelineConfig:
    if getattr(args, "config", None):
        config = PipelineConfig.from_file(args.config)
    else:
        config = PipelineConfig()
    if getattr(args, "backend", None):
        config.backend_mode = args.backend
    if getattr(args, "cassette", None):
        config.cassette_path = args.cassette
    if getattr(args, "tracker_url", None):
        config.tracker_url = args.tracker_url
        config.tracker_mode = "service"
    if getattr(args, "jobs", None):
        config.jobs = args.jobs
    config.apply_env()
    config.validate()
    return config


def _dump_artifacts(art: RunArtifacts, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "scan_results.jsonl", "w", encoding="utf-8") as fh:
        for r in art.scan_results:
            fh.write(json.dumps(r.to_dict(), ensure_ascii=False) + "\n")
    with open(out_dir / "investigations.json", "w", encoding="utf-8") as fh:
        json.dump([inv.to_dict() for inv in art.investigations], fh, indent=2, ensure_ascii=False)
    run_meta = {
        "video_name": art.video_name,
        "game_name": art.game_name,
        "duration": art.duration,
        "memory": art.memory_summary,
        "candidates": art.candidates,
        "confirmed_windows": art.confirmed_windows,
        "clusters": [
            {
                "cluster_id": c.cluster_id,
                "members": c.member_windows,
                "occurrences": [list(run) for run in c.occurrences],
                "canonical_description": c.canonical_description,
            }
            for c in art.clusters
        ],
    }
    with open(out_dir / "run_meta.json", "w", encoding="utf-8") as fh:
        json.dump(run_meta, fh, indent=2, ensure_ascii=False)


def cmd_detect(args) -> int:
    try:
        config = _load_config(args)
    except (ValueError, OSError) as exc:
        _error("BAD_CONFIG", str(exc))
        return EXIT_INPUT
    out_dir = Path(args.out)
    art = RunArtifacts()
    try:
        backend = build_backend(config)
    except (ValueError, OSError) as exc:
        _error("BAD_CONFIG", str(exc))
        return EXIT_INPUT
    gateway = ModelGateway(backend, config)
    pipeline = DetectionPipeline(config, gateway)
    try:
        report = pipeline.run(args.video, args.game, artifacts=art)
    except (UnreadableSourceError, ZeroLengthError) as exc:
        _error("UNREADABLE_SOURCE", str(exc))
        _dump_artifacts(art, out_dir)
        return EXIT_INPUT
    except CassetteMissError as exc:
        _error("CASSETTE_MISS", str(exc))
        _dump_artifacts(art, out_dir)
        return EXIT_BACKEND
    except BackendUnavailableError as exc:
        _error("BACKEND_UNAVAILABLE", str(exc))
        _dump_artifacts(art, out_dir)
        return EXIT_BACKEND
    finally:
        if hasattr(backend, "close"):
            backend.close()

    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    report_path.write_bytes(serialize_report(report))
    _dump_artifacts(art, out_dir)
    with open(out_dir / "run_config.json", "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2)
    print(str(report_path))
    return EXIT_OK


def cmd_record(args) -> int:
    # detect in record mode; the cassette file is versioned, never overwritten
    args.backend = "record"
    rc = cmd_detect(args)
    return rc


def cmd_evaluate(args) -> int:
    try:
        config = _load_config(args)
    except (ValueError, OSError) as exc:
        _error("BAD_CONFIG", str(exc))
        return EXIT_INPUT
    try:
        ground_truth = ev.load_ground_truth(args.gt)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        _error("BAD_GROUND_TRUTH", str(exc))
        return EXIT_INPUT

    pred_dir = Path(args.pred_dir)
    pred_files = sorted(pred_dir.glob("*.json"))
    if not pred_files:
        _error("NO_PREDICTIONS", f"no *.json prediction files in {pred_dir}")
        return EXIT_INPUT
    predictions = []
    for path in pred_files:
        try:
            predictions.append(parse_report(path.read_text(encoding="utf-8")))
        except (ValueError, json.JSONDecodeError) as exc:
            _error("BAD_PREDICTION", f"{path}: {exc}")
            return EXIT_INPUT

    try:
        backend = build_backend(config)
    except (ValueError, OSError) as exc:
        _error("BAD_CONFIG", str(exc))
        return EXIT_INPUT
    gateway = ModelGateway(backend, config)
    judge = ev.SimilarityJudge(gateway)

    def one(pred):
        entry = ground_truth.get(pred.video_name)
        if entry is None:
            _error("MISSING_GT", f"no ground-truth entry for video {pred.video_name!r}")
            return None
        return ev.evaluate_video(pred, entry["bugs"], judge)

    try:
        if config.jobs > 1:
            with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                results = list(pool.map(one, predictions))
        else:
            results = [one(p) for p in predictions]
    except CassetteMissError as exc:
        _error("CASSETTE_MISS", str(exc))
        return EXIT_BACKEND
    except BackendUnavailableError as exc:
        _error("BACKEND_UNAVAILABLE", str(exc))
        return EXIT_BACKEND
    if any(r is None for r in results):
        return EXIT_INPUT

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_video_path = out_dir / "eval_per_video.jsonl"
    with open(per_video_path, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.to_dict(), ensure_ascii=False) + "\n")
    aggregate_path = out_dir / "eval_aggregate.json"
    with open(aggregate_path, "w", encoding="utf-8") as fh:
        json.dump(ev.aggregate_results(results), fh, indent=2)
    print(str(aggregate_path))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glitchscope",
        description="Agentic gameplay-video glitch detection and evaluation",
    )
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    detect = sub.add_parser("detect", help="detect glitches in one video")
    detect.add_argument("--video", required=True)
    detect.add_argument("--game", required=True, help="game name carried into the report")
    detect.add_argument("--config", help="JSON config file")
    detect.add_argument("--backend", choices=["live", "replay", "record"])
    detect.add_argument("--cassette", help="cassette path for replay/record")
    detect.add_argument("--tracker-url", dest="tracker_url", help="tracker service base URL")
    detect.add_argument("--out", required=True, help="output directory")
    detect.add_argument("--jobs", type=int)
    detect.set_defaults(func=cmd_detect)

    record = sub.add_parser("record", help="run detection live and record a cassette")
    record.add_argument("--video", required=True)
    record.add_argument("--game", required=True)
    record.add_argument("--config", help="JSON config file")
    record.add_argument("--cassette", required=True)
    record.add_argument("--tracker-url", dest="tracker_url")
    record.add_argument("--out", required=True)
    record.add_argument("--jobs", type=int)
    record.set_defaults(func=cmd_record)

    evaluate = sub.add_parser("evaluate", help="score predictions against ground truth")
    evaluate.add_argument("--pred-dir", dest="pred_dir", required=True)
    evaluate.add_argument("--gt", required=True, help="ground-truth JSON file")
    evaluate.add_argument("--config", help="JSON config file")
    evaluate.add_argument("--backend", choices=["live", "replay", "record"])
    evaluate.add_argument("--cassette")
    evaluate.add_argument("--out", required=True)
    evaluate.add_argument("--jobs", type=int)
    evaluate.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
