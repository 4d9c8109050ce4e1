"""Matching-based evaluation: semantic scores, temporal IoU, and metrics.

Predictions and ground truth are sets of (description, interval-set) reports.
Every pair gets a judge score in [0, 5] and a temporal IoU in [0, 1]; their
product forms the weight matrix for optimal one-to-one matching. Metrics are
reported as percentages with scores normalized by the 5-point scale maximum.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from .errors import InconsistentInputError, ParseFailureError
from .prompts import load_prompt, render_prompt
from .reporter import GlitchReport, TimeInterval

logger = logging.getLogger(__name__)

SCORE_SCALE = 5.0


def normalize_intervals(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Sort by start and merge overlapping or abutting intervals."""
    items = sorted((float(s), float(e)) for s, e in intervals)
    merged: list[tuple[float, float]] = []
    for s, e in items:
        if merged and s <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], e))
        else:
            merged.append((s, e))
    return merged


@dataclass(frozen=True)
class GlitchSpan:
    """A normalized, pairwise-disjoint set of [start, end] second intervals."""

    intervals: tuple[tuple[float, float], ...]

    @classmethod
    def from_intervals(cls, intervals) -> "GlitchSpan":
        pairs = [
            (iv.start_sec, iv.end_sec) if isinstance(iv, TimeInterval) else (iv[0], iv[1])
            for iv in intervals
        ]
        return cls(intervals=tuple(normalize_intervals(pairs)))

    def total_length(self) -> float:
        return sum(e - s for s, e in self.intervals)


def interval_iou(a: GlitchSpan, b: GlitchSpan) -> float:
    """Intersection-over-union of two interval sets, measured in seconds."""
    inter = 0.0
    i = j = 0
    while i < len(a.intervals) and j < len(b.intervals):
        s1, e1 = a.intervals[i]
        s2, e2 = b.intervals[j]
        lo, hi = max(s1, s2), min(e1, e2)
        if hi > lo:
            inter += hi - lo
        if e1 <= e2:
            i += 1
        else:
            j += 1
    union = a.total_length() + b.total_length() - inter
    if union <= 0.0:
        return 0.0
    return inter / union


@dataclass(frozen=True)
class ScorePair:
    s_llm: float
    iou: float

    @property
    def w(self) -> float:
        return self.s_llm * self.iou


class SimilarityJudge:
    """LLM-as-judge semantic scoring of description pairs on the 0-5 rubric."""

    def __init__(self, gateway):
        self.gateway = gateway

    def build_user_text(self, pred_desc: str, gt_desc: str) -> str:
        return render_prompt("eval_user", pred=pred_desc, gt=gt_desc)

    def judge_similarity(self, pred_desc: str, gt_desc: str) -> float:
        if not pred_desc or not gt_desc:
            raise ValueError("descriptions must be non-empty")
        try:
            parsed = self.gateway.call_parsed(
                "eval_judge",
                load_prompt("eval_system"),
                self.build_user_text(pred_desc, gt_desc),
                "eval_score",
            )
        except ParseFailureError:
            logger.warning("similarity judge output unparseable; scoring 0")
            return 0.0
        return parsed["score"]


def score_matrix(
    preds: list[tuple[str, GlitchSpan]],
    gts: list[tuple[str, GlitchSpan]],
    judge: SimilarityJudge,
) -> list[list[ScorePair]]:
    matrix = []
    for pred_desc, pred_span in preds:
        row = []
        for gt_desc, gt_span in gts:
            s = judge.judge_similarity(pred_desc, gt_desc)
            row.append(ScorePair(s_llm=s, iou=interval_iou(pred_span, gt_span)))
        matrix.append(row)
    return matrix


def _min_cost_assignment(cost: list[list[float]]) -> list[int]:
    """Exact square-matrix assignment minimizing total cost (potentials method).

    Rows are processed in index order and ties resolve toward the lowest
    column index, so the result is deterministic for equal inputs.
    """
    n = len(cost)
    INF = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    match = [0] * (n + 1)  # match[j] = row assigned to column j (1-based, 0 = free)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = [INF] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta = INF
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1][j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    row_to_col = [0] * n
    for j in range(1, n + 1):
        if match[j]:
            row_to_col[match[j] - 1] = j - 1
    return row_to_col


def hungarian_match(weights: list[list[float]]) -> list[tuple[int, int]]:
    """Maximum-total-weight one-to-one matching, keeping only positive pairs.

    Rectangular inputs are zero-padded to square; pairs whose weight is zero
    are dropped from the returned assignment since they carry no evidence of
    a real correspondence.
    """
    n = len(weights)
    m = len(weights[0]) if n else 0
    if n == 0 or m == 0:
        return []
    size = max(n, m)
    cost = [[0.0] * size for _ in range(size)]
    for i in range(n):
        for j in range(m):
            w = weights[i][j]
            if w < 0 or w != w or w in (float("inf"), float("-inf")):
                raise ValueError("weights must be finite and nonnegative")
            cost[i][j] = -w
    row_to_col = _min_cost_assignment(cost)
    pairs = []
    for i in range(n):
        j = row_to_col[i]
        if j < m and weights[i][j] > 0.0:
            pairs.append((i, j))
    return sorted(pairs)


@dataclass
class EvalResult:
    assignment: list[tuple[int, int]]
    p_desc: float
    r_desc: float
    f1_desc: float
    miou: float
    p_overall: float
    r_overall: float
    f1_x_iou: float
    n_pred: int
    n_gt: int
    video_name: str = ""
    pairs: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "video_name": self.video_name,
            "n_pred": self.n_pred,
            "n_gt": self.n_gt,
            "assignment": [list(p) for p in self.assignment],
            "pairs": self.pairs,
            "p_desc": self.p_desc,
            "r_desc": self.r_desc,
            "f1_desc": self.f1_desc,
            "miou": self.miou,
            "p_overall": self.p_overall,
            "r_overall": self.r_overall,
            "f1_x_iou": self.f1_x_iou,
        }


def _harmonic(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def compute_metrics(
    assignment: list[tuple[int, int]],
    pairs: list[list[ScorePair]],
    n_pred: int,
    n_gt: int,
) -> EvalResult:
    """Description, grounding and overall metrics over a fixed assignment.

    Judge scores are divided by the scale maximum (5) before the percentage
    metrics; empty assignments and empty sides produce zeros rather than
    undefined values.
    """
    for i, j in assignment:
        if not (0 <= i < n_pred and 0 <= j < n_gt):
            raise InconsistentInputError(f"assignment pair ({i}, {j}) out of range")
    s_sum = sum(pairs[i][j].s_llm for i, j in assignment) / SCORE_SCALE
    w_sum = sum(pairs[i][j].w for i, j in assignment) / SCORE_SCALE
    iou_sum = sum(pairs[i][j].iou for i, j in assignment)

    p_desc = 100.0 * s_sum / n_pred if n_pred else 0.0
    r_desc = 100.0 * s_sum / n_gt if n_gt else 0.0
    p_overall = 100.0 * w_sum / n_pred if n_pred else 0.0
    r_overall = 100.0 * w_sum / n_gt if n_gt else 0.0
    return EvalResult(
        assignment=sorted(assignment),
        p_desc=p_desc,
        r_desc=r_desc,
        f1_desc=_harmonic(p_desc, r_desc),
        miou=iou_sum / len(assignment) if assignment else 0.0,
        p_overall=p_overall,
        r_overall=r_overall,
        f1_x_iou=_harmonic(p_overall, r_overall),
        n_pred=n_pred,
        n_gt=n_gt,
    )


def evaluate_video(
    pred: GlitchReport, gt_bugs: list[dict], judge: SimilarityJudge
) -> EvalResult:
    """Run the full protocol for one video: score, match, compute metrics."""
    preds = [
        (bug.description, GlitchSpan.from_intervals(bug.intervals)) for bug in pred.bugs
    ]
    gts = [
        (bug["description"], GlitchSpan.from_intervals(bug["intervals"]))
        for bug in gt_bugs
    ]
    pairs = score_matrix(preds, gts, judge)
    weights = [[p.w for p in row] for row in pairs]
    assignment = hungarian_match(weights)
    result = compute_metrics(assignment, pairs, len(preds), len(gts))
    result.video_name = pred.video_name
    result.pairs = [
        {"pred": i, "gt": j, "s_llm": pairs[i][j].s_llm, "iou": pairs[i][j].iou,
         "w": pairs[i][j].w}
        for i, j in assignment
    ]
    return result


def aggregate_results(results: list[EvalResult]) -> dict:
    """Uniform per-video averaging into corpus-level numbers."""
    if not results:
        return {
            "videos": 0, "p_desc": 0.0, "r_desc": 0.0, "f1_desc": 0.0,
            "miou": 0.0, "p_overall": 0.0, "r_overall": 0.0, "f1_x_iou": 0.0,
        }
    n = len(results)
    return {
        "videos": n,
        "p_desc": sum(r.p_desc for r in results) / n,
        "r_desc": sum(r.r_desc for r in results) / n,
        "f1_desc": sum(r.f1_desc for r in results) / n,
        "miou": sum(r.miou for r in results) / n,
        "p_overall": sum(r.p_overall for r in results) / n,
        "r_overall": sum(r.r_overall for r in results) / n,
        "f1_x_iou": sum(r.f1_x_iou for r in results) / n,
    }


def load_ground_truth(path: str) -> dict[str, dict]:
    """Load and validate the ground-truth file (a JSON array of video entries).

    Raises ValueError naming the offending entry and field on any schema
    violation.
    """
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise ValueError(f"{path}: ground truth must be a JSON array of video entries")
    by_video: dict[str, dict] = {}
    for idx, entry in enumerate(data):
        where = f"{path}: entry[{idx}]"
        if not isinstance(entry, dict) or "video_name" not in entry:
            raise ValueError(f"{where}: missing field 'video_name'")
        if "bugs" not in entry or not isinstance(entry["bugs"], list):
            raise ValueError(f"{where}: missing or non-list field 'bugs'")
        for b, bug in enumerate(entry["bugs"]):
            bwhere = f"{where}.bugs[{b}]"
            if not isinstance(bug, dict) or not bug.get("description"):
                raise ValueError(f"{bwhere}: missing field 'description'")
            intervals = bug.get("intervals")
            if not isinstance(intervals, list) or not intervals:
                raise ValueError(f"{bwhere}: missing or empty field 'intervals'")
            for v, iv in enumerate(intervals):
                if (
                    not isinstance(iv, (list, tuple))
                    or len(iv) != 2
                    or not all(isinstance(x, (int, float)) for x in iv)
                ):
                    raise ValueError(f"{bwhere}.intervals[{v}]: must be [start_sec, end_sec]")
                if not iv[0] < iv[1]:
                    raise ValueError(
                        f"{bwhere}.intervals[{v}]: start {iv[0]} must be before end {iv[1]}"
                    )
        by_video[entry["video_name"]] = entry
    return by_video
