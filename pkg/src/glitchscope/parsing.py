"""Structured-output parsing for every agent role.

Models return free text that should contain one JSON object. We pull out the
first balanced object (tolerating prose and code fences around it), then
validate it against the role's schema, filling documented defaults for
optional fields. Anything else is a ParseFailureError; callers retry once
with a "respond with JSON only" nudge before applying the role's failure
policy.
"""

from __future__ import annotations

import json
import re

from .errors import ParseFailureError

SCHEMAS = (
    "scanner",
    "planner_action",
    "advocate",
    "skeptic",
    "judge",
    "yes_no",
    "eval_score",
)

CATEGORIES = ("Visual", "Physics", "Game Logic", "Other")
_CATEGORY_ALIASES = {
    "visual": "Visual",
    "physics": "Physics",
    "game logic": "Game Logic",
    "gamelogic": "Game Logic",
    "game_logic": "Game Logic",
    "logic": "Game Logic",
    "other": "Other",
}

TOOLS = ("vqa", "zoom_in", "object_tracking", "none")

_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?")


def extract_json_object(text: str) -> dict:
    """Return the first balanced JSON object found in the text."""
    if not text:
        raise ParseFailureError("empty model output")
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    candidate = text[start : i + 1]
                    try:
                        value = json.loads(candidate)
                    except json.JSONDecodeError:
                        break
                    if isinstance(value, dict):
                        return value
                    break
        start = text.find("{", start + 1)
    raise ParseFailureError("no balanced JSON object in model output")


def _clamp(value: float, lo: float, hi: float) -> float:
    return min(max(value, lo), hi)


def _require(obj: dict, key: str, kind, schema: str):
    if key not in obj:
        raise ParseFailureError(f"{schema}: missing required field {key!r}")
    value = obj[key]
    if not isinstance(value, kind) or (kind is not bool and isinstance(value, bool)):
        raise ParseFailureError(f"{schema}: field {key!r} has wrong type")
    return value


def _opt_str(obj: dict, key: str, default: str = "") -> str:
    value = obj.get(key, default)
    if not isinstance(value, str):
        raise ParseFailureError(f"field {key!r} must be a string")
    return value


def _opt_str_list(obj: dict, key: str) -> list[str]:
    value = obj.get(key, [])
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ParseFailureError(f"field {key!r} must be a list of strings")
    return value


def _opt_number(obj: dict, key: str, default: float, lo: float, hi: float) -> float:
    value = obj.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseFailureError(f"field {key!r} must be a number")
    return _clamp(float(value), lo, hi)


def normalize_category(raw: str) -> str:
    key = raw.strip().lower().replace("-", " ")
    if key not in _CATEGORY_ALIASES:
        raise ParseFailureError(f"unknown glitch category: {raw!r}")
    return _CATEGORY_ALIASES[key]


def _parse_scanner(obj: dict) -> dict:
    has_glitch = _require(obj, "has_glitch", bool, "scanner")
    game_context = _require(obj, "game_context", str, "scanner")
    if not game_context.strip():
        raise ParseFailureError("scanner: game_context must be non-empty")
    category = None
    if has_glitch:
        category = normalize_category(_require(obj, "category", str, "scanner"))
    frame_range = obj.get("frame_range", [])
    if isinstance(frame_range, int):
        frame_range = [frame_range]
    if not isinstance(frame_range, list) or not all(
        isinstance(v, int) and not isinstance(v, bool) for v in frame_range
    ):
        raise ParseFailureError("scanner: frame_range must be a list of integers")
    return {
        "has_glitch": has_glitch,
        "category": category,
        "visual_cues": _opt_str(obj, "visual_cues"),
        "reasoning": _opt_str(obj, "reasoning"),
        "frame_range": frame_range,
        # absent confidence lands in the "suspicious" band by policy
        "confidence": _opt_number(obj, "confidence", 0.5, 0.0, 1.0),
        "game_context": game_context,
    }


def _parse_planner_action(obj: dict) -> dict:
    tool = _require(obj, "tool", str, "planner").strip().lower()
    if tool not in TOOLS:
        raise ParseFailureError(f"planner: unknown tool {tool!r}")
    out = {
        "tool": tool,
        "reasoning": _opt_str(obj, "reasoning"),
        "question": None,
        "frame_index": None,
        "region": None,
        "object_description": None,
        "conclusion": None,
    }
    if tool in ("vqa", "zoom_in"):
        question = _require(obj, "question", str, "planner")
        if not question.strip():
            raise ParseFailureError("planner: question must be non-empty")
        out["question"] = question
    if tool == "zoom_in":
        frame_index = obj.get("frame_index")
        if isinstance(frame_index, int) and not isinstance(frame_index, bool):
            frame_index = [frame_index]
        if not isinstance(frame_index, list) or not frame_index or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in frame_index
        ):
            raise ParseFailureError("planner: zoom_in needs an int or int-list frame_index")
        out["frame_index"] = frame_index
        region = obj.get("region")
        if not isinstance(region, (str, list)):
            raise ParseFailureError("planner: zoom_in needs a region")
        out["region"] = region
    if tool == "object_tracking":
        desc = _require(obj, "object_description", str, "planner")
        if not desc.strip():
            raise ParseFailureError("planner: object_description must be non-empty")
        out["object_description"] = desc
    if tool == "none":
        out["conclusion"] = _opt_str(obj, "conclusion", "ready_to_conclude")
    return out


def _parse_advocate(obj: dict) -> dict:
    return {
        "supporting_evidence": _opt_str_list(obj, "supporting_evidence"),
        "affected_object_appearance": _opt_str(obj, "affected_object_appearance"),
        "argument": _require(obj, "argument", str, "advocate"),
        "violated_rules": _opt_str_list(obj, "violated_rules"),
        "confidence_for_glitch": _opt_number(obj, "confidence_for_glitch", 0.5, 0.0, 1.0),
    }


def _parse_skeptic(obj: dict) -> dict:
    return {
        "alternative_explanations": _opt_str_list(obj, "alternative_explanations"),
        "argument": _require(obj, "argument", str, "skeptic"),
        "missing_context": _opt_str_list(obj, "missing_context"),
        "confidence_for_normal": _opt_number(obj, "confidence_for_normal", 0.5, 0.0, 1.0),
    }


def _parse_judge(obj: dict) -> dict:
    ruling = _require(obj, "ruling", str, "judge").strip().lower()
    if ruling not in ("glitch", "normal"):
        raise ParseFailureError(f"judge: ruling must be glitch or normal, got {ruling!r}")
    if "final_confidence" not in obj:
        raise ParseFailureError("judge: missing required field 'final_confidence'")
    confidence = _opt_number(obj, "final_confidence", 0.0, 0.0, 1.0)
    category = obj.get("category")
    if category is not None:
        category = normalize_category(str(category))
    should_continue = obj.get("should_continue", True)
    if not isinstance(should_continue, bool):
        raise ParseFailureError("judge: should_continue must be a boolean")
    category_corrected = obj.get("category_corrected", False)
    if not isinstance(category_corrected, bool):
        raise ParseFailureError("judge: category_corrected must be a boolean")
    return {
        "advocate_summary": _opt_str(obj, "advocate_summary"),
        "skeptic_summary": _opt_str(obj, "skeptic_summary"),
        "ruling": ruling,
        "reasoning": _opt_str(obj, "reasoning"),
        "category": category,
        "category_corrected": category_corrected,
        "correction_reason": _opt_str(obj, "correction_reason"),
        "subtype": _opt_str(obj, "subtype"),
        "final_confidence": confidence,
        "should_continue": should_continue,
        "next_questions": _opt_str_list(obj, "next_questions"),
        "description": _opt_str(obj, "description"),
        "supporting_evidence": _opt_str_list(obj, "supporting_evidence"),
        "rejected_explanations": _opt_str_list(obj, "rejected_explanations"),
    }


def _parse_yes_no(obj: dict) -> dict:
    raw = obj.get("judgement", obj.get("judgment"))
    if not isinstance(raw, str):
        raise ParseFailureError("yes_no: missing required field 'judgement'")
    value = raw.strip().lower()
    if value not in ("yes", "no"):
        raise ParseFailureError(f"yes_no: judgement must be yes or no, got {raw!r}")
    return {"reasoning": _opt_str(obj, "reasoning"), "judgement": value}


def _parse_eval_score(obj: dict) -> dict:
    if "score" not in obj:
        raise ParseFailureError("eval_score: missing required field 'score'")
    return {"score": _opt_number(obj, "score", 0.0, 0.0, 5.0)}


_PARSERS = {
    "scanner": _parse_scanner,
    "planner_action": _parse_planner_action,
    "advocate": _parse_advocate,
    "skeptic": _parse_skeptic,
    "judge": _parse_judge,
    "yes_no": _parse_yes_no,
    "eval_score": _parse_eval_score,
}


def parse_structured(text: str, schema_id: str) -> dict:
    """Parse raw model text against one of the per-role schemas.

    The eval_score schema additionally accepts a bare number in prose
    ("4.5/5" parses as 4.5) since score-only replies are common.
    """
    if schema_id not in _PARSERS:
        raise ValueError(f"unknown schema: {schema_id}")
    try:
        obj = extract_json_object(text)
    except ParseFailureError:
        if schema_id == "eval_score":
            match = _NUMBER_RE.search(text or "")
            if match:
                return {"score": _clamp(float(match.group()), 0.0, 5.0)}
        raise
    return _PARSERS[schema_id](obj)
