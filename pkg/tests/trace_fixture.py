"""Scripted end-to-end fixture: a 16 s clip with two recurring glitches.

The script drives the full pipeline on a synthetic video partitioned into
sixteen 1-second windows (fps=4, k=4). Four windows get flagged; one is
rejected after the full debate budget, three are confirmed and grounded into
two events:

  clipping event   confirmed at W2 and W9, propagates to {2,3,4} and {8..12}
                   -> intervals [2.0, 5.0] and [8.0, 13.0]
  vanishing event  confirmed at W6, propagates to {4..14}
                   -> interval [4.0, 15.0]
"""

from __future__ import annotations

import json
import re

from glitchscope.config import PipelineConfig

FLAGGED = {
    0: ("Visual", 0.75, "The rider seems airborne with no contact shadow."),
    2: ("Physics", 0.78, "The rider overlaps a wooden barrier."),
    6: ("Physics", 0.75, "The rider launches upward abruptly."),
    9: ("Physics", 0.75, "The rider intersects wooden fence planks."),
}

CLIP_DESC = (
    "The rider in a blue outfit clips through a wooden barrier on the slope, "
    "passing through solid planks without collision response."
)
CLIP_DESC_AGAIN = (
    "The rider in a blue outfit passes through the wooden barrier planks near "
    "the trail edge, ignoring collisions."
)
VANISH_DESC = (
    "The rider in a blue outfit launches into the air and vanishes mid-flight "
    "above the slope with no physical cause."
)

MEMORY_SUMMARY = (
    "Action-adventure snow sports game on snowy mountain terrain. The rider "
    "wears a blue outfit and descends a slope past wooden barriers and fences. "
    "An exploration camera icon is visible during the run."
)

CLIP_SUMMARY = "Character phases through a wooden barrier, violating collision constraints."
VANISH_SUMMARY = "Character launches and disappears without physical cause."

EXPECTED_INTERVALS = [[[2.0, 5.0], [8.0, 13.0]], [[4.0, 15.0]]]

# propagation oracle per cluster: window index -> yes/no
CLIP_PROPAGATION = {3: True, 4: True, 8: True, 10: True, 11: True, 12: True,
                    1: False, 5: False, 7: False, 13: False}
VANISH_PROPAGATION = {4: True, 5: True, 7: True, 8: True, 9: True, 10: True,
                      11: True, 12: True, 13: True, 14: True, 3: False, 15: False}

VQA_ANSWERS = [
    ("ground interaction", "The rider slides downhill with continuous contact; "
                           "spray is visible at the board."),
    ("gap between the rider", "No gap is visible; the board touches the snow "
                              "surface and the rendering looks intact."),
    ("posture changes", "Posture shifts look continuous and consistent with carving."),
    ("terrain deformation", "The snow shows a regular carve trail with no artifacts."),
    ("camera movement", "The camera follows smoothly with no discontinuity."),
    ("wooden barrier", "The rider's torso passes through the barrier planks "
                       "with no collision response."),
    ("trajectory across", "The rider launches upward sharply and then is no "
                          "longer visible in later panels."),
    ("wooden fence", "The rider overlaps the fence planks; body segments "
                     "intersect the boards."),
]

PLANNER_SCRIPT = {
    (0, 1): {"tool": "vqa", "question": "Describe the ground interaction of the rider across the panels."},
    (0, 2): {"tool": "zoom_in", "frame_index": 1, "region": "bottom_center",
             "question": "Is there any gap between the rider and the snow surface?"},
    (0, 3): {"tool": "vqa", "question": "Describe the rider's posture changes across the panels."},
    (0, 4): {"tool": "vqa", "question": "Describe any terrain deformation near the rider."},
    (0, 5): {"tool": "vqa", "question": "Describe the camera movement relative to the rider."},
    (2, 1): {"tool": "vqa", "question": "How does the rider interact with the wooden barrier across the panels?"},
    (6, 1): {"tool": "vqa", "question": "Describe the rider's trajectory across the panels."},
    (6, 2): {"tool": "object_tracking", "object_description": "red square marker on the rider"},
    (9, 1): {"tool": "vqa", "question": "How does the rider interact with the wooden fence near the trail edge?"},
}

JUDGE_SCRIPT = {
    (0, 1): {"ruling": "normal", "final_confidence": 0.65, "should_continue": True},
    (0, 2): {"ruling": "normal", "final_confidence": 0.65, "should_continue": True},
    (0, 3): {"ruling": "normal", "final_confidence": 0.65, "should_continue": True},
    (0, 4): {"ruling": "normal", "final_confidence": 0.65, "should_continue": True},
    (0, 5): {"ruling": "normal", "final_confidence": 0.65, "should_continue": True},
    (2, 1): {"ruling": "glitch", "final_confidence": 0.85, "should_continue": False,
             "category": "Physics", "subtype": "Clipping", "description": CLIP_DESC},
    (6, 1): {"ruling": "glitch", "final_confidence": 0.70, "should_continue": True,
             "category": "Physics", "subtype": "Teleportation",
             "next_questions": ["Track the rider's motion quantitatively."]},
    (6, 2): {"ruling": "glitch", "final_confidence": 0.88, "should_continue": False,
             "category": "Physics", "subtype": "Teleportation", "description": VANISH_DESC},
    (9, 1): {"ruling": "glitch", "final_confidence": 0.82, "should_continue": False,
             "category": "Physics", "subtype": "Clipping", "description": CLIP_DESC_AGAIN},
}


def trace_config() -> PipelineConfig:
    # 1-second windows reproduce the reported second-level spans exactly
    return PipelineConfig(sample_fps=4.0, window_k=4)


class TraceScript:
    """Request handler reproducing the scripted run above."""

    def __init__(self):
        self.calls = []

    def __call__(self, req):
        self.calls.append(req.role_id)
        handler = getattr(self, f"_{req.role_id}", None)
        if handler is None:
            raise AssertionError(f"unexpected role {req.role_id}")
        return handler(req)

    @staticmethod
    def _scan_window(req) -> int:
        return int(re.search(r"Window (\d+) of", req.user_text).group(1))

    @staticmethod
    def _verify_window(req) -> int:
        return int(re.search(r"Window (\d+) \(sampled frames", req.user_text).group(1))

    @staticmethod
    def _latest_step(req) -> int:
        return max(int(s) for s in re.findall(r"Step (\d+):", req.user_text))

    def _scanner(self, req):
        j = self._scan_window(req)
        context = (
            "Action-adventure snow sports game on snowy mountain terrain. "
            f"A rider in a blue outfit carves down the slope in segment {j}. "
            "Wooden barriers and fences line the trail."
        )
        if j in FLAGGED:
            category, confidence, cues = FLAGGED[j]
            return json.dumps(
                {
                    "has_glitch": True,
                    "category": category,
                    "visual_cues": cues,
                    "reasoning": "Motion or geometry looks inconsistent.",
                    "frame_range": [0, 1, 2, 3],
                    "confidence": confidence,
                    "game_context": context,
                }
            )
        return json.dumps(
            {"has_glitch": False, "confidence": 0.12, "game_context": context,
             "reasoning": "Nothing unusual."}
        )

    def _planner(self, req):
        j = self._verify_window(req)
        step = int(re.search(r"Iteration (\d+) of", req.user_text).group(1))
        action = dict(PLANNER_SCRIPT[(j, step)])
        action["reasoning"] = f"scripted step {step} for window {j}"
        return json.dumps(action)

    def _vqa(self, req):
        for needle, answer in VQA_ANSWERS:
            if needle in req.user_text:
                return answer
        raise AssertionError(f"unexpected vqa question: {req.user_text[:80]}")

    def _advocate(self, req):
        j = self._verify_window(req)
        return json.dumps(
            {
                "supporting_evidence": [f"window {j} tool evidence"],
                "affected_object_appearance": "rider in a blue outfit",
                "argument": "The observed behavior violates the game's physics.",
                "violated_rules": ["collision"],
                "confidence_for_glitch": 0.7,
            }
        )

    def _skeptic(self, req):
        return json.dumps(
            {
                "alternative_explanations": ["scripted animation", "camera angle"],
                "argument": "This could be normal stunt behavior.",
                "missing_context": ["terrain profile"],
                "confidence_for_normal": 0.5,
            }
        )

    def _judge(self, req):
        j = self._verify_window(req)
        step = self._latest_step(req)
        verdict = dict(JUDGE_SCRIPT[(j, step)])
        verdict.setdefault("reasoning", f"scripted ruling for window {j} step {step}")
        verdict.setdefault("category", "Physics")
        return json.dumps(verdict)

    def _cluster_judge(self, req):
        new_part, existing_part = req.user_text.split("existing_descriptions")
        same = ("barrier" in new_part) == ("barrier" in existing_part)
        return json.dumps({"reasoning": "scripted", "judgement": "yes" if same else "no"})

    def _propagation_judge(self, req):
        j = int(re.search(r"window (\d+)", req.user_text).group(1))
        table = CLIP_PROPAGATION if "barrier" in req.user_text else VANISH_PROPAGATION
        answer = table.get(j)
        if answer is None:
            raise AssertionError(f"unscripted propagation probe at window {j}")
        return json.dumps({"reasoning": "scripted", "judgement": "yes" if answer else "no"})

    def _summarizer(self, req):
        if "Window context notes" in req.user_text:
            return MEMORY_SUMMARY
        if "barrier" in req.user_text:
            return CLIP_SUMMARY
        return VANISH_SUMMARY
