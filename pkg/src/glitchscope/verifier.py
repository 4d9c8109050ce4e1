"""Fine-grained verification: a Planner/Executor loop with debate rulings.

Each scanner candidate is investigated step by step. The planner picks a
tool, the executor runs it, and three debate roles (advocate, skeptic,
judge) evaluate the accumulated evidence. The loop stops when the judge's
confidence reaches the configured threshold, when the judge asks to stop,
or at the iteration cap, where the last ruling decides.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

from .errors import (
    BackendUnavailableError,
    CassetteMissError,
    GlitchScopeError,
    ParseFailureError,
    ToolFailureError,
)
from .media import StitchedImage, Window, encode_jpeg
from .prompts import load_prompt, render_prompt
from .scanner import GameMemory, ScanResult
from .toolbox import Toolbox, analyze_trajectory

logger = logging.getLogger(__name__)

# Failures that degrade fail-safe instead of aborting the run. A cassette
# miss is deliberately NOT here: replay must fail loudly on any gap.
RECOVERABLE = (ParseFailureError, BackendUnavailableError)

DEFAULT_FIRST_QUESTION = (
    "Describe all visible objects in the scene, their appearance "
    "(color, shape, size), and what they are doing."
)


@dataclass
class Action:
    tool: str  # vqa | zoom_in | object_tracking | none
    reasoning: str = ""
    question: str | None = None
    frame_index: list[int] | None = None
    region: str | list | None = None
    object_description: str | None = None
    conclusion: str | None = None

    def brief(self) -> str:
        if self.tool == "vqa":
            return f"vqa(question={self.question!r})"
        if self.tool == "zoom_in":
            return (
                f"zoom_in(frame_index={self.frame_index}, region={self.region!r}, "
                f"question={self.question!r})"
            )
        if self.tool == "object_tracking":
            return f"object_tracking(object_description={self.object_description!r})"
        return "none(ready_to_conclude)"


@dataclass
class Observation:
    step: int
    action: Action
    result: str
    timestamp: float = 0.0
    failed: bool = False


@dataclass
class Verdict:
    ruling: str  # glitch | normal
    reasoning: str = ""
    category: str | None = None
    category_corrected: bool = False
    subtype: str = ""
    confidence: float = 0.0
    should_continue: bool = True
    next_questions: list[str] = field(default_factory=list)
    description: str = ""
    supporting_evidence: list[str] = field(default_factory=list)
    rejected_explanations: list[str] = field(default_factory=list)


@dataclass
class Investigation:
    window_index: int
    hypothesis: ScanResult
    observations: list[Observation] = field(default_factory=list)
    verdicts: list[Verdict] = field(default_factory=list)
    anomalies: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "window_index": self.window_index,
            "hypothesis": self.hypothesis.to_dict(),
            "observations": [
                {
                    "step": o.step,
                    "action": o.action.brief(),
                    "result": o.result,
                    "failed": o.failed,
                }
                for o in self.observations
            ],
            "verdicts": [
                {
                    "ruling": v.ruling,
                    "confidence": v.confidence,
                    "category": v.category,
                    "subtype": v.subtype,
                    "should_continue": v.should_continue,
                    "description": v.description,
                }
                for v in self.verdicts
            ],
            "anomalies": self.anomalies,
        }


@dataclass
class VerifiedResult:
    window_index: int
    final_verdict: Verdict
    investigation: Investigation
    confirmed: bool


def _window_header(window: Window) -> str:
    a, b = window.global_frame_range
    return f"Window {window.index} (sampled frames {a}-{b})."


def _hypothesis_text(hypothesis: ScanResult) -> str:
    return json.dumps(
        {
            "window_index": hypothesis.window_index,
            "category": hypothesis.category,
            "visual_cues": hypothesis.visual_cues,
            "reasoning": hypothesis.reasoning,
            "frame_range": hypothesis.local_frame_range,
            "confidence": hypothesis.confidence,
            "game_context": hypothesis.game_context,
        },
        sort_keys=True,
        ensure_ascii=False,
    )


def _history_text(inv: Investigation, include_verdicts: bool = False) -> str:
    if not inv.observations:
        return "(no tool calls yet)"
    lines = []
    for idx, obs in enumerate(inv.observations):
        status = " [FAILED]" if obs.failed else ""
        lines.append(f"Step {obs.step}: {obs.action.brief()}{status} -> {obs.result}")
        if include_verdicts and idx < len(inv.verdicts):
            v = inv.verdicts[idx]
            followups = "; ".join(v.next_questions) if v.next_questions else "none"
            lines.append(
                f"  Judge ruling: {v.ruling} (confidence {v.confidence:.2f}); "
                f"follow-up questions: {followups}"
            )
    return "\n".join(lines)


class Verifier:
    def __init__(self, gateway, toolbox: Toolbox, config):
        self.gateway = gateway
        self.toolbox = toolbox
        self.config = config

    # -- planning ----------------------------------------------------------

    def _planner_call(self, window, stitched, hypothesis, memory, inv, step, extra: str = "") -> Action:
        user_text = render_prompt(
            "planner_user",
            window_header=_window_header(window),
            step=step,
            max_steps=self.config.max_iterations,
            hypothesis=_hypothesis_text(hypothesis),
            game_memory=memory.summary,
            history=_history_text(inv, include_verdicts=True),
        )
        if extra:
            user_text += "\n\n" + extra
        parsed = self.gateway.call_parsed(
            "planner",
            load_prompt("planner_system"),
            user_text,
            "planner_action",
            (encode_jpeg(stitched.pixels),),
        )
        return Action(
            tool=parsed["tool"],
            reasoning=parsed["reasoning"],
            question=parsed["question"],
            frame_index=parsed["frame_index"],
            region=parsed["region"],
            object_description=parsed["object_description"],
            conclusion=parsed["conclusion"],
        )

    def plan_next(
        self,
        window: Window,
        stitched: StitchedImage,
        hypothesis: ScanResult,
        memory: GameMemory,
        inv: Investigation,
    ) -> Action:
        """Pick the next investigation action.

        Step 1 must be vqa; a disobedient or unparseable reply is re-asked
        once and then overridden with a scene-establishing question.
        Repeated identical questions are re-planned once; a second repeat
        concludes the investigation (the repeat would add no evidence).
        """
        step = len(inv.observations) + 1
        try:
            action = self._planner_call(window, stitched, hypothesis, memory, inv, step)
        except RECOVERABLE:
            inv.anomalies.append(f"planner failure at step {step}")
            if step == 1:
                return Action(tool="vqa", question=DEFAULT_FIRST_QUESTION,
                              reasoning="forced first-step vqa")
            return Action(tool="none", conclusion="ready_to_conclude",
                          reasoning="planner parse failure")

        if step == 1 and action.tool != "vqa":
            try:
                action = self._planner_call(
                    window, stitched, hypothesis, memory, inv, step,
                    extra="Reminder: always call vqa on the first iteration.",
                )
            except RECOVERABLE:
                action = None
            if action is None or action.tool != "vqa":
                inv.anomalies.append("planner ignored first-step vqa rule; overridden")
                return Action(tool="vqa", question=DEFAULT_FIRST_QUESTION,
                              reasoning="forced first-step vqa")

        if action.question and self._is_repeat(inv, action):
            try:
                action = self._planner_call(
                    window, stitched, hypothesis, memory, inv, step,
                    extra="You already asked that exact question. Never repeat the same question.",
                )
            except RECOVERABLE:
                return Action(tool="none", conclusion="ready_to_conclude",
                              reasoning="planner failure on re-plan")
            if action.question and self._is_repeat(inv, action):
                inv.anomalies.append(f"planner repeated a question at step {step}; concluding")
                return Action(tool="none", conclusion="ready_to_conclude",
                              reasoning="duplicate question after re-plan")
        return action

    @staticmethod
    def _is_repeat(inv: Investigation, action: Action) -> bool:
        return any(
            o.action.tool == action.tool and o.action.question == action.question
            for o in inv.observations
        )

    # -- execution ---------------------------------------------------------

    def execute_action(self, action: Action, window: Window, stitched: StitchedImage) -> Observation:
        """Run the chosen tool; failures are captured in the observation."""
        step = 0  # filled by caller
        try:
            if action.tool == "vqa":
                result = self.toolbox.run_vqa(stitched.pixels, action.question)
            elif action.tool == "zoom_in":
                k = len(window.frames)
                indices = [m for m in (action.frame_index or []) if 0 <= m < k]
                if not indices:
                    raise ToolFailureError(
                        f"zoom_in frame_index {action.frame_index} outside window of {k} frames"
                    )
                frames = [window.frames[m] for m in indices]
                result = self.toolbox.run_zoom(frames, action.region, action.question)
            elif action.tool == "object_tracking":
                traj = self.toolbox.run_tracking(
                    list(window.frames), action.object_description, self.config.sample_fps
                )
                report = analyze_trajectory(traj)
                points = ", ".join(
                    f"(f{p.frame_index}: {p.cx:.1f},{p.cy:.1f})" if p.present
                    else f"(f{p.frame_index}: absent)"
                    for p in traj.points
                )
                result = (
                    f"Tracked {action.object_description!r}: {points}. "
                    f"Physics analysis: {report.summary()}"
                )
            else:
                raise ValueError(f"cannot execute tool {action.tool!r}")
            return Observation(step=step, action=action, result=result, timestamp=time.time())
        except CassetteMissError:
            raise
        except GlitchScopeError as exc:
            logger.warning("tool %s failed: %s", action.tool, exc)
            return Observation(
                step=step,
                action=action,
                result=f"TOOL_FAILURE: {exc}",
                timestamp=time.time(),
                failed=True,
            )

    # -- debate ------------------------------------------------------------

    def debate(
        self,
        window: Window,
        hypothesis: ScanResult,
        memory: GameMemory,
        inv: Investigation,
    ) -> Verdict:
        """Advocate, then skeptic, then judge, each over the full evidence.

        Any role failing to produce parseable output (after its retry)
        yields the fail-safe verdict: normal at zero confidence, loop
        allowed to continue.
        """
        latest = inv.observations[-1]
        header = _window_header(window)
        history = _history_text(inv)
        hypo = _hypothesis_text(hypothesis)
        try:
            advocate = self.gateway.call_parsed(
                "advocate",
                load_prompt("advocate_system"),
                render_prompt(
                    "advocate_user",
                    window_header=header,
                    hypothesis=hypo,
                    game_memory=memory.summary,
                    history=history,
                    latest_result=latest.result,
                ),
                "advocate",
            )
            skeptic = self.gateway.call_parsed(
                "skeptic",
                load_prompt("skeptic_system"),
                render_prompt(
                    "skeptic_user",
                    window_header=header,
                    hypothesis=hypo,
                    game_memory=memory.summary,
                    history=history,
                    latest_result=latest.result,
                ),
                "skeptic",
            )
            judge = self.gateway.call_parsed(
                "judge",
                load_prompt("judge_system"),
                render_prompt(
                    "judge_user",
                    window_header=header,
                    hypothesis=hypo,
                    history=history,
                    latest_result=latest.result,
                    advocate_output=json.dumps(advocate, sort_keys=True, ensure_ascii=False),
                    skeptic_output=json.dumps(skeptic, sort_keys=True, ensure_ascii=False),
                ),
                "judge",
            )
        except RECOVERABLE as exc:
            inv.anomalies.append(f"debate failure: {exc}")
            return Verdict(ruling="normal", confidence=0.0, should_continue=True,
                           reasoning="debate role failed; fail-safe normal")
        return Verdict(
            ruling=judge["ruling"],
            reasoning=judge["reasoning"],
            category=judge["category"],
            category_corrected=judge["category_corrected"],
            subtype=judge["subtype"],
            confidence=judge["final_confidence"],
            should_continue=judge["should_continue"],
            next_questions=judge["next_questions"],
            description=judge["description"],
            supporting_evidence=judge["supporting_evidence"],
            rejected_explanations=judge["rejected_explanations"],
        )

    # -- loop --------------------------------------------------------------

    def verify_window(
        self,
        window: Window,
        stitched: StitchedImage,
        hypothesis: ScanResult,
        memory: GameMemory,
    ) -> VerifiedResult:
        inv = Investigation(window_index=window.index, hypothesis=hypothesis)
        tau = self.config.judge_confidence_threshold
        last: Verdict | None = None
        for step in range(1, self.config.max_iterations + 1):
            action = self.plan_next(window, stitched, hypothesis, memory, inv)
            if action.tool == "none":
                break
            obs = self.execute_action(action, window, stitched)
            obs.step = step
            inv.observations.append(obs)
            verdict = self.debate(window, hypothesis, memory, inv)
            inv.verdicts.append(verdict)
            last = verdict
            if verdict.confidence >= tau:
                break
            if not verdict.should_continue:
                break

        if last is None:
            inv.anomalies.append("no debate ruling produced; fail-safe normal")
            last = Verdict(ruling="normal", confidence=0.0, should_continue=False,
                           reasoning="no evidence gathered")
        confirmed = last.ruling == "glitch"
        if confirmed and not last.description:
            # a confirmed glitch must carry a non-empty description downstream
            last.description = (
                last.reasoning or hypothesis.visual_cues or "Unspecified glitch behavior."
            )
        if last.category is None:
            last.category = hypothesis.category
        return VerifiedResult(
            window_index=window.index,
            final_verdict=last,
            investigation=inv,
            confirmed=confirmed,
        )
