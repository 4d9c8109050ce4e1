"""Event-level grounding: greedy semantic clustering and boundary propagation.

Confirmed windows are grouped into glitch events (greedy first-match against
clusters in creation order), then each event's temporal extent grows by
stepping outward from every occurrence run while the propagation judge keeps
answering yes; the first no (or the video edge) stops that direction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .errors import ParseFailureError
from .media import StitchedImage, encode_jpeg
from .prompts import load_prompt, render_prompt
from .verifier import VerifiedResult

logger = logging.getLogger(__name__)


def occurrence_runs(member_windows: list[int]) -> list[tuple[int, int]]:
    """Maximal contiguous runs [a, b] of a sorted window-index list."""
    runs = []
    for idx in sorted(member_windows):
        if runs and idx == runs[-1][1] + 1:
            runs[-1] = (runs[-1][0], idx)
        else:
            runs.append((idx, idx))
    return runs


@dataclass
class GlitchCluster:
    cluster_id: int
    canonical_description: str
    category: str | None
    subtype: str
    member_windows: list[int]
    per_window_descriptions: dict[int, str] = field(default_factory=dict)

    @property
    def occurrences(self) -> list[tuple[int, int]]:
        return occurrence_runs(self.member_windows)


class Grounder:
    def __init__(self, gateway, config):
        self.gateway = gateway
        self.config = config

    def same_glitch(self, new_desc: str, cluster_descs: list[str]) -> bool:
        """Does the new description belong to the cluster? Parse failure means no."""
        user_text = render_prompt(
            "cluster_user",
            anomaly_description=new_desc,
            existing_descriptions="\n".join(f"- {d}" for d in cluster_descs),
        )
        try:
            parsed = self.gateway.call_parsed(
                "cluster_judge", load_prompt("cluster_system"), user_text, "yes_no"
            )
        except ParseFailureError:
            logger.warning("cluster judgement unparseable; preferring a new cluster")
            return False
        return parsed["judgement"] == "yes"

    def cluster_glitches(self, confirmed: list[VerifiedResult]) -> list[GlitchCluster]:
        """Greedy first-match clustering of confirmed windows in time order."""
        clusters: list[GlitchCluster] = []
        for result in sorted(confirmed, key=lambda r: r.window_index):
            desc = result.final_verdict.description
            placed = False
            for cluster in clusters:  # creation order, oldest first
                ordered_descs = [
                    cluster.per_window_descriptions[w]
                    for w in sorted(cluster.per_window_descriptions)
                ]
                if self.same_glitch(desc, ordered_descs):
                    cluster.member_windows = sorted(
                        set(cluster.member_windows) | {result.window_index}
                    )
                    cluster.per_window_descriptions[result.window_index] = desc
                    placed = True
                    break
            if not placed:
                clusters.append(
                    GlitchCluster(
                        cluster_id=len(clusters),
                        canonical_description=desc,
                        category=result.final_verdict.category,
                        subtype=result.final_verdict.subtype,
                        member_windows=[result.window_index],
                        per_window_descriptions={result.window_index: desc},
                    )
                )
        return clusters

    def _matches(self, cluster: GlitchCluster, image: StitchedImage, cache: dict[int, bool]) -> bool:
        idx = image.window_index
        if idx in cache:
            return cache[idx]
        user_text = render_prompt(
            "propagation_user",
            anomaly_description=cluster.canonical_description,
            window_index=idx,
        )
        try:
            parsed = self.gateway.call_parsed(
                "propagation_judge",
                load_prompt("propagation_system"),
                user_text,
                "yes_no",
                (encode_jpeg(image.pixels),),
            )
            answer = parsed["judgement"] == "yes"
        except ParseFailureError:
            logger.warning("propagation judgement unparseable at window %d; stopping", idx)
            answer = False
        cache[idx] = answer
        return answer

    def propagate(self, cluster: GlitchCluster, all_windows: list[StitchedImage]) -> GlitchCluster:
        """Extend each occurrence run outward until the first non-match.

        Only adds windows, never removes; runs that grow to touch merge via
        the member set. Judgements are cached per window so a boundary probed
        from two runs costs one model call.
        """
        members = set(cluster.member_windows)
        cache: dict[int, bool] = {}
        last = len(all_windows) - 1
        for a, b in cluster.occurrences:
            j = a - 1
            while j >= 0 and j not in members and self._matches(cluster, all_windows[j], cache):
                members.add(j)
                j -= 1
            j = b + 1
            while j <= last and j not in members and self._matches(cluster, all_windows[j], cache):
                members.add(j)
                j += 1
        cluster.member_windows = sorted(members)
        return cluster
