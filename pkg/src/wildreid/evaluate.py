"""Per-video identity decisions, video-level accuracy, and pairwise method
comparison with the exact (binomial) McNemar test under Bonferroni correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from typing import Mapping, Sequence


class EvaluationError(ValueError):
    pass


class DecisionRule(Enum):
    THRESHOLD_60 = "t60"
    THRESHOLD_80 = "t80"
    VOTE = "vote"


RULE_TAU = {DecisionRule.THRESHOLD_60: 0.6, DecisionRule.THRESHOLD_80: 0.8}


@dataclass(frozen=True)
class VideoDecision:
    video_id: str
    method: str
    rule: DecisionRule
    decided_label: str | None
    correct: bool
    true_label: str | None = None


def decide_threshold(frame_labels: Sequence[str], tau: float) -> str | None:
    """The majority label if its share of frames reaches ``tau``, else None.

    With tau > 0.5 the qualifying label is necessarily unique.
    """
    if not frame_labels:
        raise EvaluationError("decide_threshold needs at least one frame label")
    counts: dict[str, int] = {}
    for lab in frame_labels:
        counts[lab] = counts.get(lab, 0) + 1
    total = len(frame_labels)
    best = max(sorted(counts), key=lambda lab: counts[lab])
    if counts[best] / total >= tau:
        return best
    return None


def decide_vote(frame_labels: Sequence[str],
                frame_similarities: Sequence[float] | None = None) -> str:
    """Plurality label; ties break on the greater summed similarity across
    the tied labels, then lexicographically."""
    if not frame_labels:
        raise EvaluationError("decide_vote needs at least one frame label")
    sims = frame_similarities if frame_similarities is not None else [0.0] * len(frame_labels)
    if len(sims) != len(frame_labels):
        raise EvaluationError("labels and similarities differ in length")
    counts: dict[str, int] = {}
    sim_sum: dict[str, float] = {}
    for lab, sim in zip(frame_labels, sims):
        counts[lab] = counts.get(lab, 0) + 1
        sim_sum[lab] = sim_sum.get(lab, 0.0) + float(sim)
    top = max(counts.values())
    tied = [lab for lab, cnt in counts.items() if cnt == top]
    return min(tied, key=lambda lab: (-sim_sum[lab], lab))


def decide_video(video_id: str, method: str, rule: DecisionRule,
                 frame_labels: Sequence[str], frame_similarities: Sequence[float],
                 true_label: str) -> VideoDecision:
    if rule is DecisionRule.VOTE:
        decided = decide_vote(frame_labels, frame_similarities)
    else:
        decided = decide_threshold(frame_labels, RULE_TAU[rule])
    # An abstaining threshold decision counts as incorrect.
    correct = decided is not None and decided == true_label
    return VideoDecision(video_id=video_id, method=method, rule=rule,
                         decided_label=decided, correct=correct, true_label=true_label)


@dataclass(frozen=True)
class VideoAccuracy:
    overall: float
    per_label: dict[str, float]
    correct: int
    total: int


def video_accuracy(decisions: Sequence[VideoDecision]) -> VideoAccuracy:
    if not decisions:
        raise EvaluationError("video_accuracy needs at least one decision")
    if any(d.true_label is None for d in decisions):
        raise EvaluationError("video_accuracy requires true labels")
    correct_by: dict[str, int] = {}
    total_by: dict[str, int] = {}
    for d in decisions:
        total_by[d.true_label] = total_by.get(d.true_label, 0) + 1
        if d.correct:
            correct_by[d.true_label] = correct_by.get(d.true_label, 0) + 1
    correct = sum(correct_by.values())
    per_label = {lab: correct_by.get(lab, 0) / total_by[lab] for lab in sorted(total_by)}
    return VideoAccuracy(overall=correct / len(decisions), per_label=per_label,
                         correct=correct, total=len(decisions))


def mcnemar_exact(outcomes_a: Sequence[bool], outcomes_b: Sequence[bool]) -> float:
    """Exact two-sided McNemar p-value from the binomial distribution.

    With b = #(a right, b wrong) and c = #(a wrong, b right), n = b + c:
    p = min(1, 2 * sum_{i<=min(b,c)} C(n,i) / 2^n); p = 1 when n = 0.
    """
    if len(outcomes_a) != len(outcomes_b):
        raise EvaluationError(
            f"outcome lengths differ: {len(outcomes_a)} vs {len(outcomes_b)}")
    b = sum(1 for x, y in zip(outcomes_a, outcomes_b) if x and not y)
    c = sum(1 for x, y in zip(outcomes_a, outcomes_b) if not x and y)
    n = b + c
    if n == 0:
        return 1.0
    tail = sum(math.comb(n, i) for i in range(min(b, c) + 1))
    return min(1.0, 2 * tail / 2**n)


@dataclass(frozen=True)
class McNemarResult:
    method_a: str
    method_b: str
    n_discordant_ab: int | None  # a correct, b wrong; None when read back from a report
    n_discordant_ba: int | None  # a wrong, b correct
    p_value: float
    alpha_adjusted: float
    significant: bool


def pairwise_significance(methods: Sequence[str],
                          outcomes: Mapping[str, Mapping[str, bool]],
                          alpha: float = 0.05) -> list[McNemarResult]:
    """McNemar tests over every unordered method pair, Bonferroni-adjusted.

    ``outcomes[method]`` maps video_id to per-video correctness; all methods
    must cover the identical video set.
    """
    if len(methods) < 2:
        raise EvaluationError("need at least two methods to compare")
    video_sets = {m: frozenset(outcomes[m]) for m in methods}
    reference = video_sets[methods[0]]
    for m in methods:
        if video_sets[m] != reference:
            raise EvaluationError(f"method {m!r} evaluated over a different video set")
    videos = sorted(reference)

    pairs = list(combinations(methods, 2))
    alpha_adjusted = alpha / len(pairs)
    results = []
    for a, b in pairs:
        va = [outcomes[a][v] for v in videos]
        vb = [outcomes[b][v] for v in videos]
        n_ab = sum(1 for x, y in zip(va, vb) if x and not y)
        n_ba = sum(1 for x, y in zip(va, vb) if not x and y)
        p = mcnemar_exact(va, vb)
        results.append(McNemarResult(
            method_a=a, method_b=b, n_discordant_ab=n_ab, n_discordant_ba=n_ba,
            p_value=p, alpha_adjusted=alpha_adjusted,
            significant=p < alpha_adjusted))
    return results
