"""Open-loop planning metrics: horizon displacement, collision, latency.

Displacement and collision are reported at the 1 s / 2 s / 3 s horizons
(waypoint indices 2, 4, 6 of the 2 Hz trajectory) plus their mean.
Collision per sample is binary up to each horizon; dataset-level rates
average those binaries, so rates are monotone over horizons by
construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from . import textmetrics
from .scene import AgentTrack, Point, T_F, Trajectory

HORIZON_KEYS = ("1s", "2s", "3s")
#: 1-based waypoint index per horizon at 0.5 s per step.
HORIZON_STEPS = {"1s": 2, "2s": 4, "3s": 6}

#: Ego footprint (length, width) in meters used by collision evaluation;
#: the scenario schema carries agent extents but not the ego's.
EGO_EXTENT = (4.0, 1.8)


def _with_avg(values: dict[str, float]) -> dict[str, float]:
    out = dict(values)
    out["avg"] = sum(values[k] for k in HORIZON_KEYS) / len(HORIZON_KEYS)
    return out


@dataclass(frozen=True)
class PlanEvalRow:
    """One row of the displacement/collision table."""

    l2: dict[str, float]          # meters, keys 1s/2s/3s/avg
    collision: dict[str, float]   # percent, keys 1s/2s/3s/avg

    def validate(self) -> None:
        for name, group in (("l2", self.l2), ("collision", self.collision)):
            for key in (*HORIZON_KEYS, "avg"):
                if group[key] < 0:
                    raise ValueError(f"{name}[{key}] negative")
            mean = sum(group[k] for k in HORIZON_KEYS) / len(HORIZON_KEYS)
            if abs(group["avg"] - mean) > 1e-12:
                raise ValueError(f"{name}[avg] {group['avg']} != mean {mean}")


@dataclass(frozen=True)
class TextEvalRow:
    """One row of the explanation-quality table (0..100 except CIDEr)."""

    bleu: float
    meteor: float
    rouge_l: float
    cider: float
    gpt_score: float | None = None

    def validate(self) -> None:
        for name in ("bleu", "meteor", "rouge_l"):
            v = getattr(self, name)
            if not (0.0 <= v <= 100.0):
                raise ValueError(f"{name}={v} outside [0, 100]")
        if self.cider < 0:
            raise ValueError(f"cider={self.cider} negative")


#: Optional external judge: (candidate text, reference text) -> score in [1, 5].
JudgeHook = Callable[[str, str], float]


def evaluate_explanations(candidates: Sequence[str], references: Sequence[str],
                          judge: JudgeHook | None = None) -> TextEvalRow:
    """Score explanation texts against references.

    BLEU and CIDEr are corpus-level; METEOR and ROUGE-L are per-pair
    means. The judge hook, when registered, supplies the mean gpt_score;
    without one the field stays absent.
    """
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates vs {len(references)} references")
    if not candidates:
        raise ValueError("empty corpus")
    cand_tokens = [textmetrics.tokenize(c) for c in candidates]
    ref_tokens = [textmetrics.tokenize(r) for r in references]
    n = len(candidates)
    gpt_score = None
    if judge is not None:
        gpt_score = sum(judge(c, r) for c, r in zip(candidates, references)) / n
    row = TextEvalRow(
        bleu=textmetrics.bleu(cand_tokens, ref_tokens),
        meteor=sum(textmetrics.meteor(c, r)
                   for c, r in zip(cand_tokens, ref_tokens)) / n,
        rouge_l=sum(textmetrics.rouge_l(c, r)
                    for c, r in zip(cand_tokens, ref_tokens)) / n,
        cider=textmetrics.cider(cand_tokens, ref_tokens),
        gpt_score=gpt_score,
    )
    row.validate()
    return row


def l2_horizons(pred: Trajectory, gt: Trajectory) -> dict[str, float]:
    """Euclidean displacement at each horizon plus the mean, in meters."""
    if len(pred) != T_F or len(gt) != T_F:
        raise ValueError(f"trajectories must have {T_F} waypoints")
    out = {}
    for key, step in HORIZON_STEPS.items():
        (px, py), (gx, gy) = pred[step - 1], gt[step - 1]
        out[key] = math.hypot(px - gx, py - gy)
    return _with_avg(out)


@dataclass(frozen=True)
class OrientedBox:
    center: Point
    heading: float
    length: float
    width: float

    def corners(self) -> list[Point]:
        c, s = math.cos(self.heading), math.sin(self.heading)
        hl, hw = self.length / 2.0, self.width / 2.0
        cx, cy = self.center
        return [
            (cx + c * dx - s * dy, cy + s * dx + c * dy)
            for dx, dy in ((hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw))
        ]


def _axes(box: OrientedBox) -> list[Point]:
    c, s = math.cos(box.heading), math.sin(box.heading)
    return [(c, s), (-s, c)]


def separation_margin(a: OrientedBox, b: OrientedBox) -> float:
    """Signed gap from the separating-axis test over the 4 edge normals.

    Positive: the boxes are separated by at least this much along some
    axis. Negative: they overlap, with magnitude equal to the minimum
    translation distance. Zero: touching.
    """
    corners_a = a.corners()
    corners_b = b.corners()
    margin = -math.inf
    for ax, ay in _axes(a) + _axes(b):
        proj_a = [ax * x + ay * y for x, y in corners_a]
        proj_b = [ax * x + ay * y for x, y in corners_b]
        gap = max(min(proj_b) - max(proj_a), min(proj_a) - max(proj_b))
        margin = max(margin, gap)
    return margin


def boxes_overlap(a: OrientedBox, b: OrientedBox) -> bool:
    """True iff the rotated rectangles intersect; touching counts."""
    return separation_margin(a, b) <= 0.0


def ego_headings(pred: Trajectory) -> list[float]:
    """Per-step ego heading from consecutive waypoint segments.

    The segment before waypoint 1 starts at the origin. Segments shorter
    than 1e-6 m reuse the previous heading; the initial heading is 0.
    """
    headings = []
    prev_point = (0.0, 0.0)
    prev_heading = 0.0
    for point in pred:
        dx, dy = point[0] - prev_point[0], point[1] - prev_point[1]
        if math.hypot(dx, dy) >= 1e-6:
            prev_heading = math.atan2(dy, dx)
        headings.append(prev_heading)
        prev_point = point
    return headings


def collision_horizons(
    pred: Trajectory,
    ego_extent: tuple[float, float],
    agents: Sequence[AgentTrack],
) -> dict[str, float]:
    """Binary collision (0 or 100) up to each horizon for one sample.

    At step k the ego box sits on pred[k] with segment-derived heading;
    each agent box sits on its ground-truth future point with its fixed
    current heading.
    """
    if len(pred) != T_F:
        raise ValueError(f"predicted trajectory must have {T_F} waypoints")
    for agent in agents:
        if len(agent.future) != T_F:
            raise ValueError(f"agent {agent.id} future has {len(agent.future)} points")
    headings = ego_headings(pred)
    collided_at_step = []
    for k in range(T_F):
        ego_box = OrientedBox(pred[k], headings[k], ego_extent[0], ego_extent[1])
        hit = any(
            boxes_overlap(
                ego_box,
                OrientedBox(agent.future[k], agent.heading,
                            agent.extent[0], agent.extent[1]),
            )
            for agent in agents
        )
        collided_at_step.append(hit)
    out = {}
    for key, step in HORIZON_STEPS.items():
        out[key] = 100.0 if any(collided_at_step[:step]) else 0.0
    return _with_avg(out)


def mean_rows(rows: Iterable[dict[str, float]]) -> dict[str, float]:
    """Elementwise mean of per-sample horizon dicts."""
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to average")
    keys = (*HORIZON_KEYS, "avg")
    return {k: sum(r[k] for r in rows) / len(rows) for k in keys}


def latency_stats(samples: Sequence[float]) -> dict[str, float]:
    """Mean and nearest-rank p50/p95 of a list of durations in seconds."""
    if not samples:
        raise ValueError("empty sample list")
    ordered = sorted(samples)
    n = len(ordered)

    def nearest_rank(p: float) -> float:
        rank = math.ceil(p / 100.0 * n)
        return ordered[max(rank, 1) - 1]

    return {
        "mean": sum(ordered) / n,
        "p50": nearest_rank(50.0),
        "p95": nearest_rank(95.0),
    }
