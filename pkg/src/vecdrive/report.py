"""Aligned plain-text tables and JSON emission for evaluation results.

Column layouts mirror the standard open-loop reporting conventions:
displacement/collision per horizon with averages, explanation quality
(BLEU / METEOR / ROUGE-L / CIDEr and optional GPT-Score), planning
accuracy, and per-format latency.
"""

from __future__ import annotations

from .planmetrics import HORIZON_KEYS, PlanEvalRow, TextEvalRow


def _format_table(header: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in header]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = []
    lines.append("  ".join(h.ljust(widths[i]) for i, h in enumerate(header)).rstrip())
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i])
                               for i, cell in enumerate(row)).rstrip())
    return "\n".join(lines) + "\n"


def render_plan_table(rows: dict[str, PlanEvalRow]) -> str:
    header = ["Method",
              "L2 1s (m)", "L2 2s (m)", "L2 3s (m)", "L2 Avg (m)",
              "Col 1s (%)", "Col 2s (%)", "Col 3s (%)", "Col Avg (%)"]
    body = []
    for name, row in rows.items():
        body.append([name]
                    + [f"{row.l2[k]:.2f}" for k in (*HORIZON_KEYS, "avg")]
                    + [f"{row.collision[k]:.2f}" for k in (*HORIZON_KEYS, "avg")])
    return _format_table(header, body)


def render_text_table(rows: dict[str, TextEvalRow]) -> str:
    with_judge = any(row.gpt_score is not None for row in rows.values())
    header = ["Method", "BLEU", "METEOR", "ROUGE-L", "CIDEr"]
    if with_judge:
        header.append("GPT-Score")
    body = []
    for name, row in rows.items():
        cells = [name, f"{row.bleu:.2f}", f"{row.meteor:.2f}",
                 f"{row.rouge_l:.2f}", f"{row.cider:.2f}"]
        if with_judge:
            cells.append("-" if row.gpt_score is None else f"{row.gpt_score:.2f}")
        body.append(cells)
    return _format_table(header, body)


def render_actions_table(rows: dict[str, float]) -> str:
    header = ["Method", "Accuracy (%)"]
    body = [[name, f"{acc:.2f}"] for name, acc in rows.items()]
    return _format_table(header, body)


def render_confusion(confusion: dict[str, dict[str, int]]) -> str:
    labels = sorted(confusion)
    header = ["Label \\ Decided"] + labels
    body = []
    for label in labels:
        body.append([label] + [str(confusion[label].get(d, 0)) for d in labels])
    return _format_table(header, body)


def render_latency_table(rows: dict[str, dict[str, float]]) -> str:
    header = ["Format", "Mean (s)", "p50 (s)", "p95 (s)"]
    body = [
        [name, f"{s['mean']:.3f}", f"{s['p50']:.3f}", f"{s['p95']:.3f}"]
        for name, s in rows.items()
    ]
    return _format_table(header, body)


def plan_row_to_dict(row: PlanEvalRow) -> dict:
    return {"l2": dict(row.l2), "collision": dict(row.collision)}


def plan_row_from_dict(obj: dict) -> PlanEvalRow:
    row = PlanEvalRow(l2=dict(obj["l2"]), collision=dict(obj["collision"]))
    row.validate()
    return row


def text_row_to_dict(row: TextEvalRow) -> dict:
    out = {"bleu": row.bleu, "meteor": row.meteor,
           "rouge_l": row.rouge_l, "cider": row.cider}
    if row.gpt_score is not None:
        out["gpt_score"] = row.gpt_score
    return out


def text_row_from_dict(obj: dict) -> TextEvalRow:
    row = TextEvalRow(
        bleu=obj["bleu"], meteor=obj["meteor"], rouge_l=obj["rouge_l"],
        cider=obj["cider"], gpt_score=obj.get("gpt_score"),
    )
    row.validate()
    return row
