"""Metrics over a run ledger, plus report rendering.

``compute_metrics`` replays a ledger into per-case outcomes and aggregates:

* syntactic correctness — share of cases whose (latest) script passed the
  structure check;
* semantic relevance — share of cases judged correct as generated, and the
  same share after remediation (minor fixes and regenerations included);
* accessibility — share of cases whose matched test block carries at least
  one comment;
* token averages and Decimal-exact cost totals.

Percent figures are always recomputed from integer counts, and integer
percent rendering rounds half to even, so the same ledger can never show
two different numbers in two places.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path

from .errors import UatkitError
from .ledger import LedgerError, load_ledger
from .pipeline import CaseStateName, case_states_from_events

_STATE_ORDER = [s.value for s in CaseStateName]
_STATE_LABELS = {
    "generated": "awaiting verdict",
    "valid_as_generated": "valid as generated",
    "minor_fixed": "minor fixed",
    "regenerated_valid": "regenerated valid",
    "discarded": "discarded",
}

CSV_HEADER = ["metric", "value"]


class MetricsError(UatkitError):
    """The ledger cannot support the requested metric."""


@dataclass
class FeedbackRecord:
    generation_id: str
    helpful: bool
    comment: str | None = None
    timestamp: str | None = None


def feedback_rate(records: list[FeedbackRecord]) -> float:
    """Share of helpful responses; errors on an empty record list."""
    if not records:
        raise MetricsError("no feedback records to aggregate")
    return sum(1 for r in records if r.helpful) / len(records)


def render_percent(ratio: float) -> str:
    """Integer percent with half-to-even rounding, e.g. ``0.9538 → "95%"``."""
    percent = Decimal(str(ratio)) * 100
    return f"{percent.quantize(Decimal('1'), rounding=ROUND_HALF_EVEN)}%"


def load_feedback(path: str | Path) -> list[FeedbackRecord]:
    """Read feedback records from a ledger-style ``.jsonl`` file."""
    events = load_ledger(path)
    records = feedback_records_from_events(events)
    if not records:
        raise MetricsError(f"no feedback events in {path}")
    return records


def feedback_records_from_events(events: list[dict]) -> list[FeedbackRecord]:
    return [
        FeedbackRecord(generation_id=e.get("generation_id", ""),
                       helpful=bool(e["helpful"]),
                       comment=e.get("comment"),
                       timestamp=e.get("timestamp"))
        for e in events if e.get("event") == "feedback"
    ]


@dataclass
class MetricsReport:
    case_count: int
    syntactic_correctness: float
    semantic_relevance_initial: float
    semantic_relevance_after_remediation: float
    accessibility: float
    avg_input_tokens: float
    avg_output_tokens: float
    total_cost: Decimal
    avg_cost_per_story: Decimal
    currency: str
    distribution_counts: dict[str, int] = field(default_factory=dict)

    @property
    def distribution(self) -> dict[str, tuple[int, float]]:
        """State → (count, percent); percents derived from counts on demand."""
        total = sum(self.distribution_counts.values())
        return {
            state: (count, (count / total * 100.0) if total else 0.0)
            for state, count in self.distribution_counts.items()
        }


def compute_metrics(source) -> MetricsReport:
    """Aggregate a ledger (events list, ``.jsonl`` path, or run directory).

    Cases are identified by stable case ids, so a regenerated script updates
    its cases' structure/comment attributes instead of creating new cases.
    An empty ledger — or one without any script cases — is an error.
    """
    if isinstance(source, (str, Path)):
        events = load_ledger(source)
    else:
        events = list(source)
    if not events:
        raise MetricsError("ledger is empty")

    script_events = [e for e in events if e.get("event") == "script_generation"]
    scenario_events = [e for e in events if e.get("event") == "scenario_generation"]

    case_attrs: dict[str, dict] = {}
    for event in script_events:
        for case in event.get("cases", []):
            case_attrs[case["case_id"]] = {
                "structure_valid": bool(event.get("structure_valid")),
                "has_comment": bool(case.get("has_comment")),
            }
    if not case_attrs:
        raise MetricsError("ledger has no script cases to report on")

    states = case_states_from_events(events)
    total = len(case_attrs)
    counts = {value: 0 for value in _STATE_ORDER}
    for case_id in case_attrs:
        state = states.get(case_id)
        counts[state.state.value if state else "generated"] += 1

    initial = counts["valid_as_generated"]
    after = initial + counts["minor_fixed"] + counts["regenerated_valid"]

    input_tokens = [e["usage"]["input_tokens"] for e in script_events]
    output_tokens = [e["usage"]["output_tokens"] for e in script_events]
    currencies = {e.get("currency", "EUR") for e in script_events + scenario_events}
    if len(currencies) > 1:
        raise MetricsError(f"mixed currencies in ledger: {sorted(currencies)}")
    total_cost = sum((Decimal(e["cost"]) for e in script_events + scenario_events),
                     Decimal("0"))
    story_count = len({e["issue_key"] for e in script_events})
    script_cost = sum((Decimal(e["cost"]) for e in script_events), Decimal("0"))
    avg_cost = (script_cost / story_count).quantize(Decimal("0.0001")) \
        if story_count else Decimal("0")

    return MetricsReport(
        case_count=total,
        syntactic_correctness=sum(
            1 for a in case_attrs.values() if a["structure_valid"]) / total,
        semantic_relevance_initial=initial / total,
        semantic_relevance_after_remediation=after / total,
        accessibility=sum(1 for a in case_attrs.values() if a["has_comment"]) / total,
        avg_input_tokens=sum(input_tokens) / len(input_tokens) if input_tokens else 0.0,
        avg_output_tokens=sum(output_tokens) / len(output_tokens) if output_tokens else 0.0,
        total_cost=total_cost,
        avg_cost_per_story=avg_cost,
        currency=currencies.pop() if currencies else "EUR",
        distribution_counts={k: v for k, v in counts.items() if v},
    )


def report_dict(report: MetricsReport) -> dict:
    """Plain-dict form of a report, as served by the summary endpoint."""
    return {
        "case_count": report.case_count,
        "syntactic_correctness": report.syntactic_correctness,
        "semantic_relevance_initial": report.semantic_relevance_initial,
        "semantic_relevance_after_remediation": report.semantic_relevance_after_remediation,
        "accessibility": report.accessibility,
        "avg_input_tokens": report.avg_input_tokens,
        "avg_output_tokens": report.avg_output_tokens,
        "total_cost": str(report.total_cost),
        "avg_cost_per_story": str(report.avg_cost_per_story),
        "currency": report.currency,
        "distribution": {
            state: {"count": count, "percent": percent}
            for state, (count, percent) in report.distribution.items()
        },
    }


def report_from_json(text: str) -> MetricsReport:
    """Inverse of ``render_report(..., "json")``; percents are re-derived."""
    data = json.loads(text)
    return MetricsReport(
        case_count=data["case_count"],
        syntactic_correctness=data["syntactic_correctness"],
        semantic_relevance_initial=data["semantic_relevance_initial"],
        semantic_relevance_after_remediation=data["semantic_relevance_after_remediation"],
        accessibility=data["accessibility"],
        avg_input_tokens=data["avg_input_tokens"],
        avg_output_tokens=data["avg_output_tokens"],
        total_cost=Decimal(data["total_cost"]),
        avg_cost_per_story=Decimal(data["avg_cost_per_story"]),
        currency=data["currency"],
        distribution_counts={state: entry["count"]
                             for state, entry in data["distribution"].items()},
    )


def render_report(report: MetricsReport, fmt: str = "text") -> str:
    """Render a report as ``text``, ``json`` or ``csv``.

    The CSV form is long format with the fixed header ``metric,value``;
    distribution rows appear as ``distribution.<state>.count`` and
    ``distribution.<state>.percent``.
    """
    if fmt == "json":
        return json.dumps(report_dict(report), indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        data = report_dict(report)
        distribution = data.pop("distribution")
        for key, value in data.items():
            writer.writerow([key, value])
        for state in _STATE_ORDER:
            if state in distribution:
                writer.writerow([f"distribution.{state}.count",
                                 distribution[state]["count"]])
                writer.writerow([f"distribution.{state}.percent",
                                 distribution[state]["percent"]])
        return buf.getvalue()
    if fmt == "text":
        lines = [
            f"test cases: {report.case_count}",
            f"syntactic correctness: {render_percent(report.syntactic_correctness)}",
            "semantic relevance (as generated): "
            f"{render_percent(report.semantic_relevance_initial)}",
            "semantic relevance (after remediation): "
            f"{render_percent(report.semantic_relevance_after_remediation)}",
            f"accessibility: {render_percent(report.accessibility)}",
            "distribution:",
        ]
        total_cases = sum(report.distribution_counts.values())
        for state in _STATE_ORDER:
            if state in report.distribution_counts:
                count = report.distribution_counts[state]
                share = count / total_cases if total_cases else 0.0
                lines.append(f"  {_STATE_LABELS[state]}: {count} "
                             f"({render_percent(share)})")
        lines += [
            f"avg input tokens: {report.avg_input_tokens:g}",
            f"avg output tokens: {report.avg_output_tokens:g}",
            f"total cost: {report.total_cost} {report.currency}",
            f"avg cost per story: {report.avg_cost_per_story} {report.currency}",
        ]
        return "\n".join(lines) + "\n"
    raise MetricsError(f"unknown report format {fmt!r}")
