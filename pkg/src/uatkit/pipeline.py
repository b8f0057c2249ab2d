"""End-to-end orchestration of the two generation stages.

``Pipeline`` wires the prompt builder, the model gateway, a page fetcher and
the run ledger together:

* ``generate_scenarios`` — story → stage-1 prompt → completion → Gherkin
  (fenced block when present, whole response otherwise) → parse + lint.
* ``generate_script`` — story bundle + page URLs → fetch/purge → stage-2
  prompt → completion → code extraction → structure check → scenario↔test
  mapping.
* ``regenerate_with_context`` — the remediation loop: same stage-2 prompt
  plus an "Additional context:" block, linked to the generation it replaces.

Every generated artifact keeps its raw model response, and every action is
appended to the run ledger, so any verdict or metric can be traced back to
the bytes the model actually produced.

Review outcomes are tracked per test case by a small state machine: a case
starts ``generated`` and ends in exactly one of ``valid_as_generated``,
``minor_fixed``, ``regenerated_valid`` or ``discarded``.  A ``pass`` verdict
lands in ``regenerated_valid`` rather than ``valid_as_generated`` precisely
when the case history contains a regeneration event.  Terminal states accept
no further verdicts.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal
from enum import Enum
from typing import Callable, Protocol

from .errors import UatkitError
from .extract import (CodeBlock, DialectProfile, ExtractionError, MappingReport,
                      StructureReport, check_scenario_mapping, extract_fenced_code,
                      iter_fenced_blocks, validate_script_structure)
from .gateway import CostRates, GatewayError, ModelGateway, Usage, cost_of
from .gherkin import (FeatureAst, GherkinParseError, LintReport, lint_feature,
                      normalize_title, parse_feature)
from .ledger import RunLedger
from .pages import PageFetchError, PurgedPage, purge_page
from .prompts import PromptBuilder, UserStory
from .stories import StoryBundle


class PipelineError(UatkitError):
    """A stage failed; ``stage`` tells which one, ``raw_response`` (when set)
    preserves the model output that could not be processed."""

    def __init__(self, stage: str, message: str, raw_response: str | None = None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.raw_response = raw_response


class MissingFeatureError(UatkitError):
    """Stage 2 was asked to run without Gherkin scenarios."""


class IllegalTransition(UatkitError):
    """A verdict or regeneration was applied to a terminal case."""


class UnknownCaseError(UatkitError):
    """No such case id in the run ledger."""


class Verdict(Enum):
    PASS = "pass"
    MINOR_ERROR = "minor_error"
    LACK_OF_CONTEXT = "lack_of_context"
    COMPLEX_ERROR = "complex_error"


class CaseStateName(Enum):
    GENERATED = "generated"
    VALID_AS_GENERATED = "valid_as_generated"
    MINOR_FIXED = "minor_fixed"
    REGENERATED_VALID = "regenerated_valid"
    DISCARDED = "discarded"


TERMINAL_STATES = frozenset({
    CaseStateName.VALID_AS_GENERATED,
    CaseStateName.MINOR_FIXED,
    CaseStateName.REGENERATED_VALID,
    CaseStateName.DISCARDED,
})


@dataclass
class CaseEvent:
    kind: str  # "verdict" | "regeneration"
    verdict: Verdict | None
    detail: str
    at: str | None = None


@dataclass
class CaseState:
    case_id: str
    state: CaseStateName = CaseStateName.GENERATED
    history: list[CaseEvent] = field(default_factory=list)

    @property
    def is_terminal(self) -> bool:
        return self.state in TERMINAL_STATES

    @property
    def regeneration_count(self) -> int:
        return sum(1 for e in self.history if e.kind == "regeneration")


def record_verdict(case: CaseState, verdict: Verdict, detail: str = "",
                   at: str | None = None) -> CaseState:
    """Apply a review verdict to a case and return it.

    ``minor_error`` requires a non-empty ``detail`` (the sub-one-line fix the
    reviewer applied); the note is stored, the script itself is not patched.
    ``lack_of_context`` keeps the case in ``generated`` awaiting regeneration.
    """
    if case.is_terminal:
        raise IllegalTransition(
            f"case {case.case_id} is already {case.state.value}; no further verdicts")
    if verdict is Verdict.MINOR_ERROR and not detail.strip():
        raise IllegalTransition(
            "minor_error requires a fix note describing the (≤1 line) change")
    case.history.append(CaseEvent(kind="verdict", verdict=verdict,
                                  detail=detail, at=at))
    if verdict is Verdict.PASS:
        case.state = (CaseStateName.REGENERATED_VALID
                      if case.regeneration_count > 0
                      else CaseStateName.VALID_AS_GENERATED)
    elif verdict is Verdict.MINOR_ERROR:
        case.state = CaseStateName.MINOR_FIXED
    elif verdict is Verdict.COMPLEX_ERROR:
        case.state = CaseStateName.DISCARDED
    # LACK_OF_CONTEXT: state stays GENERATED; the history entry marks the case
    # as awaiting regeneration.
    return case


def record_regeneration(case: CaseState, detail: str = "",
                        at: str | None = None) -> CaseState:
    """Mark that the case's script was regenerated with extra context."""
    if case.is_terminal:
        raise IllegalTransition(
            f"case {case.case_id} is already {case.state.value}; cannot regenerate")
    case.history.append(CaseEvent(kind="regeneration", verdict=None,
                                  detail=detail, at=at))
    return case


def case_slug(scenario_title: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", normalize_title(scenario_title).casefold())
    slug = slug.strip("-")[:60]
    return slug or "scenario"


def make_case_id(issue_key: str, scenario_title: str) -> str:
    return f"{issue_key}:{case_slug(scenario_title)}"


@dataclass
class CaseRecord:
    case_id: str
    scenario_title: str
    test_title: str | None
    has_comment: bool


@dataclass
class ScenarioResult:
    story: UserStory
    feature: FeatureAst
    feature_text: str
    raw_response: str
    lint: LintReport
    usage: Usage
    cost: Decimal
    generation_id: str


@dataclass
class ScriptInputs:
    bundle: StoryBundle
    page_urls: tuple[str, ...]
    pages: list[PurgedPage]
    extra_context: str | None


@dataclass
class ScriptResult:
    inputs: ScriptInputs
    code: CodeBlock
    raw_response: str
    structure: StructureReport
    mapping: MappingReport
    cases: list[CaseRecord]
    usage: Usage
    cost: Decimal
    generation_id: str
    regenerated_from: str | None = None


class PageFetcher(Protocol):
    def fetch(self, url: str):  # pragma: no cover - structural typing only
        ...


def _default_clock() -> datetime:
    return datetime.now(timezone.utc)


class Pipeline:
    """Glue between prompts, gateway, pages and the run ledger."""

    def __init__(self, *, gateway: ModelGateway, prompts: PromptBuilder,
                 page_fetcher: PageFetcher | None, ledger: RunLedger,
                 rates: CostRates, dialect: DialectProfile | None = None,
                 clock: Callable[[], datetime] = _default_clock):
        self.gateway = gateway
        self.prompts = prompts
        self.page_fetcher = page_fetcher
        self.ledger = ledger
        self.rates = rates
        self.dialect = dialect or DialectProfile.default()
        self.clock = clock

    # -- helpers ---------------------------------------------------------------

    def _now(self) -> str:
        return self.clock().isoformat()

    def _generation_id(self, stage: str, system: str, user: str, ts: str) -> str:
        payload = f"{stage}\x1f{system}\x1f{user}\x1f{ts}"
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    # -- stage 1 -----------------------------------------------------------------

    def generate_scenarios(self, story: UserStory) -> ScenarioResult:
        """Story → Gherkin feature, parsed and linted, with cost attached."""
        bundle = self.prompts.build_scenario_prompt(story)
        try:
            response = self.gateway.complete(bundle)
        except GatewayError as exc:
            raise PipelineError("scenarios", f"completion failed: {exc}") from exc
        blocks = iter_fenced_blocks(response.text)
        feature_text = blocks[0][1] if blocks else response.text
        try:
            feature = parse_feature(feature_text)
        except GherkinParseError as exc:
            raise PipelineError("scenarios", f"response is not parsable Gherkin: {exc}",
                                raw_response=response.text) from exc
        lint = lint_feature(feature)
        ts = self._now()
        generation_id = self._generation_id("scenarios", bundle.system, bundle.user, ts)
        cost = cost_of(response.usage, self.rates)
        self.ledger.append({
            "event": "scenario_generation",
            "generation_id": generation_id,
            "timestamp": ts,
            "story": {"title": story.title, "description": story.description,
                      "source_key": story.source_key},
            "feature_text": feature_text,
            "lint_errors": len(lint.errors),
            "lint_warnings": len(lint.warnings),
            "usage": {"input_tokens": response.usage.input_tokens,
                      "output_tokens": response.usage.output_tokens},
            "cost": str(cost),
            "currency": self.rates.currency,
            "raw_response": response.text,
        })
        return ScenarioResult(story=story, feature=feature, feature_text=feature_text,
                              raw_response=response.text, lint=lint,
                              usage=response.usage, cost=cost,
                              generation_id=generation_id)

    # -- stage 2 -----------------------------------------------------------------

    def _fetch_pages(self, page_urls: tuple[str, ...]) -> list[PurgedPage]:
        if self.page_fetcher is None:
            raise PipelineError("script", "no page fetcher configured")
        pages: list[PurgedPage] = []
        for url in page_urls:
            try:
                raw = self.page_fetcher.fetch(url)
            except PageFetchError as exc:
                raise PipelineError("script", f"page fetch failed for {url}: {exc}") from exc
            pages.append(purge_page(raw))
        return pages

    def generate_script(self, bundle: StoryBundle, page_urls: list[str] | tuple[str, ...],
                        extra_context: str | None = None) -> ScriptResult:
        """Story bundle + pages → validated, scenario-mapped test script."""
        return self._run_script_stage(bundle, tuple(page_urls), extra_context, None)

    def _run_script_stage(self, bundle: StoryBundle, page_urls: tuple[str, ...],
                          extra_context: str | None,
                          regenerated_from: str | None) -> ScriptResult:
        if bundle.feature_text is None:
            raise MissingFeatureError(
                f"{bundle.issue_key}: no Gherkin scenarios available; "
                "generate or supply them before requesting a script")
        if not page_urls:
            raise PipelineError("script", "at least one page URL is required")
        feature = parse_feature(bundle.feature_text)
        pages = self._fetch_pages(page_urls)
        prompt = self.prompts.build_script_prompt(bundle.story, feature, pages,
                                                  extra_context=extra_context)
        try:
            response = self.gateway.complete(prompt)
        except GatewayError as exc:
            raise PipelineError("script", f"completion failed: {exc}") from exc
        try:
            code = extract_fenced_code(response.text)
        except ExtractionError as exc:
            raise PipelineError("script", str(exc), raw_response=response.text) from exc
        structure = validate_script_structure(code.code, self.dialect)
        mapping = check_scenario_mapping(feature, structure)

        matched_by_scenario = dict(mapping.matched)
        title_to_idx = {normalize_title(t).casefold(): i
                        for i, t in enumerate(structure.test_block_titles)}
        cases: list[CaseRecord] = []
        for scenario in feature.scenarios:
            test_title = matched_by_scenario.get(scenario.title)
            has_comment = False
            if test_title is not None:
                idx = title_to_idx.get(normalize_title(test_title).casefold())
                if idx is not None:
                    has_comment = structure.test_block_comment_lines[idx] > 0
            cases.append(CaseRecord(
                case_id=make_case_id(bundle.issue_key, scenario.title),
                scenario_title=scenario.title,
                test_title=test_title,
                has_comment=has_comment,
            ))

        ts = self._now()
        generation_id = self._generation_id("script", prompt.system, prompt.user, ts)
        cost = cost_of(response.usage, self.rates)
        self.ledger.append({
            "event": "script_generation",
            "generation_id": generation_id,
            "timestamp": ts,
            "issue_key": bundle.issue_key,
            "story": {"title": bundle.story.title,
                      "description": bundle.story.description,
                      "source_key": bundle.story.source_key},
            "feature_text": bundle.feature_text,
            "page_urls": list(page_urls),
            "extra_context": extra_context,
            "regenerated_from": regenerated_from,
            "structure_valid": structure.valid,
            "finding_count": len(structure.findings),
            "test_block_titles": structure.test_block_titles,
            "mapping": {
                "matched": [list(pair) for pair in mapping.matched],
                "missing_scenarios": mapping.missing_scenarios,
                "extra_tests": mapping.extra_tests,
                "comment_coverage": mapping.comment_coverage,
            },
            "cases": [{"case_id": c.case_id, "scenario_title": c.scenario_title,
                       "test_title": c.test_title, "has_comment": c.has_comment}
                      for c in cases],
            "usage": {"input_tokens": response.usage.input_tokens,
                      "output_tokens": response.usage.output_tokens},
            "cost": str(cost),
            "currency": self.rates.currency,
            "code": code.code,
            "raw_response": response.text,
        })
        result = ScriptResult(
            inputs=ScriptInputs(bundle=bundle, page_urls=page_urls, pages=pages,
                                extra_context=extra_context),
            code=code, raw_response=response.text, structure=structure,
            mapping=mapping, cases=cases, usage=response.usage, cost=cost,
            generation_id=generation_id, regenerated_from=regenerated_from,
        )
        if regenerated_from is not None:
            states = self.case_states()
            affected = [c.case_id for c in cases
                        if c.case_id not in states or not states[c.case_id].is_terminal]
            self.ledger.append({
                "event": "regeneration",
                "timestamp": ts,
                "from_generation_id": regenerated_from,
                "to_generation_id": generation_id,
                "issue_key": bundle.issue_key,
                "case_ids": affected,
                "extra_context": extra_context,
            })
        return result

    def regenerate_with_context(self, previous: ScriptResult,
                                extra_context: str) -> ScriptResult:
        """Re-run stage 2 with additional context appended to the prompt.

        Context from earlier regenerations is kept; repeated regeneration
        stacks the blocks.  The new result links back to ``previous`` via
        ``regenerated_from``.
        """
        if not extra_context.strip():
            raise PipelineError("script", "extra context must not be empty")
        combined = extra_context
        if previous.inputs.extra_context:
            combined = f"{previous.inputs.extra_context}\n\n{extra_context}"
        return self._run_script_stage(previous.inputs.bundle,
                                      previous.inputs.page_urls,
                                      combined, previous.generation_id)

    def regenerate_by_id(self, generation_id: str, extra_context: str) -> ScriptResult:
        """Regenerate a script recorded in this run's ledger."""
        if not extra_context.strip():
            raise PipelineError("script", "extra context must not be empty")
        event = None
        for e in self.ledger.events():
            if e.get("event") == "script_generation" and e.get("generation_id") == generation_id:
                event = e
        if event is None:
            raise UnknownCaseError(f"no script generation {generation_id} in run ledger")
        story = UserStory(title=event["story"]["title"],
                          description=event["story"]["description"],
                          source_key=event["story"].get("source_key"))
        bundle = StoryBundle(story=story, feature_text=event["feature_text"],
                             issue_key=event["issue_key"],
                             fetched_at=datetime.now(timezone.utc))
        combined = extra_context
        if event.get("extra_context"):
            combined = f"{event['extra_context']}\n\n{extra_context}"
        return self._run_script_stage(bundle, tuple(event["page_urls"]),
                                      combined, generation_id)

    # -- verdicts ------------------------------------------------------------------

    def case_states(self) -> dict[str, CaseState]:
        return case_states_from_events(self.ledger.events())

    def record_case_verdict(self, case_id: str, verdict: Verdict,
                            detail: str = "") -> CaseState:
        """Apply a verdict to a ledger-tracked case and append the event."""
        states = self.case_states()
        if case_id not in states:
            raise UnknownCaseError(f"no case {case_id} in run ledger")
        ts = self._now()
        state = record_verdict(states[case_id], verdict, detail, at=ts)
        self.ledger.append({
            "event": "verdict",
            "timestamp": ts,
            "case_id": case_id,
            "verdict": verdict.value,
            "detail": detail,
            "state": state.state.value,
        })
        return state


def case_states_from_events(events: list[dict]) -> dict[str, CaseState]:
    """Replay ledger events into per-case states.

    The ledger is trusted but verified: an event sequence that the state
    machine would never produce raises :class:`IllegalTransition`.
    """
    states: dict[str, CaseState] = {}
    for event in events:
        kind = event.get("event")
        if kind == "script_generation":
            for case in event.get("cases", []):
                states.setdefault(case["case_id"], CaseState(case_id=case["case_id"]))
        elif kind == "regeneration":
            for case_id in event.get("case_ids", []):
                state = states.setdefault(case_id, CaseState(case_id=case_id))
                record_regeneration(state, detail=event.get("extra_context") or "",
                                    at=event.get("timestamp"))
        elif kind == "verdict":
            case_id = event["case_id"]
            if case_id not in states:
                raise UnknownCaseError(
                    f"verdict for unknown case {case_id}; ledger is incomplete")
            record_verdict(states[case_id], Verdict(event["verdict"]),
                           event.get("detail", ""), at=event.get("timestamp"))
    return states
