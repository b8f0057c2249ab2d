"""Parsing, serialization and linting for a pragmatic Gherkin subset.

The grammar covers what generated acceptance scenarios actually use: one
``Feature`` block, an optional ``Background``, plain ``Scenario`` blocks,
``Scenario Outline`` blocks with an ``Examples`` table, the five step
keywords (Given/When/Then/And/But) and ``#`` comments.  Tags (``@...``) and
``Rule:`` lines are tolerated and skipped.  Data tables and doc strings are
not part of the subset; such lines are folded into the feature description.

Parsing is line-oriented and total: any input yields either a
:class:`FeatureAst` or a :class:`GherkinParseError` carrying a 1-based line
number.  Serialization is canonical (feature at column 0, scenarios indented
one unit, steps two units), and ``parse_feature(serialize_feature(ast))``
reproduces ``ast`` up to source positions, which never participate in
equality.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import UatkitError

INDENT = "  "

_FEATURE_RE = re.compile(r"^Feature:\s*(.*)$")
_SCENARIO_RE = re.compile(r"^Scenario:\s*(.*)$")
_OUTLINE_RE = re.compile(r"^Scenario Outline:\s*(.*)$")
_BACKGROUND_RE = re.compile(r"^Background:\s*(.*)$")
_EXAMPLES_RE = re.compile(r"^Examples:\s*$")
_STEP_RE = re.compile(r"^(Given|When|Then|And|But)\s+(\S.*)$")
_IGNORED_RE = re.compile(r"^(@\S.*|Rule:.*)$")

_DEFAULT_BACKGROUND_TITLE = "Background"


class GherkinParseError(UatkitError):
    """Parse failure with a position.

    ``line`` is 1-based; ``code`` is a stable machine-readable identifier
    (``missing-feature-header``, ``step-before-scenario``,
    ``unterminated-examples``, ``examples-outside-outline``).
    """

    def __init__(self, code: str, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.code = code
        self.line = line
        self.message = message


class StepKeyword(Enum):
    GIVEN = "given"
    WHEN = "when"
    THEN = "then"
    AND = "and"
    BUT = "but"

    @property
    def display(self) -> str:
        return self.value.capitalize()


class ScenarioKind(Enum):
    SCENARIO = "scenario"
    SCENARIO_OUTLINE = "scenario_outline"


class Severity(Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass
class StepAst:
    keyword: StepKeyword
    text: str
    line: int = field(default=0, compare=False)


@dataclass
class ScenarioAst:
    title: str
    kind: ScenarioKind = ScenarioKind.SCENARIO
    steps: list[StepAst] = field(default_factory=list)
    examples: list[list[str]] | None = None
    line: int = field(default=0, compare=False)


@dataclass
class FeatureAst:
    name: str
    description: str | None = None
    background: ScenarioAst | None = None
    scenarios: list[ScenarioAst] = field(default_factory=list)
    source_span: tuple[int, int] = field(default=(0, 0), compare=False)
    # Line numbers of any Feature: headers beyond the first.  Kept out of
    # equality; they only feed the linter.
    extra_feature_lines: tuple[int, ...] = field(default=(), compare=False)


@dataclass
class LintFinding:
    severity: Severity
    code: str
    line: int
    message: str


@dataclass
class LintReport:
    findings: list[LintFinding] = field(default_factory=list)

    @property
    def has_errors(self) -> bool:
        return any(f.severity is Severity.ERROR for f in self.findings)

    @property
    def errors(self) -> list[LintFinding]:
        return [f for f in self.findings if f.severity is Severity.ERROR]

    @property
    def warnings(self) -> list[LintFinding]:
        return [f for f in self.findings if f.severity is Severity.WARNING]


def _is_comment(stripped: str) -> bool:
    return stripped.startswith("#")


def _is_table_row(stripped: str) -> bool:
    return stripped.startswith("|")


def _split_row(stripped: str) -> list[str]:
    inner = stripped.strip("|")
    return [cell.strip() for cell in inner.split("|")]


def parse_feature(text: str) -> FeatureAst:
    """Parse ``text`` into a :class:`FeatureAst`.

    Accepts LF or CRLF input.  Prose before the ``Feature:`` header is
    tolerated and dropped; prose after it that matches no construct becomes
    the feature description.  Raises :class:`GherkinParseError` when there is
    no ``Feature:`` header, when a step appears before any scenario, when an
    ``Examples`` table has no rows, or when ``Examples`` appears outside a
    Scenario Outline.
    """
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")

    feature: FeatureAst | None = None
    feature_line = 0
    extra_features: list[int] = []
    description: list[str] = []
    background: ScenarioAst | None = None
    scenarios: list[ScenarioAst] = []
    current: ScenarioAst | None = None
    current_is_background = False
    examples_open = False
    examples_line = 0
    last_content_line = 0

    def close_examples(at_line: int) -> None:
        nonlocal examples_open
        if not examples_open:
            return
        assert current is not None
        if not current.examples:
            raise GherkinParseError(
                "unterminated-examples", examples_line,
                "Examples: must be followed by at least one table row",
            )
        examples_open = False

    def close_scenario(at_line: int) -> None:
        nonlocal current, current_is_background, background
        close_examples(at_line)
        if current is None:
            return
        if current_is_background:
            background = current
        else:
            scenarios.append(current)
        current = None
        current_is_background = False

    for lineno, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        if _is_comment(stripped) or _IGNORED_RE.match(stripped):
            last_content_line = lineno
            continue

        m = _FEATURE_RE.match(stripped)
        if m:
            last_content_line = lineno
            if feature is None:
                feature = FeatureAst(name=m.group(1).strip())
                feature_line = lineno
            else:
                # Extra Feature headers are recorded for the linter and the
                # remaining content keeps feeding the same AST.
                extra_features.append(lineno)
                close_scenario(lineno)
            continue

        if feature is None:
            if (_SCENARIO_RE.match(stripped) or _OUTLINE_RE.match(stripped)
                    or _BACKGROUND_RE.match(stripped) or _STEP_RE.match(stripped)
                    or _EXAMPLES_RE.match(stripped)):
                raise GherkinParseError(
                    "missing-feature-header", lineno,
                    "expected a Feature: header before this line",
                )
            # Leading prose (e.g. model chatter) before the header is dropped.
            continue

        last_content_line = lineno

        if examples_open and _is_table_row(stripped):
            assert current is not None
            if current.examples is None:
                current.examples = []
            current.examples.append(_split_row(stripped))
            continue

        m = _SCENARIO_RE.match(stripped) or _OUTLINE_RE.match(stripped)
        if m:
            close_scenario(lineno)
            kind = (ScenarioKind.SCENARIO_OUTLINE
                    if stripped.startswith("Scenario Outline:") else ScenarioKind.SCENARIO)
            current = ScenarioAst(title=m.group(1).strip(), kind=kind, line=lineno)
            continue

        m = _BACKGROUND_RE.match(stripped)
        if m:
            close_scenario(lineno)
            title = m.group(1).strip() or _DEFAULT_BACKGROUND_TITLE
            current = ScenarioAst(title=title, line=lineno)
            current_is_background = True
            continue

        if _EXAMPLES_RE.match(stripped):
            if current is None or current.kind is not ScenarioKind.SCENARIO_OUTLINE:
                raise GherkinParseError(
                    "examples-outside-outline", lineno,
                    "Examples: is only valid inside a Scenario Outline",
                )
            close_examples(lineno)
            examples_open = True
            examples_line = lineno
            continue

        m = _STEP_RE.match(stripped)
        if m:
            if current is None:
                raise GherkinParseError(
                    "step-before-scenario", lineno,
                    "step line appears before any Scenario or Background",
                )
            close_examples(lineno)
            keyword = StepKeyword(m.group(1).lower())
            current.steps.append(StepAst(keyword=keyword, text=m.group(2).strip(), line=lineno))
            continue

        # Anything else is free text; it lands in the feature description.
        close_examples(lineno)
        description.append(stripped)

    if feature is None:
        raise GherkinParseError(
            "missing-feature-header", max(len(lines), 1),
            "no Feature: header found",
        )
    if examples_open:
        assert current is not None
        if not current.examples:
            raise GherkinParseError(
                "unterminated-examples", examples_line,
                "Examples: must be followed by at least one table row",
            )
    close_scenario(len(lines))

    feature.description = "\n".join(description) if description else None
    feature.background = background
    feature.scenarios = scenarios
    feature.source_span = (feature_line, max(last_content_line, feature_line))
    feature.extra_feature_lines = tuple(extra_features)
    return feature


def _serialize_block(out: list[str], block: ScenarioAst, header: str) -> None:
    out.append("")
    out.append(f"{INDENT}{header}")
    for step in block.steps:
        out.append(f"{INDENT * 2}{step.keyword.display} {step.text}")
    if block.examples is not None:
        out.append(f"{INDENT * 2}Examples:")
        for row in block.examples:
            out.append(f"{INDENT * 3}| " + " | ".join(row) + " |")


def serialize_feature(ast: FeatureAst) -> str:
    """Render ``ast`` in canonical form (LF line endings, trailing newline)."""
    out: list[str] = [f"Feature: {ast.name}"]
    if ast.description:
        for dline in ast.description.split("\n"):
            out.append(f"{INDENT}{dline}")
    if ast.background is not None:
        title = ast.background.title
        suffix = "" if title == _DEFAULT_BACKGROUND_TITLE else f" {title}"
        _serialize_block(out, ast.background, f"Background:{suffix}")
    for scenario in ast.scenarios:
        keyword = ("Scenario Outline" if scenario.kind is ScenarioKind.SCENARIO_OUTLINE
                   else "Scenario")
        _serialize_block(out, scenario, f"{keyword}: {scenario.title}")
    return "\n".join(out) + "\n"


def normalize_title(title: str) -> str:
    """Trim and collapse internal whitespace runs to single spaces."""
    return re.sub(r"\s+", " ", title).strip()


def scenario_titles(ast: FeatureAst) -> list[str]:
    """Scenario titles in document order, whitespace-normalized."""
    return [normalize_title(s.title) for s in ast.scenarios]


def lint_feature(ast: FeatureAst) -> LintReport:
    """Static checks on a parsed feature.

    Reported findings, sorted by line:

    * ``duplicate-title`` (warning) — a scenario title repeats an earlier one
      after whitespace normalization.
    * ``empty-scenario`` (error) — a scenario has no steps.
    * ``dangling-continuation`` (warning) — the first step of a scenario is
      And/But and there is no Background to continue from.
    * ``extra-feature`` (warning) — more than one ``Feature:`` header was
      present in the source.
    """
    findings: list[LintFinding] = []
    seen: dict[str, str] = {}
    for scenario in ast.scenarios:
        key = normalize_title(scenario.title).casefold()
        if key in seen:
            findings.append(LintFinding(
                Severity.WARNING, "duplicate-title", scenario.line,
                f"scenario title duplicates {seen[key]!r}",
            ))
        else:
            seen[key] = scenario.title
        if not scenario.steps:
            findings.append(LintFinding(
                Severity.ERROR, "empty-scenario", scenario.line,
                f"scenario {scenario.title!r} has no steps",
            ))
        elif (scenario.steps[0].keyword in (StepKeyword.AND, StepKeyword.BUT)
              and ast.background is None):
            findings.append(LintFinding(
                Severity.WARNING, "dangling-continuation", scenario.steps[0].line,
                "first step is And/But but the feature has no Background",
            ))
    for lineno in ast.extra_feature_lines:
        findings.append(LintFinding(
            Severity.WARNING, "extra-feature", lineno,
            "more than one Feature: header; only the first names the feature",
        ))
    findings.sort(key=lambda f: f.line)
    return LintReport(findings=findings)
