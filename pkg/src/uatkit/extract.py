"""Pulling code out of model responses and judging its structure.

A model response is expected to carry the script in a fenced markdown block;
``extract_fenced_code`` takes the first block and counts how many there were.
``validate_script_structure`` then runs a small lexer over the code — aware
of strings, template strings with ``${...}`` interpolation, and comments —
to check delimiter balance, string termination and the presence of a suite
wrapper (``describe``) containing at least one titled test case (``it``).
This is deliberately not a TypeScript parser: it answers "is this shaped
like a test suite?" cheaply and language-tolerantly, which is the level of
syntax feedback the pipeline needs before a human or a test runner sees the
code.

``check_scenario_mapping`` closes the loop with the Gherkin side: every
scenario should map to a test block (normalized title equality first, then
containment), and matched blocks should carry at least one comment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import UatkitError
from .gherkin import FeatureAst, normalize_title

_OPEN = "([{"
_CLOSE = ")]}"
_MATCH = {")": "(", "]": "[", "}": "{"}
_INTERP = "${"  # stack marker for template interpolation


class ExtractionError(UatkitError):
    """No usable code block in the response."""


@dataclass
class CodeBlock:
    code: str
    fence_language_tag: str | None
    fence_count_in_source: int


@dataclass
class StructureFinding:
    code: str
    line: int
    message: str


@dataclass
class StructureReport:
    valid: bool
    findings: list[StructureFinding] = field(default_factory=list)
    test_block_titles: list[str] = field(default_factory=list)
    comment_lines: int = 0
    # Comment-line count per test block, parallel to test_block_titles.
    # Feeds the per-block comment coverage in MappingReport.
    test_block_comment_lines: list[int] = field(default_factory=list)


@dataclass
class MappingReport:
    matched: list[tuple[str, str]] = field(default_factory=list)
    missing_scenarios: list[str] = field(default_factory=list)
    extra_tests: list[str] = field(default_factory=list)
    comment_coverage: float = 1.0


@dataclass(frozen=True)
class DialectProfile:
    """Names and tokens of the target test framework.

    The default profile describes Cypress/TypeScript suites: ``describe``
    blocks holding ``it`` cases, ``//`` and ``/* */`` comments, single/double
    quoted strings plus backtick template strings.
    """

    suite_keyword: str = "describe"
    test_keyword: str = "it"
    line_comment: str = "//"
    block_comment_open: str = "/*"
    block_comment_close: str = "*/"
    string_delims: tuple[str, ...] = ("'", '"')
    template_delim: str | None = "`"

    @classmethod
    def default(cls) -> "DialectProfile":
        return cls()

    @classmethod
    def from_dict(cls, data: dict) -> "DialectProfile":
        kwargs = dict(data)
        if "string_delims" in kwargs:
            kwargs["string_delims"] = tuple(kwargs["string_delims"])
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "DialectProfile":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    @classmethod
    def packaged(cls, name: str = "cypress_ts") -> "DialectProfile":
        ref = resources.files("uatkit").joinpath(f"profiles/{name}.json")
        return cls.from_dict(json.loads(ref.read_text(encoding="utf-8")))


def iter_fenced_blocks(text: str) -> list[tuple[str | None, str]]:
    """All triple-backtick fenced blocks as ``(language_tag, code)`` pairs.

    A fence is a line whose stripped form starts with three backticks.  An
    unclosed final block is tolerated and runs to the end of the text.
    """
    blocks: list[tuple[str | None, str]] = []
    in_block = False
    tag: str | None = None
    buf: list[str] = []
    for line in text.replace("\r\n", "\n").split("\n"):
        stripped = line.strip()
        if stripped.startswith("```"):
            if in_block:
                blocks.append((tag, "\n".join(buf)))
                in_block = False
            else:
                in_block = True
                tag = stripped[3:].strip() or None
                buf = []
        elif in_block:
            buf.append(line)
    if in_block:
        blocks.append((tag, "\n".join(buf)))
    return blocks


def extract_fenced_code(response_text: str) -> CodeBlock:
    """First fenced block of a response; errors when there is none."""
    blocks = iter_fenced_blocks(response_text)
    if not blocks:
        raise ExtractionError("no fenced code block in response")
    tag, code = blocks[0]
    return CodeBlock(code=code, fence_language_tag=tag,
                     fence_count_in_source=len(blocks))


class _Scanner:
    """One pass over script text, tracking just enough lexical state."""

    def __init__(self, code: str, dialect: DialectProfile):
        self.code = code.replace("\r\n", "\n")
        self.n = len(self.code)
        self.dialect = dialect
        self.i = 0
        self.line = 1
        self.findings: list[StructureFinding] = []
        self.comment_lines: set[int] = set()
        self.stack: list[tuple[str, int]] = []
        self.code_delims: list[tuple[int, str]] = []
        self.modes: list[str] = ["code"]
        self.template_starts: list[int] = []
        self.calls: list[dict] = []
        self._open_calls: list[dict] = []
        self._pending_call: dict | None = None
        self._awaiting_title: dict | None = None
        # Buffer for a template-string title candidate; cancelled by `${`.
        self._tpl_title: list[str] | None = None

    def _finding(self, code: str, line: int, message: str) -> None:
        self.findings.append(StructureFinding(code=code, line=line, message=message))

    # -- string / comment / template consumers --------------------------------

    def _consume_line_comment(self) -> None:
        self.comment_lines.add(self.line)
        end = self.code.find("\n", self.i)
        self.i = self.n if end == -1 else end

    def _consume_block_comment(self) -> None:
        close = self.dialect.block_comment_close
        start_line = self.line
        end = self.code.find(close, self.i + len(self.dialect.block_comment_open))
        if end == -1:
            span = self.code[self.i:]
            self.i = self.n
            self._finding("unterminated-comment", start_line, "block comment never closes")
        else:
            span = self.code[self.i:end + len(close)]
            self.i = end + len(close)
        for offset in range(span.count("\n") + 1):
            self.comment_lines.add(start_line + offset)
        self.line = start_line + span.count("\n")

    def _consume_string(self, quote: str) -> None:
        start_line = self.line
        self.i += 1
        value: list[str] = []
        while self.i < self.n:
            ch = self.code[self.i]
            if ch == "\\" and self.i + 1 < self.n:
                nxt = self.code[self.i + 1]
                value.append(nxt)
                if nxt == "\n":
                    self.line += 1
                self.i += 2
                continue
            if ch == quote:
                self.i += 1
                self._offer_title("".join(value))
                return
            if ch == "\n":
                self._finding("unterminated-string", start_line,
                              f"string opened with {quote} is not closed on its line")
                self._drop_title()
                return
            value.append(ch)
            self.i += 1
        self._finding("unterminated-string", start_line,
                      f"string opened with {quote} never closes")
        self._drop_title()

    # -- title bookkeeping -----------------------------------------------------

    def _offer_title(self, value: str) -> None:
        if self._awaiting_title is not None:
            self._awaiting_title["title"] = value
            self._awaiting_title = None

    def _drop_title(self) -> None:
        self._awaiting_title = None

    # -- call tracking ---------------------------------------------------------

    def _open_paren_hook(self) -> None:
        if self._pending_call is not None:
            call = self._pending_call
            call["depth"] = len(self.stack)
            call["inside_suite"] = any(c["kind"] == "suite" for c in self._open_calls)
            self._open_calls.append(call)
            self._awaiting_title = call
            self._pending_call = None
        else:
            self._drop_title()

    def _close_paren_hook(self) -> None:
        depth = len(self.stack) + 1
        for call in list(self._open_calls):
            if call["depth"] == depth:
                call["end_line"] = self.line
                self._open_calls.remove(call)
                self.calls.append(call)

    def _scan_identifier(self) -> None:
        start = self.i
        while self.i < self.n and (self.code[self.i].isalnum() or self.code[self.i] in "_$"):
            self.i += 1
        ident = self.code[start:self.i]
        preceded_by_dot = start > 0 and self.code[start - 1] == "."
        self._drop_title()
        if preceded_by_dot:
            return
        kind = None
        if ident == self.dialect.suite_keyword:
            kind = "suite"
        elif ident == self.dialect.test_keyword:
            kind = "test"
        if kind is None:
            self._pending_call = None
            return
        j = self.i
        while j < self.n and self.code[j] in " \t":
            j += 1
        if j < self.n and self.code[j] == "(":
            self._pending_call = {"kind": kind, "title": None,
                                  "start_line": self.line, "end_line": self.line}
        else:
            self._pending_call = None

    # -- main loop ---------------------------------------------------------------

    def scan(self) -> None:
        d = self.dialect
        while self.i < self.n:
            mode = self.modes[-1]
            ch = self.code[self.i]

            if mode == "template":
                if ch == "\\" and self.i + 1 < self.n:
                    if self.code[self.i + 1] == "\n":
                        self.line += 1
                    if self._tpl_title is not None:
                        self._tpl_title.append(self.code[self.i + 1])
                    self.i += 2
                elif ch == d.template_delim:
                    self.modes.pop()
                    self.template_starts.pop()
                    if self._tpl_title is not None:
                        self._offer_title("".join(self._tpl_title))
                        self._tpl_title = None
                    self.i += 1
                elif self.code.startswith(_INTERP, self.i):
                    self._tpl_title = None
                    self._drop_title()
                    self.stack.append((_INTERP, self.line))
                    self.modes.append("code")
                    self.i += 2
                elif ch == "\n":
                    self.line += 1
                    if self._tpl_title is not None:
                        self._tpl_title.append(ch)
                    self.i += 1
                else:
                    if self._tpl_title is not None:
                        self._tpl_title.append(ch)
                    self.i += 1
                continue

            if self.code.startswith(d.line_comment, self.i):
                self._consume_line_comment()
                continue
            if self.code.startswith(d.block_comment_open, self.i):
                self._consume_block_comment()
                continue
            if d.template_delim is not None and ch == d.template_delim:
                self.modes.append("template")
                self.template_starts.append(self.line)
                self._tpl_title = [] if self._awaiting_title is not None else None
                self.i += 1
                continue
            if ch in d.string_delims:
                self._consume_string(ch)
                continue
            if ch in _OPEN:
                self.code_delims.append((self.i, ch))
                self.stack.append((ch, self.line))
                if ch == "(":
                    self._open_paren_hook()
                else:
                    self._drop_title()
                self.i += 1
                continue
            if ch in _CLOSE:
                self.code_delims.append((self.i, ch))
                if ch == "}" and self.stack and self.stack[-1][0] == _INTERP:
                    self.stack.pop()
                    self.modes.pop()
                elif self.stack and self.stack[-1][0] == _MATCH[ch]:
                    self.stack.pop()
                    if ch == ")":
                        self._close_paren_hook()
                else:
                    self._finding("unbalanced-delimiter", self.line,
                                  f"unexpected {ch!r}")
                self._drop_title()
                self.i += 1
                continue
            if ch.isalpha() or ch in "_$":
                self._scan_identifier()
                continue
            if ch == "\n":
                self.line += 1
                self.i += 1
                continue
            if not ch.isspace() and ch != ",":
                self._drop_title()
            self.i += 1

        for symbol, line in self.stack:
            if symbol == _INTERP:
                self._finding("unbalanced-delimiter", line,
                              "template interpolation `${` never closes")
            else:
                self._finding("unbalanced-delimiter", line,
                              f"unclosed {symbol!r}")
        for start_line in self.template_starts:
            self._finding("unterminated-string", start_line,
                          "template string never closes")
        for call in self._open_calls:
            call["end_line"] = self.line
            self.calls.append(call)


def validate_script_structure(code: str,
                              dialect: DialectProfile | None = None) -> StructureReport:
    """Lexical structure check; ``valid`` means zero findings.

    Checks delimiter balance (parentheses, brackets, braces — template
    interpolations included), string termination, and the suite skeleton:
    at least one suite call containing at least one test case declared with
    a string title.  Comment lines are counted overall and per test block.
    """
    dialect = dialect or DialectProfile.default()
    scanner = _Scanner(code, dialect)
    scanner.scan()
    findings = list(scanner.findings)

    suites = [c for c in scanner.calls if c["kind"] == "suite"]
    tests = [c for c in scanner.calls
             if c["kind"] == "test" and c["title"] is not None and c["inside_suite"]]
    tests.sort(key=lambda c: c["start_line"])
    if not suites:
        findings.append(StructureFinding(
            "missing-suite", 1,
            f"no {dialect.suite_keyword}(...) suite found"))
    elif not tests:
        findings.append(StructureFinding(
            "missing-test-case", min(c["start_line"] for c in suites),
            f"suite has no {dialect.test_keyword}(...) case with a string title"))

    per_block = [
        sum(1 for cl in scanner.comment_lines
            if c["start_line"] <= cl <= c["end_line"])
        for c in tests
    ]
    findings.sort(key=lambda f: f.line)
    return StructureReport(
        valid=not findings,
        findings=findings,
        test_block_titles=[c["title"] for c in tests],
        comment_lines=len(scanner.comment_lines),
        test_block_comment_lines=per_block,
    )


def scan_code_delimiters(code: str,
                         dialect: DialectProfile | None = None) -> list[tuple[int, str]]:
    """Positions of brackets lexed in code position (not in strings/comments).

    Exposed for mutation testing: deleting any one of these characters from a
    structurally valid script must make it invalid.
    """
    scanner = _Scanner(code, dialect or DialectProfile.default())
    scanner.scan()
    return scanner.code_delims


def check_scenario_mapping(feature: FeatureAst,
                           report: StructureReport) -> MappingReport:
    """Match scenarios to test blocks by title and measure comment coverage.

    Matching is greedy and two-phase: exact normalized equality first, then
    substring containment in either direction.  Every scenario and every test
    title is accounted for exactly once across matched/missing/extra.
    ``comment_coverage`` is the share of matched test blocks carrying at
    least one comment line (1.0 when nothing matched).
    """
    scenarios = [(normalize_title(s.title).casefold(), s.title) for s in feature.scenarios]
    tests = [(normalize_title(t).casefold(), t, idx)
             for idx, t in enumerate(report.test_block_titles)]

    assigned: dict[int, int] = {}  # scenario index -> test index
    used_tests: set[int] = set()
    for s_idx, (s_key, _) in enumerate(scenarios):
        for t_key, _, t_idx in tests:
            if t_idx in used_tests:
                continue
            if s_key == t_key:
                assigned[s_idx] = t_idx
                used_tests.add(t_idx)
                break
    for s_idx, (s_key, _) in enumerate(scenarios):
        if s_idx in assigned:
            continue
        for t_key, _, t_idx in tests:
            if t_idx in used_tests:
                continue
            if s_key and t_key and (s_key in t_key or t_key in s_key):
                assigned[s_idx] = t_idx
                used_tests.add(t_idx)
                break

    matched = [(scenarios[s_idx][1], report.test_block_titles[assigned[s_idx]])
               for s_idx in sorted(assigned)]
    missing = [orig for s_idx, (_, orig) in enumerate(scenarios) if s_idx not in assigned]
    extra = [orig for _, orig, t_idx in tests if t_idx not in used_tests]
    if matched:
        with_comments = sum(
            1 for s_idx in sorted(assigned)
            if report.test_block_comment_lines[assigned[s_idx]] > 0)
        coverage = with_comments / len(matched)
    else:
        coverage = 1.0
    return MappingReport(matched=matched, missing_scenarios=missing,
                         extra_tests=extra, comment_coverage=coverage)
