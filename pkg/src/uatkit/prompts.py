"""Prompt assembly for the two generation stages.

Stage 1 turns a user story (title + description) into Gherkin scenarios.
Stage 2 turns the story, its scenarios and the distilled HTML of the pages
under test into a runnable test script.

Templates live as plain text files with ``{{placeholder}}`` markers so prompt
wording can be iterated without touching code.  Assembly is deterministic:
the same inputs always produce byte-identical bundles.  Token counts are
estimated as ``ceil(utf-8 bytes / 4)`` unless a real tokenizer callable is
supplied.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Callable

from .errors import UatkitError
from .gherkin import FeatureAst, serialize_feature
from .pages import PurgedPage

EXTRA_CONTEXT_LABEL = "Additional context:"

TEMPLATE_NAMES = (
    "scenarios.system.txt",
    "scenarios.user.txt",
    "script.system.txt",
    "script.user.txt",
)

_PLACEHOLDER_RE = re.compile(r"\{\{([a-z_]+)\}\}")

_DEFAULT_GOOD_PRACTICES = (
    "You generate the test to be as complete as possible for the scenario.",
    "You use the data-test-id to locate the element if you need to interact with it.",
    "Keep tests independent, so they can run in any order.",
    "Use Cypress built-in assertions.",
)


class PromptError(UatkitError):
    """Invalid prompt inputs or a broken template."""


class Stage(Enum):
    SCENARIOS = "scenarios"
    SCRIPT = "script"


@dataclass
class UserStory:
    title: str
    description: str
    source_key: str | None = None

    def __post_init__(self) -> None:
        if not self.title.strip():
            raise PromptError("user story title must not be empty")
        if not self.description.strip():
            raise PromptError("user story description must not be empty")


@dataclass
class PromptBundle:
    system: str
    user: str
    stage: Stage
    token_estimate: int


@dataclass
class ProductContext:
    """Product-specific knowledge injected into the stage-2 system prompt.

    ``context_text`` describes the application under test,
    ``custom_commands_text`` lists pre-existing test helpers, and
    ``good_practices`` are the rules the generated script must follow.  The
    defaults are usable placeholders meant to be replaced per product.
    """

    context_text: str = "No product context provided."
    custom_commands_text: str = "// No custom commands provided."
    good_practices: tuple[str, ...] = field(default=_DEFAULT_GOOD_PRACTICES)

    @classmethod
    def load(cls, path: str | Path) -> "ProductContext":
        """Read a JSON file with optional keys ``context``,
        ``custom_commands`` and ``good_practices``."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        kwargs = {}
        if "context" in data:
            kwargs["context_text"] = data["context"]
        if "custom_commands" in data:
            kwargs["custom_commands_text"] = data["custom_commands"]
        if "good_practices" in data:
            kwargs["good_practices"] = tuple(data["good_practices"])
        return cls(**kwargs)


def estimate_tokens(text: str, tokenizer: Callable[[str], int] | None = None) -> int:
    """Estimate the token count of ``text``.

    Uses the supplied tokenizer when given, otherwise the byte heuristic
    ``ceil(len(utf-8 bytes) / 4)``.  Empty text estimates to zero.
    """
    if tokenizer is not None:
        return tokenizer(text)
    byte_len = len(text.encode("utf-8"))
    return -(-byte_len // 4)


def render_template(template: str, values: dict[str, str]) -> str:
    """Substitute ``{{name}}`` markers; unknown markers are an error.

    Substitution happens in a single pass over the template, so placeholder
    syntax inside interpolated values is left alone.
    """

    def repl(match: re.Match) -> str:
        name = match.group(1)
        if name not in values:
            raise PromptError(f"template references unknown placeholder {{{{{name}}}}}")
        return values[name]

    return _PLACEHOLDER_RE.sub(repl, template)


class TemplateStore:
    """Loads the four stage templates from a directory.

    The directory must contain ``scenarios.system.txt``,
    ``scenarios.user.txt``, ``script.system.txt`` and ``script.user.txt``.
    When no directory is given the templates packaged with uatkit are used.
    """

    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory is not None else None
        self._cache: dict[str, str] = {}

    def get(self, name: str) -> str:
        if name not in TEMPLATE_NAMES:
            raise PromptError(f"unknown template {name!r}")
        if name not in self._cache:
            if self.directory is not None:
                path = self.directory / name
                if not path.is_file():
                    raise PromptError(f"template file missing: {path}")
                text = path.read_text(encoding="utf-8")
            else:
                ref = resources.files("uatkit").joinpath("templates/prompts").joinpath(name)
                text = ref.read_text(encoding="utf-8")
            self._cache[name] = text
        return self._cache[name]


class PromptBuilder:
    """Assembles prompt bundles for both stages."""

    def __init__(self, templates: TemplateStore | None = None,
                 product_context: ProductContext | None = None,
                 tokenizer: Callable[[str], int] | None = None):
        self.templates = templates or TemplateStore()
        self.product_context = product_context or ProductContext()
        self.tokenizer = tokenizer

    def _bundle(self, system: str, user: str, stage: Stage) -> PromptBundle:
        estimate = (estimate_tokens(system, self.tokenizer)
                    + estimate_tokens(user, self.tokenizer))
        return PromptBundle(system=system, user=user, stage=stage,
                            token_estimate=estimate)

    def build_scenario_prompt(self, story: UserStory) -> PromptBundle:
        """Stage-1 bundle from a user story."""
        system = self.templates.get("scenarios.system.txt")
        user = render_template(self.templates.get("scenarios.user.txt"), {
            "title": story.title,
            "description": story.description,
        })
        return self._bundle(system, user, Stage.SCENARIOS)

    def build_script_prompt(self, story: UserStory, feature: FeatureAst,
                            pages: list[PurgedPage],
                            extra_context: str | None = None) -> PromptBundle:
        """Stage-2 bundle: story, serialized scenarios, labeled page HTML.

        ``extra_context``, when given, is appended at the very end of the
        user text as an "Additional context:" block — the channel used to
        re-generate a script with information the first attempt lacked.
        """
        if not feature.scenarios:
            raise PromptError("feature has no scenarios to write tests for")
        if not pages:
            raise PromptError("at least one page is required to build a script prompt")
        system = render_template(self.templates.get("script.system.txt"), {
            "product_context": self.product_context.context_text,
            "custom_commands": self.product_context.custom_commands_text,
            "good_practices": "\n".join(
                f"- {rule}" for rule in self.product_context.good_practices),
        })
        pages_text = "\n\n".join(f"Page: {p.url}\n{p.html}" for p in pages)
        user = render_template(self.templates.get("script.user.txt"), {
            "title": story.title,
            "description": story.description,
            "gherkin": serialize_feature(feature).rstrip("\n"),
            "pages": pages_text,
        })
        if extra_context is not None and extra_context.strip():
            user = f"{user}\n\n{EXTRA_CONTEXT_LABEL}\n{extra_context}"
        return self._bundle(system, user, Stage.SCRIPT)
