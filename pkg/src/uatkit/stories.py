"""Where user stories come from.

Three entry points produce the same :class:`StoryBundle` shape:

* ``fetch_issue`` — GET an issue from a tracker's REST API, with the summary,
  description and (optional) Gherkin field locations configured as dotted
  JSON paths so different trackers fit without code changes.
* ``load_local`` — read a fixture directory (``story.md`` plus an optional
  ``tests.feature``); the directory name is the issue key.
* ``parse_pr_description`` — pull an issue key and page URLs out of
  pull-request prose, for driving the pipeline from a PR hook.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from urllib.parse import urlparse

import requests

from .errors import UatkitError
from .gherkin import GherkinParseError, parse_feature
from .extract import iter_fenced_blocks
from .prompts import UserStory

ISSUE_KEY_RE = re.compile(r"[A-Z][A-Z0-9]+-[0-9]+")
_ISSUE_KEY_FULL_RE = re.compile(r"^[A-Z][A-Z0-9]+-[0-9]+$")
_ISSUE_LINE_RE = re.compile(r"^\s*Issue:\s*([A-Z][A-Z0-9]+-[0-9]+)\s*$")
_PAGES_LINE_RE = re.compile(r"^\s*Pages:\s*(.*)$")
_HEADING_RE = re.compile(r"^#{1,6}\s+(.+?)\s*$")


class StorySourceError(UatkitError):
    """A story source yielded unusable data."""


class IssueNotFoundError(StorySourceError):
    """The tracker has no issue under the requested key."""


class TrackerAuthError(StorySourceError):
    """The tracker rejected our credentials."""


class PrParseError(StorySourceError):
    """A PR description does not contain the required inputs."""


def is_issue_key(text: str) -> bool:
    return bool(_ISSUE_KEY_FULL_RE.match(text))


@dataclass
class StoryBundle:
    story: UserStory
    feature_text: str | None
    issue_key: str
    fetched_at: datetime

    def __post_init__(self) -> None:
        if not is_issue_key(self.issue_key):
            raise StorySourceError(
                f"{self.issue_key!r} is not a valid issue key "
                "(expected e.g. SHOP-101)")
        if self.feature_text is not None:
            try:
                parse_feature(self.feature_text)
            except GherkinParseError as exc:
                raise StorySourceError(
                    f"{self.issue_key}: bundled feature text does not parse: {exc}"
                ) from exc


@dataclass
class PrInputs:
    issue_key: str
    page_urls: tuple[str, ...]

    def __post_init__(self) -> None:
        if not is_issue_key(self.issue_key):
            raise PrParseError(f"{self.issue_key!r} is not a valid issue key")
        if not self.page_urls:
            raise PrParseError("at least one page URL is required")
        for url in self.page_urls:
            if not _is_absolute_http_url(url):
                raise PrParseError(f"{url!r} is not an absolute http(s) URL")


@dataclass
class TrackerConfig:
    """How to reach the tracker and where the fields live in its JSON.

    ``token_env`` names the environment variable holding the API token; with
    ``email_env`` also set, basic auth (email, token) is used, otherwise the
    token goes in a Bearer header.  Field locations are dotted paths into the
    issue JSON (e.g. ``fields.summary``).  ``gherkin_path``, when set, names
    a custom field carrying ready-made Gherkin; otherwise a fenced Gherkin
    block inside the description is used when present.
    """

    base_url: str
    issue_path: str = "/rest/api/2/issue/{key}"
    summary_path: str = "fields.summary"
    description_path: str = "fields.description"
    gherkin_path: str | None = None
    token_env: str = "TRACKER_TOKEN"
    email_env: str | None = None
    timeout: float = 30.0
    headers: dict[str, str] = field(default_factory=dict)


def _dotted_get(data, path: str):
    current = data
    for part in path.split("."):
        if not isinstance(current, dict) or part not in current:
            return None
        current = current[part]
    return current


def _is_absolute_http_url(url: str) -> bool:
    parsed = urlparse(url)
    return parsed.scheme in ("http", "https") and bool(parsed.netloc)


def _gherkin_from_description(description: str) -> str | None:
    """First fenced block tagged ``gherkin`` or starting with ``Feature:``."""
    for tag, code in iter_fenced_blocks(description):
        if (tag or "").lower() == "gherkin" or code.lstrip().startswith("Feature:"):
            return code
    return None


def fetch_issue(key: str, tracker: TrackerConfig,
                session: requests.Session | None = None) -> StoryBundle:
    """Fetch one issue and shape it into a :class:`StoryBundle`.

    The key is validated before any network traffic.  HTTP 404 maps to
    :class:`IssueNotFoundError`, 401/403 to :class:`TrackerAuthError`, other
    non-2xx statuses to :class:`StorySourceError`.
    """
    if not is_issue_key(key):
        raise StorySourceError(f"{key!r} is not a valid issue key")
    session = session or requests.Session()
    url = tracker.base_url.rstrip("/") + tracker.issue_path.format(key=key)
    headers = dict(tracker.headers)
    auth = None
    token = os.environ.get(tracker.token_env, "")
    if tracker.email_env:
        email = os.environ.get(tracker.email_env, "")
        if email and token:
            auth = (email, token)
    elif token:
        headers["Authorization"] = f"Bearer {token}"
    try:
        resp = session.get(url, headers=headers or None, auth=auth,
                           timeout=tracker.timeout)
    except requests.RequestException as exc:
        raise StorySourceError(f"tracker request for {key} failed: {exc}") from exc
    if resp.status_code == 404:
        raise IssueNotFoundError(f"issue {key} not found")
    if resp.status_code in (401, 403):
        raise TrackerAuthError(f"tracker rejected credentials (HTTP {resp.status_code})")
    if not 200 <= resp.status_code < 300:
        raise StorySourceError(f"tracker returned HTTP {resp.status_code} for {key}")
    try:
        data = resp.json()
    except ValueError as exc:
        raise StorySourceError(f"tracker returned non-JSON body for {key}") from exc

    summary = _dotted_get(data, tracker.summary_path)
    description = _dotted_get(data, tracker.description_path)
    if not summary or not str(summary).strip():
        raise StorySourceError(f"issue {key} has no summary at {tracker.summary_path}")
    if not description or not str(description).strip():
        raise StorySourceError(
            f"issue {key} has no description at {tracker.description_path}")

    feature_text: str | None = None
    if tracker.gherkin_path:
        value = _dotted_get(data, tracker.gherkin_path)
        if value and str(value).strip():
            feature_text = str(value)
    if feature_text is None:
        feature_text = _gherkin_from_description(str(description))

    story = UserStory(title=str(summary), description=str(description), source_key=key)
    return StoryBundle(story=story, feature_text=feature_text, issue_key=key,
                       fetched_at=datetime.now(timezone.utc))


def load_local(path: str | Path) -> StoryBundle:
    """Read a story fixture directory.

    Layout: ``<KEY>/story.md`` (first markdown heading = title, the rest =
    description) and optionally ``<KEY>/tests.feature`` with ready-made
    Gherkin.  The directory name is the issue key.
    """
    directory = Path(path)
    story_file = directory / "story.md"
    if not story_file.is_file():
        raise StorySourceError(f"no story.md in {directory}")
    text = story_file.read_text(encoding="utf-8")
    title: str | None = None
    body: list[str] = []
    for line in text.replace("\r\n", "\n").split("\n"):
        if title is None:
            m = _HEADING_RE.match(line)
            if m:
                title = m.group(1)
                continue
            if line.strip():
                raise StorySourceError(
                    f"{story_file}: expected a markdown heading with the story title")
            continue
        body.append(line)
    if title is None:
        raise StorySourceError(f"{story_file}: no title heading found")
    description = "\n".join(body).strip()
    if not description:
        raise StorySourceError(f"{story_file}: story has no description")

    feature_file = directory / "tests.feature"
    feature_text = (feature_file.read_text(encoding="utf-8")
                    if feature_file.is_file() else None)
    story = UserStory(title=title, description=description,
                      source_key=directory.name)
    return StoryBundle(story=story, feature_text=feature_text,
                       issue_key=directory.name,
                       fetched_at=datetime.now(timezone.utc))


def _urls_from_fragment(fragment: str) -> list[str] | None:
    """Split a line (or line remainder) into URLs.

    Returns None unless every comma/whitespace-separated token is an
    absolute http(s) URL — which is what distinguishes a URL line from
    surrounding prose.
    """
    tokens = [t for t in re.split(r"[\s,]+", fragment.strip()) if t]
    if not tokens:
        return None
    if all(_is_absolute_http_url(t) for t in tokens):
        return tokens
    return None


def parse_pr_description(text: str) -> PrInputs:
    """Extract ``Issue: <KEY>`` and the ``Pages:`` URL list from PR prose.

    The first matching ``Issue:`` line and the first ``Pages:`` marker win.
    URLs may follow ``Pages:`` on the same line (comma-separated) and/or on
    subsequent lines; lines that are not pure URL lists are ignored, so
    surrounding prose does not disturb the result.
    """
    lines = text.replace("\r\n", "\n").split("\n")
    issue_key: str | None = None
    urls: list[str] = []
    pages_seen = False
    for idx, line in enumerate(lines):
        if issue_key is None:
            m = _ISSUE_LINE_RE.match(line)
            if m:
                issue_key = m.group(1)
                continue
        if not pages_seen:
            m = _PAGES_LINE_RE.match(line)
            if m:
                pages_seen = True
                inline = _urls_from_fragment(m.group(1))
                if inline:
                    urls.extend(inline)
                for rest in lines[idx + 1:]:
                    from_line = _urls_from_fragment(rest)
                    if from_line:
                        urls.extend(from_line)
    if issue_key is None:
        raise PrParseError("no `Issue: <KEY>` line found in PR description")
    if not urls:
        raise PrParseError("no page URLs found after `Pages:` in PR description")
    return PrInputs(issue_key=issue_key, page_urls=tuple(urls))
