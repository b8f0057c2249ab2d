"""Fetching and distilling web pages before they enter a prompt.

Raw pages are mostly noise for a language model: style sheets and scripts
dominate the byte count while the selectors a test needs live in the markup.
``purge`` removes ``<script>`` and ``<style>`` spans (tags and content) with
a tolerant, quote-aware span scanner — deliberately not a tree builder —
so malformed HTML passes through untouched apart from the removed spans.

Purging runs to a fixpoint, which makes it idempotent even on adversarial
input where removing one span would expose another.  It never adds bytes, so
the output is always at most as large as the input.
"""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import requests

from .errors import UatkitError

_TESTID_ATTR_RE = re.compile(
    r"""data-test-?id\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s"'<>`/]+))""",
    re.IGNORECASE,
)
_COMMENT_RE = re.compile(r"<!--.*?(?:-->|$)", re.DOTALL)
_STYLE_ATTR_RE = re.compile(
    r"""\sstyle\s*=\s*(?:"[^"]*"|'[^']*'|[^\s>]+)""",
    re.IGNORECASE,
)


class PageFetchError(UatkitError):
    """A page could not be fetched or is unusable as page HTML.

    ``url`` is always set; ``status`` carries the HTTP status code when the
    failure was an HTTP error response.
    """

    def __init__(self, url: str, message: str, status: int | None = None):
        super().__init__(f"{url}: {message}")
        self.url = url
        self.status = status


@dataclass
class RawPage:
    url: str
    html: str
    fetched_at: datetime
    byte_len: int


@dataclass
class PurgedPage:
    url: str
    html: str
    removed_elements: dict[str, int] = field(default_factory=dict)
    testids: list[str] = field(default_factory=list)
    byte_len: int = 0


@dataclass
class FetchConfig:
    timeout: float = 30.0
    headers: dict[str, str] = field(default_factory=dict)
    cookies: dict[str, str] = field(default_factory=dict)


def _byte_len(text: str) -> int:
    return len(text.encode("utf-8"))


def _is_tag_name_boundary(lower: str, end: int) -> bool:
    # "<script" must be followed by whitespace, ">", "/" or EOF to count as
    # a tag open; this keeps "<scripted>" and friends intact.
    if end >= len(lower):
        return True
    return lower[end] in " \t\n\r\f>/"


def _find_open_tag_end(html: str, start: int) -> tuple[int, bool]:
    """Advance from the tag name to the closing ``>`` of the opening tag.

    Returns ``(index_after_gt, self_closing)``.  Quoted attribute values may
    contain ``>`` and are skipped.  An unterminated tag runs to EOF.
    """
    i = start
    n = len(html)
    quote: str | None = None
    last_nonspace = ""
    while i < n:
        ch = html[i]
        if quote is not None:
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == ">":
            return i + 1, last_nonspace == "/"
        if not ch.isspace():
            last_nonspace = ch
        i += 1
    return n, False


def _remove_spans_once(html: str) -> tuple[str, Counter]:
    lower = html.lower()
    removed: Counter = Counter()
    out: list[str] = []
    i = 0
    n = len(html)
    while i < n:
        candidates = []
        for tag in ("script", "style"):
            pos = lower.find("<" + tag, i)
            while pos != -1 and not _is_tag_name_boundary(lower, pos + 1 + len(tag)):
                pos = lower.find("<" + tag, pos + 1)
            if pos != -1:
                candidates.append((pos, tag))
        if not candidates:
            break
        pos, tag = min(candidates)
        out.append(html[i:pos])
        open_end, self_closing = _find_open_tag_end(html, pos + 1 + len(tag))
        if self_closing or open_end >= n:
            span_end = open_end
        else:
            close = lower.find("</" + tag, open_end)
            if close == -1:
                # No closing tag: a browser would swallow the rest of the
                # document as script/style content, so we drop it too.
                span_end = n
            else:
                gt = lower.find(">", close)
                span_end = n if gt == -1 else gt + 1
        removed[tag] += 1
        i = span_end
    out.append(html[i:])
    return "".join(out), removed


def _iter_tag_spans(html: str):
    """Yield ``(start, end)`` spans of tag-like regions, quote-aware."""
    i = 0
    n = len(html)
    while i < n:
        lt = html.find("<", i)
        if lt == -1 or lt + 1 >= n:
            return
        nxt = html[lt + 1]
        if not (nxt.isalpha() or nxt in "/!"):
            i = lt + 1
            continue
        end, _ = _find_open_tag_end(html, lt + 1)
        yield lt, end
        i = end


def extract_testids(html: str) -> list[str]:
    """Distinct ``data-testid`` / ``data-test-id`` values, first-occurrence order.

    Attribute values are only collected inside tag-like regions, so mentions
    in plain text do not count.
    """
    seen: list[str] = []
    for start, end in _iter_tag_spans(html):
        for m in _TESTID_ATTR_RE.finditer(html, start, end):
            value = next(g for g in m.groups() if g is not None)
            if value not in seen:
                seen.append(value)
    return seen


def purge(html: str, *, url: str = "", strip_comments: bool = False,
          strip_inline_style_attrs: bool = False) -> PurgedPage:
    """Remove script/style spans (and optionally comments and ``style=`` attrs).

    The result carries the distilled HTML, per-tag removal counts, and the
    testid inventory of the distilled HTML.  Purging is idempotent and output
    size never exceeds input size.
    """
    removed: Counter = Counter()
    current = html
    while True:
        current, step = _remove_spans_once(current)
        if not step:
            break
        removed.update(step)
    if strip_comments:
        current, n = _COMMENT_RE.subn("", current)
        if n:
            removed["comment"] += n
    if strip_inline_style_attrs:
        pieces: list[str] = []
        last = 0
        for start, end in _iter_tag_spans(current):
            pieces.append(current[last:start])
            pieces.append(_STYLE_ATTR_RE.sub("", current[start:end]))
            last = end
        pieces.append(current[last:])
        current = "".join(pieces)
    return PurgedPage(
        url=url,
        html=current,
        removed_elements=dict(removed),
        testids=extract_testids(current),
        byte_len=_byte_len(current),
    )


def purge_page(page: RawPage, *, strip_comments: bool = False,
               strip_inline_style_attrs: bool = False) -> PurgedPage:
    """``purge`` applied to a fetched page, carrying its URL along."""
    return purge(page.html, url=page.url, strip_comments=strip_comments,
                 strip_inline_style_attrs=strip_inline_style_attrs)


def testid_inventory(page: PurgedPage) -> list[str]:
    return list(page.testids)


def _content_type_is_text(content_type: str) -> bool:
    main = content_type.split(";", 1)[0].strip().lower()
    return main.startswith("text/") or "html" in main or "xml" in main or main == ""


class LivePageFetcher:
    """Fetch pages over HTTP with a shared :class:`FetchConfig`."""

    def __init__(self, config: FetchConfig | None = None,
                 session: requests.Session | None = None):
        self.config = config or FetchConfig()
        self._session = session or requests.Session()

    def fetch(self, url: str) -> RawPage:
        cfg = self.config
        try:
            resp = self._session.get(url, timeout=cfg.timeout,
                                     headers=cfg.headers or None,
                                     cookies=cfg.cookies or None)
        except requests.Timeout as exc:
            raise PageFetchError(url, f"timed out after {cfg.timeout}s") from exc
        except requests.RequestException as exc:
            raise PageFetchError(url, f"request failed: {exc}") from exc
        if not 200 <= resp.status_code < 300:
            raise PageFetchError(url, f"HTTP {resp.status_code}", status=resp.status_code)
        content_type = resp.headers.get("Content-Type", "")
        if not _content_type_is_text(content_type):
            raise PageFetchError(url, f"not a text response (Content-Type: {content_type})")
        html = resp.text
        return RawPage(url=url, html=html,
                       fetched_at=datetime.now(timezone.utc),
                       byte_len=_byte_len(html))


def fixture_filename(url: str) -> str:
    """File name a fixture page is stored under: first 16 hex chars of the
    SHA-256 of the URL, plus ``.html``."""
    return hashlib.sha256(url.encode("utf-8")).hexdigest()[:16] + ".html"


class FixturePageFetcher:
    """Offline fetcher reading ``.html`` files from a directory keyed by URL hash."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def store(self, url: str, html: str) -> Path:
        """Write ``html`` under the fixture name for ``url`` and return the path."""
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.directory / fixture_filename(url)
        path.write_text(html, encoding="utf-8")
        return path

    def fetch(self, url: str) -> RawPage:
        path = self.directory / fixture_filename(url)
        if not path.is_file():
            raise PageFetchError(url, f"no fixture page at {path}")
        html = path.read_text(encoding="utf-8")
        return RawPage(url=url, html=html,
                       fetched_at=datetime.now(timezone.utc),
                       byte_len=_byte_len(html))


def fetch_page(url: str, config: FetchConfig | None = None) -> RawPage:
    """One-shot live fetch; see :class:`LivePageFetcher` for reuse."""
    return LivePageFetcher(config).fetch(url)
