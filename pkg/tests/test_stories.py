import pytest

from uatkit.gherkin import parse_feature
from uatkit.stories import (IssueNotFoundError, PrInputs, PrParseError,
                            StoryBundle, StorySourceError, TrackerAuthError,
                            TrackerConfig, fetch_issue, is_issue_key,
                            load_local, parse_pr_description)

from conftest import FIXTURES


def tracker_for(base_url: str, **overrides) -> TrackerConfig:
    return TrackerConfig(base_url=base_url, issue_path="/issue/{key}",
                         token_env="FIXTURE_TRACKER_TOKEN", **overrides)


# --- issue keys ---------------------------------------------------------------

@pytest.mark.parametrize("key,ok", [
    ("SHOP-101", True),
    ("AB2-9", True),
    ("X-1", False),          # prefix needs at least two characters
    ("shop-101", False),
    ("SHOP101", False),
    ("SHOP-101 ", False),
])
def test_is_issue_key(key, ok):
    assert is_issue_key(key) is ok


# --- local fixtures ---------------------------------------------------------------

def test_load_local_reads_title_and_description():
    bundle = load_local(FIXTURES / "stories" / "ALPHA-7")
    assert bundle.issue_key == "ALPHA-7"
    assert bundle.story.title == "Alphabet User Sign-Up"
    assert bundle.story.description.startswith("As an Alphabet App user,")
    assert bundle.feature_text is None


def test_load_local_picks_up_bundled_feature():
    bundle = load_local(FIXTURES / "stories" / "SHOP-101")
    assert bundle.story.title == "Accordion with texts on detail page"
    feature = parse_feature(bundle.feature_text)
    assert [s.title for s in feature.scenarios] == [
        "Display first section unfolded when customer opens the page",
        "Unfold and collapse sections via arrow",
    ]


def test_load_local_requires_story_md(tmp_path):
    (tmp_path / "DEMO-1").mkdir()
    with pytest.raises(StorySourceError, match="no story.md"):
        load_local(tmp_path / "DEMO-1")


def test_load_local_rejects_prose_before_the_title(tmp_path):
    d = tmp_path / "DEMO-1"
    d.mkdir()
    (d / "story.md").write_text("prose first\n# Title\nbody\n", encoding="utf-8")
    with pytest.raises(StorySourceError, match="heading"):
        load_local(d)


def test_load_local_rejects_title_only(tmp_path):
    d = tmp_path / "DEMO-1"
    d.mkdir()
    (d / "story.md").write_text("# Title only\n", encoding="utf-8")
    with pytest.raises(StorySourceError, match="no description"):
        load_local(d)


def test_load_local_rejects_bad_directory_name(tmp_path):
    d = tmp_path / "not-a-key"
    d.mkdir()
    (d / "story.md").write_text("# T\n\nbody\n", encoding="utf-8")
    with pytest.raises(StorySourceError, match="issue key"):
        load_local(d)


def test_bundle_rejects_unparsable_feature_text():
    from datetime import datetime, timezone
    from uatkit.prompts import UserStory
    with pytest.raises(StorySourceError, match="does not parse"):
        StoryBundle(story=UserStory("t", "d"),
                    feature_text="Scenario: headless\nGiven x\n",
                    issue_key="DEMO-1",
                    fetched_at=datetime.now(timezone.utc))


# --- tracker fetch -----------------------------------------------------------------

def test_fetch_plain_issue(fixture_server):
    bundle = fetch_issue("TRK-1", tracker_for(fixture_server))
    assert bundle.story.title == "Sort products on the listing page"
    assert "cheapest jacket" in bundle.story.description
    assert bundle.feature_text is None
    assert bundle.issue_key == "TRK-1"


def test_fetch_finds_gherkin_fenced_in_description(fixture_server):
    bundle = fetch_issue("TRK-2", tracker_for(fixture_server))
    feature = parse_feature(bundle.feature_text)
    assert feature.name == "Apply a voucher code"
    assert [s.title for s in feature.scenarios] == ["Apply a valid voucher"]


def test_fetch_reads_gherkin_from_a_custom_field(fixture_server):
    tracker = tracker_for(fixture_server,
                          gherkin_path="fields.customfield_10900")
    bundle = fetch_issue("TRK-3", tracker)
    feature = parse_feature(bundle.feature_text)
    assert feature.name == "Edit quantities in the cart"


def test_fetch_unknown_issue_is_not_found(fixture_server):
    with pytest.raises(IssueNotFoundError):
        fetch_issue("TRK-999", tracker_for(fixture_server))


def test_fetch_maps_401_to_auth_error(fixture_server):
    with pytest.raises(TrackerAuthError, match="401"):
        fetch_issue("AUTH-1", tracker_for(fixture_server))


def test_fetch_sends_bearer_token_from_env(fixture_server, monkeypatch):
    monkeypatch.setenv("FIXTURE_TRACKER_TOKEN", "token-123")
    bundle = fetch_issue("SECURE-1", tracker_for(fixture_server))
    assert bundle.story.title == "Sort products on the listing page"


def test_fetch_without_token_is_forbidden(fixture_server, monkeypatch):
    monkeypatch.delenv("FIXTURE_TRACKER_TOKEN", raising=False)
    with pytest.raises(TrackerAuthError, match="403"):
        fetch_issue("SECURE-1", tracker_for(fixture_server))


def test_email_env_switches_to_basic_auth(fixture_server, monkeypatch):
    # with an email configured the token must NOT travel as a Bearer header,
    # so the bearer-protected issue rejects the request
    monkeypatch.setenv("FIXTURE_TRACKER_TOKEN", "token-123")
    monkeypatch.setenv("FIXTURE_TRACKER_EMAIL", "qa@example.com")
    tracker = tracker_for(fixture_server, email_env="FIXTURE_TRACKER_EMAIL")
    with pytest.raises(TrackerAuthError):
        fetch_issue("SECURE-1", tracker)


def test_fetch_validates_key_before_any_request():
    with pytest.raises(StorySourceError, match="issue key"):
        fetch_issue("lowercase-1", tracker_for("http://127.0.0.1:9"))


def test_fetch_rejects_issue_without_description():
    class _Resp:
        status_code = 200

        def json(self):
            return {"fields": {"summary": "S"}}

    class _Session:
        def get(self, *args, **kwargs):
            return _Resp()

    with pytest.raises(StorySourceError, match="no description"):
        fetch_issue("TRK-1", tracker_for("http://stub"), session=_Session())


def test_fetch_wraps_connection_failures():
    tracker = tracker_for("http://127.0.0.1:9", timeout=0.2)
    with pytest.raises(StorySourceError, match="request for TRK-1 failed"):
        fetch_issue("TRK-1", tracker)


# --- PR descriptions ---------------------------------------------------------------

def test_pr_description_inline_pages():
    inputs = parse_pr_description(
        "Issue: SHOP-101\n"
        "Pages: https://shop.example/detail, https://shop.example/cart\n")
    assert inputs.issue_key == "SHOP-101"
    assert inputs.page_urls == ("https://shop.example/detail",
                                "https://shop.example/cart")


def test_pr_description_collects_following_url_lines():
    inputs = parse_pr_description(
        "Closes the accordion story.\n"
        "Issue: SHOP-101\n"
        "Pages:\n"
        "https://shop.example/detail\n"
        "Reviewed by the QA guild on Friday.\n"
        "https://shop.example/cart https://shop.example/checkout\n")
    assert inputs.page_urls == ("https://shop.example/detail",
                                "https://shop.example/cart",
                                "https://shop.example/checkout")


def test_pr_description_first_issue_line_wins():
    inputs = parse_pr_description(
        "Issue: AAA-1\nIssue: BBB-2\nPages: https://a.example/\n")
    assert inputs.issue_key == "AAA-1"


def test_pr_description_ignores_urls_embedded_in_prose():
    text = ("Issue: SHOP-101\n"
            "Pages:\n"
            "see https://shop.example/detail please\n")
    with pytest.raises(PrParseError, match="no page URLs"):
        parse_pr_description(text)


def test_pr_description_requires_issue_line():
    with pytest.raises(PrParseError, match="Issue"):
        parse_pr_description("Pages: https://a.example/\n")


def test_pr_description_mentions_of_keys_in_prose_do_not_count():
    with pytest.raises(PrParseError):
        parse_pr_description("This fixes SHOP-101.\nPages: https://a.example/\n")


def test_pr_inputs_reject_relative_urls():
    with pytest.raises(PrParseError, match="absolute"):
        PrInputs(issue_key="SHOP-101", page_urls=("/detail",))


def test_pr_inputs_require_pages():
    with pytest.raises(PrParseError, match="at least one page"):
        PrInputs(issue_key="SHOP-101", page_urls=())
