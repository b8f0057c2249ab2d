import json

import pytest

from uatkit.gherkin import parse_feature
from uatkit.pages import PurgedPage
from uatkit.prompts import (EXTRA_CONTEXT_LABEL, TEMPLATE_NAMES, ProductContext,
                            PromptBuilder, PromptError, Stage, TemplateStore,
                            UserStory, estimate_tokens, render_template)

STORY = UserStory(title="Accordion with texts on detail page",
                  description="As a customer, I want detail sections.")
FEATURE = parse_feature(
    "Feature: Accordion\n\nScenario: Open a section\nGiven a detail page\n")
PAGE = PurgedPage(url="https://shop.example/p/1", html="<main>x</main>",
                  byte_len=14)


def _page(url: str, html: str) -> PurgedPage:
    return PurgedPage(url=url, html=html, byte_len=len(html.encode("utf-8")))


# --- token estimation ---------------------------------------------------------

def test_estimate_rounds_bytes_up():
    assert estimate_tokens("") == 0
    assert estimate_tokens("abcd") == 1
    assert estimate_tokens("abcde") == 2
    assert estimate_tokens("ä") == 1  # two UTF-8 bytes


def test_estimate_prefers_injected_tokenizer():
    assert estimate_tokens("whatever", tokenizer=lambda s: 42) == 42


def test_bundle_estimate_sums_system_and_user():
    builder = PromptBuilder()
    bundle = builder.build_scenario_prompt(STORY)
    assert bundle.token_estimate == (estimate_tokens(bundle.system)
                                     + estimate_tokens(bundle.user))


# --- templates -----------------------------------------------------------------

def test_render_template_substitutes_markers():
    assert render_template("a {{x}} b {{y}}", {"x": "1", "y": "2"}) == "a 1 b 2"


def test_render_template_unknown_marker_is_an_error():
    with pytest.raises(PromptError, match="unknown placeholder"):
        render_template("hello {{nope}}", {})


def test_render_template_is_single_pass():
    # A value containing placeholder syntax must not be re-expanded.
    assert render_template("{{x}}", {"x": "{{y}}"}) == "{{y}}"


def test_packaged_templates_are_complete():
    store = TemplateStore()
    for name in TEMPLATE_NAMES:
        assert store.get(name).strip()


def test_template_store_rejects_unknown_names():
    with pytest.raises(PromptError):
        TemplateStore().get("script.assistant.txt")


def test_template_store_reads_directory_and_reports_missing(tmp_path):
    (tmp_path / "scenarios.system.txt").write_text("custom sys", encoding="utf-8")
    store = TemplateStore(tmp_path)
    assert store.get("scenarios.system.txt") == "custom sys"
    with pytest.raises(PromptError, match="missing"):
        store.get("scenarios.user.txt")


# --- stories -------------------------------------------------------------------

def test_user_story_rejects_blank_fields():
    with pytest.raises(PromptError):
        UserStory(title="  ", description="d")
    with pytest.raises(PromptError):
        UserStory(title="t", description="\n")


# --- stage 1 -------------------------------------------------------------------

def test_scenario_prompt_embeds_title_and_description():
    bundle = PromptBuilder().build_scenario_prompt(STORY)
    assert bundle.stage is Stage.SCENARIOS
    assert STORY.title in bundle.user
    assert STORY.description in bundle.user
    assert "Gherkin" in bundle.system


def test_scenario_prompt_is_deterministic():
    a = PromptBuilder().build_scenario_prompt(STORY)
    b = PromptBuilder().build_scenario_prompt(STORY)
    assert (a.system, a.user) == (b.system, b.user)


# --- stage 2 -------------------------------------------------------------------

def test_script_prompt_embeds_story_gherkin_and_pages():
    bundle = PromptBuilder().build_script_prompt(STORY, FEATURE, [PAGE])
    assert bundle.stage is Stage.SCRIPT
    assert "Scenario: Open a section" in bundle.user
    assert f"Page: {PAGE.url}" in bundle.user
    assert PAGE.html in bundle.user
    assert EXTRA_CONTEXT_LABEL not in bundle.user


def test_script_prompt_lists_every_page_in_order():
    pages = [_page("https://a.example/1", "<p>one</p>"),
             _page("https://b.example/2", "<p>two</p>")]
    user = PromptBuilder().build_script_prompt(STORY, FEATURE, pages).user
    assert user.index("Page: https://a.example/1") < user.index(
        "Page: https://b.example/2")


def test_script_prompt_appends_extra_context_block_last():
    bundle = PromptBuilder().build_script_prompt(
        STORY, FEATURE, [PAGE], extra_context="The arrow has its own testid.")
    assert bundle.user.endswith(
        f"{EXTRA_CONTEXT_LABEL}\nThe arrow has its own testid.")


def test_blank_extra_context_is_ignored():
    plain = PromptBuilder().build_script_prompt(STORY, FEATURE, [PAGE])
    padded = PromptBuilder().build_script_prompt(STORY, FEATURE, [PAGE],
                                                 extra_context="   ")
    assert padded.user == plain.user


def test_script_prompt_requires_scenarios_and_pages():
    empty = parse_feature("Feature: F\n")
    with pytest.raises(PromptError, match="no scenarios"):
        PromptBuilder().build_script_prompt(STORY, empty, [PAGE])
    with pytest.raises(PromptError, match="page"):
        PromptBuilder().build_script_prompt(STORY, FEATURE, [])


def test_system_prompt_carries_product_context_and_practices():
    context = ProductContext(
        context_text="An online shop for jackets.",
        custom_commands_text="// cy.login(user)",
        good_practices=("Use data-testid selectors.",))
    bundle = PromptBuilder(product_context=context).build_script_prompt(
        STORY, FEATURE, [PAGE])
    assert "An online shop for jackets." in bundle.system
    assert "// cy.login(user)" in bundle.system
    assert "- Use data-testid selectors." in bundle.system


def test_product_context_load_uses_defaults_for_missing_keys(tmp_path):
    path = tmp_path / "ctx.json"
    path.write_text(json.dumps({"context": "Shop under test."}), encoding="utf-8")
    loaded = ProductContext.load(path)
    assert loaded.context_text == "Shop under test."
    assert loaded.custom_commands_text == ProductContext().custom_commands_text
    assert loaded.good_practices == ProductContext().good_practices
