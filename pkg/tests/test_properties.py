"""Property suites over the generative strategies.

Every suite runs at least 200 generated cases; together they pin the
behavioral invariants the rest of the package leans on: parse/serialize
round trips, purge idempotence, locator preservation, structural validation
being delimiter-exact, mapping conservation laws and review state safety.
"""

from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uatkit.extract import (StructureReport, check_scenario_mapping,
                            scan_code_delimiters, validate_script_structure)
from uatkit.gherkin import (FeatureAst, ScenarioAst, StepAst, StepKeyword,
                            parse_feature, serialize_feature)
from uatkit.pages import extract_testids, purge
from uatkit.pipeline import (CaseState, CaseStateName, IllegalTransition,
                             Verdict, record_regeneration, record_verdict)

from strategies import (cypress_scripts, features, html_soup,
                        labelled_documents, mapping_inputs)

suite = settings(max_examples=200, deadline=None)


# --- gherkin round trip ---------------------------------------------------------

@pytest.mark.acceptance(5)
@suite
@given(ast=features())
def test_gherkin_serialize_parse_round_trip(ast: FeatureAst):
    assert parse_feature(serialize_feature(ast)) == ast


@pytest.mark.acceptance(5)
@suite
@given(ast=features())
def test_gherkin_serialization_is_stable(ast: FeatureAst):
    once = serialize_feature(ast)
    assert serialize_feature(parse_feature(once)) == once


# --- purge --------------------------------------------------------------------

@pytest.mark.acceptance(5)
@suite
@given(html=html_soup)
def test_purge_is_idempotent_and_monotone(html: str):
    first = purge(html)
    second = purge(first.html)
    assert second.html == first.html
    assert second.removed_elements == {}
    assert first.byte_len <= len(html.encode("utf-8"))
    assert second.byte_len == first.byte_len


@pytest.mark.acceptance(5)
@suite
@given(doc=labelled_documents())
def test_purge_keeps_exactly_the_locators_outside_removed_regions(doc):
    purged = purge(doc.html)
    assert purged.testids == doc.kept_testids
    assert extract_testids(purged.html) == doc.kept_testids


# --- script validation -------------------------------------------------------------

@pytest.mark.acceptance(5)
@suite
@given(script=cypress_scripts(), data=st.data())
def test_deleting_any_code_delimiter_invalidates_the_script(script, data):
    assert validate_script_structure(script).valid
    positions = scan_code_delimiters(script)
    assert positions
    index, char = data.draw(st.sampled_from(positions), label="deleted delimiter")
    assert script[index] == char
    mutated = script[:index] + script[index + 1:]
    assert not validate_script_structure(mutated).valid


# --- scenario mapping -----------------------------------------------------------

@pytest.mark.acceptance(5)
@suite
@given(inputs=mapping_inputs())
def test_mapping_conserves_scenarios_and_tests(inputs):
    scenario_titles, test_titles, comments = inputs
    feature = FeatureAst(name="F", scenarios=[
        ScenarioAst(title=t, steps=[StepAst(StepKeyword.GIVEN, "x")])
        for t in scenario_titles])
    report = StructureReport(valid=True, findings=[],
                             test_block_titles=test_titles,
                             comment_lines=sum(comments),
                             test_block_comment_lines=comments)
    mapping = check_scenario_mapping(feature, report)

    assert len(mapping.matched) + len(mapping.missing_scenarios) == \
        len(scenario_titles)
    assert len(mapping.matched) + len(mapping.extra_tests) == len(test_titles)

    # every pair refers to real titles, and neither side is matched more
    # often than it occurs (duplicate titles are distinct blocks)
    used_scenarios = Counter(scenario for scenario, _ in mapping.matched)
    used_tests = Counter(test for _, test in mapping.matched)
    assert used_scenarios <= Counter(scenario_titles)
    assert used_tests <= Counter(test_titles)
    assert 0.0 <= mapping.comment_coverage <= 1.0


# --- review state machine ------------------------------------------------------------

_OPS = st.lists(st.sampled_from(
    ["pass", "minor_error", "lack_of_context", "complex_error", "regenerate"]),
    min_size=1, max_size=8)


@pytest.mark.acceptance(5)
@suite
@given(ops=_OPS)
def test_state_machine_safety(ops):
    case = CaseState(case_id="K-1:property")
    for op in ops:
        if case.is_terminal:
            with pytest.raises(IllegalTransition):
                if op == "regenerate":
                    record_regeneration(case, "more context")
                else:
                    record_verdict(case, Verdict(op), detail="note")
            continue
        if op == "regenerate":
            record_regeneration(case, "more context")
        else:
            record_verdict(case, Verdict(op), detail="note")

    # regenerated_valid is reachable only after a regeneration event, and a
    # pass without one must land in valid_as_generated
    if case.state is CaseStateName.REGENERATED_VALID:
        assert case.regeneration_count >= 1
    if case.state is CaseStateName.VALID_AS_GENERATED:
        assert case.regeneration_count == 0
    # lack_of_context alone never terminates a case
    if all(op == "lack_of_context" for op in ops):
        assert case.state is CaseStateName.GENERATED
