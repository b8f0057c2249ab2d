import dataclasses
import io
import json

import pytest

from uatkit.cli import build_parser, main
from uatkit.ledger import load_ledger
from uatkit.stories import load_local

from conftest import FIXTURES, make_replay_config

EXPERIMENT = str(FIXTURES / "ledgers" / "experiment50")
GOLDEN_FEATURE = (FIXTURES / "features" / "legal_tracking.feature").read_text("utf-8")
ACCORDION = (FIXTURES / "scripts" / "accordion.cy.ts").read_text("utf-8")
REGEN = (FIXTURES / "scripts" / "accordion_regen.cy.ts").read_text("utf-8")
ALPHA = load_local(FIXTURES / "stories" / "ALPHA-7")
CASE_ARROW = "SHOP-101:unfold-and-collapse-sections-via-arrow"


@pytest.fixture()
def cli_config(tmp_path):
    config = make_replay_config(tmp_path / "run")
    path = tmp_path / "config.json"
    path.write_text(json.dumps(dataclasses.asdict(config)), encoding="utf-8")
    return str(path)


def stderr_value(captured: str, label: str) -> str:
    for line in captured.splitlines():
        if line.startswith(f"{label}: "):
            return line.split(": ", 1)[1]
    raise AssertionError(f"no `{label}:` line in stderr:\n{captured}")


# --- report ---------------------------------------------------------------------

def test_report_text(capsys):
    assert main(["report", "--ledger", EXPERIMENT]) == 0
    out = capsys.readouterr().out
    assert "test cases: 50" in out
    assert "semantic relevance (after remediation): 92%" in out
    assert "  valid as generated: 30 (60%)" in out


def test_report_json(capsys):
    assert main(["report", "--ledger", EXPERIMENT, "--format", "json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["case_count"] == 50
    assert data["distribution"]["minor_fixed"]["count"] == 4


def test_report_csv(capsys):
    assert main(["report", "--ledger", EXPERIMENT, "--format", "csv"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "metric,value"
    assert "distribution.regenerated_valid.count,12" in lines


def test_report_accepts_the_jsonl_file_itself(capsys):
    ledger_file = str(FIXTURES / "ledgers" / "experiment50" / "ledger.jsonl")
    assert main(["report", "--ledger", ledger_file]) == 0
    assert "test cases: 50" in capsys.readouterr().out


def test_report_missing_ledger(tmp_path, capsys):
    assert main(["report", "--ledger", str(tmp_path / "nope")]) == 1
    assert "error:" in capsys.readouterr().err


# --- scenarios -------------------------------------------------------------------

def test_scenarios_replays_the_recorded_feature(cli_config, capsys):
    code = main(["scenarios", "--config", cli_config,
                 "--title", ALPHA.story.title,
                 "--description", ALPHA.story.description])
    captured = capsys.readouterr()
    assert code == 0
    assert captured.out == GOLDEN_FEATURE
    assert len(stderr_value(captured.err, "generation_id")) == 16


def test_scenarios_replay_miss_exits_2(cli_config, capsys):
    code = main(["scenarios", "--config", cli_config,
                 "--title", "Unrecorded", "--description", "As a user, I wish."])
    assert code == 2
    assert "gateway error" in capsys.readouterr().err


# --- script / regen / verdict -----------------------------------------------------

def test_script_replays_and_reports_mapping(cli_config, meta, capsys):
    code = main(["script", "--config", cli_config, "--issue-key", "SHOP-101",
                 "--pages", meta["product_page_url"]])
    captured = capsys.readouterr()
    assert code == 0
    assert captured.out == ACCORDION
    assert stderr_value(captured.err, "structure valid") == "True"
    assert stderr_value(captured.err, "mapping") == \
        "2 matched, 0 missing, 0 extra, comment coverage 1.00"


def test_script_unknown_issue_exits_1(cli_config, meta, capsys):
    code = main(["script", "--config", cli_config, "--issue-key", "NOPE-1",
                 "--pages", meta["product_page_url"]])
    assert code == 1
    assert "no story directory" in capsys.readouterr().err


def test_script_comma_separated_pages(cli_config, meta, capsys):
    # one --pages value carrying a comma list is split into URLs; a bogus
    # second URL must then fail the page fetch
    code = main(["script", "--config", cli_config, "--issue-key", "SHOP-101",
                 "--pages", f"{meta['product_page_url']},https://shop.example/x"])
    assert code == 1
    assert "page fetch failed" in capsys.readouterr().err


def test_regen_links_to_the_recorded_generation(cli_config, meta, capsys):
    main(["script", "--config", cli_config, "--issue-key", "SHOP-101",
          "--pages", meta["product_page_url"]])
    generation_id = stderr_value(capsys.readouterr().err, "generation_id")

    code = main(["regen", "--config", cli_config,
                 "--generation-id", generation_id,
                 "--context", meta["regen_note"]])
    captured = capsys.readouterr()
    assert code == 0
    assert captured.out == REGEN
    assert stderr_value(captured.err, "mapping").startswith("2 matched")


def test_regen_unknown_generation_exits_1(cli_config, capsys):
    code = main(["regen", "--config", cli_config,
                 "--generation-id", "feedbeefdeadc0de", "--context", "n"])
    assert code == 1
    assert "no script generation" in capsys.readouterr().err


def test_verdict_flow(cli_config, meta, capsys):
    main(["script", "--config", cli_config, "--issue-key", "SHOP-101",
          "--pages", meta["product_page_url"]])
    capsys.readouterr()

    code = main(["verdict", "--config", cli_config, "--case-id", CASE_ARROW,
                 "--verdict", "pass"])
    assert code == 0
    assert capsys.readouterr().out.strip() == f"{CASE_ARROW}: valid_as_generated"

    # terminal case: a second verdict is refused
    code = main(["verdict", "--config", cli_config, "--case-id", CASE_ARROW,
                 "--verdict", "minor_error", "--detail", "x"])
    assert code == 1
    assert "already valid_as_generated" in capsys.readouterr().err


def test_verdict_minor_error_needs_detail(cli_config, meta, capsys):
    main(["script", "--config", cli_config, "--issue-key", "SHOP-101",
          "--pages", meta["product_page_url"]])
    capsys.readouterr()
    code = main(["verdict", "--config", cli_config, "--case-id", CASE_ARROW,
                 "--verdict", "minor_error"])
    assert code == 1
    assert "fix note" in capsys.readouterr().err


def test_verdict_rejects_unknown_verdicts(cli_config):
    with pytest.raises(SystemExit) as exc:
        main(["verdict", "--config", cli_config, "--case-id", CASE_ARROW,
              "--verdict", "meh"])
    assert exc.value.code == 1


# --- pr-inputs ----------------------------------------------------------------------

def test_pr_inputs_from_file(tmp_path, capsys):
    desc = tmp_path / "pr.txt"
    desc.write_text("Issue: SHOP-101\nPages: https://shop.example/detail\n",
                    encoding="utf-8")
    assert main(["pr-inputs", "--file", str(desc)]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data == {"issue_key": "SHOP-101",
                    "page_urls": ["https://shop.example/detail"]}


def test_pr_inputs_from_stdin(monkeypatch, capsys):
    monkeypatch.setattr("sys.stdin",
                        io.StringIO("Issue: CART-9\nPages: https://a.example/\n"))
    assert main(["pr-inputs"]) == 0
    assert json.loads(capsys.readouterr().out)["issue_key"] == "CART-9"


def test_pr_inputs_rejects_incomplete_descriptions(monkeypatch, capsys):
    monkeypatch.setattr("sys.stdin", io.StringIO("nothing useful"))
    assert main(["pr-inputs"]) == 1
    assert "error:" in capsys.readouterr().err


# --- wiring ---------------------------------------------------------------------

def test_run_dir_override_places_the_ledger(cli_config, meta, tmp_path, capsys):
    other = tmp_path / "elsewhere"
    code = main(["script", "--config", cli_config, "--issue-key", "SHOP-101",
                 "--pages", meta["product_page_url"], "--run-dir", str(other)])
    assert code == 0
    events = load_ledger(other)
    assert [e["event"] for e in events] == ["script_generation"]
    capsys.readouterr()


def test_missing_required_flag_exits_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["script"])
    assert exc.value.code == 1
    capsys.readouterr()


def test_parser_knows_every_subcommand():
    parser = build_parser()
    args = parser.parse_args(["serve"])
    assert args.command == "serve"
    assert args.port == 8000
