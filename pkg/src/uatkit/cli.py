"""Command-line front end.

Subcommands mirror the service endpoints plus the review loop:

* ``scenarios`` — generate Gherkin from a story title + description.
* ``script`` — generate a test script for a tracked issue and its pages.
* ``regen`` — regenerate a recorded script with additional context.
* ``verdict`` — record a review verdict for a test case.
* ``report`` — render metrics over a run ledger (text / json / csv).
* ``pr-inputs`` — extract issue key + page URLs from a PR description.
* ``serve`` — run the HTTP service.

Exit codes: 0 success, 1 input/configuration error, 2 gateway or transport
error.  Wiring comes from ``--config`` (JSON) with per-flag overrides.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields as dataclass_fields

from .config import AppConfig, build_pipeline
from .errors import UatkitError
from .gateway import GatewayError
from .ledger import load_ledger
from .metrics import compute_metrics, render_report
from .pipeline import PipelineError, Verdict
from .prompts import UserStory
from .stories import parse_pr_description
from . import config as config_module


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit 1, not 2.

    Exit code 2 is reserved for gateway/transport failures; a bad flag is an
    input error.
    """

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


_WIRING_FLAGS = {
    "--backend": "backend",
    "--cassette": "cassette_path",
    "--run-dir": "run_dir",
    "--stories-dir": "stories_dir",
    "--pages-dir": "pages_dir",
    "--pages-mode": "pages_mode",
    "--template-dir": "template_dir",
    "--product-context": "product_context_path",
    "--dialect-profile": "dialect_profile_path",
    "--endpoint": "endpoint",
    "--model-id": "model_id",
}


def _wiring_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="JSON config file")
    for flag, dest in _WIRING_FLAGS.items():
        parent.add_argument(flag, dest=f"cfg_{dest}", default=None,
                            help=argparse.SUPPRESS)
    return parent


def _load_config(args: argparse.Namespace) -> AppConfig:
    config = AppConfig.from_file(args.config) if args.config else AppConfig()
    valid = {f.name for f in dataclass_fields(AppConfig)}
    for dest in _WIRING_FLAGS.values():
        override = getattr(args, f"cfg_{dest}", None)
        if override is not None and dest in valid:
            setattr(config, dest, override)
    return config


def _split_pages(values: list[str]) -> list[str]:
    urls: list[str] = []
    for value in values:
        urls.extend(u.strip() for u in value.split(",") if u.strip())
    return urls


def build_parser() -> _Parser:
    parent = _wiring_parent()
    parser = _Parser(prog="uatkit",
                     description="Generate and evaluate web acceptance tests.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scenarios", parents=[parent],
                       help="generate Gherkin scenarios from a user story")
    p.add_argument("--title", required=True)
    p.add_argument("--description", required=True)

    p = sub.add_parser("script", parents=[parent],
                       help="generate a test script for an issue")
    p.add_argument("--issue-key", required=True)
    p.add_argument("--pages", required=True, nargs="+",
                   help="page URLs (repeat the flag or comma-separate)")
    p.add_argument("--extra-context", default=None)

    p = sub.add_parser("regen", parents=[parent],
                       help="regenerate a recorded script with extra context")
    p.add_argument("--generation-id", required=True)
    p.add_argument("--context", required=True)

    p = sub.add_parser("verdict", parents=[parent],
                       help="record a review verdict for a test case")
    p.add_argument("--case-id", required=True)
    p.add_argument("--verdict", required=True,
                   choices=[v.value for v in Verdict])
    p.add_argument("--detail", default="")

    p = sub.add_parser("report", parents=[parent],
                       help="render metrics over a run ledger")
    p.add_argument("--ledger", required=True,
                   help="ledger.jsonl file or run directory")
    p.add_argument("--format", default="text", choices=["text", "json", "csv"])

    p = sub.add_parser("pr-inputs", parents=[parent],
                       help="extract issue key and page URLs from a PR description")
    p.add_argument("--file", default=None,
                   help="read the description from a file instead of stdin")

    p = sub.add_parser("serve", parents=[parent], help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def _cmd_scenarios(args) -> int:
    pipeline = build_pipeline(_load_config(args))
    story = UserStory(title=args.title, description=args.description)
    result = pipeline.generate_scenarios(story)
    sys.stdout.write(result.feature_text
                     if result.feature_text.endswith("\n")
                     else result.feature_text + "\n")
    for finding in result.lint.findings:
        print(f"lint {finding.severity.value} {finding.code} "
              f"(line {finding.line}): {finding.message}", file=sys.stderr)
    print(f"generation_id: {result.generation_id}", file=sys.stderr)
    return 0


def _print_script_result(result) -> None:
    sys.stdout.write(result.code.code if result.code.code.endswith("\n")
                     else result.code.code + "\n")
    print(f"generation_id: {result.generation_id}", file=sys.stderr)
    print(f"structure valid: {result.structure.valid}", file=sys.stderr)
    for finding in result.structure.findings:
        print(f"structure {finding.code} (line {finding.line}): {finding.message}",
              file=sys.stderr)
    print(f"mapping: {len(result.mapping.matched)} matched, "
          f"{len(result.mapping.missing_scenarios)} missing, "
          f"{len(result.mapping.extra_tests)} extra, "
          f"comment coverage {result.mapping.comment_coverage:.2f}", file=sys.stderr)


def _cmd_script(args) -> int:
    config = _load_config(args)
    pipeline = build_pipeline(config)
    bundle = config_module.resolve_story(config, args.issue_key)
    result = pipeline.generate_script(bundle, _split_pages(args.pages),
                                      extra_context=args.extra_context)
    _print_script_result(result)
    return 0


def _cmd_regen(args) -> int:
    pipeline = build_pipeline(_load_config(args))
    result = pipeline.regenerate_by_id(args.generation_id, args.context)
    _print_script_result(result)
    return 0


def _cmd_verdict(args) -> int:
    pipeline = build_pipeline(_load_config(args))
    state = pipeline.record_case_verdict(args.case_id, Verdict(args.verdict),
                                         detail=args.detail)
    print(f"{state.case_id}: {state.state.value}")
    return 0


def _cmd_report(args) -> int:
    report = compute_metrics(load_ledger(args.ledger))
    sys.stdout.write(render_report(report, args.format))
    return 0


def _cmd_pr_inputs(args) -> int:
    if args.file:
        with open(args.file, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = sys.stdin.read()
    inputs = parse_pr_description(text)
    print(json.dumps({"issue_key": inputs.issue_key,
                      "page_urls": list(inputs.page_urls)}, indent=2))
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(_load_config(args))
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


_COMMANDS = {
    "scenarios": _cmd_scenarios,
    "script": _cmd_script,
    "regen": _cmd_regen,
    "verdict": _cmd_verdict,
    "report": _cmd_report,
    "pr-inputs": _cmd_pr_inputs,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except GatewayError as exc:
        print(f"gateway error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        if isinstance(exc.__cause__, GatewayError):
            print(f"gateway error: {exc}", file=sys.stderr)
            return 2
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except UatkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
