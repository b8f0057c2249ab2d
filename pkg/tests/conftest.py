import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from uatkit.config import AppConfig, build_pipeline

FIXTURES = Path(__file__).parent / "fixtures"

SMALL_PAGE = """<!DOCTYPE html>
<html><head><title>Mini</title>
<style>.hero { color: navy; }</style>
<script>window.boot = function () { return '<div>'; };</script>
</head>
<body>
<h1 data-testid="page-title">Mini-Seite</h1>
<button data-testid="cta-button">Los</button>
</body></html>
"""

TRACKER_ISSUES = {
    "TRK-1": {
        "fields": {
            "summary": "Sort products on the listing page",
            "description": "As a shopper, I want to sort the product list,\n"
                           "So that I find the cheapest jacket first.",
        }
    },
    "TRK-2": {
        "fields": {
            "summary": "Apply a voucher code",
            "description": "As a shopper, I want to redeem vouchers.\n\n"
                           "```gherkin\n"
                           "Feature: Apply a voucher code\n\n"
                           "Scenario: Apply a valid voucher\n"
                           "Given the cart contains one item\n"
                           "When the shopper enters SOMMER24\n"
                           "Then the discount is shown in the totals\n"
                           "```\n",
        }
    },
    "TRK-3": {
        "fields": {
            "summary": "Edit quantities in the cart",
            "description": "As a shopper, I want to change quantities.",
            "customfield_10900": "Feature: Edit quantities in the cart\n\n"
                                 "Scenario: Increase quantity of a cart line\n"
                                 "Given the cart contains one item\n"
                                 "When the shopper raises the quantity to two\n"
                                 "Then the line total doubles\n",
        }
    },
}


class _FixtureHandler(BaseHTTPRequestHandler):
    def log_message(self, fmt, *args):  # keep pytest output clean
        pass

    def _send(self, status, body, content_type="application/json"):
        data = body if isinstance(body, bytes) else body.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        if self.path == "/page":
            self._send(200, SMALL_PAGE, "text/html; charset=utf-8")
        elif self.path == "/big":
            html = (FIXTURES / "pages" / "product_detail.html").read_text("utf-8")
            self._send(200, html, "text/html; charset=utf-8")
        elif self.path == "/binary":
            self._send(200, b"%PDF-1.7 not a page", "application/pdf")
        elif self.path == "/slow":
            time.sleep(0.5)
            self._send(200, "<html>late</html>", "text/html")
        elif self.path.startswith("/issue/"):
            key = self.path.rsplit("/", 1)[1]
            if key == "AUTH-1":
                self._send(401, json.dumps({"errorMessages": ["auth required"]}))
            elif key == "SECURE-1":
                if self.headers.get("Authorization") == "Bearer token-123":
                    self._send(200, json.dumps(TRACKER_ISSUES["TRK-1"]))
                else:
                    self._send(403, json.dumps({"errorMessages": ["forbidden"]}))
            elif key in TRACKER_ISSUES:
                self._send(200, json.dumps(TRACKER_ISSUES[key]))
            else:
                self._send(404, json.dumps({"errorMessages": ["no issue"]}))
        else:
            self._send(404, "not found", "text/plain")

    def do_POST(self):
        length = int(self.headers.get("Content-Length", "0"))
        payload = json.loads(self.rfile.read(length) or b"{}")
        if self.path == "/chat":
            user = payload["messages"][-1]["content"]
            auth = self.headers.get("Authorization", "none")
            body = {
                "model": payload.get("model", "stub"),
                "choices": [{"message": {
                    "role": "assistant",
                    "content": f"echo[auth={auth}]: {user[:40]}"}}],
                "usage": {"prompt_tokens": 120, "completion_tokens": 30},
            }
            self._send(200, json.dumps(body))
        elif self.path == "/chat-500":
            self._send(500, json.dumps({"detail": "upstream exploded"}))
        elif self.path == "/chat-error":
            self._send(200, json.dumps({"error": {"message": "overloaded"}}))
        elif self.path == "/chat-notjson":
            self._send(200, "oops[", "text/plain")
        elif self.path == "/chat-shape":
            self._send(200, json.dumps({"choices": [], "usage": {}}))
        else:
            self._send(404, "not found", "text/plain")


@pytest.fixture(scope="session")
def fixture_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _FixtureHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    thread.join(timeout=5)


@pytest.fixture(scope="session")
def meta():
    return json.loads((FIXTURES / "meta.json").read_text("utf-8"))


def make_replay_config(run_dir: Path) -> AppConfig:
    config = AppConfig.from_file(FIXTURES / "config" / "replay.json")
    config.cassette_path = str(FIXTURES / "cassettes" / "replay.json")
    config.pages_dir = str(FIXTURES / "pages_by_hash")
    config.stories_dir = str(FIXTURES / "stories")
    config.run_dir = str(run_dir)
    return config


@pytest.fixture()
def replay_config(tmp_path):
    return make_replay_config(tmp_path / "run")


@pytest.fixture()
def replay_pipeline(replay_config):
    return build_pipeline(replay_config)


# --- acceptance summary -------------------------------------------------------

ACCEPTANCE_TITLES = {
    1: "bundled labeled run reports 60/8/24/8% with 92% relevance after remediation",
    2: "feedback rate over 65 records renders as 95%",
    3: "per-story cost computes to 0.1175, within 5% of the 0.12 reference average",
    4: "cassette replay reproduces both generation stages byte-for-byte",
    5: "property suites hold for >=200 generated cases each",
    6: "service endpoints conform to the request/response contract offline",
    7: "token estimate of the bundled stage-2 prompt is within 25% of 9500",
}

_acceptance_outcomes: dict[int, list[bool]] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "acceptance(n): link a test to one numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    criterion = marker.args[0]
    _acceptance_outcomes.setdefault(criterion, []).append(report.passed)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE_TITLES):
        outcomes = _acceptance_outcomes.get(criterion)
        if outcomes is None:
            continue
        verdict = "PASS" if all(outcomes) else "FAIL"
        terminalreporter.write_line(
            f"ACCEPTANCE {criterion}: {verdict} — {ACCEPTANCE_TITLES[criterion]}")
