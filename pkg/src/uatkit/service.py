"""HTTP facade over the pipeline.

Endpoints:

* ``POST /v1/scenarios`` — user story in, Gherkin + lint report out.
* ``POST /v1/scripts`` — issue key (or inline story + feature text) plus
  page URLs in, validated script + mapping out.
* ``POST /v1/feedback`` — thumbs-up/down for a generation; append-only.
* ``GET /v1/reports/summary`` — metrics over this service's run ledger.
* ``GET /healthz`` — liveness.

Status mapping: malformed input 400, unknown issue/generation 404, missing
Gherkin 422, model-gateway and upstream failures 502.  Every success on a
mutating endpoint appends exactly one ledger event; every mapped failure
appends a single ``error`` event instead.  Optionally the whole API is
guarded by one static bearer token from the environment.
"""

from __future__ import annotations

import os
from datetime import datetime, timezone

from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, model_validator

from .config import AppConfig, build_pipeline, resolve_story
from .errors import UatkitError
from .gateway import GatewayError
from .metrics import MetricsError, compute_metrics, report_dict
from .pages import PageFetchError
from .pipeline import MissingFeatureError, Pipeline, PipelineError
from .prompts import PromptError, UserStory
from .stories import (IssueNotFoundError, StoryBundle, StorySourceError,
                      TrackerAuthError)


class InlineStory(BaseModel):
    title: str = Field(min_length=1)
    description: str = Field(min_length=1)


class ScenariosRequest(BaseModel):
    title: str = Field(min_length=1)
    description: str = Field(min_length=1)


class ScriptsRequest(BaseModel):
    issue_key: str | None = None
    story: InlineStory | None = None
    feature_text: str | None = None
    page_urls: list[str] = Field(min_length=1)
    extra_context: str | None = None

    @model_validator(mode="after")
    def _exactly_one_source(self) -> "ScriptsRequest":
        if (self.issue_key is None) == (self.story is None):
            raise ValueError("provide exactly one of issue_key or story")
        return self


class FeedbackRequest(BaseModel):
    generation_id: str = Field(min_length=1)
    helpful: bool
    comment: str | None = None


class ServiceFailure(UatkitError):
    """Internal marker carrying the mapped HTTP status."""

    def __init__(self, status: int, stage: str, message: str):
        super().__init__(message)
        self.status = status
        self.stage = stage


# Issue key used for inline stories, which have no tracker identity.
_ADHOC_KEY = "ADHOC-0"


def _status_for(exc: Exception) -> int:
    """Map a pipeline-layer exception to an HTTP status."""
    if isinstance(exc, MissingFeatureError):
        return 422
    if isinstance(exc, IssueNotFoundError):
        return 404
    if isinstance(exc, (GatewayError, TrackerAuthError, PageFetchError)):
        return 502
    if isinstance(exc, PipelineError):
        cause = exc.__cause__
        if isinstance(cause, (GatewayError, PageFetchError)):
            return 502
        return 400
    if isinstance(exc, (PromptError, StorySourceError)):
        return 400
    return 500


def create_app(config: AppConfig, pipeline: Pipeline | None = None) -> FastAPI:
    """Build the service around a config (or a pre-wired pipeline)."""
    app = FastAPI(title="uatkit", version="0.1.0")
    pipe = pipeline or build_pipeline(config)
    ledger = pipe.ledger
    api_token = os.environ.get(config.api_token_env or "", "")

    def fail(stage: str, exc: Exception) -> ServiceFailure:
        status = _status_for(exc)
        ledger.append({
            "event": "error",
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "stage": stage,
            "status": status,
            "message": str(exc),
        })
        return ServiceFailure(status, stage, str(exc))

    @app.exception_handler(ServiceFailure)
    async def _service_failure_handler(request: Request, exc: ServiceFailure):
        return JSONResponse(status_code=exc.status,
                            content={"detail": str(exc), "stage": exc.stage})

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(request: Request, exc: RequestValidationError):
        detail = [
            {"field": ".".join(str(part) for part in err["loc"]), "message": err["msg"]}
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"detail": detail})

    @app.middleware("http")
    async def _auth(request: Request, call_next):
        if api_token and request.url.path != "/healthz":
            header = request.headers.get("Authorization", "")
            if header != f"Bearer {api_token}":
                return JSONResponse(status_code=401,
                                    content={"detail": "invalid or missing bearer token"})
        return await call_next(request)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/v1/scenarios")
    def scenarios(req: ScenariosRequest):
        try:
            story = UserStory(title=req.title, description=req.description)
            result = pipe.generate_scenarios(story)
        except UatkitError as exc:
            raise fail("scenarios", exc) from exc
        return {
            "generation_id": result.generation_id,
            "feature_text": result.feature_text,
            "lint": {
                "errors": len(result.lint.errors),
                "warnings": len(result.lint.warnings),
                "findings": [
                    {"severity": f.severity.value, "code": f.code,
                     "line": f.line, "message": f.message}
                    for f in result.lint.findings
                ],
            },
            "usage": {"input_tokens": result.usage.input_tokens,
                      "output_tokens": result.usage.output_tokens},
            "cost": str(result.cost),
            "currency": pipe.rates.currency,
        }

    @app.post("/v1/scripts")
    def scripts(req: ScriptsRequest):
        try:
            if req.issue_key is not None:
                bundle = resolve_story(config, req.issue_key)
                if req.feature_text is not None:
                    bundle = StoryBundle(story=bundle.story,
                                         feature_text=req.feature_text,
                                         issue_key=bundle.issue_key,
                                         fetched_at=bundle.fetched_at)
            else:
                assert req.story is not None
                bundle = StoryBundle(
                    story=UserStory(title=req.story.title,
                                    description=req.story.description),
                    feature_text=req.feature_text,
                    issue_key=_ADHOC_KEY,
                    fetched_at=datetime.now(timezone.utc),
                )
            result = pipe.generate_script(bundle, req.page_urls,
                                          extra_context=req.extra_context)
        except UatkitError as exc:
            raise fail("script", exc) from exc
        return {
            "generation_id": result.generation_id,
            "code": result.code.code,
            "fence_language_tag": result.code.fence_language_tag,
            "structure": {
                "valid": result.structure.valid,
                "findings": [
                    {"code": f.code, "line": f.line, "message": f.message}
                    for f in result.structure.findings
                ],
                "test_block_titles": result.structure.test_block_titles,
                "comment_lines": result.structure.comment_lines,
            },
            "mapping": {
                "matched": [list(pair) for pair in result.mapping.matched],
                "missing_scenarios": result.mapping.missing_scenarios,
                "extra_tests": result.mapping.extra_tests,
                "comment_coverage": result.mapping.comment_coverage,
            },
            "cases": [
                {"case_id": c.case_id, "scenario_title": c.scenario_title,
                 "test_title": c.test_title, "has_comment": c.has_comment}
                for c in result.cases
            ],
            "usage": {"input_tokens": result.usage.input_tokens,
                      "output_tokens": result.usage.output_tokens},
            "cost": str(result.cost),
            "currency": pipe.rates.currency,
        }

    @app.post("/v1/feedback", status_code=204)
    def feedback(req: FeedbackRequest):
        known = {
            e.get("generation_id")
            for e in ledger.events()
            if e.get("event") in ("scenario_generation", "script_generation")
        }
        if req.generation_id not in known:
            raise fail("feedback", IssueNotFoundError(
                f"unknown generation_id {req.generation_id}"))
        ledger.append({
            "event": "feedback",
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "generation_id": req.generation_id,
            "helpful": req.helpful,
            "comment": req.comment,
        })
        return Response(status_code=204)

    @app.get("/v1/reports/summary")
    def summary():
        try:
            report = compute_metrics(ledger.events())
        except MetricsError as exc:
            raise ServiceFailure(404, "report", str(exc)) from exc
        return report_dict(report)

    return app
