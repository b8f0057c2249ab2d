"""Application configuration and component wiring.

One JSON config file describes everything non-secret: model endpoint and id,
cost rates, backend (live / record / replay) and cassette, run directory,
template directory, product context file, dialect profile, story source
(local fixture directory or tracker) and page source (live or fixture
directory).  Secrets — the model API key, tracker token, optional service
bearer token — come from environment variables whose *names* are configured
here.

The ``build_*`` helpers turn an :class:`AppConfig` into wired components;
the CLI and the HTTP service both go through them.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import UatkitError
from .extract import DialectProfile
from .gateway import Cassette, CostRates, GatewayConfig, ModelGateway
from .ledger import RunLedger
from .pages import FetchConfig, FixturePageFetcher, LivePageFetcher
from .pipeline import Pipeline
from .prompts import ProductContext, PromptBuilder, TemplateStore
from .stories import (IssueNotFoundError, StoryBundle, TrackerConfig,
                      fetch_issue, load_local)


class ConfigError(UatkitError):
    """Config file missing, malformed, or inconsistent."""


@dataclass
class AppConfig:
    # model gateway
    backend: str = "replay"
    cassette_path: str | None = None
    endpoint: str = ""
    model_id: str = "gpt-4-turbo"
    api_key_env: str = "UATKIT_API_KEY"
    temperature: float = 0.0
    max_output_tokens: int = 2048
    retries: int = 3
    backoff_s: float = 1.0
    gateway_timeout: float = 120.0
    # pricing
    rate_per_1k_input: str = "0.01"
    rate_per_1k_output: str = "0.03"
    currency: str = "EUR"
    # run artifacts
    run_dir: str = "runs/default"
    # prompt assembly
    template_dir: str | None = None
    product_context_path: str | None = None
    # script dialect
    dialect_profile_path: str | None = None
    # story source: a local fixture directory takes precedence over a tracker
    stories_dir: str | None = None
    tracker: dict | None = None
    # page source
    pages_mode: str = "live"  # "live" | "fixture"
    pages_dir: str | None = None
    fetch_timeout: float = 30.0
    # optional static bearer token guarding the HTTP service
    api_token_env: str = "UATKIT_API_TOKEN"

    @classmethod
    def from_file(cls, path: str | Path) -> "AppConfig":
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"no config file at {p}")
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON: {exc}") from exc
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"{p}: unknown config keys: {sorted(unknown)}")
        return cls(**data)


def build_rates(config: AppConfig) -> CostRates:
    return CostRates(per_1k_input=config.rate_per_1k_input,
                     per_1k_output=config.rate_per_1k_output,
                     currency=config.currency)


def build_gateway(config: AppConfig) -> ModelGateway:
    cassette = Cassette(config.cassette_path) if config.cassette_path else None
    gw_config = GatewayConfig(
        endpoint=config.endpoint,
        model_id=config.model_id,
        api_key=os.environ.get(config.api_key_env),
        timeout=config.gateway_timeout,
        retries=config.retries,
        backoff_s=config.backoff_s,
        temperature=config.temperature,
        max_output_tokens=config.max_output_tokens,
    )
    return ModelGateway(gw_config, backend=config.backend, cassette=cassette)


def build_prompt_builder(config: AppConfig) -> PromptBuilder:
    templates = TemplateStore(config.template_dir)
    context = (ProductContext.load(config.product_context_path)
               if config.product_context_path else ProductContext())
    return PromptBuilder(templates=templates, product_context=context)


def build_dialect(config: AppConfig) -> DialectProfile:
    if config.dialect_profile_path:
        return DialectProfile.load(config.dialect_profile_path)
    return DialectProfile.default()


def build_page_fetcher(config: AppConfig):
    if config.pages_mode == "fixture":
        if not config.pages_dir:
            raise ConfigError("pages_mode 'fixture' requires pages_dir")
        return FixturePageFetcher(config.pages_dir)
    if config.pages_mode == "live":
        return LivePageFetcher(FetchConfig(timeout=config.fetch_timeout))
    raise ConfigError(f"unknown pages_mode {config.pages_mode!r}")


def build_pipeline(config: AppConfig, run_dir: str | Path | None = None) -> Pipeline:
    return Pipeline(
        gateway=build_gateway(config),
        prompts=build_prompt_builder(config),
        page_fetcher=build_page_fetcher(config),
        ledger=RunLedger(run_dir or config.run_dir),
        rates=build_rates(config),
        dialect=build_dialect(config),
    )


def build_tracker(config: AppConfig) -> TrackerConfig | None:
    if not config.tracker:
        return None
    try:
        return TrackerConfig(**config.tracker)
    except TypeError as exc:
        raise ConfigError(f"bad tracker config: {exc}") from exc


def resolve_story(config: AppConfig, issue_key: str) -> StoryBundle:
    """Turn an issue key into a story via the configured source."""
    if config.stories_dir:
        directory = Path(config.stories_dir) / issue_key
        if not directory.is_dir():
            raise IssueNotFoundError(
                f"no story directory for {issue_key} under {config.stories_dir}")
        return load_local(directory)
    tracker = build_tracker(config)
    if tracker is None:
        raise ConfigError("no story source configured (stories_dir or tracker)")
    return fetch_issue(issue_key, tracker)
