"""uatkit — two-stage generation of web acceptance tests.

Stage 1 turns a user story into Gherkin scenarios; stage 2 turns those
scenarios plus the distilled HTML of the pages under test into a runnable
test script (Cypress/TypeScript by default).  Around that core: a
record/replay model gateway, structural validation and scenario↔test
mapping for generated code, a per-case review state machine, and metrics
reporting over append-only run ledgers.
"""

from .errors import UatkitError
from .gherkin import (FeatureAst, GherkinParseError, LintReport, ScenarioAst,
                      ScenarioKind, StepAst, StepKeyword, lint_feature,
                      parse_feature, scenario_titles, serialize_feature)
from .pages import (FetchConfig, FixturePageFetcher, LivePageFetcher,
                    PageFetchError, PurgedPage, RawPage, fetch_page, purge,
                    purge_page, testid_inventory)
from .prompts import (ProductContext, PromptBuilder, PromptBundle, PromptError,
                      Stage, TemplateStore, UserStory, estimate_tokens)
from .gateway import (Cassette, CostRates, GatewayConfig, GatewayError,
                      ModelGateway, ModelResponse, ProviderError,
                      ReplayMissError, TransportError, Usage, cost_of)
from .extract import (CodeBlock, DialectProfile, ExtractionError, MappingReport,
                      StructureReport, check_scenario_mapping,
                      extract_fenced_code, validate_script_structure)
from .stories import (PrInputs, StoryBundle, StorySourceError, TrackerConfig,
                      fetch_issue, load_local, parse_pr_description)
from .ledger import RunLedger, load_ledger
from .pipeline import (CaseState, CaseStateName, IllegalTransition,
                       MissingFeatureError, Pipeline, PipelineError,
                       ScenarioResult, ScriptResult, Verdict, record_regeneration,
                       record_verdict)
from .metrics import (FeedbackRecord, MetricsReport, compute_metrics,
                      feedback_rate, render_percent, render_report)
from .config import AppConfig

__version__ = "0.1.0"

__all__ = [
    "AppConfig",
    "Cassette",
    "CaseState",
    "CaseStateName",
    "CodeBlock",
    "CostRates",
    "DialectProfile",
    "ExtractionError",
    "FeatureAst",
    "FeedbackRecord",
    "FetchConfig",
    "FixturePageFetcher",
    "GatewayConfig",
    "GatewayError",
    "GherkinParseError",
    "IllegalTransition",
    "LintReport",
    "LivePageFetcher",
    "MappingReport",
    "MetricsReport",
    "MissingFeatureError",
    "ModelGateway",
    "ModelResponse",
    "PageFetchError",
    "Pipeline",
    "PipelineError",
    "PrInputs",
    "ProductContext",
    "PromptBuilder",
    "PromptBundle",
    "PromptError",
    "ProviderError",
    "PurgedPage",
    "RawPage",
    "ReplayMissError",
    "RunLedger",
    "ScenarioAst",
    "ScenarioKind",
    "ScenarioResult",
    "ScriptResult",
    "Stage",
    "StepAst",
    "StepKeyword",
    "StoryBundle",
    "StorySourceError",
    "StructureReport",
    "TemplateStore",
    "TrackerConfig",
    "TransportError",
    "UatkitError",
    "Usage",
    "UserStory",
    "Verdict",
    "check_scenario_mapping",
    "compute_metrics",
    "cost_of",
    "estimate_tokens",
    "extract_fenced_code",
    "feedback_rate",
    "fetch_issue",
    "fetch_page",
    "lint_feature",
    "load_ledger",
    "load_local",
    "parse_feature",
    "parse_pr_description",
    "purge",
    "purge_page",
    "record_regeneration",
    "record_verdict",
    "render_percent",
    "render_report",
    "scenario_titles",
    "serialize_feature",
    "testid_inventory",
    "validate_script_structure",
]
