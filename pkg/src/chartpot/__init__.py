"""chartpot: training-free chart summarization via generated value trees and
sandboxed statistics programs, with automatic metrics and human evaluation."""

from .core import (
    ChartRecord,
    ChartType,
    Complexity,
    Dataset,
    FailureCategory,
    FailureClass,
    InputComposition,
    PercentScalar,
    RunRecord,
    Stage,
    Strategy,
    load_manifest,
    manifest_counts,
    persist_run,
    read_runs,
    select_gold_caption,
    tree_to_literal,
)
from .literal import (
    ParseOutcome,
    Repair,
    extract_payload,
    parse_model_text,
    parse_value_tree,
    validate_executable,
)
from .interpreter import (
    DEFAULT_LIMITS,
    ExecOutcome,
    ProgramAst,
    SandboxLimits,
    check_builtin_policy,
    check_comment_policy,
    execute,
    flatten_stats,
    parse_program,
)
from .template import CANONICAL_TEMPLATE_SOURCE, TemplateRecord, template_statistics
from .client import (
    ChatTurn,
    Completion,
    DecodeParams,
    MockTransport,
    ModelEndpoint,
    Role,
    complete,
    completion_body,
    render_chat,
)
from .prompts import PromptSet
from .pipeline import Pipeline, PipelineConfig, render_summary_prompt
from .metrics import (
    MetricReport,
    ScoredPair,
    cider,
    corpus_bleu,
    external_score,
    rouge_scores,
    tokenize,
)
from .evalharness import EvalReport, build_report, render_tables, run_batch
from .humaneval import (
    ChoiceRecord,
    HumanEvalService,
    PreferencePair,
    aggregate_scores,
    sample_pairs,
)

__version__ = "0.1.0"
