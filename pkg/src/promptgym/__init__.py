"""promptgym: prompt-writing programming exercises with LLM code
generation, sandboxed autograding, gated progression, and submission
analytics."""

from .analytics import ProblemSummary, TimelinePoint, export_csv, render_summary_row, summarize, timeline
from .errors import PromptGymError
from .gateway import (
    GeneratedProgram,
    GenerationRequest,
    HttpChatProvider,
    MockEntry,
    MockProvider,
    ProviderConfig,
    build_full_prompt,
    extract_code,
    request_generation,
)
from .grading import GradingEngine, Submission, feedback_for, measure_robustness, word_count
from .problems import (
    Course,
    ProblemKind,
    PromptProblem,
    ReferenceSolution,
    TestCase,
    get_problem,
    load_course,
    load_reference_solution,
    validate_problem,
)
from .sandbox import (
    EvaluationResult,
    ExecutionLimits,
    SandboxExecutor,
    TestOutcome,
    TestStatus,
    Verdict,
    normalize_output,
)
from .storage import ProgressState, Role, Store, UserRecord, progress_from_log

__version__ = "0.1.0"
