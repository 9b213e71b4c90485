"""Model-guided black-box optimization with offline-testable proposal backends."""

from .control import (
    CallbackAction,
    Continue,
    SetSamplingTemperature,
    StepContext,
    Stop,
    adaptive_sampling,
    early_stopping,
    resolve_actions,
    target_stop,
)
from .core import (
    EvaluatedSolution,
    History,
    KeyedScalars,
    KeyedScalarsSchema,
    ObjectiveDirection,
    OptimizationResult,
    Ordering,
    Permutation,
    PermutationSchema,
    ProblemSpec,
    RealVector,
    RealVectorSchema,
    SolutionSchema,
    SolutionValue,
    StepStats,
    Termination,
    TerminationKind,
    compare_scores,
    history_insert,
    matches_schema,
    update_best,
)
from .evaluation import EvalPolicy, EvaluationFailed, Objective, evaluate_batch
from .optimizers import (
    RunConfig,
    SaState,
    accept_candidate,
    cool,
    run_hlmea,
    run_hlmsa,
    run_opro,
)
from .proposer import (
    EXPECTED_TAGS,
    OUTPUT_CONTRACT,
    HttpChatBackend,
    ParsedProposal,
    PerturbBackend,
    PromptBundle,
    ProposerBackend,
    SamplingParams,
    ScriptedBackend,
    ScriptExhausted,
    Strategy,
    TransportError,
    ZeroCandidatesError,
    build_prompt,
    clamp_tag,
    parse_proposal,
    propose,
    render_solution,
)

__all__ = [
    "CallbackAction",
    "Continue",
    "EXPECTED_TAGS",
    "EvalPolicy",
    "EvaluatedSolution",
    "EvaluationFailed",
    "History",
    "HttpChatBackend",
    "KeyedScalars",
    "KeyedScalarsSchema",
    "OUTPUT_CONTRACT",
    "Objective",
    "ObjectiveDirection",
    "OptimizationResult",
    "Ordering",
    "ParsedProposal",
    "Permutation",
    "PermutationSchema",
    "PerturbBackend",
    "ProblemSpec",
    "PromptBundle",
    "ProposerBackend",
    "RealVector",
    "RealVectorSchema",
    "RunConfig",
    "SaState",
    "SamplingParams",
    "ScriptExhausted",
    "ScriptedBackend",
    "SetSamplingTemperature",
    "SolutionSchema",
    "SolutionValue",
    "StepContext",
    "StepStats",
    "Stop",
    "Strategy",
    "Termination",
    "TerminationKind",
    "TransportError",
    "ZeroCandidatesError",
    "accept_candidate",
    "adaptive_sampling",
    "build_prompt",
    "clamp_tag",
    "compare_scores",
    "cool",
    "early_stopping",
    "evaluate_batch",
    "history_insert",
    "matches_schema",
    "parse_proposal",
    "propose",
    "render_solution",
    "resolve_actions",
    "run_hlmea",
    "run_hlmsa",
    "run_opro",
    "target_stop",
    "update_best",
]

__version__ = "0.1.0"
