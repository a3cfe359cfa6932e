"""Black-box root-cause debugging for parameterised pipelines."""
from .ddt import DdtReport, Goal, build_tree, ddt_search, extract_suspects, test_suspect
from .engine import (
    CommandBackend,
    ExecutionEngine,
    OracleBackend,
    ReplayBackend,
    load_config,
    read_provenance,
    write_provenance,
)
from .estimators import DebuggingTreeClassifier, RootCauseDebugger, check_history, check_space
from .exceptions import (
    BackendFailure,
    BudgetExhausted,
    ConfigError,
    DebugError,
    InconsistentHistory,
    NoFailingInstance,
    NoSucceedingInstance,
    ReplayMiss,
    UniverseTooLarge,
)
from .minimize import equivalent, minimize
from .model import (
    CauseDNF,
    Conjunction,
    Evaluation,
    Kind,
    Origin,
    Parameter,
    ParameterSpace,
    ProvenanceRecord,
    Triple,
    disjoint,
    hamming,
    satisfies,
)
from .shortcut import ShortcutReport, find_disjoint_pair, shortcut
from .stacked import StackedReport, find_disjoint_good_set, stacked_shortcut

__version__ = "0.1.0"

__all__ = [
    "BackendFailure",
    "BudgetExhausted",
    "CauseDNF",
    "CommandBackend",
    "ConfigError",
    "Conjunction",
    "DdtReport",
    "DebugError",
    "DebuggingTreeClassifier",
    "Evaluation",
    "ExecutionEngine",
    "Goal",
    "InconsistentHistory",
    "Kind",
    "NoFailingInstance",
    "NoSucceedingInstance",
    "OracleBackend",
    "Origin",
    "Parameter",
    "ParameterSpace",
    "ProvenanceRecord",
    "ReplayBackend",
    "ReplayMiss",
    "RootCauseDebugger",
    "ShortcutReport",
    "StackedReport",
    "Triple",
    "UniverseTooLarge",
    "build_tree",
    "check_history",
    "check_space",
    "ddt_search",
    "disjoint",
    "equivalent",
    "extract_suspects",
    "find_disjoint_good_set",
    "find_disjoint_pair",
    "hamming",
    "load_config",
    "minimize",
    "read_provenance",
    "satisfies",
    "shortcut",
    "stacked_shortcut",
    "test_suspect",
    "write_provenance",
]
