"""Inconsistency measurement and minimal-change repair for pairwise
comparison matrices."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    BranchLimit,
    ConvergenceFailure,
    DeadlineExceeded,
    InadmissibleQuery,
    InadmissibleSpec,
    MissingRandomIndex,
    NonPositiveEntry,
    OrderMismatch,
    OrderTooSmall,
    ParseError,
    PcmError,
    ReciprocityViolation,
    ThresholdOutOfRange,
    WorkBudgetExceeded,
)
from .pcm import (  # noqa: F401
    ComparisonMatrix,
    LogMatrix,
    Position,
    ScaleBound,
    TriadIndex,
    distance,
    from_log,
    is_consistent,
    parse,
    serialize,
    to_log,
    triads,
    validate,
)
from .indices import (  # noqa: F401
    DEFAULT_RI,
    IndexKind,
    IndexReport,
    RandomIndexTable,
    Thresholds,
    back_transform,
    ci,
    cm,
    cm_triad,
    cr,
    estimate_ri,
    evaluate,
    lambda_max,
    threshold_transform,
)
from .convex import (  # noqa: F401
    SolveReport,
    SolveStatus,
    SubproblemSpec,
    feasible_ci,
    feasible_cm,
    feasible_cr,
    min_ci,
    min_cm,
    min_lambda_cr,
)
from .reduce import (  # noqa: F401
    Limits,
    MinChanges,
    MinIndex,
    ReductionQuery,
    ReductionResult,
    Solution,
    bigm_oracle,
    enumerate_optimal,
    min_changes,
    min_index,
)
