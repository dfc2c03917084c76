"""Exception types shared across the package.

Cell coordinates carried by errors are 1-based, matching every external
format and report.
"""


class PcmError(Exception):
    """Base class for all package errors."""


class OrderTooSmall(PcmError):
    def __init__(self, n):
        self.n = n
        super().__init__(f"matrix order must be >= 3, got {n}")


class OrderMismatch(PcmError):
    def __init__(self, n_a, n_b):
        self.n_a, self.n_b = n_a, n_b
        super().__init__(f"matrix orders differ: {n_a} vs {n_b}")


class NonPositiveEntry(PcmError):
    def __init__(self, i, j, value):
        self.i, self.j, self.value = i, j, value
        super().__init__(f"entry ({i},{j}) must be positive, got {value!r}")


class ReciprocityViolation(PcmError):
    def __init__(self, i, j, product):
        self.i, self.j, self.product = i, j, product
        super().__init__(
            f"entries ({i},{j}) and ({j},{i}) are not reciprocal: product {product}"
        )


class ParseError(PcmError):
    def __init__(self, message, row=None, col=None):
        self.row, self.col = row, col
        loc = ""
        if row is not None:
            loc = f" at row {row}" + (f", column {col}" if col is not None else "")
        super().__init__(message + loc)


class MissingRandomIndex(PcmError):
    def __init__(self, n):
        self.n = n
        super().__init__(f"no random index RI_n available for order n={n}")


class ThresholdOutOfRange(PcmError):
    pass


class ConvergenceFailure(PcmError):
    pass


class InadmissibleSpec(PcmError):
    """Subproblem spec with pinned entries outside the scale bound."""


class InadmissibleQuery(PcmError):
    """Reduction query whose matrix or parameters violate the bound."""


class BranchLimit(PcmError):
    """Branch-and-bound node budget exhausted."""


class WorkBudgetExceeded(PcmError):
    def __init__(self, estimate, budget):
        self.estimate, self.budget = estimate, budget
        super().__init__(
            f"estimated {estimate} subproblems exceeds work budget {budget}"
        )


class DeadlineExceeded(PcmError):
    def __init__(self, stats=None):
        self.stats = stats
        super().__init__("computation exceeded its deadline")
