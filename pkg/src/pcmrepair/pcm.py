"""Pairwise comparison matrix model: validation, log/exp transforms, triad
enumeration, the change-count distance, and text formats.

External coordinates are 1-based everywhere (reports, errors, formats);
the numpy arrays underneath are 0-based.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    NonPositiveEntry,
    OrderMismatch,
    OrderTooSmall,
    ParseError,
    ReciprocityViolation,
)

RECIPROCITY_TOL = 1e-6
LOG_DISTANCE_TOL = 1e-9
CONSISTENCY_TOL = 1e-9


@dataclass(frozen=True, order=True)
class Position:
    """Upper-triangle cell (i, j), 1-based, i < j."""

    i: int
    j: int

    def __post_init__(self):
        if not (1 <= self.i < self.j):
            raise ValueError(f"position must satisfy 1 <= i < j, got ({self.i},{self.j})")

    def zero_based(self):
        return self.i - 1, self.j - 1


@dataclass(frozen=True, order=True)
class TriadIndex:
    """Index triple (i, j, k), 1-based, strictly increasing."""

    i: int
    j: int
    k: int

    def __post_init__(self):
        if not (1 <= self.i < self.j < self.k):
            raise ValueError(
                f"triad must satisfy 1 <= i < j < k, got ({self.i},{self.j},{self.k})"
            )

    def zero_based(self):
        return self.i - 1, self.j - 1, self.k - 1

    def positions(self):
        """The three upper-triangle cells the triad touches."""
        return (Position(self.i, self.j), Position(self.i, self.k), Position(self.j, self.k))


@dataclass(frozen=True)
class ScaleBound:
    """Entry bound M >= 1: every admissible entry lies in [1/M, M]."""

    M: float

    def __post_init__(self):
        if not (self.M >= 1.0):
            raise ValueError(f"scale bound must satisfy M >= 1, got {self.M}")

    @property
    def log_bound(self) -> float:
        return math.log(self.M)

    def admits(self, value: float, slack: float = 1e-12) -> bool:
        return abs(math.log(value)) <= self.log_bound + slack


DEFAULT_BOUND = ScaleBound(9.0)


class ComparisonMatrix:
    """Positive reciprocal judgment matrix. Immutable; build via validate()."""

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        n = values.shape[0]
        if values.ndim != 2 or values.shape[1] != n:
            raise ValueError("comparison matrix must be square")
        if n < 3:
            raise OrderTooSmall(n)
        if not (values > 0).all():
            i, j = np.argwhere(~(values > 0))[0]
            raise NonPositiveEntry(i + 1, j + 1, values[i, j])
        # after validation the lower triangle carries exact reciprocals
        for i in range(n):
            if values[i, i] != 1.0:
                raise ReciprocityViolation(i + 1, i + 1, values[i, i] ** 2)
            for j in range(i + 1, n):
                if values[j, i] != 1.0 / values[i, j]:
                    raise ReciprocityViolation(i + 1, j + 1, values[i, j] * values[j, i])
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __setattr__(self, name, value):
        raise AttributeError("ComparisonMatrix is immutable")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def entry(self, i: int, j: int) -> float:
        """1-based accessor."""
        return float(self.values[i - 1, j - 1])

    def replace(self, edits: dict[Position, float]) -> "ComparisonMatrix":
        """New matrix with the given upper-triangle cells set (reciprocals follow)."""
        vals = self.values.copy()
        for pos, v in edits.items():
            if v <= 0:
                raise NonPositiveEntry(pos.i, pos.j, v)
            a, b = pos.zero_based()
            vals[a, b] = v
            vals[b, a] = 1.0 / v
        return ComparisonMatrix(vals)

    def __eq__(self, other):
        return isinstance(other, ComparisonMatrix) and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())

    def __repr__(self):
        return f"ComparisonMatrix(n={self.n})"


class LogMatrix:
    """Skew-symmetric matrix of entry logarithms (natural log)."""

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        n = values.shape[0]
        if values.ndim != 2 or values.shape[1] != n:
            raise ValueError("log matrix must be square")
        if n < 3:
            raise OrderTooSmall(n)
        for i in range(n):
            if values[i, i] != 0.0:
                raise ValueError(f"log matrix diagonal must be exactly 0 at ({i + 1},{i + 1})")
            for j in range(i + 1, n):
                if values[j, i] != -values[i, j]:
                    raise ValueError(f"log matrix must be exactly skew-symmetric at ({i + 1},{j + 1})")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __setattr__(self, name, value):
        raise AttributeError("LogMatrix is immutable")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def entry(self, i: int, j: int) -> float:
        return float(self.values[i - 1, j - 1])

    def __eq__(self, other):
        return isinstance(other, LogMatrix) and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"LogMatrix(n={self.n})"


def validate(raw, tol: float = RECIPROCITY_TOL) -> ComparisonMatrix:
    """Check a raw square grid and normalize it into a ComparisonMatrix.

    The upper triangle is authoritative: the lower triangle is replaced by
    exact reciprocals and the diagonal is forced to 1 once the input passes
    the positivity and reciprocity checks (relative tolerance `tol`).
    """
    arr = np.asarray(raw, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ParseError("input grid is not square")
    n = arr.shape[0]
    if n < 3:
        raise OrderTooSmall(n)
    for i in range(n):
        for j in range(n):
            if not (arr[i, j] > 0) or not math.isfinite(arr[i, j]):
                raise NonPositiveEntry(i + 1, j + 1, arr[i, j])
    for i in range(n):
        for j in range(i, n):
            prod = arr[i, j] * arr[j, i]
            if abs(prod - 1.0) > tol:
                raise ReciprocityViolation(i + 1, j + 1, prod)
    out = np.ones((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = arr[i, j]
            out[j, i] = 1.0 / arr[i, j]
    return ComparisonMatrix(out)


def to_log(matrix: ComparisonMatrix) -> LogMatrix:
    """Elementwise natural log; upper triangle computed once, then negated."""
    n = matrix.n
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            v = math.log(matrix.values[i, j])
            out[i, j] = v
            out[j, i] = -v
    return LogMatrix(out)


def from_log(logm: LogMatrix) -> ComparisonMatrix:
    """Elementwise exp; reciprocity restored exactly by division."""
    n = logm.n
    out = np.ones((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            v = math.exp(logm.values[i, j])
            out[i, j] = v
            out[j, i] = 1.0 / v
    return ComparisonMatrix(out)


def triads(n: int) -> list[TriadIndex]:
    """All n(n-1)(n-2)/6 triads in lexicographic order, 1-based."""
    if n < 3:
        raise OrderTooSmall(n)
    return [TriadIndex(i + 1, j + 1, k + 1) for i, j, k in itertools.combinations(range(n), 3)]


def triad_log_sum(logm: LogMatrix, t: TriadIndex) -> float:
    """x_ij + x_jk + x_ki for one triad; zero iff the triad is consistent."""
    i, j, k = t.zero_based()
    v = logm.values
    return float(v[i, j] + v[j, k] + v[k, i])


def is_consistent(matrix: ComparisonMatrix, tol: float = CONSISTENCY_TOL) -> bool:
    """True iff every triad's log sum vanishes within `tol` (absolute)."""
    logm = to_log(matrix)
    return all(abs(triad_log_sum(logm, t)) <= tol for t in triads(matrix.n))


def distance(a: ComparisonMatrix, b: ComparisonMatrix, tol: float = LOG_DISTANCE_TOL) -> int:
    """Number of upper-triangle cells where the two matrices differ.

    Compared in log space with an absolute tolerance so that exp/log round
    trips do not register as changes.
    """
    if a.n != b.n:
        raise OrderMismatch(a.n, b.n)
    count = 0
    for i in range(a.n):
        for j in range(i + 1, a.n):
            if abs(math.log(a.values[i, j]) - math.log(b.values[i, j])) > tol:
                count += 1
    return count


def differing_positions(a: ComparisonMatrix, b: ComparisonMatrix,
                        tol: float = LOG_DISTANCE_TOL) -> list[Position]:
    if a.n != b.n:
        raise OrderMismatch(a.n, b.n)
    out = []
    for i in range(a.n):
        for j in range(i + 1, a.n):
            if abs(math.log(a.values[i, j]) - math.log(b.values[i, j])) > tol:
                out.append(Position(i + 1, j + 1))
    return out


# ---------------------------------------------------------------------------
# text formats: dense JSON, upper-triangle JSON, CSV (fractions accepted)

FORMATS = ("dense", "upper", "csv")


def _parse_number(token, row=None, col=None) -> float:
    """Accept plain numbers and exact fractions like '1/8'."""
    if isinstance(token, (int, float)) and not isinstance(token, bool):
        return float(token)
    if isinstance(token, str):
        s = token.strip()
        if "/" in s:
            num, _, den = s.partition("/")
            try:
                return float(num) / float(den)
            except (ValueError, ZeroDivisionError):
                raise ParseError(f"cannot parse fraction {token!r}", row, col) from None
        try:
            return float(s)
        except ValueError:
            raise ParseError(f"cannot parse number {token!r}", row, col) from None
    raise ParseError(f"cannot parse number {token!r}", row, col)


def sniff_format(text: str) -> str:
    s = text.lstrip()
    if s.startswith("["):
        return "dense"
    if s.startswith("{"):
        return "upper"
    return "csv"


def parse(text: str, fmt: str = "auto", tol: float = RECIPROCITY_TOL) -> ComparisonMatrix:
    """Parse matrix text in one of the supported formats and validate it."""
    if fmt == "auto":
        fmt = sniff_format(text)
    if fmt == "dense":
        return _parse_dense(text, tol)
    if fmt == "upper":
        return _parse_upper(text)
    if fmt == "csv":
        return _parse_csv(text, tol)
    raise ParseError(f"unknown format {fmt!r}")


def _parse_dense(text: str, tol: float) -> ComparisonMatrix:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", e.lineno, e.colno) from None
    if not isinstance(data, list) or not data:
        raise ParseError("dense matrix JSON must be a non-empty list of rows")
    n = len(data)
    grid = []
    for r, rowdata in enumerate(data):
        if not isinstance(rowdata, list) or len(rowdata) != n:
            raise ParseError(f"row has {len(rowdata) if isinstance(rowdata, list) else '?'} "
                             f"entries, expected {n}", r + 1)
        grid.append([_parse_number(v, r + 1, c + 1) for c, v in enumerate(rowdata)])
    return validate(grid, tol)


def _parse_upper(text: str) -> ComparisonMatrix:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", e.lineno, e.colno) from None
    if not isinstance(data, dict) or "n" not in data or "upper" not in data:
        raise ParseError('upper-triangle JSON must be {"n": ..., "upper": [...]}')
    n = data["n"]
    if not isinstance(n, int):
        raise ParseError(f"order n must be an integer, got {n!r}")
    if n < 3:
        raise OrderTooSmall(n)
    upper = data["upper"]
    want = n * (n - 1) // 2
    if not isinstance(upper, list) or len(upper) != want:
        raise ParseError(f"expected {want} upper-triangle entries for n={n}, "
                         f"got {len(upper) if isinstance(upper, list) else '?'}")
    vals = np.ones((n, n))
    t = 0
    for i in range(n):
        for j in range(i + 1, n):
            v = _parse_number(upper[t], i + 1, j + 1)
            if v <= 0 or not math.isfinite(v):
                raise NonPositiveEntry(i + 1, j + 1, v)
            vals[i, j] = v
            vals[j, i] = 1.0 / v
            t += 1
    return ComparisonMatrix(vals)


def _parse_csv(text: str, tol: float) -> ComparisonMatrix:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty CSV input")
    head = lines[0].replace(" ", "")
    if not head.startswith("n="):
        raise ParseError('CSV must start with a header line "n=<order>"', 1)
    try:
        n = int(head[2:])
    except ValueError:
        raise ParseError(f"cannot parse order from header {lines[0]!r}", 1) from None
    if n < 3:
        raise OrderTooSmall(n)
    if len(lines) - 1 != n:
        raise ParseError(f"expected {n} data rows, got {len(lines) - 1}")
    grid = []
    for r in range(n):
        cells = [c for c in lines[1 + r].split(",")]
        if len(cells) != n:
            raise ParseError(f"expected {n} comma-separated values, got {len(cells)}", r + 1)
        grid.append([_parse_number(c, r + 1, c_i + 1) for c_i, c in enumerate(cells)])
    return validate(grid, tol)


def serialize(matrix: ComparisonMatrix, fmt: str = "dense") -> str:
    """Render a matrix as text; JSON keeps full binary float precision."""
    if fmt == "dense":
        return json.dumps([[matrix.values[i, j] for j in range(matrix.n)]
                           for i in range(matrix.n)])
    if fmt == "upper":
        upper = [matrix.values[i, j] for i in range(matrix.n)
                 for j in range(i + 1, matrix.n)]
        return json.dumps({"n": matrix.n, "upper": upper})
    if fmt == "csv":
        lines = [f"n={matrix.n}"]
        for i in range(matrix.n):
            lines.append(",".join(f"{matrix.values[i, j]:.17g}" for j in range(matrix.n)))
        return "\n".join(lines) + "\n"
    raise ParseError(f"unknown format {fmt!r}")
