"""The three inconsistency indices (CR, CM, CI), their threshold transforms,
and the random-index machinery behind CR.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import pcm
from .errors import ConvergenceFailure, MissingRandomIndex, ThresholdOutOfRange
from .pcm import ComparisonMatrix, TriadIndex


class IndexKind(str, enum.Enum):
    CR = "cr"
    CM = "cm"
    CI = "ci"


#: Saaty's ratio scale: 1/9, 1/8, ..., 1/2, 1, 2, ..., 9 (17 values).
SAATY_SCALE = tuple(1.0 / k for k in range(9, 1, -1)) + tuple(float(k) for k in range(1, 10))

#: Published random-index values (Saaty). Overridable per call site.
DEFAULT_RI_VALUES = {3: 0.58, 4: 0.90, 5: 1.12, 6: 1.24, 7: 1.32, 8: 1.41, 9: 1.45}

#: Documented stricter acceptance presets for small orders; not applied
#: automatically, thresholds are always caller-supplied.
CR_REFINED_THRESHOLDS = {3: 0.05, 4: 0.08}

TEN_PERCENT_RULE = 0.1


class RandomIndexTable:
    """Map n -> RI_n. Values must be positive."""

    def __init__(self, values: dict[int, float]):
        clean = {}
        for n, v in values.items():
            n = int(n)
            v = float(v)
            if n < 3:
                raise ValueError(f"random index order must be >= 3, got {n}")
            if not v > 0:
                raise ValueError(f"RI_{n} must be positive, got {v}")
            clean[n] = v
        self._values = dict(sorted(clean.items()))

    def for_order(self, n: int) -> float:
        try:
            return self._values[n]
        except KeyError:
            raise MissingRandomIndex(n) from None

    def __contains__(self, n):
        return n in self._values

    def as_dict(self) -> dict[int, float]:
        return dict(self._values)

    def to_json(self) -> str:
        return json.dumps({str(n): v for n, v in self._values.items()})

    @classmethod
    def from_json(cls, text: str) -> "RandomIndexTable":
        return cls({int(k): float(v) for k, v in json.loads(text).items()})

    def __eq__(self, other):
        return isinstance(other, RandomIndexTable) and self._values == other._values

    def __repr__(self):
        return f"RandomIndexTable({self._values})"


DEFAULT_RI = RandomIndexTable(DEFAULT_RI_VALUES)


@dataclass(frozen=True)
class IndexReport:
    """One index evaluation with its diagnostic detail."""

    kind: IndexKind
    value: float
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"kind": self.kind.value, "value": self.value}
        detail = {}
        for k, v in self.detail.items():
            if isinstance(v, TriadIndex):
                detail[k] = [v.i, v.j, v.k]
            elif isinstance(v, np.ndarray):
                detail[k] = [float(x) for x in v]
            elif isinstance(v, list):
                items = []
                for item in v:
                    if (isinstance(item, tuple) and len(item) == 2
                            and isinstance(item[0], TriadIndex)):
                        t, d = item
                        items.append({"triad": [t.i, t.j, t.k], "det": d})
                    else:
                        items.append(item)
                detail[k] = items
            else:
                detail[k] = v
        out["detail"] = detail
        return out


@dataclass(frozen=True)
class Thresholds:
    """An acceptance threshold in index units and in constraint units."""

    kind: IndexKind
    alpha: float
    alpha_star: float


# ---------------------------------------------------------------------------
# CR: Perron root machinery

def lambda_max(matrix: ComparisonMatrix, tol: float = 1e-10):
    """Dominant eigenvalue and normalized Perron vector via power iteration.

    Stops once the Collatz-Wielandt bracket and the infinity-norm residual
    are below `tol`; a positive matrix guarantees convergence, so hitting
    the iteration cap (100 n) signals numerical pathology.
    """
    lam, w, _ = _perron_pair(matrix.values, tol=tol, cap=100 * matrix.n, want_left=False)
    return lam, w


def _perron_pair(A: np.ndarray, tol: float = 1e-12, cap: int = 2000,
                 want_left: bool = True, w0=None, u0=None):
    """Power iteration for the right (and optionally left) Perron vectors."""
    n = A.shape[0]
    w = np.full(n, 1.0 / n) if w0 is None else w0.copy()
    u = (np.full(n, 1.0 / n) if u0 is None else u0.copy()) if want_left else None
    lam = float(n)
    At = A.T if want_left else None
    for _ in range(cap):
        y = A @ w
        r = y / w
        lo = r.min()
        hi = r.max()
        lam = 0.5 * (lo + hi)
        w = y / y.sum()
        if want_left:
            x = At @ u
            u = x / x.sum()
        if hi - lo <= tol * lam:
            resid = np.abs(A @ w - lam * w).max() / np.abs(w).max()
            if resid <= tol * max(1.0, lam):
                return lam, w, u
    raise ConvergenceFailure(
        f"power iteration did not reach tolerance {tol} within {cap} iterations"
    )


def cr(matrix: ComparisonMatrix, ri: RandomIndexTable = DEFAULT_RI,
       tol: float = 1e-10) -> IndexReport:
    """Saaty's consistency ratio (lambda_max - n) / ((n-1) RI_n)."""
    ri_n = ri.for_order(matrix.n)
    lam, w = lambda_max(matrix, tol=tol)
    value = (lam - matrix.n) / ((matrix.n - 1) * ri_n)
    return IndexReport(IndexKind.CR, value,
                       {"lambda_max": lam, "weights": [float(x) for x in w], "ri_n": ri_n})


def estimate_ri(n: int, samples: int, seed: int = 0) -> float:
    """Monte Carlo estimate of RI_n: mean of (lambda_max - n)/(n - 1) over
    random matrices with upper-triangle entries drawn uniformly from the
    17-value Saaty scale.

    RNG is Philox (counter-based) keyed by `seed`; one uniform integer in
    [0, 17) per upper-triangle cell, row-major, sample by sample, so runs
    are reproducible from the seed alone.
    """
    if n < 3:
        raise ValueError(f"order must be >= 3, got {n}")
    if samples < 1:
        raise ValueError(f"need at least one sample, got {samples}")
    gen = np.random.Generator(np.random.Philox(seed))
    scale = np.asarray(SAATY_SCALE)
    iu = np.triu_indices(n, 1)
    total = 0.0
    remaining = samples
    chunk = 20000
    while remaining > 0:
        b = min(chunk, remaining)
        draws = scale[gen.integers(0, 17, size=(b, len(iu[0])))]
        A = np.ones((b, n, n))
        A[:, iu[0], iu[1]] = draws
        A[:, iu[1], iu[0]] = 1.0 / draws
        lam = _batched_lambda(A)
        total += float((lam - n).sum() / (n - 1))
        remaining -= b
    return total / samples


def _batched_lambda(A: np.ndarray, tol: float = 1e-11, cap: int = 1500) -> np.ndarray:
    b, n, _ = A.shape
    w = np.full((b, n), 1.0 / n)
    lam = np.full(b, float(n))
    for _ in range(cap):
        y = np.einsum("bij,bj->bi", A, w)
        r = y / w
        lo = r.min(axis=1)
        hi = r.max(axis=1)
        lam = 0.5 * (lo + hi)
        w = y / y.sum(axis=1, keepdims=True)
        if (hi - lo <= tol * lam).all():
            return lam
    raise ConvergenceFailure("batched power iteration stalled")


# ---------------------------------------------------------------------------
# CM: worst-triad relative error

def cm_triad(a: float, b: float, c: float):
    """CM and T for the triad [[1,a,b],[1/a,1,c],[1/b,1/c,1]].

    Returns (CM, T) with T = max(ac/b, b/ac) >= 1 and
    CM = min((1/a)|a-b/c|, (1/b)|b-ac|, (1/c)|c-b/a|) = 1 - 1/T in [0, 1).
    """
    if a <= 0 or b <= 0 or c <= 0:
        raise ValueError("triad entries must be positive")
    cm_val = min(abs(a - b / c) / a, abs(b - a * c) / b, abs(c - b / a) / c)
    t_val = max(a * c / b, b / (a * c))
    return cm_val, t_val


def cm(matrix: ComparisonMatrix) -> IndexReport:
    """Koczkodaj-Duszak index: worst cm_triad over all triads.

    detail carries the worst triad and z_opt, the maximal absolute triad
    log sum; 1 - exp(-z_opt) reproduces the value through the T transform.
    """
    logm = pcm.to_log(matrix)
    v = matrix.values
    best_val = 0.0
    worst = None
    z_opt = 0.0
    for t in pcm.triads(matrix.n):
        i, j, k = t.zero_based()
        val, _ = cm_triad(v[i, j], v[i, k], v[j, k])
        if val > best_val:
            best_val = val
            worst = t
        z = abs(pcm.triad_log_sum(logm, t))
        if z > z_opt:
            z_opt = z
    if worst is None:
        worst = pcm.triads(matrix.n)[0]
    return IndexReport(IndexKind.CM, best_val, {"worst_triad": worst, "z_opt": z_opt})


# ---------------------------------------------------------------------------
# CI: average triad determinant

def triad_det(a_ij: float, a_ik: float, a_jk: float) -> float:
    """Determinant of one triad: q + 1/q - 2 with q = a_ik / (a_ij a_jk)."""
    q = a_ik / (a_ij * a_jk)
    return q + 1.0 / q - 2.0


def ci(matrix: ComparisonMatrix) -> IndexReport:
    """Pelaez-Lamata index: the triad determinant for n = 3, otherwise the
    average determinant over all triads."""
    v = matrix.values
    dets = []
    for t in pcm.triads(matrix.n):
        i, j, k = t.zero_based()
        dets.append((t, triad_det(v[i, j], v[i, k], v[j, k])))
    value = sum(d for _, d in dets) / len(dets)
    return IndexReport(IndexKind.CI, value, {"triad_dets": dets})


# ---------------------------------------------------------------------------
# evaluation and threshold transforms

def evaluate(kind: IndexKind, matrix: ComparisonMatrix,
             ri: RandomIndexTable = DEFAULT_RI) -> IndexReport:
    if kind == IndexKind.CR:
        return cr(matrix, ri)
    if kind == IndexKind.CM:
        return cm(matrix)
    return ci(matrix)


def threshold_transform(kind: IndexKind, alpha: float, n: int,
                        ri: RandomIndexTable = DEFAULT_RI) -> Thresholds:
    """Map an index-units threshold into the solver's constraint units.

    CR: alpha* = n + RI_n (n-1) alpha (a bound on lambda_max);
    CM: alpha* = ln(1/(1-alpha)) (a bound on the worst |triad log sum|);
    CI: alpha* = (alpha+2) C(n,3) (a bound on the exponential triad sum).
    """
    if kind == IndexKind.CM:
        if not (0.0 <= alpha < 1.0):
            raise ThresholdOutOfRange(f"CM threshold must be in [0, 1), got {alpha}")
        return Thresholds(kind, alpha, math.log(1.0 / (1.0 - alpha)))
    if alpha < 0:
        raise ThresholdOutOfRange(f"threshold must be >= 0, got {alpha}")
    if kind == IndexKind.CR:
        ri_n = ri.for_order(n)
        return Thresholds(kind, alpha, n + ri_n * (n - 1) * alpha)
    return Thresholds(kind, alpha, (alpha + 2.0) * math.comb(n, 3))


def back_transform(kind: IndexKind, objective: float, n: int,
                   ri: RandomIndexTable = DEFAULT_RI) -> float:
    """Map a solver optimum back into index units (inverse of the transform)."""
    if kind == IndexKind.CR:
        return (objective - n) / (ri.for_order(n) * (n - 1))
    if kind == IndexKind.CM:
        return 1.0 - math.exp(-objective)
    return objective / math.comb(n, 3) - 2.0
