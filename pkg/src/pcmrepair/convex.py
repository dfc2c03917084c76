"""Continuous subproblems in log space: a fixed pin/free partition of the
upper triangle, box bounds on the free cells, and one convex objective per
index kind.

CR minimizes the Perron root directly (smooth and convex in the log
entries) with analytic eigenvector gradients under projected quasi-Newton.
CM is an exact linear minimax program solved by simplex. CI is a smooth
sum of exponentials solved by projected quasi-Newton.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize

from . import pcm
from .errors import ConvergenceFailure, InadmissibleSpec
from .pcm import LogMatrix, Position, ScaleBound

DEFAULT_TOL = 1e-8
ITERATION_CAP = 10000


class SolveStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True)
class SubproblemSpec:
    """Pinned log matrix + free upper-triangle cells + box bound."""

    base: LogMatrix
    free: tuple[Position, ...]
    bound: ScaleBound

    def __post_init__(self):
        n = self.base.n
        seen = set()
        for p in self.free:
            if p.j > n:
                raise InadmissibleSpec(f"free position ({p.i},{p.j}) outside order {n}")
            if p in seen:
                raise InadmissibleSpec(f"duplicate free position ({p.i},{p.j})")
            seen.add(p)
        object.__setattr__(self, "free", tuple(sorted(self.free)))
        mbar = self.bound.log_bound
        for i in range(n):
            for j in range(i + 1, n):
                if Position(i + 1, j + 1) in seen:
                    continue
                if abs(self.base.values[i, j]) > mbar + 1e-12:
                    raise InadmissibleSpec(
                        f"pinned entry ({i + 1},{j + 1}) lies outside the bound "
                        f"[1/{self.bound.M}, {self.bound.M}]"
                    )

    @property
    def n(self) -> int:
        return self.base.n

    def free_zero_based(self):
        return [(p.i - 1, p.j - 1) for p in self.free]


@dataclass(frozen=True)
class SolveReport:
    status: SolveStatus
    objective: float
    x: dict[Position, float] = field(default_factory=dict)
    aux: dict = field(default_factory=dict)
    iterations: int = 0
    kkt_residual: float = 0.0

    def to_json(self) -> dict:
        return {
            "status": self.status.value,
            "objective": self.objective,
            "x": [{"i": p.i, "j": p.j, "value": v} for p, v in sorted(self.x.items())],
            "aux": {k: (list(map(float, v)) if isinstance(v, np.ndarray) else v)
                    for k, v in self.aux.items()},
            "iterations": self.iterations,
            "kkt_residual": self.kkt_residual,
        }

    def witness_log(self, spec: SubproblemSpec) -> LogMatrix:
        """Base matrix with the solved free values substituted."""
        vals = spec.base.values.copy()
        for p, v in self.x.items():
            a, b = p.zero_based()
            vals[a, b] = v
            vals[b, a] = -v
        return LogMatrix(vals)


def _x_dict(spec: SubproblemSpec, xf) -> dict[Position, float]:
    return {p: float(v) for p, v in zip(spec.free, xf)}


# ---------------------------------------------------------------------------
# CR subproblem

class _Feasible(Exception):
    pass


class _Infeasible(Exception):
    def __init__(self, lower):
        self.lower = lower


def _certified_lower(f, xf, g, mbar):
    """Valid lower bound on the box-constrained minimum of a convex function
    from one (value, gradient) pair: f(x*) >= f(x) + g . (x* - x), with each
    coordinate's move bounded by its remaining room inside the box."""
    if len(xf) == 0:
        return f
    drop = np.where(g > 0, g * (xf + mbar), -g * (mbar - xf))
    return f - float(drop.sum())


class _CrProblem:
    """min lambda_max(exp X) over free cells; warm-started Perron pairs."""

    def __init__(self, spec: SubproblemSpec, eig_tol: float = 1e-12):
        self.spec = spec
        self.n = spec.n
        pairs = spec.free_zero_based()
        self.fi = np.array([p[0] for p in pairs], dtype=int)
        self.fj = np.array([p[1] for p in pairs], dtype=int)
        self.nf = len(pairs)
        self.Xb = spec.base.values
        self.mbar = spec.bound.log_bound
        self.eig_tol = eig_tol
        self.w = np.full(self.n, 1.0 / self.n)
        self.u = np.full(self.n, 1.0 / self.n)
        self.nev = 0

    def matrix_at(self, xf):
        X = self.Xb.copy()
        if self.nf:
            X[self.fi, self.fj] = xf
            X[self.fj, self.fi] = -xf
        return np.exp(X)

    def lam_grad(self, xf):
        self.nev += 1
        A = self.matrix_at(xf)
        lam, w, u = _perron_warm(A, self.w, self.u, self.eig_tol)
        self.w, self.u = w, u
        uw = u @ w
        g = (u[self.fi] * w[self.fj] * A[self.fi, self.fj]
             - u[self.fj] * w[self.fi] * A[self.fj, self.fi]) / uw
        return lam, g

    def projected_gradient(self, xf, g):
        pg = g.copy()
        at_lo = xf <= -self.mbar + 1e-12
        at_hi = xf >= self.mbar - 1e-12
        pg[at_lo & (pg > 0)] = 0.0
        pg[at_hi & (pg < 0)] = 0.0
        return pg

    def start(self):
        if self.nf == 0:
            return np.zeros(0)
        return np.clip(self.Xb[self.fi, self.fj], -self.mbar, self.mbar)


def _perron_warm(A, w0, u0, tol, cap=5000):
    w = w0
    u = u0
    At = A.T
    lam = 0.0
    for _ in range(cap):
        y = A @ w
        r = y / w
        lo = r.min()
        hi = r.max()
        lam = 0.5 * (lo + hi)
        w = y / y.sum()
        x = At @ u
        u = x / x.sum()
        if hi - lo <= tol * lam:
            return lam, w, u
    raise ConvergenceFailure("Perron iteration stalled inside the CR solver")


def _solve_cr(spec: SubproblemSpec, tol: float, feas_threshold=None):
    """Shared engine for min_lambda_cr and feasible_cr."""
    prob = _CrProblem(spec)
    best = {"f": math.inf, "x": prob.start(), "lower": -math.inf,
            "g": np.zeros(prob.nf)}

    def fg(xf):
        lam, g = prob.lam_grad(xf)
        if lam < best["f"]:
            best["f"] = lam
            best["x"] = xf.copy()
            best["g"] = g.copy()
        if feas_threshold is not None:
            if lam <= feas_threshold:
                raise _Feasible
            lb = _certified_lower(lam, xf, g, prob.mbar)
            if lb > best["lower"]:
                best["lower"] = lb
            if lb > feas_threshold:
                raise _Infeasible(lb)
        return lam, g

    x0 = prob.start()
    early = False
    if prob.nf == 0:
        lam, _ = prob.lam_grad(x0)
        best["f"] = lam
        res = None
    else:
        try:
            res = minimize(fg, x0, jac=True, method="L-BFGS-B",
                           bounds=[(-prob.mbar, prob.mbar)] * prob.nf,
                           options=dict(maxiter=ITERATION_CAP // 10,
                                        maxfun=ITERATION_CAP,
                                        ftol=1e-16, gtol=min(tol, 1e-9) * 1e-2))
        except _Feasible:
            early = True
            res = None
        except _Infeasible:
            pg = prob.projected_gradient(best["x"], best["g"])
            return (prob, best["f"], best["x"], float(np.abs(pg).max()),
                    True, best["lower"], False)
    xf = best["x"]
    lam, g = prob.lam_grad(xf) if prob.nf else (best["f"], np.zeros(0))
    if lam < best["f"]:
        best["f"], best["x"] = lam, xf
    pg = prob.projected_gradient(xf, g) if prob.nf else np.zeros(0)
    kkt = float(np.abs(pg).max()) if prob.nf else 0.0
    converged = early or prob.nf == 0 or (res is not None and kkt <= max(tol, 1e-9))
    lower = max(best["lower"],
                _certified_lower(lam, xf, pg, prob.mbar) if prob.nf else lam)
    return prob, best["f"], xf, kkt, converged, lower, early


def min_lambda_cr(spec: SubproblemSpec, tol: float = DEFAULT_TOL) -> SolveReport:
    """Minimize the Perron root over the free cells within the box.

    The reported objective is re-checked against a fresh power-iteration
    evaluation of the witness; aux carries lambda and the optimal scaling
    variables z (log Perron vector, z_1 = 0).
    """
    prob, f, xf, kkt, converged, _, _ = _solve_cr(spec, tol)
    x = _x_dict(spec, xf)
    witness = SolveReport(SolveStatus.OPTIMAL, f, x).witness_log(spec)
    from .indices import lambda_max
    lam_check, w = lambda_max(pcm.from_log(witness))
    if abs(lam_check - f) > 10 * max(tol, 1e-12) * max(1.0, abs(f)):
        raise ConvergenceFailure(
            f"CR solver objective {f} disagrees with power iteration {lam_check}")
    z = np.log(w / w[0])
    status = SolveStatus.OPTIMAL if converged else SolveStatus.ITERATION_LIMIT
    return SolveReport(status, float(lam_check), x,
                       aux={"lambda": float(lam_check), "z": [float(v) for v in z]},
                       iterations=prob.nev, kkt_residual=kkt)


def feasible_cr(spec: SubproblemSpec, alpha_star: float,
                tol: float = DEFAULT_TOL) -> SolveReport:
    """Feasible iff the minimal Perron root is <= alpha_star + tol."""
    if alpha_star < spec.n - 1e-9:
        raise InadmissibleSpec(f"CR threshold alpha* must be >= n, got {alpha_star}")
    threshold = alpha_star + tol
    prob, f, xf, kkt, converged, lower, early = _solve_cr(spec, tol,
                                                          feas_threshold=threshold)
    x = _x_dict(spec, xf)
    if f <= threshold:
        return SolveReport(SolveStatus.FEASIBLE, float(f), x,
                           iterations=prob.nev, kkt_residual=kkt)
    if converged or lower > threshold:
        return SolveReport(SolveStatus.INFEASIBLE, float(f), x,
                           iterations=prob.nev, kkt_residual=kkt)
    return SolveReport(SolveStatus.ITERATION_LIMIT, float(f), x,
                       iterations=prob.nev, kkt_residual=kkt)


# ---------------------------------------------------------------------------
# triad linear structure shared by CM and CI

def _triad_rows(spec: SubproblemSpec):
    """Coefficient matrix C and constant vector for sigma_t = x_ij+x_jk-x_ik
    over all triads, split into free-cell coefficients and pinned constants."""
    n = spec.n
    pairs = spec.free_zero_based()
    idx = {p: t for t, p in enumerate(pairs)}
    tri = list(itertools.combinations(range(n), 3))
    C = np.zeros((len(tri), len(pairs)))
    const = np.zeros(len(tri))
    for r, (i, j, k) in enumerate(tri):
        for (a, b, sg) in ((i, j, 1.0), (j, k, 1.0), (i, k, -1.0)):
            t = idx.get((a, b))
            if t is not None:
                C[r, t] += sg
            else:
                const[r] += sg * spec.base.values[a, b]
    return C, const


def min_cm(spec: SubproblemSpec) -> SolveReport:
    """Exact minimax of |triad log sums|: a univariate-objective LP."""
    C, const = _triad_rows(spec)
    nf = len(spec.free)
    nt = C.shape[0]
    mbar = spec.bound.log_bound
    if nf == 0:
        obj = float(np.abs(const).max())
        return SolveReport(SolveStatus.OPTIMAL, obj, {}, iterations=0, kkt_residual=0.0)
    A_ub = np.zeros((2 * nt, nf + 1))
    A_ub[:nt, :nf] = C
    A_ub[nt:, :nf] = -C
    A_ub[:, -1] = -1.0
    b_ub = np.concatenate([-const, const])
    cost = np.zeros(nf + 1)
    cost[-1] = 1.0
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub,
                  bounds=[(-mbar, mbar)] * nf + [(0, None)], method="highs")
    if res.status != 0:
        raise ConvergenceFailure(f"CM linear program failed: {res.message}")
    xf = res.x[:nf]
    sig = C @ xf + const
    obj = float(np.abs(sig).max())
    return SolveReport(SolveStatus.OPTIMAL, obj, _x_dict(spec, xf),
                       iterations=int(res.nit),
                       kkt_residual=float(max(0.0, obj - res.x[-1])))


def feasible_cm(spec: SubproblemSpec, alpha_star: float, tol: float = 0.0) -> SolveReport:
    """Linear feasibility: minimal worst |triad log sum| <= alpha_star + tol."""
    if alpha_star < 0:
        raise InadmissibleSpec(f"CM threshold alpha* must be >= 0, got {alpha_star}")
    rep = min_cm(spec)
    status = SolveStatus.FEASIBLE if rep.objective <= alpha_star + tol else SolveStatus.INFEASIBLE
    return SolveReport(status, rep.objective, rep.x,
                       iterations=rep.iterations, kkt_residual=rep.kkt_residual)


# ---------------------------------------------------------------------------
# CI subproblem

def ci_objective_terms(C, const, xf):
    sig = C @ xf + const if C.shape[1] else const
    ep = np.exp(sig)
    em = np.exp(-sig)
    return float((ep + em).sum()), (ep, em)


def _solve_ci(spec: SubproblemSpec, tol: float, feas_threshold=None):
    C, const = _triad_rows(spec)
    nf = len(spec.free)
    mbar = spec.bound.log_bound
    nev = [0]
    if nf == 0:
        obj, _ = ci_objective_terms(C, const, np.zeros(0))
        return obj, np.zeros(0), 0.0, True, obj, 1, False

    best = {"f": math.inf, "x": None}

    def fg(xf):
        nev[0] += 1
        f, (ep, em) = ci_objective_terms(C, const, xf)
        if f < best["f"]:
            best["f"] = f
            best["x"] = xf.copy()
        if feas_threshold is not None and f <= feas_threshold:
            raise _Feasible
        return f, C.T @ (ep - em)

    x0 = np.clip(spec.base.values[[p[0] for p in spec.free_zero_based()],
                                  [p[1] for p in spec.free_zero_based()]], -mbar, mbar)
    early = False
    try:
        res = minimize(fg, x0, jac=True, method="L-BFGS-B",
                       bounds=[(-mbar, mbar)] * nf,
                       options=dict(maxiter=ITERATION_CAP // 10, maxfun=ITERATION_CAP,
                                    ftol=1e-18, gtol=min(tol, 1e-9) * 1e-2))
    except _Feasible:
        early = True
    xf = best["x"]
    f, (ep, em) = ci_objective_terms(C, const, xf)
    g = C.T @ (ep - em)
    pg = g.copy()
    pg[(xf <= -mbar + 1e-12) & (pg > 0)] = 0.0
    pg[(xf >= mbar - 1e-12) & (pg < 0)] = 0.0
    kkt = float(np.abs(pg).max())
    converged = early or kkt <= max(tol, 1e-9)
    lower = f - float(np.abs(pg).sum()) * 2 * mbar
    return f, xf, kkt, converged, lower, nev[0], early


def min_ci(spec: SubproblemSpec, tol: float = DEFAULT_TOL) -> SolveReport:
    """Minimize the exponential triad sum (smooth, convex) within the box."""
    f, xf, kkt, converged, _, nev, _ = _solve_ci(spec, tol)
    status = SolveStatus.OPTIMAL if converged else SolveStatus.ITERATION_LIMIT
    return SolveReport(status, float(f), _x_dict(spec, xf),
                       iterations=nev, kkt_residual=kkt)


def feasible_ci(spec: SubproblemSpec, alpha_star: float,
                tol: float = DEFAULT_TOL) -> SolveReport:
    """Feasible iff the minimal exponential triad sum is <= alpha_star + tol."""
    min_possible = 2.0 * math.comb(spec.n, 3)
    if alpha_star < min_possible - 1e-9:
        raise InadmissibleSpec(
            f"CI threshold alpha* must be >= 2 C(n,3) = {min_possible}, got {alpha_star}")
    threshold = alpha_star + tol
    f, xf, kkt, converged, lower, nev, early = _solve_ci(spec, tol,
                                                         feas_threshold=threshold)
    x = _x_dict(spec, xf)
    if f <= threshold:
        return SolveReport(SolveStatus.FEASIBLE, float(f), x, iterations=nev,
                           kkt_residual=kkt)
    if converged or lower > threshold:
        return SolveReport(SolveStatus.INFEASIBLE, float(f), x, iterations=nev,
                           kkt_residual=kkt)
    return SolveReport(SolveStatus.ITERATION_LIMIT, float(f), x, iterations=nev,
                       kkt_residual=kkt)


def ci_gradient(spec: SubproblemSpec, xf: np.ndarray) -> np.ndarray:
    """Analytic gradient of the CI objective at a free-cell vector."""
    C, const = _triad_rows(spec)
    _, (ep, em) = ci_objective_terms(C, const, np.asarray(xf, dtype=float))
    return C.T @ (ep - em)


def ci_value(spec: SubproblemSpec, xf: np.ndarray) -> float:
    C, const = _triad_rows(spec)
    return ci_objective_terms(C, const, np.asarray(xf, dtype=float))[0]
