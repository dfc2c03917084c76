"""Minimal-change repair search over binary pin/free patterns.

Two modes: find the fewest upper-triangle cells to free so the index drops
below a threshold (plus enumeration of every optimal cell set), or find the
lowest index value reachable with at most K freed cells. The primary path
enumerates patterns cardinality by cardinality and solves one convex
subproblem per pattern; a branch-and-bound over the binary pattern tree
with exclusion cuts serves as an independent cross-check oracle.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import convex, indices, pcm
from .convex import SolveStatus, SubproblemSpec
from .errors import (
    BranchLimit,
    DeadlineExceeded,
    InadmissibleQuery,
    WorkBudgetExceeded,
)
from .indices import DEFAULT_RI, IndexKind, RandomIndexTable
from .pcm import ComparisonMatrix, Position, ScaleBound

FEASIBILITY_SLACK = 1e-6  # index-units slack absorbed on the feasible side
SOLVER_TOL = 1e-8
TIE_TOL = 1e-9


@dataclass(frozen=True)
class MinChanges:
    alpha: float


@dataclass(frozen=True)
class MinIndex:
    budget: int


@dataclass(frozen=True)
class ReductionQuery:
    matrix: ComparisonMatrix
    kind: IndexKind
    mode: MinChanges | MinIndex
    bound: ScaleBound = pcm.DEFAULT_BOUND
    ri: RandomIndexTable = DEFAULT_RI

    def __post_init__(self):
        n = self.matrix.n
        for i in range(n):
            for j in range(i + 1, n):
                if not self.bound.admits(self.matrix.values[i, j]):
                    raise InadmissibleQuery(
                        f"entry ({i + 1},{j + 1}) = {self.matrix.values[i, j]} "
                        f"lies outside [1/{self.bound.M}, {self.bound.M}]")
        if isinstance(self.mode, MinChanges):
            # raises ThresholdOutOfRange for invalid alpha
            indices.threshold_transform(self.kind, self.mode.alpha, n, self.ri)
        else:
            p = n * (n - 1) // 2
            if not (0 <= self.mode.budget <= p):
                raise InadmissibleQuery(
                    f"budget must be in [0, {p}], got {self.mode.budget}")

    @property
    def positions(self) -> list[Position]:
        n = self.matrix.n
        return [Position(i + 1, j + 1) for i in range(n) for j in range(i + 1, n)]


@dataclass(frozen=True)
class Limits:
    """Optional work guards; checked between subproblem solves."""

    max_subproblems: int | None = None
    deadline: float | None = None  # absolute time.monotonic() value

    def check_deadline(self, stats):
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise DeadlineExceeded(stats)


@dataclass
class ReductionStats:
    subproblems: int = 0
    screened: int = 0
    nodes: int = 0
    wall_time_s: float = 0.0
    ties: list = field(default_factory=list)

    def to_json(self):
        return {"subproblems": self.subproblems, "screened": self.screened,
                "nodes": self.nodes, "wall_time_s": self.wall_time_s,
                "ties": [[[p.i, p.j] for p in t] for t in self.ties]}


@dataclass(frozen=True)
class Solution:
    positions: tuple[Position, ...]
    witness: ComparisonMatrix
    achieved: float

    def to_json(self):
        return {"positions": [[p.i, p.j] for p in self.positions],
                "witness": [[self.witness.values[i, j] for j in range(self.witness.n)]
                            for i in range(self.witness.n)],
                "achieved": self.achieved}


@dataclass(frozen=True)
class ReductionResult:
    kind: IndexKind
    mode: MinChanges | MinIndex
    solutions: tuple[Solution, ...]
    stats: ReductionStats
    l_star: int | None = None
    alpha_opt: float | None = None

    def to_json(self):
        out = {"kind": self.kind.value, "stats": self.stats.to_json(),
               "solutions": [s.to_json() for s in self.solutions]}
        if isinstance(self.mode, MinChanges):
            out["mode"] = "min_changes"
            out["alpha"] = self.mode.alpha
            out["l_star"] = self.l_star
        else:
            out["mode"] = "min_index"
            out["budget"] = self.mode.budget
            out["alpha_opt"] = self.alpha_opt
        return out


# ---------------------------------------------------------------------------
# shared per-query engine

class _Engine:
    """Feasibility/minimization oracle over free-position subsets, with
    exact infeasibility screens and per-subset memoization."""

    def __init__(self, query: ReductionQuery, limits: Limits | None = None):
        self.q = query
        self.limits = limits or Limits()
        self.kind = query.kind
        self.n = query.matrix.n
        self.logm = pcm.to_log(query.matrix)
        self.bound = query.bound
        self.positions = query.positions
        self.P = len(self.positions)
        self.stats = ReductionStats()
        self.pos_index = {p: t for t, p in enumerate(self.positions)}
        self._triad_masks = []
        self._triad_sigma = []
        for t in pcm.triads(self.n):
            mask = 0
            for p in t.positions():
                mask |= 1 << self.pos_index[p]
            self._triad_masks.append(mask)
            self._triad_sigma.append(pcm.triad_log_sum(self.logm, t))
        order = sorted(range(len(self._triad_masks)),
                       key=lambda r: -abs(self._triad_sigma[r]))
        self._triad_masks = [self._triad_masks[r] for r in order]
        self._triad_sigma = [self._triad_sigma[r] for r in order]
        self._feas_memo: dict[tuple, bool] = {}
        self._report_memo: dict[tuple, convex.SolveReport] = {}
        self._min_memo: dict[tuple, float] = {}
        if isinstance(query.mode, MinChanges):
            base_star = indices.threshold_transform(
                self.kind, query.mode.alpha, self.n, query.ri).alpha_star
            alpha_slacked = query.mode.alpha + FEASIBILITY_SLACK
            if self.kind == IndexKind.CM:
                alpha_slacked = min(alpha_slacked, 1.0 - 1e-12)
            self.alpha_star = base_star
            self.alpha_star_eff = indices.threshold_transform(
                self.kind, alpha_slacked, self.n, query.ri).alpha_star
        else:
            self.alpha_star = self.alpha_star_eff = None

    # -- infeasibility screens: exact lower bounds from fully pinned triads
    def _screened_infeasible(self, mask: int) -> bool:
        thr = self.alpha_star_eff
        if self.kind == IndexKind.CM:
            for tm, sg in zip(self._triad_masks, self._triad_sigma):
                if tm & mask == 0:
                    return abs(sg) > thr + 1e-12
            return False
        if self.kind == IndexKind.CI:
            lb = 2.0 * len(self._triad_masks)
            for tm, sg in zip(self._triad_masks, self._triad_sigma):
                if tm & mask == 0:
                    lb += math.exp(sg) + math.exp(-sg) - 2.0
                    if lb > thr + 1e-12:
                        return True
            return False
        # CR: Perron root of any fully pinned triad bounds the whole matrix
        for tm, sg in zip(self._triad_masks, self._triad_sigma):
            if tm & mask == 0:
                t = math.exp(abs(sg))
                lam3 = 1.0 + t ** (1.0 / 3.0) + t ** (-1.0 / 3.0)
                return lam3 > thr + 1e-9
        return False

    def _mask(self, subset) -> int:
        m = 0
        for p in subset:
            m |= 1 << self.pos_index[p]
        return m

    def _spec(self, subset) -> SubproblemSpec:
        return SubproblemSpec(self.logm, tuple(subset), self.bound)

    def feasible(self, subset) -> bool:
        key = tuple(subset)
        hit = self._feas_memo.get(key)
        if hit is not None:
            return hit
        self.limits.check_deadline(self.stats)
        if self._screened_infeasible(self._mask(subset)):
            self.stats.screened += 1
            self._feas_memo[key] = False
            return False
        self.stats.subproblems += 1
        spec = self._spec(subset)
        slack = self.alpha_star_eff - self.alpha_star
        if self.kind == IndexKind.CR:
            rep = convex.feasible_cr(spec, self.alpha_star, tol=slack)
        elif self.kind == IndexKind.CM:
            rep = convex.feasible_cm(spec, self.alpha_star, tol=slack)
        else:
            rep = convex.feasible_ci(spec, self.alpha_star, tol=slack)
        ok = rep.status == SolveStatus.FEASIBLE
        self._feas_memo[key] = ok
        if ok:
            self._report_memo[key] = rep
        return ok

    def witness_report(self, subset) -> convex.SolveReport:
        key = tuple(subset)
        if key not in self._report_memo:
            self.feasible(subset)
        return self._report_memo[key]

    def min_value(self, subset) -> float:
        """Full-accuracy minimum of the transformed objective."""
        key = tuple(subset)
        hit = self._min_memo.get(key)
        if hit is not None:
            return hit
        self.limits.check_deadline(self.stats)
        self.stats.subproblems += 1
        rep = self.min_report(subset)
        self._min_memo[key] = rep.objective
        return rep.objective

    def min_report(self, subset) -> convex.SolveReport:
        spec = self._spec(subset)
        if self.kind == IndexKind.CR:
            return convex.min_lambda_cr(spec, tol=SOLVER_TOL)
        if self.kind == IndexKind.CM:
            return convex.min_cm(spec)
        return convex.min_ci(spec, tol=SOLVER_TOL)

    def build_solution(self, subset, rep: convex.SolveReport) -> Solution:
        witness_log = rep.witness_log(self._spec(subset))
        witness = pcm.from_log(witness_log)
        witness = self._ensure_distance(subset, witness)
        achieved = indices.evaluate(self.kind, witness, self.q.ri).value
        return Solution(tuple(subset), witness, achieved)

    def _ensure_distance(self, subset, witness: ComparisonMatrix) -> ComparisonMatrix:
        """Nudge freed cells that landed exactly on the base value so the
        reported distance equals the set size; keeps feasibility checked."""
        if isinstance(self.q.mode, MinIndex):
            return witness
        stuck = [p for p in subset
                 if abs(math.log(witness.entry(p.i, p.j))
                        - self.logm.entry(p.i, p.j)) <= pcm.LOG_DISTANCE_TOL]
        if not stuck:
            return witness
        for p in stuck:
            base = self.logm.entry(p.i, p.j)
            for delta in (3e-9, -3e-9):
                v = base + delta
                if abs(v) > self.bound.log_bound:
                    continue
                cand = witness.replace({p: math.exp(v)})
                val = indices.evaluate(self.kind, cand, self.q.ri).value
                if val <= self.q.mode.alpha + FEASIBILITY_SLACK:
                    witness = cand
                    break
        return witness


# ---------------------------------------------------------------------------
# primary path: cardinality-ordered subset search

def _search_min_changes(query: ReductionQuery, enumerate_all: bool,
                        limits: Limits | None) -> ReductionResult:
    t0 = time.perf_counter()
    eng = _Engine(query, limits)
    lim = eng.limits
    found_k = None
    found_sets: list[tuple[Position, ...]] = []
    for k in range(eng.P + 1):
        if lim.max_subproblems is not None:
            projected = eng.stats.subproblems + math.comb(eng.P, k)
            if projected > lim.max_subproblems:
                raise WorkBudgetExceeded(projected, lim.max_subproblems)
        for subset in itertools.combinations(eng.positions, k):
            if eng.feasible(subset):
                found_sets.append(subset)
                if not enumerate_all:
                    break
        if found_sets:
            found_k = k
            break
    solutions = tuple(eng.build_solution(s, eng.witness_report(s)) for s in found_sets)
    eng.stats.wall_time_s = time.perf_counter() - t0
    return ReductionResult(query.kind, query.mode, solutions, eng.stats, l_star=found_k)


def min_changes(query: ReductionQuery, limits: Limits | None = None) -> ReductionResult:
    """Smallest number of freed cells admitting an acceptable witness;
    reports the lexicographically first optimal set."""
    if not isinstance(query.mode, MinChanges):
        raise InadmissibleQuery("min_changes requires a MinChanges query")
    return _search_min_changes(query, enumerate_all=False, limits=limits)


def enumerate_optimal(query: ReductionQuery, limits: Limits | None = None) -> ReductionResult:
    """All optimal position sets of cardinality L*, lexicographically sorted."""
    if not isinstance(query.mode, MinChanges):
        raise InadmissibleQuery("enumerate_optimal requires a MinChanges query")
    return _search_min_changes(query, enumerate_all=True, limits=limits)


def min_index(query: ReductionQuery, limits: Limits | None = None) -> ReductionResult:
    """Lowest index value reachable by freeing at most K cells.

    Only subsets of size exactly K are solved (freeing more cells never
    hurts); the reported position set is trimmed to the cells where the
    witness actually moved.
    """
    if not isinstance(query.mode, MinIndex):
        raise InadmissibleQuery("min_index requires a MinIndex query")
    t0 = time.perf_counter()
    eng = _Engine(query, limits)
    lim = eng.limits
    k = query.mode.budget
    if lim.max_subproblems is not None:
        projected = math.comb(eng.P, k)
        if projected > lim.max_subproblems:
            raise WorkBudgetExceeded(projected, lim.max_subproblems)
    best_obj = math.inf
    best_subset = None
    best_rep = None
    ties = []
    if k == 0:
        rep = eng.min_report(())
        eng.stats.subproblems += 1
        best_obj, best_subset, best_rep = rep.objective, (), rep
    else:
        for subset in itertools.combinations(eng.positions, k):
            lim.check_deadline(eng.stats)
            eng.stats.subproblems += 1
            rep = eng.min_report(subset)
            if rep.objective < best_obj - TIE_TOL:
                best_obj, best_subset, best_rep = rep.objective, subset, rep
                ties = []
            elif abs(rep.objective - best_obj) <= TIE_TOL:
                ties.append(subset)
    alpha_opt = indices.back_transform(query.kind, best_obj, eng.n, query.ri)
    witness = pcm.from_log(best_rep.witness_log(eng._spec(best_subset)))
    moved = tuple(p for p in best_subset
                  if abs(math.log(witness.entry(p.i, p.j))
                         - eng.logm.entry(p.i, p.j)) > pcm.LOG_DISTANCE_TOL)
    achieved = indices.evaluate(query.kind, witness, query.ri).value
    eng.stats.ties = [tuple(t) for t in ties]
    eng.stats.wall_time_s = time.perf_counter() - t0
    return ReductionResult(query.kind, query.mode,
                           (Solution(moved, witness, achieved),),
                           eng.stats, alpha_opt=alpha_opt)


# ---------------------------------------------------------------------------
# Big-M cross-check oracle: branch-and-bound on the binary pattern tree

DEFAULT_NODE_CAP = 2_000_000


def bigm_oracle(query: ReductionQuery, limits: Limits | None = None,
                node_cap: int = DEFAULT_NODE_CAP) -> ReductionResult:
    """Solve the monolithic mixed 0-1 program by branch-and-bound on the
    binary variables, relaxing undecided cells to fully free; for the
    threshold mode, all optimal patterns are recovered with an exclusion-cut
    loop. Exists as an independent cross-check of the enumeration path."""
    t0 = time.perf_counter()
    eng = _Engine(query, limits)
    if isinstance(query.mode, MinChanges):
        result = _bigm_min_changes(query, eng, node_cap)
    else:
        result = _bigm_min_index(query, eng, node_cap)
    eng.stats.wall_time_s = time.perf_counter() - t0
    return result


def _bigm_min_changes(query, eng: _Engine, node_cap: int) -> ReductionResult:
    positions = eng.positions
    P = eng.P

    def find_lstar():
        best = [P]  # the all-free pattern is always feasible

        def rec(idx, chosen):
            eng.stats.nodes += 1
            if eng.stats.nodes > node_cap:
                raise BranchLimit(f"exceeded {node_cap} nodes")
            if len(chosen) >= best[0]:
                return
            relax = tuple(chosen) + tuple(positions[idx:])
            if not eng.feasible(tuple(sorted(relax))):
                return
            if eng.feasible(tuple(chosen)):
                best[0] = len(chosen)
                return
            if idx == P:
                return
            rec(idx + 1, chosen)
            rec(idx + 1, chosen + [positions[idx]])

        rec(0, [])
        return best[0]

    l_star = find_lstar()

    def find_new_solution(known: set):
        """First (DFS order) feasible pattern of size l_star not yet known;
        exclusion cuts demand a freed cell outside each known pattern."""

        def rec(idx, chosen):
            eng.stats.nodes += 1
            if eng.stats.nodes > node_cap:
                raise BranchLimit(f"exceeded {node_cap} nodes")
            if len(chosen) > l_star:
                return None
            rest = positions[idx:]
            if len(chosen) + len(rest) < l_star:
                return None
            avail = set(chosen) | set(rest)
            for sol in known:
                if avail <= set(sol):
                    return None
            if not eng.feasible(tuple(sorted(tuple(chosen) + tuple(rest)))):
                return None
            if len(chosen) == l_star:
                cand = tuple(sorted(chosen))
                if cand in known:
                    return None
                if eng.feasible(cand):
                    return cand
                return None
            if idx == P:
                return None
            hit = rec(idx + 1, chosen)
            if hit is not None:
                return hit
            return rec(idx + 1, chosen + [positions[idx]])

        return rec(0, [])

    known: set = set()
    while True:
        sol = find_new_solution(known)
        if sol is None:
            break
        known.add(sol)
    sols = sorted(known)
    solutions = tuple(eng.build_solution(s, eng.witness_report(s)) for s in sols)
    return ReductionResult(query.kind, query.mode, solutions, eng.stats, l_star=l_star)


def _bigm_min_index(query, eng: _Engine, node_cap: int) -> ReductionResult:
    positions = eng.positions
    P = eng.P
    K = query.mode.budget
    best = {"obj": math.inf, "set": None}

    def leaf(chosen):
        v = eng.min_value(tuple(sorted(chosen)))
        cand = tuple(sorted(chosen))
        if v < best["obj"] - TIE_TOL:
            best["obj"], best["set"] = v, cand
        elif abs(v - best["obj"]) <= TIE_TOL and cand < best["set"]:
            best["set"] = cand

    def rec(idx, chosen):
        eng.stats.nodes += 1
        if eng.stats.nodes > node_cap:
            raise BranchLimit(f"exceeded {node_cap} nodes")
        if len(chosen) > K:
            return
        if len(chosen) == K or idx == P:
            leaf(chosen)
            return
        relax = tuple(sorted(tuple(chosen) + tuple(positions[idx:])))
        if eng.min_value(relax) > best["obj"] + TIE_TOL:
            return
        rec(idx + 1, chosen)
        rec(idx + 1, chosen + [positions[idx]])

    rec(0, [])
    rep = eng.min_report(best["set"])
    alpha_opt = indices.back_transform(query.kind, best["obj"], eng.n, query.ri)
    witness = pcm.from_log(rep.witness_log(eng._spec(best["set"])))
    moved = tuple(p for p in best["set"]
                  if abs(math.log(witness.entry(p.i, p.j))
                         - eng.logm.entry(p.i, p.j)) > pcm.LOG_DISTANCE_TOL)
    achieved = indices.evaluate(query.kind, witness, query.ri).value
    return ReductionResult(query.kind, query.mode,
                           (Solution(moved, witness, achieved),),
                           eng.stats, alpha_opt=alpha_opt)


# ---------------------------------------------------------------------------
# presentation helper: Saaty-scale rounding of witnesses

def round_witness_to_scale(solution: Solution, query: ReductionQuery):
    """Round the witness's freed cells to the nearest Saaty-scale value and
    re-check acceptability. Returns (rounded matrix, still_acceptable)."""
    scale = np.asarray(indices.SAATY_SCALE)
    log_scale = np.log(scale)
    edits = {}
    for p in solution.positions:
        v = math.log(solution.witness.entry(p.i, p.j))
        edits[p] = float(scale[np.argmin(np.abs(log_scale - v))])
    rounded = solution.witness.replace(edits)
    val = indices.evaluate(query.kind, rounded, query.ri).value
    if isinstance(query.mode, MinChanges):
        ok = val <= query.mode.alpha + FEASIBILITY_SLACK
    else:
        ok = val <= solution.achieved + FEASIBILITY_SLACK
    return rounded, bool(ok), val
