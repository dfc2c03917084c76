"""Stateless HTTP JSON facade over evaluation, repair search, and what-if
edits. Numeric fields are passed through from the core modules untouched.
"""
from __future__ import annotations

import hashlib
import time

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import indices, pcm, reduce
from .errors import (
    DeadlineExceeded,
    InadmissibleQuery,
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
from .indices import DEFAULT_RI, IndexKind, RandomIndexTable
from .pcm import ComparisonMatrix, Position, ScaleBound

API_VERSION = "v1"
DEFAULT_WORK_BUDGET = 200_000
DEFAULT_TIMEOUT_SECS = 60.0

_VALIDATION_ERRORS = (NonPositiveEntry, ReciprocityViolation, OrderTooSmall,
                      OrderMismatch, ParseError, InadmissibleQuery,
                      ThresholdOutOfRange, ValueError)


class EditOutOfBounds(PcmError):
    def __init__(self, message):
        super().__init__(message)


class EvaluateRequest(BaseModel):
    matrix: list | dict
    ri: dict | None = None


class ReduceRequest(BaseModel):
    matrix: list | dict
    kind: str = "cr"
    threshold: float | None = None
    budget: int | None = None
    M: float = 9.0
    enumerate_all: bool = False
    round_to_scale: bool = False
    ri: dict | None = None


class WhatIfRequest(BaseModel):
    matrix: list | dict
    edits: list[dict] = []
    kind: str = "cr"
    threshold: float = 0.1
    M: float = 9.0
    ri: dict | None = None


def _matrix_from_body(obj) -> ComparisonMatrix:
    if isinstance(obj, dict):
        if "n" not in obj or "upper" not in obj:
            raise ParseError('matrix object must carry "n" and "upper"')
        import json as _json
        return pcm.parse(_json.dumps(obj), fmt="upper")
    if isinstance(obj, list):
        return pcm.validate([[pcm._parse_number(v, r + 1, c + 1)
                              for c, v in enumerate(row)]
                             for r, row in enumerate(obj)])
    raise ParseError("matrix must be a dense list of rows or an upper-triangle object")


def _ri_from_body(obj, default: RandomIndexTable) -> RandomIndexTable:
    if obj is None:
        return default
    return RandomIndexTable({int(k): float(v) for k, v in obj.items()})


def _kind_from_body(s: str) -> IndexKind:
    try:
        return IndexKind(s.lower())
    except ValueError:
        raise InadmissibleQuery(f"unknown index kind {s!r}; use cr, cm or ci") from None


def _evaluate_payload(matrix: ComparisonMatrix, ri: RandomIndexTable) -> dict:
    reports = {
        "cr": indices.cr(matrix, ri).to_json(),
        "cm": indices.cm(matrix).to_json(),
        "ci": indices.ci(matrix).to_json(),
    }
    logm = pcm.to_log(matrix)
    offenders = []
    for t in pcm.triads(matrix.n):
        s = pcm.triad_log_sum(logm, t)
        i, j, k = t.zero_based()
        v = matrix.values
        offenders.append({
            "triad": [t.i, t.j, t.k],
            "log_sum": s,
            "det": indices.triad_det(v[i, j], v[i, k], v[j, k]),
        })
    offenders.sort(key=lambda o: -abs(o["log_sum"]))
    return {
        "reports": reports,
        "consistent": pcm.is_consistent(matrix),
        "worst_triads": offenders[:3],
    }


def create_app(ri: RandomIndexTable = DEFAULT_RI,
               work_budget: int = DEFAULT_WORK_BUDGET,
               timeout_secs: float = DEFAULT_TIMEOUT_SECS,
               cors: bool = True) -> FastAPI:
    from . import __version__

    app = FastAPI(title="pcmrepair", version=__version__)
    if cors:
        app.add_middleware(CORSMiddleware, allow_origins=["*"],
                           allow_methods=["*"], allow_headers=["*"])

    ri_hash = hashlib.sha256(ri.to_json().encode()).hexdigest()

    @app.exception_handler(PcmError)
    async def _pcm_error(request: Request, exc: PcmError):
        payload = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("i", "j", "n", "row", "col"):
            if getattr(exc, attr, None) is not None:
                payload[attr] = getattr(exc, attr)
        if isinstance(exc, MissingRandomIndex):
            return JSONResponse(payload, status_code=422)
        if isinstance(exc, WorkBudgetExceeded):
            payload["estimate"] = exc.estimate
            payload["budget"] = exc.budget
            return JSONResponse(payload, status_code=413)
        if isinstance(exc, DeadlineExceeded):
            if exc.stats is not None:
                payload["stats"] = exc.stats.to_json()
            return JSONResponse(payload, status_code=504)
        return JSONResponse(payload, status_code=400)

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return JSONResponse({"error": "ValidationError", "message": str(exc)},
                            status_code=400)

    @app.get(f"/api/{API_VERSION}/health")
    def health():
        return {"status": "ok", "version": __version__, "ri_table_hash": ri_hash}

    @app.post(f"/api/{API_VERSION}/evaluate")
    def evaluate(req: EvaluateRequest):
        matrix = _matrix_from_body(req.matrix)
        table = _ri_from_body(req.ri, ri)
        return _evaluate_payload(matrix, table)

    @app.post(f"/api/{API_VERSION}/reduce")
    def run_reduce(req: ReduceRequest):
        matrix = _matrix_from_body(req.matrix)
        table = _ri_from_body(req.ri, ri)
        kind = _kind_from_body(req.kind)
        if (req.threshold is None) == (req.budget is None):
            raise InadmissibleQuery("provide exactly one of threshold or budget")
        if req.threshold is not None:
            mode = reduce.MinChanges(req.threshold)
        else:
            mode = reduce.MinIndex(req.budget)
        query = reduce.ReductionQuery(matrix, kind, mode,
                                      bound=ScaleBound(req.M), ri=table)
        limits = reduce.Limits(max_subproblems=work_budget,
                               deadline=time.monotonic() + timeout_secs)
        if isinstance(mode, reduce.MinIndex):
            result = reduce.min_index(query, limits)
        elif req.enumerate_all:
            result = reduce.enumerate_optimal(query, limits)
        else:
            result = reduce.min_changes(query, limits)
        payload = result.to_json()
        if req.round_to_scale:
            rounded = []
            for sol in result.solutions:
                mat, ok, val = reduce.round_witness_to_scale(sol, query)
                rounded.append({
                    "witness": [[mat.values[i, j] for j in range(mat.n)]
                                for i in range(mat.n)],
                    "acceptable": ok,
                    "achieved": val,
                })
            payload["rounded_solutions"] = rounded
        return payload

    @app.post(f"/api/{API_VERSION}/whatif")
    def whatif(req: WhatIfRequest):
        matrix = _matrix_from_body(req.matrix)
        table = _ri_from_body(req.ri, ri)
        kind = _kind_from_body(req.kind)
        bound = ScaleBound(req.M)
        edits = {}
        for e in req.edits:
            try:
                i, j, v = int(e["i"]), int(e["j"]), float(e["value"])
            except (KeyError, TypeError, ValueError):
                raise EditOutOfBounds(f"malformed edit {e!r}") from None
            if not (1 <= i < j <= matrix.n):
                raise EditOutOfBounds(
                    f"edit ({i},{j}) is not an upper-triangle cell of order {matrix.n}")
            if v <= 0 or not bound.admits(v):
                raise EditOutOfBounds(
                    f"edit value {v} outside [1/{bound.M}, {bound.M}]")
            edits[Position(i, j)] = v
        before = _evaluate_payload(matrix, table)
        edited = matrix.replace(edits)
        after = _evaluate_payload(edited, table)
        delta = {k: after["reports"][k]["value"] - before["reports"][k]["value"]
                 for k in ("cr", "cm", "ci")}
        query = reduce.ReductionQuery(edited, kind, reduce.MinChanges(req.threshold),
                                      bound=bound, ri=table)
        limits = reduce.Limits(max_subproblems=work_budget,
                               deadline=time.monotonic() + timeout_secs)
        suggestions = reduce.min_changes(query, limits)
        return {
            "matrix": [[edited.values[i, j] for j in range(edited.n)]
                       for i in range(edited.n)],
            "reports": after["reports"],
            "consistent": after["consistent"],
            "worst_triads": after["worst_triads"],
            "delta": delta,
            "suggestions": suggestions.to_json(),
        }

    return app
