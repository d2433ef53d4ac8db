"""Finiteness of the constant: exact for rank-one data, certificate search otherwise."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Sequence

import numpy as np

from .core import (
    DEFAULT_TOL,
    BLDatum,
    Subspace,
    Tolerances,
    common_kernel,
    numerical_rank,
    orthocomplement,
    random_subspace,
    validate_datum,
)
from .errors import BudgetError, DomainError, PreconditionError
from .gaussian import GaussianInput, fixed_point_solve, stationarity_residual
from .structure import (
    Extremisability,
    SearchBudget,
    classify_extremisability,
    critical_threshold,
    criticality_defect,
    factorized_constant,
    lattice_candidates,
)

SCALING_TOL = 1e-9
MEMBERSHIP_TOL = 1e-9
MAX_POLYTOPE_MAPS = 20


def check_scaling(datum: BLDatum) -> tuple[bool, int, float]:
    """``(holds, n, sum_j p_j n_j)``."""
    rhs = float(sum(p * k for p, k in zip(datum.exponents, datum.target_dims)))
    return abs(datum.n - rhs) <= SCALING_TOL, datum.n, rhs


class FinitenessStatus(str, enum.Enum):
    PROVEN_FINITE = "ProvenFinite"
    PROVEN_INFINITE = "ProvenInfinite"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class ScalingFailure:
    lhs: int
    rhs: float

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "ScalingFailure", "lhs": self.lhs, "rhs": self.rhs}


@dataclass(frozen=True, eq=False)
class DimensionViolation:
    """``dim V > sum_j p_j dim(B_j V)``; both sides are stored."""

    subspace: Subspace
    dim: int
    weighted_image_dim: float
    subset: tuple[int, ...] | None = None

    @property
    def defect(self) -> float:
        return self.weighted_image_dim - self.dim

    def to_dict(self) -> dict[str, Any]:
        out = {
            "kind": "DimensionViolation",
            "basis": self.subspace.basis.T.tolist(),
            "dim": self.dim,
            "weighted_image_dim": self.weighted_image_dim,
            "defect": self.defect,
        }
        if self.subset is not None:
            out["subset"] = [i + 1 for i in self.subset]
        return out


@dataclass(frozen=True, eq=False)
class ExtremiserCertificate:
    extremiser: GaussianInput
    blg_value: float
    residual: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": "Extremiser",
            "blg_value": self.blg_value,
            "residual": self.residual,
            "extremiser": self.extremiser.to_json(),
        }


@dataclass(frozen=True, eq=False)
class SemisimpleDecompositionCertificate:
    dims: tuple[int, ...]
    values: tuple[float, ...]

    @property
    def blg_value(self) -> float:
        return float(np.prod(self.values))

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "SemisimpleDecomposition", "dims": list(self.dims), "values": list(self.values), "blg_value": self.blg_value}


@dataclass(frozen=True)
class PolytopeMembership:
    min_slack: float
    tight_subsets: int

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "RankOnePolytopeMembership", "min_slack": self.min_slack, "tight_subsets": self.tight_subsets}


@dataclass(frozen=True, eq=False)
class CriticalFactorizationCertificate:
    """Finite product of extremisable pieces along a chain of critical subspaces."""

    blg_value: float
    piece_values: tuple[float, ...]
    flag_dims: tuple[int, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": "CriticalFactorization",
            "blg_value": self.blg_value,
            "piece_values": list(self.piece_values),
            "flag_dims": list(self.flag_dims),
        }


@dataclass(frozen=True, eq=False)
class FinitenessVerdict:
    status: FinitenessStatus
    certificate: Any = None
    witness: Any = None
    report: dict = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status.value,
            "certificate": None if self.certificate is None else self.certificate.to_dict(),
            "witness": None if self.witness is None else self.witness.to_dict(),
            "report": self.report,
        }


# ---------------------------------------------------------------------------
# rank-one data


def _require_rank_one(datum: BLDatum) -> np.ndarray:
    if not datum.is_rank_one():
        raise PreconditionError("rank-one analysis needs every target to be one-dimensional")
    return datum.vectors()


def _flats(vectors: np.ndarray, tol: float, max_subsets: int) -> dict[tuple[int, ...], int]:
    """Proper flats of the vector matroid with their ranks.

    Every flat of rank ``r < n`` is the closure of some independent ``r``-subset.
    """
    m, n = vectors.shape
    out: dict[tuple[int, ...], int] = {}
    count = 0
    for r in range(1, n):
        for S in combinations(range(m), r):
            count += 1
            if count > max_subsets:
                raise BudgetError(f"more than {max_subsets} independent subsets; raise the budget")
            sub = vectors[list(S)]
            if numerical_rank(sub, tol) < r:
                continue
            span = Subspace.span(sub.T, tol)
            flat = tuple(j for j in range(m) if span.contains(vectors[j], 1e-8))
            out.setdefault(flat, r)
    return out


def rank_one_finiteness(
    datum: BLDatum, tol: Tolerances = DEFAULT_TOL, max_subsets: int = 1 << 22
) -> FinitenessVerdict:
    """Exact decision for rank-one data.

    Finite iff scaling holds and ``sum_{j in I} p_j <= rank(I)`` for every
    index set ``I``.  The worst violations sit on flats, so only flats are
    enumerated.  A violating flat ``I`` yields the witness
    ``V = span{v_j : j in I}^perp``.
    """
    vecs = _require_rank_one(datum)
    ok, lhs, rhs = check_scaling(datum)
    if not ok:
        return FinitenessVerdict(FinitenessStatus.PROVEN_INFINITE, witness=ScalingFailure(lhs, rhs), report={"path": "rank-one"})
    if numerical_rank(vecs, tol.rank_tol) < datum.n:
        V = orthocomplement(Subspace.span(vecs.T, tol.rank_tol))
        return FinitenessVerdict(
            FinitenessStatus.PROVEN_INFINITE, witness=DimensionViolation(V, V.dim, 0.0, ()), report={"path": "rank-one"}
        )
    p = datum.p
    worst, worst_flat, tight = np.inf, None, 0
    flats = _flats(vecs, tol.rank_tol, max_subsets)
    for flat, r in flats.items():
        slack = r - float(p[list(flat)].sum())
        if abs(slack) <= MEMBERSHIP_TOL:
            tight += 1
        if slack < worst:
            worst, worst_flat = slack, (flat, r)
    report = {"path": "rank-one", "flats_checked": len(flats)}
    if worst_flat is not None and worst < -MEMBERSHIP_TOL:
        flat, r = worst_flat
        V = orthocomplement(Subspace.span(vecs[list(flat)].T, tol.rank_tol))
        outside = float(p[[j for j in range(datum.m) if j not in flat]].sum())
        return FinitenessVerdict(
            FinitenessStatus.PROVEN_INFINITE, witness=DimensionViolation(V, V.dim, outside, flat), report=report
        )
    slack = 0.0 if worst_flat is None else float(worst)
    return FinitenessVerdict(FinitenessStatus.PROVEN_FINITE, certificate=PolytopeMembership(slack, tight), report=report)


@dataclass(frozen=True)
class RankOnePolytope:
    """Vertices are basis indicators; facets ``sum_{j in I} p_j <= d_I`` for every nonempty ``I``."""

    n: int
    m: int
    vertices: tuple[tuple[int, ...], ...]
    facets: tuple[tuple[tuple[int, ...], int], ...]

    def contains(self, p: Sequence[float], tol: float = MEMBERSHIP_TOL) -> bool:
        p = np.asarray(p, dtype=float)
        if np.any(p < -tol) or abs(p.sum() - self.n) > tol:
            return False
        return all(p[list(I)].sum() <= d + tol for I, d in self.facets)

    def h_representation(self) -> str:
        """One inequality per line, indices 1-based, plus the scaling equation."""
        lines = [f"# rank-one polytope: n={self.n}, m={self.m}, {len(self.facets)} subset inequalities"]
        for I, d in self.facets:
            terms = " + ".join(f"p[{j + 1}]" for j in I)
            lines.append(f"{terms} <= {d}")
        for j in range(self.m):
            lines.append(f"p[{j + 1}] >= 0")
        lines.append(" + ".join(f"p[{j + 1}]" for j in range(self.m)) + f" = {self.n}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "m": self.m,
            "vertices": [list(v) for v in self.vertices],
            "facets": [{"subset": [j + 1 for j in I], "rank": d} for I, d in self.facets],
        }


def rank_one_polytope(datum: BLDatum, tol: Tolerances = DEFAULT_TOL) -> RankOnePolytope:
    vecs = _require_rank_one(datum)
    m, n = vecs.shape
    if m > MAX_POLYTOPE_MAPS:
        raise BudgetError(f"{m} maps give 2^{m} facets; use rank_one_finiteness for membership queries instead")
    if numerical_rank(vecs, tol.rank_tol) < n:
        raise PreconditionError("the vectors do not span the domain")
    vertices = []
    for I in combinations(range(m), n):
        if numerical_rank(vecs[list(I)], tol.rank_tol) == n:
            vertices.append(tuple(1 if j in I else 0 for j in range(m)))
    facets = []
    for size in range(1, m + 1):
        for I in combinations(range(m), size):
            facets.append((I, numerical_rank(vecs[list(I)], tol.rank_tol)))
    return RankOnePolytope(n, m, tuple(vertices), tuple(facets))


# ---------------------------------------------------------------------------
# greedy index selection


@dataclass(frozen=True)
class GreedySelection:
    """Per-map index sets (0-based) picked from the top of an ordered basis."""

    index_sets: tuple[tuple[int, ...], ...]
    wedge_norms: tuple[float, ...]

    def prefix_sums(self, exponents: Sequence[float], n: int) -> list[float]:
        """``sum_j p_j |I_j ∩ {first k indices}|`` for ``k = 0..n``."""
        return [
            float(sum(p * sum(1 for i in I if i < k) for p, I in zip(exponents, self.index_sets)))
            for k in range(n + 1)
        ]

    def prefix_violations(self, exponents: Sequence[float], n: int, slack: float = 1e-9) -> list[tuple[int, float]]:
        return [(k, s) for k, s in enumerate(self.prefix_sums(exponents, n)) if s > k + slack]

    def to_dict(self) -> dict[str, Any]:
        return {
            "index_sets": [[i + 1 for i in I] for I in self.index_sets],
            "wedge_norms": list(self.wedge_norms),
        }


def greedy_index_selection(
    datum: BLDatum, basis: np.ndarray | None = None, tol: Tolerances = DEFAULT_TOL
) -> GreedySelection:
    """Keep index ``i`` for map ``j`` when ``B_j e_i`` leaves the span of ``B_j e_{i'}, i' > i``."""
    E = np.eye(datum.n) if basis is None else np.asarray(basis, dtype=float)
    if E.shape != (datum.n, datum.n) or np.abs(E.T @ E - np.eye(datum.n)).max() > 1e-8:
        raise DomainError("basis must be an orthonormal n x n matrix (columns are the basis vectors)")
    sets, norms = [], []
    for B in datum.matrices:
        Y = B @ E
        scale = np.linalg.norm(B, 2) if B.size else 1.0
        chosen: list[int] = []
        rank_after = 0
        for i in range(datum.n - 1, -1, -1):
            r = numerical_rank(Y[:, i:], tol.rank_tol, scale=scale)
            if r > rank_after:
                chosen.append(i)
                rank_after = r
        chosen.sort()
        sel = Y[:, chosen]
        norms.append(float(np.sqrt(max(np.linalg.det(sel.T @ sel), 0.0))) if chosen else 1.0)
        sets.append(tuple(chosen))
    return GreedySelection(tuple(sets), tuple(norms))


# ---------------------------------------------------------------------------
# general rank


def general_finiteness(
    datum: BLDatum,
    budget: SearchBudget = SearchBudget(),
    tol: Tolerances = DEFAULT_TOL,
    seed: int = 0,
) -> FinitenessVerdict:
    """Scaling, exact rank-one path, dimension-condition falsification, then extremisability."""
    report: dict[str, Any] = {"budget": budget.to_dict(), "stages": []}
    ok, lhs, rhs = check_scaling(datum)
    report["stages"].append("scaling")
    if not ok:
        return FinitenessVerdict(FinitenessStatus.PROVEN_INFINITE, witness=ScalingFailure(lhs, rhs), report=report)

    if datum.is_rank_one():
        report["stages"].append("rank-one")
        v = rank_one_finiteness(datum, tol, max_subsets=max(budget.max_subsets, 1 << 22))
        return FinitenessVerdict(v.status, v.certificate, v.witness, {**report, **v.report})

    rep = validate_datum(datum, tol)
    if not rep.all_surjective:
        raise PreconditionError(f"maps {[j for j, s in enumerate(rep.surjective) if not s]} are not surjective")
    active = datum.normalized()
    K = common_kernel(active, tol.rank_tol)
    if K.dim:
        return FinitenessVerdict(FinitenessStatus.PROVEN_INFINITE, witness=DimensionViolation(K, K.dim, 0.0), report=report)

    # falsification of the dimension condition
    report["stages"].append("dimension-search")
    thr = critical_threshold(active)
    rng = np.random.default_rng(seed)
    examined = 0

    def violation(V: Subspace) -> FinitenessVerdict | None:
        d = criticality_defect(active, V, tol.rank_tol)
        if d < -thr:
            report["candidates_examined"] = examined
            w = DimensionViolation(V, V.dim, d + V.dim)
            return FinitenessVerdict(FinitenessStatus.PROVEN_INFINITE, witness=w, report=report)
        return None

    if active.n > 1:
        for V, _ in lattice_candidates(active, budget.lattice_depth, budget.max_candidates, tol.rank_tol):
            examined += 1
            if (out := violation(V)) is not None:
                return out
        for k in range(1, active.n):
            for _ in range(budget.random_subspaces):
                examined += 1
                if (out := violation(random_subspace(active.n, k, rng))) is not None:
                    return out
    report["candidates_examined"] = examined

    report["stages"].append("extremisability")
    verdict = classify_extremisability(active, budget, tol, seed)
    report["extremisability"] = verdict.status.value
    if verdict.status is Extremisability.EXTREMISABLE:
        whole = fixed_point_solve(active, tol=tol, max_iter=budget.solver_max_iter)
        if whole.converged:
            cert = ExtremiserCertificate(whole.extremiser, whole.blg_value, stationarity_residual(active, whole.extremiser, tol))
        else:
            cert = SemisimpleDecompositionCertificate(
                tuple(e.datum.n for e in verdict.evidence), tuple(e.solve.blg_value for e in verdict.evidence)
            )
        return FinitenessVerdict(FinitenessStatus.PROVEN_FINITE, certificate=cert, report=report)

    report["stages"].append("critical-factorization")
    fc = factorized_constant(active, budget, tol)
    if fc.value is not None and np.isfinite(fc.value):
        cert = CriticalFactorizationCertificate(fc.value, tuple(v for _, v, _ in fc.pieces), tuple(V.dim for V in fc.flag))
        return FinitenessVerdict(FinitenessStatus.PROVEN_FINITE, certificate=cert, report=report)
    if fc.value is not None and fc.flag:
        V = fc.flag[-1]
        # the flag's last entry lives in the coordinates of a nested piece; only
        # report it when it is a subspace of the original domain
        if V.ambient_dim == active.n:
            d = criticality_defect(active, V, tol.rank_tol)
            if d < -thr:
                return FinitenessVerdict(
                    FinitenessStatus.PROVEN_INFINITE, witness=DimensionViolation(V, V.dim, d + V.dim), report=report
                )
    return FinitenessVerdict(FinitenessStatus.UNDETERMINED, report=report)
