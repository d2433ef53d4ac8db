"""Critical subspaces, critical pairs, decomposition and extremisability."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Iterator, Sequence

import numpy as np
import scipy.linalg

from .core import (
    DEFAULT_TOL,
    BLDatum,
    EquivalenceTransform,
    Subspace,
    Tolerances,
    image,
    image_dim,
    intersection,
    kernel,
    numerical_rank,
    orthocomplement,
    quotient_datum,
    restrict_datum,
    row_space,
    subspace_sum,
    validate_datum,
)
from .errors import BudgetError, InvertibilityError, NotApplicableError, PreconditionError
from .gaussian import (
    SolveOutcome,
    SolveStatus,
    fixed_point_solve,
    gram_matrix,
    is_geometric,
    normalize_to_geometric,
)


@dataclass(frozen=True)
class SearchBudget:
    """Limits for every search in this module and in the finiteness pipeline."""

    lattice_depth: int = 3
    max_candidates: int = 2000
    solver_starts: int = 4
    solver_max_iter: int = 2000
    random_subspaces: int = 200
    max_subsets: int = 1 << 16
    retries: int = 8
    factor_depth: int = 8

    @classmethod
    def preset(cls, name: str) -> "SearchBudget":
        try:
            return _PRESETS[name]
        except KeyError:
            raise BudgetError(f"unknown budget preset {name!r}; choose from {sorted(_PRESETS)}") from None

    def to_dict(self) -> dict[str, int]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


_PRESETS = {
    "small": SearchBudget(1, 50, 1, 10, 10, 64, 2, 2),
    "default": SearchBudget(),
    "large": SearchBudget(4, 20000, 8, 20000, 1000, 1 << 20, 16, 16),
}


class CriticalSource(str, enum.Enum):
    LATTICE = "Lattice"
    EIGENSPACE = "Eigenspace"
    RANK_ONE = "RankOne"
    USER = "UserSupplied"


@dataclass(frozen=True, eq=False)
class CriticalReport:
    subspace: Subspace
    defect: float
    source: CriticalSource

    def to_dict(self) -> dict[str, Any]:
        return {
            "basis": self.subspace.basis.T.tolist(),
            "dim": self.subspace.dim,
            "defect": self.defect,
            "source": self.source.value,
        }


# ---------------------------------------------------------------------------
# defects


def criticality_defect(datum: BLDatum, V: Subspace, tol: float = DEFAULT_TOL.rank_tol) -> float:
    """``sum_j p_j dim(B_j V) - dim V``; zero exactly on critical subspaces."""
    if V.ambient_dim != datum.n:
        raise PreconditionError(f"subspace lives in R^{V.ambient_dim}, datum domain is R^{datum.n}")
    if V.dim == 0 or V.dim == datum.n:
        raise PreconditionError("criticality is defined for nonzero proper subspaces only")
    total = sum(p * image_dim(B, V, tol) for B, p in zip(datum.matrices, datum.exponents))
    return float(total - V.dim)


_MAX_SUMS = 200_000


def critical_threshold(datum: BLDatum) -> float:
    """Acceptance band for ``|defect|``.

    Defects take values ``sum_j p_j k_j - d`` with integers ``0 <= k_j <= n_j``
    and ``1 <= d < n``.  The band is half the smallest nonzero such value,
    capped at 0.25, so that it separates zero from every other reachable
    defect.
    """
    sums = {0.0}
    for p, k in zip(datum.exponents, datum.target_dims):
        sums = {round(s + p * i, 12) for s in sums for i in range(k + 1)}
        if len(sums) > _MAX_SUMS:
            return 0.25
    smallest = np.inf
    for s in sums:
        for d in range(1, max(datum.n, 2)):
            gap = abs(s - d)
            if gap > 1e-9:
                smallest = min(smallest, gap)
    return float(min(0.25, 0.5 * smallest))


# ---------------------------------------------------------------------------
# candidate generators


class _Pool:
    """Deduplicated list of nonzero proper subspaces, keyed by rounded projector."""

    def __init__(self, n: int):
        self.n = n
        self.items: list[Subspace] = []
        self._keys: set[bytes] = set()

    def add(self, V: Subspace) -> bool:
        if V.dim == 0 or V.dim == self.n:
            return False
        key = np.round(V.projector(), 6).tobytes() + bytes([V.dim])
        if key in self._keys:
            return False
        self._keys.add(key)
        self.items.append(V)
        return True

    def __len__(self) -> int:
        return len(self.items)


def lattice_generators(datum: BLDatum, tol: float = DEFAULT_TOL.rank_tol) -> list[Subspace]:
    """Row spaces of the maps followed by their kernels, deduplicated."""
    pool = _Pool(datum.n)
    for B in datum.matrices:
        if B.shape[0]:
            pool.add(row_space(B, tol))
    for B in datum.matrices:
        pool.add(kernel(B, tol))
    return pool.items


def lattice_candidates(datum: BLDatum, depth: int, max_candidates: int, tol: float = DEFAULT_TOL.rank_tol) -> Iterator[tuple[Subspace, int]]:
    """Closure of the generators under sums and intersections, breadth first."""
    pool = _Pool(datum.n)
    frontier = []
    for V in lattice_generators(datum, tol):
        if pool.add(V):
            frontier.append(V)
            yield V, 0
    for level in range(1, depth + 1):
        new: list[Subspace] = []
        snapshot = list(pool.items)
        for V in frontier:
            for W in snapshot:
                for U in (subspace_sum(V, W, tol), intersection(V, W, tol)):
                    if len(pool) >= max_candidates:
                        return
                    if pool.add(U):
                        new.append(U)
                        yield U, level
        if not new:
            return
        frontier = new


def rank_one_candidates(datum: BLDatum, max_subsets: int) -> Iterator[Subspace]:
    """Spans of subsets of the defining vectors, smallest subsets first."""
    vecs = datum.vectors()
    pool = _Pool(datum.n)
    count = 0
    for size in range(1, datum.m):
        for I in combinations(range(datum.m), size):
            count += 1
            if count > max_subsets:
                return
            V = Subspace.span(vecs[list(I)].T)
            if pool.add(V):
                yield V


def _eigen_groups(w: np.ndarray, V: np.ndarray, rel: float = 1e-6) -> list[np.ndarray]:
    groups, start = [], 0
    for i in range(1, len(w) + 1):
        if i == len(w) or abs(w[i] - w[i - 1]) > rel * max(abs(w[i]), abs(w[i - 1]), 1e-300):
            groups.append(V[:, start:i])
            start = i
    return groups


def _spectral_subspaces(w: np.ndarray, V: np.ndarray) -> Iterator[Subspace]:
    """Eigenspaces and spans of the lowest eigenvectors (``V`` need not be orthonormal)."""
    for cols in _eigen_groups(w, V):
        yield Subspace.span(cols)
    for k in range(1, V.shape[1]):
        yield Subspace.span(V[:, :k])


def eigen_candidates(datum: BLDatum, budget: SearchBudget, tol: Tolerances = DEFAULT_TOL) -> Iterator[Subspace]:
    """Subspaces suggested by the solver: degeneration directions and pencil eigenspaces."""
    first_M: np.ndarray | None = None
    for s in range(budget.solver_starts):
        out = fixed_point_solve(datum, tol=tol, max_iter=budget.solver_max_iter, seed=None if s == 0 else s)
        if out.status is SolveStatus.DEGENERATED:
            yield out.degeneration_subspace
        if out.last_input is None:
            continue
        M = gram_matrix(datum, out.last_input)
        w, V = np.linalg.eigh(M)
        yield from _spectral_subspaces(w, V)
        if out.converged:
            if first_M is None:
                first_M = M
            else:
                w, V = scipy.linalg.eigh(M, first_M)
                yield from _spectral_subspaces(w, V)


@dataclass(frozen=True, eq=False)
class CriticalSearch:
    report: CriticalReport | None
    threshold: float
    candidates_examined: int
    depth_reached: int
    sources_tried: tuple[str, ...]
    violations: tuple = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "found": None if self.report is None else self.report.to_dict(),
            "threshold": self.threshold,
            "candidates_examined": self.candidates_examined,
            "depth_reached": self.depth_reached,
            "sources_tried": list(self.sources_tried),
        }


def search_critical_subspaces(
    datum: BLDatum,
    budget: SearchBudget = SearchBudget(),
    tol: Tolerances = DEFAULT_TOL,
    stop_on_violation: bool = False,
) -> CriticalSearch:
    """Scan lattice, rank-one and spectral candidates for a critical subspace.

    With ``stop_on_violation`` a candidate whose defect is below minus the
    threshold ends the search too; it is returned in ``violations``.
    """
    if datum.n <= 1:
        return CriticalSearch(None, critical_threshold(datum), 0, 0, ())
    thr = critical_threshold(datum)
    examined, depth = 0, 0
    sources: list[str] = []
    violations: list[tuple[Subspace, float]] = []

    def verdict(V: Subspace, src: CriticalSource):
        d = criticality_defect(datum, V, tol.rank_tol)
        if abs(d) <= thr:
            return CriticalReport(V, d, src)
        if d < -thr:
            violations.append((V, d))
        return None

    streams: list[tuple[CriticalSource, Iterator]] = [
        (CriticalSource.LATTICE, lattice_candidates(datum, budget.lattice_depth, budget.max_candidates, tol.rank_tol))
    ]
    if datum.is_rank_one():
        streams.append((CriticalSource.RANK_ONE, rank_one_candidates(datum, budget.max_subsets)))
    streams.append((CriticalSource.EIGENSPACE, eigen_candidates(datum, budget, tol)))

    for src, stream in streams:
        sources.append(src.value)
        for item in stream:
            V, level = item if isinstance(item, tuple) else (item, depth)
            depth = max(depth, level)
            if V is None or V.dim in (0, datum.n):
                continue
            examined += 1
            rep = verdict(V, src)
            if rep is not None:
                return CriticalSearch(rep, thr, examined, depth, tuple(sources), tuple(violations))
            if stop_on_violation and violations:
                return CriticalSearch(None, thr, examined, depth, tuple(sources), tuple(violations))
    return CriticalSearch(None, thr, examined, depth, tuple(sources), tuple(violations))


def find_critical_subspace(
    datum: BLDatum, budget: SearchBudget = SearchBudget(), tol: Tolerances = DEFAULT_TOL
) -> CriticalReport | None:
    """First critical subspace found within ``budget``, or ``None``."""
    if not validate_datum(datum, tol).non_degenerate:
        raise PreconditionError("datum is degenerate: the maps share a nonzero kernel")
    return search_critical_subspaces(datum, budget, tol).report


# ---------------------------------------------------------------------------
# critical pairs


def is_critical_pair(datum: BLDatum, V: Subspace, W: Subspace, tol: float = DEFAULT_TOL.rank_tol) -> bool:
    """``V, W`` complementary in the domain with complementary images in every target."""
    if V.dim + W.dim != datum.n or subspace_sum(V, W, tol).dim != datum.n:
        return False
    for B in datum.matrices:
        k = B.shape[0]
        if k == 0:
            continue
        a, b = image(B, V, tol), image(B, W, tol)
        if a.dim + b.dim != k or subspace_sum(a, b, tol).dim != k:
            return False
    return True


def _pull_back(C: np.ndarray, V: Subspace) -> Subspace:
    return Subspace.span(C @ V.basis)


def find_critical_pair(
    datum: BLDatum, V: Subspace, tol: Tolerances = DEFAULT_TOL, max_iter: int = 10000
) -> tuple[Subspace, Subspace] | None:
    """Complement ``W`` of ``V`` forming a critical pair, if one is found.

    Geometric data are tested with the orthogonal complement.  Other data are
    first moved to geometric position through a converged extremiser.
    """
    if V.dim == 0 or V.dim == datum.n:
        raise PreconditionError("critical pairs need a nonzero proper subspace")
    if is_geometric(datum, tol.rank_tol):
        W = orthocomplement(V)
        return (V, W) if is_critical_pair(datum, V, W, tol.rank_tol) else None
    out = fixed_point_solve(datum, tol=tol, max_iter=max_iter)
    if not out.converged:
        return None
    _, T = normalize_to_geometric(datum, out.extremiser, tol)
    V_geo = Subspace.span(np.linalg.solve(T.C, V.basis))
    W = _pull_back(T.C, orthocomplement(V_geo))
    return (V, W) if is_critical_pair(datum, V, W, tol.rank_tol) else None


# ---------------------------------------------------------------------------
# decomposition


@dataclass(frozen=True, eq=False)
class Decomposition:
    components: tuple[tuple[Subspace, BLDatum], ...]
    transform: EquivalenceTransform
    method: str

    @property
    def count(self) -> int:
        return len(self.components)

    def assembled(self) -> BLDatum:
        """Direct sum of the component data in order."""
        from .core import direct_sum_datum

        out = self.components[0][1]
        for _, d in self.components[1:]:
            out = direct_sum_datum(out, d)
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "components": [
                {"dim": V.dim, "basis": V.basis.T.tolist(), "target_dims": list(d.target_dims)}
                for V, d in self.components
            ],
        }


def _null_space(L: np.ndarray, rel: float = 1e-9) -> np.ndarray:
    if L.shape[0] == 0:
        return np.eye(L.shape[1])
    _, s, Vt = np.linalg.svd(L)
    scale = s[0] if s.size and s[0] > 0 else 1.0
    r = int(np.count_nonzero(s > rel * scale))
    return Vt[r:].T


def _cluster_values(vals: np.ndarray, gap: float) -> list[list[int]]:
    """Group indices of (possibly complex) values lying within ``gap`` of each other."""
    order = sorted(range(len(vals)), key=lambda i: (vals[i].real, abs(vals[i].imag)))
    groups: list[list[int]] = []
    for i in order:
        for g in groups:
            if any(abs(abs(vals[i]) - abs(vals[k])) <= gap and abs(vals[i].real - vals[k].real) <= gap for k in g):
                g.append(i)
                break
        else:
            groups.append([i])
    return groups


def _commutant_split(datum: BLDatum, rng: np.random.Generator, retries: int) -> list[Subspace] | None:
    """Common invariant subspaces of the projections ``B_j^T B_j``.

    A generic symmetric element of their commutant has the sought subspaces as
    eigenspaces.  Several draws are tried and the finest split kept.
    """
    n = datum.n
    I = np.eye(n)
    rows = []
    for B in datum.matrices:
        P = B.T @ B
        rows.append(np.kron(I, P) - np.kron(P.T, I))
    N = _null_space(np.vstack(rows))
    mats = [N[:, k].reshape(n, n, order="F") for k in range(N.shape[1])]
    mats = [0.5 * (X + X.T) for X in mats]
    if len(mats) <= 1:
        return None
    best: list[Subspace] | None = None
    for _ in range(retries):
        S = sum(c * X for c, X in zip(rng.standard_normal(len(mats)), mats))
        w, V = np.linalg.eigh(S)
        spread = max(w[-1] - w[0], 1e-300)
        parts = [Subspace.span(V[:, g]) for g in _cluster_values(w.astype(complex), 1e-6 * spread)]
        if len(parts) > 1 and (best is None or len(parts) > len(best)):
            if _is_split(datum, parts):
                best = parts
    return best


def _is_split(datum: BLDatum, parts: Sequence[Subspace], tol: float = DEFAULT_TOL.rank_tol) -> bool:
    if sum(V.dim for V in parts) != datum.n:
        return False
    C = np.hstack([V.basis for V in parts])
    if numerical_rank(C, tol) != datum.n:
        return False
    for B in datum.matrices:
        k = B.shape[0]
        if k == 0:
            continue
        imgs = [image(B, V, tol) for V in parts]
        if sum(U.dim for U in imgs) != k:
            return False
        if k and numerical_rank(np.hstack([U.basis for U in imgs]), tol) != k:
            return False
    return True


def _matroid_split(datum: BLDatum, tol: float = DEFAULT_TOL.rank_tol) -> list[Subspace] | None:
    """Connected components of the vector matroid, read off fundamental circuits."""
    vecs = datum.vectors()
    m, n = vecs.shape
    parent = list(range(m))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    basis: list[int] = []
    for i in range(m):
        if numerical_rank(vecs[basis + [i]].T, tol) > len(basis):
            basis.append(i)
    Bm = vecs[basis].T
    for i in range(m):
        if i in basis:
            continue
        coef, *_ = np.linalg.lstsq(Bm, vecs[i], rcond=None)
        for b, c in zip(basis, coef):
            if abs(c) > tol * max(1.0, np.abs(coef).max()):
                parent[find(i)] = find(b)
    classes: dict[int, list[int]] = {}
    for i in range(m):
        classes.setdefault(find(i), []).append(i)
    if len(classes) <= 1:
        return None
    parts = []
    for members in sorted(classes.values()):
        others = [j for j in range(m) if j not in members]
        parts.append(orthocomplement(Subspace.span(vecs[others].T)))
    return parts


def endomorphism_basis(datum: BLDatum, rel: float = 1e-9) -> list[np.ndarray]:
    """Domain parts ``X`` of solutions to ``B_j X = X_j B_j`` for all ``j``."""
    n = datum.n
    sizes = [B.shape[0] for B in datum.matrices]
    total = n * n + sum(k * k for k in sizes)
    blocks = []
    offset = n * n
    for B, k in zip(datum.matrices, sizes):
        if k == 0:
            continue
        row = np.zeros((k * n, total))
        row[:, : n * n] = np.kron(np.eye(n), B)
        row[:, offset : offset + k * k] = -np.kron(B.T, np.eye(k))
        blocks.append(row)
        offset += k * k
    N = _null_space(np.vstack(blocks), rel) if blocks else np.eye(total)
    return [N[: n * n, c].reshape(n, n, order="F") for c in range(N.shape[1])]


def _endomorphism_split(datum: BLDatum, rng: np.random.Generator, retries: int) -> list[Subspace] | None:
    """Split through generalized eigenspaces of a random endomorphism of the datum."""
    mats = endomorphism_basis(datum)
    if len(mats) <= 1:
        return None
    for _ in range(retries):
        X = sum(c * Y for c, Y in zip(rng.standard_normal(len(mats)), mats))
        vals = np.linalg.eigvals(X)
        scale = max(np.abs(vals).max(), 1e-300)
        groups = _cluster_values(vals, 1e-4 * scale)
        if len(groups) < 2:
            continue
        parts = []
        for g in groups:
            members = vals[g]

            def pick(re, im, members=members):
                return bool(np.min(np.abs(members - complex(re, im))) <= 1e-4 * scale)

            T, Z, sdim = scipy.linalg.schur(X, output="real", sort=pick)
            if sdim != len(g):
                break
            parts.append(Subspace.span(Z[:, :sdim]))
        else:
            if _is_split(datum, parts):
                return parts
    return None


def _components_from_parts(datum: BLDatum, parts: list[Subspace], method: str, tol: float) -> Decomposition:
    comps = tuple((V, restrict_datum(datum, V, tol)) for V in parts)
    C = np.hstack([V.basis for V in parts])
    Cs = []
    for j, B in enumerate(datum.matrices):
        cols = [image(B, V, tol).basis for V in parts]
        Cs.append(np.hstack(cols) if B.shape[0] else np.zeros((0, 0)))
    return Decomposition(comps, EquivalenceTransform(C, tuple(Cs)), method)


def _refine(datum: BLDatum, rng: np.random.Generator, retries: int, depth: int) -> list[Subspace]:
    """Recursive endomorphism splitting, in domain coordinates."""
    parts = _endomorphism_split(datum, rng, retries) if depth > 0 and datum.n > 1 else None
    if parts is None:
        return [Subspace.full(datum.n)]
    out = []
    for V in parts:
        sub = restrict_datum(datum, V)
        for U in _refine(sub, rng, retries, depth - 1):
            out.append(Subspace.span(V.basis @ U.basis))
    return out


def decompose(
    datum: BLDatum,
    budget: SearchBudget = SearchBudget(),
    tol: Tolerances = DEFAULT_TOL,
    seed: int = 0,
) -> Decomposition:
    """Split the datum into a direct sum of components with no proper critical pair.

    Rank-one data use matroid connectivity.  Geometric data use common
    invariant subspaces of the projections ``B_j^T B_j``; extremisable data are
    moved to geometric position first.  Everything else goes through the
    endomorphism algebra of the datum.
    """
    if datum.has_zero_exponents():
        raise PreconditionError("decomposition needs strictly positive exponents")
    if not validate_datum(datum, tol).ok:
        raise PreconditionError("decomposition needs a non-degenerate datum with surjective maps")
    rng = np.random.default_rng(seed)
    if datum.n <= 1:
        return _components_from_parts(datum, [Subspace.full(datum.n)], "trivial", tol.rank_tol)

    if datum.is_rank_one():
        parts = _matroid_split(datum, tol.rank_tol)
        return _components_from_parts(datum, parts or [Subspace.full(datum.n)], "matroid", tol.rank_tol)

    if is_geometric(datum, tol.rank_tol):
        parts = _commutant_split(datum, rng, budget.retries)
        return _components_from_parts(datum, parts or [Subspace.full(datum.n)], "commutant", tol.rank_tol)

    out = fixed_point_solve(datum, tol=tol, max_iter=budget.solver_max_iter)
    if out.converged:
        geo, T = normalize_to_geometric(datum, out.extremiser, tol)
        parts = _commutant_split(geo, rng, budget.retries)
        if parts is not None:
            parts = [_pull_back(T.C, V) for V in parts]
            if _is_split(datum, parts, tol.rank_tol):
                return _components_from_parts(datum, parts, "commutant", tol.rank_tol)
        return _components_from_parts(datum, [Subspace.full(datum.n)], "commutant", tol.rank_tol)

    parts = _refine(datum, rng, budget.retries, budget.factor_depth)
    if not _is_split(datum, parts, tol.rank_tol):
        parts = [Subspace.full(datum.n)]
    try:
        return _components_from_parts(datum, parts, "endomorphism", tol.rank_tol)
    except InvertibilityError:
        return _components_from_parts(datum, [Subspace.full(datum.n)], "endomorphism", tol.rank_tol)


# ---------------------------------------------------------------------------
# extremisability


class Extremisability(str, enum.Enum):
    EXTREMISABLE = "Extremisable"
    NOT_EXTREMISABLE = "NotExtremisable"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True, eq=False)
class ComponentEvidence:
    subspace: Subspace
    datum: BLDatum
    search: CriticalSearch
    solve: SolveOutcome

    @property
    def simple(self) -> bool:
        return self.search.report is None

    @property
    def critical_subspace(self) -> Subspace | None:
        """Critical subspace of the component, in domain coordinates."""
        if self.search.report is None:
            return None
        return Subspace.span(self.subspace.basis @ self.search.report.subspace.basis)

    def to_dict(self) -> dict[str, Any]:
        crit = self.critical_subspace
        return {
            "dim": self.subspace.dim,
            "basis": self.subspace.basis.T.tolist(),
            "simple_within_budget": self.simple,
            "critical_subspace": None if crit is None else crit.basis.T.tolist(),
            "critical_defect": None if self.search.report is None else self.search.report.defect,
            "search": self.search.to_dict(),
            "solve_status": self.solve.status.value,
            "solve_iterations": self.solve.iterations,
            "blg_value": self.solve.blg_value,
        }


@dataclass(frozen=True, eq=False)
class ExtremisabilityVerdict:
    status: Extremisability
    evidence: tuple[ComponentEvidence, ...]
    decomposition: Decomposition

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status.value,
            "decomposition_method": self.decomposition.method,
            "components": [e.to_dict() for e in self.evidence],
        }


def classify_extremisability(
    datum: BLDatum,
    budget: SearchBudget = SearchBudget(),
    tol: Tolerances = DEFAULT_TOL,
    seed: int = 0,
) -> ExtremisabilityVerdict:
    """Extremisable iff every indecomposable component is simple (tri-state)."""
    from .finiteness import check_scaling

    if datum.has_zero_exponents():
        raise PreconditionError("classification needs strictly positive exponents")
    ok, lhs, rhs = check_scaling(datum)
    if not ok:
        raise NotApplicableError(f"scaling condition fails ({lhs} vs {rhs:.12g}); the constant is infinite")
    dec = decompose(datum, budget, tol, seed)
    evidence = []
    for V, comp in dec.components:
        search = search_critical_subspaces(comp, budget, tol)
        solve = fixed_point_solve(comp, tol=tol, max_iter=budget.solver_max_iter)
        evidence.append(ComponentEvidence(V, comp, search, solve))
    if all(e.simple and e.solve.converged for e in evidence):
        status = Extremisability.EXTREMISABLE
    elif any(not e.simple and e.solve.status is SolveStatus.DEGENERATED for e in evidence):
        status = Extremisability.NOT_EXTREMISABLE
    else:
        status = Extremisability.UNDETERMINED
    return ExtremisabilityVerdict(status, tuple(evidence), dec)


# ---------------------------------------------------------------------------
# factorization through a critical subspace


@dataclass(frozen=True)
class FactorizationCheck:
    full: float | None
    restricted: float | None
    quotient: float | None
    statuses: tuple[str, str, str]

    @property
    def complete(self) -> bool:
        return None not in (self.full, self.restricted, self.quotient)

    @property
    def relative_error(self) -> float | None:
        if not self.complete:
            return None
        return abs(self.full - self.restricted * self.quotient) / abs(self.full)

    def to_dict(self) -> dict[str, Any]:
        return {
            "full": self.full,
            "restricted": self.restricted,
            "quotient": self.quotient,
            "statuses": list(self.statuses),
            "relative_error": self.relative_error,
        }


def _as_report(datum: BLDatum, V: CriticalReport | Subspace, tol: float) -> CriticalReport:
    if isinstance(V, CriticalReport):
        return V
    return CriticalReport(V, criticality_defect(datum, V, tol), CriticalSource.USER)


def verify_factorization(
    datum: BLDatum, V: CriticalReport | Subspace, tol: Tolerances = DEFAULT_TOL, max_iter: int = 10000
) -> FactorizationCheck:
    """Compare the constant with the product over restriction and quotient."""
    rep = _as_report(datum, V, tol.rank_tol)
    if abs(rep.defect) > critical_threshold(datum):
        raise PreconditionError(f"subspace is not critical (defect {rep.defect:.3g})")
    outs = [
        fixed_point_solve(d, tol=tol, max_iter=max_iter)
        for d in (datum, restrict_datum(datum, rep.subspace, tol.rank_tol), quotient_datum(datum, rep.subspace, tol.rank_tol))
    ]
    return FactorizationCheck(*(o.blg_value for o in outs), tuple(o.status.value for o in outs))


@dataclass(frozen=True, eq=False)
class FactorizedConstant:
    """Gaussian constant assembled from extremisable pieces of a critical flag.

    ``value`` is ``inf`` when a dimension violation turned up, ``None`` when a
    piece could not be settled.
    """

    value: float | None
    pieces: tuple[tuple[int, float | None, str], ...]
    flag: tuple[Subspace, ...]
    note: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "pieces": [{"dim": d, "blg_value": v, "status": s} for d, v, s in self.pieces],
            "flag_dims": [V.dim for V in self.flag],
            "note": self.note,
        }


def factorized_constant(
    datum: BLDatum, budget: SearchBudget = SearchBudget(), tol: Tolerances = DEFAULT_TOL
) -> FactorizedConstant:
    """Gaussian constant of a datum whose solver degenerates.

    The constant splits as the product over restriction and quotient by a
    critical subspace; both pieces are treated recursively.
    """
    pieces: list[tuple[int, float | None, str]] = []
    flag: list[Subspace] = []

    def walk(d: BLDatum, depth: int) -> float | None:
        out = fixed_point_solve(d, tol=tol, max_iter=budget.solver_max_iter)
        if out.converged:
            pieces.append((d.n, out.blg_value, out.status.value))
            return out.blg_value
        if depth <= 0:
            pieces.append((d.n, None, "DepthExhausted"))
            return None
        thr = critical_threshold(d)
        V = out.degeneration_subspace
        defect = None if V is None or V.dim in (0, d.n) else criticality_defect(d, V, tol.rank_tol)
        if defect is not None and defect < -thr:
            pieces.append((d.n, float("inf"), f"DimensionViolation({defect:.6g})"))
            flag.append(V)
            return float("inf")
        if defect is None or abs(defect) > thr:
            search = search_critical_subspaces(d, budget, tol, stop_on_violation=True)
            if search.violations:
                W, defect = search.violations[0]
                pieces.append((d.n, float("inf"), f"DimensionViolation({defect:.6g})"))
                flag.append(W)
                return float("inf")
            if search.report is None:
                pieces.append((d.n, None, out.status.value))
                return None
            V = search.report.subspace
        flag.append(V)
        a = walk(restrict_datum(d, V, tol.rank_tol), depth - 1)
        b = walk(quotient_datum(d, V, tol.rank_tol), depth - 1)
        if a is None or b is None:
            return None
        return a * b

    from .finiteness import check_scaling

    ok, lhs, rhs = check_scaling(datum)
    if not ok:
        return FactorizedConstant(float("inf"), (), (), f"scaling fails ({lhs} vs {rhs:.12g})")
    value = walk(datum.normalized(), budget.factor_depth)
    return FactorizedConstant(value, tuple(pieces), tuple(flag))
