"""Data types for Brascamp–Lieb data and the numerical subspace algebra.

A datum is a domain dimension ``n`` together with surjections
``B_j : R^n -> R^{n_j}`` and exponents ``p_j >= 0``.  Every "dimension" that
the theory talks about is realised here as a numerical rank: the number of
singular values above ``rank_tol`` times a reference scale.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import (
    DatumParseError,
    DomainError,
    InvertibilityError,
    StructuralError,
)


@dataclass(frozen=True)
class Tolerances:
    rank_tol: float = 1e-9
    stat_tol: float = 1e-10
    cond_max: float = 1e12
    projector_tol: float = 1e-8

    def __post_init__(self):
        for name in ("rank_tol", "stat_tol", "cond_max", "projector_tol"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise DomainError(f"tolerance {name} must be a positive finite number, got {v!r}")

    def to_dict(self) -> dict[str, float]:
        return {
            "rank_tol": self.rank_tol,
            "stat_tol": self.stat_tol,
            "cond_max": self.cond_max,
            "projector_tol": self.projector_tol,
        }


DEFAULT_TOL = Tolerances()


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


# ---------------------------------------------------------------------------
# numerical rank and subspaces


def numerical_rank(A: np.ndarray, tol: float = DEFAULT_TOL.rank_tol, scale: float | None = None) -> int:
    """Count singular values of ``A`` above ``tol * scale``.

    ``scale`` defaults to the largest singular value of ``A`` itself.  Passing
    the norm of a parent matrix keeps tiny roundoff images (for example
    ``B @ v`` with ``v`` almost in the kernel) from being counted.
    """
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    ref = s[0] if scale is None else float(scale)
    if ref <= 0.0:
        return 0
    return int(np.count_nonzero(s > tol * ref))


def spectral_norm(A: np.ndarray) -> float:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


@dataclass(frozen=True, eq=False)
class Subspace:
    """Subspace of ``R^ambient_dim`` carried by an orthonormal column basis."""

    basis: np.ndarray
    ambient_dim: int = -1

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim != 2:
            raise StructuralError("subspace basis must be a 2-D array (columns are basis vectors)")
        amb = b.shape[0] if self.ambient_dim < 0 else int(self.ambient_dim)
        if b.shape[0] != amb:
            raise StructuralError(f"basis has {b.shape[0]} rows but ambient_dim is {amb}")
        if b.shape[1] > 0:
            err = np.abs(b.T @ b - np.eye(b.shape[1])).max()
            if err > 1e-10:
                raise DomainError(f"basis columns are not orthonormal (error {err:.2e}); use Subspace.span")
        object.__setattr__(self, "basis", _frozen(b))
        object.__setattr__(self, "ambient_dim", amb)

    @classmethod
    def zero(cls, n: int) -> "Subspace":
        return cls(np.zeros((n, 0)), n)

    @classmethod
    def full(cls, n: int) -> "Subspace":
        return cls(np.eye(n), n)

    @classmethod
    def span(cls, vectors: np.ndarray, tol: float = DEFAULT_TOL.rank_tol, scale: float | None = None) -> "Subspace":
        """Orthonormal basis of the column span of ``vectors``."""
        v = np.asarray(vectors, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        n = v.shape[0]
        if v.size == 0:
            return cls.zero(n)
        U, s, _ = np.linalg.svd(v, full_matrices=False)
        ref = s[0] if scale is None else float(scale)
        if ref <= 0.0:
            return cls.zero(n)
        k = int(np.count_nonzero(s > tol * ref))
        return cls(_canonical_signs(U[:, :k]), n)

    @classmethod
    def coordinate(cls, n: int, indices: Iterable[int]) -> "Subspace":
        idx = sorted(set(indices))
        return cls(np.eye(n)[:, idx], n)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def distance(self, other: "Subspace") -> float:
        if other.ambient_dim != self.ambient_dim:
            raise StructuralError("subspaces live in different ambient spaces")
        return float(np.linalg.norm(self.projector() - other.projector()))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Subspace):
            return NotImplemented
        return other.ambient_dim == self.ambient_dim and self.distance(other) < DEFAULT_TOL.projector_tol

    __hash__ = None  # equality is tolerance based

    def contains(self, v: np.ndarray, tol: float = 1e-8) -> bool:
        v = np.asarray(v, dtype=float)
        nv = np.linalg.norm(v)
        if nv == 0:
            return True
        return bool(np.linalg.norm(v - self.projector() @ v) <= tol * nv)

    def complement(self) -> "Subspace":
        return orthocomplement(self)

    def is_coordinate(self, tol: float = 1e-8) -> bool:
        P = self.projector()
        off = P - np.diag(np.diag(P))
        d = np.diag(P)
        return bool(np.abs(off).max(initial=0.0) < tol and np.all(np.minimum(np.abs(d), np.abs(d - 1)) < tol))

    def __repr__(self) -> str:
        return f"Subspace(dim={self.dim}, ambient_dim={self.ambient_dim})"


def _canonical_signs(U: np.ndarray) -> np.ndarray:
    # deterministic sign per column: largest-magnitude entry positive
    if U.size == 0:
        return U
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def image(B: np.ndarray, V: Subspace, tol: float = DEFAULT_TOL.rank_tol) -> Subspace:
    """``B V`` as a subspace of the target of ``B``."""
    B = np.asarray(B, dtype=float)
    if B.shape[1] != V.ambient_dim:
        raise StructuralError(f"matrix has {B.shape[1]} columns, subspace lives in R^{V.ambient_dim}")
    return Subspace.span(B @ V.basis, tol, scale=spectral_norm(B)) if B.shape[0] else Subspace.zero(0)


def image_dim(B: np.ndarray, V: Subspace, tol: float = DEFAULT_TOL.rank_tol) -> int:
    B = np.asarray(B, dtype=float)
    if B.shape[0] == 0 or V.dim == 0:
        return 0
    return numerical_rank(B @ V.basis, tol, scale=spectral_norm(B))


def subspace_sum(V: Subspace, W: Subspace, tol: float = DEFAULT_TOL.rank_tol) -> Subspace:
    if V.ambient_dim != W.ambient_dim:
        raise StructuralError("subspaces live in different ambient spaces")
    return Subspace.span(np.hstack([V.basis, W.basis]), tol, scale=1.0)


def orthocomplement(V: Subspace) -> Subspace:
    n, k = V.ambient_dim, V.dim
    if k == 0:
        return Subspace.full(n)
    if k == n:
        return Subspace.zero(n)
    U, _, _ = np.linalg.svd(V.basis, full_matrices=True)
    return Subspace(_canonical_signs(U[:, k:]), n)


def intersection(V: Subspace, W: Subspace, tol: float = DEFAULT_TOL.rank_tol) -> Subspace:
    return orthocomplement(subspace_sum(orthocomplement(V), orthocomplement(W), tol))


def kernel(B: np.ndarray, tol: float = DEFAULT_TOL.rank_tol) -> Subspace:
    B = np.asarray(B, dtype=float)
    n = B.shape[1]
    if B.shape[0] == 0:
        return Subspace.full(n)
    return orthocomplement(Subspace.span(B.T, tol))


def row_space(B: np.ndarray, tol: float = DEFAULT_TOL.rank_tol) -> Subspace:
    B = np.asarray(B, dtype=float)
    if B.shape[0] == 0:
        return Subspace.zero(B.shape[1])
    return Subspace.span(B.T, tol)


def subspace_algebra(kind: str, *args: Any, tol: float = DEFAULT_TOL.rank_tol) -> Subspace:
    """Dispatch ``image``, ``sum``, ``intersection`` or ``orthocomplement`` by name."""
    if kind == "image":
        return image(args[0], args[1], tol)
    if kind == "sum":
        return subspace_sum(args[0], args[1], tol)
    if kind == "intersection":
        return intersection(args[0], args[1], tol)
    if kind == "orthocomplement":
        return orthocomplement(args[0])
    raise DomainError(f"unknown subspace operation {kind!r}")


# ---------------------------------------------------------------------------
# the datum


@dataclass(frozen=True, eq=False)
class BLDatum:
    """Domain dimension, surjections and exponents.

    Matrices are stored as read-only float arrays.  ``labels`` is a tuple of
    optional names, one per map.
    """

    n: int
    matrices: tuple
    exponents: tuple
    labels: tuple = field(default=())

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)) or self.n < 0:
            raise StructuralError(f"domain dimension must be a nonnegative integer, got {self.n!r}")
        n = int(self.n)
        mats = []
        for j, B in enumerate(self.matrices):
            a = np.asarray(B, dtype=float)
            if a.ndim == 1:
                a = a[None, :] if a.size else np.zeros((0, n))
            if a.ndim != 2:
                raise StructuralError(f"map {j}: matrix must be 2-D")
            if a.shape[1] != n:
                raise StructuralError(f"map {j}: matrix has {a.shape[1]} columns but the domain dimension is {n}")
            if not np.all(np.isfinite(a)):
                raise DomainError(f"map {j}: matrix entries must be finite")
            mats.append(_frozen(a))
        exps = tuple(float(p) for p in self.exponents)
        if len(exps) != len(mats):
            raise StructuralError(f"{len(mats)} matrices but {len(exps)} exponents")
        for j, p in enumerate(exps):
            if not math.isfinite(p) or p < 0:
                raise DomainError(f"map {j}: exponent must be finite and nonnegative, got {p}")
        labels = tuple(self.labels) if self.labels else (None,) * len(mats)
        if len(labels) != len(mats):
            raise StructuralError("labels must match the number of maps")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "matrices", tuple(mats))
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_maps(cls, n: int, maps: Sequence[tuple[np.ndarray, float]], labels: Sequence[str | None] | None = None) -> "BLDatum":
        return cls(n, tuple(B for B, _ in maps), tuple(p for _, p in maps), tuple(labels) if labels else ())

    @property
    def m(self) -> int:
        return len(self.matrices)

    @property
    def target_dims(self) -> tuple[int, ...]:
        return tuple(B.shape[0] for B in self.matrices)

    @property
    def p(self) -> np.ndarray:
        return np.array(self.exponents, dtype=float)

    def is_rank_one(self) -> bool:
        return self.m > 0 and all(k == 1 for k in self.target_dims)

    def vectors(self) -> np.ndarray:
        """Rows of the rank-one maps stacked as an m×n array."""
        if not self.is_rank_one():
            raise StructuralError("datum is not rank-one")
        return np.vstack(self.matrices)

    def with_exponents(self, exponents: Sequence[float]) -> "BLDatum":
        return BLDatum(self.n, self.matrices, tuple(exponents), self.labels)

    def normalized(self) -> "BLDatum":
        """Copy without the maps whose exponent is zero.

        Such maps contribute nothing to any constant, so dropping them is
        harmless; it is kept explicit because the map indices change.
        """
        keep = [j for j, p in enumerate(self.exponents) if p > 0]
        return BLDatum(
            self.n,
            tuple(self.matrices[j] for j in keep),
            tuple(self.exponents[j] for j in keep),
            tuple(self.labels[j] for j in keep),
        )

    def has_zero_exponents(self) -> bool:
        return any(p == 0 for p in self.exponents)

    def to_json(self) -> dict[str, Any]:
        maps = []
        for B, p, lab in zip(self.matrices, self.exponents, self.labels):
            entry: dict[str, Any] = {"matrix": B.tolist(), "exponent": p}
            if lab is not None:
                entry["label"] = lab
            maps.append(entry)
        return {"dim": self.n, "maps": maps}

    def digest(self) -> dict[str, Any]:
        canon = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return {
            "dim": self.n,
            "target_dims": list(self.target_dims),
            "exponents": list(self.exponents),
            "sha256": hashlib.sha256(canon.encode()).hexdigest(),
        }

    def __repr__(self) -> str:
        return f"BLDatum(n={self.n}, target_dims={self.target_dims}, exponents={self.exponents})"


# ---------------------------------------------------------------------------
# JSON parsing with path-aware errors


def _reject_constant(name: str):
    raise DatumParseError(f"non-finite constant {name} is not allowed")


def parse_json_text(text: str) -> Any:
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise DatumParseError(f"invalid JSON ({exc.msg} at line {exc.lineno} column {exc.colno})") from None


def _number(x: Any, path: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise DatumParseError(f"expected a number, got {type(x).__name__}", path)
    v = float(x)
    if not math.isfinite(v):
        raise DatumParseError("number must be finite", path)
    return v


def datum_from_json(obj: Any, path: str = "$") -> BLDatum:
    if not isinstance(obj, dict):
        raise DatumParseError("datum must be a JSON object", path)
    unknown = set(obj) - {"dim", "maps"}
    if unknown:
        raise DatumParseError(f"unknown key(s) {sorted(unknown)}", path)
    if "dim" not in obj:
        raise DatumParseError("missing key 'dim'", path)
    n = obj["dim"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 0:
        raise DatumParseError("'dim' must be a nonnegative integer", f"{path}.dim")
    maps = obj.get("maps")
    if not isinstance(maps, list):
        raise DatumParseError("'maps' must be a list", f"{path}.maps")
    mats, exps, labels = [], [], []
    for j, entry in enumerate(maps):
        mp = f"{path}.maps[{j}]"
        if not isinstance(entry, dict):
            raise DatumParseError("map entry must be an object", mp)
        unknown = set(entry) - {"matrix", "exponent", "label"}
        if unknown:
            raise DatumParseError(f"unknown key(s) {sorted(unknown)}", mp)
        rows = entry.get("matrix")
        if not isinstance(rows, list):
            raise DatumParseError("'matrix' must be a list of rows", f"{mp}.matrix")
        parsed = []
        for r, row in enumerate(rows):
            rp = f"{mp}.matrix[{r}]"
            if not isinstance(row, list):
                raise DatumParseError("row must be a list", rp)
            if len(row) != n:
                raise DatumParseError(f"row has {len(row)} entries, expected dim={n}", rp)
            parsed.append([_number(x, f"{rp}[{c}]") for c, x in enumerate(row)])
        mats.append(np.array(parsed, dtype=float).reshape(len(parsed), n))
        if "exponent" not in entry:
            raise DatumParseError("missing key 'exponent'", mp)
        p = _number(entry["exponent"], f"{mp}.exponent")
        if p < 0:
            raise DatumParseError("exponent must be nonnegative", f"{mp}.exponent")
        exps.append(p)
        lab = entry.get("label")
        if lab is not None and not isinstance(lab, str):
            raise DatumParseError("label must be a string", f"{mp}.label")
        labels.append(lab)
    return BLDatum(n, tuple(mats), tuple(exps), tuple(labels))


def load_datum(path: str) -> BLDatum:
    with open(path, encoding="utf-8") as fh:
        return datum_from_json(parse_json_text(fh.read()))


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class ValidationReport:
    ranks: tuple[int, ...]
    target_dims: tuple[int, ...]
    surjective: tuple[bool, ...]
    common_kernel: Subspace
    non_degenerate: bool
    zero_exponent_maps: tuple[int, ...]
    rank_tol: float

    @property
    def all_surjective(self) -> bool:
        return all(self.surjective)

    @property
    def ok(self) -> bool:
        return self.all_surjective and self.non_degenerate

    def to_dict(self) -> dict[str, Any]:
        return {
            "ranks": list(self.ranks),
            "target_dims": list(self.target_dims),
            "surjective": list(self.surjective),
            "common_kernel_dim": self.common_kernel.dim,
            "common_kernel_basis": self.common_kernel.basis.T.tolist(),
            "non_degenerate": self.non_degenerate,
            "zero_exponent_maps": list(self.zero_exponent_maps),
            "rank_tol": self.rank_tol,
        }


def common_kernel(datum: BLDatum, tol: float = DEFAULT_TOL.rank_tol) -> Subspace:
    rows = []
    for B in datum.matrices:
        nb = spectral_norm(B)
        if nb > 0:
            rows.append(B / nb)
    if not rows:
        return Subspace.full(datum.n)
    return kernel(np.vstack(rows), tol)


def validate_datum(datum: BLDatum, tol: Tolerances = DEFAULT_TOL) -> ValidationReport:
    ranks = tuple(numerical_rank(B, tol.rank_tol) for B in datum.matrices)
    surj = tuple(r == k for r, k in zip(ranks, datum.target_dims))
    ck = common_kernel(datum, tol.rank_tol)
    return ValidationReport(
        ranks=ranks,
        target_dims=datum.target_dims,
        surjective=surj,
        common_kernel=ck,
        non_degenerate=ck.dim == 0,
        zero_exponent_maps=tuple(j for j, p in enumerate(datum.exponents) if p == 0),
        rank_tol=tol.rank_tol,
    )


# ---------------------------------------------------------------------------
# constructions


def restrict_datum(datum: BLDatum, V: Subspace, tol: float = DEFAULT_TOL.rank_tol) -> BLDatum:
    """Restriction to ``V``: maps ``V -> B_j V`` in orthonormal coordinates."""
    if V.ambient_dim != datum.n:
        raise StructuralError("subspace does not live in the domain")
    if V.dim == 0:
        raise DomainError("cannot restrict to the zero subspace")
    mats = []
    for B in datum.matrices:
        Y = B @ V.basis
        U = image(B, V, tol).basis if B.shape[0] else np.zeros((0, 0))
        mats.append(U.T @ Y)
    return BLDatum(V.dim, tuple(mats), datum.exponents, datum.labels)


def quotient_datum(datum: BLDatum, V: Subspace, tol: float = DEFAULT_TOL.rank_tol) -> BLDatum:
    """Quotient by ``V``, with ``H/V`` realised as the orthocomplement of ``V``."""
    if V.ambient_dim != datum.n:
        raise StructuralError("subspace does not live in the domain")
    if V.dim == datum.n:
        raise DomainError("quotient by the whole domain is empty")
    P = orthocomplement(V).basis
    mats = []
    for B in datum.matrices:
        if B.shape[0] == 0:
            mats.append(np.zeros((0, P.shape[1])))
            continue
        W = orthocomplement(image(B, V, tol)).basis
        mats.append(W.T @ B @ P)
    return BLDatum(P.shape[1], tuple(mats), datum.exponents, datum.labels)


def _block_diag(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0] + b.shape[0], a.shape[1] + b.shape[1]))
    out[: a.shape[0], : a.shape[1]] = a
    out[a.shape[0]:, a.shape[1]:] = b
    return out


def direct_sum_datum(d1: BLDatum, d2: BLDatum) -> BLDatum:
    """Block-diagonal sum of two data sharing the exponent vector.

    A datum with ``n = 0`` and no maps acts as the neutral element.
    """
    if d2.n == 0 and d2.m == 0:
        return d1
    if d1.n == 0 and d1.m == 0:
        return d2
    if d1.m != d2.m:
        raise StructuralError(f"map counts differ ({d1.m} vs {d2.m})")
    if not np.allclose(d1.p, d2.p, rtol=0, atol=1e-12):
        raise StructuralError("exponent vectors differ")
    mats = tuple(_block_diag(a, b) for a, b in zip(d1.matrices, d2.matrices))
    return BLDatum(d1.n + d2.n, mats, d1.exponents, d1.labels)


def _check_invertible(C: np.ndarray, what: str, tol: float) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise StructuralError(f"{what} must be square")
    if C.size == 0:
        return C
    s = np.linalg.svd(C, compute_uv=False)
    if s[-1] <= tol * s[0]:
        raise InvertibilityError(f"{what} is singular (smallest/largest singular value {s[-1] / s[0]:.2e})")
    return C


@dataclass(frozen=True, eq=False)
class EquivalenceTransform:
    """Invertible changes of coordinates ``C`` on the domain and ``C_j`` on the targets.

    The transformed datum is ``C_j^{-1} B_j C``.
    """

    C: np.ndarray
    C_list: tuple

    def __post_init__(self):
        C = _check_invertible(self.C, "C", DEFAULT_TOL.rank_tol)
        Cs = tuple(_frozen(_check_invertible(c, f"C_{j}", DEFAULT_TOL.rank_tol)) for j, c in enumerate(self.C_list))
        object.__setattr__(self, "C", _frozen(C))
        object.__setattr__(self, "C_list", Cs)

    @classmethod
    def identity(cls, datum: BLDatum) -> "EquivalenceTransform":
        return cls(np.eye(datum.n), tuple(np.eye(k) for k in datum.target_dims))

    def then(self, other: "EquivalenceTransform") -> "EquivalenceTransform":
        """Apply ``self`` first and ``other`` second."""
        if len(other.C_list) != len(self.C_list):
            raise StructuralError("transforms act on different map counts")
        return EquivalenceTransform(self.C @ other.C, tuple(a @ b for a, b in zip(self.C_list, other.C_list)))

    def transform_input(self, A: Sequence[np.ndarray]) -> tuple[np.ndarray, ...]:
        """Gaussian input on the new datum with the same functional value up to the scale."""
        return tuple(Cj.T @ np.asarray(a) @ Cj for Cj, a in zip(self.C_list, A))

    def scale(self, exponents: Sequence[float]) -> float:
        num = sum(p * _logabsdet(Cj) for p, Cj in zip(exponents, self.C_list))
        return float(np.exp(num - _logabsdet(self.C)))


def _logabsdet(C: np.ndarray) -> float:
    if C.size == 0:
        return 0.0
    return float(np.linalg.slogdet(C)[1])


def apply_equivalence(datum: BLDatum, T: EquivalenceTransform) -> tuple[BLDatum, float]:
    """Transformed datum and the factor relating its constants to the original ones."""
    if T.C.shape[0] != datum.n or len(T.C_list) != datum.m:
        raise StructuralError("transform does not match the datum's dimensions")
    mats = []
    for j, (B, Cj) in enumerate(zip(datum.matrices, T.C_list)):
        if Cj.shape[0] != B.shape[0]:
            raise StructuralError(f"C_{j} has size {Cj.shape[0]}, target has dimension {B.shape[0]}")
        mats.append(np.linalg.solve(Cj, B @ T.C) if B.shape[0] else np.zeros((0, datum.n)))
    return BLDatum(datum.n, tuple(mats), datum.exponents, datum.labels), T.scale(datum.exponents)


# ---------------------------------------------------------------------------
# random helpers shared by tests, search and the CLI


def random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    if n == 0:
        return np.zeros((0, 0))
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def random_subspace(n: int, k: int, rng: np.random.Generator) -> Subspace:
    return Subspace(random_orthogonal(n, rng)[:, :k], n)
