"""Gaussian functional, extremiser iteration, geometric normal form, localized constant.

The solver maximises the concave-in-log objective

    F(A) = sum_j p_j logdet A_j - logdet M(A),   M(A) = sum_j p_j B_j^T A_j B_j,

whose value is ``2 log BL_g``.  The update ``A_j <- (B_j M^{-1} B_j^T)^{-1}``
maximises a minorant of ``F`` (logdet is concave, so ``-logdet M`` is bounded
below by its tangent), hence ``F`` never decreases.  Fixed points are exactly
the stationary inputs.  On non-extremisable data the iterates drift to
infinity only logarithmically, so each iteration adds a monotone line
search along the SPD geodesic through two consecutive plain iterates.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .core import (
    DEFAULT_TOL,
    BLDatum,
    EquivalenceTransform,
    Subspace,
    Tolerances,
    random_orthogonal,
    validate_datum,
)
from .errors import (
    DomainError,
    NotExtremalError,
    PreconditionError,
    SingularError,
    StructuralError,
    UnsupportedError,
)


@dataclass(frozen=True, eq=False)
class GaussianInput:
    """One symmetric positive-definite matrix per target space."""

    matrices: tuple

    def __post_init__(self):
        mats = []
        for j, a in enumerate(self.matrices):
            a = np.atleast_2d(np.asarray(a, dtype=float)) if np.ndim(a) < 2 else np.asarray(a, dtype=float)
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise StructuralError(f"A_{j} must be square")
            if a.size:
                if not np.all(np.isfinite(a)):
                    raise DomainError(f"A_{j} has non-finite entries")
                scale = max(1.0, float(np.abs(a).max()))
                if np.abs(a - a.T).max() > 1e-12 * scale:
                    raise DomainError(f"A_{j} is not symmetric")
                a = 0.5 * (a + a.T)
                ev = np.linalg.eigvalsh(a)
                if ev[0] <= 1e-14 * max(ev[-1], 0.0) or ev[0] <= 0:
                    raise DomainError(f"A_{j} is not positive definite (smallest eigenvalue {ev[0]:.3e})")
            a = a.copy()
            a.flags.writeable = False
            mats.append(a)
        object.__setattr__(self, "matrices", tuple(mats))

    @classmethod
    def identity(cls, datum: BLDatum) -> "GaussianInput":
        return cls(tuple(np.eye(k) for k in datum.target_dims))

    @classmethod
    def random(cls, datum: BLDatum, rng: np.random.Generator) -> "GaussianInput":
        """``Q^T D Q`` per map with ``D`` log-uniform in [0.1, 10]."""
        mats = []
        for k in datum.target_dims:
            Q = random_orthogonal(k, rng)
            d = 10.0 ** rng.uniform(-1.0, 1.0, size=k)
            mats.append(Q.T @ np.diag(d) @ Q)
        return cls(tuple(mats))

    def scaled(self, lam: float) -> "GaussianInput":
        return GaussianInput(tuple(lam * a for a in self.matrices))

    def __len__(self) -> int:
        return len(self.matrices)

    def __iter__(self):
        return iter(self.matrices)

    def __getitem__(self, j: int) -> np.ndarray:
        return self.matrices[j]

    def to_json(self) -> list:
        return [a.tolist() for a in self.matrices]


def _as_input(A: GaussianInput | Sequence[np.ndarray]) -> GaussianInput:
    return A if isinstance(A, GaussianInput) else GaussianInput(tuple(A))


def _check_shapes(datum: BLDatum, A: GaussianInput) -> None:
    if len(A) != datum.m:
        raise StructuralError(f"{len(A)} gaussian matrices for {datum.m} maps")
    for j, (a, k) in enumerate(zip(A, datum.target_dims)):
        if a.shape != (k, k):
            raise StructuralError(f"A_{j} has shape {a.shape}, target dimension is {k}")


# ---------------------------------------------------------------------------
# small SPD helpers


def _logdet_spd(a: np.ndarray) -> float:
    if a.size == 0:
        return 0.0
    sign, ld = np.linalg.slogdet(a)
    return float(ld) if sign > 0 else -np.inf


def _spd_power(a: np.ndarray, power: float) -> np.ndarray:
    if a.size == 0:
        return a.copy()
    w, V = np.linalg.eigh(a)
    return (V * w**power) @ V.T


def gram_matrix(datum: BLDatum, A: Sequence[np.ndarray], G: np.ndarray | None = None) -> np.ndarray:
    """``sum_j p_j B_j^T A_j B_j`` (plus ``G`` when given)."""
    M = np.zeros((datum.n, datum.n)) if G is None else np.array(G, dtype=float)
    for B, p, a in zip(datum.matrices, datum.exponents, A):
        if B.shape[0]:
            M += p * (B.T @ a @ B)
    return 0.5 * (M + M.T)


def _eig_checked(M: np.ndarray, cond_max: float) -> tuple[np.ndarray, np.ndarray, float]:
    w, V = np.linalg.eigh(M)
    top = w[-1] if w.size else 1.0
    cond = np.inf if w.size and w[0] <= 0 else (top / w[0] if w.size else 1.0)
    return w, V, float(cond)


def _raise_singular(w: np.ndarray, V: np.ndarray, cond: float, cond_max: float) -> None:
    top = max(abs(w[-1]), np.finfo(float).tiny)
    null = V[:, w <= top / cond_max]
    raise SingularError(f"M is numerically singular (condition number {cond:.3e} > {cond_max:.1e})", null)


def log_gaussian_functional(datum: BLDatum, A: GaussianInput | Sequence[np.ndarray], tol: Tolerances = DEFAULT_TOL) -> float:
    A = _as_input(A)
    _check_shapes(datum, A)
    if datum.n == 0:
        return 0.5 * sum(p * _logdet_spd(a) for p, a in zip(datum.exponents, A))
    M = gram_matrix(datum, A)
    w, V, cond = _eig_checked(M, tol.cond_max)
    if not cond <= tol.cond_max:
        _raise_singular(w, V, cond, tol.cond_max)
    num = sum(p * _logdet_spd(a) for p, a in zip(datum.exponents, A))
    return 0.5 * (num - float(np.sum(np.log(w))))


def gaussian_functional(datum: BLDatum, A: GaussianInput | Sequence[np.ndarray], tol: Tolerances = DEFAULT_TOL) -> float:
    """``(prod det(A_j)^{p_j} / det(M))^{1/2}``, evaluated in log space."""
    return float(np.exp(log_gaussian_functional(datum, A, tol)))


def _residual(datum: BLDatum, A: Sequence[np.ndarray], Minv: np.ndarray) -> float:
    worst = 0.0
    for B, a in zip(datum.matrices, A):
        if B.shape[0] == 0:
            continue
        ainv = np.linalg.inv(a)
        d = ainv - B @ Minv @ B.T
        worst = max(worst, np.linalg.norm(d, 2) / np.linalg.norm(ainv, 2))
    return float(worst)


def stationarity_residual(datum: BLDatum, A: GaussianInput | Sequence[np.ndarray], tol: Tolerances = DEFAULT_TOL) -> float:
    """Largest relative operator-norm gap between ``A_j^{-1}`` and ``B_j M^{-1} B_j^T``."""
    A = _as_input(A)
    _check_shapes(datum, A)
    if datum.n == 0:
        return 0.0
    M = gram_matrix(datum, A)
    w, V, cond = _eig_checked(M, tol.cond_max)
    if not cond <= tol.cond_max:
        _raise_singular(w, V, cond, tol.cond_max)
    return _residual(datum, A, (V / w) @ V.T)


# ---------------------------------------------------------------------------
# fixed-point solver


class SolveStatus(str, enum.Enum):
    CONVERGED = "Converged"
    DEGENERATED = "Degenerated"
    BUDGET_EXHAUSTED = "BudgetExhausted"


@dataclass(frozen=True, eq=False)
class SolveOutcome:
    status: SolveStatus
    extremiser: GaussianInput | None
    blg_value: float | None
    degeneration_subspace: Subspace | None
    trace: tuple
    iterations: int
    residual: float
    cond_M: float
    last_input: GaussianInput | tuple | None = None  # raw iterate when not converged
    note: str = ""

    @property
    def converged(self) -> bool:
        return self.status is SolveStatus.CONVERGED

    def to_dict(self, include_trace: bool = True) -> dict[str, Any]:
        out: dict[str, Any] = {
            "status": self.status.value,
            "blg_value": self.blg_value,
            "iterations": self.iterations,
            "residual": self.residual,
            "cond_M": self.cond_M,
            "extremiser": self.extremiser.to_json() if self.extremiser is not None else None,
            "degeneration_subspace": (
                self.degeneration_subspace.basis.T.tolist() if self.degeneration_subspace is not None else None
            ),
            "note": self.note,
        }
        if include_trace:
            out["trace"] = [list(t) for t in self.trace]
        return out


# once the residual is small the iterate must also stop moving for a few
# iterations; this separates true fixed points from the escape to infinity
# on non-extremisable data, where the residual tends to zero as well
_CONFIRM_STEPS = 3
_CONFIRM_DRIFT = 1e-6
_STALL_WINDOW = 50
_STALL_CHANGE = 1e-13
_MAX_DOUBLINGS = 60


def _geodesic(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    """Point at parameter ``t`` on the affine-invariant geodesic from ``a`` (t=0) to ``b`` (t=1)."""
    if a.size == 0:
        return a
    w, V = np.linalg.eigh(a)
    s = (V * np.sqrt(w)) @ V.T
    si = (V / np.sqrt(w)) @ V.T
    inner = si @ b @ si
    x = s @ _spd_power(0.5 * (inner + inner.T), t) @ s
    return 0.5 * (x + x.T)


class _Objective:
    """``F`` and the minorize-maximize step, optionally with a localizer ``G``."""

    def __init__(self, datum: BLDatum, G: np.ndarray | None = None):
        self.datum = datum
        self.G = G
        self.active = [j for j, B in enumerate(datum.matrices) if B.shape[0]]

    def evaluate(self, A: list[np.ndarray]):
        if not all(np.all(np.isfinite(a)) for a in A):
            return None
        M = gram_matrix(self.datum, A, self.G)
        w, V = np.linalg.eigh(M)
        if w.size and w[0] <= 0:
            return None
        num = sum(self.datum.exponents[j] * _logdet_spd(A[j]) for j in self.active)
        F = num - float(np.sum(np.log(w)))
        return F, M, w, V

    def step(self, A: list[np.ndarray], w: np.ndarray, V: np.ndarray) -> list[np.ndarray]:
        Minv = (V / w) @ V.T
        out = list(A)
        for j in self.active:
            B = self.datum.matrices[j]
            S = B @ Minv @ B.T
            Si = np.linalg.inv(0.5 * (S + S.T))
            out[j] = 0.5 * (Si + Si.T)
        return out


def _normalize_det(A: list[np.ndarray], w: np.ndarray) -> tuple[list[np.ndarray], float]:
    n = w.size
    if n == 0:
        return A, 1.0
    lam = float(np.exp(-np.sum(np.log(w)) / n))
    return [lam * a for a in A], lam


def _log_size(A: list[np.ndarray]) -> float:
    return max((float(np.log(np.linalg.eigvalsh(a)[-1])) for a in A if a.size), default=0.0)


class _Stepper:
    """Plain or accelerated iteration on ``F``.

    The accelerated step takes two plain steps ``A -> T1 -> T2`` and then
    walks along the geodesic through ``T1`` and ``T2``, doubling the step
    while ``F`` keeps increasing.  The second plain step damps the fast
    modes, so the walk follows the slow drift that plain iteration only
    creeps along.  Near a maximiser ``F`` is flat to rounding level, so
    there a trial point is also accepted when ``F`` ties within rounding
    and the stationarity residual drops.
    """

    def __init__(self, datum: BLDatum, G: np.ndarray | None, normalize: bool, cond_cap: float, log_size_cap: float = np.inf):
        self.obj = _Objective(datum, G)
        self.datum = datum
        self.use_residual = G is None
        self.normalize = normalize
        self.cond_cap = cond_cap
        self.log_size_cap = log_size_cap

    def _eval(self, A):
        ev = self.obj.evaluate(A)
        if ev is None or not self.normalize:
            return A, ev
        A, _ = _normalize_det(A, ev[2])
        return A, self.obj.evaluate(A)

    def start(self, A):
        return self._eval([np.array(a, dtype=float) for a in A])

    def plain(self, A, ev):
        T = self.obj.step(A, ev[2], ev[3])
        T, evT = self._eval(T)
        if evT is None:
            raise SingularError("iteration produced a singular M")
        return T, evT

    def _res(self, A, ev):
        w, V = ev[2], ev[3]
        return _residual(self.datum, A, (V / w) @ V.T)

    def _better(self, E, eE, best, bev) -> bool:
        noise = 64 * np.finfo(float).eps * (1.0 + abs(bev[0]))
        if eE[0] > bev[0] + noise:
            return True
        if self.use_residual and eE[0] >= bev[0] - noise:
            return self._res(E, eE) < self._res(best, bev)
        return False

    def accelerated(self, A, ev):
        T1, e1 = self.plain(A, ev)
        T2, e2 = self.plain(T1, e1)
        best, bev = T2, e2
        om = 2.0
        for _ in range(_MAX_DOUBLINGS):
            E, eE = self._eval([_geodesic(a, t, om) if a.size else a for a, t in zip(T1, T2)])
            if eE is None or not self._better(E, eE, best, bev):
                break
            best, bev = E, eE
            w = eE[2]
            if (w.size and w[-1] / w[0] > self.cond_cap) or _log_size(E) > self.log_size_cap:
                break
            om *= 2.0
        return best, bev


def _low_eigenspace(w: np.ndarray, V: np.ndarray) -> Subspace:
    logw = np.log(np.maximum(w, np.finfo(float).tiny))
    cols = V[:, logw < logw.mean()]
    if cols.shape[1] == 0:
        cols = V[:, :1]
    return Subspace.span(cols, 1e-12, scale=1.0)


def fixed_point_solve(
    datum: BLDatum,
    start: GaussianInput | Sequence[np.ndarray] | None = None,
    tol: Tolerances = DEFAULT_TOL,
    max_iter: int = 10000,
    seed: int | None = None,
    accelerate: bool = True,
) -> SolveOutcome:
    """Iterate ``A_j <- (B_j M^{-1} B_j^T)^{-1}`` with ``det M = 1`` after each step.

    Without ``start`` the iteration begins at the identities, or at a random
    input drawn from ``seed`` when one is given.  ``max_iter`` counts outer
    iterations; an accelerated iteration performs two plain updates plus a
    short line search.
    """
    if datum.has_zero_exponents():
        raise PreconditionError("datum has zero exponents; call datum.normalized() first")
    rep = validate_datum(datum, tol)
    if not rep.all_surjective:
        raise PreconditionError(f"maps {[j for j, s in enumerate(rep.surjective) if not s]} are not surjective")
    if not rep.non_degenerate:
        raise PreconditionError("datum is degenerate: the maps share a nonzero kernel")
    if start is not None:
        A0 = _as_input(start)
    elif seed is not None:
        A0 = GaussianInput.random(datum, np.random.default_rng(seed))
    else:
        A0 = GaussianInput.identity(datum)
    _check_shapes(datum, A0)

    if datum.n == 0:
        value = gaussian_functional(datum, A0, tol)
        return SolveOutcome(SolveStatus.CONVERGED, A0, value, None, ((0, value, 0.0, 1.0),), 0, 0.0, 1.0, A0)

    stepper = _Stepper(datum, None, normalize=True, cond_cap=tol.cond_max)
    A, ev = stepper.start(A0)
    if ev is None:
        raise SingularError("starting input gives a singular M")

    trace: list[tuple[int, float, float, float]] = []
    confirm: tuple[int, float] | None = None
    it = 0
    while True:
        F, M, w, V = ev
        cond = float(w[-1] / w[0])
        res = _residual(datum, A, (V / w) @ V.T)
        trace.append((it, float(np.exp(F / 2)), res, cond))

        if not cond <= tol.cond_max:
            return SolveOutcome(
                SolveStatus.DEGENERATED, None, None, _low_eigenspace(w, V), tuple(trace), it, res, cond,
                tuple(A), "condition number of M exceeded cond_max",
            )
        if res <= tol.stat_tol:
            if confirm is None:
                confirm = (it, float(np.log(cond)))
            elif it - confirm[0] >= _CONFIRM_STEPS:
                if abs(np.log(cond) - confirm[1]) <= _CONFIRM_DRIFT:
                    Afin = GaussianInput(tuple(A))
                    value = gaussian_functional(datum, Afin, tol)
                    return SolveOutcome(SolveStatus.CONVERGED, Afin, value, None, tuple(trace), it, res, cond, Afin)
                confirm = (it, float(np.log(cond)))
        else:
            confirm = None
            if (
                len(trace) > _STALL_WINDOW
                and abs(trace[-1][1] - trace[-1 - _STALL_WINDOW][1]) <= _STALL_CHANGE
                and res >= 0.5 * trace[-1 - _STALL_WINDOW][2]
            ):
                return SolveOutcome(
                    SolveStatus.BUDGET_EXHAUSTED, None, None, None, tuple(trace), it, res, cond,
                    tuple(A), "objective stalled with the stationarity residual above tolerance",
                )
        if it >= max_iter:
            return SolveOutcome(
                SolveStatus.BUDGET_EXHAUSTED, None, None, None, tuple(trace), it, res, cond,
                tuple(A), "max_iter reached",
            )
        A, ev = stepper.accelerated(A, ev) if accelerate else stepper.plain(A, ev)
        it += 1


# ---------------------------------------------------------------------------
# geometric data and normal form


def is_geometric(datum: BLDatum, tol: float = 1e-9) -> bool:
    if isinstance(tol, Tolerances):
        tol = tol.rank_tol
    S = np.zeros((datum.n, datum.n))
    for B, p in zip(datum.matrices, datum.exponents):
        k = B.shape[0]
        if k and np.linalg.norm(B @ B.T - np.eye(k), 2) > tol:
            return False
        S += p * (B.T @ B)
    return bool(datum.n == 0 or np.linalg.norm(S - np.eye(datum.n), 2) <= tol)


def normalize_to_geometric(
    datum: BLDatum, A: GaussianInput | Sequence[np.ndarray], tol: Tolerances = DEFAULT_TOL
) -> tuple[BLDatum, EquivalenceTransform]:
    """Geometric datum ``A_j^{1/2} B_j M^{-1/2}`` and the transform producing it."""
    A = _as_input(A)
    res = stationarity_residual(datum, A, tol)
    if res > tol.stat_tol:
        raise NotExtremalError(f"stationarity residual {res:.3e} exceeds {tol.stat_tol:.1e}")
    M = gram_matrix(datum, A)
    C = _spd_power(M, -0.5)
    Cs = tuple(_spd_power(a, -0.5) for a in A)
    T = EquivalenceTransform(C, Cs)
    mats = tuple(_spd_power(a, 0.5) @ B @ C if B.shape[0] else B.copy() for a, B in zip(A, datum.matrices))
    return BLDatum(datum.n, mats, datum.exponents, datum.labels), T


# ---------------------------------------------------------------------------
# localized constant


class LocalizedStatus(str, enum.Enum):
    FINITE = "Finite"
    INFINITE = "Infinite"
    BUDGET_EXHAUSTED = "BudgetExhausted"


@dataclass(frozen=True)
class LocalizedResult:
    status: LocalizedStatus
    K: float | None
    iterations: int
    log_objective: float
    inputs: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {"status": self.status.value, "K": self.K, "iterations": self.iterations, "log_objective": self.log_objective}


def localized_constant(
    datum: BLDatum,
    G: np.ndarray,
    tol: Tolerances = DEFAULT_TOL,
    max_iter: int = 10000,
) -> LocalizedResult:
    """Best constant with the gaussian weight ``exp(-pi <Gx, x>)`` on the domain.

    The supremum of ``prod det(A_j)^{p_j} / det(G + M)`` is approached by
    the same accelerated update with ``G + M`` in place of ``M`` and no
    rescaling.  The supremum need not be attained: the iterates can run off
    to infinity while the objective converges.  So when the line search
    pushes the iterates to the size cap (1e100), the objective there is
    compared with its value halfway along the geodesic from the start; a
    gap above 1e-3 means divergence.  An objective that stays flat for
    three iterations in a row means a finite constant.
    """
    G = np.asarray(G, dtype=float)
    if G.shape != (datum.n, datum.n):
        raise StructuralError(f"G must be {datum.n}x{datum.n}")
    if datum.n and (
        np.abs(G - G.T).max() > 1e-12 * max(1.0, np.abs(G).max()) or np.linalg.eigvalsh(0.5 * (G + G.T))[0] <= 0
    ):
        raise PreconditionError("G must be symmetric positive definite")
    if datum.has_zero_exponents():
        raise PreconditionError("datum has zero exponents; call datum.normalized() first")
    G = 0.5 * (G + G.T)
    size_cap = np.log(1e100)
    stepper = _Stepper(datum, G, normalize=False, cond_cap=np.inf, log_size_cap=size_cap)
    obj = stepper.obj
    A0, ev = stepper.start([np.eye(k) for k in datum.target_dims])
    A, F_prev = A0, ev[0]
    quiet = 0
    for it in range(1, max_iter + 1):
        A, ev = stepper.accelerated(A, ev)
        F = ev[0]
        dF, F_prev = F - F_prev, F
        if _log_size(A) >= size_cap:
            # along a divergent ray the objective grows linearly in log size;
            # toward an unattained finite supremum it saturates exponentially fast
            mid = obj.evaluate([_geodesic(a, b, 0.5) if a.size else a for a, b in zip(A0, A)])
            if mid is not None and F - mid[0] > 1e-3:
                return LocalizedResult(LocalizedStatus.INFINITE, None, it, F, tuple(A))
        quiet = quiet + 1 if dF <= tol.stat_tol * max(1.0, abs(F)) else 0
        if quiet >= 3:
            return LocalizedResult(LocalizedStatus.FINITE, float(np.exp(F / 2)), it, F, tuple(A))
    return LocalizedResult(LocalizedStatus.BUDGET_EXHAUSTED, None, max_iter, F_prev, tuple(A))


# ---------------------------------------------------------------------------
# quadrature cross-check


_TAIL_EXPONENT = 36.0  # exp(-36) ~ 2e-16 at the box edge


def _gaussian_box_integral(quad_form, centre: np.ndarray, H: np.ndarray, points: int) -> float:
    """Trapezoid integral of ``exp(-pi q(x))`` on a box aligned with the principal axes of ``H``.

    ``H`` only shapes the box; the integrand is whatever ``quad_form``
    evaluates on an (N, d) array of points.
    """
    d = H.shape[0]
    if d == 0:
        return float(np.exp(-np.pi * quad_form(np.zeros((1, 0)))[0]))
    w, U = np.linalg.eigh(H)
    radii = np.sqrt(_TAIL_EXPONENT / (np.pi * w))
    axes = [np.linspace(-r, r, points) for r in radii]
    weights = []
    for ax in axes:
        h = ax[1] - ax[0]
        wt = np.full(points, h)
        wt[0] = wt[-1] = h / 2
        weights.append(wt)
    total = 0.0
    # loop over the first axis to bound memory for d = 3
    rest = np.stack(np.meshgrid(*axes[1:], indexing="ij"), axis=-1).reshape(-1, d - 1) if d > 1 else np.zeros((1, 0))
    rest_w = np.ones(1)
    for wt in weights[1:]:
        rest_w = np.multiply.outer(rest_w, wt).ravel()
    for y0, w0 in zip(axes[0], weights[0]):
        Y = np.hstack([np.full((rest.shape[0], 1), y0), rest])
        X = centre + Y @ U.T
        total += w0 * float(np.dot(rest_w, np.exp(-np.pi * quad_form(X))))
    return total


def quadrature_oracle(
    datum: BLDatum,
    A: GaussianInput | Sequence[np.ndarray],
    shifts: Sequence[np.ndarray] | None = None,
    points: int = 257,
) -> float:
    """Gaussian functional by direct numerical integration (``n <= 3``).

    With ``shifts`` the j-th gaussian is translated by ``shifts[j]`` in its
    target space; the ratio then never exceeds the centred value.
    """
    A = _as_input(A)
    _check_shapes(datum, A)
    if datum.n > 3:
        raise UnsupportedError("quadrature is limited to domain dimension 3")
    xi = [np.zeros(k) for k in datum.target_dims] if shifts is None else [np.asarray(s, float) for s in shifts]
    terms = [(B, p, a, s) for B, p, a, s in zip(datum.matrices, datum.exponents, A, xi) if B.shape[0]]

    def q(X: np.ndarray) -> np.ndarray:
        out = np.zeros(X.shape[0])
        for B, p, a, s in terms:
            Y = X @ B.T - s
            out += p * np.einsum("ni,ij,nj->n", Y, a, Y)
        return out

    M = gram_matrix(datum, A)
    rhs = sum((p * (B.T @ a @ s) for B, p, a, s in terms), np.zeros(datum.n))
    centre = np.linalg.solve(M, rhs) if datum.n else np.zeros(0)
    num = _gaussian_box_integral(q, centre, M, points)
    log_den = 0.0
    for B, p, a, s in terms:
        den = _gaussian_box_integral(lambda Z, a=a: np.einsum("ni,ij,nj->n", Z, a, Z), np.zeros(a.shape[0]), a, points)
        log_den += p * np.log(den)
    return float(num / np.exp(log_den))
