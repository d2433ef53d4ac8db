"""Numerical checks of monotone quantities along heat flows and sliding kernels.

Grids are periodic and left-closed: axis points are ``-R + i h`` with
``h = 2R / N``.  Heat evolution uses ``u_t = Laplacian u`` solved exactly in
Fourier space, so grid mass is conserved to rounding.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy import integrate, ndimage

from .core import BLDatum, validate_datum
from .errors import DomainError, PreconditionError, StructuralError, UnsupportedError
from .gaussian import GaussianInput, gram_matrix, is_geometric

MAX_AXES = 3
MAX_POINTS = 512
_EPS = np.finfo(float).eps
# heat-kernel tail beyond 10.1 sqrt(t) carries less than 1e-12 of the mass
_TAIL_FACTOR = 10.1


def geometric_times(t0: float = 0.05, ratio: float = 1.3, count: int = 25) -> np.ndarray:
    return t0 * ratio ** np.arange(count)


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True, eq=False)
class GridField:
    """Nonnegative samples on a cubic periodic grid ``[-R, R)^k``."""

    values: np.ndarray
    half_width: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim < 1 or v.ndim > MAX_AXES:
            raise StructuralError(f"grid must have 1 to {MAX_AXES} axes, got {v.ndim}")
        if len(set(v.shape)) != 1:
            raise StructuralError(f"grid axes must have equal length, got shape {v.shape}")
        if v.shape[0] > MAX_POINTS or v.shape[0] < 4:
            raise StructuralError(f"grid axes need between 4 and {MAX_POINTS} points, got {v.shape[0]}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise DomainError("grid values must be finite and nonnegative")
        if not self.half_width > 0:
            raise DomainError("half_width must be positive")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "half_width", float(self.half_width))
        if not self.mass() > 0:
            raise DomainError("grid field has zero mass")

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def points(self) -> int:
        return self.values.shape[0]

    @property
    def spacing(self) -> float:
        return 2 * self.half_width / self.points

    def axis(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.points)

    def mass(self) -> float:
        return float(self.values.sum() * self.spacing**self.dim)

    def support_radius(self, rel: float = 1e-14) -> float:
        """Largest distance from the origin where the field exceeds ``rel * max``."""
        mask = self.values > rel * self.values.max()
        grids = np.meshgrid(*([self.axis()] * self.dim), indexing="ij")
        r = np.sqrt(sum(g**2 for g in grids))
        return float(r[mask].max())

    def coarsened(self) -> "GridField":
        if self.points % 2:
            raise StructuralError("coarsening needs an even number of points per axis")
        sl = tuple(slice(None, None, 2) for _ in range(self.dim))
        return GridField(self.values[sl], self.half_width)

    @classmethod
    def from_function(cls, f: Callable[[np.ndarray], np.ndarray], dim: int, half_width: float, points: int) -> "GridField":
        """Tabulate ``f`` (taking an ``(..., dim)`` array of points)."""
        ax = -half_width + (2 * half_width / points) * np.arange(points)
        grids = np.meshgrid(*([ax] * dim), indexing="ij")
        return cls(np.asarray(f(np.stack(grids, axis=-1)), dtype=float), half_width)


def gaussian_mixture(components: Sequence[tuple[float, Sequence[float], float]]) -> Callable[[np.ndarray], np.ndarray]:
    """Sum of isotropic gaussians ``(weight, centre, width)``, each of mass ``weight``."""

    def f(x: np.ndarray) -> np.ndarray:
        out = np.zeros(x.shape[:-1])
        k = x.shape[-1]
        for w, c, s in components:
            d2 = np.sum((x - np.asarray(c, dtype=float)) ** 2, axis=-1)
            out += w * (2 * np.pi * s * s) ** (-k / 2) * np.exp(-d2 / (2 * s * s))
        return out

    return f


def extreme_gaussian(x: np.ndarray) -> np.ndarray:
    """``exp(-pi |x|^2)``, the equality case for geometric data."""
    return np.exp(-np.pi * np.sum(x**2, axis=-1))


@dataclass(frozen=True, eq=False)
class PointMassList:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        w = np.asarray(self.weights, dtype=float).ravel()
        if p.shape[0] == 0:
            raise DomainError("point-mass list is empty")
        if w.shape[0] != p.shape[0]:
            raise StructuralError(f"{p.shape[0]} points but {w.shape[0]} weights")
        if not np.all(np.isfinite(p)) or not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise DomainError("point masses need finite locations and positive finite weights")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def distinct_points(self, tol: float = 1e-12) -> int:
        return len(np.unique(np.round(self.points / tol) * tol, axis=0))


class KernelKind(str, enum.Enum):
    GAUSSIAN = "Gaussian"
    EXPONENTIAL = "Exponential"
    TABULATED = "UserTabulated"


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """``Gaussian``: ``exp(-pi <A x, x>)``; ``Exponential``: ``exp(-rate |x|)``; ``UserTabulated``: a grid."""

    kind: KernelKind
    dim: int = 1
    matrix: np.ndarray | None = None
    rate: float = 1.0
    table: GridField | None = None
    log_concave: bool = True

    @classmethod
    def gaussian(cls, A: np.ndarray) -> "KernelSpec":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        GaussianInput((A,))
        return cls(KernelKind.GAUSSIAN, A.shape[0], matrix=A)

    @classmethod
    def exponential(cls, rate: float = 1.0, dim: int = 1) -> "KernelSpec":
        if not rate > 0:
            raise DomainError("decay rate must be positive")
        return cls(KernelKind.EXPONENTIAL, dim, rate=float(rate))

    @classmethod
    def tabulated(cls, table: GridField, tol: float = 1e-8) -> "KernelSpec":
        if table.dim > 2:
            raise UnsupportedError("tabulated kernels are supported in dimension 1 and 2")
        worst = log_concavity_defect(table)
        if worst > tol:
            raise DomainError(f"tabulated kernel is not log-concave (second difference of log up to {worst:.3e})")
        return cls(KernelKind.TABULATED, table.dim, table=table)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind is KernelKind.GAUSSIAN:
            return np.exp(-np.pi * np.einsum("...i,ij,...j->...", x, self.matrix, x))
        if self.kind is KernelKind.EXPONENTIAL:
            return np.exp(-self.rate * np.sqrt(np.sum(x**2, axis=-1)))
        return _tabulated_eval(self.table, x)

    def kinks(self) -> np.ndarray:
        """Points where a 1-D kernel is not smooth (breakpoints for quadrature)."""
        if self.kind is KernelKind.EXPONENTIAL:
            return np.zeros(1)
        if self.kind is KernelKind.TABULATED:
            return self.table.axis()
        return np.zeros(0)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value, "dim": self.dim, "log_concave": self.log_concave}
        if self.matrix is not None:
            out["matrix"] = self.matrix.tolist()
        if self.kind is KernelKind.EXPONENTIAL:
            out["rate"] = self.rate
        if self.table is not None:
            out["half_width"] = self.table.half_width
            out["points"] = self.table.points
        return out


def log_concavity_defect(table: GridField) -> float:
    """Largest discrete second difference of ``log psi`` along every axis and diagonal.

    Zero samples are allowed only outside a contiguous positive region.
    """
    v = table.values
    with np.errstate(divide="ignore"):
        L = np.log(v)
    worst = -np.inf
    if table.dim == 1:
        dirs = [(1,)]
    else:
        dirs = [(1, 0), (0, 1), (1, 1), (1, -1)]
    for d in dirs:
        fwd = np.roll(L, [-s for s in d], axis=tuple(range(table.dim)))
        bwd = np.roll(L, list(d), axis=tuple(range(table.dim)))
        inner = tuple(slice(1, -1) for _ in range(table.dim))
        a, b, c = fwd[inner], L[inner], bwd[inner]
        ok = np.isfinite(a) & np.isfinite(b) & np.isfinite(c)
        if np.any(ok):
            worst = max(worst, float(np.max(a[ok] - 2 * b[ok] + c[ok])))
        # a zero between two positive samples breaks concavity of the support
        if np.any(~np.isfinite(b) & np.isfinite(a) & np.isfinite(c)):
            return np.inf
    return worst


def _tabulated_eval(table: GridField, x: np.ndarray) -> np.ndarray:
    # linear interpolation of log psi keeps one-dimensional tables log-concave
    h, R = table.spacing, table.half_width
    with np.errstate(divide="ignore"):
        L = np.log(table.values)
    L = np.where(np.isfinite(L), L, -1e300)
    x = np.asarray(x, dtype=float)
    if table.dim == 1 and x.ndim >= 1 and x.shape[-1] != 1:
        x = x[..., None]
    coords = [(x[..., i] + R) / h for i in range(table.dim)]
    flat = [c.ravel() for c in coords]
    vals = ndimage.map_coordinates(L, flat, order=1, mode="constant", cval=-1e300)
    inside = np.all([(c >= 0) & (c <= table.points - 1) for c in flat], axis=0)
    out = np.where(inside, np.exp(np.maximum(vals, -745.0)), 0.0)
    out[vals < -700] = 0.0
    return out.reshape(coords[0].shape)


class Direction(str, enum.Enum):
    NON_DECREASING = "NonDecreasing"
    NON_INCREASING = "NonIncreasing"


@dataclass(frozen=True, eq=False)
class MonotonicityTrace:
    times: np.ndarray
    values: np.ndarray
    error_bound: np.ndarray
    label: str = ""
    limit: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        e = np.asarray(self.error_bound, dtype=float)
        if t.ndim != 1 or t.size == 0 or v.shape != t.shape or e.shape != t.shape:
            raise StructuralError("times, values and error_bound must be equal-length nonempty vectors")
        if np.any(np.diff(t) <= 0):
            raise DomainError("times must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise DomainError("trace values must be finite")
        for name, a in (("times", t), ("values", v), ("error_bound", e)):
            object.__setattr__(self, name, a)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "Q", "error_bound"])
        for row in zip(self.times, self.values, self.error_bound):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "times": self.times.tolist(),
            "values": self.values.tolist(),
            "error_bound": self.error_bound.tolist(),
            "limit": self.limit,
            "meta": self.meta,
        }


@dataclass(frozen=True)
class CheckResult:
    passed: bool
    direction: Direction
    violations: int
    worst_violation: float
    worst_index: int | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "direction": self.direction.value,
            "violations": self.violations,
            "worst_violation": self.worst_violation,
            "worst_index": self.worst_index,
        }


def assert_monotone(trace: MonotonicityTrace, direction: Direction | str) -> CheckResult:
    """Each step may move the wrong way by at most the two samples' error bounds."""
    direction = Direction(direction)
    sign = 1.0 if direction is Direction.NON_DECREASING else -1.0
    step = sign * np.diff(trace.values)
    slack = trace.error_bound[1:] + trace.error_bound[:-1]
    excess = -step - slack
    bad = excess > 0
    if excess.size == 0:
        return CheckResult(True, direction, 0, 0.0, None)
    k = int(np.argmax(excess))
    worst = float(max(excess[k], 0.0))
    return CheckResult(not bool(bad.any()), direction, int(bad.sum()), worst, k if bad.any() else None)


def strictly_monotone(trace: MonotonicityTrace, direction: Direction | str, factor: float = 3.0) -> bool:
    """Every step moves the right way by more than ``factor`` times the combined error bound."""
    sign = 1.0 if Direction(direction) is Direction.NON_DECREASING else -1.0
    step = sign * np.diff(trace.values)
    return bool(np.all(step > factor * (trace.error_bound[1:] + trace.error_bound[:-1])))


# ---------------------------------------------------------------------------
# geometric heat flow


def heat_evolve(field: GridField, t: float) -> np.ndarray:
    """Samples of ``e^{t Laplacian} f`` on the same grid."""
    if t == 0:
        return field.values.copy()
    n, h = field.points, field.spacing
    k = 2 * np.pi * np.fft.fftfreq(n, d=h)
    mult = np.exp(-t * k**2)
    F = np.fft.fftn(field.values)
    for ax in range(field.dim):
        shape = [1] * field.dim
        shape[ax] = n
        F = F * mult.reshape(shape)
    return np.real(np.fft.ifftn(F))


def _lift(values: np.ndarray, half_width: float, Y: np.ndarray) -> np.ndarray:
    """Cubic interpolation of grid samples at points ``Y`` (rows), zero outside."""
    n = values.shape[0]
    h = 2 * half_width / n
    coords = [(Y[:, i] + half_width) / h for i in range(Y.shape[1])]
    out = ndimage.map_coordinates(values, coords, order=3, mode="constant", cval=0.0)
    return np.maximum(out, 0.0)


def _heat_functional(
    datum: BLDatum, fields: Sequence[GridField], t: float, points: int, half_width: float
) -> tuple[float, list[float]]:
    h = 2 * half_width / points
    ax = -half_width + h * np.arange(points)
    X = np.stack(np.meshgrid(*([ax] * datum.n), indexing="ij"), axis=-1).reshape(-1, datum.n)
    log_integrand = np.zeros(X.shape[0])
    masses = []
    for B, p, f in zip(datum.matrices, datum.exponents, fields):
        u = heat_evolve(f, t)
        masses.append(float(u.sum() * f.spacing**f.dim))
        vals = _lift(u, f.half_width, X @ B.T)
        with np.errstate(divide="ignore"):
            log_integrand += p * np.log(vals)
    return float(np.exp(log_integrand).sum() * h**datum.n), masses


def evolve_geometric_heat(
    datum: BLDatum,
    inputs: Sequence[GridField],
    times: Sequence[float] | None = None,
    points: int | None = None,
) -> MonotonicityTrace:
    """``Q(t) = int prod_j u_j(t, B_j x)^{p_j} dx`` for heat-evolved inputs on geometric data.

    The domain grid uses ``points`` per axis (256 up to two dimensions, 64 in
    three) over the largest input half-width.  Each sample's error bound is
    ``|Q_h - Q_{2h}| / 3`` from a run with every grid coarsened by two.
    """
    if not is_geometric(datum):
        raise PreconditionError("datum is not geometric; apply normalize_to_geometric first")
    if datum.n > 3:
        raise UnsupportedError("geometric heat flow is supported for domains of dimension at most 3")
    if len(inputs) != datum.m:
        raise StructuralError(f"{datum.m} maps but {len(inputs)} inputs")
    for j, (f, k) in enumerate(zip(inputs, datum.target_dims)):
        if f.dim != k:
            raise StructuralError(f"input {j} has {f.dim} axes, target dimension is {k}")
    times = geometric_times() if times is None else np.asarray(times, dtype=float)
    points = points or (256 if datum.n <= 2 else 64)
    t_max = float(np.max(times))
    for j, f in enumerate(inputs):
        need = f.support_radius() + _TAIL_FACTOR * np.sqrt(t_max)
        if f.half_width < need:
            raise DomainError(f"input {j}: half_width {f.half_width:.3g} is below {need:.3g} needed at t={t_max:.3g}")
    R = max(f.half_width for f in inputs)
    coarse_inputs = [f.coarsened() for f in inputs]
    initial = [f.mass() for f in inputs]
    limit = float(np.prod([m**p for m, p in zip(initial, datum.exponents)]))
    vals, errs, drift = [], [], 0.0
    for t in times:
        q, masses = _heat_functional(datum, inputs, t, points, R)
        q2, _ = _heat_functional(datum, coarse_inputs, t, points // 2, R)
        vals.append(q)
        errs.append(abs(q - q2) / 3)
        drift = max(drift, max(abs(a - b) for a, b in zip(masses, initial)))
    meta = {"points": points, "half_width": R, "max_mass_drift": drift, "initial_masses": initial}
    return MonotonicityTrace(times, np.array(vals), np.array(errs), "geometric-heat", limit, meta)


# ---------------------------------------------------------------------------
# sliding gaussians


def _trapezoid_grid(dim: int, half_width: float, points: int, centre: np.ndarray) -> tuple[np.ndarray, float]:
    h = 2 * half_width / (points - 1)
    ax = -half_width + h * np.arange(points)
    grids = np.meshgrid(*([ax] * dim), indexing="ij")
    X = np.stack(grids, axis=-1).reshape(-1, dim) + centre
    w = np.ones([points] * dim)
    for a in range(dim):
        sl = [slice(None)] * dim
        sl[a] = 0
        w[tuple(sl)] *= 0.5
        sl[a] = -1
        w[tuple(sl)] *= 0.5
    return X, w.ravel() * h**dim


def sliding_gaussian_trace(
    datum: BLDatum,
    A: GaussianInput | Sequence[np.ndarray],
    masses: Sequence[PointMassList],
    s_values: Sequence[float],
    points: int | None = None,
) -> MonotonicityTrace:
    """``int prod_j (sum_v w_v exp(-pi <A_j(B_j y - v s), B_j y - v s>))^{p_j} dy`` over ``s``."""
    A = A if isinstance(A, GaussianInput) else GaussianInput(tuple(A))
    rep = validate_datum(datum)
    if not rep.all_surjective:
        raise PreconditionError("every map must be surjective")
    if datum.n > 2:
        raise UnsupportedError("sliding gaussian quadrature is supported for domains of dimension at most 2")
    if len(masses) != datum.m:
        raise StructuralError(f"{datum.m} maps but {len(masses)} point-mass lists")
    M = gram_matrix(datum, A)
    for j, (B, a) in enumerate(zip(datum.matrices, A)):
        gap = np.linalg.eigvalsh(B.T @ a @ B - M)[-1]
        if gap > 1e-10:
            raise PreconditionError(f"map {j}: B_j^T A_j B_j exceeds the weighted sum by {gap:.3e}")
        if masses[j].dim != B.shape[0]:
            raise StructuralError(f"point masses for map {j} live in R^{masses[j].dim}, target is R^{B.shape[0]}")
    s_values = np.asarray(s_values, dtype=float)
    points = points or (4001 if datum.n == 1 else 401)
    lam = float(np.linalg.eigvalsh(M)[0])
    tail = np.sqrt(36 * np.log(10) / (np.pi * lam))
    pinv = [np.linalg.pinv(B) for B in datum.matrices]
    reach = max(
        float(np.linalg.norm(P @ mu.points.T, axis=0).max()) for P, mu in zip(pinv, masses)
    ) * float(np.abs(s_values).max())
    half = tail + reach

    def q(s: float, npts: int) -> float:
        X, w = _trapezoid_grid(datum.n, half, npts, np.zeros(datum.n))
        log_f = np.zeros(X.shape[0])
        for B, a, p, mu in zip(datum.matrices, A, datum.exponents, masses):
            Y = X @ B.T
            acc = np.zeros(X.shape[0])
            for v, wt in zip(mu.points, mu.weights):
                D = Y - s * v
                acc += wt * np.exp(-np.pi * np.einsum("ni,ij,nj->n", D, a, D))
            with np.errstate(divide="ignore"):
                log_f += p * np.log(acc)
        return float(np.dot(w, np.exp(log_f)))

    vals = np.array([q(s, points) for s in s_values])
    coarse = np.array([q(s, (points + 1) // 2) for s in s_values])
    errs = np.abs(vals - coarse) / 3 + 64 * _EPS * np.abs(vals)
    meta = {"points": points, "half_width": half}
    return MonotonicityTrace(s_values, vals, errs, "sliding-gaussian", None, meta)


# ---------------------------------------------------------------------------
# log-concave sliding kernels and the heat extension


def _quad_line(f: Callable[[float], float], breaks: Sequence[float], scale: float) -> tuple[float, float]:
    """Integral over the real line split at ``breaks``."""
    b = np.unique(np.asarray(breaks, dtype=float))
    pieces = [(-np.inf, b[0])] + list(zip(b[:-1], b[1:])) + [(b[-1], np.inf)]
    total, err = 0.0, 0.0
    for lo, hi in pieces:
        if hi <= lo:
            continue
        val, e = integrate.quad(f, lo, hi, epsabs=1e-15 * scale, epsrel=1e-13, limit=400)
        total += val
        err += e
    return total, err


def log_concave_trace(
    kernel: KernelSpec,
    mass: PointMassList,
    p: float,
    times: Sequence[float] | None = None,
    points: int = 801,
) -> MonotonicityTrace:
    """``Q(t) = int (sum_v w_v psi(x - v t))^p dx``, nonincreasing for log-concave ``psi`` and ``p >= 1``."""
    if p < 1:
        raise UnsupportedError("exponents below 1 reverse the monotonicity and are not asserted")
    if mass.dim != kernel.dim:
        raise StructuralError(f"point masses live in R^{mass.dim}, kernel in R^{kernel.dim}")
    if kernel.dim > 2:
        raise UnsupportedError("log-concave traces are supported in dimension 1 and 2")
    times = geometric_times() if times is None else np.asarray(times, dtype=float)
    vals, errs = [], []
    if kernel.dim == 1:
        pts = mass.points[:, 0]
        for t in times:

            def f(x: float, t=t) -> float:
                return float(np.dot(mass.weights, kernel(np.array([[x - v * t] for v in pts])))) ** p

            breaks = np.concatenate([[v * t + k for k in kernel.kinks()] for v in pts])
            val, err = _quad_line(f, breaks, 1.0)
            vals.append(val)
            errs.append(err + 64 * _EPS * abs(val))
        meta: dict[str, Any] = {"method": "adaptive quadrature"}
    else:
        half = _kernel_reach(kernel) + float(np.abs(mass.points).max()) * float(np.max(times))
        for t in times:
            q = _grid_power_integral(kernel, mass, p, t, half, points)
            q2 = _grid_power_integral(kernel, mass, p, t, half, (points + 1) // 2)
            vals.append(q)
            errs.append(abs(q - q2) / 3 + 64 * _EPS * abs(q))
        meta = {"method": "trapezoid", "points": points, "half_width": half}
    return MonotonicityTrace(times, np.array(vals), np.array(errs), "log-concave", None, meta)


def _kernel_reach(kernel: KernelSpec) -> float:
    if kernel.kind is KernelKind.TABULATED:
        return kernel.table.half_width * np.sqrt(kernel.dim)
    if kernel.kind is KernelKind.EXPONENTIAL:
        return 40.0 / kernel.rate
    lam = float(np.linalg.eigvalsh(kernel.matrix)[0])
    return float(np.sqrt(40.0 / (np.pi * lam)))


def _grid_power_integral(kernel: KernelSpec, mass: PointMassList, p: float, t: float, half: float, points: int) -> float:
    X, w = _trapezoid_grid(kernel.dim, half, points, np.zeros(kernel.dim))
    acc = np.zeros(X.shape[0])
    for v, wt in zip(mass.points, mass.weights):
        acc += wt * kernel(X - v * t)
    return float(np.dot(w, acc**p))


def center_of_mass_divergence(
    kernel: KernelSpec, mass: PointMassList, t: float, points: int = 401, half_width: float | None = None
) -> float:
    """Smallest discrete divergence of the weighted mean velocity field.

    The field at ``x`` is the average of the velocities ``v`` weighted by
    ``w_v psi(x - v t)``.  Only points where the total weight is above 1e-200
    are examined.
    """
    half = half_width or (float(np.abs(mass.points).max()) * t + 0.5 * _kernel_reach(kernel))
    d = kernel.dim
    h = 2 * half / (points - 1)
    ax = -half + h * np.arange(points)
    grids = np.meshgrid(*([ax] * d), indexing="ij")
    X = np.stack(grids, axis=-1).reshape(-1, d)
    weights = np.stack([wt * kernel(X - v * t) for v, wt in zip(mass.points, mass.weights)])
    total = weights.sum(axis=0)
    ok = total > 1e-200
    mean = np.zeros((X.shape[0], d))
    mean[ok] = (weights[:, ok].T @ mass.points) / total[ok, None]
    mean = mean.reshape([points] * d + [d])
    ok = ok.reshape([points] * d)
    div = np.zeros([points] * d)
    for a in range(d):
        div += np.gradient(mean[..., a], h, axis=a)
    inner = tuple(slice(1, -1) for _ in range(d))
    mask = ok[inner]
    for a in range(d):
        mask &= np.roll(ok, 1, axis=a)[inner] & np.roll(ok, -1, axis=a)[inner]
    vals = div[inner][mask]
    return float(vals.min()) if vals.size else 0.0


def heat_extension_norm_trace(
    mass: PointMassList, p: float, times: Sequence[float] | None = None
) -> MonotonicityTrace:
    """``t^{1/(2p')} ||u(t)||_p`` for the heat extension ``u`` of point masses on the line."""
    if p < 1:
        raise DomainError("p must be at least 1")
    if mass.dim != 1:
        raise UnsupportedError("the heat-extension trace is one-dimensional")
    times = geometric_times() if times is None else np.asarray(times, dtype=float)
    if np.any(times <= 0):
        raise DomainError("times must be positive")
    pts, wts = mass.points[:, 0], mass.weights
    inv_conj = 1.0 - 1.0 / p
    vals, errs = [], []
    for t in times:
        c = (4 * np.pi * t) ** -0.5

        def f(x: float, t=t, c=c) -> float:
            return float(c * np.dot(wts, np.exp(-((x - pts) ** 2) / (4 * t)))) ** p

        width = np.sqrt(2 * t)
        breaks = np.concatenate([pts + k * width for k in (-8, -4, -1, 0, 1, 4, 8)])
        integral, err = _quad_line(f, breaks, f(float(pts[0])))
        norm = integral ** (1 / p)
        factor = t ** (inv_conj / 2)
        val = factor * norm
        vals.append(val)
        # first-order propagation of the quadrature error through the p-th root
        errs.append(factor * norm * err / (p * integral) + 64 * _EPS * val)
    meta = {"distinct_points": mass.distinct_points(), "p": p}
    trace = MonotonicityTrace(times, np.array(vals), np.array(errs), "heat-extension", None, meta)
    trace.meta["strictly_increasing"] = mass.distinct_points() >= 2 and strictly_monotone(trace, Direction.NON_DECREASING)
    return trace
