"""Standard data used in tests, examples and the CLI sample files."""

from __future__ import annotations

from itertools import combinations
from typing import Sequence

import numpy as np

from .core import BLDatum, random_orthogonal


def holder(n: int = 2, exponents: Sequence[float] = (0.5, 0.5)) -> BLDatum:
    """Identity maps on ``R^n``."""
    return BLDatum(n, tuple(np.eye(n) for _ in exponents), tuple(exponents))


def loomis_whitney(n: int = 3) -> BLDatum:
    """Coordinate projections dropping one axis each, exponent ``1/(n-1)``."""
    mats = []
    for j in range(n):
        keep = [i for i in range(n) if i != j]
        mats.append(np.eye(n)[keep])
    return BLDatum(n, tuple(mats), (1.0 / (n - 1),) * n, tuple(f"drop x{j + 1}" for j in range(n)))


def young(exponents: Sequence[float] = (2 / 3, 2 / 3, 2 / 3)) -> BLDatum:
    """Maps ``(x, y) -> x, y, x - y`` on ``R^2`` (convolution inequality on the line)."""
    mats = (np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]), np.array([[1.0, -1.0]]))
    return BLDatum(2, mats, tuple(exponents), ("x", "y", "x-y"))


def young_closed_form(exponents: Sequence[float], d: int = 1) -> float:
    """Gaussian constant of the Young datum: ``prod (1-p)^{(1-p)} / p^p`` to the power d/2."""
    val = 1.0
    for p in exponents:
        val *= (1 - p) ** (1 - p) / p**p
    return float(val ** (d / 2))


def frame_120() -> BLDatum:
    """Three unit vectors at 0, 120 and 240 degrees with exponents 2/3."""
    angles = np.deg2rad([0.0, 120.0, 240.0])
    mats = tuple(np.array([[np.cos(a), np.sin(a)]]) for a in angles)
    return BLDatum(2, mats, (2 / 3,) * 3)


def _provably_simple_shape(n: int, target_dims: Sequence[int]) -> bool:
    m = len(target_dims)
    if n == 1:
        return all(k == 1 for k in target_dims)
    if all(k == 1 for k in target_dims):
        return m >= n + 1
    if n == 3 and all(k == 2 for k in target_dims):
        return m >= 4
    if n == 4 and all(k == 2 for k in target_dims):
        return m >= 5
    return False


def random_simple_datum(n: int, target_dims: Sequence[int], rng: np.random.Generator) -> BLDatum:
    """Gaussian random maps with equal exponents ``n / sum(n_j)``.

    Only shapes whose generic members are simple are accepted: rank-one
    maps with ``m >= n + 1``, scalar data on the line, planes in ``R^3``
    with ``m >= 4`` and planes in ``R^4`` with ``m >= 5``.  Other shapes can
    fail badly (three generic maps onto ``R^3`` from ``R^4`` have kernels
    that violate the dimension condition), so they raise ``ValueError``.

    Draws whose row spaces nearly collide are redrawn: such data sit close
    to the critical boundary and make the solver crawl.
    """
    if not _provably_simple_shape(n, target_dims):
        raise ValueError(f"no simplicity guarantee for n={n}, target_dims={list(target_dims)}")
    total = sum(target_dims)
    p = n / total
    for _ in range(_MAX_DRAWS):
        mats = tuple(rng.standard_normal((k, n)) for k in target_dims)
        if _row_spaces_separated(mats, n):
            break
    return BLDatum(n, mats, (p,) * len(target_dims))


_MAX_DRAWS = 200
_SEPARATION = 0.2


def _row_spaces_separated(mats: Sequence[np.ndarray], n: int) -> bool:
    bases = [np.linalg.qr(B.T)[0].T for B in mats]
    for r in range(2, len(bases) + 1):
        for S in combinations(range(len(bases)), r):
            if sum(bases[j].shape[0] for j in S) > n:
                continue
            if np.linalg.svd(np.vstack([bases[j] for j in S]), compute_uv=False)[-1] < _SEPARATION:
                return False
    return True


def random_geometric_datum(n: int, target_dims: Sequence[int], rng: np.random.Generator) -> BLDatum:
    """Random simple datum pushed to geometric form through its extremiser."""
    from .gaussian import fixed_point_solve, normalize_to_geometric

    d = random_simple_datum(n, target_dims, rng)
    out = fixed_point_solve(d)
    if not out.converged:
        raise RuntimeError("solver did not converge on a generic datum")
    return normalize_to_geometric(d, out.extremiser)[0]


def count_bases(vectors: np.ndarray) -> int:
    m, n = vectors.shape
    return sum(1 for I in combinations(range(m), n) if abs(np.linalg.det(vectors[list(I)])) > 1e-9)


def random_rotation(n: int, rng: np.random.Generator) -> np.ndarray:
    return random_orthogonal(n, rng)
