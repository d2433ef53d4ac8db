import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from brascamp_lieb.catalog import holder, loomis_whitney, young
from brascamp_lieb.core import (
    BLDatum,
    EquivalenceTransform,
    Subspace,
    Tolerances,
    apply_equivalence,
    common_kernel,
    datum_from_json,
    direct_sum_datum,
    image,
    image_dim,
    intersection,
    kernel,
    load_datum,
    numerical_rank,
    orthocomplement,
    parse_json_text,
    quotient_datum,
    random_orthogonal,
    random_subspace,
    restrict_datum,
    row_space,
    subspace_algebra,
    subspace_sum,
    validate_datum,
)
from brascamp_lieb.errors import (
    DatumParseError,
    DomainError,
    InvertibilityError,
    StructuralError,
)

from conftest import data_path


# ---------------------------------------------------------------- tolerances and rank


def test_tolerances_reject_nonpositive():
    with pytest.raises(DomainError):
        Tolerances(rank_tol=0.0)
    with pytest.raises(DomainError):
        Tolerances(stat_tol=float("nan"))


def test_numerical_rank_respects_tolerance():
    A = np.diag([1.0, 1e-6, 1e-12])
    assert numerical_rank(A, 1e-9) == 2
    assert numerical_rank(A, 1e-3) == 1
    assert numerical_rank(np.zeros((2, 3))) == 0


# ---------------------------------------------------------------- subspaces


def test_subspace_requires_orthonormal_columns():
    with pytest.raises(DomainError):
        Subspace(np.array([[2.0], [0.0]]))
    with pytest.raises(StructuralError):
        Subspace(np.zeros(3))


def test_span_drops_dependent_vectors():
    V = Subspace.span(np.array([[1.0, 2.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]]))
    assert V.dim == 2
    assert V == Subspace.coordinate(3, [0, 1])


def test_equality_is_projector_based():
    a = Subspace.span(np.array([[1.0], [1.0]]))
    b = Subspace.span(np.array([[-3.0], [-3.0]]))
    assert a == b
    assert a != Subspace.coordinate(2, [0])


def test_kernel_and_row_space_of_projection():
    B = np.eye(3)[[0, 1]]
    assert kernel(B) == Subspace.coordinate(3, [2])
    assert row_space(B) == Subspace.coordinate(3, [0, 1])


def test_image_and_image_dim():
    B = np.array([[1.0, -1.0]])
    V = Subspace.span(np.array([1.0, 1.0]))
    assert image_dim(B, V) == 0
    assert image(B, V).dim == 0
    assert image_dim(B, Subspace.coordinate(2, [0])) == 1


def test_subspace_algebra_dispatch():
    V = Subspace.coordinate(3, [0])
    W = Subspace.coordinate(3, [1])
    assert subspace_algebra("sum", V, W) == Subspace.coordinate(3, [0, 1])
    assert subspace_algebra("intersection", V, W).dim == 0
    assert subspace_algebra("orthocomplement", V) == Subspace.coordinate(3, [1, 2])
    with pytest.raises(DomainError):
        subspace_algebra("join", V, W)


def test_is_coordinate():
    assert Subspace.coordinate(4, [1, 3]).is_coordinate()
    assert not Subspace.span(np.array([1.0, 1.0, 0.0])).is_coordinate()


@st.composite
def subspace_pairs(draw):
    n = draw(st.integers(2, 6))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    # share a random common part so intersections are nontrivial sometimes
    common = draw(st.integers(0, n - 1))
    k1 = draw(st.integers(common, n))
    k2 = draw(st.integers(common, n))
    Q = random_orthogonal(n, rng)
    base = Q[:, :common]
    extra1 = rng.standard_normal((n, k1 - common))
    extra2 = rng.standard_normal((n, k2 - common))
    return Subspace.span(np.hstack([base, extra1])), Subspace.span(np.hstack([base, extra2]))


@given(subspace_pairs())
def test_modular_dimension_identity(pair):
    V, W = pair
    assert subspace_sum(V, W).dim + intersection(V, W).dim == V.dim + W.dim


@given(st.integers(1, 6), st.integers(0, 6), st.integers(0, 10_000))
def test_orthocomplement_is_an_involution(n, k, seed):
    k = min(k, n)
    V = random_subspace(n, k, np.random.default_rng(seed))
    C = orthocomplement(V)
    assert C.dim == n - k
    assert orthocomplement(C) == V
    assert np.abs(V.basis.T @ C.basis).max(initial=0.0) < 1e-12


# ---------------------------------------------------------------- datum


def test_datum_validation_errors():
    with pytest.raises(StructuralError):
        BLDatum(2, (np.eye(3),), (1.0,))
    with pytest.raises(DomainError):
        BLDatum(2, (np.eye(2),), (-1.0,))
    with pytest.raises(StructuralError):
        BLDatum(2, (np.eye(2),), (1.0, 1.0))
    with pytest.raises(DomainError):
        BLDatum(1, (np.array([[np.inf]]),), (1.0,))


def test_datum_is_immutable():
    d = holder()
    with pytest.raises(ValueError):
        d.matrices[0][0, 0] = 5.0


def test_normalized_drops_zero_exponents():
    d = BLDatum(2, (np.eye(2), np.eye(2)[:1]), (1.0, 0.0))
    assert d.has_zero_exponents()
    assert d.normalized().m == 1 and not d.normalized().has_zero_exponents()


def test_validate_reports_non_surjective_and_degenerate():
    d = BLDatum(3, (np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]), np.array([[0.0, 1.0, 0.0]])), (1.0, 1.0))
    rep = validate_datum(d)
    assert rep.surjective == (False, True)
    assert not rep.non_degenerate and rep.common_kernel == Subspace.coordinate(3, [2])
    assert not rep.ok


def test_validate_standard_data():
    for d in (holder(), loomis_whitney(3), young()):
        assert validate_datum(d).ok
        assert common_kernel(d).dim == 0


def test_digest_is_stable_and_content_sensitive():
    a, b = young().digest(), young().digest()
    assert a == b
    assert young((0.9, 0.9, 0.2)).digest()["sha256"] != a["sha256"]


# ---------------------------------------------------------------- JSON parsing


def test_json_roundtrip():
    d = loomis_whitney(3)
    e = datum_from_json(json.loads(json.dumps(d.to_json())))
    assert e.n == d.n and e.exponents == d.exponents
    assert all(np.array_equal(a, b) for a, b in zip(d.matrices, e.matrices))
    assert e.labels == d.labels


def test_load_datum_sample_file():
    d = load_datum(data_path("young.json"))
    assert d.target_dims == (1, 1, 1)


@pytest.mark.parametrize(
    "text, path",
    [
        ('{"dim": 2, "maps": [{"matrix": [[1, 0, 0]], "exponent": 1}]}', "$.maps[0].matrix[0]"),
        ('{"dim": 2, "maps": [{"matrix": [[1, "x"]], "exponent": 1}]}', "$.maps[0].matrix[0][1]"),
        ('{"dim": 2, "maps": [{"matrix": [[1, 0]]}]}', "$.maps[0]"),
        ('{"dim": 2, "maps": [{"matrix": [[1, 0]], "exponent": -1}]}', "$.maps[0].exponent"),
        ('{"dim": 2, "maps": [], "extra": 1}', "$"),
        ('{"dim": -1, "maps": []}', "$.dim"),
    ],
)
def test_parse_errors_name_the_json_path(text, path):
    with pytest.raises(DatumParseError) as exc:
        datum_from_json(parse_json_text(text))
    assert exc.value.path == path
    assert str(exc.value).startswith(path)


def test_parse_rejects_non_finite_literals():
    with pytest.raises(DatumParseError):
        parse_json_text('{"dim": 1, "maps": [{"matrix": [[NaN]], "exponent": 1}]}')
    with pytest.raises(DatumParseError):
        parse_json_text("{not json")


# ---------------------------------------------------------------- constructions


def test_restrict_and_quotient_of_loomis_whitney():
    d = loomis_whitney(3)
    V = Subspace.coordinate(3, [0, 1])
    r = restrict_datum(d, V)
    q = quotient_datum(d, V)
    assert r.n == 2 and r.target_dims == (1, 1, 2)
    assert q.n == 1 and q.target_dims == (1, 1, 0)


def test_direct_sum_blocks_and_neutral_element():
    a, b = young(), young()
    s = direct_sum_datum(a, b)
    assert s.n == 4 and s.target_dims == (2, 2, 2)
    assert np.array_equal(s.matrices[2][:1, :2], a.matrices[2])
    empty = BLDatum(0, (), ())
    assert direct_sum_datum(a, empty) is a
    with pytest.raises(StructuralError):
        direct_sum_datum(young(), young((0.9, 0.9, 0.2)))
    with pytest.raises(StructuralError):
        direct_sum_datum(young(), holder())


def test_equivalence_transform_rejects_singular():
    with pytest.raises(InvertibilityError):
        EquivalenceTransform(np.array([[1.0, 1.0], [1.0, 1.0]]), (np.eye(1),))


def test_equivalence_composition():
    rng = np.random.default_rng(3)
    d = young()
    T1 = EquivalenceTransform(rng.standard_normal((2, 2)), tuple(rng.standard_normal((1, 1)) for _ in range(3)))
    T2 = EquivalenceTransform(rng.standard_normal((2, 2)), tuple(rng.standard_normal((1, 1)) for _ in range(3)))
    once, s12 = apply_equivalence(d, T1.then(T2))
    step, s1 = apply_equivalence(d, T1)
    twice, s2 = apply_equivalence(step, T2)
    for a, b in zip(once.matrices, twice.matrices):
        np.testing.assert_allclose(a, b, atol=1e-12)
    assert s12 == pytest.approx(s1 * s2, rel=1e-12)
