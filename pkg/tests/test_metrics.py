import numpy as np
import pytest

from annforest import chi_square, euclidean, normalize_unit, sq_euclidean
from annforest.exceptions import DataValidationError
from annforest.metrics import pair_distance, reported_distance

N_PAIRS = 10_000


def _pairs(rng, d=32, nonneg=False):
    A = rng.normal(size=(N_PAIRS, d))
    B = rng.normal(size=(N_PAIRS, d))
    if nonneg:
        A, B = np.abs(A), np.abs(B)
    # sprinkle exact zeros so chi2 hits the empty-denominator path
    A[rng.random(A.shape) < 0.1] = 0.0
    B[rng.random(B.shape) < 0.1] = 0.0
    return A.astype(np.float32), B.astype(np.float32)


def test_sq_euclidean_matches_float64_oracle(rng):
    A, B = _pairs(rng)
    for i in range(0, N_PAIRS, 97):
        a64 = A[i].astype(np.float64)
        b64 = B[i].astype(np.float64)
        np.testing.assert_allclose(
            sq_euclidean(A[i], B[i]), np.sum((a64 - b64) ** 2), rtol=1e-12
        )


def test_chi_square_matches_float64_oracle(rng):
    A, B = _pairs(rng, nonneg=True)
    for i in range(0, N_PAIRS, 97):
        a64 = A[i].astype(np.float64)
        b64 = B[i].astype(np.float64)
        den = a64 + b64
        num = (a64 - b64) ** 2
        want = np.sum(np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0))
        np.testing.assert_allclose(chi_square(A[i], B[i]), want, rtol=1e-12)


def test_chi_square_zero_denominator_contributes_zero():
    a = np.array([0.0, 1.0, 0.0], np.float32)
    b = np.array([0.0, 3.0, 0.0], np.float32)
    assert chi_square(a, b) == pytest.approx(4.0 / 4.0)
    assert chi_square(np.zeros(5, np.float32), np.zeros(5, np.float32)) == 0.0


@pytest.mark.parametrize("metric,nonneg", [("euclidean", False), ("chi2", True)])
def test_metric_axioms_on_random_pairs(rng, metric, nonneg):
    A, B = _pairs(rng, nonneg=nonneg)
    for i in range(N_PAIRS):
        d_ab = pair_distance(A[i], B[i], metric)
        # non-negativity
        assert d_ab >= 0.0
        # symmetry, bit for bit (fixed coordinate order)
        assert d_ab == pair_distance(B[i], A[i], metric)
    # identity of indiscernibles: d(x, x) is exactly zero
    for i in range(0, N_PAIRS, 53):
        assert pair_distance(A[i], A[i], metric) == 0.0


def test_identity_discriminates(rng):
    a = rng.normal(size=12).astype(np.float32)
    b = a.copy()
    b[3] += 0.5
    assert sq_euclidean(a, b) > 0.0
    assert chi_square(np.abs(a), np.abs(b)) > 0.0


def test_euclidean_is_sqrt_of_squared():
    a = np.array([0.0, 3.0], np.float32)
    b = np.array([4.0, 0.0], np.float32)
    assert sq_euclidean(a, b) == 25.0
    assert euclidean(a, b) == 5.0


def test_reported_distance_scales():
    assert reported_distance(9.0, "euclidean") == 3.0
    assert reported_distance(9.0, "chi2") == 9.0
    with pytest.raises(DataValidationError):
        reported_distance(1.0, "manhattan")


def test_pair_distance_length_mismatch():
    with pytest.raises(ValueError):
        pair_distance(np.zeros(3, np.float32), np.zeros(4, np.float32))


def test_normalize_unit_rows(rng):
    X = rng.normal(size=(40, 9)).astype(np.float32)
    X[7] = 0.0  # all-zero row must survive untouched
    Xn = normalize_unit(X)
    norms = np.linalg.norm(Xn.astype(np.float64), axis=1)
    assert np.all(np.abs(norms[np.arange(40) != 7] - 1.0) < 1e-6)
    assert np.all(Xn[7] == 0.0)


def test_normalize_unit_single_vector():
    v = normalize_unit(np.array([3.0, 4.0], np.float32))
    np.testing.assert_allclose(v, [0.6, 0.8], rtol=1e-6)
