import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from manifold_rl import pca
from manifold_rl.pca import PCAError, PrincipalBasis

from .oracles import charpoly_eigenvalues_3x3, hand_project, nullvector_3x3


@pytest.fixture
def line_data():
    # points on y = x with per-axis sample variance sigma2
    t = np.array([-3.0, -1.0, 0.5, 1.5, 2.0])
    return np.column_stack([t, t]), t.var(ddof=1)


def random_samples(seed, n=500, p=9):
    rng = np.random.default_rng(seed)
    mix = rng.normal(size=(p, p))
    return rng.normal(size=(n, p)) @ mix + rng.normal(size=p) * 5


# fit_pca ------------------------------------------------------------------

def test_identical_rows_give_zero_spectrum():
    row = np.array([1.0, 4.0, -2.0, 7.5])
    basis = pca.fit_pca(np.tile(row, (100, 1)))
    np.testing.assert_allclose(basis.eigenvalues, 0.0, atol=1e-10)
    np.testing.assert_array_equal(basis.mean, row)
    np.testing.assert_array_equal(basis.scale, np.ones(4))


def test_line_data_matches_analytic_2x2(line_data):
    x, sigma2 = line_data
    basis = pca.fit_pca(x, standardize=False)
    # covariance [[s, s], [s, s]] has eigenpairs 2s -> (1, 1)/sqrt2 and 0 -> (1, -1)/sqrt2
    np.testing.assert_allclose(basis.eigenvalues, [2 * sigma2, 0.0], atol=1e-12)
    np.testing.assert_allclose(np.abs(basis.w[:, 0]), [2 ** -0.5, 2 ** -0.5], atol=1e-12)


def test_uncorrelated_axes_give_signed_permutation():
    a, b, c = 1.0, 3.0, 2.0
    rows = []
    for i, s in enumerate((a, b, c)):
        for sign in (1, -1):
            r = [0.0, 0.0, 0.0]
            r[i] = sign * s
            rows.append(r)
    basis = pca.fit_pca(np.array(rows), standardize=False)
    np.testing.assert_allclose(np.abs(basis.w), np.eye(3)[:, [1, 2, 0]], atol=1e-12)
    assert list(basis.eigenvalues) == sorted(basis.eigenvalues, reverse=True)


def test_fit_errors():
    with pytest.raises(PCAError):
        pca.fit_pca(np.ones((1, 3)))
    with pytest.raises(PCAError):
        pca.fit_pca(np.array([[1.0, np.nan], [2.0, 3.0]]))
    with pytest.raises(PCAError):
        pca.fit_pca(np.ones(5))


def test_jacobi_sweep_limit_raises():
    a = np.array([[2.0, 1.0], [1.0, 3.0]])
    with pytest.raises(pca.ConvergenceError):
        pca.jacobi_eigh(a, max_sweeps=0)


def test_standardize_zero_variance_feature_scale_is_one():
    rng = np.random.default_rng(0)
    x = np.column_stack([rng.normal(size=50), np.full(50, 3.0)])
    basis = pca.fit_pca(x)
    assert basis.scale[1] == 1.0
    z = pca.project_batch(pca.truncate(basis, 2), x)
    assert np.all(np.isfinite(z))


# truncate / project --------------------------------------------------------

def test_truncate_shapes_and_columns():
    basis = pca.fit_pca(random_samples(1))
    full = pca.truncate(basis, 9)
    np.testing.assert_array_equal(full.wk, basis.w)
    one = pca.truncate(basis, 1)
    np.testing.assert_array_equal(one.wk[:, 0], basis.w[:, 0])
    assert pca.truncate(basis, 4).wk.shape == (9, 4)
    for bad in (0, 10, 2.5):
        with pytest.raises(PCAError):
            pca.truncate(basis, bad)


def test_project_full_round_trip():
    x = random_samples(2)
    tb = pca.truncate(pca.fit_pca(x), 9)
    for row in x[:20]:
        np.testing.assert_allclose(pca.reconstruct(tb, pca.project(tb, row)), row, atol=1e-8)


def test_project_mean_is_origin():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(200, 3))
    tb = pca.truncate(pca.fit_pca(x), 3)
    np.testing.assert_allclose(pca.project(tb, tb.parent.mean), 0.0, atol=1e-15)


def test_project_matches_hand_multiplication():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(40, 3)) * [1.0, 2.0, 0.5]
    basis = pca.fit_pca(x)
    tb = pca.truncate(basis, 2)
    v = np.array([0.3, -1.2, 2.0])
    expected = hand_project(tb.wk.tolist(), basis.mean.tolist(), basis.scale.tolist(), v.tolist())
    np.testing.assert_allclose(pca.project(tb, v), expected, rtol=1e-13, atol=1e-14)


def test_project_dimension_mismatch():
    tb = pca.truncate(pca.fit_pca(random_samples(5)), 3)
    with pytest.raises(PCAError):
        pca.project(tb, np.zeros(8))
    with pytest.raises(PCAError):
        pca.project_batch(tb, np.zeros((4, 8)))
    with pytest.raises(PCAError):
        pca.reconstruct(tb, np.zeros(4))


def test_project_batch_single_row_and_loop():
    x = random_samples(6, n=50)
    tb = pca.truncate(pca.fit_pca(x), 5)
    np.testing.assert_array_equal(pca.project_batch(tb, x[:1]), pca.project(tb, x[0])[None, :])
    looped = np.array([pca.project(tb, row) for row in x])
    np.testing.assert_allclose(pca.project_batch(tb, x), looped, rtol=0, atol=1e-12)


def test_project_batch_full_rank_is_isometry():
    x = random_samples(7, n=60)
    basis = pca.fit_pca(x, standardize=False)
    t = pca.project_batch(pca.truncate(basis, 9), x)
    np.testing.assert_allclose(np.linalg.norm(t, axis=1), np.linalg.norm(x - basis.mean, axis=1),
                               atol=1e-8)


def test_reconstruct_origin_is_mean_and_line_rank_one(line_data):
    x, _ = line_data
    tb = pca.truncate(pca.fit_pca(x, standardize=False), 1)
    np.testing.assert_allclose(pca.reconstruct(tb, np.zeros(1)), tb.parent.mean)
    recon = np.array([pca.reconstruct(tb, pca.project(tb, row)) for row in x])
    assert np.sqrt(np.mean((recon - x) ** 2)) <= 1e-8


# explained variance --------------------------------------------------------

def test_explained_variance_ratio(line_data):
    x, _ = line_data
    basis = pca.fit_pca(x, standardize=False)
    assert pca.explained_variance_ratio(basis, 2) == 1.0
    assert pca.explained_variance_ratio(basis, 1) == pytest.approx(1.0, abs=1e-12)
    constructed = PrincipalBasis(mean=np.zeros(3), scale=np.ones(3), w=np.eye(3),
                                 eigenvalues=np.array([3.0, 1.0, 0.0]))
    assert pca.explained_variance_ratio(constructed, 1) == 0.75


def test_explained_variance_degenerate_spectrum():
    basis = pca.fit_pca(np.ones((10, 3)))
    with pytest.raises(PCAError):
        pca.explained_variance_ratio(basis, 1)


# invariants ----------------------------------------------------------------

sample_sets = st.integers(min_value=0, max_value=2**32 - 1).map(
    lambda s: random_samples(s, n=int(np.random.default_rng(s).integers(2, 80)),
                             p=int(np.random.default_rng(s + 1).integers(1, 10))))


@settings(max_examples=60, deadline=None)
@given(x=sample_sets, standardize=st.booleans())
def test_basis_invariants(x, standardize):
    basis = pca.fit_pca(x, standardize=standardize)
    p = basis.p
    assert np.max(np.abs(basis.w.T @ basis.w - np.eye(p))) <= 1e-8
    assert np.all(np.diff(basis.eigenvalues) <= 0.0)
    assert np.all(basis.eigenvalues >= -1e-10)
    trace = np.trace(pca.covariance(basis, x))
    assert abs(basis.eigenvalues.sum() - trace) <= 1e-6 * max(abs(trace), 1e-300)
    # sign canonicalization: largest-magnitude entry of each column is non-negative
    idx = np.argmax(np.abs(basis.w), axis=0)
    assert np.all(basis.w[idx, np.arange(p)] >= 0.0)


@settings(max_examples=30, deadline=None)
@given(x=sample_sets)
def test_reconstruction_error_monotone_in_k(x):
    basis = pca.fit_pca(x)
    errs = [pca.reconstruction_mse(pca.truncate(basis, k), x) for k in range(1, basis.p + 1)]
    assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))
    assert errs[-1] <= 1e-8


@settings(max_examples=50, deadline=None)
@given(a=arrays(np.float64, (4, 4), elements=st.floats(-50, 50)))
def test_jacobi_reconstructs_matrix(a):
    sym = a + a.T
    vals, vecs = pca.jacobi_eigh(sym)
    np.testing.assert_allclose(vecs @ np.diag(vals) @ vecs.T, sym, atol=1e-9 * (1 + np.abs(sym).max()))


def test_fit_is_bitwise_reproducible():
    x = random_samples(11)
    a, b = pca.fit_pca(x), pca.fit_pca(x.copy())
    assert a.w.tobytes() == b.w.tobytes()
    assert a.eigenvalues.tobytes() == b.eigenvalues.tobytes()


def test_equal_eigenvalues_keep_solver_order():
    vals, vecs = pca.sorted_eigh(np.diag([2.0, 5.0, 2.0]))
    np.testing.assert_array_equal(vals, [5.0, 2.0, 2.0])
    np.testing.assert_array_equal(vecs, np.eye(3)[:, [1, 0, 2]])


def test_jacobi_matches_charpoly_oracle_3x3():
    rng = np.random.default_rng(20)
    for _ in range(100):
        m = rng.normal(size=(3, 3))
        a = m + m.T
        vals, vecs = pca.sorted_eigh(a)
        ref = charpoly_eigenvalues_3x3(a)[::-1]
        np.testing.assert_allclose(vals, ref, atol=1e-6)
        for j in range(3):
            v = nullvector_3x3(a, ref[j])
            assert min(np.max(np.abs(vecs[:, j] - v)), np.max(np.abs(vecs[:, j] + v))) <= 1e-6


# serialization -------------------------------------------------------------

def test_basis_json_round_trip(tmp_path):
    basis = pca.fit_pca(random_samples(12))
    path = tmp_path / "basis.json"
    pca.save_basis(path, basis, k=4)
    doc = json.loads(path.read_text())
    assert doc["p"] == 9 and doc["k"] == 4 and len(doc["w"]) == 81
    back = pca.load_basis(path)
    np.testing.assert_array_equal(back.w, basis.w)
    np.testing.assert_array_equal(back.mean, basis.mean)
    np.testing.assert_array_equal(back.eigenvalues, basis.eigenvalues)


def test_loadings_csv(tmp_path):
    basis = pca.fit_pca(random_samples(13, p=3))
    path = tmp_path / "loadings.csv"
    pca.write_loadings_csv(path, basis, ["a", "b", "c"])
    lines = path.read_text().splitlines()
    assert lines[0] == "component,a,b,c"
    assert len(lines) == 4
    row = [float(v) for v in lines[1].split(",")[1:]]
    np.testing.assert_allclose(row, np.abs(basis.w[:, 0]), rtol=1e-14)
