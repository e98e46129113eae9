import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from birdr.data import (
    Dataset,
    FunctionId,
    SyntheticSpec,
    fit_whitener,
    gen_synthetic,
    load_csv,
    synthetic_response,
    unwhiten_direction,
    whiten,
)
from birdr.errors import (
    ColumnNotFound,
    DegenerateData,
    InvalidSpec,
    NonNumericColumn,
    ShapeMismatch,
    TooFewRows,
)


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestDataset:
    def test_row_mismatch_rejected(self):
        with pytest.raises(ShapeMismatch):
            Dataset(X=np.zeros((3, 2)), y=np.zeros(4))

    def test_nonfinite_rejected(self):
        X = np.zeros((3, 2))
        X[1, 1] = np.nan
        with pytest.raises(ShapeMismatch):
            Dataset(X=X, y=np.zeros(3))
        with pytest.raises(ShapeMismatch):
            Dataset(X=np.zeros((3, 2)), y=np.array([0.0, np.inf, 0.0]))

    def test_too_small_rejected(self):
        with pytest.raises(TooFewRows):
            Dataset(X=np.zeros((1, 2)), y=np.zeros(1))


class TestLoadCsv:
    def test_minimal_two_rows(self, tmp_path):
        path = write(tmp_path, "a,b\n1,2\n3,4\n")
        ds = load_csv(path, response_column=1)
        assert ds.n == 2 and ds.p == 1
        assert np.allclose(ds.y, [2, 4])
        assert ds.column_names == ["a"]

    def test_response_by_name(self, tmp_path):
        path = write(tmp_path, "a,b,c\n1,2,3\n4,5,6\n7,8,9\n")
        ds = load_csv(path, response_column="b")
        assert np.allclose(ds.y, [2, 5, 8])
        assert ds.column_names == ["a", "c"]

    def test_text_column_named_in_error(self, tmp_path):
        path = write(tmp_path, "a,make,y\n1,audi,2\n3,bmw,4\n")
        with pytest.raises(NonNumericColumn, match="make"):
            load_csv(path, response_column="y")

    def test_missing_rows_dropped(self, tmp_path):
        path = write(tmp_path, "a,y\n1,2\n,3\n4,5\nNA,6\n")
        ds = load_csv(path, response_column="y", drop_rows_with_missing=True)
        assert ds.n == 2
        assert np.allclose(ds.X.ravel(), [1, 4])

    def test_unknown_column(self, tmp_path):
        path = write(tmp_path, "a,b\n1,2\n3,4\n")
        with pytest.raises(ColumnNotFound):
            load_csv(path, response_column="nope")

    def test_too_few_rows(self, tmp_path):
        path = write(tmp_path, "a,b\n1,2\n")
        with pytest.raises(TooFewRows):
            load_csv(path, response_column="b")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_csv(tmp_path / "absent.csv", response_column=0)


def naive_covariance(X):
    # independent O(n p^2) accumulation, used as an oracle
    n, p = X.shape
    mean = [sum(X[i, j] for i in range(n)) / n for j in range(p)]
    C = np.zeros((p, p))
    for i in range(n):
        for a in range(p):
            for b in range(p):
                C[a, b] += (X[i, a] - mean[a]) * (X[i, b] - mean[b])
    return np.array(mean), C / (n - 1)


class TestWhitener:
    def test_already_white_data_gives_identity(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((40, 3))
        Z = whiten(fit_whitener(X), X)  # exact sample moments (0, I)
        w2 = fit_whitener(Z)
        assert np.allclose(w2.mean, 0, atol=1e-10)
        assert np.allclose(w2.transform, np.eye(3), atol=1e-8)

    def test_two_point_hand_computation(self):
        w = fit_whitener(np.array([[0.0], [2.0]]))
        assert w.mean[0] == pytest.approx(1.0)
        assert w.transform[0, 0] == pytest.approx(1.0 / np.sqrt(2.0))
        assert w.inverse_transform[0, 0] == pytest.approx(np.sqrt(2.0))

    def test_against_naive_covariance_oracle(self):
        rng = np.random.default_rng(42)
        sd = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        X = rng.standard_normal((200, 5)) * sd
        w = fit_whitener(X)

        mean_o, cov_o = naive_covariance(X)
        evals, evecs = np.linalg.eigh(cov_o)
        transform_o = (evecs / np.sqrt(evals)) @ evecs.T
        assert np.allclose(w.mean, mean_o, atol=1e-10)
        assert np.allclose(w.transform, transform_o, atol=1e-8)
        # within sampling error of the generating diagonal
        assert np.allclose(np.diag(w.transform), 1.0 / sd, rtol=0.2)

    def test_transform_inverse_identity(self):
        rng = np.random.default_rng(3)
        w = fit_whitener(rng.standard_normal((30, 4)))
        assert np.allclose(w.transform @ w.inverse_transform, np.eye(4), atol=1e-8)
        assert np.allclose(w.transform, w.transform.T)
        assert np.allclose(w.inverse_transform, w.inverse_transform.T)

    def test_whitened_moments(self):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((100, 6)) @ rng.standard_normal((6, 6))
        w = fit_whitener(X)
        assert w.n_clamped == 0
        Z = whiten(w, X)
        assert np.max(np.abs(Z.mean(axis=0))) < 1e-10
        assert np.max(np.abs(np.cov(Z, rowvar=False, ddof=1) - np.eye(6))) < 1e-8

    def test_degenerate_data(self):
        with pytest.raises(DegenerateData):
            fit_whitener(np.ones((5, 2)))


class TestUnwhitenDirection:
    def test_identity_whitener(self):
        X = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]) * np.sqrt(4 / 3)
        w = fit_whitener(X)
        Z = whiten(w, X)
        w_id = fit_whitener(Z)
        b = unwhiten_direction(w_id, np.array([1.0, 0.0]))
        assert np.allclose(np.abs(b), [1.0, 0.0], atol=1e-8)

    def test_diagonal_scaling(self):
        # data with sd (1, 2): transform approx diag(1, 1/2)
        rng = np.random.default_rng(5)
        X = rng.standard_normal((500, 2)) * np.array([1.0, 2.0])
        w = fit_whitener(X)
        b = unwhiten_direction(w, np.array([0.0, 1.0]))
        assert abs(b[1]) > 0.99  # normalization wipes out the 1/2 scale

    def test_projection_proportionality(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((60, 4)) @ rng.standard_normal((4, 4))
        w = fit_whitener(X)
        eta = rng.standard_normal(4)
        b = unwhiten_direction(w, eta)
        pts = rng.standard_normal((100, 4))
        lhs = (pts - w.mean) @ b
        rhs = whiten(w, pts) @ eta
        ratio = lhs[np.abs(rhs) > 1e-12] / rhs[np.abs(rhs) > 1e-12]
        assert np.allclose(ratio, ratio[0], rtol=1e-8)
        assert ratio[0] > 0

    def test_roundtrip_correlation(self):
        rng = np.random.default_rng(21)
        X = rng.standard_normal((80, 5)) @ rng.standard_normal((5, 5))
        w = fit_whitener(X)
        Z = whiten(w, X)
        eta = rng.standard_normal(5)
        eta /= np.linalg.norm(eta)
        b = unwhiten_direction(w, eta)
        corr = np.corrcoef(X @ b, Z @ eta)[0, 1]
        assert abs(corr) == pytest.approx(1.0, abs=1e-10)


class TestGenSynthetic:
    def test_fun1_formula(self):
        spec = SyntheticSpec(FunctionId.FUN1, 10, noise_sd=0.0)
        x = np.zeros(10)
        x[:3] = 1.0
        assert synthetic_response(spec, x)[0] == pytest.approx(2.0)

    def test_quad_formula(self):
        spec = SyntheticSpec(FunctionId.QUAD, 20, noise_sd=0.0)
        x = np.zeros(20)
        x[0] = 3.0
        assert synthetic_response(spec, x)[0] == pytest.approx(9.0)

    def test_fun2_shape_five_n_per_dim(self):
        spec = SyntheticSpec(FunctionId.FUN2, 10)
        ds, B = gen_synthetic(spec, 5 * 10, seed=0)
        assert ds.X.shape == (50, 10)
        assert B.shape == (10, 2)

    def test_generated_points_satisfy_formula(self):
        spec = SyntheticSpec(FunctionId.FUN1, 8, noise_sd=0.0)
        ds, _ = gen_synthetic(spec, 30, seed=7)
        assert np.allclose(ds.y, synthetic_response(spec, ds.X))

    def test_seed_reproducibility(self):
        spec = SyntheticSpec(FunctionId.FUN3_BANANA, 10, banana_b=5.0)
        a, _ = gen_synthetic(spec, 40, seed=123)
        b, _ = gen_synthetic(spec, 40, seed=123)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
        c, _ = gen_synthetic(spec, 40, seed=124)
        assert not np.array_equal(a.X, c.X)

    def test_fun1_response_mean_converges(self):
        spec = SyntheticSpec(FunctionId.FUN1, 5, noise_sd=0.0)
        ds, _ = gen_synthetic(spec, 20000, seed=0)
        assert abs(ds.y.mean()) < 0.05

    def test_banana_default_transform_keeps_u2(self):
        spec = SyntheticSpec(FunctionId.FUN3_BANANA, 2, banana_b=3.0, noise_sd=0.0)
        ds, _ = gen_synthetic(spec, 200, seed=1)
        u2 = ds.X[:, 1] + 3.0 * ds.X[:, 0] ** 2
        y = ds.X[:, 0] / (0.5 + (u2 + 1.5) ** 2)
        assert np.allclose(ds.y, y)

    def test_banana_literal_transform(self):
        spec = SyntheticSpec(
            FunctionId.FUN4_BANANA, 3, banana_b=2.0, banana_literal=True, noise_sd=0.0
        )
        ds, _ = gen_synthetic(spec, 100, seed=2)
        assert np.allclose(ds.X[:, 1], ds.X[:, 0] - 2.0 * ds.X[:, 0] ** 2)

    @pytest.mark.parametrize("fid", list(FunctionId))
    def test_true_directions_orthonormal(self, fid):
        dim = {"fun1": 5, "fun2": 5}.get(fid.value, 4)
        spec = SyntheticSpec(fid, dim)
        B = spec.true_directions()
        assert np.allclose(B.T @ B, np.eye(B.shape[1]), atol=1e-12)

    def test_dimension_minimums(self):
        with pytest.raises(InvalidSpec):
            SyntheticSpec(FunctionId.FUN1, 4)
        with pytest.raises(InvalidSpec):
            SyntheticSpec(FunctionId.FUN3_BANANA, 1)
        SyntheticSpec(FunctionId.QUAD, 1)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10**6), st.integers(min_value=5, max_value=30))
def test_whitening_property(seed, n):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 3)) @ (np.eye(3) + 0.2 * rng.standard_normal((3, 3)))
    w = fit_whitener(X)
    if w.n_clamped:
        return
    Z = whiten(w, X)
    assert np.max(np.abs(Z.mean(axis=0))) < 1e-10
    assert np.max(np.abs(np.cov(Z, rowvar=False, ddof=1) - np.eye(3))) < 1e-8
