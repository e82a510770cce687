import numpy as np
import pytest

from cassikit import forward_model as fm
from cassikit.errors import ParameterError, ShapeError, SizeError
from cassikit.forward_model import (SensingOperator, apply_H, apply_Ht,
                                    build_explicit_H, diag_HHt, simulate)
from conftest import random_operator, unvec, vec

SMALL_GRID = [(M, N, L, K, s)
              for M in (4, 6, 8) for N in (4, 6, 8) for L in (2, 3, 4)
              for K in (1, 2, 3) for s in (1, 2)]


class TestApplyH:
    def test_constant_cube_all_ones_mask(self):
        op = SensingOperator(np.ones((1, 6, 6)), bands=3)
        y = apply_H(op, np.ones((6, 6, 3)))
        expected = [1, 2, 3, 3, 3, 3, 2, 1]  # overlapping bands per column
        assert np.array_equal(y, np.tile(expected, (1, 6, 1)))

    def test_zero_cube(self):
        op = random_operator(6, 6, 3)
        assert np.array_equal(apply_H(op, np.zeros((6, 6, 3))),
                              np.zeros(op.meas_shape))

    def test_single_voxel(self):
        op = random_operator(6, 6, 3, K=2, s=1, seed=5)
        for (i0, j0, l0) in [(0, 0, 0), (3, 2, 1), (5, 5, 2)]:
            x = np.zeros((6, 6, 3))
            x[i0, j0, l0] = 1.0
            y = apply_H(op, x)
            for k in range(2):
                expected = np.zeros(op.meas_shape[1:])
                expected[i0, j0 + l0] = op.apertures[k, i0, j0]
                assert np.array_equal(y[k], expected)

    def test_linearity(self, rng):
        op = random_operator(8, 8, 4, K=2)
        x1, x2 = rng.standard_normal((2, 8, 8, 4))
        a, b = 1.7, -0.3
        lhs = apply_H(op, a * x1 + b * x2)
        rhs = a * apply_H(op, x1) + b * apply_H(op, x2)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1, np.max(np.abs(rhs)))

    def test_shape_mismatch(self):
        op = random_operator(6, 6, 3)
        with pytest.raises(ShapeError):
            apply_H(op, np.zeros((6, 6, 4)))


class TestApplyHt:
    def test_adjoint_identity(self, rng):
        op = random_operator(8, 6, 4, K=2, s=2)
        for _ in range(10):
            x = rng.standard_normal(op.cube_shape)
            y = rng.standard_normal(op.meas_shape)
            lhs = np.vdot(apply_H(op, x), y)
            rhs = np.vdot(x, apply_Ht(op, y))
            assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)

    def test_zero_measurement(self):
        op = random_operator(6, 6, 3)
        assert np.array_equal(apply_Ht(op, np.zeros(op.meas_shape)),
                              np.zeros((6, 6, 3)))

    def test_delta_measurement_matches_transpose(self):
        op = random_operator(6, 6, 3, seed=2)
        Ht = build_explicit_H(op).toarray().T
        i0, c0 = 2, 4
        y = np.zeros(op.meas_shape)
        y[0, i0, c0] = 1.0
        expected = unvec(Ht @ vec_y(y, op), 6, 6, 3)
        assert np.array_equal(apply_Ht(op, y), expected)

    def test_shape_mismatch(self):
        op = random_operator(6, 6, 3)
        with pytest.raises(ShapeError):
            apply_Ht(op, np.zeros((1, 6, 6)))


def vec_y(y, op):
    return y.ravel()  # snapshot-major, then row-major: the documented order


class TestDiagHHt:
    def test_all_ones_mask(self):
        op = SensingOperator(np.ones((1, 6, 6)), bands=3)
        expected = [1, 2, 3, 3, 3, 3, 2, 1]
        assert np.array_equal(diag_HHt(op), np.tile(expected, (1, 6, 1)))

    def test_all_zeros_mask(self):
        op = SensingOperator(np.zeros((1, 4, 4)), bands=2)
        assert np.array_equal(diag_HHt(op), np.zeros(op.meas_shape))

    def test_binary_mask_counts(self):
        op = random_operator(6, 6, 3, K=2, seed=9)
        d = diag_HHt(op)
        assert np.array_equal(d, np.round(d))  # integer open-position counts


class TestExplicitH:
    def test_two_snapshot_shape(self):
        op = SensingOperator(np.ones((2, 6, 6)), bands=3)
        assert build_explicit_H(op).shape == (96, 108)

    def test_matches_matrix_free_on_random_cubes(self, rng):
        op = random_operator(6, 6, 3, K=2, seed=4)
        H = build_explicit_H(op)
        for _ in range(20):
            x = rng.standard_normal((6, 6, 3))
            dense = (H @ vec(x)).reshape(op.meas_shape)
            assert np.max(np.abs(dense - apply_H(op, x))) <= 1e-12

    def test_row_sums_equal_constant_measurement(self):
        op = SensingOperator(np.ones((1, 6, 6)), bands=3)
        H = build_explicit_H(op)
        rows = np.asarray(H.sum(axis=1)).reshape(op.meas_shape)
        assert np.array_equal(rows, apply_H(op, np.ones((6, 6, 3))))

    def test_column_structure(self):
        # each column: at most K nonzeros, values equal to the mask entries
        op = random_operator(6, 6, 3, K=3, seed=8)
        H = build_explicit_H(op).tocsc()
        M, N, L = op.cube_shape
        for col in range(H.shape[1]):
            nz = H[:, col].data
            assert len(nz) <= op.snapshots
            l, rem = divmod(col, M * N)
            i, j = divmod(rem, N)
            expected = op.apertures[:, i, j]
            assert set(np.round(nz, 15)) <= set(np.round(expected, 15))

    def test_size_cap(self):
        op = SensingOperator(np.ones((1, 50, 50)), bands=50)
        with pytest.raises(SizeError):
            build_explicit_H(op, cap=1000)


class TestOracleEquivalence:
    @pytest.mark.parametrize("dims", SMALL_GRID)
    def test_all_small_instances(self, dims):
        M, N, L, K, s = dims
        op = random_operator(M, N, L, K=K, s=s, seed=hash(dims) % 2**16)
        H = build_explicit_H(op)
        rng = np.random.default_rng(0)
        x = rng.standard_normal(op.cube_shape)
        y = rng.standard_normal(op.meas_shape)
        assert np.max(np.abs((H @ vec(x)).reshape(op.meas_shape)
                             - apply_H(op, x))) <= 1e-12
        assert np.max(np.abs(unvec(H.T @ y.ravel(), M, N, L)
                             - apply_Ht(op, y))) <= 1e-12
        gram_diag = np.asarray((H @ H.T).diagonal()).reshape(op.meas_shape)
        assert np.max(np.abs(gram_diag - diag_HHt(op))) <= 1e-12


class TestDispersionFlip:
    def test_left_is_right_with_reversed_bands(self, rng):
        masks = np.stack([rng.random((6, 6))])
        right = SensingOperator(masks, bands=3, dispersion="right")
        left = SensingOperator(masks, bands=3, dispersion="left")
        x = rng.standard_normal((6, 6, 3))
        # same sums accumulated in a different band order: equal to fp noise
        assert np.max(np.abs(apply_H(left, x)
                             - apply_H(right, x[:, :, ::-1]))) < 1e-12


class TestSimulate:
    def test_sigma_zero_equals_apply_H(self, rng):
        op = random_operator(8, 8, 4)
        x = rng.random((8, 8, 4))
        assert np.array_equal(simulate(op, x, 0.0, seed=1), apply_H(op, x))

    def test_noise_std(self):
        op = random_operator(64, 64, 8, seed=3)
        x = np.zeros(op.cube_shape)
        y = simulate(op, x, 0.01, seed=2)
        assert 0.009 <= y.std() <= 0.011

    def test_deterministic(self, rng):
        op = random_operator(8, 8, 4)
        x = rng.random((8, 8, 4))
        assert np.array_equal(simulate(op, x, 0.1, seed=5),
                              simulate(op, x, 0.1, seed=5))

    def test_negative_sigma(self):
        op = random_operator(4, 4, 2)
        with pytest.raises(ParameterError):
            simulate(op, np.zeros((4, 4, 2)), -0.1)
