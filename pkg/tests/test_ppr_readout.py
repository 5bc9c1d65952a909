import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lsmder.checks import pdelta_reference
from lsmder.der_readout import NonlinearityParams
from lsmder.ppr_readout import (PDeltaParams, PerceptronBank, apply_squash, augment, bank_out, pdelta_coefficients,
                                pdelta_train, pdelta_update, perceptron_out, ppr_variant_square, vote_sum)

small_floats = st.floats(-3.0, 3.0, allow_nan=False)


def unit_rows(n, d, rng):
    return PerceptronBank.random(n, d, rng)


class TestOutputs:
    def test_boundary_is_positive(self):
        assert perceptron_out(np.array([1.0, -1.0]), np.array([1.0, 1.0])) == 1

    def test_bias_only(self, rng):
        w = np.array([0.0, 0.0, 1.0])
        X = augment(rng.normal(size=(10, 2)))
        assert np.all(perceptron_out(w, X) == 1)

    @given(st.lists(small_floats, min_size=3, max_size=3), st.lists(small_floats, min_size=3, max_size=3))
    def test_dot_product_oracle(self, w, x):
        dot = sum(a * b for a, b in zip(w, x))
        if abs(dot) < 1e-12:
            return
        assert perceptron_out(np.array(w), np.array(x)) == (1 if dot > 0 else -1)

    @given(st.lists(small_floats, min_size=3, max_size=3), st.floats(0.01, 100.0))
    def test_positive_scaling_invariance(self, w, c):
        x = np.array([0.3, -1.2, 1.0])
        assert perceptron_out(np.array(w) * c, x) == perceptron_out(np.array(w), x)

    def test_all_agree(self):
        bank = PerceptronBank(np.tile([0.0, 1.0], (5, 1)))
        assert vote_sum(bank, np.array([0.0, 1.0])) == 5

    def test_mixed_votes(self):
        bank = PerceptronBank(np.array([[1.0, 0.0], [-1.0, 0.0], [1.0, 0.0]]))
        assert vote_sum(bank, np.array([1.0, 1.0])) == 1

    def test_clipped_zero(self):
        assert apply_squash(0.0, "clipped", 4.0) == 0.0

    def test_clipped_range(self):
        np.testing.assert_allclose(apply_squash(np.array([-9.0, 2.0, 9.0]), "clipped", 4.0), [-1.0, 0.5, 1.0])

    def test_unknown_squash(self):
        with pytest.raises(ValueError):
            apply_squash(0.0, "relu")

    def test_default_rho_is_n(self):
        bank = PerceptronBank(np.tile([0.0, 1.0], (4, 1)))
        assert bank_out(bank, np.array([0.0, 1.0]), "clipped") == 1.0


class TestSquareVariant:
    def test_zero_margin(self):
        bank = PerceptronBank(np.array([[1.0, 0.0], [0.0, 1.0]]))
        assert ppr_variant_square(bank, np.array([0.0, 0.0]), NonlinearityParams(1.0, 5.0)) == 0.0

    def test_saturation_onset(self):
        nl = NonlinearityParams(2.0, 8.0)
        bank = PerceptronBank(np.array([[1.0, 0.0]]))
        assert ppr_variant_square(bank, np.array([math.sqrt(16.0), 1.0]), nl) == pytest.approx(8.0)

    def test_sign_kept(self):
        nl = NonlinearityParams(1.0, 100.0)
        bank = PerceptronBank(np.array([[1.0, 0.0]]))
        assert ppr_variant_square(bank, np.array([-2.0, 1.0]), nl) == pytest.approx(-4.0)


class TestPDeltaUpdate:
    def test_fifth_case_no_change(self):
        bank = PerceptronBank(np.array([[1.0, 0.0], [0.0, 1.0]]))
        x = np.array([1.0, 1.0])
        out = pdelta_update(bank, x, 1.0, PDeltaParams(eta=0.1, gamma=0.5))
        np.testing.assert_array_equal(out.weights, bank.weights)

    def test_worked_step(self):
        eta = 0.1
        bank = PerceptronBank(np.array([[1.0, 0.0]]))
        out = pdelta_update(bank, np.array([1.0, 1.0]), 0.0, PDeltaParams(eta=eta))
        pre = np.array([1 - eta, -eta])
        np.testing.assert_allclose(out.weights[0], pre / np.linalg.norm(pre), rtol=1e-15)

    def test_too_low_pushes_negative_up(self):
        bank = PerceptronBank(np.array([[-1.0, 0.0]]))
        assert pdelta_coefficients(bank, np.array([1.0, 1.0]), 1.0, PDeltaParams()) == pytest.approx([1.0])

    def test_margin_cases(self):
        bank = PerceptronBank(np.array([[0.01, 0.0], [-0.01, 0.0]]))
        x = np.array([1.0, 0.0])
        # sum of votes is 0 -> output 1, target 1: both correct, both inside the margin
        coefs = pdelta_coefficients(bank, x, 1.0, PDeltaParams(gamma=0.05, mu=0.7))
        np.testing.assert_allclose(coefs, [0.7, -0.7])

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_literal_rule(self, seed):
        rng = np.random.default_rng(seed)
        n, d = int(rng.integers(1, 9)), int(rng.integers(1, 6))
        bank = unit_rows(n, d, rng)
        x = np.append(rng.normal(size=d), 1.0)
        params = PDeltaParams(eta=0.2, epsilon=0.1, gamma=0.4, mu=0.5)
        target = float(rng.uniform(-1, 1))
        coefs, ref = pdelta_reference(bank.weights, x, target, 0.2, 0.1, 0.4, 0.5, "clipped", float(n))
        np.testing.assert_array_equal(pdelta_coefficients(bank, x, target, params, "clipped"), coefs)
        np.testing.assert_allclose(pdelta_update(bank, x, target, params, "clipped").weights, ref, atol=1e-14)

    @given(st.integers(0, 2**32 - 1))
    def test_unit_norm(self, seed):
        rng = np.random.default_rng(seed)
        bank = unit_rows(5, 3, rng)
        x = np.append(rng.normal(size=3), 1.0)
        out = pdelta_update(bank, x, float(rng.integers(2)), PDeltaParams(eta=0.3, gamma=0.2))
        np.testing.assert_allclose(np.linalg.norm(out.weights, axis=1), 1.0, atol=1e-12)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            PDeltaParams(eta=0.0)
        with pytest.raises(ValueError):
            PDeltaParams(gamma=-0.1)


class TestPDeltaTrain:
    def test_zero_epochs(self, rng):
        bank = unit_rows(3, 2, rng)
        X = augment(rng.normal(size=(10, 2)))
        out, trace = pdelta_train(bank, X, rng.integers(0, 2, 10).astype(float), PDeltaParams(), 0, rng)
        np.testing.assert_array_equal(out.weights, bank.weights)
        assert len(trace.mae) == 1 and trace.best_epoch == 0

    def test_separable_toy(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(-1, 1, size=(60, 2))
        X = X[np.abs(X[:, 0] + 0.5 * X[:, 1] - 0.1) > 0.1]
        t = (X[:, 0] + 0.5 * X[:, 1] - 0.1 > 0).astype(float)
        bank, trace = pdelta_train(unit_rows(1, 2, rng), augment(X), t, PDeltaParams(eta=0.1), 200, rng)
        assert trace.mae[trace.best_epoch] == 0.0
        assert np.array_equal(bank_out(bank, augment(X)), t)

    def test_fixed_point(self):
        bank = PerceptronBank(np.array([[0.0, 1.0]]))
        X = augment(np.array([[0.3], [-0.4], [2.0]]))
        bank2, trace = pdelta_train(bank, X, np.ones(3), PDeltaParams(gamma=0.5), 10, np.random.default_rng(1))
        np.testing.assert_array_equal(bank2.weights, bank.weights)
        assert trace.mae == [0.0] * 11

    def test_best_epoch_returned(self, rng):
        X = augment(rng.normal(size=(40, 3)))
        t = rng.integers(0, 2, 40).astype(float)
        bank, trace = pdelta_train(unit_rows(5, 3, rng), X, t, PDeltaParams(eta=0.05), 30, rng)
        assert trace.mae[trace.best_epoch] == min(trace.mae)
        assert np.mean(np.abs(bank_out(bank, X) - t)) == pytest.approx(min(trace.mae))

    def test_square_needs_nl(self, rng):
        with pytest.raises(ValueError):
            pdelta_train(unit_rows(2, 2, rng), augment(np.zeros((2, 2))), np.zeros(2), PDeltaParams(), 1, rng,
                         variant="square")

    def test_square_variant_trains(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(0, 1, size=(80, 4))
        t = np.clip(X[:, 0] - X[:, 1], -1, 1)
        nl = NonlinearityParams(1.0, 4.0)
        start = unit_rows(4, 4, rng)
        bank, trace = pdelta_train(start, augment(X), t, PDeltaParams(eta=0.05, epsilon=0.05), 100, rng,
                                   squash="clipped", variant="square", nl=nl)
        assert min(trace.mae) < trace.mae[0]
