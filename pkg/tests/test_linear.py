import numpy as np
import pytest

from oracles import finite_difference, lr_loss, svm_primal, svm_subgradient
from seedpure.classifiers import LinearSVM, LogisticRegression, lr_objective
from seedpure.errors import TrainingError


class TestLogisticRegression:
    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        n, d = int(rng.integers(2, 31)), int(rng.integers(1, 11))
        X = rng.standard_normal((n, d))
        y = rng.integers(0, 2, n).astype(float)
        w, b, lam = rng.standard_normal(d), float(rng.standard_normal()), 0.1
        loss, gw, gb = lr_objective(w, b, X, y, lam)
        assert loss == pytest.approx(lr_loss(w, b, X, y, lam), rel=1e-10)
        theta = np.append(w, b)
        num = finite_difference(lambda t: lr_loss(t[:-1], t[-1], X, y, lam), theta)
        ana = np.append(gw, gb)
        rel = np.abs(ana - num) / np.maximum(np.maximum(np.abs(ana), np.abs(num)), 1e-8)
        assert rel.max() <= 1e-4

    def test_separable_points(self):
        X, y = np.array([[-1.0], [1.0]]), np.array([0, 1])
        m = LogisticRegression().fit(X, y)
        assert m.w[0] > 0
        assert np.array_equal(m.predict(X), y)

    def test_heavy_penalty_shrinks(self, rng):
        X = rng.standard_normal((40, 5))
        y = (X[:, 0] > 0).astype(int)
        m = LogisticRegression(lam=1e6).fit(X, y)
        assert np.linalg.norm(m.w) < 1e-2

    def test_zero_model_is_half_and_positive(self, rng):
        m = LogisticRegression().set_parameters({"w": np.zeros(3), "b": np.zeros(1)})
        X = rng.standard_normal((4, 3))
        assert np.all(m.predict_proba(X) == 0.5)
        assert np.all(m.predict(X) == 1)

    def test_converges_to_stationary_point(self, rng):
        X = rng.standard_normal((60, 3))
        y = (X @ [1.0, -2.0, 0.5] + 0.3 * rng.standard_normal(60) > 0).astype(int)
        m = LogisticRegression(lam=0.1, lr=0.5, max_iters=5000, tol=1e-9).fit(X, y)
        _, gw, gb = lr_objective(m.w, m.b, X, y, 0.1)
        assert max(np.abs(gw).max(), abs(gb)) < 1e-8

    def test_needs_two_rows(self):
        with pytest.raises(TrainingError):
            LogisticRegression().fit(np.zeros((1, 2)), np.array([1]))

    def test_negative_lambda(self):
        with pytest.raises(ValueError):
            LogisticRegression(lam=-1)


class TestLinearSvm:
    def test_two_point_hard_margin(self):
        X, y = np.array([[-1.0], [1.0]]), np.array([0, 1])
        m = LinearSVM(C=100, max_epochs=1000, tol=1e-8).fit(X, y)
        assert abs(m.w[0] - 1) <= 1e-2 and abs(m.b) <= 1e-2
        margins = np.where(y == 1, 1, -1) * m.decision_function(X)
        assert np.all(margins >= 1 - 1e-3)

    @pytest.mark.parametrize("seed", range(6))
    def test_box_and_kkt(self, seed):
        rng = np.random.default_rng(seed)
        X = np.vstack([rng.normal(-1, 1, (25, 4)), rng.normal(1, 1, (25, 4))])
        y = np.repeat([0, 1], 25)
        C = [0.01, 0.1, 1.0, 10.0, 0.5, 3.0][seed]
        m = LinearSVM(C=C, max_epochs=2000, tol=1e-5, seed=seed).fit(X, y)
        assert np.all(m.alpha_ >= 0) and np.all(m.alpha_ <= C)
        ys = np.where(y == 1, 1.0, -1.0)
        g = ys * m.decision_function(X) - 1
        viol = np.where(m.alpha_ <= 0, np.minimum(g, 0),
                        np.where(m.alpha_ >= C, np.maximum(g, 0), g))
        assert np.abs(viol).max() <= 1e-5
        # primal weights are the dual combination of the (float32) rows, up to update drift
        X32 = X.astype(np.float32).astype(np.float64)
        np.testing.assert_allclose(m.w, (m.alpha_ * ys) @ X32, rtol=0, atol=1e-7)

    def test_matches_subgradient_baseline(self, rng):
        X = np.vstack([rng.normal(-1, 1, (20, 3)), rng.normal(1, 1, (20, 3))])
        y = np.repeat([0, 1], 20)
        m = LinearSVM(C=0.5, max_epochs=2000, tol=1e-7).fit(X, y)
        w, b = svm_subgradient(X, y, 0.5)
        ours = m.primal_objective(X, y)
        assert ours == pytest.approx(svm_primal(m.w, m.b, X, y, 0.5))
        assert ours <= svm_primal(w, b, X, y, 0.5) + 1e-6

    def test_epoch_order_is_seeded(self, rng):
        X = rng.standard_normal((30, 3))
        y = (X[:, 0] > 0).astype(int)
        a = LinearSVM(seed=4, max_epochs=3).fit(X, y)
        b = LinearSVM(seed=4, max_epochs=3).fit(X, y)
        assert a.w.tobytes() == b.w.tobytes()

    def test_single_class_rejected(self):
        with pytest.raises(TrainingError):
            LinearSVM().fit(np.zeros((3, 2)), np.zeros(3))

    def test_bad_c(self):
        with pytest.raises(ValueError):
            LinearSVM(C=0)
