import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from homogen.coefficients import CoefficientSpec
from homogen.estimators import CellHomogenizer, HomogenizationStudy, RateEstimator


class TestCellHomogenizer:
    def test_laminate(self):
        est = CellHomogenizer(resolution=32).fit(CoefficientSpec.laminate(mean=2.0, amplitude=1.0))
        np.testing.assert_allclose(est.eta0_, np.diag([np.sqrt(3.0), 2.0, 2.0]), atol=1e-8)
        E = np.eye(3)
        np.testing.assert_allclose(est.predict(E), est.eta0_.T)
        T = est.transform(E)
        assert T.shape == (3, 6)
        np.testing.assert_allclose(T[:, :3] @ T[:, 3:].T, np.eye(3), atol=1e-8)

    def test_preset_name_and_dict(self):
        a = CellHomogenizer(resolution=8).fit("diagonal-shifted")
        b = CellHomogenizer(resolution=8).fit({"preset": "diagonal-shifted"})
        np.testing.assert_array_equal(a.eta0_, b.eta0_)

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            CellHomogenizer().predict(np.eye(3))

    def test_bad_input(self):
        est = CellHomogenizer(resolution=8).fit("laminate")
        with pytest.raises(ValueError):
            est.predict(np.ones((2, 2)))
        with pytest.raises(ValueError):
            CellHomogenizer(resolution=2).fit("laminate")

    def test_clone_and_params(self):
        est = CellHomogenizer(resolution=12, tol=1e-8)
        c = clone(est)
        assert c.get_params() == est.get_params()
        assert c.set_params(resolution=8).resolution == 8


class TestRateEstimator:
    def test_fit_predict(self):
        eps = np.array([0.5, 0.25, 0.125])
        est = RateEstimator().fit(eps[:, None], 2 * eps**1.5)
        assert est.order_ == pytest.approx(1.5)
        np.testing.assert_allclose(est.predict([[0.1]]), [2 * 0.1**1.5])
        assert est.score(eps[:, None], 2 * eps**1.5) == pytest.approx(1.0)

    def test_rejects(self):
        with pytest.raises(ValueError):
            RateEstimator().fit([0.5, 0.25, 0.125], [1.0, 0.0, 0.5])
        with pytest.raises(ValueError):
            RateEstimator().fit([0.5, 2.0, 0.125], [1.0, 0.5, 0.2])
        with pytest.raises(ValueError):
            RateEstimator().fit([0.5, 0.25, 0.125], [1.0, 0.5])


class TestHomogenizationStudy:
    def test_fit_predict(self):
        est = HomogenizationStudy(coefficients={"preset": "laminate", "nu": {"kind": "laminate"}},
                                  eps_ladder=(0.5, 1 / 3, 0.25)).fit()
        assert est.report_.eps == [0.5, 1 / 3, 0.25]
        pred = est.predict([[0.5], [0.25]])
        assert pred.shape == (2, len(est.report_.columns))
        assert np.all(pred[1] < pred[0])
        assert est.orders_["err_l2"] > 0.5

    def test_clone(self):
        est = HomogenizationStudy(study="maxwell", seed=3)
        assert clone(est).get_params() == est.get_params()
