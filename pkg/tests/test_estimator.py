import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from fpme import SelfSimilarProfile
from fpme import closedform as cf
from fpme import solver as S
from fpme.errors import ParameterError
from fpme.kernel import Params


def test_params_round_trip_and_clone():
    est = SelfSimilarProfile(alpha=0.3, m=3.0, d=2, mass=2.0, grid_size=64)
    p = est.get_params()
    assert p["alpha"] == 0.3 and p["d"] == 2 and p["z_max"] is None
    est.set_params(m=4.0)
    assert est.m == 4.0
    twin = clone(est)
    assert twin.get_params() == est.get_params() and twin is not est


def test_not_fitted():
    est = SelfSimilarProfile()
    with pytest.raises(NotFittedError):
        est.predict([0.5])
    with pytest.raises(NotFittedError):
        est.diagnostics()


def test_invalid_parameters_raise_on_fit():
    with pytest.raises(ParameterError):
        SelfSimilarProfile(alpha=0.5, m=0.2, d=3).fit()


@pytest.fixture(scope="module")
def slow_fit():
    return SelfSimilarProfile(alpha=0.5, m=2.0, mass=3.0, grid_size=128).fit()


def test_slow_fit_matches_solver(slow_fit):
    u, _ = S.solve_slow(Params(0.5, 2.0, 1), I=128)
    ref = S.rescale_to_mass(u, 3.0)
    z = np.linspace(0.0, 1.2 * ref.nodes[-1], 50)
    assert np.array_equal(slow_fit.predict(z), ref(z))
    assert slow_fit.mass_ == pytest.approx(3.0, rel=1e-12)
    assert slow_fit.regime_ == "slow" and slow_fit.report_.monotone_certificate


def test_predict_accepts_a_column(slow_fit):
    z = np.array([0.1, 0.2, 0.3])
    assert np.array_equal(slow_fit.predict(z[:, None]), slow_fit.predict(z))


def test_score(slow_fit):
    z = np.array([0.1, 0.2, 0.3])
    y = slow_fit.predict(z)
    assert slow_fit.score(z, y) == 0.0
    assert slow_fit.score(z, 1.1 * y) == pytest.approx(-1.0 / 11.0)


def test_diagnostics(slow_fit):
    diag = slow_fit.diagnostics()
    assert diag["flux0"] == pytest.approx(cf.flux_constant(Params(0.5, 2.0, 1, mass=3.0)), rel=0.02)


def test_fast_fit():
    est = SelfSimilarProfile(alpha=0.5, m=0.5, grid_size=128).fit()
    assert est.regime_ == "fast" and est.mass_ == pytest.approx(1.0, rel=1e-12)
    # far tail follows the VSS c* z^(-4)
    z = 1e3 * est.profile_.nodes[-1]
    assert float(est.predict([z])[0]) * z ** 4 == pytest.approx(9 * math.pi, rel=1e-3)


def test_linear_fit_uses_closed_form():
    est = SelfSimilarProfile(alpha=1.0, m=1.0, mass=2.0, grid_size=100, z_max=10.0).fit()
    z = np.array([0.0, 1.0, 3.0])
    assert np.allclose(est.predict(z), 2.0 * np.exp(-z * z / 4) / math.sqrt(4 * math.pi), rtol=1e-10)
    with pytest.raises(NotImplementedError):
        est.diagnostics()
