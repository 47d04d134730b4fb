import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from vvflow.estimators import HelmholtzDecomposer, NonstdStokesSolver, VVSSolver
from vvflow.manufactured import make_manufactured_case, make_nonstd_case

PTS = np.array([[0.5, 0.5, 0.5], [0.25, 0.75, 0.4]])


def test_params_roundtrip_and_clone():
    est = VVSSolver(nu=0.3, mesh=(2, 2, 2))
    assert est.get_params()["nu"] == 0.3
    est.set_params(alpha=2.0)
    c = clone(est)
    assert c.get_params() == est.get_params() and c is not est


@pytest.mark.parametrize("est", [VVSSolver(), NonstdStokesSolver(), HelmholtzDecomposer()])
def test_not_fitted(est):
    with pytest.raises(NotFittedError):
        (est.transform if isinstance(est, HelmholtzDecomposer) else est.predict)(PTS)


def test_vvs_solver_fit_predict():
    case = make_manufactured_case(0.5, 1.0)
    est = VVSSolver(nu=0.5, alpha=1.0, mesh=(2, 2, 2)).fit(case.f)
    u = est.predict(PTS)
    assert u.shape == (2, 3)
    assert np.allclose(u, case.u(PTS), atol=0.05)
    assert est.vorticity(PTS).shape == (2, 3) and est.n_iter_ >= 2
    assert not np.any(VVSSolver(mesh=(2, 2, 2)).fit(None).predict(PTS))
    with pytest.raises(ValueError):
        est.predict(np.zeros((2, 2)))


def test_nonstd_and_helmholtz():
    case = make_nonstd_case(1.0, 1.0)
    est = NonstdStokesSolver(nu=1.0, alpha=1.0, mesh=(2, 2, 2)).fit(case.g.value)
    assert est.predict(PTS).shape == (2, 3)
    g = lambda x: np.stack([2 * x[:, 0], x[:, 2], x[:, 1]], 1)
    h = HelmholtzDecomposer(mesh=(2, 2, 2)).fit(g)
    assert np.allclose(h.gradient_part(PTS), g(PTS), atol=1e-10)
    assert np.allclose(h.transform(PTS), 0, atol=1e-10)
    with pytest.raises(ValueError):
        HelmholtzDecomposer().fit(None)
    with pytest.raises(TypeError):
        VVSSolver().fit(3.0)
