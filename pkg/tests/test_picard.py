import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vvflow.fespaces import Spaces
from vvflow.manufactured import make_manufactured_case
from vvflow.mesh import build_box_mesh
from vvflow.picard import (Constants, PicardConfig, PicardError, VVSProblem, check_smallness,
                           max_admissible_forcing, solve_vvs)

M2 = build_box_mesh(2, 2, 2)
SP2 = Spaces.build(M2)
CONST = Constants(c_p=0.18, c_star=50.0, M=0.01)


def test_zero_forcing_gives_zero_state_in_one_iteration():
    res = solve_vvs(VVSProblem(SP2, None, 0.1, 1.0))
    assert res.iterations == 1
    for f in (res.state.u, res.state.w, res.state.P, res.state.eta):
        assert not np.any(f.coefficients)


def test_manufactured_solve_is_a_fixed_point():
    case = make_manufactured_case(0.5, 1.0)
    p = VVSProblem(SP2, case.f, 0.5, 1.0, PicardConfig(tol=1e-12))
    res = solve_vvs(p)
    assert p.fixed_point_defect(res.state) < 1e-10
    assert max(res.final_residuals) < 1e-9
    keys, rows = res.trace.rows()
    assert keys[0] == "iteration" and len(rows) == res.iterations
    assert all(r[keys.index("ratio")] < 0.5 for r in rows[1:])


def test_continuation_reaches_the_same_solution():
    case = make_manufactured_case(0.5, 1.0)
    a = solve_vvs(VVSProblem(SP2, case.f, 0.5, 1.0, PicardConfig(tol=1e-12))).state
    cfg = PicardConfig.with_steps(3, tol=1e-12)
    assert cfg.lambda_schedule == pytest.approx((1 / 3, 2 / 3, 1.0))
    p = VVSProblem(SP2, case.f, 0.5, 1.0, cfg)
    b = solve_vvs(p).state
    assert p.difference_norm(a, b) < 1e-9 * p.state_norm(a)


def test_failure_raises_with_trace_and_best():
    case = make_manufactured_case(0.1, 1.0)
    p = VVSProblem(SP2, case.f, 0.1, 1.0, PicardConfig(max_iter=1))
    with pytest.raises(PicardError) as e:
        solve_vvs(p)
    assert len(e.value.trace) == 1 and e.value.best is not None


@pytest.mark.parametrize("kw", [dict(tol=0), dict(max_iter=0), dict(damping=0),
                                dict(damping=1.5), dict(lambda_schedule=(0.5,)),
                                dict(lambda_schedule=(1.0, 0.5, 1.0)), dict(quad_degree=5)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        PicardConfig(**kw)


def test_constants_validation():
    with pytest.raises(ValueError):
        Constants(c_p=0.0, c_star=1.0, M=1.0)
    with pytest.raises(ValueError):
        Constants(c_p=0.1, c_star=math.inf, M=1.0)


@given(st.floats(1e-3, 10), st.floats(0, 10), st.floats(0, 1e3), st.floats(0, 1))
def test_smallness_is_monotone_in_forcing(nu, alpha, f, shrink):
    hi = check_smallness(f, nu, alpha, CONST)
    lo = check_smallness(f * shrink, nu, alpha, CONST)
    if hi.all_pass:
        assert lo.all_pass
    assert lo.alpha1 >= hi.alpha1


@given(st.floats(0.01, 5), st.floats(0, 5))
def test_max_admissible_forcing_is_the_boundary(nu, alpha):
    fmax = max_admissible_forcing(nu, alpha, CONST)
    assert check_smallness(fmax, nu, alpha, CONST).all_pass
    assert not check_smallness(fmax * 1.001, nu, alpha, CONST).all_pass


def test_smallness_report_lines():
    rep = check_smallness(1.0, 1.0, 1.0, CONST)
    lines = rep.lines()
    assert lines[-1] == f"all_pass = {rep.all_pass}"
    assert not any("np." in ln for ln in lines)
    with pytest.raises(ValueError):
        check_smallness(-1.0, 1.0, 1.0, CONST)
