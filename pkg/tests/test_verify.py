import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vvflow import verify
from vvflow.manufactured import make_manufactured_case
from vvflow.mesh import build_box_mesh


@given(st.floats(0.5, 4), st.floats(1e-3, 10))
def test_observed_orders_recover_power_law(p, c):
    h = [0.5, 0.25, 0.125]
    assert verify.observed_orders(h, [c * x**p for x in h]) == pytest.approx([p, p], rel=1e-9)


def test_observed_orders_nan_on_zero_error():
    assert math.isnan(verify.observed_orders([1, 0.5], [0.0, 0.0])[0])


def test_rate_table_rows():
    t = verify.RateTable([2, 4], [0.5, 0.25], {"e": [1.0, 0.25]})
    header, rows = t.rows()
    assert header == ["n", "h", "e", "order_e"]
    assert math.isnan(rows[0][3]) and rows[1][3] == pytest.approx(2.0)


def test_check_line_and_slack():
    c = verify.Check("x <= 1", 0.5, 1.0, True)
    assert c.slack == 2.0 and c.line().startswith("PASS x <= 1")
    assert verify.Check("zero", 0.0, 1.0, True).slack == math.inf
    r = verify.CriterionResult(3, "title", False, {"a": 1.5})
    assert r.line() == "[FAIL] criterion 3: title (a=1.5)"


def test_invariant_suite_passes_and_is_reproducible():
    a = verify.run_invariant_suite(n=2, nu=0.5, alpha=1.0, seed=4)
    b = verify.run_invariant_suite(n=2, nu=0.5, alpha=1.0, seed=4)
    assert a.passed, "\n".join(a.lines())
    assert a.lines() == b.lines()


def test_trilinear_constants_finite_and_seeded():
    m = build_box_mesh(2, 2, 2)
    t1 = verify.measure_trilinear_constants(m, n_probes=3, seed=1)
    t2 = verify.measure_trilinear_constants(m, n_probes=3, seed=1)
    assert t1 == t2
    assert 0 < t1.M < math.inf


def test_manufactured_consistency_decreases():
    case = make_manufactured_case(0.5, 1.0)
    assert verify.manufactured_consistency(case, 4) < verify.manufactured_consistency(case, 2)


def test_trig_probe_gradient_matches_finite_differences():
    f = verify.trig_probe(np.random.default_rng(0))
    x = np.random.default_rng(1).uniform(size=(5, 3))
    h = 1e-6
    fd = np.stack([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(3)], axis=2)
    assert np.allclose(f.grad(x), fd, atol=1e-6)
