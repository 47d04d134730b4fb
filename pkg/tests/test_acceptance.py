"""The eleven acceptance criteria at their stated tolerances.

Each test prints one ``[PASS]``/``[FAIL]`` line with the measured values,
then asserts the criterion.
"""
import pytest

from vvflow import verify

NS = (2, 4, 8)

CRITERIA = {
    1: lambda tmp: verify.criterion_1(verify.default_study(NS)),
    2: lambda tmp: verify.criterion_2(verify.default_study(NS).records),
    3: lambda tmp: verify.criterion_3(verify.default_study(NS).records),
    4: lambda tmp: verify.criterion_4(),
    5: lambda tmp: verify.criterion_5(NS),
    6: lambda tmp: verify.criterion_6(NS),
    7: lambda tmp: verify.criterion_7(NS),
    8: lambda tmp: verify.criterion_8(),
    9: lambda tmp: verify.criterion_9(NS),
    10: lambda tmp: verify.criterion_10(),
    11: lambda tmp: verify.criterion_11(tmp),
}


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, tmp_path, capsys):
    result = CRITERIA[number](tmp_path)
    with capsys.disabled():
        print("\n" + result.line())
    assert result.number == number
    assert result.passed, result.line()
