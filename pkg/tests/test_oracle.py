import pytest

from lobefit import presets
from lobefit.errors import BracketError, LobefitError
from lobefit.oracle import bisection_calls, depth_limit_bisect, find_bracket, is_stable, winding_number
from lobefit.zoa import build_sld, sample_at_speeds

CASE = presets.EX1
SPEED = 9000.0


def test_zero_depth_is_stable():
    assert winding_number(CASE.target, CASE.cutting, SPEED, 0.0) == 0
    with pytest.raises(LobefitError):
        winding_number(CASE.target, CASE.cutting, SPEED, -1.0)


def test_stability_flips_across_boundary():
    curve = build_sld(CASE.target, CASE.cutting, CASE.speed_range)
    limit = sample_at_speeds(curve, [SPEED]).depths[0]
    assert is_stable(CASE.target, CASE.cutting, SPEED, 0.98 * limit)
    assert not is_stable(CASE.target, CASE.cutting, SPEED, 1.02 * limit)
    assert not is_stable(CASE.target, CASE.cutting, SPEED, 10 * limit)


def test_bracket_and_bisection():
    lo, hi = find_bracket(CASE.target, CASE.cutting, SPEED, start=0.1)
    assert is_stable(CASE.target, CASE.cutting, SPEED, lo)
    assert not is_stable(CASE.target, CASE.cutting, SPEED, hi)
    depth = depth_limit_bisect(CASE.target, CASE.cutting, SPEED, (lo, hi), tol=1e-4)
    assert lo <= depth <= hi
    assert is_stable(CASE.target, CASE.cutting, SPEED, depth - 2e-4)
    assert not is_stable(CASE.target, CASE.cutting, SPEED, depth + 2e-4)


def test_bad_brackets():
    with pytest.raises(BracketError):
        depth_limit_bisect(CASE.target, CASE.cutting, SPEED, (2.0, 1.0))
    with pytest.raises(BracketError):
        depth_limit_bisect(CASE.target, CASE.cutting, SPEED, (50.0, 100.0))
    with pytest.raises(BracketError):
        depth_limit_bisect(CASE.target, CASE.cutting, SPEED, (0.0, 1e-3))
    with pytest.raises(BracketError):
        find_bracket(CASE.target, CASE.cutting, SPEED, start=1e-6, max_doublings=3)


def test_bisection_calls():
    assert bisection_calls((0.0, 1.0), 1e-4) == 14
    assert bisection_calls((0.0, 1e-5), 1e-4) == 0
