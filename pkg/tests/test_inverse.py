import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lobefit import presets
from lobefit.errors import LobefitError, NumericalError, UnfittableError
from lobefit.inverse import (
    FitOptions,
    ZeroGradient,
    _Problem,
    detect_critical_points,
    fd_sensitivity,
    fit,
    mlae,
    newton_step,
    random_guesses,
)
from lobefit.model import BoundarySamples, flatten, unflatten
from lobefit.zoa import build_sld, sample_at_speeds

FAST = {"grid_points": 500}


def _reference(case, n=20):
    speeds = np.linspace(*case.speed_range, n)
    return sample_at_speeds(build_sld(case.target, case.cutting, case.speed_range, **FAST), speeds)


def test_mlae_examples():
    assert mlae(BoundarySamples([1, 2], [1.0, 3.0]), [1.0, 3.0]) == 0.0
    assert mlae(BoundarySamples([1, 2], [1.0, 1.0]), [1.0, math.e]) == pytest.approx(0.5, abs=1e-15)
    assert mlae([1.0, 1.0], [1.0, math.e], weights=[0.0, 2.0]) == pytest.approx(1.0)
    with pytest.raises(LobefitError):
        mlae([1.0, 2.0], [1.0])


depth_lists = st.lists(st.floats(1e-3, 100), min_size=1, max_size=30)


@given(depth_lists, st.data())
def test_mlae_nonnegative_and_zero_iff_equal(ref, data):
    cand = data.draw(st.lists(st.floats(1e-3, 100), min_size=len(ref), max_size=len(ref)))
    value = mlae(ref, cand)
    assert value >= 0
    assert (value == 0) == (ref == cand)
    assert mlae(ref, ref) == 0


def test_mlae_predicted_parameters_ex1():
    case = presets.EX1
    speeds = np.linspace(*case.speed_range, 50)
    ref = sample_at_speeds(build_sld(case.target, case.cutting, case.speed_range), speeds)
    pred = sample_at_speeds(build_sld(case.predicted, case.cutting, case.speed_range), speeds)
    one_liner = sum(math.log(1 + abs(a - b)) for a, b in zip(ref.depths, pred.depths)) / len(speeds)
    value = mlae(ref, pred.depths)
    assert value == pytest.approx(one_liner, rel=1e-12)
    assert 0 < value < 0.5


def test_newton_step_examples():
    pv = flatten(presets.EX1.target)
    p = pv.with_values([1.0, 1.0, 0.1, 1.0, 1.0, 0.1])
    out = newton_step(p, 0.5, [1.0, 2.0, 0, 0, 0, 0], 1.0)
    assert out.values[:2] == pytest.approx((0.9, 0.8), abs=1e-15)
    assert out.values[2:] == p.values[2:]
    assert newton_step(p, 0.0, [1.0] * 6) == p
    with pytest.raises(ZeroGradient):
        newton_step(p, 0.3, [0.0] * 6)
    half = newton_step(p, 0.5, [1.0, 2.0, 0, 0, 0, 0], 0.5)
    assert half.values[:2] == pytest.approx((0.95, 0.9))


def test_fd_sensitivity_calculus():
    pv = flatten(presets.EX1.target)
    p = np.asarray(pv.values)
    a = p * 0.9
    # f = sum((q/a - 1)^2), so df/dq = 2 (q/a - 1) / a
    quad = lambda q: float(np.sum((np.asarray(q.values) / a - 1) ** 2))
    s = fd_sensitivity(pv, quad, 1e-6)
    assert np.allclose(s, 2 * (p / a - 1) / a, rtol=1e-4)
    flat = fd_sensitivity(pv, lambda q: 1.0)
    assert np.all(flat == 0)


def test_fd_sensitivity_shrinks_step_then_fails():
    pv = flatten(presets.EX1.target)
    x0 = pv.values[0]

    def wall(q):
        return 1.0 if q.values[0] <= x0 * (1 + 1e-6) else math.inf

    s = fd_sensitivity(pv, wall, 1e-4)
    assert s[0] == 0
    with pytest.raises(NumericalError):
        fd_sensitivity(pv, lambda q: 1.0 if q.values[0] == x0 else math.inf)
    with pytest.raises(NumericalError):
        fd_sensitivity(pv, lambda q: math.inf)


def test_fd_matches_central_difference():
    case = presets.EX1
    ref = _reference(case, 50)
    problem = _Problem(ref, case.cutting, None, {})
    pv = flatten(case.target)
    guess = pv.with_values(np.asarray(pv.values) * np.array([1.1, 0.9, 1.1, 0.9, 1.1, 0.9]))
    h = 1e-4
    s = fd_sensitivity(guess, problem, h)
    p = np.asarray(guess.values)
    for i in range(p.size):
        up, dn = p.copy(), p.copy()
        up[i] *= 1 + h / 2
        dn[i] *= 1 - h / 2
        central = (problem(guess.with_values(up)) - problem(guess.with_values(dn))) / (p[i] * h)
        assert s[i] == pytest.approx(central, rel=0.05)


def test_critical_points():
    assert np.all(detect_critical_points(BoundarySamples([1, 2, 3, 4], [1.0, 2, 3, 4])) == 1)
    w = detect_critical_points(BoundarySamples([1, 2, 3], [2.0, 1, 2]), 2.0)
    assert w[1] / w[0] == pytest.approx(2.0) and w.mean() == pytest.approx(1.0)


def test_critical_points_count_matches_sign_changes():
    case = presets.EX1
    speeds = np.linspace(*case.speed_range, 50)
    ref = sample_at_speeds(build_sld(case.target, case.cutting, case.speed_range), speeds)
    w = detect_critical_points(ref, 3.0)
    d = np.sign(np.diff(ref.depths))
    changes = int(np.sum((d[1:] * d[:-1]) < 0))
    assert changes > 0
    assert int(np.sum(w > w.min())) == changes


def test_options_validation():
    g = [flatten(presets.EX1.target)]
    for bad in [dict(pace=0), dict(pace=1.5), dict(fd_step=0), dict(max_iterations=-1), dict(weight_scheme="x"),
                dict(initial_guesses=[]), dict(burn_in=10, max_iterations=5), dict(jump_shrink=0)]:
        kwargs = dict(initial_guesses=g)
        kwargs.update(bad)
        with pytest.raises(LobefitError):
            FitOptions(**kwargs)


def test_random_guesses_seeded_and_within_spread():
    pv = flatten(presets.EX3.target)
    a = random_guesses(pv, 0.2, 5, 3)
    assert a == random_guesses(pv, 0.2, 5, 3)
    for g in a:
        ratio = np.asarray(g.values) / np.asarray(pv.values)
        assert np.all(np.abs(ratio - 1) <= 0.2)


def test_fit_fixed_point():
    case = presets.EX2
    ref = _reference(case)
    rep = fit(ref, case.cutting, FitOptions([flatten(case.target)], sld_options=FAST))
    assert rep.converged and rep.iterations == 0 and rep.objective == 0.0
    assert rep.final == flatten(case.target)


def test_fit_zero_budget():
    case = presets.EX2
    ref = _reference(case)
    guesses = random_guesses(flatten(case.target), 0.2, 2, 0)
    rep = fit(ref, case.cutting, FitOptions(guesses, max_iterations=0, burn_in=0, sld_options=FAST))
    assert rep.history == [] and not rep.converged and rep.iterations == 0


def test_fit_unfittable():
    case = presets.EX2
    ref = BoundarySamples([1e9, 2e9], [1.0, 1.0])
    with pytest.raises(UnfittableError):
        fit(ref, case.cutting, FitOptions([flatten(case.target)], sld_options=FAST))


@pytest.fixture(scope="module")
def short_fit():
    case = presets.EX3
    ref = _reference(case)
    guesses = random_guesses(flatten(case.target), 0.2, 3, 1)
    opts = FitOptions(guesses, max_iterations=14, burn_in=3, stall_window=3, seed=5, sld_options=FAST)
    return ref, case, opts, fit(ref, case.cutting, opts)


def test_fit_invariants(short_fit):
    ref, case, opts, rep = short_fit
    problem = _Problem(ref, case.cutting, None, FAST)
    starts = [problem(g) for g in opts.initial_guesses]
    assert rep.objective <= min(starts)
    assert rep.objective == pytest.approx(problem(rep.final), rel=1e-12)
    steps = [h for h in rep.history if h.event == "step"]
    assert steps and rep.iterations <= opts.max_iterations
    assert any(h.event == "restart-pruned" for h in rep.history)
    unflatten(rep.final)


def test_accepted_jumps_strictly_improve(short_fit):
    ref, case, opts, rep = short_fit
    start = best = None
    for h in rep.history:
        if h.event in ("step", "restart-resumed"):
            start = best = h.objective
        elif h.event == "jump-accepted":
            assert h.objective < start
            best = min(best, h.objective)
        elif h.event == "jump-rejected":
            assert h.objective >= best


def test_fit_deterministic(short_fit):
    ref, case, opts, rep = short_fit
    again = fit(ref, case.cutting, opts)
    assert again == rep
