"""Inverse identification of structural dynamics from a measured stability boundary.

The cutting parameters stay fixed; only the modal parameters move.  Each
iteration rebuilds the lobe diagram at the current guess, scores it against
the reference boundary with the mean log absolute error (MLAE), and applies
a Newton-Raphson root step on that score along its finite-difference
gradient.  Stalls are broken by trial jumps that are kept only when they
lower the score, and several starting guesses are run briefly before the
best one is continued.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyCurveError, LobefitError, NumericalError, SpeedRangeError, UnfittableError
from .model import (
    BoundarySamples,
    CuttingParams,
    FitReport,
    HistoryEntry,
    ParameterVector,
    unflatten,
)
from .zoa import build_sld, sample_at_speeds

log = logging.getLogger(__name__)

DAMPING_BOUNDS = (1e-4, 0.5)
POSITIVE_FLOOR = 1e-6


@dataclass
class FitOptions:
    """Tuning knobs for :func:`fit`.

    ``pace`` multiplies the Newton update (``--alpha`` on the command line).  Each step
    moves no parameter by more than ``max_step`` of its starting value and
    is halved up to ``backtracks`` times until it lowers the objective.

    The stall test compares the best objective now with the best one
    ``stall_window`` iterations ago; an improvement below
    ``stall_improvement`` (relative) triggers the jump phase, as does a
    Newton step that finds no improvement.  A jump phase tries
    ``+/- jump_ratio`` on each parameter, the combination of the improving
    ones, exchange moves that push two parameters of the same kind in
    opposite senses, and ``random_jumps`` moves of a random subset of
    parameters with random signs.  A phase without improvement multiplies the ratio by
    ``jump_shrink`` (down to ``min_jump_ratio``); a successful one doubles
    it, up to ``jump_ratio``.
    """

    initial_guesses: Sequence[ParameterVector] = ()
    pace: float = 1.0
    fd_step: float = 1e-4
    max_iterations: int = 200
    objective_threshold: float = 1e-3
    stall_window: int = 8
    stall_improvement: float = 0.01
    jump_ratio: float = 0.05
    jump_shrink: float = 0.5
    min_jump_ratio: float = 1e-4
    burn_in: int = 10
    weight_scheme: str = "uniform"  # or "critical"
    critical_weight: float = 2.0
    scaled: bool = True
    backtracks: int = 4
    max_step: float = 0.1
    trap_ratio: float = 0.005
    trap_improvement: float = 0.05
    pattern_moves: int = 4
    random_jumps: int | None = None  # per jump phase; None means one per free parameter
    seed: int = 0
    sld_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.pace <= 1:
            raise LobefitError("pace must lie in (0, 1]")
        if not self.fd_step > 0:
            raise LobefitError("fd_step must be > 0")
        if not self.jump_ratio > 0:
            raise LobefitError("jump_ratio must be > 0")
        if not self.max_step > 0:
            raise LobefitError("max_step must be > 0")
        if not 0 < self.jump_shrink <= 1:
            raise LobefitError("jump_shrink must lie in (0, 1]")
        if self.max_iterations < 0:
            raise LobefitError("max_iterations must be >= 0")
        if self.max_iterations and not self.burn_in < self.max_iterations:
            raise LobefitError("burn_in must be smaller than max_iterations")
        if self.weight_scheme not in ("uniform", "critical"):
            raise LobefitError(f"unknown weight scheme {self.weight_scheme!r}")
        if not self.initial_guesses:
            raise LobefitError("at least one initial guess is required")


def mlae(reference: BoundarySamples, depths, weights=None) -> float:
    """Weighted mean of ln(1 + |reference depth - candidate depth|), depths in mm."""
    ref = np.asarray(reference.depths if isinstance(reference, BoundarySamples) else reference, dtype=float)
    cand = np.asarray(depths, dtype=float)
    if ref.shape != cand.shape:
        raise LobefitError(f"length mismatch: {ref.size} reference vs {cand.size} candidate depths")
    terms = np.log1p(np.abs(ref - cand))
    if weights is None:
        return float(terms.mean())
    w = np.asarray(weights, dtype=float)
    if w.shape != ref.shape:
        raise LobefitError("weights must match the number of points")
    return float(np.mean(w * terms))


def detect_critical_points(reference: BoundarySamples, weight: float = 2.0) -> np.ndarray:
    """Weights emphasising interior local extrema (lobe peaks and valleys), mean 1."""
    d = np.asarray(reference.depths, dtype=float)
    w = np.ones(d.size)
    if d.size >= 3:
        left, mid, right = d[:-2], d[1:-1], d[2:]
        extreme = ((mid < left) & (mid < right)) | ((mid > left) & (mid > right))
        w[1:-1][extreme] = weight
    return w / w.mean()


def fd_sensitivity(params: ParameterVector, objective: Callable[[ParameterVector], float], fd_step: float = 1e-4,
                   base: float | None = None) -> np.ndarray:
    """Forward-difference gradient of ``objective`` with a relative step.

    One extra evaluation per free parameter; tied parameters move together
    because they share one slot.  A non-finite perturbed value shrinks the
    step tenfold, at most three times.
    """
    f0 = objective(params) if base is None else base
    if not math.isfinite(f0):
        raise NumericalError("objective is not finite at the expansion point")
    p = np.asarray(params.values)
    grad = np.zeros(p.size)
    for i in range(p.size):
        h = fd_step
        for _ in range(4):
            q = p.copy()
            q[i] = p[i] * (1 + h)
            f = objective(params.with_values(q))
            if math.isfinite(f):
                grad[i] = (f - f0) / (p[i] * h)
                break
            h /= 10
        else:
            raise NumericalError(f"objective not finite around parameter {i} after shrinking the step")
    return grad


def newton_step(params: ParameterVector, objective_value: float, sensitivity, pace: float = 1.0) -> ParameterVector:
    """p_i <- p_i - f * S_i / |S|^2 * pace for every free parameter."""
    s = np.asarray(sensitivity, dtype=float)
    norm2 = float(s @ s)
    if objective_value == 0:
        return params
    if norm2 == 0:
        raise ZeroGradient("sensitivity vanishes while the objective does not")
    return params.with_values(np.asarray(params.values) - objective_value * s / norm2 * pace)


class ZeroGradient(LobefitError):
    pass


def random_guesses(center: ParameterVector, spread: float, count: int, seed) -> list[ParameterVector]:
    """``count`` guesses with every free value drawn uniformly within +/- ``spread``."""
    rng = np.random.default_rng(seed)
    c = np.asarray(center.values)
    out = []
    while len(out) < count:
        v = c * rng.uniform(1 - spread, 1 + spread, size=c.size)
        try:
            unflatten(center.with_values(v))
        except LobefitError:
            continue
        out.append(center.with_values(v))
    return out


# -- fitting loop ---------------------------------------------------------


class _Problem:
    """Objective evaluation for one reference boundary."""

    def __init__(self, reference, cutting, weights, sld_options):
        self.reference = reference
        self.cutting = cutting
        self.weights = weights
        self.sld_options = dict(sld_options)
        self.speed_range = (float(reference.speeds[0]), float(reference.speeds[-1]))
        if self.speed_range[0] == self.speed_range[1]:
            s = self.speed_range[0]
            self.speed_range = (s * (1 - 1e-6), s * (1 + 1e-6))
        self.evaluations = 0

    def depths(self, params: ParameterVector) -> np.ndarray:
        dyn = unflatten(params)
        curve = build_sld(dyn, self.cutting, self.speed_range, **self.sld_options)
        return sample_at_speeds(curve, self.reference.speeds).depths

    def __call__(self, params: ParameterVector) -> float:
        self.evaluations += 1
        try:
            d = self.depths(params)
        except (EmptyCurveError, SpeedRangeError, LobefitError):
            return math.inf
        return mlae(self.reference, d, self.weights)


def _clamp(values, fields, floors):
    v = np.array(values, dtype=float)
    for i, f in enumerate(fields):
        if f == "damping_ratio":
            v[i] = min(max(v[i], DAMPING_BOUNDS[0]), DAMPING_BOUNDS[1])
        elif not v[i] >= floors[i]:
            v[i] = floors[i]
    return v


class _Run:
    def __init__(self, guess: ParameterVector, problem: _Problem, options: FitOptions, index: int = 0):
        self.rng = np.random.default_rng([options.seed, index])
        self.template = guess
        self.problem = problem
        self.options = options
        self.fields = [guess.field_of(j) for j in range(guess.m)]
        start = np.asarray(guess.values)
        self.floors = POSITIVE_FLOOR * start
        self.scale = start.copy() if options.scaled else np.ones_like(start)
        self.values = _clamp(start, self.fields, self.floors)
        self.objective = problem(guess.with_values(self.values))
        self.start_objective = self.objective
        self.best_values, self.best_objective = self.values.copy(), self.objective
        self.history: list[HistoryEntry] = []
        self.best_trace: list[float] = []
        self.iteration = 0
        self.last_reset = 0
        self.converged = False
        self.jump_ratios = np.full(start.size, options.jump_ratio)
        self.trapped = False

    def pv(self, values) -> ParameterVector:
        return self.template.with_values(values)

    def _evaluate(self, values) -> float:
        return self.problem(self.pv(values))

    def _note(self, objective, values, event):
        self.history.append(HistoryEntry(self.iteration, float(objective), tuple(map(float, values)), event))

    def _accept(self, values, objective):
        self.values, self.objective = values, objective
        if objective < self.best_objective:
            self.best_values, self.best_objective = values.copy(), objective

    def iterate(self, stop: int, yield_when_trapped: bool = False) -> None:
        opts = self.options
        while self.iteration < stop and not (yield_when_trapped and self.trapped):
            self._note(self.objective, self.values, "step")
            self.best_trace.append(self.best_objective)
            if self.objective < opts.objective_threshold:
                self.converged = True
                return
            if self._stalled():
                self._jump_phase()
            else:
                self._newton()
            self.iteration += 1

    def _stalled(self, improvement: float | None = None, since_reset: bool = True) -> bool:
        """Best objective improved by less than ``improvement`` (relative) over the window."""
        j = self.options.stall_window
        if len(self.best_trace) <= j or (since_reset and self.iteration - self.last_reset < j):
            return False
        if improvement is None:
            improvement = self.options.stall_improvement
        then = self.best_trace[-1 - j]
        return then - self.best_objective < improvement * then

    def _newton(self) -> None:
        opts = self.options
        scaled = self.pv(self.values / self.scale)

        def scaled_objective(pv):
            return self._evaluate(np.asarray(pv.values) * self.scale)

        try:
            grad = fd_sensitivity(scaled, scaled_objective, opts.fd_step, base=self.objective)
            pace = opts.pace
            fallback = None
            for _ in range(opts.backtracks + 1):
                stepped = np.asarray(newton_step(scaled, self.objective, grad, pace).values)
                here = np.asarray(scaled.values)
                delta = stepped - here
                longest = np.max(np.abs(delta))
                if longest > opts.max_step:
                    delta *= opts.max_step / longest
                cand = _clamp((here + delta) * self.scale, self.fields, self.floors)
                f = self._evaluate(cand)
                if math.isfinite(f):
                    if f < self.objective or not opts.backtracks:
                        log.debug("iteration %d: newton step, pace %g, objective %g -> %g",
                                  self.iteration, pace, self.objective, f)
                        self._accept(cand, f)
                        return
                    if fallback is None or f < fallback[1]:
                        fallback = (cand, f)
                pace /= 2
            if fallback is None:
                raise NumericalError(f"objective stays non-finite after step shrinking at iteration {self.iteration}")
            self._jump_phase()
        except ZeroGradient:
            self._jump_phase()

    def _jump_phase(self) -> None:
        """Trial jumps around the best point so far; the best improvement is kept.

        Each parameter is pushed by +/- its own ratio, then all improving
        singles are combined, then pairs of the same kind trade against each
        other, then random subsets move together.  A ratio
        doubles (up to ``jump_ratio``) when its parameter improved alone and
        shrinks otherwise, so jump sizes follow the local sensitivity.
        """
        r = self.jump_ratios
        base, f_base = self.best_values.copy(), self.best_objective
        best_cand, best_f = None, f_base
        improving = {}
        for j in range(base.size):
            for factor in (1 + r[j], 1 - r[j]):
                cand = base.copy()
                cand[j] *= factor
                cand = _clamp(cand, self.fields, self.floors)
                f = self._evaluate(cand)
                ok = f < f_base
                self._note(f, cand, "jump-accepted" if ok else "jump-rejected")
                if ok and f < improving.get(j, (None, math.inf))[1]:
                    improving[j] = (factor, f)
                if ok and f < best_f:
                    best_cand, best_f = cand, f
        combos = []
        if len(improving) > 1:
            combo = np.ones(base.size)
            for j, (factor, _) in improving.items():
                combo[j] = factor
            combos.append(combo)
        # exchange moves: two parameters of the same kind pushed in opposite senses
        for i in range(base.size):
            for j in range(i + 1, base.size):
                if self.fields[i] == self.fields[j]:
                    for sign in (1.0, -1.0):
                        combo = np.ones(base.size)
                        combo[i], combo[j] = 1 + sign * r[i], 1 - sign * r[j]
                        combos.append(combo)
        count = base.size if self.options.random_jumps is None else self.options.random_jumps
        for _ in range(count):
            # a random subset of parameters, each pushed up or down
            signs = self.rng.choice((-1.0, 0.0, 1.0), size=base.size)
            if not signs.any():
                signs[self.rng.integers(base.size)] = self.rng.choice((-1.0, 1.0))
            combos.append(1 + r * signs)
        for combo in combos:
            cand = _clamp(base * combo, self.fields, self.floors)
            f = self._evaluate(cand)
            ok = f < f_base
            self._note(f, cand, "jump-accepted" if ok else "jump-rejected")
            if ok and f < best_f:
                best_cand, best_f = cand, f
        if best_cand is not None:
            # pattern move: keep going the way that worked, doubling each time
            step = best_cand / base
            for _ in range(self.options.pattern_moves):
                step = step * step
                cand = _clamp(base * step, self.fields, self.floors)
                f = self._evaluate(cand)
                ok = f < best_f
                self._note(f, cand, "jump-accepted" if ok else "jump-rejected")
                if not ok:
                    break
                best_cand, best_f = cand, f
        log.debug("iteration %d: jump phase at ratios %s, objective %g -> %g",
                  self.iteration, np.array2string(r, precision=2), f_base, best_f)
        opts = self.options
        for j in range(base.size):
            if j in improving:
                r[j] = min(opts.jump_ratio, 2 * r[j])
            else:
                r[j] = max(r[j] * opts.jump_shrink, opts.min_jump_ratio)
        if best_cand is not None:
            self._accept(best_cand, best_f)
        else:
            self.values, self.objective = base, f_base
            self.trapped = r.max() <= opts.trap_ratio and self._stalled(opts.trap_improvement, since_reset=False)
        self.last_reset = self.iteration


def fit(reference: BoundarySamples, cutting: CuttingParams, options: FitOptions) -> FitReport:
    """Identify structural dynamics parameters that reproduce ``reference``.

    All initial guesses run for ``burn_in`` iterations and the best one
    continues.  When it settles in a local minimum (a failed jump phase at
    a jump ratio of ``trap_ratio`` or less, with the objective stalled) and
    budget remains, the next-best guess resumes instead.  ``max_iterations``
    bounds the iterations of the burn-in plus all continued runs.  The
    reported parameters are the best ones seen.

    Raises
    ------
    UnfittableError
        If no initial guess produces a lobe diagram covering the reference speeds.
    """
    if options.weight_scheme == "critical":
        weights = detect_critical_points(reference, options.critical_weight)
    elif reference.weights is not None:
        weights = reference.weights / reference.weights.mean()
    else:
        weights = None
    problem = _Problem(reference, cutting, weights, options.sld_options)

    runs = [_Run(g, problem, options, i) for i, g in enumerate(options.initial_guesses)]
    runs = [r for r in runs if math.isfinite(r.objective)]
    if not runs:
        raise UnfittableError("no initial guess yields a stability boundary over the reference speeds")

    if options.max_iterations == 0:
        best = min(runs, key=lambda r: r.objective)
        return FitReport(best.pv(best.values), best.objective, [], False, "iteration budget is zero", 0)

    burn = min(options.burn_in, options.max_iterations) if len(runs) > 1 else 0
    for run in runs:
        run.iterate(burn)
        if run.converged:
            break
    ranked = sorted(runs, key=lambda r: (not r.converged, r.best_objective))
    survivor = ranked[0]
    history = list(survivor.history)
    for run in ranked[1:]:
        history.append(HistoryEntry(survivor.iteration, float(run.best_objective),
                                    tuple(map(float, run.best_values)), "restart-pruned"))
    # Continue the best run.  Should it settle in a local minimum while
    # budget remains, the next-best burn-in run resumes from where it stopped.
    spent = survivor.iteration
    best = survivor
    for position, run in enumerate(ranked):
        if best.converged or spent >= options.max_iterations:
            break
        if position:
            run.iteration = run.last_reset = spent
            run.trapped = False
            mark = len(run.history)
            run._note(run.objective, run.values, "restart-resumed")
        else:
            mark = len(run.history)
        run.iterate(options.max_iterations, yield_when_trapped=position + 1 < len(ranked))
        history.extend(run.history[mark:])
        spent = run.iteration
        if (not best.converged and run.converged) or run.best_objective < best.best_objective:
            best = run

    if best.converged:
        reason = f"objective below {options.objective_threshold:g}"
    else:
        reason = f"reached {options.max_iterations} iterations"
    log.info("fit finished after %d iterations (%d objective evaluations): %s",
             spent, problem.evaluations, reason)
    return FitReport(
        best.pv(best.best_values),
        float(best.best_objective),
        history,
        best.converged,
        reason,
        spent,
    )
