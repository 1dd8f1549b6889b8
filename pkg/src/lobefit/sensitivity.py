"""How strongly the stability boundary reacts to each modal parameter.

Two estimates are offered.  :func:`sweep` scales one parameter at a time
over a fixed grid of ratios around a single base point.  :func:`mc_sensitivity`
draws many base points from a neighbourhood of the nominal parameters and,
at each one, measures the boundary change caused by a small nudge of every
parameter in turn.  Both score a change by the mean squared depth
difference (mm^2) over a common speed grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LobefitError
from .model import CuttingParams, ParameterVector, unflatten
from .zoa import build_sld, sample_at_speeds

DEFAULT_LIMIT = 0.20
DEFAULT_STEP = 0.05


def mse(reference, modified) -> float:
    """Mean squared difference of two depth lists (mm^2)."""
    a = np.asarray(reference, dtype=float)
    b = np.asarray(modified, dtype=float)
    if a.shape != b.shape:
        raise LobefitError(f"length mismatch: {a.size} vs {b.size} depths")
    return float(np.mean((a - b) ** 2))


def perturbation_grid(limit: float = DEFAULT_LIMIT, step: float = DEFAULT_STEP) -> np.ndarray:
    """Symmetric ratios -limit .. +limit in increments of ``step``, zero included."""
    if not (limit > 0 and step > 0):
        raise LobefitError("limit and step must be > 0")
    n = int(round(limit / step))
    if not math.isclose(n * step, limit, rel_tol=1e-9):
        raise LobefitError(f"limit {limit} is not a multiple of step {step}")
    return np.round(np.arange(-n, n + 1) * step, 12)


def _depths(params: ParameterVector, cutting: CuttingParams, speeds, sld_options) -> np.ndarray:
    # the envelope is evaluated at the speeds themselves, with no interpolation grid
    opts = {k: v for k, v in sld_options.items() if k != "grid_points"}
    curve = build_sld(unflatten(params), cutting, (float(speeds[0]), float(speeds[-1])), speeds=speeds, **opts)
    return sample_at_speeds(curve, speeds).depths


def _check_speeds(speeds) -> np.ndarray:
    s = np.asarray(speeds, dtype=float).reshape(-1)
    if s.size < 2 or np.any(np.diff(s) <= 0):
        raise LobefitError("speed grid needs at least two strictly increasing speeds")
    return s


def _scaled(params: ParameterVector, j: int, ratio: float) -> ParameterVector:
    v = np.array(params.values)
    v[j] *= 1 + ratio
    return params.with_values(v)


@dataclass
class SweepReport:
    """MSE of every one-at-a-time perturbation.

    ``values[j, e]`` belongs to parameter ``labels[j]`` scaled by
    ``1 + grid[e]``; cells whose boundary could not be built hold NaN and
    are listed in ``missing`` with the reason.
    """

    labels: list[str]
    grid: np.ndarray
    base: ParameterVector
    speeds: np.ndarray
    values: np.ndarray
    missing: dict[tuple[int, float], str] = field(default_factory=dict)


def sweep(params: ParameterVector, cutting: CuttingParams, grid=None, speeds=None, sld_options=None) -> SweepReport:
    """Scale each free parameter alone by every ratio in ``grid`` and score the boundary change.

    Raises
    ------
    LobefitError
        If a perturbed parameter set is not physical, or the base boundary
        cannot be built.
    """
    grid = perturbation_grid() if grid is None else np.asarray(grid, dtype=float)
    if speeds is None:
        raise LobefitError("a speed grid is required")
    speeds = _check_speeds(speeds)
    opts = dict(sld_options or {})
    base = _depths(params, cutting, speeds, opts)
    values = np.zeros((params.m, grid.size))
    missing = {}
    for j in range(params.m):
        for e, ratio in enumerate(grid):
            if ratio == 0:
                continue
            moved = _scaled(params, j, float(ratio))
            unflatten(moved)  # non-physical perturbations are a caller error
            try:
                values[j, e] = mse(base, _depths(moved, cutting, speeds, opts))
            except LobefitError as exc:
                values[j, e] = np.nan
                missing[(j, float(ratio))] = str(exc)
    return SweepReport(params.labels(), grid, params, speeds, values, missing)


@dataclass
class McReport:
    """Per-parameter sensitivity over random base points.

    ``samples`` holds one row of MSE values per path that produced a
    boundary; ``mean`` and ``std`` (population) aggregate those rows.
    """

    labels: list[str]
    mean: np.ndarray
    std: np.ndarray
    paths: int
    neighborhood: float
    inner_ratio: float
    seed: int
    samples: np.ndarray
    redraws: int = 0
    skipped: list[int] = field(default_factory=list)


def _draw(params: ParameterVector, t: float, rng, max_tries: int = 1000):
    """Uniform draw within +/- t of each value; redraws non-physical sets."""
    centre = np.asarray(params.values)
    for tries in range(max_tries):
        drawn = params.with_values(centre * rng.uniform(1 - t, 1 + t, size=centre.size))
        try:
            unflatten(drawn)
        except LobefitError:
            continue
        return drawn, tries
    raise LobefitError(f"no physical parameter set found in {max_tries} draws")


def mc_path(params: ParameterVector, cutting: CuttingParams, t: float, inner_ratio: float, seed: int, path: int,
            speeds, sld_options=None):
    """One Monte Carlo path: (MSE per parameter, redraw count).

    Each path owns the generator ``default_rng([seed, path])`` so any subset
    of paths can be evaluated in any order.
    """
    rng = np.random.default_rng([seed, path])
    drawn, redraws = _draw(params, t, rng)
    opts = dict(sld_options or {})
    base = _depths(drawn, cutting, speeds, opts)
    row = np.array([mse(base, _depths(_scaled(drawn, j, inner_ratio), cutting, speeds, opts)) for j in range(drawn.m)])
    return row, redraws


def mc_sensitivity(params: ParameterVector, cutting: CuttingParams, t: float = 0.1, paths: int = 1000,
                   inner_ratio: float = 0.01, seed: int = 0, speeds=None, sld_options=None) -> McReport:
    """Mean and spread of one-at-a-time sensitivities over a random neighbourhood.

    Paths whose boundary cannot be built are skipped and listed.
    """
    if not 0 <= t < 0.5:
        raise LobefitError("neighbourhood width must lie in [0, 0.5)")
    if paths < 1:
        raise LobefitError("at least one path is required")
    if not inner_ratio > 0:
        raise LobefitError("inner ratio must be > 0")
    if speeds is None:
        raise LobefitError("a speed grid is required")
    speeds = _check_speeds(speeds)
    rows, skipped, redraws = [], [], 0
    for path in range(paths):
        try:
            row, extra = mc_path(params, cutting, t, inner_ratio, seed, path, speeds, sld_options)
        except LobefitError:
            skipped.append(path)
            continue
        rows.append(row)
        redraws += extra
    samples = np.array(rows).reshape(len(rows), params.m)
    if rows:
        mean, std = samples.mean(axis=0), samples.std(axis=0)
    else:
        mean = std = np.full(params.m, np.nan)
    return McReport(params.labels(), mean, std, paths, t, inner_ratio, seed, samples, redraws, skipped)
