"""Brute-force stability check used to validate the lobe engine.

At a fixed spindle speed and depth the closed-loop characteristic function

    D(w) = det[I - (N a Kt / 4 pi) (1 - exp(-i w T)) A Phi(i w)]

(N flutes, depth a, tangential coefficient Kt, tooth period T, averaged
directional matrix A, diagonal compliance matrix Phi) is sampled along the positive frequency axis.  D(0) = 1 and D -> 1 as
w -> inf, and the open loop has no right-half-plane poles, so the cut is
unstable exactly when the locus of D winds around the origin.  Nothing here
uses the eigenvalue quadratic or the lobe phase bookkeeping.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import BracketError, LobefitError, ResolutionError
from .model import CuttingParams, DirectionalDynamics
from .zoa import directional_factors, frf

DEFAULT_POINTS = 6000
MAX_PHASE_STEP = 0.5 * math.pi
_REFINE_ROUNDS = 8
_REFINE_SPLIT = 8


def default_scan(dynamics: DirectionalDynamics, points: int = DEFAULT_POINTS):
    """Oracle scan (low Hz, high Hz, points): from 0 to 4x the highest mode."""
    return 0.0, 4.0 * max(m.natural_frequency for m in dynamics.all_modes), points


def _char_fn(omega, dynamics, cutting, factors, period, depth_m):
    axx, axy, ayx, ayy = factors
    px = frf(dynamics.x_modes, omega)
    py = frf(dynamics.y_modes, omega)
    gain = -(cutting.flute_count * depth_m * cutting.kt_si / (4 * np.pi)) * (1 - np.exp(-1j * omega * period))
    m11 = 1 + gain * axx * px
    m12 = gain * axy * py
    m21 = gain * ayx * px
    m22 = 1 + gain * ayy * py
    return m11 * m22 - m12 * m21


def winding_number(dynamics, cutting, speed, depth, freq_scan=None) -> int:
    """Net turns of the characteristic locus around 0 over the scanned band."""
    if depth < 0:
        raise LobefitError("depth must be >= 0")
    if depth == 0:
        return 0
    lo, hi, points = freq_scan or default_scan(dynamics)
    factors = directional_factors(cutting.radial_ratio, cutting.start_rad, cutting.exit_rad)
    period = 60.0 / (speed * cutting.flute_count)
    depth_m = depth * 1e-3

    def fn(w):
        return _char_fn(w, dynamics, cutting, factors, period, depth_m)

    omega = 2 * np.pi * np.linspace(lo, hi, int(points))
    d = fn(omega)
    step = np.angle(d[1:] / d[:-1])
    for _ in range(_REFINE_ROUNDS):
        bad = np.flatnonzero(np.abs(step) > MAX_PHASE_STEP)
        if bad.size == 0:
            break
        # resample each offending interval finely and replace its increment
        frac = np.linspace(0.0, 1.0, _REFINE_SPLIT + 1)
        sub_w = omega[bad, None] + (omega[bad + 1] - omega[bad])[:, None] * frac
        sub_d = fn(sub_w)
        sub_step = np.angle(sub_d[:, 1:] / sub_d[:, :-1])
        keep = np.ones(step.size, dtype=bool)
        keep[bad] = False
        omega = np.concatenate([omega[:-1][keep], sub_w[:, :-1].ravel(), omega[-1:]])
        steps_new = np.concatenate([step[keep], sub_step.ravel()])
        order = np.argsort(omega[:-1], kind="stable")
        omega = np.concatenate([omega[:-1][order], omega[-1:]])
        step = steps_new[order]
    else:
        if np.any(np.abs(step) > MAX_PHASE_STEP):
            raise ResolutionError(
                f"frequency scan cannot resolve the characteristic locus at "
                f"{speed:g} rev/min, depth {depth:g} mm"
            )
    total = step.sum() + np.angle(d[0])
    return int(round(total / (2 * np.pi)))


def is_stable(dynamics: DirectionalDynamics, cutting: CuttingParams, speed: float, depth: float, freq_scan=None) -> bool:
    """True when the cut at (speed rev/min, depth mm) is free of chatter."""
    return winding_number(dynamics, cutting, speed, depth, freq_scan) == 0


def find_bracket(dynamics, cutting, speed, start=1.0, freq_scan=None, max_doublings=40):
    """(stable, unstable) depths in mm found by doubling from ``start``."""
    lo, hi = 0.0, float(start)
    for _ in range(max_doublings):
        if not is_stable(dynamics, cutting, speed, hi, freq_scan):
            return lo, hi
        lo, hi = hi, 2 * hi
    raise BracketError(f"no unstable depth found below {hi:g} mm at {speed:g} rev/min")


def depth_limit_bisect(dynamics, cutting, speed, bracket, tol=1e-4, freq_scan=None) -> float:
    """Limiting depth [mm] at one spindle speed by bisection on :func:`is_stable`."""
    lo, hi = map(float, bracket)
    if not (0 <= lo < hi):
        raise BracketError(f"invalid bracket {bracket}")
    if not is_stable(dynamics, cutting, speed, lo, freq_scan):
        raise BracketError(f"lower bracket {lo:g} mm is already unstable")
    if is_stable(dynamics, cutting, speed, hi, freq_scan):
        raise BracketError(f"upper bracket {hi:g} mm is stable")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        try:
            stable = is_stable(dynamics, cutting, speed, mid, freq_scan)
        except ResolutionError:
            # the locus grazes the origin: mid is on the boundary
            return mid
        if stable:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bisection_calls(bracket, tol) -> int:
    lo, hi = bracket
    return max(0, math.ceil(math.log2((hi - lo) / tol)))
