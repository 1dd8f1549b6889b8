"""Zero-order (single frequency) stability lobes for milling.

The time-varying directional coefficients are replaced by their average over
the tooth engagement arc, which reduces the regenerative chatter problem to
a 2x2 eigenvalue problem per chatter frequency.  Every eigenvalue with a
negative real part maps, for each lobe index, to one (spindle speed, depth)
point on the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BranchRejected, DegenerateEngagementError, EmptyCurveError, LobefitError, SpeedRangeError
from .model import BoundarySamples, CuttingParams, DirectionalDynamics, Mode

DEFAULT_FREQ_STEPS = 2000
DEFAULT_GRID_POINTS = 2000
DEFAULT_MAX_LOBES = 10
REFINE_JUMP = 0.02
REFINE_BEND = 0.004
REFINE_ROUNDS = 3
REFINE_SPLIT = 8
REFINE_CEILING = 25.0


def frf(modes: Sequence[Mode], omega):
    """Direct compliance [m/N] of a sum of modes at angular frequency ``omega``."""
    omega = np.asarray(omega, dtype=float)
    out = np.zeros(omega.shape, dtype=complex)
    for m in modes:
        wn = m.omega_n
        out = out + (wn * wn / m.stiffness) / (wn * wn - omega * omega + 2j * m.damping_ratio * wn * omega)
    return out if out.ndim else complex(out)


def directional_factors(radial_ratio: float, start_angle: float, exit_angle: float):
    """Averaged directional factors (axx, axy, ayx, ayy) for an engagement arc in radians.

    The factors omit the common (flute count)/(2 pi) prefactor; it is applied in the
    depth formula.
    """
    kr = radial_ratio

    def antiderivative(phi):
        c2, s2 = math.cos(2 * phi), math.sin(2 * phi)
        return (
            0.5 * (c2 - 2 * kr * phi + kr * s2),
            0.5 * (-s2 - 2 * phi + kr * c2),
            0.5 * (-s2 + 2 * phi + kr * c2),
            0.5 * (-c2 - 2 * kr * phi - kr * s2),
        )

    hi = antiderivative(exit_angle)
    lo = antiderivative(start_angle)
    return tuple(h - l for h, l in zip(hi, lo))


def _coefficients(frf_x, frf_y, factors):
    axx, axy, ayx, ayy = factors
    a0 = frf_x * frf_y * (axx * ayy - axy * ayx)
    a1 = axx * frf_x + ayy * frf_y
    return a0, a1


def _roots(a0, a1):
    """Roots of a0 L^2 + a1 L + 1 = 0 without cancellation.

    Returns (r0, r1) with r1 = 1/q always finite and r0 = q/a0 (inf where
    a0 == 0).
    """
    a0 = np.asarray(a0, dtype=complex)
    a1 = np.asarray(a1, dtype=complex)
    sq = np.sqrt(a1 * a1 - 4 * a0)
    sign = np.where((np.conj(a1) * sq).real >= 0, 1.0, -1.0)
    q = -0.5 * (a1 + sign * sq)
    with np.errstate(divide="ignore", invalid="ignore"):
        r0 = np.where(a0 != 0, q / np.where(a0 != 0, a0, 1), np.inf + 0j)
        r1 = 1.0 / q
    return r0, r1


def characteristic_eigenvalues(frf_x: complex, frf_y: complex, factors):
    """Both eigenvalues of the oriented transfer function at one frequency.

    If the quadratic degenerates to a linear equation the second slot is
    ``None``.
    """
    a0, a1 = _coefficients(complex(frf_x), complex(frf_y), factors)
    if a0 == 0 and a1 == 0:
        raise DegenerateEngagementError("characteristic equation has no roots (no engagement)")
    if a0 == 0:
        return complex(-1.0 / a1), None
    r0, r1 = _roots(a0, a1)
    return complex(r0), complex(r1)


@dataclass(frozen=True)
class LobePoint:
    spindle_speed: float  # rev/min
    depth_limit: float  # mm
    chatter_frequency: float  # rad/s
    lobe_index: int


def _depth_and_phase(lam_re, lam_im, flutes, kt_si):
    kappa = lam_im / lam_re
    depth = -2 * np.pi * lam_re * (1 + kappa * kappa) / (flutes * kt_si) * 1e3
    phase_eps = np.pi - 2 * np.arctan(kappa)
    return depth, phase_eps


def lobe_point(lam: complex, chatter_freq: float, lobe_index: int, cutting: CuttingParams) -> LobePoint | None:
    """Map one eigenvalue to a boundary point; ``None`` for the unstable-sign branch."""
    if chatter_freq <= 0 or lobe_index < 0:
        raise LobefitError("chatter frequency must be > 0 and lobe index >= 0")
    lam = complex(lam)
    if lam.real == 0:
        raise BranchRejected("eigenvalue has zero real part")
    if lam.real > 0:
        return None
    depth, phase_eps = _depth_and_phase(lam.real, lam.imag, cutting.flute_count, cutting.kt_si)
    period = (phase_eps + 2 * math.pi * lobe_index) / chatter_freq
    speed = 60.0 / (cutting.flute_count * period)
    return LobePoint(float(speed), float(depth), float(chatter_freq), int(lobe_index))


@dataclass(frozen=True)
class LobeBranch:
    lobe_index: int
    root: int
    chatter_frequencies: np.ndarray  # rad/s
    speeds: np.ndarray  # rev/min, nan where the branch is rejected
    depths: np.ndarray  # mm, nan where the branch is rejected


@dataclass(frozen=True)
class SldCurve:
    branches: tuple[LobeBranch, ...]
    grid_speeds: np.ndarray  # uniform grid plus knots at branch crossings
    grid_depths: np.ndarray  # inf where no branch covers the speed
    speed_range: tuple[float, float]

    @property
    def envelope(self) -> BoundarySamples:
        ok = np.isfinite(self.grid_depths)
        return BoundarySamples(self.grid_speeds[ok], self.grid_depths[ok])


def default_freq_scan(dynamics: DirectionalDynamics, steps: int = DEFAULT_FREQ_STEPS) -> np.ndarray:
    """Chatter frequencies [Hz]: ``steps`` points over 0.8x the lowest to 1.6x
    the highest natural frequency, plus coarse flanks down to 0.1x and up to
    3x.  Partial immersion can chatter well below resonance."""
    fns = [m.natural_frequency for m in dynamics.all_modes]
    lo, hi = 0.8 * min(fns), 1.6 * max(fns)
    flank = max(steps // 5, 2)
    return np.concatenate([
        np.linspace(0.1 * min(fns), lo, flank, endpoint=False),
        np.linspace(lo, hi, steps),
        np.linspace(hi, 3.0 * max(fns), flank + 1)[1:],
    ])


def _scan_hz(freq_scan) -> np.ndarray:
    if isinstance(freq_scan, tuple) and len(freq_scan) == 3:
        lo, hi, steps = freq_scan
        return np.linspace(lo, hi, int(steps))
    scan = np.asarray(freq_scan, dtype=float)
    if scan.ndim != 1 or scan.size < 2 or np.any(np.diff(scan) <= 0) or scan[0] <= 0:
        raise LobefitError("frequency scan must be increasing positive frequencies")
    return scan


def lobes_needed(max_freq_hz: float, flute_count: int, min_speed: float) -> int:
    return max(DEFAULT_MAX_LOBES, math.ceil(60.0 * max_freq_hz / (flute_count * min_speed)) + 1)


def _raw_roots(dynamics, omega, factors):
    fx = frf(dynamics.x_modes, omega)
    fy = frf(dynamics.y_modes, omega)
    a0, a1 = _coefficients(fx, fy, factors)
    if not (np.any(a0 != 0) or np.any(a1 != 0)):
        raise DegenerateEngagementError("characteristic equation has no roots (no engagement)")
    return np.stack(_roots(a0, a1))


def _label(raw):
    """Reorder root pairs so each row is continuous along the scan."""
    r0, r1 = raw
    stay = np.abs(r0[1:] - r0[:-1]) + np.abs(r1[1:] - r1[:-1])
    swap = np.abs(r0[1:] - r1[:-1]) + np.abs(r1[1:] - r0[:-1])
    with np.errstate(invalid="ignore"):
        flip = np.concatenate(([False], np.cumsum(swap < stay) % 2 == 1))
    return np.stack([np.where(flip, r1, r0), np.where(flip, r0, r1)])


def _branch_depths(roots, cutting):
    lam_re, lam_im = roots.real, roots.imag
    valid = np.isfinite(lam_re) & np.isfinite(lam_im) & (lam_re < 0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        depth, phase_eps = _depth_and_phase(lam_re, lam_im, cutting.flute_count, cutting.kt_si)
    return np.where(valid, depth, np.nan), np.where(valid, phase_eps, np.nan)


def _eigen_branches(dynamics, cutting, freq_scan):
    """Eigenvalue branches on the scan, refined where the depth varies quickly.

    Near a zero crossing of an eigenvalue's real part the depth behaves like
    1/x, and a lightly damped mode far from the others is sampled sparsely.
    Intervals are split until adjacent depths differ by less than
    REFINE_JUMP and the second difference stays below REFINE_BEND (relative),
    considering only depths below REFINE_CEILING times the smallest one.
    Intervals where a branch appears or vanishes are split as well.
    """
    omega = 2 * np.pi * _scan_hz(freq_scan)
    factors = directional_factors(cutting.radial_ratio, cutting.start_rad, cutting.exit_rad)
    raw = _raw_roots(dynamics, omega, factors)
    roots = _label(raw)
    for _ in range(REFINE_ROUNDS):
        depth, _ = _branch_depths(roots, cutting)
        low = np.fmin(depth[:, 1:], depth[:, :-1])
        if not np.any(np.isfinite(low)):
            break
        with np.errstate(invalid="ignore"):
            jump = np.abs(np.diff(depth, axis=1)) > REFINE_JUMP * low
            bend = np.abs(depth[:, 2:] - 2 * depth[:, 1:-1] + depth[:, :-2]) > REFINE_BEND * depth[:, 1:-1]
            jump[:, 1:] |= bend
            jump[:, :-1] |= bend
            # a branch that starts or ends between two samples
            edge = np.isfinite(depth[:, 1:]) != np.isfinite(depth[:, :-1])
            low = np.where(edge, np.fmax(depth[:, 1:], depth[:, :-1]), low)
            jump |= edge
            # far above the boundary minimum a wall cannot reach the envelope
            jump &= low < REFINE_CEILING * np.nanmin(low)
        bad = np.flatnonzero(np.any(jump, axis=0))
        if bad.size == 0:
            break
        frac = np.arange(1, REFINE_SPLIT) / REFINE_SPLIT
        extra = (omega[bad, None] + (omega[bad + 1] - omega[bad])[:, None] * frac).ravel()
        merged = np.concatenate([omega, extra])
        order = np.argsort(merged, kind="stable")
        omega = merged[order]
        raw = np.concatenate([raw, _raw_roots(dynamics, extra, factors)], axis=1)[:, order]
        roots = _label(raw)
    return omega, roots


def _envelope(speeds, depths, grid, uniform=True):
    """Pointwise minimum over the polylines (rows of speeds/depths) on an increasing grid.

    Speeds must be NaN wherever the depth is.  Returns (knot speeds, knot
    depths): the grid plus one knot wherever the minimising polyline
    changes between neighbouring grid points, placed at the crossing of the
    two polylines.  Uncovered grid speeds carry inf.
    """
    n_rows, size = speeds.shape[0], grid.size
    g0 = grid[0]
    h = grid[1] - grid[0] if size > 1 else 1.0
    if not uniform:
        h = (grid[-1] - g0) / (size - 1)
    sa, sb = speeds[:, :-1], speeds[:, 1:]
    smin, smax = np.minimum(sa, sb), np.maximum(sa, sb)  # NaN propagates
    # grid indices covered by each segment; NaN segments cover none
    with np.errstate(invalid="ignore"):
        if uniform:
            lo = smin - g0
            lo /= h
            lo -= 1e-9
            np.ceil(lo, out=lo)
            np.maximum(lo, 0, out=lo)
            hi = smax - g0
            hi /= h
            hi += 1e-9
            np.floor(hi, out=hi)
            np.minimum(hi, size - 1, out=hi)
        else:
            lo = np.searchsorted(grid, smin - 1e-9 * h, side="left").astype(float)
            hi = np.searchsorted(grid, smax + 1e-9 * h, side="right") - 1.0
            lo[np.isnan(smin)] = np.nan
        hit = np.flatnonzero((hi >= lo).ravel())
    if hit.size == 0:
        return grid, np.full(size, np.inf)
    row, col = np.divmod(hit, sa.shape[1])
    lo = lo.ravel()[hit].astype(np.int64)
    hi = hi.ravel()[hit].astype(np.int64)
    s0, s1 = sa[row, col], sb[row, col]
    d0, d1 = depths[row, col], depths[row, col + 1]
    per_row = np.full(n_rows * size, np.inf)
    count = hi - lo + 1
    total = int(count.sum())
    seg = np.repeat(np.arange(count.size), count)
    start = np.cumsum(count) - count
    j = lo[seg] + (np.arange(total) - start[seg])
    ss0, ds, dd0, dd1 = s0[seg], (s1 - s0)[seg], d0[seg], d1[seg]
    flat = np.abs(ds) <= 1e-9 * h
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.clip((grid[j] - ss0) / ds, 0.0, 1.0)
    d = np.where(flat, np.minimum(dd0, dd1), dd0 + (dd1 - dd0) * t)
    np.minimum.at(per_row, row[seg] * size + j, d)
    per_row = per_row.reshape(n_rows, size)

    owner = np.argmin(per_row, axis=0)
    env = per_row[owner, np.arange(size)]
    jj = np.flatnonzero((owner[:-1] != owner[1:]) & np.isfinite(env[:-1]) & np.isfinite(env[1:]))
    if jj.size == 0:
        return grid, env
    a, b = owner[jj], owner[jj + 1]
    a0, a1 = per_row[a, jj], per_row[a, jj + 1]
    b0, b1 = per_row[b, jj], per_row[b, jj + 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        gap0, gap1 = a0 - b0, a1 - b1
        tc = gap0 / (gap0 - gap1)
    good = np.isfinite(tc) & (tc > 1e-6) & (tc < 1 - 1e-6)
    if not np.any(good):
        return grid, env
    width = h if uniform else grid[jj[good] + 1] - grid[jj[good]]
    knot_s = grid[jj[good]] + tc[good] * width
    knot_d = (a0 + (a1 - a0) * tc)[good]
    order = np.argsort(np.concatenate([grid, knot_s]), kind="stable")
    return np.concatenate([grid, knot_s])[order], np.concatenate([env, knot_d])[order]


def build_sld(
    dynamics: DirectionalDynamics,
    cutting: CuttingParams,
    speed_range: tuple[float, float],
    freq_scan=None,
    max_lobes: int | None = None,
    grid_points: int = DEFAULT_GRID_POINTS,
    speeds=None,
) -> SldCurve:
    """Build the stability lobe diagram over ``speed_range`` (rev/min).

    Parameters
    ----------
    freq_scan : (low Hz, high Hz, points) or array of Hz, optional
        Chatter frequencies to scan; see :func:`default_freq_scan`.
    max_lobes : int, optional
        Lobe indices 0 .. max_lobes - 1 are generated. By default at least
        10, raised until the lowest lobe reaches the bottom of the speed
        range at 1.6x the highest natural frequency.
    grid_points : int
        Size of the uniform speed grid carrying the envelope.
    speeds : array of rev/min, optional
        Carry the envelope on these increasing speeds instead of the
        uniform grid.  Sampling the curve at exactly these speeds then
        involves no interpolation.

    Raises
    ------
    EmptyCurveError
        If no lobe branch reaches the speed range.
    """
    smin, smax = float(speed_range[0]), float(speed_range[1])
    if not 0 < smin < smax:
        raise LobefitError(f"invalid speed range {speed_range}")
    grid, uniform = None, True
    if speeds is not None:
        grid = np.asarray(speeds, dtype=float).reshape(-1)
        if grid.size < 2 or np.any(np.diff(grid) <= 0) or grid[0] < smin or grid[-1] > smax:
            raise LobefitError("envelope speeds must be increasing and inside the speed range")
        step = np.diff(grid)
        uniform = bool(np.all(np.abs(step - step[0]) <= 1e-9 * step[0]))
    if freq_scan is None:
        freq_scan = default_freq_scan(dynamics)
    omega, roots = _eigen_branches(dynamics, cutting, freq_scan)
    n_t = cutting.flute_count
    if max_lobes is None:
        top = min(omega[-1] / (2 * np.pi), 1.6 * max(m.natural_frequency for m in dynamics.all_modes))
        max_lobes = lobes_needed(top, n_t, smin)

    depth, phase_eps = _branch_depths(roots, cutting)
    valid = np.isfinite(depth)

    k = np.arange(max_lobes)[:, None, None]
    lobe_speeds = 60.0 * omega / (n_t * (phase_eps[None] + 2 * np.pi * k))  # (lobe, root, freq); NaN with depth
    depths = np.broadcast_to(depth[None], lobe_speeds.shape)

    if grid is None:
        grid = np.linspace(smin, smax, int(grid_points))
    grid, env = _envelope(lobe_speeds.reshape(-1, omega.size), depths.reshape(-1, omega.size), grid, uniform)
    if not np.any(np.isfinite(env)):
        raise EmptyCurveError(f"no lobe branch intersects {smin:g}-{smax:g} rev/min")

    branches = tuple(
        LobeBranch(int(li), int(r), omega, lobe_speeds[li, r], depth[r])
        for li in range(max_lobes)
        for r in range(roots.shape[0])
        if np.any(valid[r])
    )
    return SldCurve(branches, grid, env, (smin, smax))


def sample_at_speeds(curve: SldCurve, speeds) -> BoundarySamples:
    """Linear interpolation of the envelope at the requested speeds."""
    speeds = np.asarray(speeds, dtype=float).reshape(-1)
    smin, smax = curve.speed_range
    grid, env = curve.grid_speeds, curve.grid_depths
    rel = 1e-12 * max(abs(smin), abs(smax))
    outside = (speeds < smin - rel) | (speeds > smax + rel)
    if np.any(outside):
        raise SpeedRangeError(speeds[outside])
    idx = np.clip(np.searchsorted(grid, speeds, side="right") - 1, 0, grid.size - 2)
    g0, g1 = grid[idx], grid[idx + 1]
    t = np.clip((speeds - g0) / (g1 - g0), 0.0, 1.0)
    e0, e1 = env[idx], env[idx + 1]
    with np.errstate(invalid="ignore"):
        depths = np.where(t == 0, e0, np.where(t == 1, e1, e0 + (e1 - e0) * t))
    bad = ~np.isfinite(depths)
    if np.any(bad):
        raise SpeedRangeError(speeds[bad])
    return BoundarySamples(speeds, depths)
