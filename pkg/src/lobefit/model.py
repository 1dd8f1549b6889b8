"""Domain types shared by every lobefit module.

Values are held in the engineering units used on the shop floor (Hz, N/m,
N/mm^2, degrees, rev/min, mm); properties expose the SI quantities the
numerical code consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import LobefitError, TieSpecError, UnitError

FIELDS = ("natural_frequency", "stiffness", "damping_ratio")
DIRECTIONS = ("x", "y")
_SHORT = {"natural_frequency": "fn", "stiffness": "k", "damping_ratio": "xi"}


@dataclass(frozen=True)
class Mode:
    natural_frequency: float  # Hz
    stiffness: float  # N/m
    damping_ratio: float

    def __post_init__(self):
        for name in FIELDS:
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (math.isfinite(self.natural_frequency) and self.natural_frequency > 0):
            raise LobefitError(f"natural frequency must be > 0, got {self.natural_frequency}")
        if not (math.isfinite(self.stiffness) and self.stiffness > 0):
            raise LobefitError(f"stiffness must be > 0, got {self.stiffness}")
        if not 0 < self.damping_ratio < 1:
            raise LobefitError(f"damping ratio must lie in (0, 1), got {self.damping_ratio}")

    @property
    def omega_n(self) -> float:
        return 2 * math.pi * self.natural_frequency


@dataclass(frozen=True)
class DirectionalDynamics:
    """Modes of the tool tip in the feed (x) and cross-feed (y) directions.

    Modes are kept sorted by ascending natural frequency; that order is the
    canonical order used when flattening into a parameter vector.
    """

    x_modes: tuple[Mode, ...]
    y_modes: tuple[Mode, ...]

    def __post_init__(self):
        for name in ("x_modes", "y_modes"):
            modes = tuple(getattr(self, name))
            if not modes:
                raise LobefitError(f"{name} must hold at least one mode")
            modes = tuple(sorted(modes, key=lambda m: m.natural_frequency))
            object.__setattr__(self, name, modes)

    @classmethod
    def symmetric(cls, mode: Mode | Sequence[Mode]) -> "DirectionalDynamics":
        modes = (mode,) if isinstance(mode, Mode) else tuple(mode)
        return cls(modes, modes)

    def modes(self, direction: str) -> tuple[Mode, ...]:
        return self.x_modes if direction == "x" else self.y_modes

    @property
    def all_modes(self) -> tuple[Mode, ...]:
        return self.x_modes + self.y_modes

    def scaled_stiffness(self, factor: float) -> "DirectionalDynamics":
        def scale(ms):
            return tuple(Mode(m.natural_frequency, m.stiffness * factor, m.damping_ratio) for m in ms)

        return DirectionalDynamics(scale(self.x_modes), scale(self.y_modes))

    def swapped(self) -> "DirectionalDynamics":
        return DirectionalDynamics(self.y_modes, self.x_modes)


@dataclass(frozen=True)
class CuttingParams:
    tangential_coefficient: float  # N/mm^2
    radial_ratio: float
    flute_count: int
    start_angle: float  # deg
    exit_angle: float  # deg

    def __post_init__(self):
        if not self.tangential_coefficient > 0:
            raise LobefitError("tangential coefficient must be > 0")
        if not self.radial_ratio > 0:
            raise LobefitError("radial ratio must be > 0")
        if int(self.flute_count) != self.flute_count or self.flute_count < 1:
            raise LobefitError("flute count must be an integer >= 1")
        object.__setattr__(self, "flute_count", int(self.flute_count))
        if not 0 <= self.start_angle < self.exit_angle <= 360:
            raise LobefitError(
                f"immersion angles must satisfy 0 <= start < exit <= 360, "
                f"got {self.start_angle}, {self.exit_angle}"
            )

    @property
    def kt_si(self) -> float:
        return convert_units(self.tangential_coefficient, "N/mm^2", "N/m^2")

    @property
    def start_rad(self) -> float:
        return math.radians(self.start_angle)

    @property
    def exit_rad(self) -> float:
        return math.radians(self.exit_angle)

    def scaled_kt(self, factor: float) -> "CuttingParams":
        return CuttingParams(
            self.tangential_coefficient * factor,
            self.radial_ratio,
            self.flute_count,
            self.start_angle,
            self.exit_angle,
        )


@dataclass(frozen=True)
class BoundarySamples:
    """Points (spindle speed [rev/min], limiting depth [mm]) on a stability boundary."""

    speeds: np.ndarray
    depths: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        speeds = np.array(self.speeds, dtype=float).reshape(-1)
        depths = np.array(self.depths, dtype=float).reshape(-1)
        if speeds.size < 1:
            raise LobefitError("boundary needs at least one point")
        if speeds.shape != depths.shape:
            raise LobefitError("speeds and depths differ in length")
        if not np.all(np.isfinite(speeds)) or np.any(speeds <= 0):
            raise LobefitError("spindle speeds must be finite and > 0")
        if np.any(np.diff(speeds) <= 0):
            raise LobefitError("spindle speeds must be strictly increasing")
        if not np.all(np.isfinite(depths)) or np.any(depths <= 0):
            raise LobefitError("depths must be finite and > 0")
        speeds.flags.writeable = False
        depths.flags.writeable = False
        object.__setattr__(self, "speeds", speeds)
        object.__setattr__(self, "depths", depths)
        if self.weights is not None:
            w = np.array(self.weights, dtype=float).reshape(-1)
            if w.shape != speeds.shape:
                raise LobefitError("weights must match the number of points")
            if np.any(w < 0) or not np.any(w > 0):
                raise LobefitError("weights must be >= 0 with at least one > 0")
            w.flags.writeable = False
            object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.speeds.size

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.speeds.tolist(), self.depths.tolist()))


# -- parameter vectors ----------------------------------------------------

Slot = tuple  # (direction, mode index, field name)


@dataclass(frozen=True)
class ParameterVector:
    """Free structural parameters in canonical order.

    ``layout`` lists every Mode field of the dynamics it came from;
    ``groups[j]`` holds the layout indices that share ``values[j]``.
    """

    values: tuple[float, ...]
    layout: tuple[Slot, ...]
    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.values) != len(self.groups):
            raise LobefitError("one value per parameter group is required")
        seen = sorted(i for g in self.groups for i in g)
        if seen != list(range(len(self.layout))):
            raise LobefitError("parameter groups must partition the layout")

    @property
    def m(self) -> int:
        return len(self.values)

    @property
    def tie_groups(self) -> tuple[tuple[int, ...], ...]:
        return tuple(g for g in self.groups if len(g) > 1)

    def field_of(self, j: int) -> str:
        return self.layout[self.groups[j][0]][2]

    def with_values(self, values: Iterable[float]) -> "ParameterVector":
        return ParameterVector(tuple(values), self.layout, self.groups)

    def as_array(self) -> np.ndarray:
        return np.array(self.values)

    def labels(self) -> list[str]:
        counts = {d: sum(1 for s in self.layout if s[0] == d and s[2] == FIELDS[0]) for d in DIRECTIONS}
        out = []
        for g in self.groups:
            names = []
            for i in g:
                d, idx, f = self.layout[i]
                names.append(d + (str(idx + 1) if counts[d] > 1 else ""))
            short = _SHORT[self.layout[g[0]][2]]
            out.append(f"{short}_{''.join(names)}")
        return out


def _layout(dynamics: DirectionalDynamics) -> tuple[Slot, ...]:
    return tuple(
        (d, i, f) for d in DIRECTIONS for i in range(len(dynamics.modes(d))) for f in FIELDS
    )


def axisymmetric_ties(dynamics: DirectionalDynamics) -> list[list[Slot]]:
    """Tie every x-mode field to the matching y-mode field."""
    if len(dynamics.x_modes) != len(dynamics.y_modes):
        raise TieSpecError("axisymmetric tying needs the same number of modes in x and y")
    return [[("x", i, f), ("y", i, f)] for i in range(len(dynamics.x_modes)) for f in FIELDS]


def flatten(dynamics: DirectionalDynamics, ties: Iterable[Iterable[Slot]] | None = None) -> ParameterVector:
    """Flatten dynamics into a ParameterVector.

    Order is (fn, k, xi) per x-mode, then per y-mode. A tie group takes the
    value of its first slot in canonical order.
    """
    layout = _layout(dynamics)
    index = {s: i for i, s in enumerate(layout)}
    owner: dict[int, int] = {}
    tied: list[list[int]] = []
    for group in ties or ():
        idx = []
        for slot in group:
            slot = tuple(slot)
            if slot not in index:
                raise TieSpecError(f"tie references unknown field {slot}")
            idx.append(index[slot])
        if len({layout[i][2] for i in idx}) > 1:
            raise TieSpecError(f"cannot tie fields of different kinds: {[layout[i] for i in idx]}")
        for i in idx:
            if i in owner:
                raise TieSpecError(f"field {layout[i]} appears in more than one tie group")
            owner[i] = len(tied)
        tied.append(sorted(set(idx)))

    groups: list[tuple[int, ...]] = []
    emitted: set[int] = set()
    for i in range(len(layout)):
        if i in owner:
            g = owner[i]
            if g not in emitted:
                emitted.add(g)
                groups.append(tuple(tied[g]))
        else:
            groups.append((i,))
    values = [getattr(dynamics.modes(layout[g[0]][0])[layout[g[0]][1]], layout[g[0]][2]) for g in groups]
    return ParameterVector(tuple(values), layout, tuple(groups))


def unflatten(params: ParameterVector) -> DirectionalDynamics:
    slots = [0.0] * len(params.layout)
    for v, g in zip(params.values, params.groups):
        for i in g:
            slots[i] = v
    modes: dict[str, dict[int, dict[str, float]]] = {d: {} for d in DIRECTIONS}
    for (d, idx, f), v in zip(params.layout, slots):
        modes[d].setdefault(idx, {})[f] = v
    built = {d: tuple(Mode(**modes[d][i]) for i in sorted(modes[d])) for d in DIRECTIONS}
    return DirectionalDynamics(built["x"], built["y"])


# -- fit bookkeeping ------------------------------------------------------

EVENTS = ("step", "jump-accepted", "jump-rejected", "restart-pruned", "restart-resumed")


@dataclass(frozen=True)
class HistoryEntry:
    iteration: int
    objective: float
    values: tuple[float, ...]
    event: str


@dataclass
class FitReport:
    final: ParameterVector
    objective: float
    history: list[HistoryEntry] = field(default_factory=list)
    converged: bool = False
    reason: str = ""
    iterations: int = 0

    @property
    def dynamics(self) -> DirectionalDynamics:
        return unflatten(self.final)

    def objective_trace(self) -> list[tuple[int, float]]:
        return [(h.iteration, h.objective) for h in self.history if h.event == "step"]


# -- units ----------------------------------------------------------------

_UNITS = {
    # frequency / angular speed, to rad/s
    "rad/s": ("angular", 1.0),
    "Hz": ("angular", 2 * math.pi),
    "rev/min": ("angular", 2 * math.pi / 60.0),
    "rpm": ("angular", 2 * math.pi / 60.0),
    "N/m": ("stiffness", 1.0),
    "MN/m": ("stiffness", 1e6),
    "m": ("length", 1.0),
    "mm": ("length", 1e-3),
    "rad": ("angle", 1.0),
    "deg": ("angle", math.pi / 180.0),
    "N/m^2": ("pressure", 1.0),
    "N/m2": ("pressure", 1.0),
    "Pa": ("pressure", 1.0),
    "N/mm^2": ("pressure", 1e6),
    "N/mm2": ("pressure", 1e6),
    "MPa": ("pressure", 1e6),
}


def convert_units(value, from_unit: str, to_unit: str):
    """Convert between the supported engineering and SI units.

    >>> round(convert_units(903, "Hz", "rad/s"), 2)
    5673.72
    """
    try:
        dim_a, fa = _UNITS[from_unit]
        dim_b, fb = _UNITS[to_unit]
    except KeyError as exc:
        raise UnitError(f"unknown unit {exc.args[0]!r}") from None
    if dim_a != dim_b:
        raise UnitError(f"cannot convert {from_unit} to {to_unit}")
    if from_unit == to_unit or fa == fb:
        return value
    if fa == 1.0:
        return value / fb
    if fb == 1.0:
        return value * fa
    return value * fa / fb


def tooth_period(speed_rpm, flute_count: int):
    """Time between successive teeth [s]."""
    return 60.0 / (np.asarray(speed_rpm, dtype=float) * flute_count)
