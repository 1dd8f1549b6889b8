"""Reference configurations: three synthetic benchmark cases and a
four-flute aluminium slotting case.

Stiffnesses are tabulated in MN/m.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import CuttingParams, DirectionalDynamics, Mode


def _dyn(fx, kx, zx, fy, ky, zy) -> DirectionalDynamics:
    return DirectionalDynamics((Mode(fx, kx * 1e6, zx),), (Mode(fy, ky * 1e6, zy),))


@dataclass(frozen=True)
class Case:
    name: str
    target: DirectionalDynamics
    predicted: DirectionalDynamics | None
    cutting: CuttingParams
    speed_range: tuple[float, float]


EX1 = Case(
    "ex1",
    _dyn(903.0, 12.53, 0.0300, 903.0, 12.53, 0.0300),
    _dyn(910.4, 13.44, 0.0287, 910.4, 13.44, 0.0286),
    CuttingParams(556.31, 0.404, 2, 0.0, 180.0),
    (5000.0, 25000.0),
)

EX2 = Case(
    "ex2",
    _dyn(500.0, 8.00, 0.0200, 500.0, 8.00, 0.0200),
    _dyn(503.5, 8.66, 0.0196, 503.5, 8.66, 0.0196),
    CuttingParams(695.0, 0.404, 4, 0.0, 180.0),
    (2000.0, 10000.0),
)

EX3 = Case(
    "ex3",
    _dyn(900.0, 9.00, 0.0200, 950.0, 10.00, 0.0100),
    _dyn(906.8, 9.49, 0.0183, 947.7, 9.56, 0.0104),
    CuttingParams(2173.0, 0.268, 3, 126.9, 180.0),
    (5000.0, 25000.0),
)

CASES = {c.name: c for c in (EX1, EX2, EX3)}

# four-flute carbide end mill, Al 7075-T651, slotting
SLOT_CUTTING = CuttingParams(1110.0, 0.22, 4, 0.0, 180.0)
SLOT_SPEED_RANGE = (5500.0, 6500.0)
SLOT_STATIC = DirectionalDynamics(
    (Mode(3890.0, 22.60e6, 0.0196), Mode(4182.0, 15.40e6, 0.0170)),
    (Mode(3872.0, 23.40e6, 0.0220), Mode(4127.0, 25.10e6, 0.0177)),
)
SLOT_IN_PROCESS = DirectionalDynamics.symmetric(Mode(4103.4, 11.65e6, 0.0269))
SLOT_START = DirectionalDynamics.symmetric(Mode(4182.0, 15.40e6, 0.0170))
