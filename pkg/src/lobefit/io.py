"""Files in and out: measured records, exported boundaries, run
configurations and plain-text reports.

Records are comma-separated with the header
``spindle_speed_rpm,depth_mm[,weight]``.  Numbers are written with
``repr`` so a written table reads back bit for bit.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, LobefitError, RecordsError
from .model import BoundarySamples, CuttingParams, DirectionalDynamics, Mode, convert_units

SPEED_COL = "spindle_speed_rpm"
DEPTH_COL = "depth_mm"
WEIGHT_COL = "weight"
REPORT_HEADER = "lobefit-report v1"


# -- records --------------------------------------------------------------


def load_records(path) -> BoundarySamples:
    """Read a records table, sorted by speed.

    Raises
    ------
    RecordsError
        On missing columns, non-numeric cells, non-positive depths, negative
        weights or repeated speeds; the message names the file row.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise RecordsError(f"{path}: cannot read ({exc.strerror})") from None
    reader = csv.reader(text.splitlines())
    header = None
    rows = []
    for lineno, cells in enumerate(reader, start=1):
        cells = [c.strip() for c in cells]
        if not cells or not any(cells) or cells[0].startswith("#"):
            continue
        if header is None:
            header = cells
            missing = [c for c in (SPEED_COL, DEPTH_COL) if c not in header]
            if missing:
                raise RecordsError(f"{path}:{lineno}: missing column(s) {', '.join(missing)}")
            continue
        if len(cells) != len(header):
            raise RecordsError(f"{path}: row {lineno}: expected {len(header)} cells, found {len(cells)}")
        record = dict(zip(header, cells))
        try:
            speed = float(record[SPEED_COL])
            depth = float(record[DEPTH_COL])
            weight = float(record[WEIGHT_COL]) if WEIGHT_COL in record else None
        except ValueError as exc:
            raise RecordsError(f"{path}: row {lineno}: non-numeric cell ({exc})") from None
        if not (math.isfinite(speed) and speed > 0):
            raise RecordsError(f"{path}: row {lineno}: spindle speed must be > 0, got {record[SPEED_COL]}")
        if not (math.isfinite(depth) and depth > 0):
            raise RecordsError(f"{path}: row {lineno}: depth must be > 0, got {record[DEPTH_COL]}")
        if weight is not None and not (math.isfinite(weight) and weight >= 0):
            raise RecordsError(f"{path}: row {lineno}: weight must be >= 0, got {record[WEIGHT_COL]}")
        rows.append((speed, depth, weight, lineno))
    if header is None:
        raise RecordsError(f"{path}: no header row")
    if not rows:
        raise RecordsError(f"{path}: no data rows")
    rows.sort(key=lambda r: r[0])
    for a, b in zip(rows, rows[1:]):
        if a[0] == b[0]:
            raise RecordsError(f"{path}: row {b[3]}: speed {b[0]:g} rev/min repeats row {a[3]}")
    weights = None
    if WEIGHT_COL in header:
        weights = [r[2] for r in rows]
    try:
        return BoundarySamples([r[0] for r in rows], [r[1] for r in rows], weights)
    except LobefitError as exc:
        raise RecordsError(f"{path}: {exc}") from None


def write_records(samples: BoundarySamples, path) -> Path:
    path = Path(path)
    header = [SPEED_COL, DEPTH_COL] + ([WEIGHT_COL] if samples.weights is not None else [])
    lines = [",".join(header)]
    for i in range(len(samples)):
        row = [repr(float(samples.speeds[i])), repr(float(samples.depths[i]))]
        if samples.weights is not None:
            row.append(repr(float(samples.weights[i])))
        lines.append(",".join(row))
    _write(path, "\n".join(lines) + "\n")
    return path


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise LobefitError(f"{path}: cannot write ({exc.strerror})") from None


def curve_samples(curve) -> BoundarySamples:
    """The finite knots of a curve envelope as records."""
    ok = np.isfinite(curve.grid_depths)
    if not ok.any():
        raise LobefitError("curve has no finite envelope points")
    return BoundarySamples(curve.grid_speeds[ok], curve.grid_depths[ok])


def export_curve(curve, path, format: str = "table", overlay: BoundarySamples | None = None) -> Path:
    """Write the envelope of ``curve`` as a records table or an SVG drawing.

    ``overlay`` points (for example measured records) are drawn as markers
    on the SVG and ignored by the table format.
    """
    samples = curve_samples(curve)
    if format == "table":
        return write_records(samples, path)
    if format == "svg":
        return _export_svg(samples, Path(path), overlay)
    raise LobefitError(f"unknown export format {format!r}; use 'table' or 'svg'")


def _export_svg(samples: BoundarySamples, path: Path, overlay) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with plt.rc_context({"svg.hashsalt": "lobefit", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.plot(samples.speeds, samples.depths, color="tab:blue", lw=1.2, label="stability boundary")
        if overlay is not None and len(overlay):
            ax.plot(overlay.speeds, overlay.depths, "o", ms=4, color="tab:red", label="reference")
        ax.set_xlabel("spindle speed [rev/min]")
        ax.set_ylabel("axial depth [mm]")
        ax.set_xlim(samples.speeds[0], samples.speeds[-1])
        ax.set_ylim(bottom=0)
        ax.legend(loc="upper left")
        fig.tight_layout()
        try:
            fig.savefig(path, format="svg", metadata={"Date": None})
        except OSError as exc:
            raise LobefitError(f"{path}: cannot write ({exc.strerror})") from None
        finally:
            plt.close(fig)
    return path


# -- run configuration ----------------------------------------------------

_MODE_KEYS = ("x_mode", "y_mode", "mode")


@dataclass
class RunConfig:
    """Everything a command-line run needs, read from a flat ``key = value`` file.

    Modes are given one per line as ``fn [Hz], k [MN/m], damping`` with
    optional units; ``mode`` sets the same mode in both directions.
    """

    dynamics: DirectionalDynamics | None = None
    cutting: CuttingParams | None = None
    speed_min: float | None = None  # rev/min
    speed_max: float | None = None
    speed_points: int = 50
    grid_points: int = 2000
    # fit
    max_iterations: int = 200
    pace: float = 1.0
    fd_step: float = 1e-4
    objective_threshold: float = 1e-3
    stall_window: int = 8
    stall_improvement: float = 0.01
    jump_ratio: float = 0.05
    burn_in: int = 10
    weight_scheme: str = "uniform"
    critical_weight: float = 2.0
    guesses: int = 1
    guess_spread: float = 0.2
    axisymmetric: bool = False
    # sweep / monte carlo
    sweep_limit: float = 0.20
    sweep_step: float = 0.05
    paths: int = 1000
    neighborhood: float = 0.1
    inner_ratio: float = 0.01
    seed: int = 0
    # files
    records: str | None = None
    out: str | None = None
    format: str = "table"
    source: str = field(default="<defaults>", repr=False)

    def speeds(self) -> np.ndarray:
        lo, hi = self.speed_range()
        return np.linspace(lo, hi, self.speed_points)

    def speed_range(self) -> tuple[float, float]:
        if self.speed_min is None or self.speed_max is None:
            raise ConfigError(f"{self.source}: speed_min and speed_max are required")
        if not 0 < self.speed_min < self.speed_max:
            raise ConfigError(f"{self.source}: need 0 < speed_min < speed_max")
        return self.speed_min, self.speed_max

    def need_dynamics(self) -> DirectionalDynamics:
        if self.dynamics is None:
            raise ConfigError(f"{self.source}: no modes given (x_mode/y_mode or mode)")
        return self.dynamics

    def need_cutting(self) -> CuttingParams:
        if self.cutting is None:
            raise ConfigError(f"{self.source}: cutting parameters are incomplete")
        return self.cutting


_NUMBER = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S*)\s*$")

_CUTTING_KEYS = {
    "tangential_coefficient": "N/mm^2",
    "radial_ratio": None,
    "flute_count": None,
    "start_angle": "deg",
    "exit_angle": "deg",
}
_SPEED_KEYS = ("speed_min", "speed_max")


def _quantity(text: str, target: str | None, where: str, default_unit: str | None = None) -> float:
    """Number with an optional unit, converted to ``target``; bare numbers are in ``default_unit``."""
    m = _NUMBER.match(text)
    if not m:
        raise ConfigError(f"{where}: expected a number, got {text.strip()!r}")
    value, unit = float(m.group(1)), m.group(2) or default_unit
    if not unit:
        return value
    if target is None:
        raise ConfigError(f"{where}: no unit expected, got {unit!r}")
    try:
        return convert_units(value, unit, target)
    except LobefitError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _mode(text: str, where: str) -> Mode:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"{where}: a mode needs 'frequency, stiffness, damping ratio'")
    fn = _quantity(parts[0], "Hz", where)
    k = _quantity(parts[1], "N/m", where, default_unit="MN/m")
    zeta = _quantity(parts[2], None, where)
    try:
        return Mode(fn, k, zeta)
    except LobefitError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _integer(text: str, where: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ConfigError(f"{where}: expected an integer, got {text.strip()!r}") from None


def _scalar(name: str, text: str, where: str):
    kinds = {f.name: f.type for f in fields(RunConfig)}
    kind = kinds[name]
    text = text.strip()
    if "bool" in kind:
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{where}: expected true or false, got {text!r}")
    if kind.startswith("int"):
        return _integer(text, where)
    if kind.startswith("float"):
        return _quantity(text, "rev/min" if name in _SPEED_KEYS else None, where)
    return text


def load_config(path) -> RunConfig:
    """Parse a run configuration.

    Lines are ``key = value``; ``#`` starts a comment.  Errors name the
    file and line.
    """
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    return parse_config(lines, str(path))


def parse_config(lines, source: str = "<config>") -> RunConfig:
    cfg = RunConfig(source=source)
    simple = {f.name for f in fields(RunConfig)} - {"dynamics", "cutting", "source"}
    modes: dict[str, list[Mode]] = {"x": [], "y": []}
    cutting: dict[str, float] = {}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(lines, start=1):
        where = f"{source}:{lineno}"
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in _MODE_KEYS:
            mode = _mode(value, where)
            for d in ("x", "y") if key == "mode" else (key[0],):
                modes[d].append(mode)
            continue
        if key in seen:
            raise ConfigError(f"{where}: {key!r} already set on line {seen[key]}")
        seen[key] = lineno
        if key in _CUTTING_KEYS:
            if key == "flute_count":
                cutting[key] = _integer(value, where)
            else:
                cutting[key] = _quantity(value, _CUTTING_KEYS[key], where)
        elif key in simple:
            setattr(cfg, key, _scalar(key, value, where))
        else:
            raise ConfigError(f"{where}: unknown key {key!r}")
    if modes["x"] or modes["y"]:
        if not (modes["x"] and modes["y"]):
            raise ConfigError(f"{source}: modes are needed in both x and y")
        cfg.dynamics = DirectionalDynamics(tuple(modes["x"]), tuple(modes["y"]))
    if cutting:
        absent = [k for k in _CUTTING_KEYS if k not in cutting]
        if absent:
            raise ConfigError(f"{source}: missing cutting parameter(s) {', '.join(absent)}")
        try:
            cfg.cutting = CuttingParams(**cutting)
        except LobefitError as exc:
            raise ConfigError(f"{source}:{seen['tangential_coefficient']}: {exc}") from None
    _validate(cfg, seen)
    return cfg


def _validate(cfg: RunConfig, seen) -> None:
    def fail(key, msg):
        line = seen.get(key)
        raise ConfigError(f"{cfg.source}{':' + str(line) if line else ''}: {msg}")

    if cfg.speed_points < 2:
        fail("speed_points", "speed_points must be >= 2")
    if cfg.grid_points < 2:
        fail("grid_points", "grid_points must be >= 2")
    if cfg.speed_min is not None and cfg.speed_max is not None and not 0 < cfg.speed_min < cfg.speed_max:
        fail("speed_max", "need 0 < speed_min < speed_max")
    if cfg.guesses < 1:
        fail("guesses", "guesses must be >= 1")
    if not 0 <= cfg.guess_spread < 1:
        fail("guess_spread", "guess_spread must lie in [0, 1)")
    if cfg.paths < 1:
        fail("paths", "paths must be >= 1")
    if not 0 <= cfg.neighborhood < 0.5:
        fail("neighborhood", "neighborhood must lie in [0, 0.5)")
    if cfg.format not in ("table", "svg"):
        fail("format", f"format must be 'table' or 'svg', got {cfg.format!r}")
    if cfg.weight_scheme not in ("uniform", "critical"):
        fail("weight_scheme", f"weight_scheme must be 'uniform' or 'critical', got {cfg.weight_scheme!r}")


# -- reports --------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def format_report(kind: str, entries) -> str:
    """Versioned ``key = value`` text, one entry per line, in the given order."""
    lines = [REPORT_HEADER, f"kind = {kind}"]
    lines += [f"{k} = {_fmt(v)}" for k, v in entries]
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> tuple[str, dict[str, str]]:
    lines = text.splitlines()
    if not lines or lines[0] != REPORT_HEADER:
        raise LobefitError(f"not a report: first line must read {REPORT_HEADER!r}")
    out = {}
    for line in lines[1:]:
        key, _, value = line.partition(" = ")
        out[key] = value
    return out.pop("kind", ""), out


def write_report(path, kind: str, entries) -> Path:
    path = Path(path)
    _write(path, format_report(kind, entries))
    return path


def write_table(path, header, rows) -> Path:
    """Comma-separated table with a header row."""
    path = Path(path)
    lines = [",".join(header)] + [",".join(_fmt(c) for c in row) for row in rows]
    _write(path, "\n".join(lines) + "\n")
    return path
