"""Demonstration records: loading, validation, saving, and averaging.

A demonstration is a fixed-rate recording of an end-effector task: positions,
XYZ-extrinsic Euler orientations, linear/angular velocities, and the
interaction wrench measured at the tool (sensor sign convention: the wrench
the environment applies to the tool). 2-D sources such as converted LASA
handwriting files are lifted into 3-D with z = 0 and zero orientation,
angular-velocity, and wrench channels.

CSV schema (SI units, UTF-8, LF):
    t,px,py,pz,rx,ry,rz,vx,vy,vz,wx,wy,wz,fx,fy,fz,tx,ty,tz
2-D variant:
    t,px,py,vx,vy
A velocity-less 2-D variant ``t,px,py`` is also accepted; velocities are then
filled in by central finite differences over the sample period.

JSON schema: object with "sample_dt" plus channel arrays keyed exactly like
the CSV columns.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatchError, MalformedFileError, NonFiniteError

CSV_HEADER = [
    "t", "px", "py", "pz", "rx", "ry", "rz",
    "vx", "vy", "vz", "wx", "wy", "wz",
    "fx", "fy", "fz", "tx", "ty", "tz",
]
CSV_HEADER_2D = ["t", "px", "py", "vx", "vy"]
CSV_HEADER_2D_NOVEL = ["t", "px", "py"]


@dataclass(frozen=True)
class Demonstration:
    """One recorded task execution, all channels sampled at a fixed rate.

    Arrays are column-per-sample: positions, eulers, lin_vels, ang_vels are
    3xT and wrenches is 6xT (force rows then torque rows). Instances are
    immutable value objects and safe to share across threads.
    """

    positions: np.ndarray
    eulers: np.ndarray
    lin_vels: np.ndarray
    ang_vels: np.ndarray
    wrenches: np.ndarray
    sample_dt: float

    def __post_init__(self):
        for name in ("positions", "eulers", "lin_vels", "ang_vels", "wrenches"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
        rows = {"positions": 3, "eulers": 3, "lin_vels": 3, "ang_vels": 3, "wrenches": 6}
        T = self.positions.shape[1] if self.positions.ndim == 2 else -1
        for name, r in rows.items():
            arr = getattr(self, name)
            if arr.ndim != 2 or arr.shape[0] != r:
                raise MalformedFileError(f"{name} must be {r}xT, got {arr.shape}")
            if arr.shape[1] != T:
                raise LengthMismatchError(
                    f"{name} has {arr.shape[1]} samples, positions has {T}"
                )
            if not np.all(np.isfinite(arr)):
                raise NonFiniteError(f"{name} contains NaN or Inf")
        if T < 2:
            raise MalformedFileError(f"need at least 2 samples, got {T}")
        if not (self.sample_dt > 0 and np.isfinite(self.sample_dt)):
            raise MalformedFileError(f"sample_dt must be positive, got {self.sample_dt}")
        self._jump_sanity_check()

    def _jump_sanity_check(self):
        # Position jumps wildly exceeding the recorded speeds indicate corrupt
        # data; flagged, not fatal.
        steps = np.linalg.norm(np.diff(self.positions, axis=1), axis=0)
        bound = max(np.linalg.norm(self.lin_vels, axis=0).max(), 1e-12)
        if np.any(steps > bound * self.sample_dt * 10.0):
            warnings.warn(
                "demonstration has position jumps far exceeding its recorded "
                "velocities; data may be corrupt",
                stacklevel=3,
            )

    @property
    def num_samples(self) -> int:
        return self.positions.shape[1]

    @property
    def duration(self) -> float:
        return (self.num_samples - 1) * self.sample_dt

    def chord(self) -> np.ndarray:
        """Vector from the first to the last recorded position."""
        return self.positions[:, -1] - self.positions[:, 0]


@dataclass
class DemoSet:
    """A non-empty collection of demonstrations of the same task."""

    demos: list[Demonstration]
    label: str = ""

    def __post_init__(self):
        if not self.demos:
            raise MalformedFileError("DemoSet must contain at least one demonstration")


def _demo_from_columns(cols: dict[str, np.ndarray], sample_dt: float) -> Demonstration:
    T = len(cols["px"])
    zeros = np.zeros(T)

    def rowset(names):
        return np.vstack([cols.get(n, zeros) for n in names])

    positions = rowset(["px", "py", "pz"])
    if "vx" in cols:
        lin_vels = rowset(["vx", "vy", "vz"])
    else:
        lin_vels = np.gradient(positions, sample_dt, axis=1, edge_order=1)
    return Demonstration(
        positions=positions,
        eulers=rowset(["rx", "ry", "rz"]),
        lin_vels=lin_vels,
        ang_vels=rowset(["wx", "wy", "wz"]),
        wrenches=rowset(["fx", "fy", "fz", "tx", "ty", "tz"]),
        sample_dt=sample_dt,
    )


def _sample_dt_from_times(t: np.ndarray) -> float:
    if len(t) < 2:
        raise MalformedFileError("need at least 2 samples")
    dts = np.diff(t)
    if np.any(dts <= 0):
        raise MalformedFileError("time column must be strictly increasing")
    return float(np.mean(dts))


def _load_csv(path) -> Demonstration:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedFileError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header not in (CSV_HEADER, CSV_HEADER_2D, CSV_HEADER_2D_NOVEL):
            raise MalformedFileError(f"{path}: unrecognized header {header}")
        rows = []
        for i, row in enumerate(reader):
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedFileError(
                    f"{path}: row {i + 2} has {len(row)} fields, expected {len(header)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise MalformedFileError(f"{path}: row {i + 2}: {exc}") from None
    if len(rows) < 2:
        raise MalformedFileError(f"{path}: need at least 2 samples, got {len(rows)}")
    data = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{path}: file contains NaN or Inf")
    cols = {name: data[:, j] for j, name in enumerate(header)}
    return _demo_from_columns(cols, _sample_dt_from_times(cols["t"]))


def _load_json(path) -> Demonstration:
    with open(path, "r", encoding="utf-8") as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as exc:
            raise MalformedFileError(f"{path}: {exc}") from None
    if not isinstance(obj, dict) or "sample_dt" not in obj:
        raise MalformedFileError(f"{path}: expected an object with 'sample_dt'")
    known = set(CSV_HEADER) | {"sample_dt"}
    unknown = set(obj) - known
    if unknown:
        raise MalformedFileError(f"{path}: unknown fields {sorted(unknown)}")
    if "px" not in obj or "py" not in obj:
        raise MalformedFileError(f"{path}: missing position channels")
    arrays = {}
    lengths = {}
    for key in CSV_HEADER:
        if key == "t" or key not in obj:
            continue
        arr = np.asarray(obj[key], dtype=float)
        if arr.ndim != 1:
            raise MalformedFileError(f"{path}: field {key} must be a flat array")
        arrays[key] = arr
        lengths[key] = len(arr)
    if len(set(lengths.values())) > 1:
        detail = ", ".join(f"{k}={v}" for k, v in sorted(lengths.items()))
        raise LengthMismatchError(f"{path}: channel lengths disagree ({detail})")
    T = lengths["px"]
    if T < 2:
        raise MalformedFileError(f"{path}: need at least 2 samples, got {T}")
    for key, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"{path}: field {key} contains NaN or Inf")
    dt = float(obj["sample_dt"])
    if not (dt > 0 and np.isfinite(dt)):
        raise MalformedFileError(f"{path}: sample_dt must be positive")
    return _demo_from_columns(arrays, dt)


def load_demonstration(path, format: str | None = None) -> Demonstration:
    """Load a demonstration from a CSV or JSON file.

    ``format`` is "csv" or "json"; when omitted it is inferred from the file
    extension. Raises MalformedFileError, LengthMismatchError, or
    NonFiniteError on schema violations.
    """
    if format is None:
        format = "json" if str(path).endswith(".json") else "csv"
    if format == "csv":
        return _load_csv(path)
    if format == "json":
        return _load_json(path)
    raise MalformedFileError(f"unknown format {format!r}")


def _channel_columns(demo: Demonstration) -> dict[str, np.ndarray]:
    T = demo.num_samples
    cols = {"t": np.arange(T) * demo.sample_dt}
    for names, arr in (
        (["px", "py", "pz"], demo.positions),
        (["rx", "ry", "rz"], demo.eulers),
        (["vx", "vy", "vz"], demo.lin_vels),
        (["wx", "wy", "wz"], demo.ang_vels),
        (["fx", "fy", "fz", "tx", "ty", "tz"], demo.wrenches),
    ):
        for i, n in enumerate(names):
            cols[n] = arr[i]
    return cols


def save_demonstration(demo: Demonstration, path, format: str | None = None) -> None:
    """Write a demonstration to disk; JSON round-trips bit-identically."""
    if format is None:
        format = "json" if str(path).endswith(".json") else "csv"
    cols = _channel_columns(demo)
    if format == "json":
        obj = {"sample_dt": demo.sample_dt}
        obj.update({k: cols[k].tolist() for k in CSV_HEADER if k != "t"})
        with open(path, "w", encoding="utf-8") as f:
            json.dump(obj, f)
    elif format == "csv":
        buf = io.StringIO()
        buf.write(",".join(CSV_HEADER) + "\n")
        table = np.column_stack([cols[k] for k in CSV_HEADER])
        for row in table:
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(buf.getvalue())
    else:
        raise MalformedFileError(f"unknown format {format!r}")


def _arclength_param(positions: np.ndarray) -> np.ndarray:
    """Cumulative chord length, nudged to be strictly increasing so that
    stationary segments stay interpolable."""
    steps = np.linalg.norm(np.diff(positions, axis=1), axis=0)
    s = np.concatenate([[0.0], np.cumsum(steps)])
    total = s[-1]
    eps = max(total, 1.0) * 1e-12
    return s + np.arange(len(s)) * eps


def resample_demo(demo: Demonstration, n: int) -> Demonstration:
    """Resample every channel to ``n`` samples, uniform in arc length.

    Spatial resampling keeps the traced shape independent of the timing of
    the original recording.
    """
    if n < 2:
        raise MalformedFileError(f"cannot resample to {n} samples")
    s = _arclength_param(demo.positions)
    target = np.linspace(s[0], s[-1], n)

    def resample_rows(arr):
        return np.vstack([np.interp(target, s, row) for row in arr])

    new_dt = demo.duration / (n - 1) if n > 1 else demo.sample_dt
    return Demonstration(
        positions=resample_rows(demo.positions),
        eulers=resample_rows(demo.eulers),
        lin_vels=resample_rows(demo.lin_vels),
        ang_vels=resample_rows(demo.ang_vels),
        wrenches=resample_rows(demo.wrenches),
        sample_dt=new_dt if new_dt > 0 else demo.sample_dt,
    )


def mean_trajectory(demo_set: DemoSet) -> Demonstration:
    """Pointwise average of a demo set after arc-length-uniform resampling.

    Every demonstration is resampled to N = max sample count over the set,
    then averaged channel by channel; the result's sample period is the mean
    of the inputs' periods.
    """
    n = max(d.num_samples for d in demo_set.demos)
    resampled = [resample_demo(d, n) for d in demo_set.demos]

    def avg(attr):
        return np.mean([getattr(d, attr) for d in resampled], axis=0)

    return Demonstration(
        positions=avg("positions"),
        eulers=avg("eulers"),
        lin_vels=avg("lin_vels"),
        ang_vels=avg("ang_vels"),
        wrenches=avg("wrenches"),
        sample_dt=float(np.mean([d.sample_dt for d in demo_set.demos])),
    )
