"""Similarity transform of a demonstration onto new start/goal points.

The demonstrated positions are rescaled by the chord-length ratio and rotated
so the demo chord aligns with the requested start-goal chord; linear
velocities get the same scale and rotation. Orientations, angular velocities,
and wrenches are carried over untouched. Nearest-point queries against the
transformed positions run on a kd-tree, with an exhaustive scan as the
reference semantics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .demos import Demonstration
from .errors import DegenerateChordError

CHORD_EPS = 1e-6


def rotation_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rotation matrix taking unit vector ``a`` onto unit vector ``b``.

    Axis-angle construction about a x b. Antiparallel inputs are a half-turn
    about a deterministic axis: the unit vector orthogonal to ``a`` with the
    largest +z component (falling back to the x-axis projection when ``a``
    is itself along z).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = float(np.dot(a, b))
    v = np.cross(a, b)
    s = np.linalg.norm(v)
    if s < 1e-12:
        if c > 0:
            return np.eye(3)
        axis = np.array([0.0, 0.0, 1.0]) - c_proj(a, np.array([0.0, 0.0, 1.0]))
        if np.linalg.norm(axis) < 1e-9:
            axis = np.array([1.0, 0.0, 0.0]) - c_proj(a, np.array([1.0, 0.0, 0.0]))
        axis /= np.linalg.norm(axis)
        return 2.0 * np.outer(axis, axis) - np.eye(3)
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx * ((1 - c) / (s * s))


def c_proj(u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Component of ``w`` along unit vector ``u``."""
    return u * float(np.dot(w, u))


@dataclass(frozen=True)
class Alignment:
    """Scale + rotation mapping a demo chord onto a start-goal chord."""

    s_l: float
    rotation: np.ndarray
    start: np.ndarray
    goal: np.ndarray
    origin: np.ndarray  # first demo position


def compute_alignment(demo: Demonstration, start, goal) -> Alignment:
    """Chord-ratio scale and chord-aligning rotation for the given endpoints.

    Raises DegenerateChordError when either chord is shorter than 1e-6 m.
    """
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    demo_chord = demo.chord()
    demo_len = float(np.linalg.norm(demo_chord))
    new_chord = goal - start
    new_len = float(np.linalg.norm(new_chord))
    if demo_len <= CHORD_EPS:
        raise DegenerateChordError(f"demo chord length {demo_len:g} below {CHORD_EPS:g}")
    if new_len <= CHORD_EPS:
        raise DegenerateChordError(f"start-goal chord length {new_len:g} below {CHORD_EPS:g}")
    rotation = rotation_between(demo_chord / demo_len, new_chord / new_len)
    return Alignment(
        s_l=new_len / demo_len,
        rotation=rotation,
        start=start,
        goal=goal,
        origin=demo.positions[:, 0].copy(),
    )


def identity_alignment(demo: Demonstration) -> Alignment:
    """Unit-scale, no-rotation alignment onto the demo's own endpoints.

    Valid for any demonstration, including closed paths whose chord is
    degenerate and which therefore cannot be re-targeted.
    """
    return Alignment(
        s_l=1.0,
        rotation=np.eye(3),
        start=demo.positions[:, 0].copy(),
        goal=demo.positions[:, -1].copy(),
        origin=demo.positions[:, 0].copy(),
    )


@dataclass(frozen=True)
class TransformedDemo:
    """Demonstration carried onto new endpoints, with a spatial index.

    Immutable after construction; nearest-point queries are read-only and may
    run concurrently.
    """

    positions: np.ndarray
    lin_vels: np.ndarray
    eulers: np.ndarray
    ang_vels: np.ndarray
    wrenches: np.ndarray
    sample_dt: float
    alignment: Alignment
    index: cKDTree = field(repr=False)

    @property
    def num_samples(self) -> int:
        return self.positions.shape[1]

    @property
    def goal(self) -> np.ndarray:
        return self.alignment.goal


def transform_demo(demo: Demonstration, align: Alignment) -> TransformedDemo:
    """Apply scale/rotation to positions and linear velocities.

    Positions map as s * R (x - x_first) + start, which pins the first
    transformed point to ``start`` and the last to ``goal``. The remaining
    channels are copied unchanged.
    """
    sR = align.s_l * align.rotation
    positions = sR @ (demo.positions - align.origin[:, None]) + align.start[:, None]
    lin_vels = sR @ demo.lin_vels
    return TransformedDemo(
        positions=positions,
        lin_vels=lin_vels,
        eulers=demo.eulers.copy(),
        ang_vels=demo.ang_vels.copy(),
        wrenches=demo.wrenches.copy(),
        sample_dt=demo.sample_dt,
        alignment=align,
        index=cKDTree(positions.T),
    )


def nearest_index_scan(positions: np.ndarray, x, lo: int = 0, hi: int | None = None) -> int:
    """Exhaustive nearest-point search; the reference semantics.

    Returns the lowest index attaining the minimum distance within
    [lo, hi).
    """
    x = np.asarray(x, dtype=float)
    if hi is None:
        hi = positions.shape[1]
    d2 = np.sum((positions[:, lo:hi] - x[:, None]) ** 2, axis=0)
    return lo + int(np.argmin(d2))


def nearest_index(
    td: TransformedDemo,
    x,
    prev_index: int | None = None,
    locality_window: int = 0,
) -> int:
    """Index of the transformed sample closest to ``x``; ties go to the
    lowest index.

    The kd-tree supplies a candidate radius and the final argmin is settled
    by the same arithmetic as the exhaustive scan, so both paths agree
    exactly, ties included. With ``locality_window`` W > 0 and a previous
    index, the search is restricted to indices within +-W of it (useful for
    closed or self-proximal paths where the global argmin can hop branches).
    """
    x = np.asarray(x, dtype=float)
    if locality_window > 0 and prev_index is not None:
        lo = max(0, prev_index - locality_window)
        hi = min(td.num_samples, prev_index + locality_window + 1)
        return nearest_index_scan(td.positions, x, lo, hi)
    d0, _ = td.index.query(x)
    candidates = td.index.query_ball_point(x, d0 * (1.0 + 1e-12) + 1e-300)
    if not candidates:  # degenerate fall-back, should not happen
        return nearest_index_scan(td.positions, x)
    candidates = np.asarray(sorted(candidates))
    d2 = np.sum((td.positions[:, candidates] - x[:, None]) ** 2, axis=0)
    return int(candidates[np.argmin(d2)])
