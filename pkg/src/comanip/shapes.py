"""Procedural demonstration builders.

Stand-ins for converted recordings: a leaf-outline handwriting shape in the
x-y plane (complex, nearly closed, non-monotone distance to goal), straight
lines for unit tests, and a press task with an encoded normal-force profile.
All builders start and end at rest and derive velocity channels from the
position samples, so the files they produce satisfy the loader invariants.
"""

from __future__ import annotations

import numpy as np

from .demos import Demonstration


def _time_warp(n: int) -> np.ndarray:
    """Progress parameter in [0, 1] with zero slope at both ends."""
    t = np.linspace(0.0, 1.0, n)
    return t - np.sin(2.0 * np.pi * t) / (2.0 * np.pi)


def _demo_from_positions(positions: np.ndarray, duration: float, wrenches=None) -> Demonstration:
    n = positions.shape[1]
    dt = duration / (n - 1)
    T = n
    return Demonstration(
        positions=positions,
        eulers=np.zeros((3, T)),
        lin_vels=np.gradient(positions, dt, axis=1, edge_order=2),
        ang_vels=np.zeros((3, T)),
        wrenches=np.zeros((6, T)) if wrenches is None else wrenches,
        sample_dt=dt,
    )


def _quad_bezier(p0, c, p1, u):
    p0 = np.asarray(p0, dtype=float)[:, None]
    c = np.asarray(c, dtype=float)[:, None]
    p1 = np.asarray(p1, dtype=float)[:, None]
    u = np.asarray(u, dtype=float)[None, :]
    return (1 - u) ** 2 * p0 + 2 * (1 - u) * u * c + u**2 * p1


def make_leaf(n: int = 1000, size: float = 0.18, duration: float = 8.0) -> Demonstration:
    """Leaf-outline stroke in the x-y plane at z = 0.

    Starts at the stem, traces the left edge up to the tip, returns along the
    right edge, and ends at a goal slightly offset from the start. The two
    edges run close together near the stem, so distance to the goal is not
    monotone along the path.
    """
    t = np.linspace(0.0, 1.0, n)
    # Speed profile: already moving at the first sample, partial slowdown at
    # the tip, full stop only at the goal. Any interior rest point would put
    # a spurious equilibrium into the velocity field; the goal is the one
    # intended attractor.
    base = 0.12 + np.sin(np.pi * t) ** 2
    tip_dip = 1.0 - 0.6 * np.exp(-(((t - 0.5) / 0.08) ** 2))
    end_taper = np.clip((1.0 - t) / 0.08, 0.0, 1.0) ** 2
    speed = base * tip_dip * end_taper
    u = np.concatenate([[0.0], np.cumsum((speed[1:] + speed[:-1]) * 0.5)])
    u /= u[-1]
    start = np.array([0.0, 0.0, 0.0])
    tip = np.array([-0.15 * size / 0.18, size, 0.0])
    goal = np.array([0.02, 0.012, 0.0])
    c_left = np.array([-0.85 * size, 0.35 * size, 0.0])
    c_right = np.array([0.55 * size, 0.55 * size, 0.0])
    half = np.where(u <= 0.5, 2.0 * u, 2.0 * u - 1.0)
    left = _quad_bezier(start, c_left, tip, half)
    right = _quad_bezier(tip, c_right, goal, half)
    positions = np.where(u[None, :] <= 0.5, left, right)
    return _demo_from_positions(positions, duration)


def make_line(start, end, n: int = 200, duration: float = 2.0) -> Demonstration:
    """Straight stroke from start to end, at rest at both ends."""
    u = _time_warp(n)
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    positions = start[:, None] + (end - start)[:, None] * u[None, :]
    return _demo_from_positions(positions, duration)


def make_press(
    surface_z: float = 0.0,
    approach_height: float = 0.08,
    press_force: float = 15.0,
    n: int = 1200,
    duration: float = 12.0,
    lateral: float = 0.02,
    dwell_frac: float = 0.5,
    ramp_frac: float = 0.25,
    recorded_stiffness: float = 10000.0,
) -> Demonstration:
    """Press task normal to a horizontal surface, with an encoded force ramp.

    Descends from ``approach_height`` above the surface, presses while the
    recorded tool wrench ramps to ``press_force`` (sensor sign: reaction on
    the tool, +z), holds, releases, and retreats. The recorded positions dip
    below the surface by force / recorded_stiffness, the deflection a
    kinesthetic recording picks up while pressing; this keeps the position
    stream strictly advancing so a position-indexed replay walks the force
    ramp. ``lateral`` drifts the press sideways so the release path does not
    retrace the press path.
    """
    t = np.linspace(0.0, 1.0, n)
    descend_end = (1.0 - dwell_frac) / 2.0
    dwell_end = descend_end + dwell_frac

    force = np.zeros(n)
    x = np.zeros(n)
    z = np.empty(n)
    for i, ti in enumerate(t):
        if ti < descend_end:
            # already moving at the first sample, soft touchdown at the end;
            # a rest-start would be a spurious equilibrium of the replay field
            u = np.sin(0.5 * np.pi * ti / descend_end)
            z[i] = surface_z + approach_height * (1.0 - u)
        elif ti <= dwell_end:
            u = (ti - descend_end) / dwell_frac
            up = min(u / ramp_frac, 1.0)
            down = min((1.0 - u) / ramp_frac, 1.0)
            force[i] = press_force * min(up, down)
            z[i] = surface_z - force[i] / recorded_stiffness
            # constant-rate stroke: keeps the position-indexed replay marching
            # through the force ramp at the recorded pace
            x[i] = lateral * u
        else:
            u = 1.0 - np.cos(0.5 * np.pi * (ti - dwell_end) / (1.0 - dwell_end))
            z[i] = surface_z + approach_height * u
            x[i] = lateral
    positions = np.vstack([x, np.zeros(n), z])
    wrenches = np.zeros((6, n))
    wrenches[2] = force
    return _demo_from_positions(positions, duration, wrenches=wrenches)


def make_taps(
    surface_z: float = 0.0,
    lift: float = 0.004,
    tap_hz: float = 1.5,
    force_start: float = 12.0,
    force_end: float = 2.0,
    n: int = 4000,
    duration: float = 80.0,
    lateral: float = 0.06,
    recorded_stiffness: float = 10000.0,
) -> Demonstration:
    """Repeated dabbing against a surface with easing-off intensity.

    Each tap is a half-sine dip below the surface whose depth matches the
    recorded force over recorded_stiffness; between taps the tool lifts. The
    tap force decays from force_start to force_end across the session and a
    slow lateral drift keeps every sample spatially distinct. Replaying the
    train against a damped surface dissipates energy on every contact.
    """
    t = np.linspace(0.0, 1.0, n)
    phase = 2.0 * np.pi * tap_hz * t * duration
    envelope = force_start + (force_end - force_start) * t
    dip = np.maximum(0.0, -np.sin(phase))
    force = envelope * dip
    z = np.where(
        dip > 0.0,
        surface_z - force / recorded_stiffness,
        surface_z + lift * np.maximum(0.0, np.sin(phase)),
    )
    x = lateral * t
    positions = np.vstack([x, np.zeros(n), z])
    wrenches = np.zeros((6, n))
    wrenches[2] = force
    return _demo_from_positions(positions, duration, wrenches=wrenches)


SHAPE_BUILDERS = {
    "leaf": make_leaf,
}


def write_converted_2d(demo: Demonstration, path) -> None:
    """Write a planar demo in the converted 2-D CSV schema (t,px,py,vx,vy)."""
    n = demo.num_samples
    t = np.arange(n) * demo.sample_dt
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("t,px,py,vx,vy\n")
        for i in range(n):
            row = (t[i], demo.positions[0, i], demo.positions[1, i],
                   demo.lin_vels[0, i], demo.lin_vels[1, i])
            f.write(",".join(f"{v:.17g}" for v in row) + "\n")


def main(argv=None):
    """Materialize the bundled shapes as converted 2-D CSV files."""
    import argparse
    import pathlib

    parser = argparse.ArgumentParser(description=main.__doc__)
    parser.add_argument("out_dir", type=pathlib.Path)
    args = parser.parse_args(argv)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for name, builder in SHAPE_BUILDERS.items():
        out = args.out_dir / f"{name}.csv"
        write_converted_2d(builder(), out)
        print(f"wrote {out}")


if __name__ == "__main__":
    main()
