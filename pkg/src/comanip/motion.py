"""Velocity-field motion generation with obstacle avoidance.

Given the current pose, the transformed demonstration, and a set of bounding
spheres, produces authority-modulated reference linear/angular velocities and
a gated reference wrench. The field combines attraction to the nearest
trajectory point, the recorded feed-forward velocity at that point, and
repulsion/guidance terms around obstacles; the summed linear velocity is
scaled by (1 - human_authority)^2 and norm-limited.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePositionError
from .transform import TransformedDemo, nearest_index


def wrap_angles(a: np.ndarray) -> np.ndarray:
    """Wrap angles (per axis) to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    wrapped = np.remainder(a + np.pi, 2.0 * np.pi) - np.pi
    return np.where(wrapped == -np.pi, np.pi, wrapped)


def angle_diff(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Shortest per-axis angular difference a - b, wrapped to (-pi, pi]."""
    return wrap_angles(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))


@dataclass(frozen=True)
class ObstacleSphere:
    """Bounding sphere with a preferred avoidance direction."""

    center: np.ndarray
    radius: float
    v_dir: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        v = np.asarray(self.v_dir, dtype=float)
        n = np.linalg.norm(v)
        if self.radius <= 0:
            raise ValueError(f"obstacle radius must be positive, got {self.radius}")
        if n < 1e-12:
            raise ValueError("v_dir must be a nonzero direction")
        object.__setattr__(self, "v_dir", v / n)


@dataclass(frozen=True)
class MotionParams:
    """Gains and limits of the velocity field.

    lambda_lin / lambda_ang are 3x3 positive-definite feedback gains (1/s),
    v_th the linear speed ceiling (m/s), w_th the combined position+angle
    error gate for wrench playback (m + rad), lambda_cap the ceiling on the
    repulsion gain (1/s), and locality_window restricts nearest-point lookups
    to +-W samples of the previous index when > 0.
    """

    lambda_lin: np.ndarray = field(default_factory=lambda: 4.0 * np.eye(3))
    lambda_ang: np.ndarray = field(default_factory=lambda: 4.0 * np.eye(3))
    v_th: float = 0.5
    w_th: float = 0.05
    lambda_cap: float = 50.0
    locality_window: int = 0

    def __post_init__(self):
        for name in ("lambda_lin", "lambda_ang"):
            m = np.asarray(getattr(self, name), dtype=float)
            if m.shape == ():
                m = float(m) * np.eye(3)
            object.__setattr__(self, name, m)
            if not np.allclose(m, m.T) or np.any(np.linalg.eigvalsh(m) <= 0):
                raise ValueError(f"{name} must be symmetric positive definite")
        if self.v_th <= 0 or self.w_th <= 0 or self.lambda_cap <= 0:
            raise ValueError("v_th, w_th, lambda_cap must be positive")


@dataclass(frozen=True)
class ReferenceOutput:
    """One evaluation of the motion generator."""

    x_dot_ref: np.ndarray
    theta_dot_ref: np.ndarray
    w_ref: np.ndarray
    i_min: int
    beta: float


def feedback_velocity(x, theta, td: TransformedDemo, i_min: int, p: MotionParams):
    """Gain-scaled pull toward the nearest trajectory sample.

    The angular error uses the per-axis shortest difference, so a 350 degree
    offset is treated as -10 degrees.
    """
    v_fb = p.lambda_lin @ (td.positions[:, i_min] - np.asarray(x, dtype=float))
    w_fb = p.lambda_ang @ angle_diff(td.eulers[:, i_min], theta)
    return v_fb, w_fb


def feedforward_velocity(td: TransformedDemo, i_min: int):
    """Recorded velocities at the nearest trajectory sample."""
    return td.lin_vels[:, i_min].copy(), td.ang_vels[:, i_min].copy()


def obstacle_velocity(x, v_ff, obs: ObstacleSphere, p: MotionParams) -> np.ndarray:
    """Repulsion plus gated guidance around one bounding sphere.

    The repulsion gain grows as 1/(distance - radius), capped at lambda_cap
    (and pinned to the cap on or inside the sphere) to keep the arithmetic
    finite. Guidance activates when the feed-forward velocity points into the
    obstacle (dot(v_ff, n_o) <= 0) and is the projection of the normalized
    feed-forward velocity and the preferred direction onto the plane
    orthogonal to the surface normal; the feed-forward part is dropped for
    near-stationary samples.
    """
    x = np.asarray(x, dtype=float)
    v_ff = np.asarray(v_ff, dtype=float)
    delta = x - obs.center
    dist = float(np.linalg.norm(delta))
    if dist == 0.0:
        raise DegeneratePositionError("query position coincides with obstacle center")
    n_o = delta / dist
    gap = dist - obs.radius
    if gap <= 0:
        lam = p.lambda_cap
    else:
        lam = min(1.0 / gap, p.lambda_cap)
    v_r = lam * n_o

    k_g = 1.0 if float(np.dot(v_ff, n_o)) <= 0.0 else 0.0
    v_proj = obs.v_dir - np.dot(obs.v_dir, n_o) * n_o
    speed = float(np.linalg.norm(v_ff))
    if speed >= 1e-9:
        u = v_ff / speed
        v_proj = v_proj + u - np.dot(u, n_o) * n_o
    return v_r + lam * v_proj * k_g


def reference_velocity(alpha_h: float, v_fb, v_ff, v_obs, p: MotionParams) -> np.ndarray:
    """Authority-scaled sum of the field terms, norm-limited to v_th."""
    y = (1.0 - alpha_h) ** 2 * (np.asarray(v_fb) + np.asarray(v_ff) + np.asarray(v_obs))
    n = float(np.linalg.norm(y))
    if n <= p.v_th:
        return y
    return y * (p.v_th / n)


def reference_angular_velocity(alpha_h: float, td: TransformedDemo, i_min: int) -> np.ndarray:
    """Authority-scaled recorded angular velocity at the nearest sample."""
    return (1.0 - alpha_h) ** 2 * td.ang_vels[:, i_min]


def reference_wrench(alpha_h: float, x, theta, td: TransformedDemo, i_min: int, p: MotionParams):
    """Recorded wrench at the nearest sample, gated by tracking error.

    Returns (w_ref, beta): beta is (1 - alpha_h)^2 while the combined
    position + wrapped-orientation error stays within w_th and 0 otherwise,
    so force playback happens only near the trajectory and only while the
    robot holds authority.
    """
    err = float(
        np.linalg.norm(td.positions[:, i_min] - np.asarray(x, dtype=float))
        + np.linalg.norm(angle_diff(td.eulers[:, i_min], theta))
    )
    beta = (1.0 - alpha_h) ** 2 if err <= p.w_th else 0.0
    return beta * td.wrenches[:, i_min], beta


def generate(
    x,
    theta,
    td: TransformedDemo,
    obstacles,
    alpha_h: float,
    p: MotionParams,
    prev_i_min: int | None = None,
) -> ReferenceOutput:
    """Evaluate the full field at the current pose.

    Obstacle contributions superpose; the summed linear velocity goes through
    the authority scaling and norm limit.
    """
    i_min = nearest_index(td, x, prev_index=prev_i_min, locality_window=p.locality_window)
    v_fb, _ = feedback_velocity(x, theta, td, i_min, p)
    v_ff, _ = feedforward_velocity(td, i_min)
    v_obs = np.zeros(3)
    for obs in obstacles:
        v_obs = v_obs + obstacle_velocity(x, v_ff, obs, p)
    x_dot_ref = reference_velocity(alpha_h, v_fb, v_ff, v_obs, p)
    # Angular references replay the recorded channel only; the angular
    # feedback term exists for callers that want it but does not enter the
    # reference output.
    theta_dot_ref = reference_angular_velocity(alpha_h, td, i_min)
    w_ref, beta = reference_wrench(alpha_h, x, theta, td, i_min, p)
    return ReferenceOutput(
        x_dot_ref=x_dot_ref,
        theta_dot_ref=theta_dot_ref,
        w_ref=w_ref,
        i_min=i_min,
        beta=beta,
    )
