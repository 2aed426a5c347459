"""Human/robot authority arbitration from wrench discrepancies.

A scalar authority value in [0, 1] (1 = human leads) is driven by two force
cues: the mismatch between the tool-side force/torque sensor and the
whole-body wrench estimate (reveals contact on the robot body), and the
mismatch between the reference wrench and the sensor (unencoded tool-side
interaction). The raw value passes through a deadbanded tanh and a recursive
filter with a faster take-over rate than hand-back rate. Authority maps to
variable stiffness/damping for the impedance controller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonDiagonalKmaxError


@dataclass(frozen=True)
class AuthorityParams:
    """Arbitration parameters.

    a sets the slope of the take-over transition (N), b the deadband width
    (N); c1/c2 weigh the body-contact and tool-tracking force cues; g_plus /
    g_minus are the per-step filter gains for rising / falling authority.
    """

    a: float = 4.0
    b: float = 2.0
    c1: float = 1.0
    c2: float = 0.5
    g_plus: float = 0.02
    g_minus: float = 0.002

    def __post_init__(self):
        if min(self.a, self.b, self.c1, self.c2, self.g_plus, self.g_minus) <= 0:
            raise ValueError("all authority parameters must be strictly positive")
        if not (self.g_plus <= 1.0 and self.g_minus <= 0.5):
            raise ValueError("need g_plus in (0,1] and g_minus in (0,0.5]")
        if self.g_plus < self.g_minus:
            raise ValueError("take-over gain g_plus must be >= hand-back gain g_minus")


@dataclass(frozen=True)
class AuthorityState:
    """Filtered authority value plus the last observed wrench discrepancy."""

    alpha_h: float = 0.0
    last_w_diff: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.alpha_h <= 1.0:
            raise ValueError(f"alpha_h must be in [0,1], got {self.alpha_h}")


def wrench_difference(w_s, w_est, w_ref, p: AuthorityParams) -> float:
    """Weighted norm of the two wrench discrepancies, in N."""
    w_s = np.asarray(w_s, dtype=float)
    return float(
        p.c1 * np.linalg.norm(w_s - np.asarray(w_est, dtype=float))
        + p.c2 * np.linalg.norm(np.asarray(w_ref, dtype=float) - w_s)
    )


def raw_authority(w_diff: float, p: AuthorityParams) -> float:
    """Deadbanded sigmoid mapping of the wrench discrepancy to [0, 1].

    Crosses 0.5 exactly at w_diff = a + b; the slope around the crossing is
    set by 3/a.
    """
    value = 0.5 * (1.0 + np.tanh((3.0 / p.a) * (w_diff - p.a - p.b)))
    return float(min(max(value, 0.0), 1.0))


def update_authority(state: AuthorityState, alpha_raw: float, p: AuthorityParams) -> AuthorityState:
    """One recursive-filter step toward the raw authority value.

    Rising authority uses g_plus; falling authority uses g_minus inflated by
    g_minus*(1 - alpha)^2, so hand-back is slowest when the human clearly
    holds authority.
    """
    prev = state.alpha_h
    if alpha_raw > prev:
        gain = p.g_plus
    else:
        gain = p.g_minus + p.g_minus * (1.0 - prev) ** 2
    alpha = prev + gain * (alpha_raw - prev)
    alpha = min(max(alpha, 0.0), 1.0)
    return AuthorityState(alpha_h=alpha, last_w_diff=state.last_w_diff)


def step_authority(state: AuthorityState, w_s, w_est, w_ref, p: AuthorityParams) -> AuthorityState:
    """Full arbitration step: discrepancy, sigmoid, recursive filter."""
    w_diff = wrench_difference(w_s, w_est, w_ref, p)
    new = update_authority(state, raw_authority(w_diff, p), p)
    return AuthorityState(alpha_h=new.alpha_h, last_w_diff=w_diff)


def variable_impedance(alpha_h: float, k_max: np.ndarray):
    """Authority-scaled stiffness and critically-styled damping.

    K = (1 - alpha_h) * K_max and D = 2*sqrt(K), defined elementwise on the
    diagonal; K_max must be diagonal with non-negative entries.
    """
    k_max = np.asarray(k_max, dtype=float)
    if k_max.ndim == 1:
        k_max = np.diag(k_max)
    if not np.array_equal(k_max, np.diag(np.diag(k_max))):
        raise NonDiagonalKmaxError("K_max must be diagonal")
    if np.any(np.diag(k_max) < 0):
        raise ValueError("K_max entries must be non-negative")
    K = (1.0 - alpha_h) * k_max
    D = 2.0 * np.diag(np.sqrt(np.diag(K)))
    return K, D
