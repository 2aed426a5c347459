"""Task-space plant simulation and scenario orchestration.

Integrates the rigid task-space dynamics under the commanded wrench and
environment contact, models the split between the tool-side force/torque
sensor and the whole-body wrench estimate, injects scripted or live human
forces, and runs the full shared-autonomy loop in a fixed order:

    sensors -> authority -> motion generator -> tank flags ->
    auxiliary input -> control wrench -> tank step -> plant step

Reordering the loop is a breaking change; traces are deterministic given
(config, seed, input timeline).

The controller tracks a slew-limited reference velocity with the executed
slew fed forward as the reference acceleration, and integrates the tracking
error as a bounded state; both choices keep the discrete storage-function
accounting clean so the passivity monitor measures controller physics rather
than reference discontinuities.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import controller as ctrl
from . import motion as mg
from .authority import AuthorityParams, AuthorityState, step_authority
from .demos import Demonstration
from .errors import ConfigError
from .transform import (
    TransformedDemo,
    compute_alignment,
    identity_alignment,
    transform_demo,
)

GOAL_MOVE_EPS = 1e-4  # m; alignment/index rebuilt only when endpoints move further


@dataclass(frozen=True)
class PlantModel:
    """Task-space rigid-body model: inertia, velocity coupling, conservative wrench."""

    m_x: np.ndarray = field(default_factory=lambda: np.diag([10.0, 10.0, 10.0, 1.0, 1.0, 1.0]))
    c_x: np.ndarray = field(default_factory=lambda: np.zeros((6, 6)))
    g_x: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        m = np.asarray(self.m_x, dtype=float)
        if m.ndim == 1:
            m = np.diag(m)
        object.__setattr__(self, "m_x", m)
        c = np.asarray(self.c_x, dtype=float)
        if c.ndim == 0:
            c = float(c) * np.eye(6)
        object.__setattr__(self, "c_x", c)
        object.__setattr__(self, "g_x", np.asarray(self.g_x, dtype=float))
        if np.any(np.linalg.eigvalsh(0.5 * (m + m.T)) <= 0):
            raise ValueError("m_x must be positive definite")

    @property
    def m_inv(self) -> np.ndarray:
        return np.linalg.inv(self.m_x)


@dataclass
class Wall:
    """Unilateral spring-damper plane; the normal points out of the material."""

    point: np.ndarray
    normal: np.ndarray
    stiffness: float
    damping: float = 0.0

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=float)
        n = np.asarray(self.normal, dtype=float)
        self.normal = n / np.linalg.norm(n)
        if self.stiffness < 0 or self.damping < 0:
            raise ValueError("wall stiffness and damping must be non-negative")


@dataclass
class Button:
    """Latching trigger on one wall; latches once the normal force reaches
    the trigger level."""

    wall: int
    trigger_force: float = 15.0
    latched: bool = False

    def __post_init__(self):
        if self.trigger_force <= 0:
            raise ValueError("trigger_force must be positive")


@dataclass
class Environment:
    """Contact environment: walls plus an optional button."""

    walls: list[Wall] = field(default_factory=list)
    button: Button | None = None


@dataclass(frozen=True)
class HumanInput:
    """Human wrench split by where it acts relative to the FT sensor.

    tool_wrench acts tool-side (visible to the sensor); body_wrench acts on
    the robot body flange-side (invisible to the sensor, visible to the
    joint-torque estimate).
    """

    tool_wrench: np.ndarray = field(default_factory=lambda: np.zeros(6))
    body_wrench: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        for name in ("tool_wrench", "body_wrench"):
            w = np.asarray(getattr(self, name), dtype=float)
            if w.shape != (6,) or not np.all(np.isfinite(w)):
                raise ValueError(f"{name} must be a finite 6-vector")
            object.__setattr__(self, name, w)


ZERO_HUMAN = HumanInput()


@dataclass(frozen=True)
class HumanSegment:
    """Piecewise-constant scripted wrench: [t0, t1) in a given frame."""

    t0: float
    t1: float
    frame: str  # "tool" | "body"
    wrench: np.ndarray

    def __post_init__(self):
        if self.frame not in ("tool", "body"):
            raise ConfigError(f"human segment frame must be tool|body, got {self.frame}")
        if not self.t1 > self.t0 >= 0:
            raise ConfigError("human segment needs 0 <= t0 < t1")
        object.__setattr__(self, "wrench", np.asarray(self.wrench, dtype=float))


def timeline_input(segments, t: float) -> HumanInput:
    """Sum of all scripted segments active at time t."""
    tool = np.zeros(6)
    body = np.zeros(6)
    hit = False
    for seg in segments:
        if seg.t0 <= t < seg.t1:
            hit = True
            if seg.frame == "tool":
                tool = tool + seg.wrench
            else:
                body = body + seg.wrench
    return HumanInput(tool, body) if hit else ZERO_HUMAN


def compile_timeline(segments, dt: float, n_steps: int) -> np.ndarray | None:
    """Per-step (tool, body) wrench schedule; interval sums via cumsum.

    Equivalent to evaluating timeline_input at every step, but O(segments +
    steps) so dense scripted profiles stay cheap.
    """
    if not segments:
        return None
    deltas = np.zeros((n_steps + 1, 12))
    for seg in segments:
        k0 = int(np.ceil(seg.t0 / dt - 1e-12))
        k1 = int(np.ceil(seg.t1 / dt - 1e-12))
        k0 = max(k0, 0)
        k1 = min(max(k1, k0), n_steps)
        if k0 >= n_steps or k1 <= k0:
            continue
        off = 0 if seg.frame == "tool" else 6
        deltas[k0, off:off + 6] += seg.wrench
        deltas[k1, off:off + 6] -= seg.wrench
    return np.cumsum(deltas[:-1], axis=0)


def environment_wrench(pose, vel, env: Environment) -> np.ndarray:
    """Unilateral spring-damper contact wrench on the end-effector.

    Per wall, penetration is measured along the wall normal; the normal
    force is spring minus damping and clamped non-adhesive. Torque-free.
    Latches the button once its wall's normal force reaches the trigger
    level.
    """
    pose = np.asarray(pose, dtype=float)
    vel = np.asarray(vel, dtype=float)
    w = np.zeros(6)
    for i, wall in enumerate(env.walls):
        depth = float(np.dot(wall.point - pose[:3], wall.normal))
        if depth <= 0.0:
            continue
        f = wall.stiffness * depth - wall.damping * float(np.dot(vel[:3], wall.normal))
        f = max(f, 0.0)
        w[:3] += f * wall.normal
        if env.button is not None and env.button.wall == i and f >= env.button.trigger_force:
            env.button.latched = True
    return w


def sensor_models(
    w_contact,
    human: HumanInput,
    noise_sigma: float = 0.0,
    noise_sigma_est: float = 0.0,
    rng: np.random.Generator | None = None,
):
    """Split the interaction into plant input and the two measurements.

    w_env (true plant input) carries everything; the FT sensor w_s sees only
    tool-side interaction; the joint-torque estimate w_est sees everything.
    Gaussian noise is added per channel when a sigma is positive.
    """
    w_contact = np.asarray(w_contact, dtype=float)
    w_env = w_contact + human.tool_wrench + human.body_wrench
    w_s = w_contact + human.tool_wrench
    w_est = w_env.copy()
    if noise_sigma > 0.0:
        w_s = w_s + rng.normal(0.0, noise_sigma, 6)
    if noise_sigma_est > 0.0:
        w_est = w_est + rng.normal(0.0, noise_sigma_est, 6)
    return w_s, w_est, w_env


def plant_step(pose, vel, w_cmd, w_env, plant: PlantModel, dt: float):
    """Semi-implicit Euler step of the task-space dynamics.

    Acceleration from the force balance, velocity first, then pose with the
    new velocity; the orientation part is wrapped to (-pi, pi].
    """
    pose = np.asarray(pose, dtype=float)
    vel = np.asarray(vel, dtype=float)
    acc = plant.m_inv @ (
        np.asarray(w_cmd, dtype=float)
        + np.asarray(w_env, dtype=float)
        - plant.c_x @ vel
        - plant.g_x
    )
    vel_new = vel + acc * dt
    pose_new = pose + vel_new * dt
    pose_new[3:] = mg.wrap_angles(pose_new[3:])
    return pose_new, vel_new


TRACE_COLUMNS = (
    ["time"]
    + [f"pose_{a}" for a in ("x", "y", "z", "rx", "ry", "rz")]
    + [f"vel_{a}" for a in ("x", "y", "z", "wx", "wy", "wz")]
    + [f"xdot_ref_{a}" for a in ("x", "y", "z")]
    + [f"w_ref_{a}" for a in ("fx", "fy", "fz", "tx", "ty", "tz")]
    + [f"w_s_{a}" for a in ("fx", "fy", "fz", "tx", "ty", "tz")]
    + [f"w_est_{a}" for a in ("fx", "fy", "fz", "tx", "ty", "tz")]
    + [f"w_env_{a}" for a in ("fx", "fy", "fz", "tx", "ty", "tz")]
    + ["alpha_h", "psi", "gamma", "zeta", "phi", "i_min", "residual"]
)


class SimTrace:
    """Column store of one run; fixed schema, strictly increasing time."""

    def __init__(self, data: np.ndarray):
        if data.ndim != 2 or data.shape[1] != len(TRACE_COLUMNS):
            raise ValueError(f"trace must have {len(TRACE_COLUMNS)} columns")
        self.data = data

    def __len__(self) -> int:
        return self.data.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, TRACE_COLUMNS.index(name)]

    def block(self, prefix: str) -> np.ndarray:
        idx = [i for i, c in enumerate(TRACE_COLUMNS) if c.startswith(prefix)]
        return self.data[:, idx]

    @property
    def positions(self) -> np.ndarray:
        return self.data[:, 1:4]

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(",".join(TRACE_COLUMNS) + "\n")
            for row in self.data:
                f.write(",".join(f"{v:.17g}" for v in row) + "\n")

    def write_npz(self, path) -> None:
        np.savez_compressed(path, columns=np.array(TRACE_COLUMNS), data=self.data)

    @classmethod
    def read(cls, path) -> "SimTrace":
        path = str(path)
        if path.endswith(".npz"):
            with np.load(path, allow_pickle=False) as z:
                cols = [str(c) for c in z["columns"]]
                if cols != TRACE_COLUMNS:
                    raise ConfigError(f"{path}: trace columns do not match schema")
                return cls(np.asarray(z["data"], dtype=float))
        with open(path, "r", encoding="utf-8") as f:
            header = f.readline().strip().split(",")
            if header != TRACE_COLUMNS:
                raise ConfigError(f"{path}: trace columns do not match schema")
            data = np.loadtxt(f, delimiter=",", ndmin=2)
        return cls(data)

    def summary(self, goal=None, obstacles=None) -> dict:
        """Scalar statistics of the run; trace-derived fields are exactly
        reproducible from the file alone."""
        out = {
            "steps": int(len(self)),
            "duration": float(self.column("time")[-1]) if len(self) else 0.0,
            "max_residual": float(self.column("residual").max()),
            "max_ref_speed": float(np.linalg.norm(self.block("xdot_ref_"), axis=1).max()),
            "max_alpha_h": float(self.column("alpha_h").max()),
            "final_alpha_h": float(self.column("alpha_h")[-1]),
            "psi_min": float(self.column("psi").min()),
            "psi_max": float(self.column("psi").max()),
        }
        if goal is not None:
            out["final_goal_distance"] = float(
                np.linalg.norm(self.positions[-1] - np.asarray(goal, dtype=float))
            )
        if obstacles:
            dmin = min(
                float(np.linalg.norm(self.positions - obs.center, axis=1).min())
                for obs in obstacles
            )
            out["min_obstacle_distance"] = dmin
        return out


@dataclass
class ScenarioConfig:
    """Everything needed to reproduce one run.

    ``demo`` may be given directly (tests, synthetic tasks) or via
    ``demo_paths`` to be loaded by the config layer. ``start``/``goal``
    default to the demonstration's own endpoints.
    """

    demo: Demonstration
    start: np.ndarray | None = None
    goal: np.ndarray | None = None
    obstacles: list[mg.ObstacleSphere] = field(default_factory=list)
    motion: mg.MotionParams = field(default_factory=mg.MotionParams)
    authority: AuthorityParams = field(default_factory=AuthorityParams)
    gains: ctrl.ControllerGains = field(default_factory=ctrl.ControllerGains)
    plant: PlantModel = field(default_factory=PlantModel)
    walls: list[Wall] = field(default_factory=list)
    button: Button | None = None
    human_timeline: list[HumanSegment] = field(default_factory=list)
    dt: float = 1e-3
    duration: float = 10.0
    seed: int = 0
    noise_sigma: float = 0.0
    noise_sigma_est: float = 0.0
    sensor_lag: float = 0.0
    psi_lower: float = 10.0
    psi_upper: float = 20.0
    s_floor: float = 0.1
    alpha0: float = 0.0
    initial_pose: np.ndarray | None = None
    ref_accel_lin: float = 8.0
    ref_accel_ang: float = 30.0
    # tracking-error state cap: bounds impedance memory so take-overs park the
    # robot and the velocity field (not the spring) brings it back
    error_sat_lin: float = 0.005
    error_sat_ang: float = 0.1
    snapshot_decimation: int = 33
    controller_enabled: bool = True
    label: str = "scenario"

    def __post_init__(self):
        if not (1e-4 <= self.dt <= 1e-2):
            raise ConfigError(f"dt must be in [1e-4, 1e-2] s, got {self.dt}")
        if self.duration <= 0:
            raise ConfigError(f"duration must be positive, got {self.duration}")
        if self.start is not None:
            self.start = np.asarray(self.start, dtype=float)
        if self.goal is not None:
            self.goal = np.asarray(self.goal, dtype=float)

    def build_environment(self) -> Environment:
        walls = [replace(w) for w in self.walls]
        button = replace(self.button) if self.button is not None else None
        return Environment(walls=walls, button=button)


def _slew(current: np.ndarray, target: np.ndarray, max_step: float) -> np.ndarray:
    delta = target - current
    n = float(np.linalg.norm(delta))
    if n <= max_step or n == 0.0:
        return target.copy()
    return current + delta * (max_step / n)


def _saturate_block(v: np.ndarray, limit: float) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n <= limit or n == 0.0:
        return v
    return v * (limit / n)


class Simulation:
    """Single-owner, single-threaded simulation of one scenario.

    All state lives on the instance; ``step`` advances one control period.
    Snapshots and traces are copies, safe to hand to other threads.
    """

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        demo = cfg.demo
        self.start = np.asarray(
            cfg.start if cfg.start is not None else demo.positions[:, 0], dtype=float
        )
        self.goal = np.asarray(
            cfg.goal if cfg.goal is not None else demo.positions[:, -1], dtype=float
        )
        retargeted = cfg.start is not None or cfg.goal is not None
        if not retargeted and np.linalg.norm(demo.chord()) <= 1e-6:
            # closed or in-place task: reproduce where it was demonstrated
            align = identity_alignment(demo)
        else:
            align = compute_alignment(demo, self.start, self.goal)
        self.td: TransformedDemo = transform_demo(demo, align)
        self.obstacles: dict[int, mg.ObstacleSphere] = dict(enumerate(cfg.obstacles))
        self._next_obstacle_id = len(cfg.obstacles)
        self.env = cfg.build_environment()
        self.rng = np.random.default_rng(cfg.seed)

        self.pose = np.zeros(6)
        if cfg.initial_pose is not None:
            self.pose = np.asarray(cfg.initial_pose, dtype=float).copy()
        else:
            self.pose[:3] = self.td.positions[:, 0]
            self.pose[3:] = self.td.eulers[:, 0]
        self.vel = np.zeros(6)

        self.authority = AuthorityState(alpha_h=cfg.alpha0)
        tank = ctrl.EnergyTank.full(cfg.psi_lower, cfg.psi_upper, cfg.s_floor)
        self.ctrl_state = ctrl.ControllerState(tank=tank)
        self.e = np.zeros(6)
        self.vel_ref = np.zeros(6)
        self.w_ref = np.zeros(6)
        self.w_s_f = np.zeros(6)
        self.w_est_f = np.zeros(6)
        self.prev_i_min: int | None = None
        self.last_i_min = 0
        self.last_raw_ref = np.zeros(6)
        self.k = 0
        self.t = 0.0

        n_rows = int(round(cfg.duration / cfg.dt))
        self._rows = np.zeros((max(n_rows, 1), len(TRACE_COLUMNS)))
        self._n_rows = 0

    # -- endpoint / obstacle editing (live sessions) --------------------

    def set_goal(self, goal) -> None:
        """Re-target the task; the transform is rebuilt only for real moves."""
        goal = np.asarray(goal, dtype=float)
        if np.linalg.norm(goal - self.goal) <= GOAL_MOVE_EPS:
            return
        self.goal = goal
        self.td = transform_demo(
            self.cfg.demo, compute_alignment(self.cfg.demo, self.start, self.goal)
        )
        self.prev_i_min = None

    def add_obstacle(self, obs: mg.ObstacleSphere) -> int:
        oid = self._next_obstacle_id
        self._next_obstacle_id += 1
        self.obstacles[oid] = obs
        return oid

    def remove_obstacle(self, oid: int) -> bool:
        return self.obstacles.pop(oid, None) is not None

    # -- stepping --------------------------------------------------------

    def step(self, human: HumanInput = ZERO_HUMAN) -> None:
        """One control period in the fixed loop order."""
        cfg = self.cfg
        dt = cfg.dt

        # sensors
        w_contact = environment_wrench(self.pose, self.vel, self.env)
        w_s, w_est, w_env = sensor_models(
            w_contact, human, cfg.noise_sigma, cfg.noise_sigma_est, self.rng
        )
        if cfg.sensor_lag > 0.0:
            a = min(dt / cfg.sensor_lag, 1.0)
            self.w_s_f += a * (w_s - self.w_s_f)
            self.w_est_f += a * (w_est - self.w_est_f)
            w_s_used, w_est_used = self.w_s_f.copy(), self.w_est_f.copy()
        else:
            w_s_used, w_est_used = w_s, w_est

        # authority (previous step's reference wrench: the loop computes the
        # new reference after arbitration)
        self.authority = step_authority(
            self.authority, w_s_used, w_est_used, self.w_ref, cfg.authority
        )
        alpha = self.authority.alpha_h

        # motion generator
        out = mg.generate(
            self.pose[:3],
            self.pose[3:],
            self.td,
            self.obstacles.values(),
            alpha,
            cfg.motion,
            prev_i_min=self.prev_i_min,
        )
        self.prev_i_min = out.i_min
        self.last_i_min = out.i_min
        self.w_ref = out.w_ref
        raw_ref = np.concatenate([out.x_dot_ref, out.theta_dot_ref])
        self.last_raw_ref = raw_ref

        # commit the next reference velocity; the executed slew is the
        # reference acceleration the control law feeds forward
        vel_ref_next = np.concatenate(
            [
                _slew(self.vel_ref[:3], raw_ref[:3], cfg.ref_accel_lin * dt),
                _slew(self.vel_ref[3:], raw_ref[3:], cfg.ref_accel_ang * dt),
            ]
        )
        acc_ref = (vel_ref_next - self.vel_ref) / dt
        e_dot = self.vel - self.vel_ref
        v_pre = ctrl.storage(self.e, e_dot, cfg.plant.m_x, cfg.gains.k_bar, self.ctrl_state.tank.s)

        if cfg.controller_enabled:
            # tank flags -> auxiliary input -> control wrench -> tank step
            flags = ctrl.tank_flags(self.ctrl_state.tank, e_dot, self.w_ref)
            st = replace(self.ctrl_state, flags=flags)
            u = ctrl.auxiliary_input(self.e, e_dot, w_s_used, self.w_ref, alpha, st, cfg.gains)
            pose_ref = np.concatenate(
                [self.pose[:3] - self.e[:3], mg.wrap_angles(self.pose[3:] - self.e[3:])]
            )
            w_cmd = ctrl.control_wrench(
                pose_ref, self.vel_ref, acc_ref, self.pose, self.vel, cfg.plant, u, cfg.gains
            )
            self.ctrl_state = ctrl.tank_step(
                st, self.e, e_dot, self.w_ref, w_s_used, alpha, cfg.gains, dt
            )
        else:
            w_cmd = np.zeros(6)

        # plant step
        self.pose, self.vel = plant_step(self.pose, self.vel, w_cmd, w_env, cfg.plant, dt)

        # error state and passivity bookkeeping
        e_dot_next = self.vel - vel_ref_next
        e_next = self.e + e_dot_next * dt
        e_next = np.concatenate(
            [
                _saturate_block(e_next[:3], cfg.error_sat_lin),
                _saturate_block(e_next[3:], cfg.error_sat_ang),
            ]
        )
        v_post = ctrl.storage(
            e_next, e_dot_next, cfg.plant.m_x, cfg.gains.k_bar, self.ctrl_state.tank.s
        )
        residual = ctrl.passivity_residual(v_pre, v_post, e_dot, w_env, dt)
        self.ctrl_state = replace(self.ctrl_state, last_passivity_residual=residual)
        self.e = e_next
        self.vel_ref = vel_ref_next

        self._record(out, w_s, w_est, w_env, alpha, residual)
        self.k += 1
        self.t = self.k * dt

    def _record(self, out, w_s, w_est, w_env, alpha, residual) -> None:
        if self._n_rows >= self._rows.shape[0]:
            self._rows = np.vstack([self._rows, np.zeros_like(self._rows)])
        gamma, zeta, phi = self.ctrl_state.flags
        row = np.concatenate(
            [
                [self.t],
                self.pose,
                self.vel,
                out.x_dot_ref,
                out.w_ref,
                w_s,
                w_est,
                w_env,
                [alpha, self.ctrl_state.tank.energy, gamma, zeta, phi, out.i_min, residual],
            ]
        )
        self._rows[self._n_rows] = row
        self._n_rows += 1

    def trace(self) -> SimTrace:
        return SimTrace(self._rows[: self._n_rows].copy())

    def snapshot(self) -> dict:
        """Display-ready copy of the visible state."""
        gamma, zeta, phi = self.ctrl_state.flags
        return {
            "time": self.t,
            "pose": self.pose.tolist(),
            "vel": self.vel.tolist(),
            "x_dot_ref": self.last_raw_ref[:3].tolist(),
            "w_ref": self.w_ref.tolist(),
            "alpha_h": self.authority.alpha_h,
            "psi": self.ctrl_state.tank.energy,
            "psi_lower": self.cfg.psi_lower,
            "psi_upper": self.cfg.psi_upper,
            "flags": {"gamma": gamma, "zeta": zeta, "phi": phi},
            "i_min": int(self.last_i_min),
            "obstacles": [
                {
                    "id": oid,
                    "center": obs.center.tolist(),
                    "radius": obs.radius,
                    "v_dir": obs.v_dir.tolist(),
                }
                for oid, obs in self.obstacles.items()
            ],
            "button": None
            if self.env.button is None
            else {"latched": self.env.button.latched},
        }


def run_scenario(cfg: ScenarioConfig, live_input=None) -> SimTrace:
    """Run a full scenario and return its trace.

    ``live_input``, when given, is called once per step with the current time
    and returns a HumanInput overriding the scripted timeline.
    """
    sim = Simulation(cfg)
    n_steps = int(round(cfg.duration / cfg.dt))
    schedule = None
    if live_input is None:
        schedule = compile_timeline(cfg.human_timeline, cfg.dt, n_steps)
    for k in range(n_steps):
        if live_input is not None:
            human = live_input(k * cfg.dt) or ZERO_HUMAN
        elif schedule is not None:
            human = HumanInput(schedule[k, :6], schedule[k, 6:])
        else:
            human = ZERO_HUMAN
        sim.step(human)
    return sim.trace()
