"""Scenario configuration: one TOML file per runnable scenario.

Key tree: [demo], [motion], [authority], [controller], [plant],
[environment], [sim], plus [[obstacles]] and [[human]] arrays. Unknown keys
are rejected so typos fail loudly. Demo source paths resolve relative to the
config file.
"""

from __future__ import annotations

import os
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .authority import AuthorityParams
from .controller import ControllerGains
from .demos import DemoSet, load_demonstration, mean_trajectory
from .errors import ConfigError
from .motion import MotionParams, ObstacleSphere
from .sim import Button, HumanSegment, PlantModel, ScenarioConfig, Wall

DATASET_DIR_ENV = "COMANIP_DATASET_DIR"

_TOP_KEYS = {
    "label", "demo", "motion", "authority", "controller", "plant",
    "environment", "sim", "obstacles", "human",
}
_SECTION_KEYS = {
    "demo": {"sources", "format", "use_mean", "demo_index", "start", "goal"},
    "motion": {"lambda_lin", "lambda_ang", "v_th", "w_th", "lambda_cap", "locality_window"},
    "authority": {"a", "b", "c1", "c2", "g_plus", "g_minus", "sensor_lag", "alpha0"},
    "controller": {
        "k_bar", "k_max", "k_w", "k_i", "integral_clamp",
        "psi_lower", "psi_upper", "s_floor",
    },
    "plant": {"mass", "c_x", "g_x"},
    "environment": {"walls", "button"},
    "sim": {
        "dt", "duration", "seed", "noise_sigma", "noise_sigma_est",
        "ref_accel_lin", "ref_accel_ang", "error_sat_lin", "error_sat_ang",
        "snapshot_decimation", "initial_pose",
    },
}


def _check_keys(section: str, obj: dict) -> None:
    allowed = _SECTION_KEYS[section]
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"[{section}] has unknown keys: {sorted(unknown)}")


def _gain_matrix(value) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(6)
    return np.diag(arr)


def load_scenario(path, overrides: dict | None = None) -> ScenarioConfig:
    """Parse and validate a scenario file into a ScenarioConfig.

    ``overrides`` may carry seed/dt/duration command-line values. Raises
    ConfigError for unreadable files, unknown keys, or invariant violations.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown top-level keys: {sorted(unknown)}")

    try:
        return _build(raw, path.parent, overrides or {})
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _build(raw: dict, base_dir: Path, overrides: dict) -> ScenarioConfig:
    demo_sec = dict(raw.get("demo", {}))
    _check_keys("demo", demo_sec)
    sources = demo_sec.get("sources")
    if not sources:
        raise ConfigError("[demo] needs at least one entry in 'sources'")
    fmt = demo_sec.get("format")
    demos = [load_demonstration(_resolve(base_dir, s), fmt) for s in sources]
    if demo_sec.get("use_mean", False):
        demo = mean_trajectory(DemoSet(demos, label=str(raw.get("label", ""))))
    else:
        demo = demos[int(demo_sec.get("demo_index", 0))]

    motion_sec = dict(raw.get("motion", {}))
    _check_keys("motion", motion_sec)
    mp = MotionParams(
        lambda_lin=_three_by_three(motion_sec.get("lambda_lin", 4.0)),
        lambda_ang=_three_by_three(motion_sec.get("lambda_ang", 4.0)),
        v_th=float(motion_sec.get("v_th", 0.5)),
        w_th=float(motion_sec.get("w_th", 0.05)),
        lambda_cap=float(motion_sec.get("lambda_cap", 50.0)),
        locality_window=int(motion_sec.get("locality_window", 0)),
    )

    auth_sec = dict(raw.get("authority", {}))
    _check_keys("authority", auth_sec)
    sensor_lag = float(auth_sec.pop("sensor_lag", 0.0))
    alpha0 = float(auth_sec.pop("alpha0", 0.0))
    ap = AuthorityParams(**{k: float(v) for k, v in auth_sec.items()})

    ctrl_sec = dict(raw.get("controller", {}))
    _check_keys("controller", ctrl_sec)
    gains = ControllerGains(
        k_bar=_gain_matrix(ctrl_sec.get("k_bar", [50.0, 50.0, 50.0, 5.0, 5.0, 5.0])),
        k_max=_gain_matrix(ctrl_sec.get("k_max", [800.0, 800.0, 800.0, 30.0, 30.0, 30.0])),
        k_w=_gain_matrix(ctrl_sec.get("k_w", 0.5)),
        k_i=_gain_matrix(ctrl_sec.get("k_i", 2.0)),
        integral_clamp=float(ctrl_sec.get("integral_clamp", 50.0)),
    )

    plant_sec = dict(raw.get("plant", {}))
    _check_keys("plant", plant_sec)
    plant = PlantModel(
        m_x=np.asarray(plant_sec.get("mass", [10.0, 10.0, 10.0, 1.0, 1.0, 1.0]), dtype=float),
        c_x=np.asarray(plant_sec.get("c_x", 0.0), dtype=float),
        g_x=np.asarray(plant_sec.get("g_x", np.zeros(6)), dtype=float),
    )

    env_sec = dict(raw.get("environment", {}))
    _check_keys("environment", env_sec)
    walls = [
        Wall(
            point=np.asarray(w["point"], dtype=float),
            normal=np.asarray(w["normal"], dtype=float),
            stiffness=float(w["stiffness"]),
            damping=float(w.get("damping", 0.0)),
        )
        for w in env_sec.get("walls", [])
    ]
    button = None
    if "button" in env_sec:
        b = env_sec["button"]
        button = Button(wall=int(b["wall"]), trigger_force=float(b.get("trigger_force", 15.0)))
        if not 0 <= button.wall < len(walls):
            raise ConfigError("[environment.button] wall index out of range")

    obstacles = [
        ObstacleSphere(
            center=np.asarray(o["center"], dtype=float),
            radius=float(o["radius"]),
            v_dir=np.asarray(o.get("v_dir", [0.0, 0.0, 1.0]), dtype=float),
        )
        for o in raw.get("obstacles", [])
    ]

    human = [
        HumanSegment(
            t0=float(h["t0"]),
            t1=float(h["t1"]),
            frame=str(h["frame"]),
            wrench=np.asarray(h["wrench"], dtype=float),
        )
        for h in raw.get("human", [])
    ]

    sim_sec = dict(raw.get("sim", {}))
    _check_keys("sim", sim_sec)

    def simval(key, default):
        if key in overrides and overrides[key] is not None:
            return overrides[key]
        return sim_sec.get(key, default)

    initial_pose = sim_sec.get("initial_pose")
    return ScenarioConfig(
        demo=demo,
        start=_vec3_or_none(demo_sec.get("start")),
        goal=_vec3_or_none(demo_sec.get("goal")),
        obstacles=obstacles,
        motion=mp,
        authority=ap,
        gains=gains,
        plant=plant,
        walls=walls,
        button=button,
        human_timeline=human,
        dt=float(simval("dt", 1e-3)),
        duration=float(simval("duration", 10.0)),
        seed=int(simval("seed", 0)),
        noise_sigma=float(sim_sec.get("noise_sigma", 0.0)),
        noise_sigma_est=float(sim_sec.get("noise_sigma_est", 0.0)),
        sensor_lag=sensor_lag,
        psi_lower=float(ctrl_sec.get("psi_lower", 10.0)),
        psi_upper=float(ctrl_sec.get("psi_upper", 20.0)),
        s_floor=float(ctrl_sec.get("s_floor", 0.1)),
        alpha0=alpha0,
        initial_pose=None if initial_pose is None else np.asarray(initial_pose, dtype=float),
        ref_accel_lin=float(sim_sec.get("ref_accel_lin", 8.0)),
        ref_accel_ang=float(sim_sec.get("ref_accel_ang", 30.0)),
        error_sat_lin=float(sim_sec.get("error_sat_lin", 0.005)),
        error_sat_ang=float(sim_sec.get("error_sat_ang", 0.1)),
        snapshot_decimation=int(sim_sec.get("snapshot_decimation", 33)),
        label=str(raw.get("label", "scenario")),
    )


def _three_by_three(value) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(3)
    if arr.ndim == 1:
        return np.diag(arr)
    return arr


def _vec3_or_none(value):
    if value is None:
        return None
    return np.asarray(value, dtype=float)


def _resolve(base_dir: Path, source: str) -> Path:
    p = Path(os.path.expanduser(str(source)))
    return p if p.is_absolute() else (base_dir / p)


def dataset_dir(cli_value: str | None = None) -> Path:
    """Dataset directory: CLI flag, else environment, else ./datasets."""
    if cli_value:
        return Path(cli_value)
    return Path(os.environ.get(DATASET_DIR_ENV, "datasets"))
