"""YAML experiment configuration.

Every section and key is optional; omitted values take the defaults listed
in ``SCHEMA`` (``source`` says whether a default is a published value or a
synthetic choice of this package).  Unknown sections or keys, wrong types
and out-of-range values raise :class:`ConfigError` naming the file and line.

Example::

    camera: {tilt: 0.12}
    control: {t_thresh: 0.10}
    simulation: {perception_fps: 30}
    scenario: {n_throws: 20, speed_range: [3.0, 4.0]}
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import yaml

from ..ballistics import NoiseModel
from ..errors import ConfigError, QuadCatchError
from ..frames import CameraIntrinsics
from ..gmm import read_dataset, read_mixture, select_k
from ..leg_control import NOMINAL_Q, CartesianGains, LegGeometry
from ..selector import METHODS
from ..simulator import DEFAULT_DEMO_STD, SimConfig, default_camera
from .scenarios import Scenario, catalog


@dataclass(frozen=True)
class Key:
    kind: str
    default: Any = None
    check: Optional[str] = None
    optional: bool = False
    source: str = "synthetic"
    choices: Tuple[str, ...] = ()


_CAM = default_camera()
_SIM = SimConfig.__dataclass_fields__
_LEG = LegGeometry()


def _d(name):
    return _SIM[name].default


SCHEMA: Dict[str, Dict[str, Key]] = {
    "camera": {
        "fx": Key("float", _CAM.fx, "pos"),
        "fy": Key("float", _CAM.fy, "pos"),
        "ppx": Key("float", _CAM.ppx),
        "ppy": Key("float", _CAM.ppy),
        "tilt": Key("float", _CAM.tilt),
        "width": Key("int", _CAM.width, "pos", optional=True),
        "height": Key("int", _CAM.height, "pos", optional=True),
        "min_depth": Key("float", _CAM.min_depth, "nonneg"),
        "offset": Key("vec3", _CAM.offset),
    },
    "noise": {
        "sigma_px": Key("float", 1.0, "nonneg"),
        "sigma_depth": Key("float", 0.01, "nonneg"),
        "drop_prob": Key("float", 0.0, "prob"),
    },
    "predictor": {
        "lam": Key("float", 1.0, "nonneg", source="published"),
        "g": Key("float", 9.81, "pos", source="published"),
        "delta_min": Key("float", _d("delta_min"), "nonneg"),
    },
    "selector": {
        "method": Key("str", _d("method"), choices=METHODS),
        "x_offset": Key("float", _d("x_offset"), source="published"),
        "t_horizon": Key("float", _d("t_horizon"), "pos"),
    },
    "control": {
        "kp": Key("float", 400.0, "nonneg", source="published"),
        "kd": Key("float", 8.0, "nonneg", source="published"),
        "kd_joint": Key("float", 1.0, "nonneg", source="published"),
        "t_thresh": Key("float", _d("t_thresh"), "nonneg", source="published"),
        "y_opened": Key("float", _d("y_opened"), "nonneg", source="published"),
        "y_closed": Key("float", _d("y_closed"), "nonneg", source="published"),
    },
    "leg": {
        "l_hip": Key("float", _LEG.l_hip, "pos"),
        "l_thigh": Key("float", _LEG.l_thigh, "pos"),
        "l_calf": Key("float", _LEG.l_calf, "pos"),
        "shoulder_pos": Key("vec3", _LEG.shoulder_pos),
        "q_min": Key("vec3", _LEG.q_min),
        "q_max": Key("vec3", _LEG.q_max),
        "nominal_q": Key("vec3", NOMINAL_Q),
        "workspace_mode": Key("str", _d("workspace_mode"), choices=("inscribed", "bounding")),
        "workspace_shrink": Key("float", _d("workspace_shrink"), "frac"),
    },
    "simulation": {
        "control_dt": Key("float", _d("control_dt"), "pos", source="published"),
        "perception_fps": Key("float", _d("perception_fps"), "pos", source="published"),
        "joint_inertia": Key("vec3", _d("joint_inertia"), "pos"),
        "joint_damping": Key("float", _d("joint_damping"), "nonneg"),
        "capture_radius": Key("float", _d("capture_radius"), "pos"),
        "object_halfwidth": Key("float", _d("object_halfwidth"), "nonneg"),
        "max_episode_time": Key("float", _d("max_episode_time"), "pos"),
        "settle_time": Key("float", _d("settle_time"), "nonneg"),
        "latency_ticks": Key("int", _d("latency_ticks"), "nonneg"),
        "pre_release_frames": Key("int", _d("pre_release_frames"), "nonneg"),
    },
    "gmm": {
        "demo_mean": Key("vec3", None, optional=True),
        "demo_std": Key("vec3", DEFAULT_DEMO_STD, "pos"),
        "n_demos": Key("int", _d("n_demos"), "pos", source="published"),
        "seed": Key("int", _d("demo_seed"), "nonneg"),
        "k_max": Key("int", _d("k_max"), "pos"),
        "dataset": Key("path", None, optional=True),
        "mixture": Key("path", None, optional=True),
    },
    # scenario keys override the catalog entry only when present
    "scenario": {
        "n_throws": Key("int", None, "pos"),
        "seed": Key("int", None, "nonneg"),
        "distance": Key("float", None, "pos", source="published"),
        "lateral_range": Key("vec2", None),
        "height_range": Key("vec2", None),
        "aim": Key("vec3", None, optional=True),
        "aim_std": Key("vec3", None, "nonneg"),
        "aim_z_range": Key("vec2", None, optional=True),
        "speed_range": Key("vec2", None, "pos"),
        "release_time": Key("float", None, "nonneg"),
    },
}


def _where(source: str, node) -> str:
    return f"{source}:{node.start_mark.line + 1}"


def _coerce(value, key: Key, name: str, loc: str):
    if value is None:
        if key.optional:
            return None
        raise ConfigError(f"{loc}: {name} may not be null")
    kind = key.kind
    try:
        if kind == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError
            out = float(value)
            vals = (out,)
        elif kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError
            out = value
            vals = (out,)
        elif kind in ("str", "path"):
            if not isinstance(value, str):
                raise TypeError
            out = value
            vals = ()
        else:
            n = 3 if kind == "vec3" else 2
            if not isinstance(value, list) or len(value) != n:
                raise TypeError
            if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
                raise TypeError
            out = tuple(float(v) for v in value)
            vals = out
    except TypeError:
        raise ConfigError(f"{loc}: {name} must be a {kind}, got {value!r}") from None
    if any(not math.isfinite(v) for v in vals):
        raise ConfigError(f"{loc}: {name} must be finite")
    bad = {
        "pos": lambda v: v <= 0,
        "nonneg": lambda v: v < 0,
        "prob": lambda v: not 0 <= v <= 1,
        "frac": lambda v: not 0 <= v < 1,
    }.get(key.check)
    if bad is not None and any(bad(v) for v in vals):
        rule = {"pos": "> 0", "nonneg": ">= 0", "prob": "in [0, 1]", "frac": "in [0, 1)"}[key.check]
        raise ConfigError(f"{loc}: {name} must be {rule}, got {value!r}")
    if key.choices and out not in key.choices:
        raise ConfigError(f"{loc}: {name} must be one of {key.choices}, got {value!r}")
    return out


@dataclass
class ExperimentConfig:
    """Resolved configuration: a ready :class:`SimConfig` plus scenario overrides."""

    sim: SimConfig
    values: Dict[str, Dict[str, Any]]
    scenario_overrides: Dict[str, Any] = field(default_factory=dict)
    source: str = "<defaults>"

    def scenario(self, name: str, seed: Optional[int] = None) -> Scenario:
        """Catalog scenario ``name`` with this file's overrides applied."""
        cat = catalog(shoulder_z=self.sim.leg.shoulder_pos[2])
        if name not in cat:
            raise ConfigError(f"unknown scenario {name!r}; available: {sorted(cat)}")
        sc = cat[name]
        ov = dict(self.scenario_overrides)
        top = {k: ov.pop(k) for k in ("n_throws", "seed") if k in ov}
        sampler = replace(sc.sampler, **ov) if ov else sc.sampler
        sc = replace(sc, sampler=sampler, **top)
        if seed is not None:
            sc = replace(sc, seed=seed)
        return sc


def _resolve(values: Dict[str, Dict[str, Any]], base_dir: Path, source: str) -> SimConfig:
    cam, noise, pred = values["camera"], values["noise"], values["predictor"]
    sel, ctl, leg, sim, gm = values["selector"], values["control"], values["leg"], values["simulation"], values["gmm"]
    camera = CameraIntrinsics(**cam)
    geom = LegGeometry(leg["l_hip"], leg["l_thigh"], leg["l_calf"], 1, leg["shoulder_pos"], leg["q_min"], leg["q_max"])
    mixture = None
    if gm["mixture"] is not None:
        mixture = read_mixture(base_dir / gm["mixture"])
    elif gm["dataset"] is not None:
        mixture = select_k(read_dataset(base_dir / gm["dataset"]), range(1, gm["k_max"] + 1), seed=gm["seed"])
    return SimConfig(
        control_dt=sim["control_dt"],
        perception_fps=sim["perception_fps"],
        joint_inertia=sim["joint_inertia"],
        joint_damping=sim["joint_damping"],
        capture_radius=sim["capture_radius"],
        object_halfwidth=sim["object_halfwidth"],
        max_episode_time=sim["max_episode_time"],
        settle_time=sim["settle_time"],
        latency_ticks=sim["latency_ticks"],
        pre_release_frames=sim["pre_release_frames"],
        method=sel["method"],
        gains=CartesianGains.isotropic(ctl["kp"], ctl["kd"], ctl["kd_joint"]),
        t_thresh=ctl["t_thresh"],
        y_opened=ctl["y_opened"],
        y_closed=ctl["y_closed"],
        lam=pred["lam"],
        g=pred["g"],
        delta_min=pred["delta_min"],
        camera=camera,
        noise=NoiseModel(noise["sigma_px"], noise["sigma_depth"], noise["drop_prob"]),
        leg=geom,
        nominal_q=leg["nominal_q"],
        workspace_mode=leg["workspace_mode"],
        workspace_shrink=leg["workspace_shrink"],
        x_offset=sel["x_offset"],
        t_horizon=sel["t_horizon"],
        mixture=mixture,
        demo_mean=gm["demo_mean"],
        demo_std=gm["demo_std"],
        n_demos=gm["n_demos"],
        demo_seed=gm["seed"],
        k_max=gm["k_max"],
    )


def parse_config(text: str, source: str = "<string>", base_dir: Union[str, Path] = ".") -> ExperimentConfig:
    """Parse YAML text into an :class:`ExperimentConfig`.

    Raises:
        ConfigError: syntax errors, unknown keys, bad types or ranges.
    """
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f":{mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"{source}{line}: {getattr(exc, 'problem', None) or exc}") from None

    values = {sec: {k: key.default for k, key in keys.items()} for sec, keys in SCHEMA.items()}
    overrides: Dict[str, Any] = {}
    if root is not None:
        if not isinstance(root, yaml.MappingNode):
            raise ConfigError(f"{_where(source, root)}: top level must be a mapping of sections")
        for sec_node, body_node in root.value:
            sec = sec_node.value
            if sec not in SCHEMA:
                raise ConfigError(f"{_where(source, sec_node)}: unknown section {sec!r}; expected one of {sorted(SCHEMA)}")
            body = data[sec]
            if body is None:
                continue
            if not isinstance(body_node, yaml.MappingNode):
                raise ConfigError(f"{_where(source, body_node)}: section {sec!r} must be a mapping")
            for key_node, val_node in body_node.value:
                k = key_node.value
                if k not in SCHEMA[sec]:
                    raise ConfigError(f"{_where(source, key_node)}: unknown key {sec}.{k}; expected one of {sorted(SCHEMA[sec])}")
                v = _coerce(body[k], SCHEMA[sec][k], f"{sec}.{k}", _where(source, val_node))
                values[sec][k] = v
                if sec == "scenario":
                    overrides[k] = v
    try:
        sim = _resolve(values, Path(base_dir), source)
    except (QuadCatchError, OSError) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return ExperimentConfig(sim, values, overrides, source)


def load_config(path: Union[str, Path, None] = None) -> ExperimentConfig:
    """Load a config file; ``None`` gives the defaults."""
    if path is None:
        return parse_config("", "<defaults>")
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    return parse_config(text, str(p), p.parent)
