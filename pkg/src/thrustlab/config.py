"""Run configuration: a sectioned YAML file that fully determines a run.

Sections: body, thrusters, sim, task, ppo, eval, planner. Every key is
optional; unknown keys and bad values are rejected with the file line.
"""

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .agent.network import default_arch
from .agent.ppo import PPOHyperparams
from .dynamics import BodyParams, ThrusterLayout
from .errors import ConfigInvalid
from .tasks import TaskKind, TaskParams
from .vecenv import EnvSpec

CONTROL_RATES = (5, 10)


@dataclass
class BodySection:
    mass: float = 5.0
    inertia: list = None  # diagonal [Ixx, Iyy, Izz] or full 3x3


@dataclass
class ThrusterSection:
    magnitude: float = 1.0
    half_width: float = 0.25
    points: list = None  # n x 3; default layout when omitted
    directions: list = None


@dataclass
class SimSection:
    control_hz: int = 10
    substeps: int = 10
    horizon: int = 500
    max_distance: float = 10.0


@dataclass
class TaskSection:
    kind: str = "gotoxy"
    train_radius: list = None
    eval_radius: list = None
    goal_speed_max: float = 0.5
    goal_omega_max: float = 0.5
    sigma_position: float = 0.5
    sigma_rotation: float = 0.25
    sigma_velocity: float = 0.2
    sigma_omega: float = 0.2
    action_cost: float = 0.01


@dataclass
class PPOSection:
    epochs: int = 2000
    num_envs: int = 256
    horizon: int = 32
    minibatches: int = 4
    update_epochs: int = 4
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    vf_coef: float = 0.5
    ent_coef: float = 0.005
    lr: float = 3e-4
    max_grad_norm: float = 1.0
    normalize_value: bool = True
    hidden: int = None
    layers: int = None
    checkpoint_every: int = 100


@dataclass
class EvalSection:
    n_envs: int = 1024
    steps: int = 500
    position_threshold: float = 0.2
    rotation_threshold: float = 0.1
    velocity_threshold: float = 0.1
    stochastic: bool = False


@dataclass
class PlannerSection:
    radius: float = 0.25
    cruise: float = 0.25
    spacing: float = 0.05
    circle_radius: float = 1.5
    spiral_r0: float = 0.2
    spiral_growth: float = 0.08
    spiral_r_max: float = 2.0
    square_side: float = 2.0
    steps: int = None  # defaults to ~1.1 traversals of the path


SECTIONS = {
    "body": BodySection,
    "thrusters": ThrusterSection,
    "sim": SimSection,
    "task": TaskSection,
    "ppo": PPOSection,
    "eval": EvalSection,
    "planner": PlannerSection,
}

# keys whose default value is taken from the source publication; everything
# else is an engineering default and is flagged in manifests
PAPER_KEYS = {
    "sim.control_hz",
    "sim.substeps",
    "sim.horizon",
    "task.kind",
    "task.eval_radius",
    "ppo.epochs",
    "ppo.hidden",
    "ppo.layers",
    "eval.n_envs",
    "eval.steps",
    "planner.radius",
    "planner.cruise",
}


def _kind_of(value, want):
    if want is bool:
        return isinstance(value, bool)
    if want is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if want is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if want is list:
        return isinstance(value, list)
    if want is str:
        return isinstance(value, str)
    return True


def _type_name(t):
    return {float: "number", int: "integer", bool: "boolean", list: "list", str: "string"}.get(t, str(t))


@dataclass
class RunConfig:
    body: BodySection = field(default_factory=BodySection)
    thrusters: ThrusterSection = field(default_factory=ThrusterSection)
    sim: SimSection = field(default_factory=SimSection)
    task: TaskSection = field(default_factory=TaskSection)
    ppo: PPOSection = field(default_factory=PPOSection)
    eval: EvalSection = field(default_factory=EvalSection)
    planner: PlannerSection = field(default_factory=PlannerSection)

    # ---- construction -------------------------------------------------

    @classmethod
    def from_dict(cls, data, source="<dict>", lines=None):
        lines = lines or {}
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigInvalid(f"{source}: top level must be a mapping of sections")
        cfg = cls()
        for section, values in data.items():
            where = _where(source, lines.get(section))
            if section not in SECTIONS:
                raise ConfigInvalid(f"{where}: unknown section {section!r} (expected one of {sorted(SECTIONS)})")
            if values is None:
                continue
            if not isinstance(values, dict):
                raise ConfigInvalid(f"{where}: section {section!r} must be a mapping")
            target = getattr(cfg, section)
            known = {f.name: f for f in fields(target)}
            for key, value in values.items():
                where = _where(source, lines.get(f"{section}.{key}"))
                if key not in known:
                    raise ConfigInvalid(f"{where}: unknown key {section}.{key}")
                want = known[key].type
                if value is not None and not _kind_of(value, want):
                    raise ConfigInvalid(f"{where}: {section}.{key} must be a {_type_name(want)}, got {value!r}")
                if want is float and value is not None:
                    value = float(value)
                setattr(target, key, value)
        try:
            cfg.validate()
        except ConfigInvalid as exc:
            key = getattr(exc, "key", None)
            raise ConfigInvalid(f"{_where(source, lines.get(key))}: {exc}") from None
        return cfg

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigInvalid(f"cannot read config file {path}: {exc.strerror or exc}") from None
        return cls.from_yaml(text, source=str(path))

    @classmethod
    def from_yaml(cls, text, source="<string>"):
        try:
            loader = yaml.SafeLoader(text)
            try:
                root = loader.get_single_node()
                lines = _key_lines(root)
                data = loader.construct_document(root) if root is not None else {}
            finally:
                loader.dispose()
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark
            line = mark.line + 1 if mark is not None else "?"
            raise ConfigInvalid(f"{source}:{line}: YAML syntax error: {exc.problem}") from None
        return cls.from_dict(data, source=source, lines=lines)

    @classmethod
    def for_task(cls, kind):
        """Shipped default config for a task."""
        kind = TaskKind(kind)
        text = resources.files("thrustlab.configs").joinpath(f"{kind.value}.yaml").read_text()
        return cls.from_yaml(text, source=f"configs/{kind.value}.yaml")

    # ---- validation ------------------------------------------------------

    def validate(self):
        def fail(key, msg):
            exc = ConfigInvalid(f"{key}: {msg}")
            exc.key = key
            raise exc

        try:
            kind = TaskKind(self.task.kind)
        except ValueError:
            fail("task.kind", f"unknown task {self.task.kind!r} (expected one of {[k.value for k in TaskKind]})")
        if self.sim.control_hz not in CONTROL_RATES:
            fail("sim.control_hz", f"must be one of {CONTROL_RATES}, got {self.sim.control_hz}")
        positive = {
            "body.mass": self.body.mass,
            "thrusters.magnitude": self.thrusters.magnitude,
            "thrusters.half_width": self.thrusters.half_width,
            "sim.substeps": self.sim.substeps,
            "sim.horizon": self.sim.horizon,
            "sim.max_distance": self.sim.max_distance,
            "task.sigma_position": self.task.sigma_position,
            "task.sigma_rotation": self.task.sigma_rotation,
            "task.sigma_velocity": self.task.sigma_velocity,
            "task.sigma_omega": self.task.sigma_omega,
            "ppo.num_envs": self.ppo.num_envs,
            "ppo.lr": self.ppo.lr,
            "ppo.max_grad_norm": self.ppo.max_grad_norm,
            "ppo.checkpoint_every": self.ppo.checkpoint_every,
            "eval.n_envs": self.eval.n_envs,
            "planner.radius": self.planner.radius,
            "planner.cruise": self.planner.cruise,
            "planner.spacing": self.planner.spacing,
            "planner.circle_radius": self.planner.circle_radius,
            "planner.spiral_growth": self.planner.spiral_growth,
            "planner.square_side": self.planner.square_side,
        }
        for key, value in positive.items():
            if not value > 0:
                fail(key, f"must be positive, got {value}")
        for key, value in {
            "task.goal_speed_max": self.task.goal_speed_max,
            "task.goal_omega_max": self.task.goal_omega_max,
            "task.action_cost": self.task.action_cost,
            "ppo.vf_coef": self.ppo.vf_coef,
            "ppo.ent_coef": self.ppo.ent_coef,
            "eval.steps": self.eval.steps,
            "eval.position_threshold": self.eval.position_threshold,
            "eval.rotation_threshold": self.eval.rotation_threshold,
            "eval.velocity_threshold": self.eval.velocity_threshold,
        }.items():
            if value < 0:
                fail(key, f"must be >= 0, got {value}")
        for key in ("task.train_radius", "task.eval_radius"):
            r = getattr(self.task, key.split(".")[1])
            if r is not None and (
                len(r) != 2 or not all(_kind_of(x, float) for x in r) or not 0 <= r[0] <= r[1]
            ):
                fail(key, f"must be [lo, hi] with 0 <= lo <= hi, got {r}")
        for key in ("ppo.hidden", "ppo.layers", "planner.steps"):
            value = getattr(*_split(self, key))
            if value is not None and value < 1:
                fail(key, f"must be >= 1, got {value}")
        if self.planner.spacing > self.planner.radius:
            fail("planner.spacing", "must not exceed the look-ahead radius")
        if self.planner.spiral_r_max <= self.planner.spiral_r0 or self.planner.spiral_r0 < 0:
            fail("planner.spiral_r_max", "need 0 <= spiral_r0 < spiral_r_max")
        try:
            PPOHyperparams(**self._ppo_kwargs())
        except ConfigInvalid as exc:
            name = str(exc).split()[0]
            fail(f"ppo.{name}" if hasattr(self.ppo, name) else "ppo", str(exc))
        for key, builder in (("body", self.body_params), ("thrusters", self.layout)):
            try:
                builder()
            except ConfigInvalid as exc:
                fail(key, str(exc))
        try:
            self.env_spec()
        except ConfigInvalid as exc:
            fail("thrusters", str(exc))
        return kind

    # ---- derived objects ----------------------------------------------

    @property
    def kind(self):
        return TaskKind(self.task.kind)

    @property
    def control_dt(self):
        return 1.0 / self.sim.control_hz

    def body_params(self):
        inertia = self.body.inertia
        if inertia is None:
            inertia = [0.05, 0.05, 0.078]
        try:
            return BodyParams(self.body.mass, np.asarray(inertia, dtype=np.float64))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigInvalid):
                raise
            raise ConfigInvalid(f"bad inertia {inertia!r}") from None

    def layout(self):
        t = self.thrusters
        if (t.points is None) != (t.directions is None):
            raise ConfigInvalid("thrusters.points and thrusters.directions must be given together")
        if t.points is None:
            if self.kind.planar:
                return ThrusterLayout.default_planar(t.half_width, t.magnitude)
            return ThrusterLayout.default_spatial(t.half_width, t.magnitude)
        try:
            points = np.asarray(t.points, dtype=np.float64)
            directions = np.asarray(t.directions, dtype=np.float64)
        except (TypeError, ValueError):
            raise ConfigInvalid("thruster points/directions must be n x 3 numeric lists") from None
        if points.ndim != 2 or points.shape[1] != 3 or directions.shape != points.shape:
            raise ConfigInvalid("thruster points/directions must both be n x 3")
        norms = np.linalg.norm(directions, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ConfigInvalid("thruster directions must be non-zero")
        return ThrusterLayout(points, directions / norms, t.magnitude)

    def task_params(self):
        t = self.task
        return TaskParams(
            train_radius=None if t.train_radius is None else tuple(t.train_radius),
            eval_radius=None if t.eval_radius is None else tuple(t.eval_radius),
            goal_speed_max=t.goal_speed_max,
            goal_omega_max=t.goal_omega_max,
            sigma_position=t.sigma_position,
            sigma_rotation=t.sigma_rotation,
            sigma_velocity=t.sigma_velocity,
            sigma_omega=t.sigma_omega,
            action_cost=t.action_cost,
            horizon=self.sim.horizon,
            max_distance=self.sim.max_distance,
        )

    def env_spec(self):
        return EnvSpec(
            kind=self.kind,
            task=self.task_params(),
            body=self.body_params(),
            layout=self.layout(),
            control_dt=self.control_dt,
            substeps=self.sim.substeps,
        )

    def _ppo_kwargs(self):
        p = self.ppo
        names = {f.name for f in fields(PPOHyperparams)}
        return {k: v for k, v in asdict(p).items() if k in names}

    def ppo_hparams(self):
        return PPOHyperparams(**self._ppo_kwargs())

    def arch(self):
        hidden, layers = default_arch(self.kind.planar)
        return (self.ppo.hidden or hidden, self.ppo.layers or layers)

    # ---- serialization -------------------------------------------------

    def to_dict(self):
        return {name: asdict(getattr(self, name)) for name in SECTIONS}

    def resolved(self):
        """Copy with every family-dependent default filled in."""
        cfg = copy.deepcopy(self)
        kind = self.kind
        params = self.task_params()
        cfg.task.train_radius = list(params.radius(kind, "train"))
        cfg.task.eval_radius = list(params.radius(kind, "eval"))
        cfg.ppo.hidden, cfg.ppo.layers = self.arch()
        cfg.body.inertia = self.body_params().inertia.tolist()
        return cfg

    def config_hash(self):
        blob = json.dumps(self.resolved().to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_yaml(self):
        return yaml.safe_dump(self.resolved().to_dict(), sort_keys=False)

    def override(self, **changes):
        """Copy with ``section.key`` style overrides applied (None values skipped)."""
        cfg = copy.deepcopy(self)
        for dotted, value in changes.items():
            if value is None:
                continue
            section, key = dotted.split(".")
            setattr(getattr(cfg, section), key, value)
        cfg.validate()
        return cfg

    def nonpaper_defaults(self):
        """Dotted keys holding engineering defaults rather than published values."""
        base = RunConfig(task=TaskSection(kind=self.task.kind)).resolved().to_dict()
        mine = self.resolved().to_dict()
        out = {}
        for section, values in mine.items():
            for key, value in values.items():
                dotted = f"{section}.{key}"
                if dotted not in PAPER_KEYS and value == base[section][key]:
                    out[dotted] = value
        return out


def _split(cfg, dotted):
    section, key = dotted.split(".")
    return getattr(cfg, section), key


def _where(source, line):
    return f"{source}:{line}" if line else source


def _key_lines(root):
    """Map 'section' and 'section.key' to 1-based line numbers."""
    lines = {}
    if not isinstance(root, yaml.MappingNode):
        return lines
    for key_node, value_node in root.value:
        section = key_node.value
        lines[section] = key_node.start_mark.line + 1
        if isinstance(value_node, yaml.MappingNode):
            for k, _ in value_node.value:
                lines[f"{section}.{k.value}"] = k.start_mark.line + 1
    return lines
