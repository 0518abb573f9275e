"""TOML run configuration mapped onto the library's dataclasses.

Each table is read into the dataclass that consumes it; unknown or missing
keys raise :class:`ConfigError` naming the offending ``table.key``.
"""

import dataclasses
import sys
from dataclasses import dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .constitutive import FiberProperties, MatrixProperties
from .errors import ContractError, DomainError
from .macrosolver import CouponSpec
from .pathgen import CreepProtocol, CsrProtocol, PathSpec
from .prnn import TrainSpec
from .stepping import AdaptiveStepping


class ConfigError(ContractError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str = "voigt"  # voigt | rve
    fiber_fraction: float = 0.4
    rve_divisions: int = 4


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "file"  # file | voigt-prnn | voigt-oracle
    file: str = ""
    n_points: int = 2


@dataclass(frozen=True)
class RunOptions:
    lateral_free: bool = False
    rotation: bool = True
    oblique_auto: bool = True  # compute the tab angle from the initial tangent
    vtk_every: int = 0  # 0 writes no field files


@dataclass(frozen=True)
class StudySpec:
    kind: str = "mode-sweep"
    restarts: int = 10
    points: tuple = (4, 6, 8)
    curves: tuple = (36, 72, 144)
    shear_moduli: tuple = ()
    angles: tuple = (15.0, 30.0, 45.0, 90.0)


def load(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def apply_overrides(cfg, items):
    """``table.key=value`` overrides; values use TOML syntax."""
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form table.key=value")
        dotted, raw = item.split("=", 1)
        parts = dotted.strip().split(".")
        try:
            value = tomllib.loads(f"v = {raw.strip()}")["v"]
        except tomllib.TOMLDecodeError:
            value = raw.strip()
        node = cfg
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {dotted!r} descends into a non-table")
        node[parts[-1]] = value
    return cfg


def build(cls, cfg, table, required=True, **extra):
    """Instantiate dataclass ``cls`` from ``cfg[table]``."""
    if table not in cfg:
        if required:
            raise ConfigError(f"missing table [{table}]")
        return cls(**extra) if extra or not _required_fields(cls) else None
    raw = dict(cfg[table])
    raw.update(extra)
    names = {f.name for f in dataclasses.fields(cls)}
    for k in raw:
        if k not in names:
            raise ConfigError(f"unknown key {table}.{k}")
    for k in _required_fields(cls):
        if k not in raw:
            raise ConfigError(f"missing key {table}.{k}")
    for k, v in raw.items():
        if isinstance(v, list):
            raw[k] = tuple(v)
    try:
        return cls(**raw)
    except (DomainError, TypeError, ValueError) as exc:
        raise ConfigError(f"[{table}]: {exc}") from exc


def _required_fields(cls):
    return [
        f.name
        for f in dataclasses.fields(cls)
        if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
    ]


def fiber(cfg):
    return build(FiberProperties, cfg, "fiber")


def matrix(cfg):
    return build(MatrixProperties, cfg, "matrix")


def mixture_weights(cfg):
    frac = build(GeneratorSpec, cfg, "generator", required=False).fiber_fraction
    return [frac, 1.0 - frac]


def paths(cfg, seed):
    return build(PathSpec, cfg, "paths", required=False, seed=seed)


def train_spec(cfg, seed):
    return build(TrainSpec, cfg, "train", required=False, seed=seed)


def stepping(cfg):
    return build(AdaptiveStepping, cfg, "stepping", required=False)


def run_options(cfg):
    return build(RunOptions, cfg, "run", required=False)


def coupon(cfg):
    return build(CouponSpec, cfg, "coupon", required=False)


def protocol(cfg):
    if "protocol" not in cfg:
        raise ConfigError("missing table [protocol]")
    raw = dict(cfg["protocol"])
    kind = raw.pop("kind", None)
    table = {"protocol": raw}
    if kind == "csr":
        return build(CsrProtocol, table, "protocol")
    if kind == "creep":
        return build(CreepProtocol, table, "protocol")
    raise ConfigError(f"protocol.kind must be 'csr' or 'creep', got {kind!r}")


def model_spec(cfg):
    spec = build(ModelSpec, cfg, "model")
    if spec.kind not in ("file", "voigt-prnn", "voigt-oracle"):
        raise ConfigError(f"unknown model.kind {spec.kind!r}")
    if spec.kind == "file" and not spec.file:
        raise ConfigError("missing key model.file")
    return spec


def generator_spec(cfg):
    spec = build(GeneratorSpec, cfg, "generator", required=False)
    if spec.kind not in ("voigt", "rve"):
        raise ConfigError(f"unknown generator.kind {spec.kind!r}")
    return spec


def study_spec(cfg):
    spec = build(StudySpec, cfg, "study")
    kinds = ("mode-sweep", "transfer-grid", "endtab-compare", "bc-compare", "model-selection", "angle-sweep")
    if spec.kind not in kinds:
        raise ConfigError(f"unknown study.kind {spec.kind!r}")
    return spec
