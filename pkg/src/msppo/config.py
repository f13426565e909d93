"""Run configuration files.

A run config is INI text with two sections::

    [run]
    env = toyquad            ; toyquad or sympair
    morphology = go2.morph   ; resolved relative to the config file
    gait = trot
    arch = ms
    H = 5
    hidden = 64
    layers = 2
    init_log_std = -1.0
    output = runs/go2-ms
    seed = 0

    [trainer]
    iterations = 300
    num_envs = 16
    ...                      ; any TrainerConfig field except seed

Unknown keys are rejected. ``morphology = go2`` (no path separator and no
suffix) selects the bundled description.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
import os
from dataclasses import dataclass, field
from pathlib import Path

from .envs.toyquad import GAITS
from .morphology import bundled_path
from .nets import ARCHS
from .ppo import TrainerConfig

OUTPUT_ROOT_ENV = "MSPPO_OUTPUT_ROOT"
ENVS = ("toyquad", "sympair")


class ConfigError(ValueError):
    pass


_TRAINER_FIELDS = {f.name: f for f in dataclasses.fields(TrainerConfig) if f.name != "seed"}


@dataclass
class RunConfig:
    env: str = "toyquad"
    morphology: Path | None = None
    gait: str = "trot"
    arch: str = "ms"
    H: int = 5
    hidden: int = 64
    layers: int = 2
    init_log_std: float = -1.0
    output: Path = Path("runs/default")
    seed: int = 0
    trainer: TrainerConfig = field(default_factory=TrainerConfig)

    def __post_init__(self):
        if self.env not in ENVS:
            raise ConfigError(f"env must be one of {ENVS}, got {self.env!r}")
        if self.arch not in ARCHS:
            raise ConfigError(f"arch must be one of {ARCHS}, got {self.arch!r}")
        if self.H < 1:
            raise ConfigError("H must be at least 1")
        if self.hidden < 1 or self.layers < 0:
            raise ConfigError("hidden must be positive and layers non-negative")
        if self.env == "toyquad":
            if self.gait not in GAITS:
                raise ConfigError(f"gait must be one of {sorted(GAITS)}, got {self.gait!r}")
            if self.morphology is None:
                raise ConfigError("toyquad runs need a morphology file")
            if not Path(self.morphology).is_file():
                raise ConfigError(f"morphology file not found: {self.morphology}")

    def output_dir(self) -> Path:
        root = os.environ.get(OUTPUT_ROOT_ENV)
        out = Path(self.output)
        return out if out.is_absolute() or not root else Path(root) / out

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp["run"] = {
            "env": self.env,
            "morphology": "" if self.morphology is None else str(self.morphology),
            "gait": self.gait,
            "arch": self.arch,
            "H": str(self.H),
            "hidden": str(self.hidden),
            "layers": str(self.layers),
            "init_log_std": repr(self.init_log_std),
            "output": str(self.output),
            "seed": str(self.seed),
        }
        cp["trainer"] = {k: repr(getattr(self.trainer, k)) for k in _TRAINER_FIELDS}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


_RUN_KEYS = {
    "env": str,
    "morphology": str,
    "gait": str,
    "arch": str,
    "H": int,
    "hidden": int,
    "layers": int,
    "init_log_std": float,
    "output": str,
    "seed": int,
}


def _convert(section: str, key: str, raw: str, kind):
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {kind.__name__}") from None


def parse_run_config(text: str, base_dir: Path | str = ".") -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    unknown_sections = set(cp.sections()) - {"run", "trainer"}
    if unknown_sections:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown_sections))}")
    run = dict(cp["run"]) if cp.has_section("run") else {}
    trainer = dict(cp["trainer"]) if cp.has_section("trainer") else {}

    bad = set(run) - set(_RUN_KEYS)
    if bad:
        raise ConfigError(f"[run] unknown key(s): {', '.join(sorted(bad))}")
    bad = set(trainer) - set(_TRAINER_FIELDS)
    if bad:
        raise ConfigError(f"[trainer] unknown key(s): {', '.join(sorted(bad))}")

    kwargs = {k: _convert("run", k, v, _RUN_KEYS[k]) for k, v in run.items()}
    morph = kwargs.pop("morphology", "")
    if morph:
        if "/" not in morph and "." not in morph:
            kwargs["morphology"] = bundled_path(morph)
        else:
            p = Path(morph)
            kwargs["morphology"] = p if p.is_absolute() else Path(base_dir) / p
    if "output" in kwargs:
        kwargs["output"] = Path(kwargs["output"])

    tkw = {}
    for k, v in trainer.items():
        kind = type(_TRAINER_FIELDS[k].default)
        tkw[k] = _convert("trainer", k, v, int if kind is int else float)
    seed = kwargs.get("seed", 0)
    try:
        kwargs["trainer"] = TrainerConfig(seed=seed, **tkw)
    except ValueError as exc:
        raise ConfigError(f"[trainer] {exc}") from None
    return RunConfig(**kwargs)


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_run_config(text, path.parent)
