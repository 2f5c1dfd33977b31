"""Run configuration: defaults, JSON files and flag overrides.

Precedence is flags over file over defaults. Unknown keys are rejected and
every error names the dotted key path of the offending value.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError
from .ising import SocParams
from .rate import RateParams
from .spiking import SpikingParams

MODELS = ("ising", "rate", "spiking", "bench")
VARIANTS = ("homogeneous", "heterogeneous", "heterogeneous-plastic")


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class IsingRun(_Block):
    mode: Literal["local", "global", "fixed"] = "local"
    temp_init: float = Field(1.5, gt=0)
    update_fraction: float = Field(0.5, gt=0, le=1)
    adapt_every: int = Field(1, ge=1)
    measure_patch: Optional[int] = 5
    spin_init: Literal["random", "up"] = "random"
    J: float = 1.0
    record_every: int = Field(1, ge=1)
    params: SocParams = SocParams()

    @field_validator("measure_patch")
    @classmethod
    def _odd(cls, v):
        if v is not None and (v < 1 or v % 2 == 0):
            raise ValueError(f"patch size must be a positive odd integer, got {v}")
        return v


class RateRun(_Block):
    plasticity: bool = False
    image: Optional[str] = None
    input_gain: float = 1.0
    normalize: Literal["both", "excitatory", "none"] = "excitatory"
    sweep: bool = False
    sweep_n: int = Field(8, ge=2)
    tol: float = Field(1e-5, ge=0)
    record_every: int = Field(10, ge=1)
    params: RateParams = RateParams()


class SpikingRun(_Block):
    plasticity: bool = False
    image: Optional[str] = None
    stim_on: int = Field(0, ge=0)
    stim_off: int = Field(0, ge=0)
    normalize: Literal["both", "excitatory", "none"] = "excitatory"
    record_every: int = Field(10, ge=1)
    params: SpikingParams = SpikingParams()


class BenchRun(_Block):
    sizes: list[int] = [64, 128, 256, 512]
    variants: list[Literal["homogeneous", "heterogeneous", "heterogeneous-plastic"]] = list(VARIANTS)
    steps_per_point: int = Field(10, ge=10)
    warmup: int = Field(3, ge=3)

    @field_validator("sizes")
    @classmethod
    def _ascending(cls, v):
        if not v or any(b <= a for a, b in zip(v, v[1:])) or v[0] < 8:
            raise ValueError("sizes must be a non-empty, strictly ascending list of values >= 8")
        return v


class RunConfig(_Block):
    model: Literal["ising", "rate", "spiking", "bench"] = "ising"
    size: int = Field(64, ge=8)
    steps: int = Field(1000, ge=0)
    seed: int = Field(0, ge=0, lt=2**64)
    threads: int = Field(1, ge=1)
    out_dir: str = "out"
    snapshot_every: int = Field(0, ge=0)
    ising: IsingRun = IsingRun()
    rate: RateRun = RateRun()
    spiking: SpikingRun = SpikingRun()
    bench: BenchRun = BenchRun()

    @property
    def dt(self) -> float:
        """Time step of the selected neural model (the Ising model has none)."""
        block = getattr(self, self.model, None)
        params = getattr(block, "params", None)
        return getattr(params, "dt", 1.0)


def _config_error(err: ValidationError) -> ConfigError:
    first = err.errors()[0]
    path = [str(p) for p in first["loc"]]
    cause = first.get("ctx", {}).get("error")
    msg = first["msg"].removeprefix("Value error, ")
    if isinstance(cause, ConfigError):
        if cause.key:
            path.append(cause.key)
        msg = str(cause).split(": ", 1)[-1]
    return ConfigError(msg, key=".".join(path) or None)


def _set_path(tree: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        nxt = node.setdefault(k, {})
        if not isinstance(nxt, dict):
            raise ConfigError("cannot set a sub-key of a scalar", key=dotted)
        node = nxt
    node[keys[-1]] = value


def load_file(path) -> dict:
    """Read a JSON config file into a plain dict."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}", key="config") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path} at line {exc.lineno}: {exc.msg}", key="config") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a JSON object", key="config")
    return data


def parse_config(file=None, overrides: dict | None = None) -> RunConfig:
    """Resolve a config from an optional file (path or dict) and dotted-key overrides.

    >>> parse_config(overrides={"size": 128, "rate.params.g": 2.0}).size
    128
    """
    tree = {} if file is None else (dict(file) if isinstance(file, dict) else load_file(file))
    for key, value in (overrides or {}).items():
        if value is not None:
            _set_path(tree, key, value)
    try:
        return RunConfig.model_validate(tree)
    except ValidationError as exc:
        raise _config_error(exc) from None


def serialize(cfg: RunConfig) -> str:
    return cfg.model_dump_json(indent=2)


def from_json(text: str) -> RunConfig:
    try:
        return RunConfig.model_validate_json(text)
    except ValidationError as exc:
        raise _config_error(exc) from None
