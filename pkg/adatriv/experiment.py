"""
experiment.py
~~~~~~~~~~~~~

Validated experiment configuration and the one-line summary of a run.

Config files are flat ``key=value`` files (read with python-dotenv), e.g.::

    problem=procrustes
    n=8
    algo=atriv
    k=1
    opt=adam
    lr=0.01
    iters=5000
    seed=53
    out=atriv1.csv
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Any, Literal, Mapping, Optional, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import config
from .errors import ConfigurationError
from .optimizers import OptimizerRule, RuleName
from .problems import PROBLEM_MANIFOLDS, PROBLEMS

Algorithm = Literal["atriv", "dtriv", "rgd", "rgd-momentum", "rgd-full-history"]
ALGORITHMS: tuple[str, ...] = ("atriv", "dtriv", "rgd", "rgd-momentum", "rgd-full-history")
INFINITY_LABELS = {"inf", "infinity", "∞"}
GAP_TARGET = 1e-6


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    problem: str
    n: int = Field(default=config.DEFAULT_N, ge=2)
    algorithm: Algorithm = Field(default="atriv", alias="algo")
    k: float = 1
    optimizer: RuleName = Field(default="adam", alias="opt")
    lr: Union[float, Literal["theorem"]] = 1e-2
    iters: int = Field(default=config.DEFAULT_ITERS, ge=0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    out: str = "trace.csv"

    beta1: Optional[float] = Field(default=None, ge=0.0, lt=1.0)
    beta2: Optional[float] = Field(default=None, ge=0.0, lt=1.0)
    eps: Optional[float] = Field(default=None, ge=0.0)
    mu: Optional[float] = Field(default=None, ge=0.0, lt=1.0)
    retraction: Literal["exp", "cayley"] = "exp"
    trivialization: Literal["exp", "cayley"] = "exp"
    r: Optional[float] = Field(default=None, ge=0.0)

    @field_validator("problem")
    @classmethod
    def _known_problem(cls, v: str) -> str:
        if v not in PROBLEMS:
            raise ValueError(f"unknown problem {v!r}; expected one of {', '.join(PROBLEMS)}")
        return v

    @field_validator("k", mode="before")
    @classmethod
    def _parse_k(cls, v: Any) -> float:
        if isinstance(v, str) and v.strip().lower() in INFINITY_LABELS:
            return math.inf
        k = float(v)
        if k != math.inf and (not k.is_integer() or k < 1):
            raise ValueError("k must be a positive integer or 'inf'")
        return k

    @field_validator("lr", mode="before")
    @classmethod
    def _parse_lr(cls, v: Any) -> Union[float, str]:
        if isinstance(v, str) and v.strip() == "theorem":
            return "theorem"
        lr = float(v)
        if not lr > 0:
            raise ValueError("lr must be positive")
        return lr

    @model_validator(mode="after")
    def _check_combination(self) -> "ExperimentConfig":
        on_rotations = PROBLEM_MANIFOLDS[self.problem] == "so"
        if self.lr == "theorem":
            if self.r is None:
                raise ValueError("lr=theorem needs the radius r")
            if self.optimizer != "sgd":
                raise ValueError("lr=theorem is only defined for opt=sgd")
            if not on_rotations:
                raise ValueError(f"lr=theorem needs an SO(n) problem, {self.problem} is not one")
        if self.retraction == "cayley":
            if self.algorithm != "rgd":
                raise ValueError("retraction=cayley only applies to algo=rgd")
            if not on_rotations:
                raise ValueError(f"retraction=cayley needs an SO(n) problem, {self.problem} is not one")
        if self.trivialization == "cayley":
            if self.algorithm != "dtriv":
                raise ValueError("trivialization=cayley only applies to algo=dtriv")
            if not on_rotations:
                raise ValueError(f"trivialization=cayley needs an SO(n) problem, {self.problem} is not one")
        return self

    # -----------------------------------------------------------------
    @property
    def k_label(self) -> str:
        return "inf" if self.k == math.inf else str(int(self.k))

    @property
    def k_value(self) -> Union[int, float]:
        return math.inf if self.k == math.inf else int(self.k)

    @property
    def uses_cayley(self) -> bool:
        return "cayley" in (self.retraction, self.trivialization)

    @property
    def method(self) -> str:
        """Algorithm name, tagged when the Cayley map replaces exp."""
        return f"{self.algorithm}-cayley" if self.uses_cayley else self.algorithm

    @property
    def label(self) -> str:
        if self.algorithm in ("atriv", "dtriv"):
            label = f"{self.algorithm}-{self.k_label}-{self.optimizer}"
        else:
            label = self.algorithm
        return f"{label}-cayley" if self.uses_cayley else label

    def rule(self) -> OptimizerRule:
        overrides = {
            key: value
            for key, value in (("beta1", self.beta1), ("beta2", self.beta2), ("eps", self.eps), ("mu", self.mu))
            if value is not None
        }
        if self.optimizer == "rmsprop":
            overrides.setdefault("beta2", config.RMSPROP_BETA2)
        return OptimizerRule(name=self.optimizer, **overrides)

    def momentum(self) -> float:
        return config.MOMENTUM if self.mu is None else self.mu

    def output_path(self, base: Optional[Path] = None) -> Path:
        path = Path(self.out)
        if path.is_absolute():
            return path
        return (base if base is not None else config.OUTPUT_DIR) / path


def load_config(path: Path, overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    """
    Read a ``key=value`` config file and apply command-line overrides.

    Raises OSError when the file cannot be read and ConfigurationError when
    its contents are invalid.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    values: dict[str, Any] = {k: v for k, v in dotenv_values(path).items()}
    missing = [k for k, v in values.items() if v is None]
    if missing:
        raise ConfigurationError(f"{path}: keys without a value: {', '.join(missing)}")
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return parse_config(values, source=str(path))


def parse_config(values: Mapping[str, Any], source: str = "<config>") -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(dict(values))
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigurationError(f"{source}: {problems}") from exc


# ---------------------------------------------------------------------
class SummaryRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    problem: str
    n: int
    algorithm: str
    k: str
    optimizer: str
    lr: float
    iters: int
    seed: int
    status: Literal["ok", "aborted"] = "ok"
    final_f: float
    best_f: float
    known_optimum: Optional[float] = None
    gap: Optional[float] = None
    best_gap: Optional[float] = None
    iters_to_gap: Optional[int] = None
    restarts: int = 0
    wall_time: float = 0.0
    message: str = ""

    @property
    def sort_key(self) -> tuple[str, str, float]:
        k = math.inf if self.k == "inf" else float(self.k) if self.k else 0.0
        return (self.problem, self.algorithm, k)


SUMMARY_COLUMNS: tuple[str, ...] = tuple(SummaryRow.model_fields)
