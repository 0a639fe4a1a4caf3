"""Experiment configuration: JSON with strict keys and derived-quantity echo."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, fields
from typing import Optional

from .constellation.layered import LayeredSpec
from .constellation.partition import PartitionSpec
from .graph import SfpParams

PIPELINES = ("extinction", "survival", "constellation_gt2", "constellation_12", "analysis")


class ConfigError(ValueError):
    pass


def _strict(block: dict, allowed, where: str) -> dict:
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    return block


def _names(cls) -> list:
    return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class Dynamics:
    lambdas: tuple = (1.0,)
    t_max: float = min(1e7, math.exp(20))
    n_rep: int = 100
    engine: str = "direct"
    coupled: bool = False
    seed_vertex: Optional[int] = None

    def __post_init__(self):
        if len(self.lambdas) == 0:
            raise ConfigError("dynamics.lambdas is empty")
        if any(not lam > 0 for lam in self.lambdas):
            raise ConfigError("dynamics.lambdas must be > 0")
        if not self.t_max > 0:
            raise ConfigError("dynamics.t_max must be > 0")
        if self.n_rep < 1:
            raise ConfigError("dynamics.n_rep must be >= 1")
        if self.engine not in ("direct", "graphical"):
            raise ConfigError("dynamics.engine must be 'direct' or 'graphical'")


@dataclass(frozen=True)
class Experiment:
    volumes: tuple = ()
    n_graphs: int = 1
    predictor: str = "n"
    A: Optional[float] = None
    allow_censored: bool = False
    synthetic_rate: Optional[float] = None


@dataclass(frozen=True)
class AnalysisOptions:
    tail_fraction: float = 0.01
    n_bins: int = 20
    n_pairs: int = 200


@dataclass(frozen=True)
class ExperimentConfig:
    model: SfpParams
    pipeline: str = "extinction"
    dynamics: Dynamics = field(default_factory=Dynamics)
    partition: Optional[PartitionSpec] = None
    layered: Optional[LayeredSpec] = None
    experiment: Experiment = field(default_factory=Experiment)
    analysis: AnalysisOptions = field(default_factory=AnalysisOptions)
    sampler: str = "accelerated"
    graph_file: Optional[str] = None
    seed: int = 0
    output: str = "out"
    raw: dict = field(default_factory=dict, compare=False)

    def derived(self) -> dict:
        out = {"gamma": self.model.gamma}
        if self.layered is not None:
            out["k_n"] = self.layered.k_n(self.model)
            out["m_n"] = self.layered.m_n(self.model)
        if self.partition is not None:
            out["s"] = self.partition.depth(self.model)
            if self.partition.mode == "paper_faithful":
                out["nu_p"] = self.partition.nu_p(self.model)
        return out

    def hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


_TOP = ("model", "pipeline", "dynamics", "partition", "layered", "experiment", "analysis",
        "sampler", "graph_file", "seed", "output", "derived")


def _check_echo(echo: dict, actual: dict) -> None:
    _strict(echo, ("gamma", "k_n", "m_n", "s", "nu_p"), "derived")
    for key, val in echo.items():
        if key not in actual:
            raise ConfigError(f"derived.{key} supplied but not defined for this configuration")
        want = actual[key]
        if isinstance(want, int):
            ok = val == want
        else:
            ok = math.isclose(float(val), want, rel_tol=1e-12, abs_tol=0.0)
        if not ok:
            raise ConfigError(f"derived.{key} = {val} does not match its formula value {want}")


def parse_config(raw: dict) -> ExperimentConfig:
    _strict(raw, _TOP, "config")
    if "model" not in raw and "graph_file" not in raw:
        raise ConfigError("config needs a 'model' block or a 'graph_file'")
    try:
        model = SfpParams(**_strict(raw.get("model", {}), _names(SfpParams), "model")) \
            if "model" in raw else None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from None
    pipeline = raw.get("pipeline", "extinction")
    if pipeline not in PIPELINES:
        raise ConfigError(f"pipeline must be one of {PIPELINES}")
    try:
        dyn = dict(_strict(raw.get("dynamics", {}), _names(Dynamics), "dynamics"))
        if "lambdas" in dyn:
            dyn["lambdas"] = tuple(float(x) for x in dyn["lambdas"])
        dynamics = Dynamics(**dyn)
        part = raw.get("partition")
        if part is not None:
            part = dict(_strict(part, _names(PartitionSpec), "partition"))
            if "level_sides" in part:
                part["level_sides"] = tuple(part["level_sides"])
            part = PartitionSpec(**part)
        lay = raw.get("layered")
        if lay is not None:
            lay = LayeredSpec(**_strict(lay, _names(LayeredSpec), "layered"))
        exp = dict(_strict(raw.get("experiment", {}), _names(Experiment), "experiment"))
        if "volumes" in exp:
            exp["volumes"] = tuple(float(v) for v in exp["volumes"])
        experiment = Experiment(**exp)
        analysis = AnalysisOptions(**_strict(raw.get("analysis", {}), _names(AnalysisOptions), "analysis"))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    sampler = raw.get("sampler", "accelerated")
    if sampler not in ("accelerated", "reference"):
        raise ConfigError("sampler must be 'accelerated' or 'reference'")
    if pipeline == "constellation_gt2" and part is None:
        raise ConfigError("pipeline constellation_gt2 needs a 'partition' block")
    if pipeline == "constellation_12" and lay is None:
        raise ConfigError("pipeline constellation_12 needs a 'layered' block")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0 or seed >= 2 ** 64:
        raise ConfigError("seed must be an integer in [0, 2^64)")
    cfg = ExperimentConfig(model=model, pipeline=pipeline, dynamics=dynamics, partition=part,
                           layered=lay, experiment=experiment, analysis=analysis, sampler=sampler,
                           graph_file=raw.get("graph_file"), seed=seed,
                           output=raw.get("output", "out"), raw=raw)
    if model is not None:
        try:
            if lay is not None:
                lay.validate(model)
            if part is not None and part.mode == "paper_faithful":
                part.resolved(model)
            derived = cfg.derived()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if "derived" in raw:
            _check_echo(raw["derived"], derived)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return parse_config(raw)
