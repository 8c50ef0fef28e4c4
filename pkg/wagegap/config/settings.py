# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from dotenv import dotenv_values

from .. import hooks
from ..core.exceptions import ConfigError

logger = logging.getLogger(__name__)

ENV_PREFIX = "WAGEGAP_"


def read_flat_config(path=None, env_prefix=ENV_PREFIX):
    """
    Read a flat key=value configuration file.

    Values from the environment prefixed with ``WAGEGAP_`` override the file.
    A double underscore in an environment name stands for a dot, so
    ``WAGEGAP_SEED__CLUSTER=7`` sets ``seed.cluster``.

    Args:
        path (str, optional): Path to the configuration file
        env_prefix (str, optional): Prefix of overriding environment variables

    Returns:
        dict: Raw string values keyed by lower-case name
    """
    values = {}
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"Configuration file not found: {path}")
        values.update({k.strip().lower(): v for k, v in dotenv_values(path).items() if v is not None})

    if env_prefix:
        for name, value in os.environ.items():
            if name.startswith(env_prefix):
                key = name[len(env_prefix):].lower().replace("__", ".")
                values[key] = value

    return values


def parse_int(value, name):
    try:
        return int(str(value).strip())
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be an integer, got {value!r}")


def parse_float(value, name):
    try:
        return float(str(value).strip())
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {value!r}")


def parse_bool(value, name):
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"{name} must be a boolean, got {value!r}")


def parse_list(value, name, cast=float):
    """Parse a comma separated list."""
    if value is None or str(value).strip() == "":
        return []
    try:
        return [cast(item.strip()) for item in str(value).split(",") if item.strip() != ""]
    except ValueError:
        raise ConfigError(f"{name} must be a comma separated list, got {value!r}")


def parse_pairs(value, name="pairs"):
    """Parse biennial pairs written as ``2010:2012,2011:2013``."""
    pairs = []
    for item in parse_list(value, name, cast=str):
        try:
            first, second = item.split(":")
            pairs.append((int(first), int(second)))
        except ValueError:
            raise ConfigError(f"{name} entries must look like 2010:2012, got {item!r}")
    return pairs


def derive_seed(seed, index):
    """Derive a stage seed from a global seed and a stage index."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


@dataclass
class Settings:
    """Package-wide numerical defaults; each field may be set by name in a configuration file."""
    sigma_floor: float = 1e-3
    em_tol: float = 1e-8
    em_max_iter: int = 2000
    hours_min: float = 30.0
    gender_ratio_min: float = 0.25
    low_support: int = 5
    sparse_cell: int = 10
    ventiles: int = 19

    def update(self, name, value):
        """Set a field from its raw string value, typed like the default."""
        current = getattr(self, name)
        setattr(self, name, parse_int(value, name) if isinstance(current, int) else parse_float(value, name))

    def validate(self):
        if self.sigma_floor <= 0 or self.em_tol <= 0:
            raise ConfigError("sigma_floor and em_tol must be positive")
        if self.em_max_iter < 1 or self.ventiles < 1:
            raise ConfigError("em_max_iter and ventiles must be at least 1")
        if self.hours_min < 0 or self.low_support < 0 or self.sparse_cell < 0:
            raise ConfigError("hours_min, low_support and sparse_cell must not be negative")
        if not 0 < self.gender_ratio_min <= 1:
            raise ConfigError("gender_ratio_min must lie in (0, 1]")


SETTING_NAMES = tuple(f.name for f in fields(Settings))


@dataclass
class PipelineConfig:
    """
    Configuration of a full pipeline run.

    Either ``input`` (a delimited observation file) or ``market_spec``
    (a MarketSpec file for a synthetic market) must be set.
    """
    K: int = 10
    L: int = 10
    input: str = None
    market_spec: str = None
    classing: str = None
    column_map: dict = field(default_factory=dict)
    delimiter: str = ","
    restarts: int = 1000
    em_reps: int = 50
    gap_B: int = 500
    gap_kmin: int = 4
    gap_kmax: int = 25
    gap_restarts: int = 10
    run_gapstat: bool = False
    pairs: list = field(default_factory=lambda: list(hooks.default_biennial_pairs))
    subgroups: list = field(default_factory=list)
    decompose_kinds: list = field(default_factory=lambda: list(PipelineConfig.DECOMPOSE_KINDS))
    counterfactual_mode: str = "expectation"
    counterfactual_draws: int = 100000
    separable_method: str = "diagonal"
    robustness_L: list = field(default_factory=list)
    robustness_K: list = field(default_factory=list)
    threads: int = 1
    out: str = "out"
    seed: int = None
    seeds: dict = field(default_factory=dict)
    settings: Settings = field(default_factory=Settings)

    SUBGROUPS = ("education", "age", "size", "occupation")
    MODES = ("expectation", "draws")
    DECOMPOSE_KINDS = ("mincer", "cakm", "variance", "theil")

    @classmethod
    def from_file(cls, path=None, overrides=None, require_data=True):
        """
        Build a configuration from a flat key=value file plus overrides.

        Args:
            path (str, optional): Configuration file
            overrides (dict, optional): Already-typed values (command-line flags)
            require_data (bool, optional): Insist on input or market_spec

        Returns:
            PipelineConfig: Validated configuration
        """
        raw = read_flat_config(path)
        return cls.from_dict(raw, overrides, require_data)

    @classmethod
    def from_dict(cls, raw, overrides=None, require_data=True):
        config = cls()
        ints = ("K", "L", "restarts", "em_reps", "gap_B", "gap_kmin", "gap_kmax",
                "gap_restarts", "counterfactual_draws", "threads")
        lower_map = {name.lower(): name for name in ints}

        for key, value in raw.items():
            if key in lower_map:
                setattr(config, lower_map[key], parse_int(value, key))
            elif key in ("input", "market_spec", "classing", "out", "delimiter", "counterfactual_mode",
                         "separable_method"):
                setattr(config, key, "\t" if value in ("\\t", "tab") else value)
            elif key == "run_gapstat":
                config.run_gapstat = parse_bool(value, key)
            elif key == "pairs":
                config.pairs = parse_pairs(value)
            elif key in ("subgroups", "decompose_kinds"):
                setattr(config, key, parse_list(value, key, cast=str))
            elif key in ("robustness_l", "robustness_k"):
                setattr(config, "robustness_" + key[-1].upper(), parse_list(value, key, cast=int))
            elif key == "seed":
                config.seed = parse_int(value, key)
            elif key.startswith("seed."):
                config.seeds[key.split(".", 1)[1]] = parse_int(value, key)
            elif key in SETTING_NAMES:
                config.settings.update(key, value)
            elif key.startswith("column."):
                config.column_map[key.split(".", 1)[1]] = value
            else:
                logger.warning("Ignoring unknown configuration key %s", key)

        for key, value in (overrides or {}).items():
            if value is not None:
                setattr(config, key, value)
        # an explicit input replaces a configured synthetic market
        if (overrides or {}).get("input"):
            config.market_spec = None

        config.validate(require_data)
        return config

    def validate(self, require_data=True):
        if self.K < 1 or self.L < 1:
            raise ConfigError("K and L must be at least 1")
        if require_data and not self.input and not self.market_spec:
            raise ConfigError("Either input or market_spec must be configured")
        if self.restarts < 1 or self.em_reps < 1 or self.gap_B < 1:
            raise ConfigError("restarts, em_reps and gap_B must be at least 1")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.gap_kmin < 1 or self.gap_kmax < self.gap_kmin:
            raise ConfigError("gap_kmin must be at least 1 and not above gap_kmax")
        if self.counterfactual_mode not in self.MODES:
            raise ConfigError(f"counterfactual_mode must be one of {self.MODES}")
        if self.separable_method not in ("diagonal", "additive"):
            raise ConfigError("separable_method must be diagonal or additive")
        for name in self.subgroups:
            if name not in self.SUBGROUPS:
                raise ConfigError(f"Unknown subgroup filter {name!r}")
        if not self.decompose_kinds:
            raise ConfigError("decompose_kinds must name at least one decomposition")
        for kind in self.decompose_kinds:
            if kind not in self.DECOMPOSE_KINDS:
                raise ConfigError(f"Unknown decomposition {kind!r}")
        self.settings.validate()
        for first, second in self.pairs:
            if second != first + 2:
                raise ConfigError(f"Biennial pair {first}:{second} is not two years apart")
        firsts = [first for first, _ in self.pairs]
        if len(set(firsts)) != len(firsts):
            raise ConfigError("Biennial pairs must not share a first year")
        if any(value < 1 for value in self.robustness_L + self.robustness_K):
            raise ConfigError("robustness_L and robustness_K entries must be at least 1")
        for stage in self.seeds:
            if stage not in hooks.pipeline_stages:
                raise ConfigError(f"Seed given for unknown stage {stage!r}")
        # every stage must resolve to an explicit seed
        for stage in hooks.pipeline_stages:
            self.stage_seed(stage)

    def stage_seed(self, stage):
        """
        Resolve the seed of a pipeline stage.

        Raises:
            ConfigError: If neither a stage seed nor a global seed is set
        """
        if stage in self.seeds:
            return self.seeds[stage]
        if self.seed is None:
            raise ConfigError(f"No seed configured for stage {stage!r}; set seed or seed.{stage}")
        return derive_seed(self.seed, hooks.pipeline_stages.index(stage))

    def to_dict(self):
        data = asdict(self)
        data["pairs"] = [list(pair) for pair in self.pairs]
        data["resolved_seeds"] = {stage: self.stage_seed(stage) for stage in hooks.pipeline_stages}
        # threads and out do not change results
        data.pop("threads")
        data.pop("out")
        return data

    def config_hash(self):
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
