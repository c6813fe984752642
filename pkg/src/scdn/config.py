"""Pipeline configuration: defaults, strict loading, dot-keyed overrides.

The file is JSON with one section per stage.  Unknown keys are rejected
and every value is range-checked; errors carry the dotted key path and,
when the key appears literally in the file, its line number.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .dispatch.moa import GoalWeights
from .embedding.model import TrainConfig
from .errors import ConfigError
from .seh import GAParams
from .simgen.city import ScenarioConfig

logger = logging.getLogger(__name__)


@dataclass
class NetworkConfig:
    gap_threshold_s: float = 1800.0
    distance_threshold_m: float = 1000.0
    window_days: float = 30.0


@dataclass
class IndicesConfig:
    fei_threshold: float = 0.6      # Thre_eta
    hpp_threshold: float = 0.5      # Thre_p
    neighbor_radius_m: float = 1000.0
    volume_floor: float = 50.0
    hpp_export_floor: float = 0.5


@dataclass
class SehConfig:
    size_min: int = 2
    size_max: int = 12
    volume_floor: float = 50.0
    hpp_floor: float = 0.5
    n_groups: int = 0               # 0 = derive from volumes
    allow_unassigned: bool = False
    population: int = 100
    generations: int = 500
    crossover_rate: float = 0.9
    mutation_rate: float = 0.0      # 0 = 1/|F|
    elitism: int = 2
    stagnation_limit: int = 150

    def ga_params(self, rng_seed: int) -> GAParams:
        return GAParams(population=self.population, generations=self.generations,
                        crossover_rate=self.crossover_rate,
                        mutation_rate=self.mutation_rate or None,
                        elitism=self.elitism, stagnation_limit=self.stagnation_limit,
                        rng_seed=rng_seed)


@dataclass
class DispatchConfig:
    p1: float = 0.6
    p2: float = 0.5
    weight_efficiency: float = 0.6
    weight_overtime: float = 0.3
    weight_acceptance: float = 0.1
    speed_mps: float = 5.0
    scale_m: float = 5000.0
    candidate_limit: int = 20
    iteration_cap: int = 10
    bundle_cap: int = 2
    cycle_s: float = 30.0
    seh_pickup_weight: float = 0.5
    seh_delivery_weight: float = 0.5
    couriers_per_seh: int = 6

    def goal_weights(self) -> GoalWeights:
        return GoalWeights(efficiency=self.weight_efficiency,
                           overtime=self.weight_overtime,
                           acceptance=self.weight_acceptance)


@dataclass
class PipelineConfig:
    seed: int = 0
    out: str = "out"
    simgen: ScenarioConfig = field(default_factory=ScenarioConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    eatne: TrainConfig = field(default_factory=TrainConfig)
    indices: IndicesConfig = field(default_factory=IndicesConfig)
    seh: SehConfig = field(default_factory=SehConfig)
    dispatch: DispatchConfig = field(default_factory=DispatchConfig)

    def resolved(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        semantic = self.resolved()
        semantic.pop("out", None)  # output location does not change results
        return hashlib.sha256(json.dumps(semantic, sort_keys=True)
                              .encode()).hexdigest()


# value ranges checked at load; (min, max) inclusive, None = unbounded
_RANGES: dict[str, tuple[float | None, float | None]] = {
    "eatne.embedding_dim": (1, None),
    "eatne.edge_embedding_dim": (1, None),
    "eatne.attention_dim": (1, None),
    "eatne.aggregation_depth": (0, None),
    "eatne.walk_length": (2, None),
    "eatne.walks_per_node": (1, None),
    "eatne.window_size": (1, None),
    "eatne.margin_pickup": (0.0, 1.0),
    "eatne.margin_delivery": (0.0, 1.0),
    "eatne.learning_rate": (1e-8, 1.0),
    "eatne.batch_size": (1, None),
    "eatne.max_epochs": (1, None),
    "eatne.patience_epochs": (1, None),
    "eatne.negatives_per_positive": (1, None),
    "eatne.negative_hop_floor": (3, None),
    "eatne.validation_fraction": (1e-9, 0.999999),
    "network.gap_threshold_s": (1e-9, None),
    "network.distance_threshold_m": (1e-9, None),
    "network.window_days": (1e-9, None),
    "indices.fei_threshold": (0.0, 1.0),
    "indices.hpp_threshold": (0.0, 1.0),
    "indices.neighbor_radius_m": (0.0, None),
    "indices.volume_floor": (0.0, None),
    "seh.size_min": (1, None),
    "seh.size_max": (1, None),
    "seh.volume_floor": (0.0, None),
    "seh.hpp_floor": (0.0, 1.0),
    "seh.n_groups": (0, None),
    "seh.population": (2, None),
    "seh.generations": (1, None),
    "seh.crossover_rate": (0.0, 1.0),
    "seh.mutation_rate": (0.0, 1.0),
    "seh.elitism": (0, None),
    "dispatch.p1": (0.0, 1.0),
    "dispatch.p2": (0.0, 1.0),
    "dispatch.weight_efficiency": (0.0, 1.0),
    "dispatch.weight_overtime": (0.0, 1.0),
    "dispatch.weight_acceptance": (0.0, 1.0),
    "dispatch.speed_mps": (1e-9, None),
    "dispatch.scale_m": (1e-9, None),
    "dispatch.candidate_limit": (1, None),
    "dispatch.iteration_cap": (1, None),
    "dispatch.bundle_cap": (1, None),
    "dispatch.cycle_s": (1e-9, None),
    "dispatch.couriers_per_seh": (1, None),
    "simgen.grid_rows": (2, None),
    "simgen.grid_cols": (2, None),
    "simgen.cell_size_m": (1.0, None),
    "simgen.merchant_clusters": (1, None),
    "simgen.corridors": (1, None),
    "simgen.corridor_size": (1, None),
    "simgen.courier_count": (1, None),
    "simgen.courier_capacity": (1, None),
    "simgen.sc_share": (0.0, 1.0),
    "simgen.horizon_s": (1.0, None),
    "seed": (0, None),
}


def _line_of_key(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for lineno, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return lineno
    return None


def _check_range(path: str, value: Any, text: str) -> None:
    bounds = _RANGES.get(path)
    if bounds is None or isinstance(value, bool) or not isinstance(value, (int, float)):
        return
    lo, hi = bounds
    if (lo is not None and value < lo) or (hi is not None and value > hi):
        line = _line_of_key(text, path.rsplit(".", 1)[-1])
        where = f" (line {line})" if line else ""
        raise ConfigError(f"{path}{where}: value {value!r} outside "
                          f"[{lo if lo is not None else '-inf'}, "
                          f"{hi if hi is not None else 'inf'}]")


def _apply_section(target: Any, section: str, data: dict, text: str) -> None:
    known = {f.name for f in fields(target)}
    for key, value in data.items():
        path = f"{section}.{key}" if section else key
        if key not in known:
            line = _line_of_key(text, key)
            where = f" (line {line})" if line else ""
            raise ConfigError(f"unknown key {path!r}{where}")
        _check_range(path, value, text)
        current = getattr(target, key)
        if isinstance(current, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{path}: expected boolean, got {value!r}")
        elif isinstance(current, int) and not isinstance(value, bool):
            if not isinstance(value, int):
                raise ConfigError(f"{path}: expected integer, got {value!r}")
        elif isinstance(current, float):
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"{path}: expected number, got {value!r}")
            value = float(value)
        elif isinstance(current, str) and not isinstance(value, str):
            raise ConfigError(f"{path}: expected string, got {value!r}")
        setattr(target, key, value)


_SECTIONS = ("simgen", "network", "eatne", "indices", "seh", "dispatch")


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None,
                ) -> PipelineConfig:
    """Defaults, then the file, then dot-keyed overrides (CLI flags)."""
    config = PipelineConfig()
    text = ""
    if path is not None:
        raw = Path(path).read_text(encoding="utf-8")
        text = raw
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        for key, value in data.items():
            if key in _SECTIONS:
                if not isinstance(value, dict):
                    raise ConfigError(f"{key}: expected a section object")
                _apply_section(getattr(config, key), key, value, text)
            elif key in ("seed", "out"):
                _apply_section(config, "", {key: value}, text)
            else:
                line = _line_of_key(text, key)
                where = f" (line {line})" if line else ""
                raise ConfigError(f"unknown section {key!r}{where}")

    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if not key:
            _apply_section(config, "", {section: value}, text)
        elif section in _SECTIONS:
            _apply_section(getattr(config, section), section, {key: value}, text)
        else:
            raise ConfigError(f"unknown section {section!r} in override {dotted!r}")

    config.simgen.validate()
    config.eatne.validate()
    if config.seh.size_min > config.seh.size_max:
        raise ConfigError("seh.size_min exceeds seh.size_max")
    weights = (config.dispatch.weight_efficiency + config.dispatch.weight_overtime
               + config.dispatch.weight_acceptance)
    if abs(weights - 1.0) > 1e-9:
        raise ConfigError(f"dispatch goal weights sum to {weights}, expected 1")
    return config


def parse_override_value(raw: str) -> Any:
    """CLI override values: JSON when it parses, bare string otherwise."""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw
