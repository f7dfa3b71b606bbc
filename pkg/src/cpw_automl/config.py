"""Run configuration: YAML file validated by pydantic, hashed for provenance."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import physics
from .automl import SearchSpace, default_grids
from .dataset import TARGETS, ParamRange, PartitionScheme, SweepConfig, default_ranges
from .fixture import PRINTED_CPW, VERIFY_THRESHOLD_NP_M
from .models import FAMILIES
from .physics import CpwGeometry


class ConfigError(ValueError):
    pass


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GeometryBlock(_Block):
    w_center: float = PRINTED_CPW.w_center
    gap: float = PRINTED_CPW.gap
    w_ground: float = PRINTED_CPW.w_ground
    t_substrate: float = PRINTED_CPW.t_substrate
    t_spacer: float = PRINTED_CPW.t_spacer
    t_metal: float = PRINTED_CPW.t_metal
    line_lengths: tuple[float, ...] = PRINTED_CPW.line_lengths

    def build(self) -> CpwGeometry:
        return CpwGeometry(**self.model_dump())


class RangeBlock(_Block):
    min: float
    max: float
    count: int = Field(ge=1)


def _default_range_blocks() -> dict[str, RangeBlock]:
    return {k: RangeBlock(min=r.min, max=r.max, count=r.count) for k, r in default_ranges().items()}


class SweepBlock(_Block):
    ranges: dict[str, RangeBlock] = Field(default_factory=_default_range_blocks)
    freq_points: int = Field(default=118, ge=1)
    f_min: float = physics.BAND_MIN_HZ
    f_max: float = physics.BAND_MAX_HZ
    jitter: bool = True
    declared_size: Optional[int] = 47_200

    @field_validator("ranges")
    @classmethod
    def _all_targets(cls, v):
        if set(v) != set(TARGETS):
            raise ValueError(f"ranges must name exactly {list(TARGETS)}")
        return v


class AugmentBlock(_Block):
    noise_rel: float = Field(default=0.0, ge=0)
    multiplier: int = Field(default=0, ge=0)


class SearchBlock(_Block):
    families: tuple[str, ...] = FAMILIES
    trials_per_family: int = Field(default=16, ge=1)
    screen_fraction: float = Field(default=0.25, gt=0, le=1)
    finalists: int = Field(default=4, ge=1)
    grids: dict[str, dict[str, list[Any]]] = Field(default_factory=dict)

    @field_validator("families")
    @classmethod
    def _known(cls, v):
        bad = sorted(set(v) - set(FAMILIES))
        if bad:
            raise ValueError(f"unknown model families {bad}")
        if not v:
            raise ValueError("at least one family is required")
        return v

    @model_validator(mode="after")
    def _grids_subset(self):
        bad = sorted(set(self.grids) - set(self.families))
        if bad:
            raise ValueError(f"grid overrides for families not in the search: {bad}")
        return self


class ExtractBlock(_Block):
    threshold_np_m: float = Field(default=VERIFY_THRESHOLD_NP_M, gt=0)


class RunConfig(_Block):
    seed: int = 0
    output_dir: str = "out"
    geometry: GeometryBlock = GeometryBlock()
    sweep: SweepBlock = SweepBlock()
    augmentation: AugmentBlock = AugmentBlock()
    partition: PartitionScheme = PartitionScheme.P75_20_5
    search: SearchBlock = SearchBlock()
    extraction: ExtractBlock = ExtractBlock()

    @model_validator(mode="after")
    def _cross_checks(self):
        # surface geometry and sweep errors at load time, before any stage runs
        try:
            self.sweep_config()
        except ValueError as exc:
            raise ValueError(str(exc)) from None
        return self

    def geometry_obj(self) -> CpwGeometry:
        return self.geometry.build()

    def sweep_config(self) -> SweepConfig:
        s = self.sweep
        return SweepConfig(
            geometry=self.geometry.build(),
            ranges={k: ParamRange(r.min, r.max, r.count) for k, r in s.ranges.items()},
            freq_points=s.freq_points,
            f_min=s.f_min,
            f_max=s.f_max,
            seed=self.seed,
            jitter=s.jitter,
            declared_size=s.declared_size,
        )

    def search_space(self) -> SearchSpace:
        base = default_grids()
        grids = {f: self.search.grids.get(f, base[f]) for f in self.search.families}
        return SearchSpace(
            grids=grids,
            trials_per_family=self.search.trials_per_family,
            screen_fraction=self.search.screen_fraction,
            seed=self.seed,
            finalists=self.search.finalists,
        )

    def canonical_json(self) -> str:
        # the output location does not change results, so it stays out of the hash
        body = self.model_dump(mode="json", exclude={"output_dir"})
        return json.dumps(body, sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    @property
    def run_id(self) -> str:
        return self.config_hash[:12]

    def run_dir(self) -> Path:
        return Path(self.output_dir) / self.run_id


def _errors(exc: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in e['loc']) or 'config'}: {e['msg']}" for e in exc.errors())


def build_config(data: dict | None = None, **overrides) -> RunConfig:
    data = dict(data or {})
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_errors(exc)) from None


def load_config(path=None, **overrides) -> RunConfig:
    data: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{p}: not valid YAML: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{p}: top level must be a mapping")
    return build_config(data, **overrides)
