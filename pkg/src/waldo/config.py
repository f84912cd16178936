"""Run configuration: one TOML file drives every stage of the pipeline."""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import tomli
import tomli_w

from .datagen import MULTIPLIERS, N_CLASSES, ClassSpec, build_plan
from .exceptions import ConfigError
from .pdn import DEFAULT_BOARD, DEFAULT_CENSUS, BoardModel, ComponentSpec, FrequencyGrid, PlaneSite

ENV_OUT = "WALDO_OUT"


@dataclass(frozen=True)
class PlanConfig:
    genuine_traces: int = 100
    tampered_traces: int = 55
    genuine_halfwidth: float = 0.10
    tampered_halfwidth: float = 0.20
    multipliers: tuple[int, ...] = MULTIPLIERS
    classes: tuple[int, ...] = tuple(range(N_CLASSES))

    def __post_init__(self):
        if self.genuine_traces < 1 or self.tampered_traces < 1:
            raise ConfigError("trace counts must be positive")
        if not self.multipliers:
            raise ConfigError("at least one multiplier is required")
        bad = [c for c in self.classes if not 0 <= c < N_CLASSES]
        if bad:
            raise ConfigError(f"unknown class ids {bad}; valid ids are 0..{N_CLASSES - 1}")
        if len(set(self.classes)) < 2:
            raise ConfigError("need at least two classes")


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_features: str | int = "sqrt"
    max_depth: int | None = None
    min_samples_leaf: int = 1
    n_jobs: int | None = None

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError("n_trees must be >= 1")


@dataclass(frozen=True)
class ExplainConfig:
    samples_per_class: int = 50
    top: int = 10
    beeswarm_top: int = 20

    def __post_init__(self):
        if self.samples_per_class < 1 or self.top < 1 or self.beeswarm_top < 1:
            raise ConfigError("explain counts must be positive")


@dataclass(frozen=True)
class RunConfig:
    grid: FrequencyGrid = field(default_factory=lambda: FrequencyGrid(points=500))
    board: BoardModel = DEFAULT_BOARD
    census: tuple[ComponentSpec, ...] = DEFAULT_CENSUS
    plan: PlanConfig = field(default_factory=PlanConfig)
    seed: int = 0
    folds: int = 5
    forest: ForestConfig = field(default_factory=ForestConfig)
    explain: ExplainConfig = field(default_factory=ExplainConfig)
    output_dir: str = "waldo-out"

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")

    def class_plan(self) -> list[ClassSpec]:
        p = self.plan
        return build_plan(p.genuine_traces, p.tampered_traces, p.classes, p.genuine_halfwidth,
                          p.tampered_halfwidth, p.multipliers)

    def to_dict(self) -> dict:
        board = {k: v for k, v in asdict(self.board).items() if k != "sites"}
        board["vrm"] = board.pop("vrm_r") is not None
        board["vrm_r"] = self.board.vrm_r if self.board.vrm_r is not None else 0.0
        board["sites"] = [asdict(s) for s in self.board.sites]
        forest = {k: v for k, v in asdict(self.forest).items() if v is not None}
        plan = asdict(self.plan)
        plan["multipliers"] = list(plan["multipliers"])
        plan["classes"] = list(plan["classes"])
        return {
            "seed": self.seed,
            "folds": self.folds,
            "output_dir": self.output_dir,
            "grid": asdict(self.grid),
            "board": board,
            "parts": [asdict(c) for c in self.census],
            "plan": plan,
            "forest": forest,
            "explain": asdict(self.explain),
        }

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {"seed", "folds", "output_dir", "grid", "board", "parts", "plan", "forest",
                 "explain"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            kw = {k: d[k] for k in ("seed", "folds", "output_dir") if k in d}
            if "grid" in d:
                kw["grid"] = FrequencyGrid(**d["grid"])
            if "board" in d:
                b = dict(d["board"])
                sites = tuple(PlaneSite(**s) for s in b.pop("sites", []))
                if not b.pop("vrm", True):
                    b["vrm_r"] = None
                kw["board"] = BoardModel(sites=sites, **b)
            if "parts" in d:
                kw["census"] = tuple(ComponentSpec(**c) for c in d["parts"])
            if "plan" in d:
                p = dict(d["plan"])
                for key in ("multipliers", "classes"):
                    if key in p:
                        p[key] = tuple(int(v) for v in p[key])
                kw["plan"] = PlanConfig(**p)
            if "forest" in d:
                kw["forest"] = ForestConfig(**d["forest"])
            if "explain" in d:
                kw["explain"] = ExplainConfig(**d["explain"])
            return cls(**kw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, "rb") as fh:
                return cls.from_dict(tomli.load(fh))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def dump(self, path) -> None:
        Path(path).write_text(self.dumps())


def full_scale(cfg: RunConfig) -> RunConfig:
    """Full-size grid, trace counts and forest."""
    return replace(cfg, grid=replace(cfg.grid, points=5000),
                   plan=replace(cfg.plan, genuine_traces=1500, tampered_traces=750),
                   forest=replace(cfg.forest, n_trees=200))


def apply_overrides(cfg: RunConfig, *, seed=None, full=False, folds=None, trees=None,
                    points=None, classes=None) -> RunConfig:
    """Command-line overrides, applied on top of the loaded config (full scale first)."""
    try:
        if full:
            cfg = full_scale(cfg)
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if folds is not None:
            cfg = replace(cfg, folds=int(folds))
        if trees is not None:
            cfg = replace(cfg, forest=replace(cfg.forest, n_trees=int(trees)))
        if points is not None:
            cfg = replace(cfg, grid=replace(cfg.grid, points=int(points)))
        if classes is not None:
            cfg = replace(cfg, plan=replace(cfg.plan, classes=tuple(sorted(set(classes)))))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def parse_classes(text: str) -> tuple[int, ...]:
    """``"0,3,5-7"`` -> ``(0, 3, 5, 6, 7)``."""
    out = set()
    try:
        for part in filter(None, (p.strip() for p in text.split(","))):
            lo, _, hi = part.partition("-")
            out.update(range(int(lo), int(hi or lo) + 1))
    except ValueError:
        raise ConfigError(f"bad class list {text!r}") from None
    if not out:
        raise ConfigError("empty class list")
    return tuple(sorted(out))


def resolve_output_dir(cfg: RunConfig, cli_out: str | None = None) -> Path:
    """``--out`` beats ``$WALDO_OUT``, which beats the config file."""
    return Path(cli_out or os.environ.get(ENV_OUT) or cfg.output_dir)


__all__ = [
    "ENV_OUT", "ExplainConfig", "ForestConfig", "PlanConfig", "RunConfig", "apply_overrides",
    "full_scale", "parse_classes", "resolve_output_dir",
]
