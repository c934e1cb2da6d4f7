"""Run configuration: an INI file with sections, overridden by CLI flags."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .agents import Agent, AgentRole, RESIDENT_ROLES, default_resident_homes, default_roster
from .errors import ConfigurationError
from .graph import LandUse, SpatialGraph
from .rewards import DEFAULT_TARGET_USES, RewardWeights
from .synth import DEFAULT_MIX, SyntheticSpec
from .training import TrainConfig

DEFAULT_METHODS = ("RTP", "RPP", "GTP", "GPP")


@dataclass
class RunConfig:
    parcels_csv: Path | None = None
    bundle_dir: Path | None = None
    out_dir: Path = Path("out")
    checkpoint: Path | None = None
    dtp_checkpoint: Path | None = None
    k: int = 4
    mode: str = "participatory"  # or "topdown"
    train: TrainConfig = field(default_factory=TrainConfig)
    methods: tuple[str, ...] = DEFAULT_METHODS
    compare_seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    homes: dict[AgentRole, int] | None = None
    synth: SyntheticSpec = field(default_factory=SyntheticSpec)

    def validate(self) -> "RunConfig":
        if self.k < 1:
            raise ConfigurationError(f"k must be >= 1, got {self.k}")
        if self.mode not in ("participatory", "topdown"):
            raise ConfigurationError(f"mode must be participatory or topdown, got {self.mode!r}")
        self.train.validate()
        return self

    def roster(self, graph: SpatialGraph) -> list[Agent]:
        homes = self.homes or default_resident_homes(graph)
        return default_roster(graph, radius_m=self.train.radius_m, homes=homes)


def _get(section, key, cast, default):
    if section is None or key not in section:
        return default
    raw = section[key]
    try:
        if cast is bool:
            return section.getboolean(key)
        return cast(raw)
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {raw!r} ({exc})") from None


def _parse_uses(raw: str) -> frozenset[LandUse]:
    return frozenset(LandUse.from_code(c.strip()) for c in raw.split(",") if c.strip())


def _parse_mix(raw: str) -> dict[LandUse, float]:
    mix: dict[LandUse, float] = {}
    for chunk in raw.split(","):
        if not chunk.strip():
            continue
        try:
            code, value = chunk.split(":")
            mix[LandUse.from_code(code.strip())] = float(value)
        except ValueError as exc:
            raise ConfigurationError(f"bad mix entry {chunk!r} ({exc})") from None
    return mix


def load_config(path: str | Path | None) -> RunConfig:
    """Read the INI run configuration; missing file sections keep defaults."""
    cfg = RunConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigurationError(f"config file not found: {path}")

    paths = parser["paths"] if parser.has_section("paths") else None
    cfg.parcels_csv = _get(paths, "parcels", Path, cfg.parcels_csv)
    cfg.bundle_dir = _get(paths, "bundle", Path, cfg.bundle_dir)
    cfg.out_dir = _get(paths, "out", Path, cfg.out_dir)
    cfg.checkpoint = _get(paths, "checkpoint", Path, cfg.checkpoint)
    cfg.dtp_checkpoint = _get(paths, "dtp_checkpoint", Path, cfg.dtp_checkpoint)

    graph_sec = parser["graph"] if parser.has_section("graph") else None
    cfg.k = _get(graph_sec, "k", int, cfg.k)

    train_sec = parser["train"] if parser.has_section("train") else None
    rewards_sec = parser["rewards"] if parser.has_section("rewards") else None
    weights = RewardWeights(
        self_weight=_get(rewards_sec, "self_weight", float, 1.0),
        local_weight=_get(rewards_sec, "local_weight", float, 1.0),
        global_weight=_get(rewards_sec, "global_weight", float, 1.0),
        equity_weight=_get(rewards_sec, "equity_weight", float, 1.0),
    )
    target_uses = DEFAULT_TARGET_USES
    if rewards_sec is not None and "target_uses" in rewards_sec:
        target_uses = _parse_uses(rewards_sec["target_uses"])
    cfg.train = TrainConfig(
        epochs=_get(train_sec, "epochs", int, 1),
        episodes_per_epoch=_get(train_sec, "episodes", int, 200),
        gamma=_get(train_sec, "gamma", float, 0.95),
        lr_actor=_get(train_sec, "lr_actor", float, 1e-3),
        lr_critic=_get(train_sec, "lr_critic", float, 1e-3),
        batch_size=_get(train_sec, "batch_size", int, 32),
        seed=_get(train_sec, "seed", int, 0),
        weights=weights,
        radius_m=_get(train_sec, "radius_m", float, 1250.0),
        buffer_capacity=_get(train_sec, "buffer_capacity", int, 10_000),
        hidden=_get(train_sec, "hidden", int, 32),
        gat_layers=_get(train_sec, "gat_layers", int, 2),
        target_uses=target_uses,
    )
    cfg.mode = _get(train_sec, "mode", str, cfg.mode)

    agents_sec = parser["agents"] if parser.has_section("agents") else None
    if agents_sec is not None:
        homes: dict[AgentRole, int] = {}
        for role in RESIDENT_ROLES:
            key = f"{role.value}_home"
            if key in agents_sec:
                homes[role] = int(agents_sec[key])
        if homes:
            if set(homes) != set(RESIDENT_ROLES):
                raise ConfigurationError(
                    "either give all of low_home/mid_home/high_home or none"
                )
            cfg.homes = homes

    compare_sec = parser["compare"] if parser.has_section("compare") else None
    if compare_sec is not None:
        if "methods" in compare_sec:
            cfg.methods = tuple(
                m.strip().upper() for m in compare_sec["methods"].split(",") if m.strip()
            )
        if "seeds" in compare_sec:
            cfg.compare_seeds = tuple(
                int(s) for s in compare_sec["seeds"].split(",") if s.strip()
            )

    synth_sec = parser["synth"] if parser.has_section("synth") else None
    mix = dict(DEFAULT_MIX)
    if synth_sec is not None and "mix" in synth_sec:
        mix = _parse_mix(synth_sec["mix"])
    cfg.synth = SyntheticSpec(
        width=_get(synth_sec, "width", int, 6),
        height=_get(synth_sec, "height", int, 6),
        spacing_m=_get(synth_sec, "spacing_m", float, 400.0),
        area_min=_get(synth_sec, "area_min", float, 600.0),
        area_max=_get(synth_sec, "area_max", float, 2400.0),
        mix=mix,
        readjustable_fraction=_get(synth_sec, "readjustable_fraction", float, 0.25),
        seed=_get(synth_sec, "seed", int, 0),
    )
    return cfg
