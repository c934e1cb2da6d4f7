"""Seeded synthetic grid districts in the parcel ingestion schema."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .graph import ALL_LAND_USES, LandUse, Parcel, serialize_parcels

DEFAULT_MIX = {
    LandUse.RESIDENTIAL: 0.35,
    LandUse.OFFICE: 0.20,
    LandUse.GREEN: 0.15,
    LandUse.COMMERCIAL: 0.15,
    LandUse.FACILITIES: 0.15,
}


@dataclass(frozen=True)
class SyntheticSpec:
    """A grid district: width x height parcels at fixed spacing.

    Land uses are drawn from ``mix``; floor(readjustable_fraction * n)
    parcels are flagged vacant so the selection step picks them up.
    """

    width: int = 6
    height: int = 6
    spacing_m: float = 400.0
    area_min: float = 600.0
    area_max: float = 2400.0
    mix: dict[LandUse, float] = field(default_factory=lambda: dict(DEFAULT_MIX))
    readjustable_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self) -> None:
        if self.width < 2 or self.height < 2:
            raise ValidationError("grid dimensions must be >= 2")
        if not 0.0 <= self.readjustable_fraction <= 1.0:
            raise ValidationError("readjustable_fraction must be in [0, 1]")
        if self.spacing_m <= 0 or self.area_min <= 0 or self.area_max < self.area_min:
            raise ValidationError("bad spacing or area bounds")
        total = sum(self.mix.values())
        if total <= 0 or any(v < 0 for v in self.mix.values()):
            raise ValidationError("land-use mix must be non-negative, not all zero")


def generate_parcels(spec: SyntheticSpec) -> list[Parcel]:
    """Deterministic parcel list for the spec; same spec+seed, same parcels."""
    rng = np.random.default_rng(spec.seed)
    n = spec.width * spec.height
    mix = np.array([spec.mix.get(use, 0.0) for use in ALL_LAND_USES])
    mix = mix / mix.sum()
    uses = rng.choice(len(ALL_LAND_USES), size=n, p=mix)
    areas = rng.uniform(spec.area_min, spec.area_max, size=n)
    n_flagged = math.floor(spec.readjustable_fraction * n)
    flagged = set(rng.choice(n, size=n_flagged, replace=False).tolist())

    parcels = []
    for pid in range(n):
        gx, gy = pid % spec.width, pid // spec.width
        parcels.append(
            Parcel(
                id=pid,
                land_use=ALL_LAND_USES[int(uses[pid])],
                area=float(areas[pid]),
                x=gx * spec.spacing_m,
                y=gy * spec.spacing_m,
                vacant=pid in flagged,
            )
        )
    return parcels


def generate_csv(spec: SyntheticSpec) -> str:
    return serialize_parcels(generate_parcels(spec))
