"""Idealized 2D scalp positions for 10-10 and a subset of 10-5 electrode names.

Positions are an azimuthal-equidistant projection of an idealized spherical
head: the polar angle from Cz is mapped linearly to the disc radius with
120 degrees at the rim, so the ear-level ring (Fpz, T7, Oz, T8) sits at
radius 0.75 and the inferior ring (Nz, T9, Iz, T10) at 0.9375.  +y points to
the nose, +x to the right ear.
"""

from __future__ import annotations

import math
from types import MappingProxyType
from typing import Mapping

_RIM_DEG = 120.0

# row prefix -> (midline polar angle, signed: + anterior; ear-ring azimuth in
# degrees measured from the nose)
_ROWS = {
    "AF": (67.5, 36.0),
    "F": (45.0, 54.0),
    "FC": (22.5, 72.0),
    "C": (0.0, 90.0),
    "CP": (-22.5, 108.0),
    "P": (-45.0, 126.0),
    "PO": (-67.5, 144.0),
}
# half rows of the 10-5 system, sitting between two 10-10 rows
_HALF_ROWS = {
    "AFF": ("AF", "F"),
    "FFC": ("F", "FC"),
    "FCC": ("FC", "C"),
    "CCP": ("C", "CP"),
    "CPP": ("CP", "P"),
    "PPO": ("P", "PO"),
}
# the lateral end of the C row is named T7/T8 rather than C7/C8, etc.
_RING_NAMES = {"FC": "FT", "C": "T", "CP": "TP"}


def _to_disc(polar_deg: float, azimuth_deg: float) -> tuple[float, float]:
    r = polar_deg / _RIM_DEG
    a = math.radians(azimuth_deg)
    return (r * math.sin(a), r * math.cos(a))


def _row_point(midline_deg: float, ring_az: float, frac: float) -> tuple[float, float]:
    # straight interpolation in the projected plane from the midline point to
    # the ear-ring point of the row
    x0, y0 = 0.0, midline_deg / _RIM_DEG
    x1, y1 = _to_disc(90.0, ring_az)
    return (x0 + frac * (x1 - x0), y0 + frac * (y1 - y0))


def _build_table() -> dict[str, tuple[float, float]]:
    table: dict[str, tuple[float, float]] = {}

    def put(name: str, xy: tuple[float, float], side: int) -> None:
        x, y = xy
        table[name] = (round(side * x, 6) + 0.0, round(y, 6) + 0.0)

    for prefix, (mid, ring) in _ROWS.items():
        put(prefix + "z", (0.0, mid / _RIM_DEG), 1)
        for j in range(1, 5):
            xy = _row_point(mid, ring, j / 4)
            left, right = str(2 * j - 1), str(2 * j)
            if j == 4 and prefix in _RING_NAMES:
                lname = _RING_NAMES[prefix] + left
                rname = _RING_NAMES[prefix] + right
            else:
                lname, rname = prefix + left, prefix + right
            put(lname, xy, -1)
            put(rname, xy, 1)
        # inferior ring (9/10), same azimuth as the ear-ring point
        ring_name = _RING_NAMES.get(prefix, prefix)
        put(ring_name + "9", _to_disc(112.5, ring), -1)
        put(ring_name + "10", _to_disc(112.5, ring), 1)

    for prefix, (front, back) in _HALF_ROWS.items():
        mid = (_ROWS[front][0] + _ROWS[back][0]) / 2
        ring = (_ROWS[front][1] + _ROWS[back][1]) / 2
        for k, frac in enumerate((0.125, 0.375, 0.625, 0.875)):
            xy = _row_point(mid, ring, frac)
            put(f"{prefix}{2 * k + 1}h", xy, -1)
            put(f"{prefix}{2 * k + 2}h", xy, 1)

    put("Fpz", _to_disc(90.0, 0.0), 1)
    put("Fp1", _to_disc(90.0, 18.0), -1)
    put("Fp2", _to_disc(90.0, 18.0), 1)
    put("Oz", _to_disc(90.0, 180.0), 1)
    put("O1", _to_disc(90.0, 162.0), -1)
    put("O2", _to_disc(90.0, 162.0), 1)
    put("Nz", _to_disc(112.5, 0.0), 1)
    put("Iz", _to_disc(112.5, 180.0), 1)
    return table


MONTAGE: Mapping[str, tuple[float, float]] = MappingProxyType(_build_table())

MIDLINE_7 = ("Cz", "CPz", "FCz", "Fz", "Pz", "POz", "Fpz")

# ordered channel sets used by the synthetic generator and presets
CHANNELS_32 = (
    "Fp1", "Fpz", "Fp2", "F7", "F3", "Fz", "F4", "F8",
    "FC5", "FC1", "FCz", "FC2", "FC6", "T7", "C3", "Cz",
    "C4", "T8", "CP5", "CP1", "CPz", "CP2", "CP6", "P7",
    "P3", "Pz", "P4", "P8", "POz", "O1", "Oz", "O2",
)
CHANNELS_64 = CHANNELS_32 + (
    "AF7", "AF3", "AFz", "AF4", "AF8", "F5", "F1", "F2",
    "F6", "FT7", "FC3", "FC4", "FT8", "C5", "C1", "C2",
    "C6", "TP7", "CP3", "CP4", "TP8", "P5", "P1", "P2",
    "P6", "PO7", "PO3", "PO4", "PO8", "FT9", "FT10", "Iz",
)
_EXTRA_128 = tuple(
    name for name in MONTAGE
    if name not in CHANNELS_64 and name not in ("Nz",)
)
CHANNELS_128 = CHANNELS_64 + _EXTRA_128[: 128 - len(CHANNELS_64)]

CHANNEL_SETS: Mapping[str, tuple[str, ...]] = MappingProxyType({
    "midline7": MIDLINE_7,
    "32": CHANNELS_32,
    "64": CHANNELS_64,
    "128": CHANNELS_128,
})

OCCIPITAL = ("O1", "Oz", "O2", "PO7", "PO3", "POz", "PO4", "PO8", "Iz",
             "PO9", "PO10", "PPO1h", "PPO2h")


class UnknownChannelError(KeyError):
    """Raised for a channel name missing from the montage table."""


def montage_lookup(name: str) -> tuple[float, float]:
    try:
        return MONTAGE[name]
    except KeyError:
        raise UnknownChannelError(f"unknown channel name {name!r}") from None


def neighbors(name: str, radius: float = 0.27) -> list[str]:
    """Channels within `radius` of `name` on the disc, including `name`.

    The default radius covers one 10-10 grid step including diagonals.
    """
    x0, y0 = montage_lookup(name)
    return [
        other for other, (x, y) in MONTAGE.items()
        if math.hypot(x - x0, y - y0) <= radius
    ]
