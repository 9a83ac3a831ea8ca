"""Static LEO snapshot geometry on a spherical Earth."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EARTH_RADIUS_M = 6_371_000.0


@dataclass(frozen=True)
class GeodeticPoint:
    latitude: float
    longitude: float
    altitude: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} outside [-180, 180]")
        if not (math.isfinite(self.altitude) and self.altitude >= 0.0):
            raise ValueError(f"altitude must be finite and >= 0, got {self.altitude}")


@dataclass(frozen=True)
class SatelliteState:
    """Snapshot of one satellite: ECEF position and antenna boresight direction."""

    position: np.ndarray
    nadir_direction: np.ndarray
    id: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.position)):
            raise ValueError("satellite position must be finite")
        if abs(np.linalg.norm(self.nadir_direction) - 1.0) > 1e-12:
            raise ValueError("nadir_direction must have unit norm")


def geodetic_to_cartesian(p: GeodeticPoint, earth_radius: float = EARTH_RADIUS_M) -> np.ndarray:
    """Earth-centred Cartesian coordinates (m) of ``p`` on a sphere."""
    r = earth_radius + p.altitude
    lat = math.radians(p.latitude)
    lon = math.radians(p.longitude)
    return np.array(
        [r * math.cos(lat) * math.cos(lon), r * math.cos(lat) * math.sin(lon), r * math.sin(lat)]
    )


def geodetic_array_to_cartesian(lat_deg, lon_deg, alt_m=0.0, earth_radius=EARTH_RADIUS_M):
    """Vectorized :func:`geodetic_to_cartesian`; returns an ``(n, 3)`` array."""
    lat = np.radians(np.asarray(lat_deg, dtype=float))
    lon = np.radians(np.asarray(lon_deg, dtype=float))
    r = earth_radius + np.asarray(alt_m, dtype=float)
    return np.stack(
        [r * np.cos(lat) * np.cos(lon), r * np.cos(lat) * np.sin(lon), r * np.sin(lat)], axis=-1
    )


def place_constellation(
    center: GeodeticPoint,
    count: int,
    lat_spacing: float,
    sat_altitude: float,
    earth_radius: float = EARTH_RADIUS_M,
) -> list[SatelliteState]:
    """Satellites of one polar orbit, spread in latitude around ``center``.

    Satellite ``i`` sits above latitude ``center.latitude + (i - (count-1)/2) *
    lat_spacing`` on the centre meridian, so the middle one of an odd count is
    directly over ``center``.  Antennas point at nadir.
    """
    if count <= 0:
        raise ValueError(f"constellation needs at least one satellite, got {count}")
    sats = []
    for i in range(count):
        lat = center.latitude + (i - (count - 1) / 2.0) * lat_spacing
        pos = geodetic_to_cartesian(GeodeticPoint(lat, center.longitude, sat_altitude), earth_radius)
        sats.append(SatelliteState(pos, -pos / np.linalg.norm(pos), i))
    return sats


def slant_range(sat: SatelliteState, terminal: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(terminal, dtype=float) - sat.position))


def boresight_angle(sat: SatelliteState, terminal: np.ndarray) -> float:
    """Angle (rad) between the satellite boresight and its line of sight to ``terminal``."""
    los = np.asarray(terminal, dtype=float) - sat.position
    dist = np.linalg.norm(los)
    if dist == 0.0:
        raise ValueError("terminal coincides with the satellite")
    cos_t = float(np.dot(los, sat.nadir_direction)) / dist
    # atan2 form stays accurate for the sub-degree angles of interest
    sin_t = float(np.linalg.norm(np.cross(los, sat.nadir_direction))) / dist
    return math.atan2(sin_t, cos_t)


def ranges_and_angles(sats: list[SatelliteState], terminals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Slant ranges and boresight angles for every (satellite, terminal) pair.

    Returns two ``(len(sats), len(terminals))`` arrays.
    """
    terminals = np.atleast_2d(np.asarray(terminals, dtype=float))
    pos = np.stack([s.position for s in sats])
    nadir = np.stack([s.nadir_direction for s in sats])
    los = terminals[None, :, :] - pos[:, None, :]
    dist = np.linalg.norm(los, axis=-1)
    if np.any(dist == 0.0):
        raise ValueError("terminal coincides with a satellite")
    cos_t = np.einsum("mtk,mk->mt", los, nadir) / dist
    sin_t = np.linalg.norm(np.cross(los, nadir[:, None, :]), axis=-1) / dist
    return dist, np.arctan2(sin_t, cos_t)


def local_offsets_to_geodetic(
    center: GeodeticPoint, east_m, north_m, earth_radius: float = EARTH_RADIUS_M
) -> tuple[np.ndarray, np.ndarray]:
    """Latitude/longitude (deg) of points displaced east/north of ``center`` along the sphere."""
    lat0 = math.radians(center.latitude)
    lat = center.latitude + np.degrees(np.asarray(north_m, dtype=float) / earth_radius)
    lon = center.longitude + np.degrees(
        np.asarray(east_m, dtype=float) / (earth_radius * math.cos(lat0))
    )
    return lat, lon
