"""
Great-circle distances, source assignment and exposure.

All distances are in km on a sphere of radius :const:`~backinajiffy.decay.const.EARTH_RADIUS_KM`.
"""
import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple, List, Optional, Dict

import numpy as np
import pandas as pd

from .const import PROJECT_LOGGER_NAME, EARTH_RADIUS_KM, MIN_DISTANCE_KM
from .exc import InputError, ConfigurationError

WEIGHT_MODES = ('nearest', 'capacity', 'emissions')


def module_logger():
    return logging.getLogger(PROJECT_LOGGER_NAME + '.' + __name__)


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        check_coordinates(self.lat, self.lon)


@dataclass(frozen=True)
class SourceRecord:
    """
    A point source.

    ``emission_rate`` is the Q of the point-source field; for plants it is SO2 + NOx tons.
    """
    source_id: str
    location: GeoPoint
    capacity: float = 0.0
    emission_rate: float = 0.0
    region_tag: str = ''

    def __post_init__(self):
        if not (math.isfinite(self.capacity) and self.capacity >= 0):
            raise InputError(f"Source '{self.source_id}': capacity must be >= 0")
        if not (math.isfinite(self.emission_rate) and self.emission_rate >= 0):
            raise InputError(f"Source '{self.source_id}': emission rate must be >= 0")

    def weight(self, weight_mode: str) -> float:
        if weight_mode == 'nearest':
            return 1.0
        if weight_mode == 'capacity':
            return self.capacity
        if weight_mode == 'emissions':
            return self.emission_rate
        raise ConfigurationError(f"Unknown weight mode '{weight_mode}'")


@dataclass(frozen=True)
class SourceAssignment:
    nearest_id: str
    nearest_distance: float
    dominant_exposure_id: str
    dominant_distance: float
    exposure: float
    clamped: bool = False


@dataclass(frozen=True)
class BBox:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        check_coordinates(self.lat_min, self.lon_min)
        check_coordinates(self.lat_max, self.lon_max)
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise ConfigurationError(f'Degenerate bounding box {self}')

    def contains(self, p: GeoPoint) -> bool:
        return self.lat_min <= p.lat <= self.lat_max and self.lon_min <= p.lon <= self.lon_max

    def clamp(self, p: GeoPoint) -> GeoPoint:
        """Closest point of the box in lat/lon coordinates."""
        return GeoPoint(min(max(p.lat, self.lat_min), self.lat_max), min(max(p.lon, self.lon_min), self.lon_max))

    @classmethod
    def around(cls, lats: Sequence[float], lons: Sequence[float]) -> 'BBox':
        """Bounding box of the given coordinates, padded if degenerate."""
        lat_min, lat_max = float(np.min(lats)), float(np.max(lats))
        lon_min, lon_max = float(np.min(lons)), float(np.max(lons))
        if lat_min == lat_max:
            lat_min, lat_max = max(lat_min - 0.01, -90.0), min(lat_max + 0.01, 90.0)
        if lon_min == lon_max:
            lon_min, lon_max = max(lon_min - 0.01, -180.0), min(lon_max + 0.01, 180.0)
        return cls(lat_min, lat_max, lon_min, lon_max)


def check_coordinates(lat: float, lon: float) -> None:
    if not (math.isfinite(lat) and math.isfinite(lon)):
        raise InputError(f'Non-finite coordinates ({lat}, {lon})')
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        raise InputError(f'Coordinates out of range ({lat}, {lon})')


def haversine(a: GeoPoint, b: GeoPoint) -> float:
    """
    Great-circle distance in km.

    d = 2R asin(sqrt(sin²((φ2-φ1)/2) + cos φ1 cos φ2 sin²((λ2-λ1)/2)))
    """
    check_coordinates(a.lat, a.lon)
    check_coordinates(b.lat, b.lon)
    return float(_haversine(np.float64(a.lat), np.float64(a.lon), np.float64(b.lat), np.float64(b.lon)))


def _haversine(lat1, lon1, lat2, lon2):
    phi1, phi2 = np.radians(lat1), np.radians(lat2)
    dphi = phi2 - phi1
    dlmb = np.radians(lon2) - np.radians(lon1)
    h = np.sin(dphi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def distance_matrix(lats: Sequence[float], lons: Sequence[float], sources: Sequence[SourceRecord]) -> np.ndarray:
    """
    Pairwise distances, shape (n points, m sources).
    """
    lats = np.asarray(lats, dtype=float)
    lons = np.asarray(lons, dtype=float)
    if not (np.all(np.isfinite(lats)) and np.all(np.isfinite(lons))):
        raise InputError('Non-finite coordinates in points')
    slat = np.array([s.location.lat for s in sources], dtype=float)
    slon = np.array([s.location.lon for s in sources], dtype=float)
    return _haversine(lats[:, None], lons[:, None], slat[None, :], slon[None, :])


def initial_bearing(a: GeoPoint, b: GeoPoint) -> float:
    """
    Forward azimuth from `a` to `b` in degrees clockwise from north, in [0, 360).
    """
    return float(_bearing(a.lat, a.lon, b.lat, b.lon))


def _bearing(lat1, lon1, lat2, lon2):
    phi1, phi2 = np.radians(lat1), np.radians(lat2)
    dlmb = np.radians(lon2) - np.radians(lon1)
    x = np.sin(dlmb) * np.cos(phi2)
    y = np.cos(phi1) * np.sin(phi2) - np.sin(phi1) * np.cos(phi2) * np.cos(dlmb)
    return np.degrees(np.arctan2(x, y)) % 360.0


def angle_from_wind(bearing_deg, wind_bearing_deg):
    """
    Angle θ in radians, in [0, π], between the source→point bearing and the direction the wind blows to.
    θ = 0 is straight downwind.
    """
    d = (np.asarray(bearing_deg, dtype=float) - float(wind_bearing_deg) + 180.0) % 360.0 - 180.0
    return np.radians(np.abs(d))


def _sorted_sources(sources: Sequence[SourceRecord]) -> List[SourceRecord]:
    if not sources:
        raise ConfigurationError('Source collection is empty')
    ss = sorted(sources, key=lambda s: s.source_id)
    for a, b in zip(ss, ss[1:]):
        if a.source_id == b.source_id:
            raise InputError(f"Duplicate source id '{a.source_id}'")
    return ss


def _weights(sources: Sequence[SourceRecord], weight_mode: str) -> np.ndarray:
    if weight_mode not in WEIGHT_MODES:
        raise ConfigurationError(f"Unknown weight mode '{weight_mode}'")
    w = np.array([s.weight(weight_mode) for s in sources], dtype=float)
    if weight_mode != 'nearest' and w.sum() <= 0:
        raise ConfigurationError(f"Weight mode '{weight_mode}' needs source weights, all are zero")
    return w


def _assign_rows(dist: np.ndarray, w: np.ndarray):
    clamped = dist < MIN_DISTANCE_KM
    d = np.where(clamped, MIN_DISTANCE_KM, dist)
    nearest = np.argmin(d, axis=1)
    contrib = w[None, :] / d ** 2
    # Row sums over a fixed source order, so chunking rows does not change a result
    exposure = contrib.sum(axis=1)
    dominant = np.argmax(contrib, axis=1)
    rows = np.arange(d.shape[0])
    return nearest, d[rows, nearest], dominant, d[rows, dominant], exposure, clamped.any(axis=1)


def assign_sources(point: GeoPoint, sources: Sequence[SourceRecord], weight_mode: str = 'nearest') -> SourceAssignment:
    """
    Nearest source and distance-weighted exposure of one point.

    The dominant source maximizes w_j / d_j² where w_j is 1, capacity or emissions per `weight_mode`;
    exposure = Σ_j w_j / d_j². Distances below 0.1 km are clamped and flagged.

    :raises ConfigurationError: if `sources` is empty, the weight mode is unknown or its weights are all zero
    """
    ss = _sorted_sources(sources)
    w = _weights(ss, weight_mode)
    dist = distance_matrix([point.lat], [point.lon], ss)
    nearest, nd, dominant, dd, exposure, clamped = _assign_rows(dist, w)
    if clamped[0]:
        module_logger().warning('Point coincides with a source, distance clamped',
                                extra={'data': {'lat': point.lat, 'lon': point.lon, 'min_km': MIN_DISTANCE_KM}})
    return SourceAssignment(
        nearest_id=ss[int(nearest[0])].source_id,
        nearest_distance=float(nd[0]),
        dominant_exposure_id=ss[int(dominant[0])].source_id,
        dominant_distance=float(dd[0]),
        exposure=float(exposure[0]),
        clamped=bool(clamped[0])
    )


def assign_frame(frame: pd.DataFrame, sources: Sequence[SourceRecord], weight_mode: str = 'nearest',
                 wind_bearing: Optional[float] = None, chunk_rows: int = 20000) -> pd.DataFrame:
    """
    Assigns sources to every row of an observation frame with columns ``lat`` and ``lon``.

    Adds ``nearest_id``, ``nearest_distance``, ``nearest_capacity``, ``nearest_emissions``, ``nearest_region``,
    ``dominant_id``, ``dominant_distance``, ``exposure``, ``clamped`` and ``distance``, the analysis distance
    (nearest distance in mode 'nearest', dominant-exposure distance otherwise). With `wind_bearing` given, also
    adds ``theta``, the angle of the row seen from its analysis source relative to the wind.

    :return: A new frame
    """
    ss = _sorted_sources(sources)
    w = _weights(ss, weight_mode)
    lats = frame['lat'].to_numpy(dtype=float)
    lons = frame['lon'].to_numpy(dtype=float)
    parts = []
    for start in range(0, len(frame), chunk_rows):
        dist = distance_matrix(lats[start:start + chunk_rows], lons[start:start + chunk_rows], ss)
        parts.append(_assign_rows(dist, w))
    if parts:
        nearest, nd, dominant, dd, exposure, clamped = (np.concatenate(x) for x in zip(*parts))
    else:
        nearest = dominant = np.zeros(0, dtype=int)
        nd = dd = exposure = np.zeros(0)
        clamped = np.zeros(0, dtype=bool)
    n_clamped = int(clamped.sum())
    if n_clamped:
        module_logger().warning('Observations coincide with sources, distances clamped',
                                extra={'data': {'count': n_clamped, 'min_km': MIN_DISTANCE_KM}})
    ids = np.array([s.source_id for s in ss], dtype=object)
    out = frame.copy()
    out['nearest_id'] = ids[nearest]
    out['nearest_distance'] = nd
    out['nearest_capacity'] = np.array([s.capacity for s in ss])[nearest]
    out['nearest_emissions'] = np.array([s.emission_rate for s in ss])[nearest]
    out['nearest_region'] = np.array([s.region_tag for s in ss], dtype=object)[nearest]
    out['dominant_id'] = ids[dominant]
    out['dominant_distance'] = dd
    out['exposure'] = exposure
    out['clamped'] = clamped
    out['distance'] = nd if weight_mode == 'nearest' else dd
    if wind_bearing is not None:
        src = dominant if weight_mode != 'nearest' else nearest
        slat = np.array([s.location.lat for s in ss])[src]
        slon = np.array([s.location.lon for s in ss])[src]
        out['theta'] = angle_from_wind(_bearing(slat, slon, lats, lons), wind_bearing)
    return out


@dataclass(frozen=True)
class BinSummary:
    lower: float
    upper: Optional[float]
    n: int
    mean: Optional[float]
    median: Optional[float]
    sd: Optional[float]

    @property
    def label(self) -> str:
        if self.upper is None:
            return f'{self.lower:g}+ km'
        return f'{self.lower:g}-{self.upper:g} km'

    def as_record(self) -> Dict:
        return {'bin': self.label, 'lower': self.lower, 'upper': self.upper, 'n': self.n,
                'mean': self.mean, 'median': self.median, 'sd': self.sd}


def distance_bin_summary(distances: Sequence[float], values: Sequence[float], edges: Sequence[float],
                         open_last: bool = False) -> List[BinSummary]:
    """
    Summary statistics of outcomes per half-open distance bin [e_k, e_{k+1}).

    With `open_last`, the last bin is [e_last, ∞). Observations outside all bins are not counted. Empty bins
    report n = 0 and None statistics; sd is the sample standard deviation (None for n < 2).

    :raises ConfigurationError: if edges are not strictly ascending or fewer than 2
    """
    edges = np.asarray(edges, dtype=float)
    if edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ConfigurationError('Bin edges must be strictly ascending with at least 2 edges')
    d = np.asarray(distances, dtype=float)
    v = np.asarray(values, dtype=float)
    bounds: List[Tuple[float, Optional[float]]] = [(edges[k], edges[k + 1]) for k in range(edges.size - 1)]
    if open_last:
        bounds.append((edges[-1], None))
    out = []
    for lo, hi in bounds:
        mask = (d >= lo) & ((d < hi) if hi is not None else True)
        x = v[mask]
        n = int(x.size)
        out.append(BinSummary(
            lower=float(lo),
            upper=None if hi is None else float(hi),
            n=n,
            mean=float(np.mean(x)) if n else None,
            median=float(np.median(x)) if n else None,
            sd=float(np.std(x, ddof=1)) if n > 1 else None
        ))
    return out
