"""
Seeded synthetic scenarios with known ground truth.

Randomness is counter based: every observation owns one fixed block of a Philox stream, addressed by its index.
A draw therefore does not depend on how many observations were generated before it or in which chunk.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Tuple, List, Optional, Dict

import numpy as np
import pandas as pd
import pydash
from scipy import special

from . import geo, physics
from .const import PROJECT_LOGGER_NAME, URBAN_SCALE_KM, MIN_DISTANCE_KM, DEFAULT_EPSILON
from .exc import ConfigurationError, InputError
from .file_utils import write_json
from .geo import GeoPoint, SourceRecord, BBox
from .physics import PhysicalParams
from .rc import read_yaml

BACKGROUND_MODES = ('none', 'constant', 'urban_gradient')
FIELD_MODES = ('helmholtz', 'geometric', 'advection', 'wind_interaction')

_STREAM_LOCATIONS = 0
_STREAM_SOURCES = 1
_STREAM_NOISE = 16
_BLOCK = 4
_MASK64 = (1 << 64) - 1


def module_logger():
    return logging.getLogger(PROJECT_LOGGER_NAME + '.' + __name__)


@dataclass(frozen=True)
class UrbanCenter:
    location: GeoPoint
    amplitude: float


@dataclass(frozen=True)
class ScenarioSpec:
    sources: Tuple[SourceRecord, ...]
    params: PhysicalParams
    bbox: BBox
    n_obs: int = 1000
    noise_sigma: float = 0.0
    background_mode: str = 'none'
    background_level: float = 0.0
    urban_centers: Tuple[UrbanCenter, ...] = ()
    seed: int = 0
    field_mode: str = 'helmholtz'
    wind_bearing: float = 0.0
    periods: Tuple[str, ...] = ('2021-01',)

    def __post_init__(self):
        if self.n_obs <= 0:
            raise ConfigurationError('n_obs must be positive')
        if not self.sources:
            raise ConfigurationError('Scenario needs at least one source')
        if self.noise_sigma < 0:
            raise ConfigurationError('noise_sigma must be >= 0')
        if self.background_mode not in BACKGROUND_MODES:
            raise ConfigurationError(f"Unknown background mode '{self.background_mode}'")
        if self.background_mode == 'urban_gradient' and not self.urban_centers:
            raise ConfigurationError('urban_gradient background needs at least one urban center')
        if self.field_mode not in FIELD_MODES:
            raise ConfigurationError(f"Unknown field mode '{self.field_mode}'")
        if not self.periods:
            raise ConfigurationError('Scenario needs at least one period')
        if not 0 <= self.seed <= _MASK64:
            raise ConfigurationError('seed must be a 64-bit unsigned integer')


@dataclass(frozen=True)
class Truth:
    kappa_s: float
    d_star: Optional[float]
    epsilon: float
    source_q: Dict[str, float]
    weak_signal: bool = False


@dataclass(frozen=True)
class SyntheticDataset:
    """
    :ivar observations: Frame in the cell schema, one row per location and period, sorted by obs_id and period
    :ivar sources: The sources the field was computed from
    :ivar truth: Ground truth of the source field (background excluded)
    """
    observations: pd.DataFrame
    sources: Tuple[SourceRecord, ...]
    truth: Truth
    field_values: np.ndarray = field(repr=False, default=None)

    def records(self):
        from .ingest import frame_to_records
        return frame_to_records(self.observations)


def uniform_block(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """
    Uniforms on [0, 1) for items ``start .. start + count - 1`` of a stream, shape (count, 4).

    Item i always receives the same four numbers, independent of `start` and `count`.
    """
    bg = np.random.Philox(key=np.array([seed & _MASK64, stream], dtype=np.uint64))
    bg.advance(start)
    gen = np.random.Generator(bg)
    return gen.random((count, _BLOCK))


def _uniforms(seed: int, stream: int, n: int, chunk_size: Optional[int]) -> np.ndarray:
    if not chunk_size or chunk_size >= n:
        return uniform_block(seed, stream, 0, n)
    return np.concatenate([uniform_block(seed, stream, s, min(chunk_size, n - s)) for s in range(0, n, chunk_size)])


def random_sources(n: int, bbox: BBox, seed: int, prefix: str = 'placebo') -> List[SourceRecord]:
    """
    `n` sources placed uniformly in `bbox`, with unit capacity and emission rate.
    """
    if n <= 0:
        raise ConfigurationError('Number of random sources must be positive')
    u = uniform_block(seed, _STREAM_SOURCES, 0, n)
    lat = bbox.lat_min + u[:, 0] * (bbox.lat_max - bbox.lat_min)
    lon = bbox.lon_min + u[:, 1] * (bbox.lon_max - bbox.lon_min)
    width = len(str(n))
    return [SourceRecord(source_id=f'{prefix}-{i:0{width}d}', location=GeoPoint(float(a), float(b)),
                         capacity=1.0, emission_rate=1.0)
            for i, (a, b) in enumerate(zip(lat, lon))]


def _source_field(spec: ScenarioSpec, dist: np.ndarray, lats, lons, u_wind) -> Tuple[np.ndarray, Dict]:
    p = spec.params
    q = np.array([s.emission_rate for s in spec.sources], dtype=float)
    extra = {}
    if spec.field_mode == 'helmholtz':
        return physics.superposed_field(spec.sources, p, dist), extra
    if spec.field_mode == 'geometric':
        return np.sum(physics.geometric_field(1.0, p, dist) * q, axis=1), extra
    if spec.field_mode == 'advection':
        slat = np.array([s.location.lat for s in spec.sources])
        slon = np.array([s.location.lon for s in spec.sources])
        bearing = geo._bearing(slat[None, :], slon[None, :], lats[:, None], lons[:, None])
        theta = geo.angle_from_wind(bearing, spec.wind_bearing)
        extra['theta'] = theta[np.arange(dist.shape[0]), np.argmin(dist, axis=1)]
        return np.sum(physics.advection_field(1.0, p, dist, theta) * q, axis=1), extra
    # wind_interaction: eddy diffusivity scales with the local wind speed w ∈ [0, 2U]
    w = 2.0 * p.wind_speed * u_wind
    scale = w / p.wind_speed if p.wind_speed > 0 else np.zeros_like(w)
    d_eff = p.diffusivity + p.eddy_diffusivity * scale
    kappa = np.sqrt(p.decay_rate / d_eff)
    extra['wind_speed'] = w
    c = q[None, :] / (4.0 * math.pi * d_eff[:, None] * dist) * np.exp(-kappa[:, None] * dist)
    return c.sum(axis=1), extra


def _background(spec: ScenarioSpec, lats, lons) -> np.ndarray:
    if spec.background_mode == 'none':
        return np.zeros(lats.size)
    if spec.background_mode == 'constant':
        return np.full(lats.size, float(spec.background_level))
    bg = np.zeros(lats.size)
    for c in spec.urban_centers:
        d = geo._haversine(lats, lons, c.location.lat, c.location.lon)
        bg += c.amplitude * np.exp(-d / URBAN_SCALE_KM)
    return bg


def _weak_signal(spec: ScenarioSpec) -> bool:
    k = spec.params.kappa
    if k <= 0:
        return False
    return all(geo.haversine(s.location, spec.bbox.clamp(s.location)) > 10.0 / k for s in spec.sources)


def generate(spec: ScenarioSpec, chunk_size: Optional[int] = None, epsilon: float = DEFAULT_EPSILON) -> SyntheticDataset:
    """
    Draws a synthetic dataset.

    Locations are uniform in the bounding box; outcome = source field + background, times lognormal noise
    exp(N(0, σ²)). With several periods the same locations are observed once per period with fresh noise.

    :param chunk_size: Generate in chunks of this many observations; the output does not depend on it
    """
    n = spec.n_obs
    u_loc = _uniforms(spec.seed, _STREAM_LOCATIONS, n, chunk_size)
    bb = spec.bbox
    lats = bb.lat_min + u_loc[:, 0] * (bb.lat_max - bb.lat_min)
    lons = bb.lon_min + u_loc[:, 1] * (bb.lon_max - bb.lon_min)
    dist = np.maximum(geo.distance_matrix(lats, lons, spec.sources), MIN_DISTANCE_KM)
    signal, extra = _source_field(spec, dist, lats, lons, u_loc[:, 2])
    level = signal + _background(spec, lats, lons)

    width = max(len(str(n - 1)), 6)
    ids = np.array([f'syn{i:0{width}d}' for i in range(n)], dtype=object)
    frames = []
    for k, period in enumerate(spec.periods):
        u = _uniforms(spec.seed, _STREAM_NOISE + k, n, chunk_size)
        # Inverse-CDF normals keep one uniform per draw
        z = special.ndtri(np.clip(u[:, 0], 1e-300, None))
        values = level * np.exp(spec.noise_sigma * z) if spec.noise_sigma > 0 else level.copy()
        df = pd.DataFrame({
            'cell_id': ids,
            'lat': lats,
            'lon': lons,
            'month': period,
            'value': values,
            'n_obs': 30,
            'qa': 1.0,
        })
        for name, col in extra.items():
            df[name] = col
        frames.append(df)
    obs = pd.concat(frames, ignore_index=True).sort_values(['cell_id', 'month'], kind='mergesort')
    obs = obs.reset_index(drop=True)

    kappa = spec.params.kappa
    weak = _weak_signal(spec)
    if weak:
        module_logger().warning('All sources lie far outside the bounding box, the signal is weak',
                                extra={'data': {'kappa_s': kappa, 'bbox': str(spec.bbox)}})
    truth = Truth(
        kappa_s=kappa,
        d_star=math.log(1.0 / epsilon) / kappa if kappa > 0 else None,
        epsilon=epsilon,
        source_q={s.source_id: s.emission_rate for s in spec.sources},
        weak_signal=weak
    )
    return SyntheticDataset(observations=obs, sources=tuple(spec.sources), truth=truth, field_values=signal)


def write_dataset(ds: SyntheticDataset, out_dir: Path) -> Dict[str, Path]:
    """
    Writes ``observations.csv`` (cell schema), ``plants.csv`` (plant schema) and ``truth.json``.
    """
    from .ingest import write_observations, write_sources
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        'observations': write_observations(ds.observations, out_dir / 'observations.csv', schema='cell'),
        'plants': write_sources(ds.sources, out_dir / 'plants.csv'),
        'truth': write_json(ds.truth, out_dir / 'truth.json'),
    }
    return paths


def _get(doc: Dict, path: str, default=None):
    v = pydash.get(doc, path, default)
    return default if v is None else v


def scenario_from_dict(doc: Dict) -> ScenarioSpec:
    """
    Builds a scenario from a nested mapping, e.g. a parsed YAML scenario file::

        seed: 7
        n_obs: 1000
        noise_sigma: 0.3
        field_mode: helmholtz
        background: {mode: urban_gradient, level: 0.0}
        urban_centers: [{lat: 36.0, lon: -96.5, amplitude: 50.0}]
        bbox: {lat_min: 35.0, lat_max: 37.0, lon_min: -100.0, lon_max: -96.0}
        params: {diffusivity: 10.0, decay_rate: 0.001}
        sources: [{source_id: p1, lat: 36.0, lon: -99.0, capacity: 500, emission_rate: 1000, region_tag: TX}]
        periods: ['2021-01']
    """
    try:
        params = PhysicalParams(**{k: float(v) for k, v in _get(doc, 'params', {}).items()})
        bbox = BBox(**{k: float(v) for k, v in _get(doc, 'bbox', {}).items()})
        sources = tuple(
            SourceRecord(
                source_id=str(s['source_id']),
                location=GeoPoint(float(s['lat']), float(s['lon'])),
                capacity=float(s.get('capacity', 0.0)),
                emission_rate=float(s.get('emission_rate', 1.0)),
                region_tag=str(s.get('region_tag', '')),
            ) for s in _get(doc, 'sources', [])
        )
        centers = tuple(
            UrbanCenter(GeoPoint(float(c['lat']), float(c['lon'])), float(c['amplitude']))
            for c in _get(doc, 'urban_centers', [])
        )
        return ScenarioSpec(
            sources=sources,
            params=params,
            bbox=bbox,
            n_obs=int(_get(doc, 'n_obs', 1000)),
            noise_sigma=float(_get(doc, 'noise_sigma', 0.0)),
            background_mode=str(_get(doc, 'background.mode', 'none')),
            background_level=float(_get(doc, 'background.level', 0.0)),
            urban_centers=centers,
            seed=int(_get(doc, 'seed', 0)),
            field_mode=str(_get(doc, 'field_mode', 'helmholtz')),
            wind_bearing=float(_get(doc, 'wind_bearing', 0.0)),
            periods=tuple(str(p) for p in _get(doc, 'periods', ['2021-01'])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError('Invalid scenario specification') from exc


def load_scenario(fn: Path) -> ScenarioSpec:
    """
    Reads a YAML scenario file, see :func:`scenario_from_dict`.
    """
    fn = Path(fn)
    if not fn.exists():
        raise InputError(f"Scenario file not found: '{fn}'")
    return scenario_from_dict(read_yaml(fn))
