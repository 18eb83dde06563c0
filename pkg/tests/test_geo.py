import math

import numpy as np
import pandas as pd
import pytest

from backinajiffy.decay import geo
from backinajiffy.decay.exc import InputError, ConfigurationError
from backinajiffy.decay.geo import GeoPoint, BBox

from .conftest import source

KM_PER_DEGREE = 6371.0 * math.pi / 180.0


def test_haversine_known_distances():
    o = GeoPoint(0.0, 0.0)
    assert geo.haversine(o, o) == 0.0
    assert geo.haversine(o, GeoPoint(1.0, 0.0)) == pytest.approx(KM_PER_DEGREE, rel=1e-12)
    assert geo.haversine(o, GeoPoint(0.0, 1.0)) == pytest.approx(KM_PER_DEGREE, rel=1e-12)
    assert geo.haversine(o, GeoPoint(0.0, 180.0)) == pytest.approx(math.pi * 6371.0, rel=1e-12)


def test_haversine_symmetric():
    a, b = GeoPoint(36.1, -97.3), GeoPoint(40.7, -74.0)
    assert geo.haversine(a, b) == geo.haversine(b, a)


@pytest.mark.parametrize('lat,lon', [(91.0, 0.0), (0.0, -181.0), (math.nan, 0.0), (0.0, math.inf)])
def test_invalid_coordinates(lat, lon):
    with pytest.raises(InputError):
        GeoPoint(lat, lon)


def test_assign_nearest_and_dominant():
    ss = [source('p2', 0.0, 1.0, q=5.0, capacity=100.0), source('p1', 0.0, 0.0, q=1.0, capacity=1.0)]
    p = GeoPoint(0.0, 0.3)
    a = geo.assign_sources(p, ss, 'nearest')
    assert a.nearest_id == 'p1'
    assert a.dominant_exposure_id == 'p1'
    assert a.nearest_distance == pytest.approx(0.3 * KM_PER_DEGREE, rel=1e-9)
    b = geo.assign_sources(p, ss, 'capacity')
    assert b.nearest_id == 'p1'
    assert b.dominant_exposure_id == 'p2'
    assert b.dominant_distance == pytest.approx(0.7 * KM_PER_DEGREE, rel=1e-9)
    expected = 1.0 / (0.3 * KM_PER_DEGREE) ** 2 + 100.0 / (0.7 * KM_PER_DEGREE) ** 2
    assert b.exposure == pytest.approx(expected, rel=1e-9)


def test_haversine_triangle_inequality():
    rng = np.random.default_rng(11)
    pts = [GeoPoint(float(a), float(b)) for a, b in zip(rng.uniform(-89.0, 89.0, 90), rng.uniform(-180.0, 180.0, 90))]
    for a, b, c in zip(pts[0::3], pts[1::3], pts[2::3]):
        assert geo.haversine(a, c) <= geo.haversine(a, b) + geo.haversine(b, c) + 1e-9


@pytest.mark.parametrize('weight_mode', ['nearest', 'capacity', 'emissions'])
def test_assign_independent_of_source_order(weight_mode):
    rng = np.random.default_rng(5)
    ss = [source(f'p{i}', float(a), float(b), q=float(rng.uniform(1, 50)), capacity=float(rng.uniform(1, 50)))
          for i, (a, b) in enumerate(zip(rng.uniform(-1, 1, 8), rng.uniform(0, 4, 8)))]
    p = GeoPoint(0.2, 1.7)
    expected = geo.assign_sources(p, ss, weight_mode)
    for _ in range(5):
        shuffled = [ss[i] for i in rng.permutation(len(ss))]
        assert geo.assign_sources(p, shuffled, weight_mode) == expected


@pytest.mark.parametrize('weight_mode', ['capacity', 'emissions'])
def test_exposure_unchanged_by_splitting_a_source(weight_mode):
    rng = np.random.default_rng(17)
    ss = [source(f'p{i}', float(a), float(b), q=float(rng.uniform(1, 50)), capacity=float(rng.uniform(1, 50)))
          for i, (a, b) in enumerate(zip(rng.uniform(-1, 1, 5), rng.uniform(0, 4, 5)))]
    whole = ss[0]
    halves = [source(f'{whole.source_id}{tag}', whole.location.lat, whole.location.lon,
                     q=whole.emission_rate / 2.0, capacity=whole.capacity / 2.0) for tag in ('a', 'b')]
    for lat, lon in zip(rng.uniform(-1, 1, 20), rng.uniform(0, 4, 20)):
        p = GeoPoint(float(lat), float(lon))
        assert geo.assign_sources(p, halves + ss[1:], weight_mode).exposure == pytest.approx(
            geo.assign_sources(p, ss, weight_mode).exposure, rel=1e-12)


@pytest.mark.parametrize('weight_mode', ['capacity', 'emissions'])
def test_weighted_modes_need_weights(weight_mode):
    ss = [source('a', 0.0, 0.0, q=0.0, capacity=0.0), source('b', 0.0, 1.0, q=0.0, capacity=0.0)]
    with pytest.raises(ConfigurationError):
        geo.assign_sources(GeoPoint(0.0, 0.9), ss, weight_mode)
    with pytest.raises(ConfigurationError):
        geo.assign_frame(pd.DataFrame({'lat': [0.0], 'lon': [0.9]}), ss, weight_mode)
    assert geo.assign_sources(GeoPoint(0.0, 0.9), ss, 'nearest').nearest_id == 'b'


def test_assign_clamps_coincident_point():
    a = geo.assign_sources(GeoPoint(10.0, 10.0), [source('p1', 10.0, 10.0)])
    assert a.clamped
    assert a.nearest_distance == 0.1


def test_assign_errors():
    with pytest.raises(ConfigurationError):
        geo.assign_sources(GeoPoint(0.0, 0.0), [])
    with pytest.raises(ConfigurationError):
        geo.assign_sources(GeoPoint(0.0, 0.0), [source('p1', 1.0, 1.0)], 'population')
    with pytest.raises(InputError):
        geo.assign_sources(GeoPoint(0.0, 0.0), [source('p1', 1.0, 1.0), source('p1', 2.0, 2.0)])


def test_assign_frame_independent_of_chunking_and_order():
    rng = np.random.default_rng(3)
    frame = pd.DataFrame({'lat': rng.uniform(-1, 1, 250), 'lon': rng.uniform(0, 4, 250)})
    ss = [source(f'p{i}', float(a), float(b), q=float(i + 1), capacity=float(10 - i))
          for i, (a, b) in enumerate(zip(rng.uniform(-1, 1, 6), rng.uniform(0, 4, 6)))]
    one = geo.assign_frame(frame, ss, 'emissions')
    chunked = geo.assign_frame(frame, list(reversed(ss)), 'emissions', chunk_rows=7)
    pd.testing.assert_frame_equal(one, chunked)
    assert (one['distance'] == one['dominant_distance']).all()
    assert (one['nearest_distance'] <= one['dominant_distance']).all()


def test_assign_frame_theta():
    frame = pd.DataFrame({'lat': [0.0, 0.0, 1.0], 'lon': [1.0, -1.0, 0.0]})
    out = geo.assign_frame(frame, [source('p1', 0.0, 0.0)], wind_bearing=90.0)
    np.testing.assert_allclose(out['theta'], [0.0, math.pi, math.pi / 2], atol=1e-9)


def test_angle_from_wind_range():
    th = geo.angle_from_wind(np.arange(0.0, 360.0, 7.5), 45.0)
    assert th.min() >= 0.0
    assert th.max() <= math.pi


def test_bbox():
    bb = BBox(-1.0, 1.0, 0.0, 4.0)
    assert bb.contains(GeoPoint(0.5, 2.0))
    assert bb.clamp(GeoPoint(5.0, -3.0)) == GeoPoint(1.0, 0.0)
    with pytest.raises(ConfigurationError):
        BBox(1.0, 1.0, 0.0, 4.0)
    padded = BBox.around([3.0, 3.0], [5.0, 6.0])
    assert padded.lat_min < 3.0 < padded.lat_max


def test_distance_bins():
    d = [10.0, 60.0, 60.0, 150.0, 500.0]
    v = [1.0, 2.0, 4.0, 3.0, 5.0]
    bins = geo.distance_bin_summary(d, v, (0.0, 50.0, 100.0, 200.0), open_last=True)
    assert [b.label for b in bins] == ['0-50 km', '50-100 km', '100-200 km', '200+ km']
    assert [b.n for b in bins] == [1, 2, 1, 1]
    assert bins[1].mean == 3.0
    assert bins[1].sd == pytest.approx(math.sqrt(2.0))
    assert bins[0].sd is None
    closed = geo.distance_bin_summary(d, v, (0.0, 50.0, 100.0, 200.0))
    assert sum(b.n for b in closed) == 4


def test_distance_bins_empty_and_invalid():
    bins = geo.distance_bin_summary([10.0], [1.0], (100.0, 200.0))
    assert bins[0].n == 0
    assert bins[0].mean is None
    with pytest.raises(ConfigurationError):
        geo.distance_bin_summary([1.0], [1.0], (0.0, 0.0))
