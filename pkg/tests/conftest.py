import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from backinajiffy.decay.geo import GeoPoint, SourceRecord, BBox
from backinajiffy.decay.physics import PhysicalParams
from backinajiffy.decay.rc import Rc
from backinajiffy.decay.synth import ScenarioSpec, UrbanCenter

PLANTS_CSV = """plant_id,lat,lon,capacity_mw,so2_tons,nox_tons,state
p2,36.0,-97.0,800,1500,500,OK
p1,36.5,-99.0,500,700,300,TX
p3,35.5,-98.0,300,200,100,KS
"""


def source(sid: str, lat: float, lon: float, q: float = 1.0, capacity: float = 1.0, tag: str = '') -> SourceRecord:
    return SourceRecord(source_id=sid, location=GeoPoint(lat, lon), capacity=capacity, emission_rate=q, region_tag=tag)


def decay_world(n: int = 400, kappa: float = 0.01, sigma: float = 0.1, seed: int = 1) -> pd.DataFrame:
    """
    Frame with value = exp(2 − κd + σε) on distances uniform in [1, 300] km.
    """
    rng = np.random.default_rng(seed)
    d = rng.uniform(1.0, 300.0, n)
    v = np.exp(2.0 - kappa * d + sigma * rng.standard_normal(n))
    return pd.DataFrame({'distance': d, 'value': v})


@pytest.fixture
def frame_decay() -> pd.DataFrame:
    return decay_world()


@pytest.fixture
def frame_flat() -> pd.DataFrame:
    """Outcomes unrelated to distance."""
    rng = np.random.default_rng(5)
    d = rng.uniform(1.0, 300.0, 400)
    return pd.DataFrame({'distance': d, 'value': np.exp(rng.standard_normal(400))})


@pytest.fixture
def diagnostic_scenario() -> ScenarioSpec:
    """
    One source at (0, 0) with Q/(4πD) = 500 and κ = 0.01/km, and an urban centre 400 km east of it.

    Near the source the source field dominates, far from it the urban background does.
    """
    params = PhysicalParams(diffusivity=1.0, decay_rate=1e-4)
    return ScenarioSpec(
        sources=(source('s1', 0.0, 0.0, q=500.0 * 4.0 * math.pi, capacity=100.0, tag='WV'),),
        params=params,
        bbox=BBox(-1.0, 1.0, 0.0, 4.0),
        n_obs=600,
        noise_sigma=0.05,
        background_mode='urban_gradient',
        urban_centers=(UrbanCenter(GeoPoint(0.0, 3.6), 50.0),),
        seed=11,
    )


@pytest.fixture
def plants_csv(tmp_path) -> Path:
    fn = tmp_path / 'plants.csv'
    fn.write_text(PLANTS_CSV, encoding='utf-8')
    return fn


@pytest.fixture
def cell_csv(tmp_path) -> Path:
    """
    Two cells over twelve months. c2 has one month of bad QA, c3 covers three months only.
    """
    rows = ['cell_id,lat,lon,month,value,n_obs,qa,state']
    for m in range(1, 13):
        rows.append(f'c1,36.1,-97.1,2021-{m:02d},{10 + m * 0.1:.2f},20,0.95,OK')
        qa = 0.5 if m == 6 else 0.9
        rows.append(f'c2,35.9,-98.2,2021-{m:02d},{5 + m * 0.1:.2f},20,{qa},KS')
    for m in range(1, 4):
        rows.append(f'c3,36.4,-99.1,2021-{m:02d},7.0,20,0.9,TX')
    fn = tmp_path / 'cells.csv'
    fn.write_text('\n'.join(rows) + '\n', encoding='utf-8')
    return fn


@pytest.fixture
def monitor_csv(tmp_path) -> Path:
    rows = ['monitor_id,lat,lon,date,value,state',
            'm1,36.0,-97.5,2021-01-01,4.0,OK',
            'm1,36.0,-97.5,2021-01-02,-1.0,OK',
            'm1,36.0,-97.5,2021-01-03,5.0,OK',
            'm2,21.3,-157.8,2021-01-01,3.0,HI',
            'm2,21.3,-157.8,2021-01-02,3.5,HI',
            'm3,36.2,-98.5,2021-01-01,6.0,TX',
            'm3,36.2,-98.5,2021-01-02,not-a-number,TX',
            'm3,36.2,-98.5,2021-01-03,6.5,TX']
    fn = tmp_path / 'monitors.csv'
    fn.write_text('\n'.join(rows) + '\n', encoding='utf-8')
    return fn


@pytest.fixture
def scenario_yaml(tmp_path) -> Path:
    fn = tmp_path / 'scenario.yaml'
    fn.write_text("""
seed: 7
n_obs: 400
noise_sigma: 0.1
field_mode: helmholtz
bbox: {lat_min: 35.0, lat_max: 37.0, lon_min: -100.0, lon_max: -96.0}
params: {diffusivity: 10.0, decay_rate: 0.001}
sources:
  - {source_id: p1, lat: 36.5, lon: -99.0, capacity: 500, emission_rate: 20000, region_tag: TX}
  - {source_id: p2, lat: 36.0, lon: -97.0, capacity: 800, emission_rate: 30000, region_tag: OK}
  - {source_id: p3, lat: 35.5, lon: -98.0, capacity: 300, emission_rate: 10000, region_tag: KS}
periods: ['2021-01']
""", encoding='utf-8')
    return fn


@pytest.fixture
def fresh_rc(tmp_path, monkeypatch):
    """
    An Rc that sees no rc files of the machine running the tests.
    """
    monkeypatch.chdir(tmp_path)
    monkeypatch.setattr(Rc, '_dir_etc', tmp_path / 'etc')
    monkeypatch.setattr(Rc, '_dir_user_config', tmp_path / 'config')
    yield Rc.create(project_name='Backinajiffy-Decay')
    Rc._instance = None
