import dataclasses
import math

import numpy as np
import pandas as pd
import pytest

from backinajiffy.decay import diagnose, synth, pipeline
from backinajiffy.decay.exc import ConfigurationError

from .conftest import source
from .test_boundary import REGIONAL, decay


@pytest.fixture
def diagnostic_frame(diagnostic_scenario) -> pd.DataFrame:
    obs = synth.generate(diagnostic_scenario).observations.rename(columns={'cell_id': 'obs_id'})
    return pipeline.assign(obs, diagnostic_scenario.sources)


def test_validity_from_reported_estimates():
    report = diagnose.validity_from_estimates([decay(k, se, s) for s, k, se, _ in REGIONAL], label='reported')
    verdicts = {r.stratum: r.applies for r in report.rows}
    assert verdicts == {s: a for s, _, _, a in REGIONAL}
    assert report.summary == pytest.approx(0.5)
    for r in report.rows:
        assert (r.d_star is not None) is r.applies


def test_validity_flags_insufficient_strata():
    small = decay(0.002, 0.0002, 'small')
    small = dataclasses.replace(small, n=5)
    report = diagnose.validity_from_estimates([small, decay(0.002, 0.0002, 'big')], min_n=12,
                                              skipped={'empty': 'no observations'})
    rows = {r.stratum: r for r in report.rows}
    assert rows['small'].insufficient
    assert rows['empty'].insufficient
    assert not rows['big'].insufficient
    assert rows['big'].applies
    assert report.summary == pytest.approx(1000 / 1005)


def test_source_and_urban_dominated_strata(diagnostic_frame):
    labels, expected = pipeline.strata_labels(diagnostic_frame, 'near_far', 100.0)
    report = diagnose.validity_assessment(diagnostic_frame, labels, 'linear', labels=expected, label='synthetic')
    rows = {r.stratum: r for r in report.rows}
    assert rows['near'].kappa_s > 0
    assert rows['near'].significant
    assert rows['near'].applies
    assert rows['far'].kappa_s < 0
    assert not rows['far'].applies
    n_near = int((diagnostic_frame['nearest_distance'] < 100.0).sum())
    assert report.summary == pytest.approx(n_near / len(diagnostic_frame))


def test_region_strata_report_missing_regions(diagnostic_frame):
    labels, expected = pipeline.strata_labels(diagnostic_frame, 'region')
    report = diagnose.validity_assessment(diagnostic_frame, labels, 'linear', labels=expected)
    rows = {r.stratum: r for r in report.rows}
    assert set(rows) == {'coal_near', 'coal_far', 'noncoal_near', 'noncoal_far'}
    assert rows['noncoal_near'].insufficient
    assert rows['coal_near'].applies


def test_render_validity_grid(diagnostic_frame):
    labels, expected = pipeline.strata_labels(diagnostic_frame, 'near_far', 100.0)
    grid = diagnose.render_validity_grid(diagnose.validity_assessment(diagnostic_frame, labels, 'linear',
                                                                      labels=expected))
    assert '✓ Yes' in grid
    assert '✗ No' in grid
    assert 'Observations in strata where the framework applies' in grid


def test_placebo_is_reproducible(diagnostic_frame):
    a = diagnose.placebo_test(diagnostic_frame, 1, 'linear', n_seeds=20, seed=3)
    b = diagnose.placebo_test(diagnostic_frame, 1, 'linear', n_seeds=20, seed=3)
    assert a == b
    assert len(a.placebo_kappas) + a.failed == 20
    assert 0.0 <= a.rejection_rate <= 1.0
    assert a.difference == pytest.approx(a.actual_kappa.kappa_s - np.mean(a.placebo_kappas))
    assert a.difference_se == pytest.approx(math.sqrt(a.actual_kappa.se ** 2 + a.placebo_sd ** 2))
    c = diagnose.placebo_test(diagnostic_frame, 1, 'linear', n_seeds=20, seed=4)
    assert c.placebo_kappas != a.placebo_kappas


def test_placebo_independent_of_processes(diagnostic_frame):
    a = diagnose.placebo_test(diagnostic_frame, 2, 'linear', n_seeds=20, seed=1, processes=1)
    b = diagnose.placebo_test(diagnostic_frame, 2, 'linear', n_seeds=20, seed=1, processes=2)
    assert a == b


def test_placebo_needs_enough_seeds(diagnostic_frame):
    with pytest.raises(ConfigurationError):
        diagnose.placebo_test(diagnostic_frame, 1, 'linear', n_seeds=19)


def test_robustness_single_source_is_mode_free(diagnostic_frame, diagnostic_scenario):
    obs = diagnostic_frame[['obs_id', 'lat', 'lon', 'value']]
    res = diagnose.distance_measure_robustness(obs, diagnostic_scenario.sources, 'linear')
    assert [r.mode for r in res.rows] == ['nearest', 'capacity', 'emissions']
    assert res.max_rel_spread == 0.0
    assert len({r.decay.kappa_s for r in res.rows}) == 1


def test_robustness_spread():
    rng = np.random.default_rng(9)
    ss = [source('a', 0.0, 0.5, q=100.0, capacity=1.0), source('b', 0.0, 3.5, q=1.0, capacity=100.0),
          source('c', 0.8, 2.0, q=10.0, capacity=10.0)]
    lat = rng.uniform(-1.0, 1.0, 400)
    lon = rng.uniform(0.0, 4.0, 400)
    frame = pd.DataFrame({'obs_id': [f'o{i}' for i in range(400)], 'lat': lat, 'lon': lon})
    near = pipeline.assign(frame, ss)
    frame['value'] = np.exp(1.0 - 0.01 * near['distance'] + 0.1 * rng.standard_normal(400))
    res = diagnose.distance_measure_robustness(frame, ss, 'linear', modes=('nearest', 'capacity'))
    kk = [r.decay.kappa_s for r in res.rows]
    assert res.max_rel_spread == pytest.approx((max(kk) - min(kk)) / abs(np.mean(kk)))
    assert res.rows[0].decay.kappa_s == pytest.approx(0.01, rel=0.1)
    with pytest.raises(ConfigurationError):
        diagnose.distance_measure_robustness(frame, ss, 'linear', modes=())


def test_records_are_plain(diagnostic_frame):
    labels, expected = pipeline.strata_labels(diagnostic_frame, 'near_far', 100.0)
    rec = diagnose.validity_assessment(diagnostic_frame, labels, 'linear', labels=expected).as_record()
    assert {'epsilon', 'summary', 'rows'} == set(rec)
    assert all('insufficient' in r for r in rec['rows'])
