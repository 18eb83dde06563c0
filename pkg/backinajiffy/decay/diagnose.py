"""
Does the diffusion framework apply? Validity by stratum, placebo sources and alternative distance measures.
"""
import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence, Optional, Tuple, Dict, List, Union

import numpy as np
import pandas as pd
from tabulate import tabulate

from . import boundary, synth, geo
from .const import PROJECT_LOGGER_NAME, Z_CRIT, MIN_STRATUM_EXTRA, MIN_PLACEBO_SEEDS, DEFAULT_EPSILON, MIN_DISTANCE_KM
from .estimate import SpecKind, DecayEstimate, fit_spec, extract_decay, stratified_decay
from .exc import ConfigurationError, EstimationError
from .geo import BBox, SourceRecord
from .parallel import map_ordered
from .pipeline import assign


def module_logger():
    return logging.getLogger(PROJECT_LOGGER_NAME + '.' + __name__)


@dataclass(frozen=True)
class ValidityRow:
    label: str
    stratum: str
    n: int
    kappa_s: Optional[float]
    se: Optional[float]
    significant: bool
    applies: bool
    d_star: Optional[float]
    note: str = ''

    @property
    def insufficient(self) -> bool:
        return self.kappa_s is None


@dataclass(frozen=True)
class ValidityReport:
    """
    :ivar summary: Share of observations that fall in strata where the framework applies
    """
    rows: Tuple[ValidityRow, ...]
    summary: float
    epsilon: float = DEFAULT_EPSILON

    def as_record(self) -> Dict:
        return {'epsilon': self.epsilon, 'summary': self.summary,
                'rows': [dict(vars(r), insufficient=r.insufficient) for r in self.rows]}


@dataclass(frozen=True)
class PlaceboResult:
    """
    :ivar rejection_rate: Share of placebo runs with |t| ≥ 1.96
    :ivar difference_se: √(se_actual² + sd_placebo²)
    """
    actual_kappa: DecayEstimate
    placebo_kappas: Tuple[float, ...]
    rejection_rate: float
    difference: float
    placebo_mean: float
    placebo_sd: float
    difference_se: float
    n_seeds: int
    failed: int = 0
    placebo_t: Tuple[float, ...] = field(default=(), repr=False)

    def as_record(self) -> Dict:
        return {'actual': self.actual_kappa.as_record(), 'placebo_kappas': list(self.placebo_kappas),
                'placebo_t': list(self.placebo_t), 'rejection_rate': self.rejection_rate,
                'difference': self.difference, 'difference_se': self.difference_se,
                'placebo_mean': self.placebo_mean, 'placebo_sd': self.placebo_sd, 'n_seeds': self.n_seeds,
                'failed': self.failed}


@dataclass(frozen=True)
class RobustnessRow:
    mode: str
    decay: DecayEstimate
    d_star: Optional[float]


@dataclass(frozen=True)
class RobustnessResult:
    """
    :ivar max_rel_spread: (max κ − min κ) / |mean κ| over the modes
    """
    rows: Tuple[RobustnessRow, ...]
    max_rel_spread: float

    def as_record(self) -> Dict:
        return {'max_rel_spread': self.max_rel_spread,
                'rows': [{'mode': r.mode, 'd_star': r.d_star, **r.decay.as_record()} for r in self.rows]}


def _row(label: str, e: DecayEstimate, epsilon: float, min_n: Optional[int]) -> ValidityRow:
    if min_n is not None and e.n < min_n:
        return ValidityRow(label=label, stratum=e.stratum, n=e.n, kappa_s=None, se=None, significant=False,
                           applies=False, d_star=None, note=f'insufficient: n = {e.n} < {min_n}')
    b = boundary.spatial_boundary(e, epsilon)
    return ValidityRow(label=label, stratum=e.stratum, n=e.n, kappa_s=e.kappa_s, se=e.se, significant=e.significant,
                       applies=b.valid, d_star=b.d_star if b.valid else None, note=b.verdict)


def _summary(rows: Sequence[ValidityRow]) -> float:
    total = sum(r.n for r in rows)
    return sum(r.n for r in rows if r.applies) / total if total else 0.0


def validity_from_estimates(estimates: Sequence[DecayEstimate], epsilon: float = DEFAULT_EPSILON,
                            label: str = 'data', min_n: Optional[int] = None,
                            skipped: Optional[Dict[str, str]] = None) -> ValidityReport:
    """
    Validity report from precomputed decay estimates.

    The framework applies where κ_s > 0 and |t| ≥ 1.96; only there is d* reported.

    :param min_n: Flag estimates from fewer observations as insufficient
    :param skipped: Strata without an estimate and the reason, reported as insufficient rows
    """
    rows = [_row(label, e, epsilon, min_n) for e in estimates]
    for s, reason in (skipped or {}).items():
        rows.append(ValidityRow(label=label, stratum=s, n=0, kappa_s=None, se=None, significant=False,
                                applies=False, d_star=None, note=f'insufficient: {reason}'))
    rows.sort(key=lambda r: (r.label, r.stratum))
    return ValidityReport(rows=tuple(rows), summary=_summary(rows), epsilon=epsilon)


def validity_assessment(frame: pd.DataFrame, strata: Union[str, pd.Series], spec: Union[SpecKind, str],
                        epsilon: float = DEFAULT_EPSILON, label: str = 'data', labels: Optional[Sequence[str]] = None,
                        covariates: Sequence[str] = ()) -> ValidityReport:
    """
    Stratified decay fits turned into applies/reject verdicts.

    A stratum with fewer than k + 10 observations (k coefficients) is flagged insufficient.
    """
    spec = SpecKind.parse(spec)
    res = stratified_decay(frame, strata, spec, covariates, labels=labels)
    min_n = spec.n_coefficients + len(covariates) + MIN_STRATUM_EXTRA
    return validity_from_estimates(res.estimates, epsilon, label=label, min_n=min_n, skipped=res.skipped)


def _placebo_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1, dtype=np.uint64)[0])


def _placebo_task(k: int, lats: np.ndarray, lons: np.ndarray, values: np.ndarray, n_sources: int, bbox: BBox,
                  seed: int, spec: SpecKind) -> Optional[DecayEstimate]:
    sources = synth.random_sources(n_sources, bbox, _placebo_seed(seed, k))
    dist = np.maximum(geo.distance_matrix(lats, lons, sources).min(axis=1), MIN_DISTANCE_KM)
    try:
        return extract_decay(fit_spec(pd.DataFrame({'value': values, 'distance': dist}), spec),
                             stratum=f'placebo-{k}')
    except EstimationError:
        return None


def placebo_test(frame: pd.DataFrame, n_sources: int, spec: Union[SpecKind, str], n_seeds: int = 50,
                 bbox: Optional[BBox] = None, seed: int = 0, processes: int = 1) -> PlaceboResult:
    """
    Re-estimates the decay with sources placed at random, keeping locations and outcomes fixed.

    :param frame: Observations with ``lat``, ``lon``, ``value`` and ``distance`` to the actual sources
    :param n_sources: Number of random sources per placebo run, usually the number of actual sources
    :param bbox: Where placebo sources are placed; by default the bounding box of the observations
    """
    spec = SpecKind.parse(spec)
    if n_seeds < MIN_PLACEBO_SEEDS:
        raise ConfigurationError(f'Placebo test needs at least {MIN_PLACEBO_SEEDS} seeds, got {n_seeds}')
    lats = frame['lat'].to_numpy(dtype=float)
    lons = frame['lon'].to_numpy(dtype=float)
    values = frame['value'].to_numpy(dtype=float)
    if bbox is None:
        bbox = BBox.around(lats, lons)
    actual = extract_decay(fit_spec(frame, spec), stratum='actual')
    task = functools.partial(_placebo_task, lats=lats, lons=lons, values=values, n_sources=n_sources, bbox=bbox,
                             seed=seed, spec=spec)
    results = map_ordered(task, range(n_seeds), processes=processes)
    ok = [r for r in results if r is not None]
    failed = n_seeds - len(ok)
    if failed:
        module_logger().warning('Placebo runs without estimate', extra={'data': {'failed': failed}})
    if not ok:
        raise EstimationError('No placebo run produced an estimate')
    kk = np.array([r.kappa_s for r in ok])
    tt = tuple(r.t_stat for r in ok)
    mean = float(kk.mean())
    sd = float(kk.std(ddof=1)) if kk.size > 1 else 0.0
    return PlaceboResult(
        actual_kappa=actual,
        placebo_kappas=tuple(kk.tolist()),
        rejection_rate=sum(abs(t) >= Z_CRIT for t in tt) / len(tt),
        difference=actual.kappa_s - mean,
        placebo_mean=mean,
        placebo_sd=sd,
        difference_se=math.sqrt(actual.se ** 2 + sd ** 2),
        n_seeds=n_seeds,
        failed=failed,
        placebo_t=tt,
    )


def distance_measure_robustness(frame: pd.DataFrame, sources: Sequence[SourceRecord], spec: Union[SpecKind, str],
                                modes: Sequence[str] = geo.WEIGHT_MODES, epsilon: float = DEFAULT_EPSILON,
                                wind_bearing: Optional[float] = None) -> RobustnessResult:
    """
    Reruns assignment and estimation with each distance measure.

    :param frame: Time-averaged observations with ``lat``, ``lon``, ``value``
    """
    spec = SpecKind.parse(spec)
    if not modes:
        raise ConfigurationError('Need at least one distance measure')
    rows = []
    for mode in modes:
        e = extract_decay(fit_spec(assign(frame, sources, mode, wind_bearing), spec), stratum=mode)
        rows.append(RobustnessRow(mode=mode, decay=e, d_star=boundary.spatial_boundary(e, epsilon).d_star))
    kk = np.array([r.decay.kappa_s for r in rows])
    mean = abs(float(kk.mean()))
    spread = float(kk.max() - kk.min()) / mean if mean > 0 else math.inf
    return RobustnessResult(rows=tuple(rows), max_rel_spread=0.0 if kk.max() == kk.min() else spread)


def _fmt(v: Optional[float], fmt: str) -> str:
    return 'N/A' if v is None else format(v, fmt)


def render_validity_grid(report: ValidityReport) -> str:
    """
    Plain-text grid of the report with ✓ where the framework applies and ✗ where it is rejected.
    """
    rows = []
    for r in report.rows:
        rows.append([r.label, r.stratum, r.n, _fmt(r.kappa_s, '.5f'), _fmt(r.se, '.5f'),
                     'Yes' if r.significant else 'No',
                     '✓ Yes' if r.applies else ('– insufficient' if r.insufficient else '✗ No'),
                     _fmt(r.d_star, ',.0f')])
    s = tabulate(rows, headers=['Data', 'Stratum', 'n', 'κ_s', 'SE', 'Significant', 'Framework applies', 'd* (km)'],
                 disable_numparse=True)
    return s + f'\n\nObservations in strata where the framework applies: {report.summary:.1%}'
