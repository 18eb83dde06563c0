"""
Reading and quality filtering of observation and plant files.

Three CSV schemas are understood (exact header names, extra columns are kept):

- plants: ``plant_id,lat,lon,capacity_mw,so2_tons,nox_tons,state``
- monitors: ``monitor_id,lat,lon,date,value``
- cells: ``cell_id,lat,lon,month,value,n_obs,qa``

Loaded observations are normalised to a frame with columns ``obs_id, lat, lon, period, year, value, n_obs, qa,
region_tag`` plus any extra columns of the file (``state``, ``wind_speed``, ``theta``, covariates).
"""
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Optional, Tuple, List, Dict, Sequence, NamedTuple, Mapping, Any

import numpy as np
import pandas as pd

from .const import PROJECT_LOGGER_NAME, COAL_STATES, EXCLUDED_STATES, NEAR_FIELD_KM
from .exc import InputError, ConfigurationError, DomainError
from .geo import GeoPoint, SourceRecord
from .rc import parse_flag
from .time_utils import try_parse_period, days_in_span, months_in_span, parse_period

SCHEMAS = {
    'monitor': ('monitor_id', 'lat', 'lon', 'date', 'value'),
    'cell': ('cell_id', 'lat', 'lon', 'month', 'value', 'n_obs', 'qa'),
}
PLANT_COLUMNS = ('plant_id', 'lat', 'lon', 'capacity_mw', 'so2_tons', 'nox_tons', 'state')
REGIONS = ('coal_near', 'coal_far', 'noncoal_near', 'noncoal_far')

MAX_MALFORMED_FRACTION = 0.5
POLICY_ATTR = 'filter_policy'
"""Key in ``DataFrame.attrs`` under which filtered frames keep their resolved policy."""

_ID_COL = {'monitor': 'monitor_id', 'cell': 'cell_id'}
_PERIOD_COL = {'monitor': 'date', 'cell': 'month'}
_BASE_COLUMNS = ('obs_id', 'lat', 'lon', 'period', 'year', 'value', 'n_obs', 'qa', 'region_tag')


def module_logger():
    return logging.getLogger(PROJECT_LOGGER_NAME + '.' + __name__)


@dataclass(frozen=True)
class ObservationRecord:
    obs_id: str
    location: GeoPoint
    period: str
    value: float
    n_within_period: Optional[int] = None
    qa: Optional[float] = None
    region_tag: str = ''


@dataclass(frozen=True)
class FilterPolicy:
    """
    Quality filters, applied in this order: negative values, excluded states, QA, observations per period,
    upper trim, coverage. The trim threshold is taken from the values left after the negative drop.

    ``trim_value`` and ``span`` are resolved while filtering (from ``trim_quantile`` and the dates of the file);
    the audit carries the resolved policy, and re-applying a resolved policy drops nothing.
    """
    min_coverage: float = 0.75
    min_obs_per_period: int = 5
    min_qa: float = 0.75
    trim_quantile: float = 0.99
    drop_negative: bool = True
    exclude_states: Tuple[str, ...] = EXCLUDED_STATES
    trim_value: Optional[float] = None
    span: Optional[Tuple[date, date]] = None

    def __post_init__(self):
        for name in ('min_coverage', 'min_qa', 'trim_quantile'):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ConfigurationError(f'Filter {name} must be in (0, 1], got {v}')
        if self.min_obs_per_period < 0:
            raise ConfigurationError('Filter min_obs must be >= 0')

    @classmethod
    def from_mapping(cls, d: Mapping[str, Any]) -> 'FilterPolicy':
        """
        Builds a policy from configuration keys (``min_coverage``, ``min_obs``, ``min_qa``, ``trim_quantile``,
        ``drop_negative``, ``exclude_states``, ``trim_value``).
        """
        kw = {}
        try:
            if d.get('min_coverage') is not None:
                kw['min_coverage'] = float(d['min_coverage'])
            if d.get('min_obs') is not None:
                kw['min_obs_per_period'] = int(d['min_obs'])
            if d.get('min_qa') is not None:
                kw['min_qa'] = float(d['min_qa'])
            if d.get('trim_quantile') is not None:
                kw['trim_quantile'] = float(d['trim_quantile'])
            if d.get('drop_negative') is not None:
                kw['drop_negative'] = parse_flag(d['drop_negative'])
            if d.get('trim_value') is not None:
                kw['trim_value'] = float(d['trim_value'])
            if d.get('exclude_states') is not None:
                v = d['exclude_states']
                vv = v.split(',') if isinstance(v, str) else v
                kw['exclude_states'] = tuple(s.strip().upper() for s in vv if str(s).strip())
        except (TypeError, ValueError) as exc:
            raise ConfigurationError('Invalid filter setting') from exc
        return cls(**kw)


@dataclass(frozen=True)
class FilterAudit:
    """
    Rows dropped per rule. ``input_rows == retained + sum(dropped.values())``.
    """
    input_rows: int
    retained: int
    malformed: int = 0
    negative: int = 0
    excluded_state: int = 0
    low_qa: int = 0
    low_obs: int = 0
    trimmed: int = 0
    low_coverage: int = 0
    policy: Optional[FilterPolicy] = None
    malformed_examples: Tuple[str, ...] = field(default=(), compare=False)

    @property
    def dropped(self) -> Dict[str, int]:
        return {'malformed': self.malformed, 'negative': self.negative, 'excluded_state': self.excluded_state,
                'low_qa': self.low_qa, 'low_obs': self.low_obs, 'trimmed': self.trimmed,
                'low_coverage': self.low_coverage}

    @property
    def is_empty(self) -> bool:
        return not any(self.dropped.values())

    def as_record(self) -> Dict:
        p = self.policy
        return {
            'input_rows': self.input_rows,
            'retained': self.retained,
            'dropped': self.dropped,
            'malformed_examples': list(self.malformed_examples),
            'policy': None if p is None else {
                'min_coverage': p.min_coverage,
                'min_obs_per_period': p.min_obs_per_period,
                'min_qa': p.min_qa,
                'trim_quantile': p.trim_quantile,
                'drop_negative': p.drop_negative,
                'exclude_states': list(p.exclude_states),
                'trim_value': p.trim_value,
                'span': None if p.span is None else [p.span[0].isoformat(), p.span[1].isoformat()],
            },
        }


class LoadedObservations(NamedTuple):
    frame: pd.DataFrame
    audit: FilterAudit
    schema: str


def detect_schema(path: Path) -> str:
    """
    Tells monitor from cell files by their header.
    """
    header = _read_header(path)
    for schema in ('cell', 'monitor'):
        if set(SCHEMAS[schema]) <= set(header):
            return schema
    raise InputError(f"Header of '{path}' matches neither the monitor nor the cell schema: {', '.join(header)}")


def _read_header(path: Path) -> List[str]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"File not found: '{path}'")
    try:
        return [str(c).strip() for c in pd.read_csv(path, nrows=0, encoding='utf-8').columns]
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise InputError(f"Cannot read CSV header of '{path}'") from exc


def _read_strings(path: Path) -> Tuple[pd.DataFrame, List[str]]:
    bad = []

    def _on_bad_line(fields):
        bad.append(','.join(fields))
        return None

    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8', engine='python',
                         on_bad_lines=_on_bad_line)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise InputError(f"Cannot parse CSV file '{path}'") from exc
    df.columns = [str(c).strip() for c in df.columns]
    return df.fillna(''), bad


def _numeric(s: pd.Series) -> pd.Series:
    return pd.to_numeric(s.astype(str).str.strip().replace('', np.nan), errors='coerce')


def _parse(raw: pd.DataFrame, schema: str) -> Tuple[pd.DataFrame, pd.Series]:
    """
    Normalises a raw string frame. Returns the frame and a boolean mask of malformed rows.
    """
    df = pd.DataFrame(index=raw.index)
    df['obs_id'] = raw[_ID_COL[schema]].astype(str).str.strip()
    df['lat'] = _numeric(raw['lat'])
    df['lon'] = _numeric(raw['lon'])
    df['period'] = raw[_PERIOD_COL[schema]].astype(str).str.strip()
    dates = df['period'].map(try_parse_period)
    df['value'] = _numeric(raw['value'])
    bad = (df['obs_id'] == '') | dates.isna() | ~np.isfinite(df['value'])
    bad |= ~df['lat'].between(-90.0, 90.0) | ~df['lon'].between(-180.0, 180.0)
    if schema == 'cell':
        df['n_obs'] = _numeric(raw['n_obs'])
        df['qa'] = _numeric(raw['qa'])
        bad |= df['n_obs'].isna() | (df['n_obs'] < 0)
        qa_given = raw['qa'].astype(str).str.strip() != ''
        bad |= qa_given & ~df['qa'].between(0.0, 1.0)
    else:
        df['n_obs'] = np.nan
        df['qa'] = np.nan
    df['year'] = dates.map(lambda d: d.year if d is not None else -1).astype(int)
    df['_date'] = dates
    if 'state' in raw.columns:
        df['state'] = raw['state'].astype(str).str.strip().str.upper()
        df['region_tag'] = df['state']
    else:
        df['region_tag'] = ''
    for c in raw.columns:
        if c in SCHEMAS[schema] or c == 'state':
            continue
        col = raw[c].astype(str).str.strip()
        num = _numeric(col)
        df[c] = num if (num.notna() | (col == '')).all() else col
    return df, bad


def _coverage(df: pd.DataFrame, schema: str, span: Tuple[date, date]) -> pd.Series:
    start, end = span
    if df.empty:
        return pd.Series(dtype=float, index=df.index)
    years = df['year']
    if schema == 'monitor':
        keys = df['_date']
        expected = {y: days_in_span(y, start, end) for y in years.unique()}
    else:
        keys = df['_date'].map(lambda d: (d.year, d.month))
        expected = {y: months_in_span(y, start, end) for y in years.unique()}
    seen = df.assign(_k=keys).groupby(['obs_id', 'year'])['_k'].transform('nunique').astype(float)
    exp = years.map(expected).astype(float)
    return pd.Series(np.where(exp > 0, seen / exp.where(exp > 0, 1.0), 0.0), index=df.index)


def apply_policy(df: pd.DataFrame, policy: FilterPolicy, schema: str, malformed: int = 0,
                 malformed_examples: Sequence[str] = ()) -> Tuple[pd.DataFrame, FilterAudit]:
    """
    Applies the quality filters to a normalised, well-formed frame.

    The upper trim threshold is the ``trim_quantile`` of the values left after dropping negatives, before any
    other rule. The returned frame keeps the resolved policy in ``attrs[POLICY_ATTR]``; filtering it again with
    the same settings reuses that threshold and span and drops nothing.

    :param malformed: Rows already dropped as malformed, carried into the audit
    :return: Retained rows sorted by obs_id and period, and the audit with the resolved policy
    """
    n_in = len(df) + malformed
    prior = df.attrs.get(POLICY_ATTR)
    if prior is not None and _unresolved(prior) == _unresolved(policy):
        trim_value = prior.trim_value if policy.trim_value is None else policy.trim_value
        policy = dataclasses.replace(policy, trim_value=trim_value, span=policy.span or prior.span)
    if '_date' not in df.columns:
        df = df.assign(_date=df['period'].map(parse_period))
    counts = {}

    def _drop(name, mask):
        counts[name] = int(mask.sum())
        return df[~mask]

    if policy.span is None:
        dd = df['_date']
        span = (min(dd), max(dd)) if len(dd) else None
    else:
        span = policy.span

    df = _drop('negative', (df['value'] < 0) if policy.drop_negative else pd.Series(False, index=df.index))
    trim_value = policy.trim_value
    if trim_value is None and len(df):
        trim_value = float(np.quantile(df['value'].to_numpy(dtype=float), policy.trim_quantile))

    if 'state' in df.columns and policy.exclude_states:
        df = _drop('excluded_state', df['state'].isin(policy.exclude_states))
    else:
        counts['excluded_state'] = 0
    df = _drop('low_qa', df['qa'].notna() & (df['qa'] < policy.min_qa))
    df = _drop('low_obs', df['n_obs'].notna() & (df['n_obs'] < policy.min_obs_per_period))
    if trim_value is not None:
        df = _drop('trimmed', df['value'] > trim_value)
    else:
        counts['trimmed'] = 0

    if span is not None:
        df = _drop('low_coverage', _coverage(df, schema, span) < policy.min_coverage)
    else:
        counts['low_coverage'] = 0

    df = df.assign(_sort=df['_date']).sort_values(['obs_id', '_sort'], kind='mergesort')
    df = df.drop(columns=['_sort', '_date']).reset_index(drop=True)
    resolved = dataclasses.replace(policy, trim_value=trim_value, span=span)
    df.attrs[POLICY_ATTR] = resolved
    audit = FilterAudit(input_rows=n_in, retained=len(df), malformed=malformed, policy=resolved,
                        malformed_examples=tuple(malformed_examples[:5]), **counts)
    return df, audit


def _unresolved(policy: FilterPolicy) -> FilterPolicy:
    return dataclasses.replace(policy, trim_value=None, span=None)


def load_observations(path: Path, schema: Optional[str] = None,
                      policy: Optional[FilterPolicy] = None) -> LoadedObservations:
    """
    Reads a monitor or cell file and applies the quality filters.

    Malformed rows (unparsable numbers, coordinates out of range, bad periods, wrong field count) are skipped
    and counted.

    :param schema: 'monitor' or 'cell'; detected from the header if None
    :raises InputError: if the header does not match the schema or more than half the rows are malformed
    """
    path = Path(path)
    header = _read_header(path)
    if schema is None:
        schema = detect_schema(path)
    if schema not in SCHEMAS:
        raise ConfigurationError(f"Unknown observation schema '{schema}'")
    missing = [c for c in SCHEMAS[schema] if c not in header]
    if missing:
        raise InputError(f"Header of '{path}' does not match the {schema} schema, missing: {', '.join(missing)}")
    if policy is None:
        policy = FilterPolicy()

    raw, bad_lines = _read_strings(path)
    df, bad = _parse(raw, schema)
    examples = bad_lines + [','.join(r) for r in raw[bad].astype(str).values.tolist()]
    n_malformed = len(bad_lines) + int(bad.sum())
    n_total = len(raw) + len(bad_lines)
    if n_total and n_malformed / n_total > MAX_MALFORMED_FRACTION:
        raise InputError(f"{n_malformed} of {n_total} rows of '{path}' are malformed")
    frame, audit = apply_policy(df[~bad], policy, schema, malformed=n_malformed, malformed_examples=examples)
    module_logger().info(f"Loaded {audit.retained} of {audit.input_rows} observations from '{path}'",
                         extra={'data': audit.as_record()['dropped']})
    return LoadedObservations(frame=frame, audit=audit, schema=schema)


def load_sources(path: Path) -> List[SourceRecord]:
    """
    Reads a plant file. The emission rate of a plant is ``so2_tons + nox_tons``.

    :raises InputError: on a bad header, a malformed row or duplicate plant ids
    """
    path = Path(path)
    header = _read_header(path)
    missing = [c for c in PLANT_COLUMNS if c not in header]
    if missing:
        raise InputError(f"Header of '{path}' does not match the plant schema, missing: {', '.join(missing)}")
    raw, bad_lines = _read_strings(path)
    if bad_lines:
        raise InputError(f"Malformed line in plant file '{path}': {bad_lines[0]}")
    sources = []
    seen = set()
    for i, r in enumerate(raw.to_dict('records')):
        pid = str(r['plant_id']).strip()
        try:
            so2 = float(r['so2_tons'] or 0.0)
            nox = float(r['nox_tons'] or 0.0)
            s = SourceRecord(
                source_id=pid,
                location=GeoPoint(float(r['lat']), float(r['lon'])),
                capacity=float(r['capacity_mw'] or 0.0),
                emission_rate=so2 + nox,
                region_tag=str(r['state']).strip().upper(),
            )
        except (ValueError, DomainError, InputError) as exc:
            raise InputError(f"Malformed plant row {i + 2} in '{path}'") from exc
        if not pid:
            raise InputError(f"Plant row {i + 2} in '{path}' has no id")
        if pid in seen:
            raise InputError(f"Duplicate plant id '{pid}' in '{path}'")
        seen.add(pid)
        sources.append(s)
    if not sources:
        raise InputError(f"Plant file '{path}' contains no plants")
    module_logger().info(f"Loaded {len(sources)} plants from '{path}'")
    return sorted(sources, key=lambda s: s.source_id)


def time_average(frame: pd.DataFrame, by: Sequence[str] = ('obs_id',)) -> pd.DataFrame:
    """
    Mean value per obs_id (or per the `by` columns, e.g. obs_id and year) over its periods.

    Other numeric columns are averaged as well; ``n_periods`` counts the rows per group.

    :return: Frame sorted by the `by` columns
    """
    if frame.empty:
        raise InputError('No observations to average')
    by = list(by)
    skip = {'obs_id', 'lat', 'lon', 'value', 'period', 'year', 'region_tag', 'state', *by}
    extra = [c for c in frame.columns if c not in skip and pd.api.types.is_numeric_dtype(frame[c])]
    agg = {'lat': 'first', 'lon': 'first', 'value': 'mean', 'n_periods': 'size', 'region_tag': 'first'}
    agg.update({c: 'mean' for c in extra})
    g = frame.assign(n_periods=1, region_tag=frame.get('region_tag', '')).groupby(by, sort=True)
    out = g.agg({k: ('count' if v == 'size' else v) for k, v in agg.items()}).reset_index()
    if 'state' in frame.columns:
        out['state'] = g['state'].first().to_numpy()
    return out


def classify_region(state_code: str, nearest_distance: float) -> str:
    """
    Coal or non-coal state, near (strictly below 100 km) or far from the nearest plant.
    """
    code = str(state_code).strip().upper()
    if len(code) != 2 or not code.isalpha():
        raise DomainError(f"Not a 2-letter state code: '{state_code}'")
    if not math.isfinite(nearest_distance) or nearest_distance < 0:
        raise DomainError(f'Invalid distance {nearest_distance}')
    coal = 'coal' if code in COAL_STATES else 'noncoal'
    near = 'near' if nearest_distance < NEAR_FIELD_KM else 'far'
    return f'{coal}_{near}'


def frame_to_records(frame: pd.DataFrame) -> List[ObservationRecord]:
    df = _normalised_names(frame)
    recs = []
    for r in df.to_dict('records'):
        n = r.get('n_obs')
        qa = r.get('qa')
        recs.append(ObservationRecord(
            obs_id=str(r['obs_id']),
            location=GeoPoint(float(r['lat']), float(r['lon'])),
            period=str(r['period']),
            value=float(r['value']),
            n_within_period=None if n is None or pd.isna(n) else int(n),
            qa=None if qa is None or pd.isna(qa) else float(qa),
            region_tag=str(r.get('region_tag') or ''),
        ))
    return recs


def _normalised_names(frame: pd.DataFrame) -> pd.DataFrame:
    ren = {}
    for schema in SCHEMAS:
        if _ID_COL[schema] in frame.columns:
            ren[_ID_COL[schema]] = 'obs_id'
        if _PERIOD_COL[schema] in frame.columns:
            ren[_PERIOD_COL[schema]] = 'period'
    return frame.rename(columns=ren)


def write_observations(frame: pd.DataFrame, path: Path, schema: str = 'cell') -> Path:
    """
    Writes observations in the given schema; extra columns follow the schema columns.
    """
    if schema not in SCHEMAS:
        raise ConfigurationError(f"Unknown observation schema '{schema}'")
    df = _normalised_names(frame).rename(columns={'obs_id': _ID_COL[schema], 'period': _PERIOD_COL[schema]})
    cols = list(SCHEMAS[schema])
    for c in cols:
        if c not in df.columns:
            df[c] = ''
    skip = set(cols) | set(_BASE_COLUMNS) | {'_date'}
    cols += [c for c in df.columns if c not in skip]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df[cols].to_csv(path, index=False, encoding='utf-8', lineterminator='\n')
    return path


def write_sources(sources: Sequence[SourceRecord], path: Path) -> Path:
    """
    Writes sources in the plant schema, with the emission rate as ``so2_tons`` and ``nox_tons`` zero.
    """
    rows = [{
        'plant_id': s.source_id,
        'lat': s.location.lat,
        'lon': s.location.lon,
        'capacity_mw': s.capacity,
        'so2_tons': s.emission_rate,
        'nox_tons': 0.0,
        'state': s.region_tag,
    } for s in sources]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=list(PLANT_COLUMNS)).to_csv(path, index=False, encoding='utf-8', lineterminator='\n')
    return path
