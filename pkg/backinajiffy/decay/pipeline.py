"""
Steps shared by the commands: load, filter, average, assign sources, label strata.
"""
import logging
from dataclasses import dataclass
from typing import Sequence, Tuple, Optional, List

import numpy as np
import pandas as pd

from . import geo, ingest
from .const import PROJECT_LOGGER_NAME, NEAR_FIELD_KM
from .exc import ConfigurationError, DomainError
from .geo import SourceRecord
from .ingest import FilterPolicy, FilterAudit
from .rc import RunConfig

STRATA_BUILTIN = ('pooled', 'region', 'near_far')


def module_logger():
    return logging.getLogger(PROJECT_LOGGER_NAME + '.' + __name__)


@dataclass(frozen=True)
class Prepared:
    """
    :ivar observations: Filtered observations, one row per id and period
    :ivar frame: Time-averaged observations with source assignment, one row per id
    :ivar yearly: Averages per id and year with source assignment
    """
    observations: pd.DataFrame
    frame: pd.DataFrame
    yearly: pd.DataFrame
    sources: Tuple[SourceRecord, ...]
    audit: FilterAudit
    schema: str


def policy_from_config(conf: RunConfig) -> FilterPolicy:
    return FilterPolicy.from_mapping(conf.filter_overrides)


def assign(frame: pd.DataFrame, sources: Sequence[SourceRecord], weight_mode: str = 'nearest',
           wind_bearing: Optional[float] = None) -> pd.DataFrame:
    """
    Source assignment plus ``region_tag`` (falls back to the nearest source's tag) and the ``region`` label.
    """
    out = geo.assign_frame(frame, sources, weight_mode=weight_mode, wind_bearing=wind_bearing)
    tag = out['region_tag'].fillna('').astype(str) if 'region_tag' in out.columns else pd.Series('', index=out.index)
    out['region_tag'] = tag.where(tag != '', out['nearest_region'].astype(str))
    out['region'] = [_region(t, d) for t, d in zip(out['region_tag'], out['nearest_distance'])]
    return out


def _region(tag: str, distance: float) -> str:
    try:
        return ingest.classify_region(tag, distance)
    except DomainError:
        return 'unassigned'


def prepare(conf: RunConfig) -> Prepared:
    """
    Loads observations and plants named in the configuration and builds the analysis frames.
    """
    conf.require('input', 'sources')
    loaded = ingest.load_observations(conf.input, schema=conf.schema, policy=policy_from_config(conf))
    sources = tuple(ingest.load_sources(conf.sources))
    if loaded.frame.empty:
        return Prepared(observations=loaded.frame, frame=loaded.frame, yearly=loaded.frame, sources=sources,
                        audit=loaded.audit, schema=loaded.schema)
    frame = assign(ingest.time_average(loaded.frame), sources, conf.weight_mode, conf.wind_bearing)
    yearly = assign(ingest.time_average(loaded.frame, by=('obs_id', 'year')), sources, conf.weight_mode,
                    conf.wind_bearing)
    module_logger().info(f'Prepared {len(frame)} locations and {len(sources)} sources')
    return Prepared(observations=loaded.frame, frame=frame, yearly=yearly, sources=sources, audit=loaded.audit,
                    schema=loaded.schema)


def strata_labels(frame: pd.DataFrame, strata: str,
                  threshold_km: float = NEAR_FIELD_KM) -> Tuple[pd.Series, List[str]]:
    """
    Stratum label per row and the labels expected to appear.

    `strata` is 'pooled', 'region' (coal/non-coal state × near/far), 'near_far' (by nearest distance), or the
    name of a column of the frame.
    """
    if strata == 'pooled':
        return pd.Series('pooled', index=frame.index), ['pooled']
    if strata == 'region':
        return frame['region'].astype(str), list(ingest.REGIONS)
    if strata == 'near_far':
        near = frame['nearest_distance'].to_numpy(dtype=float) < threshold_km
        return pd.Series(np.where(near, 'near', 'far'), index=frame.index), ['far', 'near']
    if strata in frame.columns:
        return frame[strata].astype(str), []
    raise ConfigurationError(f"Unknown strata '{strata}', use one of {', '.join(STRATA_BUILTIN)} or a column name")
