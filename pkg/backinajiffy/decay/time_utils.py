import calendar
from datetime import date, datetime
from typing import Optional

from dateutil import parser as date_parser

from .exc import InputError


def parse_period(s: str) -> date:
    """
    Parses an observation period.

    Accepts ISO-8601 dates (``2021-03-17``) and months (``2021-03``). A month maps to its first day,
    a timestamp to its date.

    :param s: The period as found in the CSV
    :return: The date
    :raises InputError: if the string is not a date or month
    """
    if isinstance(s, (date, datetime)):
        return s.date() if isinstance(s, datetime) else s
    try:
        return date_parser.isoparse(str(s).strip()).date()
    except (ValueError, OverflowError) as exc:
        raise InputError(f"Cannot parse period '{s}'") from exc


def try_parse_period(s: str) -> Optional[date]:
    try:
        return parse_period(s)
    except InputError:
        return None


def days_in_year(year: int) -> int:
    return 366 if calendar.isleap(year) else 365


def days_in_span(year: int, start: date, end: date) -> int:
    """
    Number of days of `year` that lie within [start, end].
    """
    lo = max(date(year, 1, 1), start)
    hi = min(date(year, 12, 31), end)
    return max((hi - lo).days + 1, 0)


def months_in_span(year: int, start: date, end: date) -> int:
    """
    Number of calendar months of `year` that overlap [start, end].
    """
    lo = max(date(year, 1, 1), start)
    hi = min(date(year, 12, 31), end)
    if hi < lo:
        return 0
    return hi.month - lo.month + 1
