import dataclasses
import enum
import math
from datetime import date
from pathlib import Path
from typing import Any, Sequence, Mapping

import numpy as np
import pandas as pd

try:
    import ujson as json
except ImportError:
    import json

from .exc import InputError


def to_jsonable(obj: Any) -> Any:
    """
    Converts results into plain JSON types.

    Dataclasses become dicts (or whatever their ``as_record()`` returns), numpy scalars and arrays become numbers
    and lists, enums their values, dates ISO strings. Non-finite floats become None so the output is strict JSON.
    """
    if hasattr(obj, 'as_record'):
        return to_jsonable(obj.as_record())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, date):
        return obj.isoformat()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dump_json(obj: Any) -> str:
    """
    Serializes deterministically: sorted keys, two-space indent, trailing newline.
    """
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False) + '\n'


def write_json(obj: Any, fn: Path) -> Path:
    fn = Path(fn)
    fn.parent.mkdir(parents=True, exist_ok=True)
    with open(fn, 'wt', encoding='utf-8', newline='\n') as fp:
        fp.write(dump_json(obj))
    return fn


def read_json(fn: Path) -> Any:
    fn = Path(fn)
    if not fn.exists():
        raise InputError(f"File not found: '{fn}'")
    with open(fn, 'rt', encoding='utf-8') as fp:
        try:
            return json.loads(fp.read())
        except ValueError as exc:
            raise InputError(f"File '{fn}' is not valid JSON") from exc


def write_csv(rows: Sequence[Mapping], fn: Path, columns: Sequence[str]) -> Path:
    """
    Writes tidy rows (one mapping per row) as UTF-8 CSV with a header in the given column order.
    """
    fn = Path(fn)
    fn.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame([{c: to_jsonable(r.get(c)) for c in columns} for r in rows], columns=list(columns))
    df.to_csv(fn, index=False, encoding='utf-8', lineterminator='\n')
    return fn


def write_text(s: str, fn: Path) -> Path:
    fn = Path(fn)
    fn.parent.mkdir(parents=True, exist_ok=True)
    with open(fn, 'wt', encoding='utf-8', newline='\n') as fp:
        fp.write(s if s.endswith('\n') else s + '\n')
    return fn
