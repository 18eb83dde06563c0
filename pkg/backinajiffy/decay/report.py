"""
Consolidated report over the artifacts of one analysis directory.

Reads ``fits.json``, ``boundary.json`` and ``diagnosis.json`` (whichever exist) and writes ``report/`` with
``report.json``, ``tables.txt`` and one tidy CSV per plot.
"""
import logging
from pathlib import Path
from typing import Dict, List, Any, Optional

from tabulate import tabulate

from .const import PROJECT_LOGGER_NAME, Z_CRIT
from .exc import InputError
from .file_utils import read_json, write_json, write_csv, write_text

ARTIFACTS = ('fits', 'boundary', 'diagnosis')


def module_logger():
    return logging.getLogger(PROJECT_LOGGER_NAME + '.' + __name__)


def load_artifacts(in_dir: Path) -> Dict[str, Any]:
    in_dir = Path(in_dir)
    if not in_dir.is_dir():
        raise InputError(f"Artifact directory not found: '{in_dir}'")
    arts = {}
    for name in ARTIFACTS:
        fn = in_dir / f'{name}.json'
        if fn.exists():
            arts[name] = read_json(fn)
    if not arts:
        raise InputError(f"No artifacts (fits.json, boundary.json, diagnosis.json) in '{in_dir}'")
    return arts


def _num(v: Optional[float], fmt: str) -> str:
    return 'N/A' if v is None else format(v, fmt)


def _decay_rows(arts: Dict) -> List[Dict]:
    rows = []
    strata = (arts.get('fits') or {}).get('strata') or {}
    for e in strata.get('estimates', []):
        k, se = e.get('kappa_s'), e.get('se')
        ok = k is not None and se is not None
        rows.append({'stratum': e['stratum'], 'kappa_s': k, 'se': se,
                     'ci_low': k - Z_CRIT * se if ok else None, 'ci_high': k + Z_CRIT * se if ok else None,
                     'applies': e.get('applies')})
    return rows


def _sensitivity_rows(arts: Dict) -> List[Dict]:
    return list((arts.get('boundary') or {}).get('sensitivity') or [])


def _bin_rows(arts: Dict) -> List[Dict]:
    return list((arts.get('fits') or {}).get('distance_bins') or [])


def _placebo_rows(arts: Dict) -> List[Dict]:
    p = (arts.get('diagnosis') or {}).get('placebo')
    if not p:
        return []
    return [{'run': i, 'kappa_s': k, 't_stat': t}
            for i, (k, t) in enumerate(zip(p.get('placebo_kappas', []), p.get('placebo_t', [])))]


def _ranking_rows(arts: Dict) -> List[Dict]:
    return list((arts.get('fits') or {}).get('ranking') or [])


PLOTS = {
    'decay_by_stratum': (_decay_rows, ('stratum', 'kappa_s', 'se', 'ci_low', 'ci_high', 'applies')),
    'epsilon_sensitivity': (_sensitivity_rows, ('stratum', 'epsilon', 'd_star')),
    'distance_bins': (_bin_rows, ('bin', 'lower', 'upper', 'n', 'mean', 'median', 'sd')),
    'placebo_kappas': (_placebo_rows, ('run', 'kappa_s', 't_stat')),
    'spec_ranking': (_ranking_rows, ('rank', 'spec', 'aic', 'delta_aic')),
}


def _notes(arts: Dict) -> List[str]:
    notes = []
    fits = arts.get('fits') or {}
    for s, reason in sorted(((fits.get('strata') or {}).get('skipped') or {}).items()):
        notes.append(f"Stratum '{s}' not estimated: {reason}")
    validity = (arts.get('diagnosis') or {}).get('validity') or {}
    for r in validity.get('rows', []):
        if r.get('insufficient'):
            notes.append(f"Stratum '{r['stratum']}' insufficient for the validity assessment")
    for b in (arts.get('boundary') or {}).get('boundaries', []):
        if not b.get('valid'):
            notes.append(f"Stratum '{b['decay']['stratum']}': {b['verdict']}, no boundary")
    return notes


def render_tables(arts: Dict, notes: List[str]) -> str:
    parts = []
    fits = arts.get('fits') or {}
    if fits.get('fits'):
        rows = [[f['spec'], f['n'], _num(f['decay']['kappa_s'], '.5f'), _num(f['decay']['se'], '.5f'),
                 _num(f['r2'], '.3f'), _num(f['aic'], '.2f')] for f in fits['fits']]
        parts.append('Decay specifications\n\n' + tabulate(rows, headers=['Spec', 'n', 'κ_s', 'SE', 'R²', 'AIC'],
                                                           disable_numparse=True))
    decay = _decay_rows(arts)
    if decay:
        rows = [[r['stratum'], _num(r['kappa_s'], '.5f'), _num(r['se'], '.5f'),
                 'Yes' if r['applies'] else 'No'] for r in decay]
        parts.append('Decay by stratum\n\n' + tabulate(rows, headers=['Stratum', 'κ_s', 'SE', 'Applies'],
                                                       disable_numparse=True))
    bb = (arts.get('boundary') or {}).get('boundaries') or []
    if bb:
        rows = [[b['decay']['stratum'], _num(b['d_star'], ',.0f'), _num(b['ci_low'], ',.0f'),
                 _num(b['ci_high'], ',.0f'), b['verdict']] for b in bb]
        parts.append('Spatial boundaries\n\n' + tabulate(rows, headers=['Stratum', 'd* (km)', 'CI low', 'CI high',
                                                                        'Verdict'], disable_numparse=True))
    diag = arts.get('diagnosis') or {}
    if diag.get('grid'):
        parts.append('Framework validity\n\n' + diag['grid'])
    p = diag.get('placebo')
    if p:
        rows = [['Actual sources', _num(p['actual']['kappa_s'], '.5f'), _num(p['actual']['se'], '.5f')],
                ['Random sources', _num(p['placebo_mean'], '.5f'), _num(p['placebo_sd'], '.5f')],
                ['Difference', _num(p['difference'], '.5f'), _num(p['difference_se'], '.5f')]]
        parts.append('Placebo test\n\n' + tabulate(rows, headers=['', 'κ_s', 'SE'], disable_numparse=True)
                     + f"\n\nPlacebo rejection rate: {p['rejection_rate']:.1%}")
    rob = diag.get('robustness')
    if rob:
        rows = [[r['mode'], _num(r['kappa_s'], '.5f'), _num(r['se'], '.5f'), _num(r['d_star'], ',.0f')]
                for r in rob['rows']]
        parts.append('Distance measures\n\n' + tabulate(rows, headers=['Mode', 'κ_s', 'SE', 'd* (km)'],
                                                        disable_numparse=True))
    if notes:
        parts.append('Notes\n\n' + '\n'.join(f'- {n}' for n in notes))
    return '\n\n\n'.join(parts)


def write_report(in_dir: Path, out_dir: Path) -> Dict[str, Path]:
    """
    Builds the report directory. Output bytes depend only on the artifacts.
    """
    arts = load_artifacts(in_dir)
    out_dir = Path(out_dir)
    notes = _notes(arts)
    paths = {'report': write_json({'artifacts': arts, 'notes': notes}, out_dir / 'report.json'),
             'tables': write_text(render_tables(arts, notes), out_dir / 'tables.txt')}
    for name, (func, columns) in PLOTS.items():
        rows = func(arts)
        if rows:
            paths[name] = write_csv(rows, out_dir / f'{name}.csv', columns)
    module_logger().info(f"Report written to '{out_dir}'", extra={'data': {'files': sorted(paths)}})
    return paths
