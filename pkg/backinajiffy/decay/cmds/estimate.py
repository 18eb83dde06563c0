import argparse
from typing import Any

import numpy as np

from .. import cli, pipeline, geo
from ..const import MIN_DISTANCE_KM
from ..estimate import (SpecKind, fit_spec, compare_specs, extract_decay, stratified_decay, att_stage1,
                        fit_superposition, SuperpositionFit)
from ..exc import InsufficientDataError
from ..file_utils import write_json

CMD = __name__.split('.')[-1].replace('_', '-')

BIN_EDGES_KM = (0.0, 50.0, 100.0, 200.0)
FN_FITS = 'fits.json'


def add_subcommand(sps: argparse._SubParsersAction):
    p = sps.add_parser(CMD, help='Fit decay specifications, rank them by AIC and estimate per stratum')
    cli.add_analysis_arguments(p)
    p.add_argument('--threshold-km', type=float, help='Near/far cut for the direct effect and near_far strata')
    p.add_argument('--att-scale', choices=['level', 'log'], help='Scale of the direct effect')
    p.add_argument('--superposition', action='store_const', const=True,
                   help='Also fit the multi-source superposition model')
    p.set_defaults(cmd=EstimateCmd)


def _superposition(frame, sources) -> SuperpositionFit:
    ss = sorted(sources, key=lambda s: s.source_id)
    dist = np.maximum(geo.distance_matrix(frame['lat'].to_numpy(), frame['lon'].to_numpy(), ss), MIN_DISTANCE_KM)
    keep = frame['value'].to_numpy() > 0
    return fit_superposition(dist[keep], frame['value'].to_numpy()[keep], [s.source_id for s in ss])


class EstimateCmd(cli.BaseCmd):

    async def get_result(self) -> Any:
        conf = self.config()
        prep = pipeline.prepare(conf)
        frame = prep.frame
        if frame.empty:
            raise InsufficientDataError('No observations left after filtering')
        specs = SpecKind.parse_list(conf.specs)
        if not specs:
            raise InsufficientDataError('No specification requested')
        if len(specs) > 1:
            ranking = compare_specs(frame, specs)
            fits = sorted((r.fit for r in ranking), key=lambda f: specs.index(f.spec))
        else:
            ranking = []
            fits = [fit_spec(frame, specs[0])]
        primary = specs[0]
        decays = {f.spec: extract_decay(f) for f in fits}

        labels, expected = pipeline.strata_labels(frame, conf.strata, conf.threshold_km)
        strata = stratified_decay(frame, labels, primary, labels=expected)

        try:
            att = att_stage1(frame, conf.threshold_km, conf.att_scale)
        except InsufficientDataError as exc:
            self.lgg.warning(f'No direct-effect estimate: {exc}')
            att = None

        sup = _superposition(frame, prep.sources) if conf.superposition else None
        bins = geo.distance_bin_summary(frame['distance'], frame['value'], BIN_EDGES_KM, open_last=True)

        doc = {
            'input': conf.input,
            'sources': conf.sources,
            'schema': prep.schema,
            'weight_mode': conf.weight_mode,
            'n_locations': len(frame),
            'n_sources': len(prep.sources),
            'audit': prep.audit,
            'primary_spec': primary.value,
            'fits': [dict(f.as_record(), decay=decays[f.spec]) for f in fits],
            'ranking': ranking,
            'strata': {'definition': conf.strata, 'spec': primary.value, 'estimates': strata.estimates,
                       'skipped': strata.skipped},
            'att': att,
            'superposition': sup,
            'distance_bins': bins,
        }
        fn = write_json(doc, conf.out / FN_FITS)
        self.lgg.info(f"Fits written to '{fn}'")
        rank = {r.fit.spec: r for r in ranking}
        return [{
            'spec': f.spec.value,
            'n': f.n,
            'kappa_s': decays[f.spec].kappa_s,
            'se': decays[f.spec].se,
            't_stat': decays[f.spec].t_stat,
            'aic': f.aic,
            'rank': rank[f.spec].rank if f.spec in rank else 1,
            'delta_aic': rank[f.spec].delta_aic if f.spec in rank else 0.0,
        } for f in fits]
