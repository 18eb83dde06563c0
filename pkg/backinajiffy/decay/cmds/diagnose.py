import argparse
from typing import Any

from .. import cli, pipeline
from ..diagnose import validity_assessment, placebo_test, distance_measure_robustness, render_validity_grid
from ..estimate import SpecKind, temporal_splits
from ..exc import InsufficientDataError
from ..file_utils import write_json

CMD = __name__.split('.')[-1].replace('_', '-')

FN_DIAGNOSIS = 'diagnosis.json'


def add_subcommand(sps: argparse._SubParsersAction):
    p = sps.add_parser(CMD, help='Assess framework validity per stratum, run the placebo test and compare '
                                 'distance measures')
    cli.add_analysis_arguments(p)
    cli.add_argument(p, 'epsilon')
    cli.add_argument(p, 'seed', more_help=' of the placebo sources')
    cli.add_argument(p, 'processes')
    p.add_argument('--threshold-km', type=float, help='Near/far cut of the near_far and region strata')
    p.add_argument('--n-seeds', type=int, help='Placebo runs')
    p.add_argument('--modes', help='Comma-separated distance measures to compare')
    p.add_argument('--label', help='Data label in the validity grid; the input file name by default')
    p.set_defaults(cmd=DiagnoseCmd)


class DiagnoseCmd(cli.BaseCmd):

    async def get_result(self) -> Any:
        conf = self.config()
        prep = pipeline.prepare(conf)
        frame = prep.frame
        if frame.empty:
            raise InsufficientDataError('No observations left after filtering')
        spec = SpecKind.parse(conf.specs[0]) if conf.specs else SpecKind.LINEAR
        label = conf.label or conf.input.stem

        labels, expected = pipeline.strata_labels(frame, conf.strata, conf.threshold_km)
        validity = validity_assessment(frame, labels, spec, conf.epsilon, label=label, labels=expected)
        placebo = placebo_test(frame, len(prep.sources), spec, n_seeds=conf.n_seeds, seed=conf.seed or 0,
                               processes=conf.processes)
        robustness = distance_measure_robustness(frame, prep.sources, spec, modes=conf.modes or ('nearest',),
                                                 epsilon=conf.epsilon, wind_bearing=conf.wind_bearing)
        temporal = None
        if prep.yearly['year'].nunique() > 1:
            try:
                temporal = temporal_splits(prep.yearly, spec)
            except InsufficientDataError as exc:
                self.lgg.warning(f'No temporal stability check: {exc}')
        grid = render_validity_grid(validity)
        doc = {
            'input': conf.input,
            'spec': spec.value,
            'strata': conf.strata,
            'validity': validity,
            'grid': grid,
            'placebo': placebo,
            'robustness': robustness,
            'temporal': temporal,
        }
        fn = write_json(doc, conf.out / FN_DIAGNOSIS)
        self.lgg.info(f"Diagnosis written to '{fn}'")
        if self.output_format == 'txt':
            return grid
        return [{
            'label': r.label,
            'stratum': r.stratum,
            'n': r.n,
            'kappa_s': r.kappa_s,
            'se': r.se,
            'applies': r.applies,
            'd_star': r.d_star,
        } for r in validity.rows]
