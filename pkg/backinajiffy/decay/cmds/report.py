import argparse
from typing import Any

from .. import cli
from ..report import write_report

CMD = __name__.split('.')[-1].replace('_', '-')


def add_subcommand(sps: argparse._SubParsersAction):
    p = sps.add_parser(CMD, help='Consolidate the artifacts of an analysis directory into a report')
    cli.add_argument(p, 'input', more_help=': directory with fits.json, boundary.json, diagnosis.json')
    cli.add_argument(p, 'out', more_help='; the report goes to its subdirectory report/')
    p.set_defaults(cmd=ReportCmd)


class ReportCmd(cli.BaseCmd):

    async def get_result(self) -> Any:
        conf = self.config()
        conf.require('input')
        paths = write_report(conf.input, conf.out / 'report')
        return [{'file': k, 'path': str(v)} for k, v in sorted(paths.items())]
