import argparse
import dataclasses
from typing import Any

from .. import cli, synth

CMD = __name__.split('.')[-1].replace('_', '-')


def add_subcommand(sps: argparse._SubParsersAction):
    p = sps.add_parser(CMD, help='Draw a synthetic dataset with known ground truth')
    p.add_argument('--scenario', help='Scenario file (YAML)')
    cli.add_argument(p, 'seed', more_help='; overrides the seed of the scenario')
    cli.add_argument(p, 'epsilon', more_help='; used for the true d* in truth.json')
    cli.add_argument(p, 'out')
    p.set_defaults(cmd=SimulateCmd)


class SimulateCmd(cli.BaseCmd):

    async def get_result(self) -> Any:
        conf = self.config()
        conf.require('scenario')
        scenario = synth.load_scenario(conf.scenario)
        if conf.seed is not None:
            scenario = dataclasses.replace(scenario, seed=conf.seed)
        ds = synth.generate(scenario, epsilon=conf.epsilon)
        paths = synth.write_dataset(ds, conf.out)
        self.lgg.info(f"Wrote synthetic dataset to '{conf.out}'", extra={'data': {k: str(v) for k, v in paths.items()}})
        return [{
            'observations': len(ds.observations),
            'sources': len(ds.sources),
            'seed': scenario.seed,
            'kappa_s': ds.truth.kappa_s,
            'd_star': ds.truth.d_star,
            'weak_signal': ds.truth.weak_signal,
            'out': str(conf.out),
        }]
