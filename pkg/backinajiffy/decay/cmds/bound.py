import argparse
from typing import Any, List, Mapping

from .. import cli
from ..boundary import (spatial_boundary, epsilon_sensitivity, boundary_ratio, treatment_regions,
                        BoundaryRatioInputs)
from ..estimate import DecayEstimate, SpecKind
from ..exc import InputError
from ..file_utils import read_json, write_json

CMD = __name__.split('.')[-1].replace('_', '-')

FN_BOUNDARY = 'boundary.json'


def add_subcommand(sps: argparse._SubParsersAction):
    p = sps.add_parser(CMD, help='Turn decay estimates into spatial (and temporal) boundaries')
    cli.add_argument(p, 'input', more_help=': fits.json of the estimate command or a JSON with kappa_s and se')
    cli.add_argument(p, 'spec', more_help='; the first one selects the pooled fit')
    cli.add_argument(p, 'epsilon')
    p.add_argument('--epsilons', help='Comma-separated ε grid for the sensitivity table')
    p.add_argument('--treatment-intensity', type=float, help='λ for the temporal boundary τ*')
    p.add_argument('--diffusion', type=float, help='δ in km² per time unit for the temporal boundary τ*')
    cli.add_argument(p, 'out')
    p.set_defaults(cmd=BoundCmd)


def decays_from_document(doc: Any, spec: str) -> List[DecayEstimate]:
    """
    Decay estimates from a fits document (pooled fit of `spec`, plus its strata) or from hand-written records.
    """
    if isinstance(doc, list):
        return [DecayEstimate.from_record(d) for d in doc]
    if not isinstance(doc, Mapping):
        raise InputError('Decay input must be a JSON object or list')
    if 'kappa_s' in doc:
        return [DecayEstimate.from_record(doc)]
    if 'estimates' in doc:
        return [DecayEstimate.from_record(d) for d in doc['estimates']]
    if 'fits' not in doc:
        raise InputError('Decay input has neither fits nor kappa_s')
    pooled = [f['decay'] for f in doc['fits'] if f.get('spec') == spec]
    if not pooled:
        have = ', '.join(f.get('spec', '?') for f in doc['fits'])
        raise InputError(f"No fit of specification '{spec}' in input, have: {have}")
    out = [DecayEstimate.from_record(pooled[0])]
    strata = doc.get('strata') or {}
    if strata.get('spec') == spec:
        out += [DecayEstimate.from_record(d) for d in strata.get('estimates', []) if d.get('stratum') != 'pooled']
    return out


class BoundCmd(cli.BaseCmd):

    async def get_result(self) -> Any:
        conf = self.config()
        conf.require('input')
        spec = SpecKind.parse(conf.specs[0]).value if conf.specs else SpecKind.LINEAR.value
        decays = decays_from_document(read_json(conf.input), spec)
        ratio = None
        if conf.treatment_intensity is not None or conf.diffusion is not None:
            if conf.treatment_intensity is None or conf.diffusion is None:
                raise InputError('The temporal boundary needs both treatment intensity and diffusion')
            ratio = BoundaryRatioInputs(treatment_intensity=conf.treatment_intensity, diffusion=conf.diffusion)

        boundaries = [spatial_boundary(d, conf.epsilon) for d in decays]
        sensitivity = []
        temporal = []
        regions = []
        for d, b in zip(decays, boundaries):
            if conf.epsilons:
                sensitivity += [{'stratum': d.stratum, 'epsilon': p.epsilon, 'd_star': p.d_star}
                                for p in epsilon_sensitivity(d, conf.epsilons)]
            if not b.valid:
                self.lgg.warning(f"Framework rejected for '{d.stratum}': {b.verdict}",
                                 extra={'data': {'kappa_s': d.kappa_s, 'se': d.se}})
                continue
            r = treatment_regions(b.d_star)
            regions.append({'stratum': d.stratum, 'treated_km': r.treated_km, 'control_km': r.control_km})
            if ratio:
                temporal.append({'stratum': d.stratum, 'd_star': b.d_star, 'tau_star': boundary_ratio(ratio, b.d_star)})

        doc = {
            'input': conf.input,
            'spec': spec,
            'epsilon': conf.epsilon,
            'boundaries': boundaries,
            'sensitivity': sensitivity,
            'treatment_regions': regions,
            'temporal': temporal if ratio else None,
            'ratio_inputs': ratio,
        }
        fn = write_json(doc, conf.out / FN_BOUNDARY)
        self.lgg.info(f"Boundaries written to '{fn}'")
        tau = {t['stratum']: t['tau_star'] for t in temporal}
        return [{
            'stratum': b.kappa_source.stratum,
            'kappa_s': b.kappa_source.kappa_s,
            'se': b.kappa_source.se,
            'd_star': b.d_star,
            'ci_low': b.ci_low,
            'ci_high': b.ci_high,
            'tau_star': tau.get(b.kappa_source.stratum),
            'verdict': b.verdict,
        } for b in boundaries]
