import argparse
from collections import ChainMap
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Any, Union, List, Dict, Tuple

import yaml

try:
    from yaml import CLoader as YamlLoader
except ImportError:
    from yaml import Loader as YamlLoader

from .const import DEFAULT_EPSILON, NEAR_FIELD_KM
from .exc import ConfigurationError, InputError

DEFAULTS = {
    'spec':                 'linear,quadratic,both,log_linear,geometric',
    'epsilon':              DEFAULT_EPSILON,
    'epsilons':             '0.2,0.1,0.05,0.01',
    'strata':               'pooled',
    'weight_mode':          'nearest',
    'out':                  '.',
    'threshold_km':         NEAR_FIELD_KM,
    'att_scale':            'log',
    'n_seeds':              50,
    'modes':                'nearest,capacity,emissions',
    'processes':            1,
    'superposition':        False,
    'filter.min_coverage':  0.75,
    'filter.min_obs':       5,
    'filter.min_qa':        0.75,
    'filter.trim_quantile': 0.99,
    'filter.drop_negative': True,
}
"""Built-in defaults; lowest layer of the configuration chain."""


FLAG_TRUE = ('1', 'true', 'yes', 'on')
FLAG_FALSE = ('0', 'false', 'no', 'off', '')


class Rc:
    """
    Layered configuration.

    Layers, highest precedence first:

    1. The file given with ``--conf``
    2. Command-line arguments that were actually given (argparse defaults are None)
    3. ``./rc.yaml``, ``~/.config/<project>/rc.yaml``, ``/etc/<project>/rc.yaml``
    4. :const:`DEFAULTS`

    Nested YAML documents are flattened to dot-separated keys, so ``filter: {min_qa: 0.8}`` and
    ``filter.min_qa: 0.8`` are equivalent.
    """
    _instance = None
    _dir_etc = Path('/etc')
    _dir_user_config = Path.home() / '.config'
    _conf = ChainMap()
    _conf_file = {}

    defaults = DEFAULTS

    @classmethod
    def create(cls, project_name: str, defaults: Optional[Dict] = None, fn_rc: Optional[Path] = None) -> 'Rc':

        def _read_regular_files():
            ff = [
                cls._dir_etc / project_name / 'rc.yaml',
                cls._dir_user_config / project_name / 'rc.yaml',
                Path.cwd() / 'rc.yaml'
            ]
            dd = []
            for fn in ff:
                if fn.exists():
                    dd.append(read_flat_yaml(fn))
            dd.reverse()
            return dd

        if defaults is None:
            defaults = cls.defaults
        cls._instance = Rc()
        cls._conf_file = {}
        if fn_rc:
            fn_rc = Path(fn_rc)
            if not fn_rc.exists():
                raise InputError(f'Specified RC file not found: "{fn_rc}"')
            cls._conf_file = read_flat_yaml(fn_rc)
        cls._conf = ChainMap(cls._conf_file, *_read_regular_files(), defaults)
        return cls._instance

    @classmethod
    def get_instance(cls) -> 'Rc':
        if not cls._instance:
            raise ValueError('Instance of RC has not been created yet. Call Rc.create() first.')
        return cls._instance

    def g(self, path: Union[str, List], default: Optional[Any] = None):
        return self.__class__._conf.get(path, default)

    def s(self, path, value):
        # noinspection PyTypeChecker
        self.__class__._conf[path] = value

    def gg(self, path: str) -> Dict:
        conf = self.__class__._conf
        kk = [k for k in conf.keys() if k.startswith(path + '.')]
        return {k[len(path + '.'):]: conf[k] for k in kk}

    def add_args(self, args: argparse.Namespace):
        """
        Inserts the given command-line arguments below the ``--conf`` layer.
        """
        cls = self.__class__
        given = {k: v for k, v in vars(args).items() if v is not None and k not in ('cmd', 'subcmd')}
        cls._conf = ChainMap(cls._conf_file, given, *cls._conf.maps[1:])

    @property
    def conf(self):
        return self.__class__._conf


def read_yaml(fn: Path) -> Dict:
    """
    Reads a YAML document that must be a mapping (an empty file is an empty mapping).
    """
    with open(fn, 'rt', encoding='utf-8') as fp:
        try:
            doc = yaml.load(fp, Loader=YamlLoader)
        except yaml.YAMLError as exc:
            raise InputError(f"Cannot parse YAML file '{fn}'") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise InputError(f"YAML file '{fn}' must contain a mapping")
    return doc


def read_flat_yaml(fn: Path) -> Dict:
    return flatten(read_yaml(fn))


def flatten(d: Dict, sep='.') -> Dict:
    def _f(d: Dict, z: Dict, p: str):
        for k, v in d.items():
            np = p + sep + str(k) if p else str(k)
            if isinstance(v, dict):
                _f(v, z, np)
            else:
                z[np] = v

    z = {}
    _f(d, z, '')
    return z


def parse_flag(v) -> bool:
    """
    Reads a yes/no setting; strings from YAML, rc files or the environment are matched case-insensitively.

    :raises ConfigurationError: on a string that is neither true-ish nor false-ish
    """
    if isinstance(v, str):
        s = v.strip().lower()
        if s in FLAG_TRUE:
            return True
        if s in FLAG_FALSE:
            return False
        raise ConfigurationError(f"Not a yes/no value: '{v}'")
    return bool(v)


def _split(v) -> Tuple[str, ...]:
    if v is None:
        return ()
    if isinstance(v, str):
        return tuple(s.strip() for s in v.split(',') if s.strip())
    return tuple(str(s).strip() for s in v)


def _floats(v) -> Tuple[float, ...]:
    try:
        return tuple(float(s) for s in _split(v))
    except ValueError as exc:
        raise ConfigurationError(f"Expected a comma-separated list of numbers, got '{v}'") from exc


def _path(v) -> Optional[Path]:
    return Path(v) if v not in (None, '') else None


@dataclass(frozen=True)
class RunConfig:
    """
    Resolved settings of one command run.

    Build it with :meth:`from_rc`; every command reads its settings from here, never from ``args``.
    """
    input: Optional[Path] = None
    sources: Optional[Path] = None
    scenario: Optional[Path] = None
    out: Path = Path('.')
    specs: Tuple[str, ...] = ()
    epsilon: float = DEFAULT_EPSILON
    epsilons: Tuple[float, ...] = ()
    strata: str = 'pooled'
    seed: Optional[int] = None
    weight_mode: str = 'nearest'
    schema: Optional[str] = None
    label: Optional[str] = None
    threshold_km: float = NEAR_FIELD_KM
    att_scale: str = 'log'
    n_seeds: int = 50
    modes: Tuple[str, ...] = ()
    processes: int = 1
    superposition: bool = False
    wind_bearing: Optional[float] = None
    treatment_intensity: Optional[float] = None
    diffusion: Optional[float] = None
    filter_overrides: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_rc(cls, rc: Rc) -> 'RunConfig':
        g = rc.g
        try:
            conf = cls(
                input=_path(g('input')),
                sources=_path(g('sources')),
                scenario=_path(g('scenario')),
                out=Path(g('out', '.')),
                specs=_split(g('spec')),
                epsilon=float(g('epsilon', DEFAULT_EPSILON)),
                epsilons=_floats(g('epsilons')),
                strata=str(g('strata', 'pooled')),
                seed=None if g('seed') is None else int(g('seed')),
                weight_mode=str(g('weight_mode', 'nearest')),
                schema=g('schema'),
                label=g('label'),
                threshold_km=float(g('threshold_km', NEAR_FIELD_KM)),
                att_scale=str(g('att_scale', 'log')),
                n_seeds=int(g('n_seeds', 50)),
                modes=_split(g('modes')),
                processes=int(g('processes', 1)),
                superposition=parse_flag(g('superposition', False)),
                wind_bearing=None if g('wind_bearing') is None else float(g('wind_bearing')),
                treatment_intensity=None if g('treatment_intensity') is None else float(g('treatment_intensity')),
                diffusion=None if g('diffusion') is None else float(g('diffusion')),
                filter_overrides=rc.gg('filter'),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigurationError('Invalid configuration value') from exc
        conf.validate()
        return conf

    def validate(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigurationError(f'epsilon must be in (0, 1), got {self.epsilon}')
        for e in self.epsilons:
            if not 0.0 < e < 1.0:
                raise ConfigurationError(f'epsilon grid values must be in (0, 1), got {e}')
        if self.weight_mode not in ('nearest', 'capacity', 'emissions'):
            raise ConfigurationError(f"Unknown weight mode '{self.weight_mode}'")
        if self.att_scale not in ('level', 'log'):
            raise ConfigurationError(f"Unknown ATT scale '{self.att_scale}'")
        if self.threshold_km <= 0:
            raise ConfigurationError('threshold_km must be positive')

    def require(self, *names: str) -> None:
        """
        Asserts that the named path settings are given and exist.
        """
        for n in names:
            p = getattr(self, n)
            if p is None:
                raise ConfigurationError(f"Setting '{n}' is required for this command")
            if not Path(p).exists():
                raise InputError(f"{n.capitalize()} not found: '{p}'")
