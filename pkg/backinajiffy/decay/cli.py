import argparse
import asyncio
import collections.abc
import logging
import pkgutil
import shutil
import sys
import time
from argparse import ArgumentParser
from importlib import import_module
from pathlib import Path
from pprint import pformat
from typing import Optional, List, Any, Tuple

from tabulate import tabulate

try:
    import ujson as json
except ImportError:
    import json
import json as json_builtin

try:
    from yaml import CDumper as YamlDumper
except ImportError:
    from yaml import Dumper as YamlDumper
import yaml

from .const import PROJECT_LOGGER_NAME
from .exc import InputError
from .file_utils import to_jsonable
from .logging import get_error_msg_chain, init_logging
from .rc import Rc, RunConfig

EXIT_CODE_OK = 0
"""Exit code when the command terminates normally, also when the framework is rejected."""
EXIT_CODE_FATAL = 1
"""Exit code on internal or estimation errors."""
EXIT_CODE_INPUT = 2
"""Exit code on input or configuration errors."""

OUTPUT_FORMATS = ('txt', 'ptxt', 'json', 'yaml', 'tsv')

VERBOSITY_LEVELS = {
    -1: logging.CRITICAL,
    0:  logging.ERROR,
    1:  logging.WARNING,
    2:  logging.INFO,
    3:  logging.DEBUG,
}
"""Log level by verbosity: ``--quiet`` is -1, otherwise the number of ``-v``."""

LIBRARY_LOGGERS = ['asyncio', 'numpy', 'scipy', 'statsmodels']


def module_logger() -> logging.Logger:
    return logging.getLogger(PROJECT_LOGGER_NAME + '.' + __name__)


class BaseCmd:

    def __init__(self,
                 args: argparse.Namespace,
                 cmd_name: Optional[str] = None,
                 lgg: Optional[logging.Logger] = None,
                 catch: Optional[Tuple] = (InputError,),
                 exit_code_error: Optional[int] = EXIT_CODE_INPUT):
        """
        A sub-command. Children implement :meth:`get_result`.

        Only the output options are read from `args`; analysis settings come from :meth:`config`, which resolves
        ``--conf``, flags, rc files and defaults.

        :param args: Parsed command line
        :param cmd_name: Name used in log messages, by default the sub-command
        :param lgg: Logger, by default one named after the class
        :param catch: Errors that end the command with `exit_code_error` instead of bubbling up
        :param exit_code_error: Exit code for the errors in `catch`
        """
        self.output_format = args.output_format
        self.output_file = Path(args.output_file) if args.output_file else None
        self.lgg = lgg if lgg else logging.getLogger(PROJECT_LOGGER_NAME + '.' + self.__class__.__name__)
        self.cmd_name = cmd_name or getattr(args, 'subcmd', None)
        self.catch = catch
        self.exit_code_error = exit_code_error

    def config(self) -> RunConfig:
        return RunConfig.from_rc(Rc.get_instance())

    async def output(self, data: Any) -> None:
        """
        Serializes `data` in the chosen output format and prints it, or writes it to ``--output-file``.
        """
        if self.output_format == 'json':
            try:
                data = json.dumps(data)
            except TypeError:
                data = json_builtin.dumps(data, default=str)
        elif self.output_format == 'yaml':
            data = yaml.dump(data, Dumper=YamlDumper, allow_unicode=True, sort_keys=False)
        elif self.output_format == 'ptxt':
            data = pformat(data)
        elif self.output_format == 'tsv':
            data = format_tsv(data)
        await output(data, fn=self.output_file)
        if self.output_file:
            self.lgg.info(f"Output written to file '{self.output_file}'")

    async def format_data(self, data: Any) -> str:
        """
        Renders rows as a text table with a row count; anything else passes unchanged.
        """
        if isinstance(data, collections.abc.Sequence) and not isinstance(data, str) and data:
            headers = 'keys' if isinstance(data[0], collections.abc.Mapping) else ''
            return tabulate(data, headers=headers) + f"\n({len(data)} rows)"
        return data

    def can_format_output(self) -> bool:
        return self.output_format in OUTPUT_FORMATS[1:]

    async def run(self) -> int:
        """
        Runs :meth:`get_result` and prints its data.

        :return: :const:`EXIT_CODE_OK`, or `exit_code_error` for the errors in `catch`. Other errors propagate to
            :func:`run_subcommand`.
        """
        try:
            data = await self.get_result()
            if data is None:
                self.lgg.info('No data')
            else:
                data = to_jsonable(data)
                if not self.can_format_output():
                    data = await self.format_data(data)
                await self.output(data)
            return EXIT_CODE_OK
        except self.catch as exc:
            self.lgg.error(f"Error executing command '{self.cmd_name}': {get_error_msg_chain(exc)}", exc_info=True)
            return self.exit_code_error
        finally:
            self.lgg.debug(f"Finished command '{self.cmd_name}'")

    async def get_result(self) -> Any:
        """
        Does the work of the command and writes its artifacts.

        :return: Summary rows or a mapping to print, or None
        """
        raise NotImplementedError('Implement this in child class')


def format_tsv(data: Any) -> str:
    if isinstance(data, collections.abc.Sequence) and data and isinstance(data[0], collections.abc.Mapping):
        keys = list(data[0].keys())
        return "\n".join(["\t".join(keys)] + ["\t".join(str(row.get(k, '')) for k in keys) for row in data])
    return "\n".join(["\t".join([str(c) for c in row]) for row in data])


def get_help_formatter(prog):
    return argparse.ArgumentDefaultsHelpFormatter(prog, width=shutil.get_terminal_size(fallback=(132, 24)).columns)


def add_argument(p: ArgumentParser,
                 arg: str,
                 required: Optional[bool] = False,
                 more_help: Optional[str] = None,
                 more_choices: Optional[List[str]] = None,
                 default_value=None):
    """
    Adds one of the shared command-line options by name.

    Global: verbose, log-file, quiet, output-format, output-file, conf. Analysis: input, sources, out, spec, epsilon,
    strata, seed, weight-mode, schema, wind-bearing, processes.

    Analysis options default to None; an unset option leaves the value from rc files or built-in defaults in place.

    :param p: Parser or sub-parser
    :param arg: Option name without dashes
    :param required: Make the option mandatory
    :param more_help: Appended to the help text
    :param more_choices: Appended to the choices of output-format
    :param default_value: Default value
    """
    more_help = more_help or ''
    if arg == 'verbose':
        p.add_argument(
            '-v', '--verbose',
            help='Repeat to log more: -v warnings, -vv progress, -vvv debug; '
                 'further -v raise numpy, scipy and statsmodels loggers too.' + more_help,
            required=required,
            action='count'
        )
    elif arg == 'log-file':
        p.add_argument('--log-file', help='Append log records to this file' + more_help, required=required)
    elif arg == 'quiet':
        p.add_argument(
            '-q', '--quiet',
            help='Log critical errors only; check the exit code.' + more_help,
            required=required,
            action='store_true'
        )
    elif arg == 'output-format':
        choices = list(OUTPUT_FORMATS) + (more_choices or [])
        p.add_argument(
            '-F', '--output-format',
            help='Format of the printed summary' + more_help,
            required=required,
            choices=choices,
            default=default_value or OUTPUT_FORMATS[0]
        )
    elif arg == 'output-file':
        p.add_argument(
            '-O', '--output-file',
            help='Write the summary to this file instead of STDOUT' + more_help,
            metavar='FILENAME',
            required=required,
            default=default_value
        )
    elif arg == 'conf':
        p.add_argument(
            '-c', '--conf',
            help='Read this config file (YAML); its values override command-line flags' + more_help,
            default=default_value,
            type=Path
        )
    elif arg == 'input':
        p.add_argument('--input', help='Input file or artifact directory' + more_help, required=required,
                       default=default_value)
    elif arg == 'sources':
        p.add_argument('--sources', help='Plant file (plant schema)' + more_help, required=required,
                       default=default_value)
    elif arg == 'out':
        p.add_argument('--out', help='Output directory for artifacts' + more_help, required=required,
                       default=default_value)
    elif arg == 'spec':
        p.add_argument('--spec', help='Comma-separated decay specifications: linear, quadratic, both, log_linear, '
                                      'geometric, asymmetric, wind_interaction' + more_help,
                       required=required, default=default_value)
    elif arg == 'epsilon':
        p.add_argument('--epsilon', help='Boundary threshold ε in (0, 1)' + more_help, type=float,
                       required=required, default=default_value)
    elif arg == 'strata':
        p.add_argument('--strata', help='Strata: pooled, region, near_far or a column name' + more_help,
                       required=required, default=default_value)
    elif arg == 'seed':
        p.add_argument('--seed', help='Random seed' + more_help, type=int, required=required, default=default_value)
    elif arg == 'weight-mode':
        p.add_argument('--weight-mode', help='Distance measure' + more_help,
                       choices=['nearest', 'capacity', 'emissions'], required=required, default=default_value)
    elif arg == 'schema':
        p.add_argument('--schema', help='Observation schema; detected from the header by default' + more_help,
                       choices=['monitor', 'cell'], required=required, default=default_value)
    elif arg == 'wind-bearing':
        p.add_argument('--wind-bearing', help='Direction the wind blows to, degrees from north' + more_help,
                       type=float, required=required, default=default_value)
    elif arg == 'processes':
        p.add_argument('--processes', help='Worker processes' + more_help, type=int, required=required,
                       default=default_value)
    else:
        raise ValueError(f"Unknown argument '{arg}'")


def add_default_arguments(p: ArgumentParser):
    """
    Global options; they go before the sub-command.
    """
    for a in ('verbose', 'log-file', 'quiet', 'output-format', 'output-file', 'conf'):
        add_argument(p, a)


def add_filter_arguments(p: ArgumentParser):
    """
    Adds overrides of the quality filters; they land in the configuration as ``filter.<name>``.
    """
    p.add_argument('--min-coverage', dest='filter.min_coverage', type=float, help='Minimum coverage per id and year')
    p.add_argument('--min-obs', dest='filter.min_obs', type=int, help='Minimum observations per period')
    p.add_argument('--min-qa', dest='filter.min_qa', type=float, help='Minimum QA value')
    p.add_argument('--trim-quantile', dest='filter.trim_quantile', type=float, help='Drop values above this quantile')
    p.add_argument('--keep-negative', dest='filter.drop_negative', action='store_const', const=False,
                   help='Keep negative values')


def add_analysis_arguments(p: ArgumentParser):
    """
    Arguments shared by commands that load observations and plants.
    """
    for a in ('input', 'sources', 'schema', 'spec', 'weight-mode', 'strata', 'wind-bearing', 'out'):
        add_argument(p, a)
    add_filter_arguments(p)


def import_subcommands(p: ArgumentParser, module_with_commands):
    """
    Adds a sub-parser for every module in package `module_with_commands`; each module provides
    ``add_subcommand(subparsers)``.
    """
    sps = p.add_subparsers(dest='subcmd', help='Commands')
    for _, name, _ in pkgutil.iter_modules(module_with_commands.__path__):
        m = import_module(f'{module_with_commands.__name__}.{name}')
        m.add_subcommand(sps)

    for sp in sps.choices.values():
        sp.formatter_class = get_help_formatter


async def run_subcommand(lgg: logging.Logger, args: argparse.Namespace) -> int:
    """
    Runs the command selected on the command line.

    :return: The command's exit code, or :const:`EXIT_CODE_FATAL` if no command was given or an error escaped it
    """
    if not getattr(args, 'cmd', None):
        lgg.fatal('Please call a sub-command')
        return EXIT_CODE_FATAL
    try:
        lgg.debug(f"Running subcommand '{args.subcmd}'")
        return await args.cmd(args, lgg=lgg).run()
    except Exception as exc:
        lgg.fatal(f"Unhandled exception: {get_error_msg_chain(exc)}", exc_info=True)
        return EXIT_CODE_FATAL


def set_log_level(args, libs: Optional[List[str]] = None) -> int:
    """
    Sets the project's log level from ``--quiet`` and ``-v``, see :const:`VERBOSITY_LEVELS`.

    Libraries stay on ERROR up to ``-vvv``; each further ``-v`` raises them one step. From six ``-v`` on the event
    loop runs in debug mode.

    :return: The verbosity applied to libraries
    """
    v = -1 if args.quiet else (args.verbose or 0)
    level = VERBOSITY_LEVELS[min(v, 3)]
    logging.root.setLevel(level)
    for n in (PROJECT_LOGGER_NAME, 'backinajiffy'):
        logging.getLogger(n).setLevel(level)
    v_libs = max(v - 3, 0)
    for n in LIBRARY_LOGGERS + (libs or []):
        logging.getLogger(n).setLevel(VERBOSITY_LEVELS[min(v_libs, 3)])
    if v_libs >= 2:
        asyncio.get_running_loop().set_debug(True)
    return v_libs


async def output(data: Any, fn: Optional[Path] = None):
    if fn:
        Path(fn).write_text(f'{data}\n', encoding='utf-8')
    else:
        print(data)


async def default_main(project_name: str,
                       project_logger_name: str,
                       argparser: ArgumentParser,
                       argv: Optional[List[Any]] = None,
                       debug_args=False,
                       log_libs: Optional[List[str]] = None) -> int:
    """
    Parses the command line, sets up logging and configuration, and runs the sub-command.

    :param project_name: Used in log messages and for the rc file locations
    :param project_logger_name: Logger for framework messages
    :param argparser: Parser from :func:`make_default_arg_parser`
    :param argv: Command line including the program name, by default `sys.argv`
    :param debug_args: Log the parsed arguments on DEBUG
    :param log_libs: Further library loggers to control with ``-v``
    :return: The exit code
    """
    args = argparser.parse_args((sys.argv if argv is None else argv)[1:])
    init_logging(args.log_file)
    set_log_level(args, libs=log_libs)
    lgg = logging.getLogger(project_logger_name)
    if debug_args:
        lgg.debug(args)

    started = time.perf_counter()
    lgg.info(f'Start {project_name}')
    try:
        Rc.create(project_name=project_name, fn_rc=args.conf or None).add_args(args)
    except InputError as exc:
        lgg.error(f'Cannot read configuration: {get_error_msg_chain(exc)}')
        return EXIT_CODE_INPUT

    exit_code = await run_subcommand(lgg, args)
    lgg.info(f'End {project_name}, {time.perf_counter() - started:.4f} secs taken')
    return exit_code


def make_default_arg_parser(project_name, cmd_module, project_description=None) -> ArgumentParser:
    """
    Builds the top-level parser: global options followed by one sub-parser per module in `cmd_module`.
    """
    p = argparse.ArgumentParser(
        prog=project_name,
        description=project_description,
        conflict_handler='resolve',
        formatter_class=get_help_formatter,
        allow_abbrev=False
    )
    add_default_arguments(p)
    if cmd_module:
        import_subcommands(p, cmd_module)
    else:
        module_logger().warning('No module for sub-commands given')
    return p
