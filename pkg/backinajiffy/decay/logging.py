import json
import logging
import logging.config
from copy import deepcopy
from typing import Optional, List

from .file_utils import to_jsonable

LOG_FORMAT = '%(asctime)s %(processName)s %(threadName)s %(name)-12s %(levelname)-8s %(message)s'
LOG_DATEFMT = '%Y-%m-%dT%H:%M:%S%z'


class DecayFormatter(logging.Formatter):
    """
    Writes each record on one line followed by a JSON object with the call site and optional payload.

    The payload is whatever was given as ``extra={'data': ...}``; numpy scalars and arrays, dates and dataclasses are
    converted like the JSON artifacts are::

        lgg.warning('Point coincides with a source, distance clamped',
                    extra={'data': {'obs_id': 'm01', 'source_id': 'p7', 'distance_km': np.float64(0.02)}})

    Tracebacks are folded into the same line.
    """

    def formatException(self, exc_info):
        return repr(super().formatException(exc_info))

    def format(self, record):
        tail = {'f': record.pathname, 'l': record.lineno}
        if hasattr(record, 'data'):
            tail['data'] = to_jsonable(record.data)
        s = super().format(record) + ' ' + json.dumps(tail, default=str, ensure_ascii=False)
        return s.replace('\n', '') if record.exc_text else s


CONFIG_LOGGING = {
    'version':                  1,
    'disable_existing_loggers': False,
    'formatters':               {
        'decay': {
            '()':      'backinajiffy.decay.logging.DecayFormatter',
            'format':  LOG_FORMAT,
            'datefmt': LOG_DATEFMT
        },
    },
    'handlers':                 {
        'console': {
            'class':     'logging.StreamHandler',
            'stream':    'ext://sys.stderr',
            'formatter': 'decay',
        },
    },
    'root':                     {
        'handlers': ['console'],
    },
    'loggers':                  {
        'decay':        {'level': 'INFO'},
        'backinajiffy': {'level': 'INFO'},
        'asyncio':      {'level': 'WARNING'},
    }
}
"""Logging to STDERR; :func:`init_logging` adds a file handler on request."""


def init_logging(log_file: Optional[str] = None, config_dict=None):
    """
    Configures logging from :const:`CONFIG_LOGGING` or the given dict.

    :param log_file: Also append records to this file
    :param config_dict: Replaces the default configuration
    """
    conf = deepcopy(config_dict or CONFIG_LOGGING)
    if log_file:
        conf['handlers']['file'] = {
            'class':     'logging.FileHandler',
            'formatter': next(iter(conf['formatters'])),
            'filename':  str(log_file),
            'encoding':  'utf-8',
        }
        conf['root']['handlers'].append('file')
    logging.config.dictConfig(conf)


def get_error_msg_chain(exc: BaseException, msgs: Optional[List[str]] = None, sep=' ⇠ ') -> str:
    """
    Joins the messages of an exception and its causes, outermost first.

    Causes are linked with ``raise ... from ...``::

        except ValueError as exc:
            raise InputError(f"Malformed plant row {i} in '{path}'") from exc

    :param exc: The outermost exception
    :param msgs: Messages to prepend
    :param sep: Separator between messages
    :return: One line
    """
    msgs = [] if msgs is None else msgs
    while exc is not None:
        msgs.append(str(exc))
        exc = exc.__cause__
    return sep.join(msgs)
