import asyncio
import sys

from .cli import default_main, make_default_arg_parser
from .const import PROJECT_NAME, PROJECT_LOGGER_NAME

PROJECT_DESCRIPTION = 'Estimate spatial decay of source-driven outcomes, derive treatment boundaries and test ' \
                      'whether the diffusion framework applies.'


async def amain(argv=None) -> int:
    from . import cmds
    arg_parser = make_default_arg_parser(project_name='decay',
                                         cmd_module=cmds,
                                         project_description=PROJECT_DESCRIPTION)
    return await default_main(
        project_name=PROJECT_NAME,
        project_logger_name=PROJECT_LOGGER_NAME,
        argparser=arg_parser,
        argv=argv,
        debug_args=True
    )


def main():
    sys.exit(asyncio.run(amain()))


if __name__ == '__main__':
    main()
