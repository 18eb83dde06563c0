import concurrent.futures
import logging
import multiprocessing
from typing import Callable, Iterable, List, Any, Optional

from .const import PROJECT_LOGGER_NAME


def module_logger():
    return logging.getLogger(PROJECT_LOGGER_NAME + '.' + __name__)


def map_ordered(task_func: Callable[[Any], Any], inputs: Iterable[Any], processes: Optional[int] = 1,
                chunksize: int = 1) -> List[Any]:
    """
    Applies `task_func` to every input and returns the results in input order.

    With ``processes <= 1`` the inputs are processed in this process. Otherwise a process pool is used;
    ``task_func`` and the inputs must then be picklable (module-level functions, ``functools.partial``).
    Since results keep the input order, any reduction over them is independent of the number of processes.

    :param task_func: Pure function of one input
    :param inputs: The inputs
    :param processes: Number of worker processes; None means one per CPU
    :param chunksize: Inputs handed to a worker at once
    :return: List of results
    """
    inputs = list(inputs)
    if processes is None:
        processes = multiprocessing.cpu_count()
    processes = min(processes, len(inputs))
    if processes <= 1:
        return [task_func(inp) for inp in inputs]
    lgg = module_logger()
    lgg.debug(f'Starting {processes} processes for {len(inputs)} tasks')
    with concurrent.futures.ProcessPoolExecutor(max_workers=processes) as executor:
        results = list(executor.map(task_func, inputs, chunksize=chunksize))
    lgg.debug(f'Finished {len(results)} tasks')
    return results
