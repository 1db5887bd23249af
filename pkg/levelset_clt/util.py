import logging
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

logging.Formatter.converter = time.gmtime  # Use UTC time

CONSOLE_HANDLER = 'levelset_clt.console'
_FORMATS = {
    logging.DEBUG: '%(asctime)s - [%(levelname)-7s] %(processName)s %(name)s:%(funcName)s - %(message)s',
    logging.INFO: '%(asctime)s - [%(levelname)s] %(name)s - %(message)s',
}


def configure_logging(logger_name='levelset_clt', log_level=logging.WARNING):
    """
    Console logging for the package. Calling it again replaces the handler.

    Debug output names the worker process, since replications may run in a pool.
    """
    logger = logging.getLogger(logger_name)
    for handler in list(logger.handlers):
        if handler.get_name() == CONSOLE_HANDLER:
            logger.removeHandler(handler)
    cout = logging.StreamHandler()
    cout.set_name(CONSOLE_HANDLER)
    fmt = _FORMATS.get(log_level, '%(asctime)s - [%(levelname)s] %(message)s')
    cout.setFormatter(logging.Formatter(fmt=fmt, datefmt='%y%m%dZ%H%M%S'))
    logger.setLevel(log_level)
    cout.setLevel(log_level)
    logger.addHandler(cout)
    return logger


def make_rng(seed) -> np.random.Generator:
    """
    Seeded generator used everywhere in the package.

    Philox is counter-based, so streams for distinct seeds are independent and
    a given seed always reproduces the same stream.

    :param seed: int, SeedSequence or an existing Generator (returned as-is).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ValueError('A seed is required; randomness is never implicit.')
    return np.random.Generator(np.random.Philox(seed))


def replication_seed(base_seed: int, n: int, rep: int) -> int:
    """
    Seed of replication `rep` at sample size `n`.

    Defined as the first 32-bit word of SeedSequence(base_seed, spawn_key=(n, rep)),
    so a record can be reproduced from (base_seed, n, rep) alone.
    """
    seq = np.random.SeedSequence(int(base_seed), spawn_key=(int(n), int(rep)))
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def parallel_map(fn, items, threads: int = 1) -> list:
    """
    [fn(item) for item in items], optionally spread over worker processes.

    The result order is the input order whatever the worker count, so callers
    aggregate deterministically. `fn` and the items must be picklable when
    threads > 1.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    chunksize = max(1, len(items) // (4 * threads))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))
