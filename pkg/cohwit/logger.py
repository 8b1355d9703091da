"""cohwit.logger

Logging for the command line and the sweep workers. Every record carries a
`process` tag, the digest of the sweep point it belongs to or "main", and
a `point` label such as "omega_e=1.5/midpoint" that is empty outside sweeps.
"""

import base64
import hashlib
import sys
from contextlib import contextmanager

from loguru import logger


log = logger

LEVELS = ["SUCCESS", "INFO", "DEBUG", "TRACE"]

DEFAULTS = {"process": "main", "point": ""}

BRIEF = "<red>{extra[process]:<8}</red>: <level>{message}</level>"
DETAILED = (
    "<green>{elapsed}</green> | <level>{level: <8}</level> | "
    "<red>{extra[process]:<8}</red> <magenta>{extra[point]}</magenta> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
)


def initialize(verbose: int, sink=sys.stderr):
    """One sink, at SUCCESS for no -v and down to TRACE at -vvv."""
    lvl = LEVELS[min(verbose, len(LEVELS) - 1)]
    log.remove()
    log.add(sink, format=DETAILED if verbose >= 2 else BRIEF, level=lvl)
    log.configure(extra=DEFAULTS)


def summary64(key) -> str:
    """An 8 character digest used to tag the log lines of one sweep point."""
    return base64.b64encode(hashlib.sha256(str(key).encode()).digest()).decode()[:8]


@contextmanager
def sweep_point(key, axis: str, value, centering):
    """Tag everything logged inside, from any module, with one sweep point."""
    label = str(centering) if axis == "centering" else f"{axis}={value}/{centering}"
    with log.contextualize(process=summary64(key), point=label):
        yield


# Library code may log before the CLI has called initialize.
log.configure(extra=DEFAULTS)
