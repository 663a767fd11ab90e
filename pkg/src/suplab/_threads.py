"""Worker-count plumbing.

``SUPLAB_THREADS`` caps the numba worker pool. It has to be applied before
numba is first imported, because numba reads ``NUMBA_NUM_THREADS`` once at
import time. Results never depend on the value: every parallel kernel writes
per-element outputs from counter-based random streams and all reductions run
afterwards in a fixed order.
"""

import os

_requested = os.environ.get("SUPLAB_THREADS")
if _requested and "NUMBA_NUM_THREADS" not in os.environ:
    try:
        if int(_requested) >= 1:
            os.environ["NUMBA_NUM_THREADS"] = str(int(_requested))
    except ValueError:
        pass

os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import numba  # noqa: E402


def configure_threads():
    n = os.environ.get("SUPLAB_THREADS")
    if not n:
        return numba.get_num_threads()
    try:
        n = int(n)
    except ValueError:
        return numba.get_num_threads()
    n = max(1, min(n, numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


configure_threads()
