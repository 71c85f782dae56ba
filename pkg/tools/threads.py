"""Worker thread count from the environment (IVLM_THREADS)."""

import os
from typing import Optional

from tools.errors import ConfigError

THREADS_VARIABLE = "IVLM_THREADS"


def worker_threads(requested: Optional[int] = None) -> int:
    """
    Threads to use: `requested` when given, else IVLM_THREADS, else 1.

    Raises:
        ConfigError: IVLM_THREADS is set but is not an integer
    """
    if requested:
        return max(1, requested)
    raw = os.environ.get(THREADS_VARIABLE, "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{THREADS_VARIABLE} must be an integer, got {raw!r}") from None
