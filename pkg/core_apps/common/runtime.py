"""
Process-level helpers: seeding, ordered parallel map, build identification.
"""
import logging
import random
import subprocess
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import torch
from django.conf import settings

logger = logging.getLogger(__name__)


def seed_everything(seed):
    """
    Seed every random source and pin torch to deterministic kernels.

    Intra-op parallelism is fixed to one thread so that reductions happen in
    the same order regardless of ``--threads``; that flag only parallelizes
    across scenes.
    """
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)
    torch.set_num_threads(1)


def resolve_threads(threads=None):
    return max(1, int(threads if threads is not None else settings.BICA_THREADS))


def ordered_map(func, items, threads=1):
    """
    Apply ``func`` to every item, possibly on a thread pool.

    Results always come back in input order, so any reduction over them is
    independent of the thread count.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def git_describe():
    """Return ``git describe --always --dirty`` or ``"unknown"``."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=settings.ROOT_DIR,
            capture_output=True,
            text=True,
            timeout=5,
            check=True,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"
