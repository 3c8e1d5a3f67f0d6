"""Counter-based random substreams and order-independent chunked evaluation.

Every particle draws from its own Philox4x64-10 stream: the 128-bit key is
``(seed, stream)`` and the 256-bit counter starts at ``(0, 0, 0, index)``,
so particle ``index`` owns counters ``(*, *, *, index)``, a block of 2**192
draws that no other particle touches. Work is split into fixed-size chunks
whatever the thread count, so results never depend on parallelism.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

PRIOR_STREAM = 0
RESAMPLE_STREAM = 1

CHUNK_SIZE = 4096

_MASK64 = (1 << 64) - 1


def substream(seed, index, stream=PRIOR_STREAM):
    """Generator for particle ``index`` of ``stream`` under ``seed``."""
    if not 0 <= seed <= _MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    if not 0 <= index <= _MASK64:
        raise ValueError(f"substream index out of range: {index}")
    key = int(seed) | (int(stream) << 64)
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, int(index)]))


def chunks(n, size=CHUNK_SIZE):
    return [(lo, min(lo + size, n)) for lo in range(0, n, size)]


def map_chunks(fn, n, threads=1, size=CHUNK_SIZE):
    """Apply ``fn(lo, hi)`` to fixed chunks of ``range(n)``; results in chunk order."""
    spans = chunks(n, size)
    if threads is None or threads <= 1 or len(spans) <= 1:
        return [fn(lo, hi) for lo, hi in spans]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda span: fn(*span), spans))


def particle_sum(x):
    """Sum over the leading (particle) axis with numpy's pairwise summation."""
    x = np.asarray(x)
    if x.ndim == 1:
        return np.sum(x)
    flat = np.ascontiguousarray(np.moveaxis(x, 0, -1))
    return np.sum(flat, axis=-1)
