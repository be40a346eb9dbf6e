"""Deterministic Monte Carlo streams and the block runner.

Replicates are grouped into fixed-size blocks. Block ``b`` of a cell draws
from a generator seeded by ``(master seed, cell key, b)``, so replicate
``i`` always sees the same randomness no matter how many workers run or in
which order blocks finish. The block size depends only on the sample size.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

# Soft cap on floats held per block (samples matrix): 2**21 doubles = 16 MiB.
_BLOCK_ELEMENTS = 1 << 21
_MIN_BLOCK = 64
_MAX_BLOCK = 8192


def stream_key(*parts: object) -> tuple[int, ...]:
    """Map arbitrary hashable labels to a stable tuple of 32-bit words."""
    text = "\x1f".join(repr(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))


def make_generator(seed: int, key: Sequence[int], block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(*key, int(block)))
    return np.random.Generator(np.random.PCG64(ss))


def block_size(n: int) -> int:
    size = _BLOCK_ELEMENTS // max(int(n), 1)
    return max(_MIN_BLOCK, min(_MAX_BLOCK, size))


def block_layout(reps: int, n: int) -> list[int]:
    """Sizes of the consecutive replicate blocks for ``reps`` replicates."""
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    size = block_size(n)
    full, rest = divmod(reps, size)
    return [size] * full + ([rest] if rest else [])


def worker_count() -> int:
    """Worker cap from MEDREG_THREADS (results never depend on it)."""
    raw = os.environ.get("MEDREG_THREADS")
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"MEDREG_THREADS must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ValueError(f"MEDREG_THREADS must be a positive integer, got {raw!r}")
    return value


def run_blocks(
    fn: Callable[[np.random.Generator, int], T],
    *,
    seed: int,
    key: Sequence[int],
    reps: int,
    n: int,
    workers: int | None = None,
) -> list[T]:
    """Run ``fn(rng, m)`` once per block and return results in block order."""
    sizes = block_layout(reps, n)
    jobs = [(make_generator(seed, key, b), m) for b, m in enumerate(sizes)]
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) == 1:
        return [fn(rng, m) for rng, m in jobs]
    with ThreadPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))
