"""Shared plumbing: deterministic seed splitting and the work-pool size."""
from __future__ import annotations

import os

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One step of the splitmix64 mixer (public-domain constants)."""
    z = (int(x) + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def split_seed(master_seed: int, index: int) -> int:
    """Derive the seed of stream ``index`` from a 64-bit master seed."""
    if index < 0:
        raise ValueError("stream index must be nonnegative")
    return (int(master_seed) & _MASK) ^ splitmix64(index)


def thread_count() -> int:
    """Size of the work pool, capped by the CTBNLAB_THREADS env var."""
    raw = os.environ.get("CTBNLAB_THREADS")
    if raw is None:
        return max(1, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError("CTBNLAB_THREADS must be an integer, got %r" % raw) from exc
    if n < 1:
        raise ValueError("CTBNLAB_THREADS must be >= 1, got %d" % n)
    return n
