"""Deterministic counter-based random streams.

Every random draw in this package is a pure function of a 64-bit seed and a
counter, so results never depend on evaluation order, thread count, or how
many draws some other component consumed.  The generator is the splitmix64
finalizer applied to ``seed + GOLDEN * counter``, which passes the usual
avalanche checks and is trivially vectorizable.
"""
from __future__ import annotations

import numpy as np

U64 = np.uint64
_GOLDEN = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)
_INV53 = float(2.0 ** -53)


def _mix(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 arithmetic wraps mod 2**64 by design
    z = (z ^ (z >> U64(30))) * _MIX1
    z = (z ^ (z >> U64(27))) * _MIX2
    return z ^ (z >> U64(31))


def mix(values) -> np.ndarray:
    """Hash an array of uint64 counters into iid-looking uint64 words."""
    z = np.asarray(values, dtype=U64)
    with np.errstate(over="ignore"):
        return _mix((z + _GOLDEN) * _GOLDEN)


def derive(seed: int, *words: int) -> int:
    """Fold extra words into a seed, producing an independent substream key.

    derive(s, a, b) != derive(s, b, a) in general; the chain is order
    sensitive so distinct call sites get distinct streams.
    """
    z = np.asarray(seed, dtype=U64).reshape(1)
    for w in words:
        with np.errstate(over="ignore"):
            z = _mix(z + _GOLDEN) ^ (np.asarray(w, dtype=U64) * _MIX1)
    return int(_mix(z)[0])


def uniforms(seed: int, count: int, start: int = 0) -> np.ndarray:
    """`count` doubles in [0, 1), from counters start..start+count-1."""
    idx = np.arange(start, start + count, dtype=U64)
    with np.errstate(over="ignore"):
        h = _mix(idx * _GOLDEN + U64(seed))
    return (h >> U64(11)).astype(np.float64) * _INV53


def uniforms_at(seed: int, counters) -> np.ndarray:
    """Doubles in [0, 1) addressed by explicit counters (any shape)."""
    idx = np.asarray(counters, dtype=U64)
    with np.errstate(over="ignore"):
        h = _mix(idx * _GOLDEN + U64(seed))
    return (h >> U64(11)).astype(np.float64) * _INV53


def uniform(seed: int, counter: int = 0) -> float:
    return float(uniforms(seed, 1, start=counter)[0])


def key_order(seed: int, count: int) -> np.ndarray:
    """A deterministic permutation-by-hash: argsort of per-index keys.

    Used for sampling without replacement: take the first m positions.
    Ties are broken by index, but 64-bit keys make ties vanishingly rare.
    """
    keys = mix(np.arange(count, dtype=U64) + U64(derive(seed, 0x5EED)))
    return np.argsort(keys, kind="stable")
