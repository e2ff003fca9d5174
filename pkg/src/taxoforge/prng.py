"""SplitMix64 and FNV-1a, the only sources of randomness in the package.

Both are defined bit-exactly so shuffles reproduce on every platform.
"""

from typing import NamedTuple

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3


class Prng(NamedTuple):
    state: int


def prng_next(p: Prng) -> tuple[int, Prng]:
    state = (p.state + GOLDEN_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31), Prng(state)


def fnv1a64(data) -> int:
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & MASK64
    return h


def shuffle(items, seed: int) -> list:
    """Fisher-Yates shuffle of a copy of ``items``.

    Walks i from the end down to 1 and swaps with j = next % (i + 1).
    """
    out = list(items)
    p = Prng(seed & MASK64)
    for i in range(len(out) - 1, 0, -1):
        r, p = prng_next(p)
        j = r % (i + 1)
        out[i], out[j] = out[j], out[i]
    return out
