"""Seeded integer mixing shared by the embedder and the reference scorer."""

_MIX1 = 0x9E3779B97F4A7C15
_MIX2 = 0xBF58476D1CE4E5B9
_MIX3 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + _MIX1) & _MASK
    x = ((x ^ (x >> 30)) * _MIX2) & _MASK
    x = ((x ^ (x >> 27)) * _MIX3) & _MASK
    return x ^ (x >> 31)


def seeded_hash(seed: int, value: int) -> int:
    return splitmix64(((seed & _MASK) << 32) ^ (value & _MASK))
