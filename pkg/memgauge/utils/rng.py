"""Seeded randomness and reproducible rounding.

All random draws go through numpy's PCG64 bit generator, which produces
the same stream on every platform for a given seed.
"""
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

_SEED_MODULUS = 2 ** 64


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) % _SEED_MODULUS))


def round_half_up(rate: float, count: int) -> int:
    """round(rate * count) with halves rounded up, computed in decimal."""
    product = Decimal(repr(float(rate))) * Decimal(count)
    return int(product.quantize(Decimal(1), rounding=ROUND_HALF_UP))
