"""Elementary symmetric polynomials of tuples with repeated entries."""

import numpy as np


def esym(values, k):
    """sigma_k of a flat sequence of numbers."""
    coeffs = [1.0] + [0.0] * k
    for v in values:
        for j in range(k, 0, -1):
            coeffs[j] += v * coeffs[j - 1]
    return coeffs[k] if k >= 0 else 0.0


def esym_groups_array(k, groups):
    """sigma_k of a tuple built from (value_array, multiplicity) groups.

    Uses the generating function prod (1 + t v)^r, truncated at t^k.
    """
    if k < 0:
        return 0.0
    shape = np.broadcast(*[np.asarray(v) for v, _ in groups]).shape if groups else ()
    coeffs = [np.ones(shape)] + [np.zeros(shape) for _ in range(k)]
    for value, mult in groups:
        value = np.asarray(value, dtype=float)
        for _ in range(mult):
            for j in range(k, 0, -1):
                coeffs[j] = coeffs[j] + value * coeffs[j - 1]
    return coeffs[k]
