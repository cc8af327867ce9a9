"""Deterministic seed splitting.

Every stochastic routine takes an explicit integer seed. Composite routines
derive child seeds from a parent with ``numpy.random.SeedSequence`` so that
results never depend on call order or worker scheduling.
"""

import numpy as np


def child_seeds(seed, n, *keys):
    """Return ``n`` independent integer seeds derived from ``seed``.

    Extra ``keys`` (non-negative ints) select a named sub-stream, e.g.
    ``child_seeds(seed, 3, 7)`` differs from ``child_seeds(seed, 3, 8)``.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in ss.spawn(n)]


def child_seed(seed, *keys):
    return child_seeds(seed, 1, *keys)[0]
