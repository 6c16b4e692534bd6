"""Reproducible random streams for parallel Monte Carlo.

Every source of randomness in this package is a counter-based Philox
stream addressed by (master_seed, domain, index).  Distinct keys give
statistically independent streams, so a path / environment / chain batch
can be regenerated in isolation without replaying anything else, and
results do not depend on how work is distributed over workers.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Domain tags keep the index spaces of unrelated consumers disjoint.
DOMAIN_SDE_PATH = 1
DOMAIN_ENVIRONMENT = 2
DOMAIN_CHAIN_BATCH = 3

_MAX_INDEX = 1 << 56


def stream(master_seed: int, domain: int, index: int) -> np.random.Generator:
    """Generator for the (master_seed, domain, index) stream.

    Pure function of its arguments: calling it twice yields generators
    that emit identical sequences.
    """
    if master_seed < 0:
        raise ValueError(f"master_seed must be nonnegative, got {master_seed}")
    if not 0 <= domain < 256:
        raise ValueError(f"domain must be in [0, 256), got {domain}")
    if not 0 <= index < _MAX_INDEX:
        raise ValueError(f"stream index must be in [0, 2**56), got {index}")
    key = np.array(
        [master_seed & _MASK64, (domain << 56) | index], dtype=np.uint64
    )
    return np.random.Generator(np.random.Philox(key=key))
