"""Counter-based random streams addressed by (seed, stream, index).

Every replicate in the package draws from its own Philox stream, so results
depend only on the address and never on execution order or worker count.
"""

import numpy as np

# stream identifiers; part of the reproducibility contract, do not renumber
SAMPLE = 0
PERMUTATION = 1
NULL_TABLE = 2
TAIL = 3
SLOPE = 4
DIVERGENCE = 5
EXPERIMENT = 6


def stream(seed, stream_id, *index):
    """Return a Philox generator for the address ``(seed, stream_id, *index)``."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream_id),) + tuple(int(i) for i in index))
    return np.random.Generator(np.random.Philox(ss))
