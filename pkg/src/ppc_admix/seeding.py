"""Seed derivation shared by every stochastic step.

All randomness in a run flows from one integer seed. Sub-seeds are derived
with numpy's ``SeedSequence`` using the integer path ``(stream, *keys)`` as the
spawn key, so a sub-seed is a pure function of the root seed and its path and
never depends on call order or worker scheduling.
"""

import numpy as np

# Stream identifiers. Changing these changes every derived seed.
STREAM_INIT = 1
STREAM_REPLICATE = 2
STREAM_PHENOTYPE = 3


def derive_seed(seed, stream, *keys):
    """Return a 64-bit integer seed for ``(seed, stream, *keys)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream), *map(int, keys)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def rng_for(seed, stream, *keys):
    return np.random.default_rng(derive_seed(seed, stream, *keys))
