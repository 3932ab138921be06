"""Per-environment random streams.

Stream ``i`` of a run depends only on ``(master_seed, i)``, so results do
not depend on how environments are partitioned across workers.
"""

import numpy as np


def child_seed(master_seed, index):
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))


def env_stream(master_seed, index):
    """Counter-based (Philox) generator for environment ``index``."""
    return np.random.Generator(np.random.Philox(child_seed(master_seed, index)))


def env_streams(master_seed, n):
    return [env_stream(master_seed, i) for i in range(n)]
