"""Seeded random streams.

Every random draw in the package comes from a PCG64 generator derived from
one integer seed and a fixed stream id, so separate consumers never share
draws and results do not depend on call order across modules.
"""

import numpy as np

STREAMS = {
    "init": 0,
    "negatives": 1,
    "split": 2,
    "synth": 3,
    "candidates": 4,
    "control": 5,
    "synth_noise": 6,
}


def stream(seed, name):
    seq = np.random.SeedSequence(int(seed), spawn_key=(STREAMS[name],))
    return np.random.Generator(np.random.PCG64(seq))
