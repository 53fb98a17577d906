"""Counter-derived random streams.

A stream is fully determined by (root seed, purpose, counters...), so any step
of a run can be regenerated from the seed alone and parallel workers never
share generator state.
"""

from enum import IntEnum

import numpy as np


class Stream(IntEnum):
    """Purposes that own independent random streams."""

    INIT = 0
    SHUFFLE = 1
    AUGMENT = 2
    NEGATIVES = 3
    PROBE = 4
    SYNTH = 5
    MASKS = 6


def stream(seed: int, purpose: Stream, *counters: int) -> np.random.Generator:
    """Generator for `purpose` at the given counters (epoch, step, image...)."""
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(purpose), *map(int, counters)))
    return np.random.Generator(np.random.PCG64(sequence))
