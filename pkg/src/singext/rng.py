"""Counter-based random streams.

Every random draw in the pipeline comes from a Philox substream addressed by
(seed, stream index), so results are reproducible from those two integers no
matter how work is scheduled or chunked.
"""

import numpy as np


def substream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for draw `index` of the run seeded with `seed`."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, index & 0xFFFFFFFFFFFFFFFF],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
