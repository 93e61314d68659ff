"""Named, counter-based random substreams derived from one master seed.

Each (name, round) pair maps to its own SeedSequence spawn key, so adding a
scheme or a draw never shifts another stream. Schemes run on the same seed
therefore see identical placements, partitions and channels.
"""

import numpy as np

STREAMS = {
    "placement": 0,
    "partition": 1,
    "channel": 2,
    "scheme": 3,
    "matcher-init": 4,
    "scheme-setup": 5,
    "assignment": 6,
}


def substream(seed: int, name: str, t: int = 0) -> np.random.Generator:
    try:
        key = STREAMS[name]
    except KeyError:
        raise ValueError(f"unknown random stream {name!r}") from None
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(key, int(t))))
