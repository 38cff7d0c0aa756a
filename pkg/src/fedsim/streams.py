"""Counter-based random streams.

Every random draw in the simulator comes from a stream keyed by
(root seed, purpose, round, client). Streams are mutually independent by
construction, so adding a consumer (a new strategy, verify-mode extras,
more workers) never perturbs the draws seen by any other consumer. This
is what makes runs reproducible byte-for-byte across worker counts.
"""

from __future__ import annotations

import numpy as np

# Purpose tags. Values are part of the on-disk reproducibility contract:
# changing them changes every run keyed by the same seed.
DATA = 0  # dataset synthesis and model initialization inputs
INIT = 1  # model / ensemble initialization
SAMPLING = 2  # per-round client sampling
EPOCHS = 3  # per-round, per-client local epoch draws
BATCHES = 4  # per-round, per-client batch shuffling


def stream(root: int, purpose: int, *counters: int) -> np.random.Generator:
    """Generator for the (root, purpose, *counters) stream.

    Counters are typically (round,) or (round, client). The same key always
    yields a generator producing the same draws.
    """
    return np.random.default_rng(np.random.SeedSequence((root, purpose, *counters)))
