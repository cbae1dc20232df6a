"""Counter-based random streams for reproducible, splittable replications.

Every replication derives two disjoint Philox substreams from
``(master_seed, replication, purpose)``: one feeding the uniform ancestor
picks, one feeding the kernel draws.  Identical keys always reproduce the
identical stream, independent of execution order, which is what makes
whole experiment runs byte-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_PURPOSE_ANCESTOR = 0
_PURPOSE_KERNEL = 1


def substream(master_seed: int, replication: int, purpose: int) -> np.random.Generator:
    """Philox generator keyed by (master_seed, replication, purpose)."""
    seq = np.random.SeedSequence([int(master_seed), int(replication), int(purpose)])
    return np.random.Generator(np.random.Philox(seq))


@dataclass
class DrawStreams:
    """Pair of generators owned by a single trajectory simulation."""

    ancestors: np.random.Generator
    kernel: np.random.Generator

    @classmethod
    def from_seed(cls, master_seed: int, replication: int = 0) -> "DrawStreams":
        return cls(
            ancestors=substream(master_seed, replication, _PURPOSE_ANCESTOR),
            kernel=substream(master_seed, replication, _PURPOSE_KERNEL),
        )
