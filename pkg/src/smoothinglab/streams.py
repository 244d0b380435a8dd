"""Deterministic random-number streams.

Every operation takes an explicit `numpy.random.Generator`. Replicate work is
split across substreams derived from (master seed, tag, index) so that results
do not depend on execution order or worker count.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["derive", "substreams", "tag_int"]


def tag_int(tag: str) -> int:
    """Stable 32-bit integer for a subcommand or operation tag."""
    return zlib.crc32(tag.encode("utf-8"))


def derive(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Generator for replicate `index` of the stream named `tag`."""
    ss = np.random.SeedSequence([int(seed), tag_int(tag), int(index)])
    return np.random.default_rng(ss)


def substreams(seed: int, tag: str, n: int) -> list[np.random.Generator]:
    """n independent generators for replicate chunks 0..n-1."""
    return [derive(seed, tag, i) for i in range(n)]
