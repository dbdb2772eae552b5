"""Named random streams derived from one root seed.

``stream(seed, "init")`` and ``stream(seed, "shuffle", epoch)`` are independent
generators: the name is hashed (CRC32) and appended, together with any integer
qualifiers, to the root seed as a ``SeedSequence`` entropy list. The same
(seed, name, qualifiers) always yields the same stream, and adding a new
stream name never perturbs existing ones.

Streams used by the package: ``init`` (parameter initialisation), ``shuffle``
(per-epoch document order), ``dropout`` (per step), ``graph`` (random-replace
ablation spans, per document), ``synth`` (synthetic corpora).
"""

import zlib

import numpy as np


def stream(seed, name, *qualifiers):
    entropy = [int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode())] + [int(q) for q in qualifiers]
    return np.random.default_rng(np.random.SeedSequence(entropy))
