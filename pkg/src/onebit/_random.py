"""Seeded, counter-keyed random streams.

Every random draw in the package comes from ``stream(seed, purpose, *keys)``:
a Philox (counter-based) generator keyed by a ``SeedSequence`` built from the
seed, a fixed integer code for the purpose, and any extra integer keys such
as a batch number or a block index. Streams for different keys are
independent, so results never depend on the order in which blocks are
generated or on thread count.

Gaussian variates come from ``Generator.standard_normal`` (numpy's ziggurat
sampler) on top of Philox; class indices from ``Generator.integers``.
Changing either is a breaking change to the bit-exact reproducibility contract.
"""

import zlib

import numpy as np

# instances per independently keyed block inside a batch
BLOCK = 4096


def _purpose_code(purpose):
    return zlib.crc32(purpose.encode("ascii"))


def stream(seed, purpose, *keys):
    ss = np.random.SeedSequence(
        entropy=int(seed), spawn_key=(_purpose_code(purpose),) + tuple(int(k) for k in keys)
    )
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed, purpose, *keys):
    """A 63-bit integer seed derived from ``(seed, purpose, keys)``."""
    ss = np.random.SeedSequence(
        entropy=int(seed), spawn_key=(_purpose_code(purpose),) + tuple(int(k) for k in keys)
    )
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def blocked_normal(seed, purpose, batch, rows, n):
    """``rows x n`` standard normals, column blocks keyed by block index."""
    out = np.empty((rows, n))
    for b, start in enumerate(range(0, n, BLOCK)):
        stop = min(start + BLOCK, n)
        # generated instance-major so each column is one instance
        out[:, start:stop] = stream(seed, purpose, batch, b).standard_normal((stop - start, rows)).T
    return out


def blocked_integers(seed, purpose, batch, high, n):
    out = np.empty(n, dtype=np.int64)
    for b, start in enumerate(range(0, n, BLOCK)):
        stop = min(start + BLOCK, n)
        out[start:stop] = stream(seed, purpose, batch, b).integers(0, high, size=stop - start)
    return out


def blocked_uniform(seed, purpose, batch, n):
    out = np.empty(n)
    for b, start in enumerate(range(0, n, BLOCK)):
        stop = min(start + BLOCK, n)
        out[start:stop] = stream(seed, purpose, batch, b).random(stop - start)
    return out
