"""Counter-based random streams.

Draws are addressed by ``(root_seed, stream, bank, lane, sample index)``. The
Philox key carries the seed and the stream/bank tag; the counter carries the
lane and the block of ``BLOCK`` consecutive sample indices. Sample ``i`` reads
row ``i % BLOCK`` of its block, so its numbers never depend on which other
samples were requested, in what order, or on how many workers ran.
"""

import numpy as np

SCENARIO = 1
BANK = 2
PROBE = 3

LANE_X0 = 1
LANE_V = 2
LANE_W = 3
LANE_PERTURB = 4

BLOCK = 64

_MASK64 = (1 << 64) - 1


def generator(root_seed, stream, block, lane, bank=0):
    key = np.array([int(root_seed) & _MASK64,
                    ((stream & 0xFFFF) << 48) | (bank & ((1 << 48) - 1))], dtype=np.uint64)
    counter = np.array([0, 0, int(block) & _MASK64, lane], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def normals_batch(root_seed, stream, indices, lane, shape, bank=0):
    """Standard normals of shape (len(indices),) + shape."""
    shape = tuple(shape)
    size = int(np.prod(shape))
    indices = np.asarray(list(indices), dtype=np.int64)
    if np.any(indices < 0):
        raise ValueError("sample indices must be non-negative")
    out = np.empty((len(indices), size))
    blocks = indices // BLOCK
    r = 0
    while r < len(indices):
        b = blocks[r]
        gen = generator(root_seed, stream, b, lane, bank)
        first = indices[r] % BLOCK
        run = 1
        while r + run < len(indices) and indices[r + run] == indices[r] + run and run + first < BLOCK:
            run += 1
        if first == 0 and run == BLOCK:
            gen.standard_normal(out=out[r:r + BLOCK])
        else:
            draw = gen.standard_normal((first + run, size))
            out[r:r + run] = draw[first:]
        r += run
    return out.reshape((len(indices),) + shape)


def normals(root_seed, stream, index, lane, shape, bank=0):
    return normals_batch(root_seed, stream, [index], lane, shape, bank)[0]
