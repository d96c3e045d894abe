import hashlib
from typing import Union

import numpy as np

Name = Union[str, int]


def _stream_key(names) -> tuple:
    # md5 keeps the key stable across processes, unlike hash()
    key = "/".join(str(n) for n in names)
    digest = int(hashlib.md5(key.encode("utf-8")).hexdigest(), 16)
    return (digest % (2 ** 32), (digest >> 32) % (2 ** 32))


class SeedTree:
    """
    Root seed fanned out into named, independent Philox streams.

    generator("exploration") always yields the same stream for the same root
    seed, no matter which other streams were created before it.
    """

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.seed = int(seed)

    def seed_sequence(self, *names: Name) -> np.random.SeedSequence:
        return np.random.SeedSequence(entropy=self.seed, spawn_key=_stream_key(names))

    def generator(self, *names: Name) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.seed_sequence(*names)))

    def child_seed(self, *names: Name) -> int:
        return int(self.seed_sequence(*names).generate_state(1, dtype=np.uint32)[0])
