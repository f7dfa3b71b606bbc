import zlib

import numpy as np


def derive_seed(root: int, *tags) -> int:
    """Stable child seed for a named stage; every stage draws from one root seed."""
    key = [zlib.crc32(str(t).encode("utf-8")) for t in tags]
    return int(np.random.SeedSequence(int(root), spawn_key=key).generate_state(1, dtype=np.uint32)[0])
