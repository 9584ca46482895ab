"""Stable seed derivation for nested experiment components.

Every randomized stage (splits, fits, fold draws) gets its seed from
`derive_seed` so that results are reproducible bit-for-bit from a single
global seed, independent of execution order or worker count.
"""

import hashlib


def derive_seed(*parts) -> int:
    """Map an arbitrary tuple of labels to a stable 63-bit seed."""
    data = "\x1f".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.sha256(data).digest()
    return int.from_bytes(digest[:8], "big") >> 1
