import hashlib


def derive_seed(master, *labels) -> int:
    """Stable child seed for a labelled stage, e.g. ``derive_seed(7, "split", 2)``."""
    key = ":".join([str(int(master))] + [str(x) for x in labels]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") & ((1 << 63) - 1)
