from __future__ import annotations

import hashlib


def derive_seed(master: int, label: str) -> int:
    """Derive a stable 63-bit seed for one pipeline stage from the master seed."""
    digest = hashlib.sha256(f"{int(master)}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & 0x7FFF_FFFF_FFFF_FFFF
