"""Flat key=value config text, config hashing, and named random streams."""

from __future__ import annotations

import hashlib

import numpy as np


def parse_kv(text: str) -> dict[str, str]:
    """Parse flat key=value lines; '#' starts a comment, blank lines skipped."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        out[key] = value.strip()
    return out


def format_kv(pairs: dict[str, str]) -> str:
    """Render pairs as sorted key=value lines (canonical form, hash-stable)."""
    return "".join(f"{k}={pairs[k]}\n" for k in sorted(pairs))


def config_hash(pairs: dict[str, str]) -> str:
    """Short hex digest of the canonical key=value text."""
    return hashlib.sha256(format_kv(pairs).encode("utf-8")).hexdigest()[:16]


def stream_seed(root_seed: int, *names: object) -> int:
    """Derive a u64 sub-seed from a root seed and a tuple of stream names."""
    h = hashlib.sha256()
    h.update(int(root_seed).to_bytes(8, "little", signed=False))
    for name in names:
        h.update(b"\x1f")
        h.update(str(name).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little")


def stream(root_seed: int, *names: object) -> np.random.Generator:
    """Independent generator for the named stream under one root seed."""
    return np.random.Generator(np.random.PCG64(stream_seed(root_seed, *names)))
