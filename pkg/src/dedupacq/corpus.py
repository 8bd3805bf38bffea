"""Synthetic evidence with known duplication structure.

Block contents come from SHAKE-256 keyed by ``(seed, stream, index)``, so
every block is reproducible and distinct blocks collide only with
negligible probability. Nothing here is zero-filled: measured savings
reflect the constructed overlap, not zero-block collapse.
"""

from __future__ import annotations

import hashlib
import math
import random
from fractions import Fraction
from pathlib import Path
from typing import Iterable, List, Tuple


def block_bytes(seed: int, stream: str, index: int, size: int) -> bytes:
    return hashlib.shake_256(f"dedupacq-corpus/{seed}/{stream}/{index}".encode()).digest(size)


def shared_block_count(blocks: int, overlap_fraction: float) -> int:
    """``floor(overlap_fraction * blocks)`` on the decimal value of the fraction."""
    if not 0 <= overlap_fraction <= 1:
        raise ValueError("overlap_fraction must be in [0, 1]")
    return math.floor(Fraction(str(overlap_fraction)) * blocks)


def gen_image(path, seed: int, blocks: int, block_size: int = 4096, tail: int = 0,
              stream: str = "img") -> Path:
    """Write ``blocks`` pseudorandom blocks plus ``tail`` extra bytes to ``path``."""
    path = Path(path)
    with open(path, "wb") as f:
        for i in range(blocks):
            f.write(block_bytes(seed, stream, i, block_size))
        if tail:
            f.write(block_bytes(seed, stream, blocks, tail))
    return path


def gen_overlapping_pair(directory, seed: int, blocks: int, overlap_fraction: float,
                         block_size: int = 4096) -> Tuple[Path, Path, List[int]]:
    """Images A and B sharing exactly ``floor(overlap_fraction*blocks)`` blocks.

    Shared blocks sit at identical offsets; their indices (sorted) are
    returned alongside the two paths. The dedup ratio of acquiring B after A
    is therefore ``len(shared) / blocks``.
    """
    directory = Path(directory)
    shared = sorted(random.Random(seed).sample(range(blocks), shared_block_count(blocks, overlap_fraction)))
    shared_set = set(shared)
    a, b = directory / f"pair-{seed}-a.img", directory / f"pair-{seed}-b.img"
    gen_image(a, seed, blocks, block_size, stream="pair-a")
    with open(b, "wb") as f:
        for i in range(blocks):
            f.write(block_bytes(seed, "pair-a" if i in shared_set else "pair-b", i, block_size))
    return a, b, shared


def gen_prefix_collision_pair(prefix_len: int, total_len: int, seed: int = 0) -> Tuple[bytes, bytes]:
    """Two byte strings equal on ``[0, prefix_len)`` and different at every later byte."""
    if total_len <= prefix_len:
        raise ValueError("total_len must exceed prefix_len")
    a = block_bytes(seed, "collision", 0, total_len)
    b = a[:prefix_len] + bytes(x ^ 0xFF for x in a[prefix_len:])
    return a, b


def mutate_blocks(path, seed: int, indices: Iterable[int], block_size: int, stream: str = "mut") -> None:
    """Overwrite the given blocks of an existing image with fresh content."""
    with open(path, "r+b") as f:
        for i in indices:
            f.seek(i * block_size)
            f.write(block_bytes(seed, stream, i, block_size))


def gen_tree(root, seed: int, files: int, max_size: int = 20000, duplicate_every: int = 0) -> Path:
    """A small nested directory tree plus one empty file.

    With ``duplicate_every`` set, every n-th file (n > 0) repeats file 0.
    """
    root = Path(root)
    rng = random.Random(seed)
    sizes = [rng.randint(1, max_size) for _ in range(files)]
    for i in range(files):
        sub = root / f"d{i % 3}" / f"e{i % 2}"
        sub.mkdir(parents=True, exist_ok=True)
        src = 0 if duplicate_every and i and i % duplicate_every == 0 else i
        (sub / f"f{i}.bin").write_bytes(block_bytes(seed, "tree", src, sizes[src]))
    (root / "empty.txt").write_bytes(b"")
    return root
