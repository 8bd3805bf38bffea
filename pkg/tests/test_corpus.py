import hashlib

from dedupacq.corpus import (gen_image, gen_overlapping_pair, gen_prefix_collision_pair,
                             shared_block_count)
from dedupacq.digest import canonical_digest


def block_digests(path, bs):
    data = path.read_bytes()
    return [hashlib.sha256(data[i:i + bs]).hexdigest() for i in range(0, len(data), bs)]


def test_gen_image_deterministic(tmp_path):
    a = gen_image(tmp_path / "a", seed=1, blocks=4).read_bytes()
    b = gen_image(tmp_path / "b", seed=1, blocks=4).read_bytes()
    c = gen_image(tmp_path / "c", seed=2, blocks=4).read_bytes()
    assert a == b and len(a) == 4 * 4096
    assert hashlib.sha256(a).digest() != hashlib.sha256(c).digest()


def test_gen_image_blocks_unique(tmp_path):
    p = gen_image(tmp_path / "a", seed=9, blocks=500, block_size=512)
    assert len(set(block_digests(p, 512))) == 500


def test_shared_count_uses_decimal_value():
    assert [shared_block_count(1000, f) for f in (0, 0.3, 0.5, 0.6, 0.7, 0.95, 1)] == \
        [0, 300, 500, 600, 700, 950, 1000]
    assert shared_block_count(100, 0.29) == 29


def test_overlap_zero_and_one(tmp_path):
    a, b, shared = gen_overlapping_pair(tmp_path, 1, 50, 0.0)
    assert shared == [] and not set(block_digests(a, 4096)) & set(block_digests(b, 4096))
    a, b, shared = gen_overlapping_pair(tmp_path, 2, 50, 1.0)
    assert a.read_bytes() == b.read_bytes() and len(shared) == 50


def test_overlap_sixty_percent(tmp_path):
    a, b, shared = gen_overlapping_pair(tmp_path, 3, 1000, 0.6, block_size=512)
    da, db = block_digests(a, 512), block_digests(b, 512)
    assert len(set(da) & set(db)) == 600
    assert [i for i in range(1000) if da[i] == db[i]] == shared


def test_prefix_collision_pair():
    a, b = gen_prefix_collision_pair(65536, 131072)
    assert canonical_digest(a, prefix_len=65536) == canonical_digest(b, prefix_len=65536)
    assert canonical_digest(a) != canonical_digest(b)
    assert all(x != y for x, y in zip(a[65536:], b[65536:]))
