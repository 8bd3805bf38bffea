"""Independent reference models used by several test modules."""

import hashlib
import random

from dedupacq.digest import ArtifactDigest, Category
from dedupacq.hashset import HashSet

SEVERITY = {"unknown": 0, "benign": 1, "incriminating": 2}


class IndexOracle:
    """Plain-dict replay of the index semantics."""

    def __init__(self):
        self.records = {}  # digest str -> [category str, refcount, first manifest]
        self.sets = {}     # name -> [category str, set of hex]

    def record(self, items):
        new = 0
        for d, mid in items:
            if d not in self.records:
                self.records[d] = ["unknown", 0, mid]
                new += 1
            self.records[d][1] += 1
        return new

    def flag(self, d, cat):
        rec = self.records.setdefault(d, ["unknown", 0, None])
        rec[0] = cat
        algo, mode, hexpart = d.split(":")
        if mode == "full":
            for name, (scat, hexes) in self.sets.items():
                if scat != cat:
                    hexes.discard(hexpart)
            self.sets.setdefault(cat, [cat, set()])[1].add(hexpart)

    def import_set(self, name, cat, hexes):
        if name in self.sets and self.sets[name][0] != cat:
            return False
        self.sets.setdefault(name, [cat, set()])[1].update(hexes)
        for h in hexes:
            rec = self.records.setdefault(f"sha256:full:{h}", ["unknown", 0, None])
            if rec[0] == "unknown" or SEVERITY[cat] > SEVERITY[rec[0]]:
                rec[0] = cat
        return True

    def check(self, d):
        rec = self.records.get(d)
        if rec is None:
            return (False, "unknown", False)
        return (True, rec[0], rec[1] > 0)


def digest_pool(n, seed=0, partial_share=0.2):
    rng = random.Random(seed)
    out = []
    for i in range(n):
        hexpart = hashlib.sha256(f"pool-{seed}-{i}".encode()).hexdigest()
        out.append(ArtifactDigest("sha256", hexpart, 65536 if rng.random() < partial_share else None))
    return out


def run_index_ops(index_factory, n_ops, seed=0, reopen_every=0):
    """Drive an index and the oracle with the same random ops; return divergences."""
    rng = random.Random(seed)
    pool = digest_pool(60, seed)
    full = [d for d in pool if not d.is_partial]
    partial = [d for d in pool if d.is_partial]
    oracle = IndexOracle()
    index = index_factory()
    divergences = []
    for step in range(n_ops):
        op = rng.random()
        if op < 0.3:
            items = [(rng.choice(pool), f"M{step}") for _ in range(rng.randint(0, 6))]
            got = index.record_batch(items)
            want = oracle.record([(str(d), m) for d, m in items])
            if got != want:
                divergences.append((step, "record", got, want))
        elif op < 0.45:
            d = rng.choice(pool)
            cat = rng.choice(["benign", "incriminating"])
            index.flag(d, cat, note=f"step {step}")
            oracle.flag(str(d), cat)
        elif op < 0.55:
            name = rng.choice(["nsrl", "known-bad", "local-os"])
            cat = rng.choice(["benign", "incriminating"])
            hexes = {d.hex for d in rng.sample(full, rng.randint(0, 5))}
            ok = oracle.import_set(name, cat, hexes)
            try:
                index.import_hashset(HashSet(name, Category(cat), "sha256", frozenset(hexes)))
                if not ok:
                    divergences.append((step, "import accepted", name))
            except ValueError:
                if ok:
                    divergences.append((step, "import rejected", name))
        else:
            group = rng.choice([full, partial]) or full
            batch = [rng.choice(group) for _ in range(rng.randint(0, 8))]
            got = [(r.present, r.category.value, r.stored) for r in index.check_batch(batch)]
            want = [oracle.check(str(d)) for d in batch]
            if got != want:
                divergences.append((step, "check", got, want))
        if reopen_every and step % reopen_every == reopen_every - 1:
            index.close()
            index = index_factory()
    # final full sweep, including hash-set contents
    for d in pool:
        r = index.check_batch([d])[0]
        if (r.present, r.category.value, r.stored) != oracle.check(str(d)):
            divergences.append(("final", str(d)))
    for name, (cat, hexes) in oracle.sets.items():
        hs = index.hashset(name)
        if hs.category.value != cat or set(hs.digests) != hexes:
            divergences.append(("set", name))
    index.close()
    return divergences
