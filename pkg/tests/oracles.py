"""Independent reference implementations used to freeze expected values."""

from functools import lru_cache

# backtrace preference rank, read from the end of the alignment
_RANK = {"m": 0, "s": 1, "d": 2, "i": 3}


def recursive_distance(a, b):
    """Plain recursive Levenshtein definition (memoized, no table backtrace)."""

    @lru_cache(maxsize=None)
    def go(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(
            go(i - 1, j - 1) + (a[i - 1] != b[j - 1]),
            go(i - 1, j) + 1,
            go(i, j - 1) + 1,
        )

    return go(len(a), len(b))


def all_alignments(ref, hyp):
    """Yield every alignment as an op list ordered from the END of the strings."""
    if not ref and not hyp:
        yield []
        return
    if ref and hyp:
        op = "m" if ref[-1] == hyp[-1] else "s"
        for rest in all_alignments(ref[:-1], hyp[:-1]):
            yield [op] + rest
    if ref:
        for rest in all_alignments(ref[:-1], hyp):
            yield ["d"] + rest
    if hyp:
        for rest in all_alignments(ref, hyp[:-1]):
            yield ["i"] + rest


def preferred_alignment_counts(ref, hyp):
    """Exhaustive search: minimal cost, then lexicographically preferred ops from the end."""
    best = None
    for ops in all_alignments(ref, hyp):
        cost = sum(op != "m" for op in ops)
        key = (cost, [_RANK[o] for o in ops])
        if best is None or key < best[0]:
            best = (key, ops)
    ops = best[1]
    return tuple(ops.count(k) for k in "sdim")


def brute_nearest(vectors, labels):
    """Nearest other label by cosine, via explicit double loop."""
    import math

    out = {}
    for a, va in zip(labels, vectors):
        na = math.sqrt(sum(x * x for x in va))
        best, best_sim = None, -2.0
        for b, vb in zip(labels, vectors):
            if a == b:
                continue
            nb = math.sqrt(sum(x * x for x in vb))
            sim = sum(x * y for x, y in zip(va, vb)) / (na * nb)
            if sim > best_sim:
                best, best_sim = b, sim
        out[a] = best
    return out


def random_pairs(rng, n, alphabet="abcd", max_len=10):
    for _ in range(n):
        la, lb = rng.integers(0, max_len + 1, size=2)
        a = "".join(rng.choice(list(alphabet), size=la)) if la else ""
        b = "".join(rng.choice(list(alphabet), size=lb)) if lb else ""
        yield a, b


__all__ = ["recursive_distance", "all_alignments", "preferred_alignment_counts", "brute_nearest", "random_pairs"]
