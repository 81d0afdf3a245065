"""Independent reference implementations used only by the tests."""
from functools import lru_cache


def optimal_matching(ref, det, tol):
    """Exhaustive assignment over detection subsets (crossing pairs allowed).

    Returns ``(tp, total_abs_error)`` maximising tp, then minimising error.
    """
    ref, det = list(ref), list(det)

    @lru_cache(maxsize=None)
    def best(i, used):
        if i == len(ref):
            return (0, 0)
        tp, neg = best(i + 1, used)
        out = (tp, neg)
        for j, d in enumerate(det):
            if not used >> j & 1 and abs(ref[i] - d) <= tol:
                tp, neg = best(i + 1, used | 1 << j)
                out = max(out, (tp + 1, neg - abs(ref[i] - d)))
        return out

    tp, neg = best(0, 0)
    return tp, -neg
