"""Exhaustive reference for the knapsack selection, independent of the package."""
from itertools import product


def brute_force(groups, options, n_gpus, image_mask=None):
    """Best (recoverable, score) over every pick of one candidate per group and one image budget."""
    if image_mask is None:
        image_mask = (1 << n_gpus) - 1
    best = None
    for combo in product(*groups):
        used = set()
        clash = False
        for c in combo:
            if used & set(c.gpu_set):
                clash = True
                break
            used |= set(c.gpu_set)
        if clash:
            continue
        spare = sum(1 for g in range(n_gpus) if image_mask >> g & 1 and g not in used)
        # any budget up to the spare GPUs is allowed; options are not assumed monotone
        for g in range(min(spare, len(options) - 1) + 1):
            rec = sum(bool(c.recoverable) for c in combo) + options[g][0]
            score = sum(c.score for c in combo) + options[g][1]
            if best is None or (rec, score) > best:
                best = (rec, score)
    return best
