"""Group knapsack over video candidates combined with the image budget options.

States are keyed by the exact set of GPUs the chosen video candidates use
(a bitmask), so two candidates with overlapping anchors can never both be
picked and the GPUs left for images are known exactly. The objective is the
lexicographic pair (recoverable requests, total score).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple


@dataclass(frozen=True)
class Selection:
    choices: Tuple[int, ...]  # index into each group
    image_budget: int
    recoverable: int
    score: float
    video_mask: int

    @property
    def value(self) -> Tuple[int, float]:
        return self.recoverable, self.score


def _mask(c) -> int:
    m = getattr(c, "mask", None)
    if m is not None:
        return m
    out = 0
    for g in c.gpu_set:
        out |= 1 << g
    return out


def _rank(c) -> int:
    return int(getattr(c, "action", 0))


def _option_value(opt) -> Tuple[int, float]:
    if isinstance(opt, tuple):
        return int(opt[0]), float(opt[1])
    return opt.satisfiable_count, opt.score


def dp_solve(groups: Sequence[Sequence], image_options: Sequence, n_gpus: int,
             image_mask: Optional[int] = None) -> Selection:
    """Best selection of one candidate per group plus one image option.

    ``image_options[g]`` is (count, score) or an ImageBudgetOption for a
    budget of g GPUs. Images get the GPUs of ``image_mask`` (default: all
    ``n_gpus``) that no selected video candidate uses.

    Ties on (recoverable, score) go to fewer video GPUs, then to the
    lexicographically smaller tuple of action ranks in group order.
    """
    if image_mask is None:
        image_mask = (1 << n_gpus) - 1
    opts = [_option_value(o) for o in image_options]
    if not opts:
        opts = [(0, 0.0)]
    last = len(opts) - 1

    # per layer: mask -> (rec, score, prev_mask, choice)
    layers: List[dict] = []
    cur = {0: (0, 0.0, None, None)}
    for group in groups:
        prepared = [(_mask(c), int(bool(c.recoverable)), float(c.score), k) for k, c in enumerate(group)]
        nxt = {}
        for mask, (rec, score, _, _) in cur.items():
            for cm, crec, cscore, k in prepared:
                if cm & mask:
                    continue
                nm = mask | cm
                r2 = rec + crec
                s2 = score + cscore
                old = nxt.get(nm)
                if old is None or r2 > old[0] or (r2 == old[0] and s2 > old[1]):
                    nxt[nm] = (r2, s2, mask, k)
                elif r2 == old[0] and s2 == old[1]:
                    if _path(layers, mask, k, groups) < _path(layers, old[2], old[3], groups):
                        nxt[nm] = (r2, s2, mask, k)
        layers.append(nxt)
        cur = nxt

    best = None
    best_key = None
    for mask, (rec, score, _, _) in cur.items():
        g = min(bin(image_mask & ~mask).count("1"), last)
        irec, iscore = opts[g]
        key = (rec + irec, score + iscore, -bin(mask).count("1"))
        if best_key is None or key > best_key or (key == best_key and _full_path(layers, mask, groups) < _full_path(layers, best, groups)):
            best, best_key = mask, key
    choices = _backtrack(layers, best)
    g = min(bin(image_mask & ~best).count("1"), last)
    return Selection(tuple(choices), g, best_key[0], best_key[1], best)


def _backtrack(layers, mask) -> List[int]:
    out = []
    for layer in reversed(layers):
        _, _, prev, k = layer[mask]
        out.append(k)
        mask = prev
    out.reverse()
    return out


def _path(layers, prev_mask, k, groups) -> Tuple[int, ...]:
    ks = _backtrack(layers, prev_mask) + [k]
    return tuple(_rank(groups[j][c]) for j, c in enumerate(ks))


def _full_path(layers, mask, groups) -> Tuple[int, ...]:
    ks = _backtrack(layers, mask)
    return tuple(_rank(groups[j][c]) for j, c in enumerate(ks))

