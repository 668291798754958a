"""Connectionist temporal classification: collapse, log-space forward-backward loss, brute-force oracle."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..tensor.core import Tensor

BLANK = 0
NEG = -1e30  # log-domain floor for "probability zero"


class CTCError(ValueError):
    pass


def collapse(path: Sequence[int], blank: int = BLANK) -> list[int]:
    """Merge adjacent duplicates, then drop blanks."""
    out = []
    prev = None
    for p in path:
        p = int(p)
        if p != prev and p != blank:
            out.append(p)
        prev = p
    return out


def min_frames(target: Sequence[int]) -> int:
    """Shortest alignment that can emit ``target``: one step per label plus a blank between repeats."""
    target = list(target)
    return len(target) + sum(1 for a, b in zip(target, target[1:]) if a == b)


def _extend(target: Sequence[int], blank: int):
    ext = np.full(2 * len(target) + 1, blank, dtype=np.int64)
    ext[1::2] = target
    skip = np.zeros(len(ext), dtype=bool)
    # s may jump from s-2 when ext[s] is a label different from ext[s-2]
    skip[3::2] = ext[3::2] != ext[1:-2:2]
    return ext, skip


def _lse3(a, b, c):
    m = np.maximum(np.maximum(a, b), c)
    return m + np.log(np.exp(a - m) + np.exp(b - m) + np.exp(c - m))


def ctc_forward_backward(log_probs: np.ndarray, target: Sequence[int], blank: int = BLANK):
    """Log-space forward/backward variables over the blank-interleaved target.

    Both ``log_alpha[t, s]`` and ``log_beta[t, s]`` include the emission at
    step ``t``. Returns ``(log_alpha, log_beta, log_likelihood)``.
    """
    lp = np.asarray(log_probs, dtype=np.float64)
    lp = np.maximum(lp, NEG)
    t_len = lp.shape[0]
    target = [int(v) for v in target]
    if any(v == blank for v in target):
        raise CTCError("target contains the blank symbol")
    if t_len < min_frames(target):
        raise CTCError(f"target longer than representable: needs {min_frames(target)} steps, have {t_len}")
    ext, skip = _extend(target, blank)
    s_len = len(ext)
    em = lp[:, ext]
    la = np.full((t_len, s_len), NEG)
    la[0, 0] = em[0, 0]
    if s_len > 1:
        la[0, 1] = em[0, 1]
    neg1 = np.full(1, NEG)
    neg2 = np.full(2, NEG)
    for t in range(1, t_len):
        prev = la[t - 1]
        one = np.concatenate([neg1, prev])[:s_len]
        two = np.where(skip, np.concatenate([neg2, prev])[:s_len], NEG)
        la[t] = np.maximum(_lse3(prev, one, two) + em[t], NEG)
    lb = np.full((t_len, s_len), NEG)
    lb[-1, -1] = em[-1, -1]
    if s_len > 1:
        lb[-1, -2] = em[-1, -2]
    skip_from = np.concatenate([skip, [False, False]])[2:]  # s -> s+2 allowed iff skip[s+2]
    for t in range(t_len - 2, -1, -1):
        nxt = lb[t + 1]
        one = np.concatenate([nxt, neg1])[1:]
        two = np.where(skip_from, np.concatenate([nxt, neg2])[2:], NEG)
        lb[t] = np.maximum(_lse3(nxt, one, two) + em[t], NEG)
    tail = la[-1, -1] if s_len == 1 else np.logaddexp(la[-1, -1], la[-1, -2])
    return la, lb, float(tail)


def ctc_loss(log_probs: Tensor, target: Sequence[int], blank: int = BLANK) -> Tensor:
    """``-ln p(target | input)`` for per-step log posteriors ``log_probs[T', |V|]``.

    The gradient with respect to ``log_probs`` is minus the per-step label
    occupancy; composed with :func:`~stmc.tensor.ops.log_softmax` this gives
    the usual ``softmax - occupancy`` gradient on the logits.
    """
    lp = log_probs.data
    la, lb, ll = ctc_forward_backward(lp, target, blank)
    ext, _ = _extend([int(v) for v in target], blank)
    out = np.asarray(-ll, dtype=lp.dtype)

    def bw(g):
        em = np.maximum(np.asarray(lp, dtype=np.float64), NEG)[:, ext]
        occ_s = np.exp(la + lb - em - ll)
        occ = np.zeros(lp.shape, dtype=np.float64)
        np.add.at(occ, (slice(None), ext), occ_s)
        return ((-float(g) * occ).astype(lp.dtype),)

    return Tensor.from_op(out, (log_probs,), bw, "ctc_loss")


# ---------------------------------------------------------------------------
# exhaustive oracle
# ---------------------------------------------------------------------------

def _all_paths(t_len: int, v: int, limit: int = 10**7) -> np.ndarray:
    if v ** t_len > limit:
        raise CTCError(f"brute force over {v}^{t_len} paths exceeds limit {limit}")
    return np.indices((v,) * t_len).reshape(t_len, -1).T


def _collapse_keys(paths: np.ndarray, v: int, blank: int) -> np.ndarray:
    """Encode each path's collapsed sequence as a base-``v`` integer (labels are nonzero digits)."""
    prev = np.concatenate([np.full((paths.shape[0], 1), -1), paths[:, :-1]], axis=1)
    keep = (paths != blank) & (paths != prev)
    pos = np.cumsum(keep, axis=1) - 1
    return np.where(keep, paths * (v ** np.maximum(pos, 0)), 0).sum(axis=1)


def _key(seq: Sequence[int], v: int) -> int:
    return int(sum(int(c) * v ** i for i, c in enumerate(seq)))


def _unkey(key: int, v: int) -> tuple:
    out = []
    while key:
        key, d = divmod(key, v)
        out.append(d)
    return tuple(out)


def _path_probs(posteriors: np.ndarray, paths: np.ndarray) -> np.ndarray:
    y = np.asarray(posteriors, dtype=np.float64)
    return np.prod(y[np.arange(y.shape[0])[None, :], paths], axis=1)


def ctc_brute_force(posteriors: np.ndarray, target: Sequence[int], blank: int = BLANK) -> float:
    """Sum of path probabilities over every alignment that collapses to ``target``."""
    if blank != 0:
        raise CTCError("brute force oracle assumes blank index 0")
    y = np.asarray(posteriors, dtype=np.float64)
    t_len, v = y.shape
    paths = _all_paths(t_len, v)
    keys = _collapse_keys(paths, v, blank)
    return float(_path_probs(y, paths)[keys == _key(target, v)].sum())


def collapsed_distribution(posteriors: np.ndarray, blank: int = BLANK) -> dict:
    """``{collapsed sequence: p(sequence | input)}`` over every reachable sequence."""
    if blank != 0:
        raise CTCError("brute force oracle assumes blank index 0")
    y = np.asarray(posteriors, dtype=np.float64)
    t_len, v = y.shape
    paths = _all_paths(t_len, v)
    keys = _collapse_keys(paths, v, blank)
    probs = _path_probs(y, paths)
    uniq, inv = np.unique(keys, return_inverse=True)
    sums = np.bincount(inv, weights=probs)
    return {_unkey(int(k), v): float(s) for k, s in zip(uniq, sums)}
