"""Greedy and prefix beam-search decoding of CTC posteriors."""
from __future__ import annotations

import numpy as np

from .ctc import BLANK, NEG, collapse


def _as_log(posteriors, is_log: bool) -> np.ndarray:
    y = np.asarray(getattr(posteriors, "data", posteriors), dtype=np.float64)
    if is_log:
        return np.maximum(y, NEG)
    with np.errstate(divide="ignore"):
        return np.maximum(np.log(y), NEG)


def greedy_decode(posteriors, blank: int = BLANK) -> list[int]:
    """Collapse of the per-step argmax path (ties go to the lowest index)."""
    y = np.asarray(getattr(posteriors, "data", posteriors))
    return collapse(np.argmax(y, axis=1), blank)


def beam_search_decode(posteriors, beam_width: int = 20, blank: int = BLANK, is_log: bool = False) -> list[int]:
    """CTC prefix beam search in log space.

    Beam entries are (prefix, ending) pairs, where ending is 0 for "last
    emitted symbol was blank (or nothing yet)" and 1 for "last emitted symbol
    was prefix[-1]". Alignments reaching the same pair are merged by
    log-sum-exp; after each step the ``beam_width`` best pairs survive.
    At the last step the prefixes owning the ``beam_width`` best pairs are
    scored by their total probability (both endings) and the best is
    returned. Ties prefer the lexicographically smaller prefix.

    With ``beam_width=1`` this follows the greedy path exactly; with a beam
    no smaller than the number of reachable pairs it is exact.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    lp = _as_log(posteriors, is_log)
    t_len, v = lp.shape
    labels = [c for c in range(v) if c != blank]
    beams = {((), 0): 0.0}
    for t in range(t_len):
        row = lp[t]
        nxt: dict = {}

        def push(key, score):
            old = nxt.get(key)
            nxt[key] = score if old is None else float(np.logaddexp(old, score))

        for (prefix, ending), score in beams.items():
            push((prefix, 0), score + row[blank])
            for c in labels:
                if ending == 1 and prefix[-1] == c:
                    push((prefix, 1), score + row[c])
                else:
                    push((prefix + (c,), 1), score + row[c])
        ranked = sorted(nxt.items(), key=lambda kv: (-kv[1], kv[0][0], kv[0][1]))
        if t < t_len - 1:
            beams = dict(ranked[:beam_width])
        else:
            kept = []
            for (prefix, _), _score in ranked:
                if prefix not in kept:
                    kept.append(prefix)
                if len(kept) == beam_width:
                    break
            totals = []
            for prefix in kept:
                parts = [nxt[(prefix, e)] for e in (0, 1) if (prefix, e) in nxt]
                totals.append((-float(np.logaddexp.reduce(parts)), prefix))
            return list(min(totals)[1])
    return []
