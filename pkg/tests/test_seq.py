import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stmc.seq import (BLSTMEncoder, CTCError, beam_search_decode, collapse, collapsed_distribution, ctc_brute_force,
                      ctc_forward_backward, ctc_loss, greedy_decode, joint_loss, smooth_l1_regression, wer)
from stmc.seq.wer import corpus_wer
from stmc.tensor import ShapeError, Tensor, backward, ops


def logp(y):
    return Tensor(np.log(np.asarray(y, dtype=np.float64)))


def random_posteriors(rng, t_len, v, peak=1.0):
    z = rng.standard_normal((t_len, v)) * peak
    e = np.exp(z - z.max(1, keepdims=True))
    return e / e.sum(1, keepdims=True)


# -- collapse ------------------------------------------------------------------

def test_collapse_examples():
    I, miss, you = 1, 2, 3
    assert collapse([I, I, 0, miss, 0, 0, you]) == [I, miss, you]
    assert collapse([0, 0, 0]) == []
    assert collapse([1, 0, 1]) == [1, 1]
    assert collapse([1, 1]) == [1]
    assert collapse([]) == []


# -- CTC loss ------------------------------------------------------------------

def test_ctc_uniform_two_steps():
    loss = ctc_loss(logp(np.full((2, 2), 0.5)), [1])
    assert np.isclose(loss.item(), -np.log(0.75), rtol=1e-12)
    assert np.isclose(ctc_brute_force(np.full((2, 2), 0.5), [1]), 0.75)


def test_ctc_empty_target_is_all_blank_path():
    y = random_posteriors(np.random.default_rng(0), 6, 4)
    assert np.isclose(ctc_loss(logp(y), []).item(), -np.log(y[:, 0]).sum(), rtol=1e-12)


def test_ctc_single_step():
    y = random_posteriors(np.random.default_rng(1), 1, 3)
    assert np.isclose(ctc_brute_force(y, [2]), y[0, 2])
    assert np.isclose(ctc_loss(logp(y), [2]).item(), -np.log(y[0, 2]))


def test_ctc_inadmissible_target_raises():
    y = np.full((3, 3), 1 / 3)
    with pytest.raises(CTCError, match="longer than representable"):
        ctc_loss(logp(y), [1, 1, 2])  # needs 4 steps because of the repeat
    with pytest.raises(CTCError, match="longer than representable"):
        ctc_loss(logp(y), [1, 2, 1, 2])
    ctc_loss(logp(np.full((4, 3), 1 / 3)), [1, 1, 2])
    with pytest.raises(CTCError):
        ctc_loss(logp(y), [0])


def test_brute_force_rejects_huge_instance():
    with pytest.raises(CTCError):
        ctc_brute_force(np.full((20, 5), 0.2), [1])


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 4), st.integers(1, 8), st.data())
def test_ctc_matches_brute_force(v, t_len, data):
    target = data.draw(st.lists(st.integers(1, v - 1), max_size=3))
    seed = data.draw(st.integers(0, 2**31))
    y = random_posteriors(np.random.default_rng(seed), t_len, v, peak=2.0)
    bf = ctc_brute_force(y, target)
    need = len(target) + sum(a == b for a, b in zip(target, target[1:]))
    if t_len < need:
        assert bf == 0.0
        with pytest.raises(CTCError):
            ctc_loss(logp(y), target)
        return
    loss = ctc_loss(logp(y), target).item()
    assert abs(-loss - np.log(bf)) <= 1e-6 * max(1.0, abs(np.log(bf)))


@pytest.mark.parametrize("v,t_len", [(2, 6), (3, 5), (3, 6)])
def test_path_space_partition(v, t_len):
    y = random_posteriors(np.random.default_rng(v * t_len), t_len, v)
    dist = collapsed_distribution(y)
    assert abs(sum(dist.values()) - 1.0) < 1e-9
    for seq, p in list(dist.items())[:20]:
        assert np.isclose(ctc_brute_force(y, list(seq)), p, rtol=1e-12)


def test_ctc_relabeling_covariance():
    rng = np.random.default_rng(4)
    y = random_posteriors(rng, 9, 5)
    target = [1, 3, 3, 4]
    perm = np.array([0, 3, 1, 4, 2])  # fixes the blank
    y2 = np.empty_like(y)
    y2[:, perm] = y
    a = ctc_loss(logp(y), target).item()
    b = ctc_loss(logp(y2), [int(perm[c]) for c in target]).item()
    assert np.isclose(a, b, rtol=1e-12)


def test_forward_backward_cut_consistency():
    rng = np.random.default_rng(5)
    y = random_posteriors(rng, 12, 4)
    target = [1, 2, 2, 3]
    la, lb, ll = ctc_forward_backward(np.log(y), target)
    ext = np.array([0, 1, 0, 2, 0, 2, 0, 3, 0])
    em = np.log(y)[:, ext]
    for t in range(12):
        cut = np.logaddexp.reduce(la[t] + lb[t] - em[t])
        assert abs(cut - ll) <= 1e-9 * abs(ll)


def test_ctc_gradient_matches_finite_differences():
    rng = np.random.default_rng(6)
    z = Tensor(rng.standard_normal((7, 4)), requires_grad=True)
    target = [1, 2, 2]
    backward(ctc_loss(ops.log_softmax(z), target))
    # analytic CTC gradient on logits: softmax minus label occupancy
    y = np.exp(ops.log_softmax(Tensor(z.data)).data)
    num = np.zeros_like(z.data)
    eps = 1e-6
    for idx in itertools.product(range(7), range(4)):
        zp, zm = z.data.copy(), z.data.copy()
        zp[idx] += eps
        zm[idx] -= eps
        num[idx] = (ctc_loss(ops.log_softmax(Tensor(zp)), target).item()
                    - ctc_loss(ops.log_softmax(Tensor(zm)), target).item()) / (2 * eps)
    assert np.allclose(z.grad, num, rtol=1e-4, atol=1e-8)
    assert np.allclose(z.grad.sum(1), 0.0, atol=1e-10)
    assert np.all(z.grad <= y + 1e-12)


# -- decoding ------------------------------------------------------------------

def test_greedy_examples():
    assert greedy_decode(np.full((5, 4), 0.25)) == []
    rows = np.eye(4)[[1, 1, 0, 2, 0, 0, 3]] * 0.97 + 0.01
    assert greedy_decode(rows) == [1, 2, 3]


def test_beam_one_equals_greedy_on_random_instances():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        t_len, v = rng.integers(1, 9), rng.integers(2, 5)
        y = random_posteriors(rng, t_len, v, peak=rng.uniform(0.3, 3.0))
        assert beam_search_decode(y, 1) == greedy_decode(y)


def test_beam_exact_with_large_beam():
    rng = np.random.default_rng(8)
    for _ in range(40):
        y = random_posteriors(rng, 5, 3, peak=1.5)
        dist = collapsed_distribution(y)
        best = max(dist.items(), key=lambda kv: (kv[1], tuple(-c for c in kv[0])))
        got = beam_search_decode(y, beam_width=200)
        assert np.isclose(dist[tuple(got)], best[1], rtol=1e-12)


def test_beam_on_peaked_posteriors():
    path = [2, 2, 0, 1, 1, 0, 2]
    y = np.full((7, 3), 0.004)
    y[np.arange(7), path] = 0.992
    assert beam_search_decode(y, 20) == collapse(path) == [2, 1, 2]


def test_beam_accepts_log_input_and_rejects_zero_width():
    y = random_posteriors(np.random.default_rng(9), 6, 4)
    assert beam_search_decode(np.log(y), 5, is_log=True) == beam_search_decode(y, 5)
    with pytest.raises(ValueError):
        beam_search_decode(y, 0)


# -- WER -----------------------------------------------------------------------

def brute_edit_distance(ref, hyp):
    """Smallest number of unit edits, by breadth-first search over edit scripts."""
    alphabet = set(ref) | set(hyp)
    frontier, seen, dist = {tuple(ref)}, {tuple(ref)}, 0
    while tuple(hyp) not in frontier:
        nxt = set()
        for s in frontier:
            for i in range(len(s) + 1):
                for a in alphabet:
                    nxt.add(s[:i] + (a,) + s[i:])
                    if i < len(s):
                        nxt.add(s[:i] + (a,) + s[i + 1:])
                if i < len(s):
                    nxt.add(s[:i] + s[i + 1:])
        frontier = {s for s in nxt if s not in seen and len(s) <= max(len(ref), len(hyp)) + 1}
        seen |= frontier
        dist += 1
    return dist


def test_wer_examples():
    assert float(wer([1, 2, 3], [1, 2, 3])) == 0
    r = wer(["MORGEN", "REGEN", "NORD"], ["MORGEN", "NORD"])
    assert (r.sub, r.dele, r.ins) == (0, 1, 0) and r.rate == pytest.approx(1 / 3)
    r = wer(["a"], ["b", "c"])
    assert (r.sub, r.dele, r.ins) == (1, 0, 1) and float(r) == 2.0
    with pytest.raises(ValueError):
        wer([], [1])


def test_corpus_wer_pools_counts():
    r = corpus_wer([([1, 2], [1]), ([3, 4, 5], [3, 4, 5, 6])])
    assert (r.errors, r.ref_len) == (2, 5)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=5), st.lists(st.integers(0, 3), max_size=5))
def test_wer_matches_brute_force_edit_scripts(ref, hyp):
    r = wer(ref, hyp)
    assert r.errors == brute_edit_distance(ref, hyp)
    assert r.sub + r.dele <= len(ref)
    assert len(ref) - r.dele + r.ins == len(hyp)


# -- regression and joint loss --------------------------------------------------

def test_smooth_l1_values():
    v = ops.smooth_l1(Tensor([0.5, 2.0, -1.0])).data
    assert np.allclose(v, [0.125, 1.5, 0.5])


def test_smooth_l1_regression_examples():
    truth = np.random.default_rng(0).uniform(0, 1, (3, 7, 2))
    assert smooth_l1_regression(Tensor(truth), truth).item() == 0.0
    pred = Tensor(np.array([[[0.51, 0.32]]]))
    got = smooth_l1_regression(pred, np.array([[[0.5, 0.3]]]), beta=30.0).item()
    assert np.isclose(got, (0.045 + 0.18) / 2, rtol=1e-9)
    out = smooth_l1_regression(pred, np.array([[[0.5, 0.3]]]), beta=30.0, beta_mode="outside").item()
    assert np.isclose(out, 30 * (0.5 * 0.01**2 + 0.5 * 0.02**2) / 2, rtol=1e-9)
    with pytest.raises(ShapeError):
        smooth_l1_regression(pred, np.zeros((1, 2, 2)))


def test_joint_loss_examples():
    intra = [Tensor(0.5) for _ in range(4)]
    assert np.isclose(joint_loss(Tensor(1.0), intra, Tensor(0.2), 0.6).item(), 2.4)
    assert np.isclose(joint_loss(Tensor(1.0), intra, Tensor(0.2), 0.0).item(), 1.2)
    zeros = [Tensor(0.0) for _ in range(4)]
    assert joint_loss(Tensor(1.0), zeros, Tensor(0.2), 0.6).item() == joint_loss(Tensor(1.0), zeros, Tensor(0.2), 3.0).item()
    with pytest.raises(ValueError):
        joint_loss(Tensor(1.0), intra, Tensor(0.2), -0.1)


# -- BLSTM ---------------------------------------------------------------------

def test_blstm_posteriors_are_row_stochastic():
    enc = BLSTMEncoder(5, 8, 4, np.random.default_rng(0))
    y = enc(Tensor(np.random.default_rng(1).standard_normal((6, 5)).astype(np.float32))).data
    assert y.shape == (6, 4)
    assert np.allclose(y.sum(1), 1.0, atol=1e-6) and np.all(y >= 0)


def test_blstm_single_step_sees_same_input_both_ways():
    enc = BLSTMEncoder(3, 6, 4, np.random.default_rng(0), shared=True)
    h = enc.hidden(Tensor(np.random.default_rng(1).standard_normal((1, 3)))).data
    assert np.allclose(h[:, :3], h[:, 3:])


def test_blstm_shared_cells_reverse_covariance():
    enc = BLSTMEncoder(3, 6, 4, np.random.default_rng(0), shared=True).astype(np.float64)
    w = enc.proj.weight.data
    w[:, 3:] = w[:, :3]  # projection symmetric in the two directions
    x = np.random.default_rng(2).standard_normal((7, 3))
    h, hr = enc.hidden(Tensor(x)).data, enc.hidden(Tensor(x[::-1].copy())).data
    assert np.allclose(hr[::-1], np.concatenate([h[:, 3:], h[:, :3]], 1), atol=1e-12)
    assert np.allclose(enc(Tensor(x[::-1].copy())).data[::-1], enc(Tensor(x)).data, atol=1e-12)


def test_blstm_input_norm_is_scale_invariant():
    enc = BLSTMEncoder(5, 8, 4, np.random.default_rng(0), input_norm=True).astype(np.float64)
    x = np.random.default_rng(1).standard_normal((6, 5))
    assert np.allclose(enc(Tensor(x * 50 + 3)).data, enc(Tensor(x)).data, atol=1e-9)


def test_blstm_rejects_empty_sequence():
    enc = BLSTMEncoder(3, 4, 2, np.random.default_rng(0))
    with pytest.raises(ShapeError):
        enc(Tensor(np.zeros((0, 3))))
