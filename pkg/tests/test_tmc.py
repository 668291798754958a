import numpy as np
import pytest

from stmc.tensor import ShapeError, Tensor, backward, ops
from stmc.tmc import TMC, CuePartitionedSequence, TMCBlock, TMCConfig, init_sequences, output_length, tmc_forward

WIDTHS = (8, 8, 8, 8)


def cue_inputs(t_len, widths=WIDTHS, seed=0, grad=False):
    rng = np.random.default_rng(seed)
    return [Tensor(rng.standard_normal((t_len, w)), requires_grad=grad) for w in widths]


def model(widths=WIDTHS, seed=0, **kw):
    cfg = TMCConfig(**{"width": 16, **kw})
    return TMC(widths, cfg, np.random.default_rng(seed)).astype(np.float64)


def test_init_sequences():
    o, f = init_sequences(cue_inputs(5))
    assert o.shape == (5, 32)
    assert f.segments == ((0, 8), (8, 8), (16, 8), (24, 8))
    assert np.array_equal(o.data, f.values.data)
    o1, f1 = init_sequences(cue_inputs(1))
    assert o1.shape == (1, 32)
    with pytest.raises(ShapeError):
        init_sequences([Tensor(np.zeros((5, 8))), Tensor(np.zeros((4, 8)))])


def test_partitioned_sequence_validates_segments():
    with pytest.raises(ShapeError):
        CuePartitionedSequence(Tensor(np.zeros((3, 10))), ((0, 4), (5, 5)))
    with pytest.raises(ShapeError):
        CuePartitionedSequence(Tensor(np.zeros((3, 10))), ((0, 4), (4, 4)))


def test_config_validation():
    with pytest.raises(ShapeError):
        TMCConfig(kernel=4).validate()
    with pytest.raises(ShapeError):
        TMCConfig(width=130).validate()
    assert TMCConfig().min_frames == 4


def block(widths=WIDTHS, width=128, seed=0):
    cfg = TMCConfig(width=width)
    return TMCBlock(widths, sum(widths), cfg, np.random.default_rng(seed)).astype(np.float64)


def test_intra_path_widths_and_zero_input():
    b = block()
    _, f = init_sequences(cue_inputs(6))
    out = b.intra_cue_path(f)
    assert out.widths == (32, 32, 32, 32)
    _, z = init_sequences([Tensor(np.zeros((6, 8))) for _ in range(4)])
    assert np.array_equal(b.intra_cue_path(z).values.data, np.zeros((6, 128)))


def test_intra_path_isolates_cues():
    b = block()
    base = cue_inputs(9)
    _, f = init_sequences(base)
    ref = b.intra_cue_path(f).parts()
    for m in range(4):
        pert = [Tensor(x.data + (5.0 if i == m else 0.0)) for i, x in enumerate(base)]
        _, fp = init_sequences(pert)
        out = b.intra_cue_path(fp).parts()
        for n in range(4):
            if n != m:
                assert np.array_equal(out[n].data, ref[n].data)
        assert not np.array_equal(out[m].data, ref[m].data)


def test_inter_path_structure():
    b = block()
    o, f = init_sequences(cue_inputs(7))
    fc = b.intra_cue_path(f)
    out = b.inter_cue_path(o, fc)
    assert out.shape == (7, 128)
    b.inter_temporal.weight.data[:] = 0
    o2 = Tensor(np.random.default_rng(5).standard_normal(o.shape))
    assert np.array_equal(b.inter_cue_path(o, fc).data, b.inter_cue_path(o2, fc).data)


def test_inter_path_receptive_field():
    b = block()
    o, f = init_sequences(cue_inputs(11))
    fc = b.intra_cue_path(f)
    o_leaf = Tensor(o.data.copy(), requires_grad=True)
    f_leaf = Tensor(fc.values.data.copy(), requires_grad=True)
    out = b.inter_cue_path(o_leaf, CuePartitionedSequence(f_leaf, fc.segments))
    backward(ops.sum(ops.getitem(out, 5)))
    o_rows = np.flatnonzero(np.abs(o_leaf.grad).sum(1))
    f_rows = np.flatnonzero(np.abs(f_leaf.grad).sum(1))
    assert set(o_rows) <= {3, 4, 5, 6, 7} and len(o_rows) > 0
    assert set(f_rows) <= {5}


def test_block_halves_length_and_keeps_segments():
    b = block()
    o, f = init_sequences(cue_inputs(16))
    o2, f2 = b(o, f)
    assert o2.shape[0] == 8 and f2.values.shape[0] == 8
    assert f2.widths == (32, 32, 32, 32)
    o3, f3 = b(o, f)
    assert np.array_equal(o2.data, o3.data) and np.array_equal(f2.values.data, f3.values.data)
    with pytest.raises(ShapeError):
        b(*init_sequences(cue_inputs(1)))


@pytest.mark.parametrize("t_len,expect", [(16, 4), (17, 4), (4, 1), (7, 1), (31, 7)])
def test_tmc_output_length(t_len, expect):
    m = model()
    o, parts = tmc_forward(m, cue_inputs(t_len))
    assert output_length(t_len) == expect
    assert o.shape == (expect, 16)
    assert [p.shape for p in parts] == [(expect, 4)] * 4


def test_tmc_rejects_short_input():
    with pytest.raises(ShapeError):
        tmc_forward(model(), cue_inputs(3))
    with pytest.raises(ShapeError):
        tmc_forward(model(), cue_inputs(8, widths=(8, 8, 8, 4)))


def test_cue_separation_survives_both_blocks():
    rng = np.random.default_rng(11)
    for trial in range(5):
        m = model(seed=trial)
        base = cue_inputs(12, seed=trial)
        _, ref = m(base)
        for mcue in range(4):
            pert = [Tensor(x.data + (rng.standard_normal(x.shape) if i == mcue else 0.0)) for i, x in enumerate(base)]
            _, out = m(pert)
            for n in range(4):
                if n != mcue:
                    assert np.array_equal(out[n].data, ref[n].data)


def test_inter_path_mixes_every_cue():
    m = model(seed=3, width=32)
    inputs = cue_inputs(12, grad=True, seed=4)
    o, _ = m(inputs)
    backward(ops.sum(ops.mul(o, Tensor(np.random.default_rng(0).standard_normal(o.shape)))))
    for x in inputs:
        assert np.abs(x.grad).sum() > 0


def test_receptive_field_bound():
    m = model(seed=1)
    t_len = 40
    inputs = cue_inputs(t_len, grad=True)
    o, parts = m(inputs)
    backward(ops.sum(ops.getitem(o, 2)))
    # output step 2 covers input frames 8..11; two k=5 convs at strides 1 and 2 widen that by 2 + 2*2 frames per side
    rows = set()
    for x in inputs:
        rows |= set(np.flatnonzero(np.abs(x.grad).sum(1)).tolist())
    assert rows and min(rows) >= 8 - 6 and max(rows) <= 11 + 6
