"""Acceptance checks, one verdict line per criterion.

Criteria 7 to 10 train six desk-scale models (three seeds, with and without
the intra-cue losses), each until train WER <= 5% or 200 epochs. Results
are cached under ``.acceptance_runs/`` (or ``$STMC_ACCEPTANCE_DIR``), keyed
by the run config and a digest of the package sources, so a rerun with
unchanged code only reads the cache. A cold run takes one to three hours on
one core.
"""
import functools
import hashlib
import itertools
import json
import os
import statistics
import time
from pathlib import Path

import numpy as np
import pytest

import stmc
from stmc.config import RunConfig
from stmc.seq import beam_search_decode, collapse, collapsed_distribution, ctc_brute_force, ctc_loss, greedy_decode
from stmc.seq.ctc import CTCError, min_frames
from stmc.seq.wer import edit_counts
from stmc.smc import SMC, SMCConfig, smc_forward
from stmc.tensor import Tensor, ops
from stmc.tmc import TMC, TMCConfig, tmc_forward
from stmc.train import build_model, corpus_from_config, evaluate, train
from stmc.verify import run_gradcheck_suite


def posteriors(rng, t_len, v, peak=2.0):
    z = rng.standard_normal((t_len, v)) * peak
    e = np.exp(z - z.max(1, keepdims=True))
    return e / e.sum(1, keepdims=True)


def neg_log_likelihood(y, target):
    return ctc_loss(Tensor(np.log(y)), target).item()


# -- 1. CTC against path enumeration ------------------------------------------------

def test_c01_ctc_oracle_equivalence(verdict):
    rng = np.random.default_rng(2024)
    t0 = time.time()
    worst, mismatched = 0.0, 0
    for _ in range(500):
        v = int(rng.integers(2, 5))
        t_len = int(rng.integers(1, 9))
        target = [int(x) for x in rng.integers(1, v, size=int(rng.integers(0, 4)))]
        y = posteriors(rng, t_len, v)
        p = ctc_brute_force(y, target)
        if t_len < min_frames(target):
            try:
                neg_log_likelihood(y, target)
                mismatched += 1
            except CTCError:
                pass
            mismatched += p != 0.0
            continue
        a, b = -neg_log_likelihood(y, target), np.log(p)
        worst = max(worst, abs(a - b) / max(abs(b), 1e-300))
    seconds = time.time() - t0
    verdict(1, worst <= 1e-6 and mismatched == 0 and seconds < 30,
            f"500 instances, max rel log error {worst:.2e}, inadmissible mismatches {mismatched}, {seconds:.1f}s")


# -- 2. probabilities over all label sequences sum to one ------------------------------

def test_c02_path_space_partition(verdict):
    rng = np.random.default_rng(7)
    worst, n = 0.0, 0
    for t_len in range(1, 7):
        for _ in range(20):
            y = posteriors(rng, t_len, 3)
            total = 0.0
            for length in range(t_len + 1):
                for target in itertools.product((1, 2), repeat=length):
                    if min_frames(target) <= t_len:
                        total += np.exp(-neg_log_likelihood(y, list(target)))
            worst = max(worst, abs(total - 1.0))
            n += 1
    verdict(2, worst <= 1e-9, f"{n} instances with |V|=3, T'<=6, max |sum - 1| = {worst:.2e}")


# -- 3. finite-difference gradient checks -------------------------------------------------

def test_c03_gradient_verification(verdict):
    t0 = time.time()
    reports = run_gradcheck_suite(seed=0)
    seconds = time.time() - t0
    failed = [r.name for r in reports if not r.passed or r.max_rel_error >= 1e-4]
    worst = max(r.max_rel_error for r in reports)
    verdict(3, not failed and seconds < 300,
            f"{len(reports)} checks incl. joint loss, worst rel {worst:.2e}, failed {failed}, {seconds:.1f}s")


# -- 4. soft-argmax --------------------------------------------------------------------------

def test_c04_soft_argmax_exactness(verdict):
    uniform_err = 0.0
    for h, w in [(2, 2), (5, 7), (24, 24), (56, 56), (3, 11)]:
        xy = ops.soft_argmax(Tensor(np.full((h, w), 1.0 / (h * w)))).data
        uniform_err = max(uniform_err, float(np.abs(xy - 0.5).max()))
    corners_ok = True
    for h, w in [(2, 2), (24, 24), (5, 9)]:
        first, last = np.zeros((h, w)), np.zeros((h, w))
        first[0, 0], last[-1, -1] = 1.0, 1.0
        corners_ok &= bool(np.array_equal(ops.soft_argmax(Tensor(first)).data, [0.0, 0.0]))
        corners_ok &= bool(np.array_equal(ops.soft_argmax(Tensor(last)).data, [1.0, 1.0]))
    rng = np.random.default_rng(11)
    shift_err = 0.0
    for _ in range(100):
        h, w = rng.integers(8, 30, size=2)
        sh, sw = rng.integers(1, h // 2), rng.integers(1, w // 2)
        r0, c0 = rng.integers(0, h - sh), rng.integers(0, w - sw)
        dr, dc = rng.integers(-r0, h - sh - r0 + 1), rng.integers(-c0, w - sw - c0 + 1)
        p = np.zeros((h, w))
        p[r0:r0 + sh, c0:c0 + sw] = rng.uniform(0.01, 1, (sh, sw))
        p /= p.sum()
        q = np.roll(p, (dr, dc), axis=(0, 1))
        moved = ops.soft_argmax(Tensor(q)).data - ops.soft_argmax(Tensor(p)).data
        shift_err = max(shift_err, float(np.abs(moved - [dr / (h - 1), dc / (w - 1)]).max()))
    verdict(4, uniform_err <= 1e-9 and corners_ok and shift_err <= 1e-7,
            f"uniform err {uniform_err:.1e}, corners exact {corners_ok}, translation err {shift_err:.1e} on 100 maps")


# -- 5. beam search -------------------------------------------------------------------------

def test_c05_decoder_exactness(verdict):
    rng = np.random.default_rng(5)
    beam_bad = 0
    for _ in range(200):
        y = posteriors(rng, 5, 3, peak=1.5)
        dist = collapsed_distribution(y)
        best = max(dist, key=dist.get)
        beam_bad += tuple(beam_search_decode(y, beam_width=64)) != best
    greedy_bad = 0
    for _ in range(1000):
        y = posteriors(rng, int(rng.integers(1, 12)), int(rng.integers(2, 6)), peak=2.0)
        greedy_bad += beam_search_decode(y, beam_width=1) != greedy_decode(y)
    verdict(5, beam_bad == 0 and greedy_bad == 0,
            f"beam 64 vs exhaustive: {beam_bad}/200 differ; beam 1 vs greedy: {greedy_bad}/1000 differ")


# -- 6. WER dynamic programme against breadth-first edit search ---------------------------------

ALPHABET, MAX_LEN = 4, 6


def all_sequences():
    return [s for n in range(MAX_LEN + 1) for s in itertools.product(range(ALPHABET), repeat=n)]


def edit_graph(seqs):
    """Neighbour table of the one-edit graph on sequences of length <= MAX_LEN (padded with a dummy node)."""
    index = {s: i for i, s in enumerate(seqs)}
    dummy = len(seqs)
    rows = []
    for s in seqs:
        nbrs = set()
        for i in range(len(s)):
            nbrs.add(s[:i] + s[i + 1:])
            for a in range(ALPHABET):
                if a != s[i]:
                    nbrs.add(s[:i] + (a,) + s[i + 1:])
        if len(s) < MAX_LEN:
            for i in range(len(s) + 1):
                for a in range(ALPHABET):
                    nbrs.add(s[:i] + (a,) + s[i:])
        nbrs.discard(s)
        rows.append([index[t] for t in nbrs])
    width = max(len(r) for r in rows)
    return np.array([r + [dummy] * (width - len(r)) for r in rows]), index


def bfs_distances(sources, nbr, n_nodes):
    """Unit-cost edit distance from every source to every node, by frontier expansion."""
    dist = np.full((len(sources), n_nodes + 1), -1, dtype=np.int16)
    frontier = np.zeros((len(sources), n_nodes + 1), dtype=bool)
    frontier[np.arange(len(sources)), sources] = True
    d = 0
    while frontier.any():
        dist[frontier] = d
        reach = np.zeros_like(frontier)
        # the graph is undirected, so v is reached when any of its neighbours is on the frontier
        reach[:, :n_nodes] = frontier[:, nbr].any(axis=2)
        frontier = reach & (dist < 0)
        d += 1
    return dist[:, :n_nodes]


def is_canonical(seq):
    """First occurrences of symbols appear in the order 0, 1, 2, ..."""
    nxt = 0
    for s in seq:
        if s > nxt:
            return False
        nxt += s == nxt
    return True


def test_c06_wer_correctness(verdict):
    seqs = all_sequences()
    nbr, index = edit_graph(seqs)
    refs = [s for s in seqs if is_canonical(s)]
    dist = bfs_distances([index[r] for r in refs], nbr, len(seqs))
    # edit_counts only compares symbols for equality, so one pair per joint relabelling class covers all pairs
    checked = bad = 0
    for row, ref in enumerate(refs):
        for hyp in seqs:
            if not is_canonical(ref + hyp):
                continue
            s, dl, ins = edit_counts(ref, hyp)
            bad += (s + dl + ins != dist[row, index[hyp]]) or (dl - ins != len(ref) - len(hyp))
            checked += 1
    I, miss, you = 1, 2, 3
    example = collapse([I, I, 0, miss, 0, 0, you]) == [I, miss, you]
    verdict(6, bad == 0 and example,
            f"{checked} relabelling classes of pairs (len<=6, 4 symbols) vs BFS, {bad} mismatches; "
            f"collapse example {'ok' if example else 'wrong'}")


# -- 7 to 10. trained models ----------------------------------------------------------------------

RUN_ROOT = Path(os.environ.get("STMC_ACCEPTANCE_DIR", Path(__file__).resolve().parents[1] / ".acceptance_runs"))
SEEDS = (0, 1, 2)
BUDGET_SECONDS = 15 * 60


def acceptance_config(seed, alpha):
    return RunConfig(seed=seed, alpha=alpha, epochs=200, train_eval_every=5, stop_train_wer=0.05, out_dir="").validate()


@functools.lru_cache(maxsize=None)
def source_digest():
    h = hashlib.sha256()
    root = Path(stmc.__file__).parent
    for path in sorted(root.rglob("*.py")):
        h.update(str(path.relative_to(root)).encode())
        h.update(path.read_bytes())
    return h.hexdigest()


def report_dict(report):
    return {"wer": float(report.wer), "keypoint_error": report.keypoint_error,
            **{f"wer_{k}": float(v) for k, v in report.per_cue.items()}}


@functools.lru_cache(maxsize=None)
def acceptance_run(seed, alpha):
    """Train once per (seed, alpha) and code version; evaluate the final weights."""
    cfg = acceptance_config(seed, alpha)
    key = hashlib.sha256((cfg.to_text() + source_digest()).encode()).hexdigest()[:16]
    out = RUN_ROOT / f"seed{seed}-alpha{alpha}-{key}"
    result_path = out / "result.json"
    if result_path.exists():
        return json.loads(result_path.read_text())
    corpus = corpus_from_config(cfg)
    model = build_model(cfg)
    summary = train(cfg, out, corpus=corpus, model=model, quiet=True)
    splits = corpus[1]
    result = {
        "summary": {k: summary[k] for k in ("epochs_run", "stopped", "seconds")},
        "train_wer": summary["last"].get("train_wer"),
        "dev": report_dict(evaluate(model, splits["dev"], cfg.beam, per_cue=True)),
        "heldout": report_dict(evaluate(model, splits["dev"] + splits["test"], cfg.beam, per_cue=True)),
    }
    result_path.write_text(json.dumps(result, indent=1))
    return result


@pytest.mark.slow
def test_c07_end_to_end_overfit(verdict):
    r = acceptance_run(0, 0.6)
    s = r["summary"]
    ok = (s["stopped"] == "train_wer" and s["epochs_run"] <= 200 and s["seconds"] <= BUDGET_SECONDS
          and r["dev"]["wer"] <= 0.20)
    verdict(7, ok, f"train WER {r['train_wer']} after {s['epochs_run']} epochs in {s['seconds']:.0f}s "
                   f"({s['stopped']}), dev WER {r['dev']['wer']:.3f}")


@pytest.mark.slow
def test_c08_multi_cue_ordering(verdict):
    runs = [acceptance_run(seed, 0.6)["heldout"] for seed in SEEDS]
    med = {k: statistics.median(r[k] for r in runs) for k in ("wer", "wer_full", "wer_pose")}
    ok = med["wer"] <= med["wer_full"] <= med["wer_pose"]
    verdict(8, ok, f"median held-out WER inter {med['wer']:.3f} <= full {med['wer_full']:.3f} "
                   f"<= pose {med['wer_pose']:.3f} over seeds {SEEDS}")


@pytest.mark.slow
def test_c09_joint_loss_ablation(verdict):
    with_jl = statistics.median(acceptance_run(seed, 0.6)["dev"]["wer"] for seed in SEEDS)
    without = statistics.median(acceptance_run(seed, 0.0)["dev"]["wer"] for seed in SEEDS)
    verdict(9, without >= with_jl, f"median dev WER alpha=0: {without:.3f} >= alpha=0.6: {with_jl:.3f}")


@pytest.mark.slow
def test_c10_pose_branch(verdict):
    err = acceptance_run(0, 0.6)["dev"]["keypoint_error"]
    verdict(10, err <= 1.5, f"mean dev keypoint error {err:.3f} cells on the 24x24 heatmap")


# -- 11. shapes --------------------------------------------------------------------------------------

def test_c11_shape_contract(verdict):
    rng = np.random.default_rng(0)
    tmc_model = TMC(RunConfig().cue_widths, TMCConfig(width=128), rng)
    small = SMCConfig(input_size=32, backbone_channels=(2, 2, 3, 3, 3), crop_hand=3, crop_face=2,
                      cue_widths=(3, 4, 2, 2), head_channels=(2, 2))
    smc_model = SMC(small, rng)
    wrong = []
    for t_len in range(4, 65):
        cues = [Tensor(rng.standard_normal((t_len, w)).astype(np.float32)) for w in RunConfig().cue_widths]
        o, parts = tmc_forward(tmc_model, cues)
        expect = (t_len // 2) // 2
        if o.shape[0] != expect or any(p.shape[0] != expect for p in parts):
            wrong.append(("tmc", t_len))
        out = smc_forward(smc_model, rng.uniform(0, 1, (t_len, 3, 32, 32)).astype(np.float32))
        if any(c.shape[0] != t_len for c in out.cues.values()) or out.keypoints.shape[0] != t_len:
            wrong.append(("smc", t_len))
    verdict(11, not wrong, f"T in [4, 64]: mismatches {wrong}")
