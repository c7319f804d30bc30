"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` (the lines are repeated in the
terminal summary) or ``python tests/test_acceptance.py``.
"""
import itertools
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import full_sets, naive_attention  # noqa: E402
from valattn import (  # noqa: E402
    KernelSpec,
    LshConfig,
    RngStream,
    exact_attention,
    gaussian_matrix,
    lsh_attention,
    make_instance,
    make_plan,
    optimal_v_aware,
    optimal_v_aware_1,
    optimal_v_oblivious,
    orf_features,
    ranking_compare,
    sparse_attention,
    top_r_selection,
)
from valattn.bench.harness import RunConfig, run  # noqa: E402
from valattn.bench.synthetic import SyntheticSpec, generate_synthetic  # noqa: E402
from valattn.bench.tensorio import decode_tensors, encode_tensors  # noqa: E402
from valattn.kernels import attention_matrix, row_skew  # noqa: E402
from valattn.metrics import oblivious_error_profile, smallest_budget  # noqa: E402
from valattn.oracles import single_value_objectives  # noqa: E402

RESULTS = {}

THREE_KERNELS = [KernelSpec("exponential"), KernelSpec("polynomial", 2), KernelSpec("elu")]


def report(n, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def sq_err(a, b):
    return ((a - b) ** 2).sum(axis=1)


def test_criterion_1_counterexample():
    t0 = time.perf_counter()
    V = np.array([[1.0, 0, 0], [0, 2.0, 0], [0, 0, 3.0]])
    alpha = np.array([0.25, 0.35, 0.4])
    o = alpha @ V
    dist = ((V - o) ** 2).sum(axis=1)
    i_aware, _ = optimal_v_aware_1(o, V)
    top = top_r_selection(alpha, 1)
    rk = ranking_compare(o, alpha, V)
    elapsed = time.perf_counter() - t0
    ok = (
        abs(dist[2] - 3.7925) <= 1e-12
        and abs(dist[0] - 2.4925) <= 1e-12
        and round(dist[2], 2) == 3.79
        and round(dist[0], 2) == 2.49
        and i_aware == 0
        and top.tolist() == [2]
        and rk.by_alpha == rk.by_distance[::-1]
        and elapsed < 0.1
    )
    report(
        1,
        ok,
        f"d(v3)={dist[2]:.4f} d(v1)={dist[0]:.4f}, v-aware-1 picks v{i_aware + 1}, top-1 picks v{top[0] + 1}, "
        f"orders (a)={tuple(i + 1 for i in rk.by_alpha)} (d)={tuple(i + 1 for i in rk.by_distance)} [{elapsed * 1e3:.1f} ms]",
    )


def test_criterion_2_caratheodory_zero_error():
    t0 = time.perf_counter()
    spec = KernelSpec()
    worst = 0.0
    for i in range(100):
        d = (8, 16, 64)[i % 3]
        rng = np.random.default_rng(1000 + i)
        inst = make_instance(*(rng.standard_normal((512, d)) for _ in range(3)))
        E = exact_attention(spec, inst)
        A = optimal_v_aware(spec, inst, d + 1)
        worst = max(worst, float((sq_err(A, E) / (1e-8 * (1 + (E**2).sum(axis=1)))).max()))
    elapsed = time.perf_counter() - t0
    report(2, worst <= 1.0 and elapsed < 60, f"worst error / tolerance = {worst:.2e} over 100 instances [{elapsed:.1f} s]")


def test_criterion_3_dominance_and_monotonicity():
    t0 = time.perf_counter()
    failures = []
    for i in range(50):
        rng = np.random.default_rng(2000 + i)
        d = int(rng.integers(1, 5))
        L = int(rng.integers(d + 2, 13))
        spec = THREE_KERNELS[i % 3]
        inst = make_instance(*(rng.standard_normal((L, d)) for _ in range(3)), causal=bool(i % 2))
        E = exact_attention(spec, inst)
        prev = None
        for r in sorted({1, 2, 3, d + 1}):
            aware = sq_err(optimal_v_aware(spec, inst, r), E)
            obl = sq_err(optimal_v_oblivious(spec, inst, r), E)
            if np.any(aware > obl + 1e-9):
                failures.append((i, r, "dominance"))
            if prev is not None and np.any(aware > prev + 1e-9):
                failures.append((i, r, "monotonicity"))
            prev = aware
        mask = inst.allowed_mask() if inst.causal else None
        alpha, _ = attention_matrix(spec, inst.Q, inst.K, mask)
        for t in range(L):
            allowed = inst.allowed(t)
            scan = optimal_v_aware_1(E[t], inst.V, allowed)[0]
            by_obj = int(allowed[np.argmin(single_value_objectives(alpha[t], inst.V)[allowed])])
            if scan != by_obj:
                failures.append((i, t, "objective"))
    elapsed = time.perf_counter() - t0
    report(3, not failures and elapsed < 30, f"{len(failures)} violations over 50 instances {failures[:3]} [{elapsed:.1f} s]")


def test_criterion_4_engine_vs_naive():
    t0 = time.perf_counter()
    worst_exact = worst_sparse = worst_full = 0.0
    for i in range(100):
        rng = np.random.default_rng(3000 + i)
        spec = THREE_KERNELS[i % 3]
        L = int(rng.integers(1, 65))
        d = int(rng.integers(1, 9))
        causal = bool(i % 2)
        inst = make_instance(*(rng.standard_normal((L, d)) for _ in range(3)), causal=causal)
        sets = full_sets(L, causal)
        ref = naive_attention(spec, inst.Q, inst.K, inst.V, sets)
        E = exact_attention(spec, inst)
        worst_exact = max(worst_exact, float(np.abs(E - ref).max()))
        full = sparse_attention(spec, inst, make_plan(sets, L, causal))
        worst_full = max(worst_full, float(np.abs(full - E).max()))
        sub = [sorted(rng.choice(len(s), size=rng.integers(1, len(s) + 1), replace=False)) for s in sets]
        S = sparse_attention(spec, inst, make_plan(sub, L, causal))
        worst_sparse = max(worst_sparse, float(np.abs(S - naive_attention(spec, inst.Q, inst.K, inst.V, sub)).max()))
    elapsed = time.perf_counter() - t0
    ok = worst_exact <= 1e-10 and worst_sparse <= 1e-10 and worst_full <= 1e-12
    report(
        4,
        ok,
        f"max |exact-naive|={worst_exact:.1e}, |sparse-naive|={worst_sparse:.1e}, |full-exact|={worst_full:.1e} [{elapsed:.1f} s]",
    )


def _orf_estimate(R, q, k):
    return float(orf_features(R, q) @ orf_features(R, k))


def test_criterion_5_orf_unbiased():
    t0 = time.perf_counter()
    d = 4
    q = np.array([1.0, 0.0, 0.0, 0.0])
    k = np.array([0.5, math.sqrt(0.75), 0.0, 0.0])
    target = math.exp(0.5)
    rel = []
    ratios = []
    for seed in range(10):
        R = gaussian_matrix(RngStream(seed, (5, 0)), 100_000, d)
        rel.append(abs(_orf_estimate(R, q, k) / target - 1))
        errs = []
        for F in (1000, 4000):
            e = [abs(_orf_estimate(gaussian_matrix(RngStream(seed, (F, t)), F, d), q, k) - target) for t in range(100)]
            errs.append(np.mean(e))
        ratios.append(errs[0] / errs[1])
    med = float(np.median(ratios))
    elapsed = time.perf_counter() - t0
    ok = max(rel) <= 0.05 and 1.5 <= med <= 3.5 and elapsed < 10
    report(5, ok, f"max relative bias over 10 seeds {max(rel):.3%}, median error ratio at 4x samples {med:.2f} [{elapsed:.1f} s]")


def test_criterion_6_lsh():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6000)
    worst = 0.0
    for L in (8, 32, 64):
        inst = make_instance(*(rng.standard_normal((L, 8)) for _ in range(3)))
        out = lsh_attention(inst, LshConfig(r=2 * L, rounds=1, seed=L))
        worst = max(worst, float(np.abs(out - exact_attention(KernelSpec(), inst)).max()))
    wins = 0
    for seed in range(10):
        inst = generate_synthetic(SyntheticSpec(256, 16, qk_mode="clustered", seed=seed))
        E = exact_attention(KernelSpec(), inst)
        m1 = sq_err(lsh_attention(inst, LshConfig(r=32, rounds=1, seed=seed)), E).mean()
        m16 = sq_err(lsh_attention(inst, LshConfig(r=32, rounds=16, seed=seed)), E).mean()
        wins += m16 <= m1
    elapsed = time.perf_counter() - t0
    report(6, worst <= 1e-9 and wins >= 9, f"single-chunk max deviation {worst:.1e}; 16 rounds <= 1 round on {wins}/10 seeds [{elapsed:.1f} s]")


def test_criterion_7_kernel_skewness():
    t0 = time.perf_counter()
    wins = 0
    budgets = []
    for seed in range(20):
        inst = generate_synthetic(SyntheticSpec(256, 16, v_mode="heavy_tailed", seed=seed))
        r_poly = smallest_budget(oblivious_error_profile(KernelSpec("polynomial", 2), inst)[1], 0.05)
        r_exp = smallest_budget(oblivious_error_profile(KernelSpec(), inst)[1], 0.05)
        budgets.append((r_poly, r_exp))
        wins += r_poly > r_exp
    inst = generate_synthetic(SyntheticSpec(256, 16, seed=0))
    alpha, _ = attention_matrix(KernelSpec("polynomial", 0), inst.Q, inst.K)
    ent = row_skew(alpha)[0]
    ent_dev = float(np.abs(ent - math.log(256)).max())
    elapsed = time.perf_counter() - t0
    ok = wins >= 16 and ent_dev <= 1e-12 and np.all(alpha == 1 / 256)
    report(
        7,
        ok,
        f"poly-2 needs larger r on {wins}/20 seeds (first budgets {budgets[:3]}); degree-0 entropy deviation {ent_dev:.1e} [{elapsed:.1f} s]",
    )


def test_criterion_8_unbounded_gap():
    alpha = np.array([0.25, 0.35, 0.4])
    gaps = []
    for s in (1, 10, 100):
        V = np.array([[1.0, 0, 0], [0, 2.0, 0], [0, 0, 3.0 * s]])
        o = alpha @ V
        obl = V[top_r_selection(alpha, 1)[0]]
        aware = optimal_v_aware_1(o, V)[1]
        gaps.append(float(((o - obl) ** 2).sum() - ((o - aware) ** 2).sum()))
    ok = all(b > a for a, b in itertools.pairwise(gaps)) and gaps[2] > 100 * gaps[0]
    report(8, ok, f"gaps at s=1,10,100: {gaps[0]:.4f}, {gaps[1]:.4f}, {gaps[2]:.4f}")


def test_criterion_9_determinism_and_format(tmp_path):
    t0 = time.perf_counter()
    cfg = RunConfig.from_dict(
        {
            "instance": {"synthetic": {"L": 32, "d": 4, "qk_mode": "clustered", "seed": 3}},
            "kernel": {"family": "exponential"},
            "approximators": [
                {"name": "optimal_v_oblivious"},
                {"name": "optimal_v_aware"},
                {"name": "sliding_window"},
                {"name": "lsh", "rounds": 4},
                {"name": "orf", "mode": "iid_gaussian"},
            ],
            "r": [2, 4, 8],
            "seed": 13,
        }
    )
    outs = [run(cfg, out_dir=tmp_path / f"t{n}_{k}", threads=n) for k, n in enumerate((1, 1, 2, 4))]
    same = all(c.read_bytes() == outs[0][0].read_bytes() and j.read_bytes() == outs[0][1].read_bytes() for c, j in outs)

    rng = np.random.default_rng(9000)
    shapes = [(0,), (3, 0), (0, 0, 2), (), (1,), (5, 7), (2, 3, 4)]
    exact = True
    for trial in range(50):
        tensors = {}
        for j in range(int(rng.integers(0, 5))):
            shape = shapes[int(rng.integers(len(shapes)))]
            bits = rng.integers(0, 2**32, size=math.prod(shape), dtype=np.uint32)
            # arbitrary bit patterns, NaN payloads and infinities included
            tensors[f"t{trial}_{j}"] = bits.view(np.float32).reshape(shape)
        buf = encode_tensors(tensors)
        back = decode_tensors(buf)
        exact &= list(back) == list(tensors)
        exact &= all(back[k].shape == v.shape and back[k].tobytes() == v.tobytes() for k, v in tensors.items())
        exact &= encode_tensors(back) == buf
    elapsed = time.perf_counter() - t0
    report(9, same and exact, f"reports identical across 4 runs/threads: {same}; VAT1 bit-exact on 50 random sets: {exact} [{elapsed:.1f} s]")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
