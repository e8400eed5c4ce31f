"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
The verdict lines are collected and printed together in the terminal summary
(see conftest.py).
"""

import json
import sys
import time

import numpy as np
import pytest

from hivekv import cli
from hivekv.attention import AttentionModel, decode_step, dense_trace, project_stream
from hivekv.cache import BuzzConfig, KvEntry, ceil_div
from hivekv.estimator import check_limsup_bounds, entropy_probe, optimal_ratio, simulate_recursion
from hivekv.policies import Policy, interval_sample, local_max_sample
from hivekv.workload import (
    WORKLOAD_KINDS,
    Workload,
    generate_workload,
    match_budget,
    positional_coverage,
    run_experiment,
)
from oracles import dense_decode

VERDICTS = {}


def verdict(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    VERDICTS[number] = line
    print(line)
    assert passed, line


def test_criterion_01_oracle_equivalence():
    start = time.perf_counter()
    N, d = 256, 32
    worst = 0.0
    for seed in range(5):
        model = AttentionModel.seeded(d, seed)
        workload = Workload("uniform", N, d, seed)
        x = generate_workload(workload, model)
        reference, _ = dense_decode(model.w_q, model.w_k, model.w_v, x)
        q, k, v = project_stream(model, x)
        # the dense side of run_experiment against the standalone oracle ...
        inner = np.array([decode_step(model, k[: t + 1], v[: t + 1], q[t]).output for t in range(N)])
        gap = float(np.abs(inner - reference).max())
        for policy in (Policy.full(), Policy.buzz(BuzzConfig(4, 16, 5, N))):
            report = run_experiment(model, policy, workload, embeddings=x)
            # ... and the cached side against the dense side; the sum bounds the distance
            # between the cached outputs and the oracle
            worst = max(worst, gap + float(report.err_abs.max()))
            assert report.summary["evictions"] == 0
    elapsed = time.perf_counter() - start
    verdict(1, worst <= 1e-10 and elapsed < 10, f"max |O_hat - O_oracle| <= {worst:.2e} (tol 1e-10), {elapsed:.2f}s (< 10s)")


def test_criterion_02_container_bound():
    rng = np.random.default_rng(2)
    N, d = 2048, 8
    violations = 0
    runs = 0
    for seed in range(50):
        s = int(rng.integers(3, 10))
        k = int(rng.integers(0, 9))
        w = int(rng.integers(4, 129))
        T = int(rng.integers(s, 401))
        policy = Policy.buzz(BuzzConfig(k, w, s, T), ("buzz", "buzz_swapped_strides", "buzz_no_local_max")[seed % 3])
        model = AttentionModel.seeded(d, seed)
        report = run_experiment(model, policy, Workload(WORKLOAD_KINDS[seed % 3], N, d, seed))
        violations += int((report.occupancy > k + T + w).sum())
        runs += 1
    verdict(2, violations == 0, f"{runs} runs at N={N}, {violations} steps with occupancy > k + T + w")


def test_criterion_03_sampling_counts():
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    scores = rng.standard_normal(200)
    pool = [KvEntry(np.zeros(1), np.zeros(1), j, float(scores[j])) for j in range(200)]
    bad = 0
    for n in range(1, 201):
        entries = pool[:n]
        for s in range(1, 17):
            s_hat = (s + 1) // 2
            want_max = [c + int(np.argmax(scores[c : min(c + s, n)])) for c in range(0, n, s)]
            got_max = [e.position for e in local_max_sample(s, entries)]
            got_int = [e.position for e in interval_sample(s_hat, entries)]
            bad += len(got_max) != ceil_div(n, s) or got_max != want_max
            bad += len(got_int) != ceil_div(n, s_hat) or got_int != list(range(0, n, s_hat))
    elapsed = time.perf_counter() - start
    verdict(3, bad == 0 and elapsed < 1, f"3200 (n, s) pairs, {bad} mismatches, {elapsed:.2f}s (< 1s)")


def test_criterion_04_recursion_fixed_point():
    trace = simulate_recursion(5, 260, max_steps=20)
    target = 260 * 6 / 26
    fixed = trace.converged and abs(trace.converged_value - target) <= 2
    failures = [
        (s, T)
        for s in (3, 5, 7, 9)
        for T in (100, 260, 1000)
        if not check_limsup_bounds(simulate_recursion(s, T, variant="floor")).passed
    ]
    verdict(
        4,
        fixed and not failures,
        f"s=5 T=260 settles at {trace.cycle} after {len(trace.a)} terms (target {target:.0f} +/- 2); "
        f"floor bound failures {failures}",
    )


def test_criterion_05_ratio_function():
    odd, even = optimal_ratio(5).ratio, optimal_ratio(4).ratio
    verdict(5, abs(odd - 4.33) <= 0.01 and even == 3, f"optimal_ratio(5) = {odd:.4f}, optimal_ratio(4) = {even}")


def test_criterion_06_structure_preservation():
    N, d = 1024, 64
    buzz = match_budget("buzz", 25, N)
    local = match_budget("local_window", 25, N)
    cfg = buzz.config
    gated = retained = local_kept = survived = 0
    empty_deciles = []
    for seed in range(50):
        # the spike must pass through at least one eviction while in the buffer
        spike = int(np.random.default_rng([seed, 6]).integers(cfg.k + cfg.w, N - cfg.w - cfg.T))
        model = AttentionModel.seeded(d, seed)
        workload = Workload("middle_spike", N, d, seed, spike_position=spike)
        x = generate_workload(workload, model, cfg.k, cfg.w)
        _, dense_weights = dense_trace(model, x)
        report = run_experiment(model, buzz, workload, embeddings=x)
        event = next(e for e in report.evictions if spike in e.buffer_positions)
        i = event.buffer_positions.index(spike)
        chunk = event.buffer_positions[i - i % cfg.s : i - i % cfg.s + cfg.s]
        dense_scores = dense_weights[: event.step + 1].sum(axis=0)
        if int(np.argmax(dense_scores[chunk])) == chunk.index(spike):
            gated += 1
            retained += spike in event.kept_positions
        survived += spike in report.kept_positions
        local_kept += spike in run_experiment(model, local, workload, embeddings=x).kept_positions
        hist = positional_coverage(report.kept_positions, N)
        empty_deciles.append(sum(h == 0 for h in hist))
    covered = sum(e == 0 for e in empty_deciles)
    passed = gated > 0 and retained == gated and local_kept == 0 and covered == 50
    verdict(
        6,
        passed,
        f"buzz (k={cfg.k} w={cfg.w} T={cfg.T}) keeps the spike at its buffer eviction in {retained}/{gated} "
        f"gated runs (spike still cached at the end in {survived}/50); local_window (w={local.w}) "
        f"{local_kept}/50; all 10 deciles nonempty in {covered}/50 runs "
        f"(empty deciles per run: min {min(empty_deciles)}, max {max(empty_deciles)})",
    )


def spike_for(seed, k, w, N):
    return int(np.random.default_rng([seed, 11]).integers(k + w, N - w))


def mean_errors(budget, kinds, workload_kind, N=1024, d=64, seeds=range(20)):
    policies = {kind: match_budget(kind, budget, N) for kind in kinds}
    widest = max(p.w for p in policies.values())
    errors = {kind: [] for kind in kinds}
    for seed in seeds:
        model = AttentionModel.seeded(d, seed)
        spike = spike_for(seed, 4, widest, N) if workload_kind == "middle_spike" else None
        workload = Workload(workload_kind, N, d, seed, spike_position=spike)
        x = generate_workload(workload, model)
        for kind, policy in policies.items():
            errors[kind].append(run_experiment(model, policy, workload, embeddings=x).summary["mean_rel_err"])
    return {kind: float(np.mean(v)) for kind, v in errors.items()}


def test_criterion_07_quality_ordering():
    rows = []
    ok = True
    for kind in WORKLOAD_KINDS:
        e = mean_errors(40, ("buzz", "sink_window", "local_window"), kind)
        ok &= e["buzz"] <= e["sink_window"] <= e["local_window"] and e["buzz"] <= e["local_window"]
        rows.append(f"{kind}: buzz {e['buzz']:.4f} sink_window {e['sink_window']:.4f} local_window {e['local_window']:.4f}")
    verdict(7, ok, "40% budget, 20 seeds; " + "; ".join(rows))


def test_criterion_08_linear_eviction_cost():
    config = BuzzConfig(4, 64, 5, 260)
    counts = {}
    for N in (4096, 8192):
        model = AttentionModel.seeded(8, 8)
        counts[N] = run_experiment(model, Policy.buzz(config), Workload("uniform", N, 8, 8)).summary["comparisons"]
    ratio = counts[8192] / counts[4096]
    verdict(8, ratio <= 2.2, f"comparisons {counts[4096]} (N=4096) -> {counts[8192]} (N=8192), ratio {ratio:.3f} (<= 2.2)")


def test_criterion_09_logn_coincidence():
    d = 32
    plain = AttentionModel.seeded(d, 9)
    scaled = AttentionModel(plain.w_q, plain.w_k, plain.w_v, logn_enabled=True, logn_base=512)
    rng = np.random.default_rng(9)
    keys, values, q = rng.standard_normal((512, d)), rng.standard_normal((512, d)), rng.standard_normal(d)
    gap = float(np.abs(decode_step(plain, keys, values, q).weights - decode_step(scaled, keys, values, q).weights).max())
    verdict(9, gap <= 1e-12, f"n=512, max |A_logn - A_std| = {gap:.2e} (tol 1e-12)")


def test_criterion_10_entropy_drift():
    grid = [64 * 2**i for i in range(8)]
    probe = entropy_probe(grid, seed=10, trials=100)
    const, logn = probe.drift("constant"), probe.drift("logn")
    verdict(10, logn < const, f"n in {grid[0]}..{grid[-1]}, 100 trials: drift logn {logn:.4f} < constant {const:.4f}")


def test_criterion_11_ablation_direction():
    e = mean_errors(20, ("buzz", "buzz_no_local_max", "buzz_swapped_strides"), "middle_spike")
    ok = e["buzz"] <= e["buzz_no_local_max"] and e["buzz"] <= e["buzz_swapped_strides"]
    verdict(
        11,
        ok,
        f"20% budget middle_spike, 20 seeds: buzz {e['buzz']:.4f}, no_local_max {e['buzz_no_local_max']:.4f}, "
        f"swapped_strides {e['buzz_swapped_strides']:.4f}",
    )


def test_criterion_12_determinism(tmp_path):
    cases = [
        ["--policy", "buzz", "--workload", "middle_spike", "--seed", "12"],
        ["--policy", "buzz_no_local_max", "--workload", "skewed_decay", "--seed", "3"],
        ["--policy", "heavy_hitter_topk", "--workload", "uniform", "--seed", "7", "--budget", "60"],
        ["--policy", "buzz", "--prompt-len", "200", "--logn", "--seed", "4"],
    ]
    identical = 0
    for i, extra in enumerate(cases):
        path = tmp_path / f"r{i}.json"
        assert cli.main(["run", "--n", "400", "--d", "16", "--w", "16", "-o", str(path), *extra]) == 0
        doc = json.loads(path.read_text())
        again = json.loads(cli.run_from_config(cli.resolve(doc["config"], {})).to_json())
        identical += json.dumps(again["per_step"], sort_keys=True) == json.dumps(doc["per_step"], sort_keys=True)
    verdict(12, identical == len(cases), f"{identical}/{len(cases)} reports regenerate with byte-identical per_step")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
