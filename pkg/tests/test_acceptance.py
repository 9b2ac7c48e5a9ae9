"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines as they complete. The noise sweep (criteria 5, 7, 8) trains thirty
models and takes a few minutes; everything else is fast.
"""

import csv
import json
import os
import time

import numpy as np
import pytest

from nem.channel import NoiseChannel
from nem.cli import main
from nem.datagen import CorpusSpec, default_catalog, generate
from nem.encoder import PARAM_NAMES, forward, save_params, soft_cross_entropy
from nem.evaluation import f1_score, q_trajectory
from nem.seeding import make_rng
from nem.training import (
    TrainConfig,
    bound_from_probs,
    e_step,
    train,
    train_nem,
)

from conftest import random_bag
from oracles import (
    exact_marginal,
    exact_posterior,
    fd_param_gradient,
    posterior_marginals,
)


def report(num: int, name: str, ok: bool, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[criterion {num:2d}] {name}: {status}{suffix}")
    assert ok, f"criterion {num} {name} failed{suffix}"


# ---------------------------------------------------------------------------
# shared sweep run (criteria 5, 7, 8)


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    wd = tmp_path_factory.mktemp("sweep")
    old = os.getcwd()
    os.chdir(wd)
    started = time.perf_counter()
    try:
        code = main(["sweep", "--seeds", "3"])
    finally:
        os.chdir(old)
    elapsed = time.perf_counter() - started
    assert code == 0, "sweep command failed"
    rows = []
    with open(wd / "out/report/sweep/sweep_runs.csv") as fh:
        for row in csv.DictReader(fh):
            rows.append(
                {
                    "pf": float(row["pf"]),
                    "mode": row["mode"],
                    "seed": int(row["seed"]),
                    "f1": float(row["f1"]),
                    "mean_prob_noisy": float(row["mean_prob_noisy"]),
                    "mean_prob_original": float(row["mean_prob_original"]),
                }
            )
    return {"dir": wd, "rows": rows, "elapsed": elapsed}


def _level_mean(rows, pf, mode, key):
    vals = [r[key] for r in rows if r["pf"] == pf and r["mode"] == mode]
    assert len(vals) == 3, f"expected 3 seeds at pf={pf}, mode={mode}"
    return float(np.mean(vals))


# ---------------------------------------------------------------------------


def test_criterion_1_posterior_oracle_equivalence():
    rng = np.random.default_rng(101)
    started = time.perf_counter()
    worst = 0.0
    for _ in range(500):
        n = int(rng.integers(1, 7))
        channel = NoiseChannel(rng.uniform(0.02, 0.98, n), rng.uniform(0.02, 0.98, n))
        prior = rng.uniform(0.02, 0.98, n)
        z = rng.integers(0, 2, n).astype(np.uint8)
        factorized = e_step(channel, prior, z)
        marginals = posterior_marginals(exact_posterior(channel, prior, z), n)
        worst = max(worst, float(np.max(np.abs(factorized - marginals))))
    elapsed = time.perf_counter() - started
    report(
        1,
        "posterior oracle equivalence",
        worst <= 1e-10 and elapsed < 10.0,
        f"max err {worst:.2e}, {elapsed:.1f}s",
    )


def test_criterion_2_bound_tightness_and_direction():
    rng = np.random.default_rng(102)
    worst_gap = 0.0
    worst_violation = -np.inf
    for _ in range(100):
        n_bags = int(rng.integers(1, 5))
        n = int(rng.integers(1, 7))
        channel = NoiseChannel(rng.uniform(0.05, 0.95, n), rng.uniform(0.05, 0.95, n))
        priors = rng.uniform(0.05, 0.95, (n_bags, n))
        Z = rng.integers(0, 2, (n_bags, n)).astype(np.uint8)
        q_star = np.stack([e_step(channel, priors[i], Z[i]) for i in range(n_bags)])
        bound_star = bound_from_probs(priors, q_star, channel, Z)
        log_marginal = float(
            sum(np.log(exact_marginal(channel, priors[i], Z[i])) for i in range(n_bags))
        )
        worst_gap = max(worst_gap, abs(bound_star - log_marginal))
        for _ in range(50):
            q_pert = np.clip(q_star + rng.normal(0, 0.2, q_star.shape), 0.0, 1.0)
            excess = bound_from_probs(priors, q_pert, channel, Z) - bound_star
            worst_violation = max(worst_violation, excess)
    ok = worst_gap <= 1e-9 and worst_violation <= 1e-9
    report(
        2,
        "bound tightness and direction",
        ok,
        f"tightness gap {worst_gap:.2e}, max excess {worst_violation:.2e}",
    )


def test_criterion_3_gradient_correctness():
    rng = np.random.default_rng(103)
    from nem.encoder import EncoderConfig, backward, init_params

    config = EncoderConfig(
        vocab_size=60,
        n_relations=5,
        word_dim=10,
        pos_dim=3,
        win=3,
        n_kernels=12,
        max_len=20,
        dropout=0.0,
    )
    params = init_params(config, make_rng(5, "init"), "accept")
    started = time.perf_counter()
    worst = 0.0
    for selector in ("mean", "max", "attention"):
        bag = random_bag(rng, config.vocab_size, 5, n_sentences=3, bag_id=selector)
        targets = rng.uniform(0.1, 0.9, size=5)
        grads = backward(params, bag, selector, targets)

        def loss_fn(p):
            return soft_cross_entropy(forward(p, bag, selector), targets)

        for name in PARAM_NAMES:
            arr = getattr(params, name)
            k = max(3, arr.size // 100)  # at least 1% of each tensor
            picks = rng.choice(arr.size, size=min(k, arr.size), replace=False)
            for flat in picks:
                fd = fd_param_gradient(loss_fn, params, name, int(flat), step=1e-5)
                an = grads[name].flat[int(flat)]
                denom = max(abs(fd), abs(an), 1e-6)
                worst = max(worst, abs(fd - an) / denom)
    elapsed = time.perf_counter() - started
    report(
        3,
        "gradient correctness (all selectors)",
        worst <= 1e-4 and elapsed < 60.0,
        f"max rel err {worst:.2e}, {elapsed:.1f}s",
    )


def test_criterion_4_em_monotonicity():
    spec = CorpusSpec(
        catalog=default_catalog(4),  # |R| = 5 including NA
        vocab_size=120,
        n_bags=200,
        regime="NSNL",
        corruption={"flip": 0.1},
        max_len=30,
        seed=41,
    )
    dataset = generate(spec)
    config = TrainConfig(
        selector="mean",
        delta=10,
        em_iters=10,
        batch_size=32,
        seed=4,
        channel=NoiseChannel.uniform(5, 0.1, 0.1),
        encoder=dict(word_dim=8, pos_dim=2, win=3, n_kernels=8, max_len=30, dropout=0.2),
        convergence_tol=0.0,
    )
    result = train_nem(dataset, config)
    drops = [
        rec["lower_bound"] - rec["lower_bound_pre_e"] for rec in result.trace[1:]
    ]
    ok = len(drops) == 10 and all(d >= -1e-9 for d in drops)
    report(4, "EM monotonicity across E-steps", ok, f"min E-step gain {min(drops):.2e}")


def test_criterion_5_noise_sweep_trend(sweep):
    rows = sweep["rows"]
    pf_levels = sorted({r["pf"] for r in rows})
    assert pf_levels == [0.02, 0.04, 0.06, 0.08, 0.1]
    gaps = {}
    floor_ok = True
    details = []
    for pf in pf_levels:
        f_base = _level_mean(rows, pf, "baseline", "f1")
        f_nem = _level_mean(rows, pf, "nem", "f1")
        gaps[pf] = f_nem - f_base
        floor_ok &= f_nem >= f_base - 0.5
        details.append(f"pf={pf:g}: {f_base:.1f}->{f_nem:.1f}")
    mean_gap = float(np.mean(list(gaps.values())))
    trend_ok = gaps[0.1] >= gaps[0.02] - 1.0
    time_ok = sweep["elapsed"] <= 30 * 60
    ok = floor_ok and mean_gap > 0 and trend_ok and time_ok
    report(
        5,
        "noise sweep F1 trend",
        ok,
        "; ".join(details) + f"; mean gap {mean_gap:+.2f}; {sweep['elapsed']:.0f}s",
    )


def test_criterion_6_f1_arithmetic():
    checks = [
        ((65.2, 30.0), 41.1),
        ((61.8, 34.8), 44.5),
        ((56.5, 28.9), 38.3),
    ]
    exact, within_tenth = [], []
    for (precision, recall), expected in checks:
        value = f1_score(precision, recall)
        exact.append(round(value, 1) == expected)
        within_tenth.append(abs(value - expected) <= 0.1)
    # the third published pair reproduces only to the table's print
    # resolution: recomputing from the rounded P/R gives 38.24
    ok = all(exact[:2]) and all(within_tenth)
    report(
        6,
        "F1 arithmetic against reference pairs",
        ok,
        f"values {[round(f1_score(p, r), 2) for (p, r), _ in checks]}",
    )


def test_criterion_7_q_trajectory_denoising(sweep):
    ok = True
    finals = []
    for seed in (7, 8, 9):
        trace = sweep["dir"] / f"out/report/sweep/trace_pf0.1_nem_seed{seed}.jsonl"
        series = q_trajectory(trace)
        ok &= series[0] == 1.0
        ok &= series[-1] < 0.7
        ok &= series[-1] < series[1]
        finals.append(round(float(series[-1]), 3))
    report(7, "posterior trajectory denoises injected labels", ok, f"final values {finals}")


def test_criterion_8_probability_gaps(sweep):
    rows = sweep["rows"]
    ok = True
    details = []
    for pf in (0.06, 0.08, 0.1):
        noisy_base = _level_mean(rows, pf, "baseline", "mean_prob_noisy")
        noisy_nem = _level_mean(rows, pf, "nem", "mean_prob_noisy")
        orig_base = _level_mean(rows, pf, "baseline", "mean_prob_original")
        orig_nem = _level_mean(rows, pf, "nem", "mean_prob_original")
        ok &= noisy_nem < noisy_base
        ok &= orig_nem >= orig_base - 0.02
        details.append(f"pf={pf:g}: noisy {noisy_base:.3f}->{noisy_nem:.3f}")
    report(8, "noisy-vs-original probability gaps", ok, "; ".join(details))


def test_criterion_9_noiseless_reduction(tmp_path):
    spec = CorpusSpec(
        catalog=default_catalog(5),
        vocab_size=130,
        n_bags=120,
        regime="NSNL",
        corruption=None,
        max_len=30,
        seed=91,
    )
    dataset = generate(spec)
    config = TrainConfig(
        selector="attention",
        delta=15,
        em_iters=3,
        batch_size=32,
        seed=9,
        channel=NoiseChannel.noiseless(6),
        encoder=dict(word_dim=8, pos_dim=2, win=3, n_kernels=8, max_len=30, dropout=0.5),
        convergence_tol=0.0,
    )
    paths = []
    for mode in ("nem", "baseline"):
        result = train(dataset, config, mode=mode)
        path = tmp_path / f"{mode}.ckpt"
        save_params(result.params, path, selector=config.selector)
        paths.append(path)
    identical = paths[0].read_bytes() == paths[1].read_bytes()
    report(9, "noiseless channel reduces to baseline", identical, "byte-identical checkpoints")


def test_criterion_10_command_determinism(tmp_path):
    shrink = [
        "--corpus.train_bags", "150",
        "--corpus.test_bags", "60",
        "--train.delta", "20",
        "--train.em_iters", "3",
    ]
    outputs = {}
    for run_dir in ("one", "two"):
        wd = tmp_path / run_dir
        wd.mkdir()
        old = os.getcwd()
        os.chdir(wd)
        try:
            assert main(["generate", *shrink]) == 0
            assert main(["train", "--mode", "nem", *shrink]) == 0
            assert main(["eval", *shrink]) == 0
            assert main(["predict", *shrink]) == 0
        finally:
            os.chdir(old)
        outputs[run_dir] = {
            rel: (wd / rel).read_bytes()
            for rel in (
                "data/train.jsonl",
                "data/test.jsonl",
                "data/stats.json",
                "out/model.ckpt",
                "out/trace.jsonl",
                "out/predictions.jsonl",
                "out/report/pr_curve.csv",
                "out/report/metrics.csv",
                "out/report/bins.csv",
                "out/report/report.json",
            )
        }
    mismatched = [k for k in outputs["one"] if outputs["one"][k] != outputs["two"][k]]
    report(10, "byte-identical rerun of every command", not mismatched,
           f"compared {len(outputs['one'])} files" + (f"; mismatch: {mismatched}" if mismatched else ""))
