"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line."""

import json
import math
import time
import warnings

import numpy as np
import pytest

from vmdnet.cli import main as cli_main
from vmdnet.core import fft, make_rng
from vmdnet.model import AttentionParams, attention_weights, multi_head_attention
from vmdnet.pipeline.experiment import ABLATION_COLUMNS, VARIANTS, AblationSpec, HyperParams, cross_validate, run_ablation
from vmdnet.pipeline.metrics import auc_rank
from vmdnet.pipeline.preprocess import apply_minmax, filter_outliers, impute, normalize_minmax, prepare_dataset
from vmdnet.pipeline.synth import STRONG_SEPARATION, SynthConfig, synth_generate
from vmdnet.pipeline.table import RawTable
from vmdnet.pipeline.training import EarlyStopping, TrainProtocol, kfold_split, train_with_early_stopping
from vmdnet.model import ModelConfig
from vmdnet.pso import Dimension, PsoConfig, SearchSpace, pso_optimize
from vmdnet.vmd import VmdConfig, vmd_decompose, vmd_reconstruct

from oracles import brute_auc, gradient_check, naive_dft


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE criterion {number:>2}: {'PASS' if ok else 'FAIL'} | {detail}")
    return emit


def test_criterion_01_vmd_two_tone(report):
    t = np.arange(1024)
    x = np.sin(2 * np.pi * 0.02 * t) + np.sin(2 * np.pi * 0.2 * t)
    start = time.perf_counter()
    m = vmd_decompose(x, VmdConfig(k_modes=2))
    elapsed = time.perf_counter() - start
    err = np.linalg.norm(vmd_reconstruct(m) - x) / np.linalg.norm(x)
    gaps = [abs(f - f0) / f0 for f, f0 in zip(m.center_freqs, (0.02, 0.2))]
    ok = err <= 1e-2 and max(gaps) <= 0.10 and elapsed < 5.0
    report(1, ok, f"rel error {err:.2e} (<= 1e-2), center gaps {gaps[0]:.3f}/{gaps[1]:.3f} (<= 0.10), "
                  f"{elapsed:.2f} s (< 5 s)")
    assert ok


def test_criterion_02_fft_oracle(report):
    worst = 0.0
    rng = np.random.default_rng(2)
    for n in (8, 12, 64, 100):
        for _ in range(3):
            x = rng.normal(size=n) + 1j * rng.normal(size=n)
            ref = naive_dft(x)
            worst = max(worst, np.linalg.norm(fft(x) - ref) / np.linalg.norm(ref))
    ok = worst <= 1e-10
    report(2, ok, f"worst relative error {worst:.2e} over lengths 8/12/64/100 (<= 1e-10)")
    assert ok


def test_criterion_03_gradient_fidelity(report):
    results = [gradient_check(seed, steps=3, d=2, hidden=3, heads=2) for seed in range(10)]
    worst, where = max(results, key=lambda r: r[0])
    ok = worst <= 1e-4
    report(3, ok, f"max relative gap {worst:.2e} (<= 1e-4) over 10 seeds, worst at {where[0]}{list(where[1])}")
    assert ok


def test_criterion_04_attention_normalization(report):
    worst_sum, worst_shift = 0.0, 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        heads, width, steps = (1, 2, 3, 6)[seed % 4], 6, 2 + seed % 5
        dk = width // heads
        p = AttentionParams(*(rng.normal(size=(heads, width, dk)) for _ in range(3)),
                            rng.normal(size=(heads * dk, width)))
        h = rng.normal(size=(steps, width)) * 2
        worst_sum = max(worst_sum, np.max(np.abs(attention_weights(p, h).sum(axis=-1) - 1.0)))
        # a constant hidden column lets a change of W_K add q_t . delta to every logit in row t
        h[:, -1] = 1.0
        moved = AttentionParams(p.w_q, p.w_k.copy(), p.w_v, p.w_o)
        moved.w_k[:, -1, :] += rng.normal(size=(heads, dk)) * 3
        worst_shift = max(worst_shift, np.max(np.abs(multi_head_attention(moved, h) - multi_head_attention(p, h))))
    ok = worst_sum <= 1e-12 and worst_shift <= 1e-12
    report(4, ok, f"max |row sum - 1| {worst_sum:.1e}, max output change under row-constant logit shift "
                  f"{worst_shift:.1e} (both <= 1e-12)")
    assert ok


def test_criterion_05_pso(report):
    space = SearchSpace(tuple(Dimension(f"x{i}", "continuous", -5.0, 5.0) for i in range(5)))
    hits, monotone = 0, True
    for seed in range(10):
        res = pso_optimize(lambda hp: -sum(v * v for v in hp.values()), space,
                           PsoConfig(swarm_size=20, iterations=100, seed=seed))
        hits += res.best_score > -1e-3
        monotone &= all(b >= a for a, b in zip(res.history, res.history[1:]))

    drift_space = SearchSpace(tuple(Dimension(f"x{i}", "continuous", -100.0, 100.0) for i in range(2)))
    x0 = np.array([[0.0, 1.0], [-3.0, 2.0], [5.0, -5.0]])
    v0 = np.array([[1.0, -0.5], [2.0, 0.25], [-1.5, 3.0]])
    res = pso_optimize(lambda hp: 0.0, drift_space,
                       PsoConfig(swarm_size=3, iterations=8, inertia=1.0, cognitive=0.0, social=0.0),
                       init_positions=x0, init_velocities=v0)
    drift = all(np.array_equal(e["position"], x0[e["particle"]] + e["iteration"] * v0[e["particle"]])
                for e in res.trace)
    ok = hits >= 8 and monotone and drift
    report(5, ok, f"sphere solved in {hits}/10 seeds (>= 8), history monotone: {monotone}, "
                  f"pure drift exact: {drift}")
    assert ok


def test_criterion_06_auc_oracle(report):
    rng = np.random.default_rng(6)
    exact = 0
    for i in range(100):
        n = int(rng.integers(2, 201))
        labels = rng.integers(0, 2, n)
        labels[:2] = [0, 1]
        scores = rng.integers(0, 1 + i % 30, n) / 7.0 if i % 2 else rng.random(n)
        exact += auc_rank(scores, labels) == brute_auc(scores.tolist(), labels.tolist())
    example = auc_rank([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
    ok = exact == 100 and example == 0.75
    report(6, ok, f"rank AUC == pairwise count on {exact}/100 random sets, worked example {example}")
    assert ok


def _synthetic(separation, seed=0):
    cfg = SynthConfig(separation=separation, seed=seed)
    return prepare_dataset(synth_generate(cfg), cfg.grouping())


@pytest.mark.slow
def test_criterion_07_end_to_end(report):
    start = time.perf_counter()
    _, strong = cross_validate(_synthetic(STRONG_SEPARATION), HyperParams(), AblationSpec("bilstm-am-vmd"),
                               TrainProtocol(), seed=0)
    _, null = cross_validate(_synthetic(0.0), HyperParams(), AblationSpec("bilstm-am-vmd"), TrainProtocol(), seed=0)
    elapsed = time.perf_counter() - start
    a_strong, a_null = strong["auc"]["mean"], null["auc"]["mean"]
    ok = a_strong >= 0.95 and abs(a_null - 0.5) <= 0.1 and elapsed < 600
    report(7, ok, f"648 rows, 5-fold: strong separation AUC {a_strong:.4f} (>= 0.95), "
                  f"no separation AUC {a_null:.4f} (0.5 +/- 0.1), {elapsed:.0f} s (< 600 s)")
    assert ok


def _raw(cols):
    values = {c: np.array([np.nan if v is None else v for v in vals], dtype=np.float64)
              if not any(isinstance(v, str) for v in vals) else np.array(vals, dtype=object)
              for c, vals in cols.items()}
    kinds = {c: "categorical" if v.dtype == object else "continuous" for c, v in values.items()}
    n = len(next(iter(cols.values())))
    return RawTable(columns=list(cols), kinds=kinds, values=values, labels=np.zeros(n, dtype=np.int64))


def _five_row_outlier_example():
    _, removed = filter_outliers(_raw({"x": [0.0, 0.0, 0.0, 0.0, 100.0], "y": [1.0] * 5}))
    return removed.tolist() == [4]


def _frozen_loss_training():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(24, 2, 2))
    y = np.arange(24) % 2
    cfg = ModelConfig(input_dim=2, seq_len=2, hidden_size=4, num_heads=2)
    # learning rate 0 keeps the weights, and so the validation loss, frozen from epoch 1
    params, hist = train_with_early_stopping(x, y, x, y, cfg, TrainProtocol(learning_rate=0.0), seed=0)
    return hist.stopped_epoch == 11 and hist.best_epoch == 1


def test_criterion_08_preprocessing_contract(report):
    checks = {}
    checks["impute median"] = impute(_raw({"x": [1.0, None, 3.0]})).values["x"].tolist() == [1.0, 2.0, 3.0]
    checks["impute mode"] = impute(_raw({"s": ["a", "a", "b", None]})).values["s"].tolist() == ["a", "a", "b", "a"]
    same = _raw({"x": [1.0, 5.0], "s": ["a", "b"]})
    out = impute(same)
    checks["impute identity"] = (out.values["x"].tolist() == [1.0, 5.0] and out.values["s"].tolist() == ["a", "b"])
    _, r = filter_outliers(_raw({"x": [0.0] * 20 + [100.0], "y": [1.0] * 21}))
    checks["spike removed (21 rows, z=4.47)"] = r.tolist() == [20]
    checks["constant column kept"] = filter_outliers(_raw({"x": [4.0] * 6}))[1].size == 0
    checks["|z| = 3 kept"] = filter_outliers(_raw({"x": [0.0] * 9 + [10.0]}))[1].size == 0
    mm, stats = normalize_minmax(_raw({"x": [2.0, 4.0, 6.0]}))
    checks["minmax linear"] = mm.values["x"].tolist() == [0.0, 0.5, 1.0]
    checks["minmax constant"] = normalize_minmax(_raw({"x": [7.0, 7.0]}))[0].values["x"].tolist() == [0.0, 0.0]
    checks["minmax clamp"] = apply_minmax(_raw({"x": [1.0]}), stats).values["x"].tolist() == [0.0]

    part = True
    for seed in range(20):
        labels = np.random.default_rng(seed).integers(0, 2, 37 + seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            plan = kfold_split(labels.size, 5, seed, labels)
        vals = np.concatenate([v for _, v in plan.folds])
        part &= np.array_equal(np.sort(vals), np.arange(labels.size))
    checks["folds partition"] = bool(part)
    es = EarlyStopping(10)
    epoch = 0
    while not es.should_stop:
        epoch += 1
        es.update(epoch, 0.3)
    checks["patience arithmetic"] = epoch == 11 and es.best_epoch == 1
    checks["frozen-loss training"] = _frozen_loss_training()

    literal = _five_row_outlier_example()
    failed = [k for k, v in checks.items() if not v]
    note = "" if literal else "; five-row outlier example FAILS as stated (max |z| over 5 rows is 2, see xfail)"
    report(8, not failed and literal,
           f"{len(checks) - len(failed)}/{len(checks)} attainable checks pass{note}"
           + (f"; failing: {', '.join(failed)}" if failed else ""))
    assert not failed


@pytest.mark.xfail(strict=True, reason="|z| of the 100 in [0,0,0,0,100] is exactly 2 under column stats; "
                                       "no value can exceed 3 with five rows")
def test_criterion_08_five_row_outlier_example():
    assert _five_row_outlier_example()


@pytest.mark.slow
def test_criterion_09_cli_determinism(report, tmp_path):
    def run(*argv):
        assert cli_main([str(a) for a in argv]) == 0, argv

    def outputs(d):
        return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*"))
                if p.is_file() and p.name != "manifest.json"}

    for tag in ("a", "b"):
        run("synth", "--rows", 240, "--separation", 2.0, "--seed", 3, "--out", tmp_path / tag / "synth")
    data_dir = tmp_path / "a" / "synth"
    cfg = json.loads((data_dir / "schema.json").read_text())
    cfg["data"]["path"] = str(data_dir / "synthetic.csv")
    cfg["protocol"] = {"k_folds": 3, "max_epochs": 8, "search_max_epochs": 3}
    cfg["hyperparameters"] = {"hidden_size": 6}
    config = tmp_path / "config.json"
    config.write_text(json.dumps(cfg))
    tone = tmp_path / "tone.csv"
    tone.write_text("x\n" + "\n".join(repr(float(math.sin(0.3 * i))) for i in range(256)) + "\n")

    for tag, threads in (("a", 1), ("b", 4)):
        out = tmp_path / tag
        run("decompose", "--input", tone, "--modes", 2, "--out", out / "decompose")
        run("train", "--config", config, "--out", out / "train", "--threads", threads)
        run("optimize", "--config", config, "--out", out / "optimize", "--threads", threads,
            "--swarm", 3, "--iterations", 2)
        run("ablate", "--config", config, "--out", out / "ablate", "--threads", threads)
        run("evaluate", "--checkpoint", tmp_path / "a" / "train" / "checkpoints" / "fold_0.json",
            "--input", data_dir / "synthetic.csv", "--out", out / "evaluate")

    first, second = outputs(tmp_path / "a"), outputs(tmp_path / "b")
    differ = sorted(k for k in first if first[k] != second.get(k))
    ok = first.keys() == second.keys() and not differ
    report(9, ok, f"{len(first)} output files from synth/decompose/train/optimize/ablate/evaluate compared "
                  f"at --threads 1 vs 4, {len(differ)} differ")
    assert ok, differ


@pytest.mark.slow
def test_criterion_10_ablation(report, tmp_path):
    data = _synthetic(STRONG_SEPARATION)
    rows = run_ablation(data, VARIANTS, HyperParams(), TrainProtocol(), seed=0, threads=4)
    auc = {r["variant"]: r["auc"] for r in rows}
    columns_ok = all(tuple(r) == ABLATION_COLUMNS for r in rows) and [r["variant"] for r in rows] == list(VARIANTS)
    ok = columns_ok and len(rows) == 4 and auc["bilstm-am-vmd"] >= auc["bilstm-only"] - 0.02
    report(10, ok, "columns " + ",".join(ABLATION_COLUMNS) + "; AUC "
           + ", ".join(f"{v} {a:.4f}" for v, a in auc.items())
           + " (full >= bilstm-only - 0.02)")
    assert ok
