"""Acceptance criteria 1-9. Each test prints one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (the full default
pipeline is trained once, which takes a few minutes on one core).
"""
import hashlib
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from cpw_automl import automl, cli, dataset, extraction, netparams, physics
from cpw_automl.config import build_config
from cpw_automl.dataset import TARGETS
from cpw_automl.features import FeaturePipeline
from cpw_automl.fixture import LINE_LENGTHS_M, MEASURED, PRINTED_CPW, VERIFY_THRESHOLD_NP_M
from cpw_automl.models import load_model, save_model
from cpw_automl.physics import MaterialParams
from cpw_automl.seeding import derive_seed

ROOT = Path(__file__).resolve().parents[1]
ORACLES = json.loads((ROOT / "tests" / "data" / "oracles.json").read_text())


@pytest.fixture
def emit(capsys):
    def _emit(criterion: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")

    return _emit


@pytest.fixture(scope="module")
def default_run():
    """Default config, seed 0: generate, partition, fit features, search."""
    cfg = build_config({})
    start = time.perf_counter()
    ds = dataset.clean(dataset.generate(cfg.sweep_config()))
    part = dataset.partition(ds, cfg.partition, derive_seed(cfg.seed, "partition"))
    pipe = FeaturePipeline().fit(ds.inputs[part.train])
    boards = automl.search(cfg.search_space(), ds, part, pipe)
    elapsed = time.perf_counter() - start
    models = {t: b.selected.model for t, b in boards.items()}
    return {"cfg": cfg, "ds": ds, "part": part, "pipe": pipe, "boards": boards, "models": models, "seconds": elapsed}


def test_c1_trl_round_trip(emit):
    f = physics.band_grid(200)
    a, b = physics.alpha_beta(PRINTED_CPW, MEASURED, f)
    g = a + 1j * b
    start = time.perf_counter()
    lines = [(l, netparams.ideal_line_records(g, f, l)) for l in LINE_LENGTHS_M]
    est = netparams.multiline_gamma(lines)
    elapsed = time.perf_counter() - start
    err = float(np.max(np.abs(est.gamma / g - 1)))
    ok = est.frequency.size == 200 and err <= 1e-10 and elapsed < 5
    emit(1, ok, f"max relative gamma error {err:.2e} (<= 1e-10) over 200 frequencies in {elapsed:.2f} s (< 5 s)")
    assert ok


def test_c2_elliptic_accuracy(emit):
    table = ORACLES["ellipk_ratio"]
    start = time.perf_counter()
    got = np.array([physics.ellipk_ratio(k) for k in table["moduli"]])
    elapsed = time.perf_counter() - start
    rel = float(np.max(np.abs(got / np.array(table["ratios"]) - 1)))
    ok = len(got) == 1000 and rel <= 1e-12 and elapsed < 5
    emit(2, ok, f"max relative error vs adaptive quadrature {rel:.2e} (<= 1e-12) on 1000 moduli in {elapsed:.3f} s")
    assert ok


def test_c3_physics_sanity(emit):
    rng = np.random.default_rng(3)
    f = physics.band_grid(11)
    signs_ok = True
    for _ in range(20):
        mat = MaterialParams(rng.uniform(1e7, 5e7), rng.uniform(2, 4.5), rng.uniform(1.2, 3), rng.uniform(0.002, 0.03))

        def ab(**kw):
            return physics.alpha_beta(PRINTED_CPW, MaterialParams(**{**mat.__dict__, **kw}), f)

        h = 1e-4
        d_sigma = ab(sigma_ink=mat.sigma_ink * (1 + h))[0] - ab(sigma_ink=mat.sigma_ink * (1 - h))[0]
        d_tand = ab(tan_delta=mat.tan_delta * (1 + h))[0] - ab(tan_delta=mat.tan_delta * (1 - h))[0]
        d_efs = ab(eps_fs=mat.eps_fs * (1 + h))[1] - ab(eps_fs=mat.eps_fs * (1 - h))[1]
        d_eds = ab(eps_ds=mat.eps_ds * (1 + h))[1] - ab(eps_ds=mat.eps_ds * (1 - h))[1]
        signs_ok &= bool(np.all(d_sigma < 0) and np.all(d_tand > 0) and np.all(d_efs > 0) and np.all(d_eds > 0))
    sigma = MEASURED.sigma_ink
    f_skin = 1 / (math.pi * physics.MU0 * sigma * (PRINTED_CPW.t_metal / 3) ** 2)
    fs = np.geomspace(f_skin, physics.BAND_MAX_HZ, 30)
    ratio = physics.conductor_attenuation(PRINTED_CPW, MEASURED, fs) / np.sqrt(fs)
    spread = float(ratio.max() / ratio.min() - 1)
    ok = signs_ok and spread < 0.01
    emit(3, ok, f"finite-difference signs at 20 points: {'ok' if signs_ok else 'violated'}; "
                f"alpha_c/sqrt(f) spread {100 * spread:.3f}% (< 1%) for f >= {f_skin / 1e9:.1f} GHz")
    assert ok


def test_c4_dataset_scale(emit):
    cfg = build_config({})
    ds = dataset.clean(dataset.generate(cfg.sweep_config()))
    rows_ok = len(ds) == 47_200
    groups = ds.groups()
    n_groups = int(groups.max()) + 1
    details, parts_ok = [], True
    for scheme in dataset.PartitionScheme:
        part = dataset.partition(ds, scheme, derive_seed(cfg.seed, "partition"))
        for count, frac in zip(part.group_counts, scheme.fractions):
            parts_ok &= abs(count - frac * n_groups) <= 1
        sets = [set(groups[s]) for s in (part.train, part.validation, part.test)]
        parts_ok &= not (sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2])
        details.append(f"{scheme.value} groups {part.group_counts}")
    ok = rows_ok and parts_ok
    emit(4, ok, f"{len(ds)} grid rows (47200); {'; '.join(details)}; no combination spans splits")
    assert ok


def test_c5_model_ordering(emit, default_run):
    boards = default_run["boards"]
    lines, ok = [], default_run["seconds"] < 600
    for t in TARGETS:
        best = boards[t].best_by_family()
        boosted = min(best[f].rmse_validation for f in ("gbt", "light_gbt_stacked") if f in best)
        tree = best["decision_tree"].rmse_validation
        sel = boards[t].selected
        finalists = sorted((r for r in boards[t].entries if r.rmse_holdout is not None), key=lambda r: r.rmse_holdout)
        holdout_first = finalists[0] is sel
        ok &= boosted < tree and holdout_first
        lines.append(f"{t}: boosted {boosted:.4g} vs DT {tree:.4g}, selected {sel.trial.family} "
                     f"holdout rank {finalists.index(sel) + 1}/{len(finalists)}")
    emit(5, ok, f"pipeline {default_run['seconds']:.0f} s (< 600 s); " + "; ".join(lines))
    assert ok


def _held_out_params(n: int, seed: int) -> list[MaterialParams]:
    rng = np.random.default_rng(seed)
    ranges = dataset.default_ranges()
    return [MaterialParams(*(rng.uniform(ranges[t].min, ranges[t].max) for t in TARGETS)) for _ in range(n)]


def test_c6_inverse_round_trip(emit, default_run):
    pipe, models = default_run["pipe"], default_run["models"]
    freqs = physics.band_grid(200)
    truths = _held_out_params(20, seed=606)
    rel = {t: [] for t in TARGETS}
    passes = 0
    for i, mat in enumerate(truths):
        clean = netparams.multiline_gamma(extraction.synthesize_lines(PRINTED_CPW, mat, freqs))
        est = extraction.extract(clean, pipe, models)
        for t, v in zip(TARGETS, mat.as_tuple()):
            rel[t].append(abs(est.aggregates[t] - v) / v)
        noisy = netparams.multiline_gamma(extraction.synthesize_lines(PRINTED_CPW, mat, freqs, 1e-3, seed=i))
        report = extraction.verify(extraction.extract(noisy, pipe, models), PRINTED_CPW, noisy, VERIFY_THRESHOLD_NP_M)
        passes += report.passed
    med = {t: float(np.median(v)) for t, v in rel.items()}
    bands = {"sigma_ink": 0.10, "eps_fs": 0.05, "eps_ds": 0.05, "tan_delta": 0.05}
    within = {t: med[t] <= bands[t] for t in TARGETS}
    ok = all(within.values()) and passes >= 18
    parts = ", ".join(f"{t} {100 * med[t]:.1f}% (<= {100 * bands[t]:.0f}%)" for t in TARGETS)
    emit(6, ok, f"median relative error: {parts}; verification max|dalpha| <= 0.2 Np/m in {passes}/20 seeds (>= 18)")
    assert ok


def test_c7_dc_conductivity(emit):
    length, area = LINE_LENGTHS_M[-1], PRINTED_CPW.w_center * PRINTED_CPW.t_metal
    r = 0.830554  # ohm, by hand: 0.09793 / (2.973e7 * 1.983e-3 * 2e-6)
    sigma = netparams.dc_conductivity(length, r, area)
    ok = sigma == length / (r * area) and abs(sigma / 2.973e7 - 1) < 1e-6
    emit(7, ok, f"sigma = l/(R*A) = {sigma:.6e} S/m for R = {r} ohm (target 2.973e7)")
    assert ok


def _sha(p: Path) -> str:
    return hashlib.sha256(p.read_bytes()).hexdigest()


def _cli_run(base: Path) -> Path:
    cfg = yaml.safe_load((ROOT / "configs" / "smoke.yaml").read_text())
    cfg["output_dir"] = str(base / "out")
    base.mkdir(parents=True)
    cfg_path = base / "cfg.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg))
    c = ["--config", str(cfg_path)]
    assert cli.main(["generate", *c]) == 0
    assert cli.main(["train", *c]) == 0
    assert cli.main(["synth", *c, "--out", str(base / "lines"), "--noise", "1e-3"]) == 0
    files = sorted((base / "lines").glob("*.s2p"))
    args = [a for p, l in zip(files, LINE_LENGTHS_M) for a in ("--line", str(p), repr(l))]
    assert cli.main(["gamma", *c, *args]) == 0
    cli.main(["extract", *c, "--reference"])
    (run,) = (base / "out").iterdir()
    return run


def test_c8_determinism(emit, tmp_path):
    a = _cli_run(tmp_path / "a")
    b = _cli_run(tmp_path / "b")
    names = ("dataset.csv", "leaderboard.json", "estimate.json")
    same = {n: _sha(a / n) == _sha(b / n) for n in names}
    ok = all(same.values())
    emit(8, ok, "byte-identical across two runs: " + ", ".join(f"{n} {'yes' if v else 'NO'}" for n, v in same.items()))
    assert ok


def test_c9_serialization(emit, default_run, tmp_path):
    part, ds = default_run["part"], default_run["ds"]
    X = default_run["pipe"].transform(ds.inputs[part.validation])
    worst = 0.0
    for t, m in default_run["models"].items():
        p = tmp_path / f"{t}.json"
        save_model(m, p)
        a, b = m.predict(X), load_model(p).predict(X)
        worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a)))))
    freqs = physics.band_grid(200)
    (_, recs), *_ = extraction.synthesize_lines(PRINTED_CPW, MEASURED, freqs, 1e-3, seed=3)
    s2p = tmp_path / "line.s2p"
    netparams.write_touchstone(s2p, recs)
    back = netparams.read_touchstone(s2p)
    ts_err = max(abs(x - y) for r, q in zip(recs, back)
                 for x, y in zip((r.s11, r.s12, r.s21, r.s22), (q.s11, q.s12, q.s21, q.s22)))
    ts_err = max(ts_err, max(abs(r.frequency - q.frequency) / r.frequency for r, q in zip(recs, back)))
    ok = worst <= 1e-12 and ts_err <= 1e-12 and len(back) == len(recs)
    emit(9, ok, f"model reload max deviation {worst:.1e}; Touchstone round trip max deviation {ts_err:.1e} (<= 1e-12)")
    assert ok
