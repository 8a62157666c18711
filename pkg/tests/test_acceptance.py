"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import json
import math
import time

import numpy as np
import pytest
from scipy import stats as sps

from deepyc.autodiff import ParamStore, Tensor, attention, gaussian_nll, grad_check
from deepyc.autodiff.ops import attention_weights
from deepyc.cli import main
from deepyc.curve_data import (
    CurveFamily,
    SplitSpec,
    TenorGrid,
    YieldPanel,
    example_generator,
    WindowSample,
    make_windows,
    split,
    stack_windows,
    synth_factor_paths,
    synth_panel,
)
from deepyc.evaluation import MetricReport, check_mpiw_identity, display_value, evaluate_against, render_table
from deepyc.factor_dynamics import fit_ar, fit_var, run_benchmark
from deepyc.model import DeepYCConfig, DeepYCModel, TrainSpec, init_model, param_shapes, predict, train, train_ensemble, transfer
from deepyc.model.network import glorot
from deepyc.nelson_siegel import fit_panel

TENORS = (3, 6, 12, 24, 36, 60, 84, 120, 240, 360)


@pytest.fixture
def verdict(capsys):
    def report(n: int, ok: bool, detail: str) -> None:
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})"
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return report


# 1 ---------------------------------------------------------------------------


def test_criterion_01_non_crossing(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(20240101)
    fams = ("F0", "F1", "F2")
    violations = pairs = 0
    for draw in range(1000):
        variant = ("ATT", "CONV")[draw % 2]
        cfg = DeepYCConfig(M=10, n_families=3, variant=variant, phi_plus=("softplus", "sigmoid")[(draw // 2) % 2])
        params = ParamStore()
        scale = math.exp(rng.uniform(math.log(0.01), math.log(0.5)))
        for name, shape in param_shapes(cfg).items():
            if draw % 4 < 2 and len(shape) == 2:
                params.add(name, glorot(rng, shape))
            else:
                params.add(name, scale * rng.standard_normal(shape))
        model = DeepYCModel(cfg, params, fams, tuple(map(float, TENORS)))
        hist = rng.uniform(-0.01, 0.15, size=(10, cfg.L + 1, cfg.M))
        samples = [WindowSample(CurveFamily(fams[i % 3], i % 3), hist[i], None, "x") for i in range(10)]
        out = model.predict_arrays(stack_windows(samples, model.family_index))
        ok = (out["lower"] < out["central"]) & (out["central"] < out["upper"])
        violations += int((~ok).sum())
        pairs += 10
    elapsed = time.perf_counter() - start
    verdict(1, violations == 0 and pairs >= 10_000 and elapsed < 30, f"{pairs} pairs, {violations} violations, {elapsed:.1f}s")


# 2 ---------------------------------------------------------------------------


def test_criterion_02_mpiw_identity(verdict):
    gen = example_generator(n_families=3, n_dates=50)
    panel = synth_panel(gen, 2)
    t0 = panel.dates[29]
    learn, _ = split(panel, SplitSpec(t0))
    cfg = DeepYCConfig(M=10, n_families=3)
    ens, _ = train_ensemble(cfg, panel.family_ids, panel.grid.tenors, make_windows(learn, 9), TrainSpec(epochs=5, lr=1e-2), 10)
    origins = [d for d in panel.dates if d >= t0][:-1]
    members = [predict(m, panel, origins) for m in ens.members]
    ident = check_mpiw_identity(members, predict(ens, panel, origins))
    verdict(2, ident.n_points >= 500 and ident.difference <= 1e-12, f"{ident.n_points} points, |diff| {ident.difference:.2e}")


# 3 ---------------------------------------------------------------------------


def test_criterion_03_ns_nss_calibration(verdict):
    worst_err, worst_sd = 0.0, 0.0
    for model in ("NS", "NSS"):
        clean = example_generator(n_families=3, n_dates=60, model=model, noise_sd=0.0)
        fitted = fit_panel(synth_panel(clean, 1), clean.lambdas, model)
        truth = synth_factor_paths(clean, 1)
        for f, fs in fitted.items():
            worst_err = max(worst_err, float(np.abs(fs.values - truth[f]).max()))
        noisy = example_generator(n_families=3, n_dates=60, model=model, noise_sd=1e-4)
        for fs in fit_panel(synth_panel(noisy, 1), noisy.lambdas, model).values():
            worst_sd = max(worst_sd, abs(fs.residual_sd / 1e-4 - 1.0))
    verdict(3, worst_err <= 1e-8 and worst_sd <= 0.2, f"max factor error {worst_err:.1e}, max residual_sd deviation {worst_sd:.1%}")


# 4 ---------------------------------------------------------------------------


def _simulate_var(a0, A, sd, start, T, rng):
    out = np.empty((T, len(a0)))
    out[0] = start
    for t in range(1, T):
        out[t] = a0 + A @ out[t - 1]
        if sd:
            out[t] += sd * rng.standard_normal(len(a0))
    return out


def _ols(y, x):
    X = np.column_stack([np.ones(len(x)), x])
    return np.linalg.lstsq(X, y, rcond=None)[0]


def test_criterion_04_ar_var_recovery(verdict):
    A = np.array([[0.95, -0.02, 0.0], [0.0, 0.95, 0.0], [0.0, 0.0, 0.95]])
    mean = np.array([0.02, -0.01, 0.005])
    a0 = (np.eye(3) - A) @ mean
    truth = np.concatenate([a0, A.ravel(), 1e-6 * np.eye(3).ravel(), a0, np.diag(A), [1e-3] * 3])
    estimates, oracle_gap = [], 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        path = _simulate_var(a0, A, 1e-3, mean, 500, rng)
        v = fit_var(path)
        B = _ols(path[1:], path[:-1])
        oracle_gap = max(oracle_gap, np.abs(B[0] - v.a0).max(), np.abs(B[1:].T - v.A).max())
        ar = []
        for j in range(3):
            series = _simulate_var(a0[j : j + 1], np.array([[A[j, j]]]), 1e-3, mean[j : j + 1], 500, rng)[:, 0]
            m = fit_ar(series)
            b = _ols(series[1:], series[:-1])
            oracle_gap = max(oracle_gap, abs(b[0] - m.psi0), abs(b[1] - m.psi1))
            ar.append((m.psi0, m.psi1, m.sigma_zeta))
        ar = np.array(ar)
        estimates.append(np.concatenate([v.a0, v.A.ravel(), v.E.ravel(), ar[:, 0], ar[:, 1], ar[:, 2]]))
    estimates = np.array(estimates)
    mc_error = float(np.abs(estimates.mean(axis=0) - truth).max())
    within = int((np.abs(estimates - truth) <= 0.05).sum())
    # noiseless recursions
    An = np.array([[0.9, -0.02, 0.01], [0.05, 0.8, 0.0], [0.0, 0.03, 0.7]])
    an = np.array([0.001, -0.002, 0.0005])
    clean = _simulate_var(an, An, 0.0, np.array([0.05, 0.03, -0.02]), 40, None)
    vn = fit_var(clean)
    ar_clean = _simulate_var(np.array([0.002]), np.array([[0.8]]), 0.0, np.array([0.05]), 40, None)[:, 0]
    mn = fit_ar(ar_clean)
    noiseless = max(np.abs(vn.A - An).max(), np.abs(vn.a0 - an).max(), abs(mn.psi1 - 0.8), abs(mn.psi0 - 0.002))
    verdict(
        4,
        mc_error <= 0.05 and oracle_gap <= 1e-10 and noiseless <= 1e-10,
        f"10-seed mean error {mc_error:.4f}, per-seed estimates within 0.05: {within}/{estimates.size}, "
        f"OLS oracle gap {oracle_gap:.1e}, noiseless error {noiseless:.1e}",
    )


# 5 ---------------------------------------------------------------------------


def test_criterion_05_gradient_check(verdict):
    gen = example_generator(n_families=3, n_dates=16)
    panel = synth_panel(gen, 5)
    cfg = DeepYCConfig(M=10, n_families=3, gamma=2)
    model = init_model(cfg, panel.family_ids, panel.grid.tenors, 11)
    batch = model.arrays(make_windows(panel, 9))
    rep = grad_check(
        lambda lv: model.loss_from_leaves(lv, batch),
        model.params,
        h=1e-5,
        n_samples=200,
        rng=np.random.default_rng(5),
        kinks=lambda lv: model.kink_residuals(lv, batch),
    )
    n_ex = len(rep.entries) - len(rep.checked)
    verdict(5, len(rep.checked) >= 100 and rep.passed, f"{len(rep.checked)} checked, {n_ex} near kinks, max rel error {rep.max_rel_error:.1e}")


# 6 ---------------------------------------------------------------------------


def test_criterion_06_benchmark_calibration(verdict):
    gen = example_generator(n_families=5, n_dates=900, model="NS", dynamics="VAR", noise_sd=1e-4)
    panel = synth_panel(gen, 0)
    run = run_benchmark(panel, panel.dates[499], "NS", "VAR", 0.95)
    rep = evaluate_against(run.forecasts, panel)
    n = len(run.forecasts)
    verdict(6, n >= 2000 and abs(rep.picp - 0.95) <= 0.02, f"{n} curve forecasts ({rep.n} points), PICP {rep.picp:.4f}")


# 7 ---------------------------------------------------------------------------


def test_criterion_07_attention(verdict):
    rng = np.random.default_rng(7)
    row_err = 0.0
    for q, d in ((1, 1), (2, 3), (10, 8), (25, 4)):
        S = attention_weights(rng.standard_normal((q, d)) * 5, rng.standard_normal((q, d)) * 5)
        row_err = max(row_err, float(np.abs(S.sum(axis=-1) - 1.0).max()))
    exact = True
    for q in (3, 4, 10):
        V = rng.standard_normal((q, 8))
        out = attention(Tensor(np.zeros((q, 8))), Tensor(rng.standard_normal((q, 8))), Tensor(V)).data
        exact &= np.array_equal(out, np.tile(V.mean(axis=0), (q, 1)))
    hand = attention(Tensor([[1.0], [0.0]]), Tensor([[1.0], [0.0]]), Tensor([[2.0], [4.0]])).data[0, 0]
    hand_err = abs(hand - (2 * math.e + 4) / (math.e + 1))
    verdict(7, row_err <= 1e-12 and exact and hand_err <= 1e-9, f"row-sum error {row_err:.1e}, uniform case exact={exact}, hand example error {hand_err:.1e}")


# 8 ---------------------------------------------------------------------------


def test_criterion_08_ensemble_sanity(verdict):
    start = time.perf_counter()
    gen = example_generator(n_families=3, n_dates=80, noise_sd=1e-4)
    panel = synth_panel(gen, 0)
    t0 = panel.dates[59]
    learn, _ = split(panel, SplitSpec(t0))
    windows = make_windows(learn, 9)
    origins = [d for d in panel.dates if d >= t0][:-1]
    cfg = DeepYCConfig(M=10, n_families=3)
    wins, all_down = 0, True
    for e in range(10):
        ens, results = train_ensemble(cfg, panel.family_ids, panel.grid.tenors, windows, TrainSpec(epochs=30, lr=1e-2, seed=100 * e), 10)
        ens_mse = evaluate_against(predict(ens, panel, origins), panel).mse
        member_mse = np.mean([evaluate_against(predict(m, panel, origins), panel).mse for m in ens.members])
        wins += ens_mse <= member_mse
        all_down &= all(r.history[-1] < r.initial_loss for r in results)
    elapsed = time.perf_counter() - start
    verdict(8, wins >= 8 and all_down and elapsed <= 300, f"ensemble better in {wins}/10, every member improved={all_down}, {elapsed:.0f}s")


# 9 ---------------------------------------------------------------------------


def test_criterion_09_transfer(verdict):
    source_gen = example_generator(n_families=3, n_dates=60, tenors=tuple(range(3, 453, 3)), model="NSS")
    source_panel = synth_panel(source_gen, 0)
    cfg = DeepYCConfig(M=150, n_families=3)
    source = train(init_model(cfg, source_panel.family_ids, source_panel.grid.tenors, 0), make_windows(source_panel, 9), TrainSpec(epochs=5, lr=1e-2)).model
    trunk_before = {n: source.params[n].tobytes() for n in ("W_Q", "w0_Q", "W_K", "w0_K", "W_V", "w0_V")}

    credit_tenors = (1, 3, 6, 12, 24, 36, 48, 60, 84, 120, 180, 240, 300, 360, 420, 480)
    credit_gen = example_generator(n_families=4, n_dates=60, tenors=credit_tenors, labels=("AAA", "AA", "A", "BBB"))
    credit = synth_panel(credit_gen, 1)
    windows = make_windows(credit, 9)
    mini = transfer(source, credit.grid.tenors, credit.family_ids, windows, TrainSpec(epochs=50, lr=3e-3))
    full = transfer(source, credit.grid.tenors, credit.family_ids, windows, TrainSpec(epochs=50, lr=1e-3, batch_size=len(windows)))

    frozen_ok = all(
        r.model.params[n].tobytes() == b and source.params[n].tobytes() == b for r in (mini, full) for n, b in trunk_before.items()
    )
    shape = mini.model.params["W_Z"].shape
    curve = [full.train.initial_loss] + full.train.history
    strictly = all(b < a for a, b in zip(curve, curve[1:]))
    down = mini.train.history[-1] < mini.train.initial_loss
    verdict(
        9,
        frozen_ok and shape == (150, 16) and strictly and down,
        f"trunk bit-identical={frozen_ok}, adapter {shape[1]}->{shape[0]}, "
        f"loss {curve[0]:.4f}->{curve[-1]:.4f} strictly decreasing={strictly}, mini-batch {mini.train.initial_loss:.4f}->{mini.train.history[-1]:.4f}",
    )


# 10 --------------------------------------------------------------------------


def test_criterion_10_deep_ensemble_variance(verdict):
    y = Tensor(np.array([0.01, 0.02, 0.03]))
    nll0 = gaussian_nll(y, y, Tensor(np.zeros(3))).item()

    rng = np.random.default_rng(0)
    sd_true = 1e-3 * (0.5 + 2.0 * np.log(np.array(TENORS)) / np.log(360))
    F, T = 3, 400
    mean = 0.02 + 0.01 * np.arange(F)[:, None, None] + 0.005 * np.log(np.array(TENORS))[None, None, :] / 6
    # percentage units
    rates = 100 * (mean + sd_true * rng.standard_normal((F, T, len(TENORS))))
    dates = tuple(f"{2000 + i // 12:04d}-{i % 12 + 1:02d}" for i in range(T))
    panel = YieldPanel(tuple(CurveFamily(f"F{i}", i) for i in range(F)), TenorGrid(TENORS), dates, rates)
    cfg = DeepYCConfig(M=10, n_families=F, L=3, variant="ATT_DE", dropout_keep=1.0)
    res = train(init_model(cfg, panel.family_ids, panel.grid.tenors, 0), make_windows(panel, 3), TrainSpec(epochs=150, batch_size=64, lr=1e-2))
    fitted = predict(res.model, panel).sd.mean(axis=0)
    rho = sps.spearmanr(fitted, sd_true)[0]
    verdict(10, nll0 == 0.0 and rho >= 0.8, f"nll at perfect fit {nll0}, sd term-structure Spearman {rho:.3f}")


# 11 --------------------------------------------------------------------------


def test_criterion_11_determinism(verdict, tmp_path, capsys):
    data = tmp_path / "panel.csv"
    assert main(["synth", "--out", str(data), "--families", "2", "--dates", "40", "--seed", "3"]) == 0
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"data": str(data), "t0": "2001-08", "L": 4, "n_members": 3, "train": {"epochs": 4, "lr": 0.01}}))
    blobs = []
    for run, jobs in (("a", "1"), ("b", "2")):
        out = tmp_path / run
        assert main(["train", "--config", str(cfg), "--seed", "7", "--out-dir", str(out), "--jobs", jobs]) == 0
        assert main(["forecast", str(data), "--run-dir", str(out), "--t0", "2001-08", "--out", str(out / "fc.csv")]) == 0
        blobs.append([p.read_bytes() for p in sorted(out.glob("member_*.json"))] + [(out / "fc.csv").read_bytes()])
    capsys.readouterr()
    same = len(blobs[0]) == 4 and blobs[0] == blobs[1]
    verdict(11, same, f"{len(blobs[0])} files compared across two runs, byte-identical={same}")


# 12 --------------------------------------------------------------------------


def test_criterion_12_display_scaling(verdict):
    cases = [("mse", 4.626e-6, "0.4626"), ("mse", 1.0e-5, "1.0000"), ("mae", 1.5e-3, "0.1500"), ("mae", 2.345e-2, "2.3450"), ("picp", 0.9512, "0.9512")]
    shown = [display_value(m, raw) for m, raw, _ in cases]
    table = render_table([MetricReport("NSS_VAR", 100, 4.626e-6, 1.5e-3, 0.9512, 0.0123)])
    row = table.splitlines()[1].split()
    ok = shown == [c[2] for c in cases] and row == ["NSS_VAR", "0.4626", "0.1500", "0.9512", "0.0123"]
    verdict(12, ok, f"rendered {shown}, table row {row}")
