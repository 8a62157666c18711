"""Command-line entry point: ``deepyc <command> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import __version__
from .curve_data import (
    SplitSpec,
    example_generator,
    forecast_windows,
    load_panel,
    make_windows,
    panel_to_csv,
    split,
    synth_factor_paths,
    synth_panel,
)
from .diagnostics import extract_features, factor_correlation, pca, pca_to_csv
from .errors import DataError, NumericalError
from .evaluation import check_mpiw_identity, evaluate_against, render_table
from .factor_dynamics import run_benchmark
from .forecasts import ForecastTable, average_tables
from .model import DeepYCModel, EnsembleModel, check_grid, train_ensemble, transfer
from .model.training import predict_windows
from .nelson_siegel import fit_panel, search_lambdas
from .runconfig import RunConfig, atomic_write, config_hash, load_run_config, read_metadata

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
COMBOS = ("NS_AR", "NS_VAR", "NSS_AR", "NSS_VAR")


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _say(*parts) -> None:
    print(*parts, flush=True)


def _args_hash(args: argparse.Namespace) -> str:
    d = {k: v for k, v in vars(args).items() if k != "func"}
    return config_hash(json.loads(json.dumps(d, default=str)))


def _panel(args, path=None):
    return load_panel(path or args.data, args.layout, args.rate_scale, getattr(args, "tenor_unit", "months"))


def _forecast_origins(panel, t0: str) -> list[str]:
    learn, _ = split(panel, SplitSpec(t0))
    return list(panel.dates[len(learn.dates) - 1 : -1])


# --------------------------------------------------------------------------
# ingest / synth


def cmd_ingest(args) -> int:
    panel = _panel(args)
    F, T, M = panel.rates.shape
    _say(f"families: {', '.join(panel.family_ids)} ({F})")
    _say(f"dates: {panel.dates[0]} .. {panel.dates[-1]} ({T})")
    _say(f"tenors: {', '.join(f'{t:g}' for t in panel.grid.tenors)} ({M}, {panel.grid.unit})")
    _say(f"density: complete ({F * T * M} cells)")
    _say(f"rates: min {panel.rates.min():.6g}, max {panel.rates.max():.6g}")
    if args.export:
        atomic_write(args.export, panel_to_csv(panel, args.export_layout))
        _say(f"wrote {args.export}")
    return EXIT_OK


def cmd_synth(args) -> int:
    tenors = [float(t) for t in args.tenors.split(",")]
    gen = example_generator(
        n_families=args.families,
        n_dates=args.dates,
        tenors=tenors,
        model=args.model,
        dynamics=args.dynamics,
        noise_sd=args.noise_sd,
    )
    panel = synth_panel(gen, args.seed)
    atomic_write(args.out, panel_to_csv(panel, args.layout))
    _say(f"wrote {args.out}: {len(panel.families)} families x {len(panel.dates)} dates x {len(panel.grid)} tenors")
    if args.factors_out:
        paths = synth_factor_paths(gen, args.seed)
        lines = ["family,date," + ",".join(f"beta{j}" for j in range(paths[panel.family_ids[0]].shape[1]))]
        for fam, path in paths.items():
            for d, row in zip(panel.dates, path):
                lines.append(",".join([fam, d, *map(repr, map(float, row))]))
        atomic_write(args.factors_out, "\n".join(lines) + "\n")
        _say(f"wrote {args.factors_out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# benchmarks


def _grid_lambdas(panel, t0: str, model: str, grid: list[str]) -> tuple[float, ...]:
    k = 1 if model == "NS" else 2
    cands = []
    for item in grid:
        try:
            cand = tuple(float(v) for v in item.split(","))
        except ValueError:
            raise _Usage(f"--lambda-grid: cannot parse {item!r}")
        if len(cand) == k:
            cands.append(cand)
    if not cands:
        raise _Usage(f"--lambda-grid has no {k}-decay candidates for {model}")
    learn, _ = split(panel, SplitSpec(t0))
    return search_lambdas(learn, cands, model)


def cmd_fit_benchmark(args) -> int:
    if args.combo and (args.model or args.dynamics):
        raise _Usage("give either --combo or --model/--dynamics, not both")
    if args.combo == "all":
        combos = list(COMBOS)
    elif args.combo:
        combos = [args.combo]
    elif args.model and args.dynamics:
        combos = [f"{args.model}_{args.dynamics}"]
    else:
        raise _Usage("give --combo or both --model and --dynamics")
    panel = _panel(args)
    out = Path(args.out_dir)
    meta = {"config_hash": _args_hash(args), "t0": args.t0, "alpha": repr(args.alpha)}
    reports = []
    for combo in combos:
        model, dyn = combo.split("_")
        lambdas = tuple(args.lambdas) if args.lambdas else None
        if args.lambda_grid:
            if lambdas:
                raise _Usage("give either --lambdas or --lambda-grid, not both")
            lambdas = _grid_lambdas(panel, args.t0, model, args.lambda_grid)
            _say(f"{combo}: decays {', '.join(map(repr, lambdas))} chosen by pooled SSE up to {args.t0}")
        run = run_benchmark(panel, args.t0, model, dyn, args.alpha, lambdas, refit=args.refit)
        for w in run.warnings:
            print(f"warning: {w}", file=sys.stderr)
        report = evaluate_against(run.forecasts, panel)
        report.extra["interval_method"] = "gaussian one-step predictive (factor covariance + measurement variance)"
        report.extra["refit"] = bool(args.refit)
        atomic_write(out / f"forecasts_{combo}.csv", run.forecasts.to_csv(meta))
        atomic_write(out / f"report_{combo}.json", report.to_json(meta))
        reports.append(report)
    print(render_table(reports), end="")
    return EXIT_OK


# --------------------------------------------------------------------------
# network runs


def _run_config(args) -> RunConfig:
    overrides = {
        "data": getattr(args, "data", None),
        "t0": getattr(args, "t0", None),
        "seed": getattr(args, "seed", None),
        "out_dir": getattr(args, "out_dir", None),
        "n_members": getattr(args, "n_members", None),
    }
    if args.config:
        return load_run_config(args.config, overrides)
    return RunConfig.model_validate({k: v for k, v in overrides.items() if v is not None})


def _write_members(out: Path, prefix: str, results, meta: dict) -> None:
    rows = ["member,epoch,loss,batch_loss"]
    for k, r in enumerate(results):
        m = dict(meta, member=str(k))
        atomic_write(out / f"{prefix}{k:02d}.json", r.model.dumps(m) + "\n")
        rows.append(f"{k},0,{r.initial_loss!r},")
        for e, (loss, bl) in enumerate(zip(r.history, r.batch_history), start=1):
            rows.append(f"{k},{e},{loss!r},{bl!r}")
    header = "".join(f"# {a}: {b}\n" for a, b in meta.items())
    atomic_write(out / f"{prefix}loss_curves.csv", header + "\n".join(rows) + "\n")


def cmd_train(args) -> int:
    cfg = _run_config(args)
    h = cfg.config_hash()
    panel = load_panel(cfg.data, cfg.layout, cfg.rate_scale)
    learn, _ = split(panel, SplitSpec(cfg.t0))
    windows = make_windows(learn, cfg.L)
    mcfg = cfg.model_config_for(len(panel.grid), len(panel.families))
    ens, results = train_ensemble(
        mcfg, panel.family_ids, panel.grid.tenors, windows, cfg.train_spec(), cfg.n_members, jobs=args.jobs
    )
    out = Path(cfg.out_dir)
    atomic_write(out / "run_config.json", json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
    _write_members(out, "member_", results, {"config_hash": h})
    for k, r in enumerate(results):
        _say(f"member {k}: seed {cfg.seed + k}, loss {r.initial_loss:.6g} -> {r.history[-1]:.6g}")
    _say(f"wrote {len(results)} checkpoints to {out} (config {h})")
    return EXIT_OK


def _load_checkpoints(args) -> tuple[list[DeepYCModel], list[dict]]:
    paths = [Path(p) for p in (args.checkpoint or [])]
    if args.run_dir:
        paths += sorted(Path(args.run_dir).glob(f"{args.prefix}[0-9][0-9].json"))
    if not paths:
        raise _Usage("give --checkpoint and/or --run-dir")
    models, metas = [], []
    for p in paths:
        if not p.exists():
            raise DataError(f"{p}: checkpoint not found")
        d = json.loads(p.read_text(encoding="utf-8"))
        models.append(DeepYCModel.from_dict(d))
        metas.append(d.get("metadata", {}))
    return models, metas


def cmd_forecast(args) -> int:
    models, metas = _load_checkpoints(args)
    panel = _panel(args)
    for m in models:
        check_grid(m, panel.grid.tenors)
    ens = EnsembleModel(tuple(models))
    if args.as_of:
        origins = args.as_of
    elif args.t0:
        origins = _forecast_origins(panel, args.t0)
    else:
        raise _Usage("give --t0 or --as-of")
    hashes = sorted({m.get("config_hash", "") for m in metas})
    meta = {"config_hash": ",".join(hashes), "members": str(len(models))}
    windows = forecast_windows(panel, ens.config.L, origins)
    member_tables = [predict_windows(m, windows) for m in models]
    table = member_tables[0] if len(models) == 1 else average_tables(member_tables, model=f"{member_tables[0].model}_ensemble")
    atomic_write(args.out, table.to_csv(meta))
    if args.members_dir:
        for k, t in enumerate(member_tables):
            atomic_write(Path(args.members_dir) / f"forecast_member_{k:02d}.csv", t.to_csv(dict(meta, member=str(k))))
    _say(f"wrote {args.out}: {len(table)} curves x {len(table.tenors)} tenors from {len(models)} model(s)")
    return EXIT_OK


def _read_table(path: str) -> tuple[ForecastTable, dict]:
    p = Path(path)
    if not p.exists():
        raise DataError(f"{p}: forecast file not found")
    text = p.read_text(encoding="utf-8")
    return ForecastTable.from_csv(text, source=str(p)), read_metadata(text)


def cmd_evaluate(args) -> int:
    panel = _panel(args)
    table, meta = _read_table(args.forecasts)
    report = evaluate_against(table, panel)
    ok = True
    if args.members:
        members = [_read_table(p)[0] for p in args.members]
        ident = check_mpiw_identity(members, table)
        report.extra["mpiw_identity"] = ident.to_dict()
        ok = ident.passed
        _say(
            f"MPIW identity: mean member {ident.mean_member_mpiw:.12g}, ensemble {ident.ensemble_mpiw:.12g}, "
            f"|diff| {ident.difference:.3e} -> {'PASS' if ident.passed else 'FAIL'}"
        )
    out_meta = {"config_hash": meta.get("config_hash", _args_hash(args)), "forecasts": Path(args.forecasts).name}
    atomic_write(args.out, report.to_json(out_meta))
    if args.csv:
        atomic_write(args.csv, report.to_csv(out_meta))
    print(render_table([report]), end="")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_transfer(args) -> int:
    cfg = _run_config(args)
    h = cfg.config_hash()
    src_path = Path(args.source)
    if not src_path.exists():
        raise DataError(f"{src_path}: source checkpoint not found")
    source = DeepYCModel.loads(src_path.read_text(encoding="utf-8"))
    panel = load_panel(cfg.data, cfg.layout, cfg.rate_scale)
    learn, _ = split(panel, SplitSpec(cfg.t0))
    if source.config.L != cfg.L:
        raise DataError(f"source look-back L = {source.config.L} differs from config L = {cfg.L}")
    windows = make_windows(learn, cfg.L)
    out = Path(cfg.out_dir)
    results = []
    for k in range(cfg.n_members):
        res = transfer(source, panel.grid.tenors, panel.family_ids, windows, cfg.train_spec(cfg.seed + k), q_I=args.q_I)
        results.append(res)
        _say(
            f"member {k}: adapter {list(res.model.params['W_Z'].shape)}, loss {res.train.initial_loss:.6g} -> "
            f"{res.train.history[-1]:.6g}, frozen trunk unchanged ({res.fingerprint_after[:12]})"
        )
    meta = {"config_hash": h, "source": src_path.name, "source_trunk": results[0].fingerprint_before[:16]}
    _write_members(out, "transfer_", [r.train for r in results], meta)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    models, _ = _load_checkpoints(args)
    model = models[0]
    panel = _panel(args)
    check_grid(model, panel.grid.tenors)
    windows = forecast_windows(panel, model.config.L)
    feats = extract_features(model, windows)
    res = pca(feats, args.k, standardize=args.standardize)
    factors = fit_panel(panel, None, args.factor_model)
    corr = factor_correlation(res.scores, feats.family, feats.as_of, factors)
    out = Path(args.out_dir)
    meta = {"config_hash": _args_hash(args), "factor_model": args.factor_model}
    loadings, variance = pca_to_csv(res, feats.columns)
    atomic_write(out / "pca_loadings.csv", loadings)
    atomic_write(out / "pca_variance.csv", variance)
    atomic_write(out / "factor_correlation.csv", corr.to_csv(meta))
    _say(f"features: {feats.values.shape[0]} rows x {feats.values.shape[1]} columns")
    _say("cumulative explained variance: " + ", ".join(f"{v:.4f}" for v in res.cumulative_ratio))
    for f, v in corr.mean_abs.items():
        _say(f"{f}: mean |r| = {'n/a' if v is None else f'{v:.4f}'}")
    return EXIT_OK


# --------------------------------------------------------------------------


class _Usage(Exception):
    pass


def _data_args(p, positional: bool = True) -> None:
    if positional:
        p.add_argument("data", help="panel CSV (long or wide layout)")
    p.add_argument("--layout", choices=("auto", "long", "wide"), default="auto")
    p.add_argument("--rate-scale", type=float, default=1.0, help="multiplier turning file values into decimal rates")


def _ckpt_args(p) -> None:
    p.add_argument("--checkpoint", action="append", help="model checkpoint JSON (repeatable)")
    p.add_argument("--run-dir", help="directory of member checkpoints written by train")
    p.add_argument("--prefix", default="member_", help="checkpoint file prefix inside --run-dir")


def _run_args(p) -> None:
    p.add_argument("--config", help="run configuration JSON")
    p.add_argument("--data", help="override config data path")
    p.add_argument("--t0", help="override config cutoff date")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--n-members", type=int, help="override config ensemble size")
    p.add_argument("--out-dir", help="override config output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = Parser(prog="deepyc", description="Joint yield-curve forecasting with attention networks and DNS benchmarks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a panel and print a summary")
    _data_args(p)
    p.add_argument("--tenor-unit", choices=("months", "years"), default="months", help="unit of the tenor labels in the file")
    p.add_argument("--export", help="re-emit the normalised panel here")
    p.add_argument("--export-layout", choices=("long", "wide"), default="long")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="write a synthetic NS/NSS panel")
    p.add_argument("--out", required=True)
    p.add_argument("--model", choices=("NS", "NSS"), default="NS")
    p.add_argument("--dynamics", choices=("AR", "VAR", "constant"), default="VAR")
    p.add_argument("--families", type=int, default=3)
    p.add_argument("--dates", type=int, default=120)
    p.add_argument("--tenors", default="3,6,12,24,36,60,84,120,240,360")
    p.add_argument("--noise-sd", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--layout", choices=("long", "wide"), default="long")
    p.add_argument("--factors-out", help="also write the true factor paths")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit-benchmark", help="NS/NSS + AR/VAR interval benchmarks")
    _data_args(p)
    p.add_argument("--t0", required=True)
    p.add_argument("--combo", choices=COMBOS + ("all",))
    p.add_argument("--model", choices=("NS", "NSS"))
    p.add_argument("--dynamics", choices=("AR", "VAR"))
    p.add_argument("--alpha", type=float, default=0.95)
    p.add_argument("--lambdas", type=float, nargs="+", help="decay parameter(s); defaults 0.0609 and (0.0609, 0.2)")
    p.add_argument(
        "--lambda-grid",
        nargs="+",
        help="candidate decays searched by pooled SSE on the learning sample; NSS pairs as 'l1,l2'",
    )
    p.add_argument("--refit", action="store_true", help="re-estimate dynamics at every forecast origin")
    p.add_argument("--out-dir", default="benchmarks")
    p.set_defaults(func=cmd_fit_benchmark)

    p = sub.add_parser("train", help="train an ensemble on the learning sample")
    _run_args(p)
    p.add_argument("--jobs", type=int, default=1, help="worker processes for ensemble members")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("forecast", help="one-step forecasts from checkpoints")
    _data_args(p)
    _ckpt_args(p)
    p.add_argument("--t0", help="forecast every date after t0")
    p.add_argument("--as-of", nargs="+", help="explicit forecast origins")
    p.add_argument("--out", required=True)
    p.add_argument("--members-dir", help="also write each member's forecasts here")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("evaluate", help="metrics of a forecast file against realised curves")
    _data_args(p)
    p.add_argument("--forecasts", required=True)
    p.add_argument("--members", nargs="+", help="member forecast files for the MPIW identity check")
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--csv", help="flattened report CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("transfer", help="re-use a trained trunk on a new tenor grid and family set")
    _run_args(p)
    p.add_argument("--source", required=True, help="source model checkpoint")
    p.add_argument("--q-I", dest="q_I", type=int, help="embedding size for the new families")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("diagnose", help="PCA of extracted features and correlation with NS/NSS factors")
    _data_args(p)
    _ckpt_args(p)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--factor-model", choices=("NS", "NSS"), default="NSS")
    p.add_argument("--out-dir", default="diagnostics")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _Usage as exc:
        parser.print_usage(sys.stderr)
        print(f"deepyc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"deepyc: invalid configuration:\n{exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"deepyc: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"deepyc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"deepyc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
