"""Command-line surface tying the toolkit together.

Commands: simulate, train, estimate, uq, bench, sweep, pipeline. Every
command is deterministic given --seed (wall-clock timings aside) and
exits 0 on success, nonzero with a structured error message otherwise.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import nbe as nbe_mod
from . import uq as uq_mod
from .data import (
    CsvFormat,
    RescaleMode,
    load_prices,
    log_returns,
    make_windows,
    normalized_window,
    read_increments,
    rescale_factors,
    write_increments,
)
from .ecf import FitResult, default_grid, lsq_fit, mele_fit
from .errors import LevyNbeError
from .models import (
    IncrementSeries,
    ModelSpec,
    ParamVector,
    PriorBox,
    SeedSpec,
    default_prior,
    sample_prior,
    simulate_increments,
)
from .nets import Activation, Aggregation


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _parse_model(text: str) -> ModelSpec:
    return ModelSpec.from_tag(text)


def _load_prior(path: str | None, model: ModelSpec) -> PriorBox:
    if path is None:
        return default_prior(model)
    with open(path, "r", encoding="utf-8") as fh:
        blob = json.load(fh)
    return PriorBox(blob["lower"], blob["upper"], model)


def _parse_uq_method(text: str) -> tuple[str, int | None]:
    if text.startswith("bootstrap"):
        _, _, b = text.partition(":")
        return "bootstrap", int(b) if b else 400
    if text == "quantile":
        return "quantile", None
    raise ValueError(f"unknown uq method {text!r} (use bootstrap:<B> or quantile)")


def _write_json(path: str | None, payload: dict) -> None:
    text = json.dumps(payload, indent=2)
    if path is None:
        print(text)
    else:
        Path(path).write_text(text + "\n", encoding="utf-8")


def cmd_simulate(args) -> int:
    model = _parse_model(args.model)
    values = np.array([float(v) for v in args.params.split(",")])
    params = ParamVector(values, model)
    series = simulate_increments(params, args.n, SeedSpec(args.seed))
    write_increments(args.out, series)
    print(f"wrote {len(series)} increments to {args.out}")
    return 0


def cmd_train(args) -> int:
    model = _parse_model(args.model)
    prior = _load_prior(args.prior, model)
    cfg = nbe_mod.TrainConfig(
        k=args.k,
        j=args.j,
        n_t=args.nt,
        epochs=args.epochs,
        seed=SeedSpec(args.seed),
        batch_size=args.batch_size,
        learning_rate=args.lr,
        embed_dim=args.embed,
        loss=nbe_mod.LossKind.parse(args.loss),
        val_fraction=args.val_fraction,
        aggregation=Aggregation(args.agg),
        activation=Activation(args.act),
    )
    est, report = nbe_mod.train(model, prior, cfg)
    nbe_mod.save(est, args.out)
    _write_json(str(args.out) + ".report.json", report.to_json_dict())
    print(
        f"trained {model.tag()} estimator in {report.wall_time:.1f}s "
        f"(best epoch {report.best_epoch}, val risk "
        f"{min(report.epoch_val_risk):.5g}); saved to {args.out}"
    )
    return 0


def cmd_estimate(args) -> int:
    series = read_increments(args.data)
    if args.method == "nbe":
        if args.artifact is None:
            raise ValueError("--artifact is required for --method nbe")
        est = nbe_mod.load(args.artifact)
        t0 = time.perf_counter()
        result = est.forward(series)
        wall = time.perf_counter() - t0
        payload = {
            "model": result.model.tag(),
            "method": "nbe",
            "estimate": result.as_dict(),
            "wall_time_s": wall,
        }
    else:
        if args.model is None:
            raise ValueError("--model is required for --method lsq/mele")
        model = _parse_model(args.model)
        prior = _load_prior(args.prior, model)
        seed = SeedSpec(args.seed)
        if args.method == "lsq":
            grid = default_grid(series, args.grid_count or 32)
            fit = lsq_fit(series, model, prior, grid, args.restarts, seed)
        else:
            # Small condition sets keep the dual well posed.
            grid = default_grid(series, args.grid_count or 5)
            fit = mele_fit(series, model, prior, grid, seed)
        payload = fit.to_json_dict()
        payload["method"] = args.method
        payload["estimate"] = ParamVector(
            np.array(payload["estimate"]), model
        ).as_dict()
    _write_json(args.out, payload)
    return 0


def cmd_uq(args) -> int:
    series = read_increments(args.data)
    kind, b = _parse_uq_method(args.method)
    if kind == "bootstrap":
        if args.artifact is None:
            raise ValueError("--artifact is required for bootstrap uq")
        est = nbe_mod.load(args.artifact)
        interval = uq_mod.bootstrap_interval(
            est, series, b, args.level, SeedSpec(args.seed)
        )
        point = est.forward(series)
    else:
        if args.bundle is None:
            raise ValueError("--bundle lower,upper,point is required for quantile uq")
        paths = args.bundle.split(",")
        if len(paths) != 3:
            raise ValueError("--bundle must list three artifacts: lower,upper,point")
        bundle = uq_mod.QuantileBundle(
            nbe_mod.load(paths[0]),
            nbe_mod.load(paths[1]),
            nbe_mod.load(paths[2]),
            args.level,
        )
        interval = uq_mod.credible_interval(bundle, series)
        point = bundle.point_est.forward(series)
    names = point.model.param_names
    payload = {
        "model": point.model.tag(),
        "method": interval.method.value,
        "level": args.level,
        "point": point.as_dict(),
        "lower": {n: float(v) for n, v in zip(names, interval.lower.values)},
        "upper": {n: float(v) for n, v in zip(names, interval.upper.values)},
    }
    _write_json(args.out, payload)
    return 0


def _bench_config(args) -> bench_mod.BenchConfig:
    blob = {}
    if args.scale is not None:
        with open(args.scale, "r", encoding="utf-8") as fh:
            blob = json.load(fh)
    train_cfg = None
    if "train" in blob and blob["train"] is not None:
        t = dict(blob["train"])
        train_cfg = nbe_mod.TrainConfig(
            k=t.get("k", 2000),
            j=t.get("j", 5),
            n_t=blob.get("n_t", 250),
            epochs=t.get("epochs", 30),
            seed=SeedSpec(args.seed, 1),
            batch_size=t.get("batch_size", 128),
            learning_rate=t.get("learning_rate", 1e-3),
            embed_dim=t.get("embed_dim", 32),
            loss=nbe_mod.LossKind.parse(t.get("loss", "msle")),
            val_fraction=t.get("val_fraction", 0.1),
            aggregation=Aggregation(t.get("aggregation", "mean")),
            activation=Activation(t.get("activation", "lrelu")),
            hidden=tuple(t.get("hidden", (32, 32, 32))),
        )
    return bench_mod.BenchConfig(
        n_test=blob.get("n_test", 200),
        n_t=blob.get("n_t", 250),
        train=train_cfg,
        grid_count=blob.get("grid_count", 32),
        restarts=blob.get("restarts", 5),
        mele_grid_count=blob.get("mele_grid_count", 5),
        mele_max_datasets=blob.get("mele_max_datasets"),
    )


def cmd_bench(args) -> int:
    model = _parse_model(args.model)
    prior = _load_prior(args.prior, model)
    config = _bench_config(args)
    method = bench_mod.Method(args.method)
    if method is bench_mod.Method.NBE and config.train is None:
        raise ValueError('NBE bench needs a scale json with a "train" section')
    report = bench_mod.run_benchmark(model, prior, method, config, SeedSpec(args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = f"bench_{model.tag().replace(':', '')}_{method.value}"
    _write_json(str(out / f"{name}.json"), report.to_json_dict())
    (out / f"{name}.md").write_text(report.to_markdown(), encoding="utf-8")
    print(report.to_markdown(), end="")
    return 0


def cmd_sweep(args) -> int:
    model = _parse_model(args.model)
    prior = _load_prior(args.prior, model)
    config = _bench_config(args)
    axis = bench_mod.SweepAxis(args.axis)
    raw = args.values.split(",")
    if axis in (bench_mod.SweepAxis.INPUT_LEN, bench_mod.SweepAxis.PRIOR_DRAWS):
        values = [int(v) for v in raw]
    else:
        values = raw
    reports = bench_mod.sweep(
        axis, values, model, prior, bench_mod.Method(args.method), config,
        SeedSpec(args.seed),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for value, report in zip(values, reports):
        payload = report.to_json_dict()
        payload["axis"] = {"name": axis.value, "value": value}
        _write_json(str(out / f"sweep_{axis.value}_{value}.json"), payload)
        rmses = ", ".join(f"{r.param_name}={r.rmse:.4g}" for r in report.rows)
        print(f"{axis.value}={value}: {rmses}")
    return 0


def cmd_pipeline(args) -> int:
    est = nbe_mod.load(args.artifact)
    fmt = CsvFormat(args.timestamp_col, args.price_col)
    prices = load_prices(args.prices, fmt)
    values, observed = log_returns(prices, args.step)
    seed = SeedSpec(args.seed)
    windows = make_windows(
        values, observed, args.nt, seed, t0=int(prices.timestamps[0]), step=args.step
    )
    kind, b = _parse_uq_method(args.uq)
    bundle = None
    if kind == "quantile":
        if args.bundle is None:
            raise ValueError("--bundle lower,upper,point is required for quantile uq")
        paths = args.bundle.split(",")
        bundle = uq_mod.QuantileBundle(
            nbe_mod.load(paths[0]), nbe_mod.load(paths[1]), nbe_mod.load(paths[2]),
            args.level,
        )
    mode = RescaleMode(args.rescale)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    est_rows = ["window_id,param,value"]
    int_rows = ["window_id,param,point,lower,upper,method,level"]
    names = est.output_box.model.param_names
    crossing_count = 0
    for w_index, window in enumerate(windows):
        factors = rescale_factors(est, window, mode)
        normalized = normalized_window(window)
        point = est.forward_batch(normalized[None, :])[0] * factors
        if kind == "bootstrap":
            interval = uq_mod.bootstrap_interval(
                est,
                IncrementSeries(normalized),
                b,
                args.level,
                SeedSpec(seed.root_seed, w_index + 1),
            )
        else:
            interval = uq_mod.credible_interval(bundle, IncrementSeries(normalized))
            crossing_count += int(np.sum(interval.crossings))
        lo = interval.lower.values * factors
        hi = interval.upper.values * factors
        for i, name in enumerate(names):
            est_rows.append(f"{window.window_id},{name},{_fmt(point[i])}")
            int_rows.append(
                f"{window.window_id},{name},{_fmt(point[i])},{_fmt(lo[i])},"
                f"{_fmt(hi[i])},{interval.method.value},{args.level:g}"
            )
    wall = time.perf_counter() - t0

    (out / "estimates.csv").write_text("\n".join(est_rows) + "\n", encoding="utf-8")
    (out / "intervals.csv").write_text("\n".join(int_rows) + "\n", encoding="utf-8")
    report = {
        "windows": len(windows),
        "n_t": args.nt,
        "step": args.step,
        "uq": args.uq,
        "level": args.level,
        "rescale": mode.value,
        "seed": args.seed,
        "fill_fraction": {
            w.window_id: w.fill_fraction for w in windows if w.fill_fraction > 0
        },
        "gap_flagged": [w.window_id for w in windows if w.gap_flagged],
        "quantile_crossings": crossing_count if kind == "quantile" else None,
        "wall_time_s": wall,
    }
    _write_json(str(out / "report.json"), report)
    print(f"pipeline: {len(windows)} windows -> {out} in {wall:.1f}s")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="levynbe",
        description="Likelihood-free parameter estimation for Levy processes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate unit-time increments")
    p.add_argument("--model", required=True, help="cp, merton, vg, or dvg:<L>")
    p.add_argument("--params", required=True, help="comma-separated parameter values")
    p.add_argument("--n", type=int, required=True, help="series length (n-1 increments)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output .csv or .npz")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a neural Bayes estimator")
    p.add_argument("--model", required=True)
    p.add_argument("--prior", help="json file with lower/upper arrays")
    p.add_argument("--k", type=int, required=True, help="prior draws")
    p.add_argument("--j", type=int, required=True, help="replicates per draw")
    p.add_argument("--nt", type=int, required=True, help="increments per dataset")
    p.add_argument("--loss", default="msle", help="msle, mae, mse, or linlin:<alpha>")
    p.add_argument("--agg", default="mean",
                   choices=[a.value for a in Aggregation])
    p.add_argument("--act", default="lrelu", choices=["lrelu", "relu", "tanh"])
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="artifact path")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--embed", type=int, default=32)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("estimate", help="estimate parameters from one dataset")
    p.add_argument("--method", required=True, choices=["nbe", "lsq", "mele"])
    p.add_argument("--artifact", help="trained estimator (nbe)")
    p.add_argument("--data", required=True, help="increment .csv or .npz")
    p.add_argument("--model", help="model tag (lsq/mele)")
    p.add_argument("--prior", help="prior json (lsq/mele)")
    p.add_argument("--grid-count", type=int,
                   help="frequency count (default 32 for lsq, 5 for mele)")
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the result json here instead of stdout")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("uq", help="interval estimates for one dataset")
    p.add_argument("--artifact", help="trained point estimator")
    p.add_argument("--data", required=True)
    p.add_argument("--method", required=True, help="bootstrap:<B> or quantile")
    p.add_argument("--bundle", help="lower,upper,point artifacts for quantile uq")
    p.add_argument("--level", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_uq)

    p = sub.add_parser("bench", help="benchmark one method on simulated test sets")
    p.add_argument("--model", required=True)
    p.add_argument("--method", required=True, choices=["nbe", "lsq", "mele"])
    p.add_argument("--prior")
    p.add_argument("--scale", help="json with n_test/n_t/train/... knobs")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="benchmark across one configuration axis")
    p.add_argument("--axis", required=True, choices=["nt", "k", "agg", "act"])
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.add_argument("--model", required=True)
    p.add_argument("--method", default="nbe", choices=["nbe", "lsq", "mele"])
    p.add_argument("--prior")
    p.add_argument("--scale")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("pipeline", help="daily estimation over a price series")
    p.add_argument("--prices", required=True, help="price csv")
    p.add_argument("--step", type=int, default=60, help="grid step in seconds")
    p.add_argument("--nt", type=int, default=1440, help="increments per window")
    p.add_argument("--artifact", required=True)
    p.add_argument("--uq", default="bootstrap:400", help="bootstrap:<B> or quantile")
    p.add_argument("--bundle")
    p.add_argument("--level", type=float, default=0.9)
    p.add_argument("--rescale", default="var", choices=["var", "sd"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timestamp-col", default="timestamp")
    p.add_argument("--price-col", default="close")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LevyNbeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
