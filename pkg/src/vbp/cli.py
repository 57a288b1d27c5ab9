"""``vbp`` command line: build, train, crossval, regress, dump, selftest."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import replace
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .builder import build_workbook
from .config import ConfigError, RunConfig, load_config, parse_config
from .data import DataError, Prepared, prepare, read_csv, read_scaler, write_csv, write_scaler
from .formula import ParseError, format_formula
from .grid import AddressError, WorkbookError, parse_range
from .network import SpecError
from .oracle import SingularMatrixError, least_squares_reduced, sse
from .plots import plot_curve, plot_regression, plot_seeds
from .report import RunReport, prepare_data, run_training, seed_summary, train_workbook
from .values import BLANK
from .workbook_io import FormatError, dumps, format_literal, load_workbook

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3

VALIDATION_ERRORS = (ConfigError, DataError, SpecError, FormatError, WorkbookError,
                     AddressError, ParseError, FileNotFoundError)
NUMERIC_ERRORS = (SingularMatrixError, FloatingPointError)


class UsageError(ValueError):
    pass


def parse_seeds(text: str | None) -> list[int] | None:
    """``"3"``, ``"1,2,5"`` or ``"1-5"``."""
    if text is None:
        return None
    seeds: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part:
                lo, hi = (int(x) for x in part.split("-", 1))
                if hi < lo:
                    raise ValueError
                seeds.extend(range(lo, hi + 1))
            else:
                seeds.append(int(part))
    except ValueError:
        raise UsageError(f"bad seed list {text!r}") from None
    return seeds


def _config(args) -> RunConfig:
    if not args.config:
        raise UsageError("--config is required")
    cfg = load_config(args.config)
    over = {}
    if getattr(args, "epochs", None) is not None:
        if args.epochs < 0:
            raise UsageError("--epochs must be >= 0")
        over["epochs"] = args.epochs
    if getattr(args, "data", None):
        over["data"] = Path(args.data)
    if getattr(args, "split", None) is not None:
        over["split"] = args.split
    if getattr(args, "scaler", None):
        over["scaler"] = args.scaler
    return replace(cfg, **over) if over else cfg


def _out_dir(args) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


# -- build -----------------------------------------------------------------------------------

def _config_text(cfg: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.as_dict().items() if v not in (None, ""))


def cmd_build(args) -> int:
    cfg = _config(args)
    seeds = parse_seeds(args.seed)
    if seeds:
        if len(seeds) != 1:
            raise UsageError("build takes a single --seed")
        cfg = cfg.with_seed(seeds[0])
    p = prepare_data(cfg)
    bw = build_workbook(cfg.spec, p.train, p.inputs + p.targets)
    out = _out_dir(args)
    wb_path = out / f"{cfg.name}.wb"
    wb_path.write_text(bw.text, encoding="utf-8")
    write_scaler(p.scaler, out / f"{cfg.name}.scaler.csv")
    files = {"workbook": wb_path.name, "scaler": f"{cfg.name}.scaler.csv"}
    if len(p.test):
        write_csv(out / f"{cfg.name}.test.csv", p.inputs + p.targets, p.test)
        files["test"] = f"{cfg.name}.test.csv"
    lay = bw.layout
    meta = {
        "config": _config_text(cfg),
        "files": files,
        "records": {"in_sample": int(len(p.train)), "out_sample": int(len(p.test)),
                    "rejected": p.rejected},
        "parameters": cfg.spec.parameter_count(),
        "names": lay.names(),
    }
    (out / f"{cfg.name}.wb.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                                  encoding="utf-8")
    print(f"workbook {wb_path}")
    print(f"topology {'-'.join(map(str, cfg.spec.topology))}  "
          f"activations {','.join(cfg.spec.activations)}  parameters {cfg.spec.parameter_count()}")
    print(f"records in-sample {len(p.train)}  out-sample {len(p.test)}  rejected {p.rejected}")
    print(f"parameters: counter {lay.counter}  itc {lay.itc}  itcp1 {lay.itcp1}  ru {lay.ru}  "
          + "  ".join(f"{k} {v}" for k, v in lay.eta.items()))
    print(f"TrData {lay.trdata}  sample A {lay.sample_a}  sample B {lay.sample_b}")
    for region in "AB":
        blocks = [b for b in lay.blocks.values() if b.name.endswith(region)]
        print(f"region {region}: " + "  ".join(f"{b.name} {b.named_range}" for b in blocks))
    print(f"EMA {lay.ema}")
    return EXIT_OK


# -- train / crossval ------------------------------------------------------------------------

def _train_one(cfg: RunConfig) -> RunReport:
    report, bw = run_training(cfg)
    report.workbook_text = dumps(bw.workbook)
    return report


def _from_workbook(path: Path):
    meta_path = path.with_name(path.name + ".meta.json")
    if not meta_path.exists():
        raise ConfigError(f"{meta_path}: missing (rebuild the workbook with 'vbp build')")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    cfg = parse_config(meta["config"], str(meta_path))
    wb = load_workbook(path)
    train = np.asarray(wb.read_range(wb.names["trdata"].target), dtype=np.float64)
    scaler = read_scaler(path.with_name(meta["files"]["scaler"]))
    n = cfg.spec.n_inputs
    if "test" in meta["files"]:
        test = read_csv(path.with_name(meta["files"]["test"]),
                        scaler.columns[:n], scaler.columns[n:]).numeric()
    else:
        test = np.empty((0, train.shape[1]))
    alpha = scaler.alpha[n:]
    return cfg, wb, train, test, alpha


def _epochs_for(cfg: RunConfig, args, S: int) -> int:
    if args.iterations is not None:
        if args.iterations < 0 or args.iterations % S:
            raise UsageError(f"--iterations must be a non-negative multiple of {S} (one epoch)")
        return args.iterations // S
    return cfg.epochs


def _write_report(out: Path, report: RunReport, crossval: bool, baseline=None):
    stem = f"{report.name}-s{report.seed}"

    def path(suffix):
        return out / (stem + suffix)

    path(".curve.csv").write_text(report.curve_csv(), encoding="utf-8")
    path(".wb").write_text(report.workbook_text, encoding="utf-8")
    plot_curve(report, path(".png"), baseline)
    written = [path(s) for s in (".curve.csv", ".wb", ".png")]
    if crossval and report.best is not None:
        path(".best.csv").write_text(report.best_csv(), encoding="utf-8")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["layer", "row", "col", "value"])
        for h, mat in enumerate(report.best.weights, start=1):
            for (i, j), v in np.ndenumerate(mat):
                w.writerow([h, i, j, repr(float(v))])
        path(".best_weights.csv").write_text(buf.getvalue(), encoding="utf-8")
        written += [path(".best.csv"), path(".best_weights.csv")]
    return written


def _summary_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "best_epoch", "best_err", "in_err_at_best", "final_in_err", "final_out_err"])

    def fmt(x):
        return "" if x is None else repr(float(x))

    for r in reports:
        best = r.best
        w.writerow([r.seed, best.epoch if best else "", fmt(best.out_err if best else None),
                    fmt(r.row(best.epoch).in_err if best else None), fmt(r.final.in_err),
                    fmt(r.final.out_err)])
    summ = seed_summary(reports)
    keys = ["best_error", "in_err_at_best", "final_in_err", "final_out_err"]
    for stat in ("min", "median", "max"):
        w.writerow([stat, ""] + [fmt(summ[k][stat]) if summ[k] else "" for k in keys])
    return buf.getvalue()


def _linear_baseline(p: Prepared) -> float | None:
    if not len(p.test):
        return None
    return regress_prepared(p)["out_err"]


def cmd_train(args, crossval: bool = False) -> int:
    out = _out_dir(args)
    if args.workbook:
        if args.config or args.seed:
            raise UsageError("give either a workbook file or --config/--seed, not both")
        cfg, wb, train, test, alpha = _from_workbook(Path(args.workbook))
        if crossval and not len(test):
            raise UsageError("crossval needs an out-sample set (set 'split')")
        epochs = args.epochs if args.epochs is not None else _epochs_for(cfg, args, len(train))
        t = time.perf_counter()
        report = train_workbook(wb, cfg.spec.activations, train, test, alpha, cfg.name,
                                cfg.spec.seed, epochs)
        report.workbook_text = dumps(wb)
        reports = [report]
        elapsed = [time.perf_counter() - t]
        baseline = None
    else:
        cfg = _config(args)
        p = prepare_data(cfg)
        if crossval and not len(p.test):
            raise UsageError("crossval needs an out-sample set (set 'split' or --split)")
        cfg = replace(cfg, epochs=_epochs_for(cfg, args, len(p.train)))
        seeds = parse_seeds(args.seed) or [cfg.spec.seed]
        cfgs = [cfg.with_seed(s) for s in seeds]
        baseline = _linear_baseline(p) if crossval else None
        t0 = time.perf_counter()
        if args.jobs > 1 and len(cfgs) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                reports = list(pool.map(_train_one, cfgs))
        else:
            reports = [_train_one(c) for c in cfgs]
        elapsed = [sum(r.seconds) for r in reports]
        if args.jobs > 1:
            elapsed = [time.perf_counter() - t0]

    for r in reports:
        for path in _write_report(out, r, crossval, baseline):
            print(f"wrote {path}")
        f = r.final
        line = f"seed {r.seed}: epochs {f.epoch}  in-sample {f.in_err:.6g}"
        if f.out_err is not None:
            line += f"  out-sample {f.out_err:.6g}"
        if crossval and r.best is not None:
            line += (f"  best out-sample {r.best.out_err:.6g} at epoch {r.best.epoch}"
                     f" (in-sample {r.row(r.best.epoch).in_err:.6g})")
        print(line)
    if baseline is not None:
        print(f"linear baseline out-sample {baseline:.6g}")
    if len(reports) > 1:
        name = reports[0].name
        (out / f"{name}.seeds.csv").write_text(_summary_csv(reports), encoding="utf-8")
        plot_seeds(reports, out / f"{name}.seeds.png", baseline)
        print(f"wrote {out / f'{name}.seeds.csv'}")
        summ = seed_summary(reports)
        key = "best_error" if crossval else "final_in_err"
        s = summ[key]
        print(f"{key} over {len(reports)} seeds: min {s['min']:.6g}  median {s['median']:.6g}"
              f"  max {s['max']:.6g}")
    # wall clock goes to the terminal only, never into output files
    print(f"wall clock {sum(elapsed):.2f} s")
    return EXIT_OK


# -- regress ---------------------------------------------------------------------------------

def regress_prepared(p: Prepared) -> dict:
    """Least-squares weights on scaled data; errors in original units."""
    n = p.n_inputs

    def design(m):
        return np.vstack([m[:, :n].T, np.ones(len(m))])

    X, T = design(p.train), p.train[:, n:].T
    w, keep = least_squares_reduced(X, T)
    alpha = np.abs(p.target_alpha())[:, None]

    def err(m):
        if not len(m):
            return None
        return float(np.mean(np.abs(m[:, n:].T - w @ design(m)) / alpha))

    return {"weights": w, "kept": keep, "in_err": err(p.train), "out_err": err(p.test),
            "sse": sse(w, X, T), "columns": p.inputs + ["constant"], "targets": p.targets}


def cmd_regress(args) -> int:
    if args.config:
        cfg = _config(args)
        p = prepare_data(cfg)
        name = cfg.name
    elif args.data:
        ds = read_csv(args.data, targets=args.targets.split(",") if args.targets else None)
        p = prepare(ds, args.split, args.scaler or "zscore")
        name = Path(args.data).stem
    else:
        raise UsageError("regress needs --config or --data")
    res = regress_prepared(p)
    out = _out_dir(args)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["target"] + res["columns"])
    for t, row in zip(res["targets"], res["weights"]):
        wr.writerow([t] + [repr(float(v)) for v in row])
    (out / f"{name}.regress.csv").write_text(buf.getvalue(), encoding="utf-8")
    print(buf.getvalue(), end="")
    dropped = [c for i, c in enumerate(res["columns"]) if i not in res["kept"]]
    if dropped:
        print(f"collinear columns given zero weight: {', '.join(dropped)}")
    sse_orig = np.asarray(res["sse"]) / p.target_alpha() ** 2
    print("SSE " + " ".join(f"{t} {v:.6g}" for t, v in zip(res["targets"], sse_orig)))
    print(f"in-sample avg |error| {res['in_err']:.6g}")
    if res["out_err"] is not None:
        print(f"out-sample avg |error| {res['out_err']:.6g}")
    n = p.n_inputs
    sample = p.test if len(p.test) else p.train
    pred = res["weights"] @ np.vstack([sample[:, :n].T, np.ones(len(sample))])
    inv = p.scaler.select(p.targets)
    plot_regression(inv.invert(sample[:, n:]), inv.invert(pred.T), out / f"{name}.regress.png",
                    p.targets[0])
    print(f"wrote {out / f'{name}.regress.csv'}")
    return EXIT_OK


# -- dump / selftest -------------------------------------------------------------------------

def cmd_dump(args) -> int:
    wb = load_workbook(args.workbook)
    if args.name is None:
        print(dumps(wb), end="")
        return EXIT_OK
    key = args.name.lower()
    if key in wb.names:
        rng = wb.names[key].target
    else:
        try:
            rng = parse_range(args.name)
        except AddressError:
            raise WorkbookError(f"unknown name {args.name!r}") from None
        if rng.sheet is None:
            rng = rng.with_sheet(wb.default_sheet)
    if args.formulas:
        sheet = wb.sheet(rng.sheet)
        for r in range(rng.top_left.row, rng.bottom_right.row + 1):
            cells = []
            for c in range(rng.top_left.col, rng.bottom_right.col + 1):
                g = sheet.group_at(r, c)
                cells.append("=" + format_formula(g.ast) if g is not None else
                             _show(sheet.get(r, c)))
            print("\t".join(cells))
    else:
        for row in wb.read_range(rng):
            print("\t".join(_show(v) for v in row))
    return EXIT_OK


def _show(v) -> str:
    if v is BLANK:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (float, np.floating)):
        v = float(v)
    return format_literal(v)


def cmd_selftest(args) -> int:
    from .figures import run_all

    failed = 0
    for name, ok, detail in run_all():
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
        failed += not ok
    print(f"{failed} failed" if failed else "all fixtures passed")
    return EXIT_NUMERIC if failed else EXIT_OK


# -- entry point -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vbp", description="Backpropagation as spreadsheet formulas.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", help="config file, or a bundled name (xor-and, mpg)")
        p.add_argument("--out-dir", default=".", help="where output files go (default: .)")
        if data:
            p.add_argument("--data", help="CSV file overriding the config's data")
            p.add_argument("--split", type=int, help="in-sample record count")
            p.add_argument("--scaler", choices=["zscore", "range"])

    p = sub.add_parser("build", help="write the training workbook for a config")
    common(p)
    p.add_argument("--seed")

    for name, help_ in (("train", "build, initialise and train; write error curves"),
                        ("crossval", "train with keep-best on out-sample error")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("workbook", nargs="?", help="workbook written by 'vbp build'")
        common(p)
        p.add_argument("--seed", help="seed, list (1,2,3) or range (1-5)")
        p.add_argument("--epochs", type=int)
        p.add_argument("--iterations", type=int, help="training passes (a multiple of S)")
        p.add_argument("--jobs", type=int, default=1, help="seeds trained in parallel")

    p = sub.add_parser("regress", help="least-squares baseline")
    common(p)
    p.add_argument("--targets", help="target columns of --data (default: the last column)")

    p = sub.add_parser("dump", help="print values or formulas of a workbook range")
    p.add_argument("workbook")
    p.add_argument("name", nargs="?", help="name or A1 range; omit to print the whole workbook")
    p.add_argument("--formulas", action="store_true", help="formula view instead of values")

    sub.add_parser("selftest", help="run the built-in reference workbooks")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "build": cmd_build,
        "train": cmd_train,
        "crossval": lambda a: cmd_train(a, crossval=True),
        "regress": cmd_regress,
        "dump": cmd_dump,
        "selftest": cmd_selftest,
    }
    try:
        return handlers[args.command](args)
    except NUMERIC_ERRORS as e:
        print(f"vbp: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, *VALIDATION_ERRORS) as e:
        print(f"vbp: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
