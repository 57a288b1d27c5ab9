"""Training runs: epoch loop, error curves in original units, keep-best snapshots."""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field

import numpy as np

from .builder import BuiltWorkbook, build_workbook, extract_weights, init_run, train_run
from .config import ConfigError, RunConfig
from .data import Prepared, prepare, read_csv
from .grid import Workbook
from .oracle import forward


@dataclass
class EpochRow:
    epoch: int
    in_err: float
    out_err: float | None
    ema: float


@dataclass
class BestWeights:
    epoch: int
    weights: list
    out_err: float


@dataclass
class RunReport:
    name: str
    seed: int
    rows: list = field(default_factory=list)
    best: BestWeights | None = None
    snapshots: list = field(default_factory=list)  # (epoch, error) at every improvement
    seconds: list = field(default_factory=list)    # wall clock per epoch, never written to files
    workbook_text: str = ""

    def curve_csv(self) -> str:
        buf = io.StringIO()
        buf.write("epoch,in_err,out_err,ema\n")
        for r in self.rows:
            out = "" if r.out_err is None else repr(r.out_err)
            buf.write(f"{r.epoch},{r.in_err!r},{out},{r.ema!r}\n")
        return buf.getvalue()

    def best_csv(self) -> str:
        buf = io.StringIO()
        buf.write("epoch,error\n")
        for e, err in self.snapshots:
            buf.write(f"{e},{err!r}\n")
        return buf.getvalue()

    def row(self, epoch: int) -> EpochRow:
        return next(r for r in self.rows if r.epoch == epoch)

    @property
    def final(self) -> EpochRow:
        return self.rows[-1]


def prepare_data(cfg: RunConfig) -> Prepared:
    if cfg.data is None:
        raise ConfigError(f"{cfg.source}: no data file configured")
    ds = read_csv(cfg.data, cfg.inputs or None, cfg.targets or None)
    return prepare(ds, cfg.split, cfg.scaler, cfg.split_order, cfg.spec.seed, cfg.ddof)


def abs_errors(weights, activations, data, n_inputs: int, alpha) -> np.ndarray:
    """Per-record, per-target |target - output| in original units."""
    data = np.asarray(data, dtype=np.float64)
    out = np.empty((data.shape[0], data.shape[1] - n_inputs))
    for i, rec in enumerate(data):
        y = forward(weights, activations, rec[:n_inputs]).out[:, 0]
        out[i] = np.abs(rec[n_inputs:] - y)
    return out / np.abs(np.asarray(alpha, dtype=np.float64))


def avg_abs_error(weights, activations, data, n_inputs: int, alpha) -> float | None:
    if len(data) == 0:
        return None
    return float(np.mean(abs_errors(weights, activations, data, n_inputs, alpha)))


def _ema_value(wb: Workbook, alpha) -> float:
    ema = np.asarray(wb.read_range(wb.names["ema"].target), dtype=np.float64).ravel()
    return float(np.mean(ema / np.abs(alpha)))


def train_workbook(wb: Workbook, activations, train, test, alpha, name: str, seed: int,
                   epochs: int, keep_best: bool = True, on_epoch=None) -> RunReport:
    """Init pass, then ``epochs`` epochs of S passes each on a built workbook.

    After every epoch the Region-B weights are evaluated with the reference
    forward pass on both sample sets.  With ``keep_best`` the weights with
    the lowest out-sample error (in-sample if there is no out-sample set)
    are kept.
    """
    train = np.asarray(train, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    n = train.shape[1] - len(np.atleast_1d(alpha))
    S = train.shape[0]
    report = RunReport(name, seed)

    def record(epoch: int, seconds: float):
        try:
            w = extract_weights(wb)
        except TypeError:  # an error value such as #NUM in a weight cell
            raise FloatingPointError(f"error value in weights after epoch {epoch}") from None
        if not all(np.isfinite(x).all() for x in w):
            raise FloatingPointError(f"non-finite weights after epoch {epoch}")
        row = EpochRow(epoch, avg_abs_error(w, activations, train, n, alpha),
                       avg_abs_error(w, activations, test, n, alpha),
                       _ema_value(wb, alpha))
        report.rows.append(row)
        report.seconds.append(seconds)
        score = row.out_err if row.out_err is not None else row.in_err
        if keep_best and (report.best is None or score < report.best.out_err):
            report.best = BestWeights(epoch, [x.copy() for x in w], score)
            report.snapshots.append((epoch, score))
        if on_epoch is not None:
            on_epoch(row, seconds)

    t = time.perf_counter()
    init_run(wb)
    record(0, time.perf_counter() - t)
    for epoch in range(1, epochs + 1):
        t = time.perf_counter()
        train_run(wb, S)
        record(epoch, time.perf_counter() - t)
    return report


def run_training(cfg: RunConfig, prepared: Prepared | None = None, keep_best: bool = True,
                 on_epoch=None) -> tuple[RunReport, BuiltWorkbook]:
    """Build the workbook for ``cfg`` and train it for ``cfg.epochs`` epochs."""
    p = prepared if prepared is not None else prepare_data(cfg)
    bw = build_workbook(cfg.spec, p.train, p.inputs + p.targets)
    report = train_workbook(bw.workbook, cfg.spec.activations, p.train, p.test,
                            p.target_alpha(), cfg.name, cfg.spec.seed, cfg.epochs,
                            keep_best, on_epoch)
    return report, bw


def seed_summary(reports) -> dict:
    """min / median / max over seeds of the headline numbers."""
    def stats(xs):
        xs = [x for x in xs if x is not None]
        if not xs:
            return None
        return {"min": float(np.min(xs)), "median": float(np.median(xs)), "max": float(np.max(xs))}

    return {
        "seeds": [r.seed for r in reports],
        "best_error": stats([r.best.out_err for r in reports if r.best]),
        "in_err_at_best": stats([r.row(r.best.epoch).in_err for r in reports if r.best]),
        "final_in_err": stats([r.final.in_err for r in reports]),
        "final_out_err": stats([r.final.out_err for r in reports]),
    }
