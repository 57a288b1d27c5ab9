import filecmp
import re

import numpy as np
import pytest

from vbp.cli import main, parse_seeds
from vbp.config import load_config
from vbp.data import read_scaler
from vbp.oracle import forward, simulate_vbp
from vbp.report import avg_abs_error, prepare_data, run_training


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_seed_lists():
    assert parse_seeds("3") == [3]
    assert parse_seeds("1,4") == [1, 4]
    assert parse_seeds("2-5") == [2, 3, 4, 5]


def test_build_outputs(tmp_path, capsys):
    code, out, _ = run(capsys, "build", "--config", "mpg", "--out-dir", tmp_path)
    assert code == 0
    assert "parameters 2061" in out and "region B:" in out
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["mpg.scaler.csv", "mpg.test.csv", "mpg.wb", "mpg.wb.meta.json"]
    sc = read_scaler(tmp_path / "mpg.scaler.csv")
    assert sc.columns[-1] == "mpg" and sc.kind == "zscore"


def test_range_scaler_flag(tmp_path, capsys):
    assert run(capsys, "build", "--config", "mpg", "--scaler", "range", "--out-dir", tmp_path)[0] == 0
    sc = read_scaler(tmp_path / "mpg.scaler.csv")
    assert sc.kind == "range"


def test_validation_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("topology = 2--2\n")
    code, _, err = run(capsys, "build", "--config", bad, "--out-dir", tmp_path)
    assert code == 2 and "bad.cfg:1" in err
    assert run(capsys, "train", "--config", "missing.cfg")[0] == 2
    assert run(capsys, "crossval", "--config", "xor-and", "--out-dir", tmp_path)[0] == 2
    assert run(capsys, "train", "--config", "xor-and", "--iterations", "7",
               "--out-dir", tmp_path)[0] == 2
    data = tmp_path / "d.csv"
    data.write_text("x,t\n1,2\nfoo,3\n")
    cfg = tmp_path / "c.cfg"
    cfg.write_text(f"topology = 1-1\ndata = {data}\nscaler = none\n")
    assert run(capsys, "train", "--config", cfg, "--out-dir", tmp_path)[0] == 2


def test_numerical_failure_exit_code(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("x,y,t\n1,2,1\n2,4,2\n3,6,3\n")
    code, _, err = run(capsys, "regress", "--data", data, "--out-dir", tmp_path)
    # y is a multiple of x, so one of them is dropped and the fit succeeds
    assert code == 0
    cfg = tmp_path / "div.cfg"
    cfg.write_text(f"topology = 2-1\nactivations = identity\neta = 1e6\ndata = {data}\n"
                   "scaler = none\nepochs = 50\n")
    code, _, err = run(capsys, "train", "--config", cfg, "--out-dir", tmp_path)
    assert code == 3 and "numerical" in err


def test_train_outputs_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        code, out, _ = run(capsys, "train", "--config", "xor-and", "--seed", "1-2",
                           "--epochs", "20", "--out-dir", d)
        assert code == 0
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(["xor-and-s1.curve.csv", "xor-and-s1.wb", "xor-and-s1.png",
                            "xor-and-s2.curve.csv", "xor-and-s2.wb", "xor-and-s2.png",
                            "xor-and.seeds.csv", "xor-and.seeds.png"])
    match, mismatch, errors = filecmp.cmpfiles(a, b, files, shallow=False)
    assert mismatch == [] and errors == []
    curve = (a / "xor-and-s1.curve.csv").read_text().splitlines()
    assert curve[0] == "epoch,in_err,out_err,ema" and len(curve) == 22
    assert "wall clock" in out


def test_iterations_flag(tmp_path, capsys):
    code, out, _ = run(capsys, "train", "--config", "xor-and", "--iterations", "40",
                       "--out-dir", tmp_path)
    assert code == 0 and "epochs 10" in out


def test_train_from_built_workbook_matches_config_run(tmp_path, capsys):
    run(capsys, "build", "--config", "xor-and", "--out-dir", tmp_path / "w")
    run(capsys, "train", tmp_path / "w" / "xor-and.wb", "--epochs", "15", "--out-dir", tmp_path / "x")
    run(capsys, "train", "--config", "xor-and", "--epochs", "15", "--out-dir", tmp_path / "y")
    assert (tmp_path / "x" / "xor-and-s1.curve.csv").read_text() == \
        (tmp_path / "y" / "xor-and-s1.curve.csv").read_text()


def test_crossval_and_dump(tmp_path, capsys):
    code, out, _ = run(capsys, "crossval", "--config", "mpg", "--epochs", "2", "--out-dir", tmp_path)
    assert code == 0 and "best out-sample" in out and "linear baseline" in out
    best = (tmp_path / "mpg-s1.best.csv").read_text().splitlines()[1:]
    errs = [float(line.split(",")[1]) for line in best]
    assert errs == sorted(errs, reverse=True)
    wb = tmp_path / "mpg-s1.wb"
    code, out, _ = run(capsys, "dump", wb, "w_1A", "--formulas")
    assert code == 0
    assert out.splitlines()[0].split("\t")[0] == "=IF(ru=0,2*RAND()-1,w_1B+eta*(TRANSPOSE(inpB)*del_1B))"
    code, out, _ = run(capsys, "dump", wb, "inpA")
    assert out.splitlines()[-1] == "1"
    code, out, _ = run(capsys, "dump", wb, "EMA")
    ema = float(out.strip())
    curve = (tmp_path / "mpg-s1.curve.csv").read_text().splitlines()[-1].split(",")
    alpha = read_scaler_alpha(tmp_path)
    assert ema > 0 and ema / alpha == pytest.approx(float(curve[3]), rel=1e-12)
    assert run(capsys, "dump", wb, "nosuch")[0] == 2


def read_scaler_alpha(tmp_path):
    cfg = load_config("mpg")
    return float(prepare_data(cfg).target_alpha()[0])


def test_regress_mpg(tmp_path, capsys):
    code, out, _ = run(capsys, "regress", "--config", "mpg", "--out-dir", tmp_path)
    assert code == 0
    assert "collinear columns given zero weight: usa" in out
    m_in = re.search(r"in-sample avg \|error\| ([\d.]+)", out)
    assert abs(float(m_in.group(1)) - 2.44) < 0.15
    assert (tmp_path / "mpg.regress.png").exists()


def test_selftest(capsys):
    code, out, _ = run(capsys, "selftest")
    assert code == 0 and "FAIL" not in out


def test_epochs_zero_has_only_init_row():
    cfg = load_config("xor-and")
    from dataclasses import replace
    report, _ = run_training(replace(cfg, epochs=0))
    assert [r.epoch for r in report.rows] == [0]


def test_report_matches_oracle_end_to_end():
    from dataclasses import replace
    cfg = replace(load_config("xor-and").with_seed(7), epochs=5)
    report, _ = run_training(cfg)
    p = prepare_data(cfg)
    traj, _ = simulate_vbp(cfg.spec, p.train, 1 + 5 * 4)
    want = avg_abs_error(traj[-1], cfg.spec.activations, p.train, 2, p.target_alpha())
    assert report.final.in_err == pytest.approx(want, abs=1e-12)
    assert np.isfinite(report.final.ema)


def test_regress_four_record_table(tmp_path, capsys):
    from vbp.data import bundled
    code, out, _ = run(capsys, "regress", "--data", bundled("xor_and.csv"), "--targets",
                       "targ1,targ2", "--scaler", "range", "--out-dir", tmp_path)
    assert code == 0
    sse = re.search(r"SSE targ1 (\S+) targ2 (\S+)", out)
    assert float(sse.group(1)) == pytest.approx(1.0, abs=1e-9)
    assert float(sse.group(2)) == pytest.approx(0.25, abs=1e-9)


def test_original_unit_errors_are_scaled_errors_over_alpha():
    from vbp.report import abs_errors
    cfg = load_config("mpg")
    p = prepare_data(cfg)
    rng = np.random.default_rng(3)
    ws = [rng.normal(size=s) * 0.3 for s in cfg.spec.weight_shapes()]
    alpha = p.target_alpha()
    scaled = abs_errors(ws, cfg.spec.activations, p.train, p.n_inputs, np.ones_like(alpha))
    orig = abs_errors(ws, cfg.spec.activations, p.train, p.n_inputs, alpha)
    raw = p.scaler.select(p.targets)
    outs = np.array([forward(ws, cfg.spec.activations, r[:p.n_inputs]).out[:, 0]
                     for r in p.train])
    direct = np.abs(raw.invert(p.train[:, p.n_inputs:]) - raw.invert(outs))
    np.testing.assert_allclose(orig, scaled / np.abs(alpha), rtol=1e-12, atol=0)
    np.testing.assert_allclose(orig.reshape(direct.shape), direct, rtol=1e-9, atol=1e-12)


def test_keep_best_on_improving_run_is_last_epoch():
    from dataclasses import replace
    cfg = replace(load_config("xor-and").with_seed(2), epochs=8)
    report, _ = run_training(cfg)
    ins = [r.in_err for r in report.rows]
    assert all(b < a for a, b in zip(ins, ins[1:]))
    assert report.best.epoch == 8
    scores = [s for _, s in report.snapshots]
    assert scores == sorted(scores, reverse=True)
