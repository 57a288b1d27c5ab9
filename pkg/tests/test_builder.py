import numpy as np
import pytest

from vbp.builder import (
    activation_formula, build_forward_sheet, build_workbook, derivative_formula, extract_weights,
    init_run, read_vector, train_run,
)
from vbp.engine import calculate_sheet
from vbp.figures import XOR_AND
from vbp.formula import format_formula, parse_formula
from vbp.network import NetworkSpec
from vbp.oracle import forward, simulate_vbp


def _formula(wb, name):
    rng = wb.resolve(name)
    g = wb.sheet(rng.sheet).group_at(rng.top_left.row, rng.top_left.col)
    return format_formula(g.ast)


@pytest.fixture
def xor_bw():
    return build_workbook(NetworkSpec("2-2-2-2", "tanh", 0.1, seed=4), XOR_AND)


def test_formula_texts(xor_bw):
    wb = xor_bw.workbook
    assert _formula(wb, "w_1A") == "IF(ru=0,RAND(),w_1B+eta*(TRANSPOSE(inpB)*del_1B))"
    assert _formula(wb, "w_1B") == "w_1A+eta*(TRANSPOSE(inpA)*del_1A)"
    assert _formula(wb, "out_1A") == "TANH(MMULT(w_1A,inpA))"
    assert _formula(wb, "delA") == "(targA-outA)*(1-outA^2)"
    assert _formula(wb, "del_1B") == "MMULT(TRANSPOSE(w_2B),del_2B)*(1-out_1B^2)"
    assert _formula(wb, "itc") == "MOD(itc+1,4)"
    assert _formula(wb, "itcp1") == "MOD(itcp1+1,4)"
    assert _formula(wb, "EMA").startswith("IF(")


def test_activation_forms():
    assert activation_formula("relu", "MMULT(w,p)") == "IF(MMULT(w,p)>0,MMULT(w,p),0)"
    assert derivative_formula("relu", "out") == "IF(out>0,1,0)"
    assert derivative_formula("identity", "out") is None
    assert parse_formula(activation_formula("logistic", "z")) == parse_formula("1/(1+EXP(-z))")


def test_bias_cells_and_named_regions(xor_bw):
    wb = xor_bw.workbook
    assert read_vector(wb, "inpA")[-1, 0] == 1
    assert read_vector(wb, "out_1B")[-1, 0] == 1
    assert read_vector(wb, "outB").shape == (2, 1)
    assert wb.resolve("TrData").shape == (4, 4)


def test_entry_state_counters(xor_bw):
    wb = xor_bw.workbook
    assert [wb.get_value(wb.resolve(n).top_left) for n in ("counter", "itc", "itcp1")] == [0, 0, 1]
    assert wb.rng.draws == 0


def test_init_pass_invariants(xor_bw):
    wb = xor_bw.workbook
    init_run(wb)
    assert wb.rng.draws == xor_bw.spec.parameter_count()
    assert wb.get_value(wb.resolve("itc").top_left) == 1
    assert wb.get_value(wb.resolve("itcp1").top_left) == 2
    wa, wb_ = extract_weights(wb, "A"), extract_weights(wb, "B")
    for h, prev in enumerate(["inpA", "out_1A", "out_2A"], start=1):
        assert np.all((wa[h - 1] >= 0) & (wa[h - 1] < 1))
        p = read_vector(wb, prev)
        d = read_vector(wb, ["del_1A", "del_2A", "delA"][h - 1])
        assert np.allclose(wb_[h - 1] - wa[h - 1], 0.1 * (p.T * d), atol=1e-15)


def test_training_does_not_draw(xor_bw):
    wb = xor_bw.workbook
    init_run(wb)
    draws = wb.rng.draws
    train_run(wb, 12)
    assert wb.rng.draws == draws
    assert wb.get_value(wb.resolve("counter").top_left) == 13


def test_train_run_zero_is_noop(xor_bw):
    wb = xor_bw.workbook
    init_run(wb)
    before = extract_weights(wb)
    train_run(wb, 0)
    assert all(np.array_equal(a, b) for a, b in zip(before, extract_weights(wb)))


@pytest.mark.parametrize("sampling", ["sequential", "shuffled", "random"])
@pytest.mark.parametrize("init", ["uniform01", "symmetric"])
def test_engine_matches_oracle(sampling, init):
    spec = NetworkSpec("2-3-2", ["logistic", "relu"], [0.3, 0.2], seed=21, sampling=sampling,
                       random_init=init)
    data = np.random.default_rng(1).normal(size=(7, 4))
    bw = build_workbook(spec, data)
    init_run(bw.workbook)
    train_run(bw.workbook, 30)
    traj, st = simulate_vbp(spec, data, 31)
    for a, b in zip(extract_weights(bw.workbook), traj[-1]):
        assert np.max(np.abs(a - b)) <= 1e-12
    assert bw.workbook.rng.draws == st.draws


def test_per_layer_learning_rates_get_own_cells():
    spec = NetworkSpec("2-2-1", "tanh", [0.1, 0.05])
    bw = build_workbook(spec, XOR_AND[:, :3])
    assert set(bw.layout.eta) == {"eta_1", "eta_2"}
    assert "eta_2" in _formula(bw.workbook, "w_2B")


def test_forward_sheet_default_layout():
    ws = [np.arange(9.0).reshape(3, 3) / 10, np.arange(8.0).reshape(2, 4) / 10]
    fs = build_forward_sheet([2, 3, 2], ["tanh", "identity"], ws, sample=[0.5, -0.5])
    wb = fs.workbook
    assert {k: v.a1() for k, v in fs.blocks.items()} == {
        "inp": "B5:B7", "w_1": "C5:E7", "out_1": "F5:F7", "w_2": "G5:J6", "out": "K5:K6"}
    calculate_sheet(wb)
    got = np.asarray(wb.read_range(fs.blocks["out"]), dtype=np.float64)
    assert np.allclose(got, forward(ws, ["tanh", "identity"], [0.5, -0.5]).out, atol=1e-12)
