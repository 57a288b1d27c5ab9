import io
import time

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from vbp.engine import calculate_sheet, evaluate, splice
from vbp.figures import fixtures
from vbp.grid import Workbook, parse_range
from vbp.values import BLANK, CellError
from vbp.workbook_io import loads


def _wb(text=""):
    return loads(text)


@pytest.mark.parametrize("fx", fixtures(), ids=lambda f: f.name)
def test_reference_workbooks(fx):
    assert fx.mismatches(fx.run()) == []


def test_entry_evaluates_once_in_entry_order():
    wb = Workbook()
    wb.set_formula("B2", "=B2+1")
    wb.set_formula("D2", "=D4+1")
    wb.set_formula("D4", "=D2+1")
    assert [wb.get_value(a) for a in ("B2", "D2", "D4")] == [1, 1, 2]


def test_max_iterations_is_passes_per_calculate():
    wb = _wb("CELL B2 =B2+1\nOPTION max_iterations 5")
    calculate_sheet(wb)
    assert wb.get_value("B2") == 6


def test_row_major_latest_values():
    # C1 is read by A2 after it changed in the same pass
    wb = _wb("CELL C1 =C1+1\nCELL A2 =C1*10")
    calculate_sheet(wb)
    assert wb.get_value("A2") == 20


def test_trace_lines():
    wb = _wb("CELL B2 =B2+1\nSET C3 5\nCELL D4 =C3")
    buf = io.StringIO()
    calculate_sheet(wb, trace=buf)
    assert buf.getvalue() == "1,B2,1,2\n"


# -- arrays ------------------------------------------------------------------------------------

def _array_wb(a, b):
    wb = Workbook()
    sh = wb.sheet("Sheet1", create=True)
    sh.write_block(1, 1, np.asarray(a, dtype=np.float64))
    sh.write_block(1, 20, np.asarray(b, dtype=np.float64))
    wb.define_name("a_", parse_range(f"A1:{_corner(1, np.shape(a))}"))
    wb.define_name("b_", parse_range(f"T1:{_corner(20, np.shape(b))}"))
    return wb


def _corner(col, shape):
    from vbp.grid import col_to_letters
    return f"{col_to_letters(col + shape[1] - 1)}{shape[0]}"


small = st.floats(-100, 100, allow_nan=False)


@given(st.integers(1, 4), st.integers(1, 4), st.data())
def test_same_shape_is_hadamard(m, n, data):
    a = data.draw(hnp.arrays(np.float64, (m, n), elements=small))
    b = data.draw(hnp.arrays(np.float64, (m, n), elements=small))
    got = evaluate(_array_wb(a, b), "a_*b_", shape=(m, n))
    want = np.array([[a[i, j] * b[i, j] for j in range(n)] for i in range(m)])
    assert np.array_equal(np.asarray(got, dtype=np.float64).reshape(m, n), want)


@given(st.integers(2, 5), st.integers(2, 5), st.data())
def test_row_times_column_is_outer_product(m, n, data):
    a = data.draw(hnp.arrays(np.float64, (1, n), elements=small))
    b = data.draw(hnp.arrays(np.float64, (m, 1), elements=small))
    got = np.asarray(evaluate(_array_wb(a, b), "a_*b_", shape=(m, n)), dtype=np.float64)
    want = np.array([[a[0, j] * b[i, 0] for j in range(n)] for i in range(m)])
    assert np.array_equal(got, want)


def test_mismatched_shapes_give_value_error():
    got = evaluate(_array_wb(np.ones((2, 3)), np.ones((3, 2))), "a_+b_", shape=(2, 3))
    assert all(v is CellError.VALUE for v in np.ravel(got))


@given(hnp.arrays(np.float64, (3, 3), elements=st.floats(-5, 5, allow_nan=False)))
def test_minverse_times_matrix_is_identity(m):
    if np.linalg.cond(m) > 1e6:
        return
    wb = _array_wb(m, np.zeros((1, 1)))
    got = np.asarray(evaluate(wb, "MMULT(MINVERSE(a_),a_)", shape=(3, 3)), dtype=np.float64)
    assert np.max(np.abs(got - np.eye(3))) < 1e-9


def test_minverse_singular_is_num_error():
    wb = _array_wb(np.ones((2, 2)), np.zeros((1, 1)))
    got = evaluate(wb, "MINVERSE(a_)", shape=(2, 2))
    assert all(v is CellError.NUM for v in np.ravel(got))


def test_splice_rules():
    res = splice(np.arange(6.0).reshape(2, 3), (3, 2))
    assert res[0, 0] == 0 and res[1, 1] == 4 and res[2, 0] is CellError.NA
    assert np.all(splice(7.0, (2, 2)) == 7.0)
    assert splice(BLANK, (1, 1))[0, 0] == 0


# -- functions -----------------------------------------------------------------------------------

@pytest.mark.parametrize("text,want", [
    ("MOD(-1,4)", 3.0), ("MOD(7,-3)", -2.0), ("MOD(5.5,2)", 1.5),
    ("-2^2", 4.0), ("2^3^2", 512.0), ("1/(1+EXP(0))", 0.5), ("TANH(0)", 0.0),
    ("ABS(-3)", 3.0), ("SUM(1,2,3)", 6.0), ("AVERAGE(1,2,3)", 2.0), ("MAX(1,5,3)", 5.0),
    ("MIN(4,2,8)", 2.0), ("STDEV(2,4,4,4,5,5,7,9)", np.std([2, 4, 4, 4, 5, 5, 7, 9], ddof=1)),
    ("IF(1>0,10,20)", 10.0), ("IF(0,10)", False), ("ISNUMBER(3)", True),
    ('ISNUMBER("x")', False), ("Z99+1", 1.0),
])
def test_scalar_functions(text, want):
    got = evaluate(Workbook(), text)
    if isinstance(want, float):
        assert got == pytest.approx(want, abs=1e-15)
    else:
        assert got == want


@pytest.mark.parametrize("text,err", [
    ("1/0", CellError.DIV0), ("MOD(1,0)", CellError.DIV0), ("nosuchname", CellError.NAME),
    ('"a"+1', CellError.VALUE), ("OFFSET(A1,-2,0)", CellError.REF),
])
def test_error_values(text, err):
    assert evaluate(Workbook(), text) is err


def test_offset_inherits_size():
    wb = _wb("NAME TrData E6:H9\n" + "".join(f"SET {c}{r} {r * 10 + i}\n"
                                          for r in range(6, 10) for i, c in enumerate("EFGH")))
    got = evaluate(wb, "OFFSET(TrData,2,)", shape=(1, 4))
    # the reference keeps TrData's 4x4 size; a one-row target shows its first row
    assert got.shape == (4, 4)
    assert np.array_equal(splice(got, (1, 4)).astype(np.float64), [[80, 81, 82, 83]])
    assert got[2, 0] is BLANK


# -- randomness --------------------------------------------------------------------------------

def test_rand_draws_once_per_cell_row_major():
    wb = _wb("OPTION rng_seed 11\nARRAY A1:C2 =RAND()")
    from vbp.prng import SplitMix64
    r = SplitMix64(11)
    want = [[r.random() for _ in range(3)] for _ in range(2)]
    assert np.array_equal(wb.read_range(parse_range("A1:C2")), want)
    assert wb.rng.draws == 6


def test_untaken_branch_draws_nothing():
    wb = _wb("SET Z1 1\nARRAY A1:C2 =IF(Z1=0,RAND(),5)")
    assert wb.rng.draws == 0
    wb.set_value("Z1", 0.0)
    calculate_sheet(wb)
    assert wb.rng.draws == 6
    wb.set_value("Z1", 1.0)
    calculate_sheet(wb)
    assert wb.rng.draws == 6


def test_array_condition_evaluates_each_branch_once():
    wb = _wb("SET Z1 0\nSET Z2 1\nARRAY A1:A2 =IF(Z1:Z2=0,RANDBETWEEN(1,6),0)")
    assert wb.rng.draws == 1


def test_volatile_cells_are_distinct():
    wb = _wb("OPTION rng_seed 3\nARRAY A1:D4 =2*RAND()-1")
    vals = np.ravel(wb.read_range(parse_range("A1:D4")))
    assert len(set(vals)) == 16
    assert np.all((vals >= -1) & (vals < 1))


def test_circular_fixture_speed():
    t = time.perf_counter()
    for fx in fixtures()[:5]:
        fx.run()
    assert time.perf_counter() - t < 1.0
