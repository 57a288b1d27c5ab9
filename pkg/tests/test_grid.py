import numpy as np
import pytest
from hypothesis import given, strategies as st

from vbp.grid import (
    MAX_COL, AddressError, CalcSettings, CellAddr, RangeRef, Workbook, WorkbookError,
    col_to_letters, format_address, letters_to_col, parse_address, parse_range,
)
from vbp.values import BLANK, CellError


def test_parse_address_examples():
    assert parse_address("B2") == CellAddr(2, 2)
    assert parse_address("AA10") == CellAddr(10, 27)
    assert parse_address("$C$3") == CellAddr(3, 3)
    assert parse_address("VBP!E11") == CellAddr(11, 5, "VBP")


@pytest.mark.parametrize("bad", ["", "2B", "B0", "A", "XFE1", "B-2"])
def test_parse_address_rejects(bad):
    with pytest.raises(AddressError):
        parse_address(bad)


@given(st.integers(1, 10**6), st.integers(1, MAX_COL))
def test_address_roundtrip(row, col):
    addr = CellAddr(row, col)
    assert parse_address(format_address(addr)) == addr


@given(st.integers(1, MAX_COL))
def test_column_letters_roundtrip(col):
    assert letters_to_col(col_to_letters(col)) == col


def test_range_shape_and_cells():
    r = parse_range("E6:H9")
    assert r.shape == (4, 4)
    assert len(list(r.cells())) == 16
    assert parse_range("C4").shape == (1, 1)
    assert r.intersects(parse_range("H9:J12"))
    assert not r.intersects(parse_range("I1:J5"))


def test_names_are_case_insensitive():
    wb = Workbook()
    wb.define_name("TrData", "E6:H9")
    assert wb.resolve("trdata").a1() == "E6:H9"
    with pytest.raises(WorkbookError):
        wb.define_name("TRDATA", "A1")


@pytest.mark.parametrize("bad", ["B2", "1abc", "has space"])
def test_bad_names(bad):
    with pytest.raises((WorkbookError, AddressError)):
        Workbook().define_name(bad, "A1")


def test_values_and_blank():
    wb = Workbook()
    assert wb.get_value("A1") is BLANK
    wb.set_value("A1", 2.5)
    wb.set_value("B1", "text")
    wb.set_value("C1", CellError.NA)
    assert wb.get_value("A1") == 2.5
    assert wb.get_value("B1") == "text"
    assert wb.get_value("C1") is CellError.NA
    block = wb.read_range(parse_range("A1:C1"))
    assert block.shape == (1, 3)


def test_numeric_block_is_float_array():
    wb = Workbook()
    for i in range(3):
        wb.set_value(CellAddr(1 + i, 1, wb.default_sheet), float(i))
    block = wb.read_range(parse_range("A1:A3"))
    assert block.dtype == np.float64


def test_array_groups_cannot_overlap():
    wb = Workbook()
    wb.set_array_formula("A1:B2", "=1")
    with pytest.raises(WorkbookError):
        wb.set_array_formula("B2:C3", "=2")


def test_literal_into_array_group_rejected():
    wb = Workbook()
    wb.set_array_formula("A1:B2", "=1")
    with pytest.raises(WorkbookError):
        wb.set_value("B2", 3.0)


def test_calc_settings_validation():
    with pytest.raises(ValueError):
        CalcSettings(max_iterations=0)


def test_range_of():
    r = RangeRef.of(3, 2, 2, 4)
    assert r.a1() == "B3:E4"
