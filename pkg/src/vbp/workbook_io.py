"""Line-oriented workbook text format.

    # comment
    OPTION max_iterations 1
    OPTION rng_seed 7
    NAME TrData Sheet1!E6:H9
    SET Sheet1!K11 0.1
    ARRAY Sheet1!E11:H11 =OFFSET(TrData,itc,)
    CELL Sheet1!K6 =MOD(itc+1,4)
    VALUE Sheet1!K6 2
    OPTION rng_state 123456789 40

Lines run in order; ARRAY and CELL lines are formula entries and evaluate
once when read.  VALUE lines overwrite a cached formula result and the
``rng_state`` option restores the generator, so a saved workbook reloads
in exactly the state it was saved in.
"""

from __future__ import annotations

import shlex
from pathlib import Path

from .grid import CellAddr, Workbook, WorkbookError, AddressError, parse_address, parse_range
from .formula import ParseError, format_formula
from .values import BLANK, CellError, format_scalar


class FormatError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        where = ""
        if source and line:
            where = f"{source}:{line}: "
        elif line:
            where = f"line {line}: "
        super().__init__(where + message)
        self.line = line
        self.source = source


def parse_literal(text: str):
    text = text.strip()
    if not text:
        return BLANK
    if text.startswith('"'):
        if len(text) < 2 or not text.endswith('"'):
            raise ValueError(f"unterminated text literal {text}")
        return text[1:-1].replace('""', '"')
    up = text.upper()
    if up in ("TRUE", "FALSE"):
        return up == "TRUE"
    if text.startswith("#"):
        return CellError.from_text(text)
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"bad literal {text!r}") from None


def format_literal(value) -> str:
    if isinstance(value, str):
        return '"' + value.replace('"', '""') + '"'
    return format_scalar(value)


def _split(line: str) -> tuple[str, str, str]:
    parts = line.split(None, 2)
    while len(parts) < 3:
        parts.append("")
    return parts[0].upper(), parts[1], parts[2]


def apply_line(wb: Workbook, line: str):
    """Execute one statement against a workbook."""
    kw, target, rest = _split(line)
    if kw == "OPTION":
        key, value = target.lower(), rest.strip()
        if key == "max_iterations":
            wb.set_max_iterations(int(value))
        elif key == "rng_seed":
            wb.set_seed(int(value))
        elif key == "rng_state":
            state, draws = shlex.split(value)
            wb.rng.setstate((int(state), int(draws)))
        else:
            raise ValueError(f"unknown option {target!r}")
    elif kw == "NAME":
        wb.define_name(target, parse_range(rest.strip()))
    elif kw == "SET":
        wb.set_value(parse_address(target), parse_literal(rest))
    elif kw == "VALUE":
        addr = wb._qualify(parse_address(target))
        wb.sheet(addr.sheet).put(addr.row, addr.col, parse_literal(rest))
    elif kw == "ARRAY":
        if not rest.strip().startswith("="):
            raise ValueError("formula must start with '='")
        wb.set_array_formula(parse_range(target), rest.strip())
    elif kw == "CELL":
        if not rest.strip().startswith("="):
            raise ValueError("formula must start with '='")
        wb.set_formula(parse_address(target), rest.strip())
    elif kw == "SHEET":
        wb.sheet(target, create=True)
    else:
        raise ValueError(f"unknown statement {kw!r}")


def loads(text: str, wb: Workbook | None = None, source: str | None = None) -> Workbook:
    wb = wb if wb is not None else Workbook()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            apply_line(wb, line)
        except (ValueError, WorkbookError, AddressError, ParseError) as e:
            raise FormatError(str(e), lineno, source) from e
    return wb


def load_workbook(path) -> Workbook:
    path = Path(path)
    return loads(path.read_text(encoding="utf-8"), source=str(path))


def dumps(wb: Workbook, header: str | None = None) -> str:
    """Serialise names, literals, formulas in entry order, cached values and RNG state."""
    out = []
    if header:
        out.extend(f"# {h}" for h in header.splitlines())
    out.append(f"OPTION rng_seed {wb.calc_settings.rng_seed}")
    out.append(f"OPTION max_iterations {wb.calc_settings.max_iterations}")
    for sname in wb.sheets:
        out.append(f"SHEET {sname}")
    for nr in wb.names.values():
        out.append(f"NAME {nr.name} {nr.target.a1(with_sheet=True)}")
    for sname, sh in wb.sheets.items():
        rows, cols = sh.extent()
        for r in range(1, rows + 1):
            for c in range(1, cols + 1):
                if (r, c) in sh.member:
                    continue
                v = sh.get(r, c)
                if v is BLANK:
                    continue
                out.append(f"SET {sname}!{CellAddr(r, c).a1()} {format_literal(v)}")
        for g in sh.groups.values():
            kw = "ARRAY" if g.is_array else "CELL"
            out.append(f"{kw} {g.region.a1(with_sheet=True)} ={format_formula(g.ast)}")
        for g in sh.groups.values():
            for a in g.region.cells():
                out.append(f"VALUE {sname}!{a.a1()} {format_literal(sh.get(a.row, a.col))}")
    state, draws = wb.rng.getstate()
    out.append(f"OPTION rng_state {state} {draws}")
    return "\n".join(out) + "\n"


def save_workbook(wb: Workbook, path, header: str | None = None):
    Path(path).write_text(dumps(wb, header), encoding="utf-8")
