"""Workbook state: addresses, ranges, named ranges, cells, and formula entry."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .values import BLANK, CellError

MAX_COL = 16384  # XFD

_ADDR_RE = re.compile(r"^(?:(?P<sheet>[A-Za-z_][A-Za-z0-9_]*)!)?"
                      r"\$?(?P<col>[A-Za-z]{1,3})\$?(?P<row>[0-9]+)$")
NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")

# type codes held per cell
K_BLANK, K_NUM, K_BOOL, K_TEXT, K_ERR = 0, 1, 2, 3, 4


class AddressError(ValueError):
    pass


class WorkbookError(ValueError):
    pass


def col_to_letters(col: int) -> str:
    s = ""
    while col > 0:
        col, rem = divmod(col - 1, 26)
        s = chr(ord("A") + rem) + s
    return s


def letters_to_col(letters: str) -> int:
    col = 0
    for ch in letters.upper():
        col = col * 26 + (ord(ch) - ord("A") + 1)
    return col


@dataclass(frozen=True, order=True)
class CellAddr:
    row: int
    col: int
    sheet: str | None = None

    def __post_init__(self):
        if self.col < 1 or self.row < 1:
            raise AddressError(f"address out of range: col={self.col}, row={self.row}")

    def a1(self, with_sheet=False) -> str:
        text = f"{col_to_letters(self.col)}{self.row}"
        if with_sheet and self.sheet:
            return f"{self.sheet}!{text}"
        return text

    def __str__(self):
        return self.a1(with_sheet=True)

    def offset(self, drow: int, dcol: int) -> "CellAddr":
        return CellAddr(self.row + drow, self.col + dcol, self.sheet)


def _bad_char(text: str) -> str:
    """Find the first character that cannot belong to an A1 address."""
    body = text.split("!", 1)[-1]
    start = len(text) - len(body)
    stage = "col"
    for i, ch in enumerate(body):
        if ch == "$":
            continue
        if stage == "col" and ch.isalpha():
            continue
        if ch.isdigit() and (stage == "row" or i > 0):
            stage = "row"
            continue
        return f"{ch!r} at position {start + i}"
    return "end of text"


def parse_address(text: str) -> CellAddr:
    """Parse 'B2', '$B$2' or 'Sheet1!B2' into a CellAddr."""
    m = _ADDR_RE.match(text.strip())
    if not m:
        raise AddressError(f"malformed cell address {text!r}: unexpected {_bad_char(text.strip())}")
    col = letters_to_col(m["col"])
    row = int(m["row"])
    if row < 1:
        raise AddressError(f"malformed cell address {text!r}: row must be >= 1")
    if col > MAX_COL:
        raise AddressError(f"malformed cell address {text!r}: column beyond XFD")
    return CellAddr(row, col, m["sheet"])


def format_address(addr: CellAddr) -> str:
    return addr.a1(with_sheet=True)


def is_address_like(text: str) -> bool:
    try:
        parse_address(text)
    except AddressError:
        return False
    return True


@dataclass(frozen=True)
class RangeRef:
    top_left: CellAddr
    bottom_right: CellAddr

    def __post_init__(self):
        tl, br = self.top_left, self.bottom_right
        if tl.col > br.col or tl.row > br.row:
            raise AddressError(f"inverted range {tl.a1()}:{br.a1()}")

    @property
    def sheet(self):
        return self.top_left.sheet

    def rows(self) -> int:
        return self.bottom_right.row - self.top_left.row + 1

    def cols(self) -> int:
        return self.bottom_right.col - self.top_left.col + 1

    @property
    def shape(self):
        return self.rows(), self.cols()

    def cells(self):
        for r in range(self.top_left.row, self.bottom_right.row + 1):
            for c in range(self.top_left.col, self.bottom_right.col + 1):
                yield CellAddr(r, c, self.sheet)

    def contains(self, addr: CellAddr) -> bool:
        return (self.top_left.row <= addr.row <= self.bottom_right.row
                and self.top_left.col <= addr.col <= self.bottom_right.col)

    def intersects(self, other: "RangeRef") -> bool:
        return not (other.top_left.row > self.bottom_right.row
                    or other.bottom_right.row < self.top_left.row
                    or other.top_left.col > self.bottom_right.col
                    or other.bottom_right.col < self.top_left.col)

    def with_sheet(self, sheet) -> "RangeRef":
        tl, br = self.top_left, self.bottom_right
        return RangeRef(CellAddr(tl.row, tl.col, sheet), CellAddr(br.row, br.col, sheet))

    def a1(self, with_sheet=False) -> str:
        body = self.top_left.a1()
        if self.rows() > 1 or self.cols() > 1:
            body += ":" + self.bottom_right.a1()
        if with_sheet and self.sheet:
            return f"{self.sheet}!{body}"
        return body

    def __str__(self):
        return self.a1(with_sheet=True)

    @classmethod
    def of(cls, row, col, nrows, ncols, sheet=None) -> "RangeRef":
        return cls(CellAddr(row, col, sheet), CellAddr(row + nrows - 1, col + ncols - 1, sheet))


def parse_range(text: str) -> RangeRef:
    """Parse 'C4:E4', 'Sheet1!C4:E4' or a single address."""
    text = text.strip()
    sheet = None
    if "!" in text:
        sheet, text = text.split("!", 1)
    parts = text.split(":")
    if len(parts) > 2:
        raise AddressError(f"malformed range {text!r}")
    tl = parse_address(parts[0])
    br = parse_address(parts[-1])
    if tl.sheet or br.sheet:
        raise AddressError(f"sheet qualifier must precede the whole range: {text!r}")
    return RangeRef(CellAddr(tl.row, tl.col, sheet), CellAddr(br.row, br.col, sheet))


@dataclass(frozen=True)
class NamedRange:
    name: str
    target: RangeRef


@dataclass
class FormulaGroup:
    """One formula shared by a rectangular region, anchored at its top-left."""
    region: RangeRef
    text: str
    ast: object
    compiled: object = None
    volatile: bool = False

    @property
    def anchor(self) -> tuple[int, int]:
        return self.region.top_left.row, self.region.top_left.col

    @property
    def is_array(self) -> bool:
        return self.region.shape != (1, 1)


@dataclass
class Cell:
    value: object
    formula: str | None = None
    array_group: RangeRef | None = None


class Sheet:
    """Dense, growable cell storage (numbers in a float grid, the rest keyed)."""

    def __init__(self, name: str):
        self.name = name
        self.num = np.zeros((16, 8))
        self.kind = np.zeros((16, 8), dtype=np.uint8)
        self.extra: dict[tuple[int, int], object] = {}
        self.groups: dict[tuple[int, int], FormulaGroup] = {}
        self.member: dict[tuple[int, int], tuple[int, int]] = {}
        self._order: list[FormulaGroup] | None = None

    # -- storage ---------------------------------------------------------------

    def _ensure(self, r: int, c: int):
        """Grow so that 0-based (r, c) is addressable."""
        R, C = self.num.shape
        if r < R and c < C:
            return
        nR = max(R, 1)
        while nR <= r:
            nR *= 2
        nC = max(C, 1)
        while nC <= c:
            nC *= 2
        num = np.zeros((nR, nC))
        kind = np.zeros((nR, nC), dtype=np.uint8)
        num[:R, :C] = self.num
        kind[:R, :C] = self.kind
        self.num, self.kind = num, kind

    def get(self, row: int, col: int):
        r, c = row - 1, col - 1
        R, C = self.num.shape
        if r >= R or c >= C:
            return BLANK
        k = self.kind[r, c]
        if k == K_NUM:
            return float(self.num[r, c])
        if k == K_BLANK:
            return BLANK
        if k == K_BOOL:
            return bool(self.num[r, c])
        return self.extra[(r, c)]

    def put(self, row: int, col: int, value):
        r, c = row - 1, col - 1
        self._ensure(r, c)
        if self.kind[r, c] >= K_TEXT:
            self.extra.pop((r, c), None)
        if value is BLANK or value is None:
            self.kind[r, c] = K_BLANK
            self.num[r, c] = 0.0
        elif isinstance(value, bool) or isinstance(value, np.bool_):
            self.kind[r, c] = K_BOOL
            self.num[r, c] = 1.0 if value else 0.0
        elif isinstance(value, (float, int, np.floating, np.integer)):
            self.kind[r, c] = K_NUM
            self.num[r, c] = float(value)
        elif isinstance(value, str):
            self.kind[r, c] = K_TEXT
            self.num[r, c] = 0.0
            self.extra[(r, c)] = value
        elif isinstance(value, CellError):
            self.kind[r, c] = K_ERR
            self.num[r, c] = 0.0
            self.extra[(r, c)] = value
        else:
            raise TypeError(f"cannot store {value!r}")

    def read_block(self, row: int, col: int, nrows: int, ncols: int) -> np.ndarray:
        """Values of a rectangle; float64 when every cell holds a number."""
        r0, c0 = row - 1, col - 1
        r1, c1 = r0 + nrows, c0 + ncols
        R, C = self.num.shape
        if r1 <= R and c1 <= C:
            k = self.kind[r0:r1, c0:c1]
            if (k == K_NUM).all():
                return self.num[r0:r1, c0:c1].copy()
        out = np.empty((nrows, ncols), dtype=object)
        for i in range(nrows):
            for j in range(ncols):
                out[i, j] = self.get(row + i, col + j)
        return out

    def write_block(self, row: int, col: int, arr: np.ndarray):
        nrows, ncols = arr.shape
        r0, c0 = row - 1, col - 1
        self._ensure(r0 + nrows - 1, c0 + ncols - 1)
        if arr.dtype == np.float64:
            ks = self.kind[r0:r0 + nrows, c0:c0 + ncols]
            if ks.max() >= K_TEXT:
                for (i, j) in zip(*np.nonzero(ks >= K_TEXT)):
                    self.extra.pop((r0 + i, c0 + j), None)
            self.num[r0:r0 + nrows, c0:c0 + ncols] = arr
            ks[...] = K_NUM
            return
        for i in range(nrows):
            for j in range(ncols):
                self.put(row + i, col + j, arr[i, j])

    def extent(self) -> tuple[int, int]:
        """(max used row, max used col), 1-based; (0, 0) when empty."""
        used = np.nonzero(self.kind)
        rows = [0]
        cols = [0]
        if used[0].size:
            rows.append(int(used[0].max()) + 1)
            cols.append(int(used[1].max()) + 1)
        for g in self.groups.values():
            rows.append(g.region.bottom_right.row)
            cols.append(g.region.bottom_right.col)
        return max(rows), max(cols)

    # -- formulas --------------------------------------------------------------

    def add_group(self, group: FormulaGroup):
        for other in self.groups.values():
            if other.region.intersects(group.region):
                raise WorkbookError(
                    f"array region {group.region.a1()} overlaps existing formula region "
                    f"{other.region.a1()}")
        self.groups[group.anchor] = group
        for a in group.region.cells():
            self.member[(a.row, a.col)] = group.anchor
        self._order = None

    def remove_group_at(self, row: int, col: int):
        anchor = self.member.get((row, col))
        if anchor is None:
            return
        g = self.groups.pop(anchor)
        for a in g.region.cells():
            self.member.pop((a.row, a.col), None)
        self._order = None

    def group_at(self, row: int, col: int) -> FormulaGroup | None:
        anchor = self.member.get((row, col))
        return None if anchor is None else self.groups[anchor]

    def ordered_groups(self) -> list[FormulaGroup]:
        """Formula groups in row-major order of their anchors."""
        if self._order is None:
            self._order = [self.groups[k] for k in sorted(self.groups)]
        return self._order


@dataclass
class CalcSettings:
    mode: str = "manual"
    max_iterations: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if self.mode != "manual":
            raise WorkbookError("only manual calculation mode is supported")
        if int(self.max_iterations) < 1:
            raise WorkbookError("max_iterations must be >= 1")


@dataclass
class Workbook:
    sheets: dict = field(default_factory=dict)
    names: dict = field(default_factory=dict)
    calc_settings: CalcSettings = field(default_factory=CalcSettings)
    rng: object = None

    def __post_init__(self):
        from .prng import SplitMix64
        if self.rng is None:
            self.rng = SplitMix64(self.calc_settings.rng_seed)

    # -- sheets ------------------------------------------------------------------

    def sheet(self, name: str | None = None, create: bool = False) -> Sheet:
        if name is None:
            if not self.sheets:
                if not create:
                    raise WorkbookError("workbook has no sheets")
                name = "Sheet1"
            else:
                return next(iter(self.sheets.values()))
        for key, sh in self.sheets.items():
            if key.lower() == name.lower():
                return sh
        if not create:
            raise WorkbookError(f"unknown sheet {name!r}")
        sh = Sheet(name)
        self.sheets[name] = sh
        return sh

    @property
    def default_sheet(self) -> str:
        return next(iter(self.sheets)) if self.sheets else "Sheet1"

    def _qualify(self, ref):
        if ref.sheet is None:
            if isinstance(ref, RangeRef):
                return ref.with_sheet(self.default_sheet)
            return CellAddr(ref.row, ref.col, self.default_sheet)
        return ref

    # -- settings ------------------------------------------------------------------

    def set_seed(self, seed: int):
        from .prng import SplitMix64
        self.calc_settings.rng_seed = int(seed)
        self.rng = SplitMix64(int(seed))

    def set_max_iterations(self, n: int):
        if int(n) < 1:
            raise WorkbookError("max_iterations must be >= 1")
        self.calc_settings.max_iterations = int(n)

    # -- names --------------------------------------------------------------------

    def define_name(self, name: str, target: RangeRef | str) -> "Workbook":
        if isinstance(target, str):
            target = parse_range(target)
        if not NAME_RE.match(name):
            raise WorkbookError(f"invalid name {name!r}")
        if is_address_like(name) or name.upper() in ("TRUE", "FALSE"):
            raise WorkbookError(f"name {name!r} collides with a cell address")
        key = name.lower()
        if key in self.names:
            raise WorkbookError(f"duplicate name {name!r}")
        target = self._qualify(target)
        self.sheet(target.sheet, create=True)
        self.names[key] = NamedRange(name, target)
        return self

    def resolve(self, name: str) -> RangeRef:
        try:
            return self.names[name.lower()].target
        except KeyError:
            raise WorkbookError(f"unknown name {name!r}") from None

    # -- cells --------------------------------------------------------------------------

    def set_value(self, addr: CellAddr | str, value) -> "Workbook":
        """Store a literal; replaces any scalar formula in that cell."""
        if isinstance(addr, str):
            addr = parse_address(addr)
        addr = self._qualify(addr)
        sh = self.sheet(addr.sheet, create=True)
        g = sh.group_at(addr.row, addr.col)
        if g is not None:
            if g.is_array:
                raise WorkbookError(f"cannot change part of array region {g.region.a1()}")
            sh.remove_group_at(addr.row, addr.col)
        sh.put(addr.row, addr.col, value)
        return self

    def get_value(self, addr: CellAddr | str):
        """Stored value of a cell; never recalculates."""
        if isinstance(addr, str):
            addr = parse_address(addr)
        if not self.sheets:
            return BLANK
        addr = self._qualify(addr)
        return self.sheet(addr.sheet).get(addr.row, addr.col)

    def get_cell(self, addr: CellAddr | str) -> Cell:
        if isinstance(addr, str):
            addr = parse_address(addr)
        addr = self._qualify(addr)
        sh = self.sheet(addr.sheet)
        g = sh.group_at(addr.row, addr.col)
        if g is None:
            return Cell(sh.get(addr.row, addr.col))
        return Cell(sh.get(addr.row, addr.col), g.text,
                    g.region if g.is_array else None)

    def read_range(self, rng: RangeRef | str) -> np.ndarray:
        if isinstance(rng, str):
            rng = self.resolve(rng) if NAME_RE.match(rng) and not is_address_like(rng) \
                else parse_range(rng)
        rng = self._qualify(rng)
        tl = rng.top_left
        return self.sheet(tl.sheet).read_block(tl.row, tl.col, rng.rows(), rng.cols())

    def set_array_formula(self, region: RangeRef | str, formula_text: str) -> "Workbook":
        """Enter one formula over a region and evaluate it once, immediately."""
        from . import engine
        from .formula import parse_formula

        if isinstance(region, str):
            region = parse_range(region)
        region = self._qualify(region)
        text = formula_text[1:] if formula_text.startswith("=") else formula_text
        ast = parse_formula(text)
        sh = self.sheet(region.sheet, create=True)
        if region.shape == (1, 1):
            g = sh.group_at(region.top_left.row, region.top_left.col)
            if g is not None and not g.is_array:
                sh.remove_group_at(region.top_left.row, region.top_left.col)
        group = FormulaGroup(region, text, ast)
        engine.prepare_group(group)
        sh.add_group(group)
        engine.evaluate_group(self, sh, group)
        return self

    def set_formula(self, addr: CellAddr | str, formula_text: str) -> "Workbook":
        if isinstance(addr, str):
            addr = parse_address(addr)
        return self.set_array_formula(RangeRef(addr, addr), formula_text)

    def check_groups(self):
        """Assert the no-overlap invariant for every sheet."""
        for sh in self.sheets.values():
            seen = {}
            for g in sh.groups.values():
                for a in g.region.cells():
                    key = (a.row, a.col)
                    if key in seen:
                        raise WorkbookError(f"cell {a.a1()} belongs to two array regions")
                    seen[key] = g.anchor
