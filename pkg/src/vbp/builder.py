"""Compile a network specification and a training set into a two-region
training workbook, and drive its initialisation and training passes.

Region A (the predictor) sits above Region B (the corrector).  Both hold the
same blocks, packed left to right with one spacer column between blocks:

    targ | inp | w_1 | out_1 | ... | w_q | out | del | del_{q-1} | ... | del_1

Every block is an array formula.  Weight blocks in A read B's values from
the previous pass; B's weight blocks read A's values from the current pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import calculate_sheet
from .grid import CellAddr, RangeRef, Workbook, col_to_letters
from .network import NetworkSpec, SpecError
from .workbook_io import format_literal, loads
from .values import format_number

SHEET = "VBP"


def _a1(row: int, col: int) -> str:
    return f"{col_to_letters(col)}{row}"


def _rng(row: int, col: int, nrows: int, ncols: int) -> str:
    if nrows == 1 and ncols == 1:
        return _a1(row, col)
    return f"{_a1(row, col)}:{_a1(row + nrows - 1, col + ncols - 1)}"


def _absolute(row: int, col: int) -> str:
    return f"${col_to_letters(col)}${row}"


def activation_formula(kind: str, z: str) -> str:
    if kind == "tanh":
        return f"TANH({z})"
    if kind == "logistic":
        return f"1/(1+EXP(-{z}))"
    if kind == "relu":
        return f"IF({z}>0,{z},0)"
    if kind == "identity":
        return z
    raise SpecError(f"unknown activation {kind!r}")


def derivative_formula(kind: str, out: str) -> str | None:
    if kind == "tanh":
        return f"(1-{out}^2)"
    if kind == "logistic":
        return f"({out}*(1-{out}))"
    if kind == "relu":
        return f"IF({out}>0,1,0)"
    if kind == "identity":
        return None
    raise SpecError(f"unknown activation {kind!r}")


def out_name(h: int, q: int, region: str = "") -> str:
    return f"out{region}" if h == q else f"out_{h}{region}"


def del_name(h: int, q: int, region: str = "") -> str:
    return f"del{region}" if h == q else f"del_{h}{region}"


def prev_name(h: int, q: int, region: str = "") -> str:
    return f"inp{region}" if h == 1 else out_name(h - 1, q, region)


@dataclass
class Block:
    name: str
    row: int
    col: int
    rows: int
    cols: int
    bias: bool = False  # a literal 1 sits below the formula rows

    @property
    def formula_range(self) -> str:
        return _rng(self.row, self.col, self.rows, self.cols)

    @property
    def named_range(self) -> str:
        return _rng(self.row, self.col, self.rows + (1 if self.bias else 0), self.cols)


@dataclass
class Layout:
    """Where everything lives; all addresses are on one sheet."""
    sheet: str
    counter: str = ""
    itc: str = ""
    itcp1: str = ""
    ru: str = ""
    eta: dict = field(default_factory=dict)
    trdata: str = ""
    sample_a: str = ""
    sample_b: str = ""
    blocks: dict = field(default_factory=dict)
    ema_err: str = ""
    ema: str = ""
    region_rows: tuple = ()

    def names(self) -> dict:
        out = {"counter": self.counter, "itc": self.itc, "itcp1": self.itcp1, "ru": self.ru,
               "TrData": self.trdata}
        out.update(self.eta)
        for b in self.blocks.values():
            out[b.name] = b.named_range
        out["ema_err"] = self.ema_err
        out["EMA"] = self.ema
        return out


@dataclass
class BuiltWorkbook:
    workbook: Workbook
    layout: Layout
    spec: NetworkSpec
    lines: list

    @property
    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def _eta_names(spec: NetworkSpec) -> list[str]:
    if len(set(spec.eta)) == 1:
        return ["eta"] * spec.layers
    return [f"eta_{h}" for h in range(1, spec.layers + 1)]


def plan_layout(spec: NetworkSpec, count: int, sheet: str = SHEET) -> Layout:
    n, q, t = spec.n_inputs, spec.layers, spec.topology
    m = spec.n_outputs
    lay = Layout(sheet)
    # parameter column C, labels in B
    lay.counter, lay.itc, lay.itcp1, lay.ru = "C2", "C3", "C4", "C5"
    eta_names = _eta_names(spec)
    for k, name in enumerate(dict.fromkeys(eta_names)):
        lay.eta[name] = _a1(6 + k, 3)
    param_end = 5 + len(lay.eta)
    # training data: index column D, records from column E, header on row 2
    width = n + m
    lay.trdata = _rng(3, 5, count, width)
    r_s = max(count + 2, param_end) + 2
    lay.sample_a = _rng(r_s, 5, 1, width)
    lay.sample_b = _rng(r_s + 1, 5, 1, width)

    height = max([n + 1, m] + [t[h] + 1 for h in range(1, q)])
    top_a = r_s + 4
    top_b = top_a + height + 2
    lay.region_rows = (top_a, top_b)
    for region, top in (("A", top_a), ("B", top_b)):
        col = 2
        specs = [(f"targ{region}", m, 1, False), (f"inp{region}", n, 1, True)]
        for h in range(1, q + 1):
            specs.append((f"w_{h}{region}", t[h], t[h - 1] + 1, False))
            specs.append((out_name(h, q, region), t[h], 1, h < q))
        for h in range(q, 0, -1):
            specs.append((del_name(h, q, region), t[h], 1, False))
        for name, rows, cols, bias in specs:
            lay.blocks[name] = Block(name, top, col, rows, cols, bias)
            col += cols + 1
    top_e = top_b + height + 2
    lay.ema_err = _rng(top_e, 2, m, 1)
    lay.ema = _rng(top_e, 3, m, 1)
    return lay


def _ema_formula(ema: str, err: str, count: int) -> str:
    a = format_number(2.0 / (count + 1))
    b = format_number((count - 1) / (count + 1))
    return f"=IF({ema}=0,{err},{a}*{err}+{b}*{ema})"


def build_lines(spec: NetworkSpec, data, labels=None, sheet: str = SHEET) -> tuple[list, Layout]:
    """Workbook text statements, in entry order, for a training set of shape (S, n+m)."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise SpecError("training set needs at least two records")
    S = data.shape[0]
    n, m, q = spec.n_inputs, spec.n_outputs, spec.layers
    if data.shape[1] != n + m:
        raise SpecError(f"topology {spec.topology} needs {n + m} data columns, got {data.shape[1]}")
    if labels is None:
        labels = [f"inp{i}" for i in range(1, n + 1)] + [f"targ{i}" for i in range(1, m + 1)]
    lay = plan_layout(spec, S, sheet)
    B = lay.blocks
    etas = _eta_names(spec)
    L = []
    put = L.append

    def cell(addr):
        return f"{sheet}!{addr}"

    put(f"OPTION rng_seed {spec.seed}")
    put("OPTION max_iterations 1")
    for name, target in lay.names().items():
        put(f"NAME {name} {cell(target)}")

    # labels
    for addr, text in (("B2", "counter"), ("B3", "itc"), ("B4", "itcp1"), ("B5", "ru")):
        put(f"SET {cell(addr)} {format_literal(text)}")
    for name, addr in lay.eta.items():
        row = int(addr[1:])
        put(f"SET {cell(_a1(row, 2))} {format_literal(name)}")
    put(f"SET {cell('D2')} {format_literal('TrData')}")
    for j, lab in enumerate(labels):
        put(f"SET {cell(_a1(2, 5 + j))} {format_literal(lab)}")
    r_s = int(lay.sample_a.split(":")[0][1:])
    put(f"SET {cell(_a1(r_s, 4))} {format_literal('sample A')}")
    put(f"SET {cell(_a1(r_s + 1, 4))} {format_literal('sample B')}")
    for b in B.values():
        put(f"SET {cell(_a1(b.row - 1, b.col))} {format_literal(b.name)}")
    ema_row = int(lay.ema.split(":")[0][1:])
    put(f"SET {cell(_a1(ema_row - 1, 2))} {format_literal('targ-out')}")
    put(f"SET {cell(_a1(ema_row - 1, 3))} {format_literal('EMA')}")

    # parameters
    put(f"SET {cell(lay.ru)} 1")
    for name, addr in lay.eta.items():
        h = etas.index(name)
        put(f"SET {cell(addr)} {format_number(spec.eta[h])}")
    for i in range(S):
        put(f"SET {cell(_a1(3 + i, 4))} {i}")
        for j in range(n + m):
            put(f"SET {cell(_a1(3 + i, 5 + j))} {format_number(float(data[i, j]))}")

    # counters; seeded so that the entry evaluation lands on 0 and 1
    put(f"SET {cell(lay.counter)} -1")
    put(f"CELL {cell(lay.counter)} ={lay.counter}+1")
    if spec.sampling == "sequential":
        put(f"SET {cell(lay.itc)} {S - 1}")
        put(f"CELL {cell(lay.itc)} =MOD(itc+1,{S})")
        put(f"SET {cell(lay.itcp1)} 0")
        put(f"CELL {cell(lay.itcp1)} =MOD(itcp1+1,{S})")
    elif spec.sampling == "shuffled":
        stride = spec.stride_for(S)
        put(f"SET {cell(lay.itc)} {(S - stride) % S}")
        put(f"CELL {cell(lay.itc)} =MOD(itc+{stride},{S})")
        put(f"CELL {cell(lay.itcp1)} =MOD(itc+1,{S})")
    else:
        put(f"SET {cell(lay.itc)} 0")
        put(f"CELL {cell(lay.itc)} =MOD(itc+RANDBETWEEN(0,{S - 1}),{S})")
        put(f"CELL {cell(lay.itcp1)} =MOD(itc+1,{S})")
    put(f"ARRAY {cell(lay.sample_a)} =OFFSET(TrData,itc,)")
    put(f"ARRAY {cell(lay.sample_b)} =OFFSET(TrData,itcp1,)")

    # bias literals
    for b in B.values():
        if b.bias:
            put(f"SET {cell(_a1(b.row + b.rows, b.col))} 1")

    init = "RAND()" if spec.random_init == "uniform01" else "2*RAND()-1"
    for region, other, sample in (("A", "B", lay.sample_a), ("B", "A", lay.sample_b)):
        srow = int(sample.split(":")[0][1:])
        put(f"ARRAY {cell(B['targ' + region].formula_range)} "
            f"=TRANSPOSE({_rng(srow, 5 + n, 1, m)})")
        put(f"ARRAY {cell(B['inp' + region].formula_range)} =TRANSPOSE({_rng(srow, 5, 1, n)})")
        for h in range(1, q + 1):
            eta = etas[h - 1]
            w = f"w_{h}{region}"
            if region == "A":
                upd = (f"w_{h}B+{eta}*(TRANSPOSE({prev_name(h, q, 'B')})*"
                       f"{del_name(h, q, 'B')})")
                f = f"=IF(ru=0,{init},{upd})"
            else:
                f = (f"=w_{h}A+{eta}*(TRANSPOSE({prev_name(h, q, 'A')})*"
                     f"{del_name(h, q, 'A')})")
            put(f"ARRAY {cell(B[w].formula_range)} {f}")
            z = f"MMULT({w},{prev_name(h, q, region)})"
            put(f"ARRAY {cell(B[out_name(h, q, region)].formula_range)} "
                f"={activation_formula(spec.activations[h - 1], z)}")
        for h in range(q, 0, -1):
            out = out_name(h, q, region)
            d = derivative_formula(spec.activations[h - 1], out)
            if h == q:
                err = f"targ{region}-{out}"
                f = err if d is None else f"({err})*{d}"
            else:
                back = f"MMULT(TRANSPOSE(w_{h + 1}{region}),{del_name(h + 1, q, region)})"
                f = back if d is None else f"{back}*{d}"
            put(f"ARRAY {cell(B[del_name(h, q, region)].formula_range)} ={f}")

    put(f"ARRAY {cell(lay.ema_err)} =ABS(targB-outB)")
    put(f"ARRAY {cell(lay.ema)} {_ema_formula(lay.ema, lay.ema_err, S)}")
    return L, lay


def build_workbook(spec: NetworkSpec, data, labels=None, sheet: str = SHEET) -> BuiltWorkbook:
    lines, lay = build_lines(spec, data, labels, sheet)
    wb = loads("\n".join(lines))
    return BuiltWorkbook(wb, lay, spec, lines)


def _sheet_of(wb: Workbook) -> str:
    return wb.names["trdata"].target.sheet if "trdata" in wb.names else wb.default_sheet


def init_run(wb: Workbook) -> Workbook:
    """ru := 0, one pass: Region A weights get fresh random draws."""
    wb.set_value(wb.names["ru"].target.top_left, 0.0)
    wb.set_max_iterations(1)
    return calculate_sheet(wb, _sheet_of(wb))


def train_run(wb: Workbook, iterations: int) -> Workbook:
    """ru := 1, then ``iterations`` passes."""
    if iterations <= 0:
        return wb
    wb.set_value(wb.names["ru"].target.top_left, 1.0)
    wb.set_max_iterations(iterations)
    return calculate_sheet(wb, _sheet_of(wb))


def layer_count(wb: Workbook) -> int:
    q = 0
    while f"w_{q + 1}b" in wb.names:
        q += 1
    return q


def extract_weights(wb: Workbook, region: str = "B") -> list[np.ndarray]:
    """Weight matrices of one region (B by default), as float arrays."""
    out = []
    for h in range(1, layer_count(wb) + 1):
        arr = wb.read_range(wb.names[f"w_{h}{region}".lower()].target)
        out.append(np.asarray(arr, dtype=np.float64))
    return out


def read_vector(wb: Workbook, name: str) -> np.ndarray:
    return np.asarray(wb.read_range(wb.resolve(name)), dtype=np.float64)


# -- stand-alone generators -----------------------------------------------------------------

def gen_ema(wb: Workbook, source: str, rows: int, top: int, col: int, periods: int,
            sheet: str | None = None) -> tuple[RangeRef, RangeRef]:
    """Add a ``periods``-term EMA of a column expression.

    The error column at ``col`` evaluates ``source`` and the EMA column
    right of it folds each new value in with weight 2/(periods+1).
    """
    sheet = sheet or wb.default_sheet
    err = _rng(top, col, rows, 1)
    ema = _rng(top, col + 1, rows, 1)
    wb.set_array_formula(f"{sheet}!{err}", f"={source}")
    wb.set_array_formula(f"{sheet}!{ema}", _ema_formula(ema, err, periods))
    return (RangeRef.of(top, col, rows, 1, sheet), RangeRef.of(top, col + 1, rows, 1, sheet))


@dataclass
class Tabulation:
    labels: RangeRef
    outputs: list
    errors: list
    averages: list


def gen_tabulation(wb: Workbook, driver: CellAddr, out_cells: list, targets, top: int,
                   col: int = 3, sheet: str | None = None) -> Tabulation:
    """Add a table that records each output as the driver cell cycles through records.

    Row i of the table keeps its previous contents unless the driver equals
    the row label i, in which case it takes the current output.  ``targets``
    has one row per record.  Label cells hold -1 while the formulas are
    entered, so the table starts out as zeros.
    """
    sheet = sheet or wb.default_sheet
    targets = np.asarray(targets, dtype=np.float64)
    S, m = targets.shape
    k = len(out_cells)
    first = top + 1
    lab = _rng(first, col, S, 1)
    drv = _absolute(driver.row, driver.col)
    wb.set_value(f"{sheet}!{_a1(top, col)}", "Sample#")
    for i in range(S):
        wb.set_value(f"{sheet}!{_a1(first + i, col)}", -1.0)
    outs, errs, avgs = [], [], []
    for j, oc in enumerate(out_cells):
        c = col + 1 + j
        rng = _rng(first, c, S, 1)
        wb.set_value(f"{sheet}!{_a1(top, c)}", f"out{j + 1}")
        wb.set_array_formula(f"{sheet}!{rng}",
                             f"=IF({drv}={lab},{_absolute(oc.row, oc.col)},{rng})")
        outs.append(RangeRef.of(first, c, S, 1, sheet))
    for j in range(m):
        c = col + 1 + k + j
        wb.set_value(f"{sheet}!{_a1(top, c)}", f"targ{j + 1}")
        for i in range(S):
            wb.set_value(f"{sheet}!{_a1(first + i, c)}", float(targets[i, j]))
    for j in range(min(k, m)):
        c = col + 1 + k + m + j
        o = _rng(first, col + 1 + j, S, 1)
        t = _rng(first, col + 1 + k + j, S, 1)
        rng = _rng(first, c, S, 1)
        wb.set_value(f"{sheet}!{_a1(top, c)}", f"abs err{j + 1}")
        wb.set_array_formula(f"{sheet}!{rng}", f"=ABS({t}-{o})")
        errs.append(RangeRef.of(first, c, S, 1, sheet))
        wb.set_formula(f"{sheet}!{_a1(first + S, c)}", f"=AVERAGE({rng})")
        avgs.append(CellAddr(first + S, c, sheet))
    wb.set_value(f"{sheet}!{_a1(first + S, col)}", "Average:")
    for i in range(S):
        wb.set_value(f"{sheet}!{_a1(first + i, col)}", float(i))
    return Tabulation(RangeRef.of(first, col, S, 1, sheet), outs, errs, avgs)


@dataclass
class ForwardSheet:
    workbook: Workbook
    driver: CellAddr | None
    blocks: dict

    @property
    def out_cells(self) -> list[CellAddr]:
        return list(self.blocks["out"].cells())

    @property
    def bottom(self) -> int:
        """Last row used by the network blocks."""
        return max(b.bottom_right.row for b in self.blocks.values()) + 1  # bias row


def build_forward_sheet(topology, activations, weights, sample=None, data=None,
                        top: int = 5, left: int = 2, sheet: str = "Sheet1") -> ForwardSheet:
    """A forward-only network with literal weights, blocks packed without spacers.

    Give either a fixed ``sample`` (input vector) or a ``data`` table of
    records (inputs then targets); with data a sample-number cell cycles
    through the records, one per pass, and an OFFSET row selects the record.
    """
    t = list(topology)
    q = len(t) - 1
    n, m = t[0], t[-1]
    wb = Workbook()
    wb.sheet(sheet, create=True)
    blocks = {}
    driver = None
    col = left
    if data is not None:
        data = np.asarray(data, dtype=np.float64)
        S = data.shape[0]
        drow = 2
        wb.set_value(f"{sheet}!{_a1(drow, left)}", "Samples")
        for j in range(n):
            wb.set_value(f"{sheet}!{_a1(drow, left + 2 + j)}", f"inp{j + 1}")
        for j in range(m):
            wb.set_value(f"{sheet}!{_a1(drow, left + 2 + n + j)}", f"targ{j + 1}")
        for i in range(S):
            wb.set_value(f"{sheet}!{_a1(drow + 1 + i, left + 1)}", float(i))
            for j in range(n + m):
                wb.set_value(f"{sheet}!{_a1(drow + 1 + i, left + 2 + j)}", float(data[i, j]))
        wb.define_name("Samples", f"{sheet}!{_rng(drow + 1, left + 2, S, n + m)}")
        srow = drow + S + 2
        driver = CellAddr(srow, left + 1, sheet)
        wb.set_value(f"{sheet}!{_a1(srow, left)}", "Sample#")
        wb.set_formula(driver, f"=MOD({driver.a1()}+1,{S})")
        sample_rng = _rng(srow, left + 2, 1, n + m)
        wb.set_array_formula(f"{sheet}!{sample_rng}", f"=OFFSET(Samples,{driver.a1()},)")
        top = max(top, srow + 3)
        blocks["targ"] = RangeRef.of(top, col, m, 1, sheet)
        wb.set_value(f"{sheet}!{_a1(top - 1, col)}", "targ")
        wb.set_array_formula(f"{sheet}!{_rng(top, col, m, 1)}",
                             f"=TRANSPOSE({_rng(srow, left + 2 + n, 1, m)})")
        col += 1
    wb.set_value(f"{sheet}!{_a1(top - 1, col)}", "inp")
    wb.define_name("inp", f"{sheet}!{_rng(top, col, n + 1, 1)}")
    if data is not None:
        wb.set_array_formula(f"{sheet}!{_rng(top, col, n, 1)}",
                             f"=TRANSPOSE({_rng(srow, left + 2, 1, n)})")
    else:
        for i, x in enumerate(np.asarray(sample, dtype=np.float64).ravel()):
            wb.set_value(f"{sheet}!{_a1(top + i, col)}", float(x))
    wb.set_value(f"{sheet}!{_a1(top + n, col)}", 1.0)
    blocks["inp"] = RangeRef.of(top, col, n + 1, 1, sheet)
    col += 1
    for h in range(1, q + 1):
        w = np.asarray(weights[h - 1], dtype=np.float64)
        if w.shape != (t[h], t[h - 1] + 1):
            raise SpecError(f"layer {h} weights have shape {w.shape}, expected {(t[h], t[h - 1] + 1)}")
        wname = f"w_{h}"
        wb.set_value(f"{sheet}!{_a1(top - 1, col)}", wname)
        for i in range(w.shape[0]):
            for j in range(w.shape[1]):
                wb.set_value(f"{sheet}!{_a1(top + i, col + j)}", float(w[i, j]))
        wb.define_name(wname, f"{sheet}!{_rng(top, col, *w.shape)}")
        blocks[wname] = RangeRef.of(top, col, *w.shape, sheet)
        col += w.shape[1]
        oname = out_name(h, q)
        bias = h < q
        wb.set_value(f"{sheet}!{_a1(top - 1, col)}", oname)
        wb.define_name(oname, f"{sheet}!{_rng(top, col, t[h] + (1 if bias else 0), 1)}")
        z = f"MMULT({wname},{prev_name(h, q)})"
        wb.set_array_formula(f"{sheet}!{_rng(top, col, t[h], 1)}",
                             "=" + activation_formula(activations[h - 1], z))
        if bias:
            wb.set_value(f"{sheet}!{_a1(top + t[h], col)}", 1.0)
        blocks[oname] = RangeRef.of(top, col, t[h], 1, sheet)
        col += 1
    return ForwardSheet(wb, driver, blocks)
