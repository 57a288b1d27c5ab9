"""Manual-mode evaluation of formula groups.

A formula AST is compiled once into a tree of closures.  Each closure takes
an evaluation context and returns a runtime value (scalar or 2-D array).
A calculate command runs ``max_iterations`` passes; each pass visits the
formula groups of one sheet in row-major order of their anchors and splices
every result back into the grid immediately, so later groups read it.
"""

from __future__ import annotations

import math

import numpy as np

from . import formula as F
from .grid import CellAddr, RangeRef, Sheet, Workbook, WorkbookError
from .values import (
    BLANK, CellError, EvalError, as_array, box, broadcast_binary, broadcast_shape,
    error_array, format_scalar, is_number, map_unary, numeric_array, shape_of, tighten,
    to_number, truth, unwrap_single,
)

COND_LIMIT = 1e12


class NeedPerCell(Exception):
    """A volatile call was reached while evaluating a whole region at once."""


class Ctx:
    __slots__ = ("wb", "sheet", "per_cell", "single", "target", "cell")

    def __init__(self, wb: Workbook, sheet: Sheet, target=(1, 1)):
        self.wb = wb
        self.sheet = sheet
        self.target = target
        self.single = target == (1, 1)
        self.per_cell = False
        self.cell = (0, 0)  # output cell being evaluated in per-cell mode


# -- references -------------------------------------------------------------------

def _read(ctx: Ctx, rng: RangeRef):
    sheet = ctx.sheet if rng.sheet is None else _sheet_or_ref(ctx.wb, rng.sheet)
    tl = rng.top_left
    if rng.rows() == 1 and rng.cols() == 1:
        return sheet.get(tl.row, tl.col)
    return sheet.read_block(tl.row, tl.col, rng.rows(), rng.cols())


def _sheet_or_ref(wb: Workbook, name: str) -> Sheet:
    try:
        return wb.sheet(name)
    except WorkbookError:
        raise EvalError(CellError.REF) from None


def _compile_ref(node):
    """Closure returning the RangeRef a reference-valued node denotes."""
    if isinstance(node, F.CellRef):
        addr = node.addr
        rng = RangeRef(addr, addr)
        return lambda ctx: rng
    if isinstance(node, F.RangeNode):
        rng = RangeRef(node.start.addr, node.end.addr)
        return lambda ctx: rng
    if isinstance(node, F.Name):
        key = node.name.lower()

        def name_ref(ctx):
            nr = ctx.wb.names.get(key)
            if nr is None:
                raise EvalError(CellError.NAME)
            return nr.target
        return name_ref
    if isinstance(node, F.Call) and node.name == "OFFSET":
        return _compile_offset(node)
    return None


def _int_arg(v) -> int:
    v = unwrap_single(v)
    if isinstance(v, np.ndarray):
        raise EvalError(CellError.VALUE)
    return math.floor(to_number(v))


def _compile_offset(node):
    base = _compile_ref(node.args[0])
    if base is None:
        raise F.ParseError("OFFSET needs a reference as its first argument")
    rest = [None if isinstance(a, F.Omitted) else _compile(a) for a in node.args[1:]]
    rest += [None] * (4 - len(rest))
    r_fn, c_fn, h_fn, w_fn = rest

    def offset_ref(ctx):
        ref = base(ctx)
        dr = _int_arg(r_fn(ctx)) if r_fn else 0
        dc = _int_arg(c_fn(ctx)) if c_fn else 0
        h = _int_arg(h_fn(ctx)) if h_fn else ref.rows()
        w = _int_arg(w_fn(ctx)) if w_fn else ref.cols()
        row = ref.top_left.row + dr
        col = ref.top_left.col + dc
        if row < 1 or col < 1 or h < 1 or w < 1:
            raise EvalError(CellError.REF)
        return RangeRef.of(row, col, h, w, ref.sheet)
    return offset_ref


def _guard(fn):
    """Turn EvalError raised by ``fn`` into an error value."""
    def guarded(ctx):
        try:
            return fn(ctx)
        except EvalError as e:
            return e.code
    return guarded


# -- compilation -------------------------------------------------------------------

def _compile(node):
    if isinstance(node, F.Number):
        v = float(node.value)
        return lambda ctx: v
    if isinstance(node, F.Text):
        s = node.value
        return lambda ctx: s
    if isinstance(node, F.Bool):
        b = node.value
        return lambda ctx: b
    if isinstance(node, F.Omitted):
        return lambda ctx: 0.0
    if isinstance(node, (F.CellRef, F.RangeNode, F.Name)) or (
            isinstance(node, F.Call) and node.name == "OFFSET"):
        ref = _compile_ref(node)
        return _guard(lambda ctx: _read(ctx, ref(ctx)))
    if isinstance(node, F.Unary):
        inner = _compile(node.operand)
        return lambda ctx: map_unary(np.negative, inner(ctx))
    if isinstance(node, F.Binary):
        op = node.op
        left, right = _compile(node.left), _compile(node.right)
        return lambda ctx: broadcast_binary(op, left(ctx), right(ctx))
    if isinstance(node, F.Call):
        return _compile_call(node)
    raise TypeError(f"cannot compile {node!r}")


def compile_formula(ast):
    """Compile an AST; a bare reference at the top reads only what the target shows."""
    ref = _compile_ref(ast)
    if ref is None:
        return _compile(ast)

    def restricted(ctx):
        try:
            rng = ref(ctx)
        except EvalError as e:
            return e.code
        tr, tc = ctx.target
        rows, cols = min(rng.rows(), tr), min(rng.cols(), tc)
        if (rows, cols) != rng.shape:
            v = _read(ctx, RangeRef.of(rng.top_left.row, rng.top_left.col, rows, cols,
                                       rng.sheet))
            # keep the full extent so missing cells still pad with #N/A
            return _Restricted(v, rng.shape)
        return _read(ctx, rng)
    return restricted


class _Restricted:
    """A top-left window of a larger array result."""
    __slots__ = ("value", "full_shape")

    def __init__(self, value, full_shape):
        self.value = value
        self.full_shape = full_shape


# -- builtins -----------------------------------------------------------------------

def _mmult(a, b):
    A, B = numeric_array(a), numeric_array(b)
    if A.shape[1] != B.shape[0]:
        raise EvalError(CellError.VALUE)
    return A @ B


def _transpose(a):
    if isinstance(a, np.ndarray):
        return a.T.copy()
    return a


def _minverse(a):
    A = numeric_array(a)
    if A.shape[0] != A.shape[1]:
        raise EvalError(CellError.VALUE)
    try:
        if np.linalg.cond(A) > COND_LIMIT:
            raise EvalError(CellError.NUM)
        return np.linalg.inv(A)
    except np.linalg.LinAlgError:
        raise EvalError(CellError.NUM) from None


def _mod_scalar(n, d):
    n, d = to_number(n), to_number(d)
    if d == 0.0:
        raise EvalError(CellError.DIV0)
    return n - d * math.floor(n / d)


def _elementwise2(fn, a, b):
    """Apply a scalar function of two arguments with broadcasting."""
    if not isinstance(a, np.ndarray) and not isinstance(b, np.ndarray):
        if isinstance(a, CellError):
            return a
        if isinstance(b, CellError):
            return b
        return fn(a, b)
    shape = broadcast_shape(shape_of(a), shape_of(b))
    if shape is None:
        sa, sb = shape_of(a), shape_of(b)
        return error_array((max(sa[0], sb[0]), max(sa[1], sb[1])), CellError.VALUE)
    A = np.broadcast_to(as_array(a), shape)
    B = np.broadcast_to(as_array(b), shape)
    out = np.empty(shape, dtype=object)
    for i in range(shape[0]):
        for j in range(shape[1]):
            x, y = box(A[i, j]), box(B[i, j])
            if isinstance(x, CellError):
                out[i, j] = x
            elif isinstance(y, CellError):
                out[i, j] = y
            else:
                try:
                    out[i, j] = fn(x, y)
                except EvalError as e:
                    out[i, j] = e.code
    return tighten(out)


def _mod(a, b):
    def fast(n, d):
        if np.any(d == 0.0):
            return None
        return n - d * np.floor(n / d)
    if (isinstance(a, np.ndarray) and a.dtype == np.float64 and is_number(b)) or (
            isinstance(a, np.ndarray) and isinstance(b, np.ndarray)
            and a.dtype == b.dtype == np.float64 and a.shape == b.shape):
        r = fast(a, np.asarray(b, dtype=np.float64))
        if r is not None:
            return r
    return _elementwise2(_mod_scalar, a, b)


def _numbers_in(args):
    """Collect the numbers an aggregate sees; raise on the first error."""
    out = []
    for v in args:
        if isinstance(v, np.ndarray):
            if v.dtype == np.float64:
                out.extend(v.ravel().tolist())
                continue
            for x in v.ravel():
                x = box(x)
                if isinstance(x, CellError):
                    raise EvalError(x)
                if type(x) is float:
                    out.append(x)
        else:
            if isinstance(v, CellError):
                raise EvalError(v)
            if v is BLANK:
                continue
            out.append(to_number(v))
    return out


def _aggregate(kind):
    def agg(*args):
        xs = _numbers_in(args)
        if kind == "SUM":
            return math.fsum(xs) if xs else 0.0
        if kind == "AVERAGE":
            if not xs:
                raise EvalError(CellError.DIV0)
            return math.fsum(xs) / len(xs)
        if kind == "MAX":
            return max(xs) if xs else 0.0
        if kind == "MIN":
            return min(xs) if xs else 0.0
        if len(xs) < 2:
            raise EvalError(CellError.DIV0)
        mean = math.fsum(xs) / len(xs)
        return math.sqrt(math.fsum((x - mean) ** 2 for x in xs) / (len(xs) - 1))
    return agg


def _isnumber(v):
    if isinstance(v, np.ndarray):
        if v.dtype == np.float64:
            return np.ones(v.shape, dtype=bool)
        return np.vectorize(lambda x: type(box(x)) is float, otypes=[bool])(v)
    return is_number(v)


def _randbetween(ctx, lo, hi):
    lo, hi = unwrap_single(lo), unwrap_single(hi)
    if isinstance(lo, np.ndarray) or isinstance(hi, np.ndarray):
        raise EvalError(CellError.VALUE)
    a, b = math.ceil(to_number(lo)), math.floor(to_number(hi))
    if b < a:
        raise EvalError(CellError.NUM)
    if not (ctx.single or ctx.per_cell):
        raise NeedPerCell
    return float(ctx.wb.rng.randbetween(a, b))


def _rand(ctx):
    if not (ctx.single or ctx.per_cell):
        raise NeedPerCell
    return ctx.wb.rng.random()


_SIMPLE = {
    "MMULT": _mmult,
    "TRANSPOSE": _transpose,
    "MINVERSE": _minverse,
    "MOD": _mod,
    "TANH": lambda v: map_unary(np.tanh, v),
    "EXP": lambda v: map_unary(np.exp, v),
    "ABS": lambda v: map_unary(np.abs, v),
    "ISNUMBER": _isnumber,
    "SUM": _aggregate("SUM"),
    "AVERAGE": _aggregate("AVERAGE"),
    "MAX": _aggregate("MAX"),
    "MIN": _aggregate("MIN"),
    "STDEV": _aggregate("STDEV"),
}


def _compile_if(node):
    cond = _compile(node.args[0])
    then = _compile(node.args[1])
    other = _compile(node.args[2]) if len(node.args) > 2 else (lambda ctx: False)

    def if_(ctx):
        c = unwrap_single(cond(ctx))
        if isinstance(c, np.ndarray) and ctx.per_cell:
            # only this output cell's element of the condition matters
            i, j = ctx.cell
            i = 0 if c.shape[0] == 1 else i
            j = 0 if c.shape[1] == 1 else j
            if i >= c.shape[0] or j >= c.shape[1]:
                return CellError.NA
            c = box(c[i, j])
        if not isinstance(c, np.ndarray):
            try:
                return then(ctx) if truth(c) else other(ctx)
            except EvalError as e:
                return e.code
        # elementwise: a branch is evaluated only if some element selects it
        if c.dtype == bool:
            flags = c
            any_true, any_false = bool(c.any()), not bool(c.all())
        else:
            flags = np.empty(c.shape, dtype=object)
            for idx, x in np.ndenumerate(c):
                try:
                    flags[idx] = truth(box(x))
                except EvalError as e:
                    flags[idx] = e.code
            any_true = any(f is True for f in flags.ravel())
            any_false = any(f is False for f in flags.ravel())
        a = then(ctx) if any_true else 0.0
        b = other(ctx) if any_false else 0.0
        shape = broadcast_shape(c.shape, shape_of(a))
        shape = shape and broadcast_shape(shape, shape_of(b))
        if shape is None:
            dims = [c.shape, shape_of(a), shape_of(b)]
            return error_array((max(d[0] for d in dims), max(d[1] for d in dims)),
                               CellError.VALUE)
        if c.dtype == bool and all(
                (isinstance(v, np.ndarray) and v.dtype == np.float64) or is_number(v)
                for v in (a, b)):
            return np.broadcast_to(np.where(c, a, b), shape).astype(np.float64)
        A = np.broadcast_to(as_array(a), shape)
        B = np.broadcast_to(as_array(b), shape)
        Cf = np.broadcast_to(flags, shape)
        out = np.empty(shape, dtype=object)
        for i in range(shape[0]):
            for j in range(shape[1]):
                f = box(Cf[i, j]) if c.dtype == bool else Cf[i, j]
                out[i, j] = f if isinstance(f, CellError) else box(A[i, j] if f else B[i, j])
        return tighten(out)
    return if_


def _compile_call(node):
    name = node.name
    if name == "IF":
        return _compile_if(node)
    if name == "RAND":
        return _rand
    args = [_compile(a) for a in node.args]
    if name == "RANDBETWEEN":
        lo, hi = args
        return _guard(lambda ctx: _randbetween(ctx, lo(ctx), hi(ctx)))
    fn = _SIMPLE[name]
    if len(args) == 1:
        (a0,) = args
        return _guard(lambda ctx: fn(a0(ctx)))
    if len(args) == 2:
        a0, a1 = args
        return _guard(lambda ctx: fn(a0(ctx), a1(ctx)))
    return _guard(lambda ctx: fn(*[a(ctx) for a in args]))


# -- evaluation & splicing ---------------------------------------------------------------

def prepare_group(group):
    group.compiled = compile_formula(group.ast)
    group.volatile = F.is_volatile(group.ast)


def _cell_of(value, i, j):
    """Element (i, j) of a result as it would be spliced."""
    if isinstance(value, _Restricted):
        v = value.value
        if isinstance(v, np.ndarray):
            if i < v.shape[0] and j < v.shape[1]:
                return box(v[i, j])
            return CellError.NA
        return v if (i, j) == (0, 0) else CellError.NA
    if isinstance(value, np.ndarray):
        if value.shape == (1, 1):
            return box(value[0, 0])
        if i < value.shape[0] and j < value.shape[1]:
            return box(value[i, j])
        return CellError.NA
    return value


def splice(value, shape):
    """Fit a result to a target shape.

    Larger arrays are restricted to their top-left block, scalars fill the
    whole target, and cells a smaller array does not cover get #N/A.
    Blank results are stored as 0.
    """
    rows, cols = shape
    if isinstance(value, _Restricted):
        inner = value.value
        if isinstance(inner, np.ndarray) and inner.shape == shape:
            value = inner
        elif not isinstance(inner, np.ndarray) and shape == (1, 1):
            value = inner
    if isinstance(value, np.ndarray):
        if value.shape == (1, 1):
            value = box(value[0, 0])
        elif value.shape[0] >= rows and value.shape[1] >= cols:
            out = value[:rows, :cols]
            if out.dtype == np.float64:
                return out
            if out.dtype == bool:
                return out.astype(object)
            return np.vectorize(lambda x: 0.0 if x is BLANK else x, otypes=[object])(out)
    if not isinstance(value, (np.ndarray, _Restricted)):
        if value is BLANK:
            value = 0.0
        if type(value) is float:
            return np.full(shape, value)
        out = np.empty(shape, dtype=object)
        out.fill(value)
        return out
    out = np.empty(shape, dtype=object)
    for i in range(rows):
        for j in range(cols):
            x = _cell_of(value, i, j)
            out[i, j] = 0.0 if x is BLANK else x
    return out


def evaluate_group(wb: Workbook, sheet: Sheet, group) -> np.ndarray:
    """Evaluate one formula group and write its result into the grid."""
    shape = group.region.shape
    ctx = Ctx(wb, sheet, shape)
    try:
        result = splice(group.compiled(ctx), shape)
    except NeedPerCell:
        ctx.per_cell = True
        result = np.empty(shape, dtype=object)
        for i in range(shape[0]):
            for j in range(shape[1]):
                ctx.cell = (i, j)
                x = _cell_of(group.compiled(ctx), i, j)
                result[i, j] = 0.0 if x is BLANK else x
        result = tighten(result)
    tl = group.region.top_left
    sheet.write_block(tl.row, tl.col, result)
    return result


def calculate_sheet(wb: Workbook, sheet: str | None = None, trace=None) -> Workbook:
    """Run ``max_iterations`` row-major passes over one sheet.

    ``trace``, if given, is a writable text stream that receives one
    ``pass,cell,old,new`` line for every cell whose value changed.
    """
    sh = wb.sheet(sheet)
    groups = sh.ordered_groups()
    for k in range(1, wb.calc_settings.max_iterations + 1):
        for g in groups:
            if trace is None:
                evaluate_group(wb, sh, g)
                continue
            tl = g.region.top_left
            rows, cols = g.region.shape
            before = [[sh.get(tl.row + i, tl.col + j) for j in range(cols)] for i in range(rows)]
            evaluate_group(wb, sh, g)
            for i in range(rows):
                for j in range(cols):
                    old, new = before[i][j], sh.get(tl.row + i, tl.col + j)
                    if old != new or type(old) is not type(new):
                        cell = CellAddr(tl.row + i, tl.col + j).a1()
                        trace.write(f"{k},{cell},{format_scalar(old)},{format_scalar(new)}\n")
    return wb


def evaluate(wb: Workbook, text_or_ast, sheet: str | None = None, shape=(1, 1)):
    """Evaluate a formula against the workbook without storing anything."""
    ast = F.parse_formula(text_or_ast) if isinstance(text_or_ast, str) else text_or_ast
    ctx = Ctx(wb, wb.sheet(sheet, create=True), shape)
    fn = _compile(ast)
    try:
        value = fn(ctx)
    except NeedPerCell:
        ctx.per_cell = True
        value = fn(ctx)
    return value
