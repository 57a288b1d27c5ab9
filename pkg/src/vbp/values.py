"""Runtime values: scalars (number, boolean, text, blank, error) and 2-D arrays.

Arrays are numpy arrays of ndim 2.  An all-numeric array uses dtype float64
(the fast path); a boolean result of a comparison uses dtype bool; anything
mixed falls back to dtype object holding scalars.
"""

from __future__ import annotations

import enum
import math
import operator

import numpy as np


class CellError(enum.Enum):
    DIV0 = "#DIV/0!"
    VALUE = "#VALUE!"
    REF = "#REF!"
    NAME = "#NAME?"
    NUM = "#NUM!"
    NA = "#N/A"

    def __str__(self):
        return self.value

    @classmethod
    def from_text(cls, text):
        for member in cls:
            if member.value == text.upper():
                return member
        raise ValueError(f"unknown error code {text!r}")


class _Blank:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "BLANK"

    def __bool__(self):
        return False

    def __reduce__(self):
        return (_Blank, ())


BLANK = _Blank()


class EvalError(Exception):
    """Raised inside evaluation to short-circuit to an error value."""

    def __init__(self, code: CellError):
        super().__init__(code.value)
        self.code = code


def is_array(v) -> bool:
    return isinstance(v, np.ndarray)


def is_number(v) -> bool:
    return isinstance(v, float) or (isinstance(v, int) and not isinstance(v, bool))


def shape_of(v) -> tuple[int, int]:
    return v.shape if isinstance(v, np.ndarray) else (1, 1)


def as_array(v) -> np.ndarray:
    if isinstance(v, np.ndarray):
        return v
    if is_number(v):
        return np.array([[float(v)]])
    out = np.empty((1, 1), dtype=object)
    out[0, 0] = v
    return out


def unwrap_single(v):
    """A 1x1 array behaves like its only element."""
    if isinstance(v, np.ndarray) and v.shape == (1, 1):
        return box(v[0, 0])
    return v


def box(x):
    """Normalise a numpy element to a Python scalar value."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (float, int, np.floating, np.integer)):
        return float(x)
    return x


def to_number(v):
    """Arithmetic coercion of a scalar; raises EvalError for non-numeric text."""
    if isinstance(v, float):
        return v
    if isinstance(v, bool):
        return 1.0 if v else 0.0
    if isinstance(v, int):
        return float(v)
    if v is BLANK:
        return 0.0
    if isinstance(v, CellError):
        raise EvalError(v)
    if isinstance(v, str):
        try:
            return float(v.strip())
        except ValueError:
            raise EvalError(CellError.VALUE) from None
    raise EvalError(CellError.VALUE)


def numeric_array(v) -> np.ndarray:
    """Coerce a value to a float64 array or raise EvalError."""
    a = as_array(v)
    if a.dtype == np.float64:
        return a
    if a.dtype == bool:
        return a.astype(np.float64)
    out = np.empty(a.shape)
    for idx, x in np.ndenumerate(a):
        out[idx] = to_number(x)
    return out


def truth(v) -> bool:
    if isinstance(v, bool):
        return v
    if isinstance(v, float):
        return v != 0.0
    if v is BLANK:
        return False
    if isinstance(v, CellError):
        raise EvalError(v)
    if isinstance(v, str):
        up = v.strip().upper()
        if up in ("TRUE", "FALSE"):
            return up == "TRUE"
        raise EvalError(CellError.VALUE)
    return bool(to_number(v))


# -- scalar arithmetic ------------------------------------------------------

def _div(a, b):
    if b == 0.0:
        raise EvalError(CellError.DIV0)
    return a / b


def _pow(a, b):
    try:
        r = a ** b
    except ZeroDivisionError:
        raise EvalError(CellError.DIV0) from None
    except OverflowError:
        raise EvalError(CellError.NUM) from None
    if isinstance(r, complex):
        raise EvalError(CellError.NUM)
    return r


_ARITH = {
    "+": operator.add,
    "-": operator.sub,
    "*": operator.mul,
    "/": _div,
    "^": _pow,
}

_CMP = {
    "=": operator.eq,
    "<>": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


def _cmp_key(v):
    # numbers < text < booleans; blank compares as 0 or "" depending on partner
    if isinstance(v, bool):
        return (2, v)
    if isinstance(v, str):
        return (1, v.lower())
    return (0, to_number(v))


def scalar_binary(op: str, a, b):
    if isinstance(a, CellError):
        return a
    if isinstance(b, CellError):
        return b
    try:
        if op in _CMP:
            if a is BLANK and isinstance(b, str):
                a = ""
            if b is BLANK and isinstance(a, str):
                b = ""
            return _CMP[op](_cmp_key(a), _cmp_key(b))
        r = _ARITH[op](to_number(a), to_number(b))
        if not math.isfinite(r):
            return CellError.NUM
        return float(r)
    except EvalError as e:
        return e.code
    except OverflowError:
        return CellError.NUM


# -- array broadcasting -------------------------------------------------------

def broadcast_shape(s1, s2):
    """Combined shape, or None when a non-1 dimension disagrees."""
    out = []
    for d1, d2 in zip(s1, s2):
        if d1 == d2 or d2 == 1:
            out.append(d1)
        elif d1 == 1:
            out.append(d2)
        else:
            return None
    return tuple(out)


def error_array(shape, code: CellError) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    out.fill(code)
    return out


_NP_ARITH = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.divide,
    "^": np.power,
}

_NP_CMP = {
    "=": np.equal,
    "<>": np.not_equal,
    "<": np.less,
    "<=": np.less_equal,
    ">": np.greater,
    ">=": np.greater_equal,
}


def _fix_nonfinite(op, res, b):
    bad = ~np.isfinite(res)
    out = res.astype(object)
    if op == "/":
        zero = np.broadcast_to(b == 0.0, res.shape)
        out[bad & zero] = CellError.DIV0
        out[bad & ~zero] = CellError.NUM
    else:
        out[bad] = CellError.NUM
    return out


def broadcast_binary(op: str, a, b):
    """Apply a binary operator with spreadsheet array semantics.

    Same shapes combine elementwise (Hadamard); a dimension of size 1
    stretches, so a (1 x n) row against an (m x 1) column gives the
    (m x n) outer combination.  Disagreeing non-1 dimensions give #VALUE!
    in every cell of the larger shape.
    """
    a_arr = isinstance(a, np.ndarray)
    b_arr = isinstance(b, np.ndarray)
    if not a_arr and not b_arr:
        return scalar_binary(op, a, b)
    sa, sb = shape_of(a), shape_of(b)
    shape = broadcast_shape(sa, sb)
    if shape is None:
        return error_array((max(sa[0], sb[0]), max(sa[1], sb[1])), CellError.VALUE)

    # fast path: both sides numeric (floats or plain scalars)
    fa = a if a_arr else (float(a) if is_number(a) else None)
    fb = b if b_arr else (float(b) if is_number(b) else None)
    if (fa is not None and fb is not None
            and (not a_arr or a.dtype == np.float64)
            and (not b_arr or b.dtype == np.float64)):
        if op in _NP_CMP:
            return _NP_CMP[op](fa, fb)
        with np.errstate(all="ignore"):
            res = _NP_ARITH[op](fa, fb)
        if not isinstance(res, np.ndarray):
            res = np.asarray(res, dtype=np.float64).reshape(shape)
        if not np.isfinite(res).all():
            return _fix_nonfinite(op, res, np.asarray(fb))
        return res

    A = np.broadcast_to(as_array(a), shape)
    B = np.broadcast_to(as_array(b), shape)
    out = np.empty(shape, dtype=object)
    for i in range(shape[0]):
        for j in range(shape[1]):
            out[i, j] = scalar_binary(op, box(A[i, j]), box(B[i, j]))
    return tighten(out)


def tighten(arr: np.ndarray) -> np.ndarray:
    """Return a float64 array when every element of an object array is a number."""
    if arr.dtype != object:
        return arr
    flat = arr.ravel()
    if all(type(x) is float for x in flat):
        return arr.astype(np.float64)
    return arr


def map_unary(fn, v):
    """Apply a float -> float function elementwise with error propagation."""
    if isinstance(v, np.ndarray):
        if v.dtype == np.float64:
            with np.errstate(all="ignore"):
                res = fn(v)
            if not np.isfinite(res).all():
                out = res.astype(object)
                out[~np.isfinite(res)] = CellError.NUM
                return out
            return res
        out = np.empty(v.shape, dtype=object)
        for idx, x in np.ndenumerate(v):
            out[idx] = map_unary(fn, box(x))
        return tighten(out)
    if isinstance(v, CellError):
        return v
    try:
        x = to_number(v)
    except EvalError as e:
        return e.code
    with np.errstate(all="ignore"):
        r = float(fn(np.float64(x)))
    return r if math.isfinite(r) else CellError.NUM


def format_scalar(v) -> str:
    """Display text of a scalar (used by dumps and traces)."""
    if v is BLANK:
        return ""
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    if isinstance(v, float):
        return format_number(v)
    if isinstance(v, CellError):
        return v.value
    return str(v)


def format_number(x: float) -> str:
    """Shortest round-tripping text; integral values lose the trailing '.0'."""
    if x == 0.0:
        return "0"
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x).replace("e", "E")
