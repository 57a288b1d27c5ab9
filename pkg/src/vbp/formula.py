"""Tokenizer, parser and formatter for the supported formula subset."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .grid import CellAddr, col_to_letters, letters_to_col, MAX_COL
from .values import format_number


class ParseError(ValueError):
    def __init__(self, message: str, pos: int | None = None):
        if pos is not None:
            message = f"{message} (at position {pos})"
        super().__init__(message)
        self.pos = pos


# name -> (min args, max args or None for unbounded)
BUILTINS = {
    "MMULT": (2, 2),
    "TRANSPOSE": (1, 1),
    "MINVERSE": (1, 1),
    "OFFSET": (3, 5),
    "MOD": (2, 2),
    "RAND": (0, 0),
    "RANDBETWEEN": (2, 2),
    "TANH": (1, 1),
    "EXP": (1, 1),
    "IF": (2, 3),
    "ABS": (1, 1),
    "SUM": (1, None),
    "AVERAGE": (1, None),
    "ISNUMBER": (1, 1),
    "MAX": (1, None),
    "MIN": (1, None),
    "STDEV": (1, None),
}

VOLATILE = frozenset({"RAND", "RANDBETWEEN"})


# -- tokens --------------------------------------------------------------------

@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    start: int
    end: int

    def __repr__(self):
        return f"{self.kind} {self.text}"


_SYMBOLS = [
    ("<=", "le"), (">=", "ge"), ("<>", "ne"),
    ("=", "eq"), ("<", "lt"), (">", "gt"),
    ("+", "plus"), ("-", "minus"), ("*", "star"), ("/", "slash"), ("^", "caret"),
    ("(", "lparen"), (")", "rparen"), (",", "comma"), (":", "colon"),
]

_NUM_RE = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_CELL_RE = re.compile(r"(?:[A-Za-z_][A-Za-z0-9_]*!)?\$?[A-Za-z]{1,3}\$?[0-9]+(?![A-Za-z0-9_.(!])")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*")
_STRING_RE = re.compile(r'"(?:[^"]|"")*"')


def tokenize(text: str) -> list[Token]:
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            m = _NUM_RE.match(text, i)
            tokens.append(Token("num", m.group(), i, m.end()))
            i = m.end()
            continue
        if ch == '"':
            m = _STRING_RE.match(text, i)
            if not m:
                raise ParseError("unterminated string", i)
            tokens.append(Token("string", m.group(), i, m.end()))
            i = m.end()
            continue
        if ch.isalpha() or ch in "_$":
            m = _CELL_RE.match(text, i)
            if m:
                tokens.append(Token("cell", m.group(), i, m.end()))
                i = m.end()
                continue
            m = _IDENT_RE.match(text, i)
            if not m:
                raise ParseError(f"illegal character {ch!r}", i)
            word = m.group()
            nxt = text[m.end()] if m.end() < n else ""
            kind = "bool" if word.upper() in ("TRUE", "FALSE") and nxt != "(" else "ident"
            tokens.append(Token(kind, word, i, m.end()))
            i = m.end()
            continue
        for sym, kind in _SYMBOLS:
            if text.startswith(sym, i):
                tokens.append(Token(kind, sym, i, i + len(sym)))
                i += len(sym)
                break
        else:
            raise ParseError(f"illegal character {ch!r}", i)
    return tokens


# -- AST -----------------------------------------------------------------------

@dataclass(frozen=True)
class Number:
    value: float


@dataclass(frozen=True)
class Text:
    value: str


@dataclass(frozen=True)
class Bool:
    value: bool


@dataclass(frozen=True)
class CellRef:
    row: int
    col: int
    row_abs: bool = False
    col_abs: bool = False
    sheet: str | None = None

    @property
    def addr(self) -> CellAddr:
        return CellAddr(self.row, self.col, self.sheet)


@dataclass(frozen=True)
class RangeNode:
    start: CellRef
    end: CellRef


@dataclass(frozen=True)
class Name:
    name: str

    def __eq__(self, other):
        return isinstance(other, Name) and self.name.lower() == other.name.lower()

    def __hash__(self):
        return hash(self.name.lower())


@dataclass(frozen=True)
class Unary:
    op: str
    operand: object


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


@dataclass(frozen=True)
class Omitted:
    pass


_CMP_KINDS = {"eq": "=", "ne": "<>", "lt": "<", "le": "<=", "gt": ">", "ge": ">="}
_ADD_KINDS = {"plus": "+", "minus": "-"}
_MUL_KINDS = {"star": "*", "slash": "/"}


def _cell_from_text(text: str, pos: int) -> CellRef:
    sheet = None
    if "!" in text:
        sheet, text = text.split("!", 1)
    m = re.match(r"(\$?)([A-Za-z]{1,3})(\$?)([0-9]+)$", text)
    col = letters_to_col(m[2])
    row = int(m[4])
    if row < 1 or col > MAX_COL:
        raise ParseError(f"cell reference {text!r} out of range", pos)
    return CellRef(row, col, bool(m[3]), bool(m[1]), sheet)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self, k=0) -> Token | None:
        j = self.i + k
        return self.tokens[j] if j < len(self.tokens) else None

    def kind(self, k=0):
        t = self.peek(k)
        return t.kind if t else "end"

    def take(self, kind=None) -> Token:
        t = self.peek()
        if t is None:
            raise ParseError("unexpected end of formula", len(self.text))
        if kind is not None and t.kind != kind:
            raise ParseError(f"expected {kind}, found {t.text!r}", t.start)
        self.i += 1
        return t

    def parse(self):
        if not self.tokens:
            raise ParseError("empty formula", 0)
        node = self.comparison()
        t = self.peek()
        if t is not None:
            raise ParseError(f"unexpected token {t.text!r}", t.start)
        return node

    def comparison(self):
        node = self.additive()
        while self.kind() in _CMP_KINDS:
            op = _CMP_KINDS[self.take().kind]
            node = Binary(op, node, self.additive())
        return node

    def additive(self):
        node = self.multiplicative()
        while self.kind() in _ADD_KINDS:
            op = _ADD_KINDS[self.take().kind]
            node = Binary(op, node, self.multiplicative())
        return node

    def multiplicative(self):
        node = self.power()
        while self.kind() in _MUL_KINDS:
            op = _MUL_KINDS[self.take().kind]
            node = Binary(op, node, self.power())
        return node

    def power(self):
        base = self.unary()
        if self.kind() == "caret":
            self.take()
            return Binary("^", base, self.power())
        return base

    def unary(self):
        if self.kind() == "minus":
            self.take()
            return Unary("-", self.unary())
        if self.kind() == "plus":
            self.take()
            return self.unary()
        return self.primary()

    def primary(self):
        t = self.peek()
        if t is None:
            raise ParseError("unexpected end of formula", len(self.text))
        if t.kind == "num":
            self.take()
            return Number(float(t.text))
        if t.kind == "string":
            self.take()
            return Text(t.text[1:-1].replace('""', '"'))
        if t.kind == "bool":
            self.take()
            return Bool(t.text.upper() == "TRUE")
        if t.kind == "cell":
            self.take()
            start = _cell_from_text(t.text, t.start)
            if self.kind() == "colon":
                self.take()
                t2 = self.take("cell")
                end = _cell_from_text(t2.text, t2.start)
                if end.sheet is not None:
                    raise ParseError("sheet qualifier allowed only before the range", t2.start)
                if end.row < start.row or end.col < start.col:
                    raise ParseError(f"inverted range {t.text}:{t2.text}", t.start)
                return RangeNode(start, CellRef(end.row, end.col, end.row_abs, end.col_abs,
                                                start.sheet))
            return start
        if t.kind == "ident":
            self.take()
            if self.kind() == "lparen":
                return self.call(t)
            return Name(t.text)
        if t.kind == "lparen":
            self.take()
            node = self.comparison()
            self.take("rparen")
            return node
        raise ParseError(f"unexpected token {t.text!r}", t.start)

    def call(self, name_tok: Token):
        fname = name_tok.text.upper()
        if fname not in BUILTINS:
            raise ParseError(f"unknown function {name_tok.text!r}", name_tok.start)
        self.take("lparen")
        args = []
        if self.kind() == "rparen":
            self.take()
        else:
            while True:
                if self.kind() in ("comma", "rparen"):
                    args.append(Omitted())
                else:
                    args.append(self.comparison())
                t = self.take()
                if t.kind == "rparen":
                    break
                if t.kind != "comma":
                    raise ParseError(f"expected ',' or ')', found {t.text!r}", t.start)
        lo, hi = BUILTINS[fname]
        if len(args) < lo or (hi is not None and len(args) > hi):
            want = str(lo) if lo == hi else f"{lo}..{hi if hi is not None else ''}"
            raise ParseError(f"{fname} takes {want} arguments, got {len(args)}", name_tok.start)
        return Call(fname, tuple(args))


def parse_formula(text: str):
    """Parse formula text (with or without the leading '=') into an AST."""
    text = text.strip()
    if text.startswith("="):
        text = text[1:]
    return _Parser(text).parse()


# -- formatting ------------------------------------------------------------------

_PREC = {"=": 1, "<>": 1, "<": 1, "<=": 1, ">": 1, ">=": 1,
         "+": 2, "-": 2, "*": 3, "/": 3, "^": 4}
_UNARY_PREC = 5
_ATOM_PREC = 6


def _prec(node) -> int:
    if isinstance(node, Binary):
        return _PREC[node.op]
    if isinstance(node, Unary):
        return _UNARY_PREC
    return _ATOM_PREC


def _fmt_cell(ref: CellRef, with_sheet=True) -> str:
    text = ("$" if ref.col_abs else "") + col_to_letters(ref.col) \
        + ("$" if ref.row_abs else "") + str(ref.row)
    if with_sheet and ref.sheet:
        text = f"{ref.sheet}!{text}"
    return text


def format_formula(node) -> str:
    """Render an AST back to text using the fewest parentheses."""
    if isinstance(node, Number):
        return format_number(node.value)
    if isinstance(node, Text):
        return '"' + node.value.replace('"', '""') + '"'
    if isinstance(node, Bool):
        return "TRUE" if node.value else "FALSE"
    if isinstance(node, CellRef):
        return _fmt_cell(node)
    if isinstance(node, RangeNode):
        return _fmt_cell(node.start) + ":" + _fmt_cell(node.end, with_sheet=False)
    if isinstance(node, Name):
        return node.name
    if isinstance(node, Omitted):
        return ""
    if isinstance(node, Call):
        return node.name + "(" + ",".join(format_formula(a) for a in node.args) + ")"
    if isinstance(node, Unary):
        inner = format_formula(node.operand)
        if _prec(node.operand) < _UNARY_PREC:
            inner = f"({inner})"
        return node.op + inner
    if isinstance(node, Binary):
        p = _PREC[node.op]
        left, right = format_formula(node.left), format_formula(node.right)
        lp, rp = _prec(node.left), _prec(node.right)
        right_assoc = node.op == "^"
        if lp < p or (right_assoc and lp == p):
            left = f"({left})"
        if rp < p or (not right_assoc and rp == p):
            right = f"({right})"
        return left + node.op + right
    raise TypeError(f"not a formula node: {node!r}")


def walk(node):
    """Yield every node of the tree, parents first."""
    yield node
    if isinstance(node, Unary):
        yield from walk(node.operand)
    elif isinstance(node, Binary):
        yield from walk(node.left)
        yield from walk(node.right)
    elif isinstance(node, Call):
        for a in node.args:
            yield from walk(a)


def is_volatile(node) -> bool:
    return any(isinstance(n, Call) and n.name in VOLATILE for n in walk(node))
