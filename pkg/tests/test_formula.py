import pytest
from hypothesis import given, strategies as st

from vbp.formula import (
    Binary, Call, CellRef, Name, Number, Omitted, ParseError, RangeNode, Unary, format_formula,
    is_volatile, parse_formula, tokenize,
)


def test_tokens():
    kinds = [t.kind for t in tokenize("MOD(itc+1,4)")]
    assert kinds == ["ident", "lparen", "ident", "plus", "num", "comma", "num", "rparen"]
    assert [t.kind for t in tokenize("$D$11<>D30:D33")] == ["cell", "ne", "cell", "colon", "cell"]


def test_call_structure():
    ast = parse_formula("=MOD(itc+1,4)")
    assert ast == Call("MOD", (Binary("+", Name("itc"), Number(1.0)), Number(4.0)))


def test_names_compare_case_insensitively():
    assert parse_formula("ITC") == parse_formula("itc")


def test_precedence():
    assert parse_formula("1+2*3") == Binary("+", Number(1), Binary("*", Number(2), Number(3)))
    # unary minus binds tighter than ^, as in spreadsheets
    assert parse_formula("-2^2") == Binary("^", Unary("-", Number(2)), Number(2))
    # ^ groups to the right
    assert parse_formula("2^3^2") == Binary("^", Number(2), Binary("^", Number(3), Number(2)))
    assert parse_formula("a_=0") == Binary("=", Name("a_"), Number(0))


def test_ranges_and_absolute_refs():
    ast = parse_formula("IF($D$11=D30:D33,$P$18,E30:E33)")
    cond = ast.args[0]
    assert cond.left == CellRef(11, 4, True, True)
    assert cond.right == RangeNode(CellRef(30, 4), CellRef(33, 4))


def test_omitted_argument():
    ast = parse_formula("OFFSET(TrData,itc,)")
    assert ast.args[2] == Omitted()


@pytest.mark.parametrize("text", ["TRANPOSE(A1)", "1+", "(1", "MOD(1)", "RAND(1)", "A1:", ",", "1 2"])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse_formula(text)


def test_volatile_detection():
    assert is_volatile(parse_formula("IF(ru=0,RAND(),w)"))
    assert is_volatile(parse_formula("MOD(itc+RANDBETWEEN(0,359),360)"))
    assert not is_volatile(parse_formula("MMULT(w_1,x)"))


@pytest.mark.parametrize("text", [
    "IF(ru=0,RAND(),w_1B+eta*(TRANSPOSE(inpB)*del_1B))",
    "TANH(MMULT(w_1A,inpA))",
    "(targA-outA)*(1-outA^2)",
    "1/(1+EXP(-MMULT(w_2,out_1)))",
    "IF(L25:L26=0,K25:K26,0.4*K25:K26+0.6*L25:L26)",
    "OFFSET(Samples,D11,)",
    "1-2-3",
    "1-(2-3)",
    "(2^3)^2",
    "-(1+2)",
])
def test_format_roundtrip_examples(text):
    ast = parse_formula(text)
    assert format_formula(ast) == text
    assert parse_formula(format_formula(ast)) == ast


def test_redundant_parentheses_dropped():
    assert format_formula(parse_formula("((1-2))-3")) == "1-2-3"
    assert format_formula(parse_formula("(a_*b_)")) == "a_*b_"


# -- random trees ------------------------------------------------------------------------------

numbers = st.one_of(st.integers(0, 1000).map(float),
                    st.floats(0, 1e6, allow_nan=False, allow_infinity=False))
cells = st.builds(CellRef, st.integers(1, 500), st.integers(1, 200), st.booleans(), st.booleans())
names = st.sampled_from(["itc", "w_1A", "eta", "TrData", "a_"]).map(Name)
leaves = st.one_of(numbers.map(Number), cells, names)


def _extend(children):
    return st.one_of(
        st.builds(Binary, st.sampled_from(["+", "-", "*", "/", "^", "=", "<", ">="]),
                  children, children),
        st.builds(Unary, st.just("-"), children),
        st.builds(lambda a: Call("TANH", (a,)), children),
        st.builds(lambda a, b: Call("MMULT", (a, b)), children, children),
        st.builds(lambda a, b, c: Call("IF", (a, b, c)), children, children, children),
    )


trees = st.recursive(leaves, _extend, max_leaves=12)


@given(trees)
def test_format_parse_roundtrip(tree):
    assert parse_formula(format_formula(tree)) == tree
