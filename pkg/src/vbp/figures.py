"""Small reference workbooks with known values, used by ``vbp selftest``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .builder import build_forward_sheet, gen_ema, gen_tabulation
from .engine import calculate_sheet
from .grid import CellAddr, Workbook, parse_range
from .oracle import forward, least_squares
from .values import CellError
from .workbook_io import loads


@dataclass
class Fixture:
    name: str
    text: str
    passes: int
    expected: dict  # range text -> nested list of values
    tol: float = 0.0

    def run(self) -> Workbook:
        wb = loads(self.text, source=self.name)
        for _ in range(self.passes):
            calculate_sheet(wb)
        return wb

    def mismatches(self, wb: Workbook) -> list[str]:
        bad = []
        for rng, want in self.expected.items():
            got = wb.read_range(parse_range(rng))
            want = np.array(want, dtype=object).reshape(got.shape)
            for (i, j), w in np.ndenumerate(want):
                g = got[i, j]
                if isinstance(w, float) and isinstance(g, (int, float)):
                    if abs(g - w) <= self.tol:
                        continue
                elif g == w:
                    continue
                bad.append(f"{rng}[{i},{j}]: got {g!r}, want {w!r}")
        return bad


CIRCULAR = """\
CELL B2 =B2+1
CELL D2 =D4+1
CELL D4 =D2+1
"""

# the circular cells are entered first, then the lagged copies fanning out from them
LAGGED = """\
CELL G20 =G20+1
CELL H20 =G20
CELL I20 =H20
CELL F20 =G20
CELL E20 =F20
CELL D20 =E20
CELL E28 =E28+1
CELL E29 =E28
CELL E30 =E29
CELL E27 =E28
CELL E26 =E27
CELL E25 =E26
"""

OUTER = """\
NAME a_ C4:E4
NAME b_ G4:G5
SET C4 1
SET D4 2
SET E4 3
SET G4 4
SET G5 5
ARRAY I4:K5 =a_*b_
"""

MMULT = """\
NAME w_1 B25:D27
NAME x F25:F27
SET B25 1
SET C25 2
SET D25 3
SET B26 4
SET C26 5
SET D26 6
SET B27 0
SET C27 1
SET D27 1
SET F25 3
SET F26 5
SET F27 1
ARRAY H25:H27 =MMULT(w_1,x)
ARRAY J25:J26 =MMULT(w_1,x)
ARRAY L25 =MMULT(w_1,x)
ARRAY N25:N28 =MMULT(w_1,x)
"""

W = [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]
V = [[0.5, -1.0, 2.0], [0.0, 1.5, -0.25]]

ELEMENTWISE = """\
NAME w_ B11:D12
NAME v_ F11:H12
""" + "".join(
    f"SET {'BCD'[j]}{11 + i} {W[i][j]!r}\nSET {'FGH'[j]}{11 + i} {V[i][j]!r}\n"
    for i in range(2) for j in range(3)
) + """\
ARRAY B15:D16 =w_+v_
ARRAY F15:H16 =w_*v_
ARRAY J15:L16 =EXP(v_)
ARRAY B18:C19 =w_*v_
"""

REGRESSION = """\
SET C3 0
SET D3 0
SET E3 0
SET F3 0
SET C4 0
SET D4 1
SET E4 1
SET F4 0
SET C5 1
SET D5 0
SET E5 1
SET F5 0
SET C6 1
SET D6 1
SET E6 0
SET F6 1
ARRAY C9:F10 =TRANSPOSE(C3:D6)
SET C11 1
SET D11 1
SET E11 1
SET F11 1
ARRAY C14:F15 =TRANSPOSE(E3:F6)
ARRAY C18:E19 =TRANSPOSE(MMULT(MINVERSE(MMULT(C9:F11,TRANSPOSE(C9:F11))),MMULT(C9:F11,TRANSPOSE(C14:F15))))
ARRAY H3:I6 =TRANSPOSE(MMULT(C18:E19,C9:F11))
ARRAY H8:I8 =TRANSPOSE(MMULT((C14:F15-TRANSPOSE(H3:I6))^2,TRANSPOSE(C11:F11)))
"""

SELECTION = """\
NAME TrData E6:H9
NAME itc K6
NAME itcp1 K7
""" + "".join(
    f"SET {c}{6 + i} {v}\n"
    for i, row in enumerate([(0, 0, 0, 0), (0, 1, 1, 0), (1, 0, 1, 0), (1, 1, 0, 1)])
    for c, v in zip("EFGH", row)
) + """\
SET K5 -1
CELL K5 =K5+1
SET K6 3
CELL K6 =MOD(itc+1,4)
SET K7 0
CELL K7 =MOD(itcp1+1,4)
ARRAY E11:H11 =OFFSET(TrData,itc,)
ARRAY E12:H12 =OFFSET(TrData,itcp1,)
"""


def fixtures() -> list[Fixture]:
    na = CellError.NA
    w, v = np.array(W), np.array(V)
    return [
        Fixture("circular, entry", CIRCULAR, 0, {"B2": [1.0], "D2": [1.0], "D4": [2.0]}),
        Fixture("circular, 1 pass", CIRCULAR, 1, {"B2": [2.0], "D2": [3.0], "D4": [4.0]}),
        Fixture("lagged states, entry", LAGGED, 0,
                {"D20:I20": [1.0] * 6, "E25:E30": [1.0] * 6}),
        Fixture("lagged states, 2 passes", LAGGED, 2,
                {"D20:I20": [1.0, 1.0, 2.0, 3.0, 3.0, 3.0],
                 "E25:E30": [1.0, 1.0, 2.0, 3.0, 3.0, 3.0]}),
        Fixture("lagged states, 3 passes", LAGGED, 3,
                {"D20:I20": [1.0, 2.0, 3.0, 4.0, 4.0, 4.0],
                 "E25:E30": [1.0, 2.0, 3.0, 4.0, 4.0, 4.0]}),
        Fixture("outer product", OUTER, 0,
                {"I4:K5": [[4.0, 8.0, 12.0], [5.0, 10.0, 15.0]]}),
        Fixture("MMULT restrictions", MMULT, 0,
                {"H25:H27": [16.0, 43.0, 6.0], "J25:J26": [16.0, 43.0], "L25": [16.0],
                 "N25:N28": [16.0, 43.0, 6.0, na]}),
        Fixture("add, Hadamard, EXP", ELEMENTWISE, 0,
                {"B15:D16": (w + v).tolist(), "F15:H16": (w * v).tolist(),
                 "J15:L16": np.exp(v).tolist(), "B18:C19": (w * v)[:, :2].tolist()}),
        Fixture("normal equations", REGRESSION, 0,
                {"C18:E19": [[0.0, 0.0, 0.5], [0.5, 0.5, -0.25]],
                 "H3:I6": [[0.5, -0.25], [0.5, 0.25], [0.5, 0.25], [0.5, 0.75]],
                 "H8:I8": [1.0, 0.25]}, tol=1e-9),
        Fixture("data selection, 1 pass", SELECTION, 1,
                {"K5:K7": [1.0, 1.0, 2.0], "E11:H11": [0.0, 1.0, 1.0, 0.0],
                 "E12:H12": [1.0, 0.0, 1.0, 0.0]}),
    ]


# -- checks that drive a sheet from Python -----------------------------------------------------

XOR_AND = np.array([[0, 0, 0, 0], [0, 1, 1, 0], [1, 0, 1, 0], [1, 1, 0, 1]], dtype=np.float64)

# frozen 2-2-2-2 weights for the tabulation check; input (0, 1) gives out (0.950126, 0.000855)
TAB_WEIGHTS = [
    np.array([[1.014896, 1.035574548, -1.24065], [0.962825, 0.888096135, -0.49727]]),
    np.array([[1.775053, 0.713032, -0.79671], [1.375288, 1.563712, 0.837125]]),
    np.array([[-1.40833, 1.393707, -0.30451], [1.388428, -0.24132, 1.185454]]),
]

# trained XOR/AND weights with their printed outputs, one row per record
TRAINED_WEIGHTS = [
    np.array([[1.014045, 1.034723669, -1.24132], [0.962683, 0.887954178, -0.49682]]),
    np.array([[1.774492, 0.712279, -0.79761], [1.374877, 1.563494, 0.837633]]),
    np.array([[-1.40842, 1.394039, -0.3026], [1.388176, -0.24171, 1.184837]]),
]
TRAINED_OUTPUTS = np.array([[0.004604, -0.00048138], [0.950528, -0.00218611],
                            [0.952855, -0.0010876], [0.006799, 0.964574872]])


def ema_check(steps: int = 100, periods: int = 4, seed: int = 0) -> float:
    """Largest gap between the sheet EMA and the closed-form recursion."""
    wb = Workbook()
    sheet = wb.default_sheet
    rng = np.random.default_rng(seed)
    ys = rng.random((steps, 2))
    for i in range(2):
        wb.set_value(CellAddr(2 + i, 2, sheet), 0.0)
    gen_ema(wb, "B2:B3", 2, 2, 3, periods)
    a = 2.0 / (periods + 1)
    ema = None
    worst = 0.0
    for y in ys:
        for i in range(2):
            wb.set_value(CellAddr(2 + i, 2, sheet), float(y[i]))
        calculate_sheet(wb)
        ema = y.copy() if ema is None else a * y + (1 - a) * ema
        got = np.asarray(wb.read_range(parse_range("D2:D3")), dtype=np.float64).ravel()
        worst = max(worst, float(np.max(np.abs(got - ema))))
    return worst


def tabulation_check(weights=None, activations=("tanh",) * 3, data=XOR_AND):
    """Tabulated averages after S passes next to the same numbers from the oracle."""
    weights = TAB_WEIGHTS if weights is None else weights
    S = data.shape[0]
    n = weights[0].shape[1] - 1
    fs = build_forward_sheet([n] + [w.shape[0] for w in weights], list(activations), weights,
                             data=data)
    wb = fs.workbook
    tab = gen_tabulation(wb, fs.driver, fs.out_cells, data[:, n:], top=fs.bottom + 2)
    for _ in range(S):
        calculate_sheet(wb)
    sheet_avg = np.array([wb.get_value(a) for a in tab.averages], dtype=np.float64)
    outs = np.array([forward(weights, list(activations), r[:n]).out[:, 0] for r in data])
    oracle_avg = np.mean(np.abs(data[:, n:] - outs), axis=0)
    return sheet_avg, oracle_avg


def regression_check() -> float:
    X = np.vstack([XOR_AND[:, :2].T, np.ones(4)])
    w = least_squares(X, XOR_AND[:, 2:].T)
    return float(np.max(np.abs(w - np.array([[0, 0, 0.5], [0.5, 0.5, -0.25]]))))


def run_all() -> list[tuple[str, bool, str]]:
    """(name, ok, detail) for every fixture and check."""
    results = []
    for fx in fixtures():
        try:
            bad = fx.mismatches(fx.run())
        except Exception as e:  # report, keep going
            bad = [f"{type(e).__name__}: {e}"]
        results.append((fx.name, not bad, "; ".join(bad[:3])))
    gap = ema_check()
    results.append(("EMA recursion", gap <= 1e-12, f"max gap {gap:.3g}"))
    sheet_avg, oracle_avg = tabulation_check()
    gap = float(np.max(np.abs(sheet_avg - oracle_avg)))
    results.append(("tabulation vs forward pass", gap <= 1e-12, f"max gap {gap:.3g}"))
    gap = regression_check()
    results.append(("least squares weights", gap <= 1e-9 and math.isfinite(gap),
                    f"max gap {gap:.3g}"))
    return results
