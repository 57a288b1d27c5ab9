"""Reference numerics: forward pass, deltas, the two-region training schedule,
and closed-form least squares.

Everything here works on plain numpy arrays and shares nothing with the
formula engine except the random number generator, so the two can be used
to check each other.  Column vectors are kept 2-D ``(k, 1)`` and each step
performs the same floating-point operations, in the same order, as the
corresponding sheet formula.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import NetworkSpec
from .prng import SplitMix64


class SingularMatrixError(ArithmeticError):
    pass


def _col(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64).reshape(-1, 1)


def activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "logistic":
        return np.divide(1.0, np.add(1.0, np.exp(np.negative(z))))
    if kind == "relu":
        return np.where(z > 0.0, z, 0.0)
    if kind == "identity":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def derivative(kind: str, out: np.ndarray):
    """Derivative factor written in terms of the layer output; None for identity."""
    if kind == "tanh":
        return np.subtract(1.0, np.power(out, 2.0))
    if kind == "logistic":
        return np.multiply(out, np.subtract(1.0, out))
    if kind == "relu":
        return np.where(out > 0.0, 1.0, 0.0)
    if kind == "identity":
        return None
    raise ValueError(f"unknown activation {kind!r}")


@dataclass
class ForwardTrace:
    outs: list          # out_0 = extended input, out_h extended for h < q
    zs: list            # pre-activations, one per layer
    out: np.ndarray     # final output (m_q, 1)


def forward(weights, activations, x) -> ForwardTrace:
    prev = np.vstack([_col(x), [[1.0]]])
    outs, zs = [prev], []
    q = len(weights)
    for h, (w, act) in enumerate(zip(weights, activations), start=1):
        w = np.asarray(w, dtype=np.float64)
        if w.shape[1] != prev.shape[0]:
            raise ValueError(f"layer {h}: weights {w.shape} do not fit input of length {prev.shape[0]}")
        z = w @ prev
        o = activate(act, z)
        zs.append(z)
        if h < q:
            o = np.vstack([o, [[1.0]]])
        outs.append(o)
        prev = o
    return ForwardTrace(outs, zs, outs[-1])


def deltas(weights, activations, trace: ForwardTrace, targ) -> list:
    """Deltas for layers 1..q (list index h-1)."""
    q = len(weights)
    out = trace.out
    err = np.subtract(_col(targ), out)
    d = derivative(activations[-1], out)
    ds = [None] * q
    ds[q - 1] = err if d is None else np.multiply(err, d)
    for h in range(q - 1, 0, -1):
        back = np.ascontiguousarray(np.asarray(weights[h], dtype=np.float64).T) @ ds[h]
        d = derivative(activations[h - 1], trace.outs[h])
        full = back if d is None else np.multiply(back, d)
        ds[h - 1] = full[:weights[h - 1].shape[0]]
    return ds


def step(w, eta, prev_out, delta):
    """w + eta * (prev_out^T (x) delta)."""
    return np.add(w, np.multiply(eta, np.multiply(prev_out.T, delta)))


def sgd_step(weights, activations, etas, x, targ) -> list:
    trace = forward(weights, activations, x)
    ds = deltas(weights, activations, trace, targ)
    return [step(np.asarray(w, dtype=np.float64), eta, trace.outs[h], ds[h])
            for h, (w, eta) in enumerate(zip(weights, etas))]


def loss(weights, activations, x, targ) -> float:
    """Half the squared error of one sample."""
    out = forward(weights, activations, x).out
    return 0.5 * float(np.sum((_col(targ) - out) ** 2))


# -- two-region schedule ---------------------------------------------------------------

def sample_sequence(spec: NetworkSpec, count: int, passes: int, rng: SplitMix64 | None = None):
    """(itc, itcp1) after each pass; the entry-time state comes first.

    ``rng`` is consumed for the random mode, one draw per pass plus one at entry.
    """
    seq = []
    if spec.sampling == "sequential":
        itc, itcp1 = 0, 1 % count
        seq.append((itc, itcp1))
        for _ in range(passes):
            itc, itcp1 = (itc + 1) % count, (itcp1 + 1) % count
            seq.append((itc, itcp1))
        return seq
    if spec.sampling == "shuffled":
        stride = spec.stride_for(count)
        itc = 0
        seq.append((itc, (itc + 1) % count))
        for _ in range(passes):
            itc = (itc + stride) % count
            seq.append((itc, (itc + 1) % count))
        return seq
    itc = rng.randbetween(0, count - 1) % count
    seq.append((itc, (itc + 1) % count))
    for _ in range(passes):
        itc = (itc + rng.randbetween(0, count - 1)) % count
        seq.append((itc, (itc + 1) % count))
    return seq


@dataclass
class VbpState:
    wA: list = field(default_factory=list)
    wB: list = field(default_factory=list)
    traceA: ForwardTrace | None = None
    traceB: ForwardTrace | None = None
    delA: list = field(default_factory=list)
    delB: list = field(default_factory=list)
    itc: int = 0
    itcp1: int = 0
    passes: int = 0
    draws: int = 0


def simulate_vbp(spec: NetworkSpec, data, passes: int, history: bool = True):
    """Replay the two-region sheet for ``passes`` passes (the first is the init pass).

    Returns ``(trajectory, state)``: the Region-B weights after every pass
    (empty when ``history`` is false) and the final state.
    """
    data = np.asarray(data, dtype=np.float64)
    S = data.shape[0]
    n, q = spec.n_inputs, spec.layers
    if data.shape[1] != n + spec.n_outputs:
        raise ValueError(f"data has {data.shape[1]} columns, topology needs {n + spec.n_outputs}")
    rng = SplitMix64(spec.seed)
    acts, etas = spec.activations, spec.eta
    st = VbpState()
    random_mode = spec.sampling == "random"
    if random_mode:
        itc = rng.randbetween(0, S - 1) % S
    else:
        itc = 0
    itcp1 = 1 % S
    stride = spec.stride_for(S) if spec.sampling == "shuffled" else None
    traj = []
    for k in range(passes):
        if spec.sampling == "sequential":
            itc, itcp1 = (itc + 1) % S, (itcp1 + 1) % S
        elif spec.sampling == "shuffled":
            itc = (itc + stride) % S
            itcp1 = (itc + 1) % S
        else:
            itc = (itc + rng.randbetween(0, S - 1)) % S
            itcp1 = (itc + 1) % S
        if k == 0:
            wA = []
            for rows, cols in spec.weight_shapes():
                w = np.empty((rows, cols))
                for i in range(rows):
                    for j in range(cols):
                        u = rng.random()
                        w[i, j] = 2.0 * u - 1.0 if spec.random_init == "symmetric" else u
                wA.append(w)
        else:
            wA = [step(st.wB[h], etas[h], st.traceB.outs[h], st.delB[h]) for h in range(q)]
        xa, ta = data[itc, :n], data[itc, n:]
        trA = forward(wA, acts, xa)
        dA = deltas(wA, acts, trA, ta)
        wB = [step(wA[h], etas[h], trA.outs[h], dA[h]) for h in range(q)]
        xb, tb = data[itcp1, :n], data[itcp1, n:]
        trB = forward(wB, acts, xb)
        dB = deltas(wB, acts, trB, tb)
        st = VbpState(wA, wB, trA, trB, dA, dB, itc, itcp1, k + 1, rng.draws)
        if history:
            traj.append([w.copy() for w in wB])
    return traj, st


# -- least squares ------------------------------------------------------------------------

def gauss_inverse(a, cond_limit: float = 1e12) -> np.ndarray:
    """Inverse by Gauss-Jordan elimination with partial pivoting."""
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    aug = np.hstack([a, np.eye(n)])
    for c in range(n):
        p = c + int(np.argmax(np.abs(aug[c:, c])))
        if aug[p, c] == 0.0:
            raise SingularMatrixError("matrix is singular")
        if p != c:
            aug[[c, p]] = aug[[p, c]]
        aug[c] /= aug[c, c]
        for r in range(n):
            if r != c and aug[r, c] != 0.0:
                aug[r] -= aug[r, c] * aug[c]
    inv = aug[:, n:]
    cond = np.abs(a).sum(axis=0).max() * np.abs(inv).sum(axis=0).max()
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularMatrixError(f"matrix is ill-conditioned (condition ~{cond:.3g})")
    return inv


def least_squares(inputs, targets, cond_limit: float = 1e12) -> np.ndarray:
    """w_opt = [(X X^T)^-1 (X T^T)]^T for X of shape (n+1, S), T of shape (m, S)."""
    X = np.asarray(inputs, dtype=np.float64)
    T = np.asarray(targets, dtype=np.float64)
    if X.shape[1] != T.shape[1]:
        raise ValueError("inputs and targets must have the same number of samples")
    return (gauss_inverse(X @ X.T, cond_limit) @ (X @ T.T)).T


def independent_rows(X, tol: float | None = None) -> list[int]:
    """Indices of a maximal independent set of rows, preferring later rows."""
    X = np.asarray(X, dtype=np.float64)
    kept: list[int] = []
    for i in range(X.shape[0] - 1, -1, -1):
        trial = kept + [i]
        if np.linalg.matrix_rank(X[trial], tol=tol) == len(trial):
            kept = trial
    return sorted(kept)


def least_squares_reduced(inputs, targets, cond_limit: float = 1e12):
    """Least squares that gives collinear input rows a zero weight.

    Rows are scanned from last to first, so when a group of columns is
    linearly dependent the earliest member is the one dropped.
    """
    X = np.asarray(inputs, dtype=np.float64)
    keep = independent_rows(X)
    w_red = least_squares(X[keep], targets, cond_limit)
    w = np.zeros((w_red.shape[0], X.shape[0]))
    w[:, keep] = w_red
    return w, keep


def sse(w, inputs, targets) -> np.ndarray:
    """Sum of squared errors per target row."""
    r = np.asarray(targets) - np.asarray(w) @ np.asarray(inputs)
    return np.sum(r * r, axis=1)
