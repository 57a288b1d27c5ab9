"""Network specifications: topology in dash notation, activations, learning rates, sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

ACTIVATIONS = ("tanh", "logistic", "identity", "relu")
SAMPLING = ("sequential", "shuffled", "random")
INITS = ("uniform01", "symmetric")


class SpecError(ValueError):
    pass


def parse_topology(text: str) -> list[int]:
    """'2-2-2-2' -> [2, 2, 2, 2]."""
    parts = text.strip().split("-")
    if len(parts) < 2:
        raise SpecError(f"topology {text!r} needs at least an input and an output layer")
    sizes = []
    for i, p in enumerate(parts):
        p = p.strip()
        if not p.isdigit():
            raise SpecError(f"topology {text!r}: layer {i} is {p!r}, expected a positive integer")
        if int(p) < 1:
            raise SpecError(f"topology {text!r}: layer {i} must be >= 1")
        sizes.append(int(p))
    return sizes


def format_topology(sizes) -> str:
    return "-".join(str(s) for s in sizes)


def _is_prime(k: int) -> bool:
    if k < 2:
        return False
    return all(k % d for d in range(2, math.isqrt(k) + 1))


def auto_stride(count: int) -> int:
    """Largest prime below count/2 that is co-prime to count (1 if none)."""
    for k in range((count - 1) // 2, 1, -1):
        if k < count / 2 and _is_prime(k) and math.gcd(k, count) == 1:
            return k
    return 1


@dataclass
class NetworkSpec:
    topology: list[int]
    activations: list[str] = field(default_factory=list)
    eta: list[float] = field(default_factory=list)
    seed: int = 0
    sampling: str = "sequential"
    random_init: str = "uniform01"
    stride: int | None = None

    def __post_init__(self):
        if isinstance(self.topology, str):
            self.topology = parse_topology(self.topology)
        self.topology = [int(t) for t in self.topology]
        if len(self.topology) < 2 or min(self.topology) < 1:
            raise SpecError(f"bad topology {self.topology}")
        q = self.layers
        if isinstance(self.activations, str):
            self.activations = [a.strip() for a in self.activations.split(",")]
        if not self.activations:
            self.activations = ["tanh"] * q
        if len(self.activations) == 1 and q > 1:
            self.activations = self.activations * q
        if len(self.activations) != q:
            raise SpecError(f"{q} layers but {len(self.activations)} activations")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise SpecError(f"unknown activation {a!r}")
        if isinstance(self.eta, (int, float)):
            self.eta = [float(self.eta)]
        if not self.eta:
            self.eta = [0.1]
        self.eta = [float(e) for e in self.eta]
        if len(self.eta) == 1 and q > 1:
            self.eta = self.eta * q
        if len(self.eta) != q:
            raise SpecError(f"{q} layers but {len(self.eta)} learning rates")
        if any(not e > 0 for e in self.eta):
            raise SpecError("learning rates must be positive")
        if self.sampling not in SAMPLING:
            raise SpecError(f"unknown sampling mode {self.sampling!r}")
        if self.random_init not in INITS:
            raise SpecError(f"unknown init {self.random_init!r}")
        self.seed = int(self.seed) & (2**64 - 1)

    @property
    def layers(self) -> int:
        return len(self.topology) - 1

    @property
    def n_inputs(self) -> int:
        return self.topology[0]

    @property
    def n_outputs(self) -> int:
        return self.topology[-1]

    def weight_shapes(self) -> list[tuple[int, int]]:
        t = self.topology
        return [(t[h], t[h - 1] + 1) for h in range(1, len(t))]

    def parameter_count(self) -> int:
        return sum(r * c for r, c in self.weight_shapes())

    def stride_for(self, count: int) -> int:
        if self.stride is not None:
            if math.gcd(int(self.stride), count) != 1:
                raise SpecError(f"stride {self.stride} is not co-prime to {count}")
            return int(self.stride)
        return auto_stride(count)
