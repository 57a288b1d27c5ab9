"""Seeded uniform stream shared by the calculation engine and the oracle.

splitmix64: the 64-bit state advances by the golden-ratio increment and the
output is mixed by two xor-shift-multiply rounds.  The top 53 bits of each
output form a double in [0, 1).
"""

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_SCALE = 2.0 ** -53


class SplitMix64:
    __slots__ = ("state", "draws")

    def __init__(self, seed=0):
        self.state = int(seed) & _MASK
        self.draws = 0

    def next_u64(self):
        self.state = (self.state + _GAMMA) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * _M1) & _MASK
        z = ((z ^ (z >> 27)) * _M2) & _MASK
        return z ^ (z >> 31)

    def random(self):
        """Uniform double in [0, 1)."""
        self.draws += 1
        return (self.next_u64() >> 11) * _SCALE

    def randbetween(self, low, high):
        """Integer uniform on [low, high], consuming exactly one draw."""
        low, high = int(low), int(high)
        return low + int(self.random() * (high - low + 1))

    def getstate(self):
        return self.state, self.draws

    def setstate(self, state):
        self.state, self.draws = int(state[0]) & _MASK, int(state[1])
