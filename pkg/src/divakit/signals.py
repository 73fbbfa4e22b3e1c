"""Elementary discrete-time blocks: delay lines, FIR filters, seedable RNG.

These stand in for the stock signal blocks a block-diagram simulator would
provide. Every block owns its own state and is meant to be driven by a single
simulation loop; separate instances never share state.
"""
from collections import deque

__all__ = ["DelayLine", "FirFilter", "Rng"]

# xoshiro256** masks
_U64 = 0xFFFFFFFFFFFFFFFF


class DelayLine:
    """Fixed-length scalar delay: push(x) returns the value pushed `length` calls ago.

    The first `length` pushes return `fill`. length == 0 is a passthrough.
    """

    def __init__(self, length, fill=0.0):
        if length < 0:
            raise ValueError(f"delay length must be >= 0, got {length}")
        self.length = int(length)
        self.fill = fill
        self._buf = deque([fill] * self.length, maxlen=self.length if self.length else 1)

    def push(self, x):
        if self.length == 0:
            return x
        out = self._buf[0]
        self._buf.append(x)  # maxlen evicts the element we just read
        return out


class FirFilter:
    """Direct-form FIR: y[n] = sum_k taps[k] * x[n-k], zero history at start."""

    def __init__(self, taps):
        taps = [float(b) for b in taps]
        if not taps:
            raise ValueError("FIR filter needs at least one tap")
        self._taps = tuple(taps)
        self._hist = deque([0.0] * len(taps), maxlen=len(taps))

    @property
    def taps(self):
        return self._taps

    def apply(self, x):
        self._hist.appendleft(float(x))
        return sum(b * v for b, v in zip(self._taps, self._hist))


def _splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & _U64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
    return state, z ^ (z >> 31)


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _U64


class Rng:
    """Seedable xoshiro256** generator with a per-channel deterministic mode.

    The algorithm is pinned (xoshiro256**, seeded via splitmix64, floats from
    the top 53 bits) so that a given seed yields the same draw sequence on any
    platform, which keeps golden regression files stable.

    In deterministic mode every draw returns a constant for its channel: the
    value from `constants` if configured, otherwise the midpoint of the
    requested range. This mirrors pinning each random simulation parameter to
    a fixed value when comparing runs.
    """

    def __init__(self, seed=0, deterministic=False, constants=None):
        self.seed = int(seed)
        self.deterministic = bool(deterministic)
        self.constants = dict(constants or {})
        s = self.seed & _U64
        state = []
        for _ in range(4):
            s, v = _splitmix64(s)
            state.append(v)
        self._s = state

    def _next_u64(self):
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _U64, 7) * 9) & _U64
        t = (s1 << 17) & _U64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def uniform(self, channel, lo, hi):
        """Draw from [lo, hi); in deterministic mode return the channel constant."""
        if lo > hi:
            raise ValueError(f"invalid range for channel {channel!r}: lo={lo} > hi={hi}")
        if self.deterministic:
            return float(self.constants.get(channel, 0.5 * (lo + hi)))
        u = (self._next_u64() >> 11) * 2.0**-53
        return lo + (hi - lo) * u
