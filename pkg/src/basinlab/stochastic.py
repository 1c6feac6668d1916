"""Splittable, reproducible random streams.

Every trial owns a splitmix64 stream whose starting state is a mix of the
master seed and the trial index, so a trial's draws never depend on how
trials are scheduled.  :class:`RngStream` is the scalar form and
:class:`StreamBank` advances many streams at once with numpy; both produce
the same 64-bit outputs for the same identity.
"""

from __future__ import annotations

import math

import numpy as np

DEFAULT_SEED = 42

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
# odd constant decorrelating trial indices before they meet the seed
_TRIAL_KEY = 0xD1B54A32D192ED03
_INV_2_53 = 1.0 / (1 << 53)
_TWO_PI = 2.0 * math.pi


def mix64(z: int) -> int:
    """splitmix64 output finalizer; a bijection on 64-bit integers."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def initial_state(master_seed: int, trial_index: int) -> int:
    if trial_index < 0:
        raise ValueError("trial_index must be non-negative")
    return mix64((master_seed & MASK64) ^ mix64(trial_index * _TRIAL_KEY))


class RngStream:
    __slots__ = ("seed", "trial", "state")

    def __init__(self, master_seed: int, trial_index: int):
        self.seed = master_seed & MASK64
        self.trial = trial_index
        self.state = initial_state(master_seed, trial_index)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, trial={self.trial})"

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def random(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * _INV_2_53

    def uniform(self, a: float, b: float) -> float:
        if not a < b:
            raise ValueError("uniform needs a < b")
        x = a + (b - a) * self.random()
        return x if x < b else math.nextafter(b, a)

    def standard_normal(self) -> float:
        # Box-Muller, cosine branch; 1 - u keeps the log argument in (0, 1].
        # numpy's array kernels round differently from math.log1p, so use
        # them here too to stay bit-identical with StreamBank.
        u = np.array([self.random(), self.random()])
        return float((np.sqrt(-2.0 * np.log1p(-u[:1])) * np.cos(_TWO_PI * u[1:]))[0])

    def gaussian(self, std: float) -> float:
        """Mean-zero normal draw; ``std == 0`` returns 0 without advancing."""
        if std < 0:
            raise ValueError("std must be non-negative")
        if std == 0:
            return 0.0
        return std * self.standard_normal()


def derive_stream(master_seed: int, trial_index: int) -> RngStream:
    return RngStream(master_seed, trial_index)


def uniform(s: RngStream, a: float, b: float) -> float:
    return s.uniform(a, b)


def gaussian(s: RngStream, std: float) -> float:
    return s.gaussian(std)


def derive_seed(master_seed: int, *keys: int) -> int:
    """Child seed for a keyed sub-experiment (e.g. one sweep cell)."""
    z = master_seed & MASK64
    for k in keys:
        z = mix64(z ^ mix64((k & MASK64) ^ _TRIAL_KEY))
    return z


_U64 = np.uint64
_NP_GOLDEN = _U64(GOLDEN)
_NP_MIX1 = _U64(_MIX1)
_NP_MIX2 = _U64(_MIX2)
_S30, _S27, _S31, _S11 = _U64(30), _U64(27), _U64(31), _U64(11)


def _np_mix(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> _S30)
    z *= _NP_MIX1
    z ^= z >> _S27
    z *= _NP_MIX2
    z ^= z >> _S31
    return z


class StreamBank:
    """Many independent streams advanced in lockstep.

    Stream ``k`` of a bank built from ``(seed, trials)`` is the stream
    ``derive_stream(seed, trials[k])``.  ``seeds`` may also be an array, one
    master seed per stream.
    """

    def __init__(self, seeds, trials):
        trials = np.asarray(trials, dtype=np.int64)
        if trials.size and trials.min() < 0:
            raise ValueError("trial indices must be non-negative")
        seeds = np.broadcast_to(np.asarray(seeds, dtype=object), trials.shape)
        seed_bits = np.array([int(s) & MASK64 for s in seeds.ravel()], dtype=np.uint64)
        with np.errstate(over="ignore"):
            key = _np_mix(trials.astype(np.uint64) * _U64(_TRIAL_KEY))
            self.state = _np_mix(seed_bits.reshape(trials.shape) ^ key)

    def __len__(self):
        return self.state.size

    def next_u64(self) -> np.ndarray:
        self.state += _NP_GOLDEN
        return _np_mix(self.state)

    def random(self) -> np.ndarray:
        return (self.next_u64() >> _S11) * _INV_2_53

    def uniform(self, a: float, b: float) -> np.ndarray:
        if not a < b:
            raise ValueError("uniform needs a < b")
        x = a + (b - a) * self.random()
        return np.where(x < b, x, np.nextafter(b, a))

    def standard_normal(self) -> np.ndarray:
        u1 = self.random()
        u2 = self.random()
        return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(_TWO_PI * u2)
