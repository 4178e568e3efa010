"""Random composite series built from a fixed table of 14 scalar shapes.

A series is a weighted sum of shapes, each evaluated on a scaled and shifted
time axis: value(t) = sum_i w_i * shape_{b_i}(s_i * (t + delta_i)). The draw
that defines one series (component count, shape ids, weights, scales, shifts)
is reproducible from a single integer seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ParameterError
from .series import TimeGrid, TimeSeries

N_BASIS = 14

# Keeps the reciprocal-scaled sine finite at the origin.
SINC_EPS = 1e-10

# All seeded draws in this package go through numpy's default PCG64 stream;
# pinning the algorithm here is what makes seeds portable across machines.
PRNG_ALGORITHM = "pcg64"


def _gaussian_wave(t):
    return 5.0 * np.exp(-5e-5 * (t - 6.0) ** 2) * np.sin(0.5 * t)


def _linear_cos(t):
    return 0.3 + 0.5 * t + 0.2 * np.cos(10.0 * t)


def _linear(t):
    return 0.3 + 0.5 * t


def _sin(t):
    return np.sin(4.0 * t)


def _sinc(t):
    d = t + SINC_EPS
    d = np.where(d == 0.0, SINC_EPS, d)  # total even at t == -SINC_EPS
    return 10.0 / d * np.sin(5.0 * t)


def _beat(t):
    return np.sin(t) * np.sin(5.0 * t)


def _sigmoid(t):
    return expit(4.0 * t)


def _log(t):
    return np.log1p(t)


def _sin_scaled(t):
    return 4.0 * (t + 1.0) * np.sin(5.0 * (t + 1.0) + 4.0)


def _square(t):
    return 3.0 * t**2


def _step(t):
    # Two-argument step convention: 0 below the jump, 1 at and above it.
    return np.heaviside(t - 3.0, 1.0)


_MULTISTEP_TERMS = (
    (0.2, 1.0),
    (0.3, 2.5),
    (-0.1, 4.0),
    (0.4, 5.5),
    (-0.3, 7.0),
    (0.2, 8.5),
    (0.1, 9.5),
)


def _multistep(t):
    out = np.zeros_like(t)
    for coeff, at in _MULTISTEP_TERMS:
        out = out + coeff * np.heaviside(t - at, 1.0)
    return out


def _chirp(t):
    return np.sin(10.0 * t**2)


def _sawtooth(t):
    u = t / np.pi
    return 2.0 * (u - np.ceil(0.5 + u))


_BASIS_TABLE = {
    1: _gaussian_wave,
    2: _linear_cos,
    3: _linear,
    4: _sin,
    5: _sinc,
    6: _beat,
    7: _sigmoid,
    8: _log,
    9: _sin_scaled,
    10: _square,
    11: _step,
    12: _multistep,
    13: _chirp,
    14: _sawtooth,
}

BASIS_NAMES = {
    1: "gaussian_wave",
    2: "linear_cos",
    3: "linear",
    4: "sin",
    5: "sinc",
    6: "beat",
    7: "sigmoid",
    8: "log",
    9: "sin_scaled",
    10: "square",
    11: "step",
    12: "multistep",
    13: "chirp",
    14: "sawtooth",
}


def eval_basis(basis_id: int, t):
    """Evaluate shape `basis_id` (1..14) at t, scalar or ndarray."""
    fn = _BASIS_TABLE.get(basis_id)
    if fn is None:
        raise ParameterError(f"basis id must be in 1..{N_BASIS}, got {basis_id}")
    arr = fn(np.asarray(t, dtype=float))
    if np.ndim(t) == 0:
        return float(arr)
    return arr


@dataclass(frozen=True)
class Component:
    """One additive term: w * shape_basis(s * (t + delta))."""

    basis: int
    w: float
    s: float
    delta: float

    def __post_init__(self):
        if self.basis not in _BASIS_TABLE:
            raise ParameterError(f"basis id must be in 1..{N_BASIS}, got {self.basis}")
        if not 0.5 <= self.w <= 2.0:
            raise ParameterError(f"w must be in [0.5, 2.0], got {self.w}")
        if not 0.5 <= self.s <= 2.0:
            raise ParameterError(f"s must be in [0.5, 2.0], got {self.s}")
        if not 0.0 <= self.delta <= 4.0:
            raise ParameterError(f"delta must be in [0, 4], got {self.delta}")

    def to_dict(self) -> dict:
        return {"basis": self.basis, "w": self.w, "s": self.s, "delta": self.delta}


@dataclass(frozen=True)
class SeriesSpec:
    """The random draw defining one synthetic series."""

    components: tuple[Component, ...]
    seed: int

    def __post_init__(self):
        if not 1 <= len(self.components) <= 4:
            raise ParameterError(
                f"spec needs 1..4 components, got {len(self.components)}"
            )
        object.__setattr__(self, "components", tuple(self.components))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "components": [c.to_dict() for c in self.components],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SeriesSpec":
        comps = tuple(
            Component(int(c["basis"]), float(c["w"]), float(c["s"]), float(c["delta"]))
            for c in d["components"]
        )
        return cls(comps, seed=int(d["seed"]))


def sample_spec(seed: int) -> SeriesSpec:
    """Draw a spec: n ~ U{1..4} components, each with basis ~ U{1..14},
    w ~ U(0.5, 2), s ~ U(0.5, 2), delta ~ U(0, 4).

    Draw order is fixed (n, then per component: basis, w, s, delta) so a seed
    reproduces the identical spec everywhere.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    comps = []
    for _ in range(n):
        basis = int(rng.integers(1, N_BASIS + 1))
        w = float(rng.uniform(0.5, 2.0))
        s = float(rng.uniform(0.5, 2.0))
        delta = float(rng.uniform(0.0, 4.0))
        comps.append(Component(basis, w, s, delta))
    return SeriesSpec(tuple(comps), seed=int(seed))


def evaluate(spec: SeriesSpec, times) -> np.ndarray:
    """The spec's generating function f evaluated at arbitrary times."""
    t = np.asarray(times, dtype=float)
    total = np.zeros_like(t)
    for c in spec.components:
        total = total + c.w * eval_basis(c.basis, c.s * (t + c.delta))
    return total


def generate(spec: SeriesSpec, grid: TimeGrid) -> TimeSeries:
    """Sample the spec's generating function on the grid."""
    return TimeSeries(grid, evaluate(spec, grid.times))
