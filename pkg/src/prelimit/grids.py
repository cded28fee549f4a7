"""Lattice boxes, grid functions, finite differences, and test-function samplers.

All functions live on a truncated box of the scaled lattice: the points
``delta * k`` for integer vectors ``k`` with ``lower <= k <= upper``
componentwise.  Out-of-box access is an error, never an extrapolation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import GridIndexError, SamplingError

__all__ = [
    "LatticeSpec",
    "GridFunction",
    "MultiIndex",
    "forward_difference",
    "difference_array",
    "sample_dlip",
    "sample_dlip_higher",
    "is_dlip",
    "max_abs_difference",
]


def _as_index_tuple(k, dim: int, name: str = "k") -> tuple[int, ...]:
    """Normalize an integer or integer sequence to a length-``dim`` tuple."""
    if np.isscalar(k):
        k = (int(k),)
    else:
        k = tuple(int(v) for v in k)
    if len(k) != dim:
        raise ValueError(f"{name} has length {len(k)}, expected {dim}")
    return k


@dataclass(frozen=True)
class LatticeSpec:
    """A truncated box ``{delta*k : lower <= k <= upper}`` of the lattice.

    Parameters
    ----------
    dim : int
        Number of lattice dimensions, ``d >= 1``.
    delta : float
        Lattice spacing, ``> 0``.
    lower, upper : tuple of int
        Componentwise corners of the index box, ``lower <= upper``.
    """

    dim: int
    delta: float
    lower: tuple[int, ...]
    upper: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(int(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(int(v) for v in self.upper))
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.delta > 0:
            raise ValueError("delta must be > 0")
        if len(self.lower) != self.dim or len(self.upper) != self.dim:
            raise ValueError("lower/upper length must equal dim")
        if any(l > u for l, u in zip(self.lower, self.upper)):
            raise ValueError("lower must be <= upper componentwise")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(u - l + 1 for l, u in zip(self.lower, self.upper))

    @property
    def npoints(self) -> int:
        return int(np.prod(self.shape))

    def contains(self, k) -> bool:
        k = _as_index_tuple(k, self.dim)
        return all(l <= v <= u for v, l, u in zip(k, self.lower, self.upper))

    def offset(self, k) -> tuple[int, ...]:
        """Array index of lattice index ``k``; raises if out of box."""
        k = _as_index_tuple(k, self.dim)
        for j, (v, l, u) in enumerate(zip(k, self.lower, self.upper)):
            if not l <= v <= u:
                raise GridIndexError(
                    f"index {v} out of box [{l}, {u}] in coordinate {j}"
                )
        return tuple(v - l for v, l in zip(k, self.lower))

    def axis_points(self, j: int) -> np.ndarray:
        """Scaled coordinates ``delta*k_j`` along axis ``j``."""
        return self.delta * np.arange(self.lower[j], self.upper[j] + 1)

    def meshgrid(self) -> list[np.ndarray]:
        """Scaled coordinates of every box point, as ``dim`` broadcast arrays."""
        axes = [self.axis_points(j) for j in range(self.dim)]
        return list(np.meshgrid(*axes, indexing="ij"))


class GridFunction:
    """A real-valued function on the box of a :class:`LatticeSpec`.

    Values are stored in a read-only float64 array indexed in row-major
    order with the last axis fastest.  Instances are immutable and safe to
    share across threads.
    """

    __slots__ = ("spec", "values")

    def __init__(self, spec: LatticeSpec, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != spec.shape:
            raise ValueError(
                f"values shape {values.shape} does not match box shape {spec.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("grid values must all be finite")
        values = values.copy()
        values.setflags(write=False)
        self.spec = spec
        self.values = values

    @classmethod
    def from_callable(cls, spec: LatticeSpec, fn: Callable) -> "GridFunction":
        """Evaluate ``fn`` on every scaled point ``delta*k`` of the box.

        ``fn`` receives the broadcast coordinate arrays, one per axis.
        """
        mesh = spec.meshgrid()
        vals = np.asarray(fn(*mesh), dtype=np.float64)
        vals = np.broadcast_to(vals, spec.shape)
        return cls(spec, vals)

    def value(self, k) -> float:
        return float(self.values[self.spec.offset(k)])

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.spec, values)

    def to_json(self) -> str:
        payload = {
            "dim": self.spec.dim,
            "delta": self.spec.delta,
            "lower": list(self.spec.lower),
            "upper": list(self.spec.upper),
            "values": self.values.ravel(order="C").tolist(),
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GridFunction":
        payload = json.loads(text)
        spec = LatticeSpec(
            dim=int(payload["dim"]),
            delta=float(payload["delta"]),
            lower=tuple(payload["lower"]),
            upper=tuple(payload["upper"]),
        )
        vals = np.asarray(payload["values"], dtype=np.float64).reshape(
            spec.shape, order="C"
        )
        return cls(spec, vals)


@dataclass(frozen=True)
class MultiIndex:
    """Non-negative difference/derivative orders, one per axis."""

    a: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(int(v) for v in self.a))
        if any(v < 0 for v in self.a):
            raise ValueError("multi-index entries must be non-negative")

    @classmethod
    def of(cls, a, dim: int) -> "MultiIndex":
        if isinstance(a, MultiIndex):
            if len(a.a) != dim:
                raise ValueError("multi-index length does not match dimension")
            return a
        return cls(_as_index_tuple(a, dim, name="a"))

    @property
    def order(self) -> int:
        return sum(self.a)


def forward_difference(f: GridFunction, a, k) -> float:
    """Iterated forward difference of ``f`` at lattice index ``k``.

    Applies ``a[i]`` first differences along axis ``i``; the whole stencil
    ``k .. k + a`` must lie inside the box.
    """
    spec = f.spec
    a = MultiIndex.of(a, spec.dim)
    k = _as_index_tuple(k, spec.dim)
    for j in range(spec.dim):
        hi = k[j] + a.a[j]
        if k[j] < spec.lower[j] or hi > spec.upper[j]:
            raise GridIndexError(
                f"difference stencil {k[j]}..{hi} leaves box "
                f"[{spec.lower[j]}, {spec.upper[j]}] in coordinate {j}"
            )
    lo = spec.offset(k)
    block = f.values[tuple(slice(o, o + av + 1) for o, av in zip(lo, a.a))]
    for axis in range(spec.dim):
        for _ in range(a.a[axis]):
            block = np.diff(block, axis=axis)
    return float(block.reshape(()))


def difference_array(f: GridFunction, a) -> np.ndarray:
    """``forward_difference`` at every admissible ``k``, as an array.

    Entry ``[i]`` corresponds to ``k = lower + i``; the output shape shrinks
    by ``a[j]`` along axis ``j``.
    """
    a = MultiIndex.of(a, f.spec.dim)
    block = f.values
    for axis in range(f.spec.dim):
        for _ in range(a.a[axis]):
            block = np.diff(block, axis=axis)
    return block


def max_abs_difference(f: GridFunction, a) -> float:
    """Max of ``|forward_difference(f, a, k)|`` over all admissible ``k``."""
    return float(np.max(np.abs(difference_array(f, a))))


def sample_dlip(spec: LatticeSpec, seed: int) -> GridFunction:
    """Draw a member of the discrete Lipschitz class on the box.

    Each axis gets an independent profile built by integrating i.i.d.
    increments uniform on ``[-delta, delta)``; the profiles are summed, so
    every first difference along axis ``j`` equals one increment of profile
    ``j`` and the class constraint ``|difference| <= delta`` holds exactly.
    Deterministic for a given seed.
    """
    rng = np.random.default_rng(seed)
    vals = np.zeros(spec.shape)
    for j in range(spec.dim):
        n = spec.shape[j]
        steps = rng.uniform(-spec.delta, spec.delta, size=n - 1)
        profile = np.concatenate([[0.0], np.cumsum(steps)])
        shape = [1] * spec.dim
        shape[j] = n
        vals = vals + profile.reshape(shape)
    return GridFunction(spec, vals)


def is_dlip(f: GridFunction, tol: float = 0.0) -> bool:
    """Exhaustive scan: every first difference within ``delta`` (+tol)."""
    d = f.spec.delta
    for j in range(f.spec.dim):
        a = [0] * f.spec.dim
        a[j] = 1
        if max_abs_difference(f, a) > d + tol:
            return False
    return True


_HIGHER_RETRIES = 100


def sample_dlip_higher(
    spec: LatticeSpec, max_order: int, seed: int, c: float = 1.0
) -> GridFunction:
    """Draw a 1-d function with ``|difference of order v| <= c * delta**v``
    for every ``1 <= v <= max_order``.

    The order-``max_order`` differences are drawn i.i.d. uniform on
    ``[-c*delta**max_order / 4, +c*delta**max_order / 4)``, cumulatively
    summed down to the function values with zero integration constants, and
    the whole draw is rescaled whenever a lower-order bound is violated.
    The class scale ``c`` has no canonical value; it defaults to 1.
    """
    if spec.dim != 1:
        raise ValueError("sample_dlip_higher requires a 1-d lattice")
    if not 1 <= max_order <= 3:
        raise ValueError("max_order must be in 1..3")
    n = spec.shape[0]
    if n <= max_order:
        raise ValueError("box too small for the requested order")
    d = spec.delta
    rng = np.random.default_rng(seed)
    for attempt in range(_HIGHER_RETRIES):
        top = rng.uniform(
            -c * d**max_order / 4.0, c * d**max_order / 4.0, size=n - max_order
        )
        seqs = [top]
        for _ in range(max_order):
            seqs.append(np.concatenate([[0.0], np.cumsum(seqs[-1])]))
        # seqs[i] holds the order-(max_order - i) differences; seqs[-1] is h.
        scale = 1.0
        for v in range(1, max_order + 1):
            mx = float(np.max(np.abs(seqs[max_order - v])))
            bound = c * d**v
            if mx > bound:
                scale = min(scale, bound / mx)
        h = GridFunction(spec, scale * seqs[-1])
        ok = all(
            max_abs_difference(h, (v,)) <= c * d**v * (1 + 1e-12)
            for v in range(1, max_order + 1)
        )
        if ok:
            return h
    raise SamplingError(
        f"could not construct an in-class function after {_HIGHER_RETRIES} "
        f"attempts (seed={seed}, max_order={max_order})"
    )
