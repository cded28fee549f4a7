"""Degree-7 forward-difference spline on the lattice, with C^3 gluing.

A lattice function is extended to the continuum cell by cell: on the cell
of base index ``k`` the extension is a weighted sum of the five node values
``f(delta*k) .. f(delta*(k+4))``, with weights that are degree-7 polynomials
in the local coordinate ``t = (x - delta*k)/delta``.  The weight polynomials
are the regrouped node coefficients of

    f + t*(D - D^2/2 + D^3/3) f + t^2/2*(D^2 - D^3) f + t^3/6 * D^3 f
      + (-23/3 t^4 + 41/2 t^5 - 55/3 t^6 + 11/2 t^7) * D^4 f

where ``D^j`` is the order-``j`` forward difference at ``k``.  The cubic part
is the Newton forward form, so polynomials of degree <= 3 are reproduced
exactly; the quartic correction is chosen so that adjacent cells match to
third order at the shared knot, giving a C^3 extension whose derivatives of
order ``a <= 4`` are controlled by the order-``a`` differences of the data.
In several dimensions the extension is the tensor product of the per-axis
weights.

Weight coefficients are built once from exact rationals and converted to
float at import; transcribing 40 coefficients is the main risk here and
exact arithmetic lets the tests pin the column identities exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import DomainError
from .grids import GridFunction, LatticeSpec, MultiIndex, _as_index_tuple

__all__ = [
    "WeightTable",
    "WEIGHTS",
    "Interpolant",
    "weight",
    "evaluate_1d",
    "derivative_1d",
    "evaluate_nd",
    "derivative_nd",
]

STENCIL = 5  # nodes per cell: k .. k+4
MAX_DERIVATIVE = 4


def _difference_basis() -> list[list[Fraction]]:
    """Coefficient rows (in t) multiplying the order-j differences."""
    half = Fraction(1, 2)
    b = [
        [Fraction(1)] + [Fraction(0)] * 7,
        [Fraction(0), Fraction(1)] + [Fraction(0)] * 6,
        [Fraction(0), -half, half] + [Fraction(0)] * 5,
        [Fraction(0), Fraction(1, 3), -half, Fraction(1, 6)] + [Fraction(0)] * 4,
        [
            Fraction(0),
            Fraction(0),
            Fraction(0),
            Fraction(0),
            Fraction(-23, 3),
            Fraction(41, 2),
            Fraction(-55, 3),
            Fraction(11, 2),
        ],
    ]
    return b


def _node_weight_rows() -> list[list[Fraction]]:
    """Regroup the difference stencils into per-node weight polynomials."""
    b = _difference_basis()
    rows = []
    for i in range(STENCIL):
        row = [Fraction(0)] * 8
        for j in range(i, STENCIL):
            sign = (-1) ** (j - i)
            coeff = sign * math.comb(j, i)
            for m in range(8):
                row[m] += coeff * b[j][m]
        rows.append(row)
    return rows


@dataclass(frozen=True)
class WeightTable:
    """The five degree-7 weight polynomials, row ``i`` for node ``k+i``."""

    exact: tuple[tuple[Fraction, ...], ...]

    @classmethod
    def build(cls) -> "WeightTable":
        return cls(tuple(tuple(row) for row in _node_weight_rows()))

    @property
    def coeffs(self) -> np.ndarray:
        return np.array([[float(c) for c in row] for row in self.exact])

    def derivative_coeffs(self, a: int) -> np.ndarray:
        """Float coefficients of the a-th derivative of each weight, in t."""
        if not 0 <= a <= 7:
            raise ValueError("derivative order out of range")
        out = np.zeros((STENCIL, 8 - a))
        for i, row in enumerate(self.exact):
            for m in range(8 - a):
                c = row[m + a]
                for p in range(a):
                    c *= m + a - p
                out[i, m] = float(c)
        return out

    def to_json(self) -> str:
        payload = {
            "rows": [
                [[c.numerator, c.denominator] for c in row] for row in self.exact
            ]
        }
        return json.dumps(payload, sort_keys=True)


WEIGHTS = WeightTable.build()

# Pre-differentiated coefficient tables, index = derivative order.
_DERIV_COEFFS = [WEIGHTS.derivative_coeffs(a) for a in range(MAX_DERIVATIVE + 1)]


def _horner(coeffs: np.ndarray, t) -> np.ndarray:
    """Evaluate each coefficient row at t (scalar or array), highest degree first."""
    t = np.asarray(t, dtype=np.float64)
    out = np.broadcast_to(coeffs[:, -1][(...,) + (None,) * t.ndim], coeffs.shape[:1] + t.shape).copy()
    for m in range(coeffs.shape[1] - 2, -1, -1):
        out = out * t + coeffs[:, m][(...,) + (None,) * t.ndim]
    return out


def weight(i: int, t: float, a: int = 0) -> float:
    """The node-``i`` weight polynomial (or its a-th t-derivative) at ``t``."""
    if not 0 <= i < STENCIL:
        raise ValueError(f"weight index must be in 0..4, got {i}")
    return float(_horner(_DERIV_COEFFS[a][i : i + 1], float(t))[0])


class Interpolant:
    """Continuum extension of a :class:`GridFunction` with derivatives to order 4.

    The evaluation domain along axis ``j`` is
    ``[delta*lower_j, delta*(upper_j - 4)]``: exactly the points whose node
    stencil fits in the box.
    """

    __slots__ = ("f", "table")

    def __init__(self, f: GridFunction, table: WeightTable = WEIGHTS):
        for j in range(f.spec.dim):
            if f.spec.upper[j] - f.spec.lower[j] < STENCIL - 1:
                raise DomainError(
                    f"box needs at least {STENCIL} points per axis to interpolate "
                    f"(axis {j} has {f.spec.shape[j]})"
                )
        self.f = f
        self.table = table

    # -- domain helpers -------------------------------------------------

    @property
    def spec(self) -> LatticeSpec:
        return self.f.spec

    def domain(self) -> list[tuple[float, float]]:
        s = self.spec
        return [
            (s.delta * s.lower[j], s.delta * (s.upper[j] - (STENCIL - 1)))
            for j in range(s.dim)
        ]

    def _base_indices(self, x: np.ndarray) -> np.ndarray:
        s = self.spec
        k = np.empty(s.dim, dtype=np.int64)
        for j in range(s.dim):
            lo, hi = s.delta * s.lower[j], s.delta * (s.upper[j] - (STENCIL - 1))
            if not lo <= x[j] <= hi:
                raise DomainError(
                    f"x[{j}] = {x[j]!r} outside interpolation domain [{lo}, {hi}]"
                )
            kj = int(np.floor(x[j] / s.delta))
            kj = min(max(kj, s.lower[j]), s.upper[j] - (STENCIL - 1))
            k[j] = kj
        return k

    def _stencil_block(self, k: np.ndarray) -> np.ndarray:
        s = self.spec
        sl = tuple(
            slice(k[j] - s.lower[j], k[j] - s.lower[j] + STENCIL)
            for j in range(s.dim)
        )
        return self.f.values[sl]

    # -- evaluation -----------------------------------------------------

    def _contract(self, k: np.ndarray, x: np.ndarray, a: Sequence[int]) -> float:
        s = self.spec
        block = self._stencil_block(k)
        for j in range(s.dim):
            t = (x[j] - s.delta * k[j]) / s.delta
            w = _horner(_DERIV_COEFFS[a[j]], t) / s.delta ** a[j]
            block = np.tensordot(w, block, axes=(0, 0))
        return float(block)

    def evaluate(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        k = self._base_indices(x)
        return self._contract(k, x, [0] * self.spec.dim)

    def derivative(self, x, a) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        s = self.spec
        a = MultiIndex.of(a, s.dim)
        if any(v > MAX_DERIVATIVE for v in a.a) or a.order > MAX_DERIVATIVE:
            raise ValueError("derivative order must satisfy |a|_1 <= 4")
        k = self._base_indices(x)
        if a.order == MAX_DERIVATIVE:
            t = (x - s.delta * k) / s.delta
            if np.any(t == 0.0):
                raise DomainError(
                    "order-4 derivative is undefined on the knot set; "
                    f"x = {x.tolist()} lies on a knot"
                )
        return self._contract(k, x, a.a)

    def eval_many_1d(self, xs: np.ndarray, a: int = 0) -> np.ndarray:
        """Vectorized 1-d evaluation of the a-th derivative at many points."""
        s = self.spec
        if s.dim != 1:
            raise ValueError("eval_many_1d requires a 1-d interpolant")
        xs = np.asarray(xs, dtype=np.float64)
        lo, hi = self.domain()[0]
        if xs.size and (xs.min() < lo or xs.max() > hi):
            bad = xs[(xs < lo) | (xs > hi)][0]
            raise DomainError(
                f"x = {bad!r} outside interpolation domain [{lo}, {hi}]"
            )
        k = np.floor(xs / s.delta).astype(np.int64)
        np.clip(k, s.lower[0], s.upper[0] - (STENCIL - 1), out=k)
        t = (xs - s.delta * k) / s.delta
        if a == MAX_DERIVATIVE and np.any(t == 0.0):
            raise DomainError("order-4 derivative is undefined on the knot set")
        w = _horner(_DERIV_COEFFS[a], t) / s.delta**a  # (5, n)
        idx = (k - s.lower[0])[:, None] + np.arange(STENCIL)[None, :]
        return np.einsum("in,ni->n", w, self.f.values[idx])

    def _piece_derivative(self, base_k, x, a) -> float:
        """Derivative using an explicit cell; for gluing checks only."""
        s = self.spec
        a = MultiIndex.of(a, s.dim)
        k = np.asarray(_as_index_tuple(base_k, s.dim), dtype=np.int64)
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        return self._contract(k, x, a.a)


# -- spec-facing functional forms ---------------------------------------


def evaluate_1d(itp: Interpolant, x: float) -> float:
    if itp.spec.dim != 1:
        raise ValueError("evaluate_1d requires a 1-d interpolant")
    return itp.evaluate(x)


def derivative_1d(itp: Interpolant, x: float, a: int) -> float:
    if itp.spec.dim != 1:
        raise ValueError("derivative_1d requires a 1-d interpolant")
    return itp.derivative(x, (a,))


def evaluate_nd(itp: Interpolant, x) -> float:
    return itp.evaluate(x)


def derivative_nd(itp: Interpolant, x, a) -> float:
    return itp.derivative(x, a)
