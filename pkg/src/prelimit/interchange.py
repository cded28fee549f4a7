"""Swapping the lattice extension with the chain generator, with exact error.

``a_gx`` extends the generator output and is the left-hand side; the
interchanged main term moves the extension inside the rate sum; ``epsilon``
is the closed-form error making the decomposition an identity.  The error is
always computed from its closed form, never as a residual: the residual is
what the tests check.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .ctmc import RateKernel, generator_grid
from .errors import DomainError
from .grids import GridFunction, LatticeSpec, difference_array
from .interpolate import _DERIV_COEFFS, _horner, Interpolant

__all__ = [
    "InterchangeReport",
    "a_gx",
    "interchanged_main",
    "epsilon_1d",
    "epsilon_nd",
    "extend_hat",
    "mm1_boundary_interchange",
    "interchange_report",
]


def a_gx(kernel: RateKernel, f: GridFunction, x) -> float:
    """Extend ``k -> G f(delta k)`` off the lattice and evaluate at ``x``."""
    g = generator_grid(kernel, f)
    return Interpolant(g).evaluate(x)


def _rate_interpolants(kernel: RateKernel) -> list:
    return [(off, Interpolant(kernel.rate_grid(off))) for off, _ in kernel.jumps]


def interchanged_main(kernel: RateKernel, f: GridFunction, x) -> float:
    """``sum_l A beta_l(x) * (A f(x + delta*l) - A f(x))``."""
    itp = Interpolant(f)
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    fx = itp.evaluate(x)
    total = 0.0
    for off, beta_itp in _rate_interpolants(kernel):
        shifted = x + kernel.spec.delta * np.asarray(off, dtype=np.float64)
        total += beta_itp.evaluate(x) * (itp.evaluate(shifted) - fx)
    return total


def _weights_at(itp: Interpolant, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Base index and per-axis node weights of the cell containing ``x``."""
    s = itp.spec
    k = itp._base_indices(x)
    ws = []
    for j in range(s.dim):
        t = (x[j] - s.delta * k[j]) / s.delta
        ws.append(_horner(_DERIV_COEFFS[0], t))
    return k, ws


def epsilon_1d(kernel: RateKernel, f: GridFunction, x: float) -> float:
    """Closed-form interchange error in one dimension.

    The second differences of ``f`` enter through the telescoped double sum
    ``sum_{j<i} sum_{0<=m<l} D2 f(delta*(k+m+j))`` for up-jumps (mirrored
    for down-jumps), weighted by the node weights and the deviation of each
    rate from its own extension.
    """
    spec = f.spec
    if spec.dim != 1:
        raise ValueError("epsilon_1d requires a 1-d lattice")
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    itp = Interpolant(f)
    k, (w,) = _weights_at(itp, x)
    k = int(k[0])
    d2 = difference_array(f, (2,))
    lo = spec.lower[0]

    def d2_at(idx: int) -> float:
        pos = idx - lo
        if pos < 0 or pos >= d2.shape[0]:
            raise DomainError(
                f"second difference at index {idx} leaves the box "
                f"[{lo}, {spec.upper[0]}]"
            )
        return float(d2[pos])

    total = 0.0
    for off, beta_itp in _rate_interpolants(kernel):
        ell = off[0]
        beta_vals = kernel.rate_grid(off).values
        abeta = beta_itp.evaluate(x)
        for i in range(5):
            dev = float(beta_vals[k + i - lo]) - abeta
            tele = 0.0
            if ell > 0:
                for j in range(i):
                    for m in range(ell):
                        tele += d2_at(k + m + j)
            elif ell < 0:
                for j in range(i):
                    for m in range(ell, 0):
                        tele -= d2_at(k + m + j)
            total += float(w[i]) * dev * tele
    return total


def epsilon_nd(kernel: RateKernel, f: GridFunction, x) -> float:
    """Closed-form interchange error in any dimension.

    Direct form: product node weights times the rate deviation times the
    second-difference-of-increments bracket
    ``f(k+l+i) - f(k+i) - (f(k+l) - f(k))``.
    """
    spec = f.spec
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    itp = Interpolant(f)
    k, ws = _weights_at(itp, x)
    wprod = ws[0]
    for wj in ws[1:]:
        wprod = np.multiply.outer(wprod, wj)
    lo = np.asarray(spec.lower, dtype=np.int64)
    up = np.asarray(spec.upper, dtype=np.int64)

    def block(base: np.ndarray) -> np.ndarray:
        if np.any(base < lo) or np.any(base + 4 > up):
            raise DomainError(
                f"stencil at base {base.tolist()} leaves the box"
            )
        sl = tuple(slice(b - l, b - l + 5) for b, l in zip(base, lo))
        return f.values[sl]

    fk = f.values[tuple(k - lo)]
    total = 0.0
    for off, beta_itp in _rate_interpolants(kernel):
        ell = np.asarray(off, dtype=np.int64)
        target = k + ell
        if np.any(target < lo) or np.any(target > up):
            raise DomainError(
                f"jump {off} from base {k.tolist()} leaves the box"
            )
        fkl = f.values[tuple(target - lo)]
        bracket = block(k + ell) - block(k) - (fkl - fk)
        beta_block = kernel.rate_grid(off).values[
            tuple(slice(b - l, b - l + 5) for b, l in zip(k, lo))
        ]
        dev = beta_block - beta_itp.evaluate(x)
        total += float(np.sum(wprod * dev * bracket))
    return total


def extend_hat(f: GridFunction) -> GridFunction:
    """Extend a half-line function one site below zero by copying ``f(0)``."""
    spec = f.spec
    if spec.dim != 1 or spec.lower != (0,):
        raise ValueError("extend_hat requires a 1-d box starting at 0")
    new_spec = LatticeSpec(1, spec.delta, (-1,), spec.upper)
    vals = np.concatenate([[f.values[0]], f.values])
    return GridFunction(new_spec, vals)


def mm1_boundary_interchange(
    lam: float, mu: float, delta: float, f: GridFunction, x: float
) -> float:
    """Interchanged form for the single-server queue on the half line.

    Valid for all ``x >= 0`` including the boundary band ``[0, delta)``,
    where the copied-value extension supplies the otherwise undefined
    ``A f(x - delta)``.
    """
    if x < 0:
        raise DomainError(f"x = {x} must be non-negative")
    if f.spec.delta != delta:
        raise ValueError("grid spacing does not match delta")
    ahat = Interpolant(extend_hat(f))
    return lam * (ahat.evaluate(x + delta) - ahat.evaluate(x)) + mu * (
        ahat.evaluate(x - delta) - ahat.evaluate(x)
    )


@dataclass(frozen=True)
class InterchangeReport:
    """One evaluation of the interchange identity at a point."""

    x: tuple[float, ...]
    lhs: float
    main_term: float
    epsilon: float

    @property
    def residual(self) -> float:
        return self.lhs - self.main_term - self.epsilon

    def to_json(self) -> str:
        return json.dumps(
            {
                "x": list(self.x),
                "lhs": self.lhs,
                "main_term": self.main_term,
                "epsilon": self.epsilon,
                "residual": self.residual,
            },
            sort_keys=True,
        )


def interchange_report(kernel: RateKernel, f: GridFunction, x) -> InterchangeReport:
    """Evaluate all three pieces of the identity at ``x``."""
    xv = np.atleast_1d(np.asarray(x, dtype=np.float64))
    lhs = a_gx(kernel, f, xv)
    main = interchanged_main(kernel, f, xv)
    if f.spec.dim == 1:
        eps = epsilon_1d(kernel, f, float(xv[0]))
    else:
        eps = epsilon_nd(kernel, f, xv)
    return InterchangeReport(tuple(float(v) for v in xv), lhs, main, eps)
