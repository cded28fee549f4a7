"""Distances between lattice laws and continuous limits.

One-dimensional Wasserstein distance via the area between CDFs, computed in
closed form cell by cell (the exponential integrals are analytic), and the
bridge inequality relating a Lipschitz test function on the continuum to
its lattice restriction and that restriction's extension.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import IntegrationError
from .grids import GridFunction, LatticeSpec
from .interpolate import Interpolant

__all__ = [
    "DistributionHandle",
    "wasserstein1",
    "lemma1_gap",
    "gauss_panels",
    "expect_exponential",
]


@dataclass(frozen=True)
class DistributionHandle:
    """Either a pmf on delta*(k0 + 0..n-1) or a named continuous law."""

    kind: str
    delta: float = 0.0
    k0: int = 0
    probs: tuple[float, ...] = ()
    mean: float = 0.0

    @classmethod
    def lattice(cls, delta: float, probs, k0: int = 0) -> "DistributionHandle":
        probs = np.asarray(probs, dtype=np.float64)
        if probs.min() < 0:
            raise ValueError("pmf entries must be non-negative")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"pmf sums to {probs.sum()!r}, not 1")
        if delta <= 0:
            raise ValueError("delta must be positive")
        return cls(kind="lattice", delta=delta, k0=k0, probs=tuple(probs))

    @classmethod
    def exponential(cls, mean: float) -> "DistributionHandle":
        if mean <= 0:
            raise ValueError("exponential mean must be positive")
        return cls(kind="exponential", mean=mean)

    def support_points(self) -> np.ndarray:
        if self.kind != "lattice":
            raise ValueError("support_points needs a lattice law")
        return self.delta * (self.k0 + np.arange(len(self.probs)))

    def first_moment(self) -> float:
        if self.kind == "exponential":
            return self.mean
        return float(np.sum(np.asarray(self.probs) * self.support_points()))


def _w1_lattice_exponential(u: DistributionHandle, v: DistributionHandle) -> float:
    xs = u.support_points()
    if xs[0] < 0:
        raise ValueError("lattice support must be non-negative to compare "
                         "with an exponential law")
    m = v.mean
    cdf = np.cumsum(u.probs)

    def signed(a: float, b: float, c: float) -> float:
        # integral of (1 - exp(-t/m) - c) over [a, b]
        return (1.0 - c) * (b - a) + m * (np.exp(-b / m) - np.exp(-a / m))

    total = 0.0
    if xs[0] > 0:
        total += signed(0.0, xs[0], 0.0)
    for k in range(len(xs) - 1):
        a, b, c = xs[k], xs[k + 1], cdf[k]
        if c >= 1.0:
            total += -signed(a, b, c)
            continue
        t_star = -m * np.log1p(-c)
        if t_star <= a:
            total += signed(a, b, c)
        elif t_star >= b:
            total += -signed(a, b, c)
        else:
            total += signed(t_star, b, c) - signed(a, t_star, c)
    total += m * np.exp(-xs[-1] / m)
    return float(total)


def _w1_lattice_lattice(u: DistributionHandle, v: DistributionHandle) -> float:
    xs = np.concatenate([u.support_points(), v.support_points()])
    xs = np.unique(xs)
    fu = np.searchsorted(u.support_points(), xs, side="right")
    fv = np.searchsorted(v.support_points(), xs, side="right")
    cu = np.concatenate([[0.0], np.cumsum(u.probs)])
    cv = np.concatenate([[0.0], np.cumsum(v.probs)])
    gaps = np.abs(cu[fu[:-1]] - cv[fv[:-1]])
    return float(np.sum(gaps * np.diff(xs)))


def wasserstein1(
    u: DistributionHandle, v: DistributionHandle, tol: float = 1e-9
) -> float:
    """Area between the two CDFs on [0, inf).

    All supported pairs integrate in closed form (the only error is
    roundoff), so the result is exact well inside any reasonable ``tol``.
    """
    pair = (u.kind, v.kind)
    if pair == ("lattice", "lattice"):
        return _w1_lattice_lattice(u, v)
    if pair == ("lattice", "exponential"):
        return _w1_lattice_exponential(u, v)
    if pair == ("exponential", "lattice"):
        return _w1_lattice_exponential(v, u)
    if pair == ("exponential", "exponential"):
        return abs(u.mean - v.mean)
    raise ValueError(f"unsupported pair of laws: {pair}")


# -- quadrature helpers ---------------------------------------------------


def gauss_panels(edges, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on consecutive panels of ``edges``."""
    edges = np.asarray(edges, dtype=np.float64)
    gn, gw = np.polynomial.legendre.leggauss(order)
    mids = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * np.diff(edges)
    nodes = (mids[:, None] + half[:, None] * gn[None, :]).ravel()
    weights = (half[:, None] * gw[None, :]).ravel()
    return nodes, weights


def expect_exponential(
    fn: Callable[[np.ndarray], np.ndarray],
    mean: float,
    upper: float,
    breakpoints: Sequence[float] = (),
    cell: float | None = None,
    order: int = 24,
) -> tuple[float, float]:
    """``E fn(Y)`` for exponential ``Y``, integrated on [0, upper].

    Panels are cut at multiples of ``cell`` and at ``breakpoints`` so the
    integrand is smooth inside each panel.  Returns the integral and the
    weight ``exp(-upper/mean)`` left in the tail, which the caller must
    account for (or verify negligible).
    """
    pts = {0.0, float(upper)}
    if cell:
        pts.update(np.arange(0.0, upper + cell, cell).tolist())
    for b in breakpoints:
        if 0.0 < b < upper:
            pts.add(float(b))
    edges = np.array(sorted(p for p in pts if 0.0 <= p <= upper))
    nodes, weights = gauss_panels(edges, order)
    dens = np.exp(-nodes / mean) / mean
    val = float(np.sum(weights * dens * np.asarray(fn(nodes), dtype=np.float64)))
    return val, float(np.exp(-upper / mean))


# -- the Lipschitz/lattice bridge -----------------------------------------


def lemma1_gap(
    u: DistributionHandle,
    v: DistributionHandle,
    hstar: Callable[[np.ndarray], np.ndarray],
    grad_sup: float,
    kinks: Sequence[float] = (),
    tail_mass: float = 40.0,
) -> tuple[float, float]:
    """Both sides of the restriction inequality for one test function.

    Returns ``(|E hstar(U) - E hstar(V)|, |E h(U) - E Ah(V)|)`` where ``h``
    is the lattice restriction of ``hstar`` and ``Ah`` its spline extension.
    Callers assert ``lhs <= rhs + C * delta * grad_sup`` with a fitted C.
    """
    if u.kind != "lattice" or v.kind != "exponential":
        raise ValueError("lemma1_gap expects (lattice, exponential) laws")
    d = u.delta
    m = v.mean
    upper_x = max(u.support_points().max(), tail_mass * m)
    k_hi = int(np.ceil(upper_x / d)) + 5
    spec = LatticeSpec(1, d, (min(u.k0, 0),), (k_hi,))
    h = GridFunction.from_callable(spec, hstar)
    itp = Interpolant(h)
    hi_dom = itp.domain()[0][1]

    xs = u.support_points()
    e_h_u = float(np.sum(np.asarray(u.probs) * hstar(xs)))

    e_hstar_v, tailw = expect_exponential(
        hstar, m, hi_dom, breakpoints=kinks, cell=d
    )
    e_ah_v, _ = expect_exponential(
        lambda y: itp.eval_many_1d(y), m, hi_dom, breakpoints=kinks, cell=d
    )
    scale = max(1.0, abs(e_hstar_v))
    tail_bound = tailw * (abs(float(hstar(np.array([hi_dom]))[0])) + grad_sup * m)
    if tail_bound > 1e-12 * scale:
        raise IntegrationError(
            f"tail weight {tail_bound:.3e} too large; increase tail_mass"
        )
    return abs(e_h_u - e_hstar_v), abs(e_h_u - e_ah_v)
