"""The single-server queue worked end to end.

Geometric stationary law, the exponential limit of the reflected diffusion,
finite-difference bounds on the Poisson-equation solution, the exact
three-term decomposition of the approximation gap, and the convergence-rate
sweep in the heavy-traffic scaling ``delta = 1 - rho``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ctmc import (
    ConstantRate,
    GatedRate,
    PoissonSolution,
    RateKernel,
    birth_death_poisson,
)
from .errors import IntegrationError, StabilityError
from .grids import GridFunction, LatticeSpec, difference_array, forward_difference
from .interchange import extend_hat
from .interpolate import Interpolant
from .metrics import DistributionHandle, expect_exponential, gauss_panels, wasserstein1

__all__ = [
    "Mm1Params",
    "geometric_stationary",
    "geometric_mean",
    "rbm_stationary_mean",
    "default_upper",
    "decomposition_upper",
    "mm1_kernel",
    "geometric_handle",
    "stein_factor_bound",
    "first_order_bound",
    "daly_bound",
    "truncation_margin",
    "stein_solve_spec",
    "SteinFactorReport",
    "stein_factor_report",
    "third_order_identity_residual",
    "ErrorDecomposition",
    "error_decomposition",
    "rbmbar_residual",
    "convergence_gap",
    "SweepRow",
    "SweepResult",
    "convergence_sweep",
    "tightness_residual",
]


@dataclass(frozen=True)
class Mm1Params:
    """Arrival rate, service rate, and lattice spacing; requires rho < 1."""

    lam: float
    mu: float
    delta: float

    def __post_init__(self):
        if self.lam <= 0 or self.mu <= 0 or self.delta <= 0:
            raise ValueError("lam, mu, delta must all be positive")
        if self.lam >= self.mu:
            raise StabilityError(
                f"utilization rho = {self.lam / self.mu} must be < 1"
            )

    @property
    def rho(self) -> float:
        return self.lam / self.mu


def geometric_stationary(p: Mm1Params, n: int) -> float:
    """Stationary mass of the scaled customer count at level ``n``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    return (1.0 - p.rho) * p.rho**n


def geometric_mean(p: Mm1Params) -> float:
    """``E X = delta * rho / (1 - rho)``."""
    return p.delta * p.rho / (1.0 - p.rho)


def rbm_stationary_mean(p: Mm1Params) -> float:
    """Mean of the exponential stationary law of the reflected limit."""
    return p.delta * (p.lam + p.mu) / (2.0 * (p.mu - p.lam))


def default_upper(p: Mm1Params, tail: float = 1e-16) -> int:
    """Box size with geometric tail mass below ``tail``."""
    n = int(math.ceil(math.log(tail) / math.log(p.rho)))
    return max(n, 30)


def mm1_kernel(p: Mm1Params, upper: int | None = None) -> RateKernel:
    """Arrival/service rate kernel on the truncated half line [0, upper]."""
    if upper is None:
        upper = default_upper(p)
    spec = LatticeSpec(1, p.delta, (0,), (upper,))
    return RateKernel(
        spec,
        [((1,), ConstantRate(p.lam)), ((-1,), GatedRate(p.mu, 0, 1))],
    )


def geometric_handle(p: Mm1Params, upper: int | None = None) -> DistributionHandle:
    """Truncated, renormalized geometric law as a distribution handle."""
    if upper is None:
        upper = default_upper(p)
    w = p.rho ** np.arange(upper + 1)
    return DistributionHandle.lattice(p.delta, w / w.sum())


# -- finite-difference bounds ---------------------------------------------


def stein_factor_bound(p: Mm1Params, a: int, k: int) -> float:
    """``delta^a (k+1)/(mu-lam) + delta^(a-1)/(mu-lam)`` for orders 1..3."""
    if a not in (1, 2, 3):
        raise ValueError("order a must be in 1..3")
    if k < 0:
        raise ValueError("k must be non-negative")
    gap = p.mu - p.lam
    return p.delta**a * (k + 1) / gap + p.delta ** (a - 1) / gap


def first_order_bound(p: Mm1Params, k: int) -> float:
    """The standalone first-order bound ``delta (k+1)/(mu-lam)``."""
    return p.delta * (k + 1) / (p.mu - p.lam)


def daly_bound(p: Mm1Params) -> float:
    """Uniform-in-k third-order bound ``2 delta / lam``."""
    return 2.0 * p.delta / p.lam


def truncation_margin(p: Mm1Params, check_upper: int, tol: float = 1e-12) -> int:
    """Extra solve-box sites needed so that box truncation perturbs the
    order-<=3 differences at states ``k <= check_upper`` by less than ``tol``.

    Uses the geometric tail bound on the discarded terms of the increment
    tail sum, assuming ``|h(delta j) - h(0)| <= j delta`` (the Lipschitz
    class; constants shift neither the right-hand side nor the solution).
    """
    one = 1.0 - p.rho
    k = check_upper + 3
    m = 1
    while m < 200000:
        bound = (
            8.0
            * (p.delta / p.lam)
            * p.rho ** (m + 1)
            * ((k + 1.0 / one) / one + (m + 2.0) / one**2)
        )
        if bound <= tol:
            return m
        m += 1
    raise ValueError("margin search did not converge; rho too close to 1?")


def stein_solve_spec(p: Mm1Params, check_upper: int, tol: float = 1e-12) -> LatticeSpec:
    """Box on which to solve so that checks up to ``check_upper`` are clean."""
    return LatticeSpec(
        1, p.delta, (0,), (check_upper + truncation_margin(p, check_upper, tol),)
    )


@dataclass
class SteinFactorReport:
    """Exact difference magnitudes of a Poisson solution against the bounds."""

    order: int
    ks: np.ndarray
    exact: np.ndarray
    bound: np.ndarray
    bound_first: np.ndarray | None
    daly: float | None
    violations: int
    violations_first: int
    violations_daly: int

    @property
    def ok(self) -> bool:
        return self.violations + self.violations_first + self.violations_daly == 0


def stein_factor_report(
    p: Mm1Params,
    h: GridFunction,
    a: int,
    f: PoissonSolution | None = None,
    check_upper: int | None = None,
) -> SteinFactorReport:
    """Scan ``|difference of order a|`` of the solution for ``h`` against
    the coupling bound (and its companions) at every state up to
    ``check_upper``.

    The bounds are facts about the untruncated chain, so callers should
    solve on a box padded by :func:`truncation_margin` beyond the last
    checked state; :func:`stein_solve_spec` builds such a box.
    """
    if f is None:
        f = birth_death_poisson(p.lam, p.mu, p.delta, h)
    exact = np.abs(difference_array(f.grid, (a,)))
    ks = np.arange(len(exact))
    if check_upper is not None:
        keep = ks <= check_upper
        exact, ks = exact[keep], ks[keep]
    gap = p.mu - p.lam
    bound = p.delta**a * (ks + 1) / gap + p.delta ** (a - 1) / gap
    violations = int(np.count_nonzero(exact > bound))
    bound_first = None
    violations_first = 0
    if a == 1:
        bound_first = p.delta * (ks + 1) / gap
        violations_first = int(np.count_nonzero(exact > bound_first))
    daly = None
    violations_daly = 0
    if a == 3:
        daly = daly_bound(p)
        violations_daly = int(np.count_nonzero(exact > daly))
    return SteinFactorReport(
        a, ks, exact, bound, bound_first, daly, violations, violations_first,
        violations_daly,
    )


def third_order_identity_residual(p: Mm1Params, h: GridFunction) -> float:
    """Boundary identity tying the mixed second-order quantity at zero to
    third differences: residual of
    ``D2 f(0) - D f(0) = ((lam+mu)/mu) D3 f(0) - (1/mu) D3 h(0)
    - (lam/mu) D3 f(delta)``."""
    f = birth_death_poisson(p.lam, p.mu, p.delta, h).grid
    d1 = forward_difference(f, (1,), (0,))
    d2 = forward_difference(f, (2,), (0,))
    d3_0 = forward_difference(f, (3,), (0,))
    d3_1 = forward_difference(f, (3,), (1,))
    d3h = forward_difference(h, (3,), (0,))
    lhs = d2 - d1
    rhs = (p.lam + p.mu) / p.mu * d3_0 - d3h / p.mu - p.lam / p.mu * d3_1
    return abs(lhs - rhs)


# -- the exact gap decomposition ------------------------------------------

_TAIL_MASSES = 40.0


def decomposition_upper(p: Mm1Params) -> int:
    """Box size adequate for both the geometric tail and the exponential
    quadrature range."""
    need_quad = int(math.ceil(_TAIL_MASSES * rbm_stationary_mean(p) / p.delta)) + 8
    return max(default_upper(p), need_quad)


@dataclass
class ErrorDecomposition:
    """The three exact terms of the approximation gap and the direct gap."""

    term_lambda: float
    term_mu: float
    boundary_term: float
    afh_prime0: float
    direct_gap: float
    info: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.term_lambda + self.term_mu + self.boundary_term

    @property
    def residual(self) -> float:
        return abs(self.total - self.direct_gap)

    def boundary_c_hat(self, p: Mm1Params) -> float:
        """Empirical constant in ``|boundary term| <= C delta^2``."""
        return abs(self.boundary_term) / p.delta**2


def _remainder_integral(itp: Interpolant, ys: np.ndarray, delta: float, sign: int) -> np.ndarray:
    """``int_0^1 (1-s)^2/2 * f'''(y + sign*s*delta) ds`` for each y.

    Exact per panel Gauss after substituting to the knot variable; the third
    derivative is a polynomial between knots, so one interior split suffices.
    """
    gn, gw = np.polynomial.legendre.leggauss(8)
    lo = np.minimum(ys, ys + sign * delta)
    hi = np.maximum(ys, ys + sign * delta)
    cut = np.clip(delta * np.ceil(lo / delta + 1e-12), lo, hi)
    out = np.zeros_like(ys)
    for a_edge, b_edge in ((lo, cut), (cut, hi)):
        mid = 0.5 * (a_edge + b_edge)
        half = 0.5 * (b_edge - a_edge)
        nodes = mid[:, None] + half[:, None] * gn[None, :]
        f3 = itp.eval_many_1d(nodes.ravel(), a=3).reshape(nodes.shape)
        s = sign * (nodes - ys[:, None]) / delta
        w = 0.5 * (1.0 - s) ** 2
        out += np.sum(half[:, None] * gw[None, :] * w * f3, axis=1) / delta
    return out


def error_decomposition(p: Mm1Params, h: GridFunction) -> ErrorDecomposition:
    """Split ``E h(X) - E Ah(Y)`` into the two third-derivative remainder
    terms and the boundary drift term, and also compute the gap directly.

    The mean-value points of the one-step expansions are avoided by using
    the integral form of the Taylor remainder, which keeps the decomposition
    an identity up to quadrature and truncation error.
    """
    upper = h.spec.upper[0]
    need = decomposition_upper(p)
    if h.spec.lower != (0,) or upper < need:
        raise ValueError(
            f"h must live on [0, N] with N >= {need} for this decomposition"
        )
    m = rbm_stationary_mean(p)
    d = p.delta
    sol = birth_death_poisson(p.lam, p.mu, p.delta, h)
    fhat = Interpolant(extend_hat(sol.grid))
    ah = Interpolant(h)

    y_max = _TAIL_MASSES * m
    edges = np.arange(0.0, y_max + d, d)
    if edges[-1] + d > ah.domain()[0][1]:
        raise IntegrationError("box too small for the quadrature range")
    nodes, weights = gauss_panels(edges, order=16)
    dens = np.exp(-nodes / m) / m

    t_plus = _remainder_integral(fhat, nodes, d, +1)
    t_minus = _remainder_integral(fhat, nodes, d, -1)
    term_lambda = d**3 * p.lam * float(np.sum(weights * dens * t_plus))
    term_mu = -(d**3) * p.mu * float(np.sum(weights * dens * t_minus))

    afh_prime0 = fhat.derivative(0.0, (1,))
    boundary_term = -afh_prime0 * d * (p.mu - p.lam)

    e_ah = float(np.sum(weights * dens * ah.eval_many_1d(nodes)))
    tail_weight = float(np.exp(-edges[-1] / m))
    direct_gap = sol.mean_h - e_ah
    info = {
        "mean_h": sol.mean_h,
        "e_ah_y": e_ah,
        "quadrature_tail_weight": tail_weight,
        "upper": upper,
    }
    return ErrorDecomposition(
        term_lambda, term_mu, boundary_term, afh_prime0, direct_gap, info
    )


def rbmbar_residual(p: Mm1Params, f) -> float:
    """Residual of the stationary identity of the reflected limit,
    ``E(delta(lam-mu) f'(Y) + delta^2(lam+mu)/2 f''(Y)) + f'(0) delta(mu-lam)``.

    ``f`` is either a polynomial coefficient sequence (ascending powers) or
    an :class:`Interpolant` with an evaluable first and second derivative.
    """
    m = rbm_stationary_mean(p)
    d = p.delta
    if isinstance(f, Interpolant):
        hi = f.domain()[0][1]
        y_max = _TAIL_MASSES * m
        if hi < y_max:
            raise IntegrationError(
                f"interpolant domain ends at {hi}, below the quadrature "
                f"range {y_max}"
            )
        edges = np.arange(0.0, y_max + d, d)
        nodes, weights = gauss_panels(edges, order=16)
        dens = np.exp(-nodes / m) / m
        e_f1 = float(np.sum(weights * dens * f.eval_many_1d(nodes, a=1)))
        e_f2 = float(np.sum(weights * dens * f.eval_many_1d(nodes, a=2)))
        f1_0 = f.derivative(0.0, (1,))
    else:
        c = np.asarray(f, dtype=np.float64)
        i = np.arange(len(c))
        # E Y^n = n! m^n for the exponential law
        moments = np.array(
            [math.factorial(n) * m**n for n in range(max(len(c), 1))]
        )
        e_f1 = float(np.sum(i[1:] * c[1:] * moments[: len(c) - 1])) if len(c) > 1 else 0.0
        e_f2 = (
            float(np.sum(i[2:] * (i[2:] - 1) * c[2:] * moments[: len(c) - 2]))
            if len(c) > 2
            else 0.0
        )
        f1_0 = float(c[1]) if len(c) > 1 else 0.0
    return abs(
        d * (p.lam - p.mu) * e_f1
        + 0.5 * d**2 * (p.lam + p.mu) * e_f2
        + f1_0 * d * (p.mu - p.lam)
    )


# -- convergence-rate sweep ------------------------------------------------


def convergence_gap(p: Mm1Params, upper: int | None = None) -> float:
    """Wasserstein gap between the scaled geometric law and its exponential
    limit."""
    return wasserstein1(
        geometric_handle(p, upper),
        DistributionHandle.exponential(rbm_stationary_mean(p)),
    )


@dataclass(frozen=True)
class SweepRow:
    rho: float
    delta: float
    gap: float
    mean_lattice: float
    mean_limit: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    fitted_c: float
    slope: float

    def bound_rhs(self, row: SweepRow) -> float:
        return self.fitted_c * row.delta * (1.0 + 1.0 / row.rho)


def convergence_sweep(
    rhos=(0.5, 0.8, 0.9, 0.95, 0.99), mu: float = 1.0
) -> SweepResult:
    """Sweep utilizations with the tightness scaling ``delta = 1 - rho``.

    The constant in ``gap <= C * delta * (1 + 1/rho)`` is existential, so a
    single C is fitted as the max ratio over the sweep and reported; the
    log-log slope of gap against delta estimates the convergence order.
    """
    rows = []
    for rho in rhos:
        if not 0 < rho < 1:
            raise ValueError(f"rho = {rho} must be in (0, 1)")
        p = Mm1Params(lam=rho * mu, mu=mu, delta=1.0 - rho)
        u = geometric_handle(p)
        gap = wasserstein1(
            u, DistributionHandle.exponential(rbm_stationary_mean(p))
        )
        rows.append(
            SweepRow(rho, p.delta, gap, u.first_moment(), rbm_stationary_mean(p))
        )
    fitted_c = max(r.gap / (r.delta * (1.0 + 1.0 / r.rho)) for r in rows)
    logs = np.log([r.delta for r in rows]), np.log([r.gap for r in rows])
    slope = float(np.polyfit(logs[0], logs[1], 1)[0])
    return SweepResult(rows, fitted_c, slope)


def tightness_residual(p: Mm1Params, upper: int | None = None) -> float:
    """``|lam * D f_id(0) - E X|`` for the identity test function."""
    if upper is None:
        upper = default_upper(p)
    spec = LatticeSpec(1, p.delta, (0,), (upper,))
    h = GridFunction.from_callable(spec, lambda x: x)
    f = birth_death_poisson(p.lam, p.mu, p.delta, h)
    d1 = forward_difference(f.grid, (1,), (0,))
    return abs(p.lam * d1 - geometric_mean(p))
