"""Synchronous couplings: event-driven simulation and Monte-Carlo estimators.

Two (or four) copies of the queue share one arrival stream and one service
stream; extra initial customers behave as preempted low-priority work, so
copies keep a constant gap until they couple.  Time integrals of lattice
differences along the lowest copy, stopped at the coupling time, estimate
the finite differences of the Poisson-equation solution.

Randomness is pre-generated per replication from spawned substreams, so a
replication that outlives its pool is extended with further draws from the
same stream (never censored, never resampled), and results are independent
of the compute backend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import backends
from .backends import STATUS_DONE, STATUS_EXHAUSTED, STATUS_OOB
from .errors import GridIndexError, SamplingError
from .grids import GridFunction, difference_array
from .mm1 import Mm1Params

__all__ = [
    "PairTrajectory",
    "QuadTrajectory",
    "CouplingEstimate",
    "MisalignmentReport",
    "simulate_pair",
    "simulate_quadruple",
    "estimate_delta",
    "coupling_time_estimate",
    "rbm_misalignment_demo",
]


# -- exact event-driven trajectories (test scale; pure python) ------------


@dataclass
class PairTrajectory:
    """Event log of the two-copy coupling, states in lattice units."""

    delta: float
    times: np.ndarray
    n1: np.ndarray
    n0: np.ndarray
    kinds: np.ndarray  # 0 initial, 1 arrival, 2 shared service, 3 extra service
    coupling_time: float | None

    @property
    def x1(self) -> np.ndarray:
        return self.delta * self.n1

    @property
    def x0(self) -> np.ndarray:
        return self.delta * self.n0

    def inter_event_times(self) -> np.ndarray:
        return np.diff(self.times)


def simulate_pair(p: Mm1Params, k0: int, horizon: float, seed: int) -> PairTrajectory:
    """Exact trajectory of the coupled pair started at ``(k0+1, k0)``."""
    if k0 < 0:
        raise ValueError("k0 must be non-negative")
    rng = np.random.default_rng(seed)
    n1, n0 = k0 + 1, k0
    t = 0.0
    times, a1, a0, kinds = [0.0], [n1], [n0], [0]
    coupling_time = None
    while True:
        r_arr = p.lam
        r_shared = p.mu if n0 > 0 else 0.0
        r_extra = p.mu if (n1 > 0 and n0 == 0) else 0.0
        total = r_arr + r_shared + r_extra
        if total == 0.0:
            break
        dt = rng.exponential(1.0 / total)
        if t + dt > horizon:
            break
        t += dt
        u = rng.uniform() * total
        if u < r_arr:
            kind, n1, n0 = 1, n1 + 1, n0 + 1
        elif u < r_arr + r_shared:
            kind, n1, n0 = 2, n1 - 1, n0 - 1
        else:
            kind, n1 = 3, n1 - 1
        if coupling_time is None and n1 == n0:
            coupling_time = t
        times.append(t)
        a1.append(n1)
        a0.append(n0)
        kinds.append(kind)
    return PairTrajectory(
        p.delta,
        np.asarray(times),
        np.asarray(a1),
        np.asarray(a0),
        np.asarray(kinds),
        coupling_time,
    )


@dataclass
class QuadTrajectory:
    """Event log of the four-copy coupling; ``levels[:, i]`` is copy ``i``
    counted from the lowest."""

    delta: float
    times: np.ndarray
    levels: np.ndarray  # shape (events, 4): columns x0, x1, x2, x3
    kinds: np.ndarray  # 1..5 per the transition table, 0 initial

    def gaps(self) -> np.ndarray:
        return np.diff(self.levels, axis=1)


def simulate_quadruple(
    p: Mm1Params, k0: int, horizon: float, seed: int
) -> QuadTrajectory:
    """Exact trajectory of the four coupled copies started at
    ``(k0, k0+1, k0+2, k0+3)``.

    Ordering and gap monotonicity are asserted at every event.
    """
    if k0 < 0:
        raise ValueError("k0 must be non-negative")
    rng = np.random.default_rng(seed)
    x = np.array([k0, k0 + 1, k0 + 2, k0 + 3], dtype=np.int64)
    t = 0.0
    times, levels, kinds = [0.0], [x.copy()], [0]
    moves = {
        1: np.array([1, 1, 1, 1]),
        2: np.array([-1, -1, -1, -1]),
        3: np.array([0, -1, -1, -1]),
        4: np.array([0, 0, -1, -1]),
        5: np.array([0, 0, 0, -1]),
    }
    while True:
        rates = np.array(
            [
                p.lam,
                p.mu if x[0] > 0 else 0.0,
                p.mu if (x[1] > 0 and x[0] == 0) else 0.0,
                p.mu if (x[2] > 0 and x[1] == 0) else 0.0,
                p.mu if (x[3] > 0 and x[2] == 0) else 0.0,
            ]
        )
        total = rates.sum()
        if total == 0.0:
            break
        dt = rng.exponential(1.0 / total)
        if t + dt > horizon:
            break
        t += dt
        u = rng.uniform() * total
        kind = int(np.searchsorted(np.cumsum(rates), u, side="right")) + 1
        prev_gaps = np.diff(x)
        x = x + moves[kind]
        gaps = np.diff(x)
        assert x[0] >= 0 and np.all(gaps >= 0), "ordering invariant violated"
        assert np.all(gaps <= prev_gaps), "gaps must be non-increasing"
        times.append(t)
        levels.append(x.copy())
        kinds.append(kind)
    return QuadTrajectory(
        p.delta, np.asarray(times), np.asarray(levels), np.asarray(kinds)
    )


# -- pooled-randomness batch driver ---------------------------------------

_POOL_GROWTH = 4
_MAX_POOL = 1 << 22


def _fill_pools(seed: int, stream: int, rep_ids: np.ndarray, length: int):
    """Exponential and uniform pools, one independent substream pair per
    replication.  Regenerating with a larger ``length`` reproduces the same
    leading draws, which is what makes pool growth an extension."""
    pe = np.empty((len(rep_ids), length))
    pu = np.empty((len(rep_ids), length))
    for i, r in enumerate(rep_ids):
        pe[i] = np.random.default_rng([seed, stream, int(r), 0]).standard_exponential(
            length
        )
        pu[i] = np.random.default_rng([seed, stream, int(r), 1]).random(length)
    return pe, pu


def _run_pair_batch(
    p: Mm1Params,
    k0: int,
    dh: np.ndarray,
    reps: int,
    seed: int,
    stream: int,
    kernels=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrals and coupling times for ``reps`` replications from level k0."""
    if kernels is None:
        kernels = backends.get_kernels()
    p_up = p.lam / (p.lam + p.mu)
    total_rate = p.lam + p.mu
    expected_events = total_rate * (k0 + 1) / (p.mu - p.lam)
    length = 64 + 8 * int(math.ceil(expected_events))
    integral = np.zeros(reps)
    tau = np.zeros(reps)
    pending = np.arange(reps)
    while pending.size:
        if length > _MAX_POOL:
            raise SamplingError(
                f"{pending.size} replications still running after "
                f"{_MAX_POOL} pooled events"
            )
        pe, pu = _fill_pools(seed, stream, pending, length)
        bi = np.zeros(pending.size)
        bt = np.zeros(pending.size)
        bs = np.zeros(pending.size, dtype=np.int64)
        bstat = np.zeros(pending.size, dtype=np.int64)
        kernels.pair_integral_batch(
            p_up, total_rate, k0, dh, pe, pu, bi, bt, bs, bstat
        )
        if np.any(bstat == STATUS_OOB):
            raise GridIndexError(
                "a replication left the test-function box; enlarge h's box"
            )
        done = bstat == STATUS_DONE
        integral[pending[done]] = bi[done]
        tau[pending[done]] = bt[done]
        pending = pending[bstat == STATUS_EXHAUSTED]
        length *= _POOL_GROWTH
    return integral, tau


@dataclass
class CouplingEstimate:
    """Monte-Carlo estimate with its replication-based standard error."""

    mean: float
    stderr: float
    replications: int
    tau_mean: float | None = None
    tau_stderr: float | None = None


def _summarize(vals: np.ndarray) -> tuple[float, float]:
    n = len(vals)
    se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(vals.mean()), se


def estimate_delta(
    p: Mm1Params,
    h: GridFunction,
    k: int,
    order: int,
    reps: int,
    seed: int,
) -> CouplingEstimate:
    """Estimate the order-``order`` difference of the Poisson solution at
    level ``k`` from coupled runs.

    Order 1 integrates the first difference of ``h`` until coupling from
    level ``k``.  Orders 2 and 3 add the telescoped boundary part: a run
    from level 0 integrating the next-lower-order difference, driven by the
    same replication randomness (common random numbers; the sum stays
    unbiased and the variance drops).
    """
    if order not in (1, 2, 3):
        raise ValueError("order must be in 1..3")
    if h.spec.dim != 1 or h.spec.lower != (0,):
        raise ValueError("h must live on a 1-d box starting at 0")
    if k < 0:
        raise ValueError("k must be non-negative")
    kernels = backends.get_kernels()
    dh = np.ascontiguousarray(difference_array(h, (order,)))
    vals, tau = _run_pair_batch(p, k, dh, reps, seed, stream=0, kernels=kernels)
    if order >= 2:
        dh_low = np.ascontiguousarray(difference_array(h, (order - 1,)))
        sub, _ = _run_pair_batch(p, 0, dh_low, reps, seed, stream=0, kernels=kernels)
        vals = vals + sub
    mean, se = _summarize(vals)
    tmean, tse = _summarize(tau)
    return CouplingEstimate(mean, se, reps, tmean, tse)


def coupling_time_estimate(
    p: Mm1Params, k: int, reps: int, seed: int
) -> CouplingEstimate:
    """Monte-Carlo mean of the absorption time of the extra customer."""
    empty = np.empty(0)
    _, tau = _run_pair_batch(p, k, empty, reps, seed, stream=0)
    tmean, tse = _summarize(tau)
    return CouplingEstimate(tmean, tse, reps, tmean, tse)


# -- reflected-path misalignment demo --------------------------------------


@dataclass
class MisalignmentReport:
    """Window statistics of the four-path reflected coupling."""

    eps: float
    dt: float
    slack: float
    replications: int
    frac_window_ok: float
    frac_window_ok_strict: float
    frac_reflection_clean: float
    mean_gap_time: float
    stderr_gap_time: float
    expected_gap_time: float
    mean_r0_gamma1: float
    mean_r0_gamma2: float
    identity_dev_max: float
    resampled: int
    info: dict = field(default_factory=dict)

    @property
    def z_gap_time(self) -> float:
        if self.stderr_gap_time == 0.0:
            return 0.0
        return (self.mean_gap_time - self.expected_gap_time) / self.stderr_gap_time


def rbm_misalignment_demo(
    p: Mm1Params,
    eps: float,
    x0: float,
    dt: float | None = None,
    reps: int = 1000,
    seed: int = 0,
    horizon: float | None = None,
    max_attempts: int = 64,
) -> MisalignmentReport:
    """Simulate four reflected paths sharing one Brownian path and verify
    the misalignment window facts.

    Between the first hits of ``3 eps/4`` and ``eps/4`` by the once-shifted
    path, the third-difference combination of the four paths should sit at
    or below ``-eps/4`` (up to an Euler-discretization slack), and the mean
    window duration should match ``eps / (2 delta (mu - lam))``.
    Replications whose window is not observed within the horizon are
    resampled from a fresh substream, with the count reported.
    """
    if not x0 > eps:
        raise ValueError("x0 must exceed eps")
    drift = p.delta * (p.lam - p.mu)
    sigma = p.delta * math.sqrt(p.lam + p.mu)
    if dt is None:
        dt = eps**2 / 100.0
    slack = 3.0 * math.sqrt(dt) * sigma
    if horizon is None:
        fall = (x0 + eps) / abs(drift)
        spread = math.sqrt(max(fall, 1.0)) * sigma / abs(drift)
        horizon = fall + 12.0 * max(spread, sigma**2 / drift**2)
    nsteps = int(math.ceil(horizon / dt))
    sigma_dt = sigma * math.sqrt(dt)
    kernels = backends.get_kernels()

    out_ok = np.zeros(reps, dtype=bool)
    out_ok_strict = np.zeros(reps, dtype=bool)
    out_clean = np.zeros(reps, dtype=bool)
    out_gap = np.zeros(reps)
    out_r0g1 = np.zeros(reps)
    out_r0g2 = np.zeros(reps)
    out_ident = np.zeros(reps)

    chunk = max(8, int(2e6 / nsteps))
    pending = [(r, 0) for r in range(reps)]
    resampled = 0
    attempts = 0
    while pending:
        attempts += 1
        if attempts > max_attempts * max(1, reps // chunk + 1):
            raise SamplingError("window repeatedly unobserved; enlarge horizon")
        batch = pending[:chunk]
        pending = pending[chunk:]
        dw = np.empty((len(batch), nsteps))
        for i, (r, attempt) in enumerate(batch):
            rng = np.random.default_rng([seed, 7, int(r), int(attempt)])
            dw[i] = rng.standard_normal(nsteps)
        n = len(batch)
        observed = np.zeros(n, dtype=bool)
        ok = np.zeros(n, dtype=bool)
        oks = np.zeros(n, dtype=bool)
        clean = np.zeros(n, dtype=bool)
        s1 = np.zeros(n, dtype=np.int64)
        s2 = np.zeros(n, dtype=np.int64)
        r0g1 = np.zeros(n)
        r0g2 = np.zeros(n)
        ident = np.zeros(n)
        kernels.rbm_window_batch(
            eps,
            x0,
            drift,
            sigma_dt,
            dt,
            0.75 * eps,
            0.25 * eps,
            -0.25 * eps + slack,
            -0.25 * eps,
            dw,
            observed,
            ok,
            oks,
            clean,
            s1,
            s2,
            r0g1,
            r0g2,
            ident,
        )
        for i, (r, attempt) in enumerate(batch):
            if observed[i]:
                out_ok[r] = ok[i]
                out_ok_strict[r] = oks[i]
                out_clean[r] = clean[i]
                out_gap[r] = dt * (s2[i] - s1[i])
                out_r0g1[r] = r0g1[i]
                out_r0g2[r] = r0g2[i]
                out_ident[r] = ident[i]
            else:
                resampled += 1
                pending.append((r, attempt + 1))

    gap_mean, gap_se = _summarize(out_gap)
    expected = eps / (2.0 * p.delta * (p.mu - p.lam))
    return MisalignmentReport(
        eps=eps,
        dt=dt,
        slack=slack,
        replications=reps,
        frac_window_ok=float(out_ok.mean()),
        frac_window_ok_strict=float(out_ok_strict.mean()),
        frac_reflection_clean=float(out_clean.mean()),
        mean_gap_time=gap_mean,
        stderr_gap_time=gap_se,
        expected_gap_time=expected,
        mean_r0_gamma1=float(out_r0g1.mean()),
        mean_r0_gamma2=float(out_r0g2.mean()),
        identity_dev_max=float(out_ident[out_clean].max()) if out_clean.any() else 0.0,
        resampled=resampled,
        info={"x0": x0, "nsteps": nsteps, "horizon": horizon, "seed": seed},
    )
