"""Rate kernels, stationary laws, and the three Poisson solvers."""

import json

import numpy as np
import pytest

from prelimit import (
    AffineRate,
    ConstantRate,
    GatedRate,
    GridFunction,
    GridIndexError,
    LatticeSpec,
    RateKernel,
    SolverError,
    StabilityError,
    birth_death_poisson,
    difference_array,
    generator_apply,
    generator_grid,
    kernel_from_config,
    poisson_via_integral,
    sample_dlip,
    solve_poisson,
    stationary,
)
from prelimit import mm1
from prelimit.ctmc import generator_matrix

P = mm1.Mm1Params(1.0, 2.0, 1.0)
UPPER = mm1.default_upper(P)


@pytest.fixture(scope="module")
def queue_kernel():
    return mm1.mm1_kernel(P, UPPER)


class TestRateKernel:
    def test_offsets_validated(self):
        s = LatticeSpec(1, 1.0, (0,), (5,))
        with pytest.raises(ValueError):
            RateKernel(s, [((0,), ConstantRate(1.0))])
        with pytest.raises(ValueError):
            RateKernel(s, [((1,), ConstantRate(1.0)), ((1,), ConstantRate(2.0))])

    def test_negative_rate_rejected(self):
        s = LatticeSpec(1, 1.0, (-5,), (5,))
        with pytest.raises(ValueError, match="negative"):
            RateKernel(s, [((1,), AffineRate(0.0, (1.0,)))])

    def test_boundary_jumps_dropped_and_recorded(self, queue_kernel):
        up = queue_kernel.rate_grid((1,))
        down = queue_kernel.rate_grid((-1,))
        assert up.values[-1] == 0.0  # up-jump at the top is dropped
        assert down.values[0] == 0.0  # gated death rate at zero
        assert queue_kernel.dropped_jumps == 1

    def test_config_round_trip(self, queue_kernel):
        cfg = queue_kernel.to_config()
        k2 = kernel_from_config(json.dumps(cfg))
        assert k2.spec == queue_kernel.spec
        for off, _ in queue_kernel.jumps:
            assert np.array_equal(
                k2.rate_grid(off).values, queue_kernel.rate_grid(off).values
            )

    def test_config_affine_and_gated(self):
        cfg = {
            "dim": 1,
            "delta": 0.5,
            "lower": [0],
            "upper": [10],
            "jumps": [
                {"offset": [1], "rate": {"kind": "affine", "intercept": 1.0, "slope": [0.5]}},
                {"offset": [-1], "rate": {"kind": "gated", "value": 2.0,
                                          "coordinate": 0, "min_index": 1}},
            ],
        }
        k = kernel_from_config(cfg)
        # affine in the scaled coordinate: rate at k=4 is 1 + 0.5*(0.5*4)
        assert k.rate_grid((1,)).value((4,)) == pytest.approx(2.0)
        assert k.rate_grid((-1,)).value((0,)) == 0.0
        assert k.rate_grid((-1,)).value((3,)) == 2.0


class TestGeneratorApply:
    def test_constant_function(self, queue_kernel):
        f = GridFunction(queue_kernel.spec, np.full(UPPER + 1, 5.0))
        for k in (0, 1, 7):
            assert generator_apply(queue_kernel, f, (k,)) == 0.0

    def test_identity_at_zero_and_interior(self, queue_kernel):
        f = GridFunction.from_callable(queue_kernel.spec, lambda x: x)
        # at 0 only the arrival contributes: lam * delta = 1
        assert generator_apply(queue_kernel, f, (0,)) == pytest.approx(1.0)
        # in the interior: lam - mu = -1
        for k in (1, 2, 10):
            assert generator_apply(queue_kernel, f, (k,)) == pytest.approx(-1.0)

    def test_grid_matches_pointwise(self, queue_kernel, rng):
        f = GridFunction(queue_kernel.spec, rng.standard_normal(UPPER + 1))
        g = generator_grid(queue_kernel, f)
        for k in (0, 1, 5, UPPER):
            assert g.value((k,)) == pytest.approx(
                generator_apply(queue_kernel, f, (k,)), rel=1e-13, abs=1e-13
            )

    def test_retained_jump_outside_value_box_errors(self, queue_kernel):
        small = LatticeSpec(1, 1.0, (0,), (5,))
        f = GridFunction(small, np.zeros(6))
        with pytest.raises(GridIndexError):
            generator_grid(queue_kernel, f)


class TestStationary:
    def test_mm1_geometric(self, queue_kernel):
        pi = stationary(queue_kernel)
        w = 0.5 ** np.arange(UPPER + 1)
        w /= w.sum()
        assert np.max(np.abs(pi.probs - w)) < 1e-12
        # matches the closed form (1-rho) rho^k up to the truncation tail
        exact = 0.5 * 0.5 ** np.arange(UPPER + 1)
        assert np.max(np.abs(pi.probs - exact)) < 0.5 ** (UPPER + 1) * 4

    def test_two_state_chain(self):
        # constant rates + boundary dropping give the two-state chain
        a, b = 0.7, 1.3
        s = LatticeSpec(1, 1.0, (0,), (1,))
        k = RateKernel(s, [((1,), ConstantRate(a)), ((-1,), ConstantRate(b))])
        pi = stationary(k)
        assert pi.probs[0] == pytest.approx(b / (a + b), rel=1e-12)
        assert pi.probs[1] == pytest.approx(a / (a + b), rel=1e-12)

    def test_symmetric_birth_death_uniform(self):
        s = LatticeSpec(1, 1.0, (0,), (7,))
        k = RateKernel(s, [((1,), ConstantRate(1.0)), ((-1,), ConstantRate(1.0))])
        pi = stationary(k)
        assert np.max(np.abs(pi.probs - 1.0 / 8)) < 1e-12

    def test_reducible_chain_detected(self):
        s = LatticeSpec(1, 1.0, (0,), (5,))
        # only up-jumps: no return path, strongly disconnected
        k = RateKernel(s, [((1,), ConstantRate(1.0))])
        with pytest.raises(SolverError, match="reducible"):
            stationary(k)

    def test_balance_residual(self, queue_kernel):
        pi = stationary(queue_kernel)
        q = generator_matrix(queue_kernel)
        assert np.max(np.abs(q.T @ pi.probs.ravel())) < 1e-10


class TestSolvePoisson:
    def test_constant_h_gives_zero(self, queue_kernel):
        h = GridFunction(queue_kernel.spec, np.full(UPPER + 1, 2.0))
        sol = solve_poisson(queue_kernel, h)
        assert np.max(np.abs(sol.values)) < 1e-12

    def test_identity_first_increment_is_mean(self, queue_kernel):
        # the k=0 balance row forces lam * Df(0) = E X; E X = 1 here
        h = GridFunction.from_callable(queue_kernel.spec, lambda x: x)
        sol = solve_poisson(queue_kernel, h)
        assert sol.values[1] - sol.values[0] == pytest.approx(1.0, abs=1e-10)

    def test_residual_and_normalization(self, queue_kernel, rng):
        h = GridFunction(queue_kernel.spec, rng.standard_normal(UPPER + 1))
        sol = solve_poisson(queue_kernel, h)
        assert sol.values[0] == 0.0
        assert sol.info["residual"] <= 1e-10
        q = generator_matrix(queue_kernel)
        r = sol.mean_h - h.values
        assert np.max(np.abs(q @ sol.values.ravel() - r)) < 1e-10

    def test_stationary_expectation_of_generator_vanishes(self, queue_kernel, rng):
        # E[G f(X)] = 0 for any f on the box
        pi = stationary(queue_kernel)
        f = GridFunction(queue_kernel.spec, rng.standard_normal(UPPER + 1))
        g = generator_grid(queue_kernel, f)
        assert abs(pi.expectation(g)) < 1e-10

    def test_2d_product_kernel(self, rng):
        s = LatticeSpec(2, 0.5, (0, 0), (12, 12))
        kern = RateKernel(
            s,
            [
                ((1, 0), ConstantRate(1.0)),
                ((-1, 0), GatedRate(2.0, 0, 1)),
                ((0, 1), ConstantRate(0.8)),
                ((0, -1), GatedRate(2.0, 1, 1)),
            ],
        )
        h = GridFunction(s, rng.standard_normal(s.shape))
        sol = solve_poisson(kern, h)
        assert sol.info["residual"] <= 1e-10
        assert sol.values[0, 0] == 0.0


class TestBirthDeathPoisson:
    def test_constant_h(self):
        s = LatticeSpec(1, 1.0, (0,), (UPPER,))
        h = GridFunction(s, np.full(UPPER + 1, 3.0))
        sol = birth_death_poisson(1.0, 2.0, 1.0, h)
        # the truncated pmf normalizes to 1 only up to roundoff
        assert np.max(np.abs(sol.values)) <= 1e-12

    def test_identity_increment(self):
        s = LatticeSpec(1, 1.0, (0,), (UPPER,))
        h = GridFunction.from_callable(s, lambda x: x)
        sol = birth_death_poisson(1.0, 2.0, 1.0, h)
        assert sol.values[1] - sol.values[0] == pytest.approx(1.0, abs=1e-12)

    def test_unstable_rejected(self):
        s = LatticeSpec(1, 1.0, (0,), (10,))
        h = GridFunction(s, np.zeros(11))
        with pytest.raises(StabilityError):
            birth_death_poisson(2.0, 1.0, 1.0, h)

    def test_agrees_with_direct_solver_on_random_dlip(self, queue_kernel):
        worst = 0.0
        for seed in range(50):
            h = sample_dlip(queue_kernel.spec, seed)
            a = solve_poisson(queue_kernel, h)
            b = birth_death_poisson(1.0, 2.0, 1.0, h)
            d = np.max(np.abs(np.diff(a.values) - np.diff(b.values)))
            worst = max(worst, float(d))
        assert worst <= 1e-9

    def test_box_must_start_at_zero(self):
        s = LatticeSpec(1, 1.0, (1,), (10,))
        h = GridFunction(s, np.zeros(10))
        with pytest.raises(ValueError):
            birth_death_poisson(1.0, 2.0, 1.0, h)


class TestPoissonViaIntegral:
    def test_constant_h_zero(self, queue_kernel):
        h = GridFunction(queue_kernel.spec, np.full(UPPER + 1, 2.0))
        sol = poisson_via_integral(queue_kernel, h, horizon=50.0, steps=128)
        assert np.max(np.abs(sol.values)) < 1e-12

    def test_zero_horizon_warns(self, queue_kernel):
        h = GridFunction.from_callable(queue_kernel.spec, lambda x: x)
        sol = poisson_via_integral(queue_kernel, h, horizon=0.0)
        assert np.max(np.abs(sol.values)) == 0.0
        assert sol.info["warning"]

    def test_short_horizon_warns(self, queue_kernel):
        h = GridFunction.from_callable(queue_kernel.spec, lambda x: x)
        sol = poisson_via_integral(queue_kernel, h, horizon=5.0, steps=128)
        assert sol.info["warning"]

    def test_identity_matches_closed_form(self, queue_kernel):
        # the identity integrand carries a prefactor growing with the start
        # state, so it needs a longer horizon than bounded test functions
        h = GridFunction.from_callable(queue_kernel.spec, lambda x: x)
        sol = poisson_via_integral(queue_kernel, h, horizon=300.0, steps=768)
        ref = birth_death_poisson(1.0, 2.0, 1.0, h)
        assert not sol.info["warning"]
        assert np.max(np.abs(sol.values - ref.values)) <= 1e-6

    def test_tail_estimate_tracks_true_error(self, queue_kernel):
        # a too-short horizon must warn, and the carried tail estimate
        # should be the right size
        h = GridFunction.from_callable(queue_kernel.spec, lambda x: x)
        sol = poisson_via_integral(queue_kernel, h, horizon=150.0, steps=512)
        ref = birth_death_poisson(1.0, 2.0, 1.0, h)
        err = np.max(np.abs(sol.values - ref.values))
        assert sol.info["warning"]
        assert 0.1 * err <= sol.info["tail_estimate"] <= 10 * err

    def test_normalization_independence_across_solvers(self, queue_kernel):
        # finite differences agree across all three solvers
        h = sample_dlip(queue_kernel.spec, seed=9)
        direct = solve_poisson(queue_kernel, h)
        closed = birth_death_poisson(1.0, 2.0, 1.0, h)
        integral = poisson_via_integral(queue_kernel, h, horizon=150.0, steps=512)
        for a in (1, 2, 3):
            da = difference_array(direct.grid, (a,))
            db = difference_array(closed.grid, (a,))
            dc = difference_array(integral.grid, (a,))
            assert np.max(np.abs(da - db)) <= 1e-9
            assert np.max(np.abs(da - dc)) <= 1e-6
