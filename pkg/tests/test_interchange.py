"""The extension/generator interchange identity and its exact error term."""

import numpy as np
import pytest

from prelimit import (
    AffineRate,
    ConstantRate,
    DomainError,
    GridFunction,
    LatticeSpec,
    RateKernel,
    a_gx,
    epsilon_1d,
    epsilon_nd,
    extend_hat,
    forward_difference,
    interchange_report,
    interchanged_main,
    mm1_boundary_interchange,
)
from prelimit import mm1
from prelimit.grids import difference_array

P = mm1.Mm1Params(1.0, 2.0, 1.0)


@pytest.fixture(scope="module")
def affine_kernel():
    spec = LatticeSpec(1, 0.5, (0,), (40,))
    return RateKernel(
        spec, [((1,), AffineRate(1.0, (0.3,))), ((-1,), AffineRate(2.0, (0.1,)))]
    )


@pytest.fixture(scope="module")
def const_kernel():
    spec = LatticeSpec(1, 0.5, (0,), (40,))
    return RateKernel(
        spec, [((1,), ConstantRate(1.0)), ((-1,), ConstantRate(2.0))]
    )


@pytest.fixture(scope="module")
def product_kernel():
    spec = LatticeSpec(2, 0.5, (0, 0), (14, 14))
    return RateKernel(
        spec,
        [
            ((1, 0), AffineRate(1.0, (0.2, 0.0))),
            ((-1, 0), AffineRate(2.0, (0.1, 0.0))),
            ((0, 1), AffineRate(1.5, (0.0, 0.25))),
            ((0, -1), AffineRate(2.5, (0.0, 0.05))),
        ],
    )


def random_grid(spec, seed):
    return GridFunction(spec, np.random.default_rng(seed).standard_normal(spec.shape))


class TestAGx:
    def test_constant_function_zero(self, affine_kernel):
        f = GridFunction(affine_kernel.spec, np.full(41, 2.0))
        assert a_gx(affine_kernel, f, 3.3) == pytest.approx(0.0, abs=1e-12)

    def test_lattice_point_matches_generator(self, affine_kernel):
        from prelimit import generator_apply

        f = random_grid(affine_kernel.spec, 0)
        for k in (3, 7, 12):
            x = 0.5 * k
            assert a_gx(affine_kernel, f, x) == pytest.approx(
                generator_apply(affine_kernel, f, (k,)), rel=1e-12
            )

    def test_interior_equals_main_for_mm1(self):
        # away from zero the queue's rates are constant on the stencil
        kern = mm1.mm1_kernel(P, 40)
        f = random_grid(kern.spec, 1)
        for x in (3.3, 7.7, 20.2):
            lhs = a_gx(kern, f, x)
            main = interchanged_main(kern, f, x)
            assert lhs == pytest.approx(main, rel=1e-12, abs=1e-12)


class TestEpsilon1d:
    def test_constant_rates_zero(self, const_kernel):
        # the rate deviation is pure partition-of-unity roundoff here
        f = random_grid(const_kernel.spec, 2)
        for x in (1.3, 5.55, 12.01):
            assert abs(epsilon_1d(const_kernel, f, x)) <= 1e-12

    def test_zero_at_lattice_points(self, affine_kernel):
        f = random_grid(affine_kernel.spec, 3)
        for k in (2, 6, 11):
            assert epsilon_1d(affine_kernel, f, 0.5 * k) == pytest.approx(
                0.0, abs=1e-12
            )

    def test_identity_residual_oracle(self, affine_kernel):
        # the decomposition is exact: the residual is the test
        f = random_grid(affine_kernel.spec, 4)
        for x in (1.3, 5.55, 9.2, 13.9):
            rep = interchange_report(affine_kernel, f, x)
            assert abs(rep.residual) <= 1e-12
            assert rep.epsilon != 0.0

    def test_affine_rate_quadratic_example(self):
        # beta_+1(x) = x (up-jumps only), f = x^2, evaluated mid-cell at
        # delta/2: epsilon closes the identity exactly
        spec = LatticeSpec(1, 1.0, (0,), (20,))
        kern = RateKernel(spec, [((1,), AffineRate(0.0, (1.0,)))])
        f = GridFunction.from_callable(spec, lambda x: x**2)
        x = 0.5
        lhs = a_gx(kern, f, x)
        main = interchanged_main(kern, f, x)
        eps = epsilon_1d(kern, f, x)
        assert lhs - main == pytest.approx(eps, abs=1e-12)

    def test_report_serializes(self, affine_kernel):
        f = random_grid(affine_kernel.spec, 5)
        rep = interchange_report(affine_kernel, f, 4.2)
        import json

        payload = json.loads(rep.to_json())
        assert set(payload) == {"x", "lhs", "main_term", "epsilon", "residual"}


class TestEpsilonNd:
    def test_constant_rates_2d_zero(self):
        spec = LatticeSpec(2, 0.5, (0, 0), (14, 14))
        kern = RateKernel(
            spec, [((1, 0), ConstantRate(1.0)), ((0, -1), ConstantRate(2.0))]
        )
        f = random_grid(spec, 6)
        assert abs(epsilon_nd(kern, f, (2.3, 3.1))) <= 1e-12

    def test_matches_1d_form(self, affine_kernel):
        f = random_grid(affine_kernel.spec, 7)
        for x in (1.3, 5.55, 9.2):
            e1 = epsilon_1d(affine_kernel, f, x)
            en = epsilon_nd(affine_kernel, f, x)
            assert e1 == pytest.approx(en, rel=1e-12, abs=1e-12)

    def test_product_kernel_identity(self, product_kernel, rng):
        f = random_grid(product_kernel.spec, 8)
        for _ in range(10):
            x = rng.uniform(1.1, 4.4, size=2)
            rep = interchange_report(product_kernel, f, x)
            assert abs(rep.residual) <= 1e-10

    def test_domain_error_near_boundary(self, product_kernel):
        f = random_grid(product_kernel.spec, 9)
        with pytest.raises(DomainError):
            epsilon_nd(product_kernel, f, (0.2, 3.0))


class TestExtendHat:
    def test_copies_value(self, rng):
        spec = LatticeSpec(1, 1.0, (0,), (10,))
        f = GridFunction(spec, rng.standard_normal(11))
        fh = extend_hat(f)
        assert fh.spec.lower == (-1,)
        assert fh.value((-1,)) == f.value((0,))

    def test_first_difference_vanishes_below_zero(self, rng):
        spec = LatticeSpec(1, 1.0, (0,), (10,))
        f = GridFunction(spec, rng.standard_normal(11))
        fh = extend_hat(f)
        assert forward_difference(fh, (1,), (-1,)) == 0.0

    def test_third_difference_identity(self, rng):
        # D3 fhat(-delta) = D2 f(0) - D f(0), from the copied endpoint
        spec = LatticeSpec(1, 1.0, (0,), (10,))
        f = GridFunction(spec, rng.standard_normal(11))
        fh = extend_hat(f)
        lhs = forward_difference(fh, (3,), (-1,))
        rhs = forward_difference(f, (2,), (0,)) - forward_difference(f, (1,), (0,))
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)

    def test_requires_half_line_box(self):
        spec = LatticeSpec(1, 1.0, (1,), (10,))
        with pytest.raises(ValueError):
            extend_hat(GridFunction(spec, np.zeros(10)))


class TestMm1BoundaryInterchange:
    def test_identity_everywhere_including_band(self):
        kern = mm1.mm1_kernel(P, 40)
        rng = np.random.default_rng(10)
        worst = 0.0
        for seed in range(20):
            f = random_grid(kern.spec, seed)
            for x in np.concatenate([rng.uniform(0.0, 1.0, 3), rng.uniform(1.0, 30.0, 2)]):
                lhs = a_gx(kern, f, float(x))
                rhs = mm1_boundary_interchange(1.0, 2.0, 1.0, f, float(x))
                worst = max(worst, abs(lhs - rhs))
        assert worst <= 1e-10

    def test_reduces_to_plain_form_away_from_zero(self):
        kern = mm1.mm1_kernel(P, 40)
        f = random_grid(kern.spec, 11)
        for x in (1.5, 4.25, 9.75):
            rhs = mm1_boundary_interchange(1.0, 2.0, 1.0, f, x)
            main = interchanged_main(kern, f, x)
            assert rhs == pytest.approx(main, rel=1e-12, abs=1e-12)

    def test_constant_zero(self):
        spec = LatticeSpec(1, 1.0, (0,), (20,))
        f = GridFunction(spec, np.full(21, 3.0))
        assert mm1_boundary_interchange(1.0, 2.0, 1.0, f, 0.4) == pytest.approx(
            0.0, abs=1e-13
        )

    def test_negative_x_rejected(self):
        spec = LatticeSpec(1, 1.0, (0,), (20,))
        f = GridFunction(spec, np.zeros(21))
        with pytest.raises(DomainError):
            mm1_boundary_interchange(1.0, 2.0, 1.0, f, -0.5)


class TestDifferenceDerivativeBridge:
    def test_smooth_restriction_difference_bounds(self):
        # differences of a smooth restriction are controlled by the matching
        # derivative on the spanned window (iterated mean value); the
        # normalized ratio stays within [min, max] of the derivative there
        g = np.sin
        dg = [np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x), np.sin]
        for d in (0.5, 0.1, 0.02):
            spec = LatticeSpec(1, d, (0,), (60,))
            f = GridFunction.from_callable(spec, g)
            for v in (1, 2, 3, 4):
                arr = difference_array(f, (v,))
                for k in range(0, 50, 7):
                    window = np.linspace(d * k, d * (k + v), 200)
                    bound = np.max(np.abs(dg[v - 1](window)))
                    assert abs(arr[k]) <= d**v * (bound + 1e-9)
