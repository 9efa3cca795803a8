import numpy as np
from django.test import SimpleTestCase

from solver.exceptions import ConstructionError, NotSurjectiveError, OutOfRangeError, PreconditionError
from solver.exprlang import compile_expr
from solver.funcspace import (
    Branch,
    NumericInverse,
    SampledFunction,
    kink_indices,
    lipschitz_bounds,
    parallel_map,
    sup_distance,
)


class SampledFunctionTests(SimpleTestCase):
    def setUp(self):
        self.phi = SampledFunction([-1.0, 0.0, 1.0], [2.0, 0.0, 2.0])

    def test_interpolates_between_nodes(self):
        self.assertEqual(self.phi(0.5), 1.0)
        self.assertEqual(self.phi(-0.25), 0.5)

    def test_constant_tail_holds_endpoint_values(self):
        np.testing.assert_array_equal(self.phi(np.array([-5.0, 7.0])), [2.0, 2.0])

    def test_linear_tail_continues_with_kappa(self):
        phi = SampledFunction([-1.0, 0.0, 1.0], [-0.5, 0.0, 0.5], tail="linear", kappa=0.5)
        self.assertEqual(phi(3.0), 1.5)
        self.assertEqual(phi(-3.0), -1.5)

    def test_scalar_in_scalar_out(self):
        self.assertIsInstance(self.phi(0.3), float)

    def test_rejects_unsorted_nodes(self):
        with self.assertRaises(ValueError):
            SampledFunction([0.0, 0.0, 1.0], [0.0, 1.0, 2.0])

    def test_linear_tail_needs_slope(self):
        with self.assertRaises(ValueError):
            SampledFunction([0.0, 1.0], [0.0, 1.0], tail="linear")

    def test_max_slope_inside_window(self):
        phi = SampledFunction([0.0, 1.0, 2.0, 3.0], [0.0, 1.0, 4.0, 5.0])
        self.assertEqual(phi.max_slope(), 3.0)
        self.assertEqual(phi.max_slope((0.0, 1.0)), 1.0)

    def test_restrict_keeps_values(self):
        restricted = self.phi.restrict(-0.5, 0.5)
        np.testing.assert_array_equal(restricted.nodes, [-0.5, 0.0, 0.5])
        np.testing.assert_array_equal(restricted.values, [1.0, 0.0, 1.0])

    def test_deviation_against_kappa(self):
        phi = SampledFunction([-1.0, 0.0, 1.0], [-2.0, 0.5, 2.0], tail="linear", kappa=2.0)
        self.assertEqual(phi.deviation(), 0.5)


class ParallelMapTests(SimpleTestCase):
    def test_result_does_not_depend_on_jobs(self):
        xs = np.linspace(-3.0, 3.0, 20001)
        serial = parallel_map(np.sin, xs, n_jobs=1)
        threaded = parallel_map(np.sin, xs, n_jobs=4)
        np.testing.assert_array_equal(serial, threaded)


class NumericInverseTests(SimpleTestCase):
    def test_affine_closed_form(self):
        inverse = NumericInverse(compile_expr("x + 0.5"))
        self.assertEqual(inverse(0.0), -0.5)

    def test_cubic_within_bracket(self):
        inverse = NumericInverse(compile_expr("x^3"), bracket=(-2.0, 2.0))
        self.assertAlmostEqual(inverse(8.0), 2.0, places=9)

    def test_expanding_bracket_for_nonlinear_forward(self):
        fn = compile_expr("x + sin(x)")
        inverse = NumericInverse(fn)
        ys = np.array([-40.0, -1.0, 0.0, 2.5, 100.0])
        np.testing.assert_allclose(fn(inverse(ys)), ys, atol=1e-10)

    def test_decreasing_forward(self):
        fn = compile_expr("-x - atan(x)")
        inverse = NumericInverse(fn)
        self.assertAlmostEqual(fn(inverse(3.0)), 3.0, places=10)

    def test_bounded_forward_is_not_surjective(self):
        with self.assertRaises(NotSurjectiveError):
            NumericInverse(compile_expr("atan(x)"))(2.0)

    def test_constant_affine_forward(self):
        with self.assertRaises(PreconditionError):
            NumericInverse(compile_expr("0*x + 3"))

    def test_inverse_undoes_forward(self):
        # every fixture has |slope| >= 1, so the x error is bounded by the y tolerance
        rng = np.random.default_rng(3)
        for src in ("x + 0.5", "-3*x + 1", "x^3 + x", "2*x + sin(x)", "-x - atan(x)", "exp(x) + x"):
            with self.subTest(src=src):
                fn = compile_expr(src)
                inverse = NumericInverse(fn)
                xs = rng.uniform(-5.0, 5.0, 100)
                ys = fn(xs)
                bound = 2.0 * inverse.tolerance * np.maximum(1.0, np.abs(ys))
                self.assertTrue(np.all(np.abs(inverse(ys) - xs) <= bound))

    def test_empty_input(self):
        inverse = NumericInverse(compile_expr("x + sin(x)"))
        self.assertEqual(inverse(np.empty(0)).shape, (0,))


class SupDistanceTests(SimpleTestCase):
    def test_same_grid(self):
        F = SampledFunction([0.0, 1.0, 2.0], [0.0, 1.0, 0.0])
        G = SampledFunction([0.0, 1.0, 2.0], [0.0, 0.0, 0.0])
        self.assertEqual(sup_distance(F, G), 1.0)

    def test_union_of_grids(self):
        F = SampledFunction([0.0, 1.0, 2.0], [0.0, 1.0, 0.0])
        G = SampledFunction([0.0, 2.0], [0.0, 0.0])
        self.assertEqual(sup_distance(F, G), 1.0)

    def test_window_limits_the_comparison(self):
        F = SampledFunction([0.0, 1.0, 2.0, 3.0], [0.0, 0.0, 0.0, 5.0])
        G = SampledFunction([0.0, 1.0, 2.0, 3.0], [0.0, 0.25, 0.0, 0.0])
        self.assertEqual(sup_distance(F, G, window=(0.0, 2.0)), 0.25)

    def test_identity_against_x_plus_sine(self):
        nodes = np.linspace(-np.pi, np.pi, 2001)
        F = SampledFunction(nodes, nodes)
        G = SampledFunction(nodes, nodes + np.sin(nodes))
        self.assertAlmostEqual(sup_distance(F, G), 1.0, delta=1e-6)

    def test_symmetry_and_triangle_inequality(self):
        rng = np.random.default_rng(5)

        def random_function():
            nodes = np.concatenate(([-1.0], np.sort(rng.uniform(-1.0, 1.0, 40)), [1.0]))
            return SampledFunction(nodes, rng.normal(size=nodes.size))

        for _ in range(50):
            F, G, H = random_function(), random_function(), random_function()
            self.assertEqual(sup_distance(F, G), sup_distance(G, F))
            self.assertLessEqual(sup_distance(F, H), sup_distance(F, G) + sup_distance(G, H) + 1e-12)

    def test_mismatched_tails(self):
        F = SampledFunction([0.0, 1.0], [0.0, 1.0])
        G = SampledFunction([0.0, 1.0], [0.0, 1.0], tail="linear", kappa=1.0)
        with self.assertRaises(PreconditionError):
            sup_distance(F, G)


class LipschitzBoundsTests(SimpleTestCase):
    def test_linear_function(self):
        estimate = lipschitz_bounds(compile_expr("3*x - 1"), (-2.0, 2.0), 101)
        self.assertAlmostEqual(estimate.lower, 3.0, places=12)
        self.assertTrue(estimate.heuristic)

    def test_sine_is_bounded_by_one(self):
        estimate = lipschitz_bounds(np.sin, (-10.0, 10.0), 10001)
        self.assertLessEqual(estimate.lower, 1.0)
        self.assertGreater(estimate.lower, 0.999)

    def test_x_plus_sine(self):
        estimate = lipschitz_bounds(compile_expr("x + sin(x)"), (-np.pi, np.pi), 10001)
        self.assertGreaterEqual(estimate.lower, 1.99)
        self.assertLessEqual(estimate.lower, 2.0 + 1e-12)

    def test_lower_bound_grows_on_nested_grids(self):
        fn = compile_expr("x + sin(3*x) + 0.1*x^2")
        lowers = [lipschitz_bounds(fn, (-3.0, 3.0), 2 ** k + 1).lower for k in range(3, 12)]
        for coarse, fine in zip(lowers, lowers[1:]):
            self.assertGreaterEqual(fine, coarse - 1e-12)

    def test_witness_brackets_the_steepest_pair(self):
        estimate = lipschitz_bounds(np.abs, (-1.0, 1.0), 5)
        a, b = estimate.witness
        self.assertLess(a, b)
        self.assertEqual(estimate.lower, 1.0)


class BranchTests(SimpleTestCase):
    def test_direction(self):
        self.assertEqual(Branch([0.0, 1.0], [0.0, 2.0]).direction, "increasing")
        self.assertEqual(Branch([0.0, 1.0], [2.0, 0.0]).direction, "decreasing")
        self.assertEqual(Branch([0.0, 1.0, 2.0], [0.0, 1.0, 0.0]).direction, "none")

    def test_evaluation_and_inverse(self):
        branch = Branch([0.0, 0.5, 1.0], [1.0, 2.0, 4.0])
        self.assertEqual(branch(0.75), 3.0)
        self.assertEqual(branch.inverse(3.0), 0.75)

    def test_decreasing_inverse(self):
        branch = Branch([-2.0, -1.0], [1.75, 0.0])
        self.assertAlmostEqual(branch.inverse(0.875), -1.5, places=15)

    def test_out_of_range_argument(self):
        branch = Branch([0.0, 1.0], [0.0, 1.0])
        with self.assertRaises(OutOfRangeError) as ctx:
            branch(1.5)
        self.assertEqual(ctx.exception.details["x"], 1.5)

    def test_endpoint_slack(self):
        branch = Branch([0.0, 1.0], [0.0, 1.0], tau=1e-9)
        self.assertEqual(branch(1.0 + 1e-12), 1.0)

    def test_non_monotone_cannot_invert(self):
        with self.assertRaises(ConstructionError):
            Branch([0.0, 1.0, 2.0], [0.0, 1.0, 0.0]).inverse(0.5)

    def test_kinks(self):
        branch = Branch([0.0, 1.0, 2.0, 3.0], [0.0, 1.0, 2.0, 4.0])
        np.testing.assert_array_equal(branch.kinks(), [2.0])
        np.testing.assert_array_equal(
            kink_indices(np.array([0.0, 1.0, 2.0]), np.array([0.0, 1.0, 2.0])), np.empty(0, dtype=int)
        )
