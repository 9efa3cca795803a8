import numpy as np
from django.test import SimpleTestCase

from solver.conditions import ProblemSpec
from solver.exceptions import PreconditionError
from solver.exprlang import compile_expr
from solver.truncation import lipschitz_bound, plan_truncation, sigma, solve_compact, truncate_g
from solver.verify import residual


class SigmaTests(SimpleTestCase):
    def test_one_on_interval(self):
        self.assertEqual(sigma(0.0, 1.0, 2.0, 0.5), 1.0)

    def test_zero_outside_support(self):
        self.assertEqual(sigma(0.0, 1.0, 2.0, -2.0), 0.0)
        self.assertEqual(sigma(0.0, 1.0, 2.0, 10.0), 0.0)

    def test_midpoint_of_ramp(self):
        self.assertEqual(sigma(0.0, 1.0, 2.0, -1.0), 0.5)
        self.assertEqual(sigma(0.0, 1.0, 2.0, 2.0), 0.5)

    def test_vectorized(self):
        np.testing.assert_array_equal(sigma(-1.0, 1.0, 1.0, np.array([-3.0, -1.5, 0.0, 1.5])), [0.0, 0.5, 1.0, 0.5])


class TruncateTests(SimpleTestCase):
    def test_agrees_on_interval(self):
        g = compile_expr("sin(x)")
        truncated = truncate_g(g, -1.0, 2.0, 1.5)
        xs = np.linspace(-1.0, 2.0, 31)
        np.testing.assert_array_equal(truncated(xs), g(xs))

    def test_far_away_value_is_g_of_zero(self):
        g = compile_expr("x + 3")
        self.assertEqual(truncate_g(g, 0.0, 1.0, 1.0)(1.0 + 2.0), 3.0)

    def test_ramp_value(self):
        self.assertEqual(truncate_g(compile_expr("x"), 0.0, 1.0, 1.0)(1.5), 0.75)

    def test_lipschitz_bound_holds_on_random_pairs(self):
        g = compile_expr("x + sin(x)")
        a, b = -1.0, 1.0
        rng = np.random.default_rng(11)
        for omega in (1.0, 4.0, 16.0):
            with self.subTest(omega=omega):
                truncated = truncate_g(g, a, b, omega)
                bound = lipschitz_bound(2.0, a, b, omega)
                self.assertEqual(bound, 2.0 * (1.0 + 1.0 / omega))
                reach = b + omega + 1.0
                edges = np.linspace(-reach, reach, 101)
                width = edges[1] - edges[0]
                strata = rng.integers(0, 100, (100_000, 2))
                xs = edges[strata[:, 0]] + rng.uniform(0.0, width, 100_000)
                ys = edges[strata[:, 1]] + rng.uniform(0.0, width, 100_000)
                keep = xs != ys
                xs, ys = xs[keep], ys[keep]
                ratios = np.abs(truncated(xs) - truncated(ys)) / np.abs(xs - ys)
                self.assertLessEqual(ratios.max(), bound + 1e-9)

    def test_identical_on_interval_for_every_rung(self):
        g = compile_expr("x + sin(x)")
        xs = np.linspace(-1.0, 1.0, 2001)
        for omega in (1.0, 4.0, 16.0):
            truncated = truncate_g(g, -1.0, 1.0, omega)
            np.testing.assert_array_equal(sigma(-1.0, 1.0, omega, xs), np.ones(xs.size))
            np.testing.assert_array_equal(truncated(xs), g(xs))

    def test_rejects_non_positive_omega(self):
        with self.assertRaises(PreconditionError):
            truncate_g(compile_expr("x"), 0.0, 1.0, 0.0)


class PlanTests(SimpleTestCase):
    def test_product_branch_needs_omega_four(self):
        plan = plan_truncation(2.0, 2.0, 2.0, (-1.0, 1.0))
        self.assertEqual(plan.omega, 4.0)
        self.assertEqual(plan.beta_tilde, 2.5)
        self.assertTrue(plan.feasible)

    def test_quadratic_branch_takes_first_rung(self):
        plan = plan_truncation(2.0, 0.5, 0.125, (0.0, 1.0))
        self.assertEqual(plan.omega, 1.0)
        self.assertEqual(plan.beta_tilde, 0.25)

    def test_constant_g(self):
        plan = plan_truncation(2.0, 2.0, 0.0, (-3.0, 1.0))
        self.assertEqual(plan.omega, 3.0)
        self.assertEqual(plan.beta_tilde, 0.0)

    def test_outside_region(self):
        with self.assertRaises(PreconditionError):
            plan_truncation(2.0, 2.0, 3.0, (-1.0, 1.0))

    def test_empty_interval(self):
        with self.assertRaises(PreconditionError):
            plan_truncation(2.0, 2.0, 2.0, (1.0, -1.0))


class CompactSolveTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.spec = ProblemSpec.from_strings("2*x", "2*x", "x", constants={"beta": 2.0})
        cls.result = solve_compact(cls.spec, (-1.0, 1.0), tol=1e-8, max_iter=200, window=20.0, grid_n=4001)

    def test_plan(self):
        self.assertEqual(self.result.plan.omega, 4.0)
        self.assertEqual(self.result.report.constants["beta"].source, "truncated")
        self.assertTrue(self.result.report.g_bounded)

    def test_restricted_to_interval(self):
        self.assertEqual(self.result.restricted.window, (-1.0, 1.0))

    def test_original_equation_holds_on_interval(self):
        nodes = self.result.full.nodes
        probes = np.union1d(np.linspace(-1.0, 1.0, 4097), nodes[(nodes >= -1.0) & (nodes <= 1.0)])
        report = residual(self.result.full, self.spec, probes=probes, interior=(-1.0, 1.0))
        self.assertLessEqual(report.sup_residual_full, 1e-6)
        self.assertLessEqual(report.collocation["sup_residual_interior"], 1e-6)
        self.assertGreater(report.collocation["probes"], 0)
