import json
import math
import tempfile
from io import StringIO
from pathlib import Path

import pandas as pd
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings

CONFIGS = Path(settings.BASE_DIR) / "configs"


class IterfunCommandTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.out = Path(self.tmp.name)

    def run_command(self, *args, **options):
        stdout, stderr = StringIO(), StringIO()
        call_command("iterfun", *args, stdout=stdout, stderr=stderr, **options)
        return stdout.getvalue()

    def failing(self, *args, **options):
        stderr = StringIO()
        with self.assertRaises(CommandError) as ctx:
            call_command("iterfun", *args, stdout=StringIO(), stderr=stderr, **options)
        lines = stderr.getvalue().strip().splitlines()
        self.assertEqual(len(lines), 1)
        return ctx.exception.returncode, json.loads(lines[0])

    def report(self, sub=""):
        return json.loads((self.out / sub / "report.json").read_text(encoding="utf-8"))

    def test_bounded_run(self):
        stdout = self.run_command(config=str(CONFIGS / "example1.cfg"), grid_n=801, out=str(self.out))
        self.assertIn("Converged", stdout)
        for name in ("solution.csv", "solution.json", "trace.csv", "residuals.csv", "report.json"):
            self.assertTrue((self.out / name).exists(), name)
        report = self.report()
        conditions = report["conditions"]
        self.assertTrue(conditions["product"])
        self.assertAlmostEqual(conditions["L_window"]["lo"], 2.0 - math.sqrt(2.0), places=14)
        self.assertEqual(conditions["L_window"]["hi"], 1.0)
        self.assertEqual(report["functions"]["g"], {"source": "sin(x)", "parsed": "sin(x)"})
        # uniform points see the interpolation error of the coarse grid; collocation points only the last step
        self.assertLessEqual(report["residual"]["sup_residual_interior"], 5e-4)
        self.assertLessEqual(report["residual"]["collocation"]["sup_residual_interior"], 1e-6)
        self.assertGreater(report["residual"]["probe_count"], 4097)
        self.assertEqual(list(pd.read_csv(self.out / "solution.csv").columns), ["x", "value"])

    def test_verify_reads_back_a_grid_solution(self):
        self.run_command(config=str(CONFIGS / "example1.cfg"), grid_n=801, out=str(self.out / "solve"))
        self.run_command("verify", h="2*x", f="2*x", g="sin(x)", solution=str(self.out / "solve" / "solution.csv"),
                         out=str(self.out / "verify"))
        solved = self.report("solve")["residual"]["sup_residual_interior"]
        verified = self.report("verify")["residual"]["sup_residual_interior"]
        self.assertEqual(verified, solved)

    def test_refined_grid_is_reported(self):
        self.run_command(config=str(CONFIGS / "example1.cfg"), grid_n=401, refine=True, out=str(self.out))
        refinement = self.report()["refinement"]
        self.assertEqual(refinement["grid_n"], 801)
        self.assertGreater(refinement["constant"], 0.0)

    def test_asymptotic_run(self):
        self.run_command(config=str(CONFIGS / "example2.cfg"), grid_n=801, out=str(self.out))
        report = self.report()
        self.assertAlmostEqual(report["kappa_star"], math.sqrt(5.0) - 2.0, delta=1e-12)
        self.assertEqual(report["conditions"]["constants"]["kappa_g"]["source"], "syntactic")

    def test_piecewise_knots(self):
        self.run_command(config=str(CONFIGS / "piecewise.cfg"), out=str(self.out))
        knots = json.loads((self.out / "knots.json").read_text(encoding="utf-8"))
        for got, expected in zip(knots, [-2.0, -1.0, 0.0, 0.25, 0.5, 1.0625]):
            self.assertAlmostEqual(got, expected, delta=1e-12)
        self.assertLessEqual(self.report()["residual"]["sup_residual_full"], 1e-9)

    def test_outputs_are_byte_identical(self):
        for sub in ("first", "second"):
            self.run_command("construct-piecewise", config=str(CONFIGS / "piecewise.cfg"), out=str(self.out / sub))
        for name in ("solution.csv", "knots.json", "residuals.csv", "report.json"):
            first = (self.out / "first" / name).read_bytes()
            self.assertEqual(first, (self.out / "second" / name).read_bytes(), name)

    def test_region_table(self):
        self.run_command(config=str(CONFIGS / "region.cfg"), out=str(self.out))
        table = pd.read_csv(self.out / "region.csv")
        self.assertEqual(len(table), 160)
        self.assertEqual(sorted(table["K"].unique()), [1.5, 2.0, 3.0, 4.0])

    def test_identity_h_is_a_hypothesis_failure(self):
        code, payload = self.failing("check", h="x", f="2*x", g="sin(x)", out=str(self.out))
        self.assertEqual(code, 2)
        self.assertEqual(payload["error"], "hypothesis-violation")
        self.assertEqual(payload["hypothesis"], "expansive-h")
        self.assertEqual(payload["exit_code"], 2)

    def test_missing_function_is_a_usage_error(self):
        code, payload = self.failing("solve-bounded", h="2*x", f="2*x", out=str(self.out))
        self.assertEqual(code, 1)
        self.assertEqual(payload["message"], "g required")
        self.assertEqual(payload["field"], "g")

    def test_bad_expression_reports_position(self):
        code, payload = self.failing("check", h="2*x", f="2*x", g="sin x", out=str(self.out))
        self.assertEqual(code, 1)
        self.assertEqual(payload["error"], "syntax-error")
        self.assertEqual(payload["position"], 0)

    def test_unknown_mode(self):
        with self.assertRaises(CommandError) as ctx:
            call_command("iterfun", "bogus", stdout=StringIO(), stderr=StringIO())
        self.assertEqual(ctx.exception.returncode, 1)

    def test_construction_hypothesis_failure(self):
        code, payload = self.failing("construct", config=str(CONFIGS / "piecewise.cfg"), x1=0.75, out=str(self.out))
        self.assertEqual(code, 2)
        self.assertEqual(payload["error"], "x1-range")

    def test_invalid_budget(self):
        code, payload = self.failing(config=str(CONFIGS / "example1.cfg"), L=1.5, grid_n=801, out=str(self.out))
        self.assertEqual(code, 2)
        self.assertEqual(payload["error"], "precondition")

    def test_iteration_cap_is_a_numerical_failure(self):
        code, payload = self.failing(config=str(CONFIGS / "example1.cfg"), grid_n=401, tol=1e-14, max_iter=3,
                                     out=str(self.out))
        self.assertEqual(code, 3)
        self.assertEqual(payload["error"], "non-convergence")
        self.assertEqual(payload["exit_code"], 3)
        self.assertEqual(len(payload["distances"]), 3)

    @override_settings(ITERFUN={**settings.ITERFUN, "MAX_NODES": 20_000})
    def test_node_budget_is_a_numerical_failure(self):
        code, payload = self.failing("construct", config=str(CONFIGS / "piecewise.cfg"), x_target_neg=-20.0,
                                     out=str(self.out))
        self.assertEqual(code, 3)
        self.assertEqual(payload["error"], "construction-error")
        self.assertEqual(payload["budget"], 20_000)


class SmokeTestCommandTests(SimpleTestCase):
    def test_reports_each_config(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        configs = Path(tmp.name)
        (configs / "region.cfg").write_text((CONFIGS / "region.cfg").read_text(encoding="utf-8"), encoding="utf-8")
        stdout = StringIO()
        call_command("smoke_test", configs=str(configs), stdout=stdout)
        self.assertIn("region.cfg -> exit 0", stdout.getvalue())
