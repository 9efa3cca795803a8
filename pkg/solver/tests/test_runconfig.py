import importlib
import os
import tempfile
from pathlib import Path
from unittest import mock

from django.conf import settings
from django.test import SimpleTestCase

from solver.exceptions import ParseError, UsageError
from solver.runconfig import load_config

CONFIGS = Path(settings.BASE_DIR) / "configs"


class LoadConfigTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def write(self, text):
        path = Path(self.tmp.name) / "run.cfg"
        path.write_text(text, encoding="utf-8")
        return path

    def test_first_example(self):
        config = load_config(CONFIGS / "example1.cfg")
        self.assertEqual(config.mode, "solve-bounded")
        self.assertEqual((config.h, config.f, config.g), ("2*x", "2*x", "sin(x)"))
        self.assertEqual(config.constants, {"beta": 2.0})
        self.assertEqual(config.L, 0.75)
        self.assertEqual(config.grid_n, 4001)
        self.assertEqual(config.functions["h"].affine, (2.0, 0.0))

    def test_piecewise_config_with_alias(self):
        config = load_config(CONFIGS / "piecewise.cfg", {"mode": "construct-piecewise"})
        self.assertEqual(config.mode, "construct")
        self.assertEqual((config.x1, config.x2, config.x_target), (0.0, 0.25, 50.0))

    def test_compact_interval(self):
        self.assertEqual(load_config(CONFIGS / "compact.cfg").interval, (-1.0, 1.0))

    def test_every_bundled_config_loads(self):
        for path in sorted(CONFIGS.glob("*.cfg")):
            with self.subTest(config=path.name):
                load_config(path)

    def test_flags_win(self):
        config = load_config(CONFIGS / "example1.cfg", {"window": 10.0, "L": 0.8, "interval": [0.0, 2.0]})
        self.assertEqual(config.window, 10.0)
        self.assertEqual(config.L, 0.8)
        self.assertEqual(config.interval, (0.0, 2.0))

    def test_missing_g(self):
        path = self.write("[run]\nmode = solve-bounded\n[functions]\nh = 2*x\nf = 2*x\n")
        with self.assertRaises(UsageError) as ctx:
            load_config(path)
        self.assertEqual(ctx.exception.message, "g required")
        self.assertEqual(ctx.exception.details["field"], "g")

    def test_missing_mode(self):
        with self.assertRaises(UsageError) as ctx:
            load_config(overrides={"h": "2*x"})
        self.assertEqual(ctx.exception.message, "mode required")

    def test_expression_error_names_the_field(self):
        with self.assertRaises(ParseError) as ctx:
            load_config(overrides={"mode": "check", "h": "2*x", "f": "sin x", "g": "x"})
        self.assertTrue(ctx.exception.message.startswith("f: "))
        self.assertEqual(ctx.exception.position, 0)
        self.assertEqual(ctx.exception.details["field"], "f")

    def test_unknown_key(self):
        path = self.write("[run]\nmode = region\ncolour = blue\n")
        with self.assertRaises(UsageError) as ctx:
            load_config(path)
        self.assertEqual(ctx.exception.details["field"], "colour")

    def test_duplicate_key_across_sections(self):
        path = self.write("[run]\nmode = region\n[other]\nmode = check\n")
        with self.assertRaises(UsageError):
            load_config(path)

    def test_missing_file(self):
        with self.assertRaises(UsageError):
            load_config(Path(self.tmp.name) / "absent.cfg")

    def test_even_grid_is_rejected(self):
        with self.assertRaises(UsageError) as ctx:
            load_config(CONFIGS / "example1.cfg", {"grid_n": 4000})
        self.assertEqual(ctx.exception.details["field"], "grid_n")

    def test_seeds_come_in_pairs(self):
        with self.assertRaises(UsageError):
            load_config(CONFIGS / "piecewise.cfg", {"seed_phi0": "x^3"})

    def test_region_needs_expansive_K(self):
        with self.assertRaises(UsageError):
            load_config(CONFIGS / "region.cfg", {"k_values": "1, 2"})

    def test_problem_marks_constants_certified(self):
        spec = load_config(CONFIGS / "example1.cfg").problem()
        self.assertEqual(spec.source_of("beta"), "certified")
        self.assertEqual(spec.window, 20.0)


class EnvironmentTests(SimpleTestCase):
    def test_only_log_level_and_jobs_come_from_the_environment(self):
        import core.settings

        env = {"ITERFUN_GRID_N": "2001", "ITERFUN_TOL": "1e-3", "ITERFUN_WINDOW": "5", "ITERFUN_PROBES": "11",
               "ITERFUN_LOG_LEVEL": "DEBUG", "ITERFUN_N_JOBS": "4"}
        with mock.patch.dict(os.environ, env):
            knobs = importlib.reload(core.settings).ITERFUN
        importlib.reload(core.settings)
        self.assertEqual(knobs["GRID_N"], 4001)
        self.assertEqual(knobs["TOL"], 1e-8)
        self.assertEqual(knobs["WINDOW"], 20.0)
        self.assertEqual(knobs["PROBES"], 4097)
        self.assertEqual(knobs["LOG_LEVEL"], "DEBUG")
        self.assertEqual(knobs["N_JOBS"], 4)

    def test_defaults_without_the_file(self):
        config = load_config(None, {"mode": "check", "h": "2*x", "f": "2*x", "g": "sin(x)"})
        self.assertEqual((config.window, config.grid_n, config.tol, config.max_iter), (20.0, 4001, 1e-8, 200))
