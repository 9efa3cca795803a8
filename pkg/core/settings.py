"""
Django settings for the iterfun project.

The project hosts one app, ``solver``, used through management commands
(``python manage.py iterfun ...``) and the test runner; there are no views,
models or database tables.

Everything that varies between machines is read from the environment (or a
.env file) with python-decouple.
"""

from pathlib import Path

from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = config("SECRET_KEY", default="django-insecure-iterfun-local-only")

DEBUG = config("DEBUG", default=False, cast=bool)

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "solver.apps.SolverConfig",
]

# SimpleTestCase only; nothing is persisted
DATABASES = {}

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True


# =====================
# Solver configuration
# =====================
# Process-wide knobs; per-run values come from the run config and flags.
# Only ITERFUN_LOG_LEVEL (what is logged) and ITERFUN_N_JOBS (speed) are read
# from the environment. The numeric defaults are fixed so that a config file
# alone determines the artifacts.

ITERFUN = {
    "LOG_LEVEL": config("ITERFUN_LOG_LEVEL", default="WARNING"),
    "N_JOBS": config("ITERFUN_N_JOBS", default=1, cast=int),
    "WINDOW": 20.0,
    "GRID_N": 4001,
    "TOL": 1e-8,
    "MAX_ITER": 200,
    "INVERSE_TOL": 1e-12,
    "TAU_END": 1e-9,
    "PROBES": 4097,
    "SAMPLE_N": 10000,
    "MAX_NODES": 2_000_000,
}


LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "{levelname} {name}: {message}", "style": "{"},
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "stream": "ext://sys.stderr",
            "formatter": "plain",
        },
    },
    "loggers": {
        "solver": {
            "handlers": ["console"],
            "level": ITERFUN["LOG_LEVEL"],
            "propagate": False,
        },
    },
}
