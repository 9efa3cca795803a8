"""Access to the ``ITERFUN`` block of the Django settings, with fallbacks."""

from django.conf import settings

DEFAULTS = {
    "LOG_LEVEL": "WARNING",
    "N_JOBS": 1,
    "WINDOW": 20.0,
    "GRID_N": 4001,
    "TOL": 1e-8,
    "MAX_ITER": 200,
    "INVERSE_TOL": 1e-12,
    "TAU_END": 1e-9,
    "PROBES": 4097,
    "SAMPLE_N": 10_000,
    "MAX_NODES": 2_000_000,
}


def setting(name: str):
    return getattr(settings, "ITERFUN", {}).get(name, DEFAULTS[name])
