from django.apps import AppConfig


class SolverConfig(AppConfig):
    name = "solver"
    verbose_name = "Iterative functional equation solver"
