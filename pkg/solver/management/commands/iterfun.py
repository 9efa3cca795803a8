# solver/management/commands/iterfun.py
import sys

from django.core.management.base import BaseCommand, CommandError

from solver.exceptions import EXIT_USAGE, IterfunError
from solver.runconfig import MODE_ALIASES, MODES, load_config
from solver.runner import run
from solver.serializers import error_line


class Command(BaseCommand):
    help = 'Solves phi(phi(x)) = h(phi(f(x))) + g(x) and writes the solution, trace and report under --out.'
    requires_system_checks = []

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)

        def error(message):
            self._emit({"error": "usage", "message": message, "exit_code": EXIT_USAGE}, EXIT_USAGE)

        parser.error = error
        return parser

    def add_arguments(self, parser):
        parser.add_argument('command', nargs='?', choices=MODES + tuple(MODE_ALIASES),
                            help='Pipeline to run; defaults to the mode in --config.')
        parser.add_argument('--config', help='Run config file (INI sections of key = value lines).')
        parser.add_argument('--h', help='Expression for h.')
        parser.add_argument('--f', help='Expression for f.')
        parser.add_argument('--g', help='Expression for g.')
        parser.add_argument('--window', type=float, help='Half-width W of the solve window [-W, W].')
        parser.add_argument('--grid-n', dest='grid_n', type=int, help='Number of grid nodes (odd).')
        parser.add_argument('--tol', type=float, help='Target sup distance to the fixed point.')
        parser.add_argument('--max-iter', dest='max_iter', type=int, help='Iteration cap.')
        parser.add_argument('--L', dest='L', type=float, help='Lipschitz budget inside the admissible window.')
        parser.add_argument('--interval', nargs=2, type=float, metavar=('A', 'B'), help='Compact interval I.')
        parser.add_argument('--x1', type=float, help='Fixed point of g where the construction starts.')
        parser.add_argument('--x2', type=float, help='Seed value phi(x1).')
        parser.add_argument('--x-target', dest='x_target', type=float, help='Build forward until a knot passes it.')
        parser.add_argument('--x-target-neg', dest='x_target_neg', type=float,
                            help='Build backward until the first knot reaches it.')
        parser.add_argument('--probes', type=int, help='Number of uniform residual probes.')
        parser.add_argument('--solution', help='Grid solution CSV to verify.')
        parser.add_argument('--refine', action='store_const', const=True,
                            help='Re-solve on a refined grid and report the refinement constant.')
        parser.add_argument('--out', help='Output directory for the artifacts.')

    def _emit(self, payload, code):
        self.stderr.write(error_line(payload), style_func=lambda text: text)
        if self._called_from_command_line:
            sys.exit(code)
        raise CommandError(payload["message"], returncode=code)

    def handle(self, *args, **options):
        overrides = {key: options.get(key) for key in (
            'h', 'f', 'g', 'window', 'grid_n', 'tol', 'max_iter', 'L', 'interval', 'x1', 'x2', 'x_target',
            'x_target_neg', 'probes', 'solution', 'refine', 'out')}
        overrides['mode'] = options.get('command')

        try:
            config = load_config(options.get('config'), overrides)
            self.stdout.write(self.style.NOTICE(f"Running {config.mode} into {config.out}..."))
            result = run(config)
        except IterfunError as exc:
            self._emit(exc.to_dict(), exc.exit_code)

        for line in result.headline:
            self.stdout.write(self.style.SUCCESS(line))
        for name, path in sorted(result.artifacts.items()):
            self.stdout.write(f"  {name:<10} {path}")
