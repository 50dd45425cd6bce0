from django.core.management.base import CommandError

from core_apps.pipeline.business import GradCheckHelper, log_run_context
from core_apps.pipeline.management.base import PipelineCommand


class Command(PipelineCommand):
    help = "Finite-difference check of the full loss gradient in float64."

    uses_config = True

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--samples", type=int, default=50)
        parser.add_argument("--step", type=float, default=1e-3)
        parser.add_argument("--tolerance", type=float, default=1e-3)
        parser.add_argument(
            "--activation",
            default="gelu",
            help="Activation used for the check; a smooth one keeps differences away from kinks.",
        )

    def execute_command(self, **options):
        config = self.resolve_config(options, activation=options["activation"])
        log_run_context("gradcheck", config)
        report = GradCheckHelper.run(config, options["samples"], options["step"], options["tolerance"])
        verdict = "PASS" if report.passed else "FAIL"
        self.stdout.write(
            f"max_rel_error={report.max_rel_error:.3e} tolerance={report.tolerance:.0e} "
            f"samples={len(report.samples)} {verdict}"
        )
        if not report.passed:
            raise CommandError("Gradient check failed.", returncode=1)
