from rest_framework.renderers import JSONRenderer

from core_apps.bica.attention import VARIANTS
from core_apps.pipeline.business import AblationHelper, log_run_context
from core_apps.pipeline.management.base import PipelineCommand


class Command(PipelineCommand):
    help = f"Train and evaluate caption-context variants ({', '.join(VARIANTS)}) into one table."

    uses_config = True

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--data", default=None, help="Dataset file (default: BICA_DATA_DIR/toy.bica).")
        parser.add_argument("--variant", dest="variants", action="append", default=None)
        parser.add_argument("--seeds", type=int, default=1, help="Seeds averaged per variant.")
        parser.add_argument("--out-dir", default=None, help="Run directory (default: BICA_DATA_DIR/ablate).")
        parser.add_argument("--out", default=None, help="Also write the table as JSON.")

    def execute_command(self, **options):
        variants = AblationHelper.parse_variants(options["variants"])
        config = self.resolve_config(options)
        log_run_context("ablate", config)
        table = AblationHelper.run(
            config,
            options["data"] or self.default_path("toy.bica"),
            options["out_dir"] or self.default_path("ablate"),
            variants,
            max(1, options["seeds"]),
            self.threads(options),
        )
        self.stdout.write(AblationHelper.format_table(table))
        if options["out"]:
            with open(options["out"], "wb") as fh:
                fh.write(JSONRenderer().render(table) + b"\n")
