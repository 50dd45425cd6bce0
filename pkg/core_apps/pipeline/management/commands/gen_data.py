from core_apps.pipeline.business import DatasetHelper, log_run_context
from core_apps.pipeline.management.base import PipelineCommand
from core_apps.pipeline.serializers import GenDataOptionsSerializer


class Command(PipelineCommand):
    help = "Generate a synthetic scene dataset and its vocabulary file."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--scenes", type=int, default=32)
        parser.add_argument("--objects-min", type=int, default=2)
        parser.add_argument("--objects-max", type=int, default=8)
        parser.add_argument("--n-points", type=int, default=2048)
        parser.add_argument("--out", default=None, help="Dataset file (default: BICA_DATA_DIR/toy.bica).")
        parser.add_argument("--overwrite", action="store_true")

    def execute_command(self, **options):
        serializer = GenDataOptionsSerializer(
            data={
                "seed": options["seed"],
                "scenes": options["scenes"],
                "objects_min": options["objects_min"],
                "objects_max": options["objects_max"],
                "n_points": options["n_points"],
            }
        )
        serializer.is_valid(raise_exception=True)
        log_run_context("gen_data")
        out = options["out"] or self.default_path("toy.bica")
        scenes = DatasetHelper.generate(
            out,
            overwrite=options["overwrite"],
            threads=self.threads(options),
            **serializer.validated_data,
        )
        self.stdout.write(f"wrote {len(scenes)} scenes to {out}")
