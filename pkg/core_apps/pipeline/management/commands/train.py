from core_apps.pipeline.business import TrainingHelper, log_run_context
from core_apps.pipeline.management.base import PipelineCommand


class Command(PipelineCommand):
    help = "Train the captioner: detector pre-training, joint training, self-critical fine-tuning."

    uses_config = True

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--data", default=None, help="Dataset file (default: BICA_DATA_DIR/toy.bica).")
        parser.add_argument("--stage", default="all", choices=["all", "1", "2", "3"])
        parser.add_argument("--out-dir", default=None, help="Run directory (default: BICA_DATA_DIR/run).")
        parser.add_argument("--seed", type=int, default=None)
        parser.add_argument("--resume", action="store_true", help="Continue from last.ckpt in --out-dir.")
        parser.add_argument("--init", default=None, help="Checkpoint to start the first stage from.")
        parser.add_argument("--force", action="store_true", help="Accept checkpoints of another config.")

    def execute_command(self, **options):
        config = self.resolve_config(options, seed=options["seed"])
        log_run_context("train", config)
        paths = TrainingHelper.train(
            config,
            options["data"] or self.default_path("toy.bica"),
            options["out_dir"] or self.default_path("run"),
            stage=options["stage"],
            resume=options["resume"],
            init=options["init"],
            force=options["force"],
            threads=self.threads(options),
        )
        for path in paths:
            self.stdout.write(f"checkpoint {path}")
