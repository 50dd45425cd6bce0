from core_apps.common.exceptions import ConfigMismatchError
from core_apps.pipeline.business import DatasetHelper, EvaluationHelper, ModelHelper, log_run_context
from core_apps.pipeline.management.base import PipelineCommand
from core_apps.pipeline.serializers import EvalOptionsSerializer


class Command(PipelineCommand):
    help = "Evaluate a checkpoint: C / B-4 / R at m@0.25 and m@0.5, AR@0.5 and mAP@0.5."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--checkpoint", required=True)
        parser.add_argument("--data", required=True)
        parser.add_argument("--nms-iou", type=float, default=0.5)
        parser.add_argument("--beam", type=int, default=None, help="Defaults to the checkpoint config.")
        parser.add_argument("--out", default=None, help="Report file; printed when omitted.")

    def execute_command(self, **options):
        model, checkpoint = ModelHelper.from_checkpoint(options["checkpoint"])
        beam = checkpoint.config.beam if options["beam"] is None else options["beam"]
        serializer = EvalOptionsSerializer(data={"nms_iou": options["nms_iou"], "beam": beam})
        serializer.is_valid(raise_exception=True)
        log_run_context("eval", checkpoint.config)
        scenes, vocab = DatasetHelper.load(options["data"])
        if vocab != checkpoint.vocab:
            raise ConfigMismatchError("The dataset vocabulary differs from the checkpoint vocabulary.")
        report = EvaluationHelper.evaluate(
            model, scenes, vocab, threads=self.threads(options), **serializer.validated_data
        )
        rendered = EvaluationHelper.render(report)
        if options["out"]:
            with open(options["out"], "wb") as fh:
                fh.write(rendered)
            self.stdout.write(f"report written to {options['out']}")
        else:
            self.stdout.write(rendered.decode("utf-8"), ending="")
