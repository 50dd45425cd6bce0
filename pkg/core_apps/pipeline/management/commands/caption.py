from core_apps.common.exceptions import ValidationFailure
from core_apps.pipeline.business import (
    DatasetHelper,
    ModelHelper,
    describe_proposal,
    log_run_context,
)
from core_apps.pipeline.management.base import PipelineCommand
from core_apps.pipeline.serializers import EvalOptionsSerializer


class Command(PipelineCommand):
    help = "Print a caption for every detected object of one scene."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--checkpoint", required=True)
        parser.add_argument("--scene-file", required=True, help="Dataset file holding the scene.")
        parser.add_argument("--index", type=int, default=0, help="Scene index within the file.")
        parser.add_argument("--beam", type=int, default=5)
        parser.add_argument("--nms-iou", type=float, default=0.5)
        parser.add_argument("--threshold", type=float, default=None, help="Objectness cut (default from config).")

    def execute_command(self, **options):
        serializer = EvalOptionsSerializer(data={"nms_iou": options["nms_iou"], "beam": options["beam"]})
        serializer.is_valid(raise_exception=True)
        model, checkpoint = ModelHelper.from_checkpoint(options["checkpoint"])
        log_run_context("caption", checkpoint.config)
        scenes, _ = DatasetHelper.load(options["scene_file"])
        if not 0 <= options["index"] < len(scenes):
            raise ValidationFailure(f"--index must be in [0, {len(scenes) - 1}].")
        threshold = options["threshold"]
        if threshold is None:
            threshold = checkpoint.config.objectness_threshold
        proposals = ModelHelper.predict(
            model,
            scenes[options["index"]],
            checkpoint.vocab,
            serializer.validated_data["nms_iou"],
            serializer.validated_data["beam"],
            objectness_threshold=threshold,
        )
        for proposal in proposals:
            self.stdout.write(describe_proposal(proposal))
        if not proposals:
            self.stdout.write(f"no object above objectness {threshold}")
