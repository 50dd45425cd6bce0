from rest_framework import serializers

from core_apps.bica.attention import VARIANTS
from core_apps.pipeline.config import ModelConfig


class CommaListField(serializers.ListField):
    """List field that also accepts ``"a,b,c"`` strings from config files and flags."""

    def to_internal_value(self, data):
        if isinstance(data, str):
            data = [item.strip() for item in data.split(",") if item.strip()]
        return super().to_internal_value(data)


class ModelConfigSerializer(serializers.Serializer):
    """
    Validate raw config values and build a ``ModelConfig``.

    Cross-field checks cover head divisibility and the point/token/query
    count chain ``n_points >= n_tokens >= n_enc >= context_seeds >= n_context``.
    """

    seed = serializers.IntegerField(min_value=0)
    n_points = serializers.IntegerField(min_value=1)
    n_feats = serializers.IntegerField(min_value=0)
    d_model = serializers.IntegerField(min_value=2)
    n_heads = serializers.IntegerField(min_value=1)
    ffn_ratio = serializers.IntegerField(min_value=1)
    activation = serializers.ChoiceField(choices=["relu", "gelu"])
    n_tokens = serializers.IntegerField(min_value=1)
    tokenizer_radius = serializers.FloatField(min_value=0)
    tokenizer_nsample = serializers.IntegerField(min_value=1)
    tokenizer_mlp = CommaListField(child=serializers.IntegerField(min_value=1), allow_empty=True)
    mask_radius = serializers.FloatField(min_value=0)
    n_enc = serializers.IntegerField(min_value=1)
    downsample_radius = serializers.FloatField(min_value=0)
    downsample_nsample = serializers.IntegerField(min_value=1)
    enc_layers = serializers.IntegerField(min_value=0)
    n_instance = serializers.IntegerField(min_value=1)
    instance_radius = serializers.FloatField(min_value=0)
    instance_nsample = serializers.IntegerField(min_value=1)
    n_context = serializers.IntegerField(min_value=1)
    context_seeds = serializers.IntegerField(min_value=1)
    context_radius = serializers.FloatField(min_value=0)
    context_nsample = serializers.IntegerField(min_value=1)
    dec_layers = serializers.IntegerField(min_value=1)
    fourier_sigma = serializers.FloatField(min_value=0)
    variant = serializers.ChoiceField(choices=list(VARIANTS))
    knn_k = serializers.IntegerField(min_value=1)
    prefix_tokens = serializers.ChoiceField(choices=[1, 3])
    n_class = serializers.IntegerField(min_value=1)
    size_scale = serializers.FloatField(min_value=0)
    iou_head = serializers.BooleanField()
    d_cap = serializers.IntegerField(min_value=2)
    cap_layers = serializers.IntegerField(min_value=1)
    cap_heads = serializers.IntegerField(min_value=1)
    max_caption_len = serializers.IntegerField(min_value=1)
    beam = serializers.IntegerField(min_value=1)
    alpha = CommaListField(child=serializers.FloatField(min_value=0), min_length=4, max_length=4)
    beta = CommaListField(child=serializers.FloatField(min_value=0), min_length=3, max_length=3)
    no_object_weight = serializers.FloatField(min_value=0)
    lr = serializers.FloatField(min_value=0)
    min_lr = serializers.FloatField(min_value=0)
    weight_decay = serializers.FloatField(min_value=0)
    clip_norm = serializers.FloatField(min_value=0)
    stage2_detector_lr = serializers.FloatField(min_value=0)
    stage2_caption_lr = serializers.FloatField(min_value=0)
    stage3_lr = serializers.FloatField(min_value=0)
    epochs = CommaListField(child=serializers.IntegerField(min_value=0), min_length=3, max_length=3)
    batch = CommaListField(child=serializers.IntegerField(min_value=1), min_length=3, max_length=3)
    nms_iou = serializers.FloatField(min_value=0, max_value=1)
    objectness_threshold = serializers.FloatField(min_value=0, max_value=1)
    cider_reduce = serializers.ChoiceField(choices=["max", "mean"])
    checkpoint_every = serializers.IntegerField(min_value=1)
    log_every = serializers.IntegerField(min_value=1)

    def validate(self, attrs):
        errors = {}
        for width, heads in (("d_model", "n_heads"), ("d_cap", "cap_heads")):
            if attrs[width] % attrs[heads]:
                errors[width] = f"{width} must be divisible by {heads}."
        if attrs["d_model"] % 2:
            errors["d_model"] = "d_model must be even for the Fourier encoding."
        for radius in ("tokenizer_radius", "mask_radius", "downsample_radius",
                       "instance_radius", "context_radius"):
            if attrs[radius] <= 0:
                errors[radius] = "Radii must be positive."
        chain = ["n_points", "n_tokens", "n_enc", "context_seeds", "n_context"]
        for larger, smaller in zip(chain, chain[1:]):
            if attrs[smaller] > attrs[larger]:
                errors[smaller] = f"{smaller} must not exceed {larger}."
        if attrs["n_instance"] > attrs["n_enc"]:
            errors["n_instance"] = "n_instance must not exceed n_enc."
        if attrs["variant"] == "vo+knn" and attrs["knn_k"] > attrs["n_context"]:
            errors["knn_k"] = "knn_k must not exceed n_context."
        if attrs["min_lr"] > attrs["lr"]:
            errors["min_lr"] = "min_lr must not exceed lr."
        if errors:
            raise serializers.ValidationError(errors)
        return attrs

    def create(self, validated_data):
        data = {
            key: tuple(value) if isinstance(value, list) else value
            for key, value in validated_data.items()
        }
        return ModelConfig(**data)


class GenDataOptionsSerializer(serializers.Serializer):
    """Options of the ``gen_data`` command; a scene holds at most 8 objects."""

    seed = serializers.IntegerField(min_value=0)
    scenes = serializers.IntegerField(min_value=1)
    objects_min = serializers.IntegerField(min_value=2, max_value=8)
    objects_max = serializers.IntegerField(min_value=2, max_value=8)
    n_points = serializers.IntegerField(min_value=64)

    def validate(self, attrs):
        if attrs["objects_min"] > attrs["objects_max"]:
            raise serializers.ValidationError(
                {"objects_min": "objects_min must not exceed objects_max."}
            )
        return attrs


class EvalOptionsSerializer(serializers.Serializer):
    nms_iou = serializers.FloatField(min_value=0, max_value=1)
    beam = serializers.IntegerField(min_value=1)
