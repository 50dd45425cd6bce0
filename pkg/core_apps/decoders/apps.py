from django.apps import AppConfig


class DecodersConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "core_apps.decoders"
