from django.apps import AppConfig


class EvalmetricsConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "core_apps.evalmetrics"
