from django.apps import AppConfig


class DatasynthConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "core_apps.datasynth"
