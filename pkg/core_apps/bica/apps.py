from django.apps import AppConfig


class BicaConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "core_apps.bica"
