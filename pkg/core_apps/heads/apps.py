from django.apps import AppConfig


class HeadsConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "core_apps.heads"
