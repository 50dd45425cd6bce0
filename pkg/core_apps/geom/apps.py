from django.apps import AppConfig


class GeomConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "core_apps.geom"
