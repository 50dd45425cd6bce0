from pathlib import Path

import environ

env = environ.Env()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
ROOT_DIR = Path(__file__).resolve().parent.parent.parent

APP_DIR = ROOT_DIR / "core_apps"

DEBUG = env.bool("DJANGO_DEBUG", False)

# Application definition

DJANGO_APPS = [
    "django.contrib.contenttypes",
    "django.contrib.auth",
]

THIRD_PARTY_APPS = [
    "rest_framework",
]

LOCAL_APPS = [
    "core_apps.common",
    "core_apps.numerics",
    "core_apps.geom",
    "core_apps.encoder",
    "core_apps.queries",
    "core_apps.decoders",
    "core_apps.bica",
    "core_apps.heads",
    "core_apps.training",
    "core_apps.evalmetrics",
    "core_apps.datasynth",
    "core_apps.pipeline",
]

INSTALLED_APPS = LOCAL_APPS + DJANGO_APPS + THIRD_PARTY_APPS

# The pipeline keeps everything in files; no database is configured.
DATABASES = {}

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

REST_FRAMEWORK = {
    "UNAUTHENTICATED_USER": None,
    "COERCE_DECIMAL_TO_STRING": False,
}

# Pipeline settings

BICA_DEFAULT_PRESET = env("BICA_PRESET", default="tiny")

# Overrides the configured seed when set (config file < BICA_SEED < flags).
BICA_SEED = env.int("BICA_SEED", default=None)

BICA_THREADS = env.int("BICA_THREADS", default=1)

BICA_DATA_DIR = Path(env("BICA_DATA_DIR", default=str(ROOT_DIR / "var")))

BICA_RUN_SLOW = env.bool("BICA_RUN_SLOW", default=False)

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "%(levelname)s %(name)-12s %(asctime)s "
            "%(process)d %(thread)d %(message)s"
        }
    },
    "handlers": {
        "console": {
            "level": "DEBUG",
            "class": "logging.StreamHandler",
            "formatter": "verbose",
        }
    },
    "root": {"level": env("BICA_LOG_LEVEL", default="INFO"), "handlers": ["console"]},
}
