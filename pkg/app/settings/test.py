from .base import *  # noqa
from .base import env

SECRET_KEY = env(
    "DJANGO_SECRET_KEY",
    default="bica-test-only-2b8d41c6f0a94e53a7d1c9e0f3b6a5d8",
)

LOGGING["root"]["level"] = "WARNING"  # noqa: F405
