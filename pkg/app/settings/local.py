from .base import *  # noqa
from .base import env

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = env(
    "DJANGO_SECRET_KEY",
    default="bica-local-only-7c1f0e9a55d24a2f8b4c3e1d6a0b9f27",
)

DEBUG = True

SITE_NAME = "BiCA dense captioning"
