import pytest
from django.conf import settings
from pytest_factoryboy import register

from core_apps.datasynth.tests.factories import Box3DFactory, SceneSampleFactory

register(Box3DFactory, "box")
register(SceneSampleFactory, "scene")


def pytest_collection_modifyitems(config, items):
    if settings.BICA_RUN_SLOW:
        return
    skip_slow = pytest.mark.skip(reason="set BICA_RUN_SLOW=1 to run end-to-end training tests")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
