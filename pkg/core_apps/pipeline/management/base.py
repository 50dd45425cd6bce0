"""
Shared plumbing of the pipeline management commands.
"""
import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from core_apps.common.exceptions import BicaError
from core_apps.common.runtime import resolve_threads
from core_apps.pipeline.config import PRESETS, load_config

logger = logging.getLogger(__name__)

EXIT_VALIDATION = 2
EXIT_IO = 4


def parse_overrides(pairs):
    """``["key=value", ...]`` to a dict; later pairs win."""
    overrides = {}
    for pair in pairs or ():
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise CommandError(f"--set expects key=value, got {pair!r}.", returncode=EXIT_VALIDATION)
        overrides[key.strip()] = value.strip()
    return overrides


class PipelineCommand(BaseCommand):
    """
    Runs ``execute()`` and maps pipeline errors to exit codes: 2 for
    validation, 3 for numeric divergence, 4 for I/O and file formats.
    """

    uses_config = False

    def add_arguments(self, parser):
        parser.add_argument("--threads", type=int, default=None, help="Scenes processed in parallel.")
        if self.uses_config:
            parser.add_argument("--preset", choices=sorted(PRESETS), default=None)
            parser.add_argument("--config", default=None, help="Flat key = value config file.")
            parser.add_argument(
                "--set",
                dest="overrides",
                action="append",
                default=[],
                metavar="KEY=VALUE",
                help="Override one config value; may be repeated.",
            )

    def resolve_config(self, options, **extra):
        overrides = parse_overrides(options.get("overrides"))
        overrides.update({k: v for k, v in extra.items() if v is not None})
        return load_config(options.get("preset"), options.get("config"), overrides)

    def threads(self, options):
        return resolve_threads(options.get("threads"))

    def handle(self, *args, **options):
        try:
            return self.execute_command(**options)
        except BicaError as exc:
            logger.error("%s", exc)
            raise CommandError(str(exc), returncode=exc.exit_code) from exc
        except serializers.ValidationError as exc:
            raise CommandError(f"Invalid options: {exc.detail}", returncode=EXIT_VALIDATION) from exc
        except OSError as exc:
            raise CommandError(str(exc), returncode=EXIT_IO) from exc

    def execute_command(self, **options):
        raise NotImplementedError

    def default_path(self, *parts):
        """A path under ``BICA_DATA_DIR``; its parent directory is created."""
        path = Path(settings.BICA_DATA_DIR, *parts)
        path.parent.mkdir(parents=True, exist_ok=True)
        return str(path)
