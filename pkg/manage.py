#!/usr/bin/env python
"""
Entry point for the captioning pipeline: gen_data, train, eval, caption,
gradcheck and ablate, plus Django's own administrative commands.
"""
import os
import sys


def main():
    """Run a pipeline or administrative command, local settings by default."""
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "app.settings.local")
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Django is required to run the captioning pipeline. Install "
            "requirements/local.txt into the active environment."
        ) from exc
    execute_from_command_line(sys.argv)


if __name__ == "__main__":
    main()
