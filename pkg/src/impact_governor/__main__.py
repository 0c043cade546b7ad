"""Allow ``python -m impact_governor`` to behave like the console script."""

from .cli import entrypoint

entrypoint()
