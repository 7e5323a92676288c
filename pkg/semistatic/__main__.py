"""Allow ``python -m semistatic``."""

from .cli import main

main()
