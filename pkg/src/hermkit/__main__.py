"""Entry point for ``python -m hermkit``."""

from hermkit.cli import main

if __name__ == "__main__":
    raise SystemExit(main())
