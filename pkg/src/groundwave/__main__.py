"""Main entry point for groundwave."""

import logging
import sys

from .cli import main as cli_main
from .config import settings


def main():
    """Configure logging and dispatch to the command line."""
    logging.basicConfig(
        level=settings.log,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
